//! Reference values for g² and window populations: closed forms plus an
//! adaptive quadrature of the detected-g² double integral.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::G2Model;

/// g²(τ) of the three-level model, optionally diluted by background.
pub fn g2_model(tau_ns: f64, m: &G2Model, with_background: bool) -> f64 {
    let t = tau_ns.abs();
    let r2 = if with_background { m.rho * m.rho } else { 1.0 };
    1.0 - r2 * m.beta * (-m.gamma1 * t).exp() + r2 * (m.beta - 1.0) * (-m.gamma2 * t).exp()
}

// Gauss-Kronrod 7/15 abscissae and weights on [-1, 1].
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

const MAX_DEPTH: u32 = 40;

fn gk15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for i in 0..7 {
        let dx = h * XGK[i];
        let s = f(c - dx) + f(c + dx);
        kronrod += WGK[i] * s;
        if i % 2 == 1 {
            gauss += WG[i / 2] * s;
        }
    }
    (kronrod * h, ((kronrod - gauss) * h).abs())
}

fn adapt<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64, tol: f64, depth: u32) -> Result<f64> {
    let (val, err) = gk15(f, a, b);
    if err <= tol || (b - a).abs() <= f64::EPSILON * a.abs().max(b.abs()) {
        return Ok(val);
    }
    if depth >= MAX_DEPTH {
        return Err(Error::Quadrature(err));
    }
    let m = 0.5 * (a + b);
    Ok(adapt(f, a, m, 0.5 * tol, depth + 1)? + adapt(f, m, b, 0.5 * tol, depth + 1)?)
}

/// Adaptive Gauss-Kronrod integral of `f` over `[a, b]` to absolute `tol`.
pub fn integrate<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, tol: f64) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    adapt(&mut f, a, b, tol, 0)
}

/// Absolute tolerance of the detected-g² quadrature.
pub const QUAD_TOL: f64 = 1e-10;

/// Detected g²(0) over a window `t_ns` for an arbitrary g²(τ), by nested
/// quadrature of `(2/T²) ∫₀ᵀ dt' ∫₀^{T−t'} g(u) du`.
pub fn g2_detected_numeric_with<G: Fn(f64) -> f64>(g: G, t_ns: f64) -> Result<f64> {
    if !(t_ns.is_finite() && t_ns > 0.0) {
        return Err(Error::InvalidParameter(format!("window {t_ns} ns must be positive")));
    }
    let scale = 2.0 / (t_ns * t_ns);
    // the outer tolerance is on the scaled value, the inner ones are tighter
    let outer_tol = QUAD_TOL / scale;
    let inner_tol = 0.1 * outer_tol / t_ns;
    let mut failure = None;
    let outer = integrate(
        |tp| match integrate(&g, 0.0, t_ns - tp, inner_tol) {
            Ok(v) => v,
            Err(e) => {
                failure.get_or_insert(e);
                f64::NAN
            }
        },
        0.0,
        t_ns,
        outer_tol,
    )?;
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(scale * outer)
}

/// Detected g²(0) of the background-diluted model by quadrature.
pub fn g2_detected_numeric(m: &G2Model, t_ns: f64) -> Result<f64> {
    g2_detected_numeric_with(|u| g2_model(u, m, true), t_ns)
}

/// `h(x) = 2(x − 1 + e^{−x})/x²`, the window average of `e^{−γ|τ|}`.
fn window_average(x: f64) -> f64 {
    if x < 0.5 {
        // 2 Σ (−x)^k / (k+2)!
        let mut term = 1.0;
        let mut sum = 0.0;
        for k in 0..24 {
            sum += term;
            term *= -x / (k as f64 + 3.0);
        }
        sum
    } else {
        2.0 * (x + (-x).exp_m1()) / (x * x)
    }
}

/// Detected g²(0) for `g²(τ) = 1 − e^{−Γ|τ|}`, that is
/// `(1 − e^{−ΓT} + Γ²T²/2 − ΓT)/(Γ²T²/2)`.
///
/// The numerator cancels to O((ΓT)³), so it is evaluated as `1 − h(ΓT)`
/// with a series for small arguments.
pub fn g2_detected_simple(gamma: f64, t_ns: f64) -> f64 {
    1.0 - window_average(gamma * t_ns)
}

/// The simple-model ratio evaluated literally. Only accurate for ΓT ≳ 0.1.
pub fn g2_detected_simple_literal(gamma: f64, t_ns: f64) -> f64 {
    let x = gamma * t_ns;
    let x2 = x * x / 2.0;
    (1.0 - (-x).exp() + x2 - x) / x2
}

/// Detected g²(0) of the background-diluted three-level model, closed form.
///
/// Equivalent to the long exponential expression but grouped per decay rate,
/// which stays accurate when `γ₂T` is tiny.
pub fn g2_detected_full(m: &G2Model, t_ns: f64) -> f64 {
    let r2 = m.rho * m.rho;
    1.0 - r2 * m.beta * window_average(m.gamma1 * t_ns) + r2 * (m.beta - 1.0) * window_average(m.gamma2 * t_ns)
}

/// The same closed form written out term by term without regrouping.
/// Loses precision once `γ₂T` falls much below one.
pub fn g2_detected_full_expanded(m: &G2Model, t: f64) -> f64 {
    let (b, g1, g2, r2) = (m.beta, m.gamma1, m.gamma2, m.rho * m.rho);
    let pre = (-(g1 + g2) * t).exp() / (t * t * g1 * g1 * g2 * g2);
    let a = 2.0 * r2 * ((g1 * t).exp() * (b - 1.0) * g1 * g1 - (g2 * t).exp() * b * g2 * g2);
    let inner = t * t * g1 * g1 * g2 * g2
        + 2.0 * (b * g2 * g2 - t * b * g1 * g2 * g2 + (b - 1.0) * g1 * g1 * (t * g2 - 1.0)) * r2;
    pre * (a + ((g1 + g2) * t).exp() * inner)
}

/// Window populations predicted from the detected g²(0).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OraclePopulations {
    pub window_ns: f64,
    pub mu: f64,
    pub g2_detected: f64,
    pub p0: f64,
    pub p1: f64,
    /// Total two-photon probability, not split by path.
    pub p2: f64,
    /// Set when μ ≥ 0.1 and the low-occupation expansion is unreliable.
    pub regime_warning: bool,
}

impl OraclePopulations {
    /// `2(N/(N−1)) p₂ p₀ / p₁²` with N = 2.
    pub fn yc(&self) -> f64 {
        4.0 * self.p2 * self.p0 / (self.p1 * self.p1)
    }
}

pub fn populations_from_g2(m: &G2Model, flux_per_s: f64, t_ns: f64) -> Result<OraclePopulations> {
    if !(flux_per_s.is_finite() && flux_per_s >= 0.0) {
        return Err(Error::InvalidParameter(format!("flux {flux_per_s} must be non-negative")));
    }
    if !(t_ns.is_finite() && t_ns > 0.0) {
        return Err(Error::InvalidParameter(format!("window {t_ns} ns must be positive")));
    }
    let mu = flux_per_s * t_ns * 1e-9;
    let gd = g2_detected_full(m, t_ns);
    Ok(populations_from_detected(gd, mu, t_ns))
}

/// The three relations for a given detected g²(0) and mean photon number.
pub fn populations_from_detected(g2_detected: f64, mu: f64, window_ns: f64) -> OraclePopulations {
    let p2 = g2_detected * mu * mu / 2.0;
    let p1 = mu - 2.0 * p2;
    OraclePopulations {
        window_ns,
        mu,
        g2_detected,
        p0: 1.0 - p1 - p2,
        p1,
        p2,
        regime_warning: mu >= 0.1,
    }
}
