//! Weighted nonlinear least squares: a box-constrained Levenberg-Marquardt
//! solver and the g² and fluorescence-decay fits built on it.

use serde::{Deserialize, Serialize};

use crate::correlation::LifetimeHistogram;
use crate::error::{Error, Result};
use crate::model::{G2Histogram, G2Model, PS_PER_NS};

/// Cholesky factor of a symmetric positive-definite matrix.
fn cholesky(a: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let n = a.len();
    let mut l = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[i][k] * l[j][k]).sum();
            if i == j {
                let d = a[i][i] - s;
                if !(d > 0.0) || !d.is_finite() {
                    return Err(Error::Singular);
                }
                l[i][j] = d.sqrt();
            } else {
                l[i][j] = (a[i][j] - s) / l[j][j];
            }
        }
    }
    Ok(l)
}

fn cholesky_solve(l: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let n = l.len();
    let mut y = vec![0.0; n];
    for i in 0..n {
        y[i] = (b[i] - (0..i).map(|k| l[i][k] * y[k]).sum::<f64>()) / l[i][i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        x[i] = (y[i] - (i + 1..n).map(|k| l[k][i] * x[k]).sum::<f64>()) / l[i][i];
    }
    x
}

pub(crate) fn solve_spd(a: &[Vec<f64>], b: &[f64]) -> Result<Vec<f64>> {
    Ok(cholesky_solve(&cholesky(a)?, b))
}

pub(crate) fn invert_spd(a: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let l = cholesky(a)?;
    let n = a.len();
    let mut inv = vec![vec![0.0; n]; n];
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        let col = cholesky_solve(&l, &e);
        for i in 0..n {
            inv[i][j] = col[i];
        }
    }
    Ok(inv)
}

pub const MAX_ITERATIONS: usize = 200;
pub const STEP_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LmFit {
    pub params: Vec<f64>,
    /// Inverse of the weighted normal matrix at the solution.
    pub covariance: Vec<Vec<f64>>,
    pub chi2: f64,
    pub dof: usize,
    pub iterations: usize,
}

impl LmFit {
    pub fn errors(&self) -> Vec<f64> {
        (0..self.params.len()).map(|i| self.covariance[i][i].max(0.0).sqrt()).collect()
    }
}

/// Minimises `Σ ((y − f(x; p))/σ)²` with `p` kept inside `[lower, upper]`.
///
/// `model(x, p, grad)` returns `f(x; p)` and writes `∂f/∂p` into `grad`.
/// Stops when the relative parameter step, scaled by the diagonal of the
/// normal matrix, falls below 1e-8.
pub fn levenberg_marquardt<F>(
    model: F,
    x: &[f64],
    y: &[f64],
    sigma: &[f64],
    p0: &[f64],
    lower: &[f64],
    upper: &[f64],
) -> Result<LmFit>
where
    F: Fn(f64, &[f64], &mut [f64]) -> f64,
{
    let np = p0.len();
    if x.len() != y.len() || x.len() != sigma.len() {
        return Err(Error::InvalidParameter("data arrays differ in length".into()));
    }
    if x.len() <= np {
        return Err(Error::EmptyInput(format!("{} points cannot fix {} parameters", x.len(), np)));
    }
    let clamp = |p: &mut [f64]| {
        for i in 0..np {
            p[i] = p[i].clamp(lower[i], upper[i]);
        }
    };
    let mut grad = vec![0.0; np];
    let chi2_of = |p: &[f64], grad: &mut [f64]| -> f64 {
        x.iter().zip(y).zip(sigma).map(|((&xi, &yi), &si)| ((yi - model(xi, p, grad)) / si).powi(2)).sum()
    };
    let normal = |p: &[f64], grad: &mut [f64]| {
        let mut a = vec![vec![0.0; np]; np];
        let mut g = vec![0.0; np];
        for ((&xi, &yi), &si) in x.iter().zip(y).zip(sigma) {
            let f = model(xi, p, grad);
            let w = 1.0 / (si * si);
            for i in 0..np {
                g[i] += w * grad[i] * (yi - f);
                for j in 0..=i {
                    a[i][j] += w * grad[i] * grad[j];
                }
            }
        }
        for i in 0..np {
            for j in 0..i {
                a[j][i] = a[i][j];
            }
        }
        (a, g)
    };

    let mut p = p0.to_vec();
    clamp(&mut p);
    let mut chi2 = chi2_of(&p, &mut grad);
    if !chi2.is_finite() {
        return Err(Error::InvalidParameter("initial residual is not finite".into()));
    }
    let mut lambda = 1e-3;
    for iter in 1..=MAX_ITERATIONS {
        let (a, g) = normal(&p, &mut grad);
        if a.iter().enumerate().any(|(i, row)| !(row[i] > 0.0)) {
            return Err(Error::Singular);
        }
        // parameters held at a bound by the gradient drop out of the step
        let free: Vec<usize> = (0..np)
            .filter(|&i| !((p[i] <= lower[i] && g[i] < 0.0) || (p[i] >= upper[i] && g[i] > 0.0)))
            .collect();
        let mut delta = vec![0.0; np];
        if !free.is_empty() {
            let mut damped: Vec<Vec<f64>> = free.iter().map(|&i| free.iter().map(|&j| a[i][j]).collect()).collect();
            for (k, &i) in free.iter().enumerate() {
                damped[k][k] = a[i][i] * (1.0 + lambda);
            }
            let rhs: Vec<f64> = free.iter().map(|&i| g[i]).collect();
            for (k, d) in solve_spd(&damped, &rhs)?.into_iter().enumerate() {
                delta[free[k]] = d;
            }
        }
        let mut trial: Vec<f64> = p.iter().zip(&delta).map(|(a, b)| a + b).collect();
        clamp(&mut trial);
        // step relative to the parameters in the metric of the normal
        // matrix, so a parameter resting on a bound at zero can converge
        let (mut step, mut size) = (0.0, 0.0);
        for i in 0..np {
            let d = a[i][i];
            step += d * (trial[i] - p[i]).powi(2);
            size += d * p[i].powi(2);
        }
        let rel = (step / size.max(f64::MIN_POSITIVE)).sqrt();
        let trial_chi2 = chi2_of(&trial, &mut grad);
        if trial_chi2.is_finite() && trial_chi2 <= chi2 {
            p = trial;
            chi2 = trial_chi2;
            lambda = (lambda * 0.1).max(1e-12);
        } else {
            lambda *= 10.0;
        }
        if rel < STEP_TOLERANCE || lambda > 1e20 {
            let (a, _) = normal(&p, &mut grad);
            let covariance = invert_spd(&a)?;
            return Ok(LmFit { params: p, covariance, chi2, dof: x.len() - np, iterations: iter });
        }
    }
    Err(Error::NonConvergence { iterations: MAX_ITERATIONS, chi2 })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum RhoMode {
    /// Keep ρ at the supplied value, as from S/(S+B).
    #[default]
    Fixed,
    Fitted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct G2Fit {
    pub model: G2Model,
    pub beta_err: f64,
    pub gamma1_err: f64,
    pub gamma2_err: f64,
    pub rho_err: f64,
    /// Parameter order β, γ₁, γ₂ and then ρ when fitted.
    pub covariance: Vec<Vec<f64>>,
    pub chi2: f64,
    pub dof: usize,
    pub iterations: usize,
}

fn g2_eval(tau: f64, p: &[f64], rho: f64, grad: &mut [f64]) -> f64 {
    let (beta, g1, g2) = (p[0], p[1], p[2]);
    let rho = if p.len() > 3 { p[3] } else { rho };
    let t = tau.abs();
    let e1 = (-g1 * t).exp();
    let e2 = (-g2 * t).exp();
    let r2 = rho * rho;
    grad[0] = r2 * (e2 - e1);
    grad[1] = r2 * beta * t * e1;
    grad[2] = -r2 * (beta - 1.0) * t * e2;
    if p.len() > 3 {
        grad[3] = 2.0 * rho * ((beta - 1.0) * e2 - beta * e1);
    }
    1.0 - r2 * beta * e1 + r2 * (beta - 1.0) * e2
}

/// Per-bin σ for the g² fit: Poisson errors, with empty bins borrowing the
/// mean count of their neighbours.
pub fn g2_fit_sigmas(hist: &G2Histogram) -> Vec<f64> {
    let norm = hist.n1 as f64 * hist.n2 as f64 * hist.bin_width_ns * 1e-9 / hist.duration_s;
    let c = &hist.counts;
    (0..c.len())
        .map(|i| {
            let n = if c[i] > 0 {
                c[i] as f64
            } else {
                let lo = i.saturating_sub(1);
                let hi = (i + 1).min(c.len() - 1);
                let s: u64 = c[lo..=hi].iter().sum();
                (s as f64 / (hi - lo + 1) as f64).max(1.0)
            };
            n.sqrt() / norm
        })
        .collect()
}

/// Weighted fit of the background-diluted three-level g² to a histogram.
pub fn fit_g2(hist: &G2Histogram, initial: &G2Model, mode: RhoMode) -> Result<G2Fit> {
    if hist.is_empty() || hist.total_counts() == 0 {
        return Err(Error::EmptyInput("histogram has no coincidences".into()));
    }
    if !(initial.gamma1 > initial.gamma2 && initial.gamma2 > 0.0 && initial.beta > 0.0) {
        return Err(Error::InvalidParameter("initial guess needs β > 0 and γ₁ > γ₂ > 0".into()));
    }
    let x: Vec<f64> = (0..hist.len()).map(|i| hist.bin_center_ns(i)).collect();
    let sigma = g2_fit_sigmas(hist);
    check_dip(&x, &hist.g2, &sigma, initial)?;

    let rho = initial.rho;
    let mut p0 = vec![initial.beta, initial.gamma1, initial.gamma2];
    let mut lower = vec![1e-9, 0.0, 0.0];
    let mut upper = vec![f64::INFINITY; 3];
    if mode == RhoMode::Fitted {
        p0.push(rho);
        lower.push(1e-9);
        upper.push(1.0);
    }
    let fit = levenberg_marquardt(|t, p, g| g2_eval(t, p, rho, g), &x, &hist.g2, &sigma, &p0, &lower, &upper)?;
    let p = &fit.params;
    let e = fit.errors();
    let model = G2Model { beta: p[0], gamma1: p[1], gamma2: p[2], rho: if p.len() > 3 { p[3] } else { rho } };
    if model.gamma1 * hist.bin_width_ns > 10.0 {
        return Err(Error::Degenerate(format!("fitted dip (γ₁ = {} /ns) is narrower than one bin", model.gamma1)));
    }
    if model.gamma1 <= model.gamma2 {
        return Err(Error::Degenerate("fitted rates are not ordered γ₁ > γ₂".into()));
    }
    Ok(G2Fit {
        model,
        beta_err: e[0],
        gamma1_err: e[1],
        gamma2_err: e[2],
        rho_err: if e.len() > 3 { e[3] } else { 0.0 },
        covariance: fit.covariance,
        chi2: fit.chi2,
        dof: fit.dof,
        iterations: fit.iterations,
    })
}

/// Rejects histograms without a significant dip around τ = 0.
fn check_dip(x: &[f64], y: &[f64], sigma: &[f64], initial: &G2Model) -> Result<()> {
    let width = 1.0 / initial.gamma1;
    let mean = |pred: &dyn Fn(f64) -> bool| {
        let (mut s, mut w) = (0.0, 0.0);
        for ((&xi, &yi), &si) in x.iter().zip(y).zip(sigma) {
            if pred(xi.abs()) {
                s += yi / (si * si);
                w += 1.0 / (si * si);
            }
        }
        (s / w, (1.0 / w).sqrt())
    };
    let (inner, inner_err) = mean(&|t| t < 0.5 * width);
    let (outer, outer_err) = mean(&|t| t >= 2.0 * width);
    if !(inner.is_finite() && outer.is_finite()) {
        return Err(Error::Degenerate("histogram range does not cover the dip and its wings".into()));
    }
    if outer - inner < 3.0 * (inner_err.powi(2) + outer_err.powi(2)).sqrt() {
        return Err(Error::Degenerate("no antibunching dip: β is not determined".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LifetimePoint {
    pub cutoff_ns: f64,
    pub gamma: f64,
    pub gamma_err: f64,
    pub alpha: f64,
    pub alpha_err: f64,
    pub background: f64,
    pub background_err: f64,
    pub chi2: f64,
    pub dof: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LifetimeFit {
    pub points: Vec<LifetimePoint>,
    pub recommended_gamma: f64,
    pub recommended_cutoff_ns: f64,
    /// False when no two successive cutoffs agreed within 2%; the last
    /// cutoff is then recommended.
    pub plateau: bool,
}

/// Relative change between successive cutoffs that marks the plateau.
pub const PLATEAU_TOLERANCE: f64 = 0.02;

fn decay_eval(t: f64, p: &[f64], grad: &mut [f64]) -> f64 {
    let e = (-p[1] * t).exp();
    grad[0] = e;
    grad[1] = -p[0] * t * e;
    grad[2] = 1.0;
    p[0] * e + p[2]
}

/// Fits `α e^{−γt} + β` to one cutoff of a decay curve given as bin centres
/// `t` (ns) and counts.
pub fn fit_decay(t: &[f64], counts: &[f64], cutoff_ns: f64) -> Result<LifetimePoint> {
    let n = t.len();
    let total: f64 = counts.iter().sum();
    if n < 10 || total < 100.0 {
        return Err(Error::EmptyInput(format!("too few counts after the {cutoff_ns} ns cutoff")));
    }
    // σ² from a five-bin running mean, which keeps low-count bins from
    // pulling the fit down
    let sigma: Vec<f64> = (0..n)
        .map(|i| {
            let lo = i.saturating_sub(2);
            let hi = (i + 2).min(n - 1);
            let m = counts[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64;
            m.max(1.0).sqrt()
        })
        .collect();

    let tail = (n / 10).max(3);
    let b0 = (counts[n - tail..].iter().sum::<f64>() / tail as f64).max(0.0);
    let half = n / 2;
    let s1: f64 = counts[..half].iter().map(|c| c - b0).sum();
    let s2: f64 = counts[half..2 * half].iter().map(|c| c - b0).sum();
    let span = t[half] - t[0];
    let g0 = if s1 > 0.0 && s2 > 0.0 && s1 > s2 { (s1 / s2).ln() / span } else { 3.0 / (t[n - 1] - t[0]) };
    let head = (n / 20).max(3);
    let y0 = counts[..head].iter().sum::<f64>() / head as f64;
    let a0 = ((y0 - b0).max(1.0)) * (g0 * t[head / 2]).exp();

    let fit = levenberg_marquardt(
        decay_eval,
        t,
        counts,
        &sigma,
        &[a0, g0, 0.5 * b0],
        &[0.0, 1e-9, 0.0],
        &[f64::INFINITY; 3],
    )?;
    let e = fit.errors();
    Ok(LifetimePoint {
        cutoff_ns,
        gamma: fit.params[1],
        gamma_err: e[1],
        alpha: fit.params[0],
        alpha_err: e[0],
        background: fit.params[2],
        background_err: e[2],
        chi2: fit.chi2,
        dof: fit.dof,
    })
}

/// Scans the fit start over `cutoffs_ns` and picks γ at the first plateau.
///
/// Bins after `end_ns` (default: the whole period) are excluded, which
/// keeps photons jittered across the next SYNC out of the tail.
pub fn fit_lifetime(hist: &LifetimeHistogram, cutoffs_ns: &[f64], end_ns: Option<f64>) -> Result<LifetimeFit> {
    if cutoffs_ns.is_empty() {
        return Err(Error::EmptyInput("no cutoffs given".into()));
    }
    let bin_ns = hist.bin_ps as f64 / PS_PER_NS as f64;
    let end = end_ns.unwrap_or(f64::INFINITY);
    let mut points = Vec::with_capacity(cutoffs_ns.len());
    for &c in cutoffs_ns {
        let (t, y): (Vec<f64>, Vec<f64>) = hist
            .counts
            .iter()
            .enumerate()
            .map(|(i, &n)| ((i as f64 + 0.5) * bin_ns, n as f64))
            .filter(|(ti, _)| *ti >= c && *ti + 0.5 * bin_ns <= end)
            .unzip();
        points.push(fit_decay(&t, &y, c)?);
    }
    let mut pick = points.len() - 1;
    let mut plateau = false;
    for i in 1..points.len() {
        if ((points[i].gamma - points[i - 1].gamma) / points[i - 1].gamma).abs() < PLATEAU_TOLERANCE {
            pick = i;
            plateau = true;
            break;
        }
    }
    Ok(LifetimeFit {
        recommended_gamma: points[pick].gamma,
        recommended_cutoff_ns: points[pick].cutoff_ns,
        plateau,
        points,
    })
}
