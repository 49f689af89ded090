//! Fringe visibility from a HWP angle scan.

use serde::{Deserialize, Serialize};

use super::fit::{invert_spd, solve_spd};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanPoint {
    pub theta_deg: f64,
    pub n_h: u64,
    pub n_v: u64,
}

impl ScanPoint {
    pub fn total(&self) -> u64 {
        self.n_h + self.n_v
    }

    /// Normalised (P_H, P_V); (NaN, NaN) without counts.
    pub fn probabilities(&self) -> (f64, f64) {
        let n = self.total() as f64;
        (self.n_h as f64 / n, self.n_v as f64 / n)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VisibilityResult {
    /// Mean of the per-fringe extrema of |P_H − P_V|.
    pub visibility: f64,
    pub visibility_err: f64,
    /// Extremum value and angle for each fringe found in the scan.
    pub fringes: Vec<(f64, f64)>,
    /// Amplitude A of the collective fit `N_H,V = A(1 ± V sin 4θ)/2`.
    pub fit_amplitude: f64,
    pub fit_visibility: f64,
    pub fit_visibility_err: f64,
}

/// Visibility from a scan of at least 8 angles covering one full period.
pub fn visibility_from_scan(scan: &[ScanPoint]) -> Result<VisibilityResult> {
    if scan.len() < 8 {
        return Err(Error::InvalidParameter(format!("visibility scan needs at least 8 angles, got {}", scan.len())));
    }
    let lo = scan.iter().map(|p| p.theta_deg).fold(f64::INFINITY, f64::min);
    let hi = scan.iter().map(|p| p.theta_deg).fold(f64::NEG_INFINITY, f64::max);
    if hi - lo < 90.0 - 1e-9 {
        return Err(Error::InvalidParameter(format!("scan spans {:.3}°, less than one 90° period", hi - lo)));
    }
    if scan.iter().all(|p| p.total() == 0) {
        return Err(Error::Degenerate("all scan points have zero counts".into()));
    }

    // extrema of sin 4θ sit at 22.5° + 45° k
    let step = min_spacing(scan);
    let mut fringes = Vec::new();
    let mut binom_var = Vec::new();
    let first = ((lo - 22.5) / 45.0).ceil() as i64;
    let last = ((hi - 22.5) / 45.0).floor() as i64;
    for k in first..=last {
        let centre = 22.5 + 45.0 * k as f64;
        let best = scan
            .iter()
            .filter(|p| p.total() > 0 && (p.theta_deg - centre).abs() <= step + 1e-9)
            .map(|p| {
                let (h, v) = p.probabilities();
                ((h - v).abs(), p)
            })
            .max_by(|a, b| a.0.total_cmp(&b.0));
        if let Some((d, p)) = best {
            fringes.push((d, p.theta_deg));
            binom_var.push((1.0 - d * d).max(0.0) / p.total() as f64);
        }
    }
    if fringes.is_empty() {
        return Err(Error::Degenerate("no scan point near a fringe extremum".into()));
    }
    let n = fringes.len() as f64;
    let visibility = fringes.iter().map(|f| f.0).sum::<f64>() / n;
    let visibility_err = if fringes.len() >= 2 {
        let var = fringes.iter().map(|f| (f.0 - visibility).powi(2)).sum::<f64>() / (n - 1.0);
        (var / n).sqrt()
    } else {
        binom_var[0].sqrt()
    };

    let (fit_amplitude, fit_visibility, fit_visibility_err) = fringe_fit(scan)?;
    Ok(VisibilityResult { visibility, visibility_err, fringes, fit_amplitude, fit_visibility, fit_visibility_err })
}

fn min_spacing(scan: &[ScanPoint]) -> f64 {
    let mut th: Vec<f64> = scan.iter().map(|p| p.theta_deg).collect();
    th.sort_by(f64::total_cmp);
    th.windows(2).map(|w| w[1] - w[0]).filter(|d| *d > 1e-12).fold(f64::INFINITY, f64::min).min(45.0) / 2.0
}

/// Weighted linear fit of `N_H = a + b s`, `N_V = a − b s` with `s = sin 4θ`,
/// giving `A = 2a` and `V = b/a`.
fn fringe_fit(scan: &[ScanPoint]) -> Result<(f64, f64, f64)> {
    let mut m = [[0.0; 2]; 2];
    let mut r = [0.0; 2];
    for p in scan {
        let s = (4.0 * p.theta_deg.to_radians()).sin();
        for (n, sign) in [(p.n_h, 1.0), (p.n_v, -1.0)] {
            let w = 1.0 / (n.max(1) as f64);
            let x = [1.0, sign * s];
            for i in 0..2 {
                r[i] += w * x[i] * n as f64;
                for j in 0..2 {
                    m[i][j] += w * x[i] * x[j];
                }
            }
        }
    }
    let mv: Vec<Vec<f64>> = m.iter().map(|row| row.to_vec()).collect();
    let sol = solve_spd(&mv, &r)?;
    let cov = invert_spd(&mv)?;
    let (a, b) = (sol[0], sol[1]);
    if a <= 0.0 {
        return Err(Error::Degenerate("fringe fit amplitude is not positive".into()));
    }
    let v = b / a;
    let var = (cov[1][1] - 2.0 * v * cov[0][1] + v * v * cov[0][0]) / (a * a);
    Ok((2.0 * a, v, var.max(0.0).sqrt()))
}

/// Default HWP grid: 0° to 90° in 2.5° steps.
pub fn default_scan_angles() -> Vec<f64> {
    (0..=36).map(|k| k as f64 * 2.5).collect()
}
