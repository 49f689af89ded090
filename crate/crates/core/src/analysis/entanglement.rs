//! Loss inversion, detection efficiency, contamination and concurrence.

use serde::{Deserialize, Serialize};

use super::stats::delta_method;
use crate::error::{Error, Result};
use crate::model::{ConcurrenceResult, PopulationEstimate, Populations};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum InversionMode {
    /// `p₁ = (p₁ᴰ − 2η(1−η)p₂ᴰ)/η`, with the detected p₂ in the numerator.
    #[default]
    Verbatim,
    /// The same relation using the loss-corrected p₂, which exactly undoes
    /// binomial thinning of one- and two-photon states.
    SelfConsistent,
}

fn invert_raw(p1d: f64, p2d: f64, eta: f64, mode: InversionMode) -> (f64, f64) {
    let p2 = p2d / (eta * eta);
    let sub = match mode {
        InversionMode::Verbatim => p2d,
        InversionMode::SelfConsistent => p2,
    };
    ((p1d - 2.0 * eta * (1.0 - eta) * sub) / eta, p2)
}

/// Loss-corrected populations and whether a negative value was clamped.
pub fn invert_losses(detected: &Populations, eta: f64, eta_err: f64, mode: InversionMode) -> Result<(Populations, bool)> {
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(Error::InvalidParameter(format!("detection efficiency {eta} outside (0, 1]")));
    }
    let (p1d, p2d) = (detected.p1, detected.p2);
    let (p1, p2) = invert_raw(p1d, p2d, eta, mode);
    let x = [p1d, p2d, eta];
    let s = [detected.p1_err, detected.p2_err, eta_err.max(0.0)];
    let p1_err = delta_method(|v| invert_raw(v[0], v[1], v[2], mode).0, &x, &s);
    let p2_err = delta_method(|v| invert_raw(v[0], v[1], v[2], mode).1, &x, &s);
    let p0_err = delta_method(
        |v| {
            let (a, b) = invert_raw(v[0], v[1], v[2], mode);
            1.0 - a - b
        },
        &x,
        &s,
    );
    let clamped = p1 < 0.0 || p2 < 0.0;
    let (p1, p2) = (p1.max(0.0), p2.max(0.0));
    Ok((Populations { p0: 1.0 - p1 - p2, p1, p2, p0_err, p1_err, p2_err }, clamped))
}

/// Fills in the corrected populations of an estimate.
pub fn correct_estimate(est: &mut PopulationEstimate, eta: f64, eta_err: f64, mode: InversionMode) -> Result<()> {
    let (c, clamped) = invert_losses(&est.detected, eta, eta_err, mode)?;
    est.corrected = Some(c);
    est.clamped = clamped;
    Ok(())
}

/// Binomial thinning of true populations: the detected populations a lossy
/// stage with efficiency `eta` would record.
pub fn forward_losses(truth: &Populations, eta: f64) -> Populations {
    let p2 = eta * eta * truth.p2;
    let p1 = eta * truth.p1 + 2.0 * eta * (1.0 - eta) * truth.p2;
    Populations { p0: 1.0 - p1 - p2, p1, p2, p0_err: 0.0, p1_err: 0.0, p2_err: 0.0 }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Efficiency {
    pub eta: f64,
    pub eta_err: f64,
}

/// Lumped detection efficiency `P_D/(P·η_filters)` scaled by the detector
/// quantum-efficiency ratio, with relative errors added in quadrature.
pub fn detection_efficiency(
    power_uw: f64,
    power_err: f64,
    eta_filters: f64,
    eta_filters_err: f64,
    detected_uw: f64,
    detected_err: f64,
    qe_ratio: f64,
) -> Result<Efficiency> {
    for (name, v) in [("P", power_uw), ("eta_filters", eta_filters), ("P_D", detected_uw), ("QE ratio", qe_ratio)] {
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")));
        }
    }
    let eta = detected_uw / (power_uw * eta_filters) * qe_ratio;
    let rel = ((power_err / power_uw).powi(2) + (eta_filters_err / eta_filters).powi(2) + (detected_err / detected_uw).powi(2)).sqrt();
    Ok(Efficiency { eta, eta_err: eta * rel })
}

/// Degree of contamination `2(N/(N−1)) p₂p₀/p₁²`.
pub fn contamination(p0: f64, p1: f64, p2: f64, modes: u32) -> Result<f64> {
    if modes < 2 {
        return Err(Error::InvalidParameter("contamination needs at least two modes".into()));
    }
    if p1 <= 0.0 {
        return Err(Error::Undefined("contamination is undefined for p1 = 0".into()));
    }
    let n = modes as f64;
    Ok(2.0 * (n / (n - 1.0)) * p2 * p0 / (p1 * p1))
}

/// Contamination with a first-order error from the population errors.
pub fn contamination_with_err(p: &Populations, modes: u32) -> Result<(f64, f64)> {
    let yc = contamination(p.p0, p.p1, p.p2, modes)?;
    let err = delta_method(
        |v| contamination(v[0], v[1], v[2], modes).unwrap_or(f64::NAN),
        &[p.p0, p.p1, p.p2],
        &[p.p0_err, p.p1_err, p.p2_err],
    );
    Ok((yc, err))
}

/// Contamination from raw window counts, treating them as independent
/// Poisson counts.
pub fn contamination_from_counts(n0: u64, n1: u64, n2: u64) -> Result<(f64, f64)> {
    if n1 == 0 {
        return Err(Error::Undefined("contamination is undefined with no single-photon windows".into()));
    }
    let yc = 4.0 * n2 as f64 * n0 as f64 / (n1 as f64 * n1 as f64);
    let rel = if n2 == 0 { f64::NAN } else { (1.0 / n2 as f64 + 1.0 / n0.max(1) as f64 + 4.0 / n1 as f64).sqrt() };
    Ok((yc, yc * rel))
}

/// Inputs to [`concurrence`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConcurrenceInput {
    pub window_ns: f64,
    pub visibility: f64,
    pub visibility_err: f64,
    pub yc: f64,
    pub yc_err: f64,
    pub p1: f64,
    /// Probability of at most one photon per mode.
    pub p: f64,
}

/// Normalised concurrence `max(V − √y_c, 0)` and the total concurrence
/// `max((V − √y_c) p₁/p, 0)` with its lower bound `p·C`.
pub fn concurrence(i: &ConcurrenceInput) -> Result<ConcurrenceResult> {
    if !(0.0..=1.0).contains(&i.visibility) {
        return Err(Error::InvalidParameter(format!("visibility {} outside [0, 1]", i.visibility)));
    }
    if !(i.yc >= 0.0) {
        return Err(Error::InvalidParameter(format!("contamination {} must be non-negative", i.yc)));
    }
    if !(i.p1 > 0.0 && i.p1 <= i.p && i.p <= 1.0) {
        return Err(Error::InvalidParameter(format!("need 0 < p1 ≤ p ≤ 1, got p1={}, p={}", i.p1, i.p)));
    }
    let raw = i.visibility - i.yc.sqrt();
    let clamped = raw < 0.0;
    let c_n = raw.max(0.0);
    let slope = if i.yc > 0.0 { 0.5 / i.yc.sqrt() } else { 0.0 };
    let c_n_err = (i.visibility_err.powi(2) + (slope * i.yc_err).powi(2)).sqrt();
    let concurrence = c_n * i.p1 / i.p;
    Ok(ConcurrenceResult {
        window_ns: i.window_ns,
        visibility: i.visibility,
        visibility_err: i.visibility_err,
        yc: i.yc,
        yc_err: i.yc_err,
        c_n,
        c_n_err,
        concurrence,
        total_lower_bound: i.p * concurrence,
        clamped,
    })
}

/// Concurrence for a population estimate, using the corrected populations
/// when present.
pub fn concurrence_for(est: &PopulationEstimate, visibility: f64, visibility_err: f64) -> Result<ConcurrenceResult> {
    let pops = est.corrected.as_ref().unwrap_or(&est.detected);
    let (yc, yc_err) = contamination_with_err(pops, 2)?;
    concurrence(&ConcurrenceInput {
        window_ns: est.window_ns,
        visibility,
        visibility_err,
        yc,
        yc_err,
        p1: pops.p1,
        p: (pops.p0 + pops.p1 + pops.p2).min(1.0),
    })
}
