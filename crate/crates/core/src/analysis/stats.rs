//! Error propagation helpers.

use rand_distr::{Binomial, Distribution};

use crate::emitter::rng_for;

/// First-order standard error of `f(x)` for independent inputs with
/// standard errors `sigma`, using central differences.
pub fn delta_method<F: Fn(&[f64]) -> f64>(f: F, x: &[f64], sigma: &[f64]) -> f64 {
    assert_eq!(x.len(), sigma.len());
    let mut var = 0.0;
    let mut xp = x.to_vec();
    for i in 0..x.len() {
        if sigma[i] == 0.0 {
            continue;
        }
        let h = 1e-6 * x[i].abs().max(sigma[i]);
        xp[i] = x[i] + h;
        let up = f(&xp);
        xp[i] = x[i] - h;
        let down = f(&xp);
        xp[i] = x[i];
        let d = (up - down) / (2.0 * h);
        var += (d * sigma[i]).powi(2);
    }
    var.sqrt()
}

/// Parametric multinomial bootstrap over window counts `(n0, n1, n2)`.
///
/// Returns the standard deviation of `stat` over `reps` resamples; resamples
/// where `stat` is not finite are skipped.
pub fn bootstrap_counts<F: Fn(u64, u64, u64) -> f64>(n: [u64; 3], reps: usize, seed: u64, stat: F) -> f64 {
    let total = n[0] + n[1] + n[2];
    if total == 0 || reps < 2 {
        return f64::NAN;
    }
    let p1 = n[1] as f64 / total as f64;
    let p2 = n[2] as f64 / total as f64;
    let mut rng = rng_for(seed, 20);
    let mut vals = Vec::with_capacity(reps);
    for _ in 0..reps {
        let k1 = Binomial::new(total, p1).map(|b| b.sample(&mut rng)).unwrap_or(n[1]);
        let rest = total - k1;
        let q2 = if p1 < 1.0 { (p2 / (1.0 - p1)).min(1.0) } else { 0.0 };
        let k2 = Binomial::new(rest, q2).map(|b| b.sample(&mut rng)).unwrap_or(0);
        let v = stat(total - k1 - k2, k1, k2);
        if v.is_finite() {
            vals.push(v);
        }
    }
    if vals.len() < 2 {
        return f64::NAN;
    }
    let m = vals.iter().sum::<f64>() / vals.len() as f64;
    (vals.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (vals.len() - 1) as f64).sqrt()
}
