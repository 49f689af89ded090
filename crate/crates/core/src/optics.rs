//! Beamsplitter, polarisation-tagged interferometer and detector chain.
//!
//! The interferometer is modelled at the level of detection probabilities:
//! a photon reaching the analysis stage lands in DH with probability
//! `(1 + v sin 4θ cos φ) / 2`, where `v` is the intrinsic fringe contrast.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::emitter::{rng_for, PoissonSource, TagSource};
use crate::error::{Error, Result};
use crate::model::{Channel, DetectorModel, TagStream, TimeTag, DEFAULT_RESOLUTION_PS, PS_PER_S};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OpticsConfig {
    /// Probability a photon takes path 1 (tagged V).
    pub split_ratio: f64,
    pub phase_rad: f64,
    pub hwp_angle_deg: f64,
    /// Probability a photon leaves through the unused port of the path combiner.
    pub mz_loss: f64,
    pub v_intrinsic: f64,
}

impl Default for OpticsConfig {
    fn default() -> Self {
        OpticsConfig { split_ratio: 0.5, phase_rad: 0.0, hwp_angle_deg: 0.0, mz_loss: 0.5, v_intrinsic: 1.0 }
    }
}

impl OpticsConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.split_ratio) {
            return Err(Error::InvalidParameter(format!("split ratio {} outside [0, 1]", self.split_ratio)));
        }
        if !(0.0..1.0).contains(&self.mz_loss) {
            return Err(Error::InvalidParameter(format!("mz loss {} outside [0, 1)", self.mz_loss)));
        }
        if !(0.0..=1.0).contains(&self.v_intrinsic) {
            return Err(Error::InvalidParameter(format!("visibility {} outside [0, 1]", self.v_intrinsic)));
        }
        if !self.phase_rad.is_finite() || !self.hwp_angle_deg.is_finite() {
            return Err(Error::InvalidParameter("phase and HWP angle must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RoutingMode {
    /// HWP at 0°: no interference, the polarisation tag reveals the path.
    Population,
    /// Interference through the rotated HWP.
    VisibilityScan,
}

/// Probabilities (P_H, P_V) of landing in DH / DV at HWP angle `theta_deg`.
pub fn hwp_detection_probs(theta_deg: f64, phase_rad: f64, v_intrinsic: f64) -> (f64, f64) {
    let s = (4.0 * theta_deg.to_radians()).sin();
    let ph = 0.5 * (1.0 + v_intrinsic * s * phase_rad.cos());
    (ph, 1.0 - ph)
}

/// Streaming router from AUX emissions to DH/DV. SYNC tags pass through.
#[derive(Debug, Clone)]
pub struct Router {
    survive: f64,
    p_dh: f64,
    rng: ChaCha8Rng,
}

impl Router {
    pub fn new(optics: &OpticsConfig, mode: RoutingMode, seed: u64) -> Result<Self> {
        optics.validate()?;
        let p_dh = match mode {
            RoutingMode::Population => {
                if optics.hwp_angle_deg != 0.0 {
                    return Err(Error::InvalidParameter("population mode requires the HWP at 0°".into()));
                }
                // path 1 is tagged V, path 2 H
                1.0 - optics.split_ratio
            }
            RoutingMode::VisibilityScan => {
                hwp_detection_probs(optics.hwp_angle_deg, optics.phase_rad, optics.v_intrinsic).0
            }
        };
        Ok(Router { survive: 1.0 - optics.mz_loss, p_dh, rng: rng_for(seed, 2) })
    }

    pub fn route(&mut self, input: &[TimeTag], out: &mut Vec<TimeTag>) {
        for tag in input {
            if tag.channel == Channel::Sync {
                out.push(*tag);
                continue;
            }
            if self.survive < 1.0 && self.rng.random::<f64>() >= self.survive {
                continue;
            }
            let ch = if self.rng.random::<f64>() < self.p_dh { Channel::DH } else { Channel::DV };
            out.push(TimeTag::new(tag.time, ch));
        }
    }
}

/// Sends every photon through the combiner loss and the HWP/PBS split.
pub fn route_photons(emissions: &TagStream, optics: &OpticsConfig, mode: RoutingMode, seed: u64) -> Result<TagStream> {
    let mut router = Router::new(optics, mode, seed)?;
    let mut tags = Vec::with_capacity(emissions.len());
    router.route(&emissions.tags, &mut tags);
    Ok(TagStream { tags, duration: emissions.duration, resolution: emissions.resolution })
}

// Jitter draws are truncated at this many sigma so a chunk can be released
// once the input has moved a bounded distance past it.
const JITTER_TRUNCATION: f64 = 8.0;

/// Streaming detector model: efficiency, Gaussian jitter, non-paralyzable
/// dead time per channel and dark counts.
///
/// Input arrives in time-ordered chunks; a tag is released only once no
/// later input can be jittered in front of it.
#[derive(Debug)]
pub struct DetectorChain {
    det: DetectorModel,
    resolution: u64,
    sigma: f64,
    margin: u64,
    rng: ChaCha8Rng,
    dark: Vec<PoissonSource>,
    pending: Vec<TimeTag>,
    last_accepted: [Option<u64>; 4],
    scratch: Vec<TimeTag>,
}

impl DetectorChain {
    /// `dark_channels` lists the detector channels that accumulate dark counts.
    pub fn new(det: &DetectorModel, dark_channels: &[Channel], resolution: u64, seed: u64) -> Result<Self> {
        det.validate()?;
        if resolution == 0 {
            return Err(Error::InvalidParameter("resolution must be positive".into()));
        }
        let sigma = det.jitter_sigma_ps();
        let dark = dark_channels
            .iter()
            .filter(|c| c.is_photon())
            .map(|&c| PoissonSource::new(det.dark_rate_per_s, c, resolution, rng_for(seed, 10 + c.code() as u64)))
            .collect();
        Ok(DetectorChain {
            det: *det,
            resolution,
            sigma,
            margin: (JITTER_TRUNCATION * sigma).ceil() as u64 + resolution,
            rng: rng_for(seed, 3),
            dark,
            pending: Vec::new(),
            last_accepted: [None; 4],
            scratch: Vec::new(),
        })
    }

    /// Output released by [`process`](Self::process) for a given horizon is
    /// complete up to `horizon − margin`.
    pub fn margin(&self) -> u64 {
        self.margin
    }

    fn jitter(&mut self, t: u64) -> u64 {
        if self.sigma <= 0.0 {
            return t;
        }
        let z: f64 = self.rng.sample(StandardNormal);
        let z = z.clamp(-JITTER_TRUNCATION, JITTER_TRUNCATION);
        let shifted = (t as f64 + z * self.sigma).round().max(0.0) as u64;
        shifted - shifted % self.resolution
    }

    /// Feeds one chunk. Every later chunk must only hold tags `>= horizon`.
    pub fn process(&mut self, chunk: &[TimeTag], horizon: u64, out: &mut Vec<TimeTag>) {
        let eta = self.det.efficiency;
        for tag in chunk {
            if tag.channel == Channel::Sync {
                self.pending.push(*tag);
                continue;
            }
            if eta < 1.0 && self.rng.random::<f64>() >= eta {
                continue;
            }
            let t = self.jitter(tag.time);
            self.pending.push(TimeTag::new(t, tag.channel));
        }
        for src in &mut self.dark {
            src.fill(horizon, &mut self.pending);
        }
        self.release(horizon.saturating_sub(self.margin), out);
    }

    /// Flushes everything, dropping tags jittered past `duration`.
    pub fn finish(&mut self, duration: u64, out: &mut Vec<TimeTag>) {
        for src in &mut self.dark {
            src.fill(duration.saturating_add(1), &mut self.pending);
        }
        let start = out.len();
        self.release(u64::MAX, out);
        let mut k = start;
        for i in start..out.len() {
            if out[i].time <= duration {
                out[k] = out[i];
                k += 1;
            }
        }
        out.truncate(k);
    }

    fn release(&mut self, before: u64, out: &mut Vec<TimeTag>) {
        self.pending.sort_by_key(|t| t.time);
        let n = self.pending.partition_point(|t| t.time < before);
        self.scratch.clear();
        self.scratch.extend(self.pending.drain(..n));
        let dead = self.det.dead_time_ps;
        for tag in &self.scratch {
            if tag.channel == Channel::Sync {
                out.push(*tag);
                continue;
            }
            let slot = &mut self.last_accepted[tag.channel.code() as usize];
            match *slot {
                Some(last) if tag.time - last < dead => {}
                _ => {
                    *slot = Some(tag.time);
                    out.push(*tag);
                }
            }
        }
    }
}

/// Applies the detector model to a whole stream.
///
/// Dark counts are added on the photon channels present in the input.
pub fn apply_detector(stream: &TagStream, det: &DetectorModel, seed: u64) -> Result<TagStream> {
    let mut channels: Vec<Channel> = Channel::ALL
        .iter()
        .copied()
        .filter(|c| c.is_photon() && stream.tags.iter().any(|t| t.channel == *c))
        .collect();
    channels.dedup();
    let mut chain = DetectorChain::new(det, &channels, stream.resolution, seed)?;
    let mut tags = Vec::with_capacity(stream.len());
    chain.process(&stream.tags, stream.duration, &mut tags);
    chain.finish(stream.duration, &mut tags);
    Ok(TagStream { tags, duration: stream.duration, resolution: stream.resolution })
}

/// Weak coherent (Poissonian) light on AUX.
pub fn simulate_coherent(rate_per_s: f64, duration_s: f64, seed: u64) -> Result<TagStream> {
    if !(rate_per_s.is_finite() && rate_per_s > 0.0) {
        return Err(Error::InvalidParameter("coherent rate must be positive".into()));
    }
    if !(duration_s.is_finite() && duration_s > 0.0) {
        return Err(Error::InvalidParameter("duration must be positive".into()));
    }
    let duration = (duration_s * PS_PER_S).round() as u64;
    let mut src = PoissonSource::new(rate_per_s, Channel::Aux, DEFAULT_RESOLUTION_PS, rng_for(seed, 0));
    let mut tags = Vec::new();
    src.fill(duration + 1, &mut tags);
    Ok(TagStream { tags, duration, resolution: DEFAULT_RESOLUTION_PS })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::validate_stream;

    fn stream(times: &[u64], ch: Channel, duration: u64) -> TagStream {
        TagStream { tags: times.iter().map(|&t| TimeTag::new(t, ch)).collect(), duration, resolution: 25 }
    }

    #[test]
    fn hwp_probabilities_at_named_angles() {
        let (h, v) = hwp_detection_probs(0.0, 0.0, 1.0);
        assert!((h - 0.5).abs() < 1e-15 && (v - 0.5).abs() < 1e-15);
        let (h, v) = hwp_detection_probs(22.5, 0.0, 1.0);
        assert!((h - 1.0).abs() < 1e-15 && v.abs() < 1e-15);
        let (h, v) = hwp_detection_probs(45.0, 0.0, 1.0);
        assert!((h - 0.5).abs() < 1e-12 && (v - 0.5).abs() < 1e-12);
    }

    #[test]
    fn hwp_matches_amplitude_form() {
        for k in 0..=72 {
            let th = k as f64 * 2.5;
            let r = (2.0 * th).to_radians();
            let amp_h = 0.5 * (r.cos() + r.sin()).powi(2);
            let amp_v = 0.5 * (r.sin() - r.cos()).powi(2);
            let (h, v) = hwp_detection_probs(th, 0.0, 1.0);
            assert!((h - amp_h).abs() < 1e-12 && (v - amp_v).abs() < 1e-12, "θ={th}");
        }
    }

    #[test]
    fn total_loss_is_rejected() {
        let o = OpticsConfig { mz_loss: 1.0, ..Default::default() };
        let s = stream(&[0, 25], Channel::Aux, 100);
        assert!(route_photons(&s, &o, RoutingMode::Population, 1).is_err());
    }

    #[test]
    fn population_mode_needs_zero_angle() {
        let o = OpticsConfig { hwp_angle_deg: 10.0, ..Default::default() };
        let s = stream(&[0], Channel::Aux, 100);
        assert!(route_photons(&s, &o, RoutingMode::Population, 1).is_err());
        assert!(route_photons(&s, &o, RoutingMode::VisibilityScan, 1).is_ok());
    }

    #[test]
    fn population_split_is_fair() {
        let n = 1_000_000u64;
        let s = TagStream {
            tags: (0..n).map(|i| TimeTag::new(i * 25, Channel::Aux)).collect(),
            duration: n * 25,
            resolution: 25,
        };
        let o = OpticsConfig { mz_loss: 0.0, ..Default::default() };
        let r = route_photons(&s, &o, RoutingMode::Population, 3).unwrap();
        assert_eq!(r.len() as u64, n);
        let frac = r.count(Channel::DH) as f64 / n as f64;
        let sigma = (0.25 / n as f64).sqrt();
        assert!((frac - 0.5).abs() < 3.0 * sigma, "DH fraction {frac}");
    }

    #[test]
    fn fringe_maximum_sends_everything_to_dh() {
        let s = stream(&(0..1000).map(|i| i * 25).collect::<Vec<_>>(), Channel::Aux, 25_000);
        let o = OpticsConfig { hwp_angle_deg: 22.5, ..Default::default() };
        let r = route_photons(&s, &o, RoutingMode::VisibilityScan, 5).unwrap();
        assert!(!r.is_empty());
        assert_eq!(r.count(Channel::DV), 0);
    }

    #[test]
    fn ideal_detector_is_identity() {
        let s = TagStream {
            tags: vec![
                TimeTag::new(0, Channel::DH),
                TimeTag::new(25, Channel::DV),
                TimeTag::new(25, Channel::DH),
                TimeTag::new(1000, Channel::Sync),
            ],
            duration: 2000,
            resolution: 25,
        };
        assert_eq!(apply_detector(&s, &DetectorModel::ideal(), 1).unwrap(), s);
    }

    #[test]
    fn dead_time_drops_close_second_tag() {
        let s = stream(&[0, 10_000], Channel::DH, 100_000);
        let det = DetectorModel { jitter_fwhm_ps: 0.0, efficiency: 1.0, ..DetectorModel::new(1.0) };
        let out = apply_detector(&s, &det, 1).unwrap();
        assert_eq!(out.times(Channel::DH), vec![0]);
        // exactly one dead time later is accepted
        let s = stream(&[0, 24_000], Channel::DH, 100_000);
        assert_eq!(apply_detector(&s, &det, 1).unwrap().len(), 2);
    }

    #[test]
    fn efficiency_thins_binomially() {
        let n = 1_000_000u64;
        let s = TagStream {
            tags: (0..n).map(|i| TimeTag::new(i * 100_000, Channel::DH)).collect(),
            duration: n * 100_000,
            resolution: 25,
        };
        let det = DetectorModel { efficiency: 0.0402, dead_time_ps: 0, jitter_fwhm_ps: 0.0, dark_rate_per_s: 0.0 };
        let out = apply_detector(&s, &det, 11).unwrap();
        let mean = n as f64 * 0.0402;
        let sigma = (mean * (1.0 - 0.0402)).sqrt();
        assert!((out.len() as f64 - mean).abs() < 3.0 * sigma, "{}", out.len());
    }

    #[test]
    fn jittered_output_is_valid_and_spaced() {
        let src = simulate_coherent(5e7, 1e-3, 2).unwrap();
        let routed = route_photons(&src, &OpticsConfig::default(), RoutingMode::Population, 2).unwrap();
        let det = DetectorModel { dark_rate_per_s: 1e5, ..DetectorModel::new(0.7) };
        let out = apply_detector(&routed, &det, 2).unwrap();
        assert!(validate_stream(&out).is_empty());
        for ch in [Channel::DH, Channel::DV] {
            let t = out.times(ch);
            assert!(t.windows(2).all(|w| w[1] - w[0] >= det.dead_time_ps));
        }
    }

    #[test]
    fn streaming_chain_matches_batch() {
        let src = simulate_coherent(2e7, 1e-3, 4).unwrap();
        let routed = route_photons(&src, &OpticsConfig::default(), RoutingMode::Population, 4).unwrap();
        let det = DetectorModel::new(0.5);
        let batch = apply_detector(&routed, &det, 8).unwrap();

        // chunk boundaries change nothing because the RNG is consumed in input order
        let mut chain = DetectorChain::new(&det, &[Channel::DH, Channel::DV], 25, 8).unwrap();
        let mut out = Vec::new();
        let step = routed.duration / 7;
        let mut i = 0;
        for k in 1..=7u64 {
            let horizon = if k == 7 { routed.duration } else { k * step };
            let j = routed.tags.partition_point(|t| t.time < horizon);
            chain.process(&routed.tags[i..j], horizon, &mut out);
            i = j;
        }
        chain.finish(routed.duration, &mut out);
        assert_eq!(out, batch.tags);
    }

    #[test]
    fn coherent_count_is_poissonian() {
        let s = simulate_coherent(1e6, 0.1, 9).unwrap();
        let mean = 1e5;
        assert!((s.len() as f64 - mean).abs() < 3.0 * mean.sqrt());
        assert!(simulate_coherent(0.0, 1.0, 1).is_err());
    }
}
