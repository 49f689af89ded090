//! Reference parameters of the NV experiment and streamed end-to-end
//! simulations: source, interferometer, detectors and analysis in one pass
//! without holding whole acquisitions in memory.

use crate::analysis::{ScanPoint, WindowPopulationCounter};
use crate::correlation::{G2Accumulator, LifetimeAccumulator, LifetimeHistogram};
use crate::emitter::{calibrate_rates, pump_for_signal_rate, rng_for, CwSource, ExcitationConfig, PoissonSource, PulsedSource, TagSource};
use crate::error::{Error, Result};
use crate::model::{
    Channel, DetectorModel, EmitterModel, G2Histogram, G2Model, PopulationEstimate, TimeTag, DEFAULT_RESOLUTION_PS,
    PS_PER_S,
};
use crate::optics::{DetectorChain, OpticsConfig, Router, RoutingMode};

/// Fitted correlation of the single NV⁰ centre.
pub const REFERENCE_G2: G2Model = G2Model { beta: 1.18, gamma1: 0.035, gamma2: 1.18e-4, rho: 0.925 };
pub const REFERENCE_G2_ZERO: f64 = 0.173;
pub const REFERENCE_G2_ZERO_ERR: f64 = 0.039;
/// Photon flux entering the interferometer, signal plus background (1/s).
pub const REFERENCE_FLUX_PER_S: f64 = 1.507e5;
pub const REFERENCE_ETA_D: f64 = 0.0402;
pub const REFERENCE_ETA_D_ERR: f64 = 0.0069;
pub const REFERENCE_VISIBILITY: f64 = 0.9329;
pub const REFERENCE_VISIBILITY_ERR: f64 = 0.0069;
pub const REFERENCE_LIFETIME_GAMMA: f64 = 0.0415;
pub const REFERENCE_CN_2NS: f64 = 0.44;
pub const REFERENCE_CN_2NS_ERR: f64 = 0.07;
pub const REFERENCE_ACQUISITION_S: f64 = 1800.0;
/// Loss at the path-combining beamsplitter.
pub const REFERENCE_MZ_LOSS: f64 = 0.5;
/// Calibration inputs of the lumped efficiency: P (µW), η_filters, P_D (µW).
pub const REFERENCE_CAL_POWER_UW: f64 = 80.0;
pub const REFERENCE_CAL_FILTERS: f64 = 4.59e-9;
pub const REFERENCE_CAL_FILTERS_ERR: f64 = 0.79e-9;
pub const REFERENCE_CAL_DETECTED_UW: f64 = 1.477e-8;
pub const REFERENCE_CAL_DETECTED_ERR_UW: f64 = 0.0026e-8;

/// Detector efficiency that, behind the combiner loss, gives the lumped
/// efficiency of the analysis section.
pub fn reference_detector_efficiency() -> f64 {
    REFERENCE_ETA_D / (1.0 - REFERENCE_MZ_LOSS)
}

/// Reference detectors: 24 ns dead time, 350 ps jitter, no dark counts.
pub fn reference_detector() -> DetectorModel {
    DetectorModel::new(reference_detector_efficiency())
}

/// Emitter whose correlation is [`REFERENCE_G2`] and whose total output
/// (signal plus background) equals [`REFERENCE_FLUX_PER_S`].
pub fn reference_emitter() -> Result<EmitterModel> {
    emitter_for_flux(&REFERENCE_G2, REFERENCE_FLUX_PER_S)
}

pub fn emitter_for_flux(target: &G2Model, flux_per_s: f64) -> Result<EmitterModel> {
    let signal_per_ns = target.rho * flux_per_s * 1e-9;
    let pump = pump_for_signal_rate(target, signal_per_ns)?;
    calibrate_rates(target, pump)
}

/// Independent seed for the `k`-th sub-run of a seeded study.
pub fn derive_seed(seed: u64, k: u64) -> u64 {
    // splitmix64 finaliser
    let mut z = seed ^ k.wrapping_add(1).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Optics and detectors between the source and the time tagger.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Chain {
    pub optics: OpticsConfig,
    pub mode: RoutingMode,
    pub detector: DetectorModel,
}

impl Chain {
    /// Population measurement with the reference losses and detectors.
    pub fn reference_populations() -> Self {
        Chain { optics: OpticsConfig::default(), mode: RoutingMode::Population, detector: reference_detector() }
    }

    /// Two detectors behind a lossless 50:50 beamsplitter.
    pub fn hbt(efficiency: f64) -> Self {
        Chain {
            optics: OpticsConfig { mz_loss: 0.0, ..OpticsConfig::default() },
            mode: RoutingMode::Population,
            detector: DetectorModel::new(efficiency),
        }
    }

    /// Overall probability that an emitted photon is detected.
    pub fn lumped_efficiency(&self) -> f64 {
        (1.0 - self.optics.mz_loss) * self.detector.efficiency
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RunStats {
    pub emitted: u64,
    pub detected_h: u64,
    pub detected_v: u64,
    pub syncs: u64,
    pub duration_ps: u64,
}

impl RunStats {
    pub fn duration_s(&self) -> f64 {
        self.duration_ps as f64 / PS_PER_S
    }

    pub fn detected_rate(&self) -> f64 {
        (self.detected_h + self.detected_v) as f64 / self.duration_s()
    }
}

/// Streaming chunk length: one millisecond of acquisition.
pub const CHUNK_PS: u64 = 1_000_000_000;

/// Pushes a source through the chain, handing detected tags to `sink` in
/// time order. The second argument of `sink` is a time before which no
/// further tags will arrive.
pub fn run_chain<S, F>(source: &mut S, chain: &Chain, duration_ps: u64, seed: u64, mut sink: F) -> Result<RunStats>
where
    S: TagSource + ?Sized,
    F: FnMut(&[TimeTag], u64),
{
    if duration_ps == 0 {
        return Err(Error::InvalidParameter("duration must be positive".into()));
    }
    let mut router = Router::new(&chain.optics, chain.mode, seed)?;
    let mut det = DetectorChain::new(&chain.detector, &[Channel::DH, Channel::DV], DEFAULT_RESOLUTION_PS, seed)?;
    let mut stats = RunStats { duration_ps, ..RunStats::default() };
    let (mut raw, mut routed, mut out) = (Vec::new(), Vec::new(), Vec::new());
    let count = |tags: &[TimeTag], stats: &mut RunStats| {
        for t in tags {
            match t.channel {
                Channel::DH => stats.detected_h += 1,
                Channel::DV => stats.detected_v += 1,
                Channel::Sync => stats.syncs += 1,
                Channel::Aux => {}
            }
        }
    };
    let mut horizon = 0;
    while horizon < duration_ps {
        // tags exactly at the duration still belong to the acquisition
        horizon = (horizon + CHUNK_PS).min(duration_ps);
        let until = if horizon == duration_ps { duration_ps + 1 } else { horizon };
        raw.clear();
        routed.clear();
        out.clear();
        source.fill(until, &mut raw);
        stats.emitted += raw.iter().filter(|t| t.channel == Channel::Aux).count() as u64;
        router.route(&raw, &mut routed);
        det.process(&routed, until, &mut out);
        count(&out, &mut stats);
        sink(&out, until.saturating_sub(det.margin()));
    }
    out.clear();
    det.finish(duration_ps, &mut out);
    count(&out, &mut stats);
    sink(&out, u64::MAX);
    Ok(stats)
}

fn duration_ps(duration_s: f64) -> Result<u64> {
    if !(duration_s.is_finite() && duration_s > 0.0) {
        return Err(Error::InvalidParameter(format!("duration {duration_s} s must be positive")));
    }
    Ok((duration_s * PS_PER_S).round() as u64)
}

/// Cross-correlation of DH and DV for a CW-driven emitter.
pub fn g2_measurement(
    model: &EmitterModel,
    chain: &Chain,
    duration_s: f64,
    seed: u64,
    width_ns: f64,
    tau_max_ns: f64,
) -> Result<(G2Histogram, RunStats)> {
    let d = duration_ps(duration_s)?;
    let mut source = CwSource::new(model, DEFAULT_RESOLUTION_PS, seed)?;
    let mut acc = G2Accumulator::new(Channel::DH, Channel::DV, width_ns, tau_max_ns)?;
    let stats = run_chain(&mut source, chain, d, seed, |tags, h| acc.push(tags, h))?;
    Ok((acc.finish(d)?, stats))
}

/// Detected window populations for a CW-driven emitter.
pub fn population_measurement(
    model: &EmitterModel,
    chain: &Chain,
    duration_s: f64,
    seed: u64,
    windows_ns: &[f64],
) -> Result<(Vec<PopulationEstimate>, RunStats)> {
    let d = duration_ps(duration_s)?;
    let mut source = CwSource::new(model, DEFAULT_RESOLUTION_PS, seed)?;
    let mut counter = WindowPopulationCounter::new(windows_ns, DEFAULT_RESOLUTION_PS)?;
    let stats = run_chain(&mut source, chain, d, seed, |tags, _| counter.push(tags))?;
    Ok((counter.finish(d), stats))
}

/// Detected window populations for weak coherent light of `rate_per_s`.
pub fn coherent_population_measurement(
    rate_per_s: f64,
    chain: &Chain,
    duration_s: f64,
    seed: u64,
    windows_ns: &[f64],
) -> Result<(Vec<PopulationEstimate>, RunStats)> {
    if !(rate_per_s.is_finite() && rate_per_s > 0.0) {
        return Err(Error::InvalidParameter("coherent rate must be positive".into()));
    }
    let d = duration_ps(duration_s)?;
    let mut source = PoissonSource::new(rate_per_s, Channel::Aux, DEFAULT_RESOLUTION_PS, rng_for(seed, 0));
    let mut counter = WindowPopulationCounter::new(windows_ns, DEFAULT_RESOLUTION_PS)?;
    let stats = run_chain(&mut source, chain, d, seed, |tags, _| counter.push(tags))?;
    Ok((counter.finish(d), stats))
}

/// Sums the window counts of independent runs with the same window grid.
pub fn combine_populations(runs: &[Vec<PopulationEstimate>]) -> Result<Vec<PopulationEstimate>> {
    let first = runs.first().ok_or_else(|| Error::EmptyInput("no runs to combine".into()))?;
    let mut out = Vec::with_capacity(first.len());
    for (i, e) in first.iter().enumerate() {
        let (mut count, mut n1, mut n2, mut multi) = (0, 0, 0, 0);
        for run in runs {
            let r = run.get(i).filter(|r| r.window_ns == e.window_ns).ok_or_else(|| {
                Error::InvalidParameter("runs do not share a window grid".into())
            })?;
            count += r.window_count;
            n1 += r.n1;
            n2 += r.n2;
            multi += r.same_channel_multi;
        }
        out.push(crate::analysis::estimate_from_counts(e.window_ns, count, n1, n2, multi));
    }
    Ok(out)
}

/// HWP scan with a CW-driven emitter: one acquisition of `point_s` seconds
/// per angle.
pub fn visibility_scan(
    model: &EmitterModel,
    optics: &OpticsConfig,
    detector: &DetectorModel,
    angles_deg: &[f64],
    point_s: f64,
    seed: u64,
) -> Result<Vec<ScanPoint>> {
    let d = duration_ps(point_s)?;
    angles_deg
        .iter()
        .enumerate()
        .map(|(k, &theta)| {
            let s = derive_seed(seed, k as u64);
            let chain = Chain {
                optics: OpticsConfig { hwp_angle_deg: theta, ..*optics },
                mode: RoutingMode::VisibilityScan,
                detector: *detector,
            };
            let mut source = CwSource::new(model, DEFAULT_RESOLUTION_PS, s)?;
            let stats = run_chain(&mut source, &chain, d, s, |_, _| {})?;
            Ok(ScanPoint { theta_deg: theta, n_h: stats.detected_h, n_v: stats.detected_v })
        })
        .collect()
}

/// SYNC-referenced decay histogram of a pulsed emitter seen by one detector.
///
/// Background is added so that the photon stream keeps the emitter's
/// signal fraction.
pub fn lifetime_measurement(
    model: &EmitterModel,
    cfg: &ExcitationConfig,
    detector: &DetectorModel,
    bin_ps: u64,
) -> Result<(LifetimeHistogram, RunStats)> {
    let signal = cfg.pulse_rate_mhz * 1e6 * cfg.excitation_probability;
    let mut source = PulsedSource::new(model, cfg, model.background_rate_for(signal))?;
    let chain = Chain {
        optics: OpticsConfig { mz_loss: 0.0, split_ratio: 0.0, ..OpticsConfig::default() },
        mode: RoutingMode::Population,
        detector: *detector,
    };
    let mut acc = LifetimeAccumulator::new(bin_ps, cfg.pulse_period_ps())?;
    let stats = run_chain(&mut source, &chain, cfg.duration_ps(), cfg.seed, |tags, _| acc.push(tags))?;
    Ok((acc.finish(), stats))
}
