//! Kinetic Monte Carlo of a three-level emitter with a Poissonian background.
//!
//! The sources here are incremental: [`TagSource::fill`] appends every tag
//! earlier than a horizon, so arbitrarily long acquisitions can be streamed
//! through the optics and detector stages chunk by chunk. The batch
//! functions [`simulate_cw`] and [`simulate_pulsed`] wrap them.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, Geometric};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Channel, EmitterModel, G2Model, TagStream, TimeTag, DEFAULT_RESOLUTION_PS, PS_PER_NS, PS_PER_S};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExcitationMode {
    Cw,
    Pulsed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExcitationConfig {
    pub mode: ExcitationMode,
    /// Laser repetition rate in MHz (pulsed mode only).
    pub pulse_rate_mhz: f64,
    /// Chance that a pulse lifts a ground-state emitter (pulsed mode only).
    pub excitation_probability: f64,
    pub duration_s: f64,
    pub seed: u64,
    pub resolution_ps: u64,
}

impl ExcitationConfig {
    pub const DEFAULT_PULSE_RATE_MHZ: f64 = 23.8;

    pub fn cw(duration_s: f64, seed: u64) -> Self {
        ExcitationConfig {
            mode: ExcitationMode::Cw,
            pulse_rate_mhz: Self::DEFAULT_PULSE_RATE_MHZ,
            excitation_probability: 1.0,
            duration_s,
            seed,
            resolution_ps: DEFAULT_RESOLUTION_PS,
        }
    }

    pub fn pulsed(duration_s: f64, excitation_probability: f64, seed: u64) -> Self {
        ExcitationConfig {
            mode: ExcitationMode::Pulsed,
            excitation_probability,
            ..Self::cw(duration_s, seed)
        }
    }

    pub fn duration_ps(&self) -> u64 {
        (self.duration_s * PS_PER_S).round() as u64
    }

    /// Pulse period rounded to the nearest picosecond.
    pub fn pulse_period_ps(&self) -> u64 {
        (1e6 / self.pulse_rate_mhz).round() as u64
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.duration_s.is_finite() && self.duration_s > 0.0) || self.duration_ps() == 0 {
            return Err(Error::InvalidParameter("simulation duration must be positive".into()));
        }
        if self.resolution_ps == 0 {
            return Err(Error::InvalidParameter("resolution must be positive".into()));
        }
        if self.mode == ExcitationMode::Pulsed {
            if !(self.pulse_rate_mhz.is_finite() && self.pulse_rate_mhz > 0.0) || self.pulse_period_ps() == 0 {
                return Err(Error::InvalidParameter("pulsed mode needs a positive pulse rate".into()));
            }
            if !(0.0..=1.0).contains(&self.excitation_probability) {
                return Err(Error::InvalidParameter("excitation probability outside [0, 1]".into()));
            }
        }
        Ok(())
    }
}

/// Anything that can emit time-ordered tags up to a horizon.
pub trait TagSource {
    /// Appends, in time order, every not yet emitted tag with time `< until`.
    fn fill(&mut self, until: u64, out: &mut Vec<TimeTag>);
}

/// Picosecond clock: exact integer part plus a sub-picosecond remainder, so
/// long runs do not lose precision the way an `f64` absolute time would.
#[derive(Debug, Clone, Copy, Default)]
struct Clock {
    whole: u64,
    frac: f64,
}

impl Clock {
    fn at(ps: u64) -> Self {
        Clock { whole: ps, frac: 0.0 }
    }

    fn advance(&mut self, dt_ps: f64) {
        let x = self.frac + dt_ps;
        let w = x.floor();
        self.whole = self.whole.saturating_add(w as u64);
        self.frac = x - w;
    }
}

fn quantize(t: u64, res: u64) -> u64 {
    t - t % res
}

pub(crate) fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Level {
    Ground,
    Excited,
    Shelf,
}

/// Homogeneous Poisson arrivals on one channel.
#[derive(Debug, Clone)]
pub struct PoissonSource {
    /// Mean spacing in ps; infinite for a zero rate.
    mean_ps: f64,
    channel: Channel,
    resolution: u64,
    clock: Clock,
    pending: Option<u64>,
    rng: ChaCha8Rng,
}

impl PoissonSource {
    pub fn new(rate_per_s: f64, channel: Channel, resolution: u64, rng: ChaCha8Rng) -> Self {
        let mut s = PoissonSource {
            mean_ps: PS_PER_S / rate_per_s,
            channel,
            resolution: resolution.max(1),
            clock: Clock::default(),
            pending: None,
            rng,
        };
        s.pending = s.draw();
        s
    }

    fn draw(&mut self) -> Option<u64> {
        if !(self.mean_ps > 0.0 && self.mean_ps < f64::INFINITY) {
            return None;
        }
        let e: f64 = self.rng.sample(Exp1);
        self.clock.advance(e * self.mean_ps);
        Some(quantize(self.clock.whole, self.resolution))
    }
}

impl TagSource for PoissonSource {
    fn fill(&mut self, until: u64, out: &mut Vec<TimeTag>) {
        while let Some(t) = self.pending {
            if t >= until {
                break;
            }
            out.push(TimeTag::new(t, self.channel));
            self.pending = self.draw();
        }
    }
}

/// Mean dwell times (ps) and branching of the three-level cycle.
#[derive(Debug, Clone, Copy)]
struct Dwell {
    ground: f64,
    excited: f64,
    shelf: f64,
    /// Probability that an excited-state exit is radiative.
    radiative: f64,
}

impl Dwell {
    fn new(m: &EmitterModel) -> Self {
        let out = m.r21 + m.r23;
        Dwell {
            ground: PS_PER_NS / m.r12,
            excited: PS_PER_NS / out,
            shelf: if m.r31 > 0.0 { PS_PER_NS / m.r31 } else { f64::INFINITY },
            radiative: m.r21 / out,
        }
    }
}

/// Continuous-wave driven three-level emitter plus background, both on AUX.
#[derive(Debug, Clone)]
pub struct CwSource {
    model: EmitterModel,
    dwell: Dwell,
    resolution: u64,
    clock: Clock,
    level: Level,
    pending: Option<u64>,
    rng: ChaCha8Rng,
    background: PoissonSource,
    scratch: Vec<TimeTag>,
}

impl CwSource {
    /// Background rate is set from the model's stationary emission rate.
    pub fn new(model: &EmitterModel, resolution: u64, seed: u64) -> Result<Self> {
        let bg = model.background_rate_for(model.signal_rate_per_ns()) * 1e9;
        Self::with_background(model, resolution, seed, bg)
    }

    pub fn with_background(model: &EmitterModel, resolution: u64, seed: u64, background_per_s: f64) -> Result<Self> {
        model.validate()?;
        if resolution == 0 {
            return Err(Error::InvalidParameter("resolution must be positive".into()));
        }
        let mut s = CwSource {
            model: *model,
            dwell: Dwell::new(model),
            resolution,
            clock: Clock::default(),
            level: Level::Ground,
            pending: None,
            rng: rng_for(seed, 0),
            background: PoissonSource::new(background_per_s, Channel::Aux, resolution, rng_for(seed, 1)),
            scratch: Vec::new(),
        };
        s.pending = s.next_emission();
        Ok(s)
    }

    fn wait(&mut self, mean_ps: f64) {
        let e: f64 = self.rng.sample(Exp1);
        self.clock.advance(e * mean_ps);
    }

    fn next_emission(&mut self) -> Option<u64> {
        if self.model.r12 <= 0.0 {
            return None;
        }
        let d = self.dwell;
        loop {
            match self.level {
                Level::Ground => {
                    self.wait(d.ground);
                    self.level = Level::Excited;
                }
                Level::Excited => {
                    self.wait(d.excited);
                    if d.radiative == 1.0 || self.rng.random::<f64>() < d.radiative {
                        self.level = Level::Ground;
                        return Some(quantize(self.clock.whole, self.resolution));
                    }
                    self.level = Level::Shelf;
                }
                Level::Shelf => {
                    self.wait(d.shelf);
                    self.level = Level::Ground;
                }
            }
        }
    }

    /// Emitter photons only, without background.
    pub fn fill_signal(&mut self, until: u64, out: &mut Vec<TimeTag>) {
        while let Some(t) = self.pending {
            if t >= until {
                break;
            }
            out.push(TimeTag::new(t, Channel::Aux));
            self.pending = self.next_emission();
        }
    }
}

impl TagSource for CwSource {
    fn fill(&mut self, until: u64, out: &mut Vec<TimeTag>) {
        let start = out.len();
        self.fill_signal(until, out);
        self.scratch.clear();
        self.background.fill(until, &mut self.scratch);
        if !self.scratch.is_empty() {
            let merged = crate::model::merge_sorted(&out[start..], &self.scratch);
            out.truncate(start);
            out.extend_from_slice(&merged);
        }
    }
}

/// Pulse-driven emitter: SYNC at every pulse, photons and background on AUX.
#[derive(Debug, Clone)]
pub struct PulsedSource {
    model: EmitterModel,
    resolution: u64,
    period: u64,
    excitation: Option<Geometric>,
    next_sync: u64,
    clock: Clock,
    level: Level,
    pending: Option<u64>,
    rng: ChaCha8Rng,
    background: PoissonSource,
    scratch: Vec<TimeTag>,
}

impl PulsedSource {
    pub fn new(model: &EmitterModel, cfg: &ExcitationConfig, background_per_s: f64) -> Result<Self> {
        model.validate()?;
        cfg.validate()?;
        let excitation = if cfg.excitation_probability > 0.0 {
            Some(Geometric::new(cfg.excitation_probability).map_err(|e| Error::InvalidParameter(e.to_string()))?)
        } else {
            None
        };
        let mut s = PulsedSource {
            model: *model,
            resolution: cfg.resolution_ps,
            period: cfg.pulse_period_ps(),
            excitation,
            next_sync: 0,
            clock: Clock::default(),
            level: Level::Ground,
            pending: None,
            rng: rng_for(cfg.seed, 0),
            background: PoissonSource::new(background_per_s, Channel::Aux, cfg.resolution_ps, rng_for(cfg.seed, 1)),
            scratch: Vec::new(),
        };
        s.pending = s.next_emission();
        Ok(s)
    }

    fn wait(&mut self, rate_per_ns: f64) {
        let e: f64 = self.rng.sample(Exp1);
        self.clock.advance(e * PS_PER_NS / rate_per_ns);
    }

    fn next_emission(&mut self) -> Option<u64> {
        let m = self.model;
        loop {
            match self.level {
                Level::Ground => {
                    let geo = self.excitation?;
                    // first pulse at or after the current time, then skip failed pulses
                    let t = self.clock.whole + u64::from(self.clock.frac > 0.0);
                    let first = t.div_ceil(self.period);
                    let skipped = self.rng.sample(geo);
                    let pulse = first.saturating_add(skipped);
                    self.clock = Clock::at(pulse.saturating_mul(self.period));
                    self.level = Level::Excited;
                }
                Level::Excited => {
                    let out = m.r21 + m.r23;
                    self.wait(out);
                    if m.r23 == 0.0 || self.rng.random::<f64>() * out < m.r21 {
                        self.level = Level::Ground;
                        return Some(quantize(self.clock.whole, self.resolution));
                    }
                    self.level = Level::Shelf;
                }
                Level::Shelf => {
                    self.wait(m.r31);
                    self.level = Level::Ground;
                }
            }
        }
    }
}

impl TagSource for PulsedSource {
    fn fill(&mut self, until: u64, out: &mut Vec<TimeTag>) {
        self.scratch.clear();
        while let Some(t) = self.pending {
            if t >= until {
                break;
            }
            self.scratch.push(TimeTag::new(t, Channel::Aux));
            self.pending = self.next_emission();
        }
        let mut bg = Vec::new();
        self.background.fill(until, &mut bg);
        let photons = crate::model::merge_sorted(&self.scratch, &bg);

        let mut syncs = Vec::new();
        while self.next_sync < until {
            syncs.push(TimeTag::new(quantize(self.next_sync, self.resolution), Channel::Sync));
            self.next_sync += self.period;
        }
        // SYNC first on ties so a photon at a pulse time belongs to that pulse
        out.extend(crate::model::merge_sorted(&syncs, &photons));
    }
}

fn check_cw(model: &EmitterModel, cfg: &ExcitationConfig) -> Result<()> {
    model.validate()?;
    cfg.validate()?;
    if cfg.mode != ExcitationMode::Cw {
        return Err(Error::InvalidParameter("simulate_cw needs a CW excitation config".into()));
    }
    Ok(())
}

/// Raw CW emission stream on AUX. The background rate is matched to the
/// realised signal rate so that S/(S+B) = rho for this particular run.
pub fn simulate_cw(model: &EmitterModel, cfg: &ExcitationConfig) -> Result<TagStream> {
    check_cw(model, cfg)?;
    let duration = cfg.duration_ps();
    let mut source = CwSource::with_background(model, cfg.resolution_ps, cfg.seed, 0.0)?;
    let mut signal = Vec::new();
    source.fill_signal(duration, &mut signal);

    let realised = signal.len() as f64 / cfg.duration_s;
    let mut bg = Vec::new();
    PoissonSource::new(model.background_rate_for(realised), Channel::Aux, cfg.resolution_ps, rng_for(cfg.seed, 1))
        .fill(duration, &mut bg);

    Ok(TagStream {
        tags: crate::model::merge_sorted(&signal, &bg),
        duration,
        resolution: cfg.resolution_ps,
    })
}

/// Pulsed emission stream: SYNC tags at every pulse plus AUX photons, with
/// the background matched to the realised signal rate as in [`simulate_cw`].
pub fn simulate_pulsed(model: &EmitterModel, cfg: &ExcitationConfig) -> Result<TagStream> {
    model.validate()?;
    cfg.validate()?;
    if cfg.mode != ExcitationMode::Pulsed {
        return Err(Error::InvalidParameter("simulate_pulsed needs a pulsed excitation config".into()));
    }
    let duration = cfg.duration_ps();
    let mut source = PulsedSource::new(model, cfg, 0.0)?;
    let mut tags = Vec::new();
    source.fill(duration, &mut tags);

    let signal = tags.iter().filter(|t| t.channel == Channel::Aux).count();
    let realised = signal as f64 / cfg.duration_s;
    let mut bg = Vec::new();
    PoissonSource::new(model.background_rate_for(realised), Channel::Aux, cfg.resolution_ps, rng_for(cfg.seed, 1))
        .fill(duration, &mut bg);

    Ok(TagStream { tags: crate::model::merge_sorted(&tags, &bg), duration, resolution: cfg.resolution_ps })
}

/// Exact (beta, gamma1, gamma2) of the stationary correlation of a
/// three-level system started in the ground state.
///
/// The two non-zero relaxation rates are the roots of `x^2 - S x + Q` with
/// S the sum of rates and Q the sum of principal 2x2 minors of the rate
/// matrix; beta follows from g2(0) = 0 and the initial slope r12 / n2.
pub fn correlation_shape(model: &EmitterModel) -> Result<(f64, f64, f64)> {
    let EmitterModel { r12, r21, r23, r31, .. } = *model;
    if r12 <= 0.0 {
        return Err(Error::Undefined("no emission without pumping".into()));
    }
    let s = r12 + r21 + r23 + r31;
    let q = r12 * r23 + r12 * r31 + r21 * r31 + r23 * r31;
    let disc = (0.25 * s * s - q).max(0.0).sqrt();
    let g1 = 0.5 * s + disc;
    let g2 = q / g1;
    if g1 - g2 <= 0.0 {
        return Err(Error::Undefined("degenerate relaxation rates".into()));
    }
    let shelf = if r23 > 0.0 { r12 * r23 / r31 } else { 0.0 };
    let slope = r12 + r21 + r23 + shelf;
    Ok(((slope - g2) / (g1 - g2), g1, g2))
}

/// Rates reproducing the target correlation curve for a given pump rate.
///
/// With r12 fixed, the trace, the minor sum and the initial slope of the
/// rate matrix give three equations; eliminating r21 and r23 leaves r31 in
/// closed form, after which the forward model is checked against the target.
pub fn calibrate_rates(target: &G2Model, pump_hint: f64) -> Result<EmitterModel> {
    target.validate()?;
    if !(pump_hint.is_finite() && pump_hint > 0.0) {
        return Err(Error::InvalidParameter("pump rate must be positive".into()));
    }
    let G2Model { beta, gamma1: g1, gamma2: g2, rho } = *target;
    let r12 = pump_hint;
    let denom = beta * g1 + (1.0 - beta) * g2;
    let infeasible = |reason: &str, residual: f64| Error::Infeasible { reason: reason.into(), residual };
    if denom <= 0.0 {
        return Err(infeasible("beta too small for these rates", denom));
    }
    let r31 = g1 * g2 / denom;
    let d = (beta - 1.0) * g1 - beta * g2;
    let mut r23 = r31 * (d + r31) / r12;
    if r23.abs() < 1e-15 * g1 {
        r23 = 0.0;
    }
    if r23 < 0.0 {
        return Err(infeasible("negative shelving rate (beta < 1 needs r23 < 0)", r23));
    }
    let r21 = g1 + g2 - r12 - r31 - r23;
    if r21 <= 0.0 {
        return Err(infeasible("pump rate leaves no room for radiative decay", r21));
    }
    let model = EmitterModel::new(r12, r21, r23, r31, rho)?;
    let (b, f1, f2) = correlation_shape(&model)?;
    let residual = [(b, beta), (f1, g1), (f2, g2)]
        .iter()
        .map(|(got, want)| ((got - want) / want).abs())
        .fold(0.0, f64::max);
    if residual > 1e-3 {
        return Err(infeasible("forward check failed", residual));
    }
    Ok(model)
}

/// Pump rate (1/ns) at which a calibrated emitter radiates `signal_per_ns`.
///
/// Emission grows with pumping until the radiative rate is squeezed out, so
/// the lower-pump branch of the feasible interval is searched.
pub fn pump_for_signal_rate(target: &G2Model, signal_per_ns: f64) -> Result<f64> {
    target.validate()?;
    if !(signal_per_ns > 0.0) {
        return Err(Error::InvalidParameter("signal rate must be positive".into()));
    }
    let G2Model { beta, gamma1: g1, gamma2: g2, .. } = *target;
    let r31 = g1 * g2 / (beta * g1 + (1.0 - beta) * g2);
    let c = (r31 * ((beta - 1.0) * g1 - beta * g2 + r31)).max(0.0);
    // r21 > 0  <=>  r12^2 - (S - r31) r12 + c < 0
    let b = g1 + g2 - r31;
    let disc = b * b - 4.0 * c;
    if disc <= 0.0 {
        return Err(Error::Infeasible { reason: "no pump rate yields positive r21".into(), residual: disc });
    }
    let lo = 0.5 * (b - disc.sqrt());
    let hi = 0.5 * (b + disc.sqrt());
    let rate = |r12: f64| -> f64 {
        calibrate_rates(target, r12).map(|m| m.signal_rate_per_ns()).unwrap_or(0.0)
    };
    // golden-section search for the emission maximum
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    let (mut a, mut z) = (lo.max(1e-12), hi);
    for _ in 0..200 {
        let x1 = z - phi * (z - a);
        let x2 = a + phi * (z - a);
        if rate(x1) < rate(x2) {
            a = x1;
        } else {
            z = x2;
        }
    }
    let peak = 0.5 * (a + z);
    if rate(peak) < signal_per_ns {
        return Err(Error::Infeasible {
            reason: "requested emission rate exceeds the saturated rate".into(),
            residual: signal_per_ns - rate(peak),
        });
    }
    let (mut a, mut z) = (lo.max(1e-15), peak);
    for _ in 0..200 {
        let mid = 0.5 * (a + z);
        if rate(mid) < signal_per_ns {
            a = mid;
        } else {
            z = mid;
        }
    }
    Ok(0.5 * (a + z))
}
