//! Shared vocabulary: time tags, parameter bundles and result records.
//!
//! All times on the wire are integer picoseconds from acquisition start.
//! Rates in the emitter and fit models are per nanosecond, matching how the
//! correlation curves are usually quoted.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const PS_PER_NS: f64 = 1_000.0;
pub const PS_PER_S: f64 = 1e12;
pub const DEFAULT_RESOLUTION_PS: u64 = 25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[repr(u8)]
pub enum Channel {
    DH = 0,
    DV = 1,
    Sync = 2,
    Aux = 3,
}

impl Channel {
    pub const ALL: [Channel; 4] = [Channel::DH, Channel::DV, Channel::Sync, Channel::Aux];

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Channel> {
        match code {
            0 => Some(Channel::DH),
            1 => Some(Channel::DV),
            2 => Some(Channel::Sync),
            3 => Some(Channel::Aux),
            _ => None,
        }
    }

    /// Detector-facing channels carry photons; SYNC is an electronic marker.
    pub fn is_photon(self) -> bool {
        self != Channel::Sync
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Channel::DH => "DH",
            Channel::DV => "DV",
            Channel::Sync => "SYNC",
            Channel::Aux => "AUX",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TimeTag {
    pub time: u64,
    pub channel: Channel,
}

impl TimeTag {
    pub fn new(time: u64, channel: Channel) -> Self {
        TimeTag { time, channel }
    }
}

/// A rule broken by a [`TagStream`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Violation {
    ZeroResolution,
    OutOfOrder { index: usize },
    ExceedsDuration { index: usize },
    NotQuantized { index: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::ZeroResolution => write!(f, "resolution must be positive"),
            Violation::OutOfOrder { index } => write!(f, "out-of-order at index {index}"),
            Violation::ExceedsDuration { index } => {
                write!(f, "time exceeds duration at index {index}")
            }
            Violation::NotQuantized { index } => {
                write!(f, "time not a multiple of resolution at index {index}")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TagStream {
    pub tags: Vec<TimeTag>,
    pub duration: u64,
    pub resolution: u64,
}

impl TagStream {
    /// Builds a stream and rejects it if any invariant fails.
    pub fn new(tags: Vec<TimeTag>, duration: u64, resolution: u64) -> Result<Self> {
        let stream = TagStream { tags, duration, resolution };
        match validate_stream(&stream).first() {
            None => Ok(stream),
            Some(v) => Err(Error::InvalidParameter(v.to_string())),
        }
    }

    pub fn empty(duration: u64, resolution: u64) -> Self {
        TagStream { tags: Vec::new(), duration, resolution }
    }

    pub fn len(&self) -> usize {
        self.tags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tags.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.duration as f64 / PS_PER_S
    }

    pub fn count(&self, channel: Channel) -> usize {
        self.tags.iter().filter(|t| t.channel == channel).count()
    }

    pub fn times(&self, channel: Channel) -> Vec<u64> {
        self.tags
            .iter()
            .filter(|t| t.channel == channel)
            .map(|t| t.time)
            .collect()
    }

    /// Sub-stream holding only `channel`.
    pub fn select(&self, channel: Channel) -> TagStream {
        TagStream {
            tags: self.tags.iter().copied().filter(|t| t.channel == channel).collect(),
            duration: self.duration,
            resolution: self.resolution,
        }
    }

    /// Time-ordered merge. Equal times keep `self` first.
    pub fn merge(&self, other: &TagStream) -> TagStream {
        TagStream {
            tags: merge_sorted(&self.tags, &other.tags),
            duration: self.duration.max(other.duration),
            resolution: self.resolution.min(other.resolution).max(1),
        }
    }
}

pub(crate) fn merge_sorted(a: &[TimeTag], b: &[TimeTag]) -> Vec<TimeTag> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        if b[j].time < a[i].time {
            out.push(b[j]);
            j += 1;
        } else {
            out.push(a[i]);
            i += 1;
        }
    }
    out.extend_from_slice(&a[i..]);
    out.extend_from_slice(&b[j..]);
    out
}

/// Lists every broken [`TagStream`] invariant; empty means valid.
pub fn validate_stream(stream: &TagStream) -> Vec<Violation> {
    let mut out = Vec::new();
    if stream.resolution == 0 {
        out.push(Violation::ZeroResolution);
    }
    let mut prev = 0u64;
    for (index, tag) in stream.tags.iter().enumerate() {
        if index > 0 && tag.time < prev {
            out.push(Violation::OutOfOrder { index });
        }
        if tag.time > stream.duration {
            out.push(Violation::ExceedsDuration { index });
        }
        if stream.resolution > 0 && tag.time % stream.resolution != 0 {
            out.push(Violation::NotQuantized { index });
        }
        prev = tag.time;
    }
    out
}

/// Three-level emitter rates, all in events per nanosecond.
///
/// State 1 is the ground state, 2 the radiating excited state and 3 the
/// metastable shelf. `rho` is the signal share S/(S+B) of the collected light.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmitterModel {
    pub r12: f64,
    pub r21: f64,
    pub r23: f64,
    pub r31: f64,
    pub rho: f64,
    /// Total collected photon flux (signal plus background) in photons/s.
    pub mean_flux: f64,
}

impl EmitterModel {
    /// Builds a model and fills `mean_flux` from the stationary emission rate.
    pub fn new(r12: f64, r21: f64, r23: f64, r31: f64, rho: f64) -> Result<Self> {
        let mut m = EmitterModel { r12, r21, r23, r31, rho, mean_flux: 0.0 };
        m.validate()?;
        m.mean_flux = m.signal_rate_per_ns() * 1e9 / rho;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        let rates = [self.r12, self.r21, self.r23, self.r31];
        if rates.iter().any(|r| !r.is_finite() || *r < 0.0) {
            return Err(Error::InvalidParameter(format!(
                "emitter rates must be finite and non-negative: {rates:?}"
            )));
        }
        if self.r21 <= 0.0 {
            return Err(Error::InvalidParameter("r21 must be positive".into()));
        }
        if !(self.rho > 0.0 && self.rho <= 1.0) {
            return Err(Error::InvalidParameter(format!("rho {} outside (0, 1]", self.rho)));
        }
        if self.r23 > 0.0 && self.r31 <= 0.0 {
            return Err(Error::InvalidParameter(
                "shelving without deshelving traps the emitter".into(),
            ));
        }
        Ok(())
    }

    /// Stationary populations (n1, n2, n3) under continuous pumping.
    pub fn stationary_populations(&self) -> (f64, f64, f64) {
        if self.r12 == 0.0 {
            return (1.0, 0.0, 0.0);
        }
        let shelf = if self.r23 > 0.0 { self.r23 / self.r31 } else { 0.0 };
        let n2 = 1.0 / ((self.r21 + self.r23) / self.r12 + 1.0 + shelf);
        let n1 = n2 * (self.r21 + self.r23) / self.r12;
        (n1, n2, n2 * shelf)
    }

    /// Photon emission rate (per ns) in steady state.
    pub fn signal_rate_per_ns(&self) -> f64 {
        self.r21 * self.stationary_populations().1
    }

    /// Background rate (per ns) that makes S/(S+B) equal `rho` for signal rate `s`.
    pub fn background_rate_for(&self, s: f64) -> f64 {
        s * (1.0 - self.rho) / self.rho
    }
}

/// Parameters of the bunching/antibunching correlation curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct G2Model {
    pub beta: f64,
    /// Fast (antibunching) rate, 1/ns.
    pub gamma1: f64,
    /// Slow (shelving) rate, 1/ns.
    pub gamma2: f64,
    pub rho: f64,
}

impl G2Model {
    pub fn validate(&self) -> Result<()> {
        let ok = self.beta > 0.0
            && self.beta.is_finite()
            && self.gamma1.is_finite()
            && self.gamma2 >= 0.0
            && self.gamma1 > self.gamma2
            && self.rho > 0.0
            && self.rho <= 1.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("invalid g2 model {self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorModel {
    pub efficiency: f64,
    pub dead_time_ps: u64,
    pub jitter_fwhm_ps: f64,
    pub dark_rate_per_s: f64,
}

impl DetectorModel {
    pub const DEFAULT_DEAD_TIME_PS: u64 = 24_000;
    pub const DEFAULT_JITTER_FWHM_PS: f64 = 350.0;

    pub fn new(efficiency: f64) -> Self {
        DetectorModel {
            efficiency,
            dead_time_ps: Self::DEFAULT_DEAD_TIME_PS,
            jitter_fwhm_ps: Self::DEFAULT_JITTER_FWHM_PS,
            dark_rate_per_s: 0.0,
        }
    }

    /// Perfect detector: no loss, no jitter, no dead time, no dark counts.
    pub fn ideal() -> Self {
        DetectorModel { efficiency: 1.0, dead_time_ps: 0, jitter_fwhm_ps: 0.0, dark_rate_per_s: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.efficiency > 0.0 && self.efficiency <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "detector efficiency {} outside (0, 1]",
                self.efficiency
            )));
        }
        if !(self.jitter_fwhm_ps >= 0.0 && self.jitter_fwhm_ps.is_finite()) {
            return Err(Error::InvalidParameter("jitter must be finite and >= 0".into()));
        }
        if !(self.dark_rate_per_s >= 0.0 && self.dark_rate_per_s.is_finite()) {
            return Err(Error::InvalidParameter("dark rate must be finite and >= 0".into()));
        }
        Ok(())
    }

    /// Gaussian sigma from the FWHM.
    pub fn jitter_sigma_ps(&self) -> f64 {
        self.jitter_fwhm_ps / 2.355
    }
}

/// Binned, normalised cross-correlation of two detector channels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct G2Histogram {
    pub bin_width_ns: f64,
    pub tau_max_ns: f64,
    pub counts: Vec<u64>,
    pub g2: Vec<f64>,
    pub stderr: Vec<f64>,
    pub n1: u64,
    pub n2: u64,
    pub duration_s: f64,
}

impl G2Histogram {
    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    /// Left edge of bin `i` in ns.
    pub fn bin_start_ns(&self, i: usize) -> f64 {
        -self.tau_max_ns + i as f64 * self.bin_width_ns
    }

    pub fn bin_center_ns(&self, i: usize) -> f64 {
        self.bin_start_ns(i) + 0.5 * self.bin_width_ns
    }

    /// Index of the bin holding zero delay, i.e. `[0, w)`.
    pub fn zero_bin(&self) -> usize {
        (self.tau_max_ns / self.bin_width_ns).round() as usize
    }

    pub fn total_counts(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// Zero/one/two-photon probabilities with standard errors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Populations {
    pub p0: f64,
    pub p1: f64,
    pub p2: f64,
    pub p0_err: f64,
    pub p1_err: f64,
    pub p2_err: f64,
}

impl Populations {
    pub fn sum(&self) -> f64 {
        self.p0 + self.p1 + self.p2
    }
}

/// Window-classified photon populations, as detected and after loss inversion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationEstimate {
    pub window_ns: f64,
    pub window_count: u64,
    pub n0: u64,
    pub n1: u64,
    pub n2: u64,
    pub detected: Populations,
    pub corrected: Option<Populations>,
    /// Set when loss inversion produced a negative p1 or p2 that was clamped.
    pub clamped: bool,
    /// Windows holding two or more tags on a single detector. They are
    /// classified by channel occupancy like any other window.
    pub same_channel_multi: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConcurrenceResult {
    pub window_ns: f64,
    pub visibility: f64,
    pub visibility_err: f64,
    pub yc: f64,
    pub yc_err: f64,
    pub c_n: f64,
    pub c_n_err: f64,
    /// Concurrence over the full state, (V - sqrt(yc)) p1 / p clamped at zero.
    pub concurrence: f64,
    /// Lower bound p * C on the total entanglement.
    pub total_lower_bound: f64,
    pub clamped: bool,
}
