//! Coincidence counting: the start-stop g² histogram and sync-referenced
//! decay histograms.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Channel, G2Histogram, TagStream, TimeTag, PS_PER_NS, PS_PER_S};

/// Bin layout for delays `Δ = t_b − t_a` in `[−τ_max, τ_max]`.
///
/// Bins are left-closed from `−τ_max`; a delay of exactly `+τ_max` lands in
/// the last bin.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Binning {
    pub width_ps: u64,
    pub tau_max_ps: u64,
}

impl Binning {
    pub fn new(width_ns: f64, tau_max_ns: f64) -> Result<Self> {
        if !(width_ns.is_finite() && width_ns > 0.0) {
            return Err(Error::InvalidParameter(format!("bin width {width_ns} ns must be positive")));
        }
        if !(tau_max_ns.is_finite() && tau_max_ns > 0.0) {
            return Err(Error::InvalidParameter(format!("tau max {tau_max_ns} ns must be positive")));
        }
        let width_ps = (width_ns * PS_PER_NS as f64).round() as u64;
        let tau_max_ps = (tau_max_ns * PS_PER_NS as f64).round() as u64;
        if width_ps == 0 || tau_max_ps % width_ps != 0 {
            return Err(Error::InvalidParameter(format!(
                "tau max {tau_max_ns} ns is not a multiple of the bin width {width_ns} ns"
            )));
        }
        Ok(Binning { width_ps, tau_max_ps })
    }

    pub fn nbins(&self) -> usize {
        (2 * self.tau_max_ps / self.width_ps) as usize
    }

    /// Bin for a delay, or `None` outside the range.
    #[inline]
    pub fn index(&self, delta: i64) -> Option<usize> {
        let tm = self.tau_max_ps as i64;
        if delta < -tm || delta > tm {
            return None;
        }
        let i = ((delta + tm) as u64 / self.width_ps) as usize;
        Some(i.min(self.nbins() - 1))
    }
}

/// Adds every pair `(t_a, t_b)` with `|t_b − t_a| ≤ τ_max` into `counts`.
///
/// Both slices must be sorted. Runs in O(|a| + |b| + matches).
pub fn accumulate_pairs(a: &[u64], b: &[u64], binning: &Binning, counts: &mut [u64]) {
    let tm = binning.tau_max_ps;
    let w = binning.width_ps;
    let last = counts.len() - 1;
    let mut lo = 0usize;
    for &tb in b {
        let start = tb.saturating_sub(tm);
        while lo < a.len() && a[lo] < start {
            lo += 1;
        }
        let end = tb.saturating_add(tm);
        let mut j = lo;
        while j < a.len() && a[j] <= end {
            // shift by τ_max so the delay is non-negative
            let shifted = tb + tm - a[j];
            let i = ((shifted / w) as usize).min(last);
            counts[i] += 1;
            j += 1;
        }
    }
}

fn pair_counts(a: &[u64], b: &[u64], binning: &Binning) -> Vec<u64> {
    let mut counts = vec![0u64; binning.nbins()];
    accumulate_pairs(a, b, binning, &mut counts);
    counts
}

/// Same result as [`pair_counts`], split over chunks of `b` and summed.
fn pair_counts_parallel(a: &[u64], b: &[u64], binning: &Binning, chunk: usize) -> Vec<u64> {
    let nb = binning.nbins();
    b.par_chunks(chunk.max(1))
        .map(|bc| {
            let lo = a.partition_point(|&t| t < bc[0].saturating_sub(binning.tau_max_ps));
            let hi = a.partition_point(|&t| t <= bc[bc.len() - 1].saturating_add(binning.tau_max_ps));
            pair_counts(&a[lo..hi], bc, binning)
        })
        .reduce(|| vec![0u64; nb], |mut x, y| {
            x.iter_mut().zip(&y).for_each(|(p, q)| *p += q);
            x
        })
}

/// Turns raw pair counts into a normalised histogram.
pub fn normalize_g2(counts: Vec<u64>, binning: &Binning, n1: u64, n2: u64, duration_ps: u64) -> Result<G2Histogram> {
    if n1 == 0 || n2 == 0 {
        return Err(Error::Undefined(format!("g2 normalisation needs counts on both channels (N1={n1}, N2={n2})")));
    }
    if duration_ps == 0 {
        return Err(Error::InvalidParameter("acquisition duration must be positive".into()));
    }
    if counts.len() != binning.nbins() {
        return Err(Error::InvalidParameter("count vector does not match the binning".into()));
    }
    let t = duration_ps as f64 / PS_PER_S;
    let w = binning.width_ps as f64 / PS_PER_S;
    // expected uncorrelated pairs per bin: N1 N2 w / T
    let norm = n1 as f64 * n2 as f64 * w / t;
    let g2: Vec<f64> = counts.iter().map(|&c| c as f64 / norm).collect();
    let stderr = counts
        .iter()
        .zip(&g2)
        .map(|(&c, &g)| if c > 0 { g / (c as f64).sqrt() } else { 1.0 / norm })
        .collect();
    Ok(G2Histogram {
        bin_width_ns: binning.width_ps as f64 / PS_PER_NS as f64,
        tau_max_ns: binning.tau_max_ps as f64 / PS_PER_NS as f64,
        counts,
        g2,
        stderr,
        n1,
        n2,
        duration_s: t,
    })
}

fn all_times(s: &TagStream) -> Vec<u64> {
    s.tags.iter().map(|t| t.time).collect()
}

fn check_pair(a: &TagStream, b: &TagStream) -> Result<()> {
    if a.duration != b.duration {
        return Err(Error::DurationMismatch(a.duration, b.duration));
    }
    Ok(())
}

/// g²(τ) between every tag of `a` (start) and every tag of `b` (stop).
pub fn estimate_g2(a: &TagStream, b: &TagStream, width_ns: f64, tau_max_ns: f64) -> Result<G2Histogram> {
    check_pair(a, b)?;
    let binning = Binning::new(width_ns, tau_max_ns)?;
    let (ta, tb) = (all_times(a), all_times(b));
    let counts = pair_counts(&ta, &tb, &binning);
    normalize_g2(counts, &binning, ta.len() as u64, tb.len() as u64, a.duration)
}

/// As [`estimate_g2`], parallelised over time chunks of the stop stream.
pub fn estimate_g2_parallel(
    a: &TagStream,
    b: &TagStream,
    width_ns: f64,
    tau_max_ns: f64,
    chunk: usize,
) -> Result<G2Histogram> {
    check_pair(a, b)?;
    let binning = Binning::new(width_ns, tau_max_ns)?;
    let (ta, tb) = (all_times(a), all_times(b));
    let counts = pair_counts_parallel(&ta, &tb, &binning, chunk);
    normalize_g2(counts, &binning, ta.len() as u64, tb.len() as u64, a.duration)
}

/// g² between two channels of one merged stream.
pub fn estimate_g2_channels(stream: &TagStream, a: Channel, b: Channel, width_ns: f64, tau_max_ns: f64) -> Result<G2Histogram> {
    let binning = Binning::new(width_ns, tau_max_ns)?;
    let (ta, tb) = (stream.times(a), stream.times(b));
    let counts = pair_counts(&ta, &tb, &binning);
    normalize_g2(counts, &binning, ta.len() as u64, tb.len() as u64, stream.duration)
}

/// Streaming g² over time-ordered chunks of a merged stream.
#[derive(Debug, Clone)]
pub struct G2Accumulator {
    binning: Binning,
    ch_a: Channel,
    ch_b: Channel,
    counts: Vec<u64>,
    hist_a: Vec<u64>,
    hist_b: Vec<u64>,
    new_a: Vec<u64>,
    new_b: Vec<u64>,
    n1: u64,
    n2: u64,
}

impl G2Accumulator {
    pub fn new(ch_a: Channel, ch_b: Channel, width_ns: f64, tau_max_ns: f64) -> Result<Self> {
        let binning = Binning::new(width_ns, tau_max_ns)?;
        Ok(G2Accumulator {
            binning,
            ch_a,
            ch_b,
            counts: vec![0; binning.nbins()],
            hist_a: Vec::new(),
            hist_b: Vec::new(),
            new_a: Vec::new(),
            new_b: Vec::new(),
            n1: 0,
            n2: 0,
        })
    }

    /// Adds a sorted chunk. Later chunks must not hold tags before `horizon`.
    pub fn push(&mut self, chunk: &[TimeTag], horizon: u64) {
        self.new_a.clear();
        self.new_b.clear();
        for t in chunk {
            if t.channel == self.ch_a {
                self.new_a.push(t.time);
            }
            if t.channel == self.ch_b {
                self.new_b.push(t.time);
            }
        }
        self.n1 += self.new_a.len() as u64;
        self.n2 += self.new_b.len() as u64;
        // old × new, new × old and new × new, each pair exactly once
        accumulate_pairs(&self.hist_a, &self.new_b, &self.binning, &mut self.counts);
        accumulate_pairs(&self.new_a, &self.new_b, &self.binning, &mut self.counts);
        accumulate_pairs(&self.new_a, &self.hist_b, &self.binning, &mut self.counts);
        self.hist_a.extend_from_slice(&self.new_a);
        self.hist_b.extend_from_slice(&self.new_b);
        let keep_from = horizon.saturating_sub(self.binning.tau_max_ps);
        for h in [&mut self.hist_a, &mut self.hist_b] {
            let k = h.partition_point(|&t| t < keep_from);
            h.drain(..k);
        }
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn finish(self, duration_ps: u64) -> Result<G2Histogram> {
        normalize_g2(self.counts, &self.binning, self.n1, self.n2, duration_ps)
    }
}

/// Histogram of photon delays after the most recent SYNC.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LifetimeHistogram {
    pub bin_ps: u64,
    pub period_ps: u64,
    pub counts: Vec<u64>,
    /// Photons seen before the first SYNC.
    pub before_first_sync: u64,
    /// Photons whose delay exceeded the period (a missing SYNC).
    pub overflow: u64,
}

impl LifetimeHistogram {
    pub fn bin_start_ns(&self, i: usize) -> f64 {
        (i as u64 * self.bin_ps) as f64 / PS_PER_NS as f64
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// Streaming decay histogram over time-ordered chunks.
#[derive(Debug, Clone)]
pub struct LifetimeAccumulator {
    hist: LifetimeHistogram,
    last_sync: Option<u64>,
}

impl LifetimeAccumulator {
    pub fn new(bin_ps: u64, period_ps: u64) -> Result<Self> {
        if bin_ps == 0 || period_ps == 0 {
            return Err(Error::InvalidParameter("bin and period must be positive".into()));
        }
        let nbins = period_ps.div_ceil(bin_ps) as usize;
        Ok(LifetimeAccumulator {
            hist: LifetimeHistogram { bin_ps, period_ps, counts: vec![0; nbins], before_first_sync: 0, overflow: 0 },
            last_sync: None,
        })
    }

    pub fn push(&mut self, chunk: &[TimeTag]) {
        let h = &mut self.hist;
        for t in chunk {
            if t.channel == Channel::Sync {
                self.last_sync = Some(t.time);
                continue;
            }
            match self.last_sync {
                None => h.before_first_sync += 1,
                Some(s) => {
                    let d = t.time - s;
                    if d >= h.period_ps {
                        h.overflow += 1;
                    } else {
                        h.counts[(d / h.bin_ps) as usize] += 1;
                    }
                }
            }
        }
    }

    pub fn finish(self) -> LifetimeHistogram {
        self.hist
    }
}

/// Decay histogram of all photon channels against SYNC.
///
/// The period is taken from the first two SYNC tags.
pub fn lifetime_histogram(stream: &TagStream, bin_ps: u64) -> Result<LifetimeHistogram> {
    if bin_ps < stream.resolution {
        return Err(Error::InvalidParameter(format!("bin {bin_ps} ps is finer than the resolution")));
    }
    let mut syncs = stream.tags.iter().filter(|t| t.channel == Channel::Sync).map(|t| t.time);
    let first = syncs.next().ok_or_else(|| Error::EmptyInput("no SYNC tags in stream".into()))?;
    let second = syncs
        .next()
        .ok_or_else(|| Error::EmptyInput("need at least two SYNC tags to infer the period".into()))?;
    lifetime_histogram_with_period(stream, bin_ps, second - first)
}

pub fn lifetime_histogram_with_period(stream: &TagStream, bin_ps: u64, period_ps: u64) -> Result<LifetimeHistogram> {
    let mut acc = LifetimeAccumulator::new(bin_ps, period_ps)?;
    acc.push(&stream.tags);
    Ok(acc.finish())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stream(times: &[u64], ch: Channel, duration: u64) -> TagStream {
        TagStream { tags: times.iter().map(|&t| TimeTag::new(t, ch)).collect(), duration, resolution: 25 }
    }

    #[test]
    fn single_pair_lands_in_plus_two_ns() {
        let a = stream(&[10_000], Channel::DH, 1_000_000);
        let b = stream(&[12_000], Channel::DV, 1_000_000);
        let h = estimate_g2(&a, &b, 1.0, 5.0).unwrap();
        assert_eq!(h.counts.len(), 10);
        let mut expect = vec![0; 10];
        expect[7] = 1; // [2, 3) ns
        assert_eq!(h.counts, expect);
        assert_eq!(h.bin_start_ns(7), 2.0);
    }

    #[test]
    fn boundary_delays_go_to_inner_bins() {
        let b = Binning::new(1.0, 5.0).unwrap();
        assert_eq!(b.index(-5000), Some(0));
        assert_eq!(b.index(5000), Some(9));
        assert_eq!(b.index(5001), None);
        assert_eq!(b.index(0), Some(5));
        assert_eq!(b.index(-1), Some(4));
    }

    #[test]
    fn width_must_divide_range() {
        assert!(Binning::new(0.3, 1.0).is_err());
        assert!(Binning::new(0.0, 1.0).is_err());
    }

    #[test]
    fn empty_channel_is_undefined() {
        let a = stream(&[], Channel::DH, 100);
        let b = stream(&[5], Channel::DV, 100);
        assert!(matches!(estimate_g2(&a, &b, 1.0, 5.0), Err(Error::Undefined(_))));
    }

    #[test]
    fn normalisation_is_exact() {
        let a = stream(&[1000, 2000], Channel::DH, 1_000_000);
        let b = stream(&[1500], Channel::DV, 1_000_000);
        let h = estimate_g2(&a, &b, 1.0, 2.0).unwrap();
        let norm = 2.0 * 1.0 * 1e-9 / 1e-6;
        for (c, g) in h.counts.iter().zip(&h.g2) {
            assert_eq!(*g, *c as f64 / norm);
        }
    }

    #[test]
    fn independent_poisson_streams_are_flat_at_one() {
        let relabel = |s: TagStream, ch| TagStream { tags: s.tags.iter().map(|t| TimeTag::new(t.time, ch)).collect(), ..s };
        let a = relabel(crate::optics::simulate_coherent(1e5, 2.0, 1).unwrap(), Channel::DH);
        let b = relabel(crate::optics::simulate_coherent(1e5, 2.0, 2).unwrap(), Channel::DV);
        let h = estimate_g2(&a, &b, 10.0, 200.0).unwrap();
        let mean = h.g2.iter().sum::<f64>() / h.len() as f64;
        // about 8e3 pairs in total
        assert!((mean - 1.0).abs() < 0.03, "mean g2 {mean}");
    }

    #[test]
    fn mirror_under_swap() {
        // no delay sits on a bin edge, so the mirror is exact
        let a = stream(&[0, 3125, 7075, 7150], Channel::DH, 20_000);
        let b = stream(&[1050, 2575, 9025], Channel::DV, 20_000);
        let ab = estimate_g2(&a, &b, 1.0, 4.0).unwrap();
        let ba = estimate_g2(&b, &a, 1.0, 4.0).unwrap();
        let rev: Vec<u64> = ba.counts.iter().rev().copied().collect();
        assert_eq!(ab.total_counts(), 6);
        assert_eq!(ab.counts, rev);
    }

    #[test]
    fn lifetime_at_sync_is_bin_zero() {
        let s = TagStream {
            tags: vec![
                TimeTag::new(0, Channel::Sync),
                TimeTag::new(0, Channel::DH),
                TimeTag::new(1000, Channel::Sync),
                TimeTag::new(1000, Channel::DH),
            ],
            duration: 2000,
            resolution: 25,
        };
        let h = lifetime_histogram(&s, 25).unwrap();
        assert_eq!(h.counts[0], 2);
        assert_eq!(h.total(), 2);
    }

    #[test]
    fn photon_before_sync_is_counted_aside() {
        let s = TagStream {
            tags: vec![
                TimeTag::new(0, Channel::DH),
                TimeTag::new(100, Channel::Sync),
                TimeTag::new(1100, Channel::Sync),
            ],
            duration: 2000,
            resolution: 25,
        };
        let h = lifetime_histogram(&s, 25).unwrap();
        assert_eq!(h.before_first_sync, 1);
        assert_eq!(h.total(), 0);
    }

    #[test]
    fn streaming_accumulator_matches_batch() {
        let mut tags = Vec::new();
        let mut x: u64 = 7;
        let mut t = 0u64;
        for _ in 0..5000 {
            x = x.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            t += (x >> 40) % 4000 * 25;
            let ch = if (x >> 20) & 1 == 0 { Channel::DH } else { Channel::DV };
            tags.push(TimeTag::new(t, ch));
        }
        let s = TagStream { tags, duration: t, resolution: 25 };
        let batch = estimate_g2_channels(&s, Channel::DH, Channel::DV, 1.0, 20.0).unwrap();
        let mut acc = G2Accumulator::new(Channel::DH, Channel::DV, 1.0, 20.0).unwrap();
        let step = t / 13;
        let mut i = 0;
        for k in 1..=13 {
            let horizon = if k == 13 { t + 1 } else { k * step };
            let j = s.tags.partition_point(|x| x.time < horizon);
            acc.push(&s.tags[i..j], horizon);
            i = j;
        }
        assert_eq!(acc.finish(t).unwrap(), batch);
    }
}
