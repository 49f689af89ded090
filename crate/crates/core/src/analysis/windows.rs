//! State-generation windows: every window of length δt is one generated
//! state, classified by which detectors fired inside it.

use crate::error::{Error, Result};
use crate::model::{Channel, PopulationEstimate, Populations, TagStream, TimeTag, PS_PER_NS};

#[derive(Debug, Clone)]
struct WindowState {
    width: u64,
    current: u64,
    h: u32,
    v: u32,
    n1: u64,
    n2: u64,
    multi: u64,
}

impl WindowState {
    fn close(&mut self) {
        match (self.h > 0, self.v > 0) {
            (true, true) => self.n2 += 1,
            (true, false) | (false, true) => self.n1 += 1,
            (false, false) => {}
        }
        if self.h > 1 || self.v > 1 {
            self.multi += 1;
        }
        self.h = 0;
        self.v = 0;
    }
}

/// Streaming window classifier for several window sizes at once.
///
/// Windows start at t = 0 and tile the acquisition; the last partial
/// window is discarded.
#[derive(Debug, Clone)]
pub struct WindowPopulationCounter {
    states: Vec<WindowState>,
}

impl WindowPopulationCounter {
    pub fn new(windows_ns: &[f64], resolution_ps: u64) -> Result<Self> {
        if windows_ns.is_empty() {
            return Err(Error::EmptyInput("no window sizes given".into()));
        }
        let mut states = Vec::with_capacity(windows_ns.len());
        for &w in windows_ns {
            if !(w.is_finite() && w > 0.0) {
                return Err(Error::InvalidParameter(format!("window {w} ns must be positive")));
            }
            let width = (w * PS_PER_NS as f64).round() as u64;
            if width < resolution_ps.max(1) {
                return Err(Error::InvalidParameter(format!("window {w} ns is shorter than the stream resolution")));
            }
            states.push(WindowState { width, current: u64::MAX, h: 0, v: 0, n1: 0, n2: 0, multi: 0 });
        }
        Ok(WindowPopulationCounter { states })
    }

    #[inline]
    fn add(&mut self, time: u64, is_h: bool) {
        for s in &mut self.states {
            let k = time / s.width;
            if k != s.current {
                if s.current != u64::MAX {
                    s.close();
                }
                s.current = k;
            }
            if is_h {
                s.h += 1;
            } else {
                s.v += 1;
            }
        }
    }

    /// Adds time-ordered tags; only DH and DV are counted.
    pub fn push(&mut self, tags: &[TimeTag]) {
        for t in tags {
            match t.channel {
                Channel::DH => self.add(t.time, true),
                Channel::DV => self.add(t.time, false),
                _ => {}
            }
        }
    }

    /// Closes all windows for an acquisition of `duration_ps`.
    pub fn finish(mut self, duration_ps: u64) -> Vec<PopulationEstimate> {
        self.states
            .iter_mut()
            .map(|s| {
                let count = duration_ps / s.width;
                // the open window only counts if it is complete
                if s.current != u64::MAX && s.current < count {
                    s.close();
                }
                estimate_from_counts(s.width as f64 / PS_PER_NS as f64, count, s.n1, s.n2, s.multi)
            })
            .collect()
    }
}

/// Builds a detected estimate from window counts with binomial errors.
pub fn estimate_from_counts(window_ns: f64, window_count: u64, n1: u64, n2: u64, multi: u64) -> PopulationEstimate {
    let n0 = window_count.saturating_sub(n1 + n2);
    let detected = if window_count == 0 {
        Populations { p0: f64::NAN, p1: f64::NAN, p2: f64::NAN, p0_err: f64::NAN, p1_err: f64::NAN, p2_err: f64::NAN }
    } else {
        let n = window_count as f64;
        let p = |k: u64| k as f64 / n;
        let err = |q: f64| (q * (1.0 - q) / n).sqrt();
        let (p0, p1, p2) = (p(n0), p(n1), p(n2));
        Populations { p0, p1, p2, p0_err: err(p0), p1_err: err(p1), p2_err: err(p2) }
    };
    PopulationEstimate {
        window_ns,
        window_count,
        n0,
        n1,
        n2,
        detected,
        corrected: None,
        clamped: false,
        same_channel_multi: multi,
    }
}

/// Detected populations for one window size. `dh` tags count as H and
/// `dv` tags as V whatever their channel label.
pub fn window_populations(dh: &TagStream, dv: &TagStream, window_ns: f64) -> Result<PopulationEstimate> {
    if dh.duration != dv.duration {
        return Err(Error::DurationMismatch(dh.duration, dv.duration));
    }
    let mut counter = WindowPopulationCounter::new(&[window_ns], dh.resolution.max(dv.resolution))?;
    let (mut i, mut j) = (0, 0);
    while i < dh.tags.len() || j < dv.tags.len() {
        let take_h = j >= dv.tags.len() || (i < dh.tags.len() && dh.tags[i].time <= dv.tags[j].time);
        if take_h {
            counter.add(dh.tags[i].time, true);
            i += 1;
        } else {
            counter.add(dv.tags[j].time, false);
            j += 1;
        }
    }
    Ok(counter.finish(dh.duration).remove(0))
}

/// Window sizes from `start` to `stop` inclusive in steps of `step` (ns).
pub fn window_grid(start_ns: f64, stop_ns: f64, step_ns: f64) -> Vec<f64> {
    let n = ((stop_ns - start_ns) / step_ns + 1e-9).floor() as usize;
    (0..=n).map(|k| start_ns + k as f64 * step_ns).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stream(times_ns: &[u64], ch: Channel, duration_ns: u64) -> TagStream {
        TagStream {
            tags: times_ns.iter().map(|&t| TimeTag::new(t * 1000, ch)).collect(),
            duration: duration_ns * 1000,
            resolution: 25,
        }
    }

    #[test]
    fn hand_enumerated_windows() {
        let dh = stream(&[1, 50], Channel::DH, 100);
        let dv = stream(&[51], Channel::DV, 100);
        let e = window_populations(&dh, &dv, 10.0).unwrap();
        assert_eq!(e.window_count, 10);
        assert_eq!((e.n0, e.n1, e.n2), (8, 1, 1));
        assert_eq!((e.detected.p0, e.detected.p1, e.detected.p2), (0.8, 0.1, 0.1));
    }

    #[test]
    fn empty_streams_are_all_vacuum() {
        let e = window_populations(&stream(&[], Channel::DH, 100), &stream(&[], Channel::DV, 100), 2.0).unwrap();
        assert_eq!(e.detected.p0, 1.0);
        assert_eq!(e.detected.p1 + e.detected.p2, 0.0);
    }

    #[test]
    fn partial_window_is_discarded() {
        let dh = stream(&[95], Channel::DH, 105);
        let dv = stream(&[101], Channel::DV, 105);
        let e = window_populations(&dh, &dv, 10.0).unwrap();
        assert_eq!(e.window_count, 10);
        assert_eq!((e.n1, e.n2), (1, 0));
    }

    #[test]
    fn same_channel_pairs_are_single_and_recorded() {
        let dh = stream(&[1, 2], Channel::DH, 100);
        let dv = stream(&[], Channel::DV, 100);
        let e = window_populations(&dh, &dv, 10.0).unwrap();
        assert_eq!((e.n1, e.n2, e.same_channel_multi), (1, 0, 1));
    }

    #[test]
    fn sub_resolution_window_is_rejected() {
        let s = stream(&[], Channel::DH, 100);
        assert!(window_populations(&s, &s, 0.01).is_err());
    }

    #[test]
    fn multi_window_counter_matches_single() {
        let mut tags = Vec::new();
        let mut x: u64 = 3;
        let mut t = 0;
        for _ in 0..3000 {
            x = x.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            t += (x >> 44) % 2000 * 25;
            tags.push(TimeTag::new(t, if x & (1 << 30) == 0 { Channel::DH } else { Channel::DV }));
        }
        let s = TagStream { tags, duration: t + 5, resolution: 25 };
        let grid = window_grid(2.0, 20.0, 2.0);
        assert_eq!(grid.len(), 10);
        let mut c = WindowPopulationCounter::new(&grid, 25).unwrap();
        c.push(&s.tags[..1000]);
        c.push(&s.tags[1000..]);
        let all = c.finish(s.duration);
        for (w, e) in grid.iter().zip(&all) {
            let single = window_populations(&s.select(Channel::DH), &s.select(Channel::DV), *w).unwrap();
            assert_eq!(&single, e);
            assert_eq!(e.n0 + e.n1 + e.n2, e.window_count);
        }
    }

    #[test]
    fn reference_grid_has_fifty_windows() {
        let g = window_grid(2.0, 100.0, 2.0);
        assert_eq!(g.len(), 50);
        assert_eq!(*g.last().unwrap(), 100.0);
    }
}
