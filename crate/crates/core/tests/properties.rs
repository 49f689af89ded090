use pathent::analysis::{forward_losses, invert_losses, window_populations, InversionMode};
use pathent::correlation::{estimate_g2, estimate_g2_parallel};
use pathent::io::{read_tags, write_tags};
use pathent::{Channel, Populations, TagStream, TimeTag};
use proptest::prelude::*;

const DURATION: u64 = 50_000;

fn sorted_times(max_len: usize) -> impl Strategy<Value = Vec<u64>> {
    prop::collection::vec(0..DURATION, 0..max_len).prop_map(|mut v| {
        v.sort_unstable();
        v
    })
}

fn stream(times: &[u64], ch: Channel) -> TagStream {
    TagStream { tags: times.iter().map(|&t| TimeTag::new(t, ch)).collect(), duration: DURATION, resolution: 1 }
}

fn brute_force(a: &[u64], b: &[u64], w: i64, tm: i64) -> Vec<u64> {
    let nbins = (2 * tm / w) as usize;
    let mut h = vec![0u64; nbins];
    for &ta in a {
        for &tb in b {
            let d = tb as i64 - ta as i64;
            if d.abs() <= tm {
                h[(((d + tm) / w) as usize).min(nbins - 1)] += 1;
            }
        }
    }
    h
}

proptest! {
    #[test]
    fn correlator_matches_all_pairs(
        a in sorted_times(300),
        b in sorted_times(300),
        w_ns in 1u64..5,
        bins_per_side in 1u64..20,
        chunk in 1usize..64,
    ) {
        prop_assume!(!a.is_empty() && !b.is_empty());
        let (w_ps, tm_ps) = (w_ns * 1000, w_ns * 1000 * bins_per_side);
        let (sa, sb) = (stream(&a, Channel::DH), stream(&b, Channel::DV));
        let h = estimate_g2(&sa, &sb, w_ns as f64, (w_ns * bins_per_side) as f64).unwrap();
        prop_assert_eq!(&h.counts, &brute_force(&a, &b, w_ps as i64, tm_ps as i64));
        let p = estimate_g2_parallel(&sa, &sb, w_ns as f64, (w_ns * bins_per_side) as f64, chunk).unwrap();
        prop_assert_eq!(p.counts, h.counts);
    }

    #[test]
    fn merge_is_a_stable_sorted_union(a in sorted_times(200), b in sorted_times(200)) {
        let m = stream(&a, Channel::DH).merge(&stream(&b, Channel::DV));
        prop_assert_eq!(m.len(), a.len() + b.len());
        prop_assert!(m.tags.windows(2).all(|p| p[0].time <= p[1].time));
        let dh: Vec<u64> = m.tags.iter().filter(|t| t.channel == Channel::DH).map(|t| t.time).collect();
        let dv: Vec<u64> = m.tags.iter().filter(|t| t.channel == Channel::DV).map(|t| t.time).collect();
        prop_assert_eq!(&dh, &a);
        prop_assert_eq!(&dv, &b);
        // equal times keep the left stream first
        for p in m.tags.windows(2) {
            if p[0].time == p[1].time {
                prop_assert!(!(p[0].channel == Channel::DV && p[1].channel == Channel::DH));
            }
        }
    }

    #[test]
    fn tag_files_round_trip(a in sorted_times(200), b in sorted_times(200)) {
        let s = stream(&a, Channel::DH).merge(&stream(&b, Channel::Sync));
        let mut buf = Vec::new();
        write_tags(&s, &mut buf).unwrap();
        let back = read_tags(&mut buf.as_slice()).unwrap();
        prop_assert_eq!(back, s);
    }

    #[test]
    fn window_classes_partition_the_windows(a in sorted_times(100), b in sorted_times(100), w in 1u64..200) {
        let e = window_populations(&stream(&a, Channel::DH), &stream(&b, Channel::DV), w as f64 / 10.0).unwrap();
        prop_assert_eq!(e.n0 + e.n1 + e.n2, e.window_count);
        let p = e.detected;
        prop_assert!((p.p0 + p.p1 + p.p2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn self_consistent_inversion_undoes_thinning(p1 in 1e-4f64..0.3, p2 in 0.0f64..0.05, eta in 0.01f64..1.0) {
        let truth = Populations { p0: 1.0 - p1 - p2, p1, p2, p0_err: 0.0, p1_err: 0.0, p2_err: 0.0 };
        let detected = forward_losses(&truth, eta);
        let (back, clamped) = invert_losses(&detected, eta, 0.0, InversionMode::SelfConsistent).unwrap();
        prop_assert!(!clamped);
        prop_assert!((back.p1 - p1).abs() <= 1e-9 * p1.max(1e-3));
        prop_assert!((back.p2 - p2).abs() <= 1e-9 * p2.max(1e-3));
    }
}
