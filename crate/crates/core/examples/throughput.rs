//! Rough timing of the simulation and correlation stages.

use std::time::Instant;

use pathent::correlation::estimate_g2;
use pathent::emitter::{CwSource, TagSource};
use pathent::scenario::{reference_emitter, run_chain, Chain};
use pathent::{Channel, TagStream, DEFAULT_RESOLUTION_PS};

fn main() -> pathent::Result<()> {
    let model = reference_emitter()?;
    let seconds = 20.0;
    let d = (seconds * 1e12) as u64;

    let t0 = Instant::now();
    let mut src = CwSource::new(&model, DEFAULT_RESOLUTION_PS, 1)?;
    let mut buf = Vec::new();
    let mut n = 0usize;
    let mut h = 0;
    while h < d {
        h += 1_000_000_000;
        buf.clear();
        src.fill(h, &mut buf);
        n += buf.len();
    }
    let dt = t0.elapsed().as_secs_f64();
    println!("emitter: {n} photons in {dt:.2} s ({:.1} ns/photon)", dt * 1e9 / n as f64);

    let t0 = Instant::now();
    let mut src = CwSource::new(&model, DEFAULT_RESOLUTION_PS, 1)?;
    let stats = run_chain(&mut src, &Chain::hbt(0.5), d, 1, |_, _| {})?;
    let dt = t0.elapsed().as_secs_f64();
    println!("source+chain: {} emitted, {} detected in {dt:.2} s", stats.emitted, stats.detected_h + stats.detected_v);

    let mut src = CwSource::new(&model, DEFAULT_RESOLUTION_PS, 2)?;
    let mut tags = Vec::new();
    run_chain(&mut src, &Chain::hbt(0.5), d, 2, |t, _| tags.extend_from_slice(t))?;
    let s = TagStream { tags, duration: d, resolution: DEFAULT_RESOLUTION_PS };
    let (a, b) = (s.select(Channel::DH), s.select(Channel::DV));
    let t0 = Instant::now();
    let hist = estimate_g2(&a, &b, 1.0, 200.0)?;
    let dt = t0.elapsed().as_secs_f64();
    let ntags = a.len() + b.len();
    println!("g2: {ntags} tags, {} pairs in {dt:.3} s ({:.2e} tags/s)", hist.total_counts(), ntags as f64 / dt);
    Ok(())
}
