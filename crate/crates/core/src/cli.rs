//! Command-line interface of the `pathent` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::analysis::{
    concurrence_for, correct_estimate, fit_g2, fit_lifetime, visibility_from_scan, window_grid, G2Fit, InversionMode,
    RhoMode, ScanPoint, VisibilityResult, WindowPopulationCounter,
};
use crate::correlation::{G2Accumulator, LifetimeAccumulator};
use crate::emitter::{rng_for, CwSource, PoissonSource, PulsedSource, TagSource};
use crate::error::{Error, Result};
use crate::io::{
    fmt_f64, lifetime_csv, manifest_csv, parse_manifest, populations_csv, scan_csv, ExperimentConfig, MergedTags,
    PopulationKind, SimMode, SimStage, SimulationSetup, TagFileWriter,
};
use crate::model::{Channel, G2Model, PopulationEstimate, TimeTag, DEFAULT_RESOLUTION_PS, PS_PER_NS};
use crate::optics::{OpticsConfig, RoutingMode};
use crate::oracles::{g2_detected_simple, g2_model, populations_from_g2};
use crate::scenario::{derive_seed, run_chain, Chain, RunStats, CHUNK_PS, REFERENCE_FLUX_PER_S, REFERENCE_G2};

#[derive(Debug, Parser)]
#[command(name = "pathent", version, about = "Simulate and analyse time-tagged single-photon path entanglement")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate an acquisition from a config file and write tag files.
    Simulate(SimulateArgs),
    /// Cross-correlation histogram of two channels.
    G2(G2Args),
    /// SYNC-referenced decay histogram and lifetime fit.
    Lifetime(LifetimeArgs),
    /// Window populations, detected and loss-corrected.
    Populations(PopulationsArgs),
    /// Fringe visibility from an HWP scan manifest.
    Visibility(VisibilityArgs),
    /// Normalised concurrence per window.
    Concurrence(ConcurrenceArgs),
    /// Analytic detected g² and populations over a window grid.
    Oracle(OracleArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Cw,
    Pulsed,
    Coherent,
    MzScan,
}

impl From<ModeArg> for SimMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Cw => SimMode::Cw,
            ModeArg::Pulsed => SimMode::Pulsed,
            ModeArg::Coherent => SimMode::Coherent,
            ModeArg::MzScan => SimMode::MzScan,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ChannelArg {
    Dh,
    Dv,
    Sync,
    Aux,
}

impl From<ChannelArg> for Channel {
    fn from(c: ChannelArg) -> Self {
        match c {
            ChannelArg::Dh => Channel::DH,
            ChannelArg::Dv => Channel::DV,
            ChannelArg::Sync => Channel::Sync,
            ChannelArg::Aux => Channel::Aux,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InversionArg {
    Verbatim,
    SelfConsistent,
}

impl From<InversionArg> for InversionMode {
    fn from(m: InversionArg) -> Self {
        match m {
            InversionArg::Verbatim => InversionMode::Verbatim,
            InversionArg::SelfConsistent => InversionMode::SelfConsistent,
        }
    }
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long, value_enum)]
    pub mode: ModeArg,
    /// Output tag file; a directory for mz-scan.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct WindowArgs {
    #[arg(long, default_value_t = 2.0)]
    pub window_start_ns: f64,
    #[arg(long, default_value_t = 100.0)]
    pub window_stop_ns: f64,
    #[arg(long, default_value_t = 2.0)]
    pub window_step_ns: f64,
}

impl WindowArgs {
    fn grid(&self) -> Result<Vec<f64>> {
        let (a, b, s) = (self.window_start_ns, self.window_stop_ns, self.window_step_ns);
        if !(a > 0.0 && b >= a && s > 0.0 && b.is_finite()) {
            return Err(Error::InvalidParameter(format!("bad window grid {a}..{b} step {s}")));
        }
        Ok(window_grid(a, b, s))
    }
}

#[derive(Debug, Args)]
pub struct EfficiencyArgs {
    /// Lumped detection efficiency used for loss correction.
    #[arg(long = "eta-d")]
    pub eta_d: Option<f64>,
    #[arg(long = "eta-d-err", default_value_t = 0.0)]
    pub eta_d_err: f64,
    #[arg(long, value_enum, default_value_t = InversionArg::Verbatim)]
    pub inversion: InversionArg,
}

#[derive(Debug, Args)]
pub struct G2Args {
    /// Tag files merged into one acquisition.
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = ChannelArg::Dh)]
    pub channel_a: ChannelArg,
    #[arg(long, value_enum, default_value_t = ChannelArg::Dv)]
    pub channel_b: ChannelArg,
    #[arg(long, default_value_t = 1.0)]
    pub bin_width_ns: f64,
    #[arg(long, default_value_t = 500.0)]
    pub tau_max_ns: f64,
    /// Fit the three-level model and write the result as JSON.
    #[arg(long)]
    pub fit_json: Option<PathBuf>,
    /// Signal fraction held fixed in the fit unless --fit-rho is given.
    #[arg(long, default_value_t = REFERENCE_G2.rho)]
    pub rho: f64,
    #[arg(long)]
    pub fit_rho: bool,
}

#[derive(Debug, Args)]
pub struct LifetimeArgs {
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 100)]
    pub bin_ps: u64,
    /// Pulse period; inferred from the first two SYNC tags when absent.
    #[arg(long)]
    pub period_ps: Option<u64>,
    #[arg(long)]
    pub fit_json: Option<PathBuf>,
    #[arg(long, default_value_t = 0.0)]
    pub cutoff_start_ns: f64,
    #[arg(long, default_value_t = 10.0)]
    pub cutoff_stop_ns: f64,
    #[arg(long, default_value_t = 1.0)]
    pub cutoff_step_ns: f64,
    /// Last delay used in the fit; defaults to 2 ns before the next pulse.
    #[arg(long)]
    pub end_ns: Option<f64>,
}

#[derive(Debug, Args)]
pub struct PopulationsArgs {
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    /// CSV of detected populations.
    #[arg(long)]
    pub out: PathBuf,
    /// CSV of loss-corrected populations; needs --eta-d.
    #[arg(long)]
    pub corrected_out: Option<PathBuf>,
    #[command(flatten)]
    pub efficiency: EfficiencyArgs,
    #[command(flatten)]
    pub windows: WindowArgs,
}

#[derive(Debug, Args)]
pub struct VisibilityArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ConcurrenceArgs {
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, conflicts_with = "visibility_json", required_unless_present = "visibility_json")]
    pub visibility: Option<f64>,
    #[arg(long, default_value_t = 0.0)]
    pub visibility_err: f64,
    /// JSON written by the visibility command.
    #[arg(long)]
    pub visibility_json: Option<PathBuf>,
    #[command(flatten)]
    pub efficiency: EfficiencyArgs,
    #[command(flatten)]
    pub windows: WindowArgs,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = REFERENCE_G2.beta)]
    pub beta: f64,
    #[arg(long, default_value_t = REFERENCE_G2.gamma1)]
    pub gamma1_per_ns: f64,
    #[arg(long, default_value_t = REFERENCE_G2.gamma2)]
    pub gamma2_per_ns: f64,
    #[arg(long, default_value_t = REFERENCE_G2.rho)]
    pub rho: f64,
    #[arg(long, default_value_t = REFERENCE_FLUX_PER_S)]
    pub flux_per_s: f64,
    /// Rate of the single-exponential comparison curve; defaults to γ₁.
    #[arg(long)]
    pub gamma_simple_per_ns: Option<f64>,
    #[command(flatten)]
    pub windows: WindowArgs,
}

/// Parses the process arguments, runs the command and maps errors to a
/// nonzero exit code.
pub fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate(a) => simulate(&a),
        Command::G2(a) => g2(&a),
        Command::Lifetime(a) => lifetime(&a),
        Command::Populations(a) => populations(&a),
        Command::Visibility(a) => visibility(&a),
        Command::Concurrence(a) => concurrence(&a),
        Command::Oracle(a) => oracle(&a),
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::Config(format!("cannot write {}: {e}", path.display())))
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| Error::Config(e.to_string()))?;
    s.push('\n');
    write_text(path, &s)
}

/// Feeds every merged chunk of the input files to `f` together with a
/// time at or before which no later tag falls.
fn for_each_chunk<F: FnMut(&[TimeTag], u64)>(tags: &mut MergedTags, mut f: F) -> Result<()> {
    while let Some(chunk) = tags.next_chunk()? {
        if let Some(last) = chunk.last() {
            f(&chunk, last.time);
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// simulate

fn simulate(a: &SimulateArgs) -> Result<()> {
    let setup = ExperimentConfig::load(&a.config)?.simulation(a.mode.into())?;
    let seed = setup.excitation.seed;
    if setup.mode != SimMode::MzScan {
        let chain = Chain { optics: setup.optics, mode: RoutingMode::Population, detector: setup.detector };
        simulate_file(&setup, &chain, seed, &a.out)?;
        return Ok(());
    }
    fs::create_dir_all(&a.out)?;
    let mut entries = Vec::with_capacity(setup.scan_angles_deg.len());
    for (k, &theta) in setup.scan_angles_deg.iter().enumerate() {
        let chain = Chain {
            optics: OpticsConfig { hwp_angle_deg: theta, ..setup.optics },
            mode: RoutingMode::VisibilityScan,
            detector: setup.detector,
        };
        let name = format!("theta_{k:03}.ptag");
        simulate_file(&setup, &chain, derive_seed(seed, k as u64), &a.out.join(&name))?;
        entries.push((theta, name));
    }
    write_text(&a.out.join("manifest.csv"), &manifest_csv(&entries))
}

fn make_source(setup: &SimulationSetup, seed: u64) -> Result<Box<dyn TagSource>> {
    let res = DEFAULT_RESOLUTION_PS;
    Ok(match setup.mode {
        SimMode::Cw | SimMode::MzScan => Box::new(CwSource::new(setup.emitter.as_ref().unwrap(), res, seed)?),
        SimMode::Pulsed => {
            let model = setup.emitter.as_ref().unwrap();
            let cfg = crate::emitter::ExcitationConfig { seed, ..setup.excitation };
            let signal = cfg.pulse_rate_mhz * 1e6 * cfg.excitation_probability;
            Box::new(PulsedSource::new(model, &cfg, model.background_rate_for(signal))?)
        }
        SimMode::Coherent => {
            Box::new(PoissonSource::new(setup.coherent_rate_per_s.unwrap(), Channel::Aux, res, rng_for(seed, 0)))
        }
    })
}

fn simulate_file(setup: &SimulationSetup, chain: &Chain, seed: u64, path: &Path) -> Result<RunStats> {
    let duration = setup.excitation.duration_ps();
    let mut source = make_source(setup, seed)?;
    let mut w = TagFileWriter::create(path, DEFAULT_RESOLUTION_PS)
        .map_err(|e| Error::Config(format!("cannot create {}: {e}", path.display())))?;
    let stats = match setup.stage {
        SimStage::Detected => {
            let mut failed = None;
            let stats = run_chain(source.as_mut(), chain, duration, seed, |tags, _| {
                if failed.is_none() {
                    failed = w.write(tags).err();
                }
            })?;
            if let Some(e) = failed {
                return Err(e);
            }
            stats
        }
        SimStage::Emitted => {
            let mut stats = RunStats { duration_ps: duration, ..RunStats::default() };
            let mut buf = Vec::new();
            let mut t = 0;
            while t <= duration {
                let until = (t + CHUNK_PS).min(duration + 1);
                buf.clear();
                source.fill(until, &mut buf);
                stats.emitted += buf.iter().filter(|t| t.channel == Channel::Aux).count() as u64;
                stats.syncs += buf.iter().filter(|t| t.channel == Channel::Sync).count() as u64;
                w.write(&buf)?;
                t = until;
            }
            stats
        }
    };
    w.finish(duration)?;
    Ok(stats)
}

// ---------------------------------------------------------------------------
// analysis commands

#[derive(Serialize)]
struct G2FitReport<'a> {
    #[serde(flatten)]
    fit: &'a G2Fit,
    g2_zero: f64,
}

fn g2(a: &G2Args) -> Result<()> {
    let mut tags = MergedTags::open(&a.inputs)?;
    let mut acc = G2Accumulator::new(a.channel_a.into(), a.channel_b.into(), a.bin_width_ns, a.tau_max_ns)?;
    for_each_chunk(&mut tags, |chunk, horizon| acc.push(chunk, horizon))?;
    let hist = acc.finish(tags.duration())?;
    write_text(&a.out, &crate::io::g2_csv(&hist))?;
    if let Some(path) = &a.fit_json {
        let initial = G2Model { rho: a.rho, ..REFERENCE_G2 };
        let mode = if a.fit_rho { RhoMode::Fitted } else { RhoMode::Fixed };
        let fit = fit_g2(&hist, &initial, mode)?;
        let g2_zero = g2_model(0.0, &fit.model, true);
        write_json(path, &G2FitReport { fit: &fit, g2_zero })?;
    }
    Ok(())
}

fn lifetime(a: &LifetimeArgs) -> Result<()> {
    let mut tags = MergedTags::open(&a.inputs)?;
    if a.bin_ps < tags.resolution() {
        return Err(Error::InvalidParameter(format!("bin {} ps is finer than the resolution", a.bin_ps)));
    }
    // without an explicit period, buffer until two SYNC tags fix it
    let mut pending = Vec::new();
    let mut period = a.period_ps;
    let mut first_sync = None;
    while period.is_none() {
        let Some(chunk) = tags.next_chunk()? else {
            return Err(Error::EmptyInput("need at least two SYNC tags to infer the period".into()));
        };
        for t in chunk.iter().filter(|t| t.channel == Channel::Sync) {
            match first_sync {
                None => first_sync = Some(t.time),
                Some(f) => {
                    period = Some(t.time - f);
                    break;
                }
            }
        }
        pending.push(chunk);
    }
    let mut acc = LifetimeAccumulator::new(a.bin_ps, period.unwrap())?;
    for chunk in &pending {
        acc.push(chunk);
    }
    for_each_chunk(&mut tags, |chunk, _| acc.push(chunk))?;
    let hist = acc.finish();
    write_text(&a.out, &lifetime_csv(&hist))?;
    if let Some(path) = &a.fit_json {
        let cutoffs = window_grid(a.cutoff_start_ns, a.cutoff_stop_ns, a.cutoff_step_ns);
        let end = a.end_ns.unwrap_or(hist.period_ps as f64 / PS_PER_NS - 2.0);
        write_json(path, &fit_lifetime(&hist, &cutoffs, Some(end))?)?;
    }
    Ok(())
}

fn estimates(inputs: &[PathBuf], windows: &WindowArgs, eff: &EfficiencyArgs, corrected: bool) -> Result<Vec<PopulationEstimate>> {
    let eta = match (corrected, eff.eta_d) {
        (true, None) => return Err(Error::Config("loss-corrected populations need --eta-d".into())),
        (true, Some(e)) => Some(e),
        (false, _) => None,
    };
    let mut tags = MergedTags::open(inputs)?;
    let mut counter = WindowPopulationCounter::new(&windows.grid()?, tags.resolution())?;
    for_each_chunk(&mut tags, |chunk, _| counter.push(chunk))?;
    let mut out = counter.finish(tags.duration());
    if let Some(eta) = eta {
        for e in &mut out {
            correct_estimate(e, eta, eff.eta_d_err, eff.inversion.into())?;
        }
    }
    Ok(out)
}

fn populations(a: &PopulationsArgs) -> Result<()> {
    let est = estimates(&a.inputs, &a.windows, &a.efficiency, a.corrected_out.is_some())?;
    write_text(&a.out, &populations_csv(&est, PopulationKind::Detected))?;
    if let Some(path) = &a.corrected_out {
        write_text(path, &populations_csv(&est, PopulationKind::Corrected))?;
    }
    Ok(())
}

fn visibility(a: &VisibilityArgs) -> Result<()> {
    let text = fs::read_to_string(&a.manifest)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", a.manifest.display())))?;
    let dir = a.manifest.parent().unwrap_or(Path::new("."));
    let scan = parse_manifest(&text)?
        .into_iter()
        .map(|(theta, file)| {
            let mut tags = MergedTags::open(&[dir.join(file)])?;
            let mut p = ScanPoint { theta_deg: theta, n_h: 0, n_v: 0 };
            for_each_chunk(&mut tags, |chunk, _| {
                p.n_h += chunk.iter().filter(|t| t.channel == Channel::DH).count() as u64;
                p.n_v += chunk.iter().filter(|t| t.channel == Channel::DV).count() as u64;
            })?;
            Ok(p)
        })
        .collect::<Result<Vec<_>>>()?;
    write_text(&a.out, &scan_csv(&scan))?;
    let result = visibility_from_scan(&scan)?;
    if let Some(path) = &a.json {
        write_json(path, &result)?;
    }
    Ok(())
}

fn concurrence(a: &ConcurrenceArgs) -> Result<()> {
    let (v, v_err) = match (&a.visibility_json, a.visibility) {
        (Some(path), _) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
            let r: VisibilityResult = serde_json::from_str(&text)
                .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            (r.visibility, r.visibility_err)
        }
        (None, Some(v)) => (v, a.visibility_err),
        (None, None) => return Err(Error::Config("need --visibility or --visibility-json".into())),
    };
    let corrected = a.efficiency.eta_d.is_some();
    let est = estimates(&a.inputs, &a.windows, &a.efficiency, corrected)?;
    let mut results = Vec::with_capacity(est.len());
    for e in &est {
        match concurrence_for(e, v, v_err) {
            Ok(r) => results.push(r),
            Err(Error::Undefined(why)) => eprintln!("window {} ns skipped: {why}", e.window_ns),
            Err(other) => return Err(other),
        }
    }
    write_json(&a.out, &results)
}

fn oracle(a: &OracleArgs) -> Result<()> {
    let m = G2Model { beta: a.beta, gamma1: a.gamma1_per_ns, gamma2: a.gamma2_per_ns, rho: a.rho };
    m.validate()?;
    let gamma = a.gamma_simple_per_ns.unwrap_or(m.gamma1);
    let mut s = String::from("window_ns,g2_detected,g2_detected_simple,mu,p0,p1,p2,yc,regime_warning\n");
    for t in a.windows.grid()? {
        let p = populations_from_g2(&m, a.flux_per_s, t)?;
        let fields = [t, p.g2_detected, g2_detected_simple(gamma, t), p.mu, p.p0, p.p1, p.p2, p.yc()];
        for f in fields {
            s.push_str(&fmt_f64(f));
            s.push(',');
        }
        s.push_str(if p.regime_warning { "true\n" } else { "false\n" });
    }
    write_text(&a.out, &s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn corrected_populations_need_efficiency() {
        let w = WindowArgs { window_start_ns: 2.0, window_stop_ns: 4.0, window_step_ns: 2.0 };
        let eff = EfficiencyArgs { eta_d: None, eta_d_err: 0.0, inversion: InversionArg::Verbatim };
        let e = estimates(&[], &w, &eff, true).unwrap_err();
        assert!(matches!(e, Error::Config(m) if m.contains("--eta-d")));
    }
}
