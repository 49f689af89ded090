//! Tag files, experiment configuration and CSV output.
//!
//! Floats in CSV output are written by [`fmt_f64`]: the shortest decimal
//! string that parses back to the same value, switching to exponent form
//! below 1e-5 and from 1e16 on, with `NaN` for undefined entries.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::Path;

use crate::analysis::{contamination_from_counts, contamination_with_err, window_grid, ScanPoint};
use crate::correlation::LifetimeHistogram;
use crate::emitter::ExcitationConfig;
use crate::error::{Error, Result};
use crate::model::{Channel, DetectorModel, EmitterModel, G2Histogram, PopulationEstimate, TagStream, TimeTag};
use crate::optics::OpticsConfig;

pub const TAG_MAGIC: [u8; 4] = *b"PTAG";
pub const TAG_VERSION: u16 = 1;
pub const HEADER_LEN: u64 = 26;
pub const RECORD_LEN: u64 = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TagFileHeader {
    pub resolution: u32,
    pub record_count: u64,
    pub duration: u64,
}

fn encode_header(h: &TagFileHeader) -> [u8; HEADER_LEN as usize] {
    let mut b = [0u8; HEADER_LEN as usize];
    b[0..4].copy_from_slice(&TAG_MAGIC);
    b[4..6].copy_from_slice(&TAG_VERSION.to_le_bytes());
    b[6..10].copy_from_slice(&h.resolution.to_le_bytes());
    b[10..18].copy_from_slice(&h.record_count.to_le_bytes());
    b[18..26].copy_from_slice(&h.duration.to_le_bytes());
    b
}

fn encode_record(t: &TimeTag) -> [u8; RECORD_LEN as usize] {
    let mut b = [0u8; RECORD_LEN as usize];
    b[0..8].copy_from_slice(&t.time.to_le_bytes());
    b[8] = t.channel.code();
    b
}

fn resolution_u32(resolution: u64) -> Result<u32> {
    match u32::try_from(resolution) {
        Ok(r) if r > 0 => Ok(r),
        _ => Err(Error::InvalidParameter(format!("resolution {resolution} ps does not fit the tag file header"))),
    }
}

/// Serialises a stream in tag-file layout.
pub fn write_tags<W: Write>(stream: &TagStream, w: &mut W) -> Result<()> {
    let header = TagFileHeader {
        resolution: resolution_u32(stream.resolution)?,
        record_count: stream.tags.len() as u64,
        duration: stream.duration,
    };
    w.write_all(&encode_header(&header))?;
    for t in &stream.tags {
        w.write_all(&encode_record(t))?;
    }
    Ok(())
}

pub fn write_tagfile(stream: &TagStream, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_tags(stream, &mut w)?;
    w.flush()?;
    Ok(())
}

fn read_header<R: Read>(r: &mut R) -> Result<TagFileHeader> {
    let mut b = [0u8; HEADER_LEN as usize];
    let mut got = 0;
    while got < b.len() {
        match r.read(&mut b[got..])? {
            0 => break,
            n => got += n,
        }
    }
    if got >= 4 && b[0..4] != TAG_MAGIC {
        return Err(Error::BadMagic(b[0..4].try_into().unwrap()));
    }
    if got < b.len() {
        return Err(Error::Truncated { declared: 0, actual: 0 });
    }
    let version = u16::from_le_bytes([b[4], b[5]]);
    if version != TAG_VERSION {
        return Err(Error::BadVersion(version));
    }
    let resolution = u32::from_le_bytes(b[6..10].try_into().unwrap());
    if resolution == 0 {
        return Err(Error::InvalidParameter("tag file resolution is zero".into()));
    }
    Ok(TagFileHeader {
        resolution,
        record_count: u64::from_le_bytes(b[10..18].try_into().unwrap()),
        duration: u64::from_le_bytes(b[18..26].try_into().unwrap()),
    })
}

fn decode_records(bytes: &[u8], header: &TagFileHeader, first_index: u64, prev: &mut u64, out: &mut Vec<TimeTag>) -> Result<()> {
    let res = header.resolution as u64;
    for (k, rec) in bytes.chunks_exact(RECORD_LEN as usize).enumerate() {
        let index = first_index + k as u64;
        let time = u64::from_le_bytes(rec[0..8].try_into().unwrap());
        let channel = Channel::from_code(rec[8])
            .ok_or_else(|| Error::BadRecord { index, reason: format!("unknown channel code {}", rec[8]) })?;
        if rec[9] != 0 {
            return Err(Error::BadRecord { index, reason: format!("reserved byte is {}", rec[9]) });
        }
        if time % res != 0 {
            return Err(Error::BadRecord { index, reason: format!("time {time} ps is not a multiple of {res} ps") });
        }
        if time < *prev || time > header.duration {
            return Err(Error::Unsorted { index });
        }
        *prev = time;
        out.push(TimeTag { time, channel });
    }
    Ok(())
}

/// Reads a whole tag stream from a reader, validating header and records.
pub fn read_tags<R: Read>(r: &mut R) -> Result<TagStream> {
    let header = read_header(r)?;
    let mut body = Vec::new();
    r.read_to_end(&mut body)?;
    let actual = body.len() as u64 / RECORD_LEN;
    if actual != header.record_count || body.len() as u64 % RECORD_LEN != 0 {
        return Err(Error::Truncated { declared: header.record_count, actual });
    }
    let mut tags = Vec::with_capacity(actual as usize);
    decode_records(&body, &header, 0, &mut 0, &mut tags)?;
    Ok(TagStream { tags, duration: header.duration, resolution: header.resolution as u64 })
}

pub fn read_tagfile(path: impl AsRef<Path>) -> Result<TagStream> {
    let mut r = BufReader::new(File::open(path)?);
    read_tags(&mut r)
}

/// Incremental tag-file writer for streams too long to hold in memory.
///
/// The header is written with a zero record count and patched by
/// [`TagFileWriter::finish`].
pub struct TagFileWriter<W: Write + Seek> {
    w: BufWriter<W>,
    resolution: u64,
    count: u64,
    last: u64,
}

impl TagFileWriter<File> {
    pub fn create(path: impl AsRef<Path>, resolution: u64) -> Result<Self> {
        TagFileWriter::new(File::create(path)?, resolution)
    }
}

impl<W: Write + Seek> TagFileWriter<W> {
    pub fn new(inner: W, resolution: u64) -> Result<Self> {
        let header = TagFileHeader { resolution: resolution_u32(resolution)?, record_count: 0, duration: 0 };
        let mut w = BufWriter::new(inner);
        w.write_all(&encode_header(&header))?;
        Ok(TagFileWriter { w, resolution, count: 0, last: 0 })
    }

    /// Appends tags; they must continue the time order of earlier calls.
    pub fn write(&mut self, tags: &[TimeTag]) -> Result<()> {
        for t in tags {
            if t.time < self.last {
                return Err(Error::Unsorted { index: self.count });
            }
            if t.time % self.resolution != 0 {
                return Err(Error::BadRecord { index: self.count, reason: "time not on the resolution grid".into() });
            }
            self.w.write_all(&encode_record(t))?;
            self.last = t.time;
            self.count += 1;
        }
        Ok(())
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    /// Writes the final header and returns the underlying writer.
    pub fn finish(mut self, duration: u64) -> Result<W> {
        if self.count > 0 && self.last > duration {
            return Err(Error::Unsorted { index: self.count - 1 });
        }
        let header = TagFileHeader { resolution: self.resolution as u32, record_count: self.count, duration };
        self.w.flush()?;
        let mut inner = self.w.into_inner().map_err(|e| e.into_error())?;
        inner.seek(SeekFrom::Start(0))?;
        inner.write_all(&encode_header(&header))?;
        inner.flush()?;
        Ok(inner)
    }
}

/// Chunked tag-file reader; records are validated as they are read.
pub struct TagFileReader<R: Read> {
    r: R,
    header: TagFileHeader,
    next_index: u64,
    prev: u64,
    buf: Vec<u8>,
}

impl TagFileReader<BufReader<File>> {
    /// Opens a file and checks its length against the declared record count.
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let file = File::open(path)?;
        let len = file.metadata()?.len();
        let reader = TagFileReader::new(BufReader::new(file))?;
        let body = len.saturating_sub(HEADER_LEN);
        let declared = reader.header.record_count;
        if body % RECORD_LEN != 0 || body / RECORD_LEN != declared {
            return Err(Error::Truncated { declared, actual: body / RECORD_LEN });
        }
        Ok(reader)
    }
}

impl<R: Read> TagFileReader<R> {
    pub fn new(mut r: R) -> Result<Self> {
        let header = read_header(&mut r)?;
        Ok(TagFileReader { r, header, next_index: 0, prev: 0, buf: Vec::new() })
    }

    pub fn header(&self) -> &TagFileHeader {
        &self.header
    }

    pub fn resolution(&self) -> u64 {
        self.header.resolution as u64
    }

    pub fn remaining(&self) -> u64 {
        self.header.record_count - self.next_index
    }

    /// Appends up to `max` records to `out`; returns how many were read,
    /// zero once the file is exhausted.
    pub fn read_chunk(&mut self, max: usize, out: &mut Vec<TimeTag>) -> Result<usize> {
        let n = self.remaining().min(max as u64) as usize;
        if n == 0 {
            return Ok(0);
        }
        self.buf.resize(n * RECORD_LEN as usize, 0);
        let mut got = 0;
        while got < self.buf.len() {
            match self.r.read(&mut self.buf[got..])? {
                0 => {
                    let actual = self.next_index + (got as u64) / RECORD_LEN;
                    return Err(Error::Truncated { declared: self.header.record_count, actual });
                }
                k => got += k,
            }
        }
        decode_records(&self.buf, &self.header, self.next_index, &mut self.prev, out)?;
        self.next_index += n as u64;
        Ok(n)
    }
}

/// Records per chunk when streaming files.
pub const READ_CHUNK: usize = 1 << 20;

/// Streams several tag files of one acquisition as a single time-ordered
/// sequence of chunks. Tags with equal times keep the order of the files.
pub struct MergedTags {
    readers: Vec<TagFileReader<BufReader<File>>>,
    buffers: Vec<Vec<TimeTag>>,
    duration: u64,
    resolution: u64,
}

impl MergedTags {
    pub fn open<P: AsRef<Path>>(paths: &[P]) -> Result<Self> {
        if paths.is_empty() {
            return Err(Error::EmptyInput("no tag files given".into()));
        }
        let readers = paths
            .iter()
            .map(|p| {
                let p = p.as_ref();
                TagFileReader::open(p).map_err(|e| match e {
                    Error::Io(io) => Error::Config(format!("cannot read {}: {io}", p.display())),
                    other => other,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let (duration, resolution) = (readers[0].header.duration, readers[0].resolution());
        for r in &readers[1..] {
            if r.header.duration != duration {
                return Err(Error::DurationMismatch(duration, r.header.duration));
            }
            if r.resolution() != resolution {
                return Err(Error::InvalidParameter(format!(
                    "tag files have different resolutions ({resolution} ps vs {} ps)",
                    r.resolution()
                )));
            }
        }
        let buffers = vec![Vec::new(); readers.len()];
        Ok(MergedTags { readers, buffers, duration, resolution })
    }

    pub fn duration(&self) -> u64 {
        self.duration
    }

    pub fn resolution(&self) -> u64 {
        self.resolution
    }

    /// Next chunk of merged tags, or `None` at the end. Every later chunk
    /// holds only tags strictly after the last tag of this one.
    pub fn next_chunk(&mut self) -> Result<Option<Vec<TimeTag>>> {
        for (r, b) in self.readers.iter_mut().zip(&mut self.buffers) {
            if b.is_empty() {
                r.read_chunk(READ_CHUNK, b)?;
            }
        }
        // safe up to the earliest last-buffered time of any file with more to read
        let horizon = self
            .readers
            .iter()
            .zip(&self.buffers)
            .filter(|(r, _)| r.remaining() > 0)
            .map(|(_, b)| b.last().map_or(0, |t| t.time))
            .min()
            .unwrap_or(u64::MAX);
        let mut out: Vec<TimeTag> = Vec::new();
        for b in &mut self.buffers {
            let k = b.partition_point(|t| t.time <= horizon);
            if k > 0 {
                out = crate::model::merge_sorted(&out, &b[..k]);
                b.drain(..k);
            }
        }
        if out.is_empty() && self.buffers.iter().all(Vec::is_empty) && self.readers.iter().all(|r| r.remaining() == 0) {
            return Ok(None);
        }
        Ok(Some(out))
    }
}

// ---------------------------------------------------------------------------
// configuration

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimMode {
    Cw,
    Pulsed,
    Coherent,
    MzScan,
}

/// What a simulation writes: the raw emitter output on AUX or the tags
/// seen by the detectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimStage {
    Emitted,
    Detected,
}

const KNOWN_KEYS: &[&str] = &[
    "emitter.r12_per_ns",
    "emitter.r21_per_ns",
    "emitter.r23_per_ns",
    "emitter.r31_per_ns",
    "emitter.rho",
    "detector.eta",
    "detector.dead_time_ns",
    "detector.jitter_fwhm_ps",
    "detector.dark_rate_per_s",
    "optics.split_ratio",
    "optics.phase_rad",
    "optics.theta_deg",
    "optics.mz_loss",
    "optics.v_intrinsic",
    "sim.duration_s",
    "sim.seed",
    "sim.stage",
    "pulse.rate_mhz",
    "pulse.excitation_probability",
    "coherent.rate_per_s",
    "scan.theta_start_deg",
    "scan.theta_stop_deg",
    "scan.theta_step_deg",
];

const EMITTER_KEYS: &[&str] =
    &["emitter.r12_per_ns", "emitter.r21_per_ns", "emitter.r23_per_ns", "emitter.r31_per_ns", "emitter.rho"];
const DETECTOR_KEYS: &[&str] = &["detector.eta", "detector.dead_time_ns", "detector.jitter_fwhm_ps"];
const SIM_KEYS: &[&str] = &["sim.duration_s", "sim.seed"];

/// Keys that must be present for a simulation mode.
pub fn required_keys(mode: SimMode) -> Vec<&'static str> {
    let mut keys: Vec<&str> = Vec::new();
    match mode {
        SimMode::Cw => keys.extend(EMITTER_KEYS),
        SimMode::Pulsed => {
            keys.extend(EMITTER_KEYS);
            keys.push("pulse.excitation_probability");
        }
        SimMode::Coherent => keys.push("coherent.rate_per_s"),
        SimMode::MzScan => {
            keys.extend(EMITTER_KEYS);
            keys.push("optics.v_intrinsic");
        }
    }
    keys.extend(DETECTOR_KEYS);
    keys.extend(SIM_KEYS);
    keys
}

/// Flat `key = value` configuration with `#` comments.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExperimentConfig {
    entries: BTreeMap<String, String>,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
            let (k, v) = (k.trim(), v.trim());
            if !KNOWN_KEYS.contains(&k) {
                return Err(Error::Config(format!("line {}: unknown key '{k}'", n + 1)));
            }
            if v.is_empty() {
                return Err(Error::Config(format!("line {}: key '{k}' has no value", n + 1)));
            }
            if entries.insert(k.to_string(), v.to_string()).is_some() {
                return Err(Error::Config(format!("line {}: duplicate key '{k}'", n + 1)));
            }
        }
        Ok(ExperimentConfig { entries })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    fn parse_value<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.get(key) {
            None => Ok(None),
            Some(v) => v.parse().map(Some).map_err(|_| Error::Config(format!("'{key}' has invalid value '{v}'"))),
        }
    }

    fn f64_or(&self, key: &str, default: f64) -> Result<f64> {
        Ok(self.parse_value(key)?.unwrap_or(default))
    }

    fn f64_req(&self, key: &str) -> Result<f64> {
        self.parse_value(key)?.ok_or_else(|| Error::Config(format!("missing required key '{key}'")))
    }

    /// Resolves the settings of one simulation mode.
    pub fn simulation(&self, mode: SimMode) -> Result<SimulationSetup> {
        let missing: Vec<&str> = required_keys(mode).into_iter().filter(|k| self.get(k).is_none()).collect();
        if !missing.is_empty() {
            return Err(Error::Config(format!("missing required keys: {}", missing.join(", "))));
        }
        let emitter = if mode == SimMode::Coherent {
            None
        } else {
            Some(EmitterModel::new(
                self.f64_req("emitter.r12_per_ns")?,
                self.f64_req("emitter.r21_per_ns")?,
                self.f64_req("emitter.r23_per_ns")?,
                self.f64_req("emitter.r31_per_ns")?,
                self.f64_req("emitter.rho")?,
            )?)
        };
        let dead_ns = self.f64_req("detector.dead_time_ns")?;
        if !(dead_ns.is_finite() && dead_ns >= 0.0) {
            return Err(Error::Config("detector.dead_time_ns must be non-negative".into()));
        }
        let detector = DetectorModel {
            efficiency: self.f64_req("detector.eta")?,
            dead_time_ps: (dead_ns * 1e3).round() as u64,
            jitter_fwhm_ps: self.f64_req("detector.jitter_fwhm_ps")?,
            dark_rate_per_s: self.f64_or("detector.dark_rate_per_s", 0.0)?,
        };
        detector.validate()?;
        let defaults = OpticsConfig::default();
        let optics = OpticsConfig {
            split_ratio: self.f64_or("optics.split_ratio", defaults.split_ratio)?,
            phase_rad: self.f64_or("optics.phase_rad", defaults.phase_rad)?,
            hwp_angle_deg: self.f64_or("optics.theta_deg", defaults.hwp_angle_deg)?,
            mz_loss: self.f64_or("optics.mz_loss", defaults.mz_loss)?,
            v_intrinsic: self.f64_or("optics.v_intrinsic", defaults.v_intrinsic)?,
        };
        optics.validate()?;

        let duration_s = self.f64_req("sim.duration_s")?;
        let seed: u64 = self.parse_value("sim.seed")?.unwrap();
        let stage = match self.get("sim.stage").unwrap_or("detected") {
            "detected" => SimStage::Detected,
            "emitted" => SimStage::Emitted,
            other => return Err(Error::Config(format!("sim.stage must be 'detected' or 'emitted', got '{other}'"))),
        };
        let mut excitation = match mode {
            SimMode::Pulsed => {
                ExcitationConfig::pulsed(duration_s, self.f64_req("pulse.excitation_probability")?, seed)
            }
            _ => ExcitationConfig::cw(duration_s, seed),
        };
        excitation.pulse_rate_mhz = self.f64_or("pulse.rate_mhz", ExcitationConfig::DEFAULT_PULSE_RATE_MHZ)?;
        excitation.validate()?;

        let coherent_rate_per_s = self.parse_value("coherent.rate_per_s")?;
        if let Some(r) = coherent_rate_per_s {
            if !(r > 0.0 && f64::is_finite(r)) {
                return Err(Error::Config("coherent.rate_per_s must be positive".into()));
            }
        }
        let start = self.f64_or("scan.theta_start_deg", 0.0)?;
        let stop = self.f64_or("scan.theta_stop_deg", 90.0)?;
        let step = self.f64_or("scan.theta_step_deg", 2.5)?;
        let scan_angles_deg = if mode == SimMode::MzScan { angle_grid(start, stop, step)? } else { Vec::new() };

        Ok(SimulationSetup {
            mode,
            stage,
            emitter,
            detector,
            optics,
            excitation,
            coherent_rate_per_s,
            scan_angles_deg,
        })
    }
}

/// Inclusive grid `start, start + step, …, stop`.
pub fn angle_grid(start: f64, stop: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0 && stop >= start && start.is_finite() && stop.is_finite()) {
        return Err(Error::Config(format!("bad scan grid {start}..{stop} step {step}")));
    }
    Ok(window_grid(start, stop, step))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationSetup {
    pub mode: SimMode,
    pub stage: SimStage,
    /// Absent in coherent mode.
    pub emitter: Option<EmitterModel>,
    pub detector: DetectorModel,
    pub optics: OpticsConfig,
    pub excitation: ExcitationConfig,
    pub coherent_rate_per_s: Option<f64>,
    pub scan_angles_deg: Vec<f64>,
}

// ---------------------------------------------------------------------------
// CSV

/// Shortest round-trip text of a float (Rust's `Debug` formatting).
pub fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

fn row(out: &mut String, fields: &[f64]) {
    let mut first = true;
    for f in fields {
        if !first {
            out.push(',');
        }
        first = false;
        out.push_str(&fmt_f64(*f));
    }
    out.push('\n');
}

/// `tau_ns,g2,stderr` with `tau_ns` at the bin centre.
pub fn g2_csv(hist: &G2Histogram) -> String {
    let mut s = String::from("tau_ns,g2,stderr\n");
    for i in 0..hist.len() {
        row(&mut s, &[hist.bin_center_ns(i), hist.g2[i], hist.stderr[i]]);
    }
    s
}

/// Which populations of an estimate to tabulate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PopulationKind {
    Detected,
    Corrected,
}

/// `window_ns,p0,p1,p2,p0_err,p1_err,p2_err,yc,yc_err`. Rows whose
/// contamination is undefined carry `NaN`; estimates without corrected
/// populations are skipped for [`PopulationKind::Corrected`].
pub fn populations_csv(estimates: &[PopulationEstimate], kind: PopulationKind) -> String {
    let mut s = String::from("window_ns,p0,p1,p2,p0_err,p1_err,p2_err,yc,yc_err\n");
    for e in estimates {
        let (p, yc) = match kind {
            PopulationKind::Detected => (e.detected, contamination_from_counts(e.n0, e.n1, e.n2)),
            PopulationKind::Corrected => match &e.corrected {
                Some(c) => (*c, contamination_with_err(c, 2)),
                None => continue,
            },
        };
        let (yc, yc_err) = yc.unwrap_or((f64::NAN, f64::NAN));
        row(&mut s, &[e.window_ns, p.p0, p.p1, p.p2, p.p0_err, p.p1_err, p.p2_err, yc, yc_err]);
    }
    s
}

/// `theta_deg,nH,nV,pH,pV`.
pub fn scan_csv(scan: &[ScanPoint]) -> String {
    let mut s = String::from("theta_deg,nH,nV,pH,pV\n");
    for p in scan {
        let (h, v) = p.probabilities();
        s.push_str(&format!("{},{},{},{},{}\n", fmt_f64(p.theta_deg), p.n_h, p.n_v, fmt_f64(h), fmt_f64(v)));
    }
    s
}

/// `t_ns,counts` with `t_ns` at the start of each bin.
pub fn lifetime_csv(hist: &LifetimeHistogram) -> String {
    let mut s = String::from("t_ns,counts\n");
    for (i, c) in hist.counts.iter().enumerate() {
        s.push_str(&format!("{},{}\n", fmt_f64(hist.bin_start_ns(i)), c));
    }
    s
}

/// Scan manifest: `theta_deg,file` with paths relative to the manifest.
pub fn manifest_csv(entries: &[(f64, String)]) -> String {
    let mut s = String::from("theta_deg,file\n");
    for (theta, file) in entries {
        s.push_str(&format!("{},{file}\n", fmt_f64(*theta)));
    }
    s
}

pub fn parse_manifest(text: &str) -> Result<Vec<(f64, String)>> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some("theta_deg,file") {
        return Err(Error::Config("manifest must start with 'theta_deg,file'".into()));
    }
    lines
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| {
            let (t, f) = l
                .split_once(',')
                .ok_or_else(|| Error::Config(format!("manifest line {}: expected theta_deg,file", n + 2)))?;
            let theta = t.trim().parse().map_err(|_| Error::Config(format!("manifest line {}: bad angle '{t}'", n + 2)))?;
            Ok((theta, f.trim().to_string()))
        })
        .collect()
}
