//! Domain types, corpus CSV ingestion, windowing, stratified splitting and the
//! seeded synthetic sEMG generator.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Corpus CSV header, in column order.
pub const CORPUS_HEADER: [&str; 6] = ["subject", "activity", "repetition", "sample_index", "ch1", "ch2"];

#[derive(Debug, Error)]
pub enum DataError {
    #[error("malformed header: expected `{expected}`, found `{found}`")]
    MalformedHeader { expected: String, found: String },
    #[error("line {line}: unknown activity code `{code}`")]
    UnknownActivityCode { line: u64, code: String },
    #[error("line {line}: {reason}")]
    MalformedRow { line: u64, reason: String },
    #[error("ragged channels in {subject}/{activity}/{repetition}: ch1 has {ch1} samples, ch2 has {ch2}")]
    RaggedChannels {
        subject: String,
        activity: ActivityClass,
        repetition: u32,
        ch1: usize,
        ch2: usize,
    },
    #[error("sample_index not contiguous in {subject}/{activity}/{repetition}: expected {expected}, found {found}")]
    NonContiguousIndex {
        subject: String,
        activity: ActivityClass,
        repetition: u32,
        expected: usize,
        found: usize,
    },
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("duplicate recording key {0}")]
    DuplicateRecording(RecordingKey),
    #[error("invalid recording: {0}")]
    InvalidRecording(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("window of {len} samples exceeds recording length {available}")]
    WindowTooLong { len: usize, available: usize },
    #[error("invalid window: {0}")]
    InvalidWindow(String),
    #[error("cell {subject}/{activity} has {count} repetitions; at least 2 are required")]
    InsufficientRepetitions {
        subject: String,
        activity: ActivityClass,
        count: usize,
    },
    #[error("invalid split protocol: {0}")]
    InvalidProtocol(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// The six grasps, in table order. The derived `Ord` follows this order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ActivityClass {
    #[serde(rename = "P")]
    Palmar,
    #[serde(rename = "L")]
    Lateral,
    #[serde(rename = "T")]
    Tip,
    #[serde(rename = "H")]
    Hook,
    #[serde(rename = "S")]
    Spherical,
    #[serde(rename = "C")]
    Cylindrical,
}

impl ActivityClass {
    pub const ALL: [ActivityClass; 6] = [
        ActivityClass::Palmar,
        ActivityClass::Lateral,
        ActivityClass::Tip,
        ActivityClass::Hook,
        ActivityClass::Spherical,
        ActivityClass::Cylindrical,
    ];

    pub fn code(self) -> char {
        match self {
            ActivityClass::Palmar => 'P',
            ActivityClass::Lateral => 'L',
            ActivityClass::Tip => 'T',
            ActivityClass::Hook => 'H',
            ActivityClass::Spherical => 'S',
            ActivityClass::Cylindrical => 'C',
        }
    }

    /// Position in the fixed class order P, L, T, H, S, C.
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn group(self) -> GroupLabel {
        match self {
            ActivityClass::Cylindrical | ActivityClass::Hook | ActivityClass::Spherical => GroupLabel::Power,
            ActivityClass::Lateral | ActivityClass::Tip | ActivityClass::Palmar => GroupLabel::Precision,
        }
    }
}

impl fmt::Display for ActivityClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.code())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown activity code `{0}`")]
pub struct UnknownActivity(pub String);

impl FromStr for ActivityClass {
    type Err = UnknownActivity;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "P" => Ok(ActivityClass::Palmar),
            "L" => Ok(ActivityClass::Lateral),
            "T" => Ok(ActivityClass::Tip),
            "H" => Ok(ActivityClass::Hook),
            "S" => Ok(ActivityClass::Spherical),
            "C" => Ok(ActivityClass::Cylindrical),
            other => Err(UnknownActivity(other.to_string())),
        }
    }
}

/// First-stage target. Encoded as 1 for power grasps and 0 for precision grasps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum GroupLabel {
    Precision = 0,
    Power = 1,
}

impl GroupLabel {
    pub fn value(self) -> u8 {
        self as u8
    }

    pub fn members(self) -> [ActivityClass; 3] {
        match self {
            GroupLabel::Power => [ActivityClass::Hook, ActivityClass::Spherical, ActivityClass::Cylindrical],
            GroupLabel::Precision => [ActivityClass::Palmar, ActivityClass::Lateral, ActivityClass::Tip],
        }
    }
}

impl fmt::Display for GroupLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GroupLabel::Power => write!(f, "power"),
            GroupLabel::Precision => write!(f, "precision"),
        }
    }
}

/// Identifies one repetition of one activity by one subject.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RecordingKey {
    pub subject: String,
    pub activity: ActivityClass,
    pub repetition: u32,
}

impl fmt::Display for RecordingKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}/{}", self.subject, self.activity, self.repetition)
    }
}

/// One repetition of one activity: two synchronized channels of equal length.
#[derive(Debug, Clone, PartialEq)]
pub struct Recording {
    subject: String,
    activity: ActivityClass,
    repetition: u32,
    rate_hz: f64,
    channels: [Vec<f64>; 2],
}

impl Recording {
    pub fn new(
        subject: impl Into<String>,
        activity: ActivityClass,
        repetition: u32,
        rate_hz: f64,
        channels: [Vec<f64>; 2],
    ) -> Result<Self, DataError> {
        if !(rate_hz > 0.0 && rate_hz.is_finite()) {
            return Err(DataError::InvalidRecording(format!("rate_hz must be positive, got {rate_hz}")));
        }
        if repetition == 0 {
            return Err(DataError::InvalidRecording("repetition must be a positive integer".into()));
        }
        let subject = subject.into();
        if channels[0].len() != channels[1].len() {
            return Err(DataError::RaggedChannels {
                subject,
                activity,
                repetition,
                ch1: channels[0].len(),
                ch2: channels[1].len(),
            });
        }
        if channels[0].len() < 2 {
            return Err(DataError::InvalidRecording(format!(
                "recordings need at least 2 samples per channel, got {}",
                channels[0].len()
            )));
        }
        Ok(Recording { subject, activity, repetition, rate_hz, channels })
    }

    pub fn subject(&self) -> &str {
        &self.subject
    }

    pub fn activity(&self) -> ActivityClass {
        self.activity
    }

    pub fn repetition(&self) -> u32 {
        self.repetition
    }

    pub fn rate_hz(&self) -> f64 {
        self.rate_hz
    }

    pub fn channels(&self) -> &[Vec<f64>; 2] {
        &self.channels
    }

    pub fn channel(&self, index: usize) -> &[f64] {
        &self.channels[index]
    }

    pub fn len(&self) -> usize {
        self.channels[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn key(&self) -> RecordingKey {
        RecordingKey {
            subject: self.subject.clone(),
            activity: self.activity,
            repetition: self.repetition,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentSource {
    pub subject: String,
    pub activity: ActivityClass,
    pub repetition: u32,
    pub channel: usize,
    pub offset: usize,
}

/// A contiguous window of one channel.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    samples: Vec<f64>,
    source: SegmentSource,
}

impl Segment {
    pub const MIN_LEN: usize = 3;

    pub fn new(samples: Vec<f64>, source: SegmentSource) -> Result<Self, DataError> {
        if samples.len() < Self::MIN_LEN {
            return Err(DataError::InvalidWindow(format!(
                "segments need at least {} samples, got {}",
                Self::MIN_LEN,
                samples.len()
            )));
        }
        Ok(Segment { samples, source })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn source(&self) -> &SegmentSource {
        &self.source
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Provenance {
    File(PathBuf),
    Synthetic { seed: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    recordings: Vec<Recording>,
    provenance: Provenance,
}

impl Corpus {
    pub fn new(recordings: Vec<Recording>, provenance: Provenance) -> Result<Self, DataError> {
        if recordings.is_empty() {
            return Err(DataError::EmptyCorpus);
        }
        let mut seen = std::collections::HashSet::with_capacity(recordings.len());
        for r in &recordings {
            if !seen.insert(r.key()) {
                return Err(DataError::DuplicateRecording(r.key()));
            }
        }
        Ok(Corpus { recordings, provenance })
    }

    pub fn recordings(&self) -> &[Recording] {
        &self.recordings
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn len(&self) -> usize {
        self.recordings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.recordings.is_empty()
    }

    pub fn keys(&self) -> Vec<RecordingKey> {
        self.recordings.iter().map(Recording::key).collect()
    }
}

// ---------------------------------------------------------------------------
// CSV

/// Reads a corpus file. `rate_hz` is not stored per row and must be supplied.
pub fn ingest_csv(path: impl AsRef<Path>, rate_hz: f64) -> Result<Corpus, DataError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path)?;
    let recordings = read_recordings(file, rate_hz)?;
    Corpus::new(recordings, Provenance::File(path.to_path_buf()))
}

#[derive(Default)]
struct PendingRecording {
    ch1: Vec<f64>,
    ch2: Vec<f64>,
    next_index: usize,
}

/// Parses corpus CSV rows into recordings ordered by key.
pub fn read_recordings<R: Read>(reader: R, rate_hz: f64) -> Result<Vec<Recording>, DataError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(reader);
    let header = rdr.headers()?.clone();
    let found: Vec<&str> = header.iter().map(str::trim).collect();
    if found != CORPUS_HEADER {
        return Err(DataError::MalformedHeader {
            expected: CORPUS_HEADER.join(","),
            found: found.join(","),
        });
    }

    let mut pending: BTreeMap<RecordingKey, PendingRecording> = BTreeMap::new();
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        if row.len() != CORPUS_HEADER.len() {
            return Err(DataError::MalformedRow {
                line,
                reason: format!("expected {} fields, found {}", CORPUS_HEADER.len(), row.len()),
            });
        }
        let subject = row[0].trim().to_string();
        if subject.is_empty() {
            return Err(DataError::MalformedRow { line, reason: "empty subject".into() });
        }
        let activity: ActivityClass = row[1]
            .trim()
            .parse()
            .map_err(|e: UnknownActivity| DataError::UnknownActivityCode { line, code: e.0 })?;
        let repetition: u32 = parse_field(&row[2], "repetition", line)?;
        let sample_index: usize = parse_field(&row[3], "sample_index", line)?;
        let ch1 = parse_optional_sample(&row[4], "ch1", line)?;
        let ch2 = parse_optional_sample(&row[5], "ch2", line)?;

        let key = RecordingKey { subject, activity, repetition };
        let entry = pending.entry(key.clone()).or_default();
        if sample_index != entry.next_index {
            return Err(DataError::NonContiguousIndex {
                subject: key.subject,
                activity: key.activity,
                repetition: key.repetition,
                expected: entry.next_index,
                found: sample_index,
            });
        }
        entry.next_index += 1;
        entry.ch1.extend(ch1);
        entry.ch2.extend(ch2);
    }

    if pending.is_empty() {
        return Err(DataError::EmptyCorpus);
    }
    pending
        .into_iter()
        .map(|(key, p)| Recording::new(key.subject, key.activity, key.repetition, rate_hz, [p.ch1, p.ch2]))
        .collect()
}

fn parse_field<T: FromStr>(raw: &str, name: &str, line: u64) -> Result<T, DataError> {
    raw.trim().parse().map_err(|_| DataError::MalformedRow {
        line,
        reason: format!("cannot parse {name} from `{raw}`"),
    })
}

// An empty cell means the channel has no sample on this row.
fn parse_optional_sample(raw: &str, name: &str, line: u64) -> Result<Option<f64>, DataError> {
    let raw = raw.trim();
    if raw.is_empty() {
        return Ok(None);
    }
    let v: f64 = parse_field(raw, name, line)?;
    if !v.is_finite() {
        return Err(DataError::MalformedRow { line, reason: format!("{name} is not finite") });
    }
    Ok(Some(v))
}

/// Formats a sample with 17 significant digits, which round-trips every `f64`.
pub fn format_sample(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_csv<W: Write>(corpus: &Corpus, writer: W) -> Result<(), DataError> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(CORPUS_HEADER)?;
    for rec in corpus.recordings() {
        let rep = rec.repetition().to_string();
        let code = rec.activity().to_string();
        for (i, (a, b)) in rec.channel(0).iter().zip(rec.channel(1)).enumerate() {
            wtr.write_record([
                rec.subject(),
                code.as_str(),
                rep.as_str(),
                i.to_string().as_str(),
                format_sample(*a).as_str(),
                format_sample(*b).as_str(),
            ])?;
        }
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_csv_file(corpus: &Corpus, path: impl AsRef<Path>) -> Result<(), DataError> {
    let file = std::fs::File::create(path)?;
    write_csv(corpus, std::io::BufWriter::new(file))
}

// ---------------------------------------------------------------------------
// Synthetic corpus

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub subjects: usize,
    pub reps_per_activity: usize,
    pub rate_hz: f64,
    pub duration_s: f64,
    pub seed: u64,
    /// Ratio of the power-group RMS envelope to the precision-group one.
    pub power_rms_scale: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            subjects: 5,
            reps_per_activity: 30,
            rate_hz: 500.0,
            duration_s: 6.0,
            seed: 42,
            power_rms_scale: 3.0,
        }
    }
}

impl SynthConfig {
    pub fn samples_per_channel(&self) -> usize {
        (self.rate_hz * self.duration_s).round() as usize
    }

    pub fn validate(&self) -> Result<(), DataError> {
        let bad = |m: String| Err(DataError::InvalidConfig(m));
        if self.subjects == 0 {
            return bad("subjects must be at least 1".into());
        }
        if self.reps_per_activity < 2 {
            return bad(format!(
                "reps_per_activity must be at least 2 for a train/test split, got {}",
                self.reps_per_activity
            ));
        }
        if !(self.rate_hz > 0.0 && self.rate_hz.is_finite()) {
            return bad(format!("rate_hz must be positive, got {}", self.rate_hz));
        }
        if !(self.duration_s > 0.0 && self.duration_s.is_finite()) {
            return bad(format!("duration_s must be positive, got {}", self.duration_s));
        }
        if self.samples_per_channel() < Segment::MIN_LEN {
            return bad(format!(
                "rate × duration gives {} samples; at least {} are required",
                self.samples_per_channel(),
                Segment::MIN_LEN
            ));
        }
        if !(self.power_rms_scale > 1.0 && self.power_rms_scale.is_finite()) {
            return bad(format!("power_rms_scale must exceed 1, got {}", self.power_rms_scale));
        }
        Ok(())
    }
}

/// Per-activity, per-channel generator parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelSignature {
    /// AR(2) coefficients of the coloring filter, x_n = a1 x_{n-1} + a2 x_{n-2} + e_n.
    pub ar: [f64; 2],
    /// Relative RMS level before the group scale is applied.
    pub level: f64,
    /// Depth and frequency (Hz) of the sinusoidal amplitude modulation.
    pub mod_depth: f64,
    pub mod_hz: f64,
}

/// AR(2) offset separating power-group spectra from precision-group spectra.
const POWER_AR_SHIFT: [f64; 2] = [0.30, -0.10];

/// Generator signature of `activity` on channel `channel` (0 = flexor, 1 = extensor).
///
/// Grasps within a group differ only slightly in spectrum and channel
/// balance. The power group reuses the precision rows with a shifted AR
/// filter, so the mean RMS ratio between groups equals the configured scale.
pub fn signature(activity: ActivityClass, channel: usize) -> ChannelSignature {
    // (ar1, ar2, level, depth, mod_hz) per channel; rows P/H, L/S, T/C
    let table: [[(f64, f64, f64, f64, f64); 2]; 3] = [
        [(0.30, -0.10, 1.00, 0.20, 0.9), (0.22, -0.05, 0.85, 0.30, 1.3)],
        [(0.38, -0.14, 0.90, 0.28, 1.2), (0.28, -0.09, 1.00, 0.22, 1.0)],
        [(0.24, -0.06, 1.10, 0.24, 1.1), (0.34, -0.12, 0.92, 0.26, 1.1)],
    ];
    let row = match activity {
        ActivityClass::Palmar | ActivityClass::Hook => 0,
        ActivityClass::Lateral | ActivityClass::Spherical => 1,
        ActivityClass::Tip | ActivityClass::Cylindrical => 2,
    };
    let (mut a1, mut a2, level, mod_depth, mod_hz) = table[row][channel];
    if activity.group() == GroupLabel::Power {
        a1 += POWER_AR_SHIFT[0];
        a2 += POWER_AR_SHIFT[1];
    }
    ChannelSignature { ar: [a1, a2], level, mod_depth, mod_hz }
}

/// Stationary variance of an AR(2) process driven by unit-variance noise.
fn ar2_stationary_variance(a1: f64, a2: f64) -> f64 {
    (1.0 - a2) / ((1.0 + a2) * ((1.0 - a2) * (1.0 - a2) - a1 * a1))
}

/// Base precision-group RMS in arbitrary units.
const BASE_LEVEL: f64 = 0.1;
const SUBJECT_GAIN_SD: f64 = 0.10;
const REPETITION_GAIN_SD: f64 = 0.12;
const CHANNEL_GAIN_SD: f64 = 0.08;
const AR_JITTER_SD: f64 = 0.04;

/// Builds a deterministic synthetic corpus: amplitude-modulated AR(2)-colored
/// Gaussian noise with per-activity signatures, per-subject gains and
/// per-repetition jitter.
pub fn synth_corpus(cfg: &SynthConfig) -> Result<Corpus, DataError> {
    cfg.validate()?;
    let n = cfg.samples_per_channel();
    let mut recordings = Vec::with_capacity(cfg.subjects * 6 * cfg.reps_per_activity);

    for s in 0..cfg.subjects {
        let subject = format!("subj{}", s + 1);
        let mut subject_rng = stream_rng(cfg.seed, s as u64, u64::MAX);
        let subject_gain: [f64; 2] = [
            (SUBJECT_GAIN_SD * normal(&mut subject_rng)).exp(),
            (SUBJECT_GAIN_SD * normal(&mut subject_rng)).exp(),
        ];
        for activity in ActivityClass::ALL {
            let group_scale = match activity.group() {
                GroupLabel::Power => cfg.power_rms_scale,
                GroupLabel::Precision => 1.0,
            };
            for rep in 1..=cfg.reps_per_activity {
                let stream = ((activity.index() * cfg.reps_per_activity) + rep - 1) as u64;
                let mut rng = stream_rng(cfg.seed, s as u64, stream);
                let rep_gain = (1.0 + REPETITION_GAIN_SD * normal(&mut rng)).max(0.2);
                let channels: [Vec<f64>; 2] = std::array::from_fn(|ch| {
                    let sig = signature(activity, ch);
                    let gain = rep_gain
                        * subject_gain[ch]
                        * (1.0 + CHANNEL_GAIN_SD * normal(&mut rng)).max(0.2)
                        * group_scale
                        * sig.level
                        * BASE_LEVEL;
                    synth_channel(&mut rng, &sig, gain, n, cfg.rate_hz)
                });
                recordings.push(Recording::new(subject.clone(), activity, rep as u32, cfg.rate_hz, channels)?);
            }
        }
    }
    Corpus::new(recordings, Provenance::Synthetic { seed: cfg.seed })
}

fn stream_rng(seed: u64, subject: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ subject.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    rng.set_stream(stream);
    rng
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn synth_channel(rng: &mut ChaCha8Rng, sig: &ChannelSignature, gain: f64, n: usize, rate_hz: f64) -> Vec<f64> {
    let mut a1 = sig.ar[0] + AR_JITTER_SD * normal(rng);
    let mut a2 = sig.ar[1] + AR_JITTER_SD * normal(rng);
    // keep the filter inside the AR(2) stationarity triangle
    a2 = a2.clamp(-0.9, 0.9);
    let bound = 0.95 * (1.0 - a2);
    a1 = a1.clamp(-bound, bound);
    let norm = ar2_stationary_variance(a1, a2).sqrt().recip();
    let phase = rng.random::<f64>() * std::f64::consts::TAU;
    let omega = std::f64::consts::TAU * sig.mod_hz / rate_hz;

    // burn-in so the filter starts near stationarity
    let burn_in = 64;
    let (mut x1, mut x2) = (0.0_f64, 0.0_f64);
    let mut out = Vec::with_capacity(n);
    for i in 0..(n + burn_in) {
        let x = a1 * x1 + a2 * x2 + normal(rng);
        x2 = x1;
        x1 = x;
        if i >= burn_in {
            let t = (i - burn_in) as f64;
            let envelope = 1.0 + sig.mod_depth * (omega * t + phase).sin();
            out.push(gain * envelope * norm * x);
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Windowing

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Window {
    #[default]
    Full,
    Sliding { len: usize, step: usize },
}

impl Window {
    /// Start offsets of every window position over `n` samples.
    pub fn offsets(&self, n: usize) -> Result<Vec<(usize, usize)>, DataError> {
        match *self {
            Window::Full => {
                if n < Segment::MIN_LEN {
                    return Err(DataError::InvalidWindow(format!(
                        "segments need at least {} samples, recording has {n}",
                        Segment::MIN_LEN
                    )));
                }
                Ok(vec![(0, n)])
            }
            Window::Sliding { len, step } => {
                if len < Segment::MIN_LEN {
                    return Err(DataError::InvalidWindow(format!(
                        "window length must be at least {}, got {len}",
                        Segment::MIN_LEN
                    )));
                }
                if step == 0 {
                    return Err(DataError::InvalidWindow("window step must be at least 1".into()));
                }
                if len > n {
                    return Err(DataError::WindowTooLong { len, available: n });
                }
                Ok((0..=(n - len) / step).map(|i| (i * step, len)).collect())
            }
        }
    }
}

impl fmt::Display for Window {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Window::Full => write!(f, "full"),
            Window::Sliding { len, step } => write!(f, "sliding:{len}:{step}"),
        }
    }
}

impl FromStr for Window {
    type Err = DataError;

    /// Accepts `full` or `sliding:<len>:<step>`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "full" {
            return Ok(Window::Full);
        }
        let parts: Vec<&str> = s.split(':').collect();
        match parts.as_slice() {
            ["sliding", len, step] => {
                let len = len.parse().map_err(|_| DataError::InvalidWindow(format!("bad length `{len}`")))?;
                let step = step.parse().map_err(|_| DataError::InvalidWindow(format!("bad step `{step}`")))?;
                if len < Segment::MIN_LEN || step == 0 {
                    return Err(DataError::InvalidWindow(format!(
                        "window length must be at least {} and step at least 1, got {len}:{step}",
                        Segment::MIN_LEN
                    )));
                }
                Ok(Window::Sliding { len, step })
            }
            _ => Err(DataError::InvalidWindow(format!(
                "expected `full` or `sliding:<len>:<step>`, got `{s}`"
            ))),
        }
    }
}

/// Cuts both channels of `rec` into segments. The outer vector is indexed by
/// channel; each inner vector is ordered by offset.
pub fn segment(rec: &Recording, window: Window) -> Result<Vec<Vec<Segment>>, DataError> {
    let offsets = window.offsets(rec.len())?;
    (0..2)
        .map(|ch| {
            offsets
                .iter()
                .map(|&(offset, len)| {
                    Segment::new(
                        rec.channel(ch)[offset..offset + len].to_vec(),
                        SegmentSource {
                            subject: rec.subject().to_string(),
                            activity: rec.activity(),
                            repetition: rec.repetition(),
                            channel: ch,
                            offset,
                        },
                    )
                })
                .collect()
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Splitting

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "protocol", rename_all = "snake_case")]
pub enum SplitProtocol {
    Holdout { train_fraction: f64, seed: u64 },
    KFold { k: usize, seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HoldoutSplit {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Partition {
    Holdout(HoldoutSplit),
    Folds(Vec<Vec<usize>>),
}

impl Partition {
    /// Train/test view of the partition; for k folds, fold `held_out` is the test set.
    pub fn holdout(&self, held_out: usize) -> Option<HoldoutSplit> {
        match self {
            Partition::Holdout(h) => Some(h.clone()),
            Partition::Folds(folds) => {
                let test = folds.get(held_out)?.clone();
                let mut train: Vec<usize> = folds
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| *i != held_out)
                    .flat_map(|(_, f)| f.iter().copied())
                    .collect();
                train.sort_unstable();
                Some(HoldoutSplit { train, test })
            }
        }
    }
}

/// Number of training repetitions taken from a cell of `reps` under `fraction`.
pub fn holdout_train_count(fraction: f64, reps: usize) -> usize {
    // the epsilon absorbs representation error such as 0.7 * 30 = 20.999...
    let raw = (fraction * reps as f64 + 1e-9).floor() as usize;
    raw.clamp(1, reps - 1)
}

/// Stratified split of `keys` by (subject, activity). Returned indices point into `keys`.
pub fn split_keys(keys: &[RecordingKey], protocol: SplitProtocol) -> Result<Partition, DataError> {
    let mut cells: BTreeMap<(&str, ActivityClass), Vec<(u32, usize)>> = BTreeMap::new();
    for (i, k) in keys.iter().enumerate() {
        cells.entry((k.subject.as_str(), k.activity)).or_default().push((k.repetition, i));
    }
    for ((subject, activity), members) in &cells {
        if members.len() < 2 {
            return Err(DataError::InsufficientRepetitions {
                subject: subject.to_string(),
                activity: *activity,
                count: members.len(),
            });
        }
    }

    let seed = match protocol {
        SplitProtocol::Holdout { train_fraction, seed } => {
            if !(train_fraction > 0.0 && train_fraction < 1.0) {
                return Err(DataError::InvalidProtocol(format!(
                    "train fraction must lie in (0, 1), got {train_fraction}"
                )));
            }
            seed
        }
        SplitProtocol::KFold { k, seed } => {
            if k < 2 {
                return Err(DataError::InvalidProtocol(format!("k must be at least 2, got {k}")));
            }
            seed
        }
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut shuffled_cells = Vec::with_capacity(cells.len());
    for (_, mut members) in cells {
        members.sort_unstable();
        let mut idx: Vec<usize> = members.into_iter().map(|(_, i)| i).collect();
        idx.shuffle(&mut rng);
        shuffled_cells.push(idx);
    }

    match protocol {
        SplitProtocol::Holdout { train_fraction, .. } => {
            let mut train = Vec::new();
            let mut test = Vec::new();
            for idx in shuffled_cells {
                let n_train = holdout_train_count(train_fraction, idx.len());
                train.extend_from_slice(&idx[..n_train]);
                test.extend_from_slice(&idx[n_train..]);
            }
            train.sort_unstable();
            test.sort_unstable();
            Ok(Partition::Holdout(HoldoutSplit { train, test }))
        }
        SplitProtocol::KFold { k, .. } => {
            let mut folds = vec![Vec::new(); k];
            for idx in shuffled_cells {
                for (pos, i) in idx.into_iter().enumerate() {
                    folds[pos % k].push(i);
                }
            }
            folds.iter_mut().for_each(|f| f.sort_unstable());
            Ok(Partition::Folds(folds))
        }
    }
}

/// Stratified split of a corpus' recordings.
pub fn split(corpus: &Corpus, protocol: SplitProtocol) -> Result<Partition, DataError> {
    split_keys(&corpus.keys(), protocol)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(n: usize) -> Recording {
        let ch: Vec<f64> = (0..n).map(|i| i as f64).collect();
        Recording::new("s", ActivityClass::Tip, 1, 100.0, [ch.clone(), ch]).unwrap()
    }

    #[test]
    fn activity_codes_round_trip() {
        for a in ActivityClass::ALL {
            assert_eq!(a.to_string().parse::<ActivityClass>().unwrap(), a);
        }
        assert_eq!(ActivityClass::ALL.len(), 6);
        assert!("X".parse::<ActivityClass>().is_err());
    }

    #[test]
    fn group_encoding() {
        assert_eq!(GroupLabel::Power.value(), 1);
        assert_eq!(GroupLabel::Precision.value(), 0);
    }

    #[test]
    fn recording_rejects_ragged_and_bad_rate() {
        let r = Recording::new("s", ActivityClass::Hook, 1, 10.0, [vec![0.0; 3], vec![0.0; 4]]);
        assert!(matches!(r, Err(DataError::RaggedChannels { .. })));
        let r = Recording::new("s", ActivityClass::Hook, 1, 0.0, [vec![0.0; 3], vec![0.0; 3]]);
        assert!(matches!(r, Err(DataError::InvalidRecording(_))));
        let r = Recording::new("s", ActivityClass::Hook, 1, 10.0, [vec![0.0; 1], vec![0.0; 1]]);
        assert!(matches!(r, Err(DataError::InvalidRecording(_))));
    }

    #[test]
    fn full_window_yields_one_segment_per_channel() {
        let segs = segment(&rec(10), Window::Full).unwrap();
        assert_eq!(segs.len(), 2);
        assert!(segs.iter().all(|c| c.len() == 1 && c[0].len() == 10));
    }

    #[test]
    fn sliding_window_offsets() {
        let segs = segment(&rec(10), Window::Sliding { len: 4, step: 2 }).unwrap();
        for ch in &segs {
            let offsets: Vec<usize> = ch.iter().map(|s| s.source().offset).collect();
            assert_eq!(offsets, vec![0, 2, 4, 6]);
            assert_eq!(ch[1].samples(), &[2.0, 3.0, 4.0, 5.0]);
        }
        assert_eq!(segs[1][0].source().channel, 1);
    }

    #[test]
    fn sliding_window_too_long() {
        let err = segment(&rec(10), Window::Sliding { len: 11, step: 1 }).unwrap_err();
        assert!(matches!(err, DataError::WindowTooLong { len: 11, available: 10 }));
        assert!(segment(&rec(10), Window::Sliding { len: 2, step: 1 }).is_err());
        assert!(segment(&rec(10), Window::Sliding { len: 4, step: 0 }).is_err());
    }

    #[test]
    fn window_parse() {
        assert_eq!("full".parse::<Window>().unwrap(), Window::Full);
        assert_eq!("sliding:4:2".parse::<Window>().unwrap(), Window::Sliding { len: 4, step: 2 });
        assert!("sliding:4".parse::<Window>().is_err());
    }

    #[test]
    fn csv_unknown_activity() {
        let text = "subject,activity,repetition,sample_index,ch1,ch2\ns1,X,1,0,0.1,0.2\n";
        let err = read_recordings(text.as_bytes(), 500.0).unwrap_err();
        assert!(matches!(err, DataError::UnknownActivityCode { line: 2, ref code } if code == "X"));
    }

    #[test]
    fn csv_ragged_channels() {
        let text = "subject,activity,repetition,sample_index,ch1,ch2\ns1,P,1,0,0.1,0.2\ns1,P,1,1,0.3,\n";
        let err = read_recordings(text.as_bytes(), 500.0).unwrap_err();
        assert!(matches!(err, DataError::RaggedChannels { ch1: 2, ch2: 1, .. }));
    }

    #[test]
    fn csv_bad_header_and_empty() {
        let err = read_recordings("a,b,c\n".as_bytes(), 500.0).unwrap_err();
        assert!(matches!(err, DataError::MalformedHeader { .. }));
        let err = read_recordings("subject,activity,repetition,sample_index,ch1,ch2\n".as_bytes(), 500.0).unwrap_err();
        assert!(matches!(err, DataError::EmptyCorpus));
    }

    #[test]
    fn csv_non_contiguous_index() {
        let text = "subject,activity,repetition,sample_index,ch1,ch2\ns1,P,1,0,0,0\ns1,P,1,2,0,0\n";
        let err = read_recordings(text.as_bytes(), 500.0).unwrap_err();
        assert!(matches!(err, DataError::NonContiguousIndex { expected: 1, found: 2, .. }));
    }

    #[test]
    fn csv_malformed_value_reports_line() {
        let text = "subject,activity,repetition,sample_index,ch1,ch2\ns1,P,1,0,0,0\ns1,P,1,1,abc,0\n";
        let err = read_recordings(text.as_bytes(), 500.0).unwrap_err();
        assert!(matches!(err, DataError::MalformedRow { line: 3, .. }), "{err}");
    }

    #[test]
    fn synth_counts() {
        let cfg = SynthConfig { subjects: 5, reps_per_activity: 30, rate_hz: 500.0, duration_s: 6.0, ..Default::default() };
        let corpus = synth_corpus(&cfg).unwrap();
        assert_eq!(corpus.len(), 900);
        assert!(corpus.recordings().iter().all(|r| r.len() == 3000));
    }

    #[test]
    fn synth_rejects_single_rep() {
        let cfg = SynthConfig { reps_per_activity: 1, ..Default::default() };
        assert!(matches!(synth_corpus(&cfg), Err(DataError::InvalidConfig(_))));
        let cfg = SynthConfig { power_rms_scale: 1.0, ..Default::default() };
        assert!(matches!(synth_corpus(&cfg), Err(DataError::InvalidConfig(_))));
    }

    #[test]
    fn signatures_pairwise_distinct_per_channel() {
        for ch in 0..2 {
            for (i, a) in ActivityClass::ALL.iter().enumerate() {
                for b in &ActivityClass::ALL[i + 1..] {
                    assert_ne!(signature(*a, ch), signature(*b, ch), "{a} vs {b} on channel {ch}");
                }
            }
        }
    }

    #[test]
    fn stationary_variance_matches_ar1_limit() {
        // a2 = 0 reduces to 1 / (1 - a1^2)
        assert!((ar2_stationary_variance(0.5, 0.0) - 1.0 / 0.75).abs() < 1e-12);
    }

    #[test]
    fn holdout_rounding() {
        assert_eq!(holdout_train_count(0.7, 30), 21);
        assert_eq!(holdout_train_count(0.5, 2), 1);
        assert_eq!(holdout_train_count(0.01, 2), 1);
        assert_eq!(holdout_train_count(0.99, 2), 1);
    }

    fn keys(subjects: usize, reps: u32) -> Vec<RecordingKey> {
        let mut out = Vec::new();
        for s in 0..subjects {
            for a in ActivityClass::ALL {
                for r in 1..=reps {
                    out.push(RecordingKey { subject: format!("s{s}"), activity: a, repetition: r });
                }
            }
        }
        out
    }

    #[test]
    fn holdout_per_cell_counts() {
        let ks = keys(2, 30);
        let Partition::Holdout(h) = split_keys(&ks, SplitProtocol::Holdout { train_fraction: 0.7, seed: 3 }).unwrap() else {
            panic!("expected holdout");
        };
        let mut per_cell: BTreeMap<(String, ActivityClass), (usize, usize)> = BTreeMap::new();
        for &i in &h.train {
            per_cell.entry((ks[i].subject.clone(), ks[i].activity)).or_default().0 += 1;
        }
        for &i in &h.test {
            per_cell.entry((ks[i].subject.clone(), ks[i].activity)).or_default().1 += 1;
        }
        assert_eq!(per_cell.len(), 12);
        assert!(per_cell.values().all(|&c| c == (21, 9)));
    }

    #[test]
    fn kfold_per_cell_counts() {
        let ks = keys(1, 30);
        let Partition::Folds(folds) = split_keys(&ks, SplitProtocol::KFold { k: 5, seed: 3 }).unwrap() else {
            panic!("expected folds");
        };
        assert_eq!(folds.len(), 5);
        for fold in &folds {
            for a in ActivityClass::ALL {
                assert_eq!(fold.iter().filter(|&&i| ks[i].activity == a).count(), 6);
            }
        }
        let mut all: Vec<usize> = folds.concat();
        all.sort_unstable();
        assert_eq!(all, (0..ks.len()).collect::<Vec<_>>());
    }

    #[test]
    fn split_requires_two_reps() {
        let ks = keys(1, 1);
        let err = split_keys(&ks, SplitProtocol::Holdout { train_fraction: 0.7, seed: 1 }).unwrap_err();
        assert!(matches!(err, DataError::InsufficientRepetitions { count: 1, .. }));
        let ks = keys(1, 4);
        assert!(split_keys(&ks, SplitProtocol::KFold { k: 1, seed: 1 }).is_err());
        assert!(split_keys(&ks, SplitProtocol::Holdout { train_fraction: 1.0, seed: 1 }).is_err());
    }

    #[test]
    fn split_is_seed_deterministic() {
        let ks = keys(2, 10);
        let p = SplitProtocol::Holdout { train_fraction: 0.6, seed: 11 };
        assert_eq!(split_keys(&ks, p).unwrap(), split_keys(&ks, p).unwrap());
        let q = SplitProtocol::Holdout { train_fraction: 0.6, seed: 12 };
        assert_ne!(split_keys(&ks, p).unwrap(), split_keys(&ks, q).unwrap());
    }
}
