//! Time-domain sEMG features and per-recording feature vectors.
//!
//! Every feature works on a plain sample slice. [`extract`] windows a
//! [`Recording`] and concatenates channel 1 features then channel 2 features
//! in the fixed family order MAV, STD, RMS, SSC, WL, AR a_1..a_p, skewness,
//! kurtosis.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{segment, ActivityClass, DataError, Recording, RecordingKey, UnknownActivity, Window};

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("segment too short: {needed} samples needed, got {got}")]
    SegmentTooShort { needed: usize, got: usize },
    #[error("degenerate segment: {0}")]
    DegenerateSegment(&'static str),
    #[error("invalid feature config: {0}")]
    InvalidConfig(String),
    #[error("channel {channel}, window {window}: {source}")]
    Extract {
        channel: usize,
        window: usize,
        #[source]
        source: Box<FeatureError>,
    },
    #[error("{key}: {source}")]
    Recording {
        key: RecordingKey,
        #[source]
        source: Box<FeatureError>,
    },
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("feature csv line {line}: {reason}")]
    MalformedRow { line: u64, reason: String },
    #[error("feature csv header: {0}")]
    MalformedHeader(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

fn require_len(x: &[f64], needed: usize) -> Result<(), FeatureError> {
    if x.len() < needed {
        Err(FeatureError::SegmentTooShort { needed, got: x.len() })
    } else {
        Ok(())
    }
}

fn is_constant(x: &[f64]) -> bool {
    x.iter().all(|&v| v == x[0])
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Mean absolute value, `(1/n) Σ |x_i|`.
pub fn mav(x: &[f64]) -> Result<f64, FeatureError> {
    require_len(x, 1)?;
    Ok(x.iter().map(|v| v.abs()).sum::<f64>() / x.len() as f64)
}

/// Sample standard deviation (n − 1 denominator).
pub fn std_dev(x: &[f64]) -> Result<f64, FeatureError> {
    require_len(x, 2)?;
    if is_constant(x) {
        return Ok(0.0);
    }
    let mu = mean(x);
    let ss: f64 = x.iter().map(|v| (v - mu) * (v - mu)).sum();
    Ok((ss / (x.len() - 1) as f64).sqrt())
}

pub fn rms(x: &[f64]) -> Result<f64, FeatureError> {
    require_len(x, 1)?;
    Ok((x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt())
}

/// Slope sign changes: interior samples that are strict local maxima or minima.
/// Plateaus never count.
pub fn ssc(x: &[f64]) -> Result<usize, FeatureError> {
    require_len(x, 3)?;
    Ok(x.windows(3)
        .filter(|w| {
            let (back, fwd) = (w[1] - w[0], w[1] - w[2]);
            (back > 0.0 && fwd > 0.0) || (back < 0.0 && fwd < 0.0)
        })
        .count())
}

pub fn waveform_length(x: &[f64]) -> Result<f64, FeatureError> {
    require_len(x, 2)?;
    Ok(x.windows(2).map(|w| (w[1] - w[0]).abs()).sum())
}

/// Fitted autoregressive predictor `x̂_n = Σ_k coeffs[k-1] · x_{n-k}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ArFit {
    pub coeffs: Vec<f64>,
    /// Final Levinson–Durbin prediction error power.
    pub residual_variance: f64,
}

/// Biased autocorrelation `r_k = (1/n) Σ_t x_t x_{t-k}` for lags `0..=max_lag`.
/// The signal is not mean-removed.
pub fn autocorrelation(x: &[f64], max_lag: usize) -> Vec<f64> {
    let n = x.len() as f64;
    (0..=max_lag)
        .map(|k| x[k..].iter().zip(x).map(|(a, b)| a * b).sum::<f64>() / n)
        .collect()
}

/// Yule–Walker AR(p) estimate via the Levinson–Durbin recursion.
pub fn ar_coeffs(x: &[f64], order: usize) -> Result<ArFit, FeatureError> {
    if order == 0 {
        return Err(FeatureError::InvalidConfig("AR order must be at least 1".into()));
    }
    require_len(x, order + 1)?;
    let r = autocorrelation(x, order);
    if r[0] <= 0.0 {
        return Err(FeatureError::DegenerateSegment("zero autocorrelation at lag 0"));
    }

    let mut a = vec![0.0; order];
    let mut prev = vec![0.0; order];
    let mut err = r[0];
    for m in 1..=order {
        let acc = r[m] - (1..m).map(|j| a[j - 1] * r[m - j]).sum::<f64>();
        let k = acc / err;
        prev[..m - 1].copy_from_slice(&a[..m - 1]);
        for j in 1..m {
            a[j - 1] = prev[j - 1] - k * prev[m - j - 1];
        }
        a[m - 1] = k;
        err *= 1.0 - k * k;
        if !(err > 0.0) {
            return Err(FeatureError::DegenerateSegment("non-positive prediction error"));
        }
    }
    Ok(ArFit { coeffs: a, residual_variance: err })
}

/// Population central moments (m2, m3, m4).
fn central_moments(x: &[f64]) -> Result<(f64, f64, f64), FeatureError> {
    require_len(x, 2)?;
    if is_constant(x) {
        return Err(FeatureError::DegenerateSegment("zero variance"));
    }
    let mu = mean(x);
    let n = x.len() as f64;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for v in x {
        let d = v - mu;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    if m2 == 0.0 {
        return Err(FeatureError::DegenerateSegment("zero variance"));
    }
    Ok((m2 / n, m3 / n, m4 / n))
}

/// `m3 / m2^{3/2}` with population moments.
pub fn skewness(x: &[f64]) -> Result<f64, FeatureError> {
    let (m2, m3, _) = central_moments(x)?;
    Ok(m3 / m2.powf(1.5))
}

/// `m4 / m2²` with population moments (not excess kurtosis).
pub fn kurtosis(x: &[f64]) -> Result<f64, FeatureError> {
    let (m2, _, m4) = central_moments(x)?;
    Ok(m4 / (m2 * m2))
}

// ---------------------------------------------------------------------------
// Feature vectors

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureFamily {
    Mav,
    Std,
    Rms,
    Ssc,
    Wl,
    Ar,
    Skew,
    Kurt,
}

impl FeatureFamily {
    pub const ALL: [FeatureFamily; 8] = [
        FeatureFamily::Mav,
        FeatureFamily::Std,
        FeatureFamily::Rms,
        FeatureFamily::Ssc,
        FeatureFamily::Wl,
        FeatureFamily::Ar,
        FeatureFamily::Skew,
        FeatureFamily::Kurt,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FeatureFamily::Mav => "mav",
            FeatureFamily::Std => "std",
            FeatureFamily::Rms => "rms",
            FeatureFamily::Ssc => "ssc",
            FeatureFamily::Wl => "wl",
            FeatureFamily::Ar => "ar",
            FeatureFamily::Skew => "skew",
            FeatureFamily::Kurt => "kurt",
        }
    }
}

impl fmt::Display for FeatureFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FeatureFamily {
    type Err = FeatureError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        FeatureFamily::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| FeatureError::InvalidConfig(format!("unknown feature family `{s}`")))
    }
}

pub const CHANNELS: usize = 2;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub ar_order: usize,
    /// Families to compute. Output order is always the canonical family order.
    pub include: Vec<FeatureFamily>,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig { ar_order: 4, include: FeatureFamily::ALL.to_vec() }
    }
}

impl FeatureConfig {
    pub fn new(ar_order: usize, mut include: Vec<FeatureFamily>) -> Result<Self, FeatureError> {
        include.sort_unstable();
        include.dedup();
        let cfg = FeatureConfig { ar_order, include };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_ar_order(ar_order: usize) -> Result<Self, FeatureError> {
        Self::new(ar_order, FeatureFamily::ALL.to_vec())
    }

    pub fn validate(&self) -> Result<(), FeatureError> {
        if self.ar_order == 0 {
            return Err(FeatureError::InvalidConfig("AR order must be at least 1".into()));
        }
        if self.include.is_empty() {
            return Err(FeatureError::InvalidConfig("no feature families selected".into()));
        }
        if self.include.windows(2).any(|w| w[0] >= w[1]) {
            return Err(FeatureError::InvalidConfig("families must be unique and in canonical order".into()));
        }
        Ok(())
    }

    /// Feature names of one channel, without the channel prefix.
    pub fn channel_layout(&self) -> Vec<String> {
        let mut out = Vec::new();
        for family in &self.include {
            if *family == FeatureFamily::Ar {
                out.extend((1..=self.ar_order).map(|k| format!("ar{k}")));
            } else {
                out.push(family.name().to_string());
            }
        }
        out
    }

    /// Full column labels, e.g. `ch1_mav, ..., ch2_kurt`.
    pub fn layout(&self) -> Vec<String> {
        let per_channel = self.channel_layout();
        (1..=CHANNELS)
            .flat_map(|ch| per_channel.iter().map(move |name| format!("ch{ch}_{name}")))
            .collect()
    }

    pub fn dimension(&self) -> usize {
        CHANNELS * self.channel_layout().len()
    }

    /// Recovers the config that produced `labels`.
    pub fn from_layout<S: AsRef<str>>(labels: &[S]) -> Result<Self, FeatureError> {
        let mut include = Vec::new();
        let mut ar_order = 0;
        for label in labels {
            let label = label.as_ref();
            let Some(name) = label.strip_prefix("ch1_") else {
                continue;
            };
            if let Some(k) = name.strip_prefix("ar").and_then(|k| k.parse::<usize>().ok()) {
                ar_order = ar_order.max(k);
                if !include.contains(&FeatureFamily::Ar) {
                    include.push(FeatureFamily::Ar);
                }
            } else {
                include.push(name.parse()?);
            }
        }
        let cfg = FeatureConfig {
            // configs without AR still carry the default order
            ar_order: if ar_order == 0 { FeatureConfig::default().ar_order } else { ar_order },
            include,
        };
        cfg.validate()?;
        let expected = cfg.layout();
        if expected.len() != labels.len() || expected.iter().zip(labels).any(|(e, l)| e != l.as_ref()) {
            return Err(FeatureError::MalformedHeader(format!(
                "layout `{}` is not a canonical feature layout",
                labels.iter().map(AsRef::as_ref).collect::<Vec<_>>().join(",")
            )));
        }
        Ok(cfg)
    }
}

/// Where a feature vector came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VectorOrigin {
    pub key: RecordingKey,
    pub window_index: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub layout: Arc<[String]>,
    pub label: Option<ActivityClass>,
    pub origin: Option<VectorOrigin>,
}

impl FeatureVector {
    pub fn dimension(&self) -> usize {
        self.values.len()
    }
}

impl AsRef<[f64]> for FeatureVector {
    fn as_ref(&self) -> &[f64] {
        &self.values
    }
}

/// Features of one segment in canonical order.
pub fn segment_features(x: &[f64], cfg: &FeatureConfig) -> Result<Vec<f64>, FeatureError> {
    let mut out = Vec::with_capacity(cfg.dimension() / CHANNELS);
    for family in &cfg.include {
        match family {
            FeatureFamily::Mav => out.push(mav(x)?),
            FeatureFamily::Std => out.push(std_dev(x)?),
            FeatureFamily::Rms => out.push(rms(x)?),
            FeatureFamily::Ssc => out.push(ssc(x)? as f64),
            FeatureFamily::Wl => out.push(waveform_length(x)?),
            FeatureFamily::Ar => out.extend(ar_coeffs(x, cfg.ar_order)?.coeffs),
            FeatureFamily::Skew => out.push(skewness(x)?),
            FeatureFamily::Kurt => out.push(kurtosis(x)?),
        }
    }
    Ok(out)
}

/// One labeled feature vector per window position of `rec`.
pub fn extract(rec: &Recording, cfg: &FeatureConfig, window: Window) -> Result<Vec<FeatureVector>, FeatureError> {
    cfg.validate()?;
    let layout: Arc<[String]> = cfg.layout().into();
    extract_with_layout(rec, cfg, window, &layout)
}

fn extract_with_layout(
    rec: &Recording,
    cfg: &FeatureConfig,
    window: Window,
    layout: &Arc<[String]>,
) -> Result<Vec<FeatureVector>, FeatureError> {
    let segments = segment(rec, window)?;
    let positions = segments[0].len();
    let key = rec.key();
    (0..positions)
        .map(|w| {
            let mut values = Vec::with_capacity(layout.len());
            for (ch, channel) in segments.iter().enumerate() {
                let feats = segment_features(channel[w].samples(), cfg).map_err(|e| FeatureError::Extract {
                    channel: ch + 1,
                    window: w,
                    source: Box::new(e),
                })?;
                values.extend(feats);
            }
            Ok(FeatureVector {
                values,
                layout: Arc::clone(layout),
                label: Some(rec.activity()),
                origin: Some(VectorOrigin { key: key.clone(), window_index: w }),
            })
        })
        .collect()
}

/// Extracts every recording in parallel; output order follows `recordings`.
pub fn extract_all(
    recordings: &[Recording],
    cfg: &FeatureConfig,
    window: Window,
) -> Result<Vec<FeatureVector>, FeatureError> {
    use rayon::prelude::*;
    cfg.validate()?;
    let layout: Arc<[String]> = cfg.layout().into();
    let nested: Vec<Vec<FeatureVector>> = recordings
        .par_iter()
        .map(|r| {
            extract_with_layout(r, cfg, window, &layout)
                .map_err(|e| FeatureError::Recording { key: r.key(), source: Box::new(e) })
        })
        .collect::<Result<_, _>>()?;
    Ok(nested.into_iter().flatten().collect())
}

// ---------------------------------------------------------------------------
// Feature CSV

pub const FEATURE_META_COLUMNS: [&str; 4] = ["subject", "activity", "repetition", "window_index"];

/// Parsed feature CSV: the config implied by the header, and its rows.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub config: FeatureConfig,
    pub vectors: Vec<FeatureVector>,
}

impl FeatureTable {
    /// Recording keys of every row, aligned with `vectors`.
    pub fn keys(&self) -> Vec<RecordingKey> {
        self.vectors
            .iter()
            .map(|v| v.origin.as_ref().expect("feature table rows carry an origin").key.clone())
            .collect()
    }
}

pub fn write_features_csv<W: Write>(vectors: &[FeatureVector], cfg: &FeatureConfig, writer: W) -> Result<(), FeatureError> {
    let layout = cfg.layout();
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header: Vec<String> = FEATURE_META_COLUMNS.iter().map(|s| s.to_string()).collect();
    header.extend(layout.iter().cloned());
    wtr.write_record(&header)?;
    for v in vectors {
        if *v.layout != layout[..] {
            return Err(FeatureError::InvalidConfig("vector layout differs from the export config".into()));
        }
        let origin = v
            .origin
            .as_ref()
            .ok_or_else(|| FeatureError::InvalidConfig("vector has no origin".into()))?;
        let mut row = vec![
            origin.key.subject.clone(),
            origin.key.activity.to_string(),
            origin.key.repetition.to_string(),
            origin.window_index.to_string(),
        ];
        row.extend(v.values.iter().map(|x| crate::data::format_sample(*x)));
        wtr.write_record(&row)?;
    }
    wtr.flush().map_err(|e| FeatureError::Data(DataError::Io(e)))?;
    Ok(())
}

pub fn read_features_csv<R: Read>(reader: R) -> Result<FeatureTable, FeatureError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(reader);
    let header = rdr.headers()?.clone();
    let cols: Vec<&str> = header.iter().map(str::trim).collect();
    if cols.len() <= FEATURE_META_COLUMNS.len() || cols[..FEATURE_META_COLUMNS.len()] != FEATURE_META_COLUMNS {
        return Err(FeatureError::MalformedHeader(format!(
            "expected `{},<features...>`, found `{}`",
            FEATURE_META_COLUMNS.join(","),
            cols.join(",")
        )));
    }
    let labels: Vec<String> = cols[FEATURE_META_COLUMNS.len()..].iter().map(|s| s.to_string()).collect();
    let config = FeatureConfig::from_layout(&labels)?;
    let layout: Arc<[String]> = labels.into();

    let mut vectors = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        let bad = |reason: String| FeatureError::MalformedRow { line, reason };
        if row.len() != cols.len() {
            return Err(bad(format!("expected {} fields, found {}", cols.len(), row.len())));
        }
        let subject = row[0].trim().to_string();
        let activity: ActivityClass = row[1]
            .trim()
            .parse()
            .map_err(|e: UnknownActivity| bad(e.to_string()))?;
        let repetition: u32 = row[2].trim().parse().map_err(|_| bad(format!("bad repetition `{}`", &row[2])))?;
        let window_index: usize = row[3].trim().parse().map_err(|_| bad(format!("bad window_index `{}`", &row[3])))?;
        let values = row
            .iter()
            .skip(FEATURE_META_COLUMNS.len())
            .zip(layout.iter())
            .map(|(raw, name)| match raw.trim().parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(bad(format!("bad value `{raw}` for {name}"))),
            })
            .collect::<Result<Vec<f64>, _>>()?;
        vectors.push(FeatureVector {
            values,
            layout: Arc::clone(&layout),
            label: Some(activity),
            origin: Some(VectorOrigin { key: RecordingKey { subject, activity, repetition }, window_index }),
        });
    }
    if vectors.is_empty() {
        return Err(FeatureError::MalformedRow { line: 1, reason: "no feature rows".into() });
    }
    Ok(FeatureTable { config, vectors })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-12 * (1.0 + b.abs())
    }

    #[test]
    fn mav_examples() {
        assert!(close(mav(&[1.0, -1.0, 2.0]).unwrap(), 4.0 / 3.0));
        assert_eq!(mav(&[0.0, 0.0, 0.0]).unwrap(), 0.0);
        assert_eq!(mav(&[-5.0]).unwrap(), 5.0);
        assert!(mav(&[]).is_err());
    }

    #[test]
    fn std_examples() {
        assert_eq!(std_dev(&[1.0, 1.0, 1.0]).unwrap(), 0.0);
        assert!(close(std_dev(&[0.0, 2.0]).unwrap(), 2f64.sqrt()));
        assert!(close(std_dev(&[1.0, 2.0, 3.0]).unwrap(), 1.0));
        assert!(matches!(std_dev(&[1.0]), Err(FeatureError::SegmentTooShort { needed: 2, got: 1 })));
    }

    #[test]
    fn rms_examples() {
        assert!(close(rms(&[3.0, 4.0]).unwrap(), 12.5f64.sqrt()));
        assert!((rms(&[3.0, 4.0]).unwrap() - 3.53553).abs() < 1e-5);
        assert_eq!(rms(&[0.0, 0.0]).unwrap(), 0.0);
        assert!(close(rms(&[-2.0, 2.0]).unwrap(), 2.0));
    }

    #[test]
    fn ssc_examples() {
        assert_eq!(ssc(&[0.0, 1.0, 0.0, 1.0, 0.0]).unwrap(), 3);
        assert_eq!(ssc(&[1.0, 2.0, 3.0, 4.0]).unwrap(), 0);
        assert_eq!(ssc(&[1.0, 1.0, 1.0]).unwrap(), 0);
        // plateau next to a peak is not a strict extremum
        assert_eq!(ssc(&[0.0, 1.0, 1.0, 0.0]).unwrap(), 0);
        assert!(matches!(ssc(&[1.0, 2.0]), Err(FeatureError::SegmentTooShort { .. })));
    }

    #[test]
    fn wl_examples() {
        assert_eq!(waveform_length(&[0.0, 1.0, -1.0, 2.0]).unwrap(), 6.0);
        assert_eq!(waveform_length(&[3.0; 5]).unwrap(), 0.0);
        assert_eq!(waveform_length(&[5.0, 0.0]).unwrap(), 5.0);
    }

    #[test]
    fn skew_kurt_examples() {
        assert_eq!(skewness(&[-1.0, 0.0, 1.0]).unwrap(), 0.0);
        assert!(matches!(skewness(&[0.0, 0.0, 0.0]), Err(FeatureError::DegenerateSegment(_))));
        assert!(close(kurtosis(&[-1.0, 1.0, -1.0, 1.0]).unwrap(), 1.0));
        assert!(matches!(kurtosis(&[0.0, 0.0, 0.0]), Err(FeatureError::DegenerateSegment(_))));
        // constant segments whose mean is not exactly representable
        assert!(kurtosis(&[0.1, 0.1, 0.1]).is_err());
    }

    #[test]
    fn ar_rejects_bad_input() {
        assert!(matches!(ar_coeffs(&[0.0; 10], 2), Err(FeatureError::DegenerateSegment(_))));
        assert!(matches!(ar_coeffs(&[1.0, 2.0], 2), Err(FeatureError::SegmentTooShort { needed: 3, got: 2 })));
        assert!(ar_coeffs(&[1.0, 2.0, 3.0], 0).is_err());
    }

    #[test]
    fn ar1_closed_form() {
        // order 1 reduces to r1 / r0
        let x = [1.0, 2.0, -1.0, 0.5];
        let r0 = (1.0 + 4.0 + 1.0 + 0.25) / 4.0;
        let r1 = (2.0 - 2.0 - 0.5) / 4.0;
        let fit = ar_coeffs(&x, 1).unwrap();
        assert!(close(fit.coeffs[0], r1 / r0));
        assert!(close(fit.residual_variance, r0 * (1.0 - (r1 / r0) * (r1 / r0))));
    }

    #[test]
    fn layout_and_dimensions() {
        let cfg = FeatureConfig::default();
        assert_eq!(cfg.dimension(), 22);
        let layout = cfg.layout();
        assert_eq!(layout[0], "ch1_mav");
        assert_eq!(layout[5], "ch1_ar1");
        assert_eq!(layout[10], "ch1_kurt");
        assert_eq!(layout[21], "ch2_kurt");
        let no_ar = FeatureConfig::new(
            4,
            FeatureFamily::ALL.into_iter().filter(|f| *f != FeatureFamily::Ar).collect(),
        )
        .unwrap();
        assert_eq!(no_ar.dimension(), 14);
        assert_eq!(FeatureConfig::with_ar_order(2).unwrap().dimension(), 18);
    }

    #[test]
    fn layout_round_trip() {
        for cfg in [
            FeatureConfig::default(),
            FeatureConfig::with_ar_order(2).unwrap(),
            FeatureConfig::new(4, vec![FeatureFamily::Kurt, FeatureFamily::Rms]).unwrap(),
        ] {
            assert_eq!(FeatureConfig::from_layout(&cfg.layout()).unwrap(), cfg);
        }
        assert!(FeatureConfig::from_layout(&["ch1_rms", "ch2_mav"]).is_err());
    }

    #[test]
    fn extract_full_window() {
        let ch1: Vec<f64> = (0..64).map(|i| ((i * 7) % 11) as f64 - 5.0).collect();
        let ch2: Vec<f64> = (0..64).map(|i| ((i * 5) % 13) as f64 - 6.0).collect();
        let rec = Recording::new("s1", ActivityClass::Hook, 1, 500.0, [ch1.clone(), ch2]).unwrap();
        let vs = extract(&rec, &FeatureConfig::default(), Window::Full).unwrap();
        assert_eq!(vs.len(), 1);
        assert_eq!(vs[0].dimension(), 22);
        assert_eq!(vs[0].label, Some(ActivityClass::Hook));
        assert_eq!(vs[0].values[2], rms(&ch1).unwrap());

        let twin = Recording::new("s2", ActivityClass::Hook, 3, 500.0, rec.channels().clone()).unwrap();
        assert_eq!(extract(&twin, &FeatureConfig::default(), Window::Full).unwrap()[0].values, vs[0].values);

        let windows = extract(&rec, &FeatureConfig::default(), Window::Sliding { len: 16, step: 16 }).unwrap();
        assert_eq!(windows.len(), 4);
        assert_eq!(windows[3].origin.as_ref().unwrap().window_index, 3);
    }

    #[test]
    fn extract_tags_channel_on_error() {
        let rec = Recording::new("s1", ActivityClass::Tip, 1, 500.0, [vec![1.0, 2.0, 3.0, 4.0, 2.0, 1.0], vec![0.0; 6]]).unwrap();
        let err = extract(&rec, &FeatureConfig::default(), Window::Full).unwrap_err();
        assert!(matches!(err, FeatureError::Extract { channel: 2, window: 0, .. }), "{err}");
    }

    #[test]
    fn feature_csv_round_trip() {
        let ch: Vec<f64> = (0..50).map(|i| (i as f64 * 0.37).sin()).collect();
        let rec = Recording::new("s1", ActivityClass::Lateral, 2, 500.0, [ch.clone(), ch.iter().map(|v| v * 2.0).collect()]).unwrap();
        let cfg = FeatureConfig::default();
        let vs = extract(&rec, &cfg, Window::Full).unwrap();
        let mut buf = Vec::new();
        write_features_csv(&vs, &cfg, &mut buf).unwrap();
        let table = read_features_csv(buf.as_slice()).unwrap();
        assert_eq!(table.config, cfg);
        assert_eq!(table.vectors, vs);
    }

    #[test]
    fn feature_csv_bad_value_has_line() {
        let text = "subject,activity,repetition,window_index,ch1_rms,ch2_rms\ns,P,1,0,1.0,2.0\ns,P,2,0,x,2.0\n";
        let err = read_features_csv(text.as_bytes()).unwrap_err();
        assert!(matches!(err, FeatureError::MalformedRow { line: 3, .. }), "{err}");
    }
}
