//! Objective measures: segmental SNR, spectral distortion, expected quality
//! under classification errors, suppression advantage and quiet detection.

use std::fmt::Write as _;
use std::path::Path;

use crate::audio_io::{frame_stream, write_atomic, Window, DEFAULT_FRAME_LEN, DEFAULT_HOP};
use crate::error::{Error, Result};
use crate::gain::Criterion;
use crate::spectral::Stft;

pub const SEG_FRAME: usize = 256;
pub const SEG_MIN_DB: f64 = -10.0;
pub const SEG_MAX_DB: f64 = 35.0;
/// Frames whose clean energy is this far below the loudest frame are skipped.
pub const SEG_SILENCE_DB: f64 = 40.0;
pub const AMP_FLOOR: f64 = 1e-10;

fn check_len(a: usize, b: usize, what: &str) -> Result<()> {
    if a != b {
        return Err(Error::dim(format!("{what}: lengths {a} and {b} differ")));
    }
    Ok(())
}

/// Indices of the non-overlapping 256-sample frames that carry speech.
fn active_frames(clean: &[f64]) -> Vec<std::ops::Range<usize>> {
    let frames: Vec<_> = (0..clean.len() / SEG_FRAME)
        .map(|k| k * SEG_FRAME..(k + 1) * SEG_FRAME)
        .collect();
    let energy = |r: &std::ops::Range<usize>| clean[r.clone()].iter().map(|v| v * v).sum::<f64>();
    let peak = frames.iter().map(energy).fold(0.0, f64::max);
    if peak <= 0.0 {
        return Vec::new();
    }
    let floor = peak * 10f64.powf(-SEG_SILENCE_DB / 10.0);
    frames.into_iter().filter(|r| energy(r) > floor).collect()
}

/// Mean clamped per-frame SNR of `estimate` against `clean`, in dB.
pub fn segmental_snr(clean: &[f64], estimate: &[f64]) -> Result<f64> {
    check_len(clean.len(), estimate.len(), "segmental SNR")?;
    let frames = active_frames(clean);
    if frames.is_empty() {
        return Err(Error::invalid("no active frames in the clean signal"));
    }
    let total: f64 = frames
        .iter()
        .map(|r| {
            let s: f64 = clean[r.clone()].iter().map(|v| v * v).sum();
            let e: f64 = clean[r.clone()]
                .iter()
                .zip(&estimate[r.clone()])
                .map(|(a, b)| (a - b).powi(2))
                .sum();
            let db = if e == 0.0 { SEG_MAX_DB } else { 10.0 * (s / e).log10() };
            db.clamp(SEG_MIN_DB, SEG_MAX_DB)
        })
        .sum();
    Ok(total / frames.len() as f64)
}

/// segSNR(enhanced) − segSNR(noisy).
pub fn segmental_snr_improvement(clean: &[f64], noisy: &[f64], enhanced: &[f64]) -> Result<f64> {
    check_len(clean.len(), noisy.len(), "segmental SNR")?;
    Ok(segmental_snr(clean, enhanced)? - segmental_snr(clean, noisy)?)
}

/// Per-bin distortion of an estimate `e` of amplitude `a`.
pub fn bin_distortion(a: f64, e: f64, criterion: Criterion, p: f64) -> Result<f64> {
    let (a, e) = (a.max(AMP_FLOOR), e.max(AMP_FLOOR));
    Ok(match criterion {
        Criterion::We => a.powf(p) * (a - e).powi(2),
        Criterion::Le => (a.ln() - e.ln()).powi(2),
        Criterion::Wc => a.powf(p) * (a / e + e / a - 1.0),
        Criterion::Direct => return Err(Error::invalid("no distortion measure for the direct criterion")),
    })
}

/// Mean distortion over all frames and bins of aligned magnitude sequences.
pub fn distortion_metric(clean: &[Vec<f64>], enhanced: &[Vec<f64>], criterion: Criterion, p: f64) -> Result<f64> {
    check_len(clean.len(), enhanced.len(), "distortion frames")?;
    let mut sum = 0.0;
    let mut n = 0usize;
    for (a, e) in clean.iter().zip(enhanced) {
        check_len(a.len(), e.len(), "distortion bins")?;
        for (&x, &y) in a.iter().zip(e) {
            sum += bin_distortion(x, y, criterion, p)?;
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::invalid("no bins to compare"));
    }
    Ok(sum / n as f64)
}

/// Hann-windowed STFT magnitudes on the pipeline's frame grid, the input
/// of [`distortion_metric`].
pub fn magnitude_frames(signal: &[f64], sample_rate: u32) -> Result<Vec<Vec<f64>>> {
    let mut stft = Stft::new(DEFAULT_FRAME_LEN, Window::Hann, sample_rate)?;
    frame_stream(signal, DEFAULT_FRAME_LEN, DEFAULT_HOP)?
        .iter()
        .map(|f| Ok(stft.analyze(f)?.mags))
        .collect()
}

/// P[i][j] = probability of deciding class i when class j is true.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfusionMatrix {
    p: Vec<Vec<f64>>,
}

impl ConfusionMatrix {
    pub fn new(p: Vec<Vec<f64>>) -> Result<Self> {
        let n = p.len();
        if n == 0 || p.iter().any(|r| r.len() != n) {
            return Err(Error::dim("confusion matrix must be square and non-empty"));
        }
        if p.iter().flatten().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::invalid("confusion entries must lie in [0, 1]"));
        }
        for j in 0..n {
            let s: f64 = (0..n).map(|i| p[i][j]).sum();
            if (s - 1.0).abs() > 1e-9 {
                return Err(Error::invalid(format!("column {j} sums to {s}, not 1")));
            }
        }
        Ok(Self { p })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            p: (0..n).map(|i| (0..n).map(|j| f64::from(u8::from(i == j))).collect()).collect(),
        }
    }

    /// Column-normalized counts, `counts[i][j]` = decided i when j was true.
    pub fn from_counts(counts: &[Vec<u64>]) -> Result<Self> {
        let n = counts.len();
        if n == 0 || counts.iter().any(|r| r.len() != n) {
            return Err(Error::dim("count matrix must be square and non-empty"));
        }
        let mut p = vec![vec![0.0; n]; n];
        for j in 0..n {
            let total: u64 = (0..n).map(|i| counts[i][j]).sum();
            if total == 0 {
                return Err(Error::invalid(format!("class {j} has no samples")));
            }
            for i in 0..n {
                p[i][j] = counts[i][j] as f64 / total as f64;
            }
        }
        Self::new(p)
    }

    pub fn size(&self) -> usize {
        self.p.len()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.p[i][j]
    }
}

/// Q[i][j] = quality when class-i parameters process class-j input, with
/// class priors.
#[derive(Debug, Clone, PartialEq)]
pub struct QualityMatrix {
    q: Vec<Vec<f64>>,
    priors: Vec<f64>,
}

impl QualityMatrix {
    pub fn new(q: Vec<Vec<f64>>, priors: Vec<f64>) -> Result<Self> {
        let n = q.len();
        if n == 0 || q.iter().any(|r| r.len() != n) || priors.len() != n {
            return Err(Error::dim("quality matrix must be square and match the priors"));
        }
        if q.iter().flatten().chain(&priors).any(|v| !v.is_finite()) {
            return Err(Error::invalid("quality entries and priors must be finite"));
        }
        if priors.iter().any(|&v| v < 0.0) || (priors.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::invalid("priors must be non-negative and sum to 1"));
        }
        Ok(Self { q, priors })
    }

    pub fn uniform(q: Vec<Vec<f64>>) -> Result<Self> {
        let n = q.len().max(1);
        Self::new(q, vec![1.0 / n as f64; n])
    }

    pub fn size(&self) -> usize {
        self.q.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExpectedQuality {
    pub per_class: Vec<f64>,
    pub overall: f64,
}

/// Q̄_j = Σ_i P_ij Q_ij and Q̄ = Σ_j P0_j Q̄_j.
pub fn expected_quality(p: &ConfusionMatrix, q: &QualityMatrix) -> Result<ExpectedQuality> {
    let n = p.size();
    if q.size() != n {
        return Err(Error::dim(format!("{n} classes in P, {} in Q", q.size())));
    }
    let per_class: Vec<f64> = (0..n).map(|j| (0..n).map(|i| p.p[i][j] * q.q[i][j]).sum()).collect();
    let overall = per_class.iter().zip(&q.priors).map(|(a, b)| a * b).sum();
    Ok(ExpectedQuality { per_class, overall })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuppressionAdvantage {
    pub per_class: Vec<f64>,
    pub overall: f64,
}

/// Quality gain of a suppressing pipeline over no suppression.
pub fn suppression_advantage(pipeline: &ExpectedQuality, no_suppression: &ExpectedQuality) -> Result<SuppressionAdvantage> {
    check_len(pipeline.per_class.len(), no_suppression.per_class.len(), "suppression advantage")?;
    Ok(SuppressionAdvantage {
        per_class: pipeline
            .per_class
            .iter()
            .zip(&no_suppression.per_class)
            .map(|(a, b)| a - b)
            .collect(),
        overall: pipeline.overall - no_suppression.overall,
    })
}

/// 1 − mean |Q(m) − Q̂(m)| over frames.
pub fn quiet_detection_score(actual: &[bool], estimated: &[bool]) -> Result<f64> {
    check_len(actual.len(), estimated.len(), "quiet detection")?;
    if actual.is_empty() {
        return Err(Error::invalid("no frames to score"));
    }
    let wrong = actual.iter().zip(estimated).filter(|(a, b)| a != b).count();
    Ok(1.0 - wrong as f64 / actual.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRecord {
    pub metric: String,
    pub channel: String,
    pub noise_class: String,
    pub azimuth: String,
    pub value: f64,
}

pub fn write_eval_csv(path: impl AsRef<Path>, records: &[EvalRecord]) -> Result<()> {
    let mut s = String::from("metric,channel,noise_class,azimuth,value\n");
    for r in records {
        let _ = writeln!(s, "{},{},{},{},{:.9}", r.metric, r.channel, r.noise_class, r.azimuth, r.value);
    }
    write_atomic(path, s.as_bytes())
}
