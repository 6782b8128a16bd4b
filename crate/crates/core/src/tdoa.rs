//! Interaural delay estimation by generalized cross-correlation, median
//! tracking, delay quantization and reference-ear selection.

use std::collections::VecDeque;
use std::sync::Arc;

use realfft::num_complex::Complex64;
use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};

use crate::error::{Error, Result};

pub const DEFAULT_MAX_LAG: usize = 24;
pub const DEFAULT_TRACKER_LEN: usize = 20;
pub const DEFAULT_L: usize = 7;

/// Delay of the right channel relative to the left; positive means the left
/// signal arrives first.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DelayEstimate {
    pub tau: i32,
    pub confidence: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Weighting {
    /// Phase transform: unit-magnitude cross spectrum.
    #[default]
    Phat,
    /// Plain cross-correlation.
    None,
}

fn weight(cross: Complex64, weighting: Weighting) -> Complex64 {
    match weighting {
        Weighting::Phat => {
            let n2 = cross.norm_sqr();
            if n2 > 1e-40 {
                cross * n2.sqrt().recip()
            } else {
                Complex64::new(0.0, 0.0)
            }
        }
        Weighting::None => cross,
    }
}

/// Picks the peak lag from a correlation indexed circularly (negative lags
/// wrap to the end). Ties go to the smaller |lag|.
fn pick_peak(corr: &[f64], max_lag: usize) -> DelayEstimate {
    let n = corr.len();
    let at = |lag: i64| corr[lag.rem_euclid(n as i64) as usize];
    let mut best = (0i64, at(0));
    let mut abs_sum = at(0).abs();
    for k in 1..=max_lag as i64 {
        for lag in [k, -k] {
            let v = at(lag);
            abs_sum += v.abs();
            if v > best.1 {
                best = (lag, v);
            }
        }
    }
    let mean = abs_sum / (2 * max_lag + 1) as f64;
    let confidence = if mean > 0.0 { best.1 / mean } else { 0.0 };
    DelayEstimate {
        tau: best.0 as i32,
        confidence,
    }
}

/// Reusable linear (zero-padded) cross-correlation delay estimator.
pub struct GccEstimator {
    frame_len: usize,
    max_lag: usize,
    weighting: Weighting,
    forward: Arc<dyn RealToComplex<f64>>,
    inverse: Arc<dyn ComplexToReal<f64>>,
    buf_l: Vec<f64>,
    buf_r: Vec<f64>,
    spec_l: Vec<Complex64>,
    spec_r: Vec<Complex64>,
    corr: Vec<f64>,
}

impl std::fmt::Debug for GccEstimator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GccEstimator")
            .field("frame_len", &self.frame_len)
            .field("max_lag", &self.max_lag)
            .field("weighting", &self.weighting)
            .finish_non_exhaustive()
    }
}

impl GccEstimator {
    pub fn new(frame_len: usize, max_lag: usize, weighting: Weighting) -> Result<Self> {
        if frame_len < 2 * max_lag || frame_len == 0 {
            return Err(Error::invalid(format!(
                "frame length {frame_len} shorter than 2 x max lag {max_lag}"
            )));
        }
        let size = (frame_len + max_lag + 1).next_power_of_two();
        let mut planner = RealFftPlanner::<f64>::new();
        let forward = planner.plan_fft_forward(size);
        let inverse = planner.plan_fft_inverse(size);
        Ok(Self {
            frame_len,
            max_lag,
            weighting,
            buf_l: vec![0.0; size],
            buf_r: vec![0.0; size],
            spec_l: forward.make_output_vec(),
            spec_r: forward.make_output_vec(),
            corr: vec![0.0; size],
            forward,
            inverse,
        })
    }

    pub fn max_lag(&self) -> usize {
        self.max_lag
    }

    pub fn estimate(&mut self, left: &[f64], right: &[f64]) -> Result<DelayEstimate> {
        if left.len() != self.frame_len || right.len() != self.frame_len {
            return Err(Error::dim(format!(
                "frames of length {} and {}; estimator expects {}",
                left.len(),
                right.len(),
                self.frame_len
            )));
        }
        if left.iter().all(|&v| v == 0.0) && right.iter().all(|&v| v == 0.0) {
            return Ok(DelayEstimate {
                tau: 0,
                confidence: 0.0,
            });
        }
        self.buf_l.fill(0.0);
        self.buf_r.fill(0.0);
        self.buf_l[..self.frame_len].copy_from_slice(left);
        self.buf_r[..self.frame_len].copy_from_slice(right);
        let fft_err = |e: realfft::FftError| Error::invalid(format!("fft failed: {e}"));
        self.forward
            .process(&mut self.buf_l, &mut self.spec_l)
            .map_err(fft_err)?;
        self.forward
            .process(&mut self.buf_r, &mut self.spec_r)
            .map_err(fft_err)?;
        for (l, r) in self.spec_l.iter_mut().zip(&self.spec_r) {
            *l = weight(l.conj() * r, self.weighting);
        }
        let last = self.spec_l.len() - 1;
        self.spec_l[0].im = 0.0;
        self.spec_l[last].im = 0.0;
        self.inverse
            .process(&mut self.spec_l, &mut self.corr)
            .map_err(fft_err)?;
        Ok(pick_peak(&self.corr, self.max_lag))
    }
}

/// Delay between two frames (see [`DelayEstimate`] for the sign).
pub fn gcc_delay(left: &[f64], right: &[f64], max_lag: usize) -> Result<DelayEstimate> {
    if left.len() != right.len() {
        return Err(Error::dim("frames differ in length"));
    }
    GccEstimator::new(left.len(), max_lag, Weighting::Phat)?.estimate(left, right)
}

/// Circular GCC from already computed half spectra of equal-length frames.
/// `inverse` must be the inverse transform for those spectra.
pub fn gcc_from_spectra(
    left: &[Complex64],
    right: &[Complex64],
    max_lag: usize,
    weighting: Weighting,
    inverse: &mut crate::spectral::Stft,
) -> Result<DelayEstimate> {
    if left.len() != right.len() {
        return Err(Error::dim("spectra differ in length"));
    }
    if inverse.fft_size() < 2 * max_lag {
        return Err(Error::invalid("frame shorter than 2 x max lag"));
    }
    if left.iter().chain(right).all(|c| c.norm_sqr() == 0.0) {
        return Ok(DelayEstimate {
            tau: 0,
            confidence: 0.0,
        });
    }
    let cross: Vec<Complex64> = left
        .iter()
        .zip(right)
        .map(|(l, r)| weight(l.conj() * r, weighting))
        .collect();
    let corr = inverse.inverse(&cross)?;
    Ok(pick_peak(&corr, max_lag))
}

/// Sliding median over the most recent raw delays.
#[derive(Debug, Clone, PartialEq)]
pub struct DelayTracker {
    history: VecDeque<i32>,
    capacity: usize,
    filtered: i32,
}

impl Default for DelayTracker {
    fn default() -> Self {
        Self::new(DEFAULT_TRACKER_LEN)
    }
}

impl DelayTracker {
    pub fn new(capacity: usize) -> Self {
        let capacity = capacity.max(1);
        Self {
            history: VecDeque::with_capacity(capacity),
            capacity,
            filtered: 0,
        }
    }

    /// Pushes a raw delay and returns the (lower) median of the window.
    pub fn update(&mut self, tau: i32) -> i32 {
        if self.history.len() == self.capacity {
            self.history.pop_front();
        }
        self.history.push_back(tau);
        let mut sorted: Vec<i32> = self.history.iter().copied().collect();
        sorted.sort_unstable();
        self.filtered = sorted[(sorted.len() - 1) / 2];
        self.filtered
    }

    pub fn filtered(&self) -> i32 {
        self.filtered
    }

    pub fn len(&self) -> usize {
        self.history.len()
    }

    pub fn is_empty(&self) -> bool {
        self.history.is_empty()
    }
}

/// Uniform delay bin over [-tau_max, tau_max], clamped.
pub fn quantize_delay(tau: f64, l: usize, tau_max: f64) -> usize {
    let l = l.max(1);
    let pos = ((tau + tau_max) / (2.0 * tau_max) * l as f64).floor();
    if pos.is_nan() || pos < 0.0 {
        0
    } else {
        (pos as usize).min(l - 1)
    }
}

/// Which microphone acts as the suppression reference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Channel {
    /// Left / first input.
    #[default]
    Input1,
    /// Right / second input.
    Input2,
}

impl Channel {
    pub fn index(self) -> usize {
        match self {
            Channel::Input1 => 0,
            Channel::Input2 => 1,
        }
    }

    pub fn other(self) -> Channel {
        match self {
            Channel::Input1 => Channel::Input2,
            Channel::Input2 => Channel::Input1,
        }
    }
}

/// The earlier-arriving input; a zero delay keeps the first input.
pub fn select_reference(tau: f64) -> Channel {
    if tau >= 0.0 {
        Channel::Input1
    } else {
        Channel::Input2
    }
}

/// Reference selection that only switches after the preferred side has
/// disagreed with the current one for `persistence` consecutive frames.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceSelector {
    current: Option<Channel>,
    disagree: usize,
    persistence: usize,
}

impl Default for ReferenceSelector {
    fn default() -> Self {
        Self::new(20)
    }
}

impl ReferenceSelector {
    pub fn new(persistence: usize) -> Self {
        Self {
            current: None,
            disagree: 0,
            persistence: persistence.max(1),
        }
    }

    pub fn update(&mut self, tau: f64) -> Channel {
        let wanted = select_reference(tau);
        match self.current {
            None => {
                self.current = Some(wanted);
            }
            Some(cur) if cur == wanted => self.disagree = 0,
            Some(_) if tau == 0.0 => {}
            Some(_) => {
                self.disagree += 1;
                if self.disagree >= self.persistence {
                    self.current = Some(wanted);
                    self.disagree = 0;
                }
            }
        }
        self.current.unwrap_or_default()
    }

    pub fn current(&self) -> Channel {
        self.current.unwrap_or_default()
    }
}
