//! Noise tracking, decision-directed SNR estimation and SNR quantization.

use crate::environment::VadDecision;
use crate::error::{Error, Result};

pub const NOISE_FLOOR: f64 = 1e-12;

/// Quantization grid of the gain table: uniform dB bins on both axes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SnrAxes {
    pub prior_db_min: f64,
    pub prior_db_max: f64,
    pub posterior_db_min: f64,
    pub posterior_db_max: f64,
    pub i: usize,
    pub j: usize,
}

impl Default for SnrAxes {
    fn default() -> Self {
        Self {
            prior_db_min: -19.0,
            prior_db_max: 40.0,
            posterior_db_min: -30.0,
            posterior_db_max: 40.0,
            i: 60,
            j: 70,
        }
    }
}

impl SnrAxes {
    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.prior_db_min,
            self.prior_db_max,
            self.posterior_db_min,
            self.posterior_db_max,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite
            || self.prior_db_min >= self.prior_db_max
            || self.posterior_db_min >= self.posterior_db_max
        {
            return Err(Error::Config("SNR axis bounds must satisfy min < max".into()));
        }
        if self.i == 0 || self.j == 0 {
            return Err(Error::Config("SNR axes need at least one bin each".into()));
        }
        Ok(())
    }

    pub fn cells(&self) -> usize {
        self.i * self.j
    }

    pub fn prior_index(&self, zeta: f64) -> usize {
        bin_index(zeta, self.prior_db_min, self.prior_db_max, self.i)
    }

    pub fn posterior_index(&self, xi: f64) -> usize {
        bin_index(xi, self.posterior_db_min, self.posterior_db_max, self.j)
    }

    /// Linear prior SNR at the centre of bin `i`.
    pub fn prior_center(&self, i: usize) -> f64 {
        center(i, self.prior_db_min, self.prior_db_max, self.i)
    }

    pub fn posterior_center(&self, j: usize) -> f64 {
        center(j, self.posterior_db_min, self.posterior_db_max, self.j)
    }
}

fn bin_index(linear: f64, lo_db: f64, hi_db: f64, n: usize) -> usize {
    let db = 10.0 * linear.max(0.0).log10();
    let pos = ((db - lo_db) / (hi_db - lo_db) * n as f64).floor();
    if pos.is_nan() || pos < 0.0 {
        0
    } else {
        (pos as usize).min(n - 1)
    }
}

fn center(idx: usize, lo_db: f64, hi_db: f64, n: usize) -> f64 {
    let db = lo_db + (idx as f64 + 0.5) * (hi_db - lo_db) / n as f64;
    10f64.powf(db / 10.0)
}

pub fn quantize_snr(zeta: f64, xi: f64, axes: &SnrAxes) -> (usize, usize) {
    (axes.prior_index(zeta), axes.posterior_index(xi))
}

pub fn posterior_snr(r: f64, lambda_d: f64) -> f64 {
    r * r / lambda_d.max(NOISE_FLOOR)
}

/// Per-stream estimator state.
#[derive(Debug, Clone, PartialEq)]
pub struct SnrState {
    pub lambda_d: Vec<f64>,
    pub prev_amp: Vec<f64>,
    pub alpha: f64,
    pub zeta_min: f64,
    pub alpha_n: f64,
    pub init_frames: usize,
    frames_seen: usize,
}

impl SnrState {
    pub fn new(bins: usize) -> Self {
        Self {
            lambda_d: vec![NOISE_FLOOR; bins],
            prev_amp: vec![0.0; bins],
            alpha: 0.98,
            zeta_min: 10f64.powf(-1.9),
            alpha_n: 0.95,
            init_frames: 6,
            frames_seen: 0,
        }
    }

    pub fn bins(&self) -> usize {
        self.lambda_d.len()
    }

    pub fn frames_seen(&self) -> usize {
        self.frames_seen
    }

    /// ζ̂ = α·Â²(n−1)/λ_d + (1−α)·max(ξ̂−1, ζ_min) for bin `k`.
    pub fn decision_directed_prior(&self, k: usize, r: f64) -> f64 {
        let lambda = self.lambda_d[k].max(NOISE_FLOOR);
        let xi = r * r / lambda;
        self.alpha * self.prev_amp[k] * self.prev_amp[k] / lambda
            + (1.0 - self.alpha) * (xi - 1.0).max(self.zeta_min)
    }

    /// Running-mean initialization for the first frames, then VAD-gated
    /// recursive smoothing on Noise and Quiet frames.
    pub fn update_noise_psd(&mut self, mags: &[f64], background: VadDecision) -> Result<()> {
        if mags.len() != self.bins() {
            return Err(Error::dim(format!(
                "{} magnitudes for {} tracked bins",
                mags.len(),
                self.bins()
            )));
        }
        if self.frames_seen < self.init_frames {
            let n = self.frames_seen as f64;
            for (l, r) in self.lambda_d.iter_mut().zip(mags) {
                let prev = if self.frames_seen == 0 { 0.0 } else { *l };
                *l = ((prev * n + r * r) / (n + 1.0)).max(NOISE_FLOOR);
            }
        } else if background != VadDecision::Voice {
            let a = self.alpha_n;
            for (l, r) in self.lambda_d.iter_mut().zip(mags) {
                *l = (a * *l + (1.0 - a) * r * r).max(NOISE_FLOOR);
            }
        }
        self.frames_seen += 1;
        Ok(())
    }

    /// Prior and posterior SNR per bin for the current noisy magnitudes.
    pub fn estimate(&self, mags: &[f64], prior: &mut Vec<f64>, posterior: &mut Vec<f64>) {
        prior.clear();
        posterior.clear();
        for (k, &r) in mags.iter().enumerate() {
            prior.push(self.decision_directed_prior(k, r));
            posterior.push(posterior_snr(r, self.lambda_d[k]));
        }
    }

    pub fn set_prev_amp(&mut self, amps: &[f64]) {
        self.prev_amp.copy_from_slice(amps);
    }
}
