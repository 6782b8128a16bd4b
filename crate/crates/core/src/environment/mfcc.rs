//! Mel-style cepstral features on FFT magnitudes.

use std::f64::consts::PI;

use crate::error::{Error, Result};

pub const NUM_FILTERS: usize = 40;
pub const NUM_LINEAR: usize = 13;
pub const NUM_CEPS: usize = 13;
pub const FEATURE_DIM: usize = 2 * NUM_CEPS;
pub const LOWEST_HZ: f64 = 133.333_333_333_333_34;
pub const LINEAR_SPACING_HZ: f64 = 66.666_666_666_666_67;
pub const HIGHEST_HZ: f64 = 4000.0;
const LOG_FLOOR: f64 = 1e-10;

/// Filter edge frequencies: 14 linear points then log spacing up to 4 kHz.
pub fn filter_edges_hz() -> Vec<f64> {
    let mut edges: Vec<f64> = (0..=NUM_LINEAR)
        .map(|i| LOWEST_HZ + LINEAR_SPACING_HZ * i as f64)
        .collect();
    let start = *edges.last().unwrap();
    let n_log = NUM_FILTERS + 2 - edges.len();
    let ratio = (HIGHEST_HZ / start).powf(1.0 / n_log as f64);
    for k in 1..=n_log {
        edges.push(start * ratio.powi(k as i32));
    }
    edges
}

/// 40 triangular filters sampled on the FFT bin grid, plus a DCT-II basis.
#[derive(Debug, Clone, PartialEq)]
pub struct MfccFilterbank {
    bins: usize,
    /// (first bin, weights) per filter
    filters: Vec<(usize, Vec<f64>)>,
    dct: Vec<f64>,
}

impl MfccFilterbank {
    pub fn new(sample_rate: u32, fft_size: usize) -> Result<Self> {
        if f64::from(sample_rate) / 2.0 < HIGHEST_HZ {
            return Err(Error::Config(format!(
                "sample rate {sample_rate} Hz cannot hold a filterbank reaching {HIGHEST_HZ} Hz"
            )));
        }
        let bins = fft_size / 2 + 1;
        let hz_per_bin = f64::from(sample_rate) / fft_size as f64;
        let edges = filter_edges_hz();
        let filters = (0..NUM_FILTERS)
            .map(|m| {
                let (lo, c, hi) = (edges[m], edges[m + 1], edges[m + 2]);
                let first = (lo / hz_per_bin).ceil() as usize;
                let weights = (first..bins)
                    .map(|k| k as f64 * hz_per_bin)
                    .take_while(|&f| f < hi)
                    .map(|f| {
                        if f <= c {
                            (f - lo) / (c - lo)
                        } else {
                            (hi - f) / (hi - c)
                        }
                    })
                    .collect();
                (first, weights)
            })
            .collect();
        let mut dct = Vec::with_capacity(NUM_CEPS * NUM_FILTERS);
        let m = NUM_FILTERS as f64;
        for n in 0..NUM_CEPS {
            let scale = if n == 0 { (1.0 / m).sqrt() } else { (2.0 / m).sqrt() };
            for j in 0..NUM_FILTERS {
                dct.push(scale * (PI * n as f64 * (j as f64 + 0.5) / m).cos());
            }
        }
        Ok(Self { bins, filters, dct })
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    /// Filter weights over all bins, for inspection.
    pub fn filter_weights(&self, m: usize) -> Vec<f64> {
        let mut w = vec![0.0; self.bins];
        let (first, weights) = &self.filters[m];
        w[*first..first + weights.len()].copy_from_slice(weights);
        w
    }

    pub fn log_energies(&self, mags: &[f64]) -> Result<Vec<f64>> {
        if mags.len() != self.bins {
            return Err(Error::dim(format!(
                "filterbank built for {} bins, spectrum has {}",
                self.bins,
                mags.len()
            )));
        }
        Ok(self
            .filters
            .iter()
            .map(|(first, w)| {
                let e: f64 = w.iter().zip(&mags[*first..]).map(|(a, b)| a * b).sum();
                e.max(LOG_FLOOR).ln()
            })
            .collect())
    }

    /// Orthonormal DCT-II of the log energies, coefficients 0..13.
    pub fn dct(&self, log_e: &[f64]) -> [f64; NUM_CEPS] {
        let mut out = [0.0; NUM_CEPS];
        for (n, o) in out.iter_mut().enumerate() {
            *o = self.dct[n * NUM_FILTERS..(n + 1) * NUM_FILTERS]
                .iter()
                .zip(log_e)
                .map(|(a, b)| a * b)
                .sum();
        }
        out
    }
}

pub fn mfcc(mags: &[f64], bank: &MfccFilterbank) -> Result<[f64; NUM_CEPS]> {
    Ok(bank.dct(&bank.log_energies(mags)?))
}

pub fn delta_mfcc(current: &[f64; NUM_CEPS], previous: &[f64; NUM_CEPS]) -> [f64; NUM_CEPS] {
    std::array::from_fn(|p| current[p] - previous[p])
}

/// Appends the right-ear features to the left-ear ones.
pub fn fuse_features(left: &[f64], right: &[f64]) -> Result<Vec<f64>> {
    if left.len() != FEATURE_DIM || right.len() != FEATURE_DIM {
        return Err(Error::dim(format!(
            "fusion needs two {FEATURE_DIM}-dim vectors, got {} and {}",
            left.len(),
            right.len()
        )));
    }
    let mut out = Vec::with_capacity(2 * FEATURE_DIM);
    out.extend_from_slice(left);
    out.extend_from_slice(right);
    Ok(out)
}

/// Streaming 26-dim feature extraction: MFCC and its difference to the last
/// computed MFCC.
#[derive(Debug, Clone)]
pub struct FeatureExtractor {
    bank: MfccFilterbank,
    previous: [f64; NUM_CEPS],
}

impl FeatureExtractor {
    pub fn new(sample_rate: u32, fft_size: usize) -> Result<Self> {
        Ok(Self {
            bank: MfccFilterbank::new(sample_rate, fft_size)?,
            previous: [0.0; NUM_CEPS],
        })
    }

    pub fn extract(&mut self, mags: &[f64]) -> Result<Vec<f64>> {
        let c = mfcc(mags, &self.bank)?;
        let d = delta_mfcc(&c, &self.previous);
        self.previous = c;
        let mut out = Vec::with_capacity(FEATURE_DIM);
        out.extend_from_slice(&c);
        out.extend_from_slice(&d);
        Ok(out)
    }
}
