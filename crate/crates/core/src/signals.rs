//! Deterministic synthetic material: speech-like harmonic signals, noises,
//! tone bursts and SNR mixing.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Gaussian white noise with standard deviation `sigma`.
pub fn white_noise(len: usize, sigma: f64, seed: u64) -> Vec<f64> {
    let mut r = rng(seed);
    (0..len).map(|_| sigma * r.sample::<f64, _>(StandardNormal)).collect()
}

/// White noise under a slow sinusoidal envelope with randomized rate.
pub fn modulated_noise(len: usize, sample_rate: u32, sigma: f64, seed: u64) -> Vec<f64> {
    let mut r = rng(seed ^ 0x5eed);
    let rate_hz = r.gen_range(2.0..6.0);
    let phase = r.gen_range(0.0..2.0 * PI);
    let fs = f64::from(sample_rate);
    white_noise(len, sigma, seed)
        .into_iter()
        .enumerate()
        .map(|(n, v)| v * (1.0 + 0.8 * (2.0 * PI * rate_hz * n as f64 / fs + phase).sin()))
        .collect()
}

/// White noise through a one-pole low-pass with pole `a`.
pub fn lowpass_noise(len: usize, sigma: f64, a: f64, seed: u64) -> Vec<f64> {
    let mut y = 0.0;
    white_noise(len, sigma, seed)
        .into_iter()
        .map(|x| {
            y = a * y + (1.0 - a) * x;
            y
        })
        .collect()
}

/// Harmonic "syllables" with a wandering pitch, formant-shaped harmonic
/// amplitudes and short pauses between syllables.
pub fn speech_like(len: usize, sample_rate: u32, seed: u64) -> Vec<f64> {
    let mut r = rng(seed);
    let fs = f64::from(sample_rate);
    let base_f0 = r.gen_range(100.0..220.0);
    let mut out = vec![0.0; len];
    let mut pos = r.gen_range(0..(fs * 0.1) as usize);
    while pos < len {
        let syl = (fs * r.gen_range(0.15..0.35)) as usize;
        let gap = (fs * r.gen_range(0.05..0.15)) as usize;
        let f0_start = base_f0 * r.gen_range(0.85..1.15);
        let f0_end = base_f0 * r.gen_range(0.85..1.15);
        let formants = [r.gen_range(300.0..900.0), r.gen_range(900.0..2500.0)];
        let level = r.gen_range(0.5..1.0);
        let mut phase = 0.0;
        for n in 0..syl.min(len - pos) {
            let t = n as f64 / syl as f64;
            let f0 = f0_start + (f0_end - f0_start) * t;
            phase += 2.0 * PI * f0 / fs;
            let env = (PI * t).sin().powi(2) * level;
            let mut s = 0.0;
            let mut k = 1.0;
            while k * f0 < 4000.0_f64.min(fs / 2.0 - 100.0) {
                let f = k * f0;
                let shape: f64 = formants
                    .iter()
                    .map(|fc| 1.0 / (1.0 + ((f - fc) / 150.0).powi(2)))
                    .sum();
                s += (0.15 + shape) / k.sqrt() * (k * phase).sin();
                k += 1.0;
            }
            out[pos + n] = 0.1 * env * s;
        }
        pos += syl + gap;
    }
    out
}

/// Sine bursts: `on_s` seconds of tone, then `off_s` seconds of silence.
pub fn tone_bursts(len: usize, sample_rate: u32, freq_hz: f64, amplitude: f64, on_s: f64, off_s: f64) -> Vec<f64> {
    let fs = f64::from(sample_rate);
    let on = (on_s * fs) as usize;
    let period = on + (off_s * fs) as usize;
    (0..len)
        .map(|n| {
            if n % period.max(1) < on {
                amplitude * (2.0 * PI * freq_hz * n as f64 / fs).sin()
            } else {
                0.0
            }
        })
        .collect()
}

pub fn energy(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

/// Noise looped (from `offset`) to the clean length and scaled so the
/// clean-to-noise energy ratio equals `snr_db`.
pub fn scaled_noise(clean: &[f64], noise: &[f64], snr_db: f64, offset: usize) -> Result<Vec<f64>> {
    if noise.is_empty() || energy(noise) == 0.0 {
        return Ok(vec![0.0; clean.len()]);
    }
    if !snr_db.is_finite() {
        return Err(Error::invalid("SNR must be finite"));
    }
    let looped: Vec<f64> = (0..clean.len()).map(|n| noise[(n + offset) % noise.len()]).collect();
    let en = energy(&looped);
    if en == 0.0 {
        return Ok(looped);
    }
    let k = (energy(clean) / en / 10f64.powf(snr_db / 10.0)).sqrt();
    Ok(looped.into_iter().map(|v| v * k).collect())
}
