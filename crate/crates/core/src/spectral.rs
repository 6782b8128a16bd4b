//! FFT analysis/synthesis, bark-band partitions, interaural phase differences
//! and the single-level wavelet split feeding the VAD.

use std::f64::consts::PI;
use std::sync::Arc;

use realfft::num_complex::Complex64;
use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};

use crate::audio_io::Window;
use crate::error::{Error, Result};

/// Magnitude/phase spectrum of one real frame (bins 0..=fft_size/2).
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub mags: Vec<f64>,
    pub phases: Vec<f64>,
    pub fft_size: usize,
    pub sample_rate: u32,
}

impl Spectrum {
    pub fn zeros(fft_size: usize, sample_rate: u32) -> Self {
        let bins = fft_size / 2 + 1;
        Self {
            mags: vec![0.0; bins],
            phases: vec![0.0; bins],
            fft_size,
            sample_rate,
        }
    }

    pub fn bins(&self) -> usize {
        self.mags.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.mags.len() != self.fft_size / 2 + 1 || self.phases.len() != self.mags.len() {
            return Err(Error::dim(format!(
                "spectrum for fft size {} needs {} bins",
                self.fft_size,
                self.fft_size / 2 + 1
            )));
        }
        if self.mags.iter().any(|m| !m.is_finite() || *m < 0.0) {
            return Err(Error::invalid("magnitudes must be finite and non-negative"));
        }
        Ok(())
    }

    /// Polar form of a complex half spectrum.
    pub fn from_bins(bins: &[Complex64], fft_size: usize, sample_rate: u32) -> Self {
        Self {
            mags: bins.iter().map(|c| c.norm()).collect(),
            phases: bins.iter().map(|c| c.arg()).collect(),
            fft_size,
            sample_rate,
        }
    }

    /// Copy with new magnitudes and the same phases.
    pub fn with_mags(&self, mags: Vec<f64>) -> Self {
        Self {
            mags,
            phases: self.phases.clone(),
            fft_size: self.fft_size,
            sample_rate: self.sample_rate,
        }
    }
}

/// Reusable forward/inverse real FFT with a fixed analysis window.
pub struct Stft {
    fft_size: usize,
    sample_rate: u32,
    window: Vec<f64>,
    forward: Arc<dyn RealToComplex<f64>>,
    inverse: Arc<dyn ComplexToReal<f64>>,
    time_buf: Vec<f64>,
    freq_buf: Vec<Complex64>,
}

impl std::fmt::Debug for Stft {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Stft")
            .field("fft_size", &self.fft_size)
            .field("sample_rate", &self.sample_rate)
            .finish_non_exhaustive()
    }
}

impl Clone for Stft {
    fn clone(&self) -> Self {
        Self::with_window(self.window.clone(), self.sample_rate).expect("already validated")
    }
}

impl Stft {
    pub fn new(fft_size: usize, window: Window, sample_rate: u32) -> Result<Self> {
        Self::with_window(window.coefficients(fft_size), sample_rate)
    }

    pub fn with_window(window: Vec<f64>, sample_rate: u32) -> Result<Self> {
        let fft_size = window.len();
        if fft_size < 2 || !fft_size.is_multiple_of(2) {
            return Err(Error::invalid(format!("fft size {fft_size} must be even and >= 2")));
        }
        let mut planner = RealFftPlanner::<f64>::new();
        let forward = planner.plan_fft_forward(fft_size);
        let inverse = planner.plan_fft_inverse(fft_size);
        Ok(Self {
            fft_size,
            sample_rate,
            window,
            time_buf: forward.make_input_vec(),
            freq_buf: forward.make_output_vec(),
            forward,
            inverse,
        })
    }

    pub fn fft_size(&self) -> usize {
        self.fft_size
    }

    pub fn bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn window(&self) -> &[f64] {
        &self.window
    }

    /// Complex spectrum of the windowed frame.
    pub fn forward(&mut self, frame: &[f64]) -> Result<&[Complex64]> {
        if frame.len() != self.fft_size {
            return Err(Error::dim(format!(
                "frame length {} != fft size {}",
                frame.len(),
                self.fft_size
            )));
        }
        for ((t, x), w) in self.time_buf.iter_mut().zip(frame).zip(&self.window) {
            *t = x * w;
        }
        self.forward
            .process(&mut self.time_buf, &mut self.freq_buf)
            .map_err(|e| Error::invalid(format!("fft failed: {e}")))?;
        Ok(&self.freq_buf)
    }

    pub fn analyze(&mut self, frame: &[f64]) -> Result<Spectrum> {
        let (fft_size, sample_rate) = (self.fft_size, self.sample_rate);
        Ok(Spectrum::from_bins(self.forward(frame)?, fft_size, sample_rate))
    }

    /// Inverse transform of a complex half spectrum (scaled by 1/N).
    pub fn inverse(&mut self, bins: &[Complex64]) -> Result<Vec<f64>> {
        if bins.len() != self.bins() {
            return Err(Error::dim(format!(
                "{} bins given, fft size {} needs {}",
                bins.len(),
                self.fft_size,
                self.bins()
            )));
        }
        self.freq_buf.copy_from_slice(bins);
        self.inverse_buf()
    }

    fn inverse_buf(&mut self) -> Result<Vec<f64>> {
        self.freq_buf[0].im = 0.0;
        let last = self.freq_buf.len() - 1;
        self.freq_buf[last].im = 0.0;
        let mut out = self.inverse.make_output_vec();
        self.inverse
            .process(&mut self.freq_buf, &mut out)
            .map_err(|e| Error::invalid(format!("inverse fft failed: {e}")))?;
        let scale = 1.0 / self.fft_size as f64;
        out.iter_mut().for_each(|v| *v *= scale);
        Ok(out)
    }

    /// Time frame with magnitudes `mags` and the phases of `like`, whose
    /// magnitudes are `like_mags`. Avoids the polar round trip when the
    /// phase comes from an analysis frame.
    pub fn synthesize_like(&mut self, mags: &[f64], like: &[Complex64], like_mags: &[f64]) -> Result<Vec<f64>> {
        let k = self.bins();
        if mags.len() != k || like.len() != k || like_mags.len() != k {
            return Err(Error::dim(format!("synthesis needs {k} bins")));
        }
        for (((b, &m), &c), &lm) in self.freq_buf.iter_mut().zip(mags).zip(like).zip(like_mags) {
            *b = if lm > 0.0 { c * (m / lm) } else { Complex64::new(m, 0.0) };
        }
        self.inverse_buf()
    }

    /// Returns the windowed time frame whose spectrum is `spec`.
    pub fn synthesize(&mut self, spec: &Spectrum) -> Result<Vec<f64>> {
        if spec.fft_size != self.fft_size {
            return Err(Error::dim("spectrum fft size differs from the transform"));
        }
        spec.validate()?;
        let bins: Vec<Complex64> = spec
            .mags
            .iter()
            .zip(&spec.phases)
            .map(|(&m, &p)| Complex64::from_polar(m, p))
            .collect();
        self.inverse(&bins)
    }
}

/// One-shot analysis with a window given by its coefficients.
pub fn analyze(frame: &[f64], window: &[f64], sample_rate: u32) -> Result<Spectrum> {
    if frame.len() != window.len() {
        return Err(Error::dim("frame and window lengths differ"));
    }
    Stft::with_window(window.to_vec(), sample_rate)?.analyze(frame)
}

/// One-shot synthesis.
pub fn synthesize(spec: &Spectrum) -> Result<Vec<f64>> {
    Stft::new(spec.fft_size, Window::Rectangular, spec.sample_rate)?.synthesize(spec)
}

/// Critical-band edges in Hz.
pub const ZWICKER_EDGES_HZ: [f64; 24] = [
    100.0, 200.0, 300.0, 400.0, 510.0, 630.0, 770.0, 920.0, 1080.0, 1270.0, 1480.0, 1720.0,
    2000.0, 2320.0, 2700.0, 3150.0, 3700.0, 4400.0, 5300.0, 6400.0, 7700.0, 9500.0, 12000.0,
    15500.0,
];

/// Contiguous bands over the FFT bins; band `b` is `edges[b]..edges[b + 1]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BandPartition {
    edges: Vec<usize>,
}

impl BandPartition {
    pub fn new(edges: Vec<usize>) -> Result<Self> {
        if edges.len() < 2 || edges[0] != 0 || edges.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid(
                "band edges must start at 0 and be strictly increasing",
            ));
        }
        Ok(Self { edges })
    }

    /// Bark bands: Zwicker edges below Nyquist mapped to the nearest bin.
    /// Bin 0 belongs to the first band and empty bands merge into the next.
    pub fn bark_bands(sample_rate: u32, fft_size: usize) -> Result<Self> {
        if sample_rate == 0 || fft_size < 2 {
            return Err(Error::invalid("invalid rate or fft size"));
        }
        let bins = fft_size / 2 + 1;
        let nyquist = f64::from(sample_rate) / 2.0;
        let mut edges = vec![0];
        for &f in ZWICKER_EDGES_HZ.iter().skip(1).take_while(|&&f| f < nyquist) {
            let bin = (f * fft_size as f64 / f64::from(sample_rate)).round() as usize;
            if bin > *edges.last().unwrap() && bin < bins {
                edges.push(bin);
            }
        }
        edges.push(bins);
        Self::new(edges)
    }

    pub fn num_bands(&self) -> usize {
        self.edges.len() - 1
    }

    pub fn num_bins(&self) -> usize {
        *self.edges.last().unwrap()
    }

    pub fn edges(&self) -> &[usize] {
        &self.edges
    }

    pub fn band(&self, b: usize) -> std::ops::Range<usize> {
        self.edges[b]..self.edges[b + 1]
    }

    /// Band index of each bin.
    pub fn band_of_bins(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.num_bins());
        for b in 0..self.num_bands() {
            out.extend(std::iter::repeat_n(b, self.band(b).len()));
        }
        out
    }
}

/// Per-band interaural phase difference from magnitude-weighted phase sums.
pub fn compute_ipd(left: &Spectrum, right: &Spectrum, bands: &BandPartition) -> Result<Vec<f64>> {
    if left.fft_size != right.fft_size || left.bins() != right.bins() {
        return Err(Error::dim("left/right spectra differ in size"));
    }
    if bands.num_bins() != left.bins() {
        return Err(Error::dim(format!(
            "partition covers {} bins, spectrum has {}",
            bands.num_bins(),
            left.bins()
        )));
    }
    Ok((0..bands.num_bands())
        .map(|b| {
            let mut acc = Complex64::new(0.0, 0.0);
            for k in bands.band(b) {
                acc += Complex64::from_polar(
                    left.mags[k] * right.mags[k],
                    left.phases[k] - right.phases[k],
                );
            }
            if acc.norm() < 1e-12 {
                0.0
            } else {
                acc.arg()
            }
        })
        .collect())
}

/// Uniform direction bin of an IPD over [-π, π).
pub fn quantize_ipd(ipd: f64, q: usize) -> usize {
    let q = q.max(1);
    let idx = ((ipd + PI) / (2.0 * PI / q as f64)).floor();
    if idx.is_nan() || idx < 0.0 {
        0
    } else {
        (idx as usize).min(q - 1)
    }
}

const SQRT3: f64 = 1.732_050_807_568_877_2;

/// Daubechies-4 lowpass analysis filter.
pub fn db4_lowpass() -> [f64; 4] {
    let s = 4.0 * std::f64::consts::SQRT_2;
    [
        (1.0 + SQRT3) / s,
        (3.0 + SQRT3) / s,
        (3.0 - SQRT3) / s,
        (1.0 - SQRT3) / s,
    ]
}

/// Quadrature-mirror highpass matching [`db4_lowpass`].
pub fn db4_highpass() -> [f64; 4] {
    let h = db4_lowpass();
    [h[3], -h[2], h[1], -h[0]]
}

/// One level of a periodized Daubechies-4 analysis filter bank.
pub fn subband_split(frame: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = frame.len();
    if n == 0 || !n.is_multiple_of(2) {
        return Err(Error::invalid(format!("subband split needs an even length, got {n}")));
    }
    let (h, g) = (db4_lowpass(), db4_highpass());
    let mut low = Vec::with_capacity(n / 2);
    let mut high = Vec::with_capacity(n / 2);
    for m in 0..n / 2 {
        let (mut lo, mut hi) = (0.0, 0.0);
        for k in 0..4 {
            let x = frame[(2 * m + k) % n];
            lo += h[k] * x;
            hi += g[k] * x;
        }
        low.push(lo);
        high.push(hi);
    }
    Ok((low, high))
}
