//! Suppression gains: model-based estimators, trained gain tables, bilateral
//! reconstruction of the non-reference ear and storage accounting.

mod model_file;
pub mod special;

pub use model_file::{load_model, save_model, MODEL_MAGIC};

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::snr::{SnrAxes, SnrState};
use crate::spectral::{BandPartition, Spectrum};

pub const G_MAX: f64 = 40.0;

/// v = ζξ/(1+ζ).
pub fn snr_v(zeta: f64, xi: f64) -> f64 {
    zeta * xi / (1.0 + zeta)
}

fn check_positive(zeta: f64, xi: f64) -> Result<()> {
    if zeta > 0.0 && xi > 0.0 && zeta.is_finite() && xi.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!(
            "SNRs must be positive and finite (ζ={zeta}, ξ={xi})"
        )))
    }
}

/// MMSE short-time spectral amplitude gain.
pub fn gain_mmse(zeta: f64, xi: f64) -> Result<f64> {
    check_positive(zeta, xi)?;
    let v = snr_v(zeta, xi);
    let h = 0.5 * v;
    let phi_scaled = (1.0 + v) * special::i0e(h) + v * special::i1e(h);
    let g = (std::f64::consts::PI * v).sqrt() / (2.0 * xi) * phi_scaled;
    Ok(g.clamp(0.0, G_MAX))
}

/// MMSE log-spectral amplitude gain.
pub fn gain_log_mmse(zeta: f64, xi: f64) -> Result<f64> {
    check_positive(zeta, xi)?;
    let v = snr_v(zeta, xi);
    let g = zeta / (1.0 + zeta) * (0.5 * special::e1(v)).exp();
    Ok(g.clamp(0.0, G_MAX))
}

/// Distortion criterion a table was trained under.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Criterion {
    /// Weighted Euclidean.
    We,
    /// Log Euclidean.
    Le,
    /// Weighted cosh.
    Wc,
    /// Not trained; filled directly (e.g. from an estimator).
    Direct,
}

impl Criterion {
    pub fn as_str(self) -> &'static str {
        match self {
            Criterion::We => "we",
            Criterion::Le => "le",
            Criterion::Wc => "wc",
            Criterion::Direct => "direct",
        }
    }
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Criterion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "we" => Ok(Criterion::We),
            "le" => Ok(Criterion::Le),
            "wc" => Ok(Criterion::Wc),
            "direct" => Ok(Criterion::Direct),
            other => Err(Error::invalid(format!("unknown criterion '{other}'"))),
        }
    }
}

/// I×J gains over quantized (prior, posterior) SNR, row-major by prior bin.
#[derive(Debug, Clone, PartialEq)]
pub struct GainTable {
    pub values: Vec<f64>,
    pub axes: SnrAxes,
    pub criterion: Criterion,
    pub p: f64,
    pub noise_class: String,
}

impl GainTable {
    pub fn new(
        values: Vec<f64>,
        axes: SnrAxes,
        criterion: Criterion,
        p: f64,
        noise_class: impl Into<String>,
    ) -> Result<Self> {
        let t = Self {
            values,
            axes,
            criterion,
            p,
            noise_class: noise_class.into(),
        };
        t.validate()?;
        Ok(t)
    }

    pub fn constant(axes: SnrAxes, value: f64) -> Result<Self> {
        Self::new(vec![value; axes.cells()], axes, Criterion::Direct, 0.0, "default")
    }

    /// Table sampled from the log-MMSE estimator at the cell centres.
    pub fn log_mmse(axes: SnrAxes) -> Result<Self> {
        axes.validate()?;
        let mut values = Vec::with_capacity(axes.cells());
        for i in 0..axes.i {
            for j in 0..axes.j {
                values.push(gain_log_mmse(axes.prior_center(i), axes.posterior_center(j))?);
            }
        }
        Self::new(values, axes, Criterion::Direct, 0.0, "default")
    }

    pub fn validate(&self) -> Result<()> {
        self.axes.validate()?;
        if self.values.len() != self.axes.cells() {
            return Err(Error::dim(format!(
                "gain table has {} values, axes need {}",
                self.values.len(),
                self.axes.cells()
            )));
        }
        if self.values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::invalid("gains must be finite and non-negative"));
        }
        if !self.p.is_finite() {
            return Err(Error::invalid("p must be finite"));
        }
        Ok(())
    }

    pub fn lookup(&self, i: usize, j: usize) -> f64 {
        assert!(i < self.axes.i && j < self.axes.j, "cell ({i}, {j}) out of range");
        self.values[i * self.axes.j + j]
    }
}

/// Trainable gain reconstructing the non-reference ear from the reference.
#[derive(Debug, Clone, PartialEq)]
pub enum HrtfGain {
    /// One gain per quantized delay over [-tau_max, tau_max] samples.
    Tdoa { h: Vec<f64>, tau_max: f64 },
    /// Q×B gains (row-major by direction) over quantized IPD and bark band.
    Ipd {
        h: Vec<f64>,
        q: usize,
        bands: BandPartition,
    },
}

impl HrtfGain {
    pub fn tdoa_ones(l: usize, tau_max: f64) -> Self {
        HrtfGain::Tdoa {
            h: vec![1.0; l],
            tau_max,
        }
    }

    pub fn ipd_ones(q: usize, bands: BandPartition) -> Self {
        HrtfGain::Ipd {
            h: vec![1.0; q * bands.num_bands()],
            q,
            bands,
        }
    }

    pub fn values(&self) -> &[f64] {
        match self {
            HrtfGain::Tdoa { h, .. } | HrtfGain::Ipd { h, .. } => h,
        }
    }

    pub fn values_mut(&mut self) -> &mut Vec<f64> {
        match self {
            HrtfGain::Tdoa { h, .. } | HrtfGain::Ipd { h, .. } => h,
        }
    }

    pub fn model_name(&self) -> &'static str {
        match self {
            HrtfGain::Tdoa { .. } => "tdoa",
            HrtfGain::Ipd { .. } => "ipd",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            HrtfGain::Tdoa { h, tau_max } => {
                if h.is_empty() || !(*tau_max > 0.0) {
                    return Err(Error::invalid("tdoa HRTF needs L >= 1 and tau_max > 0"));
                }
            }
            HrtfGain::Ipd { h, q, bands } => {
                if *q == 0 || h.len() != q * bands.num_bands() {
                    return Err(Error::dim(format!(
                        "ipd HRTF has {} values for Q={q}, B={}",
                        h.len(),
                        bands.num_bands()
                    )));
                }
            }
        }
        if self.values().iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::invalid("HRTF gains must be finite and non-negative"));
        }
        Ok(())
    }
}

/// Applies the table gain per bin and records the estimate as the previous
/// amplitude. Phases pass through.
pub fn apply_suppression(
    spectrum: &Spectrum,
    table: &GainTable,
    state: &mut SnrState,
) -> Result<Spectrum> {
    let mut gains = Vec::with_capacity(spectrum.bins());
    table_gains(&spectrum.mags, table, state, &mut gains, None)?;
    let mags: Vec<f64> = spectrum.mags.iter().zip(&gains).map(|(r, g)| r * g).collect();
    state.set_prev_amp(&mags);
    Ok(spectrum.with_mags(mags))
}

/// Per-bin table gains for the current noisy magnitudes. When `cells` is
/// given, receives the (i, j) cell of every bin.
pub fn table_gains(
    mags: &[f64],
    table: &GainTable,
    state: &SnrState,
    gains: &mut Vec<f64>,
    mut cells: Option<&mut Vec<(usize, usize)>>,
) -> Result<()> {
    if mags.len() != state.bins() {
        return Err(Error::dim(format!(
            "{} bins in spectrum, {} in SNR state",
            mags.len(),
            state.bins()
        )));
    }
    gains.clear();
    if let Some(c) = cells.as_deref_mut() {
        c.clear();
    }
    for (k, &r) in mags.iter().enumerate() {
        let zeta = state.decision_directed_prior(k, r);
        let xi = crate::snr::posterior_snr(r, state.lambda_d[k]);
        let i = table.axes.prior_index(zeta);
        let j = table.axes.posterior_index(xi);
        gains.push(table.values[i * table.axes.j + j]);
        if let Some(c) = cells.as_deref_mut() {
            c.push((i, j));
        }
    }
    Ok(())
}

/// Non-reference spectrum: every reference magnitude scaled by H_l; phases
/// taken from the non-reference noisy input.
pub fn reconstruct_nonref_tdoa(
    enhanced_ref: &Spectrum,
    hrtf: &HrtfGain,
    l: usize,
    nonref_phases: &[f64],
) -> Result<Spectrum> {
    let HrtfGain::Tdoa { h, .. } = hrtf else {
        return Err(Error::Config("expected a tdoa HRTF model".into()));
    };
    if l >= h.len() {
        return Err(Error::invalid(format!("delay bin {l} out of range 0..{}", h.len())));
    }
    check_phases(enhanced_ref, nonref_phases)?;
    let gain = h[l];
    Ok(Spectrum {
        mags: enhanced_ref.mags.iter().map(|m| m * gain).collect(),
        phases: nonref_phases.to_vec(),
        fft_size: enhanced_ref.fft_size,
        sample_rate: enhanced_ref.sample_rate,
    })
}

/// Non-reference spectrum: bins of band b scaled by H[q_b, b].
pub fn reconstruct_nonref_ipd(
    enhanced_ref: &Spectrum,
    hrtf: &HrtfGain,
    q_per_band: &[usize],
    nonref_phases: &[f64],
) -> Result<Spectrum> {
    let HrtfGain::Ipd { h, q, bands } = hrtf else {
        return Err(Error::Config("expected an ipd HRTF model".into()));
    };
    let nb = bands.num_bands();
    if q_per_band.len() != nb {
        return Err(Error::dim(format!(
            "{} direction indices for {nb} bands",
            q_per_band.len()
        )));
    }
    if bands.num_bins() != enhanced_ref.bins() {
        return Err(Error::dim("band partition does not match the spectrum"));
    }
    check_phases(enhanced_ref, nonref_phases)?;
    let mut mags = enhanced_ref.mags.clone();
    for (b, &qb) in q_per_band.iter().enumerate() {
        if qb >= *q {
            return Err(Error::invalid(format!("direction index {qb} out of range 0..{q}")));
        }
        let gain = h[qb * nb + b];
        mags[bands.band(b)].iter_mut().for_each(|m| *m *= gain);
    }
    Ok(Spectrum {
        mags,
        phases: nonref_phases.to_vec(),
        fft_size: enhanced_ref.fft_size,
        sample_rate: enhanced_ref.sample_rate,
    })
}

fn check_phases(spec: &Spectrum, phases: &[f64]) -> Result<()> {
    if phases.len() != spec.bins() {
        return Err(Error::dim(format!(
            "{} non-reference phases for {} bins",
            phases.len(),
            spec.bins()
        )));
    }
    Ok(())
}

/// Memory layout options for bilateral gain storage.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StorageMode {
    /// One table per ear.
    Double,
    /// One table per direction.
    PerDirection,
    /// One table plus an L-entry HRTF vector.
    Proposed,
}

impl FromStr for StorageMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "double" => Ok(StorageMode::Double),
            "per_direction" => Ok(StorageMode::PerDirection),
            "proposed" => Ok(StorageMode::Proposed),
            other => Err(Error::invalid(format!("unknown storage mode '{other}'"))),
        }
    }
}

/// Bits needed to store the gains at `w` bits per value.
pub fn storage_bits(mode: StorageMode, i: u64, j: u64, l: u64, w: u64) -> u64 {
    match mode {
        StorageMode::Double => 2 * i * j * w,
        StorageMode::PerDirection => l * i * j * w,
        StorageMode::Proposed => (i * j + l) * w,
    }
}
