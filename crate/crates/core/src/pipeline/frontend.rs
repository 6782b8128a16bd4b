//! Per-frame analysis shared by training and the runtime pipeline:
//! spectra, VAD, noise tracking, direction estimate and reference choice.

use realfft::num_complex::Complex64;

use crate::audio_io::{Window, DEFAULT_FRAME_LEN};
use crate::environment::vad::VadFrame;
use crate::environment::{combine_vad, VadConfig, VadDecision, VadState};
use crate::error::{Error, Result};
use crate::gain::HrtfGain;
use crate::snr::SnrState;
use crate::spectral::{compute_ipd, quantize_ipd, BandPartition, Spectrum, Stft};
use crate::tdoa::{
    gcc_from_spectra, quantize_delay, Channel, DelayTracker, ReferenceSelector, Weighting, DEFAULT_L,
    DEFAULT_MAX_LAG, DEFAULT_TRACKER_LEN,
};

pub const DEFAULT_Q: usize = 13;
pub const DEFAULT_PERSISTENCE: usize = 20;

/// How the non-reference ear is indexed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DirectionModel {
    Tdoa { l: usize, tau_max: f64 },
    Ipd { q: usize },
}

impl Default for DirectionModel {
    fn default() -> Self {
        DirectionModel::Tdoa {
            l: DEFAULT_L,
            tau_max: DEFAULT_MAX_LAG as f64,
        }
    }
}

impl DirectionModel {
    pub fn default_ipd() -> Self {
        DirectionModel::Ipd { q: DEFAULT_Q }
    }

    /// Unit HRTF gain of the matching shape.
    pub fn layout(&self, sample_rate: u32, fft_size: usize) -> Result<HrtfGain> {
        let h = match *self {
            DirectionModel::Tdoa { l, tau_max } => HrtfGain::tdoa_ones(l, tau_max),
            DirectionModel::Ipd { q } => {
                HrtfGain::ipd_ones(q, BandPartition::bark_bands(sample_rate, fft_size)?)
            }
        };
        h.validate()?;
        Ok(h)
    }

    pub fn of(hrtf: &HrtfGain) -> Self {
        match hrtf {
            HrtfGain::Tdoa { h, tau_max } => DirectionModel::Tdoa {
                l: h.len(),
                tau_max: *tau_max,
            },
            HrtfGain::Ipd { q, .. } => DirectionModel::Ipd { q: *q },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrontEndConfig {
    pub frame_len: usize,
    pub window: Window,
    pub sample_rate: u32,
    pub direction: DirectionModel,
    pub max_lag: usize,
    pub weighting: Weighting,
    pub tracker_len: usize,
    pub persistence: usize,
    pub vad: VadConfig,
    /// Gate each noise tracker with its own ear's VAD instead of the
    /// combined decision.
    pub per_channel_gating: bool,
    /// Overrides the delay-based reference choice.
    pub fixed_reference: Option<Channel>,
    /// Run VAD and noise tracking on the non-reference ear too. Turning it
    /// off requires a fixed reference; the reference decision then stands
    /// in for both ears.
    pub track_nonref: bool,
}

impl FrontEndConfig {
    pub fn new(sample_rate: u32, direction: DirectionModel) -> Self {
        Self {
            frame_len: DEFAULT_FRAME_LEN,
            window: Window::Hann,
            sample_rate,
            direction,
            max_lag: DEFAULT_MAX_LAG,
            weighting: Weighting::Phat,
            tracker_len: DEFAULT_TRACKER_LEN,
            persistence: DEFAULT_PERSISTENCE,
            vad: VadConfig::default(),
            per_channel_gating: false,
            fixed_reference: None,
            track_nonref: true,
        }
    }
}

/// Direction cell(s) of one frame.
#[derive(Debug, Clone, PartialEq)]
pub enum Direction {
    /// Raw and median-filtered delay, and its bin.
    Delay { raw: i32, tau: i32, l: usize },
    /// Per-band IPD and direction index.
    Ipd { ipd: Vec<f64>, q: Vec<usize> },
}

impl Direction {
    /// Flat direction cell of bin `k`: l for delays, q_b·B + b for IPDs.
    pub fn cell_of_bin(&self, k: usize, band_of_bin: &[usize]) -> usize {
        match self {
            Direction::Delay { l, .. } => *l,
            Direction::Ipd { q, .. } => {
                let b = band_of_bin[k];
                q[b] * q.len() + b
            }
        }
    }

    pub fn describe(&self) -> String {
        match self {
            Direction::Delay { tau, .. } => tau.to_string(),
            Direction::Ipd { q, .. } => q.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" "),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameAnalysis {
    /// Complex analysis spectra; `spectra` is their polar form.
    pub bins: [Vec<Complex64>; 2],
    pub spectra: [Spectrum; 2],
    pub vad: [VadFrame; 2],
    pub vad_combined: VadDecision,
    pub reference: Channel,
    pub direction: Direction,
}

#[derive(Debug, Clone)]
pub struct FrontEnd {
    config: FrontEndConfig,
    stft: Stft,
    tracker: DelayTracker,
    selector: ReferenceSelector,
    bands: Option<BandPartition>,
    band_of_bin: Vec<usize>,
    vad: [VadState; 2],
    pub snr: [SnrState; 2],
}

impl FrontEnd {
    pub fn new(config: FrontEndConfig) -> Result<Self> {
        if !config.track_nonref && config.fixed_reference.is_none() {
            return Err(Error::Config("reference-only tracking needs a fixed reference".into()));
        }
        let stft = Stft::new(config.frame_len, config.window, config.sample_rate)?;
        let bins = stft.bins();
        let bands = match config.direction {
            DirectionModel::Tdoa { l, tau_max } => {
                if l == 0 || !(tau_max > 0.0) {
                    return Err(Error::Config("tdoa model needs L >= 1 and tau_max > 0".into()));
                }
                if config.frame_len < 2 * config.max_lag {
                    return Err(Error::Config(format!(
                        "frame length {} shorter than 2 x max lag {}",
                        config.frame_len, config.max_lag
                    )));
                }
                None
            }
            DirectionModel::Ipd { q } => {
                if q == 0 {
                    return Err(Error::Config("ipd model needs Q >= 1".into()));
                }
                Some(BandPartition::bark_bands(config.sample_rate, config.frame_len)?)
            }
        };
        let band_of_bin = bands.as_ref().map(BandPartition::band_of_bins).unwrap_or_default();
        Ok(Self {
            stft,
            tracker: DelayTracker::new(config.tracker_len),
            selector: ReferenceSelector::new(config.persistence),
            bands,
            band_of_bin,
            vad: [VadState::new(config.vad), VadState::new(config.vad)],
            snr: [SnrState::new(bins), SnrState::new(bins)],
            config,
        })
    }

    pub fn config(&self) -> &FrontEndConfig {
        &self.config
    }

    pub fn stft_mut(&mut self) -> &mut Stft {
        &mut self.stft
    }

    pub fn bands(&self) -> Option<&BandPartition> {
        self.bands.as_ref()
    }

    pub fn band_of_bin(&self) -> &[usize] {
        &self.band_of_bin
    }

    /// Analyzes one stereo frame and advances the VAD, noise trackers,
    /// delay tracker and reference selector exactly once.
    pub fn analyze(&mut self, left: &[f64], right: &[f64]) -> Result<FrameAnalysis> {
        if left.len() != self.config.frame_len || right.len() != self.config.frame_len {
            return Err(Error::dim(format!(
                "frames of {} and {} samples, expected {}",
                left.len(),
                right.len(),
                self.config.frame_len
            )));
        }
        let (n, fs) = (self.config.frame_len, self.config.sample_rate);
        let bins = [self.stft.forward(left)?.to_vec(), self.stft.forward(right)?.to_vec()];
        let spectra = [Spectrum::from_bins(&bins[0], n, fs), Spectrum::from_bins(&bins[1], n, fs)];
        let (vad, vad_combined) = match self.config.fixed_reference.filter(|_| !self.config.track_nonref) {
            Some(r) => {
                let k = r.index();
                let v = self.vad[k].process(if k == 0 { left } else { right })?;
                self.snr[k].update_noise_psd(&spectra[k].mags, v.decision)?;
                let d = v.decision;
                ([v, v], d)
            }
            None => {
                let vad = [self.vad[0].process(left)?, self.vad[1].process(right)?];
                let vad_combined = combine_vad(vad[0].decision, vad[1].decision);
                for ((state, spec), v) in self.snr.iter_mut().zip(&spectra).zip(&vad) {
                    let gate = if self.config.per_channel_gating {
                        v.decision
                    } else {
                        vad_combined
                    };
                    state.update_noise_psd(&spec.mags, gate)?;
                }
                (vad, vad_combined)
            }
        };
        let (direction, reference) = match (&self.bands, self.config.direction) {
            (None, DirectionModel::Tdoa { l, tau_max }) => {
                let (max_lag, w) = (self.config.max_lag, self.config.weighting);
                let raw = gcc_from_spectra(&bins[0], &bins[1], max_lag, w, &mut self.stft)?.tau;
                let tau = self.tracker.update(raw);
                let reference = self.selector.update(f64::from(tau));
                let l = quantize_delay(f64::from(tau), l, tau_max);
                (Direction::Delay { raw, tau, l }, reference)
            }
            (Some(bands), DirectionModel::Ipd { q }) => {
                let ipd = compute_ipd(&spectra[0], &spectra[1], bands)?;
                let qs = ipd.iter().map(|&v| quantize_ipd(v, q)).collect();
                (Direction::Ipd { ipd, q: qs }, Channel::Input1)
            }
            _ => unreachable!("front end built for its own direction model"),
        };
        let reference = self.config.fixed_reference.unwrap_or(reference);
        Ok(FrameAnalysis {
            bins,
            spectra,
            vad,
            vad_combined,
            reference,
            direction,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signals::white_noise;

    #[test]
    fn delay_direction_and_reference() {
        let mut fe = FrontEnd::new(FrontEndConfig::new(22050, DirectionModel::default())).unwrap();
        let x = white_noise(256 * 40, 1.0, 3);
        let mut last = None;
        for k in 0..30 {
            let left = &x[k * 256 + 10..k * 256 + 266];
            let right = &x[k * 256 + 4..k * 256 + 260];
            last = Some(fe.analyze(left, right).unwrap());
        }
        let a = last.unwrap();
        match a.direction {
            Direction::Delay { tau, l, .. } => {
                assert_eq!(tau, 6);
                assert_eq!(l, quantize_delay(6.0, DEFAULT_L, 24.0));
            }
            _ => panic!("expected a delay"),
        }
        assert_eq!(a.reference, Channel::Input1);
        assert!(fe.analyze(&[0.0; 10], &[0.0; 10]).is_err());
    }

    #[test]
    fn reference_only_tracking() {
        let mut c = FrontEndConfig::new(22050, DirectionModel::default());
        c.track_nonref = false;
        assert!(FrontEnd::new(c.clone()).is_err());
        c.fixed_reference = Some(Channel::Input2);
        let mut fe = FrontEnd::new(c).unwrap();
        let x = white_noise(256 * 12, 1.0, 5);
        let mut v = VadState::new(VadConfig::default());
        for k in 0..20 {
            let (l, r) = (&x[k * 128..k * 128 + 256], &x[k * 128 + 64..k * 128 + 320]);
            let a = fe.analyze(l, r).unwrap();
            let want = v.process(r).unwrap();
            assert_eq!(a.vad[1], want);
            assert_eq!(a.vad_combined, want.decision);
        }
        assert!(fe.snr[0].lambda_d.iter().all(|&l| l == crate::snr::NOISE_FLOOR));
        assert!(fe.snr[1].lambda_d.iter().all(|&l| l > crate::snr::NOISE_FLOOR));
    }

    #[test]
    fn ipd_cells_use_bark_bands() {
        let mut fe = FrontEnd::new(FrontEndConfig::new(22050, DirectionModel::default_ipd())).unwrap();
        let x = white_noise(256, 1.0, 1);
        let a = fe.analyze(&x, &x).unwrap();
        let Direction::Ipd { ipd, q } = &a.direction else {
            panic!("expected ipd");
        };
        let nb = fe.bands().unwrap().num_bands();
        assert_eq!(ipd.len(), nb);
        assert!(q.iter().all(|&v| v == quantize_ipd(0.0, DEFAULT_Q)));
        let b = fe.band_of_bin()[40];
        assert_eq!(a.direction.cell_of_bin(40, fe.band_of_bin()), q[b] * nb + b);
        assert_eq!(a.reference, Channel::Input1);
    }

    #[test]
    fn layouts_round_trip() {
        for m in [DirectionModel::default(), DirectionModel::default_ipd()] {
            let h = m.layout(22050, 256).unwrap();
            assert_eq!(DirectionModel::of(&h), m);
        }
    }
}
