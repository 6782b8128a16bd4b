//! Frame-synchronous runtime processing: detection, model selection,
//! suppression on the reference ear and reconstruction of the other ear.

pub mod bench;
pub mod frontend;

pub use bench::{bench_modes, write_bench_csv, BenchReport, BenchRow, UnilateralEnhancer};
pub use frontend::{Direction, DirectionModel, FrameAnalysis, FrontEnd, FrontEndConfig};

use std::fmt::Write as _;
use std::path::Path;

use crate::audio_io::{cola_gain, frame_stream, overlap_add, write_atomic, AudioBuffer, DEFAULT_HOP};
use crate::environment::mfcc::FEATURE_DIM;
use crate::environment::{
    fuse_features, BackgroundDecision, BackgroundDetector, ClassifierBundle, FeatureExtractor, VadDecision,
};
use crate::error::{Error, Result};
use crate::gain::{reconstruct_nonref_ipd, reconstruct_nonref_tdoa, table_gains, GainTable, HrtfGain};
use crate::snr::posterior_snr;
use crate::spectral::{BandPartition, Spectrum, Stft};
use crate::tdoa::Channel;

pub const DEFAULT_VOTE_WINDOW: usize = 20;

/// One trained gain table with its HRTF gains.
#[derive(Debug, Clone, PartialEq)]
pub struct GainModel {
    pub table: GainTable,
    pub hrtf: HrtfGain,
}

impl GainModel {
    pub fn label(&self) -> &str {
        &self.table.noise_class
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BypassPolicy {
    pub quiet: bool,
    pub music: bool,
    /// Pass every frame through unprocessed.
    pub always: bool,
}

impl Default for BypassPolicy {
    fn default() -> Self {
        Self {
            quiet: true,
            music: true,
            always: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub front: FrontEndConfig,
    pub hop: usize,
    pub vote_window: usize,
    pub bypass: BypassPolicy,
    /// Compute the per-frame cell hit-rate and keep decision-log records.
    pub diagnostics: bool,
}

impl PipelineConfig {
    pub fn new(sample_rate: u32, direction: DirectionModel) -> Self {
        Self {
            front: FrontEndConfig::new(sample_rate, direction),
            hop: DEFAULT_HOP,
            vote_window: DEFAULT_VOTE_WINDOW,
            bypass: BypassPolicy::default(),
            diagnostics: true,
        }
    }

    /// Configuration whose direction model matches `model`.
    pub fn for_model(sample_rate: u32, model: &GainModel) -> Self {
        Self::new(sample_rate, DirectionModel::of(&model.hrtf))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostics {
    pub vad: VadDecision,
    pub reference: Channel,
    pub direction: Direction,
    pub class: String,
    pub suppressed: bool,
    /// Fraction of bins whose prior and posterior SNR fall inside the table
    /// range; `None` for bypassed frames or with diagnostics off.
    pub hit_rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameOutput {
    /// Windowed output frames, ready for overlap-add.
    pub frames: [Vec<f64>; 2],
    pub decision: BackgroundDecision,
    pub diagnostics: Diagnostics,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogRecord {
    pub frame: usize,
    pub vad: VadDecision,
    pub background: String,
    pub class: String,
    pub tau_or_q: String,
    pub ref_channel: Channel,
    pub hit_rate: Option<f64>,
}

fn channel_name(c: Channel) -> &'static str {
    match c {
        Channel::Input1 => "1",
        Channel::Input2 => "2",
    }
}

pub fn write_decision_log(path: impl AsRef<Path>, records: &[LogRecord]) -> Result<()> {
    let mut s = String::from("frame,vad,background,class,tau_or_q,ref_channel,hit_rate\n");
    for r in records {
        let hit = r.hit_rate.map(|h| format!("{h:.6}")).unwrap_or_default();
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            r.frame,
            r.vad,
            r.background,
            r.class,
            r.tau_or_q,
            channel_name(r.ref_channel),
            hit
        );
    }
    write_atomic(path, s.as_bytes())
}

/// Checks that every model shares one SNR grid and one direction layout,
/// and that the layout matches the front end.
fn check_models(models: &[GainModel], front: &FrontEndConfig) -> Result<()> {
    let first = models.first().ok_or_else(|| Error::Config("no gain models given".into()))?;
    for (k, m) in models.iter().enumerate() {
        m.table.validate()?;
        m.hrtf.validate()?;
        if m.table.axes != first.table.axes {
            return Err(Error::Config(format!("model '{}' uses different SNR axes", m.label())));
        }
        if DirectionModel::of(&m.hrtf) != front.direction {
            return Err(Error::Config(format!(
                "model '{}' has a {} HRTF layout that does not match the pipeline",
                m.label(),
                m.hrtf.model_name()
            )));
        }
        if let HrtfGain::Ipd { bands, .. } = &m.hrtf {
            let expected = BandPartition::bark_bands(front.sample_rate, front.frame_len)?;
            if bands != &expected {
                return Err(Error::Config(format!(
                    "model '{}' band edges differ from the bark bands at {} Hz / {}",
                    m.label(),
                    front.sample_rate,
                    front.frame_len
                )));
            }
        }
        if models[..k].iter().any(|o| o.label() == m.label()) {
            return Err(Error::Config(format!("duplicate model for class '{}'", m.label())));
        }
    }
    Ok(())
}

/// The whole bilateral processor for one stereo stream.
#[derive(Debug, Clone)]
pub struct Pipeline {
    config: PipelineConfig,
    front: FrontEnd,
    synth: Stft,
    window: Vec<f64>,
    models: Vec<GainModel>,
    active: usize,
    detector: Option<BackgroundDetector>,
    features: Option<[FeatureExtractor; 2]>,
    fuse: bool,
    frame_index: usize,
}

impl Pipeline {
    pub fn new(config: PipelineConfig, models: Vec<GainModel>, classifier: Option<ClassifierBundle>) -> Result<Self> {
        check_models(&models, &config.front)?;
        let f = &config.front;
        let window = f.window.coefficients(f.frame_len);
        cola_gain(&window, config.hop)?;
        if config.vote_window == 0 {
            return Err(Error::Config("vote window must be at least 1".into()));
        }
        let (detector, features, fuse) = match classifier {
            Some(bundle) => {
                let fuse = match bundle.dim {
                    d if d == 2 * FEATURE_DIM => true,
                    d if d == FEATURE_DIM => false,
                    d => {
                        return Err(Error::Config(format!(
                            "classifier expects {d}-dim features; the pipeline produces {FEATURE_DIM} or {}",
                            2 * FEATURE_DIM
                        )))
                    }
                };
                let fx = FeatureExtractor::new(f.sample_rate, f.frame_len)?;
                (
                    Some(BackgroundDetector::new(bundle, config.vote_window)),
                    Some([fx.clone(), fx]),
                    fuse,
                )
            }
            None => (None, None, false),
        };
        Ok(Self {
            front: FrontEnd::new(config.front.clone())?,
            synth: Stft::new(f.frame_len, f.window, f.sample_rate)?,
            window,
            models,
            active: 0,
            detector,
            features,
            fuse,
            frame_index: 0,
            config,
        })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn active_model(&self) -> &GainModel {
        &self.models[self.active]
    }

    pub fn front(&self) -> &FrontEnd {
        &self.front
    }

    /// Processes one stereo frame (length `frame_len`) and advances every
    /// piece of state exactly once.
    pub fn process_frame(&mut self, left: &[f64], right: &[f64]) -> Result<FrameOutput> {
        let an = self.front.analyze(left, right)?;
        let features = match &mut self.features {
            Some([fl, fr]) => {
                let a = fl.extract(&an.spectra[0].mags)?;
                let b = fr.extract(&an.spectra[1].mags)?;
                Some(if self.fuse { fuse_features(&a, &b)? } else { a })
            }
            None => None,
        };
        let decision = match &mut self.detector {
            Some(d) => d.decide(an.vad_combined, features.as_deref())?,
            None => match an.vad_combined {
                VadDecision::Voice => BackgroundDecision::Voice,
                VadDecision::Quiet => BackgroundDecision::Quiet,
                VadDecision::Noise => BackgroundDecision::Noise(self.active_model().label().to_string()),
            },
        };
        if let BackgroundDecision::Noise(label) = &decision {
            if let Some(k) = self.models.iter().position(|m| m.label() == label) {
                self.active = k;
            }
        }
        let bypass = self.config.bypass.always
            || match decision {
                BackgroundDecision::Quiet => self.config.bypass.quiet,
                BackgroundDecision::Music => self.config.bypass.music,
                _ => false,
            };
        let (frames, hit_rate) = self.render(&an, left, right, bypass)?;
        self.frame_index += 1;
        Ok(FrameOutput {
            frames,
            diagnostics: Diagnostics {
                vad: an.vad_combined,
                reference: an.reference,
                direction: an.direction,
                class: self.active_model().label().to_string(),
                suppressed: !bypass,
                hit_rate,
            },
            decision,
        })
    }

    /// Suppression and reconstruction for an analyzed frame. Bypassed frames
    /// return the windowed inputs.
    pub fn render(
        &mut self,
        an: &FrameAnalysis,
        left: &[f64],
        right: &[f64],
        bypass: bool,
    ) -> Result<([Vec<f64>; 2], Option<f64>)> {
        if bypass {
            for (state, spec) in self.front.snr.iter_mut().zip(&an.spectra) {
                state.set_prev_amp(&spec.mags);
            }
            let win = |x: &[f64]| x.iter().zip(&self.window).map(|(a, w)| a * w).collect::<Vec<_>>();
            return Ok(([win(left), win(right)], None));
        }
        let r = an.reference.index();
        let nr = an.reference.other().index();
        let model = &self.models[self.active];
        let noisy = &an.spectra[r];
        let hit_rate = self
            .config
            .diagnostics
            .then(|| hit_rate(&noisy.mags, &self.front.snr[r], &model.table));
        let enhanced = suppress(noisy, &model.table, &self.front.snr[r])?;
        let phases = &an.spectra[nr].phases;
        let rebuilt = match &an.direction {
            Direction::Delay { l, .. } => reconstruct_nonref_tdoa(&enhanced, &model.hrtf, *l, phases)?,
            Direction::Ipd { q, .. } => reconstruct_nonref_ipd(&enhanced, &model.hrtf, q, phases)?,
        };
        self.front.snr[r].set_prev_amp(&enhanced.mags);
        self.front.snr[nr].set_prev_amp(&rebuilt.mags);
        let mut out: [Vec<f64>; 2] = Default::default();
        out[r] = self.synth.synthesize_like(&enhanced.mags, &an.bins[r], &noisy.mags)?;
        out[nr] = self.synth.synthesize_like(&rebuilt.mags, &an.bins[nr], &an.spectra[nr].mags)?;
        Ok((out, hit_rate))
    }

    /// Streams a stereo buffer through the pipeline. The input is padded so
    /// every output sample is covered by two frames; the result has the
    /// input's length.
    pub fn process_file(&mut self, input: &AudioBuffer) -> Result<(AudioBuffer, Vec<LogRecord>)> {
        if input.num_channels() != 2 {
            return Err(Error::invalid(format!(
                "expected a stereo input, got {} channel(s)",
                input.num_channels()
            )));
        }
        if input.sample_rate() != self.config.front.sample_rate {
            return Err(Error::invalid(format!(
                "input at {} Hz, pipeline configured for {} Hz",
                input.sample_rate(),
                self.config.front.sample_rate
            )));
        }
        let (fl, hop) = (self.config.front.frame_len, self.config.hop);
        let pad = fl - hop;
        let framed: Vec<Vec<Vec<f64>>> = input
            .channels()
            .iter()
            .map(|c| {
                let mut padded = vec![0.0; pad];
                padded.extend_from_slice(c);
                frame_stream(&padded, fl, hop)
            })
            .collect::<Result<_>>()?;
        let mut outs: [Vec<Vec<f64>>; 2] = Default::default();
        let mut log = Vec::with_capacity(framed[0].len());
        for (left, right) in framed[0].iter().zip(&framed[1]) {
            let frame = self.frame_index;
            let o = self.process_frame(left, right)?;
            let [a, b] = o.frames;
            outs[0].push(a);
            outs[1].push(b);
            if !self.config.diagnostics {
                continue;
            }
            let d = o.diagnostics;
            log.push(LogRecord {
                frame,
                vad: d.vad,
                background: o.decision.kind().to_string(),
                class: d.class,
                tau_or_q: d.direction.describe(),
                ref_channel: d.reference,
                hit_rate: d.hit_rate,
            });
        }
        let n = input.len();
        let channels = outs
            .iter()
            .map(|frames| Ok(overlap_add(frames, hop, &self.window)?[pad..pad + n].to_vec()))
            .collect::<Result<Vec<_>>>()?;
        Ok((AudioBuffer::new(channels, input.sample_rate())?, log))
    }
}

fn hit_rate(mags: &[f64], state: &crate::snr::SnrState, table: &GainTable) -> f64 {
    let a = &table.axes;
    let inside = |lin: f64, lo: f64, hi: f64| {
        let db = 10.0 * lin.log10();
        db >= lo && db <= hi
    };
    let hits = mags
        .iter()
        .enumerate()
        .filter(|&(k, &r)| {
            let zeta = state.decision_directed_prior(k, r);
            let xi = posterior_snr(r, state.lambda_d[k]);
            inside(zeta, a.prior_db_min, a.prior_db_max) && inside(xi, a.posterior_db_min, a.posterior_db_max)
        })
        .count();
    hits as f64 / mags.len().max(1) as f64
}

/// Noisy spectrum scaled by its table gains; phases pass through.
pub fn suppress(spectrum: &Spectrum, table: &GainTable, state: &crate::snr::SnrState) -> Result<Spectrum> {
    let mut gains = Vec::new();
    table_gains(&spectrum.mags, table, state, &mut gains, None)?;
    Ok(spectrum.with_mags(spectrum.mags.iter().zip(&gains).map(|(m, g)| m * g).collect()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio_io::{convolve_hrir, synth_hrir, DEFAULT_SAMPLE_RATE};
    use crate::gain::Criterion;
    use crate::signals::{speech_like, white_noise};
    use crate::snr::SnrAxes;

    const FS: u32 = DEFAULT_SAMPLE_RATE;

    fn constant_model(g: f64, h: f64, label: &str) -> GainModel {
        let mut table = GainTable::constant(SnrAxes::default(), g).unwrap();
        table.noise_class = label.into();
        table.criterion = Criterion::We;
        let mut hrtf = HrtfGain::tdoa_ones(7, 24.0);
        hrtf.values_mut().iter_mut().for_each(|v| *v = h);
        GainModel { table, hrtf }
    }

    fn pipeline(model: GainModel) -> Pipeline {
        Pipeline::new(PipelineConfig::for_model(FS, &model), vec![model], None).unwrap()
    }

    fn err_db(a: &[f64], b: &[f64]) -> f64 {
        let e: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
        let s: f64 = a.iter().map(|x| x * x).sum();
        10.0 * (e / s).log10()
    }

    #[test]
    fn identity_model_on_diotic_noise_is_transparent() {
        let mut p = pipeline(constant_model(1.0, 1.0, "default"));
        let x = white_noise(256 * 60, 0.1, 5);
        let win = p.window.clone();
        for k in 0..50 {
            let f = &x[k * 128..k * 128 + 256];
            let o = p.process_frame(f, f).unwrap();
            for out in &o.frames {
                for ((y, s), w) in out.iter().zip(f).zip(&win) {
                    assert!((y - s * w).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn quiet_frames_bypass_exactly() {
        let mut p = pipeline(constant_model(0.1, 0.5, "default"));
        let z = vec![0.0; 256];
        let mut tiny = vec![0.0; 256];
        tiny[3] = 1e-12;
        let mut quiet = 0;
        for _ in 0..80 {
            let o = p.process_frame(&tiny, &z).unwrap();
            if o.decision == BackgroundDecision::Quiet {
                quiet += 1;
                assert!(!o.diagnostics.suppressed);
                let w = &p.window;
                assert_eq!(o.frames[0], tiny.iter().zip(w).map(|(a, b)| a * b).collect::<Vec<_>>());
                assert!(o.frames[1].iter().all(|v| *v == 0.0));
            }
        }
        assert!(quiet > 0);
    }

    #[test]
    fn file_output_matches_frame_loop_replay() {
        let model = constant_model(0.5, 0.8, "default");
        let clean = speech_like(FS as usize / 2, FS, 3);
        let noise = white_noise(clean.len(), 0.02, 4);
        let mono: Vec<f64> = clean.iter().zip(&noise).map(|(a, b)| a + b).collect();
        let stereo = convolve_hrir(
            &AudioBuffer::mono(mono, FS).unwrap(),
            &synth_hrir(40.0, FS, 0.0875).unwrap(),
        )
        .unwrap();
        let (out, log) = pipeline(model.clone()).process_file(&stereo).unwrap();
        assert_eq!(out.len(), stereo.len());

        let mut p = pipeline(model);
        let pad = 128;
        let padded: Vec<Vec<f64>> = stereo
            .channels()
            .iter()
            .map(|c| [vec![0.0; pad], c.clone()].concat())
            .collect();
        let nframes = padded[0].len().div_ceil(128);
        let mut acc = [vec![0.0; nframes * 128 + 256], vec![0.0; nframes * 128 + 256]];
        for k in 0..nframes {
            let grab = |c: &Vec<f64>| {
                let mut f: Vec<f64> = c.iter().skip(k * 128).take(256).copied().collect();
                f.resize(256, 0.0);
                f
            };
            let o = p.process_frame(&grab(&padded[0]), &grab(&padded[1])).unwrap();
            for ch in 0..2 {
                for (n, v) in o.frames[ch].iter().enumerate() {
                    acc[ch][k * 128 + n] += v;
                }
            }
        }
        assert_eq!(log.len(), nframes);
        for ch in 0..2 {
            // periodic Hann at 50% overlap sums to one
            for (a, b) in out.channel(ch).iter().zip(&acc[ch][pad..]) {
                assert!((a - b).abs() < 1e-12);
            }
        }
        let (again, log2) = pipeline(constant_model(0.5, 0.8, "default")).process_file(&stereo).unwrap();
        assert_eq!(again, out);
        assert_eq!(log2, log);
    }

    #[test]
    fn bypassing_everything_reconstructs_the_input() {
        let mut model = constant_model(0.3, 0.3, "default");
        model.table.values.iter_mut().for_each(|v| *v = 1.0);
        let x = speech_like(FS as usize, FS, 9);
        let y = white_noise(x.len(), 0.05, 2);
        let input = AudioBuffer::stereo(x.clone(), y.clone(), FS).unwrap();
        let mut cfg = PipelineConfig::for_model(FS, &model);
        cfg.bypass.always = true;
        let mut p = Pipeline::new(cfg, vec![model], None).unwrap();
        let (out, log) = p.process_file(&input).unwrap();
        assert!(log.iter().all(|r| r.hit_rate.is_none()));
        assert!(err_db(&x, out.channel(0)) < -60.0);
        assert!(err_db(&y, out.channel(1)) < -60.0);
    }

    #[test]
    fn reference_output_ignores_nonreference_content_given_the_analysis() {
        let model = constant_model(0.4, 0.7, "default");
        let x = white_noise(256, 0.3, 1);
        let y = white_noise(256, 0.3, 2);
        let mut p = pipeline(model);
        let mut q = p.clone();
        let an = p.front.analyze(&x, &y).unwrap();
        let mut perturbed = an.clone();
        let other = an.reference.other().index();
        let loud = white_noise(256, 3.0, 7);
        perturbed.bins[other] = p.synth.forward(&loud).unwrap().to_vec();
        perturbed.spectra[other] = p.synth.analyze(&loud).unwrap();
        q.front.analyze(&x, &y).unwrap();
        let (a, _) = p.render(&an, &x, &y, false).unwrap();
        let (b, _) = q.render(&perturbed, &x, &y, false).unwrap();
        let r = an.reference.index();
        assert_eq!(a[r], b[r]);
        assert_ne!(a[other], b[other]);
    }

    #[test]
    fn models_must_agree() {
        let a = constant_model(1.0, 1.0, "white");
        let mut b = constant_model(1.0, 1.0, "babble");
        let cfg = PipelineConfig::for_model(FS, &a);
        assert!(Pipeline::new(cfg.clone(), vec![a.clone(), a.clone()], None).is_err());
        b.table.axes.i = 10;
        b.table.values.truncate(10 * 70);
        assert!(Pipeline::new(cfg.clone(), vec![a.clone(), b], None).is_err());
        let ipd = DirectionModel::default_ipd();
        assert!(Pipeline::new(PipelineConfig::new(FS, ipd), vec![a.clone()], None).is_err());
        assert!(Pipeline::new(cfg, vec![], None).is_err());
    }

    #[test]
    fn hot_swap_follows_voted_class() {
        use crate::environment::gmm::{Component, GmmModel};
        let point = |label: &str, c: f64| GmmModel {
            version: 1,
            label: label.into(),
            dim: 2 * FEATURE_DIM,
            components: vec![Component {
                weight: 1.0,
                mean: vec![c; 2 * FEATURE_DIM],
                var: vec![100.0; 2 * FEATURE_DIM],
            }],
        };
        let bundle = ClassifierBundle::new(vec![point("loud", 0.0), point("soft", -20.0)], None).unwrap();
        let models = vec![constant_model(0.5, 1.0, "loud"), constant_model(0.2, 1.0, "soft")];
        let mut cfg = PipelineConfig::for_model(FS, &models[0]);
        cfg.vote_window = 5;
        let mut p = Pipeline::new(cfg, models, Some(bundle)).unwrap();
        let loud = white_noise(256 * 300, 1.0, 1);
        let mut classes = Vec::new();
        for k in 0..150 {
            let f = &loud[k * 256..(k + 1) * 256];
            let soft: Vec<f64> = f.iter().map(|v| v * 1e-4).collect();
            let frame = if k < 75 { f.to_vec() } else { soft };
            let o = p.process_frame(&frame, &frame).unwrap();
            if let BackgroundDecision::Noise(_) = o.decision {
                classes.push(o.diagnostics.class.clone());
            }
        }
        assert!(classes.iter().any(|c| c == "loud"));
        let switches = classes.windows(2).filter(|w| w[0] != w[1]).count();
        assert!(switches <= 1, "{classes:?}");
    }
}
