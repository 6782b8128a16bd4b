//! Timing of the bilateral architecture against two unilateral enhancers.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use super::{suppress, GainModel, Pipeline, PipelineConfig};
use crate::audio_io::{frame_stream, overlap_add, write_atomic, AudioBuffer};
use crate::environment::VadState;
use crate::error::{Error, Result};
use crate::gain::{storage_bits, GainTable, HrtfGain, StorageMode};
use crate::snr::SnrState;
use crate::spectral::{Spectrum, Stft};
use crate::tdoa::Channel;

/// Bits per stored gain value in the storage summary.
pub const STORAGE_WORD_BITS: u64 = 16;

/// Single-ear enhancement: analysis, VAD, noise tracking, table gains and
/// synthesis, with no knowledge of the other ear.
#[derive(Debug, Clone)]
pub struct UnilateralEnhancer {
    stft: Stft,
    window: Vec<f64>,
    vad: VadState,
    snr: SnrState,
    table: GainTable,
    hop: usize,
}

impl UnilateralEnhancer {
    pub fn new(config: &PipelineConfig, table: GainTable) -> Result<Self> {
        let f = &config.front;
        let stft = Stft::new(f.frame_len, f.window, f.sample_rate)?;
        Ok(Self {
            window: stft.window().to_vec(),
            snr: SnrState::new(stft.bins()),
            vad: VadState::new(f.vad),
            stft,
            table,
            hop: config.hop,
        })
    }

    pub fn process_frame(&mut self, frame: &[f64]) -> Result<Vec<f64>> {
        let bins = self.stft.forward(frame)?.to_vec();
        let spec = Spectrum::from_bins(&bins, self.stft.fft_size(), self.stft.sample_rate());
        let v = self.vad.process(frame)?;
        self.snr.update_noise_psd(&spec.mags, v.decision)?;
        let enhanced = suppress(&spec, &self.table, &self.snr)?;
        self.snr.set_prev_amp(&enhanced.mags);
        self.stft.synthesize_like(&enhanced.mags, &bins, &spec.mags)
    }

    /// Same framing, padding and trimming as [`Pipeline::process_file`].
    pub fn process(&mut self, signal: &[f64]) -> Result<Vec<f64>> {
        let fl = self.window.len();
        let pad = fl - self.hop;
        let mut padded = vec![0.0; pad];
        padded.extend_from_slice(signal);
        let frames = frame_stream(&padded, fl, self.hop)?
            .iter()
            .map(|f| self.process_frame(f))
            .collect::<Result<Vec<_>>>()?;
        Ok(overlap_add(&frames, self.hop, &self.window)?[pad..pad + signal.len()].to_vec())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub mode: &'static str,
    /// Median wall-clock seconds over the repetitions.
    pub total_s: f64,
    pub per_frame_us: f64,
    pub storage_bits: u64,
    /// Every repetition, in order.
    pub samples_s: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
    pub frames: usize,
    pub parallel_independent: bool,
}

impl BenchReport {
    pub fn row(&self, mode: &str) -> Option<&BenchRow> {
        self.rows.iter().find(|r| r.mode == mode)
    }
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

fn timed<T>(f: impl FnOnce() -> Result<T>) -> Result<(T, f64)> {
    let t = Instant::now();
    let out = f()?;
    Ok((out, t.elapsed().as_secs_f64()))
}

/// Configuration used for all timed modes: suppression on every frame, a
/// fixed first-input reference tracked on its own, and no decision log, so
/// the reference output of the bilateral pipeline equals a unilateral run
/// on that ear.
pub fn bench_config(sample_rate: u32, model: &GainModel) -> PipelineConfig {
    let mut c = PipelineConfig::for_model(sample_rate, model);
    c.bypass.quiet = false;
    c.bypass.music = false;
    c.diagnostics = false;
    c.front.per_channel_gating = true;
    c.front.fixed_reference = Some(Channel::Input1);
    c.front.track_nonref = false;
    c
}

/// Times the proposed pipeline, two unilateral runs on one thread, and two
/// unilateral runs on two threads. Fails if the reference-ear outputs of
/// the modes differ.
pub fn bench_modes(model: &GainModel, input: &AudioBuffer, repetitions: usize) -> Result<BenchReport> {
    if input.num_channels() != 2 || input.is_empty() {
        return Err(Error::invalid("benchmark needs a non-empty stereo input"));
    }
    let reps = repetitions.max(1);
    let config = bench_config(input.sample_rate(), model);
    let frames = (input.len() + config.front.frame_len - config.hop).div_ceil(config.hop);
    let parallel = std::thread::available_parallelism().is_ok_and(|n| n.get() >= 2);
    let (left, right) = (input.channel(0), input.channel(1));
    let unilateral = || UnilateralEnhancer::new(&config, model.table.clone());

    let mut t_prop = Vec::with_capacity(reps);
    let mut t_seq = Vec::with_capacity(reps);
    let mut t_ind = Vec::with_capacity(reps);
    for _ in 0..reps {
        let mut p = Pipeline::new(config.clone(), vec![model.clone()], None)?;
        let ((out, _), t) = timed(|| p.process_file(input))?;
        t_prop.push(t);

        let (mut a, mut b) = (unilateral()?, unilateral()?);
        let ((ul, _ur), t) = timed(|| Ok((a.process(left)?, b.process(right)?)))?;
        t_seq.push(t);

        let (mut a, mut b) = (unilateral()?, unilateral()?);
        let (il, t) = if parallel {
            let (ra, rb) = std::thread::scope(|s| {
                let ha = s.spawn(|| timed(|| a.process(left)));
                let hb = s.spawn(|| timed(|| b.process(right)));
                (ha.join().expect("bench worker panicked"), hb.join().expect("bench worker panicked"))
            });
            let ((il, ta), (_, tb)) = (ra?, rb?);
            (il, ta.max(tb))
        } else {
            let (il, ta) = timed(|| a.process(left))?;
            let (_, tb) = timed(|| b.process(right))?;
            (il, ta + tb)
        };
        t_ind.push(t);

        if out.channel(0) != ul.as_slice() || ul != il {
            return Err(Error::invalid("benchmark modes disagree on the reference-ear output"));
        }
    }

    let a = &model.table.axes;
    let (i, j) = (a.i as u64, a.j as u64);
    let dirs = match &model.hrtf {
        HrtfGain::Tdoa { h, .. } => h.len() as u64,
        HrtfGain::Ipd { h, .. } => h.len() as u64,
    };
    let proposed_bits = storage_bits(StorageMode::Proposed, i, j, dirs, STORAGE_WORD_BITS);
    let double_bits = storage_bits(StorageMode::Double, i, j, dirs, STORAGE_WORD_BITS);
    let row = |mode, samples: Vec<f64>, bits| {
        let total_s = median(&samples);
        BenchRow {
            mode,
            total_s,
            per_frame_us: total_s * 1e6 / frames as f64,
            storage_bits: bits,
            samples_s: samples,
        }
    };
    Ok(BenchReport {
        rows: vec![
            row("proposed", t_prop, proposed_bits),
            row("sequential", t_seq, double_bits),
            row("independent", t_ind, double_bits),
        ],
        frames,
        parallel_independent: parallel,
    })
}

pub fn write_bench_csv(path: impl AsRef<Path>, report: &BenchReport) -> Result<()> {
    let mut s = String::from("mode,total_s,per_frame_us,storage_bits\n");
    for r in &report.rows {
        let _ = writeln!(s, "{},{:.6},{:.3},{}", r.mode, r.total_s, r.per_frame_us, r.storage_bits);
    }
    write_atomic(path, s.as_bytes())
}
