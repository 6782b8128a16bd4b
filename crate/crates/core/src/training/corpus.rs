//! Training-set construction: mix, spatialize, run the runtime front end,
//! and accumulate clean/noisy amplitude pairs per cell.

use std::fs;
use std::path::{Path, PathBuf};

use super::accumulator::{CellKey, TrainAccumulator};
use crate::audio_io::{frame_stream, read_hrir_text, read_wav, render_pair, HrirPair, DEFAULT_HOP};
use crate::error::{Error, Result};
use crate::gain::{table_gains, GainTable};
use crate::pipeline::frontend::{DirectionModel, FrontEnd, FrontEndConfig};
use crate::signals::scaled_noise;
use crate::snr::SnrAxes;
use crate::spectral::Stft;

pub const DEFAULT_TRAIN_SNR_DB: f64 = 5.0;

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusConfig {
    pub axes: SnrAxes,
    pub p: f64,
    pub snr_db: f64,
    pub hop: usize,
    pub front: FrontEndConfig,
    /// Gains that drive the decision-directed recursion while the corpus
    /// is accumulated; log-MMSE when unset.
    pub bootstrap: Option<GainTable>,
}

impl CorpusConfig {
    pub fn new(sample_rate: u32, direction: DirectionModel) -> Self {
        Self {
            axes: SnrAxes::default(),
            p: 0.0,
            snr_db: DEFAULT_TRAIN_SNR_DB,
            hop: DEFAULT_HOP,
            front: FrontEndConfig::new(sample_rate, direction),
            bootstrap: None,
        }
    }

    pub fn empty_accumulator(&self) -> Result<TrainAccumulator> {
        let layout = self
            .front
            .direction
            .layout(self.front.sample_rate, self.front.frame_len)?;
        TrainAccumulator::new(self.axes, self.p, layout)
    }
}

/// Binaural clean and noisy signals of one training scene.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub clean: [Vec<f64>; 2],
    pub noisy: [Vec<f64>; 2],
}

/// Mixes noise into the clean source at `snr_db` and renders both through
/// the HRIR pair (source and noise share one position).
pub fn render_scene(clean: &[f64], noise: &[f64], hrir: &HrirPair, snr_db: f64, offset: usize) -> Result<Scene> {
    hrir.validate()?;
    let n = scaled_noise(clean, noise, snr_db, offset)?;
    let mixed: Vec<f64> = clean.iter().zip(&n).map(|(s, v)| s + v).collect();
    let (cl, cr) = render_pair(clean, hrir);
    let (nl, nr) = render_pair(&mixed, hrir);
    Ok(Scene {
        clean: [cl, cr],
        noisy: [nl, nr],
    })
}

/// Runs one scene through the front end and adds every bin of every frame
/// to the accumulator. The decision-directed recursion is driven by a
/// log-MMSE table standing in for the not-yet-trained gains.
pub fn accumulate_scene(acc: &mut TrainAccumulator, scene: &Scene, config: &CorpusConfig) -> Result<()> {
    let mut front = FrontEnd::new(config.front.clone())?;
    let mut stft = Stft::new(config.front.frame_len, config.front.window, config.front.sample_rate)?;
    let bootstrap = match &config.bootstrap {
        Some(t) if t.axes == acc.axes => t.clone(),
        Some(_) => return Err(Error::invalid("bootstrap table axes differ from the accumulator")),
        None => GainTable::log_mmse(acc.axes)?,
    };
    let fl = config.front.frame_len;
    let frames: Vec<Vec<Vec<f64>>> = [&scene.clean[0], &scene.clean[1], &scene.noisy[0], &scene.noisy[1]]
        .iter()
        .map(|s| frame_stream(s, fl, config.hop))
        .collect::<Result<_>>()?;
    let band_of_bin = front.band_of_bin().to_vec();
    let mut gains = Vec::new();
    let mut cells = Vec::new();
    for f in 0..frames[0].len() {
        let an = front.analyze(&frames[2][f], &frames[3][f])?;
        let clean = [stft.analyze(&frames[0][f])?, stft.analyze(&frames[1][f])?];
        let r = an.reference.index();
        let nr = an.reference.other().index();
        table_gains(&an.spectra[r].mags, &bootstrap, &front.snr[r], &mut gains, Some(&mut cells))?;
        for (k, &(i, j)) in cells.iter().enumerate() {
            let key = CellKey {
                i,
                j,
                d: an.direction.cell_of_bin(k, &band_of_bin),
            };
            acc.accumulate(key, clean[r].mags[k], an.spectra[r].mags[k], clean[nr].mags[k])?;
        }
        let ref_amps: Vec<f64> = an.spectra[r].mags.iter().zip(&gains).map(|(m, g)| m * g).collect();
        front.snr[r].set_prev_amp(&ref_amps);
        table_gains(&an.spectra[nr].mags, &bootstrap, &front.snr[nr], &mut gains, None)?;
        let nr_amps: Vec<f64> = an.spectra[nr].mags.iter().zip(&gains).map(|(m, g)| m * g).collect();
        front.snr[nr].set_prev_amp(&nr_amps);
    }
    Ok(())
}

/// Every clean file at every HRIR position, with noise files assigned
/// round-robin. Scenes of one clean file are accumulated on one worker;
/// partial accumulators are merged in file order.
pub fn build_training_set(
    clean: &[Vec<f64>],
    noise: &[Vec<f64>],
    hrirs: &[HrirPair],
    config: &CorpusConfig,
) -> Result<TrainAccumulator> {
    if clean.is_empty() || noise.is_empty() || hrirs.is_empty() {
        return Err(Error::invalid("training needs clean files, noise files and HRIRs"));
    }
    if let Some(h) = hrirs.iter().find(|h| h.sample_rate != config.front.sample_rate) {
        return Err(Error::invalid(format!(
            "HRIR at {} Hz, corpus at {} Hz",
            h.sample_rate, config.front.sample_rate
        )));
    }
    let per_file = |ci: usize| -> Result<TrainAccumulator> {
        let mut acc = config.empty_accumulator()?;
        for (hi, h) in hrirs.iter().enumerate() {
            let ni = (ci + hi) % noise.len();
            let offset = (ci * 7919 + hi * 104_729) % noise[ni].len().max(1);
            let scene = render_scene(&clean[ci], &noise[ni], h, config.snr_db, offset)?;
            accumulate_scene(&mut acc, &scene, config)?;
        }
        Ok(acc)
    };
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(clean.len());
    let parts: Vec<Result<TrainAccumulator>> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                let per_file = &per_file;
                s.spawn(move || {
                    (w..clean.len())
                        .step_by(workers)
                        .map(|ci| (ci, per_file(ci)))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        let mut all: Vec<(usize, Result<TrainAccumulator>)> = handles
            .into_iter()
            .flat_map(|h| h.join().expect("training worker panicked"))
            .collect();
        all.sort_by_key(|(ci, _)| *ci);
        all.into_iter().map(|(_, r)| r).collect()
    });
    let mut acc = config.empty_accumulator()?;
    for part in parts {
        acc.merge(&part?)?;
    }
    Ok(acc)
}

fn sorted_files(dir: &Path, suffix: &str) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = Vec::new();
    for e in entries {
        let path = e.map_err(|e| Error::io(dir, e))?.path();
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
        if path.is_file() && name.to_ascii_lowercase().ends_with(suffix) {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

/// First channel of every WAV file in `dir`, sorted by name, plus the
/// common sample rate.
pub fn load_wav_dir(dir: impl AsRef<Path>) -> Result<(Vec<Vec<f64>>, u32)> {
    let dir = dir.as_ref();
    let files = sorted_files(dir, ".wav")?;
    if files.is_empty() {
        return Err(Error::invalid(format!("no WAV files in {}", dir.display())));
    }
    let mut rate = None;
    let mut out = Vec::with_capacity(files.len());
    for f in files {
        let buf = read_wav(&f)?;
        match rate {
            None => rate = Some(buf.sample_rate()),
            Some(r) if r != buf.sample_rate() => {
                return Err(Error::invalid(format!(
                    "{} is {} Hz, expected {r} Hz",
                    f.display(),
                    buf.sample_rate()
                )))
            }
            _ => {}
        }
        out.push(buf.channel(0).to_vec());
    }
    Ok((out, rate.unwrap_or_default()))
}

/// HRIR pairs stored as `<name>_left.txt` / `<name>_right.txt`.
pub fn load_hrir_dir(dir: impl AsRef<Path>) -> Result<Vec<HrirPair>> {
    let dir = dir.as_ref();
    let mut pairs = Vec::new();
    for left in sorted_files(dir, "_left.txt")? {
        let name = left.file_name().and_then(|n| n.to_str()).unwrap_or_default();
        let right = left.with_file_name(format!("{}_right.txt", &name[..name.len() - "_left.txt".len()]));
        pairs.push(read_hrir_text(&left, &right)?);
    }
    if pairs.is_empty() {
        return Err(Error::invalid(format!("no HRIR pairs in {}", dir.display())));
    }
    Ok(pairs)
}
