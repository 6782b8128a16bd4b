use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use bilateral::audio_io::{
    frame_stream, read_wav, synth_hrir, write_atomic, write_hrir_text, write_wav, AudioBuffer, DEFAULT_FRAME_LEN,
    DEFAULT_HEAD_RADIUS_M, DEFAULT_HOP,
};
use bilateral::environment::mfcc::FEATURE_DIM;
use bilateral::environment::{classify as gmm_classify, combine_vad, fuse_features, gmm_train, ClassifierBundle};
use bilateral::environment::{FeatureExtractor, MajorityVoter, VadConfig, VadState};
use bilateral::eval::{distortion_metric, magnitude_frames, segmental_snr_improvement, write_eval_csv, EvalRecord};
use bilateral::gain::{load_model, save_model, Criterion};
use bilateral::pipeline::{bench_modes, write_bench_csv, write_decision_log, DirectionModel, GainModel, Pipeline, PipelineConfig};
use bilateral::training::{load_hrir_dir, load_wav_dir, train_corpus, write_trace_csv, CorpusConfig, Method, TrainOptions};
use bilateral::Error;

use crate::{
    BenchArgs, ClassifyArgs, CriterionArg, EnhanceArgs, EvalArgs, Failure, GenHrirArgs, HrtfArg, MethodArg, MetricArg,
    TrainArgs, TrainGmmArgs, VadArgs,
};

type Outcome = Result<(), Failure>;

fn require_file(p: &Path) -> Outcome {
    if p.is_file() {
        Ok(())
    } else {
        Err(Failure::Data(format!("{} is not a readable file", p.display())))
    }
}

fn require_dir(p: &Path) -> Outcome {
    if p.is_dir() {
        Ok(())
    } else {
        Err(Failure::Data(format!("{} is not a directory", p.display())))
    }
}

/// The directory an output will be written into must already exist.
fn require_output(p: &Path) -> Outcome {
    let parent = match p.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    if p.file_name().is_none() || !parent.is_dir() {
        return Err(Failure::Data(format!("cannot write {}: no such directory", p.display())));
    }
    Ok(())
}

fn read_stereo(p: &Path, what: &str) -> Result<AudioBuffer, Failure> {
    let buf = read_wav(p)?;
    if buf.num_channels() != 2 {
        return Err(Failure::Data(format!(
            "{what} needs a stereo input; {} has {} channel(s)",
            p.display(),
            buf.num_channels()
        )));
    }
    Ok(buf)
}

fn load_gain_model(p: &Path) -> Result<GainModel, Failure> {
    let (table, hrtf) = load_model(p)?;
    Ok(GainModel { table, hrtf })
}

pub fn train(a: &TrainArgs) -> Outcome {
    let criterion = match a.criterion {
        CriterionArg::We => Criterion::We,
        CriterionArg::Le => Criterion::Le,
        CriterionArg::Wc => Criterion::Wc,
    };
    let method = match a.method {
        Some(MethodArg::Quasistatic) => Method::QuasiStatic,
        Some(MethodArg::Gradient) => Method::Gradient,
        None if criterion == Criterion::We => Method::QuasiStatic,
        None => Method::Gradient,
    };
    if method == Method::QuasiStatic && criterion != Criterion::We {
        return Err(Failure::Usage("the quasistatic method trains only the we criterion".into()));
    }
    if a.passes == 0 || !(0.0..1.0).contains(&a.damping) {
        return Err(Failure::Usage("--passes must be at least 1 and --damping in [0, 1)".into()));
    }
    require_dir(&a.clean_dir)?;
    require_dir(&a.noise_dir)?;
    let synth = a.hrir == "synth";
    if !synth {
        require_dir(Path::new(&a.hrir))?;
    }
    require_output(&a.out)?;
    if let Some(t) = &a.trace {
        require_output(t)?;
    }

    let (clean, fs) = load_wav_dir(&a.clean_dir)?;
    let (noise, noise_fs) = load_wav_dir(&a.noise_dir)?;
    if noise_fs != fs {
        return Err(Failure::Data(format!("clean corpus at {fs} Hz, noise corpus at {noise_fs} Hz")));
    }
    let hrirs = if synth {
        a.azimuths
            .iter()
            .map(|&az| synth_hrir(az, fs, DEFAULT_HEAD_RADIUS_M))
            .collect::<Result<Vec<_>, _>>()?
    } else {
        load_hrir_dir(&a.hrir)?
    };
    let direction = match a.hrtf {
        HrtfArg::Tdoa => DirectionModel::default(),
        HrtfArg::Ipd => DirectionModel::default_ipd(),
    };
    let mut corpus = CorpusConfig::new(fs, direction);
    corpus.p = a.p;
    corpus.snr_db = a.snr_db;
    let mut options = TrainOptions::new(criterion, method);
    options.optimizer.beta = a.beta;
    options.optimizer.iterations = a.iters;
    if let Some(lr) = a.learning_rate {
        options.optimizer.learning_rate = lr;
    }
    options.noise_class = a.noise_class.clone();
    eprintln!(
        "training {criterion} on {} clean and {} noise files at {fs} Hz, {} HRIR positions, {} pass(es)",
        clean.len(),
        noise.len(),
        hrirs.len(),
        a.passes
    );

    let (model, acc) = match train_corpus(&clean, &noise, &hrirs, &corpus, &options, a.passes, a.damping) {
        Ok(r) => r,
        Err(Error::Diverged { trace }) => {
            if let Some(t) = &a.trace {
                write_trace_csv(t, &trace)?;
            }
            return Err(Failure::Numerical(format!(
                "optimization diverged after {} iterations; a smaller --learning-rate may help",
                trace.len()
            )));
        }
        Err(e) => return Err(e.into()),
    };
    save_model(&a.out, &model.table, &model.hrtf)?;
    if let Some(t) = &a.trace {
        write_trace_csv(t, &model.trace)?;
    }
    eprintln!(
        "wrote {} ({} samples, final distortion {})",
        a.out.display(),
        acc.total_count(),
        model.trace.last().map_or("n/a".into(), |d| format!("{d:.6e}"))
    );
    Ok(())
}

pub fn enhance(a: &EnhanceArgs) -> Outcome {
    if a.vote == 0 {
        return Err(Failure::Usage("--vote must be at least 1".into()));
    }
    check_kq(a.kq)?;
    for m in &a.models {
        require_file(m)?;
    }
    require_file(&a.input)?;
    if let Some(d) = &a.gmm_bundle {
        require_dir(d)?;
    }
    require_output(&a.output)?;
    if let Some(l) = &a.log {
        require_output(l)?;
    }

    let models = a.models.iter().map(|p| load_gain_model(p)).collect::<Result<Vec<_>, _>>()?;
    let bundle = a.gmm_bundle.as_ref().map(ClassifierBundle::load).transpose()?;
    let input = read_stereo(&a.input, "enhance")?;
    let mut config = PipelineConfig::for_model(input.sample_rate(), &models[0]);
    config.vote_window = a.vote;
    config.front.vad.k_q = a.kq;
    config.diagnostics = a.log.is_some();
    if a.no_bypass {
        config.bypass.quiet = false;
        config.bypass.music = false;
    }
    let mut pipeline = Pipeline::new(config, models, bundle)?;
    let (output, log) = pipeline.process_file(&input)?;
    write_wav(&a.output, &output)?;
    if let Some(l) = &a.log {
        write_decision_log(l, &log)?;
    }
    eprintln!(
        "enhanced {} ({:.2} s at {} Hz)",
        a.input.display(),
        input.len() as f64 / f64::from(input.sample_rate()),
        input.sample_rate()
    );
    Ok(())
}

fn check_kq(kq: f64) -> Outcome {
    if kq.is_finite() && kq >= 0.0 {
        Ok(())
    } else {
        Err(Failure::Usage("--kq must be a non-negative number".into()))
    }
}

/// Per-frame 26-dim features of the first channel, or fused 52-dim
/// features of both.
fn features(buf: &AudioBuffer, fused: bool) -> Result<Vec<Vec<f64>>, Failure> {
    let fs = buf.sample_rate();
    let per_channel = |x: &[f64]| -> bilateral::Result<Vec<Vec<f64>>> {
        let mut fx = FeatureExtractor::new(fs, DEFAULT_FRAME_LEN)?;
        magnitude_frames(x, fs)?.iter().map(|m| fx.extract(m)).collect()
    };
    let first = per_channel(buf.channel(0))?;
    if !fused {
        return Ok(first);
    }
    if buf.num_channels() < 2 {
        return Err(Failure::Data("fused features need a stereo recording".into()));
    }
    let second = per_channel(buf.channel(1))?;
    Ok(first
        .iter()
        .zip(&second)
        .map(|(l, r)| fuse_features(l, r))
        .collect::<Result<_, _>>()?)
}

pub fn classify(a: &ClassifyArgs) -> Outcome {
    if a.vote == 0 {
        return Err(Failure::Usage("--vote must be at least 1".into()));
    }
    require_dir(&a.gmm_bundle)?;
    require_file(&a.input)?;
    require_output(&a.out)?;

    let bundle = ClassifierBundle::load(&a.gmm_bundle)?;
    let input = read_wav(&a.input)?;
    let feats = features(&input, bundle.dim == 2 * FEATURE_DIM)?;
    let labels = bundle.labels();
    let mut votes = MajorityVoter::new(a.vote);
    let mut music_votes = MajorityVoter::new(a.vote);
    let mut csv = String::from("frame,raw,voted");
    if bundle.music.is_some() {
        csv.push_str(",music");
    }
    csv.push('\n');
    let mut counts = vec![0usize; labels.len()];
    for (k, x) in feats.iter().enumerate() {
        let raw = gmm_classify(&bundle.noise_models, x)?;
        let voted = votes.push(raw);
        counts[voted] += 1;
        let _ = write!(csv, "{k},{},{}", labels[raw], labels[voted]);
        if let Some((music, nonmusic)) = &bundle.music {
            let m = music_votes.push(gmm_classify(&[music.clone(), nonmusic.clone()], x)?);
            csv.push_str(if m == 0 { ",music" } else { ",nonmusic" });
        }
        csv.push('\n');
    }
    write_atomic(&a.out, csv.as_bytes())?;
    let summary: Vec<String> = labels.iter().zip(&counts).map(|(l, c)| format!("{l} {c}")).collect();
    eprintln!("{} frames: {}", feats.len(), summary.join(", "));
    Ok(())
}

pub fn vad(a: &VadArgs) -> Outcome {
    check_kq(a.kq)?;
    require_file(&a.input)?;
    require_output(&a.out)?;

    let input = read_wav(&a.input)?;
    let config = VadConfig {
        k_q: a.kq,
        ..VadConfig::default()
    };
    let frames = input
        .channels()
        .iter()
        .map(|x| frame_stream(x, DEFAULT_FRAME_LEN, DEFAULT_HOP))
        .collect::<Result<Vec<_>, _>>()?;
    let mut states = vec![VadState::new(config); frames.len()];
    let mut csv = String::from("frame,channel,raw,decision,dc,threshold\n");
    let mut quiet = 0usize;
    for k in 0..frames[0].len() {
        let mut decisions = Vec::with_capacity(frames.len());
        for (ch, (state, f)) in states.iter_mut().zip(&frames).enumerate() {
            let v = state.process(&f[k])?;
            let _ = writeln!(csv, "{k},{},{},{},{:.6e},{:.6e}", ch + 1, v.raw, v.decision, v.dc, v.tv);
            decisions.push(v.decision);
        }
        let combined = decisions.iter().copied().reduce(combine_vad).expect("at least one channel");
        if decisions.len() > 1 {
            let _ = writeln!(csv, "{k},both,,{combined},,");
        }
        quiet += usize::from(combined == bilateral::environment::VadDecision::Quiet);
    }
    write_atomic(&a.out, csv.as_bytes())?;
    eprintln!("{} frames, {quiet} quiet", frames[0].len());
    Ok(())
}

pub fn eval(a: &EvalArgs) -> Outcome {
    for p in [&a.clean, &a.noisy, &a.enhanced] {
        require_file(p)?;
    }
    require_output(&a.out)?;
    let clean = read_wav(&a.clean)?;
    let noisy = read_wav(&a.noisy)?;
    let enhanced = read_wav(&a.enhanced)?;
    for (buf, p) in [(&noisy, &a.noisy), (&enhanced, &a.enhanced)] {
        if buf.num_channels() != clean.num_channels()
            || buf.len() != clean.len()
            || buf.sample_rate() != clean.sample_rate()
        {
            return Err(Failure::Data(format!(
                "{} does not match the clean file in channels, length or rate",
                p.display()
            )));
        }
    }
    let fs = clean.sample_rate();
    let mut records = Vec::new();
    let mut push = |metric: String, channel: usize, value: f64| {
        records.push(EvalRecord {
            metric,
            channel: (channel + 1).to_string(),
            noise_class: a.noise_class.clone(),
            azimuth: a.azimuth.clone(),
            value,
        })
    };
    for ch in 0..clean.num_channels() {
        let (c, n, e) = (clean.channel(ch), noisy.channel(ch), enhanced.channel(ch));
        let mut mags: Option<[Vec<Vec<f64>>; 3]> = None;
        for &m in &a.metrics {
            let criterion = match m {
                MetricArg::Segsnr => {
                    push("segsnr_plus".into(), ch, segmental_snr_improvement(c, n, e)?);
                    continue;
                }
                MetricArg::We => Criterion::We,
                MetricArg::Le => Criterion::Le,
                MetricArg::Wc => Criterion::Wc,
            };
            if mags.is_none() {
                mags = Some([magnitude_frames(c, fs)?, magnitude_frames(n, fs)?, magnitude_frames(e, fs)?]);
            }
            let [mc, mn, me] = mags.as_ref().expect("computed above");
            push(criterion.to_string(), ch, distortion_metric(mc, me, criterion, a.p)?);
            push(format!("{criterion}_noisy"), ch, distortion_metric(mc, mn, criterion, a.p)?);
        }
    }
    write_eval_csv(&a.out, &records)?;
    for r in &records {
        eprintln!("{} ch{}: {:.4}", r.metric, r.channel, r.value);
    }
    Ok(())
}

pub fn bench(a: &BenchArgs) -> Outcome {
    if a.reps == 0 {
        return Err(Failure::Usage("--reps must be at least 1".into()));
    }
    require_file(&a.model)?;
    require_file(&a.input)?;
    require_output(&a.out)?;
    let model = load_gain_model(&a.model)?;
    let input = read_stereo(&a.input, "bench")?;
    let report = bench_modes(&model, &input, a.reps)?;
    write_bench_csv(&a.out, &report)?;
    for r in &report.rows {
        eprintln!("{:<12} {:.4} s  {:.2} us/frame", r.mode, r.total_s, r.per_frame_us);
    }
    if !report.parallel_independent {
        eprintln!("note: one CPU available, the independent mode ran its two ears in turn");
    }
    Ok(())
}

pub fn gen_hrir(a: &GenHrirArgs) -> Outcome {
    require_output(&a.out_left)?;
    require_output(&a.out_right)?;
    let pair = synth_hrir(a.azimuth, a.rate, a.head_radius)?;
    write_hrir_text(&pair, &a.out_left, &a.out_right)?;
    Ok(())
}

fn wav_files(dir: &Path) -> Result<Vec<PathBuf>, Failure> {
    let entries = fs::read_dir(dir).map_err(|e| Failure::Data(format!("{}: {e}", dir.display())))?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x.eq_ignore_ascii_case("wav")))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Failure::Data(format!("no WAV files in {}", dir.display())));
    }
    Ok(files)
}

fn dir_features(dir: &Path, fused: bool) -> Result<Vec<Vec<f64>>, Failure> {
    let mut all = Vec::new();
    for f in wav_files(dir)? {
        all.extend(features(&read_wav(&f)?, fused)?);
    }
    Ok(all)
}

pub fn train_gmm(a: &TrainGmmArgs, seed: u64) -> Outcome {
    if a.components == 0 {
        return Err(Failure::Usage("--components must be at least 1".into()));
    }
    let mut classes: Vec<(String, PathBuf)> = Vec::new();
    for spec in &a.classes {
        let Some((label, dir)) = spec.split_once('=').filter(|(l, d)| !l.is_empty() && !d.is_empty()) else {
            return Err(Failure::Usage(format!("--class expects LABEL=DIR, got '{spec}'")));
        };
        if classes.iter().any(|(l, _)| l == label) {
            return Err(Failure::Usage(format!("class '{label}' given twice")));
        }
        classes.push((label.to_string(), PathBuf::from(dir)));
    }
    for (_, dir) in &classes {
        require_dir(dir)?;
    }
    for d in a.music_dir.iter().chain(&a.nonmusic_dir) {
        require_dir(d)?;
    }
    if a.out.exists() && !a.out.is_dir() {
        return Err(Failure::Data(format!("{} exists and is not a directory", a.out.display())));
    }

    let mut models = Vec::with_capacity(classes.len());
    for (label, dir) in &classes {
        let samples = dir_features(dir, a.fused)?;
        let trained = gmm_train(&samples, a.components, seed, label)?;
        eprintln!("{label}: {} frames", samples.len());
        models.push(trained.model);
    }
    let music = match (&a.music_dir, &a.nonmusic_dir) {
        (Some(m), Some(n)) => Some((
            gmm_train(&dir_features(m, a.fused)?, a.components, seed, "music")?.model,
            gmm_train(&dir_features(n, a.fused)?, a.components, seed, "nonmusic")?.model,
        )),
        _ => None,
    };
    ClassifierBundle::new(models, music)?.save(&a.out)?;
    eprintln!("wrote bundle {}", a.out.display());
    Ok(())
}
