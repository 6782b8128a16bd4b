//! Acceptance checks. Runs as a plain binary and prints one PASS/FAIL line
//! per criterion; pass criterion numbers as arguments to run a subset.

use std::f64::consts::PI;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use bilateral::audio_io::{frame_stream, overlap_add, synth_hrir, AudioBuffer, HrirPair, Window};
use bilateral::environment::gmm::gmm_train;
use bilateral::environment::{classify, MajorityVoter, VadDecision, VadState};
use bilateral::eval::{
    distortion_metric, expected_quality, quiet_detection_score, segmental_snr_improvement, suppression_advantage,
    ConfusionMatrix, ExpectedQuality, QualityMatrix,
};
use bilateral::error::Error;
use bilateral::gain::{storage_bits, Criterion, GainTable, HrtfGain, StorageMode};
use bilateral::pipeline::{bench_modes, GainModel, Pipeline, PipelineConfig};
use bilateral::signals::{lowpass_noise, modulated_noise, speech_like, tone_bursts, white_noise};
use bilateral::snr::SnrAxes;
use bilateral::spectral::{compute_ipd, BandPartition, Spectrum, Stft};
use bilateral::tdoa::{gcc_delay, DelayTracker};
use bilateral::training::corpus::render_scene;
use bilateral::training::{
    generalized_distortion, grad_generalized, gradients, solve_we_quasistatic,
    total_distortion, train_corpus, CellKey, CorpusConfig, Method, TrainAccumulator, TrainOptions,
};
use bilateral::pipeline::DirectionModel;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

const FS: u32 = 22050;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

// 1 ------------------------------------------------------------------------

fn storage() -> Outcome {
    let t = Instant::now();
    let got = [
        storage_bits(StorageMode::Double, 60, 70, 13, 16),
        storage_bits(StorageMode::PerDirection, 60, 70, 13, 16),
        storage_bits(StorageMode::Proposed, 60, 70, 13, 16),
    ];
    let dt = t.elapsed().as_secs_f64();
    check(
        got == [134_400, 873_600, 67_408] && dt < 1e-3,
        format!("bits {got:?}, {:.1} us", dt * 1e6),
    )
}

// 2 ------------------------------------------------------------------------

struct Instance {
    acc: TrainAccumulator,
    g: Vec<f64>,
    h: Vec<f64>,
    beta: f64,
    samples: Vec<(CellKey, f64, f64, f64)>,
}

fn random_instance(seed: u64, ipd: bool) -> Instance {
    let mut r = rng(seed);
    let (i, j, layout) = if ipd {
        (3, 3, HrtfGain::ipd_ones(2, BandPartition::new(vec![0, 4, 9]).unwrap()))
    } else {
        (4, 4, HrtfGain::tdoa_ones(3, 24.0))
    };
    let axes = SnrAxes {
        i,
        j,
        ..SnrAxes::default()
    };
    let p = r.gen_range(-1.0..1.0);
    let mut acc = TrainAccumulator::new(axes, p, layout).unwrap();
    let dirs = acc.dir_cells();
    let mut samples = Vec::new();
    for _ in 0..r.gen_range(40..120) {
        let key = CellKey {
            i: r.gen_range(0..i),
            j: r.gen_range(0..j),
            d: r.gen_range(0..dirs),
        };
        let (a, n, a2) = (r.gen_range(0.05..3.0), r.gen_range(0.05..3.0), r.gen_range(0.05..3.0));
        acc.accumulate(key, a, n, a2).unwrap();
        samples.push((key, a, n, a2));
    }
    Instance {
        g: (0..i * j).map(|_| r.gen_range(0.3..2.0)).collect(),
        h: (0..dirs).map(|_| r.gen_range(0.3..2.0)).collect(),
        beta: r.gen_range(0.1..1.0),
        acc,
        samples,
    }
}

fn sample_distortion(c: Criterion, a: f64, e: f64, p: f64) -> f64 {
    match c {
        Criterion::We => a.powf(p) * (a - e).powi(2),
        Criterion::Le => (a.ln() - e.ln()).powi(2),
        Criterion::Wc => a.powf(p) * (a / e + e / a - 1.0),
        Criterion::Direct => unreachable!(),
    }
}

/// Averaged objective evaluated straight from the samples.
fn naive_distortion(inst: &Instance, c: Criterion, g: &[f64], h: &[f64]) -> f64 {
    let nj = inst.acc.axes.j;
    let cells = inst.acc.snr_cells();
    let dirs = inst.acc.dir_cells();
    let p = inst.acc.p;
    let (mut rs, mut rn) = (vec![0.0; cells], vec![0usize; cells]);
    let (mut ns, mut nn) = (vec![0.0; cells * dirs], vec![0usize; cells * dirs]);
    for &(k, a, r, a2) in &inst.samples {
        let cell = k.i * nj + k.j;
        rs[cell] += sample_distortion(c, a, g[cell] * r, p);
        rn[cell] += 1;
        ns[cell * dirs + k.d] += sample_distortion(c, a2, g[cell] * h[k.d] * r, p);
        nn[cell * dirs + k.d] += 1;
    }
    let mut total = 0.0;
    for cell in 0..cells {
        if rn[cell] > 0 {
            total += rs[cell] / rn[cell] as f64;
        }
        let nr: f64 = (0..dirs)
            .filter(|d| nn[cell * dirs + d] > 0)
            .map(|d| ns[cell * dirs + d] / nn[cell * dirs + d] as f64)
            .sum();
        total += inst.beta * nr / dirs as f64;
    }
    total / cells as f64
}

fn fd_error(f: &dyn Fn(&[f64], &[f64]) -> f64, g: &[f64], h: &[f64], gg: &[f64], gh: &[f64]) -> f64 {
    let step = 1e-6;
    let (mut worst, mut scale) = (0.0f64, 0.0f64);
    for k in 0..g.len() + h.len() {
        let (mut gu, mut gd, mut hu, mut hd) = (g.to_vec(), g.to_vec(), h.to_vec(), h.to_vec());
        let analytic = if k < g.len() {
            gu[k] += step;
            gd[k] -= step;
            gg[k]
        } else {
            hu[k - g.len()] += step;
            hd[k - g.len()] -= step;
            gh[k - g.len()]
        };
        let fd = (f(&gu, &hu) - f(&gd, &hd)) / (2.0 * step);
        worst = worst.max((fd - analytic).abs());
        scale = scale.max(fd.abs());
    }
    worst / scale
}

fn gradient_correctness() -> Outcome {
    let t = Instant::now();
    let mut worst = 0.0f64;
    let mut worst_oracle = 0.0f64;
    let mut count = 0;
    for crit in [Criterion::We, Criterion::Le, Criterion::Wc] {
        for ipd in [false, true] {
            for seed in 0..20 {
                let inst = random_instance(1000 + seed, ipd);
                let (g, h, beta) = (&inst.g, &inst.h, inst.beta);
                let d = total_distortion(&inst.acc, g, h, crit, beta).unwrap();
                let oracle = naive_distortion(&inst, crit, g, h);
                worst_oracle = worst_oracle.max((d - oracle).abs() / oracle.abs());
                let f = |g: &[f64], h: &[f64]| total_distortion(&inst.acc, g, h, crit, beta).unwrap();
                let (gg, gh) = gradients(&inst.acc, g, h, crit, beta).unwrap();
                worst = worst.max(fd_error(&f, g, h, &gg, &gh));
                count += 1;
                if ipd {
                    let f = |g: &[f64], h: &[f64]| generalized_distortion(&inst.acc, g, h, crit, beta).unwrap();
                    let (gg, gh) = grad_generalized(&inst.acc, g, h, crit, beta).unwrap();
                    worst = worst.max(fd_error(&f, g, h, &gg, &gh));
                    count += 1;
                }
            }
        }
    }
    let dt = t.elapsed().as_secs_f64();
    check(
        worst < 1e-5 && worst_oracle < 1e-9 && dt < 10.0,
        format!("{count} gradient checks, max rel err {worst:.2e}, objective vs sample oracle {worst_oracle:.1e}, {dt:.2} s"),
    )
}

// 3 ------------------------------------------------------------------------

struct Tiny {
    acc: TrainAccumulator,
    samples: Vec<(CellKey, f64, f64, f64)>,
}

fn tiny_instance(seed: u64) -> Tiny {
    let mut r = rng(seed);
    let axes = SnrAxes {
        i: 2,
        j: 1,
        ..SnrAxes::default()
    };
    let mut acc = TrainAccumulator::new(axes, 0.0, HrtfGain::tdoa_ones(2, 24.0)).unwrap();
    let mut samples = Vec::new();
    for i in 0..2 {
        for d in 0..2 {
            for _ in 0..r.gen_range(1..=5) {
                let key = CellKey { i, j: 0, d };
                let (a, n, a2) = (r.gen_range(0.1..2.0), r.gen_range(0.1..2.0), r.gen_range(0.1..2.0));
                acc.accumulate(key, a, n, a2).unwrap();
                samples.push((key, a, n, a2));
            }
        }
    }
    Tiny { acc, samples }
}

/// Distortion at (G, H) with β = 1, p = 0, from samples.
fn tiny_distortion(t: &Tiny, g: &[f64], h: &[f64]) -> f64 {
    let mut total = 0.0;
    for c in 0..2 {
        let refs: Vec<_> = t.samples.iter().filter(|s| s.0.i == c).collect();
        total += refs.iter().map(|s| (s.1 - g[c] * s.2).powi(2)).sum::<f64>() / refs.len() as f64;
        for d in 0..2 {
            let nr: Vec<_> = refs.iter().filter(|s| s.0.d == d).collect();
            if !nr.is_empty() {
                let m = nr.iter().map(|s| (s.3 - g[c] * h[d] * s.2).powi(2)).sum::<f64>() / nr.len() as f64;
                total += m / 2.0;
            }
        }
    }
    total / 2.0
}

/// For fixed H the objective is quadratic in each G; returns the minimizer.
fn best_g(t: &Tiny, h: &[f64]) -> Vec<f64> {
    (0..2)
        .map(|c| {
            let refs: Vec<_> = t.samples.iter().filter(|s| s.0.i == c).collect();
            let m = refs.len() as f64;
            let mut num = refs.iter().map(|s| s.1 * s.2).sum::<f64>() / m;
            let mut den = refs.iter().map(|s| s.2 * s.2).sum::<f64>() / m;
            for d in 0..2 {
                let nr: Vec<_> = refs.iter().filter(|s| s.0.d == d).collect();
                if nr.is_empty() {
                    continue;
                }
                let md = nr.len() as f64;
                num += h[d] * nr.iter().map(|s| s.3 * s.2).sum::<f64>() / md / 2.0;
                den += h[d] * h[d] * nr.iter().map(|s| s.2 * s.2).sum::<f64>() / md / 2.0;
            }
            num / den
        })
        .collect()
}

fn quasistatic_optimality() -> Outcome {
    let mut worst_gap = 0.0f64;
    let mut monotone = true;
    let mut bitwise = true;
    for seed in 0..12 {
        let t = tiny_instance(500 + seed);
        let sol = solve_we_quasistatic(&t.acc, 1.0, 500).unwrap();
        let d_qs = tiny_distortion(&t, &sol.g, &sol.h);
        // grid over H with the exact G for each H, then a finer local grid
        let mut best = (f64::INFINITY, [0.0, 0.0]);
        let search = |lo: [f64; 2], step: f64, n: usize, best: &mut (f64, [f64; 2])| {
            for a in 0..=n {
                for b in 0..=n {
                    let h = [lo[0] + a as f64 * step, lo[1] + b as f64 * step];
                    if h[0] <= 0.0 || h[1] <= 0.0 {
                        continue;
                    }
                    let d = tiny_distortion(&t, &best_g(&t, &h), &h);
                    if d < best.0 {
                        *best = (d, h);
                    }
                }
            }
        };
        search([0.01, 0.01], 0.01, 500, &mut best);
        let c = best.1;
        search([c[0] - 0.01, c[1] - 0.01], 1e-4, 200, &mut best);
        worst_gap = worst_gap.max((d_qs - best.0).abs());
        monotone &= sol.trace.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12));

        let zero = solve_we_quasistatic(&t.acc, 0.0, 50).unwrap();
        for c in 0..2 {
            let (mut num, mut den) = (0.0, 0.0);
            for s in t.samples.iter().filter(|s| s.0.i == c) {
                num += s.1 * s.2;
                den += s.2 * s.2;
            }
            bitwise &= zero.g[c].to_bits() == (num / den).to_bits();
        }
    }
    check(
        worst_gap < 1e-3 && monotone && bitwise,
        format!("12 instances, max |D_qs - D_grid| {worst_gap:.2e}, non-increasing {monotone}, beta=0 bitwise {bitwise}"),
    )
}

// 4 & 5 --------------------------------------------------------------------

struct Corpus {
    train_clean: Vec<Vec<f64>>,
    test_clean: Vec<Vec<f64>>,
    train_noise: Vec<Vec<f64>>,
    test_noise: Vec<Vec<f64>>,
    hrirs: Vec<HrirPair>,
}

fn corpus() -> Corpus {
    let len = 2 * FS as usize;
    // generated utterances get a recording floor 60 dB below the speech;
    // digital silence makes the ratio criteria singular
    let clean: Vec<Vec<f64>> = (0..10)
        .map(|s| {
            let x = speech_like(len, FS, 100 + s);
            let rms = (x.iter().map(|v| v * v).sum::<f64>() / len as f64).sqrt();
            let floor = white_noise(len, 1e-3 * rms, 200 + s);
            x.iter().zip(&floor).map(|(a, b)| a + b).collect()
        })
        .collect();
    let noise = |seed: u64| vec![white_noise(6 * FS as usize, 1.0, seed), modulated_noise(6 * FS as usize, FS, 1.0, seed + 1)];
    Corpus {
        train_clean: clean[..7].to_vec(),
        test_clean: clean[7..].to_vec(),
        train_noise: noise(11),
        test_noise: noise(21),
        hrirs: [-60.0, -30.0, 0.0, 30.0, 60.0]
            .iter()
            .map(|&az| synth_hrir(az, FS, 0.0875).unwrap())
            .collect(),
    }
}

fn magnitudes(x: &[f64], stft: &mut Stft) -> Vec<Vec<f64>> {
    frame_stream(x, 256, 128)
        .unwrap()
        .iter()
        .map(|f| stft.analyze(f).unwrap().mags)
        .collect()
}

struct Scores {
    seg_snr_gain: f64,
    we_enhanced: f64,
    we_noisy: f64,
}

fn evaluate(model: &GainModel, c: &Corpus) -> Scores {
    let mut stft = Stft::new(256, Window::Hann, FS).unwrap();
    let (mut seg, mut we_e, mut we_n, mut n) = (0.0, 0.0, 0.0, 0.0);
    for (fi, clean) in c.test_clean.iter().enumerate() {
        for (hi, h) in c.hrirs.iter().enumerate() {
            for noise in &c.test_noise {
                let scene = render_scene(clean, noise, h, 5.0, 997 * (fi + 3 * hi)).unwrap();
                let input = AudioBuffer::stereo(scene.noisy[0].clone(), scene.noisy[1].clone(), FS).unwrap();
                let mut p = Pipeline::new(PipelineConfig::for_model(FS, model), vec![model.clone()], None).unwrap();
                let (out, _) = p.process_file(&input).unwrap();
                for ch in 0..2 {
                    seg += segmental_snr_improvement(&scene.clean[ch], &scene.noisy[ch], out.channel(ch)).unwrap();
                    let a = magnitudes(&scene.clean[ch], &mut stft);
                    we_e += distortion_metric(&a, &magnitudes(out.channel(ch), &mut stft), Criterion::We, 0.0).unwrap();
                    we_n += distortion_metric(&a, &magnitudes(&scene.noisy[ch], &mut stft), Criterion::We, 0.0).unwrap();
                    n += 1.0;
                }
            }
        }
    }
    Scores {
        seg_snr_gain: seg / n,
        we_enhanced: we_e / n,
        we_noisy: we_n / n,
    }
}

const PASSES: usize = 4;
const DAMPING: f64 = 0.5;

struct TrainedPair {
    we: Scores,
    wc: Scores,
    wc_lr: f64,
    wc_retries: usize,
    seconds: f64,
}

fn train_and_evaluate() -> TrainedPair {
    let t = Instant::now();
    let c = corpus();
    let cfg = CorpusConfig::new(FS, DirectionModel::default());
    let model = |crit, method| {
        // on divergence, retry with a tenfold smaller learning rate
        let mut opts = TrainOptions::new(crit, method);
        let mut retries = 0;
        loop {
            match train_corpus(&c.train_clean, &c.train_noise, &c.hrirs, &cfg, &opts, PASSES, DAMPING) {
                Ok((m, _)) => {
                    let model = GainModel {
                        table: m.table,
                        hrtf: m.hrtf,
                    };
                    return (model, opts.optimizer.learning_rate, retries);
                }
                Err(Error::Diverged { .. }) if retries < 8 => {
                    opts.optimizer.learning_rate /= 10.0;
                    retries += 1;
                }
                Err(e) => panic!("training failed: {e}"),
            }
        }
    };
    let (we_model, _, _) = model(Criterion::We, Method::QuasiStatic);
    let (wc_model, wc_lr, wc_retries) = model(Criterion::Wc, Method::Gradient);
    TrainedPair {
        we: evaluate(&we_model, &c),
        wc: evaluate(&wc_model, &c),
        wc_lr,
        wc_retries,
        seconds: t.elapsed().as_secs_f64(),
    }
}

fn enhancement_benefit(r: &TrainedPair) -> Outcome {
    let s = &r.we;
    check(
        s.seg_snr_gain >= 0.5 && s.we_enhanced < s.we_noisy && r.seconds < 300.0,
        format!(
            "WE model segSNR+ {:.2} dB, WE distortion {:.4e} vs {:.4e} unprocessed, {:.1} s",
            s.seg_snr_gain, s.we_enhanced, s.we_noisy, r.seconds
        ),
    )
}

fn criterion_ordering(r: &TrainedPair) -> Outcome {
    check(
        r.wc.seg_snr_gain >= r.we.seg_snr_gain - 0.2,
        format!(
            "WC segSNR+ {:.2} dB (learning rate {:.0e} after {} divergence retries), WE segSNR+ {:.2} dB",
            r.wc.seg_snr_gain, r.wc_lr, r.wc_retries, r.we.seg_snr_gain
        ),
    )
}

// 6 ------------------------------------------------------------------------

fn spectrum(mags: Vec<f64>, phases: Vec<f64>) -> Spectrum {
    let n = mags.len();
    Spectrum {
        mags,
        phases,
        fft_size: 2 * (n - 1),
        sample_rate: FS,
    }
}

fn ipd_exactness() -> Outcome {
    let mut r = rng(6);
    let mut worst = 0.0f64;
    let mut antisym = true;
    // single-bin bands: IPD equals the phase difference, wrapped
    let bins = 9;
    let single = BandPartition::new((0..=bins).collect()).unwrap();
    for _ in 0..100 {
        let ml: Vec<f64> = (0..bins).map(|_| r.gen_range(0.1..2.0)).collect();
        let mr: Vec<f64> = (0..bins).map(|_| r.gen_range(0.1..2.0)).collect();
        let pl: Vec<f64> = (0..bins).map(|_| r.gen_range(-PI..PI)).collect();
        let pr: Vec<f64> = (0..bins).map(|_| r.gen_range(-PI..PI)).collect();
        let l = spectrum(ml.clone(), pl.clone());
        let rt = spectrum(mr.clone(), pr.clone());
        let got = compute_ipd(&l, &rt, &single).unwrap();
        for k in 0..bins {
            let d = pl[k] - pr[k];
            let want = d.sin().atan2(d.cos());
            worst = worst.max((got[k] - want).abs());
        }
        // multi-bin: argument of the magnitude-weighted phasor sum
        let multi = BandPartition::new(vec![0, 3, 9]).unwrap();
        let got = compute_ipd(&l, &rt, &multi).unwrap();
        for (b, range) in [(0usize, 0..3), (1, 3..9)] {
            let (mut re, mut im) = (0.0, 0.0);
            for k in range {
                let w = ml[k] * mr[k];
                re += w * (pl[k] - pr[k]).cos();
                im += w * (pl[k] - pr[k]).sin();
            }
            worst = worst.max((got[b] - im.atan2(re)).abs());
        }
        let swapped = compute_ipd(&rt, &l, &multi).unwrap();
        antisym &= got.iter().zip(&swapped).all(|(a, b)| (a + b).abs() < 1e-9 || (a.abs() - PI).abs() < 1e-9);
    }
    check(worst < 1e-9 && antisym, format!("max abs error {worst:.2e}, antisymmetric {antisym}"))
}

// 7 ------------------------------------------------------------------------

/// Right channel lags the left by `tau` samples.
fn shifted_pair(x: &[f64], tau: i32, start: usize) -> (Vec<f64>, Vec<f64>) {
    let l = x[start..start + 256].to_vec();
    let rs = (start as i64 - tau as i64) as usize;
    (l, x[rs..rs + 256].to_vec())
}

fn tdoa() -> Outcome {
    let x = white_noise(20_000, 1.0, 7);
    let exact = (-24..=24).all(|tau| {
        let (l, r) = shifted_pair(&x, tau, 1000 + (tau + 24) as usize * 300);
        gcc_delay(&l, &r, 24).unwrap().tau == tau
    });
    let mut r = rng(77);
    let mut hits = 0;
    for trial in 0..200 {
        let tau = r.gen_range(-24..=24);
        let (mut a, mut b) = shifted_pair(&x, tau, 100 + trial * 90);
        let e: f64 = a.iter().map(|v| v * v).sum::<f64>() / 256.0;
        let sigma = (e / 10.0).sqrt();
        for v in a.iter_mut().chain(b.iter_mut()) {
            *v += sigma * r.sample::<f64, _>(StandardNormal);
        }
        if (gcc_delay(&a, &b, 24).unwrap().tau - tau).abs() <= 1 {
            hits += 1;
        }
    }
    let mut outlier_rejected = true;
    for pos in 0..20 {
        let mut t = DelayTracker::new(20);
        for k in 0..20 {
            let v = if k == pos { 24 } else { 5 + (k % 2) };
            let out = t.update(v);
            if k == 19 {
                outlier_rejected &= (5..=6).contains(&out);
            }
        }
    }
    check(
        exact && hits >= 190 && outlier_rejected,
        format!("noiseless exact {exact}, {hits}/200 within 1 sample at 10 dB, outlier rejected {outlier_rejected}"),
    )
}

// 8 ------------------------------------------------------------------------

/// 1 s quiet, 2 s low-passed noise, 2 s tone bursts over that noise,
/// repeated three times; returns the signal and per-sample quiet truth.
fn vad_stream() -> (Vec<f64>, Vec<bool>) {
    let fs = FS as usize;
    let mut x = Vec::new();
    let mut truth = Vec::new();
    for rep in 0..3u64 {
        x.extend(white_noise(fs, 1e-5, 80 + rep));
        truth.extend(std::iter::repeat_n(true, fs));
        x.extend(lowpass_noise(2 * fs, 0.3, 0.9, 90 + rep));
        truth.extend(std::iter::repeat_n(false, 2 * fs));
        let bursts = tone_bursts(2 * fs, FS, 500.0, 0.5, 0.2, 0.2);
        let floor = lowpass_noise(2 * fs, 0.3, 0.9, 95 + rep);
        x.extend(bursts.iter().zip(&floor).map(|(a, b)| a + b));
        truth.extend(std::iter::repeat_n(false, 2 * fs));
    }
    (x, truth)
}

fn run_vad(x: &[f64], k_q: f64) -> (Vec<VadDecision>, Vec<VadDecision>) {
    let mut v = VadState::with_kq(k_q);
    let mut raw = Vec::new();
    let mut dec = Vec::new();
    for f in frame_stream(x, 256, 128).unwrap() {
        let o = v.process(&f).unwrap();
        raw.push(o.raw);
        dec.push(o.decision);
    }
    (raw, dec)
}

fn vad_quiet() -> Outcome {
    let (x, truth) = vad_stream();
    let (raw, dec) = run_vad(&x, 0.01);
    // a frame is truly quiet when its centre sample lies in a quiet segment
    let actual: Vec<bool> = (0..dec.len()).map(|m| truth[(m * 128 + 128).min(truth.len() - 1)]).collect();
    let est: Vec<bool> = dec.iter().map(|d| *d == VadDecision::Quiet).collect();
    let p_q = quiet_detection_score(&actual, &est).unwrap();
    let false_quiet = actual.iter().zip(&est).filter(|(a, e)| !**a && **e).count();
    let negatives = actual.iter().filter(|a| !**a).count();
    let specificity = 1.0 - false_quiet as f64 / negatives as f64;
    let (_, dec0) = run_vad(&x, 0.0);
    let none_at_zero = dec0.iter().all(|d| *d != VadDecision::Quiet);
    let mut run = 0;
    let mut entry_rule = true;
    for (r, d) in raw.iter().zip(&dec) {
        run = if *r == VadDecision::Quiet { run + 1 } else { 0 };
        if *d == VadDecision::Quiet {
            entry_rule &= run >= 10;
        }
    }
    check(
        p_q >= 0.9 && none_at_zero && entry_rule && specificity == 1.0,
        format!(
            "P_Q {p_q:.3}, specificity {:.1}%, no quiet at k_Q=0 {none_at_zero}, 10-frame entry {entry_rule}",
            100.0 * specificity
        ),
    )
}

// 9 ------------------------------------------------------------------------

fn cluster(r: &mut ChaCha8Rng, mean: &[f64], sigma: f64, n: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| mean.iter().map(|m| m + sigma * r.sample::<f64, _>(StandardNormal)).collect())
        .collect()
}

fn accuracy(models: &[bilateral::environment::GmmModel], data: &[(usize, Vec<f64>)]) -> f64 {
    let ok = data.iter().filter(|(c, x)| classify(models, x).unwrap() == *c).count();
    ok as f64 / data.len() as f64
}

fn classification() -> Outcome {
    let mut r = rng(9);
    let dim = 26;
    let means: Vec<Vec<f64>> = (0..4).map(|c| (0..dim).map(|k| if k % 4 == c { 4.0 } else { 0.0 }).collect()).collect();
    let models: Vec<_> = means
        .iter()
        .enumerate()
        .map(|(c, m)| gmm_train(&cluster(&mut r, m, 1.0, 400), 2, c as u64, &format!("c{c}")).unwrap().model)
        .collect();
    let test: Vec<(usize, Vec<f64>)> = (0..4)
        .flat_map(|c| cluster(&mut r, &means[c], 1.0, 250).into_iter().map(move |x| (c, x)))
        .collect();
    let separable = accuracy(&models, &test);

    // piecewise-stationary stream of overlapping classes
    let close: Vec<Vec<f64>> = (0..4).map(|c| (0..dim).map(|k| if k % 4 == c { 0.6 } else { 0.0 }).collect()).collect();
    let close_models: Vec<_> = close
        .iter()
        .enumerate()
        .map(|(c, m)| gmm_train(&cluster(&mut r, m, 1.0, 800), 2, c as u64, "x").unwrap().model)
        .collect();
    let mut voting_ok = true;
    let (mut raw_total, mut voted_total) = (0.0, 0.0);
    let mut voter = MajorityVoter::new(20);
    for seg in 0..12 {
        let c = (seg * 3 + seg / 4) % 4;
        let frames = cluster(&mut r, &close[c], 1.0, 200);
        let (mut raw_ok, mut voted_ok) = (0, 0);
        for x in &frames {
            let raw = classify(&close_models, x).unwrap();
            raw_ok += usize::from(raw == c);
            voted_ok += usize::from(voter.push(raw) == c);
        }
        voting_ok &= voted_ok >= raw_ok;
        raw_total += raw_ok as f64 / 2400.0;
        voted_total += voted_ok as f64 / 2400.0;
    }

    // two ears sharing the class-dependent source plus independent noise
    let ear = |r: &mut ChaCha8Rng, c: usize| -> (Vec<f64>, Vec<f64>) {
        let shared: Vec<f64> = close[c].iter().map(|m| m + 0.5 * r.sample::<f64, _>(StandardNormal)).collect();
        let l = shared.iter().map(|v| v + r.sample::<f64, _>(StandardNormal)).collect();
        let rr = shared.iter().map(|v| v + r.sample::<f64, _>(StandardNormal)).collect();
        (l, rr)
    };
    let mut single_train = vec![Vec::new(); 4];
    let mut fused_train = vec![Vec::new(); 4];
    for c in 0..4 {
        for _ in 0..800 {
            let (l, rr) = ear(&mut r, c);
            fused_train[c].push([l.clone(), rr].concat());
            single_train[c].push(l);
        }
    }
    let single_models: Vec<_> = (0..4).map(|c| gmm_train(&single_train[c], 2, 1, "s").unwrap().model).collect();
    let fused_models: Vec<_> = (0..4).map(|c| gmm_train(&fused_train[c], 2, 1, "f").unwrap().model).collect();
    let (mut single_test, mut fused_test) = (Vec::new(), Vec::new());
    for c in 0..4 {
        for _ in 0..500 {
            let (l, rr) = ear(&mut r, c);
            fused_test.push((c, [l.clone(), rr].concat()));
            single_test.push((c, l));
        }
    }
    let single_acc = accuracy(&single_models, &single_test);
    let fused_acc = accuracy(&fused_models, &fused_test);

    // music versus noise with voting
    let music_mean = vec![3.0; dim];
    let noise_mean = vec![-3.0; dim];
    let mn = [
        gmm_train(&cluster(&mut r, &music_mean, 1.0, 300), 2, 2, "music").unwrap().model,
        gmm_train(&cluster(&mut r, &noise_mean, 1.0, 300), 2, 3, "noise").unwrap().model,
    ];
    let mut voter = MajorityVoter::new(20);
    let mut mn_ok = 0;
    let mut mn_total = 0;
    for seg in 0..6 {
        let c = seg % 2;
        let mean = if c == 0 { &music_mean } else { &noise_mean };
        let frames = cluster(&mut r, mean, 1.0, 100);
        for (k, x) in frames.iter().enumerate() {
            let v = voter.push(classify(&mn, x).unwrap());
            // the vote needs 11 frames to follow a switch
            if k >= 10 {
                mn_ok += usize::from(v == c);
                mn_total += 1;
            }
        }
    }
    let music_acc = mn_ok as f64 / mn_total as f64;
    check(
        separable >= 0.99 && voting_ok && fused_acc >= single_acc && music_acc == 1.0,
        format!(
            "separable {:.1}%, voting {:.1}% vs raw {:.1}% (no segment worse: {voting_ok}), fused {:.1}% vs single {:.1}%, music/noise voted {:.1}%",
            100.0 * separable,
            100.0 * voted_total,
            100.0 * raw_total,
            100.0 * fused_acc,
            100.0 * single_acc,
            100.0 * music_acc
        ),
    )
}

// 10 -----------------------------------------------------------------------

fn timing() -> Outcome {
    let t = Instant::now();
    let n = 6 * FS as usize;
    let x: Vec<f64> = speech_like(n, FS, 10)
        .iter()
        .zip(white_noise(n, 0.05, 11))
        .map(|(a, b)| a + b)
        .collect();
    let stereo = bilateral::audio_io::convolve_hrir(
        &AudioBuffer::mono(x, FS).unwrap(),
        &synth_hrir(30.0, FS, 0.0875).unwrap(),
    )
    .unwrap();
    let model = GainModel {
        table: GainTable::log_mmse(SnrAxes::default()).unwrap(),
        hrtf: HrtfGain::tdoa_ones(7, 24.0),
    };
    match bench_modes(&model, &stereo, 15) {
        Ok(report) => {
            let p = report.row("proposed").unwrap().total_s;
            let s = report.row("sequential").unwrap().total_s;
            let i = report.row("independent").unwrap().total_s;
            let dt = t.elapsed().as_secs_f64();
            check(
                p <= 0.8 * s && dt < 60.0,
                format!(
                    "proposed {:.1} ms, sequential {:.1} ms (ratio {:.3}), independent {:.1} ms, reference output identical",
                    p * 1e3,
                    s * 1e3,
                    p / s,
                    i * 1e3
                ),
            )
        }
        Err(e) => Err(format!("bench failed: {e}")),
    }
}

// 11 -----------------------------------------------------------------------

fn evaluation_math() -> Outcome {
    let q = QualityMatrix::uniform(vec![vec![3.0, 1.0], vec![1.0, 2.0]]).unwrap();
    let a = expected_quality(&ConfusionMatrix::identity(2), &q).unwrap();
    let none = ExpectedQuality {
        per_class: vec![2.0, 2.0],
        overall: 2.0,
    };
    let sa = suppression_advantage(&a, &none).unwrap().overall;
    let mut r = rng(11);
    let mut independent = true;
    for _ in 0..100 {
        let n = r.gen_range(2..6);
        let col: Vec<f64> = (0..n).map(|_| r.gen_range(1.0..4.5)).collect();
        let fixed = QualityMatrix::uniform((0..n).map(|_| col.clone()).collect()).unwrap();
        let cols: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                let v: Vec<f64> = (0..n).map(|_| r.gen_range(0.0..1.0)).collect();
                let s: f64 = v.iter().sum();
                v.iter().map(|x| x / s).collect()
            })
            .collect();
        let p = ConfusionMatrix::new((0..n).map(|i| (0..n).map(|j| cols[j][i]).collect()).collect()).unwrap();
        let e = expected_quality(&p, &fixed).unwrap();
        independent &= e.per_class.iter().zip(&col).all(|(x, y)| (x - y).abs() < 1e-12);
    }
    check(
        a.overall == 2.5 && sa == 0.5 && independent,
        format!("Q = {}, SA = {}, fixed suppression independent of P {independent}", a.overall, sa),
    )
}

// 12 -----------------------------------------------------------------------

fn error_db(a: &[f64], b: &[f64]) -> f64 {
    let e: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
    let s: f64 = a.iter().map(|x| x * x).sum();
    10.0 * (e / s).log10()
}

fn reconstruction() -> Outcome {
    let x: Vec<f64> = speech_like(FS as usize, FS, 12)
        .iter()
        .zip(white_noise(FS as usize, 0.01, 13))
        .map(|(a, b)| a + b)
        .collect();
    let mut stft = Stft::new(256, Window::Hann, FS).unwrap();
    let mut padded = vec![0.0; 128];
    padded.extend_from_slice(&x);
    let frames: Vec<Vec<f64>> = frame_stream(&padded, 256, 128)
        .unwrap()
        .iter()
        .map(|f| {
            let s = stft.analyze(f).unwrap();
            stft.synthesize(&s).unwrap()
        })
        .collect();
    let y = overlap_add(&frames, 128, stft.window()).unwrap();
    let round_trip = error_db(&x, &y[128..128 + x.len()]);

    let model = GainModel {
        table: GainTable::constant(SnrAxes::default(), 1.0).unwrap(),
        hrtf: HrtfGain::tdoa_ones(7, 24.0),
    };
    let input = AudioBuffer::stereo(x.clone(), x.clone(), FS).unwrap();
    let mut p = Pipeline::new(PipelineConfig::for_model(FS, &model), vec![model], None).unwrap();
    let (out, _) = p.process_file(&input).unwrap();
    let pipeline = error_db(&x, out.channel(0)).max(error_db(&x, out.channel(1)));
    check(
        round_trip <= -60.0 && pipeline <= -60.0,
        format!("round trip {round_trip:.1} dB, identity pipeline {pipeline:.1} dB"),
    )
}

// --------------------------------------------------------------------------

fn run(n: usize, name: &str, f: impl FnOnce() -> Outcome) -> bool {
    let res = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
        let msg = e
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_default();
        Err(format!("panicked: {msg}"))
    });
    let (tag, detail) = match &res {
        Ok(d) => ("PASS", d),
        Err(d) => ("FAIL", d),
    };
    println!("criterion {n:>2} {tag} {name}: {detail}");
    res.is_ok()
}

fn main() {
    let only: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let wanted = |n: usize| only.is_empty() || only.contains(&n);
    let mut ok = true;
    if wanted(1) {
        ok &= run(1, "storage model", storage);
    }
    if wanted(2) {
        ok &= run(2, "gradient correctness", gradient_correctness);
    }
    if wanted(3) {
        ok &= run(3, "quasi-static optimality", quasistatic_optimality);
    }
    if wanted(4) || wanted(5) {
        let trained = catch_unwind(train_and_evaluate);
        match trained {
            Ok(r) => {
                if wanted(4) {
                    ok &= run(4, "enhancement benefit", || enhancement_benefit(&r));
                }
                if wanted(5) {
                    ok &= run(5, "criterion ordering", || criterion_ordering(&r));
                }
            }
            Err(_) => {
                for n in [4, 5].into_iter().filter(|&n| wanted(n)) {
                    ok &= run(n, "training corpus", || Err("training or evaluation panicked".into()));
                }
            }
        }
    }
    if wanted(6) {
        ok &= run(6, "IPD exactness", ipd_exactness);
    }
    if wanted(7) {
        ok &= run(7, "TDOA", tdoa);
    }
    if wanted(8) {
        ok &= run(8, "VAD and quiet detection", vad_quiet);
    }
    if wanted(9) {
        ok &= run(9, "classification", classification);
    }
    if wanted(10) {
        ok &= run(10, "timing ordering", timing);
    }
    if wanted(11) {
        ok &= run(11, "evaluation math", evaluation_math);
    }
    if wanted(12) {
        ok &= run(12, "reconstruction fidelity", reconstruction);
    }
    if !ok {
        std::process::exit(1);
    }
}
