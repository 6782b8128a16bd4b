//! Offline training of the suppression table G and the HRTF gains H.

pub mod accumulator;
pub mod corpus;
pub mod fill;
pub mod generalized;
pub mod objective;
pub mod optimizer;
pub mod quasistatic;

pub use accumulator::{CellKey, CellSums, TrainAccumulator, AMP_FLOOR};
pub use corpus::{build_training_set, load_hrir_dir, load_wav_dir, CorpusConfig};
pub use fill::fill_empty;
pub use generalized::{generalized_distortion, grad_generalized};
pub use objective::{grad_le, grad_we, grad_wc, gradients, total_distortion};
pub use optimizer::{optimize, OptimizerConfig};
pub use quasistatic::{init_unilateral, solve_we_quasistatic};

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::audio_io::{write_atomic, HrirPair};
use crate::error::{Error, Result};
use crate::gain::{Criterion, GainTable, HrtfGain, G_MAX};

/// Raw parameters and the distortion trace of a training run.
#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub g: Vec<f64>,
    pub h: Vec<f64>,
    pub trace: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    QuasiStatic,
    Gradient,
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "quasistatic" | "quasi-static" => Ok(Method::QuasiStatic),
            "gradient" => Ok(Method::Gradient),
            other => Err(Error::Config(format!("unknown training method '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOptions {
    pub criterion: Criterion,
    pub method: Method,
    pub optimizer: OptimizerConfig,
    pub noise_class: String,
}

impl TrainOptions {
    pub fn new(criterion: Criterion, method: Method) -> Self {
        Self {
            criterion,
            method,
            optimizer: OptimizerConfig::for_criterion(criterion),
            noise_class: "default".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub table: GainTable,
    pub hrtf: HrtfGain,
    pub trace: Vec<f64>,
}

/// Per-cell optimum of each criterion with the other parameter set held
/// fixed: G from reference data alone, then H given that G.
pub fn closed_form_init(acc: &TrainAccumulator, criterion: Criterion) -> (Vec<f64>, Vec<f64>) {
    let g: Vec<f64> = acc
        .reference_cells()
        .iter()
        .map(|s| {
            if s.is_empty() {
                return 1.0;
            }
            let v = match criterion {
                Criterion::Le => ((s.sum_log_a - s.sum_log_r) / s.m()).exp(),
                Criterion::Wc => (s.c1 / s.c2).sqrt(),
                _ => s.s1 / s.s2,
            };
            if v.is_finite() && v > 0.0 {
                v
            } else {
                1.0
            }
        })
        .collect();
    let dirs = acc.dir_cells();
    let nonref = acc.nonref_cells();
    let h = (0..dirs)
        .map(|d| {
            let (mut a, mut b, mut n) = (0.0, 0.0, 0usize);
            for (c, gc) in g.iter().enumerate() {
                let s = &nonref[c * dirs + d];
                if s.is_empty() {
                    continue;
                }
                let m = s.m();
                match criterion {
                    Criterion::Le => a += (s.sum_log_a - s.sum_log_r) / m - gc.ln(),
                    Criterion::Wc => {
                        a += s.c1 / (gc * m);
                        b += gc * s.c2 / m;
                    }
                    _ => {
                        a += gc * s.s1 / m;
                        b += gc * gc * s.s2 / m;
                    }
                }
                n += 1;
            }
            let v = match criterion {
                _ if n == 0 => 1.0,
                Criterion::Le => (a / n as f64).exp(),
                Criterion::Wc => (a / b).sqrt(),
                _ => a / b,
            };
            if v.is_finite() && v > 0.0 {
                v
            } else {
                1.0
            }
        })
        .collect();
    (g, h)
}

/// Clamps, fills untrained G cells and resets untrained H cells to 1.
pub fn finalize(
    acc: &TrainAccumulator,
    solution: &Solution,
    criterion: Criterion,
    noise_class: &str,
) -> Result<(GainTable, HrtfGain)> {
    let mut g: Vec<f64> = solution.g.iter().map(|v| v.clamp(0.0, G_MAX)).collect();
    fill_empty(&mut g, &acc.observed_g(), &acc.axes)?;
    let table = GainTable::new(g, acc.axes, criterion, acc.p, noise_class)?;
    let mut hrtf = acc.layout.clone();
    let seen = acc.observed_h();
    for ((dst, src), ok) in hrtf.values_mut().iter_mut().zip(&solution.h).zip(seen) {
        *dst = if ok { src.clamp(0.0, G_MAX) } else { 1.0 };
    }
    hrtf.validate()?;
    Ok((table, hrtf))
}

pub fn train(acc: &TrainAccumulator, options: &TrainOptions) -> Result<TrainedModel> {
    if acc.is_empty() {
        return Err(Error::invalid("no training samples were accumulated"));
    }
    let solution = match options.method {
        Method::QuasiStatic => {
            if options.criterion != Criterion::We {
                return Err(Error::Config(
                    "the quasi-static solver exists only for the WE criterion".into(),
                ));
            }
            solve_we_quasistatic(acc, options.optimizer.beta, options.optimizer.iterations)?
        }
        // every gradient run starts from the weighted-Euclidean response
        Method::Gradient => {
            let (g, h) = closed_form_init(acc, Criterion::We);
            optimize(acc, options.criterion, &options.optimizer, g, h)?
        }
    };
    let (table, hrtf) = finalize(acc, &solution, options.criterion, &options.noise_class)?;
    Ok(TrainedModel {
        table,
        hrtf,
        trace: solution.trace,
    })
}

/// Repeated accumulate-and-train passes. After each pass the new table,
/// blended with the previous one by `damping`, drives the decision-directed
/// recursion of the next accumulation, so the SNR features seen in training
/// approach those produced at runtime by the trained gains. Returns the model
/// of the last pass together with the accumulator it was trained on.
pub fn train_corpus(
    clean: &[Vec<f64>],
    noise: &[Vec<f64>],
    hrirs: &[HrirPair],
    config: &CorpusConfig,
    options: &TrainOptions,
    passes: usize,
    damping: f64,
) -> Result<(TrainedModel, TrainAccumulator)> {
    if passes == 0 {
        return Err(Error::Config("at least one training pass is required".into()));
    }
    if !(0.0..1.0).contains(&damping) {
        return Err(Error::Config("damping must lie in [0, 1)".into()));
    }
    let mut config = config.clone();
    let mut pass = 0;
    loop {
        let acc = build_training_set(clean, noise, hrirs, &config)?;
        let model = train(&acc, options)?;
        pass += 1;
        if pass == passes {
            return Ok((model, acc));
        }
        let mut next = model.table.clone();
        let prev = match config.bootstrap.take() {
            Some(t) => t,
            None => GainTable::log_mmse(acc.axes)?,
        };
        for (n, p) in next.values.iter_mut().zip(&prev.values) {
            *n = damping * p + (1.0 - damping) * *n;
        }
        config.bootstrap = Some(next);
    }
}

pub fn write_trace_csv(path: impl AsRef<Path>, trace: &[f64]) -> Result<()> {
    let mut out = String::from("iteration,distortion\n");
    for (k, d) in trace.iter().enumerate() {
        let _ = writeln!(out, "{k},{d:.12e}");
    }
    write_atomic(path, out.as_bytes())
}


#[cfg(test)]
mod tests {
    use super::test_support::random_instance;
    use super::*;

    #[test]
    fn closed_form_init_is_stationary_without_coupling() {
        for crit in [Criterion::We, Criterion::Le, Criterion::Wc] {
            let inst = random_instance(11, false);
            let (g, h) = closed_form_init(&inst.acc, crit);
            let (gg, _) = gradients(&inst.acc, &g, &h, crit, 0.0).unwrap();
            assert!(gg.iter().all(|v| v.abs() < 1e-12), "{crit}: {gg:?}");
            // H is optimal for the fixed G
            let (_, gh) = gradients(&inst.acc, &g, &h, crit, 1.0).unwrap();
            assert!(gh.iter().all(|v| v.abs() < 1e-12), "{crit}: {gh:?}");
        }
    }

    #[test]
    fn train_fills_and_validates() {
        let inst = random_instance(12, true);
        let m = train(&inst.acc, &TrainOptions::new(Criterion::We, Method::QuasiStatic)).unwrap();
        assert!(m.table.values.iter().all(|v| v.is_finite() && *v >= 0.0));
        assert!(m.trace.len() >= 2);
        assert_eq!(m.hrtf.model_name(), "ipd");
        let bad = TrainOptions::new(Criterion::Le, Method::QuasiStatic);
        assert!(train(&inst.acc, &bad).is_err());
        let le = TrainOptions::new(Criterion::Le, Method::Gradient);
        assert!(train(&inst.acc, &le).is_ok());
        assert!("gradient".parse::<Method>().is_ok() && "x".parse::<Method>().is_err());
    }

    #[test]
    fn trace_csv_format() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        write_trace_csv(&p, &[1.0, 0.5]).unwrap();
        let text = std::fs::read_to_string(p).unwrap();
        assert!(text.starts_with("iteration,distortion\n0,1.0"));
        assert_eq!(text.lines().count(), 3);
    }
}
