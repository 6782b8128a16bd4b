//! Diagonal-covariance Gaussian mixtures: seeded k-means + EM training,
//! scoring, classification, majority voting and JSON persistence.

use std::collections::VecDeque;
use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::audio_io::write_atomic;
use crate::error::{Error, Result};

pub const VAR_FLOOR: f64 = 1e-6;
pub const KMEANS_ITERS: usize = 50;
pub const EM_MAX_ITERS: usize = 200;
pub const EM_TOL: f64 = 1e-6;
pub const GMM_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub weight: f64,
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmModel {
    pub version: u32,
    pub label: String,
    pub dim: usize,
    pub components: Vec<Component>,
}

fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

impl GmmModel {
    pub fn validate(&self) -> Result<()> {
        if self.version != GMM_VERSION {
            return Err(Error::Config(format!("unsupported GMM version {}", self.version)));
        }
        if self.components.is_empty() {
            return Err(Error::Config("GMM has no components".into()));
        }
        let total: f64 = self.components.iter().map(|c| c.weight).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("GMM weights sum to {total}")));
        }
        for c in &self.components {
            if !(c.weight > 0.0) || c.mean.len() != self.dim || c.var.len() != self.dim {
                return Err(Error::Config("GMM component has wrong shape or weight".into()));
            }
            if c.mean.iter().any(|v| !v.is_finite())
                || c.var.iter().any(|v| !v.is_finite() || *v < VAR_FLOOR)
            {
                return Err(Error::Config("GMM component has invalid moments".into()));
            }
        }
        Ok(())
    }

    fn component_log_densities(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for c in &self.components {
            let mut acc = c.weight.ln() - 0.5 * self.dim as f64 * (2.0 * PI).ln();
            for ((xi, m), v) in x.iter().zip(&c.mean).zip(&c.var) {
                let d = xi - m;
                acc -= 0.5 * (v.ln() + d * d / v);
            }
            out.push(acc);
        }
    }

    /// Log-likelihood of one feature vector.
    pub fn score(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim {
            return Err(Error::dim(format!(
                "feature of dimension {} scored by a {}-dim model",
                x.len(),
                self.dim
            )));
        }
        let mut buf = Vec::with_capacity(self.components.len());
        self.component_log_densities(x, &mut buf);
        Ok(log_sum_exp(&buf))
    }

    /// Posterior component probabilities for `x`.
    pub fn responsibilities(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim {
            return Err(Error::dim("feature dimension mismatch"));
        }
        let mut buf = Vec::with_capacity(self.components.len());
        self.component_log_densities(x, &mut buf);
        let total = log_sum_exp(&buf);
        Ok(buf.iter().map(|v| (v - total).exp()).collect())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.validate()?;
        let json = serde_json::to_string_pretty(self)
            .map_err(|e| Error::invalid(format!("cannot serialize GMM: {e}")))?;
        write_atomic(path, json.as_bytes())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let model: GmmModel =
            serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))?;
        model
            .validate()
            .map_err(|e| Error::format(path, e.to_string()))?;
        Ok(model)
    }
}

/// Result of [`gmm_train`]: the model plus the mean log-likelihood after each EM step.
#[derive(Debug, Clone)]
pub struct TrainedGmm {
    pub model: GmmModel,
    pub log_likelihood: Vec<f64>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(x: &[f64], centres: &[Vec<f64>]) -> usize {
    let mut best = (0, f64::INFINITY);
    for (k, c) in centres.iter().enumerate() {
        let d = sq_dist(x, c);
        if d < best.1 {
            best = (k, d);
        }
    }
    best.0
}

/// k-means++ seeding followed by Lloyd iterations.
pub fn kmeans(samples: &[Vec<f64>], k: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centres: Vec<Vec<f64>> = vec![samples.choose(&mut rng).unwrap().clone()];
    while centres.len() < k {
        let d: Vec<f64> = samples
            .iter()
            .map(|x| centres.iter().map(|c| sq_dist(x, c)).fold(f64::INFINITY, f64::min))
            .collect();
        let total: f64 = d.iter().sum();
        let idx = if total > 0.0 {
            let mut r = rng.gen::<f64>() * total;
            d.iter()
                .position(|&v| {
                    r -= v;
                    r <= 0.0
                })
                .unwrap_or(samples.len() - 1)
        } else {
            rng.gen_range(0..samples.len())
        };
        centres.push(samples[idx].clone());
    }
    let dim = samples[0].len();
    for _ in 0..KMEANS_ITERS {
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for x in samples {
            let c = nearest(x, &centres);
            counts[c] += 1;
            for (s, v) in sums[c].iter_mut().zip(x) {
                *s += v;
            }
        }
        let mut moved = false;
        for c in 0..k {
            if counts[c] == 0 {
                continue;
            }
            let new: Vec<f64> = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            if new != centres[c] {
                moved = true;
                centres[c] = new;
            }
        }
        if !moved {
            break;
        }
    }
    centres
}

fn single_component(samples: &[Vec<f64>], label: &str) -> GmmModel {
    let dim = samples[0].len();
    let n = samples.len() as f64;
    let mean: Vec<f64> = (0..dim)
        .map(|d| samples.iter().map(|x| x[d]).sum::<f64>() / n)
        .collect();
    let var: Vec<f64> = (0..dim)
        .map(|d| {
            (samples.iter().map(|x| (x[d] - mean[d]).powi(2)).sum::<f64>() / n).max(VAR_FLOOR)
        })
        .collect();
    GmmModel {
        version: GMM_VERSION,
        label: label.to_string(),
        dim,
        components: vec![Component {
            weight: 1.0,
            mean,
            var,
        }],
    }
}

/// Trains a K-component diagonal GMM (k-means initialization, then EM).
pub fn gmm_train(samples: &[Vec<f64>], k: usize, seed: u64, label: &str) -> Result<TrainedGmm> {
    let Some(first) = samples.first() else {
        return Err(Error::invalid("no training samples"));
    };
    let dim = first.len();
    if dim == 0 || samples.iter().any(|x| x.len() != dim) {
        return Err(Error::dim("training samples must share a non-zero dimension"));
    }
    if samples.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite training feature"));
    }
    if k == 0 || samples.len() < k * dim {
        return Err(Error::invalid(format!(
            "need at least K x dim = {} samples, got {}",
            k * dim,
            samples.len()
        )));
    }
    if samples.iter().all(|x| x == first) {
        let model = single_component(samples, label);
        let ll = samples.iter().map(|x| model.score(x).unwrap()).sum::<f64>() / samples.len() as f64;
        return Ok(TrainedGmm {
            model,
            log_likelihood: vec![ll],
        });
    }

    let centres = kmeans(samples, k, seed);
    let n = samples.len();
    let mut resp = vec![0.0; n * k];
    for (i, x) in samples.iter().enumerate() {
        resp[i * k + nearest(x, &centres)] = 1.0;
    }
    let mut model = GmmModel {
        version: GMM_VERSION,
        label: label.to_string(),
        dim,
        components: Vec::new(),
    };
    m_step(samples, &resp, k, &mut model);

    let mut trace = Vec::new();
    let mut logs = Vec::with_capacity(k);
    for _ in 0..EM_MAX_ITERS {
        let mut ll = 0.0;
        for (i, x) in samples.iter().enumerate() {
            model.component_log_densities(x, &mut logs);
            let total = log_sum_exp(&logs);
            ll += total;
            for c in 0..k {
                resp[i * k + c] = (logs[c] - total).exp();
            }
        }
        ll /= n as f64;
        let done = trace.last().is_some_and(|&prev: &f64| ll - prev < EM_TOL);
        trace.push(ll);
        if done {
            break;
        }
        m_step(samples, &resp, k, &mut model);
    }
    model.validate()?;
    Ok(TrainedGmm {
        model,
        log_likelihood: trace,
    })
}

fn m_step(samples: &[Vec<f64>], resp: &[f64], k: usize, model: &mut GmmModel) {
    let dim = model.dim;
    let n = samples.len() as f64;
    let prev = std::mem::take(&mut model.components);
    let mut comps = Vec::with_capacity(k);
    for c in 0..k {
        let nk: f64 = (0..samples.len()).map(|i| resp[i * k + c]).sum();
        if nk < 1e-10 {
            // starved component: keep its moments with a negligible weight
            let mut old = prev.get(c).cloned().unwrap_or_else(|| Component {
                weight: 0.0,
                mean: samples[c % samples.len()].clone(),
                var: vec![1.0; dim],
            });
            old.weight = 1e-10;
            comps.push(old);
            continue;
        }
        let mut mean = vec![0.0; dim];
        for (i, x) in samples.iter().enumerate() {
            let r = resp[i * k + c];
            for (m, v) in mean.iter_mut().zip(x) {
                *m += r * v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= nk);
        let mut var = vec![0.0; dim];
        for (i, x) in samples.iter().enumerate() {
            let r = resp[i * k + c];
            for ((s, v), m) in var.iter_mut().zip(x).zip(&mean) {
                *s += r * (v - m) * (v - m);
            }
        }
        var.iter_mut().for_each(|s| *s = (*s / nk).max(VAR_FLOOR));
        comps.push(Component {
            weight: nk / n,
            mean,
            var,
        });
    }
    let total: f64 = comps.iter().map(|c| c.weight).sum();
    comps.iter_mut().for_each(|c| c.weight /= total);
    model.components = comps;
}

/// Index of the highest-scoring model; ties go to the lowest index.
pub fn classify(models: &[GmmModel], x: &[f64]) -> Result<usize> {
    if models.is_empty() {
        return Err(Error::Config("no class models".into()));
    }
    let mut best = (0, f64::NEG_INFINITY);
    for (idx, m) in models.iter().enumerate() {
        let s = m.score(x)?;
        if s > best.1 {
            best = (idx, s);
        }
    }
    Ok(best.0)
}

/// Majority vote over the last V labels; ties keep the previous output.
#[derive(Debug, Clone, PartialEq)]
pub struct MajorityVoter {
    window: usize,
    history: VecDeque<usize>,
    last: Option<usize>,
}

impl MajorityVoter {
    pub fn new(window: usize) -> Self {
        Self {
            window: window.max(1),
            history: VecDeque::with_capacity(window.max(1)),
            last: None,
        }
    }

    pub fn push(&mut self, label: usize) -> usize {
        if self.history.len() == self.window {
            self.history.pop_front();
        }
        self.history.push_back(label);
        let out = majority_vote(self.history.make_contiguous(), self.last);
        self.last = Some(out);
        out
    }

    pub fn last(&self) -> Option<usize> {
        self.last
    }
}

/// Most frequent label; on a tie the previous output wins if it is among the
/// leaders, otherwise the leader seen most recently.
pub fn majority_vote(history: &[usize], previous: Option<usize>) -> usize {
    assert!(!history.is_empty(), "majority vote over an empty history");
    let max_label = *history.iter().max().unwrap();
    let mut counts = vec![0usize; max_label + 1];
    for &l in history {
        counts[l] += 1;
    }
    let top = *counts.iter().max().unwrap();
    let leaders: Vec<usize> = (0..counts.len()).filter(|&l| counts[l] == top).collect();
    if leaders.len() == 1 {
        return leaders[0];
    }
    if let Some(p) = previous.filter(|p| leaders.contains(p)) {
        return p;
    }
    *history.iter().rev().find(|l| leaders.contains(l)).unwrap()
}
