//! Steepest descent with momentum over (G, H).

use super::accumulator::TrainAccumulator;
use super::generalized::{generalized_distortion, grad_generalized};
use super::objective::{gradients, total_distortion};
use super::Solution;
use crate::error::{Error, Result};
use crate::gain::Criterion;

pub const DIVERGENCE_FACTOR: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub iterations: usize,
    pub beta: f64,
    pub min_gain: f64,
}

impl OptimizerConfig {
    pub fn for_criterion(criterion: Criterion) -> Self {
        let learning_rate = match criterion {
            Criterion::We => 0.5,
            Criterion::Le => 1e-6,
            Criterion::Wc => 5e-7,
            Criterion::Direct => 0.0,
        };
        Self {
            learning_rate,
            momentum: 0.9,
            iterations: 200,
            beta: 1.0,
            min_gain: 1e-4,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config("momentum must lie in [0, 1)".into()));
        }
        if !(0.0..=1.0).contains(&self.beta) {
            return Err(Error::Config("beta must lie in [0, 1]".into()));
        }
        if !(self.min_gain >= 0.0) {
            return Err(Error::Config("min_gain must be non-negative".into()));
        }
        Ok(())
    }
}

/// Delay-model accumulators use the averaged objective; IPD-model
/// accumulators use the generalized (halved WE/LE) objective.
fn loss(acc: &TrainAccumulator, g: &[f64], h: &[f64], criterion: Criterion, beta: f64) -> Result<f64> {
    if acc.layout.model_name() == "ipd" {
        generalized_distortion(acc, g, h, criterion, beta)
    } else {
        total_distortion(acc, g, h, criterion, beta)
    }
}

fn grad(
    acc: &TrainAccumulator,
    g: &[f64],
    h: &[f64],
    criterion: Criterion,
    beta: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if acc.layout.model_name() == "ipd" {
        grad_generalized(acc, g, h, criterion, beta)
    } else {
        gradients(acc, g, h, criterion, beta)
    }
}

pub fn optimize(
    acc: &TrainAccumulator,
    criterion: Criterion,
    config: &OptimizerConfig,
    init_g: Vec<f64>,
    init_h: Vec<f64>,
) -> Result<Solution> {
    config.validate()?;
    let (mut g, mut h) = (init_g, init_h);
    let initial = loss(acc, &g, &h, criterion, config.beta)?;
    if !initial.is_finite() {
        return Err(Error::invalid("initial distortion is not finite"));
    }
    let mut trace = vec![initial];
    let mut vg = vec![0.0; g.len()];
    let mut vh = vec![0.0; h.len()];
    for _ in 0..config.iterations {
        let (gg, gh) = grad(acc, &g, &h, criterion, config.beta)?;
        for ((x, v), dx) in g.iter_mut().zip(&mut vg).zip(&gg) {
            *v = config.momentum * *v - config.learning_rate * dx;
            *x = (*x + *v).max(config.min_gain);
        }
        for ((x, v), dx) in h.iter_mut().zip(&mut vh).zip(&gh) {
            *v = config.momentum * *v - config.learning_rate * dx;
            *x = (*x + *v).max(config.min_gain);
        }
        let d = loss(acc, &g, &h, criterion, config.beta)?;
        trace.push(d);
        if !d.is_finite() || d > DIVERGENCE_FACTOR * initial {
            return Err(Error::Diverged { trace });
        }
    }
    Ok(Solution { g, h, trace })
}
