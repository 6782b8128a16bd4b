//! Generalized gradient engine: every criterion's gradient is assembled as
//! K⁰ + K^Φ·Φ + K^Ψ·Ψ (and Λ for H) from parameter-dependent coefficients
//! and data-dependent averages Φ, Ψ.
//!
//! This form uses the halved Euclidean and log-Euclidean measures
//! d = ½(A − Â)² and d = ½(log A − log Â)², so its WE and LE gradients are
//! exactly half of [`super::objective::gradients`]; the WC gradient is
//! identical. Minimizers coincide.

use super::accumulator::{CellSums, TrainAccumulator};
use super::objective::{check_shapes, total_distortion};
use crate::error::{Error, Result};
use crate::gain::Criterion;

/// Scale of the generalized objective relative to [`total_distortion`].
pub fn generalized_scale(criterion: Criterion) -> f64 {
    match criterion {
        Criterion::We | Criterion::Le => 0.5,
        _ => 1.0,
    }
}

pub fn generalized_distortion(
    acc: &TrainAccumulator,
    g: &[f64],
    h: &[f64],
    criterion: Criterion,
    beta: f64,
) -> Result<f64> {
    Ok(generalized_scale(criterion) * total_distortion(acc, g, h, criterion, beta)?)
}

/// (Φ, Ψ) of one cell.
fn data_terms(s: &CellSums, criterion: Criterion) -> (f64, f64) {
    let m = s.m();
    match criterion {
        Criterion::We => (s.s1 / m, s.s2 / m),
        Criterion::Wc => (s.c1 / m, s.c2 / m),
        Criterion::Le => (s.sum_log_a / m, s.sum_log_r / m),
        Criterion::Direct => (f64::NAN, f64::NAN),
    }
}

/// (K⁰, K^Φ, K^Ψ) for the reference cell.
fn k_ref(g: f64, criterion: Criterion) -> [f64; 3] {
    match criterion {
        Criterion::We => [0.0, -1.0, g],
        Criterion::Wc => [0.0, -1.0 / (g * g), 1.0],
        Criterion::Le => [g.ln() / g, -1.0 / g, 1.0 / g],
        Criterion::Direct => [f64::NAN; 3],
    }
}

/// (K⁰, K^Φ, K^Ψ) and (Λ⁰, Λ^Φ, Λ^Ψ) for a non-reference cell.
fn k_nonref(g: f64, h: f64, criterion: Criterion) -> ([f64; 3], [f64; 3]) {
    match criterion {
        Criterion::We => ([0.0, -h, h * h * g], [0.0, -g, g * g * h]),
        Criterion::Wc => (
            [0.0, -1.0 / (g * g * h), h],
            [0.0, -1.0 / (h * h * g), g],
        ),
        Criterion::Le => {
            let l = (g * h).ln();
            ([l / g, -1.0 / g, 1.0 / g], [l / h, -1.0 / h, 1.0 / h])
        }
        Criterion::Direct => ([f64::NAN; 3], [f64::NAN; 3]),
    }
}

fn combine(k: [f64; 3], phi: f64, psi: f64) -> f64 {
    k[0] + k[1] * phi + k[2] * psi
}

/// Gradients of [`generalized_distortion`] for an IPD-indexed accumulator.
pub fn grad_generalized(
    acc: &TrainAccumulator,
    g: &[f64],
    h: &[f64],
    criterion: Criterion,
    beta: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    check_shapes(acc, g, h, criterion)?;
    if acc.layout.model_name() != "ipd" {
        return Err(Error::Config("the generalized gradient expects an ipd accumulator".into()));
    }
    if acc.is_empty() {
        return Err(Error::invalid("accumulator holds no samples"));
    }
    let qb = acc.dir_cells();
    let ij = acc.snr_cells() as f64;
    let nonref = acc.nonref_cells();
    let mut gg = vec![0.0; g.len()];
    let mut gh = vec![0.0; h.len()];
    for (c, s) in acc.reference_cells().iter().enumerate() {
        let mut dl = 0.0;
        if !s.is_empty() {
            let (phi, psi) = data_terms(s, criterion);
            dl = combine(k_ref(g[c], criterion), phi, psi);
        }
        let mut dr = 0.0;
        for (d, &hd) in h.iter().enumerate() {
            let sn = &nonref[c * qb + d];
            if sn.is_empty() {
                continue;
            }
            let (phi, psi) = data_terms(sn, criterion);
            let (k, lambda) = k_nonref(g[c], hd, criterion);
            dr += combine(k, phi, psi);
            gh[d] += beta * combine(lambda, phi, psi) / (ij * qb as f64);
        }
        gg[c] = (dl + beta * dr / qb as f64) / ij;
    }
    Ok((gg, gh))
}
