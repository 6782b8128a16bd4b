//! Averaged total distortion and its gradients, computed from accumulator
//! sums only.
//!
//! The objective is
//! D = 1/(IJ) Σ_ij { D_r,ij + β/Ld Σ_d D_nr,ijd },
//! where each cell term is the mean per-sample distortion over the samples
//! in that cell and Ld is L (delay model) or Q·B (IPD model). Empty cells
//! contribute nothing.

use super::accumulator::{CellSums, TrainAccumulator};
use crate::error::{Error, Result};
use crate::gain::Criterion;

/// Sum over a cell's samples of d(A, x·R).
fn cell_sum(s: &CellSums, x: f64, criterion: Criterion) -> f64 {
    match criterion {
        Criterion::We => s.s0 - 2.0 * x * s.s1 + x * x * s.s2,
        Criterion::Le => {
            let lx = x.ln();
            s.sum_log_sq - 2.0 * lx * (s.sum_log_a - s.sum_log_r) + s.m() * lx * lx
        }
        Criterion::Wc => s.c1 / x + x * s.c2 - s.w0,
        Criterion::Direct => f64::NAN,
    }
}

/// d/dx of the cell's mean distortion at estimate x·R.
fn cell_slope(s: &CellSums, x: f64, criterion: Criterion) -> f64 {
    let m = s.m();
    match criterion {
        Criterion::We => -2.0 * (s.s1 - x * s.s2) / m,
        Criterion::Le => {
            let p = s.sum_log_a - s.sum_log_r - m * x.ln();
            -2.0 * p / (x * m)
        }
        Criterion::Wc => (-s.c1 / (x * x) + s.c2) / m,
        Criterion::Direct => f64::NAN,
    }
}

pub(crate) fn check_shapes(acc: &TrainAccumulator, g: &[f64], h: &[f64], criterion: Criterion) -> Result<()> {
    if criterion == Criterion::Direct {
        return Err(Error::Config("the direct criterion has no training objective".into()));
    }
    if g.len() != acc.snr_cells() || h.len() != acc.dir_cells() {
        return Err(Error::dim(format!(
            "parameters ({}, {}) do not match accumulator ({}, {})",
            g.len(),
            h.len(),
            acc.snr_cells(),
            acc.dir_cells()
        )));
    }
    Ok(())
}

pub fn total_distortion(
    acc: &TrainAccumulator,
    g: &[f64],
    h: &[f64],
    criterion: Criterion,
    beta: f64,
) -> Result<f64> {
    check_shapes(acc, g, h, criterion)?;
    let dirs = acc.dir_cells();
    let nonref = acc.nonref_cells();
    let mut total = 0.0;
    for (c, s) in acc.reference_cells().iter().enumerate() {
        let mut cell = 0.0;
        if !s.is_empty() {
            cell += cell_sum(s, g[c], criterion) / s.m();
        }
        let mut nr = 0.0;
        for (d, hd) in h.iter().enumerate() {
            let sn = &nonref[c * dirs + d];
            if !sn.is_empty() {
                nr += cell_sum(sn, g[c] * hd, criterion) / sn.m();
            }
        }
        total += cell + beta * nr / dirs as f64;
    }
    Ok(total / acc.snr_cells() as f64)
}

/// Gradients of [`total_distortion`] with respect to every G and H entry.
pub fn gradients(
    acc: &TrainAccumulator,
    g: &[f64],
    h: &[f64],
    criterion: Criterion,
    beta: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    check_shapes(acc, g, h, criterion)?;
    if acc.is_empty() {
        return Err(Error::invalid("accumulator holds no samples"));
    }
    let dirs = acc.dir_cells();
    let ld = dirs as f64;
    let ij = acc.snr_cells() as f64;
    let nonref = acc.nonref_cells();
    let mut gg = vec![0.0; g.len()];
    let mut gh = vec![0.0; h.len()];
    for (c, s) in acc.reference_cells().iter().enumerate() {
        let mut dg = 0.0;
        if !s.is_empty() {
            dg += cell_slope(s, g[c], criterion);
        }
        let mut dg_nr = 0.0;
        for (d, &hd) in h.iter().enumerate() {
            let sn = &nonref[c * dirs + d];
            if sn.is_empty() {
                continue;
            }
            let slope = cell_slope(sn, g[c] * hd, criterion);
            dg_nr += hd * slope;
            gh[d] += beta * g[c] * slope / (ij * ld);
        }
        gg[c] = (dg + beta * dg_nr / ld) / ij;
    }
    Ok((gg, gh))
}

pub fn grad_we(acc: &TrainAccumulator, g: &[f64], h: &[f64], beta: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    gradients(acc, g, h, Criterion::We, beta)
}

pub fn grad_le(acc: &TrainAccumulator, g: &[f64], h: &[f64], beta: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    gradients(acc, g, h, Criterion::Le, beta)
}

pub fn grad_wc(acc: &TrainAccumulator, g: &[f64], h: &[f64], beta: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    gradients(acc, g, h, Criterion::Wc, beta)
}
