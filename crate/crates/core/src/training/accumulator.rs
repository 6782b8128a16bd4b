//! Criterion-independent sufficient statistics for (G, H) training.

use crate::error::{Error, Result};
use crate::gain::HrtfGain;
use crate::snr::SnrAxes;

pub const AMP_FLOOR: f64 = 1e-10;

/// Sums over the samples that landed in one cell, for an estimate x·R of A.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CellSums {
    /// Σ A^(p+2)
    pub s0: f64,
    /// Σ A^(p+1)·R
    pub s1: f64,
    /// Σ A^p·R²
    pub s2: f64,
    pub sum_log_a: f64,
    pub sum_log_r: f64,
    /// Σ (log A − log R)²
    pub sum_log_sq: f64,
    /// Σ A^(p+1)/R
    pub c1: f64,
    /// Σ A^(p−1)·R
    pub c2: f64,
    /// Σ A^p
    pub w0: f64,
    pub count: u64,
}

impl CellSums {
    pub fn add(&mut self, a: f64, r: f64, p: f64) {
        let a = a.max(AMP_FLOOR);
        let r = r.max(AMP_FLOOR);
        let ap = a.powf(p);
        let (la, lr) = (a.ln(), r.ln());
        self.s0 += ap * a * a;
        self.s1 += ap * a * r;
        self.s2 += ap * r * r;
        self.sum_log_a += la;
        self.sum_log_r += lr;
        self.sum_log_sq += (la - lr) * (la - lr);
        self.c1 += ap * a / r;
        self.c2 += ap * r / a;
        self.w0 += ap;
        self.count += 1;
    }

    pub fn merge(&mut self, other: &CellSums) {
        self.s0 += other.s0;
        self.s1 += other.s1;
        self.s2 += other.s2;
        self.sum_log_a += other.sum_log_a;
        self.sum_log_r += other.sum_log_r;
        self.sum_log_sq += other.sum_log_sq;
        self.c1 += other.c1;
        self.c2 += other.c2;
        self.w0 += other.w0;
        self.count += other.count;
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn m(&self) -> f64 {
        self.count as f64
    }
}

/// Location of a training sample: SNR cell plus direction cell (delay bin
/// l, or q·B + b for the IPD model).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CellKey {
    pub i: usize,
    pub j: usize,
    pub d: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainAccumulator {
    pub axes: SnrAxes,
    pub p: f64,
    /// Shape of the HRTF model being trained; its values are ignored.
    pub layout: HrtfGain,
    reference: Vec<CellSums>,
    nonref: Vec<CellSums>,
}

impl TrainAccumulator {
    pub fn new(axes: SnrAxes, p: f64, layout: HrtfGain) -> Result<Self> {
        axes.validate()?;
        layout.validate()?;
        if !p.is_finite() {
            return Err(Error::invalid("p must be finite"));
        }
        let dirs = layout.values().len();
        Ok(Self {
            reference: vec![CellSums::default(); axes.cells()],
            nonref: vec![CellSums::default(); axes.cells() * dirs],
            axes,
            p,
            layout,
        })
    }

    pub fn snr_cells(&self) -> usize {
        self.axes.cells()
    }

    /// L for the delay model, Q·B for the IPD model.
    pub fn dir_cells(&self) -> usize {
        self.layout.values().len()
    }

    pub fn reference(&self, i: usize, j: usize) -> &CellSums {
        &self.reference[i * self.axes.j + j]
    }

    pub fn nonref(&self, i: usize, j: usize, d: usize) -> &CellSums {
        &self.nonref[(i * self.axes.j + j) * self.dir_cells() + d]
    }

    /// Reference sums by flat SNR cell index.
    pub fn reference_cells(&self) -> &[CellSums] {
        &self.reference
    }

    /// Non-reference sums, indexed by flat SNR cell × dir_cells + d.
    pub fn nonref_cells(&self) -> &[CellSums] {
        &self.nonref
    }

    fn check(&self, key: CellKey) -> Result<()> {
        if key.i >= self.axes.i || key.j >= self.axes.j || key.d >= self.dir_cells() {
            return Err(Error::invalid(format!(
                "cell ({}, {}, {}) outside {}x{}x{}",
                key.i,
                key.j,
                key.d,
                self.axes.i,
                self.axes.j,
                self.dir_cells()
            )));
        }
        Ok(())
    }

    pub fn add_reference(&mut self, i: usize, j: usize, a: f64, r: f64) -> Result<()> {
        self.check(CellKey { i, j, d: 0 })?;
        let idx = i * self.axes.j + j;
        self.reference[idx].add(a, r, self.p);
        Ok(())
    }

    pub fn add_nonref(&mut self, key: CellKey, a_nr: f64, r_ref: f64) -> Result<()> {
        self.check(key)?;
        let idx = (key.i * self.axes.j + key.j) * self.dir_cells() + key.d;
        self.nonref[idx].add(a_nr, r_ref, self.p);
        Ok(())
    }

    /// One bin of one frame: the reference pair goes to (i, j), the
    /// non-reference clean amplitude against the same noisy reference to
    /// (i, j, d).
    pub fn accumulate(&mut self, key: CellKey, a_ref: f64, r_ref: f64, a_nonref: f64) -> Result<()> {
        self.check(key)?;
        self.add_reference(key.i, key.j, a_ref, r_ref)?;
        self.add_nonref(key, a_nonref, r_ref)
    }

    pub fn merge(&mut self, other: &TrainAccumulator) -> Result<()> {
        if self.axes != other.axes
            || self.p.to_bits() != other.p.to_bits()
            || self.layout.model_name() != other.layout.model_name()
            || self.dir_cells() != other.dir_cells()
        {
            return Err(Error::Config("cannot merge accumulators of different shapes".into()));
        }
        for (a, b) in self.reference.iter_mut().zip(&other.reference) {
            a.merge(b);
        }
        for (a, b) in self.nonref.iter_mut().zip(&other.nonref) {
            a.merge(b);
        }
        Ok(())
    }

    pub fn total_count(&self) -> u64 {
        self.reference.iter().map(|c| c.count).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.total_count() == 0 && self.nonref.iter().all(CellSums::is_empty)
    }

    /// G cells that received any sample, reference or non-reference.
    pub fn observed_g(&self) -> Vec<bool> {
        let dirs = self.dir_cells();
        (0..self.snr_cells())
            .map(|c| {
                !self.reference[c].is_empty()
                    || self.nonref[c * dirs..(c + 1) * dirs].iter().any(|s| !s.is_empty())
            })
            .collect()
    }

    /// H cells that received any non-reference sample.
    pub fn observed_h(&self) -> Vec<bool> {
        let dirs = self.dir_cells();
        (0..dirs)
            .map(|d| (0..self.snr_cells()).any(|c| !self.nonref[c * dirs + d].is_empty()))
            .collect()
    }
}
