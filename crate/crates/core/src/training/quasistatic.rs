//! Alternating closed-form solution of the weighted-Euclidean problem.

use super::accumulator::TrainAccumulator;
use super::objective::total_distortion;
use super::Solution;
use crate::error::{Error, Result};
use crate::gain::Criterion;

pub const REL_TOL: f64 = 1e-9;

/// Unilateral optimum G = s1/s2 per reference cell; cells without
/// reference samples stay at 1.
pub fn init_unilateral(acc: &TrainAccumulator) -> Vec<f64> {
    acc.reference_cells()
        .iter()
        .map(|s| if s.is_empty() || s.s2 <= 0.0 { 1.0 } else { s.s1 / s.s2 })
        .collect()
}

/// Exact minimizer of the objective over H for fixed G.
pub fn update_h(acc: &TrainAccumulator, g: &[f64], h: &mut [f64]) {
    let dirs = acc.dir_cells();
    let nonref = acc.nonref_cells();
    for (d, hd) in h.iter_mut().enumerate() {
        let (mut num, mut den) = (0.0, 0.0);
        for (c, gc) in g.iter().enumerate() {
            let s = &nonref[c * dirs + d];
            if !s.is_empty() {
                num += gc * s.s1 / s.m();
                den += gc * gc * s.s2 / s.m();
            }
        }
        if den > 0.0 {
            *hd = num / den;
        }
    }
}

/// Exact minimizer of the objective over G for fixed H.
pub fn update_g(acc: &TrainAccumulator, h: &[f64], beta: f64, g: &mut [f64]) {
    let dirs = acc.dir_cells();
    let ld = dirs as f64;
    let nonref = acc.nonref_cells();
    for (c, s) in acc.reference_cells().iter().enumerate() {
        let cells = &nonref[c * dirs..(c + 1) * dirs];
        let (num, den) = if !s.is_empty() {
            let m = s.m();
            let (mut n, mut d) = (0.0, 0.0);
            for (sn, hd) in cells.iter().zip(h) {
                if !sn.is_empty() {
                    let w = m / (ld * sn.m());
                    n += w * hd * sn.s1;
                    d += w * hd * hd * sn.s2;
                }
            }
            (s.s1 + beta * n, s.s2 + beta * d)
        } else if beta > 0.0 {
            let (mut n, mut d) = (0.0, 0.0);
            for (sn, hd) in cells.iter().zip(h) {
                if !sn.is_empty() {
                    n += hd * sn.s1 / sn.m();
                    d += hd * hd * sn.s2 / sn.m();
                }
            }
            (n, d)
        } else {
            (0.0, 0.0)
        };
        if den > 0.0 {
            g[c] = num / den;
        }
    }
}

fn max_rel_change(old: &[f64], new: &[f64]) -> f64 {
    old.iter()
        .zip(new)
        .map(|(a, b)| (b - a).abs() / a.abs().max(1e-12))
        .fold(0.0, f64::max)
}

/// Starts from the unilateral table with H ≡ 1 and alternates H and G
/// updates. The trace holds the distortion at the start and after every
/// iteration.
pub fn solve_we_quasistatic(acc: &TrainAccumulator, beta: f64, iterations: usize) -> Result<Solution> {
    if acc.is_empty() {
        return Err(Error::invalid("accumulator holds no samples"));
    }
    if !(0.0..=1.0).contains(&beta) {
        return Err(Error::Config(format!("beta {beta} outside [0, 1]")));
    }
    let mut g = init_unilateral(acc);
    let mut h = vec![1.0; acc.dir_cells()];
    let mut trace = vec![total_distortion(acc, &g, &h, Criterion::We, beta)?];
    for _ in 0..iterations {
        let (g_old, h_old) = (g.clone(), h.clone());
        update_h(acc, &g, &mut h);
        update_g(acc, &h, beta, &mut g);
        trace.push(total_distortion(acc, &g, &h, Criterion::We, beta)?);
        let change = max_rel_change(&g_old, &g).max(max_rel_change(&h_old, &h));
        if change < REL_TOL {
            break;
        }
    }
    Ok(Solution { g, h, trace })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gain::HrtfGain;
    use crate::snr::SnrAxes;
    use crate::training::accumulator::CellKey;
    use crate::training::objective::grad_we;
    use crate::training::test_support::random_instance;

    fn single() -> TrainAccumulator {
        let axes = SnrAxes {
            i: 1,
            j: 1,
            ..SnrAxes::default()
        };
        TrainAccumulator::new(axes, 0.0, HrtfGain::tdoa_ones(1, 24.0)).unwrap()
    }

    #[test]
    fn unilateral_examples() {
        let mut a = single();
        a.add_reference(0, 0, 2.0, 1.0).unwrap();
        assert_eq!(init_unilateral(&a), vec![2.0]);
        let mut a = single();
        a.add_reference(0, 0, 1.0, 1.0).unwrap();
        a.add_reference(0, 0, 3.0, 1.0).unwrap();
        assert_eq!(init_unilateral(&a), vec![2.0]);
    }

    #[test]
    fn exact_fit_fixed_point() {
        let mut a = single();
        a.add_reference(0, 0, 2.0, 1.0).unwrap();
        a.add_nonref(CellKey { i: 0, j: 0, d: 0 }, 1.0, 1.0).unwrap();
        let sol = solve_we_quasistatic(&a, 1.0, 50).unwrap();
        assert!((sol.g[0] - 2.0).abs() < 1e-12);
        assert!((sol.h[0] - 0.5).abs() < 1e-12);
        assert!(*sol.trace.last().unwrap() < 1e-20);
    }

    #[test]
    fn beta_zero_keeps_closed_form() {
        let inst = random_instance(3, false);
        let sol = solve_we_quasistatic(&inst.acc, 0.0, 20).unwrap();
        let g0 = init_unilateral(&inst.acc);
        assert_eq!(
            sol.g.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            g0.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn trace_is_non_increasing_and_half_steps_are_stationary() {
        for seed in 0..10 {
            let inst = random_instance(seed, seed % 2 == 0);
            let sol = solve_we_quasistatic(&inst.acc, inst.beta, 100).unwrap();
            for w in sol.trace.windows(2) {
                assert!(w[1] <= w[0] * (1.0 + 1e-12), "seed {seed}: {} > {}", w[1], w[0]);
            }
            let mut g = init_unilateral(&inst.acc);
            let mut h = vec![1.0; inst.acc.dir_cells()];
            update_h(&inst.acc, &g, &mut h);
            let (_, gh) = grad_we(&inst.acc, &g, &h, inst.beta).unwrap();
            assert!(gh.iter().all(|v| v.abs() < 1e-12));
            update_g(&inst.acc, &h, inst.beta, &mut g);
            let (gg, _) = grad_we(&inst.acc, &g, &h, inst.beta).unwrap();
            assert!(gg.iter().all(|v| v.abs() < 1e-12));
        }
    }

    #[test]
    fn rejects_empty_and_bad_beta() {
        let a = single();
        assert!(solve_we_quasistatic(&a, 1.0, 5).is_err());
        let inst = random_instance(0, false);
        assert!(solve_we_quasistatic(&inst.acc, 1.5, 5).is_err());
    }
}
