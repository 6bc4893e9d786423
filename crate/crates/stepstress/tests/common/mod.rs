//! Shared test oracles: central finite differences, an independent simplex
//! minimizer, randomized designs, and empirical-distribution checks. The
//! helpers deliberately avoid the crate's analytic-derivative and BFGS
//! fitting paths, so tests using them compare two genuinely different
//! computations.

// Each test binary pulls in its own subset of these helpers.
#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use stepstress::divergence::FailureCounts;
use stepstress::model::{cell_probabilities, CellProbabilities, InspectionGrid, ModelParams, StressPlan};
use stepstress::montecarlo::sample_counts;

/// Cell probabilities at a raw parameter triple; panics on invalid input
/// (test designs are constructed valid).
pub fn probs_at(theta: &[f64; 3], plan: &StressPlan, grid: &InspectionGrid) -> Vec<f64> {
    let params = ModelParams::new(theta[0], theta[1], theta[2]).expect("valid test parameters");
    cell_probabilities(&params, plan, grid).expect("computable probabilities").as_slice().to_vec()
}

/// Central-finite-difference Jacobian of the cell probabilities in θ,
/// independent of the analytic recursion under test.
pub fn fd_jacobian(
    params: &ModelParams,
    plan: &StressPlan,
    grid: &InspectionGrid,
    step: f64,
) -> DMatrix<f64> {
    let theta = params.as_array();
    let n_cells = grid.num_intervals() + 1;
    let mut w = DMatrix::zeros(n_cells, 3);
    for k in 0..3 {
        let mut up = theta;
        let mut dn = theta;
        up[k] += step;
        dn[k] -= step;
        let pi_up = probs_at(&up, plan, grid);
        let pi_dn = probs_at(&dn, plan, grid);
        for j in 0..n_cells {
            w[(j, k)] = (pi_up[j] - pi_dn[j]) / (2.0 * step);
        }
    }
    w
}

/// Largest absolute entry of a dynamic matrix.
pub fn amax(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, &v| acc.max(v.abs()))
}

/// A randomized valid design: 1–4 stress levels, a grid containing every
/// change time, and parameters keeping all cell probabilities above 1e-5
/// (so finite-difference relative errors stay meaningful). Rejection-samples
/// until valid.
pub fn random_design(rng: &mut ChaCha8Rng) -> (StressPlan, InspectionGrid, ModelParams) {
    loop {
        let k = rng.random_range(1..=4_usize);
        let mut levels: Vec<f64> = (0..k).map(|_| rng.random_range(0.05..1.0)).collect();
        levels.sort_by(f64::total_cmp);
        levels.dedup_by(|a, b| (*a - *b).abs() < 0.05);
        if levels.len() != k {
            continue;
        }
        let termination: f64 = rng.random_range(10.0..30.0);
        let mut change_times: Vec<f64> = (0..k - 1)
            .map(|_| rng.random_range(0.15 * termination..0.7 * termination))
            .collect();
        change_times.sort_by(f64::total_cmp);
        change_times.dedup_by(|a, b| (*a - *b).abs() < 0.05 * termination);
        if change_times.len() != k - 1 {
            continue;
        }

        let extras = rng.random_range(3..10_usize);
        let mut times = change_times.clone();
        times.push(termination);
        for _ in 0..extras {
            times.push(rng.random_range(0.05 * termination..0.95 * termination));
        }
        times.sort_by(f64::total_cmp);
        times.dedup_by(|a, b| (*a - *b).abs() < 0.01 * termination);
        if !times.last().is_some_and(|&t| t == termination) {
            continue;
        }

        let Ok(plan) = StressPlan::new(levels, change_times, termination) else { continue };
        let Ok(grid) = InspectionGrid::new(times, &plan) else { continue };
        let params = ModelParams::new(
            rng.random_range(2.0..4.5),
            rng.random_range(-3.5..-0.8),
            rng.random_range(0.6..2.2),
        )
        .expect("random parameters in a valid range");
        let Ok(pi) = cell_probabilities(&params, &plan, &grid) else { continue };
        if pi.as_slice().iter().all(|&p| p > 1e-5) {
            return (plan, grid, params);
        }
    }
}

/// One multinomial dataset from `pi`, on a reproducible stream.
pub fn sample_dataset(pi: &CellProbabilities, n_units: u64, seed: u64, rep: u64) -> FailureCounts {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(rep);
    sample_counts(pi, n_units, &mut rng).expect("sampling from a valid simplex")
}

/// Nelder–Mead simplex minimization over three coordinates: an optimizer
/// wholly independent of the crate's gradient-based fitting. Returns the
/// best vertex and its value.
pub fn nelder_mead<F: FnMut(&[f64; 3]) -> f64>(
    mut f: F,
    x0: [f64; 3],
    scale: f64,
    max_iter: usize,
) -> ([f64; 3], f64) {
    const ALPHA: f64 = 1.0; // reflection
    const GAMMA: f64 = 2.0; // expansion
    const RHO: f64 = 0.5; // contraction
    const SIGMA: f64 = 0.5; // shrink

    let mut simplex: Vec<([f64; 3], f64)> = Vec::with_capacity(4);
    simplex.push((x0, f(&x0)));
    for k in 0..3 {
        let mut p = x0;
        p[k] += scale;
        simplex.push((p, f(&p)));
    }

    for _ in 0..max_iter {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let spread = simplex[3].1 - simplex[0].1;
        let diameter = (0..3).fold(0.0_f64, |acc, k| {
            acc.max(
                simplex.iter().map(|(p, _)| p[k]).fold(f64::NEG_INFINITY, f64::max)
                    - simplex.iter().map(|(p, _)| p[k]).fold(f64::INFINITY, f64::min),
            )
        });
        if spread.abs() <= 1e-14 * (1.0 + simplex[0].1.abs()) && diameter <= 1e-10 {
            break;
        }

        let centroid = {
            let mut c = [0.0; 3];
            for (p, _) in simplex.iter().take(3) {
                for k in 0..3 {
                    c[k] += p[k] / 3.0;
                }
            }
            c
        };
        let worst = simplex[3];
        let mut reflected = [0.0; 3];
        for k in 0..3 {
            reflected[k] = centroid[k] + ALPHA * (centroid[k] - worst.0[k]);
        }
        let fr = f(&reflected);

        if fr < simplex[0].1 {
            let mut expanded = [0.0; 3];
            for k in 0..3 {
                expanded[k] = centroid[k] + GAMMA * (reflected[k] - centroid[k]);
            }
            let fe = f(&expanded);
            simplex[3] = if fe < fr { (expanded, fe) } else { (reflected, fr) };
        } else if fr < simplex[2].1 {
            simplex[3] = (reflected, fr);
        } else {
            let mut contracted = [0.0; 3];
            for k in 0..3 {
                contracted[k] = centroid[k] + RHO * (worst.0[k] - centroid[k]);
            }
            let fc = f(&contracted);
            if fc < worst.1 {
                simplex[3] = (contracted, fc);
            } else {
                let best = simplex[0].0;
                for vertex in simplex.iter_mut().skip(1) {
                    for k in 0..3 {
                        vertex.0[k] = best[k] + SIGMA * (vertex.0[k] - best[k]);
                    }
                    vertex.1 = f(&vertex.0);
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    simplex[0]
}

/// Two-sided Kolmogorov–Smirnov statistic of a sorted sample against a
/// reference CDF.
pub fn ks_statistic<F: Fn(f64) -> f64>(sorted: &[f64], cdf: F) -> f64 {
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            ((i as f64 + 1.0) / n - f).max(f - i as f64 / n)
        })
        .fold(0.0, f64::max)
}

/// Asymptotic two-sided KS critical value at level 1%.
pub fn ks_critical_1pct(n: usize) -> f64 {
    1.628 / (n as f64).sqrt()
}
