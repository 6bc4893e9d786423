//! Integration tests for the density-power-divergence layer: closed-form
//! identities, the Kullback–Leibler limit, finite-difference gradient and
//! Hessian oracles, and independent matrix assembly cross-checks.

mod common;

use nalgebra::{DMatrix, DVector, Matrix3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stepstress::divergence::{
    beta_score, dpd_loss, j_matrix, k_matrix, kl_loss, FailureCounts, TuningParameter,
};
use stepstress::model::{
    cell_probabilities, jacobian_w, log_likelihood, InspectionGrid, ModelParams, StressPlan,
};
use stepstress::montecarlo::default_solar_design;
use stepstress::Error;

fn assert_close(got: f64, want: f64, tol: f64, what: &str) {
    assert!(
        (got - want).abs() <= tol,
        "{what}: got {got}, want {want} (tol {tol})"
    );
}

fn beta(b: f64) -> TuningParameter {
    TuningParameter::new(b).unwrap()
}

/// A slightly perturbed copy of `pi` that is still a probability vector.
fn nudged(pi: &[f64]) -> Vec<f64> {
    let mut p: Vec<f64> = pi.to_vec();
    let k = p.len();
    for (j, q) in p.iter_mut().enumerate() {
        *q += if j % 2 == 0 { 0.004 } else { -0.004 };
        assert!(*q > 0.0);
    }
    let shortfall: f64 = 1.0 - p.iter().sum::<f64>();
    p[k - 1] += shortfall;
    p
}

#[test]
fn dpd_at_beta_one_is_the_squared_euclidean_distance() {
    let design = default_solar_design();
    let pi = cell_probabilities(&design.theta0, &design.plan, &design.grid).unwrap();
    let p_hat = nudged(pi.as_slice());
    let loss = dpd_loss(&p_hat, &pi, beta(1.0)).unwrap();
    let l2: f64 = p_hat
        .iter()
        .zip(pi.as_slice())
        .map(|(&ph, &p)| (ph - p) * (ph - p))
        .sum();
    assert_close(loss, l2, 1e-15, "beta = 1 squared distance");
}

#[test]
fn dpd_is_nonnegative_and_vanishes_only_at_the_model() {
    let design = default_solar_design();
    let pi = cell_probabilities(&design.theta0, &design.plan, &design.grid).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(51);
    for b in [0.1, 0.25, 0.5, 0.75, 1.0] {
        let zero = dpd_loss(pi.as_slice(), &pi, beta(b)).unwrap();
        assert_close(zero, 0.0, 1e-14, &format!("loss at the model, beta {b}"));
        for _ in 0..20 {
            // A random point on the simplex, away from pi.
            let raw: Vec<f64> = (0..pi.len()).map(|_| rng.random_range(0.01..1.0)).collect();
            let total: f64 = raw.iter().sum();
            let p_hat: Vec<f64> = raw.iter().map(|r| r / total).collect();
            let loss = dpd_loss(&p_hat, &pi, beta(b)).unwrap();
            assert!(loss > 0.0, "positive loss away from the model (beta {b})");
        }
    }
}

#[test]
fn dpd_approaches_the_kl_divergence_as_beta_shrinks() {
    let design = default_solar_design();
    let pi = cell_probabilities(&design.theta0, &design.plan, &design.grid).unwrap();
    let p_hat = nudged(pi.as_slice());
    let kl = kl_loss(&p_hat, &pi).unwrap();
    assert_close(
        dpd_loss(&p_hat, &pi, beta(1e-6)).unwrap(),
        kl,
        1e-7,
        "beta = 1e-6 against the KL limit",
    );
    // The gap shrinks linearly in beta (measured above the cancellation
    // floor of the three-term loss formula).
    let near = dpd_loss(&p_hat, &pi, beta(1e-4)).unwrap();
    let nearer = dpd_loss(&p_hat, &pi, beta(1e-5)).unwrap();
    assert!(
        (nearer - kl).abs() < 0.2 * (near - kl).abs(),
        "gap must shrink with beta: {} vs {}",
        (nearer - kl).abs(),
        (near - kl).abs()
    );
}

#[test]
fn dpd_rejects_beta_zero_and_mismatched_lengths() {
    let design = default_solar_design();
    let pi = cell_probabilities(&design.theta0, &design.plan, &design.grid).unwrap();
    assert!(matches!(
        dpd_loss(pi.as_slice(), &pi, beta(0.0)),
        Err(Error::Domain(_))
    ));
    assert!(matches!(
        dpd_loss(&[0.5, 0.5], &pi, beta(0.5)),
        Err(Error::MismatchedLengths { .. })
    ));
    assert!(matches!(
        kl_loss(&[0.5, 0.5], &pi),
        Err(Error::MismatchedLengths { .. })
    ));
    assert!(TuningParameter::new(-0.1).is_err());
    assert!(TuningParameter::new(f64::NAN).is_err());
    assert!(TuningParameter::new(0.0).unwrap().is_zero());
    assert!(!TuningParameter::new(0.4).unwrap().is_zero());
}

#[test]
fn kl_matches_hand_computed_examples() {
    // All mass on the first of two equally likely cells: ln 2.
    let theta = ModelParams::new(0.0, 0.0, 1.0).unwrap();
    let plan = StressPlan::new(vec![0.0], vec![], 2.0f64.ln()).unwrap();
    let grid = InspectionGrid::new(vec![2.0f64.ln()], &plan).unwrap();
    let pi = cell_probabilities(&theta, &plan, &grid).unwrap();
    assert_close(pi[0], 0.5, 1e-15, "first cell of the coin design");
    let kl = kl_loss(&[1.0, 0.0], &pi).unwrap();
    assert_close(kl, 2.0f64.ln(), 1e-14, "KL of a point mass against a coin");
    // Cells with zero frequency contribute nothing.
    let kl = kl_loss(&[0.0, 1.0], &pi).unwrap();
    assert_close(kl, 2.0f64.ln(), 1e-14, "KL with the mass on the other cell");
    // At the model the divergence is zero.
    assert_close(kl_loss(pi.as_slice(), &pi).unwrap(), 0.0, 1e-15, "KL at the model");
}

#[test]
fn kl_returns_infinity_when_the_model_starves_an_observed_cell() {
    // A microscopic scale concentrates the model in the first cell.
    let theta = ModelParams::new(-30.0, 0.0, 1.0).unwrap();
    let plan = StressPlan::new(vec![1.0], vec![], 10.0).unwrap();
    let grid = InspectionGrid::new(vec![5.0, 10.0], &plan).unwrap();
    let pi = cell_probabilities(&theta, &plan, &grid).unwrap();
    assert_eq!(pi[1], 0.0);
    let kl = kl_loss(&[0.9, 0.1, 0.0], &pi).unwrap();
    assert!(kl.is_infinite() && kl > 0.0);
}

#[test]
fn minimizing_kl_is_maximizing_the_likelihood() {
    // With every count positive, N * (sum p̂ ln p̂ - KL) is the log-likelihood
    // exactly, so the two criteria rank parameter values identically.
    let design = default_solar_design();
    let counts = FailureCounts::new(vec![1, 17, 17, 31, 11, 9, 15, 19, 11, 12, 4, 11, 13, 4, 25])
        .unwrap();
    let p_hat = counts.frequencies();
    let n = counts.total() as f64;
    let entropy: f64 = p_hat.iter().map(|&p| p * p.ln()).sum();
    for (da0, da1, deta) in [
        (0.0, 0.0, 0.0),
        (0.3, 0.0, 0.0),
        (0.0, -0.4, 0.0),
        (-0.2, 0.3, 0.2),
        (0.1, 0.1, -0.3),
    ] {
        let theta = ModelParams::new(
            design.theta0.a0 + da0,
            design.theta0.a1 + da1,
            design.theta0.eta + deta,
        )
        .unwrap();
        let pi = cell_probabilities(&theta, &design.plan, &design.grid).unwrap();
        let kl = kl_loss(&p_hat, &pi).unwrap();
        let ll = log_likelihood(&counts, &theta, &design.plan, &design.grid).unwrap();
        assert_close(
            ll,
            n * (entropy - kl),
            1e-9 * ll.abs(),
            "likelihood from the KL divergence",
        );
    }
}

#[test]
fn score_vanishes_at_the_model_for_every_beta() {
    let design = default_solar_design();
    let pi = cell_probabilities(&design.theta0, &design.plan, &design.grid).unwrap();
    for b in [0.0, 0.3, 0.7, 1.0] {
        let u = beta_score(pi.as_slice(), &design.theta0, &design.plan, &design.grid, beta(b))
            .unwrap();
        assert_close(u.amax(), 0.0, 1e-15, &format!("score at the model, beta {b}"));
    }
}

#[test]
fn score_is_the_loss_gradient_up_to_the_stated_factor() {
    // The DPD loss gradient in theta is -(1 + beta) U_beta, and the KL loss
    // gradient is -U_0; check both against central finite differences.
    let design = default_solar_design();
    let pi0 = cell_probabilities(&design.theta0, &design.plan, &design.grid).unwrap();
    let p_hat = nudged(pi0.as_slice());
    let h = 1e-6;
    let theta = design.theta0.as_array();
    for b in [0.0, 0.2, 0.5, 0.8, 1.0] {
        let loss_at = |z: &[f64; 3]| -> f64 {
            let t = ModelParams::new(z[0], z[1], z[2]).unwrap();
            let pi = cell_probabilities(&t, &design.plan, &design.grid).unwrap();
            if b == 0.0 {
                kl_loss(&p_hat, &pi).unwrap()
            } else {
                dpd_loss(&p_hat, &pi, beta(b)).unwrap()
            }
        };
        let u = beta_score(&p_hat, &design.theta0, &design.plan, &design.grid, beta(b)).unwrap();
        let factor = if b == 0.0 { -1.0 } else { -(1.0 + b) };
        for a in 0..3 {
            let mut up = theta;
            let mut dn = theta;
            up[a] += h;
            dn[a] -= h;
            let fd = (loss_at(&up) - loss_at(&dn)) / (2.0 * h);
            assert_close(
                factor * u[a],
                fd,
                1e-6,
                &format!("gradient component {a} at beta {b}"),
            );
        }
    }
}

#[test]
fn score_at_beta_zero_is_the_scaled_likelihood_score() {
    let design = default_solar_design();
    let counts = FailureCounts::new(vec![1, 17, 17, 31, 11, 9, 15, 19, 11, 12, 4, 11, 13, 4, 25])
        .unwrap();
    let p_hat = counts.frequencies();
    let n = counts.total() as f64;
    let u = beta_score(&p_hat, &design.theta0, &design.plan, &design.grid, beta(0.0)).unwrap();
    let h = 1e-6;
    let theta = design.theta0.as_array();
    for a in 0..3 {
        let mut up = theta;
        let mut dn = theta;
        up[a] += h;
        dn[a] -= h;
        let ll = |z: &[f64; 3]| -> f64 {
            let t = ModelParams::new(z[0], z[1], z[2]).unwrap();
            log_likelihood(&counts, &t, &design.plan, &design.grid).unwrap()
        };
        let fd = (ll(&up) - ll(&dn)) / (2.0 * h * n);
        assert_close(u[a], fd, 1e-6, &format!("likelihood score component {a}"));
    }
}

/// Assembles J and K through plain nalgebra matrix products, independently of
/// the summation loops inside the crate.
fn dense_j_and_k(
    theta: &ModelParams,
    plan: &StressPlan,
    grid: &InspectionGrid,
    b: f64,
) -> (Matrix3<f64>, Matrix3<f64>) {
    let pi = cell_probabilities(theta, plan, grid).unwrap();
    let w = jacobian_w(theta, plan, grid).unwrap();
    let k_cells = pi.len();
    let d = DMatrix::from_diagonal(&DVector::from_iterator(
        k_cells,
        pi.as_slice().iter().map(|&p| p.powf(b - 1.0)),
    ));
    let d2 = DMatrix::from_diagonal(&DVector::from_iterator(
        k_cells,
        pi.as_slice().iter().map(|&p| p.powf(2.0 * b - 1.0)),
    ));
    let pb = DVector::from_iterator(k_cells, pi.as_slice().iter().map(|&p| p.powf(b)));
    let j = w.transpose() * &d * &w;
    let s = w.transpose() * pb;
    let k = w.transpose() * &d2 * &w - &s * s.transpose();
    (Matrix3::from_iterator(j.iter().copied()), Matrix3::from_iterator(k.iter().copied()))
}

#[test]
fn information_matrices_match_an_independent_assembly() {
    let mut rng = ChaCha8Rng::seed_from_u64(52);
    for case in 0..30 {
        let (plan, grid, theta) = common::random_design(&mut rng);
        for b in [0.2, 0.5, 1.0] {
            let j = j_matrix(&theta, &plan, &grid, beta(b)).unwrap();
            let k = k_matrix(&theta, &plan, &grid, beta(b)).unwrap();
            let (j_ref, k_ref) = dense_j_and_k(&theta, &plan, &grid, b);
            let j_scale = 1.0 + j.amax();
            let k_scale = 1.0 + k.amax();
            assert!(
                (j - j_ref).amax() <= 1e-12 * j_scale,
                "case {case}, beta {b}: J mismatch {}",
                (j - j_ref).amax()
            );
            assert!(
                (k - k_ref).amax() <= 1e-12 * k_scale,
                "case {case}, beta {b}: K mismatch {}",
                (k - k_ref).amax()
            );
            assert_eq!(j, j.transpose(), "J symmetry, case {case}");
            assert_eq!(k, k.transpose(), "K symmetry, case {case}");
        }
    }
}

#[test]
fn variance_core_equals_the_information_at_beta_zero() {
    // The columns of the Jacobian sum to zero, so the rank-one correction in
    // K_0 vanishes identically and K_0 coincides with J_0.
    let design = default_solar_design();
    let j = j_matrix(&design.theta0, &design.plan, &design.grid, beta(0.0)).unwrap();
    let k = k_matrix(&design.theta0, &design.plan, &design.grid, beta(0.0)).unwrap();
    assert!(
        (j - k).amax() <= 1e-14 * (1.0 + j.amax()),
        "K_0 must equal J_0, difference {}",
        (j - k).amax()
    );

    let mut rng = ChaCha8Rng::seed_from_u64(53);
    for case in 0..30 {
        let (plan, grid, theta) = common::random_design(&mut rng);
        let j = j_matrix(&theta, &plan, &grid, beta(0.0)).unwrap();
        let k = k_matrix(&theta, &plan, &grid, beta(0.0)).unwrap();
        assert!(
            (j - k).amax() <= 1e-12 * (1.0 + j.amax()),
            "case {case}: K_0 vs J_0 difference {}",
            (j - k).amax()
        );
    }
}

#[test]
fn information_at_beta_zero_matches_a_finite_difference_hessian() {
    // The Hessian in theta of KL(pi(theta0) || pi(theta)) at theta0 is the
    // per-unit Fisher information, which is J_0.
    let design = default_solar_design();
    let pi0 = cell_probabilities(&design.theta0, &design.plan, &design.grid).unwrap();
    let f = |z: &[f64; 3]| -> f64 {
        let t = ModelParams::new(z[0], z[1], z[2]).unwrap();
        let pi = cell_probabilities(&t, &design.plan, &design.grid).unwrap();
        kl_loss(pi0.as_slice(), &pi).unwrap()
    };
    let theta = design.theta0.as_array();
    let h = 1e-4;
    let j = j_matrix(&design.theta0, &design.plan, &design.grid, beta(0.0)).unwrap();
    for a in 0..3 {
        for b in 0..3 {
            let mut pp = theta;
            let mut pm = theta;
            let mut mp = theta;
            let mut mm = theta;
            pp[a] += h;
            pp[b] += h;
            pm[a] += h;
            pm[b] -= h;
            mp[a] -= h;
            mp[b] += h;
            mm[a] -= h;
            mm[b] -= h;
            let fd = (f(&pp) - f(&pm) - f(&mp) + f(&mm)) / (4.0 * h * h);
            assert_close(
                j[(a, b)],
                fd,
                1e-4 * (1.0 + j[(a, b)].abs()),
                &format!("Fisher information entry ({a}, {b})"),
            );
        }
    }
}

#[test]
fn information_matrices_are_positive_semidefinite() {
    let mut rng = ChaCha8Rng::seed_from_u64(54);
    for case in 0..30 {
        let (plan, grid, theta) = common::random_design(&mut rng);
        for b in [0.0, 0.4, 0.8] {
            let j = j_matrix(&theta, &plan, &grid, beta(b)).unwrap();
            let k = k_matrix(&theta, &plan, &grid, beta(b)).unwrap();
            let j_floor = -1e-12 * (1.0 + j.amax());
            let k_floor = -1e-12 * (1.0 + k.amax());
            for (name, m, floor) in [("J", j, j_floor), ("K", k, k_floor)] {
                let eigen = m.symmetric_eigenvalues();
                assert!(
                    eigen.iter().all(|&e| e >= floor),
                    "case {case}, beta {b}: {name} has eigenvalues {eigen:?}"
                );
            }
        }
    }
}

#[test]
fn failure_counts_validate_and_summarize() {
    assert!(FailureCounts::new(vec![]).is_err());
    assert!(FailureCounts::new(vec![0, 0, 0]).is_err());
    let counts = FailureCounts::new(vec![3, 0, 7]).unwrap();
    assert_eq!(counts.total(), 10);
    assert_eq!(counts.len(), 3);
    assert!(!counts.is_empty());
    let p = counts.frequencies();
    assert_eq!(p, vec![0.3, 0.0, 0.7]);
    assert_close(p.iter().sum::<f64>(), 1.0, 1e-15, "frequencies sum");
}
