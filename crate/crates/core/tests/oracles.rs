//! Checks against independent reference computations: grid search for the
//! imputation step, exhaustive assignment search, a QR ridge solve and
//! finite differences.

use aggglm::{
    alternate_fit, alternate_fit_from, evaluate_error, fit_glm, fold_assignment, glm_gradient,
    glm_objective, granularity_sweep, impute_sorted, impute_targets, permutation_test,
    simulate_glm, summarize_targets, AggregateSummary, Block, DesignMatrix, FamilyKind, FitOptions,
    GlmFamily, GlmOptions, OrderStatisticConstraint, SimulationConfig, SummaryScheme, SweepConfig,
};
use approx::assert_relative_eq;
use nalgebra::{DMatrix, DVector};
use ndarray::{array, Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn c(rank: usize, value: f64) -> OrderStatisticConstraint<f64> {
    OrderStatisticConstraint { rank, value }
}

/// Minimizes `sum_j D(z_j || gamma_j)` over nondecreasing `z` on a grid with
/// the constrained positions pinned, by dynamic programming over the chain.
fn grid_minimizer(
    gamma: &[f64],
    cons: &[OrderStatisticConstraint<f64>],
    family: &GlmFamily<f64>,
    step: f64,
) -> (Vec<f64>, f64) {
    let lo_all = gamma
        .iter()
        .chain(cons.iter().map(|c| &c.value))
        .fold(f64::INFINITY, |a, &b| a.min(b));
    let hi_all = gamma
        .iter()
        .chain(cons.iter().map(|c| &c.value))
        .fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let lo = (lo_all - 1.0).max(family.domain_min());
    let hi = (hi_all + 1.0).min(family.domain_max());
    let mut grid: Vec<f64> = (0..)
        .map(|k| lo + step * k as f64)
        .take_while(|&v| v <= hi)
        .collect();
    grid.extend(cons.iter().map(|c| c.value));
    grid.sort_by(|a, b| a.total_cmp(b));
    grid.dedup();

    let m = gamma.len();
    let pinned = |j: usize| cons.iter().find(|c| c.rank == j + 1).map(|c| c.value);
    let inf = f64::INFINITY;
    let mut cost = vec![vec![inf; grid.len()]; m];
    let mut arg = vec![vec![0usize; grid.len()]; m];
    for j in 0..m {
        let (mut best, mut best_k) = (inf, 0);
        for (k, &v) in grid.iter().enumerate() {
            if j > 0 && cost[j - 1][k] < best {
                best = cost[j - 1][k];
                best_k = k;
            }
            let prev = if j == 0 { 0.0 } else { best };
            let allowed = pinned(j).is_none_or(|s| s == v);
            if allowed && prev < inf {
                cost[j][k] = prev + family.divergence(v, gamma[j]);
                arg[j][k] = best_k;
            }
        }
    }
    let (mut k, mut total) = (0, inf);
    for (i, &v) in cost[m - 1].iter().enumerate() {
        if v < total {
            total = v;
            k = i;
        }
    }
    let mut z = vec![0.0; m];
    for j in (0..m).rev() {
        z[j] = grid[k];
        k = arg[j][k];
    }
    (z, total)
}

/// Coordinate refinement of a feasible nondecreasing vector by ternary
/// search of each free entry between its neighbours.
fn refine(
    z: &mut [f64],
    gamma: &[f64],
    cons: &[OrderStatisticConstraint<f64>],
    family: &GlmFamily<f64>,
) {
    let m = z.len();
    for _ in 0..50 {
        for j in 0..m {
            if cons.iter().any(|c| c.rank == j + 1) {
                continue;
            }
            let mut a = if j == 0 { z[0] - 10.0 } else { z[j - 1] }.max(family.domain_min());
            let mut b = if j + 1 == m {
                z[m - 1] + 10.0
            } else {
                z[j + 1]
            }
            .min(family.domain_max());
            for _ in 0..200 {
                let m1 = a + (b - a) / 3.0;
                let m2 = b - (b - a) / 3.0;
                if family.divergence(m1, gamma[j]) <= family.divergence(m2, gamma[j]) {
                    b = m2;
                } else {
                    a = m1;
                }
            }
            z[j] = 0.5 * (a + b);
        }
    }
}

fn objective(z: &[f64], gamma: &[f64], family: &GlmFamily<f64>) -> f64 {
    family.bregman_divergence(z, gamma).unwrap()
}

#[test]
fn impute_examples_match_grid_search() {
    for family in [GlmFamily::gaussian(), GlmFamily::poisson()] {
        for (gamma, cons, expected) in [
            (
                vec![1.0, 2.0, 3.0, 4.0, 5.0],
                vec![c(3, 2.5)],
                vec![1.0, 2.0, 2.5, 4.0, 5.0],
            ),
            (vec![5.0, 6.0, 7.0], vec![c(3, 4.0)], vec![4.0, 4.0, 4.0]),
        ] {
            let got = impute_sorted(&gamma, &cons).unwrap();
            assert_eq!(got, expected);
            let (grid_z, grid_obj) = grid_minimizer(&gamma, &cons, &family, 0.01);
            for (g, e) in grid_z.iter().zip(&expected) {
                assert!((g - e).abs() <= 0.005 + 1e-12, "{grid_z:?} vs {expected:?}");
            }
            assert!(objective(&got, &gamma, &family) <= grid_obj + 1e-12);
        }
    }
}

#[test]
fn random_imputations_match_refined_grid_search() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for kind in FamilyKind::ALL {
        let family = GlmFamily::<f64>::new(kind);
        for _ in 0..30 {
            let m = rng.random_range(1..=5);
            let mut gamma: Vec<f64> = (0..m)
                .map(|_| match kind {
                    FamilyKind::Gaussian => rng.random_range(-3.0..3.0),
                    FamilyKind::Poisson => rng.random_range(0.05..4.0),
                    FamilyKind::Bernoulli => rng.random_range(0.02..0.98),
                })
                .collect();
            gamma.sort_by(|a, b| a.total_cmp(b));
            let h = rng.random_range(1..=m.min(3));
            let mut ranks: Vec<usize> = rand::seq::index::sample(&mut rng, m, h)
                .into_iter()
                .map(|r| r + 1)
                .collect();
            ranks.sort_unstable();
            let mut values: Vec<f64> = (0..h)
                .map(|_| match kind {
                    FamilyKind::Gaussian => rng.random_range(-3.0..3.0),
                    FamilyKind::Poisson => rng.random_range(0.0..4.0),
                    FamilyKind::Bernoulli => rng.random_range(0.0..1.0),
                })
                .collect();
            values.sort_by(|a, b| a.total_cmp(b));
            let cons: Vec<_> = ranks.iter().zip(&values).map(|(&r, &v)| c(r, v)).collect();

            let got = impute_sorted(&gamma, &cons).unwrap();
            let (mut z, _) = grid_minimizer(&gamma, &cons, &family, 1e-2);
            refine(&mut z, &gamma, &cons, &family);
            let ours = objective(&got, &gamma, &family);
            let reference = objective(&z, &gamma, &family);
            assert!(ours <= reference + 1e-9, "{kind:?}: {ours} > {reference}");
            assert!(
                (ours - reference).abs() <= 1e-6,
                "{kind:?}: {ours} vs {reference}"
            );
        }
    }
}

#[test]
fn impute_targets_blockwise_matches_per_block_grid_search() {
    let gamma = [3.0, 1.0, 2.0, 10.0, 7.0];
    let summary = AggregateSummary {
        blocks: vec![
            Block {
                rows: vec![0, 1, 2],
                constraints: vec![c(2, 2.5)],
            },
            Block {
                rows: vec![3, 4],
                constraints: vec![c(1, 8.0)],
            },
        ],
    };
    let z = impute_targets(&gamma, &summary).unwrap();
    assert_eq!(z, vec![3.0, 1.0, 2.5, 10.0, 8.0]);
    let family = GlmFamily::gaussian();
    let (g1, _) = grid_minimizer(&[1.0, 2.0, 3.0], &[c(2, 2.5)], &family, 0.01);
    assert!((g1[0] - 1.0).abs() < 0.006 && g1[1] == 2.5 && (g1[2] - 3.0).abs() < 0.006);
    let (g2, _) = grid_minimizer(&[7.0, 10.0], &[c(1, 8.0)], &family, 0.01);
    assert!(g2[0] == 8.0 && (g2[1] - 10.0).abs() < 0.006);
}

/// Exact least squares fit of `z` on `x` through the QR factorization of
/// the penalty-augmented system.
fn ridge_qr(x: &Array2<f64>, z: &[f64], lambda: f64) -> Vec<f64> {
    let (n, d) = x.dim();
    let mut a = DMatrix::<f64>::zeros(n + d, d);
    let mut b = DVector::<f64>::zeros(n + d);
    for i in 0..n {
        for j in 0..d {
            a[(i, j)] = x[[i, j]];
        }
        b[i] = z[i];
    }
    for j in 0..d {
        a[(n + j, j)] = (2.0 * lambda).sqrt();
    }
    let qr = a.qr();
    let qtb = qr.q().transpose() * b;
    let beta = qr.r().solve_upper_triangular(&qtb).unwrap();
    beta.iter().copied().collect()
}

#[test]
fn fully_constrained_three_point_problem_matches_exhaustive_search() {
    let x = DesignMatrix::from_rows(&[vec![1.0], vec![2.0], vec![3.0]]).unwrap();
    let values = [1.0, 2.0, 3.0];
    let family = GlmFamily::gaussian();
    let perms = [
        [0, 1, 2],
        [0, 2, 1],
        [1, 0, 2],
        [1, 2, 0],
        [2, 0, 1],
        [2, 1, 0],
    ];
    let (mut best, mut best_z) = (f64::INFINITY, vec![]);
    for p in perms {
        let z: Vec<f64> = p.iter().map(|&i| values[i]).collect();
        let beta = ridge_qr(&x.view().to_owned(), &z, 0.0);
        let loss: f64 = (0..3)
            .map(|i| 0.5 * (z[i] - beta[0] * (i + 1) as f64).powi(2))
            .sum();
        if loss < best {
            best = loss;
            best_z = z;
        }
    }
    let summary = AggregateSummary::single_block(3, vec![c(1, 1.0), c(2, 2.0), c(3, 3.0)]);
    let state = alternate_fit(&x, &summary, &family, &FitOptions::default()).unwrap();
    assert_eq!(state.z_hat, best_z);
    assert!(state.final_loss().unwrap() <= best + 1e-6);
    assert_relative_eq!(state.coefficients.beta[0], 1.0, epsilon = 1e-8);
}

#[test]
fn gaussian_fit_matches_qr_ridge() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for t in 0..20 {
        let (n, d) = (40, 4);
        let x = Array2::from_shape_simple_fn((n, d), || rng.random_range(-2.0..2.0));
        let z: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
        let lambda = if t % 2 == 0 {
            0.0
        } else {
            rng.random_range(0.01..3.0)
        };
        let fit = fit_glm(
            &DesignMatrix::new(x.clone()).unwrap(),
            &z,
            &GlmFamily::gaussian(),
            &GlmOptions::with_lambda(lambda),
        )
        .unwrap();
        for (a, b) in fit.coefficients.beta.iter().zip(ridge_qr(&x, &z, lambda)) {
            assert!((a - b).abs() <= 1e-8, "{a} vs {b}");
        }
    }
}

#[test]
fn gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for kind in FamilyKind::ALL {
        let family = GlmFamily::<f64>::new(kind);
        let x = DesignMatrix::new(Array2::from_shape_simple_fn((30, 3), || {
            rng.random_range(-1.0..1.0)
        }))
        .unwrap();
        let z: Vec<f64> = (0..30)
            .map(|_| match kind {
                FamilyKind::Gaussian => rng.random_range(-2.0..2.0),
                FamilyKind::Poisson => rng.random_range(0.0..4.0),
                FamilyKind::Bernoulli => rng.random_range(0.0..1.0),
            })
            .collect();
        let opts = GlmOptions::with_lambda(0.3);
        let beta: Array1<f64> = array![0.2, -0.4, 0.7];
        let g = glm_gradient(&x, &z, &family, &opts, beta.view()).unwrap();
        for j in 0..3 {
            let h = 1e-5;
            let mut up = beta.clone();
            up[j] += h;
            let mut dn = beta.clone();
            dn[j] -= h;
            let fd = (glm_objective(&x, &z, &family, &opts, up.view()).unwrap()
                - glm_objective(&x, &z, &family, &opts, dn.view()).unwrap())
                / (2.0 * h);
            assert_relative_eq!(g[j], fd, max_relative = 1e-5, epsilon = 1e-7);
        }
    }
}

fn random_instance(
    kind: FamilyKind,
    seed: u64,
    bins: usize,
) -> (DesignMatrix<f64>, Vec<f64>, AggregateSummary<f64>) {
    let sim = simulate_glm::<f64>(&SimulationConfig::new(kind, seed).with_size(120, 4)).unwrap();
    let summary = summarize_targets(&sim.z, &SummaryScheme::quantile(bins)).unwrap();
    (sim.x, sim.z, summary)
}

#[test]
fn loss_never_increases_and_iterates_stay_feasible() {
    for kind in FamilyKind::ALL {
        let family = GlmFamily::new(kind);
        for seed in 0..8 {
            let (x, _, summary) = random_instance(kind, seed, [2, 5, 10][seed as usize % 3]);
            let state = alternate_fit(&x, &summary, &family, &FitOptions::default()).unwrap();
            for w in state.loss_trajectory.windows(2) {
                assert!(
                    w[1] <= w[0] + 1e-10,
                    "{kind:?} seed {seed}: {} -> {}",
                    w[0],
                    w[1]
                );
            }
            let mut sorted = state.z_hat.clone();
            sorted.sort_by(|a, b| a.total_cmp(b));
            for cst in &summary.blocks[0].constraints {
                assert_eq!(sorted[cst.rank - 1], cst.value);
            }
        }
    }
}

#[test]
fn full_summary_reproduces_the_target_multiset() {
    for kind in FamilyKind::ALL {
        let (x, z, summary) = random_instance(kind, 3, 120);
        let state =
            alternate_fit(&x, &summary, &GlmFamily::new(kind), &FitOptions::default()).unwrap();
        let mut a = state.z_hat.clone();
        let mut b = z.clone();
        a.sort_by(|p, q| p.total_cmp(q));
        b.sort_by(|p, q| p.total_cmp(q));
        assert_eq!(a, b, "{kind:?}");
    }
}

#[test]
fn restart_from_converged_targets_is_a_fixed_point() {
    for kind in FamilyKind::ALL {
        let family = GlmFamily::new(kind);
        let (x, _, summary) = random_instance(kind, 4, 5);
        // A ridge term keeps the separable Bernoulli case at a finite optimum.
        let opts = FitOptions::with_lambda(0.1);
        let first = alternate_fit(&x, &summary, &family, &opts).unwrap();
        assert!(
            first.converged && first.glm_failures == 0,
            "{kind:?} {} {} {}",
            first.converged,
            first.glm_failures,
            first.iterations
        );
        let again = alternate_fit_from(&x, &summary, &family, &opts, first.z_hat.clone()).unwrap();
        let l0 = first.final_loss().unwrap();
        let l1 = again.loss_trajectory[0];
        assert!(
            l0 - l1 <= opts.relative_loss_tolerance * l0.max(1e-12) + 1e-10,
            "{kind:?}: {l0} -> {l1}"
        );
        let rerun = alternate_fit(&x, &summary, &family, &opts).unwrap();
        assert_eq!(first, rerun);
    }
}

#[test]
fn permutation_test_examples() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let n = 60;
    // A constant predictor fits every permutation equally well.
    let x = DesignMatrix::new(Array2::from_elem((n, 1), 1.0)).unwrap();
    let z: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
    let r = permutation_test(
        &x,
        &z,
        None,
        &GlmFamily::gaussian(),
        &FitOptions::default(),
        50,
        1,
    )
    .unwrap();
    assert_eq!(r.p_value, 1.0);

    // An exact linear response leaves no residual; permuted fits do.
    let x = DesignMatrix::new(Array2::from_shape_simple_fn((n, 3), || {
        rng.random_range(-1.0..1.0)
    }))
    .unwrap();
    let z = x
        .linear_predictor(array![1.0, -2.0, 0.5].view())
        .unwrap()
        .to_vec();
    let r = permutation_test(
        &x,
        &z,
        None,
        &GlmFamily::gaussian(),
        &FitOptions::default(),
        99,
        7,
    )
    .unwrap();
    assert!(r.observed_error < 1e-20);
    assert!(r.null_errors.iter().all(|&e| e > 1e-6));
    assert_relative_eq!(r.p_value, 0.01);
}

#[test]
fn sweep_baseline_is_independent_of_bins_and_full_bins_recover_training_multiset() {
    let sim =
        simulate_glm::<f64>(&SimulationConfig::new(FamilyKind::Gaussian, 9).with_size(100, 3))
            .unwrap();
    let family = GlmFamily::gaussian();
    let opts = FitOptions::default();
    let a = granularity_sweep(
        &sim.x,
        &sim.z,
        &family,
        &SweepConfig::new(vec![2], 4, 1),
        &opts,
    )
    .unwrap();
    let b = granularity_sweep(
        &sim.x,
        &sim.z,
        &family,
        &SweepConfig::new(vec![5, 25], 4, 1),
        &opts,
    )
    .unwrap();
    assert_eq!(a.baseline, b.baseline);

    let full = granularity_sweep(
        &sim.x,
        &sim.z,
        &family,
        &SweepConfig::new(vec![75], 4, 1),
        &opts,
    )
    .unwrap();
    let folds = fold_assignment(100, 4, 1, None).unwrap();
    for r in &full.records {
        let train: Vec<usize> = (0..100).filter(|&i| folds[i] != r.fold).collect();
        assert_eq!(train.len(), 75);
        let zt: Vec<f64> = train.iter().map(|&i| sim.z[i]).collect();
        let summary = summarize_targets(&zt, &SummaryScheme::quantile(75)).unwrap();
        let state = alternate_fit(&sim.x.select_rows(&train), &summary, &family, &opts).unwrap();
        let (mut a, mut b) = (state.z_hat.clone(), zt.clone());
        a.sort_by(|p, q| p.total_cmp(q));
        b.sort_by(|p, q| p.total_cmp(q));
        assert_eq!(a, b);
        assert_eq!(
            evaluate_error(&zt, &state.z_hat, &family).unwrap(),
            r.train_error
        );
    }
}
