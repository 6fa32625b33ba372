use std::sync::Arc;

use erprior::estimation::{
    em_npmle, objective_and_gradient, objective_terms, solve_mple, solve_mple_from,
};
use erprior::grid::tv_distance;
use erprior::information::jeffreys_prior;
use erprior::models::{benchmark_grid, sample_dataset, true_prior_bimodal, GaussianLocationModel};
use erprior::{Dataset, Grid, GridDensity, PenaltySpec, SolverConfig, Termination};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn setup(seed: u64) -> (GaussianLocationModel, Arc<Grid>, Dataset) {
    let model = GaussianLocationModel::new(0.3).unwrap();
    let grid = benchmark_grid();
    let data = sample_dataset(&model, &true_prior_bimodal(grid.clone()), 100, seed).unwrap();
    (model, grid, data)
}

fn random_interior(grid: &Arc<Grid>, rng: &mut ChaCha8Rng) -> GridDensity {
    let values = (0..grid.len())
        .map(|_| rng.random_range(0.1..2.0))
        .collect();
    GridDensity::normalized(grid.clone(), values).unwrap()
}

#[test]
fn objective_is_concave_along_segments() {
    let (model, grid, data) = setup(11);
    let penalties = [
        PenaltySpec::None,
        PenaltySpec::NegEntropy,
        PenaltySpec::missing_info_jeffreys(&model, grid.clone()).unwrap(),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for penalty in &penalties {
        for _ in 0..20 {
            let p = random_interior(&grid, &mut rng);
            let q = random_interior(&grid, &mut rng);
            let f = |t: f64| {
                let x = p.mix(&q, 1.0 - t).unwrap();
                objective_and_gradient(&model, &data, &x, penalty, 1.0)
                    .unwrap()
                    .0
            };
            let h = 0.1;
            for k in 1..10 {
                let t = k as f64 * h;
                let second = f(t - h) - 2.0 * f(t) + f(t + h);
                assert!(
                    second <= 1e-8,
                    "{:?}: second difference {second}",
                    penalty.kind()
                );
            }
        }
    }
}

#[test]
fn two_starts_reach_the_same_optimum() {
    let (model, grid, data) = setup(1);
    let penalty = PenaltySpec::missing_info_jeffreys(&model, grid.clone()).unwrap();
    let cfg = SolverConfig {
        tol: 1e-12,
        max_iters: 50_000,
        ..Default::default()
    };
    let wavy = GridDensity::normalized(
        grid.clone(),
        grid.nodes()
            .iter()
            .map(|t| 1.0 + 0.8 * (3.0 * t).sin())
            .collect(),
    )
    .unwrap();
    for gamma in [1.0, 10.0] {
        let a = solve_mple(&model, &data, grid.clone(), &penalty, gamma, &cfg).unwrap();
        let b = solve_mple_from(&model, &data, &penalty, gamma, &cfg, &wavy).unwrap();
        assert!(a.converged && b.converged);
        assert!(tv_distance(&a.prior, &b.prior).unwrap() <= 1e-3);
    }
}

#[test]
fn em_never_decreases_log_likelihood() {
    let (model, grid, data) = setup(2);
    let r = em_npmle(&model, &data, grid, &SolverConfig::default()).unwrap();
    for w in r.objective_trace.windows(2) {
        assert!(w[1] >= w[0] - 1e-10, "{} -> {}", w[0], w[1]);
    }
}

#[test]
fn missing_info_estimate_is_strictly_positive() {
    let (model, grid, data) = setup(3);
    let penalty = PenaltySpec::missing_info_jeffreys(&model, grid.clone()).unwrap();
    for gamma in [0.1, 1.0, 10.0] {
        let r = solve_mple(
            &model,
            &data,
            grid.clone(),
            &penalty,
            gamma,
            &SolverConfig::default(),
        )
        .unwrap();
        assert!(r.prior.min_value() > 0.0);
    }
}

#[test]
fn solver_ends_above_its_start() {
    let (model, grid, data) = setup(4);
    let penalty = PenaltySpec::missing_info_jeffreys(&model, grid.clone()).unwrap();
    let jeffreys = jeffreys_prior(&model, grid.clone()).unwrap();
    for start in [GridDensity::uniform(grid.clone()), jeffreys] {
        let r = solve_mple_from(
            &model,
            &data,
            &penalty,
            1.0,
            &SolverConfig::default(),
            &start,
        )
        .unwrap();
        let at_start = objective_and_gradient(&model, &data, &start, &penalty, 1.0)
            .unwrap()
            .0;
        assert!(r.objective() >= at_start);
        assert_eq!(r.termination, Termination::Converged);
    }
}

#[test]
fn duplicated_data_weights_the_likelihood_more() {
    let (model, grid, data) = setup(6);
    let mut twice = data.points().to_vec();
    twice.extend_from_slice(data.points());
    let twice = Dataset::new(twice).unwrap();
    let penalty = PenaltySpec::missing_info_jeffreys(&model, grid.clone()).unwrap();
    let cfg = SolverConfig {
        tol: 1e-12,
        max_iters: 50_000,
        ..Default::default()
    };
    let single = solve_mple(&model, &data, grid.clone(), &penalty, 3.0, &cfg).unwrap();
    let double = solve_mple(&model, &twice, grid, &penalty, 3.0, &cfg).unwrap();
    // both fits evaluated against the original data
    let (l1, phi1) = objective_terms(&model, &data, &single.prior, &penalty).unwrap();
    let (l2, phi2) = objective_terms(&model, &data, &double.prior, &penalty).unwrap();
    assert!(l2 > l1, "log L {l1} -> {l2}");
    assert!(phi2 > phi1, "penalty {phi1} -> {phi2}");
}

#[test]
fn unpenalized_solve_agrees_with_em() {
    let model = GaussianLocationModel::new(1.0).unwrap();
    let grid = Arc::new(Grid::uniform(0.0, 1.0, 2).unwrap());
    let data = Dataset::new(vec![0.8]).unwrap();
    let cfg = SolverConfig::default();
    let em = em_npmle(&model, &data, grid.clone(), &cfg).unwrap();
    let mple = solve_mple(&model, &data, grid, &PenaltySpec::None, 0.0, &cfg).unwrap();
    assert!(tv_distance(&em.prior, &mple.prior).unwrap() < 1e-6);
}
