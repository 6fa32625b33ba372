//! Shared fixtures for the benchmarks.

use std::sync::Arc;

use erprior::models::{benchmark_grid, sample_dataset, true_prior_bimodal, GaussianLocationModel};
use erprior::{Dataset, Grid, PenaltySpec};

/// The bimodal benchmark problem: model, 200-node grid on [0, 4], 100
/// measurements and the missing-information penalty.
pub struct Problem {
    pub model: GaussianLocationModel,
    pub grid: Arc<Grid>,
    pub data: Dataset,
    pub penalty: PenaltySpec,
}

pub fn problem(seed: u64) -> Problem {
    let model = GaussianLocationModel::new(0.3).expect("positive sigma");
    let grid = benchmark_grid();
    let data =
        sample_dataset(&model, &true_prior_bimodal(grid.clone()), 100, seed).expect("valid sample");
    let penalty =
        PenaltySpec::missing_info_jeffreys(&model, grid.clone()).expect("Jeffreys prior exists");
    Problem {
        model,
        grid,
        data,
        penalty,
    }
}
