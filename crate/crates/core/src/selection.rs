//! Smoothing-parameter choice by leave-one-out likelihood cross-validation.

use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::estimation::{solve_with_matrix, LikelihoodMatrix, SolverConfig};
use crate::grid::{Grid, GridDensity};
use crate::information::PenaltySpec;
use crate::models::{Dataset, LikelihoodModel};

#[derive(Debug, Clone, PartialEq)]
pub struct CrossValReport {
    pub gammas: Vec<f64>,
    /// `Σ_m log p(x_m | π̂_{−m}(γ))` per candidate.
    pub scores: Vec<f64>,
    pub chosen: f64,
    /// `per_fold[m][k]`: held-out log predictive density of `x_m` under `gammas[k]`.
    pub per_fold: Option<Vec<Vec<f64>>>,
}

impl CrossValReport {
    pub fn chosen_index(&self) -> usize {
        self.gammas
            .iter()
            .position(|&g| g == self.chosen)
            .expect("chosen is one of the candidates")
    }
}

/// `n` log-spaced values on `[lo, hi]`.
pub fn log_spaced(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.log10(), hi.log10());
    (0..n)
        .map(|k| 10f64.powf(a + (b - a) * k as f64 / (n - 1) as f64))
        .collect()
}

/// Nine log-spaced candidates on `[10⁻², 10²]`.
pub fn default_gammas() -> Vec<f64> {
    log_spaced(1e-2, 1e2, 9)
}

/// Index of the best score; exact ties go to the largest γ.
pub fn select_gamma(gammas: &[f64], scores: &[f64]) -> usize {
    let mut best = 0;
    for k in 1..gammas.len() {
        let better =
            scores[k] > scores[best] || (scores[k] == scores[best] && gammas[k] > gammas[best]);
        if better {
            best = k;
        }
    }
    best
}

/// Refits the estimator on every `X_{−m}` for every candidate γ and scores
/// the held-out point. Each fold starts from the uniform density.
pub fn loo_cross_validate(
    model: &dyn LikelihoodModel,
    data: &Dataset,
    grid: Arc<Grid>,
    penalty: &PenaltySpec,
    gammas: &[f64],
    config: &SolverConfig,
) -> Result<CrossValReport> {
    if data.len() < 2 {
        return Err(Error::param(
            "data",
            "cross-validation needs at least 2 points",
        ));
    }
    if gammas.is_empty() {
        return Err(Error::param("gammas", "no candidates given"));
    }
    if let Some(g) = gammas.iter().find(|g| !(**g >= 0.0 && g.is_finite())) {
        return Err(Error::param(
            "gammas",
            format!("{g} is not a finite value >= 0"),
        ));
    }
    config.validate()?;
    let matrix = LikelihoodMatrix::new(model, data, &grid)?;
    let start = GridDensity::uniform(grid);

    let per_fold: Vec<Vec<f64>> = (0..data.len())
        .into_par_iter()
        .map(|m| {
            let fold = matrix.without_row(m);
            gammas
                .iter()
                .map(|&gamma| {
                    let fit = solve_with_matrix(&fold, penalty, gamma, config, &start)?;
                    let score = matrix.log_marginal(m, &fit.prior.masses());
                    if score == f64::NEG_INFINITY {
                        return Err(Error::DegenerateLikelihood { index: m });
                    }
                    Ok(score)
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;

    let scores: Vec<f64> = (0..gammas.len())
        .map(|k| per_fold.iter().map(|row| row[k]).sum())
        .collect();
    let chosen = gammas[select_gamma(gammas, &scores)];
    Ok(CrossValReport {
        gammas: gammas.to_vec(),
        scores,
        chosen,
        per_fold: Some(per_fold),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::GaussianLocationModel;

    #[test]
    fn log_spacing() {
        let g = default_gammas();
        assert_eq!(g.len(), 9);
        assert!((g[0] - 0.01).abs() < 1e-15 && (g[8] - 100.0).abs() < 1e-12);
        assert!((g[4] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ties_go_to_largest_gamma() {
        assert_eq!(select_gamma(&[0.1, 1.0, 10.0], &[-3.0, -2.0, -2.0]), 2);
        assert_eq!(select_gamma(&[10.0, 1.0, 0.1], &[-2.0, -2.0, -5.0]), 0);
        assert_eq!(select_gamma(&[0.1, 1.0, 10.0], &[-1.0, -2.0, -2.0]), 0);
    }

    #[test]
    fn identical_points_give_identical_folds() {
        let model = GaussianLocationModel::new(0.3).unwrap();
        let g = Arc::new(Grid::uniform(0.0, 4.0, 50).unwrap());
        let data = Dataset::new(vec![1.5, 1.5]).unwrap();
        let penalty = PenaltySpec::missing_info(GridDensity::uniform(g.clone())).unwrap();
        let report = loo_cross_validate(
            &model,
            &data,
            g,
            &penalty,
            &[0.1, 1.0],
            &SolverConfig::default(),
        )
        .unwrap();
        let rows = report.per_fold.unwrap();
        assert_eq!(rows[0], rows[1]);
    }

    #[test]
    fn singleton_candidate_is_chosen() {
        let model = GaussianLocationModel::new(0.3).unwrap();
        let g = Arc::new(Grid::uniform(0.0, 4.0, 50).unwrap());
        let data = Dataset::new(vec![0.5, 1.5, 3.0]).unwrap();
        let report = loo_cross_validate(
            &model,
            &data,
            g,
            &PenaltySpec::Tikhonov,
            &[3.7],
            &SolverConfig::default(),
        )
        .unwrap();
        assert_eq!(report.chosen, 3.7);
        assert_eq!(report.scores.len(), 1);
    }

    #[test]
    fn rejects_bad_input() {
        let model = GaussianLocationModel::new(0.3).unwrap();
        let g = Arc::new(Grid::uniform(0.0, 4.0, 20).unwrap());
        let one = Dataset::new(vec![1.0]).unwrap();
        let two = Dataset::new(vec![1.0, 2.0]).unwrap();
        let cfg = SolverConfig::default();
        assert!(loo_cross_validate(
            &model,
            &one,
            g.clone(),
            &PenaltySpec::Tikhonov,
            &[1.0],
            &cfg
        )
        .is_err());
        assert!(
            loo_cross_validate(&model, &two, g.clone(), &PenaltySpec::Tikhonov, &[], &cfg).is_err()
        );
        assert!(
            loo_cross_validate(&model, &two, g, &PenaltySpec::Tikhonov, &[-1.0], &cfg).is_err()
        );
    }
}
