//! End-to-end experiments: invariance of the estimate under `θ ↦ exp(θ)`,
//! the failure of the restriction property, and the two-point hyperprior
//! curve.
//!
//! Every experiment is a pure function of its config (seeded sampling,
//! deterministic solver), and each report can be written as a directory of
//! CSV files for external plotting.

use std::fs;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::{solve_mple, SolverConfig};
use crate::grid::{pushforward_density, tv_distance, Grid, GridDensity};
use crate::information::{information_curve_two_point, PenaltyKind, PenaltySpec};
use crate::io;
use crate::models::{
    benchmark, sample_dataset, transform_dataset, transform_model, true_prior_bimodal, Dataset,
    GaussianLocationModel, SharedModel, TwoPointModel,
};
use crate::selection::loo_cross_validate;
use crate::transform::{Diffeomorphism, Exp, Identity};

/// Parameter transformation applied in the invariance experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TransformKind {
    Identity,
    Exp,
}

impl TransformKind {
    pub fn map(self) -> Arc<dyn Diffeomorphism> {
        match self {
            TransformKind::Identity => Arc::new(Identity),
            TransformKind::Exp => Arc::new(Exp),
        }
    }
}

/// Grid used for the estimate in the transformed space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TargetGrid {
    /// Image of the original nodes under the transformation.
    Image,
    /// Fresh equidistant nodes between the images of the end points.
    Equidistant,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InvarianceConfig {
    pub seed: u64,
    pub m: usize,
    pub j: usize,
    pub gamma: f64,
    pub transform: TransformKind,
    pub target_grid: TargetGrid,
    pub solver: SolverConfig,
}

impl Default for InvarianceConfig {
    fn default() -> Self {
        InvarianceConfig {
            seed: 0,
            m: benchmark::SAMPLES,
            j: benchmark::NODES,
            gamma: 1.0,
            transform: TransformKind::Exp,
            target_grid: TargetGrid::Image,
            solver: SolverConfig::default(),
        }
    }
}

impl InvarianceConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::param(
                "gamma",
                format!("{} must be positive", self.gamma),
            ));
        }
        if self.m == 0 {
            return Err(Error::EmptyDataset);
        }
        if self.j < 2 {
            return Err(Error::InvalidCount(self.j));
        }
        self.solver.validate()
    }
}

/// One penalty's estimates in both spaces, compared on the target grid.
#[derive(Debug, Clone)]
pub struct SpaceComparison {
    pub kind: PenaltyKind,
    pub estimate: GridDensity,
    /// `φ_* π̂`, on the target grid.
    pub pushforward: GridDensity,
    /// `π̂^φ`, estimated directly in the transformed space.
    pub transformed: GridDensity,
    pub tv: f64,
}

#[derive(Debug, Clone)]
pub struct InvarianceReport {
    /// TV between `φ_* π_er` and `π_er^φ`.
    pub tv_er: f64,
    /// The same for the Tikhonov estimate.
    pub tv_l2: f64,
    pub gamma_used: f64,
    pub seed: u64,
    pub m: usize,
    pub j: usize,
    pub data: Dataset,
    pub er: SpaceComparison,
    pub l2: SpaceComparison,
}

fn benchmark_model() -> SharedModel {
    Arc::new(GaussianLocationModel::new(benchmark::SIGMA).expect("benchmark sigma is positive"))
}

/// The benchmark data set: `m` draws from the bimodal truth on a `j`-node grid.
pub fn benchmark_data(seed: u64, m: usize, j: usize) -> Result<(Arc<Grid>, Dataset)> {
    let grid = Arc::new(Grid::uniform(benchmark::LOWER, benchmark::UPPER, j)?);
    let truth = true_prior_bimodal(grid.clone());
    let data = sample_dataset(benchmark_model().as_ref(), &truth, m, seed)?;
    Ok((grid, data))
}

#[allow(clippy::too_many_arguments)]
fn compare_spaces(
    kind: PenaltyKind,
    model: &SharedModel,
    transformed_model: &SharedModel,
    data: &Dataset,
    grid: Arc<Grid>,
    phi: &dyn Diffeomorphism,
    target: TargetGrid,
    gamma: f64,
    solver: &SolverConfig,
) -> Result<SpaceComparison> {
    let penalty = PenaltySpec::for_kind(kind, model.as_ref(), grid.clone())?;
    let estimate = solve_mple(model.as_ref(), data, grid, &penalty, gamma, solver)?.prior;
    let image = pushforward_density(&estimate, phi)?.density;
    let (pushforward, target_grid) = match target {
        TargetGrid::Image => {
            let g = image.grid().clone();
            (image, g)
        }
        TargetGrid::Equidistant => {
            let (lo, hi) = image.grid().bounds();
            let g = Arc::new(Grid::uniform(lo, hi, image.grid().len())?);
            (image.resample(g.clone())?, g)
        }
    };
    let penalty_t = PenaltySpec::for_kind(kind, transformed_model.as_ref(), target_grid.clone())?;
    let transformed = solve_mple(
        transformed_model.as_ref(),
        data,
        target_grid,
        &penalty_t,
        gamma,
        solver,
    )?
    .prior;
    let tv = tv_distance(&pushforward, &transformed)?;
    Ok(SpaceComparison {
        kind,
        estimate,
        pushforward,
        transformed,
        tv,
    })
}

/// Estimates the benchmark prior with the missing-information and Tikhonov
/// penalties in the original space and in the transformed space (same γ),
/// and measures how far each transformed estimate is from the pushforward
/// of the original one.
pub fn run_invariance_experiment(config: &InvarianceConfig) -> Result<InvarianceReport> {
    config.validate()?;
    let model = benchmark_model();
    let phi = config.transform.map();
    let transformed_model = transform_model(model.clone(), phi.clone());
    let (grid, data) = benchmark_data(config.seed, config.m, config.j)?;
    let run = |kind| {
        compare_spaces(
            kind,
            &model,
            &transformed_model,
            &data,
            grid.clone(),
            phi.as_ref(),
            config.target_grid,
            config.gamma,
            &config.solver,
        )
    };
    let er = run(PenaltyKind::MissingInfo)?;
    let l2 = run(PenaltyKind::Tikhonov)?;
    Ok(InvarianceReport {
        tv_er: er.tv,
        tv_l2: l2.tv,
        gamma_used: config.gamma,
        seed: config.seed,
        m: config.m,
        j: config.j,
        data,
        er,
        l2,
    })
}

impl InvarianceReport {
    /// Writes `data.csv`, `prior_{er,l2}{,_pushforward,_transformed}.csv`
    /// and `report.csv` into `dir`, creating it if needed.
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        io::save_dataset(&dir.join("data.csv"), &self.data)?;
        for (tag, c) in [("er", &self.er), ("l2", &self.l2)] {
            io::save_density(&dir.join(format!("prior_{tag}.csv")), &c.estimate)?;
            io::save_density(
                &dir.join(format!("prior_{tag}_pushforward.csv")),
                &c.pushforward,
            )?;
            io::save_density(
                &dir.join(format!("prior_{tag}_transformed.csv")),
                &c.transformed,
            )?;
        }
        io::save_table(
            &dir.join("report.csv"),
            &["seed", "m", "j", "gamma", "tv_er", "tv_l2"],
            &[vec![
                self.seed as f64,
                self.m as f64,
                self.j as f64,
                self.gamma_used,
                self.tv_er,
                self.tv_l2,
            ]],
        )
    }
}

/// A change of variables under which the chosen smoothing parameter should
/// not move.
#[derive(Debug, Clone)]
pub enum Change {
    /// `θ ↦ φ(θ)`: model reparametrized, grid mapped through `φ`.
    Parameter(Arc<dyn Diffeomorphism>),
    /// `x ↦ ψ(x)`: data and measurement density transformed.
    Measurement(Arc<dyn Diffeomorphism>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionInvarianceReport {
    pub gammas: Vec<f64>,
    pub scores_original: Vec<f64>,
    pub scores_transformed: Vec<f64>,
    pub chosen_original: f64,
    pub chosen_transformed: f64,
}

impl SelectionInvarianceReport {
    /// Largest deviation of the score differences from their mean.
    pub fn shift_spread(&self) -> f64 {
        let diffs: Vec<f64> = self
            .scores_transformed
            .iter()
            .zip(&self.scores_original)
            .map(|(t, o)| t - o)
            .collect();
        let mean = diffs.iter().sum::<f64>() / diffs.len() as f64;
        diffs.iter().map(|d| (d - mean).abs()).fold(0.0, f64::max)
    }
}

/// Runs LOO cross-validation with the missing-information penalty on the
/// benchmark data before and after `change`.
pub fn run_selection_invariance(
    seed: u64,
    m: usize,
    j: usize,
    gammas: &[f64],
    change: &Change,
    solver: &SolverConfig,
) -> Result<SelectionInvarianceReport> {
    let model = benchmark_model();
    let (grid, data) = benchmark_data(seed, m, j)?;
    let penalty = PenaltySpec::missing_info_jeffreys(model.as_ref(), grid.clone())?;
    let original = loo_cross_validate(
        model.as_ref(),
        &data,
        grid.clone(),
        &penalty,
        gammas,
        solver,
    )?;

    let (t_model, t_data, t_grid) = match change {
        Change::Parameter(phi) => {
            let nodes = grid.nodes().iter().map(|&t| phi.forward(t)).collect();
            (
                transform_model(model.clone(), phi.clone()),
                data.clone(),
                Arc::new(Grid::from_nodes(nodes)?),
            )
        }
        Change::Measurement(psi) => {
            let (tm, td) = transform_dataset(model.clone(), psi.clone(), &data);
            (tm, td, grid.clone())
        }
    };
    let t_penalty = PenaltySpec::missing_info_jeffreys(t_model.as_ref(), t_grid.clone())?;
    let transformed = loo_cross_validate(
        t_model.as_ref(),
        &t_data,
        t_grid,
        &t_penalty,
        gammas,
        solver,
    )?;
    Ok(SelectionInvarianceReport {
        gammas: gammas.to_vec(),
        scores_original: original.scores,
        scores_transformed: transformed.scores,
        chosen_original: original.chosen,
        chosen_transformed: transformed.chosen,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RestrictionConfig {
    pub seed: u64,
    pub m: usize,
    pub gamma: f64,
    /// Measurement noise of `x | θ ∼ N(θ, σ²)`.
    pub sigma: f64,
    /// Nodes on `[0, 2]`; the `[0, 1]` grid uses the first half of them.
    pub j: usize,
    /// Keep only measurements below this value when set.
    pub data_below: Option<f64>,
    pub solver: SolverConfig,
}

impl Default for RestrictionConfig {
    fn default() -> Self {
        RestrictionConfig {
            seed: 0,
            m: 100,
            gamma: 1.0,
            sigma: 0.5,
            j: 201,
            data_below: None,
            solver: SolverConfig::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RestrictionReport {
    pub data: Dataset,
    /// Estimate on `[0, 2]`.
    pub full: GridDensity,
    /// `full` restricted to `[0, 1]` and renormalized.
    pub restricted: GridDensity,
    /// Estimate computed directly on `[0, 1]`.
    pub direct: GridDensity,
    pub tv: f64,
    pub mass_direct: f64,
    pub mass_restricted: f64,
}

/// Window whose mass is compared between the two `[0, 1]` estimates.
pub const RESTRICTION_WINDOW: (f64, f64) = (0.8, 1.0);

/// Draws data from the uniform prior on `[0, 2]` and compares the
/// `[0, 2]` estimate restricted to `[0, 1]` with the estimate fit on
/// `[0, 1]` directly. Both use the missing-information penalty and the
/// same γ.
pub fn run_restriction_experiment(config: &RestrictionConfig) -> Result<RestrictionReport> {
    if !(config.gamma > 0.0 && config.gamma.is_finite()) {
        return Err(Error::param(
            "gamma",
            format!("{} must be positive", config.gamma),
        ));
    }
    if config.j < 3 || config.j.is_multiple_of(2) {
        return Err(Error::param(
            "j",
            "must be odd and at least 3 so that 1 is a node",
        ));
    }
    config.solver.validate()?;
    let model = GaussianLocationModel::new(config.sigma)?;
    let full_grid = Arc::new(Grid::uniform(0.0, 2.0, config.j)?);
    let half_grid = Arc::new(Grid::uniform(0.0, 1.0, config.j / 2 + 1)?);
    let mut data = sample_dataset(
        &model,
        &GridDensity::uniform(full_grid.clone()),
        config.m,
        config.seed,
    )?;
    if let Some(cut) = config.data_below {
        data = data.filter(|x| x < cut);
        if data.is_empty() {
            return Err(Error::EmptyDataset);
        }
    }

    let fit = |grid: Arc<Grid>| -> Result<GridDensity> {
        let penalty = PenaltySpec::missing_info_jeffreys(&model, grid.clone())?;
        Ok(solve_mple(&model, &data, grid, &penalty, config.gamma, &config.solver)?.prior)
    };
    let full = fit(full_grid)?;
    let direct = fit(half_grid.clone())?;
    let restricted = full.restrict(0.0, 1.0)?.resample(half_grid)?;
    let (lo, hi) = RESTRICTION_WINDOW;
    Ok(RestrictionReport {
        tv: tv_distance(&restricted, &direct)?,
        mass_direct: direct.mass_between(lo, hi),
        mass_restricted: restricted.mass_between(lo, hi),
        data,
        full,
        restricted,
        direct,
    })
}

impl RestrictionReport {
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        io::save_dataset(&dir.join("data.csv"), &self.data)?;
        io::save_density(&dir.join("prior_full.csv"), &self.full)?;
        io::save_density(&dir.join("prior_restricted.csv"), &self.restricted)?;
        io::save_density(&dir.join("prior_direct.csv"), &self.direct)?;
        io::save_table(
            &dir.join("report.csv"),
            &["m", "tv", "mass_direct", "mass_restricted"],
            &[vec![
                self.data.len() as f64,
                self.tv,
                self.mass_direct,
                self.mass_restricted,
            ]],
        )
    }
}

/// Mutual information of the `N(2,1)` / `N(4,1)` two-point model along
/// `π₁ ∈ [0, 1]`, with the hyperprior `∝ exp(γ 𝓘)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoPointDemo {
    pub gamma: f64,
    pub pi1: Vec<f64>,
    pub information: Vec<f64>,
    /// `exp(γ 𝓘(π₁))` normalized to integrate to 1 over `[0, 1]`.
    pub hyperprior: Vec<f64>,
}

pub fn run_two_point_demo(resolution: usize) -> Result<TwoPointDemo> {
    let model = TwoPointModel::new([2.0, 4.0], [1.0, 1.0])?;
    let curve = information_curve_two_point(&model, resolution)?;
    let gamma = 1.0;
    let (pi1, information): (Vec<f64>, Vec<f64>) = curve.into_iter().unzip();
    let grid = Grid::uniform(0.0, 1.0, resolution)?;
    let raw: Vec<f64> = information.iter().map(|i| (gamma * i).exp()).collect();
    let z = grid.integrate(&raw)?;
    Ok(TwoPointDemo {
        gamma,
        pi1,
        information,
        hyperprior: raw.iter().map(|v| v / z).collect(),
    })
}

impl TwoPointDemo {
    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.pi1.len())
            .map(|i| vec![self.pi1[i], self.information[i], self.hyperprior[i]])
            .collect()
    }

    /// `pi1,mutual_information,hyperprior`.
    pub fn save(&self, path: &Path) -> Result<()> {
        io::save_table(
            path,
            &["pi1", "mutual_information", "hyperprior"],
            &self.rows(),
        )
    }
}

/// Interior local maxima of `p` whose prominence is at least
/// `min_prominence × max p`.
///
/// A node counts as a maximum if it is strictly above its left neighbour
/// and not below its right one, so flat tops are counted once. End nodes
/// count when they exceed their single neighbour. The prominence of a peak
/// is its height above the higher of the two lowest points separating it
/// from a taller peak on either side (or from the grid end, where there is
/// no taller peak).
pub fn local_modes(p: &GridDensity, min_prominence: f64) -> Vec<f64> {
    let v = p.values();
    let nodes = p.grid().nodes();
    let n = v.len();
    let top = v.iter().copied().fold(0.0, f64::max);
    let mut modes = Vec::new();
    for j in 0..n {
        let left = if j == 0 { f64::NEG_INFINITY } else { v[j - 1] };
        let right = if j + 1 == n {
            f64::NEG_INFINITY
        } else {
            v[j + 1]
        };
        if !(v[j] > left && v[j] >= right) {
            continue;
        }
        // a peak of equal height to the left claims the shared plateau
        let side = |range: &mut dyn Iterator<Item = usize>, ties_taller: bool| {
            let mut low = v[j];
            for k in range {
                if v[k] > v[j] || (ties_taller && v[k] == v[j]) {
                    return (low, true);
                }
                low = low.min(v[k]);
            }
            (low, false)
        };
        let (left_low, left_taller) = side(&mut (0..j).rev(), true);
        let (right_low, right_taller) = side(&mut (j + 1..n), false);
        let base = match (left_taller, right_taller) {
            (true, true) => left_low.max(right_low),
            (true, false) => left_low,
            (false, true) => right_low,
            (false, false) => left_low.min(right_low),
        };
        if v[j] - base >= min_prominence * top {
            modes.push(nodes[j]);
        }
    }
    modes
}

/// Draws benchmark data and returns the model alongside, for callers that
/// run their own fits.
pub fn benchmark_setup(seed: u64, m: usize) -> Result<(SharedModel, Arc<Grid>, Dataset)> {
    let (grid, data) = benchmark_data(seed, m, benchmark::NODES)?;
    Ok((benchmark_model(), grid, data))
}
