//! Likelihood models `p(x|θ)`, datasets, marginal likelihoods, and the
//! transformation calculus on models and data.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid, GridDensity};
use crate::transform::Diffeomorphism;

/// Half-width of the measurement quadrature window, in model scale units.
pub const SUPPORT_HALF_WIDTH: f64 = 6.0;

/// Parameters of the bimodal benchmark problem: truncated equal mixture of
/// `N(1, 0.5²)` and `N(3, 0.5²)` on `[0, 4]`, observed through `N(θ, 0.3²)`.
pub mod benchmark {
    pub const SIGMA: f64 = 0.3;
    pub const LOWER: f64 = 0.0;
    pub const UPPER: f64 = 4.0;
    pub const NODES: usize = 200;
    pub const SAMPLES: usize = 100;
    pub const MODES: [f64; 2] = [1.0, 3.0];
    pub const MODE_SD: f64 = 0.5;
}

/// A parametric family of measurement densities.
pub trait LikelihoodModel: Send + Sync + fmt::Debug {
    fn log_density(&self, x: f64, theta: f64) -> f64;

    fn sample(&self, theta: f64, rng: &mut dyn RngCore) -> f64;

    /// Measurement interval that carries all but a negligible part of
    /// `p(·|θ)` for every `θ ∈ [theta_lo, theta_hi]`.
    fn x_support(&self, theta_lo: f64, theta_hi: f64) -> (f64, f64);

    fn analytic_fisher(&self, _theta: f64) -> Option<f64> {
        None
    }

    fn density(&self, x: f64, theta: f64) -> f64 {
        self.log_density(x, theta).exp()
    }
}

pub type SharedModel = Arc<dyn LikelihoodModel>;

fn normal_log_pdf(x: f64, mean: f64, sd: f64) -> f64 {
    let z = (x - mean) / sd;
    -0.5 * z * z - sd.ln() - 0.5 * (2.0 * PI).ln()
}

/// `x | θ ∼ N(θ, σ²)`.
#[derive(Debug, Clone, Copy)]
pub struct GaussianLocationModel {
    sigma: f64,
}

impl GaussianLocationModel {
    pub fn new(sigma: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::param("sigma", format!("{sigma} must be positive")));
        }
        Ok(GaussianLocationModel { sigma })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }
}

impl LikelihoodModel for GaussianLocationModel {
    fn log_density(&self, x: f64, theta: f64) -> f64 {
        normal_log_pdf(x, theta, self.sigma)
    }

    fn sample(&self, theta: f64, rng: &mut dyn RngCore) -> f64 {
        Normal::new(theta, self.sigma)
            .expect("sigma validated at construction")
            .sample(rng)
    }

    fn x_support(&self, theta_lo: f64, theta_hi: f64) -> (f64, f64) {
        let pad = SUPPORT_HALF_WIDTH * self.sigma;
        (theta_lo - pad, theta_hi + pad)
    }

    fn analytic_fisher(&self, _theta: f64) -> Option<f64> {
        Some(1.0 / (self.sigma * self.sigma))
    }
}

/// Two-point parameter space `{θ₁, θ₂}` with Gaussian measurement densities.
///
/// The labels are the nodes `0` and `1` of [`TwoPointModel::grid`]; any
/// `θ < ½` selects the first component.
#[derive(Debug, Clone, Copy)]
pub struct TwoPointModel {
    means: [f64; 2],
    sds: [f64; 2],
}

impl TwoPointModel {
    pub const LABELS: [f64; 2] = [0.0, 1.0];

    pub fn new(means: [f64; 2], sds: [f64; 2]) -> Result<Self> {
        if means.iter().any(|m| !m.is_finite()) {
            return Err(Error::param("means", "must be finite"));
        }
        if sds.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(Error::param("sds", "must be positive"));
        }
        Ok(TwoPointModel { means, sds })
    }

    pub fn means(&self) -> [f64; 2] {
        self.means
    }

    pub fn sds(&self) -> [f64; 2] {
        self.sds
    }

    fn component(theta: f64) -> usize {
        usize::from(theta >= 0.5)
    }

    /// The two-node grid carrying the labels.
    pub fn grid(&self) -> Arc<Grid> {
        Arc::new(Grid::from_nodes(Self::LABELS.to_vec()).expect("labels are increasing"))
    }

    /// Prior with `P(θ₁) = pi1`.
    pub fn prior(&self, pi1: f64) -> Result<GridDensity> {
        if !(0.0..=1.0).contains(&pi1) {
            return Err(Error::param("pi1", format!("{pi1} is outside [0, 1]")));
        }
        GridDensity::from_masses(self.grid(), &[pi1, 1.0 - pi1])
    }
}

impl LikelihoodModel for TwoPointModel {
    fn log_density(&self, x: f64, theta: f64) -> f64 {
        let k = Self::component(theta);
        normal_log_pdf(x, self.means[k], self.sds[k])
    }

    fn sample(&self, theta: f64, rng: &mut dyn RngCore) -> f64 {
        let k = Self::component(theta);
        Normal::new(self.means[k], self.sds[k])
            .expect("validated at construction")
            .sample(rng)
    }

    fn x_support(&self, _theta_lo: f64, _theta_hi: f64) -> (f64, f64) {
        let lo = (0..2)
            .map(|k| self.means[k] - SUPPORT_HALF_WIDTH * self.sds[k])
            .fold(f64::INFINITY, f64::min);
        let hi = (0..2)
            .map(|k| self.means[k] + SUPPORT_HALF_WIDTH * self.sds[k])
            .fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    }
}

/// Model reparametrized by `θ̃ = φ(θ)`: `p̃(x|θ̃) = p(x|φ⁻¹(θ̃))`.
#[derive(Debug, Clone)]
pub struct Reparametrized {
    inner: SharedModel,
    phi: Arc<dyn Diffeomorphism>,
}

impl LikelihoodModel for Reparametrized {
    fn log_density(&self, x: f64, theta: f64) -> f64 {
        self.inner.log_density(x, self.phi.inverse(theta))
    }

    fn sample(&self, theta: f64, rng: &mut dyn RngCore) -> f64 {
        self.inner.sample(self.phi.inverse(theta), rng)
    }

    fn x_support(&self, theta_lo: f64, theta_hi: f64) -> (f64, f64) {
        self.inner
            .x_support(self.phi.inverse(theta_lo), self.phi.inverse(theta_hi))
    }
}

/// Model for measurements `x̃ = ψ(x)`; the density carries `(ψ⁻¹)′(x̃)`.
#[derive(Debug, Clone)]
pub struct MeasurementTransformed {
    inner: SharedModel,
    psi: Arc<dyn Diffeomorphism>,
}

impl LikelihoodModel for MeasurementTransformed {
    fn log_density(&self, x: f64, theta: f64) -> f64 {
        self.inner.log_density(self.psi.inverse(x), theta) + self.psi.inverse_derivative(x).ln()
    }

    fn sample(&self, theta: f64, rng: &mut dyn RngCore) -> f64 {
        self.psi.forward(self.inner.sample(theta, rng))
    }

    fn x_support(&self, theta_lo: f64, theta_hi: f64) -> (f64, f64) {
        let (lo, hi) = self.inner.x_support(theta_lo, theta_hi);
        (self.psi.forward(lo), self.psi.forward(hi))
    }

    fn analytic_fisher(&self, theta: f64) -> Option<f64> {
        self.inner.analytic_fisher(theta)
    }
}

/// Reparametrizes the parameter. Any analytic Fisher information is
/// dropped; it is recomputed numerically downstream.
pub fn transform_model(model: SharedModel, phi: Arc<dyn Diffeomorphism>) -> SharedModel {
    Arc::new(Reparametrized { inner: model, phi })
}

/// Maps measurements through `ψ` and returns the matching model.
pub fn transform_dataset(
    model: SharedModel,
    psi: Arc<dyn Diffeomorphism>,
    data: &Dataset,
) -> (SharedModel, Dataset) {
    let points = data.points().iter().map(|&x| psi.forward(x)).collect();
    let transformed = Arc::new(MeasurementTransformed { inner: model, psi });
    (transformed, Dataset { points })
}

/// Serializable model description, as used in config files.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "kebab-case")]
pub enum ModelSpec {
    GaussLocation { sigma: f64 },
    TwoPoint { means: [f64; 2], sds: [f64; 2] },
}

impl ModelSpec {
    pub fn build(&self) -> Result<SharedModel> {
        Ok(match *self {
            ModelSpec::GaussLocation { sigma } => Arc::new(GaussianLocationModel::new(sigma)?),
            ModelSpec::TwoPoint { means, sds } => Arc::new(TwoPointModel::new(means, sds)?),
        })
    }
}

/// Measurements `x_1, …, x_M`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    points: Vec<f64>,
}

impl Dataset {
    pub fn new(points: Vec<f64>) -> Result<Self> {
        if let Some(index) = points.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFiniteMeasurement { index });
        }
        Ok(Dataset { points })
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// The dataset with observation `index` left out.
    pub fn without(&self, index: usize) -> Dataset {
        let points = self
            .points
            .iter()
            .enumerate()
            .filter(|(m, _)| *m != index)
            .map(|(_, x)| *x)
            .collect();
        Dataset { points }
    }

    pub fn filter(&self, keep: impl Fn(f64) -> bool) -> Dataset {
        Dataset {
            points: self.points.iter().copied().filter(|&x| keep(x)).collect(),
        }
    }

    pub fn mean(&self) -> f64 {
        self.points.iter().sum::<f64>() / self.points.len() as f64
    }

    pub(crate) fn ensure_nonempty(&self) -> Result<()> {
        if self.points.is_empty() {
            Err(Error::EmptyDataset)
        } else {
            Ok(())
        }
    }
}

/// Source of parameter draws for synthetic data.
pub trait PriorSampler {
    fn sample_theta(&self, rng: &mut dyn RngCore) -> f64;
}

/// Degenerate prior at a single parameter value.
#[derive(Debug, Clone, Copy)]
pub struct PointMass(pub f64);

impl PriorSampler for PointMass {
    fn sample_theta(&self, _rng: &mut dyn RngCore) -> f64 {
        self.0
    }
}

/// Inverse-CDF draw with the CDF interpolated linearly between nodes; cell
/// masses are the trapezoid masses of the density.
impl PriorSampler for GridDensity {
    fn sample_theta(&self, rng: &mut dyn RngCore) -> f64 {
        let nodes = self.grid().nodes();
        let values = self.values();
        let cells: Vec<f64> = (0..nodes.len() - 1)
            .map(|k| 0.5 * (values[k] + values[k + 1]) * (nodes[k + 1] - nodes[k]))
            .collect();
        let total: f64 = cells.iter().sum();
        let u: f64 = rng.random::<f64>() * total;
        let mut acc = 0.0;
        for (k, &c) in cells.iter().enumerate() {
            if c > 0.0 && u < acc + c {
                let frac = (u - acc) / c;
                return nodes[k] + frac * (nodes[k + 1] - nodes[k]);
            }
            acc += c;
        }
        // u landed on the top edge through rounding
        let last = cells.iter().rposition(|&c| c > 0.0).unwrap_or(0);
        nodes[last + 1]
    }
}

/// Draws `θ_m ∼ prior`, `x_m ∼ p(·|θ_m)` for `m = 1..M`, deterministically
/// from `seed`.
pub fn sample_dataset(
    model: &dyn LikelihoodModel,
    prior: &dyn PriorSampler,
    m: usize,
    seed: u64,
) -> Result<Dataset> {
    if m == 0 {
        return Err(Error::param("M", "at least one measurement is required"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points = (0..m)
        .map(|_| {
            let theta = prior.sample_theta(&mut rng);
            model.sample(theta, &mut rng)
        })
        .collect();
    Dataset::new(points)
}

/// `log p(x|π)` evaluated with log-sum-exp over the prior's node masses.
pub fn log_marginal_density(model: &dyn LikelihoodModel, prior: &GridDensity, x: f64) -> f64 {
    let masses = prior.masses();
    let terms: Vec<f64> = prior
        .grid()
        .nodes()
        .iter()
        .zip(&masses)
        .filter(|(_, m)| **m > 0.0)
        .map(|(&t, m)| model.log_density(x, t) + m.ln())
        .collect();
    log_sum_exp(&terms)
}

/// `p(x|π) = Σ_j p(x|θ_j) w_j Δ_j`.
pub fn marginal_density(model: &dyn LikelihoodModel, prior: &GridDensity, x: f64) -> f64 {
    prior
        .grid()
        .nodes()
        .iter()
        .zip(prior.masses())
        .map(|(&t, m)| model.density(x, t) * m)
        .sum()
}

/// `log L(π) = Σ_m log p(x_m|π)`, summed in index order.
pub fn log_marginal_likelihood(
    model: &dyn LikelihoodModel,
    prior: &GridDensity,
    data: &Dataset,
) -> Result<f64> {
    data.ensure_nonempty()?;
    let mut total = 0.0;
    for (index, &x) in data.points().iter().enumerate() {
        let term = log_marginal_density(model, prior, x);
        if term == f64::NEG_INFINITY {
            return Err(Error::DegenerateLikelihood { index });
        }
        total += term;
    }
    Ok(total)
}

pub(crate) fn log_sum_exp(terms: &[f64]) -> f64 {
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
}

/// Truncated, renormalized equal mixture of `N(1, 0.5²)` and `N(3, 0.5²)`
/// evaluated on `grid`.
pub fn true_prior_bimodal(grid: Arc<Grid>) -> GridDensity {
    let values = grid
        .nodes()
        .iter()
        .map(|&t| {
            benchmark::MODES
                .iter()
                .map(|&mu| 0.5 * normal_log_pdf(t, mu, benchmark::MODE_SD).exp())
                .sum()
        })
        .collect();
    GridDensity::normalized(grid, values).expect("mixture density is positive")
}

/// The benchmark's equidistant 200-node grid on `[0, 4]`.
pub fn benchmark_grid() -> Arc<Grid> {
    Arc::new(
        Grid::uniform(benchmark::LOWER, benchmark::UPPER, benchmark::NODES)
            .expect("constant bounds are valid"),
    )
}
