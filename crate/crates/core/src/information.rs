//! Fisher information, Jeffreys prior, expected (mutual) information and the
//! penalty functionals `Φ(π)`.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{kl_divergence, neg_entropy, Grid, GridDensity};
use crate::models::{log_sum_exp, LikelihoodModel, TwoPointModel};

/// Trapezoid nodes used for integrals over the measurement space.
pub const X_QUADRATURE_NODES: usize = 2001;

/// Relative step of the central difference in `∂_θ log p(x|θ)`.
pub const FISHER_STEP: f64 = 1e-5;

fn x_nodes(lo: f64, hi: f64, n: usize) -> (Vec<f64>, Vec<f64>) {
    let h = (hi - lo) / (n - 1) as f64;
    let nodes = (0..n).map(|k| lo + k as f64 * h).collect();
    let mut weights = vec![h; n];
    weights[0] = h / 2.0;
    weights[n - 1] = h / 2.0;
    (nodes, weights)
}

/// `i(θ) = ∫ p(x|θ) (∂_θ log p(x|θ))² dx`.
///
/// Uses the model's analytic form when present; otherwise a central
/// difference in θ and trapezoid quadrature over the model's support at θ.
pub fn fisher_information(model: &dyn LikelihoodModel, theta: f64) -> Result<f64> {
    let value = match model.analytic_fisher(theta) {
        Some(v) => v,
        None => {
            let step = FISHER_STEP * (1.0 + theta.abs());
            let (lo, hi) = model.x_support(theta, theta);
            let (xs, ws) = x_nodes(lo, hi, X_QUADRATURE_NODES);
            xs.iter()
                .zip(&ws)
                .map(|(&x, &w)| {
                    let score = (model.log_density(x, theta + step)
                        - model.log_density(x, theta - step))
                        / (2.0 * step);
                    w * model.density(x, theta) * score * score
                })
                .sum()
        }
    };
    if !(value > 0.0 && value.is_finite()) {
        return Err(Error::NonpositiveInformation { theta, value });
    }
    Ok(value)
}

/// Jeffreys prior `∝ √i(θ)`, normalized on `grid`.
pub fn jeffreys_prior(model: &dyn LikelihoodModel, grid: Arc<Grid>) -> Result<GridDensity> {
    let values = grid
        .nodes()
        .iter()
        .map(|&t| fisher_information(model, t).map(f64::sqrt))
        .collect::<Result<Vec<_>>>()?;
    GridDensity::normalized(grid, values)
}

/// Which penalty functional to use, without its data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PenaltyKind {
    None,
    Tikhonov,
    NegEntropy,
    MissingInfo,
}

impl PenaltyKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            PenaltyKind::None => "none",
            PenaltyKind::Tikhonov => "tikhonov",
            PenaltyKind::NegEntropy => "neg-entropy",
            PenaltyKind::MissingInfo => "missing-info",
        }
    }

    /// Penalties whose gradient involves `log w_j` need strictly positive densities.
    pub fn needs_positive(&self) -> bool {
        matches!(self, PenaltyKind::NegEntropy | PenaltyKind::MissingInfo)
    }
}

impl fmt::Display for PenaltyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PenaltyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.replace('_', "-").as_str() {
            "none" => Ok(PenaltyKind::None),
            "tikhonov" | "l2" => Ok(PenaltyKind::Tikhonov),
            "neg-entropy" | "entropy" => Ok(PenaltyKind::NegEntropy),
            "missing-info" => Ok(PenaltyKind::MissingInfo),
            other => Err(Error::param(
                "penalty",
                format!("unknown penalty `{other}`"),
            )),
        }
    }
}

/// A penalty functional `Φ(π)` ready for evaluation.
#[derive(Debug, Clone)]
pub enum PenaltySpec {
    None,
    /// `Φ(π) = ‖π‖²_{L²}`.
    Tikhonov,
    /// `Φ(π) = −H(π)`.
    NegEntropy,
    /// `Φ(π) = D_KL(π ‖ reference)`; the reference is normally Jeffreys prior.
    MissingInfo {
        reference: GridDensity,
    },
}

impl PenaltySpec {
    pub fn missing_info(reference: GridDensity) -> Result<Self> {
        if let Some(index) = reference.values().iter().position(|&v| v <= 0.0) {
            return Err(Error::param(
                "reference",
                format!("must be strictly positive, node {index} is not"),
            ));
        }
        Ok(PenaltySpec::MissingInfo { reference })
    }

    /// Missing-information penalty against the model's Jeffreys prior on `grid`.
    pub fn missing_info_jeffreys(model: &dyn LikelihoodModel, grid: Arc<Grid>) -> Result<Self> {
        Self::missing_info(jeffreys_prior(model, grid)?)
    }

    /// Builds a penalty of the given kind, computing Jeffreys prior if needed.
    pub fn for_kind(
        kind: PenaltyKind,
        model: &dyn LikelihoodModel,
        grid: Arc<Grid>,
    ) -> Result<Self> {
        Ok(match kind {
            PenaltyKind::None => PenaltySpec::None,
            PenaltyKind::Tikhonov => PenaltySpec::Tikhonov,
            PenaltyKind::NegEntropy => PenaltySpec::NegEntropy,
            PenaltyKind::MissingInfo => Self::missing_info_jeffreys(model, grid)?,
        })
    }

    pub fn kind(&self) -> PenaltyKind {
        match self {
            PenaltySpec::None => PenaltyKind::None,
            PenaltySpec::Tikhonov => PenaltyKind::Tikhonov,
            PenaltySpec::NegEntropy => PenaltyKind::NegEntropy,
            PenaltySpec::MissingInfo { .. } => PenaltyKind::MissingInfo,
        }
    }

    pub fn reference(&self) -> Option<&GridDensity> {
        match self {
            PenaltySpec::MissingInfo { reference } => Some(reference),
            _ => None,
        }
    }

    pub fn value(&self, p: &GridDensity) -> Result<f64> {
        Ok(match self {
            PenaltySpec::None => 0.0,
            PenaltySpec::Tikhonov => penalty_tikhonov(p),
            PenaltySpec::NegEntropy => neg_entropy(p),
            PenaltySpec::MissingInfo { reference } => penalty_missing_info(p, reference)?,
        })
    }

    pub(crate) fn check_grid(&self, grid: &Grid) -> Result<()> {
        match self {
            PenaltySpec::MissingInfo { reference } if **reference.grid() != *grid => {
                Err(Error::GridMismatch)
            }
            _ => Ok(()),
        }
    }

    /// `Φ` on raw values `w` over `grid` (no normalization check).
    pub(crate) fn value_raw(&self, grid: &Grid, w: &[f64]) -> f64 {
        let d = grid.weights();
        match self {
            PenaltySpec::None => 0.0,
            PenaltySpec::Tikhonov => w.iter().zip(d).map(|(v, d)| v * v * d).sum(),
            PenaltySpec::NegEntropy => w
                .iter()
                .zip(d)
                .filter(|(v, _)| **v > 0.0)
                .map(|(v, d)| v * v.ln() * d)
                .sum(),
            PenaltySpec::MissingInfo { reference } => w
                .iter()
                .zip(reference.values())
                .zip(d)
                .filter(|((v, _), _)| **v > 0.0)
                .map(|((v, r), d)| v * (v / r).ln() * d)
                .sum(),
        }
    }

    /// `∂Φ/∂w_j` (including the quadrature weight `Δ_j`), written into `out`.
    pub(crate) fn gradient_raw(&self, grid: &Grid, w: &[f64], out: &mut [f64]) {
        let d = grid.weights();
        match self {
            PenaltySpec::None => out.iter_mut().for_each(|g| *g = 0.0),
            PenaltySpec::Tikhonov => {
                for ((g, v), d) in out.iter_mut().zip(w).zip(d) {
                    *g = 2.0 * v * d;
                }
            }
            PenaltySpec::NegEntropy => {
                for ((g, v), d) in out.iter_mut().zip(w).zip(d) {
                    *g = d * (v.ln() + 1.0);
                }
            }
            PenaltySpec::MissingInfo { reference } => {
                for (((g, v), r), d) in out.iter_mut().zip(w).zip(reference.values()).zip(d) {
                    *g = d * ((v / r).ln() + 1.0);
                }
            }
        }
    }
}

/// Squared `L²` norm `Σ_j w_j² Δ_j`.
pub fn penalty_tikhonov(p: &GridDensity) -> f64 {
    p.values()
        .iter()
        .zip(p.grid().weights())
        .map(|(v, d)| v * v * d)
        .sum()
}

/// `D_KL(p ‖ reference)`.
pub fn penalty_missing_info(p: &GridDensity, reference: &GridDensity) -> Result<f64> {
    kl_divergence(p, reference)
}

/// Expected information together with the unclipped quadrature value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpectedInformation {
    pub value: f64,
    pub raw: f64,
}

/// `𝓘[π] = Σ_j m_j ∫ p(x|θ_j) log(p(x|θ_j) / p(x|π)) dx`, with the `x`
/// integral by trapezoid over the model's support for the grid's range.
pub fn expected_information(model: &dyn LikelihoodModel, p: &GridDensity) -> ExpectedInformation {
    expected_information_with(model, p, X_QUADRATURE_NODES)
}

pub fn expected_information_with(
    model: &dyn LikelihoodModel,
    p: &GridDensity,
    x_nodes_count: usize,
) -> ExpectedInformation {
    let (a, b) = p.grid().bounds();
    let (lo, hi) = model.x_support(a, b);
    let (xs, ws) = x_nodes(lo, hi, x_nodes_count.max(2));

    let active: Vec<(f64, f64)> = p
        .grid()
        .nodes()
        .iter()
        .zip(p.masses())
        .filter(|(_, m)| *m > 0.0)
        .map(|(&t, m)| (t, m))
        .collect();

    let mut raw = 0.0;
    let mut log_terms = vec![0.0; active.len()];
    let mut log_lik = vec![0.0; active.len()];
    for (&x, &wx) in xs.iter().zip(&ws) {
        for (k, &(t, m)) in active.iter().enumerate() {
            log_lik[k] = model.log_density(x, t);
            log_terms[k] = log_lik[k] + m.ln();
        }
        let log_marginal = log_sum_exp(&log_terms);
        for (k, &(_, m)) in active.iter().enumerate() {
            let lp = log_lik[k];
            if lp == f64::NEG_INFINITY {
                continue;
            }
            raw += wx * m * lp.exp() * (lp - log_marginal);
        }
    }
    ExpectedInformation {
        value: raw.max(0.0),
        raw,
    }
}

/// Mutual information of the two-point model on an equidistant `π₁` grid
/// over `[0, 1]`.
pub fn information_curve_two_point(
    model: &TwoPointModel,
    resolution: usize,
) -> Result<Vec<(f64, f64)>> {
    if resolution < 3 {
        return Err(Error::param("resolution", "at least 3 points are required"));
    }
    (0..resolution)
        .map(|i| {
            let pi1 = i as f64 / (resolution - 1) as f64;
            let prior = model.prior(pi1)?;
            Ok((pi1, expected_information(model, &prior).value))
        })
        .collect()
}

/// A Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub mean: f64,
    pub std_error: f64,
}

/// Monte Carlo estimate of `𝓘[π | 𝓜^N]`, the information carried by `N`
/// replicated measurements.
///
/// Parameters are drawn from the prior's node masses (the same discrete
/// measure that defines `p(x⃗|π)` under the grid quadrature). Each sample
/// uses its own ChaCha stream, so the result does not depend on evaluation
/// order.
pub fn expected_information_replicated(
    model: &dyn LikelihoodModel,
    p: &GridDensity,
    replications: usize,
    samples: usize,
    seed: u64,
) -> Result<McEstimate> {
    if replications == 0 {
        return Err(Error::param("N", "at least one replication is required"));
    }
    if samples < 100 {
        return Err(Error::param("samples", "at least 100 samples are required"));
    }
    let nodes = p.grid().nodes();
    let masses = p.masses();
    let active: Vec<usize> = (0..nodes.len()).filter(|&j| masses[j] > 0.0).collect();
    let log_masses: Vec<f64> = active.iter().map(|&j| masses[j].ln()).collect();
    let mut cumulative = Vec::with_capacity(active.len());
    let mut acc = 0.0;
    for &j in &active {
        acc += masses[j];
        cumulative.push(acc);
    }

    let draws: Vec<f64> = (0..samples)
        .into_par_iter()
        .map(|s| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(s as u64);
            let u: f64 = rng.random::<f64>() * acc;
            let pick = cumulative
                .partition_point(|&c| c <= u)
                .min(active.len() - 1);
            let theta = nodes[active[pick]];
            let xs: Vec<f64> = (0..replications)
                .map(|_| model.sample(theta, &mut rng))
                .collect();
            let log_joint: Vec<f64> = active
                .iter()
                .map(|&j| xs.iter().map(|&x| model.log_density(x, nodes[j])).sum())
                .collect();
            let terms: Vec<f64> = log_joint
                .iter()
                .zip(&log_masses)
                .map(|(l, lm)| l + lm)
                .collect();
            log_joint[pick] - log_sum_exp(&terms)
        })
        .collect();

    let n = draws.len() as f64;
    let mean = draws.iter().sum::<f64>() / n;
    let var = draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok(McEstimate {
        mean,
        std_error: (var / n).sqrt(),
    })
}

/// Least-squares slope and intercept of `values` against `ln(replications)`.
pub fn log_slope(replications: &[usize], values: &[f64]) -> (f64, f64) {
    let xs: Vec<f64> = replications.iter().map(|&n| (n as f64).ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = values.iter().sum::<f64>() / n;
    let sxy: f64 = xs
        .iter()
        .zip(values)
        .map(|(x, y)| (x - mx) * (y - my))
        .sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{pushforward_density, tv_distance};
    use crate::models::{
        benchmark_grid, transform_model, true_prior_bimodal, GaussianLocationModel, SharedModel,
    };
    use crate::transform::Exp;

    fn gauss(sigma: f64) -> SharedModel {
        Arc::new(GaussianLocationModel::new(sigma).unwrap())
    }

    #[test]
    fn fisher_gaussian() {
        assert!((fisher_information(gauss(0.3).as_ref(), 1.0).unwrap() - 1.0 / 0.09).abs() < 1e-12);
        assert_eq!(fisher_information(gauss(0.5).as_ref(), -3.0).unwrap(), 4.0);
    }

    #[test]
    fn fisher_exp_transformed_follows_chain_rule() {
        let model = transform_model(gauss(0.3), Arc::new(Exp));
        for tt in [1.0, 2.5, 7.0, 20.0, 54.0] {
            let numeric = fisher_information(model.as_ref(), tt).unwrap();
            let chain = 1.0 / 0.09 / (tt * tt);
            assert!(
                ((numeric - chain) / chain).abs() < 1e-4,
                "{tt}: {numeric} vs {chain}"
            );
        }
    }

    #[test]
    fn fisher_of_two_point_is_nonpositive() {
        let model = TwoPointModel::new([2.0, 4.0], [1.0, 1.0]).unwrap();
        assert!(matches!(
            fisher_information(&model, 0.2),
            Err(Error::NonpositiveInformation { .. })
        ));
    }

    #[test]
    fn jeffreys_location_is_uniform() {
        let j = jeffreys_prior(gauss(0.3).as_ref(), benchmark_grid()).unwrap();
        assert!(j.values().iter().all(|v| (v - 0.25).abs() < 1e-12));
        let g2 = Arc::new(Grid::uniform(0.0, 2.0, 50).unwrap());
        let j = jeffreys_prior(gauss(0.3).as_ref(), g2).unwrap();
        assert!(j.values().iter().all(|v| (v - 0.5).abs() < 1e-12));
    }

    #[test]
    fn jeffreys_commutes_with_reparametrization() {
        let base = gauss(0.3);
        let j = jeffreys_prior(base.as_ref(), benchmark_grid()).unwrap();
        let pushed = pushforward_density(&j, &Exp).unwrap().density;
        let model = transform_model(base, Arc::new(Exp));
        let jt = jeffreys_prior(model.as_ref(), pushed.grid().clone()).unwrap();
        assert!(tv_distance(&pushed, &jt).unwrap() < 1e-3);
    }

    #[test]
    fn tikhonov_examples() {
        assert!((penalty_tikhonov(&GridDensity::uniform(benchmark_grid())) - 0.25).abs() < 1e-12);
        let g1 = Arc::new(Grid::uniform(0.0, 1.0, 10).unwrap());
        assert!((penalty_tikhonov(&GridDensity::uniform(g1)) - 1.0).abs() < 1e-12);
        let g = benchmark_grid();
        let spike = GridDensity::spike(g.clone(), 2.0);
        let delta = g.weights()[g.nearest(2.0)];
        // (1/Δ)²·Δ
        assert!((penalty_tikhonov(&spike) - 1.0 / delta).abs() < 1e-9);
        assert!((1.0 / delta - 49.75).abs() < 1e-9);
    }

    #[test]
    fn missing_info_examples() {
        let g = benchmark_grid();
        let u = GridDensity::uniform(g.clone());
        let j = jeffreys_prior(gauss(0.3).as_ref(), g.clone()).unwrap();
        assert_eq!(penalty_missing_info(&j, &j).unwrap(), 0.0);
        assert!(penalty_missing_info(&u, &j).unwrap().abs() < 1e-12);
        let truth = true_prior_bimodal(g.clone());
        let got = penalty_missing_info(&truth, &j).unwrap();
        let mut oracle = 0.0;
        for ((v, r), d) in truth.values().iter().zip(j.values()).zip(g.weights()) {
            oracle += d * v * (v.ln() - r.ln());
        }
        assert!(got > 0.0 && (got - oracle).abs() < 1e-12);
        assert!(PenaltySpec::missing_info(GridDensity::spike(g, 1.0)).is_err());
    }

    #[test]
    fn penalty_kind_parsing() {
        assert_eq!(
            "missing-info".parse::<PenaltyKind>().unwrap(),
            PenaltyKind::MissingInfo
        );
        assert_eq!(
            "missing_info".parse::<PenaltyKind>().unwrap(),
            PenaltyKind::MissingInfo
        );
        assert_eq!(
            "tikhonov".parse::<PenaltyKind>().unwrap(),
            PenaltyKind::Tikhonov
        );
        assert!("ridge".parse::<PenaltyKind>().is_err());
        for kind in [
            PenaltyKind::None,
            PenaltyKind::Tikhonov,
            PenaltyKind::NegEntropy,
            PenaltyKind::MissingInfo,
        ] {
            assert_eq!(kind.as_str().parse::<PenaltyKind>().unwrap(), kind);
        }
    }

    fn two_point_oracle(pi1: f64) -> f64 {
        // 10⁴-node trapezoid on [-10, 16]
        let n = 10_000;
        let (lo, hi) = (-10.0, 16.0);
        let h = (hi - lo) / (n - 1) as f64;
        let pdf = |x: f64, mu: f64| {
            (-(x - mu) * (x - mu) / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt()
        };
        let mut total = 0.0;
        for k in 0..n {
            let x = lo + k as f64 * h;
            let w = if k == 0 || k == n - 1 { 0.5 * h } else { h };
            let (p1, p2) = (pdf(x, 2.0), pdf(x, 4.0));
            let marg = pi1 * p1 + (1.0 - pi1) * p2;
            if pi1 > 0.0 {
                total += w * pi1 * p1 * (p1 / marg).ln();
            }
            if pi1 < 1.0 {
                total += w * (1.0 - pi1) * p2 * (p2 / marg).ln();
            }
        }
        total
    }

    #[test]
    fn two_point_information() {
        let model = TwoPointModel::new([2.0, 4.0], [1.0, 1.0]).unwrap();
        let half = expected_information(&model, &model.prior(0.5).unwrap());
        let oracle = two_point_oracle(0.5);
        assert!(
            (half.value - oracle).abs() < 1e-7,
            "{} vs {oracle}",
            half.value
        );
        assert!(half.value > 0.0 && half.value <= 2.0f64.ln());
        assert_eq!(
            expected_information(&model, &model.prior(0.0).unwrap()).value,
            0.0
        );
        let q = expected_information(&model, &model.prior(0.2).unwrap());
        assert!((q.value - two_point_oracle(0.2)).abs() < 1e-7);
    }

    #[test]
    fn spike_prior_carries_no_information() {
        let g = benchmark_grid();
        let spike = GridDensity::spike(g, 2.0);
        let info = expected_information(gauss(0.3).as_ref(), &spike);
        assert_eq!(info.value, 0.0);
        assert!(info.raw.abs() < 1e-8);
    }

    #[test]
    fn information_curve() {
        let model = TwoPointModel::new([2.0, 4.0], [1.0, 1.0]).unwrap();
        let curve = information_curve_two_point(&model, 101).unwrap();
        assert_eq!(curve.len(), 101);
        assert_eq!(curve[0].1, 0.0);
        assert_eq!(curve[100].1, 0.0);
        for i in 0..101 {
            assert!((curve[i].1 - curve[100 - i].1).abs() < 1e-8);
            assert!(curve[i].1 <= 2.0f64.ln() + 1e-8);
        }
        let argmax = (0..101)
            .max_by(|&a, &b| curve[a].1.total_cmp(&curve[b].1))
            .unwrap();
        assert_eq!(curve[argmax].0, 0.5);
        assert!(information_curve_two_point(&model, 2).is_err());
    }

    #[test]
    fn replicated_single_measurement_matches_quadrature() {
        let model = gauss(0.3);
        let g = benchmark_grid();
        let truth = true_prior_bimodal(g.clone());
        let exact = expected_information(model.as_ref(), &truth).value;
        let mc = expected_information_replicated(model.as_ref(), &truth, 1, 4000, 17).unwrap();
        assert!(
            (mc.mean - exact).abs() < 3.0 * mc.std_error,
            "{} ± {} vs {exact}",
            mc.mean,
            mc.std_error
        );
        let spike = GridDensity::spike(g, 2.0);
        let mc = expected_information_replicated(model.as_ref(), &spike, 4, 200, 1).unwrap();
        assert_eq!(mc.mean, 0.0);
    }

    #[test]
    fn replicated_is_deterministic() {
        let model = gauss(0.3);
        let u = GridDensity::uniform(benchmark_grid());
        let a = expected_information_replicated(model.as_ref(), &u, 3, 150, 5).unwrap();
        let b = expected_information_replicated(model.as_ref(), &u, 3, 150, 5).unwrap();
        assert_eq!(a, b);
        assert!(expected_information_replicated(model.as_ref(), &u, 0, 150, 5).is_err());
        assert!(expected_information_replicated(model.as_ref(), &u, 3, 99, 5).is_err());
    }

    #[test]
    fn slope_fit() {
        let ns = [16, 64, 256];
        let vals: Vec<f64> = ns.iter().map(|&n| 0.5 * (n as f64).ln() + 1.0).collect();
        let (s, c) = log_slope(&ns, &vals);
        assert!((s - 0.5).abs() < 1e-12 && (c - 1.0).abs() < 1e-12);
    }
}
