//! Maximum (penalized) likelihood estimation of a prior on a grid.
//!
//! The objective is `F(w) = log L(w) − γ Φ(w)` over grid densities `w`.
//! Unpenalized problems are solved by EM; penalized ones by multiplicative
//! (entropic mirror) ascent on the quadrature simplex
//! `{w_j > 0, Σ_j w_j Δ_j = 1}`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid, GridDensity};
use crate::information::{PenaltyKind, PenaltySpec};
use crate::models::{Dataset, LikelihoodModel};

/// Number of accepted steps over which the objective gain is averaged for
/// the stopping test.
pub const STOP_WINDOW: usize = 10;

/// Smallest step the backtracking search will try.
pub const MIN_STEP: f64 = 1e-16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum StepRule {
    Fixed { eta: f64 },
    Backtracking { eta0: f64, shrink: f64, growth: f64 },
}

impl Default for StepRule {
    fn default() -> Self {
        StepRule::Backtracking {
            eta0: 1.0,
            shrink: 0.5,
            growth: 1.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub max_iters: usize,
    /// Stop once a full step changes the objective by less than
    /// `tol` per observation.
    pub tol: f64,
    pub step_rule: StepRule,
    /// Lower clamp applied to density values after each multiplicative step.
    pub floor: f64,
    /// Momentum on the log-weights, restarted whenever a step loses ground.
    pub accelerate: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            max_iters: 5000,
            tol: 1e-9,
            step_rule: StepRule::default(),
            floor: 1e-300,
            accelerate: true,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::param("max_iters", "must be at least 1"));
        }
        if !(self.tol > 0.0) {
            return Err(Error::param(
                "tol",
                format!("{} must be positive", self.tol),
            ));
        }
        if !(self.floor >= 0.0) {
            return Err(Error::param("floor", "must be nonnegative"));
        }
        match self.step_rule {
            StepRule::Fixed { eta } if !(eta > 0.0) => {
                Err(Error::param("step_rule", "fixed step must be positive"))
            }
            StepRule::Backtracking {
                eta0,
                shrink,
                growth,
            } if !(eta0 > 0.0 && shrink > 0.0 && shrink < 1.0 && growth >= 1.0) => {
                Err(Error::param(
                    "step_rule",
                    "backtracking needs eta0 > 0, 0 < shrink < 1, growth >= 1",
                ))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    Converged,
    MaxIterations,
    /// Backtracking could not find an ascent step above [`MIN_STEP`].
    NoProgress,
}

#[derive(Debug, Clone)]
pub struct EstimationResult {
    pub prior: GridDensity,
    pub gamma: f64,
    pub penalty: PenaltySpec,
    /// Objective value before the first and after every iteration.
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub termination: Termination,
    /// `√(Σ_j m_j (g_j − ḡ)²)` of the mass-coordinate gradient at the end.
    pub gradient_norm_final: f64,
}

impl EstimationResult {
    pub fn objective(&self) -> f64 {
        *self
            .objective_trace
            .last()
            .expect("trace holds the start value")
    }
}

/// `p(x_m|θ_j)` for all observations and nodes, stored per row relative to
/// the row maximum: entry `(m, j)` is `exp(log p(x_m|θ_j) − c_m)`.
#[derive(Debug, Clone)]
pub struct LikelihoodMatrix {
    rows: usize,
    cols: usize,
    scaled: Vec<f64>,
    log_scale: Vec<f64>,
}

impl LikelihoodMatrix {
    pub fn new(model: &dyn LikelihoodModel, data: &Dataset, grid: &Grid) -> Result<Self> {
        data.ensure_nonempty()?;
        let cols = grid.len();
        let rows = data.len();
        let mut scaled = Vec::with_capacity(rows * cols);
        let mut log_scale = Vec::with_capacity(rows);
        let mut row = vec![0.0; cols];
        for (index, &x) in data.points().iter().enumerate() {
            for (r, &t) in row.iter_mut().zip(grid.nodes()) {
                *r = model.log_density(x, t);
            }
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if !max.is_finite() {
                return Err(Error::DegenerateLikelihood { index });
            }
            scaled.extend(row.iter().map(|l| (l - max).exp()));
            log_scale.push(max);
        }
        Ok(LikelihoodMatrix {
            rows,
            cols,
            scaled,
            log_scale,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    fn row(&self, m: usize) -> &[f64] {
        &self.scaled[m * self.cols..(m + 1) * self.cols]
    }

    /// Copy with observation `m` removed.
    pub fn without_row(&self, m: usize) -> LikelihoodMatrix {
        let mut scaled = Vec::with_capacity((self.rows - 1) * self.cols);
        scaled.extend_from_slice(&self.scaled[..m * self.cols]);
        scaled.extend_from_slice(&self.scaled[(m + 1) * self.cols..]);
        let mut log_scale = self.log_scale.clone();
        log_scale.remove(m);
        LikelihoodMatrix {
            rows: self.rows - 1,
            cols: self.cols,
            scaled,
            log_scale,
        }
    }

    /// `log p(x_m | π)` for node masses `masses`.
    pub fn log_marginal(&self, m: usize, masses: &[f64]) -> f64 {
        self.log_scale[m] + dot(self.row(m), masses).ln()
    }

    /// Scaled marginals `Σ_j L̃_mj m_j` into `out`; returns `log L`.
    fn marginals(&self, masses: &[f64], out: &mut [f64]) -> Result<f64> {
        let mut total = 0.0;
        for (m, p) in out.iter_mut().enumerate() {
            *p = dot(self.row(m), masses);
            if !(*p > 0.0) {
                return Err(Error::DegenerateLikelihood { index: m });
            }
            total += self.log_scale[m] + p.ln();
        }
        Ok(total)
    }

    /// `S_j = Σ_m L̃_mj / p_m`.
    fn score_sums(&self, marginals: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|s| *s = 0.0);
        for (m, &p) in marginals.iter().enumerate() {
            let inv = 1.0 / p;
            for (s, l) in out.iter_mut().zip(self.row(m)) {
                *s += l * inv;
            }
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// The penalized objective over a fixed likelihood matrix.
#[derive(Debug, Clone, Copy)]
pub struct Objective<'a> {
    matrix: &'a LikelihoodMatrix,
    grid: &'a Grid,
    penalty: &'a PenaltySpec,
    gamma: f64,
}

struct Workspace {
    masses: Vec<f64>,
    marginals: Vec<f64>,
    scores: Vec<f64>,
    penalty_grad: Vec<f64>,
}

impl Workspace {
    fn new(rows: usize, cols: usize) -> Self {
        Workspace {
            masses: vec![0.0; cols],
            marginals: vec![0.0; rows],
            scores: vec![0.0; cols],
            penalty_grad: vec![0.0; cols],
        }
    }
}

impl<'a> Objective<'a> {
    pub fn new(
        matrix: &'a LikelihoodMatrix,
        grid: &'a Grid,
        penalty: &'a PenaltySpec,
        gamma: f64,
    ) -> Result<Self> {
        if !(gamma >= 0.0 && gamma.is_finite()) {
            return Err(Error::param(
                "gamma",
                format!("{gamma} must be finite and >= 0"),
            ));
        }
        if matrix.cols() != grid.len() {
            return Err(Error::LengthMismatch {
                expected: grid.len(),
                found: matrix.cols(),
            });
        }
        penalty.check_grid(grid)?;
        Ok(Objective {
            matrix,
            grid,
            penalty,
            gamma,
        })
    }

    fn fill_masses(&self, w: &[f64], ws: &mut Workspace) {
        for ((m, v), d) in ws.masses.iter_mut().zip(w).zip(self.grid.weights()) {
            *m = v * d;
        }
    }

    fn penalty_term(&self, w: &[f64]) -> f64 {
        if self.gamma == 0.0 {
            0.0
        } else {
            self.gamma * self.penalty.value_raw(self.grid, w)
        }
    }

    fn value_in(&self, w: &[f64], ws: &mut Workspace) -> Result<f64> {
        self.fill_masses(w, ws);
        let log_l = self.matrix.marginals(&ws.masses, &mut ws.marginals)?;
        Ok(log_l - self.penalty_term(w))
    }

    /// Gradient with respect to `w_j`, using the marginals left in `ws` by
    /// the preceding [`Self::value_in`] call on the same `w`.
    fn gradient_in(&self, w: &[f64], ws: &mut Workspace, grad: &mut [f64]) {
        self.matrix.score_sums(&ws.marginals, &mut ws.scores);
        self.penalty
            .gradient_raw(self.grid, w, &mut ws.penalty_grad);
        for (((g, s), pg), d) in grad
            .iter_mut()
            .zip(&ws.scores)
            .zip(&ws.penalty_grad)
            .zip(self.grid.weights())
        {
            *g = s * d
                - if self.gamma == 0.0 {
                    0.0
                } else {
                    self.gamma * pg
                };
        }
    }

    pub fn value(&self, w: &[f64]) -> Result<f64> {
        let mut ws = Workspace::new(self.matrix.rows(), self.matrix.cols());
        self.value_in(w, &mut ws)
    }

    pub fn value_and_gradient(&self, w: &[f64]) -> Result<(f64, Vec<f64>)> {
        let mut ws = Workspace::new(self.matrix.rows(), self.matrix.cols());
        let value = self.value_in(w, &mut ws)?;
        let mut grad = vec![0.0; w.len()];
        self.gradient_in(w, &mut ws, &mut grad);
        Ok((value, grad))
    }
}

/// `log L(π) − γΦ(π)` and its gradient with respect to the node values `w_j`.
pub fn objective_and_gradient(
    model: &dyn LikelihoodModel,
    data: &Dataset,
    p: &GridDensity,
    penalty: &PenaltySpec,
    gamma: f64,
) -> Result<(f64, Vec<f64>)> {
    let matrix = LikelihoodMatrix::new(model, data, p.grid())?;
    Objective::new(&matrix, p.grid(), penalty, gamma)?.value_and_gradient(p.values())
}

/// `(log L(π), Φ(π))`, the two parts of the objective.
pub fn objective_terms(
    model: &dyn LikelihoodModel,
    data: &Dataset,
    p: &GridDensity,
    penalty: &PenaltySpec,
) -> Result<(f64, f64)> {
    let log_l = crate::models::log_marginal_likelihood(model, p, data)?;
    Ok((log_l, penalty.value(p)?))
}

fn check_positive_start(start: &GridDensity, kind: PenaltyKind) -> Result<()> {
    if kind.needs_positive() {
        if let Some(index) = start.values().iter().position(|&v| v <= 0.0) {
            return Err(Error::InvalidValue {
                index,
                value: start.values()[index],
            });
        }
    }
    Ok(())
}

/// Unpenalized NPMLE by EM, starting from the uniform density.
pub fn em_npmle(
    model: &dyn LikelihoodModel,
    data: &Dataset,
    grid: Arc<Grid>,
    config: &SolverConfig,
) -> Result<EstimationResult> {
    let matrix = LikelihoodMatrix::new(model, data, &grid)?;
    let start = GridDensity::uniform(grid);
    em_with_matrix(&matrix, &start, config)
}

/// EM on node masses: `m_j ← m_j · (1/M) Σ_m p(x_m|θ_j) / p(x_m|π)`.
pub fn em_with_matrix(
    matrix: &LikelihoodMatrix,
    start: &GridDensity,
    config: &SolverConfig,
) -> Result<EstimationResult> {
    config.validate()?;
    let grid = start.grid().clone();
    let n_obs = matrix.rows() as f64;
    let mut masses = start.masses();
    let mut marginals = vec![0.0; matrix.rows()];
    let mut scores = vec![0.0; matrix.cols()];
    let mut log_l = matrix.marginals(&masses, &mut marginals)?;
    let mut trace = vec![log_l];
    let mut termination = Termination::MaxIterations;
    let mut iterations = 0;

    for _ in 0..config.max_iters {
        iterations += 1;
        matrix.score_sums(&marginals, &mut scores);
        for (m, s) in masses.iter_mut().zip(&scores) {
            *m *= s / n_obs;
        }
        let total: f64 = masses.iter().sum();
        masses.iter_mut().for_each(|m| *m /= total);
        let next = matrix.marginals(&masses, &mut marginals)?;
        debug_assert!(
            next >= log_l - 1e-10,
            "EM decreased log L: {log_l} -> {next}"
        );
        let change = next - log_l;
        log_l = next;
        trace.push(log_l);
        if change.abs() <= config.tol * n_obs {
            termination = Termination::Converged;
            break;
        }
    }

    matrix.score_sums(&marginals, &mut scores);
    let gradient_norm_final = centered_norm(&masses, &scores);
    let prior = GridDensity::from_masses(grid, &masses)?;
    Ok(EstimationResult {
        prior,
        gamma: 0.0,
        penalty: PenaltySpec::None,
        objective_trace: trace,
        iterations,
        converged: termination == Termination::Converged,
        termination,
        gradient_norm_final,
    })
}

fn centered_norm(masses: &[f64], g: &[f64]) -> f64 {
    let total: f64 = masses.iter().sum();
    let mean = dot(masses, g) / total;
    masses
        .iter()
        .zip(g)
        .map(|(m, x)| m * (x - mean).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Maximum penalized likelihood estimate, started from the uniform density.
pub fn solve_mple(
    model: &dyn LikelihoodModel,
    data: &Dataset,
    grid: Arc<Grid>,
    penalty: &PenaltySpec,
    gamma: f64,
    config: &SolverConfig,
) -> Result<EstimationResult> {
    let start = GridDensity::uniform(grid);
    solve_mple_from(model, data, penalty, gamma, config, &start)
}

/// Like [`solve_mple`], from a caller-supplied start on the working grid.
pub fn solve_mple_from(
    model: &dyn LikelihoodModel,
    data: &Dataset,
    penalty: &PenaltySpec,
    gamma: f64,
    config: &SolverConfig,
    start: &GridDensity,
) -> Result<EstimationResult> {
    let matrix = LikelihoodMatrix::new(model, data, start.grid())?;
    solve_with_matrix(&matrix, penalty, gamma, config, start)
}

/// Penalized estimation over a precomputed likelihood matrix.
pub fn solve_with_matrix(
    matrix: &LikelihoodMatrix,
    penalty: &PenaltySpec,
    gamma: f64,
    config: &SolverConfig,
    start: &GridDensity,
) -> Result<EstimationResult> {
    config.validate()?;
    let grid = start.grid().clone();
    let objective = Objective::new(matrix, &grid, penalty, gamma)?;
    if gamma == 0.0 {
        let mut result = em_with_matrix(matrix, start, config)?;
        result.penalty = penalty.clone();
        return Ok(result);
    }
    check_positive_start(start, penalty.kind())?;
    mirror_ascent(&objective, start, config, penalty.clone())
}

fn mirror_ascent(
    objective: &Objective<'_>,
    start: &GridDensity,
    config: &SolverConfig,
    penalty: PenaltySpec,
) -> Result<EstimationResult> {
    let grid = objective.grid;
    let deltas = grid.weights();
    let cols = grid.len();
    let n_obs = objective.matrix.rows() as f64;
    let mut ws = Workspace::new(objective.matrix.rows(), cols);

    let mut w = start.values().to_vec();
    let mut w_prev = w.clone();
    let mut value = objective.value_in(&w, &mut ws)?;
    let mut grad = vec![0.0; cols];
    objective.gradient_in(&w, &mut ws, &mut grad);

    let (mut eta, shrink, growth, backtrack) = match config.step_rule {
        StepRule::Fixed { eta } => (eta, 1.0, 1.0, false),
        StepRule::Backtracking {
            eta0,
            shrink,
            growth,
        } => (eta0, shrink, growth, true),
    };

    let mut trace = vec![value];
    let mut base = vec![0.0; cols];
    let mut base_grad = vec![0.0; cols];
    let mut direction = vec![0.0; cols];
    let mut candidate = vec![0.0; cols];
    let mut termination = Termination::MaxIterations;
    let mut iterations = 0;
    // iterations since the last momentum restart
    let mut age = 0usize;

    'outer: while iterations < config.max_iters {
        iterations += 1;

        // extrapolate in log space: y = w · (w / w_prev)^β
        let mut base_value = value;
        let mut extrapolated = false;
        if config.accelerate && age > 0 {
            let beta = (age as f64 - 1.0) / (age as f64 + 2.0);
            for ((y, v), p) in base.iter_mut().zip(&w).zip(&w_prev) {
                *y = (v * (beta * (v / p).ln()).exp()).max(config.floor);
            }
            normalize_in_place(&mut base, deltas);
            match objective.value_in(&base, &mut ws) {
                Ok(v) => {
                    base_value = v;
                    objective.gradient_in(&base, &mut ws, &mut base_grad);
                    extrapolated = true;
                }
                Err(Error::DegenerateLikelihood { .. }) => age = 0,
                Err(e) => return Err(e),
            }
        }
        if !extrapolated {
            base.copy_from_slice(&w);
            base_grad.copy_from_slice(&grad);
        }

        // ascent direction in mass coordinates, shifted so the largest
        // exponent is zero
        for ((dir, g), d) in direction.iter_mut().zip(&base_grad).zip(deltas) {
            *dir = g / d;
        }
        let top = direction.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        direction.iter_mut().for_each(|d| *d -= top);

        let mut backtracked = false;
        let next_value = loop {
            for ((c, v), dir) in candidate.iter_mut().zip(&base).zip(&direction) {
                *c = (v * (eta * dir).exp()).max(config.floor);
            }
            normalize_in_place(&mut candidate, deltas);
            let trial = objective.value_in(&candidate, &mut ws);
            match trial {
                Ok(v) if !backtrack || v >= base_value => break v,
                // a step that zeroes every marginal is simply too long
                Ok(_) | Err(Error::DegenerateLikelihood { .. }) if backtrack => {
                    eta *= shrink;
                    backtracked = true;
                    if eta < MIN_STEP {
                        // no ascent step left: either stationary to rounding
                        // precision or genuinely stuck
                        let n = trace.len();
                        let settled =
                            n >= 2 && (trace[n - 1] - trace[n - 2]).abs() <= config.tol * n_obs;
                        termination = if settled {
                            Termination::Converged
                        } else {
                            Termination::NoProgress
                        };
                        break 'outer;
                    }
                }
                Ok(v) => break v,
                Err(e) => return Err(e),
            }
        };

        if extrapolated && next_value < value {
            // momentum overshot: restart from the current iterate
            age = 0;
            objective.value_in(&w, &mut ws)?;
            continue;
        }

        std::mem::swap(&mut w_prev, &mut w);
        std::mem::swap(&mut w, &mut candidate);
        value = next_value;
        objective.gradient_in(&w, &mut ws, &mut grad);
        trace.push(value);
        age += 1;

        if !backtracked {
            // average gain over the last few steps, so a short stall right
            // after a momentum restart does not end the run
            let window = STOP_WINDOW.min(trace.len() - 1);
            let gain = (value - trace[trace.len() - 1 - window]) / window as f64;
            if trace.len() > STOP_WINDOW && gain.abs() <= config.tol * n_obs {
                termination = Termination::Converged;
                break;
            }
            eta *= growth;
        }
    }

    // the workspace may hold a rejected candidate; re-evaluate at w
    objective.value_in(&w, &mut ws)?;
    objective.gradient_in(&w, &mut ws, &mut grad);
    let masses: Vec<f64> = w.iter().zip(deltas).map(|(v, d)| v * d).collect();
    let mass_grad: Vec<f64> = grad.iter().zip(deltas).map(|(g, d)| g / d).collect();
    let gradient_norm_final = centered_norm(&masses, &mass_grad);

    let prior = GridDensity::normalized(start.grid().clone(), w)?;
    Ok(EstimationResult {
        prior,
        gamma: objective.gamma,
        penalty,
        objective_trace: trace,
        iterations,
        converged: termination == Termination::Converged,
        termination,
        gradient_norm_final,
    })
}

fn normalize_in_place(values: &mut [f64], deltas: &[f64]) {
    let total: f64 = values.iter().zip(deltas).map(|(c, d)| c * d).sum();
    values.iter_mut().for_each(|c| *c /= total);
}
