//! Discretized parameter spaces and densities on them.
//!
//! A [`Grid`] is a strictly increasing set of nodes carrying trapezoid
//! quadrature weights, so `∫ f dθ ≈ Σ_j f(θ_j) Δ_j`. A [`GridDensity`] stores
//! density *values* at the nodes (not node masses); its masses are
//! `w_j Δ_j` and sum to one.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::transform::Diffeomorphism;

/// Tolerance on `Σ w_j Δ_j = 1` for a valid density.
pub const NORMALIZATION_TOL: f64 = 1e-8;

/// Ordered quadrature nodes over a compact interval.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl Grid {
    /// `len` equidistant nodes on `[a, b]`, both ends included.
    pub fn uniform(a: f64, b: f64, len: usize) -> Result<Self> {
        if !(a.is_finite() && b.is_finite()) || a >= b {
            return Err(Error::InvalidBounds { a, b });
        }
        if len < 2 {
            return Err(Error::InvalidCount(len));
        }
        let h = (b - a) / (len - 1) as f64;
        let mut nodes: Vec<f64> = (0..len).map(|j| a + j as f64 * h).collect();
        nodes[len - 1] = b;
        let mut weights = vec![h; len];
        weights[0] = h / 2.0;
        weights[len - 1] = h / 2.0;
        Ok(Grid { nodes, weights })
    }

    /// Trapezoid weights on arbitrary strictly increasing nodes.
    pub fn from_nodes(nodes: Vec<f64>) -> Result<Self> {
        if nodes.len() < 2 {
            return Err(Error::InvalidCount(nodes.len()));
        }
        for (index, pair) in nodes.windows(2).enumerate() {
            if !(pair[1] > pair[0]) || !pair[0].is_finite() || !pair[1].is_finite() {
                return Err(Error::NonMonotoneNodes { index: index + 1 });
            }
        }
        let n = nodes.len();
        let mut weights = Vec::with_capacity(n);
        weights.push((nodes[1] - nodes[0]) / 2.0);
        for j in 1..n - 1 {
            weights.push((nodes[j + 1] - nodes[j - 1]) / 2.0);
        }
        weights.push((nodes[n - 1] - nodes[n - 2]) / 2.0);
        Ok(Grid { nodes, weights })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn bounds(&self) -> (f64, f64) {
        (self.nodes[0], self.nodes[self.nodes.len() - 1])
    }

    /// Index of the node closest to `theta` (lowest index on ties).
    pub fn nearest(&self, theta: f64) -> usize {
        let mut best = 0;
        let mut best_dist = f64::INFINITY;
        for (j, &t) in self.nodes.iter().enumerate() {
            let d = (t - theta).abs();
            if d < best_dist {
                best = j;
                best_dist = d;
            }
        }
        best
    }

    /// `Σ_j v_j Δ_j`.
    pub fn integrate(&self, values: &[f64]) -> Result<f64> {
        if values.len() != self.len() {
            return Err(Error::LengthMismatch {
                expected: self.len(),
                found: values.len(),
            });
        }
        Ok(values.iter().zip(&self.weights).map(|(v, w)| v * w).sum())
    }
}

pub fn make_uniform_grid(a: f64, b: f64, len: usize) -> Result<Grid> {
    Grid::uniform(a, b, len)
}

pub fn make_nonuniform_grid(nodes: &[f64]) -> Result<Grid> {
    Grid::from_nodes(nodes.to_vec())
}

pub fn integrate(values: &[f64], grid: &Grid) -> Result<f64> {
    grid.integrate(values)
}

/// Nonnegative density values on a grid, normalized under its quadrature.
#[derive(Debug, Clone)]
pub struct GridDensity {
    grid: Arc<Grid>,
    values: Vec<f64>,
}

impl PartialEq for GridDensity {
    fn eq(&self, other: &Self) -> bool {
        self.same_grid(other) && self.values == other.values
    }
}

impl GridDensity {
    /// Wraps values that are already normalized (within [`NORMALIZATION_TOL`]).
    pub fn new(grid: Arc<Grid>, values: Vec<f64>) -> Result<Self> {
        check_values(&grid, &values)?;
        let integral = grid.integrate(&values)?;
        if (integral - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::NotNormalized { integral });
        }
        Ok(GridDensity { grid, values })
    }

    /// Scales nonnegative values so they integrate to one.
    pub fn normalized(grid: Arc<Grid>, mut values: Vec<f64>) -> Result<Self> {
        check_values(&grid, &values)?;
        let integral = grid.integrate(&values)?;
        if integral <= 0.0 {
            return Err(Error::AllZeroInput);
        }
        for v in &mut values {
            *v /= integral;
        }
        Ok(GridDensity { grid, values })
    }

    /// Builds a density from node masses `m_j = w_j Δ_j` (renormalized).
    pub fn from_masses(grid: Arc<Grid>, masses: &[f64]) -> Result<Self> {
        if masses.len() != grid.len() {
            return Err(Error::LengthMismatch {
                expected: grid.len(),
                found: masses.len(),
            });
        }
        let values = masses
            .iter()
            .zip(grid.weights())
            .map(|(m, d)| m / d)
            .collect();
        Self::normalized(grid, values)
    }

    pub fn uniform(grid: Arc<Grid>) -> Self {
        let values = vec![1.0; grid.len()];
        Self::normalized(grid, values).expect("positive constant is normalizable")
    }

    /// All mass on the node nearest to `theta`.
    pub fn spike(grid: Arc<Grid>, theta: f64) -> Self {
        let mut values = vec![0.0; grid.len()];
        values[grid.nearest(theta)] = 1.0;
        Self::normalized(grid, values).expect("single positive value is normalizable")
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn masses(&self) -> Vec<f64> {
        self.values
            .iter()
            .zip(self.grid.weights())
            .map(|(v, d)| v * d)
            .collect()
    }

    pub fn integral(&self) -> f64 {
        self.grid
            .integrate(&self.values)
            .expect("lengths agree by construction")
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn same_grid(&self, other: &GridDensity) -> bool {
        Arc::ptr_eq(&self.grid, &other.grid) || *self.grid == *other.grid
    }

    /// Convex combination `α·self + (1−α)·other` on a shared grid.
    pub fn mix(&self, other: &GridDensity, alpha: f64) -> Result<GridDensity> {
        self.ensure_same_grid(other)?;
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::param("alpha", format!("{alpha} is outside [0, 1]")));
        }
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(p, q)| alpha * p + (1.0 - alpha) * q)
            .collect();
        GridDensity::normalized(self.grid.clone(), values)
    }

    /// Probability mass on `[lo, hi]`, integrating the piecewise-linear
    /// interpolant exactly.
    pub fn mass_between(&self, lo: f64, hi: f64) -> f64 {
        let nodes = self.grid.nodes();
        let mut total = 0.0;
        for k in 0..nodes.len() - 1 {
            let (t0, t1) = (nodes[k], nodes[k + 1]);
            let a = t0.max(lo);
            let b = t1.min(hi);
            if b <= a {
                continue;
            }
            let slope = (self.values[k + 1] - self.values[k]) / (t1 - t0);
            let fa = self.values[k] + slope * (a - t0);
            let fb = self.values[k] + slope * (b - t0);
            total += 0.5 * (fa + fb) * (b - a);
        }
        total
    }

    /// Restricts to the nodes inside `[lo, hi]` and renormalizes there.
    pub fn restrict(&self, lo: f64, hi: f64) -> Result<GridDensity> {
        let (nodes, values): (Vec<f64>, Vec<f64>) = self
            .grid
            .nodes()
            .iter()
            .zip(&self.values)
            .filter(|(t, _)| **t >= lo && **t <= hi)
            .map(|(t, v)| (*t, *v))
            .unzip();
        let grid = Arc::new(Grid::from_nodes(nodes)?);
        GridDensity::normalized(grid, values)
    }

    /// Linear interpolation onto another grid (zero outside this support),
    /// renormalized on the target.
    pub fn resample(&self, target: Arc<Grid>) -> Result<GridDensity> {
        let src = self.grid.nodes();
        let (lo, hi) = self.grid.bounds();
        let values = target
            .nodes()
            .iter()
            .map(|&t| {
                if t < lo || t > hi {
                    return 0.0;
                }
                let k = src.partition_point(|&s| s <= t).clamp(1, src.len() - 1);
                let (t0, t1) = (src[k - 1], src[k]);
                let u = (t - t0) / (t1 - t0);
                self.values[k - 1] * (1.0 - u) + self.values[k] * u
            })
            .collect();
        GridDensity::normalized(target, values)
    }

    pub(crate) fn ensure_same_grid(&self, other: &GridDensity) -> Result<()> {
        if self.same_grid(other) {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }
}

fn check_values(grid: &Grid, values: &[f64]) -> Result<()> {
    if values.len() != grid.len() {
        return Err(Error::LengthMismatch {
            expected: grid.len(),
            found: values.len(),
        });
    }
    for (index, &value) in values.iter().enumerate() {
        if !(value.is_finite() && value >= 0.0) {
            return Err(Error::InvalidValue { index, value });
        }
    }
    Ok(())
}

pub fn normalize(values: &[f64], grid: Arc<Grid>) -> Result<GridDensity> {
    GridDensity::normalized(grid, values.to_vec())
}

/// `Σ_j p_j log(p_j/q_j) Δ_j` with `0·log 0 = 0`.
pub fn kl_divergence(p: &GridDensity, q: &GridDensity) -> Result<f64> {
    p.ensure_same_grid(q)?;
    let mut total = 0.0;
    for (index, ((&pj, &qj), &d)) in p
        .values
        .iter()
        .zip(&q.values)
        .zip(p.grid.weights())
        .enumerate()
    {
        if pj == 0.0 {
            continue;
        }
        if qj == 0.0 {
            return Err(Error::SupportViolation { index });
        }
        total += pj * (pj / qj).ln() * d;
    }
    Ok(total)
}

/// Total variation distance `½ Σ_j |p_j − q_j| Δ_j`.
pub fn tv_distance(p: &GridDensity, q: &GridDensity) -> Result<f64> {
    p.ensure_same_grid(q)?;
    Ok(0.5
        * p.values
            .iter()
            .zip(&q.values)
            .zip(p.grid.weights())
            .map(|((a, b), d)| (a - b).abs() * d)
            .sum::<f64>())
}

/// Negative differential entropy `Σ_j p_j log p_j Δ_j`.
pub fn neg_entropy(p: &GridDensity) -> f64 {
    p.values
        .iter()
        .zip(p.grid.weights())
        .filter(|(v, _)| **v > 0.0)
        .map(|(v, d)| v * v.ln() * d)
        .sum()
}

/// A pushed-forward density together with its mass before renormalization.
#[derive(Debug, Clone)]
pub struct Pushforward {
    pub density: GridDensity,
    pub raw_mass: f64,
}

/// Density of `φ(θ)` for `θ ∼ p`, on the image grid `{φ(θ_j)}`.
pub fn pushforward_density(p: &GridDensity, phi: &dyn Diffeomorphism) -> Result<Pushforward> {
    let nodes = p.grid.nodes();
    let mut image = Vec::with_capacity(nodes.len());
    let mut values = Vec::with_capacity(nodes.len());
    for (index, (&t, &w)) in nodes.iter().zip(&p.values).enumerate() {
        let derivative = phi.derivative(t);
        if !(derivative > 0.0 && derivative.is_finite()) {
            return Err(Error::NonMonotoneMap { index, derivative });
        }
        image.push(phi.forward(t));
        values.push(w / derivative);
    }
    let grid = Arc::new(Grid::from_nodes(image)?);
    let raw_mass = grid.integrate(&values)?;
    let density = GridDensity::normalized(grid, values)?;
    Ok(Pushforward { density, raw_mass })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transform::{Exp, Identity};

    fn grid(a: f64, b: f64, n: usize) -> Arc<Grid> {
        Arc::new(Grid::uniform(a, b, n).unwrap())
    }

    #[test]
    fn uniform_grid_weights() {
        let g = Grid::uniform(0.0, 4.0, 200).unwrap();
        let h = 4.0 / 199.0;
        assert!((g.weights()[1] - h).abs() < 1e-15);
        assert!((g.weights()[0] - h / 2.0).abs() < 1e-15);
        assert!((g.weights().iter().sum::<f64>() - 4.0).abs() < 4e-12);
        assert_eq!(g.bounds(), (0.0, 4.0));

        let g = Grid::uniform(0.0, 1.0, 2).unwrap();
        assert_eq!(g.nodes(), &[0.0, 1.0]);
        assert_eq!(g.weights(), &[0.5, 0.5]);

        let g = Grid::uniform(0.0, 2.0, 3).unwrap();
        assert_eq!(g.nodes(), &[0.0, 1.0, 2.0]);
        assert_eq!(g.weights(), &[0.5, 1.0, 0.5]);
    }

    #[test]
    fn uniform_grid_errors() {
        assert!(matches!(
            Grid::uniform(1.0, 1.0, 10),
            Err(Error::InvalidBounds { .. })
        ));
        assert!(matches!(
            Grid::uniform(2.0, 1.0, 10),
            Err(Error::InvalidBounds { .. })
        ));
        assert!(matches!(
            Grid::uniform(0.0, 1.0, 1),
            Err(Error::InvalidCount(1))
        ));
    }

    #[test]
    fn nonuniform_grid() {
        let g = Grid::from_nodes(vec![0.0, 1.0, 3.0]).unwrap();
        assert_eq!(g.weights(), &[0.5, 1.5, 1.0]);

        let nodes = [0.0f64, 2.0, 4.0].map(f64::exp);
        let g = make_nonuniform_grid(&nodes).unwrap();
        let total: f64 = g.weights().iter().sum();
        assert!((total - (4.0f64.exp() - 1.0)).abs() < 1e-12);

        assert!(matches!(
            Grid::from_nodes(vec![1.0, 1.0, 2.0]),
            Err(Error::NonMonotoneNodes { index: 1 })
        ));
    }

    #[test]
    fn integrate_examples() {
        let g = Grid::uniform(0.0, 4.0, 200).unwrap();
        assert!((g.integrate(&[0.25; 200]).unwrap() - 1.0).abs() < 1e-12);
        let g = Grid::uniform(0.0, 2.0, 17).unwrap();
        assert!((g.integrate(&[1.0; 17]).unwrap() - 2.0).abs() < 1e-12);
        let g = Grid::uniform(0.0, 2.0, 3).unwrap();
        assert_eq!(g.integrate(&[0.0, 1.0, 2.0]).unwrap(), 2.0);
        assert!(matches!(
            g.integrate(&[1.0]),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn normalize_examples() {
        let g = grid(0.0, 4.0, 200);
        let d = normalize(&[1.0; 200], g.clone()).unwrap();
        assert!(d.values().iter().all(|v| (v - 0.25).abs() < 1e-12));

        let mut spike = vec![0.0; 200];
        spike[57] = 3.0;
        let d = normalize(&spike, g.clone()).unwrap();
        assert!((d.masses()[57] - 1.0).abs() < 1e-12);

        assert!(matches!(
            normalize(&[0.0; 200], g),
            Err(Error::AllZeroInput)
        ));
    }

    #[test]
    fn kl_examples() {
        let g = grid(0.0, 4.0, 200);
        let u = GridDensity::uniform(g.clone());
        assert_eq!(kl_divergence(&u, &u).unwrap(), 0.0);

        // two nodes, masses 0.8 / 0.2 against uniform masses 0.5 / 0.5
        let g2 = grid(0.0, 1.0, 2);
        let p = GridDensity::from_masses(g2.clone(), &[0.8, 0.2]).unwrap();
        let q = GridDensity::uniform(g2);
        let expected = 0.8 * (0.8f64 / 0.5).ln() + 0.2 * (0.2f64 / 0.5).ln();
        assert!((kl_divergence(&p, &q).unwrap() - expected).abs() < 1e-14);

        let spike = GridDensity::spike(g.clone(), 1.0);
        let other = GridDensity::spike(g.clone(), 3.0);
        assert!(matches!(
            kl_divergence(&spike, &other),
            Err(Error::SupportViolation { .. })
        ));
        // zero entries of p are skipped
        assert!(kl_divergence(&spike, &u).unwrap() > 0.0);

        let h = GridDensity::uniform(grid(0.0, 2.0, 200));
        assert!(matches!(kl_divergence(&u, &h), Err(Error::GridMismatch)));
    }

    #[test]
    fn tv_examples() {
        let g = grid(0.0, 4.0, 200);
        let u = GridDensity::uniform(g.clone());
        assert_eq!(tv_distance(&u, &u).unwrap(), 0.0);

        let a = GridDensity::spike(g.clone(), 1.0);
        let b = GridDensity::spike(g.clone(), 3.0);
        assert!((tv_distance(&a, &b).unwrap() - 1.0).abs() < 1e-12);

        let mixed = u.mix(&a, 0.5).unwrap();
        // brute force: half of Σ|Δm| over nodes
        let mut brute = 0.0;
        for (x, y) in u.masses().iter().zip(mixed.masses()) {
            brute += (x - y).abs();
        }
        brute *= 0.5;
        assert!((tv_distance(&u, &mixed).unwrap() - brute).abs() < 1e-14);
        // the spike node gains 0.5·(1 − m_u), every other node loses half its mass
        let m_u = u.masses()[g.nearest(1.0)];
        assert!((brute - 0.5 * (1.0 - m_u)).abs() < 1e-12);
    }

    #[test]
    fn entropy_examples() {
        let u4 = GridDensity::uniform(grid(0.0, 4.0, 200));
        assert!((neg_entropy(&u4) - 0.25f64.ln()).abs() < 1e-12);
        let u1 = GridDensity::uniform(grid(0.0, 1.0, 50));
        assert!(neg_entropy(&u1).abs() < 1e-12);
    }

    #[test]
    fn pushforward_uniform_under_exp() {
        let u = GridDensity::uniform(grid(0.0, 4.0, 200));
        let pf = pushforward_density(&u, &Exp).unwrap();
        assert!((pf.raw_mass - 1.0).abs() < 1e-3);
        let d = &pf.density;
        let (lo, hi) = d.grid().bounds();
        assert!((lo - 1.0).abs() < 1e-15 && (hi - 4.0f64.exp()).abs() < 1e-12);
        // density ∝ 1/θ̃: value·θ̃ constant
        let c0 = d.values()[0] * d.grid().nodes()[0];
        for (v, t) in d.values().iter().zip(d.grid().nodes()) {
            assert!((v * t / c0 - 1.0).abs() < 1e-12);
        }
        assert!((d.integral() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn pushforward_identity() {
        let g = grid(0.0, 4.0, 30);
        let p = GridDensity::normalized(g, (0..30).map(|j| 1.0 + j as f64).collect()).unwrap();
        let pf = pushforward_density(&p, &Identity).unwrap();
        for (a, b) in pf.density.values().iter().zip(p.values()) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn restrict_and_resample() {
        let g = grid(0.0, 2.0, 201);
        let u = GridDensity::uniform(g);
        let r = u.restrict(0.0, 1.0).unwrap();
        assert_eq!(r.grid().len(), 101);
        assert!(r.values().iter().all(|v| (v - 1.0).abs() < 1e-12));
        assert!((u.mass_between(0.8, 1.0) - 0.1).abs() < 1e-12);

        let fine = Arc::new(Grid::uniform(0.0, 2.0, 1001).unwrap());
        let s = u.resample(fine).unwrap();
        assert!(s.values().iter().all(|v| (v - 0.5).abs() < 1e-12));
    }
}
