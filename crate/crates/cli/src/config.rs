use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use erprior::models::{benchmark, true_prior_bimodal};
use erprior::selection::default_gammas;
use erprior::{io, Grid, GridDensity, ModelSpec, PenaltyKind, SolverConfig};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub a: f64,
    pub b: f64,
    pub j: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            a: benchmark::LOWER,
            b: benchmark::UPPER,
            j: benchmark::NODES,
        }
    }
}

/// Prior that `simulate` draws parameters from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Truth {
    /// Equal mixture of N(1, 0.5²) and N(3, 0.5²) truncated to the grid.
    Bimodal,
    Uniform,
    /// A `theta,density` CSV file.
    File(PathBuf),
}

/// Everything a run needs. Fields missing from the JSON file take their
/// defaults; command-line flags override the file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSpec,
    pub grid: GridSpec,
    pub truth: Truth,
    pub penalty: PenaltyKind,
    pub gamma: f64,
    pub gammas: Vec<f64>,
    pub seed: u64,
    pub m: usize,
    pub solver: SolverConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            model: ModelSpec::GaussLocation {
                sigma: benchmark::SIGMA,
            },
            grid: GridSpec::default(),
            truth: Truth::Bimodal,
            penalty: PenaltyKind::MissingInfo,
            gamma: 1.0,
            gammas: default_gammas(),
            seed: 0,
            m: benchmark::SAMPLES,
            solver: SolverConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(RunConfig::default());
        };
        let text = fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("invalid config {}", path.display()))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            bail!(
                "config field `gamma` must be a finite number >= 0, got {}",
                self.gamma
            );
        }
        if self.gammas.is_empty() {
            bail!("config field `gammas` must not be empty");
        }
        if let Some(g) = self.gammas.iter().find(|g| !(**g >= 0.0 && g.is_finite())) {
            bail!("config field `gammas` contains {g}; every entry must be a finite number >= 0");
        }
        if self.m == 0 {
            bail!("config field `m` must be at least 1");
        }
        if !(self.grid.a < self.grid.b) || self.grid.j < 2 {
            bail!("config field `grid` needs a < b and j >= 2");
        }
        if let Truth::File(p) = &self.truth {
            if !p.exists() {
                bail!(
                    "config field `truth` names {}, which does not exist",
                    p.display()
                );
            }
        }
        self.solver.validate().context("config field `solver`")?;
        self.model.build().context("config field `model`")?;
        Ok(())
    }

    pub fn grid(&self) -> Result<Arc<Grid>> {
        Ok(Arc::new(Grid::uniform(
            self.grid.a,
            self.grid.b,
            self.grid.j,
        )?))
    }

    pub fn truth_density(&self) -> Result<GridDensity> {
        Ok(match &self.truth {
            Truth::Bimodal => true_prior_bimodal(self.grid()?),
            Truth::Uniform => GridDensity::uniform(self.grid()?),
            Truth::File(path) => io::load_density(path)
                .with_context(|| format!("cannot read truth prior {}", path.display()))?,
        })
    }
}
