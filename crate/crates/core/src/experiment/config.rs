use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prevention::WeightingScheme;
use crate::sdp::SolverSettings;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Gen,
    Design,
    Game,
    Prevent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Greedy,
    Hull,
    Sdp,
}

impl Strategy {
    pub fn name(self) -> &'static str {
        match self {
            Self::Greedy => "greedy",
            Self::Hull => "hull",
            Self::Sdp => "sdp",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Rand,
    Cvx,
    Search,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Self::Rand => "rand",
            Self::Cvx => "cvx",
            Self::Search => "search",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
}

fn default_tol() -> f64 {
    SolverSettings::default().tol
}

fn default_max_iters() -> usize {
    SolverSettings::default().max_iters
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self { tol: default_tol(), max_iters: default_max_iters() }
    }
}

/// Experiment description read from JSON. Unset fields take per-command
/// defaults: design on 14 nodes with 28 initial edges and k = 25; games on 7
/// nodes and 11 edges with a protection budget of 5 and attacks in
/// [0.25, 0.75]^m with total at most 4.25, T = 30.
///
/// Relative paths are resolved against the directory of the config file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub command: Option<Command>,
    /// Initial graph; random per seed when absent.
    pub graph: Option<PathBuf>,
    pub n: Option<usize>,
    pub m: Option<usize>,
    pub k: Option<usize>,
    pub strategies: Option<Vec<Strategy>>,
    pub x_constraints: Option<PathBuf>,
    pub s_constraints: Option<PathBuf>,
    /// Constraint file, or a vertex list `{"vertices": [...]}`.
    pub p_constraints: Option<PathBuf>,
    pub k_s: Option<f64>,
    pub p_lower: Option<f64>,
    pub p_upper: Option<f64>,
    pub p_budget: Option<f64>,
    #[serde(rename = "T")]
    pub t: Option<usize>,
    pub algorithms: Option<Vec<Algorithm>>,
    pub weighting: Option<WeightingScheme>,
    #[serde(default)]
    pub seeds: Vec<u64>,
    pub solver: Option<SolverConfig>,
    pub out: Option<PathBuf>,
}

/// Command-line values that take precedence over the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub k: Option<usize>,
    pub t: Option<usize>,
    pub out: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_json_str(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_json_str(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [
            &mut cfg.graph,
            &mut cfg.x_constraints,
            &mut cfg.s_constraints,
            &mut cfg.p_constraints,
            &mut cfg.out,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(seed) = o.seed {
            self.seeds = vec![seed];
        }
        if let Some(k) = o.k {
            self.k = Some(k);
        }
        if let Some(t) = o.t {
            self.t = Some(t);
        }
        if let Some(out) = &o.out {
            self.out = Some(out.clone());
        }
    }

    /// Resolves defaults for `command` and checks the result.
    pub fn resolve(&self, command: Command) -> Result<Resolved> {
        if let Some(c) = self.command {
            if c != command {
                return Err(Error::Config(format!("config is for {c:?}, invoked as {command:?}")));
            }
        }
        let design = command == Command::Design || command == Command::Gen;
        let n = self.n.unwrap_or(if design { 14 } else { 7 });
        let m = self.m.unwrap_or(if design { 28 } else { 11 });
        let seeds = if self.seeds.is_empty() {
            if self.graph.is_some() && command != Command::Prevent {
                vec![0]
            } else {
                return Err(Error::Config("seeds must be nonempty for randomized runs".into()));
            }
        } else {
            let mut s = self.seeds.clone();
            s.sort_unstable();
            s.dedup();
            s
        };
        for p in [&self.graph, &self.x_constraints, &self.s_constraints, &self.p_constraints]
            .into_iter()
            .flatten()
        {
            if !p.exists() {
                return Err(Error::Config(format!("{} does not exist", p.display())));
            }
        }
        let weighting = self.weighting.unwrap_or(WeightingScheme::Uniform);
        weighting.validate().map_err(|e| Error::Config(e.to_string()))?;
        let t = self.t.unwrap_or(30);
        if t == 0 {
            return Err(Error::Config("T must be at least 1".into()));
        }
        let solver = self.solver.unwrap_or_default();
        if solver.tol.is_nan() || solver.tol <= 0.0 || solver.max_iters == 0 {
            return Err(Error::Config("solver tol and max_iters must be positive".into()));
        }
        let mut strategies = self.strategies.clone().unwrap_or(vec![Strategy::Greedy, Strategy::Hull, Strategy::Sdp]);
        strategies.sort_unstable();
        strategies.dedup();
        let mut algorithms = self.algorithms.clone().unwrap_or(vec![Algorithm::Rand, Algorithm::Cvx, Algorithm::Search]);
        algorithms.sort_unstable();
        algorithms.dedup();
        Ok(Resolved {
            command,
            graph: self.graph.clone(),
            n,
            m,
            k: self.k.unwrap_or(25),
            strategies,
            x_constraints: self.x_constraints.clone(),
            s_constraints: self.s_constraints.clone(),
            p_constraints: self.p_constraints.clone(),
            k_s: self.k_s.unwrap_or(5.0),
            p_lower: self.p_lower.unwrap_or(0.25),
            p_upper: self.p_upper.unwrap_or(0.75),
            p_budget: self.p_budget.or(if self.p_constraints.is_none() { Some(4.25) } else { None }),
            t,
            algorithms,
            weighting,
            seeds,
            solver: SolverSettings { tol: solver.tol, max_iters: solver.max_iters },
            out: self.out.clone().unwrap_or_else(|| PathBuf::from("out")),
        })
    }
}

/// Fully defaulted configuration for one command.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub command: Command,
    pub graph: Option<PathBuf>,
    pub n: usize,
    pub m: usize,
    pub k: usize,
    pub strategies: Vec<Strategy>,
    pub x_constraints: Option<PathBuf>,
    pub s_constraints: Option<PathBuf>,
    pub p_constraints: Option<PathBuf>,
    pub k_s: f64,
    pub p_lower: f64,
    pub p_upper: f64,
    pub p_budget: Option<f64>,
    pub t: usize,
    pub algorithms: Vec<Algorithm>,
    pub weighting: WeightingScheme,
    pub seeds: Vec<u64>,
    pub solver: SolverSettings,
    pub out: PathBuf,
}
