use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{Algorithm, Command, Resolved, Strategy};
use super::generate::gen_random_graph;
use crate::constraints::{ConstraintFile, LinearConstraintSet, VertexList};
use crate::design::{brute_force_design, convex_hull_relax_with, greedy_fiedler, sdp_relax_with, DesignProblem, DesignResult};
use crate::error::{Error, Result};
use crate::game::{check_nash, deterministic_connectivity, preventive_oracle, solve_p3, AttackerSet, GameInstance, GameValue};
use crate::graph::Graph;
use crate::prevention::{alg_cvx, alg_rand, alg_search, OptimalAttacker, PlayTrace, WeightingScheme};

/// Final-value comparisons closer than this count as ties.
pub const COMPARE_TOL: f64 = 1e-6;

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

fn out_file(cfg: &Resolved, name: String) -> Result<PathBuf> {
    fs::create_dir_all(&cfg.out)?;
    Ok(cfg.out.join(name))
}

/// Runs every seed, keeping output order by seed, and surfaces the first
/// error only after all seeds have written their files.
fn per_seed<T: Send>(cfg: &Resolved, f: impl Fn(u64) -> Result<T> + Sync) -> Result<Vec<T>> {
    let results: Vec<Result<T>> = cfg.seeds.par_iter().map(|&seed| f(seed)).collect();
    results.into_iter().collect()
}

pub fn run(cfg: &Resolved) -> Result<()> {
    match cfg.command {
        Command::Gen => run_gen(cfg).map(|_| ()),
        Command::Design => run_design_comparison(cfg).map(|_| ()),
        Command::Game => run_game(cfg).map(|_| ()),
        Command::Prevent => run_prevention_comparison(cfg).map(|_| ()),
    }
}

fn base_graph(cfg: &Resolved, seed: u64) -> Result<Graph> {
    match &cfg.graph {
        Some(path) => Graph::read_json(path),
        None => gen_random_graph(cfg.n, cfg.m, seed),
    }
}

/// Writes `graph_seed<N>.json` for every seed.
pub fn run_gen(cfg: &Resolved) -> Result<Vec<PathBuf>> {
    per_seed(cfg, |seed| {
        let g = gen_random_graph(cfg.n, cfg.m, seed)?;
        let path = out_file(cfg, format!("graph_seed{seed}.json"))?;
        write_json(&path, &g.to_file())?;
        Ok(path)
    })
}

pub fn design_problem(cfg: &Resolved, seed: u64) -> Result<DesignProblem> {
    let g0 = base_graph(cfg, seed)?;
    let kn = Graph::complete(g0.n())?;
    let idx: Vec<usize> = g0
        .edges()
        .iter()
        .map(|&(i, j)| kn.edge_index(i, j).expect("K_n has every pair"))
        .collect();
    let x_set = match &cfg.x_constraints {
        Some(path) => LinearConstraintSet::read_json(path, &kn)?,
        None => LinearConstraintSet::unit_box(kn.m()),
    };
    DesignProblem::new(g0.n(), &idx, cfg.k, x_set)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tally {
    pub wins: usize,
    pub ties: usize,
    pub losses: usize,
}

impl Tally {
    fn record(&mut self, a: f64, b: f64) {
        if a > b + COMPARE_TOL {
            self.wins += 1;
        } else if a < b - COMPARE_TOL {
            self.losses += 1;
        } else {
            self.ties += 1;
        }
    }

    /// Seeds where the first method is at least as good.
    pub fn at_least(&self) -> usize {
        self.wins + self.ties
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignSeedSummary {
    pub seed: u64,
    pub initial_lambda2: f64,
    pub final_lambda2: BTreeMap<String, f64>,
    #[serde(skip)]
    pub results: BTreeMap<String, DesignResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignReport {
    pub n: usize,
    pub initial_edges: usize,
    pub k: usize,
    pub seeds: Vec<DesignSeedSummary>,
    /// SDP relaxation against each other strategy, by strategy name.
    pub sdp_versus: BTreeMap<String, Tally>,
}

/// Runs the selected design strategies on identical instances per seed.
///
/// Writes per seed a λ₂ trace CSV (iteration 0 is the initial graph) and one
/// result JSON per strategy, then `design_summary.json`.
pub fn run_design_comparison(cfg: &Resolved) -> Result<DesignReport> {
    let seeds = per_seed(cfg, |seed| {
        let dp = design_problem(cfg, seed)?;
        let initial = dp.lambda2_of(&dp.initial_indicator())?;
        let mut results = BTreeMap::new();
        for &strategy in &cfg.strategies {
            let r = match strategy {
                Strategy::Greedy => greedy_fiedler(&dp)?,
                Strategy::Hull => convex_hull_relax_with(&dp, &cfg.solver)?.result,
                Strategy::Sdp => sdp_relax_with(&dp, &cfg.solver)?.result,
            };
            info!("seed {seed} {}: final λ₂ {:.9}", strategy.name(), r.final_lambda2);
            write_json(&out_file(cfg, format!("design_seed{seed}_{}.json", strategy.name()))?, &r)?;
            results.insert(strategy.name().to_string(), r);
        }
        write_design_csv(&out_file(cfg, format!("design_seed{seed}.csv"))?, initial, &results, dp.k())?;
        Ok(DesignSeedSummary {
            seed,
            initial_lambda2: initial,
            final_lambda2: results.iter().map(|(k, r)| (k.clone(), r.final_lambda2)).collect(),
            results,
        })
    })?;
    let mut sdp_versus = BTreeMap::new();
    if cfg.strategies.contains(&Strategy::Sdp) {
        for other in cfg.strategies.iter().filter(|&&s| s != Strategy::Sdp) {
            let mut tally = Tally::default();
            for s in &seeds {
                tally.record(s.final_lambda2["sdp"], s.final_lambda2[other.name()]);
            }
            sdp_versus.insert(other.name().to_string(), tally);
        }
    }
    let dp0 = design_problem(cfg, cfg.seeds[0])?;
    let report = DesignReport {
        n: dp0.graph().n(),
        initial_edges: dp0.initial_edges().len(),
        k: cfg.k,
        seeds,
        sdp_versus,
    };
    write_json(&out_file(cfg, "design_summary.json".into())?, &report)?;
    Ok(report)
}

fn write_design_csv(path: &Path, initial: f64, results: &BTreeMap<String, DesignResult>, k: usize) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["iteration".to_string()];
    header.extend(results.keys().cloned());
    w.write_record(&header)?;
    for it in 0..=k {
        let mut row = vec![it.to_string()];
        for r in results.values() {
            row.push(match it {
                0 => initial.to_string(),
                _ => r.lambda2_trace.get(it - 1).map(f64::to_string).unwrap_or_default(),
            });
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Also exposed for tests: the brute-force optimum of a seed's instance.
pub fn design_oracle(cfg: &Resolved, seed: u64) -> Result<DesignResult> {
    brute_force_design(&design_problem(cfg, seed)?)
}

fn read_attacker_set(path: &Path, graph: &Graph) -> Result<AttackerSet> {
    let text = fs::read_to_string(path)?;
    let value: serde_json::Value = serde_json::from_str(&text)?;
    if value.get("vertices").is_some() {
        let list: VertexList = serde_json::from_value(value)?;
        Ok(AttackerSet::Vertices(VertexList::new(list.vertices)?))
    } else {
        let file: ConstraintFile = serde_json::from_value(value)?;
        Ok(AttackerSet::Polytope(file.resolve(graph)?))
    }
}

pub fn game_instance(cfg: &Resolved, seed: u64) -> Result<GameInstance> {
    let g = base_graph(cfg, seed)?;
    let m = g.m();
    let s_set = match &cfg.s_constraints {
        Some(path) => LinearConstraintSet::read_json(path, &g)?,
        None => LinearConstraintSet::unit_box(m).with_budget(cfg.k_s),
    };
    let p_set = match &cfg.p_constraints {
        Some(path) => read_attacker_set(path, &g)?,
        None => {
            let mut cs = LinearConstraintSet::uniform_box(m, cfg.p_lower, cfg.p_upper)?;
            if let Some(b) = cfg.p_budget {
                cs = cs.with_budget(b);
            }
            AttackerSet::Polytope(cs)
        }
    };
    GameInstance::new(g, s_set, p_set)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameRecord {
    pub seed: u64,
    pub value: GameValue,
    /// Protected edges alone keep the graph connected.
    pub s_star_connected: bool,
    pub is_nash: bool,
    pub attacker_vertices: usize,
}

/// Exact preventive value per seed, written as `game_seed<N>.json`.
pub fn run_game(cfg: &Resolved) -> Result<Vec<GameRecord>> {
    let records = per_seed(cfg, |seed| {
        let gi = game_instance(cfg, seed)?;
        let value = preventive_oracle(&gi)?;
        let record = GameRecord {
            seed,
            s_star_connected: deterministic_connectivity(&gi, &value.s_star)?,
            is_nash: check_nash(&gi, &value.s_star, &value.p_star)?,
            attacker_vertices: gi.p_vertices().len(),
            value,
        };
        write_json(&out_file(cfg, format!("game_seed{seed}.json"))?, &record)?;
        Ok(record)
    })?;
    write_json(&out_file(cfg, "game_summary.json".into())?, &records)?;
    Ok(records)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlgorithmParams {
    #[serde(rename = "T")]
    pub t: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weighting: Option<WeightingScheme>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlgorithmSummary {
    pub algorithm: String,
    pub params: AlgorithmParams,
    pub seed: u64,
    pub t_star: usize,
    pub s_star: String,
    /// α(s_star, p(t_star)) as recorded in the trace.
    pub alpha_star: f64,
    /// α(s_star, p) for the attacker's best response to s_star.
    pub alpha_rerespond: f64,
    pub oracle_alpha: f64,
    /// oracle_alpha − alpha_rerespond.
    pub oracle_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreventionSeedRecord {
    pub seed: u64,
    pub oracle: GameValue,
    pub algorithms: Vec<AlgorithmSummary>,
    #[serde(skip)]
    pub traces: Vec<(Algorithm, PlayTrace)>,
}

pub fn s_bits(s: &[u8]) -> String {
    s.iter().map(|&b| if b == 1 { '1' } else { '0' }).collect()
}

pub fn join_play(p: &[f64]) -> String {
    p.iter().map(f64::to_string).collect::<Vec<_>>().join(";")
}

pub fn write_trace_csv(path: &Path, trace: &PlayTrace) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["t", "alpha", "best_so_far", "s_bits", "p"])?;
    for (st, best) in trace.steps.iter().zip(trace.best_so_far()) {
        w.write_record([st.t.to_string(), st.alpha.to_string(), best.to_string(), s_bits(&st.s), join_play(&st.p)])?;
    }
    w.flush()?;
    Ok(())
}

/// Runs the exact preventive oracle and the selected algorithms per seed.
///
/// Writes per seed and algorithm a trace CSV and summary JSON, then
/// `prevent_summary.json`.
pub fn run_prevention_comparison(cfg: &Resolved) -> Result<Vec<PreventionSeedRecord>> {
    let records = per_seed(cfg, |seed| {
        let gi = game_instance(cfg, seed)?;
        let oracle = preventive_oracle(&gi)?;
        let mut algorithms = Vec::new();
        let mut traces = Vec::new();
        for &alg in &cfg.algorithms {
            let trace = match alg {
                Algorithm::Rand => alg_rand(&gi, cfg.t, &mut OptimalAttacker, seed)?,
                Algorithm::Cvx => alg_cvx(&gi, cfg.t, cfg.weighting, &mut OptimalAttacker)?,
                Algorithm::Search => alg_search(&gi, cfg.t, &mut OptimalAttacker)?,
            };
            let (_, rerespond) = solve_p3(&gi, &trace.s_star)?;
            let summary = AlgorithmSummary {
                algorithm: alg.name().to_string(),
                params: AlgorithmParams {
                    t: cfg.t,
                    weighting: (alg == Algorithm::Cvx).then_some(cfg.weighting),
                },
                seed,
                t_star: trace.t_star,
                s_star: s_bits(&trace.s_star),
                alpha_star: trace.alpha_star(),
                alpha_rerespond: rerespond,
                oracle_alpha: oracle.alpha,
                oracle_gap: oracle.alpha - rerespond,
            };
            write_trace_csv(&out_file(cfg, format!("prevent_seed{seed}_{}.csv", alg.name()))?, &trace)?;
            write_json(&out_file(cfg, format!("prevent_seed{seed}_{}.json", alg.name()))?, &summary)?;
            algorithms.push(summary);
            traces.push((alg, trace));
        }
        Ok(PreventionSeedRecord { seed, oracle, algorithms, traces })
    })?;
    write_json(&out_file(cfg, "prevent_summary.json".into())?, &records)?;
    Ok(records)
}

/// Process exit code for an error: 2 config, 3 infeasible, 4 size cap,
/// 5 solver failure.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Infeasible(_) => 3,
        Error::SizeCap { .. } => 4,
        Error::Solver { .. } | Error::NoConvergence(_) => 5,
        _ => 2,
    }
}
