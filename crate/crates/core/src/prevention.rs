//! Heuristics for a preventive coordinator strategy: repeated play against an
//! attacker who always responds last, keeping the best observed play.

use log::debug;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::game::{coordinator_response, solve_p3, GameInstance};
use crate::graph::expected_weights;
use crate::spectral::edge_scores;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlayStep {
    /// 1-based round.
    pub t: usize,
    pub s: Vec<u8>,
    pub p: Vec<f64>,
    pub alpha: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlayTrace {
    pub steps: Vec<PlayStep>,
    pub t_star: usize,
    pub s_star: Vec<u8>,
    /// (v_i − v_j)² per edge of the unprotected graph, computed by the random
    /// sampler and not used to bias it. Empty for the other algorithms.
    pub fiedler_scores: Vec<f64>,
}

impl PlayTrace {
    fn from_steps(steps: Vec<PlayStep>, fiedler_scores: Vec<f64>) -> Self {
        let mut best = 0;
        for (i, st) in steps.iter().enumerate() {
            if st.alpha > steps[best].alpha {
                best = i;
            }
        }
        Self { t_star: steps[best].t, s_star: steps[best].s.clone(), steps, fiedler_scores }
    }

    /// max_{k ≤ t} α(s(k), p(k)) for each t.
    pub fn best_so_far(&self) -> Vec<f64> {
        let mut best = f64::NEG_INFINITY;
        self.steps
            .iter()
            .map(|st| {
                best = best.max(st.alpha);
                best
            })
            .collect()
    }

    pub fn alpha_star(&self) -> f64 {
        self.steps[self.t_star - 1].alpha
    }

    pub fn p_star(&self) -> &[f64] {
        &self.steps[self.t_star - 1].p
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum WeightingScheme {
    Uniform,
    Recency { gamma: f64 },
    Penalty,
}

impl WeightingScheme {
    pub fn validate(&self) -> Result<()> {
        if let Self::Recency { gamma } = *self {
            if !(gamma > 0.0 && gamma < 1.0) {
                return Err(Error::Domain(format!("gamma = {gamma} outside (0, 1)")));
            }
        }
        Ok(())
    }

    /// θ(1..t) over the first t steps of `trace`.
    pub fn weights(&self, trace: &[PlayStep], t: usize) -> Result<Vec<f64>> {
        self.validate()?;
        if t == 0 {
            return Err(Error::Domain("weights need t >= 1".into()));
        }
        let uniform = || vec![1.0 / t as f64; t];
        Ok(match *self {
            Self::Uniform => uniform(),
            Self::Recency { gamma } => {
                let raw: Vec<f64> = (1..=t).map(|k| gamma.powi((t - k) as i32)).collect();
                normalize(raw)
            }
            Self::Penalty => {
                if trace.len() < t {
                    return Err(Error::Domain(format!("penalty weights need {t} steps, have {}", trace.len())));
                }
                let raw: Vec<f64> = trace[..t].iter().map(|st| st.alpha).collect();
                if raw.iter().sum::<f64>() > 0.0 {
                    normalize(raw)
                } else {
                    uniform()
                }
            }
        })
    }
}

fn normalize(raw: Vec<f64>) -> Vec<f64> {
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / total).collect()
}

/// Source of attacker plays.
pub trait Attacker {
    fn respond(&mut self, gi: &GameInstance, s: &[u8], t: usize) -> Result<Vec<f64>>;
}

/// Best response by vertex enumeration.
#[derive(Debug, Clone, Copy, Default)]
pub struct OptimalAttacker;

impl Attacker for OptimalAttacker {
    fn respond(&mut self, gi: &GameInstance, s: &[u8], _t: usize) -> Result<Vec<f64>> {
        Ok(solve_p3(gi, s)?.0)
    }
}

/// Replays recorded plays, the t-th play at round t.
#[derive(Debug, Clone)]
pub struct ReplayAttacker {
    pub plays: Vec<Vec<f64>>,
}

impl Attacker for ReplayAttacker {
    fn respond(&mut self, _gi: &GameInstance, _s: &[u8], t: usize) -> Result<Vec<f64>> {
        self.plays
            .get(t - 1)
            .cloned()
            .ok_or_else(|| Error::Domain(format!("no recorded attacker play for round {t}")))
    }
}

fn play(gi: &GameInstance, attacker: &mut dyn Attacker, t: usize, s: Vec<u8>) -> Result<PlayStep> {
    if !gi.contains_s(&s)? {
        return Err(Error::Domain(format!("coordinator play at round {t} is outside S")));
    }
    let p = attacker.respond(gi, &s, t)?;
    check_len(gi.m(), p.len())?;
    if !gi.contains_p(&p)? {
        return Err(Error::Domain(format!("attacker play at round {t} is outside P")));
    }
    let alpha = gi.alpha(&s, &p)?;
    debug!("round {t}: alpha = {alpha:.9}");
    Ok(PlayStep { t, s, p, alpha })
}

fn check_horizon(t_max: usize) -> Result<()> {
    if t_max == 0 {
        return Err(Error::Domain("T must be at least 1".into()));
    }
    Ok(())
}

/// Random sampling: each round scans the edges in a fresh random order and
/// protects every edge that keeps s in S. Round t draws from stream t of a
/// ChaCha8 generator seeded with `seed`.
pub fn alg_rand(gi: &GameInstance, t_max: usize, attacker: &mut dyn Attacker, seed: u64) -> Result<PlayTrace> {
    check_horizon(t_max)?;
    let m = gi.m();
    let scores = edge_scores(gi.graph(), &vec![1; m])?;
    debug!("edge scores of the unprotected graph: {scores:?}");
    let mut steps = Vec::with_capacity(t_max);
    for t in 1..=t_max {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(t as u64);
        let mut order: Vec<usize> = (0..m).collect();
        order.shuffle(&mut rng);
        let mut s = gi.forced_ones();
        for l in order {
            if s[l] == 0 {
                s[l] = 1;
                if !gi.s_set().contains_binary(&s)? {
                    s[l] = 0;
                }
            }
        }
        steps.push(play(gi, attacker, t, s)?);
    }
    Ok(PlayTrace::from_steps(steps, scores))
}

/// Convex combinations: respond optimally to a weighted average of the
/// attacker's past plays.
pub fn alg_cvx(gi: &GameInstance, t_max: usize, scheme: WeightingScheme, attacker: &mut dyn Attacker) -> Result<PlayTrace> {
    check_horizon(t_max)?;
    scheme.validate()?;
    let mut steps = vec![play(gi, attacker, 1, gi.forced_ones())?];
    let mut p_theta = steps[0].p.clone();
    for t in 2..=t_max {
        let (s, _, _) = coordinator_response(gi, &p_theta)?;
        steps.push(play(gi, attacker, t, s)?);
        let theta = scheme.weights(&steps, t)?;
        p_theta = vec![0.0; gi.m()];
        for (w, st) in theta.iter().zip(&steps) {
            p_theta.iter_mut().zip(&st.p).for_each(|(acc, x)| *acc += w * x);
        }
    }
    Ok(PlayTrace::from_steps(steps, Vec::new()))
}

/// Pointwise search: respond with the max-min strategy over the finite set
/// of attacker plays observed so far.
pub fn alg_search(gi: &GameInstance, t_max: usize, attacker: &mut dyn Attacker) -> Result<PlayTrace> {
    check_horizon(t_max)?;
    let points = gi.s_points()?;
    let mut worst = vec![f64::INFINITY; points.len()];
    let mut seen: Vec<Vec<f64>> = Vec::new();
    let mut steps = Vec::with_capacity(t_max);
    for t in 1..=t_max {
        let s = if t == 1 {
            gi.forced_ones()
        } else {
            let mut best = 0;
            for (i, &v) in worst.iter().enumerate() {
                if v > worst[best] {
                    best = i;
                }
            }
            points[best].clone()
        };
        let step = play(gi, attacker, t, s)?;
        if !seen.contains(&step.p) {
            let values = points
                .par_iter()
                .map(|s| gi.alpha(s, &step.p))
                .collect::<Result<Vec<f64>>>()?;
            worst.iter_mut().zip(values).for_each(|(w, v)| *w = w.min(v));
            seen.push(step.p.clone());
        }
        steps.push(step);
    }
    Ok(PlayTrace::from_steps(steps, Vec::new()))
}

/// Recomputes α from a step's logged play.
pub fn recompute_alpha(gi: &GameInstance, step: &PlayStep) -> Result<f64> {
    let w = expected_weights(&step.s, &step.p)?;
    crate::spectral::algebraic_connectivity(&gi.graph().laplacian(&w)?)
}
