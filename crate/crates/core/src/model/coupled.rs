//! Coupled position x relevance logistic regression: the log odds of a pair
//! is `bias + sum(sign * P[position key] * T[relevance key])`, trained by
//! alternating L1 fits of `T` with `P` fixed and of `P` with `T` fixed.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::optim::{self, Problem};
use super::{index_keys, init_weights, weight_list, FeatureVector, ModelSpec, TrainConfig, TrainMeta};
use crate::corpus::Label;
use crate::error::{Error, Result};
use crate::statsdb::{FeatureKey, StatsDb};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoupledModel {
    pub spec: ModelSpec,
    pub bias: f64,
    /// Relevance weights `T`; absent keys are 0.
    #[serde(with = "weight_list")]
    pub relevance: BTreeMap<FeatureKey, f64>,
    /// Position multipliers `P`; absent keys are 1.
    #[serde(with = "weight_list")]
    pub positions: BTreeMap<FeatureKey, f64>,
    pub meta: TrainMeta,
    /// Joint objective at the start and after every half step.
    pub trace: Vec<f64>,
}

impl CoupledModel {
    pub fn score(&self, x: &FeatureVector) -> f64 {
        let mut s = self.bias;
        for e in &x.entries {
            let t = self.relevance.get(&e.rel).copied().unwrap_or(0.0);
            let p = e
                .pos
                .as_ref()
                .and_then(|k| self.positions.get(k).copied())
                .unwrap_or(1.0);
            s += e.sign * p * t;
        }
        s
    }
}

/// Which factor, if any, stays at its initial value.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Freeze {
    pub relevance: bool,
    pub positions: bool,
}

/// Data entries as dense indices: (relevance index, position index, sign).
struct Indexed {
    rows: Vec<Vec<(u32, Option<u32>, f64)>>,
    y: Vec<f64>,
    rel_keys: Vec<FeatureKey>,
    pos_keys: Vec<FeatureKey>,
}

fn index_data(data: &[(FeatureVector, Label)]) -> Indexed {
    let rel = index_keys(data.iter().flat_map(|(x, _)| x.entries.iter().map(|e| &e.rel)));
    let pos = index_keys(data.iter().flat_map(|(x, _)| x.entries.iter().filter_map(|e| e.pos.as_ref())));
    let rows = data
        .iter()
        .map(|(x, _)| {
            x.entries
                .iter()
                .map(|e| (rel[&e.rel], e.pos.as_ref().map(|p| pos[p]), e.sign))
                .collect()
        })
        .collect();
    Indexed {
        rows,
        y: data.iter().map(|(_, l)| l.sign()).collect(),
        rel_keys: rel.into_keys().collect(),
        pos_keys: pos.into_keys().collect(),
    }
}

/// Which factor a half step fits.
#[derive(Clone, Copy)]
enum Half {
    Relevance,
    Positions,
}

/// Builds the linear problem for one factor with the other held fixed.
/// Columns that are zero in every row cannot move the loss and are left
/// out, so they keep their current value. Returns the problem and the
/// mapping from problem columns back to factor indices.
fn half_problem(data: &Indexed, t: &[f64], p: &[f64], half: Half) -> (Problem, Vec<usize>) {
    let dim = match half {
        Half::Relevance => t.len(),
        Half::Positions => p.len(),
    };
    let mut dense_rows: Vec<BTreeMap<usize, f64>> = Vec::with_capacity(data.rows.len());
    let mut offset = Vec::with_capacity(data.rows.len());
    for row in &data.rows {
        let mut m: BTreeMap<usize, f64> = BTreeMap::new();
        let mut off = 0.0;
        for &(ri, pi, sign) in row {
            let (ri, pi) = (ri as usize, pi.map(|x| x as usize));
            match half {
                Half::Relevance => {
                    let scale = pi.map(|i| p[i]).unwrap_or(1.0);
                    *m.entry(ri).or_default() += sign * scale;
                }
                Half::Positions => match pi {
                    Some(i) => *m.entry(i).or_default() += sign * t[ri],
                    None => off += sign * t[ri],
                },
            }
        }
        m.retain(|_, v| *v != 0.0);
        dense_rows.push(m);
        offset.push(off);
    }
    let mut active = vec![false; dim];
    for m in &dense_rows {
        for j in m.keys() {
            active[*j] = true;
        }
    }
    let cols: Vec<usize> = (0..dim).filter(|j| active[*j]).collect();
    let mut to_col = vec![u32::MAX; dim];
    for (c, j) in cols.iter().enumerate() {
        to_col[*j] = c as u32;
    }
    let rows = dense_rows
        .into_iter()
        .map(|m| m.into_iter().map(|(j, v)| (to_col[j], v)).collect())
        .collect();
    let problem = Problem::new(rows, data.y.clone(), cols.len()).with_offset(offset);
    (problem, cols)
}

fn joint_objective(data: &Indexed, t: &[f64], p: &[f64], b: f64, lambda: f64) -> f64 {
    let (problem, cols) = half_problem(data, t, p, Half::Relevance);
    let w: Vec<f64> = cols.iter().map(|j| t[*j]).collect();
    let l1: f64 = t.iter().chain(p).map(|x| x.abs()).sum();
    problem.loss(&w, b) + lambda * l1
}

/// Alternating trainer with explicit starting values. Missing relevance
/// keys start at 0 and missing position keys at 1.
pub fn train_coupled_from(
    data: &[(FeatureVector, Label)],
    spec: ModelSpec,
    init_relevance: &BTreeMap<FeatureKey, f64>,
    init_positions: &BTreeMap<FeatureKey, f64>,
    cfg: &TrainConfig,
    freeze: Freeze,
    fingerprint: &str,
) -> Result<CoupledModel> {
    if data.is_empty() {
        return Err(Error::Empty("training set"));
    }
    let idx = index_data(data);
    let mut t: Vec<f64> = idx
        .rel_keys
        .iter()
        .map(|k| init_relevance.get(k).copied().unwrap_or(0.0))
        .collect();
    let mut p: Vec<f64> = idx
        .pos_keys
        .iter()
        .map(|k| init_positions.get(k).copied().unwrap_or(1.0))
        .collect();
    let mut b = 0.0;
    let lambda = cfg.solver.lambda;
    let mut trace = vec![joint_objective(&idx, &t, &p, b, lambda)];
    let mut iterations = 0;
    let mut alternations = 0;

    let halves: Vec<Half> = [
        (!freeze.relevance).then_some(Half::Relevance),
        (!freeze.positions).then_some(Half::Positions),
    ]
    .into_iter()
    .flatten()
    .collect();

    while alternations < cfg.max_alternations && !halves.is_empty() {
        alternations += 1;
        let mut max_change: f64 = 0.0;
        for &half in &halves {
            let (problem, cols) = half_problem(&idx, &t, &p, half);
            if cols.is_empty() {
                continue;
            }
            let target = match half {
                Half::Relevance => &mut t,
                Half::Positions => &mut p,
            };
            let w0 = cols.iter().map(|j| target[*j]).collect();
            let sol = optim::minimize(&problem, w0, b, &cfg.solver)?;
            iterations += sol.iterations;
            for (c, j) in cols.iter().enumerate() {
                max_change = max_change.max((sol.w[c] - target[*j]).abs());
                target[*j] = sol.w[c];
            }
            max_change = max_change.max((sol.b - b).abs());
            b = sol.b;
            let obj = joint_objective(&idx, &t, &p, b, lambda);
            let prev = *trace.last().expect("trace starts non-empty");
            trace.push(obj);
            if !obj.is_finite() || obj > prev + 1e-9 * (1.0 + prev.abs()) {
                return Err(Error::Divergence { trace });
            }
        }
        // with one factor frozen a single fit already solves the problem
        if halves.len() < 2 || max_change < cfg.alternation_tol {
            break;
        }
    }

    let relevance = idx
        .rel_keys
        .iter()
        .cloned()
        .zip(t)
        .filter(|(_, w)| *w != 0.0)
        .collect();
    let positions = idx.pos_keys.iter().cloned().zip(p).collect();
    Ok(CoupledModel {
        spec,
        bias: b,
        relevance,
        positions,
        meta: TrainMeta {
            lambda,
            iterations,
            objective: *trace.last().expect("trace starts non-empty"),
            alternations,
            fingerprint: fingerprint.to_string(),
        },
        trace,
    })
}

/// Coupled training initialized from the statistics database: relevance
/// weights start at their log odds, position multipliers at their odds.
pub fn train_coupled(data: &[(FeatureVector, Label)], spec: ModelSpec, db: &StatsDb, cfg: &TrainConfig) -> Result<CoupledModel> {
    if !spec.use_positions {
        return Err(Error::Config(format!("{} has no position features to couple", spec.variant)));
    }
    let init = init_weights(&spec, db);
    let (pos, rel): (BTreeMap<_, _>, BTreeMap<_, _>) = init.into_iter().partition(|(k, _)| k.is_position());
    let pos = pos.into_iter().map(|(k, w)| (k, w.exp())).collect();
    train_coupled_from(data, spec, &rel, &pos, cfg, Freeze::default(), &db.fingerprint)
}
