//! L1-regularized logistic regression by proximal gradient descent.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `log(1 + exp(x))` without overflow.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn soft_threshold(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

/// Sparse design with labels in {-1, +1} and optional fixed per-row
/// offsets added to the linear score.
#[derive(Debug, Clone)]
pub struct Problem {
    pub rows: Vec<Vec<(u32, f64)>>,
    pub y: Vec<f64>,
    pub offset: Vec<f64>,
    pub dim: usize,
}

impl Problem {
    pub fn new(rows: Vec<Vec<(u32, f64)>>, y: Vec<f64>, dim: usize) -> Self {
        assert_eq!(rows.len(), y.len());
        let offset = vec![0.0; rows.len()];
        Problem { rows, y, offset, dim }
    }

    pub fn with_offset(mut self, offset: Vec<f64>) -> Self {
        assert_eq!(offset.len(), self.rows.len());
        self.offset = offset;
        self
    }

    fn margin(&self, i: usize, w: &[f64], b: f64) -> f64 {
        let z: f64 = self.rows[i].iter().map(|&(j, x)| w[j as usize] * x).sum();
        self.y[i] * (z + b + self.offset[i])
    }

    /// Mean logistic loss.
    pub fn loss(&self, w: &[f64], b: f64) -> f64 {
        let n = self.rows.len() as f64;
        (0..self.rows.len()).map(|i| softplus(-self.margin(i, w, b))).sum::<f64>() / n
    }

    /// Mean logistic loss with its gradient in `w` and in the bias.
    pub fn loss_grad(&self, w: &[f64], b: f64) -> (f64, Vec<f64>, f64) {
        let n = self.rows.len() as f64;
        let mut g = vec![0.0; self.dim];
        let mut gb = 0.0;
        let mut f = 0.0;
        for i in 0..self.rows.len() {
            let m = self.margin(i, w, b);
            f += softplus(-m);
            let c = -self.y[i] * sigmoid(-m) / n;
            for &(j, x) in &self.rows[i] {
                g[j as usize] += c * x;
            }
            gb += c;
        }
        (f / n, g, gb)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub lambda: f64,
    /// Largest step tried; halved whenever the quadratic upper bound fails
    /// and doubled back (up to this value) after every accepted step.
    pub step: f64,
    /// Stop once an accepted step improves the objective by less than this.
    pub tol: f64,
    pub max_iter: usize,
    pub fit_bias: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            lambda: 1e-3,
            step: 64.0,
            tol: 1e-7,
            max_iter: 2000,
            fit_bias: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub w: Vec<f64>,
    pub b: f64,
    pub iterations: usize,
    pub objective: f64,
    /// Objective before the first step and after every accepted step.
    pub trace: Vec<f64>,
}

fn l1(w: &[f64]) -> f64 {
    w.iter().map(|x| x.abs()).sum()
}

/// Minimizes `loss(w, b) + lambda * |w|_1` starting from `(w0, b0)`.
/// The bias is never penalized and stays at `b0` unless `fit_bias`.
pub fn minimize(problem: &Problem, w0: Vec<f64>, b0: f64, cfg: &SolverConfig) -> Result<Solution> {
    if cfg.lambda.is_nan() || cfg.lambda < 0.0 || cfg.step.is_nan() || cfg.step <= 0.0 {
        return Err(Error::Config(format!(
            "lambda must be >= 0 and step > 0 (got {} and {})",
            cfg.lambda, cfg.step
        )));
    }
    if problem.rows.is_empty() {
        return Err(Error::Empty("training set"));
    }
    assert_eq!(w0.len(), problem.dim);
    let mut w = w0;
    let mut b = b0;
    let mut t = cfg.step;
    let (mut f, mut g, mut gb) = problem.loss_grad(&w, b);
    if !f.is_finite() {
        return Err(Error::NonFiniteLoss { iteration: 0 });
    }
    let mut obj = f + cfg.lambda * l1(&w);
    let mut trace = vec![obj];
    let mut iterations = 0;
    while iterations < cfg.max_iter {
        iterations += 1;
        let (w_new, b_new, f_new, g_new, gb_new) = loop {
            let w_new: Vec<f64> = w
                .iter()
                .zip(&g)
                .map(|(wi, gi)| soft_threshold(wi - t * gi, t * cfg.lambda))
                .collect();
            let b_new = if cfg.fit_bias { b - t * gb } else { b };
            let (f_new, g_new, gb_new) = problem.loss_grad(&w_new, b_new);
            if !f_new.is_finite() && t < 1e-30 {
                return Err(Error::NonFiniteLoss { iteration: iterations });
            }
            let mut lin = (b_new - b) * gb;
            let mut sq = (b_new - b).powi(2);
            for ((wn, wo), gi) in w_new.iter().zip(&w).zip(&g) {
                lin += (wn - wo) * gi;
                sq += (wn - wo).powi(2);
            }
            if f_new.is_finite() && f_new <= f + lin + sq / (2.0 * t) + 1e-15 {
                break (w_new, b_new, f_new, g_new, gb_new);
            }
            t /= 2.0;
        };
        let obj_new = f_new + cfg.lambda * l1(&w_new);
        if obj_new > obj {
            // rounding-level increase: keep the previous iterate
            break;
        }
        let improvement = obj - obj_new;
        w = w_new;
        b = b_new;
        obj = obj_new;
        f = f_new;
        g = g_new;
        gb = gb_new;
        trace.push(obj);
        if improvement < cfg.tol {
            break;
        }
        // probe a longer step next time; backtracking shortens it again
        t = (t * 2.0).min(cfg.step);
    }
    Ok(Solution {
        w,
        b,
        iterations,
        objective: obj,
        trace,
    })
}
