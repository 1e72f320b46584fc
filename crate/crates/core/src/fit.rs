//! Least-squares fitting state shared by every search driver.
//!
//! Each task keeps a thin QR factorization of its active design (an
//! intercept column plus the selected features) built by modified
//! Gram-Schmidt with one reorthogonalization pass. Candidate scoring uses
//! the projections of every feature onto the current basis so that the
//! residual sum of squares after adding feature `j` is
//! `rss - (r . x_j)^2 / ||x_j - Q Q^T x_j||^2`.

use std::f64::consts::{LN_2, PI};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::dataset::Dataset;
use crate::error::{Error, Result};

/// Relative threshold below which a candidate column counts as collinear
/// with the active design.
const COLLINEAR_TOL: f64 = 1e-9;
/// A task whose residual sum of squares falls to `DEGENERATE_RSS * ||y||^2`
/// is treated as perfectly fit.
const DEGENERATE_RSS: f64 = 1e-12;

/// Gaussian code length of `n` residuals with profile variance `rss / n`.
pub fn gaussian_code_bits(n: usize, rss: f64) -> f64 {
    let n = n as f64;
    0.5 * n * (2.0 * PI * rss / n).log2() + n / (2.0 * LN_2)
}

/// Bits saved on one task when its residual sum of squares drops from
/// `before` to `after`.
pub fn gain_bits(n: usize, before: f64, after: f64) -> f64 {
    0.5 * n as f64 * (before / after).log2()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Debug, Clone)]
struct TaskFit {
    basis: Vec<Vec<f64>>,
    // Column c of the triangular factor, length c + 1.
    r: Vec<Vec<f64>>,
    qty: Vec<f64>,
    residual: Vec<f64>,
    rss: f64,
    floor: f64,
    features: Vec<usize>,
    proj_norm2: Vec<f64>,
}

impl TaskFit {
    fn new(y: &[f64], m: usize) -> Self {
        let n = y.len();
        let inv = 1.0 / (n as f64).sqrt();
        let q0 = vec![inv; n];
        let mean = y.iter().sum::<f64>() / n as f64;
        let residual: Vec<f64> = y.iter().map(|v| v - mean).collect();
        let rss = dot(&residual, &residual);
        let floor = (DEGENERATE_RSS * dot(y, y)).max(f64::MIN_POSITIVE);
        TaskFit {
            qty: vec![dot(&q0, y)],
            basis: vec![q0],
            r: vec![vec![(n as f64).sqrt()]],
            residual,
            rss,
            floor,
            features: Vec::new(),
            proj_norm2: vec![0.0; m],
        }
    }

    fn is_degenerate(&self) -> bool {
        self.rss <= self.floor
    }
}

/// Outcome of scoring one feature against one task.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Candidate {
    /// Residual sum of squares the task would have after the addition.
    Rss(f64),
    Active,
    Singular,
}

#[derive(Debug, Clone)]
pub struct FitState<'a> {
    data: &'a Dataset,
    centered_norm2: Vec<f64>,
    tasks: Vec<TaskFit>,
}

impl<'a> FitState<'a> {
    /// Intercept-only fit for every task.
    pub fn new(data: &'a Dataset) -> Self {
        let n = data.n() as f64;
        let centered_norm2 = (0..data.m())
            .map(|j| {
                let col = data.feature(j);
                let mean = col.iter().sum::<f64>() / n;
                col.iter().map(|v| (v - mean) * (v - mean)).sum()
            })
            .collect();
        let tasks = (0..data.h())
            .map(|t| TaskFit::new(data.response(t), data.m()))
            .collect();
        FitState {
            data,
            centered_norm2,
            tasks,
        }
    }

    /// Fit with the given per-task supports, added in order.
    pub fn with_support(data: &'a Dataset, support: &[Vec<usize>]) -> Result<Self> {
        if support.len() != data.h() {
            return Err(Error::ShapeMismatch(format!(
                "support lists {} tasks, dataset has {}",
                support.len(),
                data.h()
            )));
        }
        let mut state = FitState::new(data);
        for (t, feats) in support.iter().enumerate() {
            for &j in feats {
                state.add(j, &[t])?;
            }
        }
        Ok(state)
    }

    pub fn data(&self) -> &'a Dataset {
        self.data
    }

    pub fn n(&self) -> usize {
        self.data.n()
    }

    pub fn h(&self) -> usize {
        self.tasks.len()
    }

    pub fn rss(&self, task: usize) -> f64 {
        self.tasks[task].rss
    }

    /// Profile variance estimate `rss / n`.
    pub fn sigma2(&self, task: usize) -> f64 {
        self.tasks[task].rss / self.n() as f64
    }

    pub fn rss_floor(&self, task: usize) -> f64 {
        self.tasks[task].floor
    }

    pub fn is_degenerate(&self, task: usize) -> bool {
        self.tasks[task].is_degenerate()
    }

    pub fn active(&self, task: usize) -> &[usize] {
        &self.tasks[task].features
    }

    pub fn is_active(&self, feature: usize, task: usize) -> bool {
        self.tasks[task].features.contains(&feature)
    }

    pub fn residual(&self, task: usize) -> &[f64] {
        &self.tasks[task].residual
    }

    /// Residual code length summed over all tasks. Fails on a perfect fit.
    pub fn residual_bits(&self) -> Result<f64> {
        let n = self.n();
        let mut total = 0.0;
        for (t, task) in self.tasks.iter().enumerate() {
            if task.is_degenerate() {
                return Err(Error::DegenerateResidual {
                    task: t,
                    rss: task.rss,
                    floor: task.floor,
                });
            }
            total += gaussian_code_bits(n, task.rss);
        }
        Ok(total)
    }

    /// Residual code length with each task's rss clamped at its
    /// degenerate-fit floor; always finite.
    pub fn residual_bits_floored(&self) -> f64 {
        let n = self.n();
        self.tasks
            .iter()
            .map(|t| gaussian_code_bits(n, t.rss.max(t.floor)))
            .sum()
    }

    fn candidate_with_dot(&self, feature: usize, task: usize, r_dot_x: f64) -> Candidate {
        let fit = &self.tasks[task];
        if fit.features.contains(&feature) {
            return Candidate::Active;
        }
        let norm2 = self.centered_norm2[feature];
        let d = norm2 - fit.proj_norm2[feature];
        if norm2 <= f64::MIN_POSITIVE || d <= COLLINEAR_TOL * norm2 {
            return Candidate::Singular;
        }
        let after = (fit.rss - r_dot_x * r_dot_x / d).max(0.0);
        Candidate::Rss(after.min(fit.rss))
    }

    /// Residual sum of squares of `task` after adding `feature` to it.
    pub fn candidate(&self, feature: usize, task: usize) -> Candidate {
        let c = dot(&self.tasks[task].residual, self.data.feature(feature));
        self.candidate_with_dot(feature, task, c)
    }

    /// Scores every feature against `task`. Entries are computed
    /// independently, so the result does not depend on the thread count.
    pub fn score_task(&self, task: usize) -> Vec<Candidate> {
        let residual = &self.tasks[task].residual;
        (0..self.data.m())
            .into_par_iter()
            .map(|j| self.candidate_with_dot(j, task, dot(residual, self.data.feature(j))))
            .collect()
    }

    /// Bits saved on `task` by the candidate, with the after-fit rss
    /// clamped at the degenerate floor. `None` for active or collinear
    /// candidates.
    pub fn candidate_gain(&self, cand: Candidate, task: usize) -> Option<f64> {
        match cand {
            Candidate::Rss(after) => {
                let fit = &self.tasks[task];
                if fit.is_degenerate() {
                    return Some(0.0);
                }
                Some(gain_bits(self.n(), fit.rss, after.max(fit.floor)))
            }
            Candidate::Active | Candidate::Singular => None,
        }
    }

    /// Reduction in residual bits from adding `feature` to each of `tasks`.
    pub fn delta_se(&self, feature: usize, tasks: &[usize]) -> Result<f64> {
        let mut total = 0.0;
        for &t in tasks {
            if t >= self.h() {
                return Err(Error::domain(format!("task {t} out of range")));
            }
            match self.candidate(feature, t) {
                Candidate::Rss(after) => {
                    let fit = &self.tasks[t];
                    if after <= fit.floor {
                        return Err(Error::DegenerateResidual {
                            task: t,
                            rss: after,
                            floor: fit.floor,
                        });
                    }
                    total += gain_bits(self.n(), fit.rss, after);
                }
                Candidate::Active => {
                    return Err(Error::domain(format!(
                        "feature {feature} already active in task {t}"
                    )))
                }
                Candidate::Singular => return Err(Error::SingularDesign { feature, task: t }),
            }
        }
        Ok(total)
    }

    /// Appends `feature` to the design of each listed task. All-or-nothing:
    /// if any task rejects the column, no task is modified.
    pub fn add(&mut self, feature: usize, tasks: &[usize]) -> Result<()> {
        if feature >= self.data.m() {
            return Err(Error::domain(format!("feature {feature} out of range")));
        }
        let mut prepared = Vec::with_capacity(tasks.len());
        for &t in tasks {
            if t >= self.h() {
                return Err(Error::domain(format!("task {t} out of range")));
            }
            if self.is_active(feature, t) {
                return Err(Error::domain(format!(
                    "feature {feature} already active in task {t}"
                )));
            }
            prepared.push((t, self.orthogonalize(feature, t)?));
        }
        for (t, (q, rcol)) in prepared {
            let xt_q = self.data.x.tr_mul(&DVector::from_column_slice(&q));
            let y = self.data.response(t);
            let fit = &mut self.tasks[t];
            for (p, v) in fit.proj_norm2.iter_mut().zip(xt_q.iter()) {
                *p += v * v;
            }
            fit.qty.push(dot(&q, y));
            let proj = dot(&q, &fit.residual);
            for (r, qi) in fit.residual.iter_mut().zip(&q) {
                *r -= proj * qi;
            }
            fit.rss = dot(&fit.residual, &fit.residual);
            fit.basis.push(q);
            fit.r.push(rcol);
            fit.features.push(feature);
        }
        Ok(())
    }

    fn orthogonalize(&self, feature: usize, task: usize) -> Result<(Vec<f64>, Vec<f64>)> {
        let fit = &self.tasks[task];
        let mut v = self.data.feature(feature).to_vec();
        let mut coefs = vec![0.0; fit.basis.len()];
        for _ in 0..2 {
            for (c, q) in coefs.iter_mut().zip(&fit.basis) {
                let p = dot(q, &v);
                *c += p;
                for (vi, qi) in v.iter_mut().zip(q) {
                    *vi -= p * qi;
                }
            }
        }
        let norm2 = dot(&v, &v);
        let scale = self.centered_norm2[feature];
        if scale <= f64::MIN_POSITIVE || norm2 <= COLLINEAR_TOL * scale {
            return Err(Error::SingularDesign { feature, task });
        }
        let norm = norm2.sqrt();
        v.iter_mut().for_each(|vi| *vi /= norm);
        coefs.push(norm);
        Ok((v, coefs))
    }

    /// Intercept and per-feature coefficients of `task`, features in the
    /// order they were added.
    pub fn coefficients(&self, task: usize) -> (f64, Vec<(usize, f64)>) {
        let fit = &self.tasks[task];
        let p = fit.r.len();
        let mut b = fit.qty.clone();
        for col in (0..p).rev() {
            b[col] /= fit.r[col][col];
            let bc = b[col];
            for (row, rv) in fit.r[col].iter().enumerate().take(col) {
                b[row] -= rv * bc;
            }
        }
        let coefs = fit.features.iter().copied().zip(b[1..].iter().copied()).collect();
        (b[0], coefs)
    }

    /// Dense m × h coefficient matrix, zero outside the active set.
    pub fn beta(&self) -> DMatrix<f64> {
        let mut beta = DMatrix::zeros(self.data.m(), self.h());
        for t in 0..self.h() {
            for (j, v) in self.coefficients(t).1 {
                beta[(j, t)] = v;
            }
        }
        beta
    }
}

/// Maximum-likelihood logistic regression on a subset of features.
#[derive(Debug, Clone, PartialEq)]
pub struct LogisticFit {
    pub features: Vec<usize>,
    /// Intercept first, then one coefficient per entry of `features`.
    pub coefficients: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub separation: bool,
}

const SEPARATION_NORM: f64 = 1e4;

impl LogisticFit {
    pub fn linear_predictor(&self, data: &Dataset, row: usize) -> f64 {
        self.features
            .iter()
            .zip(&self.coefficients[1..])
            .fold(self.coefficients[0], |acc, (&j, b)| acc + b * data.x[(row, j)])
    }

    pub fn probability(&self, data: &Dataset, row: usize) -> f64 {
        sigmoid(self.linear_predictor(data, row))
    }

    pub fn predict(&self, data: &Dataset, row: usize) -> f64 {
        if self.linear_predictor(data, row) >= 0.0 {
            1.0
        } else {
            0.0
        }
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn log1pexp(z: f64) -> f64 {
    if z > 35.0 {
        z
    } else if z < -35.0 {
        z.exp()
    } else {
        z.exp().ln_1p()
    }
}

fn deviance(z: &DMatrix<f64>, y: &[f64], beta: &DVector<f64>) -> f64 {
    let eta = z * beta;
    eta.iter()
        .zip(y)
        .map(|(&e, &yi)| 2.0 * (log1pexp(e) - yi * e))
        .sum()
}

/// Newton/IRLS fit of a logistic model with intercept on `features` of
/// `task`. Responses must be 0/1. Iteration stops when the largest
/// coefficient change falls below `tol`, at `max_iter`, or when the
/// coefficient norm exceeds 1e4 (quasi-complete separation), in which case
/// the returned coefficients are rescaled to that norm and `separation` is
/// set.
pub fn refit_logistic(
    data: &Dataset,
    features: &[usize],
    task: usize,
    max_iter: usize,
    tol: f64,
) -> Result<LogisticFit> {
    let n = data.n();
    let y = data.response(task);
    if y.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(Error::domain(format!("task {task} responses are not 0/1")));
    }
    let p = features.len() + 1;
    let z = DMatrix::from_fn(n, p, |i, c| if c == 0 { 1.0 } else { data.x[(i, features[c - 1])] });
    let mut beta = DVector::zeros(p);
    let mut dev = deviance(&z, y, &beta);
    let mut converged = false;
    let mut separation = false;
    let mut iterations = 0;

    while iterations < max_iter {
        iterations += 1;
        let eta = &z * &beta;
        let mu: Vec<f64> = eta.iter().map(|&e| sigmoid(e)).collect();
        let w: Vec<f64> = mu.iter().map(|&m| (m * (1.0 - m)).max(1e-12)).collect();
        let mut hess = DMatrix::zeros(p, p);
        let mut grad = DVector::zeros(p);
        for i in 0..n {
            let resid = y[i] - mu[i];
            for a in 0..p {
                let za = z[(i, a)];
                grad[a] += za * resid;
                for b in 0..=a {
                    hess[(a, b)] += w[i] * za * z[(i, b)];
                }
            }
        }
        for a in 0..p {
            for b in 0..a {
                hess[(b, a)] = hess[(a, b)];
            }
        }
        let step = solve_spd(hess, &grad)
            .ok_or_else(|| Error::Numeric("logistic Hessian is not positive definite".into()))?;

        let mut scale = 1.0;
        let mut candidate = &beta + &step;
        let mut cand_dev = deviance(&z, y, &candidate);
        for _ in 0..30 {
            if cand_dev <= dev + 1e-12 * dev.abs().max(1.0) {
                break;
            }
            scale *= 0.5;
            candidate = &beta + &step * scale;
            cand_dev = deviance(&z, y, &candidate);
        }
        let change = (&candidate - &beta).amax();
        beta = candidate;
        dev = cand_dev;

        if beta.norm() > SEPARATION_NORM {
            separation = true;
            break;
        }
        if change < tol {
            converged = true;
            break;
        }
    }
    if !separation && dev / (n as f64) < 1e-8 {
        separation = true;
    }
    if beta.norm() > SEPARATION_NORM {
        beta *= SEPARATION_NORM / beta.norm();
    }
    if beta.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("logistic coefficients are not finite".into()));
    }
    Ok(LogisticFit {
        features: features.to_vec(),
        coefficients: beta.iter().copied().collect(),
        iterations,
        converged,
        separation,
    })
}

fn solve_spd(a: DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    if let Some(ch) = a.clone().cholesky() {
        return Some(ch.solve(b));
    }
    let trace = a.trace().abs().max(1.0);
    let p = a.nrows();
    let ridged = a + DMatrix::identity(p, p) * (1e-10 * trace);
    ridged.cholesky().map(|ch| ch.solve(b))
}
