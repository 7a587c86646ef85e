//! Rasch (1PL) fitting by joint MAP estimation and CTT-vs-IRT rank validation.
//!
//! The model is `P(correct) = logistic(theta_student - b_item)` with independent
//! Gaussian priors `theta ~ N(0, sd_theta^2)` and `b ~ N(0, sd_b^2)`. The theta
//! prior pins the location, so no anchor item is needed, and it keeps estimates
//! finite for students or items with perfect or zero scores.
//!
//! Optimization is Newton ascent on the log posterior with an Armijo backtracking
//! line search. The ability block of the Hessian is diagonal, so each step solves
//! only an items-by-items Schur complement system. Items that are exchangeable
//! (same observation mask, same total) share one step, which keeps their
//! estimates bitwise equal. All reductions run sequentially in index order, so a
//! fit is bitwise reproducible for a fixed input.

mod spearman;

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::CourseManifest;
use crate::ingest::FirstAttemptTable;

pub use spearman::{
    average_ranks, spearman_rho, spearman_scores, validate_rankings, PValueMethod,
    ValidationReport, MAX_EXACT_N,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IrtError {
    #[error("response matrix is degenerate: {0}")]
    DegenerateMatrix(&'static str),
    #[error("fit did not converge after {} iterations (gradient max-norm {:.3e})", .0.iterations, .0.grad_max_norm)]
    DidNotConverge(Box<RaschFit>),
    #[error("quiz {0} has no fitted items")]
    MissingItems(String),
    #[error("rankings do not cover the same ids")]
    MismatchedIds,
    #[error("rank correlation needs at least 3 items, got {0}")]
    TooFewItems(usize),
    #[error("exact permutation p-value supports n <= {max}, got {0}", max = MAX_EXACT_N)]
    ExactTooLarge(usize),
    #[error("invalid fit configuration: {0}")]
    InvalidConfig(String),
}

/// Students × items, row-major; `None` marks a missing cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseMatrix {
    pub students: Vec<String>,
    pub items: Vec<String>,
    pub cells: Vec<Option<bool>>,
}

impl ResponseMatrix {
    pub fn new(students: Vec<String>, items: Vec<String>, cells: Vec<Option<bool>>) -> Self {
        assert_eq!(
            cells.len(),
            students.len() * items.len(),
            "cell count mismatch"
        );
        ResponseMatrix {
            students,
            items,
            cells,
        }
    }

    pub fn get(&self, student: usize, item: usize) -> Option<bool> {
        self.cells[student * self.items.len() + item]
    }

    pub fn n_observed(&self) -> usize {
        self.cells.iter().filter(|c| c.is_some()).count()
    }

    /// Builds a matrix from first attempts over the given items, students in id order.
    pub fn from_first_attempts(table: &FirstAttemptTable, items: &[String]) -> Self {
        let students: Vec<String> = table.students().map(str::to_string).collect();
        let mut cells = Vec::with_capacity(students.len() * items.len());
        for s in &students {
            let row = &table.rows[s];
            cells.extend(items.iter().map(|i| row.get(i).map(|fa| fa.correct)));
        }
        ResponseMatrix::new(students, items.to_vec(), cells)
    }

    /// Drops rows and columns with no observed cell.
    pub fn pruned(&self) -> ResponseMatrix {
        let n_items = self.items.len();
        let keep_rows: Vec<usize> = (0..self.students.len())
            .filter(|&s| (0..n_items).any(|i| self.get(s, i).is_some()))
            .collect();
        let keep_cols: Vec<usize> = (0..n_items)
            .filter(|&i| keep_rows.iter().any(|&s| self.get(s, i).is_some()))
            .collect();
        let mut cells = Vec::with_capacity(keep_rows.len() * keep_cols.len());
        for &s in &keep_rows {
            cells.extend(keep_cols.iter().map(|&i| self.get(s, i)));
        }
        ResponseMatrix::new(
            keep_rows
                .iter()
                .map(|&s| self.students[s].clone())
                .collect(),
            keep_cols.iter().map(|&i| self.items[i].clone()).collect(),
            cells,
        )
    }

    /// Observed proportion correct per item; `None` for items with no observations.
    pub fn item_p_correct(&self) -> Vec<Option<f64>> {
        (0..self.items.len())
            .map(|i| {
                let (n, c) = (0..self.students.len())
                    .filter_map(|s| self.get(s, i))
                    .fold((0u32, 0u32), |(n, c), y| (n + 1, c + u32::from(y)));
                (n > 0).then(|| f64::from(c) / f64::from(n))
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub tolerance: f64,
    pub max_iters: usize,
    pub prior_sd_theta: f64,
    pub prior_sd_b: f64,
    /// Echoed for provenance; the fit itself draws no random numbers.
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            tolerance: 1e-6,
            max_iters: 500,
            prior_sd_theta: 1.0,
            prior_sd_b: 3.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RaschFit {
    pub item_difficulty: BTreeMap<String, f64>,
    pub ability: BTreeMap<String, f64>,
    pub log_posterior: f64,
    pub iterations: usize,
    pub converged: bool,
    pub grad_max_norm: f64,
}

pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// ln(1 + e^x) without overflow.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Predicted probability of a correct response.
pub fn predict(theta: f64, b: f64) -> f64 {
    logistic(theta - b)
}

fn logit_clipped(p: f64) -> f64 {
    (p / (1.0 - p)).ln().clamp(-4.0, 4.0)
}

struct Problem<'a> {
    m: &'a ResponseMatrix,
    student_totals: Vec<u32>,
    item_totals: Vec<u32>,
    /// First item exchangeable with each item.
    item_leader: Vec<usize>,
    inv_var_theta: f64,
    inv_var_b: f64,
}

struct Eval {
    grad_theta: Vec<f64>,
    grad_b: Vec<f64>,
    curv_theta: Vec<f64>,
    curv_b: Vec<f64>,
}

impl Problem<'_> {
    fn log_posterior(&self, theta: &[f64], b: &[f64]) -> f64 {
        let n_items = b.len();
        let mut lp = 0.0;
        for (s, &t) in theta.iter().enumerate() {
            for (i, &bi) in b.iter().enumerate() {
                if let Some(y) = self.m.cells[s * n_items + i] {
                    let eta = t - bi;
                    lp += if y { eta } else { 0.0 } - softplus(eta);
                }
            }
        }
        lp -= 0.5 * self.inv_var_theta * theta.iter().map(|t| t * t).sum::<f64>();
        lp -= 0.5 * self.inv_var_b * b.iter().map(|x| x * x).sum::<f64>();
        lp
    }

    /// Gradient and diagonal curvature. Observed totals enter as exact counts, so
    /// items (or students) with equal totals and equal estimates get bitwise equal
    /// gradients.
    fn evaluate(&self, theta: &[f64], b: &[f64]) -> Eval {
        let n_items = b.len();
        let mut sum_p_theta = vec![0.0; theta.len()];
        let mut sum_p_b = vec![0.0; n_items];
        let mut curv_theta = vec![0.0; theta.len()];
        let mut curv_b = vec![0.0; n_items];
        for (s, &t) in theta.iter().enumerate() {
            for (i, &bi) in b.iter().enumerate() {
                if self.m.cells[s * n_items + i].is_some() {
                    let p = logistic(t - bi);
                    let w = p * (1.0 - p);
                    sum_p_theta[s] += p;
                    sum_p_b[i] += p;
                    curv_theta[s] += w;
                    curv_b[i] += w;
                }
            }
        }
        Eval {
            grad_theta: (0..theta.len())
                .map(|s| {
                    (self.student_totals[s] as f64 - sum_p_theta[s]) - theta[s] * self.inv_var_theta
                })
                .collect(),
            grad_b: (0..n_items)
                .map(|i| (sum_p_b[i] - self.item_totals[i] as f64) - b[i] * self.inv_var_b)
                .collect(),
            curv_theta: curv_theta
                .into_iter()
                .map(|c| c + self.inv_var_theta)
                .collect(),
            curv_b: curv_b.into_iter().map(|c| c + self.inv_var_b).collect(),
        }
    }
}

impl Problem<'_> {
    /// Newton direction from the Schur complement over items; `None` if the
    /// system is not numerically positive definite.
    fn newton_direction(
        &self,
        theta: &[f64],
        b: &[f64],
        eval: &Eval,
    ) -> Option<(Vec<f64>, Vec<f64>)> {
        let n_items = b.len();
        let mut schur = DMatrix::<f64>::zeros(n_items, n_items);
        for i in 0..n_items {
            schur[(i, i)] = eval.curv_b[i];
        }
        let mut rhs = DVector::from_column_slice(&eval.grad_b);
        let mut w = vec![0.0; n_items];
        let mut observed = Vec::with_capacity(n_items);
        for (s, &t) in theta.iter().enumerate() {
            observed.clear();
            for (i, &bi) in b.iter().enumerate() {
                if self.m.cells[s * n_items + i].is_some() {
                    let p = logistic(t - bi);
                    w[i] = p * (1.0 - p);
                    observed.push(i);
                }
            }
            let inv_a = 1.0 / eval.curv_theta[s];
            for &i in &observed {
                rhs[i] += w[i] * eval.grad_theta[s] * inv_a;
                let wi = w[i] * inv_a;
                for &j in &observed {
                    schur[(i, j)] -= wi * w[j];
                }
            }
        }
        let solved = schur.cholesky()?.solve(&rhs);
        let dir_b: Vec<f64> = (0..n_items).map(|i| solved[self.item_leader[i]]).collect();
        if dir_b.iter().any(|d| !d.is_finite()) {
            return None;
        }
        let dir_theta = theta
            .iter()
            .enumerate()
            .map(|(s, &t)| {
                let mut acc = eval.grad_theta[s];
                for (i, &bi) in b.iter().enumerate() {
                    if self.m.cells[s * n_items + i].is_some() {
                        let p = logistic(t - bi);
                        acc += p * (1.0 - p) * dir_b[i];
                    }
                }
                acc / eval.curv_theta[s]
            })
            .collect();
        Some((dir_theta, dir_b))
    }
}

fn diagonal_direction(eval: &Eval) -> (Vec<f64>, Vec<f64>) {
    (
        eval.grad_theta
            .iter()
            .zip(&eval.curv_theta)
            .map(|(g, h)| g / h)
            .collect(),
        eval.grad_b
            .iter()
            .zip(&eval.curv_b)
            .map(|(g, h)| g / h)
            .collect(),
    )
}

/// Maps each item to the first item with the same observation mask and total.
fn exchangeable_leaders(matrix: &ResponseMatrix, item_totals: &[u32]) -> Vec<usize> {
    let n_items = matrix.items.len();
    let mut seen: BTreeMap<(Vec<bool>, u32), usize> = BTreeMap::new();
    (0..n_items)
        .map(|i| {
            let mask: Vec<bool> = (0..matrix.students.len())
                .map(|s| matrix.get(s, i).is_some())
                .collect();
            *seen.entry((mask, item_totals[i])).or_insert(i)
        })
        .collect()
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Joint MAP estimate of abilities and difficulties. Rows and columns without
/// observations must be pruned first (see [`ResponseMatrix::pruned`]).
pub fn fit_rasch(matrix: &ResponseMatrix, config: &FitConfig) -> Result<RaschFit, IrtError> {
    if !(config.tolerance > 0.0) || !(config.prior_sd_theta > 0.0) || !(config.prior_sd_b > 0.0) {
        return Err(IrtError::InvalidConfig(format!("{config:?}")));
    }
    let observed: BTreeSet<bool> = matrix.cells.iter().flatten().copied().collect();
    match observed.len() {
        0 => return Err(IrtError::DegenerateMatrix("no observed cells")),
        1 => {
            return Err(IrtError::DegenerateMatrix(
                "every observed response is identical",
            ))
        }
        _ => {}
    }
    let n_items = matrix.items.len();
    let n_students = matrix.students.len();
    for s in 0..n_students {
        if (0..n_items).all(|i| matrix.get(s, i).is_none()) {
            return Err(IrtError::DegenerateMatrix(
                "a student row has no observations",
            ));
        }
    }

    let mut b: Vec<f64> = matrix
        .item_p_correct()
        .into_iter()
        .map(|p| {
            p.map(|p| logit_clipped(1.0 - p))
                .ok_or(IrtError::DegenerateMatrix(
                    "an item column has no observations",
                ))
        })
        .collect::<Result<_, _>>()?;
    let mut theta: Vec<f64> = (0..n_students)
        .map(|s| {
            let (n, c) = (0..n_items)
                .filter_map(|i| matrix.get(s, i))
                .fold((0u32, 0u32), |(n, c), y| (n + 1, c + u32::from(y)));
            logit_clipped(f64::from(c) / f64::from(n))
        })
        .collect();

    let mut student_totals = vec![0u32; n_students];
    let mut item_totals = vec![0u32; n_items];
    for s in 0..n_students {
        for i in 0..n_items {
            if matrix.get(s, i) == Some(true) {
                student_totals[s] += 1;
                item_totals[i] += 1;
            }
        }
    }
    let problem = Problem {
        m: matrix,
        item_leader: exchangeable_leaders(matrix, &item_totals),
        student_totals,
        item_totals,
        inv_var_theta: 1.0 / (config.prior_sd_theta * config.prior_sd_theta),
        inv_var_b: 1.0 / (config.prior_sd_b * config.prior_sd_b),
    };
    let mut lp = problem.log_posterior(&theta, &b);
    let mut iterations = 0;
    let mut eval = problem.evaluate(&theta, &b);
    let mut grad_norm = max_abs(&eval.grad_theta).max(max_abs(&eval.grad_b));

    while grad_norm > config.tolerance && iterations < config.max_iters {
        iterations += 1;
        let (dir_theta, dir_b) = problem
            .newton_direction(&theta, &b, &eval)
            .unwrap_or_else(|| diagonal_direction(&eval));
        let slope: f64 = eval
            .grad_theta
            .iter()
            .zip(&dir_theta)
            .chain(eval.grad_b.iter().zip(&dir_b))
            .map(|(g, d)| g * d)
            .sum();

        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let t_new: Vec<f64> = theta
                .iter()
                .zip(&dir_theta)
                .map(|(x, d)| x + step * d)
                .collect();
            let b_new: Vec<f64> = b.iter().zip(&dir_b).map(|(x, d)| x + step * d).collect();
            let lp_new = problem.log_posterior(&t_new, &b_new);
            if lp_new >= lp + 1e-4 * step * slope {
                theta = t_new;
                b = b_new;
                lp = lp_new;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        eval = problem.evaluate(&theta, &b);
        grad_norm = max_abs(&eval.grad_theta).max(max_abs(&eval.grad_b));
        if !accepted {
            break;
        }
    }

    let fit = RaschFit {
        item_difficulty: matrix.items.iter().cloned().zip(b).collect(),
        ability: matrix.students.iter().cloned().zip(theta).collect(),
        log_posterior: lp,
        iterations,
        converged: grad_norm <= config.tolerance,
        grad_max_norm: grad_norm,
    };
    if fit.converged {
        Ok(fit)
    } else {
        Err(IrtError::DidNotConverge(Box::new(fit)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuizMeanDifficulty {
    pub quiz_id: String,
    pub mean_b: f64,
    pub n_items: usize,
}

/// Quizzes by mean item difficulty, hardest first; ties by quiz_id.
pub fn rank_quizzes_by_irt(
    fit: &RaschFit,
    manifest: &CourseManifest,
) -> Result<Vec<QuizMeanDifficulty>, IrtError> {
    let mut out = Vec::with_capacity(manifest.quizzes.len());
    for quiz in &manifest.quizzes {
        let bs: Vec<f64> = quiz
            .question_ids
            .iter()
            .filter_map(|q| fit.item_difficulty.get(q).copied())
            .collect();
        if bs.is_empty() {
            return Err(IrtError::MissingItems(quiz.quiz_id.clone()));
        }
        out.push(QuizMeanDifficulty {
            quiz_id: quiz.quiz_id.clone(),
            mean_b: bs.iter().sum::<f64>() / bs.len() as f64,
            n_items: bs.len(),
        });
    }
    out.sort_by(|a, b| {
        b.mean_b
            .total_cmp(&a.mean_b)
            .then_with(|| a.quiz_id.cmp(&b.quiz_id))
    });
    Ok(out)
}

/// Serialized output of the IRT validation stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IrtReport {
    pub config: FitConfig,
    pub item_difficulty: BTreeMap<String, f64>,
    pub quiz_mean_difficulty: Vec<QuizMeanDifficulty>,
    pub validation: ValidationReport,
    pub diagnostics: FitDiagnostics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub converged: bool,
    pub iterations: usize,
    pub grad_max_norm: f64,
    pub log_posterior: f64,
    pub n_students: usize,
    pub n_items: usize,
    pub n_observed: usize,
}

impl FitDiagnostics {
    pub fn new(fit: &RaschFit, matrix: &ResponseMatrix) -> Self {
        FitDiagnostics {
            converged: fit.converged,
            iterations: fit.iterations,
            grad_max_norm: fit.grad_max_norm,
            log_posterior: fit.log_posterior,
            n_students: matrix.students.len(),
            n_items: matrix.items.len(),
            n_observed: matrix.n_observed(),
        }
    }
}
