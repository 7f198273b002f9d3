//! Linear C-SVM trained by Sequential Minimal Optimization.
//!
//! Solves the dual
//!
//! ```text
//! max  Σ α_i − ½ Σ_ij α_i α_j y_i y_j ⟨x_i, x_j⟩
//! s.t. 0 ≤ α_i ≤ C,  Σ α_i y_i = 0
//! ```
//!
//! by repeatedly optimizing the maximal violating pair: the `I_up` index
//! with the largest `−y G` and the `I_low` index with the smallest, which is
//! the pair with the largest error gap `|E_1 − E_2|`. Iteration stops once
//! that gap falls below `tol`.

use serde::{Deserialize, Serialize};

use super::ClassifyError;

/// Curvature floor for pairs of identical points.
const TAU: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoParams {
    pub c: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SmoParams {
    fn default() -> Self {
        SmoParams {
            c: 1.0,
            tol: 1e-3,
            max_iter: 1_000_000,
        }
    }
}

impl SmoParams {
    pub fn validate(&self) -> Result<(), ClassifyError> {
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(ClassifyError::InvalidParams(format!(
                "C = {} must be > 0",
                self.c
            )));
        }
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(ClassifyError::InvalidParams(format!(
                "tol = {} must be > 0",
                self.tol
            )));
        }
        if self.max_iter == 0 {
            return Err(ClassifyError::InvalidParams("max_iter must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinarySvmModel {
    pub alphas: Vec<f64>,
    pub bias: f64,
    pub vectors: Vec<Vec<f64>>,
    /// +1 or −1 per training vector.
    pub labels: Vec<i8>,
    pub weights: Vec<f64>,
    pub c: f64,
    pub tol: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl BinarySvmModel {
    /// `⟨w, x⟩ + b`; positive means the +1 class.
    pub fn decision(&self, x: &[f64]) -> f64 {
        dot(&self.weights, x) + self.bias
    }

    pub fn dual_objective(&self) -> f64 {
        self.alphas.iter().sum::<f64>() - 0.5 * dot(&self.weights, &self.weights)
    }

    /// `Σ α_i y_i`, zero at any feasible point.
    pub fn equality_residual(&self) -> f64 {
        self.alphas
            .iter()
            .zip(&self.labels)
            .map(|(a, &y)| a * y as f64)
            .sum()
    }

    /// Largest KKT violation over the training set.
    pub fn max_kkt_violation(&self) -> f64 {
        let eps = 1e-12 * self.c;
        self.vectors
            .iter()
            .zip(&self.labels)
            .zip(&self.alphas)
            .map(|((x, &y), &a)| {
                let margin = y as f64 * self.decision(x);
                if a <= eps {
                    (1.0 - margin).max(0.0)
                } else if a >= self.c - eps {
                    (margin - 1.0).max(0.0)
                } else {
                    (margin - 1.0).abs()
                }
            })
            .fold(0.0, f64::max)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn train_binary(
    vectors: &[Vec<f64>],
    labels: &[i8],
    params: &SmoParams,
) -> Result<BinarySvmModel, ClassifyError> {
    solve(vectors, labels, params, None)
}

/// Like [`train_binary`], also returning the dual objective after every
/// pair update (starting with the objective at α = 0).
pub fn train_binary_traced(
    vectors: &[Vec<f64>],
    labels: &[i8],
    params: &SmoParams,
) -> Result<(BinarySvmModel, Vec<f64>), ClassifyError> {
    let mut trace = vec![0.0];
    let model = solve(vectors, labels, params, Some(&mut trace))?;
    Ok((model, trace))
}

fn validate_input(vectors: &[Vec<f64>], labels: &[i8]) -> Result<usize, ClassifyError> {
    if vectors.len() != labels.len() {
        return Err(ClassifyError::InvalidParams(format!(
            "{} vectors but {} labels",
            vectors.len(),
            labels.len()
        )));
    }
    let dim = vectors.first().map_or(0, Vec::len);
    for (i, (x, &y)) in vectors.iter().zip(labels).enumerate() {
        if x.len() != dim {
            return Err(ClassifyError::Dimension {
                expected: dim,
                found: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(ClassifyError::NonFinite(i));
        }
        if y != 1 && y != -1 {
            return Err(ClassifyError::InvalidParams(format!(
                "label {y} at {i} is not ±1"
            )));
        }
    }
    if !labels.contains(&1) || !labels.contains(&-1) {
        return Err(ClassifyError::SingleClass);
    }
    Ok(dim)
}

fn solve(
    x: &[Vec<f64>],
    y: &[i8],
    params: &SmoParams,
    mut trace: Option<&mut Vec<f64>>,
) -> Result<BinarySvmModel, ClassifyError> {
    params.validate()?;
    let dim = validate_input(x, y)?;
    let n = x.len();
    let c = params.c;
    let yf: Vec<f64> = y.iter().map(|&v| v as f64).collect();
    let sq_norm: Vec<f64> = x.iter().map(|v| dot(v, v)).collect();

    let mut alpha = vec![0.0; n];
    // gradient of ½αᵀQα − eᵀα
    let mut grad = vec![-1.0; n];
    let mut w = vec![0.0; dim];
    let mut iterations = 0;
    let mut converged = false;

    let in_up = |a: f64, y: f64| (y > 0.0 && a < c) || (y < 0.0 && a > 0.0);
    let in_low = |a: f64, y: f64| (y > 0.0 && a > 0.0) || (y < 0.0 && a < c);

    while iterations < params.max_iter {
        let mut i = None;
        let mut g_max = f64::NEG_INFINITY;
        let mut j = None;
        let mut g_min = f64::INFINITY;
        for t in 0..n {
            let v = -yf[t] * grad[t];
            if in_up(alpha[t], yf[t]) && v > g_max {
                g_max = v;
                i = Some(t);
            }
            if in_low(alpha[t], yf[t]) && v < g_min {
                g_min = v;
                j = Some(t);
            }
        }
        let (Some(i), Some(j)) = (i, j) else {
            converged = true;
            break;
        };
        if g_max - g_min < params.tol {
            converged = true;
            break;
        }

        let k_ij = dot(&x[i], &x[j]);
        let quad = (sq_norm[i] + sq_norm[j] - 2.0 * k_ij).max(TAU);
        let (old_i, old_j) = (alpha[i], alpha[j]);
        if yf[i] != yf[j] {
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }

        let di = (alpha[i] - old_i) * yf[i];
        let dj = (alpha[j] - old_j) * yf[j];
        let dw: Vec<f64> = x[i]
            .iter()
            .zip(&x[j])
            .map(|(a, b)| di * a + dj * b)
            .collect();
        for (wk, d) in w.iter_mut().zip(&dw) {
            *wk += d;
        }
        for t in 0..n {
            grad[t] += yf[t] * dot(&dw, &x[t]);
        }
        iterations += 1;

        if let Some(trace) = trace.as_deref_mut() {
            trace.push(alpha.iter().sum::<f64>() - 0.5 * dot(&w, &w));
        }
    }
    if !converged {
        log::warn!(
            "SMO stopped after {} iterations without reaching tol {}",
            iterations,
            params.tol
        );
    }

    let bias = bias_from_gradient(&alpha, &yf, &grad, c);
    Ok(BinarySvmModel {
        alphas: alpha,
        bias,
        vectors: x.to_vec(),
        labels: y.to_vec(),
        weights: w,
        c,
        tol: params.tol,
        iterations,
        converged,
    })
}

/// Mean of `−y G` over free vectors, else the midpoint of the feasible
/// interval.
fn bias_from_gradient(alpha: &[f64], y: &[f64], grad: &[f64], c: f64) -> f64 {
    let mut free_sum = 0.0;
    let mut n_free = 0usize;
    let mut upper = f64::INFINITY;
    let mut lower = f64::NEG_INFINITY;
    for t in 0..alpha.len() {
        let v = -y[t] * grad[t];
        if alpha[t] > 0.0 && alpha[t] < c {
            free_sum += v;
            n_free += 1;
        } else {
            let at_upper = alpha[t] >= c;
            // at a bound, v bounds b from one side
            if (y[t] > 0.0) != at_upper {
                lower = lower.max(v);
            } else {
                upper = upper.min(v);
            }
        }
    }
    if n_free > 0 {
        free_sum / n_free as f64
    } else if upper.is_finite() && lower.is_finite() {
        (upper + lower) / 2.0
    } else if upper.is_finite() {
        upper
    } else {
        lower
    }
}
