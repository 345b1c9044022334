//! Ordinary least squares and logistic regression by iteratively
//! reweighted least squares. Both always include an intercept.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::linalg::Qr;
use super::normal_two_sided_p;
use crate::error::{Error, Result};

pub const INTERCEPT: &str = "(intercept)";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Linear,
    Logistic,
}

/// One named column of a design matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Predictor {
    pub name: String,
    pub values: Vec<f64>,
}

impl Predictor {
    pub fn new(name: impl Into<String>, values: Vec<f64>) -> Predictor {
        Predictor {
            name: name.into(),
            values,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionFit {
    /// Term names, intercept first.
    pub terms: Vec<String>,
    pub coefficients: Vec<f64>,
    pub standard_errors: Vec<f64>,
    /// Two-sided Wald p-values.
    pub p_values: Vec<f64>,
    pub n_used: usize,
    pub converged: bool,
    pub iterations: usize,
    pub model_kind: ModelKind,
    /// Logistic only: set when coefficients diverged without converging.
    pub quasi_separation: bool,
}

impl RegressionFit {
    /// Coefficient of the first predictor after the intercept.
    pub fn slope(&self) -> f64 {
        self.coefficients[1]
    }

    pub fn coefficient(&self, term: &str) -> Option<f64> {
        self.terms
            .iter()
            .position(|t| t == term)
            .map(|i| self.coefficients[i])
    }
}

fn design(predictors: &[Predictor], n: usize) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    if predictors.iter().any(|p| p.values.len() != n) {
        return Err(Error::Config(
            "predictor length differs from outcome length".into(),
        ));
    }
    if n < predictors.len() + 2 {
        return Err(Error::SampleSize {
            needed: predictors.len() + 2,
            got: n,
        });
    }
    let mut names = vec![INTERCEPT.to_string()];
    let mut cols = vec![vec![1.0; n]];
    for p in predictors {
        names.push(p.name.clone());
        cols.push(p.values.clone());
    }
    Qr::factor(&cols).map_err(|j| Error::Collinearity {
        column: names[j].clone(),
    })?;
    Ok((names, cols))
}

fn predict(cols: &[Vec<f64>], beta: &[f64], i: usize) -> f64 {
    cols.iter().zip(beta).map(|(c, b)| c[i] * b).sum()
}

/// Least-squares fit of `y` on the predictors plus an intercept.
///
/// Standard errors use the unbiased residual variance; p-values come from
/// the t distribution with `n - k` degrees of freedom.
pub fn fit_ols(predictors: &[Predictor], y: &[f64]) -> Result<RegressionFit> {
    let n = y.len();
    let (terms, cols) = design(predictors, n)?;
    let qr = Qr::factor(&cols).expect("rank checked in design");
    let beta = qr.solve(y);
    let k = beta.len();
    let rss: f64 = (0..n)
        .map(|i| (y[i] - predict(&cols, &beta, i)).powi(2))
        .sum();
    let df = (n - k) as f64;
    let sigma2 = rss / df;
    let se: Vec<f64> = qr
        .inverse_gram_diagonal()
        .iter()
        .map(|d| (sigma2 * d).sqrt())
        .collect();
    let t = StudentsT::new(0.0, 1.0, df).expect("df positive");
    let p_values = beta
        .iter()
        .zip(&se)
        .map(|(&b, &s)| {
            if s == 0.0 || !s.is_finite() {
                if b == 0.0 {
                    1.0
                } else {
                    0.0
                }
            } else {
                (2.0 * (1.0 - t.cdf((b / s).abs()))).clamp(0.0, 1.0)
            }
        })
        .collect();
    Ok(RegressionFit {
        terms,
        coefficients: beta,
        standard_errors: se,
        p_values,
        n_used: n,
        converged: true,
        iterations: 1,
        model_kind: ModelKind::Linear,
        quasi_separation: false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogisticOptions {
    /// Convergence when the largest absolute coefficient change falls below this.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Coefficient magnitude that, without convergence, signals quasi-separation.
    pub separation_bound: f64,
}

impl Default for LogisticOptions {
    fn default() -> Self {
        LogisticOptions {
            tolerance: 1e-8,
            max_iterations: 50,
            separation_bound: 15.0,
        }
    }
}

pub fn fit_logistic(predictors: &[Predictor], y: &[f64]) -> Result<RegressionFit> {
    fit_logistic_with(predictors, y, LogisticOptions::default())
}

fn sigmoid(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

const MIN_WEIGHT: f64 = 1e-12;

/// Maximum-likelihood logistic fit by IRLS (Newton-Raphson on the
/// canonical link), starting from zero coefficients.
pub fn fit_logistic_with(
    predictors: &[Predictor],
    y: &[f64],
    opts: LogisticOptions,
) -> Result<RegressionFit> {
    let n = y.len();
    if y.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(Error::Config("logistic outcome must be 0/1".into()));
    }
    let positives = y.iter().filter(|&&v| v == 1.0).count();
    if positives == 0 || positives == n {
        return Err(Error::Separation);
    }
    let (terms, cols) = design(predictors, n)?;
    let k = cols.len();
    let mut beta = vec![0.0; k];
    let mut converged = false;
    let mut iterations = 0;
    let mut weighted = vec![vec![0.0; n]; k];
    let mut z = vec![0.0; n];

    while iterations < opts.max_iterations {
        iterations += 1;
        for i in 0..n {
            let eta = predict(&cols, &beta, i);
            let mu = sigmoid(eta);
            let w = (mu * (1.0 - mu)).max(MIN_WEIGHT);
            let sw = w.sqrt();
            z[i] = sw * (eta + (y[i] - mu) / w);
            for j in 0..k {
                weighted[j][i] = sw * cols[j][i];
            }
        }
        let Ok(qr) = Qr::factor(&weighted) else {
            break;
        };
        let next = qr.solve(&z);
        if next.iter().any(|b| !b.is_finite()) {
            break;
        }
        let change = next
            .iter()
            .zip(&beta)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        beta = next;
        if change < opts.tolerance {
            converged = true;
            break;
        }
    }

    // inverse information at the final estimate
    for i in 0..n {
        let mu = sigmoid(predict(&cols, &beta, i));
        let sw = (mu * (1.0 - mu)).max(MIN_WEIGHT).sqrt();
        for j in 0..k {
            weighted[j][i] = sw * cols[j][i];
        }
    }
    let se = match Qr::factor(&weighted) {
        Ok(qr) => qr
            .inverse_gram_diagonal()
            .into_iter()
            .map(f64::sqrt)
            .collect(),
        Err(_) => vec![f64::NAN; k],
    };
    let p_values = beta
        .iter()
        .zip(&se)
        .map(|(&b, &s)| {
            if s.is_finite() && s > 0.0 {
                normal_two_sided_p(b / s)
            } else {
                1.0
            }
        })
        .collect();
    let quasi_separation = !converged && beta.iter().any(|b| b.abs() > opts.separation_bound);
    Ok(RegressionFit {
        terms,
        coefficients: beta,
        standard_errors: se,
        p_values,
        n_used: n,
        converged,
        iterations,
        model_kind: ModelKind::Logistic,
        quasi_separation,
    })
}
