use serde::{Deserialize, Serialize};

use crate::dataset::{complete_within, CausalConfig, ColumnType, Dataset, RowMask};
use crate::error::{Error, Result};
use crate::partition::Subgroup;
use crate::stats::{
    bootstrap, fit_logistic, fit_ols, normal_two_sided_p, BootstrapCI, BootstrapOptions, Predictor,
};

/// Reason attached to estimates withheld for lack of overlap.
pub const OVERLAP_VIOLATED: &str = "overlap violated";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    MeanDifference,
    LinearSlope,
    LogisticSlope,
}

/// Effect of the cause on the outcome within one scope.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectEstimate {
    /// `None` when positivity fails.
    pub effect: Option<f64>,
    pub ci: Option<BootstrapCI>,
    pub standard_error: Option<f64>,
    pub p_value: Option<f64>,
    pub n: usize,
    pub n_treated: Option<usize>,
    pub n_untreated: Option<usize>,
    pub treated_mean_outcome: Option<f64>,
    pub untreated_mean_outcome: Option<f64>,
    pub estimator: Estimator,
    pub positivity_ok: bool,
    pub reason: Option<String>,
    /// Binary cause and binary outcome only: logistic slope, the log odds ratio.
    pub log_odds_ratio: Option<f64>,
}

impl EffectEstimate {
    /// Whether the bootstrap interval excludes zero.
    pub fn ci_excludes_zero(&self) -> Option<bool> {
        self.ci.map(|ci| ci.low > 0.0 || ci.high < 0.0)
    }
}

pub fn leaf_effect(
    ds: &Dataset,
    cfg: &CausalConfig,
    sg: &Subgroup,
    boot: BootstrapOptions,
) -> Result<EffectEstimate> {
    scope_effect(ds, cfg, &sg.mask, boot)
}

/// Effect estimate over the complete cause/outcome rows of `scope`.
///
/// A binary cause gives the treated-minus-untreated outcome mean, with a
/// percentile bootstrap interval and a normal p-value from the bootstrap
/// standard error. A continuous cause gives the regression slope of the
/// outcome on the cause (logistic for a binary outcome), with a bootstrap
/// interval and the model's Wald p-value.
pub fn scope_effect(
    ds: &Dataset,
    cfg: &CausalConfig,
    scope: &RowMask,
    boot: BootstrapOptions,
) -> Result<EffectEstimate> {
    let x_col = ds.column(&cfg.cause)?;
    let y_col = ds.column(&cfg.outcome)?;
    let rows = complete_within(ds, &[cfg.cause.as_str(), cfg.outcome.as_str()], scope)?.indices();
    if rows.is_empty() {
        return Err(Error::EmptySelection);
    }
    let x: Vec<f64> = rows.iter().map(|&i| x_col.values[i].unwrap()).collect();
    let y: Vec<f64> = rows.iter().map(|&i| y_col.values[i].unwrap()).collect();
    let binary_y = y_col.ctype == ColumnType::Binary;
    match x_col.ctype {
        ColumnType::Binary => mean_difference(&x, &y, binary_y, boot),
        ColumnType::Continuous => slope_effect(&x, &y, binary_y, boot),
        ColumnType::Categorical { .. } => Err(Error::Config(format!(
            "cause `{}` must be binary or continuous",
            cfg.cause
        ))),
    }
}

fn arm_means(x: &[f64], y: &[f64], idx: impl Iterator<Item = usize>) -> Option<(f64, f64)> {
    let (mut st, mut nt, mut su, mut nu) = (0.0, 0usize, 0.0, 0usize);
    for i in idx {
        if x[i] > 0.5 {
            st += y[i];
            nt += 1;
        } else {
            su += y[i];
            nu += 1;
        }
    }
    (nt > 0 && nu > 0).then(|| (st / nt as f64, su / nu as f64))
}

fn mean_difference(
    x: &[f64],
    y: &[f64],
    binary_y: bool,
    boot: BootstrapOptions,
) -> Result<EffectEstimate> {
    let n = x.len();
    let n_treated = x.iter().filter(|&&v| v > 0.5).count();
    let mut est = EffectEstimate {
        effect: None,
        ci: None,
        standard_error: None,
        p_value: None,
        n,
        n_treated: Some(n_treated),
        n_untreated: Some(n - n_treated),
        treated_mean_outcome: None,
        untreated_mean_outcome: None,
        estimator: Estimator::MeanDifference,
        positivity_ok: false,
        reason: None,
        log_odds_ratio: None,
    };
    let Some((mt, mu)) = arm_means(x, y, 0..n) else {
        est.reason = Some(OVERLAP_VIOLATED.to_string());
        return Ok(est);
    };
    let effect = mt - mu;
    let b = bootstrap(
        n,
        |idx| arm_means(x, y, idx.iter().copied()).map(|(a, b)| a - b),
        boot,
    )?;
    let se = b.standard_error();
    est.positivity_ok = true;
    est.effect = Some(effect);
    est.treated_mean_outcome = Some(mt);
    est.untreated_mean_outcome = Some(mu);
    est.ci = Some(b.ci);
    est.standard_error = Some(se);
    est.p_value = Some(wald_p(effect, se));
    if binary_y {
        est.log_odds_ratio = fit_logistic(&[Predictor::new("x", x.to_vec())], y)
            .ok()
            .filter(|f| f.converged && !f.quasi_separation)
            .map(|f| f.slope());
    }
    Ok(est)
}

fn wald_p(effect: f64, se: f64) -> f64 {
    if se > 0.0 {
        normal_two_sided_p(effect / se)
    } else if effect == 0.0 {
        1.0
    } else {
        0.0
    }
}

fn slope_effect(
    x: &[f64],
    y: &[f64],
    binary_y: bool,
    boot: BootstrapOptions,
) -> Result<EffectEstimate> {
    let fit = |xs: Vec<f64>, ys: &[f64]| {
        let preds = [Predictor::new("x", xs)];
        if binary_y {
            fit_logistic(&preds, ys)
        } else {
            fit_ols(&preds, ys)
        }
    };
    let full = fit(x.to_vec(), y)?;
    let effect = full.slope();
    let b = bootstrap(
        x.len(),
        |idx| {
            let xs: Vec<f64> = idx.iter().map(|&i| x[i]).collect();
            let ys: Vec<f64> = idx.iter().map(|&i| y[i]).collect();
            fit(xs, &ys).ok().map(|f| f.slope())
        },
        boot,
    )?;
    Ok(EffectEstimate {
        effect: Some(effect),
        ci: Some(b.ci),
        standard_error: Some(b.standard_error()),
        p_value: Some(full.p_values[1]),
        n: x.len(),
        n_treated: None,
        n_untreated: None,
        treated_mean_outcome: None,
        untreated_mean_outcome: None,
        estimator: if binary_y {
            Estimator::LogisticSlope
        } else {
            Estimator::LinearSlope
        },
        positivity_ok: true,
        reason: None,
        log_odds_ratio: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{load_table, LoadOptions};

    fn ds(text: &str) -> Dataset {
        load_table(text.as_bytes(), LoadOptions::default()).unwrap()
    }

    fn opts() -> BootstrapOptions {
        BootstrapOptions::new(200, 5)
    }

    #[test]
    fn mean_difference_example() {
        let d = ds("x,y\n1,3\n1,5\n0,1\n0,3\n");
        let cfg = CausalConfig::with_all_covariates(&d, "x", "y");
        let e = scope_effect(&d, &cfg, &RowMask::full(4), opts()).unwrap();
        assert_eq!(e.effect, Some(2.0));
        assert_eq!(e.n, 4);
        assert_eq!((e.n_treated, e.n_untreated), (Some(2), Some(2)));
        assert_eq!(e.estimator, Estimator::MeanDifference);
        assert!(e.positivity_ok);
        let ci = e.ci.unwrap();
        assert!(ci.low <= ci.high);
    }

    #[test]
    fn slope_on_exact_line() {
        let d = ds("X,y\n0,1\n1,3\n2,5\n3,7\n4,9\n");
        let cfg = CausalConfig::with_all_covariates(&d, "X", "y");
        let e = scope_effect(&d, &cfg, &RowMask::full(5), opts()).unwrap();
        assert!((e.effect.unwrap() - 2.0).abs() < 1e-12);
        assert_eq!(e.estimator, Estimator::LinearSlope);
    }

    #[test]
    fn zero_treated_violates_overlap() {
        let d = ds("x,y\n1,3\n0,5\n0,1\n0,3\n");
        let cfg = CausalConfig::with_all_covariates(&d, "x", "y");
        let untreated = RowMask::from_indices(4, [1, 2, 3]);
        let e = scope_effect(&d, &cfg, &untreated, opts()).unwrap();
        assert!(!e.positivity_ok);
        assert_eq!(e.effect, None);
        assert_eq!(e.reason.as_deref(), Some(OVERLAP_VIOLATED));
        assert_eq!(e.n_treated, Some(0));
    }

    #[test]
    fn constant_outcome_gives_zero_interval() {
        let d = ds("x,y\n1,2\n1,2\n0,2\n0,2\n1,2\n");
        let cfg = CausalConfig::with_all_covariates(&d, "x", "y");
        let e = scope_effect(&d, &cfg, &RowMask::full(5), opts()).unwrap();
        assert_eq!(e.effect, Some(0.0));
        let ci = e.ci.unwrap();
        assert_eq!((ci.low, ci.high), (0.0, 0.0));
        assert_eq!(e.p_value, Some(1.0));
    }

    #[test]
    fn two_by_two_reports_log_odds_ratio() {
        let mut text = String::from("x,y\n");
        for (x, y, k) in [(1, 1, 30), (1, 0, 10), (0, 1, 10), (0, 0, 30)] {
            for _ in 0..k {
                text.push_str(&format!("{x},{y}\n"));
            }
        }
        let d = ds(&text);
        let cfg = CausalConfig::with_all_covariates(&d, "x", "y");
        let e = scope_effect(&d, &cfg, &RowMask::full(80), opts()).unwrap();
        assert!((e.log_odds_ratio.unwrap() - 9f64.ln()).abs() < 1e-8);
        assert!((e.effect.unwrap() - 0.5).abs() < 1e-12);
    }
}
