//! Covariate imbalance between treatment arms, for the whole analysis scope
//! or a single subgroup.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{complete_within, CausalConfig, ColumnType, Dataset, RowMask};
use crate::error::{Error, Failure, Result};
use crate::scope::Scope;
use crate::stats::{mean, sample_var, spearman};

pub const DEFAULT_THRESHOLD: f64 = 0.2;

/// Fewest complete rows a scope needs before a covariate is scored.
pub const MIN_SCOPE_ROWS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Smd,
    Spearman,
}

/// Standardized mean difference of `z` between treated and untreated rows:
/// `(mean1 - mean0) / sqrt(0.5 (s1^2 + s0^2))` with sample variances.
///
/// Returns `Ok(None)` when both arms are constant at different values.
pub fn smd(treated: &[f64], untreated: &[f64]) -> Result<Option<f64>> {
    if treated.len() < 2 || untreated.len() < 2 {
        return Err(Error::ArmSize {
            treated: treated.len(),
            untreated: untreated.len(),
        });
    }
    let diff = mean(treated) - mean(untreated);
    let pooled = 0.5 * (sample_var(treated).unwrap() + sample_var(untreated).unwrap());
    if pooled == 0.0 {
        return Ok((diff == 0.0).then_some(0.0));
    }
    Ok(Some(diff / pooled.sqrt()))
}

/// [`smd`] over the rows of `mask`, split by `treated`.
pub fn smd_masked(z: &[f64], treated: &RowMask, mask: &RowMask) -> Result<Option<f64>> {
    let (t, u): (Vec<usize>, Vec<usize>) = mask.iter().partition(|&i| treated.contains(i));
    smd(
        &t.iter().map(|&i| z[i]).collect::<Vec<_>>(),
        &u.iter().map(|&i| z[i]).collect::<Vec<_>>(),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImbalanceEntry {
    pub covariate: String,
    /// Signed imbalance; `None` when undefined on this scope.
    pub score: Option<f64>,
    pub metric: Metric,
    pub scope: Scope,
    /// For categorical covariates, the indicator that carried the score.
    pub indicator: Option<String>,
    pub n_used: usize,
    pub failure: Option<Failure>,
}

impl ImbalanceEntry {
    pub fn abs_score(&self) -> Option<f64> {
        self.score.map(f64::abs)
    }
}

fn metric_for(ds: &Dataset, cfg: &CausalConfig) -> Result<Metric> {
    match ds.column(&cfg.cause)?.ctype {
        ColumnType::Binary => Ok(Metric::Smd),
        ColumnType::Continuous => Ok(Metric::Spearman),
        ColumnType::Categorical { .. } => Err(Error::Config(format!(
            "cause `{}` must be binary or continuous",
            cfg.cause
        ))),
    }
}

/// Imbalance of covariate `z` within `scope`: the SMD for a binary cause,
/// Spearman correlation with the cause otherwise. Categorical covariates
/// report their indicator with the largest magnitude.
pub fn imbalance_score(
    ds: &Dataset,
    cfg: &CausalConfig,
    z: &str,
    scope: &RowMask,
    tag: Scope,
) -> Result<ImbalanceEntry> {
    let metric = metric_for(ds, cfg)?;
    let rows = complete_within(ds, &[cfg.cause.as_str(), z], scope)?;
    if rows.count() < MIN_SCOPE_ROWS {
        return Err(Error::SampleSize {
            needed: MIN_SCOPE_ROWS,
            got: rows.count(),
        });
    }
    let x = ds.column(&cfg.cause)?;
    let features = ds.numeric_features(z)?;
    let categorical = features.len() > 1 || features[0].name != z;

    let mut best: Option<(f64, String)> = None;
    for f in &features {
        let zv: Vec<f64> = f.values.iter().map(|v| v.unwrap_or(f64::NAN)).collect();
        let score = match metric {
            Metric::Smd => {
                let treated =
                    RowMask::from_fn(ds.n_rows(), |i| x.values[i].is_some_and(|v| v > 0.5));
                smd_masked(&zv, &treated, &rows)?
            }
            Metric::Spearman => {
                let idx = rows.indices();
                let a: Vec<f64> = idx.iter().map(|&i| zv[i]).collect();
                let b: Vec<f64> = idx.iter().map(|&i| x.values[i].unwrap()).collect();
                match spearman(&a, &b) {
                    Ok(r) => Some(r),
                    Err(Error::UndefinedCorrelation) => None,
                    Err(e) => return Err(e),
                }
            }
        };
        if let Some(s) = score {
            if best.as_ref().is_none_or(|(b, _)| s.abs() > b.abs()) {
                best = Some((s, f.name.clone()));
            }
        }
    }
    Ok(ImbalanceEntry {
        covariate: z.to_string(),
        score: best.as_ref().map(|b| b.0),
        metric,
        scope: tag,
        indicator: best.filter(|_| categorical).map(|b| b.1),
        n_used: rows.count(),
        failure: None,
    })
}

/// Balance summary over a set of covariates; the lollipop-chart payload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImbalanceReport {
    pub scope: Scope,
    pub threshold: f64,
    pub warning: bool,
    pub mean_abs_score: f64,
    pub entries: Vec<ImbalanceEntry>,
    /// Covariates whose |score| exceeds the threshold, in entry order.
    pub flagged: Vec<String>,
    pub n_treated: Option<usize>,
    pub n_untreated: Option<usize>,
}

/// Scores each confounder of `cfg` (every covariate when none are chosen)
/// and raises a warning when the mean |score| exceeds `threshold`.
pub fn imbalance_report(
    ds: &Dataset,
    cfg: &CausalConfig,
    scope: &RowMask,
    tag: Scope,
    threshold: f64,
) -> Result<ImbalanceReport> {
    let metric = metric_for(ds, cfg)?;
    if scope.is_empty() {
        return Err(Error::EmptySelection);
    }
    let mut entries: Vec<ImbalanceEntry> = cfg
        .effective_confounders()
        .par_iter()
        .map(|z| {
            imbalance_score(ds, cfg, z, scope, tag).unwrap_or_else(|e| ImbalanceEntry {
                covariate: z.clone(),
                score: None,
                metric,
                scope: tag,
                indicator: None,
                n_used: 0,
                failure: Some(Failure::from(&e)),
            })
        })
        .collect();
    entries.sort_by(|a, b| match (a.abs_score(), b.abs_score()) {
        (Some(x), Some(y)) => y.total_cmp(&x).then_with(|| a.covariate.cmp(&b.covariate)),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => a.covariate.cmp(&b.covariate),
    });
    let defined: Vec<f64> = entries
        .iter()
        .filter_map(ImbalanceEntry::abs_score)
        .collect();
    if defined.is_empty() {
        return Err(Error::EmptyReport);
    }
    let mean_abs_score = mean(&defined);
    let flagged = entries
        .iter()
        .filter(|e| e.abs_score().is_some_and(|s| s > threshold))
        .map(|e| e.covariate.clone())
        .collect();
    let (n_treated, n_untreated) = match metric {
        Metric::Smd => {
            let x = ds.column(&cfg.cause)?;
            let rows = complete_within(ds, &[cfg.cause.as_str()], scope)?;
            let t = rows.iter().filter(|&i| x.values[i].unwrap() > 0.5).count();
            (Some(t), Some(rows.count() - t))
        }
        Metric::Spearman => (None, None),
    };
    Ok(ImbalanceReport {
        scope: tag,
        threshold,
        warning: mean_abs_score > threshold,
        mean_abs_score,
        entries,
        flagged,
        n_treated,
        n_untreated,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{load_table, LoadOptions};
    use proptest::prelude::*;

    fn ds(text: &str) -> Dataset {
        load_table(text.as_bytes(), LoadOptions::default()).unwrap()
    }

    #[test]
    fn smd_examples() {
        let d = smd(&[2.0, 4.0], &[0.0, 2.0]).unwrap().unwrap();
        assert!((d - 2f64.sqrt()).abs() < 1e-12);
        assert_eq!(smd(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap(), Some(0.0));
        assert_eq!(smd(&[5.0, 5.0], &[5.0, 5.0]).unwrap(), Some(0.0));
        assert_eq!(smd(&[5.0, 5.0], &[4.0, 4.0]).unwrap(), None);
        assert_eq!(
            smd(&[1.0], &[1.0, 2.0]).unwrap_err(),
            Error::ArmSize {
                treated: 1,
                untreated: 2
            }
        );
    }

    #[test]
    fn continuous_cause_uses_spearman() {
        let d = ds("X,y,z\n1,0,10\n2,1,20\n3,0,25\n4,1,100\n5,0,101\n");
        let cfg = CausalConfig::with_all_covariates(&d, "X", "y");
        let e = imbalance_score(&d, &cfg, "z", &RowMask::full(5), Scope::Population).unwrap();
        assert_eq!(e.metric, Metric::Spearman);
        assert!((e.score.unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn categorical_reports_worst_indicator() {
        // g=b is balanced (score 0); g=c appears only among the treated
        let d = ds("x,y,g\n1,0,a\n1,1,b\n1,0,c\n1,0,c\n0,1,a\n0,0,b\n0,1,a\n0,0,a\n");
        let cfg = CausalConfig::with_all_covariates(&d, "x", "y");
        let e = imbalance_score(&d, &cfg, "g", &RowMask::full(8), Scope::Population).unwrap();
        assert_eq!(e.indicator.as_deref(), Some("g=c"));
        let oracle = smd(&[0.0, 0.0, 1.0, 1.0], &[0.0; 4]).unwrap().unwrap();
        assert!((e.score.unwrap() - oracle).abs() < 1e-12);
    }

    #[test]
    fn report_warning_and_order() {
        let d = ds("x,y,a,b\n1,0,1,5\n1,1,2,6\n1,0,3,5\n0,1,1,5\n0,0,2,6\n0,1,3,6\n");
        let cfg = CausalConfig::with_all_covariates(&d, "x", "y");
        let r = imbalance_report(&d, &cfg, &RowMask::full(6), Scope::Population, 0.2).unwrap();
        assert_eq!(r.entries[0].covariate, "b");
        assert_eq!(r.entries[1].score, Some(0.0));
        assert_eq!(r.flagged, vec!["b".to_string()]);
        let expected = r.entries.iter().filter_map(|e| e.abs_score()).sum::<f64>() / 2.0;
        assert_eq!(r.mean_abs_score, expected);
        assert_eq!(r.warning, expected > 0.2);
        assert_eq!((r.n_treated, r.n_untreated), (Some(3), Some(3)));
    }

    #[test]
    fn report_with_all_zero_entries() {
        let d = ds("x,y,a\n1,0,1\n1,1,2\n0,1,1\n0,0,2\n");
        let cfg = CausalConfig::with_all_covariates(&d, "x", "y");
        let r = imbalance_report(&d, &cfg, &RowMask::full(4), Scope::Subgroup(3), 0.2).unwrap();
        assert_eq!(r.mean_abs_score, 0.0);
        assert!(!r.warning);
        assert_eq!(r.scope, Scope::Subgroup(3));
    }

    #[test]
    fn report_all_failed_is_empty() {
        let d = ds("x,y,a\n1,0,1\n0,1,1\n0,0,2\n0,0,2\n");
        let cfg = CausalConfig::with_all_covariates(&d, "x", "y");
        let err =
            imbalance_report(&d, &cfg, &RowMask::full(4), Scope::Population, 0.2).unwrap_err();
        assert_eq!(err, Error::EmptyReport);
    }

    proptest! {
        #[test]
        fn smd_antisymmetric_and_affine(
            t in proptest::collection::vec(-50.0f64..50.0, 2..20),
            u in proptest::collection::vec(-50.0f64..50.0, 2..20),
            a in 0.1f64..10.0,
            b in -100.0f64..100.0,
        ) {
            if let Some(d) = smd(&t, &u).unwrap() {
                prop_assert!((smd(&u, &t).unwrap().unwrap() + d).abs() < 1e-9);
                let at: Vec<f64> = t.iter().map(|v| a * v + b).collect();
                let au: Vec<f64> = u.iter().map(|v| a * v + b).collect();
                prop_assert!((smd(&at, &au).unwrap().unwrap() - d).abs() < 1e-7 * (1.0 + d.abs()));
                let nt: Vec<f64> = t.iter().map(|v| -a * v + b).collect();
                let nu: Vec<f64> = u.iter().map(|v| -a * v + b).collect();
                prop_assert!((smd(&nt, &nu).unwrap().unwrap() + d).abs() < 1e-7 * (1.0 + d.abs()));
            }
        }
    }
}
