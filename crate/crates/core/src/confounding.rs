//! Confounder scoring: how much adjusting for a single covariate moves the
//! cause coefficient, plus the paired treated/untreated histograms shown
//! beside each candidate.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{
    listwise_complete, CausalConfig, Column, ColumnType, Dataset, Histogram, HistogramGrid, RowMask,
};
use crate::error::{Error, Failure, Result};
use crate::stats::{fit_logistic, fit_ols, median, ModelKind, Predictor, RegressionFit};

/// Tooltip text shown next to the confounder selection box.
pub const CONFOUNDER_DEFINITION: &str = "a confounder is a third variable that influences both \
cause and outcome yet does not lie on a causal pathway between cause and outcome";

/// Unadjusted cause coefficients smaller than this leave the linear score undefined.
pub const ZERO_EFFECT_GUARD: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CFScore {
    pub covariate: String,
    /// `None` when the relative change is undefined (zero unadjusted slope).
    pub score: Option<f64>,
    pub unadjusted_beta1: f64,
    pub adjusted_beta1: f64,
    pub model_kind: ModelKind,
    pub n_used: usize,
}

fn values_at(col: &Column, rows: &[usize]) -> Vec<f64> {
    rows.iter()
        .map(|&i| col.values[i].expect("row is complete"))
        .collect()
}

/// Design columns for covariate `z` on `rows`. Categorical covariates
/// expand to indicators of the levels present on those rows, minus the
/// first present level.
fn covariate_block(col: &Column, rows: &[usize]) -> Result<Vec<Predictor>> {
    match &col.ctype {
        ColumnType::Categorical { levels } => {
            let mut present: Vec<usize> = rows
                .iter()
                .map(|&i| col.values[i].unwrap() as usize)
                .collect();
            present.sort_unstable();
            present.dedup();
            if present.len() < 2 {
                return Err(Error::DegenerateEncoding(col.name.clone()));
            }
            Ok(present[1..]
                .iter()
                .map(|&code| {
                    Predictor::new(
                        format!("{}={}", col.name, levels[code]),
                        rows.iter()
                            .map(|&i| {
                                if col.values[i].unwrap() as usize == code {
                                    1.0
                                } else {
                                    0.0
                                }
                            })
                            .collect(),
                    )
                })
                .collect())
        }
        _ => Ok(vec![Predictor::new(col.name.clone(), values_at(col, rows))]),
    }
}

fn fit_for(kind: ModelKind, preds: &[Predictor], y: &[f64]) -> Result<RegressionFit> {
    match kind {
        ModelKind::Logistic => fit_logistic(preds, y),
        ModelKind::Linear => fit_ols(preds, y),
    }
}

/// Model family implied by the outcome: logistic for binary, linear otherwise.
pub fn outcome_model(ds: &Dataset, cfg: &CausalConfig) -> Result<ModelKind> {
    let y = ds.column(&cfg.outcome)?;
    match y.ctype {
        ColumnType::Binary => Ok(ModelKind::Logistic),
        ColumnType::Continuous => Ok(ModelKind::Linear),
        ColumnType::Categorical { .. } => Err(Error::Config(format!(
            "outcome `{}` must be binary or continuous",
            cfg.outcome
        ))),
    }
}

/// Scores covariate `z` by comparing the cause coefficient with and without it.
///
/// Binary outcomes use the relative change of the odds ratio,
/// `|e^{b1'} - e^{b1}| / e^{b1}`; continuous outcomes the relative change of
/// the slope, `|b1' - b1| / |b1|`.
pub fn cf_score(ds: &Dataset, cfg: &CausalConfig, z: &str) -> Result<CFScore> {
    if z == cfg.cause || z == cfg.outcome {
        return Err(Error::Config(format!(
            "covariate `{z}` is the cause or outcome"
        )));
    }
    if !cfg.covariates.iter().any(|c| c == z) {
        return Err(Error::Config(format!("`{z}` is not a candidate covariate")));
    }
    let kind = outcome_model(ds, cfg)?;
    let x_col = ds.column(&cfg.cause)?;
    let y_col = ds.column(&cfg.outcome)?;
    let z_col = ds.column(z)?;
    let rows = listwise_complete(ds, &[cfg.cause.as_str(), cfg.outcome.as_str(), z])?.indices();

    let x = Predictor::new(cfg.cause.clone(), values_at(x_col, &rows));
    let y = values_at(y_col, &rows);
    let scoring = |fit: &'static str| {
        move |e: Error| Error::Scoring {
            covariate: z.to_string(),
            fit,
            source: Box::new(e),
        }
    };

    let unadjusted = fit_for(kind, std::slice::from_ref(&x), &y).map_err(scoring("unadjusted"))?;
    let mut preds = vec![x];
    preds.extend(covariate_block(z_col, &rows).map_err(scoring("adjusted"))?);
    let adjusted = fit_for(kind, &preds, &y).map_err(scoring("adjusted"))?;

    let (b1, b1_adj) = (unadjusted.slope(), adjusted.slope());
    let score = match kind {
        ModelKind::Logistic => Some((b1_adj - b1).exp_m1().abs()),
        ModelKind::Linear => {
            (b1.abs() >= ZERO_EFFECT_GUARD).then(|| (b1_adj - b1).abs() / b1.abs())
        }
    };
    Ok(CFScore {
        covariate: z.to_string(),
        score,
        unadjusted_beta1: b1,
        adjusted_beta1: b1_adj,
        model_kind: kind,
        n_used: rows.len(),
    })
}

/// One candidate in a ranking: its score, or why scoring failed.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedCovariate {
    pub covariate: String,
    pub result: std::result::Result<CFScore, Error>,
}

impl RankedCovariate {
    pub fn score(&self) -> Option<f64> {
        self.result.as_ref().ok().and_then(|s| s.score)
    }
}

/// Scores every candidate covariate and orders them by descending score.
///
/// Undefined scores and failed candidates sink to the bottom; ties break by
/// covariate name. Failures never abort the ranking.
pub fn rank_confounders(ds: &Dataset, cfg: &CausalConfig) -> Result<Vec<RankedCovariate>> {
    if cfg.covariates.is_empty() {
        return Err(Error::Config("no candidate covariates".into()));
    }
    let mut ranked: Vec<RankedCovariate> = cfg
        .covariates
        .par_iter()
        .map(|z| RankedCovariate {
            covariate: z.clone(),
            result: cf_score(ds, cfg, z),
        })
        .collect();
    if ranked.iter().all(|r| r.result.is_err()) {
        return Err(Error::EmptyRanking);
    }
    ranked.sort_by(|a, b| match (a.score(), b.score()) {
        (Some(x), Some(y)) => y.total_cmp(&x).then_with(|| a.covariate.cmp(&b.covariate)),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => a
            .result
            .is_err()
            .cmp(&b.result.is_err())
            .then_with(|| a.covariate.cmp(&b.covariate)),
    });
    Ok(ranked)
}

/// Treated/untreated assignment used for display.
///
/// Binary causes split on their value; continuous causes split at the median
/// of the selected rows into a pseudo-treated group `cause > median`.
#[derive(Debug, Clone, PartialEq)]
pub struct ArmSplit {
    pub treated: RowMask,
    pub untreated: RowMask,
    pub threshold: Option<f64>,
    pub rule: Option<String>,
}

pub fn split_arms(ds: &Dataset, cause: &str, rows: &RowMask) -> Result<ArmSplit> {
    let x = ds.column(cause)?;
    let present = rows.and(&RowMask::from_fn(ds.n_rows(), |i| x.values[i].is_some()));
    let (threshold, rule) = match x.ctype {
        ColumnType::Binary => (None, None),
        ColumnType::Continuous => {
            let vals: Vec<f64> = present.iter().map(|i| x.values[i].unwrap()).collect();
            if vals.is_empty() {
                return Err(Error::EmptySelection);
            }
            let m = median(&vals);
            (Some(m), Some(format!("{cause} > {m}")))
        }
        ColumnType::Categorical { .. } => {
            return Err(Error::Config(format!(
                "cause `{cause}` must be binary or continuous"
            )))
        }
    };
    let cut = threshold.unwrap_or(0.5);
    let treated = RowMask::from_fn(ds.n_rows(), |i| {
        present.contains(i) && x.values[i].unwrap() > cut
    });
    let untreated = present.and(&treated.not());
    Ok(ArmSplit {
        treated,
        untreated,
        threshold,
        rule,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreatmentSplitHistograms {
    pub covariate: String,
    pub treated: Histogram,
    pub untreated: Histogram,
    /// Pseudo-treatment rule when the cause is continuous.
    pub split_rule: Option<String>,
}

/// Histograms of `z` for each treatment arm over one shared bin grid.
pub fn treatment_split_histograms(
    ds: &Dataset,
    cfg: &CausalConfig,
    z: &str,
    bins: usize,
) -> Result<TreatmentSplitHistograms> {
    let z_col = ds.column(z)?;
    let rows = listwise_complete(ds, &[cfg.cause.as_str(), z])?;
    let arms = split_arms(ds, &cfg.cause, &rows)?;
    if arms.treated.is_empty() || arms.untreated.is_empty() {
        return Err(Error::DegenerateSplit(format!(
            "{} treated, {} untreated",
            arms.treated.count(),
            arms.untreated.count()
        )));
    }
    let grid = HistogramGrid::for_column(z_col, &rows, bins)?;
    Ok(TreatmentSplitHistograms {
        covariate: z.to_string(),
        treated: grid.histogram(z_col, &arms.treated),
        untreated: grid.histogram(z_col, &arms.untreated),
        split_rule: arms.rule,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfounderRow {
    pub covariate: String,
    pub cf_score: Option<f64>,
    pub unadjusted_beta1: Option<f64>,
    pub adjusted_beta1: Option<f64>,
    pub n_used: Option<usize>,
    pub histograms: Option<TreatmentSplitHistograms>,
    pub failure: Option<Failure>,
    pub histogram_failure: Option<Failure>,
}

/// Dashboard payload: ranked candidates with their arm histograms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfounderRanking {
    pub cause: String,
    pub outcome: String,
    pub model_kind: ModelKind,
    pub tooltip: String,
    pub rows_total: usize,
    pub entries: Vec<ConfounderRow>,
}

pub fn confounder_ranking(
    ds: &Dataset,
    cfg: &CausalConfig,
    bins: usize,
) -> Result<ConfounderRanking> {
    cfg.validate(ds)?;
    let model_kind = outcome_model(ds, cfg)?;
    let ranked = rank_confounders(ds, cfg)?;
    let entries = ranked
        .par_iter()
        .map(|r| {
            let hist = treatment_split_histograms(ds, cfg, &r.covariate, bins);
            let (score, failure) = match &r.result {
                Ok(s) => (Some(s), None),
                Err(e) => (None, Some(Failure::from(e))),
            };
            ConfounderRow {
                covariate: r.covariate.clone(),
                cf_score: score.and_then(|s| s.score),
                unadjusted_beta1: score.map(|s| s.unadjusted_beta1),
                adjusted_beta1: score.map(|s| s.adjusted_beta1),
                n_used: score.map(|s| s.n_used),
                histogram_failure: hist.as_ref().err().map(Failure::from),
                histograms: hist.ok(),
                failure,
            }
        })
        .collect();
    Ok(ConfounderRanking {
        cause: cfg.cause.clone(),
        outcome: cfg.outcome.clone(),
        model_kind,
        tooltip: CONFOUNDER_DEFINITION.to_string(),
        rows_total: ds.n_rows(),
        entries,
    })
}
