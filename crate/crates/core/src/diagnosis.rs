//! Decision diagnosis for one scope: effect statistics, a Simpson's-paradox
//! check against the population, and residual confounding from imbalance.

use serde::{Deserialize, Serialize};

use crate::dataset::{complete_within, CausalConfig, Dataset, RowMask};
use crate::error::{Error, Failure, Result};
use crate::imbalance::{imbalance_report, ImbalanceReport};
use crate::partition::{scope_effect, EffectEstimate, Partition};
use crate::scope::{derive_seed, Scope};
use crate::stats::BootstrapOptions;

pub const SIMPSON_MESSAGE: &str = "Simpson's Paradox";
pub const MIN_STATISTICS_ROWS: usize = 4;

/// A report section: its result, or the failure that replaced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", content = "result", rename_all = "snake_case")]
pub enum Section<T> {
    Ok(T),
    Failed(Failure),
}

impl<T> Section<T> {
    pub fn ok(&self) -> Option<&T> {
        match self {
            Section::Ok(v) => Some(v),
            Section::Failed(_) => None,
        }
    }
}

impl<T> From<Result<T>> for Section<T> {
    fn from(r: Result<T>) -> Self {
        match r {
            Ok(v) => Section::Ok(v),
            Err(e) => Section::Failed(Failure::from(&e)),
        }
    }
}

/// Effect statistics for `scope`; on the population this is the average
/// treatment effect estimate.
pub fn basic_statistics(
    ds: &Dataset,
    cfg: &CausalConfig,
    scope: &RowMask,
    boot: BootstrapOptions,
) -> Result<EffectEstimate> {
    let n = complete_within(ds, &[cfg.cause.as_str(), cfg.outcome.as_str()], scope)?.count();
    if n < MIN_STATISTICS_ROWS {
        return Err(Error::SampleSize {
            needed: MIN_STATISTICS_ROWS,
            got: n,
        });
    }
    scope_effect(ds, cfg, scope, boot)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignificanceNotes {
    pub overall_ci_excludes_zero: Option<bool>,
    pub subgroup_ci_excludes_zero: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimpsonWarning {
    pub flag: bool,
    pub overall_effect: Option<f64>,
    pub subgroup_effect: Option<f64>,
    /// Informational only; the flag does not depend on significance.
    pub significance_notes: SignificanceNotes,
    pub message: Option<String>,
    /// Why no comparison was made, when an effect is undefined.
    pub suppressed: Option<String>,
}

/// Flags a subgroup whose point effect has the strictly opposite sign of
/// the overall effect. A zero effect never flags.
pub fn simpson_warning(overall: &EffectEstimate, subgroup: &EffectEstimate) -> SimpsonWarning {
    let notes = SignificanceNotes {
        overall_ci_excludes_zero: overall.ci_excludes_zero(),
        subgroup_ci_excludes_zero: subgroup.ci_excludes_zero(),
    };
    let suppressed = match (overall.effect, subgroup.effect) {
        (None, _) => Some(format!(
            "overall effect undefined: {}",
            overall.reason.as_deref().unwrap_or("unknown")
        )),
        (_, None) => Some(format!(
            "subgroup effect undefined: {}",
            subgroup.reason.as_deref().unwrap_or("unknown")
        )),
        _ => None,
    };
    let flag = match (overall.effect, subgroup.effect) {
        (Some(o), Some(s)) => (o > 0.0 && s < 0.0) || (o < 0.0 && s > 0.0),
        _ => false,
    };
    SimpsonWarning {
        flag,
        overall_effect: overall.effect,
        subgroup_effect: subgroup.effect,
        significance_notes: notes,
        message: flag.then(|| SIMPSON_MESSAGE.to_string()),
        suppressed,
    }
}

pub fn detect_simpsons(
    overall: &EffectEstimate,
    subgroups: &[EffectEstimate],
) -> Vec<SimpsonWarning> {
    subgroups
        .iter()
        .map(|s| simpson_warning(overall, s))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImbalancePair {
    pub population: Section<ImbalanceReport>,
    pub subgroup: Section<ImbalanceReport>,
}

/// `Diagnosis` JSON payload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosisReport {
    pub scope: Scope,
    pub label: String,
    /// Bootstrap seed actually used for this scope.
    pub seed: u64,
    pub statistics: Section<EffectEstimate>,
    pub population_statistics: Section<EffectEstimate>,
    pub simpson_warning: Section<SimpsonWarning>,
    pub imbalance: ImbalancePair,
    /// Subgroup covariates whose |imbalance| exceeds the threshold.
    pub residual_confounders: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiagnosisOptions {
    pub replicates: usize,
    pub level: f64,
    pub seed: u64,
    pub threshold: f64,
}

impl Default for DiagnosisOptions {
    fn default() -> Self {
        DiagnosisOptions {
            replicates: crate::stats::DEFAULT_REPLICATES,
            level: crate::stats::DEFAULT_LEVEL,
            seed: 0,
            threshold: crate::imbalance::DEFAULT_THRESHOLD,
        }
    }
}

/// Rows the population statistics describe: the partition's scope, or all
/// complete cause/outcome rows when there is no partition.
pub fn population_scope(
    ds: &Dataset,
    cfg: &CausalConfig,
    partition: Option<&Partition>,
) -> Result<RowMask> {
    match partition {
        Some(p) => Ok(p.scope.clone()),
        None => complete_within(
            ds,
            &[cfg.cause.as_str(), cfg.outcome.as_str()],
            &RowMask::full(ds.n_rows()),
        ),
    }
}

/// Assembles the diagnosis of `target`. Failed sections are reported in
/// place; only an unknown subgroup or a missing partition aborts.
pub fn diagnose(
    ds: &Dataset,
    cfg: &CausalConfig,
    partition: Option<&Partition>,
    target: Scope,
    opts: DiagnosisOptions,
) -> Result<DiagnosisReport> {
    let population = population_scope(ds, cfg, partition)?;
    let (mask, label) = match target {
        Scope::Population => (population.clone(), "population".to_string()),
        Scope::Subgroup(id) => {
            let p = partition.ok_or(Error::PartitionRequired)?;
            let sg = p.subgroup(id)?;
            (sg.mask.clone(), sg.label.clone())
        }
    };
    let boot = |scope: Scope| BootstrapOptions {
        replicates: opts.replicates,
        level: opts.level,
        seed: derive_seed(ds.id(), scope, opts.seed),
    };
    let pop_boot = boot(Scope::Population);
    let sub_boot = boot(target);
    let population_statistics: Section<_> = basic_statistics(ds, cfg, &population, pop_boot).into();
    let statistics: Section<_> = if target == Scope::Population {
        population_statistics.clone()
    } else {
        basic_statistics(ds, cfg, &mask, sub_boot).into()
    };
    let simpson = match (&population_statistics, &statistics) {
        (Section::Ok(o), Section::Ok(s)) => Section::Ok(simpson_warning(o, s)),
        (Section::Failed(f), _) | (_, Section::Failed(f)) => Section::Failed(f.clone()),
    };
    let pop_imbalance: Section<_> =
        imbalance_report(ds, cfg, &population, Scope::Population, opts.threshold).into();
    let sub_imbalance: Section<_> = if target == Scope::Population {
        pop_imbalance.clone()
    } else {
        imbalance_report(ds, cfg, &mask, target, opts.threshold).into()
    };
    let residual_confounders = sub_imbalance
        .ok()
        .map(|r| r.flagged.clone())
        .unwrap_or_default();
    Ok(DiagnosisReport {
        scope: target,
        label,
        seed: sub_boot.seed,
        statistics,
        population_statistics,
        simpson_warning: simpson,
        imbalance: ImbalancePair {
            population: pop_imbalance,
            subgroup: sub_imbalance,
        },
        residual_confounders,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{load_table, LoadOptions};
    use crate::partition::{manual_partition, Estimator, PartitionRule};

    fn ds(text: &str) -> Dataset {
        load_table(text.as_bytes(), LoadOptions::default()).unwrap()
    }

    fn estimate(effect: Option<f64>) -> EffectEstimate {
        EffectEstimate {
            effect,
            ci: None,
            standard_error: None,
            p_value: None,
            n: 10,
            n_treated: Some(5),
            n_untreated: Some(5),
            treated_mean_outcome: None,
            untreated_mean_outcome: None,
            estimator: Estimator::MeanDifference,
            positivity_ok: effect.is_some(),
            reason: effect.is_none().then(|| "overlap violated".to_string()),
            log_odds_ratio: None,
        }
    }

    #[test]
    fn sign_rules() {
        let o = estimate(Some(-0.38));
        let flags: Vec<bool> = detect_simpsons(
            &o,
            &[
                estimate(Some(0.1)),
                estimate(Some(0.0)),
                estimate(Some(-0.2)),
            ],
        )
        .iter()
        .map(|w| w.flag)
        .collect();
        assert_eq!(flags, [true, false, false]);
        let w = simpson_warning(&o, &estimate(None));
        assert!(!w.flag);
        assert!(w.suppressed.unwrap().contains("overlap violated"));
        assert_eq!(
            simpson_warning(&o, &estimate(Some(1.0))).message.as_deref(),
            Some(SIMPSON_MESSAGE)
        );
    }

    fn reversal_csv() -> String {
        let mut s = String::from("x,y,stratum\n");
        // (stratum, x, successes, total)
        for (g, x, succ, total) in [
            ("A", 1, 9, 10),
            ("A", 0, 72, 90),
            ("B", 1, 27, 90),
            ("B", 0, 2, 10),
        ] {
            for i in 0..total {
                s.push_str(&format!("{x},{},{g}\n", u8::from(i < succ)));
            }
        }
        s
    }

    #[test]
    fn reversal_fixture_flags_both_strata() {
        let d = ds(&reversal_csv());
        let cfg = CausalConfig::with_all_covariates(&d, "x", "y");
        let p = manual_partition(
            &d,
            &cfg,
            &[PartitionRule {
                covariate: "stratum".into(),
                cut_points: None,
                levels: None,
            }],
        )
        .unwrap();
        let opts = DiagnosisOptions {
            replicates: 200,
            ..Default::default()
        };
        for sg in &p.subgroups {
            let r = diagnose(&d, &cfg, Some(&p), Scope::Subgroup(sg.id), opts).unwrap();
            let w = r.simpson_warning.ok().unwrap();
            assert!(w.flag, "{}", sg.label);
            assert!((w.subgroup_effect.unwrap() - 0.1).abs() < 1e-12);
            assert!((w.overall_effect.unwrap() + 0.38).abs() < 1e-12);
        }
        let r = diagnose(&d, &cfg, Some(&p), Scope::Population, opts).unwrap();
        assert!(!r.simpson_warning.ok().unwrap().flag);
    }

    #[test]
    fn negating_outcome_preserves_flags() {
        let flipped: String = reversal_csv()
            .lines()
            .enumerate()
            .map(|(i, l)| {
                if i == 0 {
                    format!("{l}\n")
                } else {
                    let f: Vec<&str> = l.split(',').collect();
                    format!("{},{},{}\n", f[0], 1 - f[1].parse::<i32>().unwrap(), f[2])
                }
            })
            .collect();
        let d = ds(&flipped);
        let cfg = CausalConfig::with_all_covariates(&d, "x", "y");
        let p = manual_partition(
            &d,
            &cfg,
            &[PartitionRule {
                covariate: "stratum".into(),
                cut_points: None,
                levels: None,
            }],
        )
        .unwrap();
        let opts = DiagnosisOptions {
            replicates: 200,
            ..Default::default()
        };
        for sg in &p.subgroups {
            let r = diagnose(&d, &cfg, Some(&p), Scope::Subgroup(sg.id), opts).unwrap();
            let w = r.simpson_warning.ok().unwrap();
            assert!(w.flag);
            assert!(w.subgroup_effect.unwrap() < 0.0);
        }
    }

    #[test]
    fn unknown_subgroup_and_missing_partition() {
        let d = ds(&reversal_csv());
        let cfg = CausalConfig::with_all_covariates(&d, "x", "y");
        let opts = DiagnosisOptions {
            replicates: 100,
            ..Default::default()
        };
        assert!(matches!(
            diagnose(&d, &cfg, None, Scope::Subgroup(1), opts),
            Err(Error::PartitionRequired)
        ));
        let p = manual_partition(
            &d,
            &cfg,
            &[PartitionRule {
                covariate: "stratum".into(),
                cut_points: None,
                levels: None,
            }],
        )
        .unwrap();
        assert_eq!(
            diagnose(&d, &cfg, Some(&p), Scope::Subgroup(9), opts).unwrap_err(),
            Error::UnknownSubgroup(9)
        );
    }

    #[test]
    fn failed_sections_are_reported() {
        // subgroup g=1 has a single treated row: statistics fail on size
        let d = ds("x,y,g,z\n1,1,1,3\n0,0,0,1\n1,0,0,2\n0,1,0,5\n1,1,0,2\n0,0,0,7\n");
        let cfg = CausalConfig::with_all_covariates(&d, "x", "y");
        let p = manual_partition(&d, &cfg, &[PartitionRule::binary("g")]).unwrap();
        let opts = DiagnosisOptions {
            replicates: 100,
            ..Default::default()
        };
        let r = diagnose(&d, &cfg, Some(&p), Scope::Subgroup(2), opts).unwrap();
        assert!(matches!(r.statistics, Section::Failed(_)));
        assert!(matches!(r.simpson_warning, Section::Failed(_)));
        assert!(matches!(r.imbalance.subgroup, Section::Failed(_)));
        assert!(r.residual_confounders.is_empty());
        let json = serde_json::to_value(&r).unwrap();
        assert_eq!(json["statistics"]["status"], "failed");
        assert_eq!(json["statistics"]["result"]["error_code"], "sample_size");
    }
}
