//! Stateful analysis over one dataset, shared by the batch report and the
//! HTTP session service so both emit the same payload bytes.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::confounding::{confounder_ranking, ConfounderRanking};
use crate::dataset::{CausalConfig, Dataset, DEFAULT_BINS};
use crate::diagnosis::{diagnose, DiagnosisOptions, DiagnosisReport};
use crate::error::{Error, Result};
use crate::imbalance::DEFAULT_THRESHOLD;
use crate::partition::{Partition, PartitionPayload, PartitionRequest};
use crate::scope::Scope;
use crate::stats::{DEFAULT_LEVEL, DEFAULT_REPLICATES};
use crate::storyboard::{storyboard, ShapeThresholds, Storyboard};
use crate::subgroup_views::{subgroup_viewer, SubgroupViewer, DEFAULT_TOP_K};

pub const ENGINE_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Histogram bins used for the confounder dashboard's paired histograms.
pub const RANKING_HISTOGRAM_BINS: usize = DEFAULT_BINS;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnInfo {
    pub name: String,
    #[serde(rename = "type")]
    pub ctype: String,
}

/// Response to a dataset upload.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub dataset_id: String,
    pub columns: Vec<ColumnInfo>,
    pub n_rows: usize,
}

impl DatasetSummary {
    pub fn of(ds: &Dataset) -> DatasetSummary {
        DatasetSummary {
            dataset_id: ds.id().to_string(),
            columns: ds
                .columns()
                .iter()
                .map(|c| ColumnInfo {
                    name: c.name.clone(),
                    ctype: c.ctype.name().to_string(),
                })
                .collect(),
            n_rows: ds.n_rows(),
        }
    }
}

/// A dataset, a validated config, a seed and the current partition.
#[derive(Debug, Clone)]
pub struct Analysis {
    dataset: Arc<Dataset>,
    config: CausalConfig,
    seed: u64,
    partition: Option<Partition>,
    partition_request: Option<PartitionRequest>,
}

impl Analysis {
    pub fn new(dataset: Arc<Dataset>, config: CausalConfig, seed: u64) -> Result<Analysis> {
        config.validate(&dataset)?;
        Ok(Analysis {
            dataset,
            config,
            seed,
            partition: None,
            partition_request: None,
        })
    }

    /// Config over every non-cause, non-outcome column when `covariates`
    /// is `None`.
    pub fn with_defaults(
        dataset: Arc<Dataset>,
        cause: &str,
        outcome: &str,
        covariates: Option<Vec<String>>,
        seed: u64,
    ) -> Result<Analysis> {
        let mut config = CausalConfig::with_all_covariates(&dataset, cause, outcome);
        if let Some(c) = covariates {
            config.covariates = c;
        }
        Analysis::new(dataset, config, seed)
    }

    pub fn dataset(&self) -> &Arc<Dataset> {
        &self.dataset
    }

    pub fn config(&self) -> &CausalConfig {
        &self.config
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn partition(&self) -> Option<&Partition> {
        self.partition.as_ref()
    }

    pub fn partition_request(&self) -> Option<&PartitionRequest> {
        self.partition_request.as_ref()
    }

    /// Replaces the confounder selection. The config is unchanged on error.
    /// An existing partition is kept: it depends on cause, outcome and its
    /// own features, none of which change here.
    pub fn set_confounders(&mut self, names: Vec<String>) -> Result<&CausalConfig> {
        let mut next = self.config.clone();
        next.confounders = names;
        next.validate(&self.dataset)?;
        self.config = next;
        Ok(&self.config)
    }

    pub fn confounder_ranking(&self) -> Result<ConfounderRanking> {
        confounder_ranking(&self.dataset, &self.config, RANKING_HISTOGRAM_BINS)
    }

    /// Builds and stores a partition. The previous partition survives a
    /// failed request.
    pub fn set_partition(&mut self, request: PartitionRequest) -> Result<PartitionPayload> {
        let p = request.build(&self.dataset, &self.config, self.seed)?;
        let payload = p.payload();
        self.partition = Some(p);
        self.partition_request = Some(request);
        Ok(payload)
    }

    pub fn subgroup_viewer(&self) -> Result<SubgroupViewer> {
        let p = self.partition.as_ref().ok_or(Error::PartitionRequired)?;
        subgroup_viewer(&self.dataset, &self.config, p, DEFAULT_TOP_K, None)
    }

    pub fn storyboard(&self, bins: usize) -> Result<Storyboard> {
        storyboard(
            &self.dataset,
            &self.config,
            self.partition.as_ref(),
            bins,
            ShapeThresholds::default(),
        )
    }

    /// Diagnosis of one subgroup, or of the population when `subgroup` is
    /// `None`.
    pub fn diagnosis(&self, subgroup: Option<usize>, replicates: usize) -> Result<DiagnosisReport> {
        let target = match subgroup {
            None => Scope::Population,
            Some(id) => {
                if self.partition.is_none() {
                    return Err(Error::PartitionRequired);
                }
                Scope::Subgroup(id)
            }
        };
        let opts = DiagnosisOptions {
            replicates,
            level: DEFAULT_LEVEL,
            seed: self.seed,
            threshold: DEFAULT_THRESHOLD,
        };
        diagnose(
            &self.dataset,
            &self.config,
            self.partition.as_ref(),
            target,
            opts,
        )
    }

    /// Scopes the batch report diagnoses: the population, then each subgroup.
    pub fn diagnosis_targets(&self) -> Vec<Option<usize>> {
        let mut t = vec![None];
        if let Some(p) = &self.partition {
            t.extend(p.subgroups.iter().map(|s| Some(s.id)));
        }
        t
    }
}

/// Settings for a one-shot batch run.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportOptions {
    pub partition: Option<PartitionRequest>,
    pub bins: usize,
    pub replicates: usize,
}

impl Default for ReportOptions {
    fn default() -> Self {
        ReportOptions {
            partition: None,
            bins: crate::storyboard::DEFAULT_BINS,
            replicates: DEFAULT_REPLICATES,
        }
    }
}

/// Batch report: each field is byte-for-byte the payload the matching
/// service route returns for the same inputs and seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CliReport {
    pub engine_version: String,
    pub seed: u64,
    pub config: CausalConfig,
    pub confounder_ranking: ConfounderRanking,
    pub partition: Option<PartitionPayload>,
    pub subgroup_viewer: Option<SubgroupViewer>,
    pub storyboard: Storyboard,
    pub diagnoses: Vec<DiagnosisReport>,
}

/// Runs the whole pipeline. The first failing stage aborts the report.
pub fn run_report(mut analysis: Analysis, opts: &ReportOptions) -> Result<CliReport> {
    let confounder_ranking = analysis.confounder_ranking()?;
    let partition = match &opts.partition {
        Some(req) => Some(analysis.set_partition(req.clone())?),
        None => None,
    };
    let subgroup_viewer = match partition {
        Some(_) => Some(analysis.subgroup_viewer()?),
        None => None,
    };
    let storyboard = analysis.storyboard(opts.bins)?;
    let diagnoses = analysis
        .diagnosis_targets()
        .into_iter()
        .map(|t| analysis.diagnosis(t, opts.replicates))
        .collect::<Result<Vec<_>>>()?;
    Ok(CliReport {
        engine_version: ENGINE_VERSION.to_string(),
        seed: analysis.seed(),
        config: analysis.config().clone(),
        confounder_ranking,
        partition,
        subgroup_viewer,
        storyboard,
        diagnoses,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{load_table, LoadOptions};
    use crate::partition::PartitionRule;

    fn analysis() -> Analysis {
        let mut s = String::from("x,y,g,z\n");
        for i in 0..40 {
            let g = i % 2;
            let x = u8::from(i % 3 == 0);
            s.push_str(&format!("{x},{},{g},{}\n", (i * 7) % 11, i % 9));
        }
        let ds = Arc::new(load_table(s.as_bytes(), LoadOptions::default()).unwrap());
        Analysis::with_defaults(ds, "x", "y", None, 3).unwrap()
    }

    #[test]
    fn partition_required_before_subgroup_routes() {
        let a = analysis();
        assert_eq!(a.subgroup_viewer().unwrap_err(), Error::PartitionRequired);
        assert_eq!(
            a.diagnosis(Some(1), 100).unwrap_err(),
            Error::PartitionRequired
        );
        assert!(a.diagnosis(None, 100).is_ok());
        assert!(a.storyboard(4).is_ok());
    }

    #[test]
    fn failed_mutations_leave_state() {
        let mut a = analysis();
        assert!(a.set_confounders(vec!["nope".into()]).is_err());
        assert!(a.config().confounders.is_empty());
        a.set_partition(PartitionRequest::Manual {
            rules: vec![PartitionRule::binary("g")],
        })
        .unwrap();
        assert!(a
            .set_partition(PartitionRequest::Manual {
                rules: vec![PartitionRule::binary("x")]
            })
            .is_err());
        assert_eq!(a.partition().unwrap().subgroups.len(), 2);
    }

    #[test]
    fn report_covers_population_and_subgroups() {
        let a = analysis();
        let opts = ReportOptions {
            partition: Some(PartitionRequest::Manual {
                rules: vec![PartitionRule::binary("g")],
            }),
            replicates: 100,
            ..Default::default()
        };
        let r = run_report(a.clone(), &opts).unwrap();
        let scopes: Vec<Scope> = r.diagnoses.iter().map(|d| d.scope).collect();
        assert_eq!(
            scopes,
            [Scope::Population, Scope::Subgroup(1), Scope::Subgroup(2)]
        );
        assert!(r.subgroup_viewer.is_some());
        assert_eq!(
            serde_json::to_string(&r).unwrap(),
            serde_json::to_string(&run_report(a, &opts).unwrap()).unwrap()
        );
    }
}
