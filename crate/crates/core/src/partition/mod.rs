//! Subgroup partitions: user-declared rule grids, the propensity tree, and
//! per-subgroup effect estimates.

mod effect;
mod tree;

pub use effect::{leaf_effect, scope_effect, EffectEstimate, Estimator, OVERLAP_VIOLATED};
pub use tree::{propensity_tree, TreeConfig, TreeNode};

use serde::{Deserialize, Serialize};

use crate::dataset::{
    complete_within, format_number, CausalConfig, Column, ColumnType, Dataset, RowMask,
};
use crate::error::{Error, Result};

/// One clause of a subgroup's defining path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Condition {
    /// `low <= value < high`; a missing bound is unbounded.
    Interval {
        covariate: String,
        low: Option<f64>,
        high: Option<f64>,
    },
    Equals {
        covariate: String,
        value: f64,
    },
    Levels {
        covariate: String,
        levels: Vec<String>,
    },
}

impl Condition {
    pub fn covariate(&self) -> &str {
        match self {
            Condition::Interval { covariate, .. }
            | Condition::Equals { covariate, .. }
            | Condition::Levels { covariate, .. } => covariate,
        }
    }

    /// Whether row `row` of `col` satisfies the condition. Missing cells never do.
    pub fn holds(&self, col: &Column, row: usize) -> bool {
        let Some(v) = col.values[row] else {
            return false;
        };
        match self {
            Condition::Interval { low, high, .. } => {
                low.is_none_or(|l| v >= l) && high.is_none_or(|h| v < h)
            }
            Condition::Equals { value, .. } => v == *value,
            Condition::Levels { levels, .. } => col
                .levels()
                .is_some_and(|names| levels.iter().any(|l| *l == names[v as usize])),
        }
    }

    pub fn label(&self) -> String {
        match self {
            Condition::Interval {
                covariate,
                low,
                high,
            } => match (low, high) {
                (None, None) => format!("{covariate} any"),
                (None, Some(h)) => format!("{covariate}<{}", format_number(*h)),
                (Some(l), None) => format!("{covariate}≥{}", format_number(*l)),
                (Some(l), Some(h)) => {
                    format!("{}≤{covariate}<{}", format_number(*l), format_number(*h))
                }
            },
            Condition::Equals { covariate, value } => {
                format!("{covariate}={}", format_number(*value))
            }
            Condition::Levels { covariate, levels } if levels.len() == 1 => {
                format!("{covariate}={}", levels[0])
            }
            Condition::Levels { covariate, levels } => {
                format!("{covariate}∈{{{}}}", levels.join(","))
            }
        }
    }

    /// Combines two conditions on the same covariate into one, when the
    /// result is still a single condition.
    fn merge(&self, other: &Condition) -> Option<Condition> {
        match (self, other) {
            (
                Condition::Interval {
                    covariate,
                    low: l1,
                    high: h1,
                },
                Condition::Interval {
                    covariate: c2,
                    low: l2,
                    high: h2,
                },
            ) if covariate == c2 => Some(Condition::Interval {
                covariate: covariate.clone(),
                low: max_bound(*l1, *l2, f64::max),
                high: max_bound(*h1, *h2, f64::min),
            }),
            (
                Condition::Levels {
                    covariate,
                    levels: a,
                },
                Condition::Levels {
                    covariate: c2,
                    levels: b,
                },
            ) if covariate == c2 => Some(Condition::Levels {
                covariate: covariate.clone(),
                levels: a.iter().filter(|l| b.contains(l)).cloned().collect(),
            }),
            _ => None,
        }
    }
}

fn max_bound(a: Option<f64>, b: Option<f64>, pick: fn(f64, f64) -> f64) -> Option<f64> {
    match (a, b) {
        (Some(x), Some(y)) => Some(pick(x, y)),
        (x, None) => x,
        (None, y) => y,
    }
}

/// Appends `cond` to `path`, folding it into an earlier clause on the same
/// covariate where possible.
pub(crate) fn push_condition(path: &mut Vec<Condition>, cond: Condition) {
    for existing in path.iter_mut() {
        if let Some(merged) = existing.merge(&cond) {
            *existing = merged;
            return;
        }
    }
    path.push(cond);
}

/// Conjunction label of a defining path, e.g. `black=1 ∧ re75<1000`.
pub fn path_label(path: &[Condition]) -> String {
    if path.is_empty() {
        return "all".to_string();
    }
    path.iter()
        .map(Condition::label)
        .collect::<Vec<_>>()
        .join(" ∧ ")
}

/// A slider-style rule on one covariate.
///
/// Numeric covariates take cut points (binary ones default to a single cut
/// at 0.5). Categorical covariates take a level subset, splitting into the
/// subset and its complement, or nothing, splitting into one cell per level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionRule {
    pub covariate: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cut_points: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub levels: Option<Vec<String>>,
}

impl PartitionRule {
    pub fn cuts(covariate: &str, cut_points: Vec<f64>) -> PartitionRule {
        PartitionRule {
            covariate: covariate.to_string(),
            cut_points: Some(cut_points),
            levels: None,
        }
    }

    pub fn binary(covariate: &str) -> PartitionRule {
        PartitionRule {
            covariate: covariate.to_string(),
            cut_points: None,
            levels: None,
        }
    }

    /// The cells this rule induces on `col`, in ascending order.
    fn cells(&self, col: &Column) -> Result<Vec<Condition>> {
        let name = &self.covariate;
        match &col.ctype {
            ColumnType::Categorical { levels } => {
                if self.cut_points.is_some() {
                    return Err(Error::Rule(format!(
                        "`{name}` is categorical; use a level subset"
                    )));
                }
                let Some(subset) = &self.levels else {
                    return Ok(levels
                        .iter()
                        .map(|l| Condition::Levels {
                            covariate: name.clone(),
                            levels: vec![l.clone()],
                        })
                        .collect());
                };
                if let Some(bad) = subset.iter().find(|l| !levels.contains(l)) {
                    return Err(Error::Rule(format!("`{name}` has no level `{bad}`")));
                }
                let inside: Vec<String> = levels
                    .iter()
                    .filter(|l| subset.contains(l))
                    .cloned()
                    .collect();
                let outside: Vec<String> = levels
                    .iter()
                    .filter(|l| !subset.contains(l))
                    .cloned()
                    .collect();
                if inside.is_empty() || outside.is_empty() {
                    return Err(Error::Rule(format!(
                        "level subset for `{name}` must be non-empty and proper"
                    )));
                }
                Ok(vec![
                    Condition::Levels {
                        covariate: name.clone(),
                        levels: inside,
                    },
                    Condition::Levels {
                        covariate: name.clone(),
                        levels: outside,
                    },
                ])
            }
            ctype => {
                if self.levels.is_some() {
                    return Err(Error::Rule(format!("`{name}` is numeric; use cut points")));
                }
                let observed: Vec<f64> = col.values.iter().flatten().copied().collect();
                let lo = observed.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = observed.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let cuts = match (&self.cut_points, ctype) {
                    (Some(c), _) => c.clone(),
                    (None, ColumnType::Binary) => vec![0.5],
                    (None, _) => {
                        return Err(Error::Rule(format!("rule on `{name}` needs cut points")))
                    }
                };
                if cuts.is_empty() {
                    return Err(Error::Rule(format!("rule on `{name}` needs cut points")));
                }
                if cuts.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(Error::Rule(format!(
                        "cut points for `{name}` must be strictly increasing"
                    )));
                }
                if let Some(c) = cuts.iter().find(|&&c| !(c > lo && c < hi)) {
                    return Err(Error::Rule(format!(
                        "cut point {} for `{name}` is outside the observed range ({}, {})",
                        format_number(*c),
                        format_number(lo),
                        format_number(hi)
                    )));
                }
                if *ctype == ColumnType::Binary {
                    // every interior cut separates 0 from 1
                    return Ok(vec![
                        Condition::Equals {
                            covariate: name.clone(),
                            value: 0.0,
                        },
                        Condition::Equals {
                            covariate: name.clone(),
                            value: 1.0,
                        },
                    ]);
                }
                let mut bounds: Vec<Option<f64>> = vec![None];
                bounds.extend(cuts.iter().map(|&c| Some(c)));
                bounds.push(None);
                Ok(bounds
                    .windows(2)
                    .map(|w| Condition::Interval {
                        covariate: name.clone(),
                        low: w[0],
                        high: w[1],
                    })
                    .collect())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Subgroup {
    pub id: usize,
    pub label: String,
    pub mask: RowMask,
    pub defining_path: Vec<Condition>,
}

impl Subgroup {
    pub fn size(&self) -> usize {
        self.mask.count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PartitionSource {
    Manual { rules: Vec<PartitionRule> },
    Auto { config: TreeConfig, seed: u64 },
}

/// How a client asks for a partition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartitionRequest {
    Manual { rules: Vec<PartitionRule> },
    Auto(TreeConfig),
}

impl PartitionRequest {
    pub fn build(&self, ds: &Dataset, cfg: &CausalConfig, seed: u64) -> Result<Partition> {
        match self {
            PartitionRequest::Manual { rules } => manual_partition(ds, cfg, rules),
            PartitionRequest::Auto(tcfg) => propensity_tree(ds, cfg, tcfg, seed),
        }
    }
}

/// Exact cover of the analysis scope by disjoint, non-empty subgroups.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    pub dataset_id: String,
    pub source: PartitionSource,
    /// Rows the partition covers.
    pub scope: RowMask,
    pub subgroups: Vec<Subgroup>,
    pub tree: Option<TreeNode>,
    pub notices: Vec<String>,
}

impl Partition {
    pub fn subgroup(&self, id: usize) -> Result<&Subgroup> {
        self.subgroups
            .iter()
            .find(|s| s.id == id)
            .ok_or(Error::UnknownSubgroup(id))
    }

    /// Subgroups are pairwise disjoint and their union is the scope.
    pub fn is_exact_cover(&self) -> bool {
        let mut union = RowMask::empty(self.scope.len());
        for sg in &self.subgroups {
            if !sg.mask.is_disjoint(&union) {
                return false;
            }
            union = union.or(&sg.mask);
        }
        union == self.scope
    }

    pub fn payload(&self) -> PartitionPayload {
        PartitionPayload {
            dataset_id: self.dataset_id.clone(),
            source: self.source.clone(),
            scope_size: self.scope.count(),
            subgroups: self
                .subgroups
                .iter()
                .map(|s| SubgroupSummary {
                    id: s.id,
                    label: s.label.clone(),
                    size: s.size(),
                    defining_path: s.defining_path.clone(),
                })
                .collect(),
            tree: self.tree.clone(),
            notices: self.notices.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubgroupSummary {
    pub id: usize,
    pub label: String,
    pub size: usize,
    pub defining_path: Vec<Condition>,
}

/// `Partition` JSON payload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionPayload {
    pub dataset_id: String,
    pub source: PartitionSource,
    pub scope_size: usize,
    pub subgroups: Vec<SubgroupSummary>,
    pub tree: Option<TreeNode>,
    pub notices: Vec<String>,
}

/// Cartesian grid of the rules' cells over rows complete in the cause,
/// outcome and every rule covariate. Empty cells are dropped with a notice.
pub fn manual_partition(
    ds: &Dataset,
    cfg: &CausalConfig,
    rules: &[PartitionRule],
) -> Result<Partition> {
    if rules.is_empty() {
        return Err(Error::Rule("at least one rule is required".into()));
    }
    let mut seen = std::collections::HashSet::new();
    for r in rules {
        if r.covariate == cfg.cause || r.covariate == cfg.outcome {
            return Err(Error::Rule(format!(
                "cannot partition on `{}`",
                r.covariate
            )));
        }
        if !seen.insert(r.covariate.as_str()) {
            return Err(Error::Rule(format!(
                "`{}` has more than one rule",
                r.covariate
            )));
        }
    }
    let columns = rules
        .iter()
        .map(|r| {
            ds.column(&r.covariate)
                .map_err(|_| Error::Rule(format!("unknown covariate `{}`", r.covariate)))
        })
        .collect::<Result<Vec<_>>>()?;
    let per_rule = rules
        .iter()
        .zip(&columns)
        .map(|(r, c)| r.cells(c))
        .collect::<Result<Vec<_>>>()?;

    let mut names = vec![cfg.cause.as_str(), cfg.outcome.as_str()];
    names.extend(rules.iter().map(|r| r.covariate.as_str()));
    let scope = complete_within(ds, &names, &RowMask::full(ds.n_rows()))?;

    let mut subgroups = Vec::new();
    let mut notices = Vec::new();
    let mut index = vec![0usize; per_rule.len()];
    'cells: loop {
        let path: Vec<Condition> = index
            .iter()
            .zip(&per_rule)
            .map(|(&i, cells)| cells[i].clone())
            .collect();
        let mask = RowMask::from_fn(ds.n_rows(), |row| {
            scope.contains(row) && path.iter().zip(&columns).all(|(c, col)| c.holds(col, row))
        });
        let label = path_label(&path);
        if mask.is_empty() {
            notices.push(format!("cell `{label}` is empty and was dropped"));
        } else {
            subgroups.push(Subgroup {
                id: subgroups.len() + 1,
                label,
                mask,
                defining_path: path,
            });
        }
        // odometer increment, last rule fastest
        for k in (0..index.len()).rev() {
            index[k] += 1;
            if index[k] < per_rule[k].len() {
                continue 'cells;
            }
            index[k] = 0;
        }
        break;
    }
    if subgroups.is_empty() {
        return Err(Error::EmptyPartition);
    }
    Ok(Partition {
        dataset_id: ds.id().to_string(),
        source: PartitionSource::Manual {
            rules: rules.to_vec(),
        },
        scope,
        subgroups,
        tree: None,
        notices,
    })
}
