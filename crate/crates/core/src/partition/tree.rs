//! Propensity tree: recursive binary splits of the covariate space with the
//! cause as target, grown best-first to a fixed number of leaves.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{path_label, push_condition, Condition, Partition, PartitionSource, Subgroup};
use crate::dataset::{complete_within, CausalConfig, Column, ColumnType, Dataset, RowMask};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeConfig {
    pub target_leaves: usize,
    pub min_leaf_size: usize,
    /// Split candidates; empty means every covariate of the config.
    #[serde(default)]
    pub features: Vec<String>,
}

impl TreeConfig {
    fn validate(&self, n_rows: usize) -> Result<()> {
        if self.target_leaves < 2 {
            return Err(Error::TreeConfig("target_leaves must be at least 2".into()));
        }
        if self.min_leaf_size < 2 {
            return Err(Error::TreeConfig("min_leaf_size must be at least 2".into()));
        }
        if self.target_leaves.saturating_mul(self.min_leaf_size) > n_rows {
            return Err(Error::TreeConfig(format!(
                "{} leaves of at least {} rows need more than the {n_rows} available",
                self.target_leaves, self.min_leaf_size
            )));
        }
        Ok(())
    }
}

/// Node of the grown tree. Internal nodes carry the split; leaves carry the
/// id of the subgroup they became.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeNode {
    pub n: usize,
    pub feature: Option<String>,
    /// Rows with `feature < threshold` go left.
    pub threshold: Option<f64>,
    pub gain: Option<f64>,
    /// Zero-based position of this split in the growth sequence.
    pub split_order: Option<usize>,
    pub subgroup_id: Option<usize>,
    pub children: Vec<TreeNode>,
}

/// One numeric split variable after categorical expansion.
struct Feature {
    name: String,
    /// Base column, for categorical indicators.
    base: Option<(String, String)>,
    binary: bool,
    values: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Split {
    pub feature: usize,
    pub threshold: f64,
    pub gain: f64,
    /// Both children contain treated and untreated rows (binary cause).
    pub two_arm: bool,
}

/// Relative tolerance under which two gains count as tied.
const GAIN_TIE: f64 = 1e-10;

impl Split {
    /// Whether `self` should replace `incumbent`. Two-arm splits beat
    /// single-arm ones; otherwise the larger gain wins, and ties keep the
    /// incumbent, which was found first.
    fn beats(&self, incumbent: &Split) -> bool {
        if self.two_arm != incumbent.two_arm {
            return self.two_arm;
        }
        self.gain > incumbent.gain + GAIN_TIE * incumbent.gain.abs().max(1.0)
    }
}

/// Unnormalised impurity of a node: `n * gini` for a binary target,
/// the sum of squared deviations otherwise.
fn impurity(binary: bool, n: f64, sum: f64, sumsq: f64) -> f64 {
    if n == 0.0 {
        return 0.0;
    }
    if binary {
        2.0 * sum * (n - sum) / n
    } else {
        (sumsq - sum * sum / n).max(0.0)
    }
}

/// Best admissible threshold of one feature over `rows`.
fn best_on_feature(
    feature: &[f64],
    target: &[f64],
    rows: &[usize],
    binary: bool,
    min_leaf: usize,
    index: usize,
) -> Option<Split> {
    let mut pairs: Vec<(f64, f64)> = rows.iter().map(|&i| (feature[i], target[i])).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let n = pairs.len();
    let centre = pairs.iter().map(|p| p.1).sum::<f64>() / n as f64;
    let shift = if binary { 0.0 } else { centre };
    let (tot, totsq) = pairs.iter().fold((0.0, 0.0), |(s, q), p| {
        let t = p.1 - shift;
        (s + t, q + t * t)
    });
    let parent = impurity(binary, n as f64, tot, totsq);
    let (mut ls, mut lq) = (0.0, 0.0);
    let mut best: Option<Split> = None;
    for i in 1..n {
        let t = pairs[i - 1].1 - shift;
        ls += t;
        lq += t * t;
        if pairs[i - 1].0 == pairs[i].0 || i < min_leaf || n - i < min_leaf {
            continue;
        }
        let (nl, nr) = (i as f64, (n - i) as f64);
        let gain =
            parent - impurity(binary, nl, ls, lq) - impurity(binary, nr, tot - ls, totsq - lq);
        if gain <= GAIN_TIE * parent.max(1.0) {
            continue;
        }
        let two_arm = !binary || (ls > 0.0 && ls < nl && tot - ls > 0.0 && tot - ls < nr);
        let cand = Split {
            feature: index,
            threshold: 0.5 * (pairs[i - 1].0 + pairs[i].0),
            gain,
            two_arm,
        };
        if best.as_ref().is_none_or(|b| cand.beats(b)) {
            best = Some(cand);
        }
    }
    best
}

fn best_split(
    features: &[Feature],
    target: &[f64],
    rows: &[usize],
    binary: bool,
    min_leaf: usize,
) -> Option<Split> {
    let per_feature: Vec<Option<Split>> = features
        .par_iter()
        .enumerate()
        .map(|(j, f)| best_on_feature(&f.values, target, rows, binary, min_leaf, j))
        .collect();
    // sequential reduction keeps the lower feature index on ties
    per_feature
        .into_iter()
        .flatten()
        .fold(None, |best: Option<Split>, cand| match best {
            Some(b) if !cand.beats(&b) => Some(b),
            _ => Some(cand),
        })
}

fn expand_features(ds: &Dataset, names: &[String]) -> Result<Vec<Feature>> {
    let mut out = Vec::new();
    for name in names {
        let col = ds.column(name)?;
        let cols: Vec<Column> = ds.numeric_features(name)?;
        for c in cols {
            let base = match &col.ctype {
                ColumnType::Categorical { .. } => c
                    .name
                    .split_once('=')
                    .map(|(b, l)| (b.to_string(), l.to_string())),
                _ => None,
            };
            out.push(Feature {
                binary: c.ctype == ColumnType::Binary,
                name: c.name.clone(),
                base,
                values: c.values.iter().map(|v| v.unwrap_or(f64::NAN)).collect(),
            });
        }
    }
    Ok(out)
}

fn child_conditions(ds: &Dataset, f: &Feature, threshold: f64) -> (Condition, Condition) {
    if let Some((base, level)) = &f.base {
        let levels = ds
            .column(base)
            .ok()
            .and_then(|c| c.levels().map(<[String]>::to_vec))
            .unwrap_or_default();
        let others = levels.into_iter().filter(|l| l != level).collect();
        return (
            Condition::Levels {
                covariate: base.clone(),
                levels: others,
            },
            Condition::Levels {
                covariate: base.clone(),
                levels: vec![level.clone()],
            },
        );
    }
    if f.binary {
        return (
            Condition::Equals {
                covariate: f.name.clone(),
                value: 0.0,
            },
            Condition::Equals {
                covariate: f.name.clone(),
                value: 1.0,
            },
        );
    }
    (
        Condition::Interval {
            covariate: f.name.clone(),
            low: None,
            high: Some(threshold),
        },
        Condition::Interval {
            covariate: f.name.clone(),
            low: Some(threshold),
            high: None,
        },
    )
}

struct Node {
    rows: Vec<usize>,
    path: Vec<Condition>,
    split: Option<Split>,
    split_order: Option<usize>,
    children: Option<(usize, usize)>,
}

/// Grows the propensity tree and turns its leaves into subgroups.
///
/// The frontier leaf with the best admissible split is split next until
/// `target_leaves` leaves exist or no leaf can be split. The criterion is
/// the Gini decrease of a binary cause or the variance reduction of a
/// continuous one. `seed` is recorded with the partition; growth itself is
/// deterministic.
pub fn propensity_tree(
    ds: &Dataset,
    cfg: &CausalConfig,
    tcfg: &TreeConfig,
    seed: u64,
) -> Result<Partition> {
    let x_col = ds.column(&cfg.cause)?;
    let binary = match x_col.ctype {
        ColumnType::Binary => true,
        ColumnType::Continuous => false,
        ColumnType::Categorical { .. } => {
            return Err(Error::Config(format!(
                "cause `{}` must be binary or continuous",
                cfg.cause
            )))
        }
    };
    let feature_names: Vec<String> = if tcfg.features.is_empty() {
        cfg.covariates.clone()
    } else {
        tcfg.features.clone()
    };
    if feature_names.is_empty() {
        return Err(Error::TreeConfig("no split features".into()));
    }
    if let Some(f) = feature_names
        .iter()
        .find(|f| **f == cfg.cause || **f == cfg.outcome)
    {
        return Err(Error::TreeConfig(format!(
            "`{f}` cannot be a split feature"
        )));
    }
    let features = expand_features(ds, &feature_names)?;

    let mut cols = vec![cfg.cause.as_str(), cfg.outcome.as_str()];
    cols.extend(feature_names.iter().map(String::as_str));
    let scope = complete_within(ds, &cols, &RowMask::full(ds.n_rows()))?;
    tcfg.validate(scope.count())?;

    let target: Vec<f64> = x_col.values.iter().map(|v| v.unwrap_or(f64::NAN)).collect();
    let min_leaf = tcfg.min_leaf_size;
    let root_rows = scope.indices();
    let root_split = best_split(&features, &target, &root_rows, binary, min_leaf);
    if root_split.is_none() {
        return Err(Error::SingleLeaf);
    }
    let mut nodes = vec![Node {
        rows: root_rows,
        path: Vec::new(),
        split: root_split,
        split_order: None,
        children: None,
    }];
    let mut leaves = 1;
    while leaves < tcfg.target_leaves {
        // pick among frontier leaves; earlier-created leaves win ties
        let mut chosen: Option<usize> = None;
        for (i, node) in nodes.iter().enumerate() {
            if node.children.is_some() {
                continue;
            }
            if let Some(s) = &node.split {
                if chosen.is_none_or(|c| s.beats(nodes[c].split.as_ref().unwrap())) {
                    chosen = Some(i);
                }
            }
        }
        let Some(i) = chosen else { break };
        let split = nodes[i].split.unwrap();
        let f = &features[split.feature];
        let (left_rows, right_rows): (Vec<usize>, Vec<usize>) = nodes[i]
            .rows
            .iter()
            .partition(|&&r| f.values[r] < split.threshold);
        let (lc, rc) = child_conditions(ds, f, split.threshold);
        let mut children = Vec::with_capacity(2);
        for (rows, cond) in [(left_rows, lc), (right_rows, rc)] {
            let mut path = nodes[i].path.clone();
            push_condition(&mut path, cond);
            let split = best_split(&features, &target, &rows, binary, min_leaf);
            children.push(Node {
                rows,
                path,
                split,
                split_order: None,
                children: None,
            });
        }
        let l = nodes.len();
        nodes.extend(children);
        nodes[i].children = Some((l, l + 1));
        nodes[i].split_order = Some(leaves - 1);
        leaves += 1;
    }

    let mut subgroups = Vec::new();
    let tree = describe(0, &nodes, &features, ds, &mut subgroups);
    let mut notices = Vec::new();
    if subgroups.len() < tcfg.target_leaves {
        notices.push(format!(
            "no admissible split remained; grew {} of {} requested leaves",
            subgroups.len(),
            tcfg.target_leaves
        ));
    }
    Ok(Partition {
        dataset_id: ds.id().to_string(),
        source: PartitionSource::Auto {
            config: tcfg.clone(),
            seed,
        },
        scope,
        subgroups,
        tree: Some(tree),
        notices,
    })
}

/// In-order walk assigning subgroup ids left to right.
fn describe(
    i: usize,
    nodes: &[Node],
    features: &[Feature],
    ds: &Dataset,
    out: &mut Vec<Subgroup>,
) -> TreeNode {
    let node = &nodes[i];
    match node.children {
        Some((l, r)) => {
            let split = node.split.unwrap();
            let children = vec![
                describe(l, nodes, features, ds, out),
                describe(r, nodes, features, ds, out),
            ];
            TreeNode {
                n: node.rows.len(),
                feature: Some(features[split.feature].name.clone()),
                threshold: Some(split.threshold),
                gain: Some(split.gain),
                split_order: node.split_order,
                subgroup_id: None,
                children,
            }
        }
        None => {
            let id = out.len() + 1;
            out.push(Subgroup {
                id,
                label: path_label(&node.path),
                mask: RowMask::from_indices(ds.n_rows(), node.rows.iter().copied()),
                defining_path: node.path.clone(),
            });
            TreeNode {
                n: node.rows.len(),
                feature: None,
                threshold: None,
                gain: None,
                split_order: None,
                subgroup_id: Some(id),
                children: Vec::new(),
            }
        }
    }
}
