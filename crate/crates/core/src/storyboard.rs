//! Storyboard flows from subgroup through cause bins to mean outcome, and
//! the pass-through / hill / valley shape reading of each flow.

use serde::{Deserialize, Serialize};

use crate::dataset::{complete_within, CausalConfig, ColumnType, Dataset, RowMask};
use crate::error::{Error, Result};
use crate::partition::Partition;
use crate::scope::Scope;
use crate::stats::{mean, quantile_sorted, sample_sd, spearman};

pub const DEFAULT_BINS: usize = 4;

/// Cause bins shared by every diagram of a storyboard.
#[derive(Debug, Clone, PartialEq)]
pub struct Binning {
    /// Interior edges; bin `j` is `[edges[j-1], edges[j])`, open at both ends
    /// of the range.
    pub edges: Vec<f64>,
    /// Bin index of each input value.
    pub assignment: Vec<usize>,
}

impl Binning {
    pub fn n_bins(&self) -> usize {
        self.edges.len() + 1
    }
}

/// Bin index of `v`: the number of edges at or below it.
pub fn bin_of(edges: &[f64], v: f64) -> usize {
    edges.partition_point(|&e| e <= v)
}

/// Percentile bins of the cause. Interior edges sit at the `i/L` quantiles;
/// repeated edges and edges at the minimum are dropped, so heavy ties yield
/// fewer bins. A 0/1 cause always gets the two bins {0} and {1}.
pub fn bin_treatment(values: &[f64], l: usize) -> Result<Binning> {
    if l < 2 {
        return Err(Error::Config(format!("need at least 2 bins, got {l}")));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let (Some(&lo), Some(&hi)) = (sorted.first(), sorted.last()) else {
        return Err(Error::EmptySelection);
    };
    if lo == hi {
        return Err(Error::SingleBin);
    }
    let edges = if sorted.iter().all(|&v| v == 0.0 || v == 1.0) {
        vec![0.5]
    } else {
        let mut edges: Vec<f64> = (1..l)
            .map(|i| quantile_sorted(&sorted, i as f64 / l as f64))
            .collect();
        edges.dedup();
        edges.retain(|&e| e > lo);
        if edges.is_empty() {
            // more than (L-1)/L of the mass sits at the minimum
            edges.push(*sorted.iter().find(|&&v| v > lo).unwrap());
        }
        edges
    };
    let assignment = values.iter().map(|&v| bin_of(&edges, v)).collect();
    Ok(Binning { edges, assignment })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CauseNode {
    pub bin_index: usize,
    pub count: usize,
    /// Share of the scope's rows in this bin.
    pub fraction: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pathway {
    pub bin_index: usize,
    pub count: usize,
    pub fraction: f64,
    /// Mean outcome of the scope's rows in this bin.
    pub endpoint: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoryboardDiagram {
    pub scope: Scope,
    pub bin_edges: Vec<f64>,
    pub n: usize,
    /// One node per bin, empty bins included with count 0.
    pub cause_nodes: Vec<CauseNode>,
    /// Occupied bins only.
    pub pathways: Vec<Pathway>,
    pub scope_mean_outcome: f64,
    pub outcome_sd: Option<f64>,
}

/// Flow diagram for the complete cause/outcome rows of `scope`.
pub fn build_storyboard(
    ds: &Dataset,
    cfg: &CausalConfig,
    scope: &RowMask,
    tag: Scope,
    edges: &[f64],
) -> Result<StoryboardDiagram> {
    let x = ds.column(&cfg.cause)?;
    let y = ds.column(&cfg.outcome)?;
    let rows = complete_within(ds, &[cfg.cause.as_str(), cfg.outcome.as_str()], scope)?.indices();
    if rows.is_empty() {
        return Err(Error::EmptyDiagram);
    }
    let n_bins = edges.len() + 1;
    let mut counts = vec![0usize; n_bins];
    let mut sums = vec![0.0; n_bins];
    let mut outcomes = Vec::with_capacity(rows.len());
    for &i in &rows {
        let b = bin_of(edges, x.values[i].unwrap());
        let yv = y.values[i].unwrap();
        counts[b] += 1;
        sums[b] += yv;
        outcomes.push(yv);
    }
    let n = rows.len() as f64;
    Ok(StoryboardDiagram {
        scope: tag,
        bin_edges: edges.to_vec(),
        n: rows.len(),
        cause_nodes: (0..n_bins)
            .map(|b| CauseNode {
                bin_index: b,
                count: counts[b],
                fraction: counts[b] as f64 / n,
            })
            .collect(),
        pathways: (0..n_bins)
            .filter(|&b| counts[b] > 0)
            .map(|b| Pathway {
                bin_index: b,
                count: counts[b],
                fraction: counts[b] as f64 / n,
                endpoint: sums[b] / counts[b] as f64,
            })
            .collect(),
        scope_mean_outcome: mean(&outcomes),
        outcome_sd: sample_sd(&outcomes),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    PassThrough,
    Hill,
    Valley,
    Mixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShapeEvidence {
    /// Share of the scope in the upper half of the bins.
    pub p_hi: f64,
    pub p_hi_pop: f64,
    /// Scope mean outcome minus population mean, in population SD units.
    pub rel_outcome: f64,
    /// Spearman correlation of bin index and endpoint over occupied bins.
    pub bin_trend_rho: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShapeLabel {
    pub label: Shape,
    pub evidence: ShapeEvidence,
    /// Fewer than two occupied bins.
    pub degenerate: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShapeThresholds {
    /// Propensity margin over the population's upper-bin share.
    pub delta: f64,
    /// Outcome margin in population SD units.
    pub epsilon: f64,
    /// Bin-trend correlation at or below which a flow passes through.
    pub pass_through_rho: f64,
}

impl Default for ShapeThresholds {
    fn default() -> Self {
        ShapeThresholds {
            delta: 0.05,
            epsilon: 0.1,
            pass_through_rho: -0.5,
        }
    }
}

fn upper_share(d: &StoryboardDiagram) -> f64 {
    let n_bins = d.cause_nodes.len();
    let first_hi = n_bins - n_bins.div_ceil(2);
    d.cause_nodes
        .iter()
        .filter(|c| c.bin_index >= first_hi)
        .map(|c| c.fraction)
        .sum()
}

fn bin_trend(d: &StoryboardDiagram) -> Option<f64> {
    let idx: Vec<f64> = d.pathways.iter().map(|p| p.bin_index as f64).collect();
    let end: Vec<f64> = d.pathways.iter().map(|p| p.endpoint).collect();
    match idx.len() {
        0 | 1 => None,
        2 => match end[1].total_cmp(&end[0]) {
            std::cmp::Ordering::Greater => Some(1.0),
            std::cmp::Ordering::Less => Some(-1.0),
            std::cmp::Ordering::Equal => None,
        },
        _ => spearman(&idx, &end).ok(),
    }
}

/// Reads the shape of `diagram` against the population diagram.
///
/// First match wins: hill (more high-bin mass and a lower outcome), valley
/// (less high-bin mass and a higher outcome), pass-through (endpoints fall
/// across bins), otherwise mixed. The population is only ever pass-through
/// or mixed.
pub fn classify_shape(
    diagram: &StoryboardDiagram,
    population: &StoryboardDiagram,
    t: ShapeThresholds,
) -> Result<ShapeLabel> {
    if diagram.bin_edges != population.bin_edges {
        return Err(Error::Config("diagrams use different bin edges".into()));
    }
    let p_hi = upper_share(diagram);
    let p_hi_pop = upper_share(population);
    let rel_outcome = match population.outcome_sd {
        Some(sd) if sd > 0.0 => (diagram.scope_mean_outcome - population.scope_mean_outcome) / sd,
        _ => 0.0,
    };
    let bin_trend_rho = bin_trend(diagram);
    let evidence = ShapeEvidence {
        p_hi,
        p_hi_pop,
        rel_outcome,
        bin_trend_rho,
    };
    if diagram.pathways.len() < 2 {
        return Ok(ShapeLabel {
            label: Shape::Mixed,
            evidence,
            degenerate: true,
        });
    }
    let is_population = diagram.scope == Scope::Population;
    let label = if !is_population && p_hi >= p_hi_pop + t.delta && rel_outcome <= -t.epsilon {
        Shape::Hill
    } else if !is_population && p_hi <= p_hi_pop - t.delta && rel_outcome >= t.epsilon {
        Shape::Valley
    } else if bin_trend_rho.is_some_and(|r| r <= t.pass_through_rho) {
        Shape::PassThrough
    } else {
        Shape::Mixed
    };
    Ok(ShapeLabel {
        label,
        evidence,
        degenerate: false,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubgroupFlow {
    pub id: usize,
    pub diagram: StoryboardDiagram,
    pub shape: Shape,
    pub evidence: ShapeEvidence,
    pub degenerate: bool,
}

/// `Storyboard` JSON payload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Storyboard {
    pub requested_bins: usize,
    pub bin_edges: Vec<f64>,
    pub population: StoryboardDiagram,
    pub population_shape: ShapeLabel,
    pub subgroups: Vec<SubgroupFlow>,
    pub notices: Vec<String>,
}

/// Population diagram plus one per subgroup, all on bins computed once
/// from the population's cause values. Without a partition the population
/// is every complete cause/outcome row.
pub fn storyboard(
    ds: &Dataset,
    cfg: &CausalConfig,
    partition: Option<&Partition>,
    l: usize,
    t: ShapeThresholds,
) -> Result<Storyboard> {
    let x = ds.column(&cfg.cause)?;
    if matches!(x.ctype, ColumnType::Categorical { .. }) {
        return Err(Error::Config(format!(
            "cause `{}` must be binary or continuous",
            cfg.cause
        )));
    }
    let base = partition.map_or_else(|| RowMask::full(ds.n_rows()), |p| p.scope.clone());
    let pop_rows = complete_within(ds, &[cfg.cause.as_str(), cfg.outcome.as_str()], &base)?;
    let xs: Vec<f64> = pop_rows.iter().map(|i| x.values[i].unwrap()).collect();
    let binning = bin_treatment(&xs, l)?;
    let mut notices = Vec::new();
    if x.ctype != ColumnType::Binary && binning.n_bins() < l {
        notices.push(format!(
            "tied cause values collapsed {l} bins to {}",
            binning.n_bins()
        ));
    }
    let population = build_storyboard(ds, cfg, &pop_rows, Scope::Population, &binning.edges)?;
    let population_shape = classify_shape(&population, &population, t)?;
    let mut subgroups = Vec::new();
    for sg in partition
        .map(|p| p.subgroups.as_slice())
        .unwrap_or_default()
    {
        match build_storyboard(ds, cfg, &sg.mask, Scope::Subgroup(sg.id), &binning.edges) {
            Ok(diagram) => {
                let s = classify_shape(&diagram, &population, t)?;
                subgroups.push(SubgroupFlow {
                    id: sg.id,
                    diagram,
                    shape: s.label,
                    evidence: s.evidence,
                    degenerate: s.degenerate,
                });
            }
            Err(Error::EmptyDiagram) => {
                notices.push(format!("subgroup {} has no complete rows", sg.id))
            }
            Err(e) => return Err(e),
        }
    }
    Ok(Storyboard {
        requested_bins: l,
        bin_edges: binning.edges,
        population,
        population_shape,
        subgroups,
        notices,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{load_table, LoadOptions};
    use crate::partition::{manual_partition, PartitionRule};

    fn ds(text: &str) -> Dataset {
        load_table(text.as_bytes(), LoadOptions::default()).unwrap()
    }

    #[test]
    fn quartile_bins() {
        let v: Vec<f64> = (1..=8).map(f64::from).collect();
        let b = bin_treatment(&v, 4).unwrap();
        assert_eq!(b.edges, vec![2.75, 4.5, 6.25]);
        assert_eq!(b.assignment, vec![0, 0, 1, 1, 2, 2, 3, 3]);
    }

    #[test]
    fn binary_and_constant_causes() {
        let b = bin_treatment(&[0.0, 1.0, 1.0, 0.0], 4).unwrap();
        assert_eq!(b.edges, vec![0.5]);
        assert_eq!(b.assignment, vec![0, 1, 1, 0]);
        assert_eq!(bin_treatment(&[7.0; 5], 4).unwrap_err(), Error::SingleBin);
    }

    #[test]
    fn heavy_ties_collapse_bins() {
        let b = bin_treatment(&[0.0, 0.0, 0.0, 0.0, 0.0, 3.0, 9.0], 4).unwrap();
        assert!(b.edges.iter().all(|&e| e > 0.0));
        assert!(b.assignment.contains(&0));
        let b = bin_treatment(&[0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 2.0], 4).unwrap();
        assert_eq!(b.edges, vec![2.0]);
    }

    #[test]
    fn diagram_fractions_and_endpoints() {
        let d = ds("X,y\n1,0\n2,0\n3,1\n4,1\n");
        let cfg = CausalConfig::with_all_covariates(&d, "X", "y");
        let sb = build_storyboard(&d, &cfg, &RowMask::full(4), Scope::Population, &[2.5]).unwrap();
        assert_eq!(
            sb.pathways.iter().map(|p| p.endpoint).collect::<Vec<_>>(),
            vec![0.0, 1.0]
        );
        let total: f64 = sb.cause_nodes.iter().map(|c| c.fraction).sum();
        assert!((total - 1.0).abs() < 1e-12);

        let one = build_storyboard(
            &d,
            &cfg,
            &RowMask::from_indices(4, [0, 1]),
            Scope::Subgroup(1),
            &[2.5],
        )
        .unwrap();
        assert_eq!(one.pathways.len(), 1);
        assert_eq!(one.pathways[0].fraction, 1.0);
        assert_eq!(
            build_storyboard(&d, &cfg, &RowMask::empty(4), Scope::Subgroup(1), &[2.5]).unwrap_err(),
            Error::EmptyDiagram
        );
    }

    #[test]
    fn decreasing_endpoints_pass_through() {
        let d = ds("X,y\n1,9\n2,7\n3,5\n4,3\n5,1\n6,0\n7,-1\n8,-2\n");
        let cfg = CausalConfig::with_all_covariates(&d, "X", "y");
        let sb = storyboard(&d, &cfg, None, 4, ShapeThresholds::default()).unwrap();
        assert_eq!(sb.population_shape.label, Shape::PassThrough);
        assert!((sb.population_shape.evidence.bin_trend_rho.unwrap() + 1.0).abs() < 1e-12);
    }

    /// Group h sits in the upper bins with low outcomes, group v in the
    /// lower bins with high outcomes; together they pass through.
    #[test]
    fn mirrored_hill_and_valley() {
        let mut text = String::from("X,y,g\n");
        for i in 0..40 {
            let (x, y) = if i < 32 {
                (5 + i % 4, 0)
            } else {
                (1 + i % 4, 0)
            };
            text.push_str(&format!("{x},{y},1\n"));
        }
        for i in 0..40 {
            let (x, y) = if i < 32 {
                (1 + i % 4, 10)
            } else {
                (5 + i % 4, 10)
            };
            text.push_str(&format!("{x},{y},0\n"));
        }
        let d = ds(&text);
        let cfg = CausalConfig::with_all_covariates(&d, "X", "y");
        let p = manual_partition(&d, &cfg, &[PartitionRule::binary("g")]).unwrap();
        let sb = storyboard(&d, &cfg, Some(&p), 4, ShapeThresholds::default()).unwrap();
        assert_eq!(sb.population_shape.label, Shape::PassThrough);
        // subgroup 1 is g=0, subgroup 2 is g=1
        assert_eq!(sb.subgroups[0].shape, Shape::Valley);
        assert_eq!(sb.subgroups[1].shape, Shape::Hill);
    }

    #[test]
    fn identical_subgroup_is_not_hill_or_valley() {
        let d = ds("X,y,g\n1,4,0\n2,3,0\n3,2,0\n4,1,0\n1,4,1\n2,3,1\n3,2,1\n4,1,1\n");
        let cfg = CausalConfig::with_all_covariates(&d, "X", "y");
        let p = manual_partition(&d, &cfg, &[PartitionRule::binary("g")]).unwrap();
        let sb = storyboard(&d, &cfg, Some(&p), 4, ShapeThresholds::default()).unwrap();
        for s in &sb.subgroups {
            assert_eq!(s.shape, Shape::PassThrough);
            assert_eq!(s.evidence.p_hi, s.evidence.p_hi_pop);
        }
    }
}
