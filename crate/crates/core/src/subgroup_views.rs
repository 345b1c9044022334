//! View models for the subgroup viewer: per-subgroup geometry in the
//! cause-outcome plane and radar glyphs over the most discriminative
//! covariates.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{complete_within, CausalConfig, ColumnType, Dataset, RowMask};
use crate::error::{Error, Result};
use crate::partition::Partition;
use crate::scope::Scope;
use crate::stats::{mean, pearson, rank_auc, sample_sd};

pub const DEFAULT_TOP_K: usize = 5;
pub const MAX_AXES: usize = 8;
const SIGN_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViewMode {
    #[serde(rename = "circleline")]
    CircleLine,
    Ellipse,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlopeSign {
    Positive,
    Negative,
    Flat,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArmCircle {
    pub size: usize,
    pub mean_outcome: Option<f64>,
}

/// Two arm circles joined by a line, for a binary cause.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CircleLineModel {
    pub scope: Scope,
    pub untreated: ArmCircle,
    pub treated: ArmCircle,
    /// `None` when either arm is empty.
    pub slope_sign: Option<SlopeSign>,
}

/// Data ellipse for a continuous cause: centroid, SD half-widths and slope.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EllipseModel {
    pub scope: Scope,
    pub centroid: [f64; 2],
    pub half_widths: [f64; 2],
    /// Least-squares slope of outcome on cause; `None` when the cause is constant.
    pub slope: Option<f64>,
    pub xy_correlation: Option<f64>,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SpaceModel {
    CircleLine(CircleLineModel),
    Ellipse(EllipseModel),
}

type Points = Vec<(f64, f64)>;

fn circle_line(x: &[f64], y: &[f64], scope: Scope) -> CircleLineModel {
    let (t, u): (Points, Points) = x
        .iter()
        .copied()
        .zip(y.iter().copied())
        .partition(|p| p.0 > 0.5);
    let arm = |v: &[(f64, f64)]| ArmCircle {
        size: v.len(),
        mean_outcome: (!v.is_empty()).then(|| mean(&v.iter().map(|p| p.1).collect::<Vec<_>>())),
    };
    let (treated, untreated) = (arm(&t), arm(&u));
    let slope_sign = match (treated.mean_outcome, untreated.mean_outcome) {
        (Some(a), Some(b)) if a - b > SIGN_TOLERANCE => Some(SlopeSign::Positive),
        (Some(a), Some(b)) if b - a > SIGN_TOLERANCE => Some(SlopeSign::Negative),
        (Some(_), Some(_)) => Some(SlopeSign::Flat),
        _ => None,
    };
    CircleLineModel {
        scope,
        untreated,
        treated,
        slope_sign,
    }
}

fn ellipse(x: &[f64], y: &[f64], scope: Scope) -> EllipseModel {
    let (mx, my) = (mean(x), mean(y));
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    EllipseModel {
        scope,
        centroid: [mx, my],
        half_widths: [sample_sd(x).unwrap_or(0.0), sample_sd(y).unwrap_or(0.0)],
        slope: (sxx > 0.0).then(|| sxy / sxx),
        xy_correlation: pearson(x, y),
        size: x.len(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CausalitySpace {
    pub mode: ViewMode,
    pub aggregate: SpaceModel,
    pub subgroups: Vec<SpaceModel>,
    pub notices: Vec<String>,
}

/// Geometry for every subgroup plus a gray aggregate over their union.
/// Subgroups with fewer than two complete cause/outcome rows are left out
/// with a notice.
pub fn causality_space(
    ds: &Dataset,
    cfg: &CausalConfig,
    partition: &Partition,
) -> Result<CausalitySpace> {
    let x_col = ds.column(&cfg.cause)?;
    let y_col = ds.column(&cfg.outcome)?;
    let mode = match x_col.ctype {
        ColumnType::Binary => ViewMode::CircleLine,
        ColumnType::Continuous => ViewMode::Ellipse,
        ColumnType::Categorical { .. } => {
            return Err(Error::Config(format!(
                "cause `{}` must be binary or continuous",
                cfg.cause
            )))
        }
    };
    let complete = complete_within(
        ds,
        &[cfg.cause.as_str(), cfg.outcome.as_str()],
        &RowMask::full(ds.n_rows()),
    )?;
    let model = |mask: &RowMask, scope: Scope| -> Option<SpaceModel> {
        let rows = mask.and(&complete).indices();
        if rows.len() < 2 {
            return None;
        }
        let x: Vec<f64> = rows.iter().map(|&i| x_col.values[i].unwrap()).collect();
        let y: Vec<f64> = rows.iter().map(|&i| y_col.values[i].unwrap()).collect();
        Some(match mode {
            ViewMode::CircleLine => SpaceModel::CircleLine(circle_line(&x, &y, scope)),
            ViewMode::Ellipse => SpaceModel::Ellipse(ellipse(&x, &y, scope)),
        })
    };
    let mut union = RowMask::empty(ds.n_rows());
    let mut subgroups = Vec::new();
    let mut notices = Vec::new();
    for sg in &partition.subgroups {
        union = union.or(&sg.mask);
        match model(&sg.mask, Scope::Subgroup(sg.id)) {
            Some(m) => subgroups.push(m),
            None => notices.push(format!(
                "subgroup {} has fewer than 2 complete rows and is not drawn",
                sg.id
            )),
        }
    }
    let aggregate = model(&union, Scope::Population).ok_or(Error::SampleSize {
        needed: 2,
        got: union.and(&complete).count(),
    })?;
    Ok(CausalitySpace {
        mode,
        aggregate,
        subgroups,
        notices,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscriminativeFeature {
    pub feature: String,
    pub auc: f64,
    /// Numeric column the score came from: the feature itself, or for a
    /// categorical feature its strongest indicator.
    pub axis: String,
}

/// Folded one-vs-rest AUC of `values` for membership in each subgroup,
/// averaged over subgroups.
fn aggregated_auc(values: &[Option<f64>], partition: &Partition) -> f64 {
    let rows: Vec<usize> = partition
        .scope
        .iter()
        .filter(|&i| values[i].is_some())
        .collect();
    let scores: Vec<f64> = rows.iter().map(|&i| values[i].unwrap()).collect();
    let folded: Vec<f64> = partition
        .subgroups
        .iter()
        .map(|sg| {
            let labels: Vec<bool> = rows.iter().map(|&i| sg.mask.contains(i)).collect();
            rank_auc(&scores, &labels)
                .map(|a| a.max(1.0 - a))
                .unwrap_or(0.5)
        })
        .collect();
    mean(&folded)
}

/// Ranks `features` by how well each separates the subgroups and keeps the
/// top `k`. Ties break by name.
pub fn discriminative_features(
    ds: &Dataset,
    partition: &Partition,
    features: &[String],
    k: usize,
) -> Result<Vec<DiscriminativeFeature>> {
    if partition.subgroups.len() < 2 {
        return Err(Error::Config(
            "discriminative features need at least 2 subgroups".into(),
        ));
    }
    if k == 0 {
        return Err(Error::Config("k must be at least 1".into()));
    }
    let mut scored = features
        .par_iter()
        .map(|name| {
            let mut best: Option<DiscriminativeFeature> = None;
            for col in ds.numeric_features(name)? {
                let auc = aggregated_auc(&col.values, partition);
                if best.as_ref().is_none_or(|b| auc > b.auc) {
                    best = Some(DiscriminativeFeature {
                        feature: name.clone(),
                        auc,
                        axis: col.name,
                    });
                }
            }
            best.ok_or_else(|| Error::UnknownColumn(name.clone()))
        })
        .collect::<Result<Vec<_>>>()?;
    scored.sort_by(|a, b| {
        b.auc
            .total_cmp(&a.auc)
            .then_with(|| a.feature.cmp(&b.feature))
    });
    scored.truncate(k);
    Ok(scored)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadarGlyph {
    pub scope: Scope,
    pub axes: Vec<String>,
    /// Mean min-max normalised value per axis, in [0, 1].
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlyphSet {
    pub axes: Vec<String>,
    /// Population glyph first, then one per subgroup.
    pub rows: Vec<RadarGlyph>,
    /// Axes with no spread in the population; drawn at 0.
    pub degenerate_axes: Vec<String>,
}

/// Radar glyphs for the population and each subgroup. Normalisation bounds
/// come from the partition's population so glyphs are comparable.
pub fn radar_glyphs(ds: &Dataset, partition: &Partition, axes: &[String]) -> Result<GlyphSet> {
    if axes.is_empty() || axes.len() > MAX_AXES {
        return Err(Error::Config(format!(
            "glyphs take 1 to {MAX_AXES} axes, got {}",
            axes.len()
        )));
    }
    let mut normalised = Vec::with_capacity(axes.len());
    let mut degenerate_axes = Vec::new();
    for axis in axes {
        let cols = ds.numeric_features(axis)?;
        if cols.len() != 1 {
            return Err(Error::Config(format!(
                "axis `{axis}` is categorical; name one of its levels"
            )));
        }
        let values = &cols[0].values;
        let present: Vec<f64> = partition.scope.iter().filter_map(|i| values[i]).collect();
        let lo = present.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = present.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let span = hi - lo;
        if !span.is_finite() || span <= 0.0 {
            degenerate_axes.push(axis.clone());
        }
        normalised.push(
            values
                .iter()
                .map(|v| {
                    v.map(|v| {
                        if span > 0.0 {
                            ((v - lo) / span).clamp(0.0, 1.0)
                        } else {
                            0.0
                        }
                    })
                })
                .collect::<Vec<_>>(),
        );
    }
    let glyph = |mask: &RowMask, scope: Scope| RadarGlyph {
        scope,
        axes: axes.to_vec(),
        values: normalised
            .iter()
            .map(|norm| {
                let vals: Vec<f64> = mask.iter().filter_map(|i| norm[i]).collect();
                if vals.is_empty() {
                    0.0
                } else {
                    mean(&vals)
                }
            })
            .collect(),
    };
    let mut rows = vec![glyph(&partition.scope, Scope::Population)];
    rows.extend(
        partition
            .subgroups
            .iter()
            .map(|sg| glyph(&sg.mask, Scope::Subgroup(sg.id))),
    );
    Ok(GlyphSet {
        axes: axes.to_vec(),
        rows,
        degenerate_axes,
    })
}

/// `SubgroupViewer` JSON payload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubgroupViewer {
    pub mode: ViewMode,
    pub aggregate: SpaceModel,
    pub subgroups: Vec<SpaceModel>,
    pub glyphs: GlyphSet,
    pub discriminative: Vec<DiscriminativeFeature>,
    pub notices: Vec<String>,
}

/// Builds the viewer payload. Glyph axes default to the top-`k`
/// discriminative covariates.
pub fn subgroup_viewer(
    ds: &Dataset,
    cfg: &CausalConfig,
    partition: &Partition,
    k: usize,
    axes: Option<&[String]>,
) -> Result<SubgroupViewer> {
    let space = causality_space(ds, cfg, partition)?;
    let mut notices = space.notices;
    let discriminative = if partition.subgroups.len() >= 2 {
        discriminative_features(ds, partition, &cfg.covariates, k)?
    } else {
        notices.push("a single subgroup has no discriminative features".to_string());
        Vec::new()
    };
    let axes: Vec<String> = match axes {
        Some(a) => a.to_vec(),
        None => discriminative
            .iter()
            .take(MAX_AXES)
            .map(|d| d.axis.clone())
            .collect(),
    };
    let glyphs = if axes.is_empty() {
        GlyphSet {
            axes,
            rows: Vec::new(),
            degenerate_axes: Vec::new(),
        }
    } else {
        radar_glyphs(ds, partition, &axes)?
    };
    Ok(SubgroupViewer {
        mode: space.mode,
        aggregate: space.aggregate,
        subgroups: space.subgroups,
        glyphs,
        discriminative,
        notices,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{load_table, LoadOptions};
    use crate::partition::{manual_partition, PartitionRule};
    use crate::stats::{fit_ols, Predictor};

    fn ds(text: &str) -> Dataset {
        load_table(text.as_bytes(), LoadOptions::default()).unwrap()
    }

    #[test]
    fn ellipse_example_matches_ols() {
        let e = ellipse(
            &[0.0, 2.0, 0.0, 2.0],
            &[0.0, 0.0, 2.0, 2.0],
            Scope::Population,
        );
        assert_eq!(e.centroid, [1.0, 1.0]);
        let s = (4.0f64 / 3.0).sqrt();
        assert!((e.half_widths[0] - s).abs() < 1e-12 && (e.half_widths[1] - s).abs() < 1e-12);
        assert_eq!(e.slope, Some(0.0));

        let x = [0.3, 1.7, 2.2, 4.0, 5.5];
        let y = [1.0, 0.2, 3.3, 2.9, 6.1];
        let e = ellipse(&x, &y, Scope::Population);
        let f = fit_ols(&[Predictor::new("x", x.to_vec())], &y).unwrap();
        assert!((e.slope.unwrap() - f.slope()).abs() < 1e-9);
    }

    #[test]
    fn circle_line_sign() {
        let m = circle_line(
            &[1.0, 1.0, 0.0, 0.0],
            &[1.0, 1.0, 0.0, 0.0],
            Scope::Subgroup(1),
        );
        assert_eq!(m.slope_sign, Some(SlopeSign::Positive));
        assert_eq!((m.treated.size, m.untreated.size), (2, 2));
        let m = circle_line(&[1.0, 1.0, 1.0], &[1.0, 0.0, 0.0], Scope::Subgroup(1));
        assert_eq!(m.slope_sign, None);
    }

    #[test]
    fn aggregate_equals_identical_subgroups() {
        let d = ds("X,y,s\n1,2,0\n2,3,0\n3,7,0\n1,2,1\n2,3,1\n3,7,1\n");
        let cfg = CausalConfig::with_all_covariates(&d, "X", "y");
        let p = manual_partition(&d, &cfg, &[PartitionRule::binary("s")]).unwrap();
        let space = causality_space(&d, &cfg, &p).unwrap();
        assert_eq!(space.mode, ViewMode::Ellipse);
        let (SpaceModel::Ellipse(agg), SpaceModel::Ellipse(first)) =
            (&space.aggregate, &space.subgroups[0])
        else {
            panic!("expected ellipses");
        };
        assert!((agg.centroid[0] - first.centroid[0]).abs() < 1e-12);
        assert!((agg.slope.unwrap() - first.slope.unwrap()).abs() < 1e-12);
    }

    #[test]
    fn discriminative_examples() {
        let d = ds("x,y,f,c,s\n1,0,1,5,0\n0,1,2,5,0\n1,0,3,5,1\n0,1,4,5,1\n");
        let cfg = CausalConfig::with_all_covariates(&d, "x", "y");
        let p = manual_partition(&d, &cfg, &[PartitionRule::binary("s")]).unwrap();
        let feats = vec!["c".to_string(), "f".to_string()];
        let top = discriminative_features(&d, &p, &feats, 5).unwrap();
        assert_eq!(top[0].feature, "f");
        assert_eq!(top[0].auc, 1.0);
        assert_eq!(top[1].auc, 0.5);
        assert_eq!(discriminative_features(&d, &p, &feats, 1).unwrap().len(), 1);
    }

    #[test]
    fn glyph_examples() {
        let d = ds("x,y,f,s\n1,0,0,0\n0,1,5,0\n1,1,10,1\n");
        let cfg = CausalConfig::with_all_covariates(&d, "x", "y");
        let p = manual_partition(&d, &cfg, &[PartitionRule::binary("s")]).unwrap();
        let g = radar_glyphs(&d, &p, &["f".to_string()]).unwrap();
        assert_eq!(g.rows[0].values, vec![0.5]);
        assert_eq!(g.rows[0].scope, Scope::Population);
        assert_eq!(g.rows[1].values, vec![0.25]);
        assert_eq!(g.rows[2].values, vec![1.0]);

        let too_many: Vec<String> = (0..9).map(|_| "f".to_string()).collect();
        assert!(radar_glyphs(&d, &p, &too_many).is_err());
        assert_eq!(
            radar_glyphs(&d, &p, &["q".to_string()]).unwrap_err(),
            Error::UnknownColumn("q".into())
        );
    }
}
