use std::fmt::Write;

use spurious_core::diagnosis::Section;
use spurious_core::CliReport;

fn num(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.4}"))
}

fn json_name<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_value(v)
        .ok()
        .and_then(|j| j.as_str().map(str::to_string))
        .unwrap_or_default()
}

/// Human-readable digest of a report.
pub fn render(r: &CliReport) -> String {
    let mut s = String::new();
    let c = &r.config;
    let _ = writeln!(
        s,
        "cause `{}` -> outcome `{}`  (seed {}, engine {})",
        c.cause, c.outcome, r.seed, r.engine_version
    );

    let _ = writeln!(
        s,
        "\nconfounder ranking ({} model, {} rows)",
        json_name(&r.confounder_ranking.model_kind),
        r.confounder_ranking.rows_total
    );
    for e in &r.confounder_ranking.entries {
        let _ = writeln!(s, "  {:<24} {:>10}", e.covariate, num(e.cf_score));
    }

    if let Some(Section::Ok(imb)) = r.diagnoses.first().map(|d| &d.imbalance.population) {
        let _ = writeln!(
            s,
            "\npopulation imbalance: mean |score| {:.4}{}",
            imb.mean_abs_score,
            if imb.warning { "  WARNING" } else { "" }
        );
        if !imb.flagged.is_empty() {
            let _ = writeln!(s, "  flagged: {}", imb.flagged.join(", "));
        }
    }

    if let Some(p) = &r.partition {
        let _ = writeln!(s, "\nsubgroups ({} rows in scope)", p.scope_size);
        for n in &p.notices {
            let _ = writeln!(s, "  note: {n}");
        }
    }

    let _ = writeln!(
        s,
        "\n  {:<6} {:<32} {:>6} {:>10} {:>22}  {:<9} residual",
        "scope", "label", "n", "effect", "95% CI", "simpson"
    );
    for d in &r.diagnoses {
        let scope = d
            .scope
            .subgroup_id()
            .map_or_else(|| "all".to_string(), |id| id.to_string());
        let (n, effect, ci) = match &d.statistics {
            Section::Ok(e) => (
                e.n.to_string(),
                num(e.effect),
                e.ci.map_or_else(
                    || "n/a".to_string(),
                    |ci| format!("[{:.4}, {:.4}]", ci.low, ci.high),
                ),
            ),
            Section::Failed(f) => ("-".into(), f.error_code.clone(), String::new()),
        };
        let simpson = match &d.simpson_warning {
            Section::Ok(w) if w.flag => "REVERSED",
            Section::Ok(w) if w.suppressed.is_some() => "n/a",
            Section::Ok(_) => "-",
            Section::Failed(_) => "n/a",
        };
        let _ = writeln!(
            s,
            "  {:<6} {:<32} {:>6} {:>10} {:>22}  {:<9} {}",
            scope,
            d.label,
            n,
            effect,
            ci,
            simpson,
            d.residual_confounders.join(",")
        );
    }

    let sb = &r.storyboard;
    let _ = write!(
        s,
        "\nstoryboard ({} bins): population {}",
        sb.bin_edges.len() + 1,
        json_name(&sb.population_shape.label)
    );
    for f in &sb.subgroups {
        let _ = write!(s, ", subgroup {} {}", f.id, json_name(&f.shape));
    }
    s.push('\n');
    s
}
