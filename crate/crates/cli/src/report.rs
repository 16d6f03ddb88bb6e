//! Markdown summary assembled from whichever stage outputs exist.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::Result;
use serde_json::Value;

use phonosem_core::config::PipelineConfig;
use phonosem_core::{tsv, Error};

use crate::exit::UpstreamMissing;

fn read_json(path: &Path) -> Result<Option<Value>> {
    if !path.exists() {
        return Ok(None);
    }
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let value = serde_json::from_str(&text)
        .map_err(|e| Error::format(path.display().to_string(), e.line(), e.to_string()))?;
    Ok(Some(value))
}

fn num(v: &Value, digits: usize) -> String {
    match v.as_f64() {
        Some(x) => format!("{x:.digits$}"),
        None => "n/a".into(),
    }
}

fn text(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        Value::Null => "n/a".into(),
        other => other.to_string(),
    }
}

fn corpus_section(out: &mut String, m: &Value) {
    let contrasts = m["contrasts"].as_array().map_or(0, Vec::len);
    let warnings = m["warnings"].as_array().map_or(0, Vec::len);
    let _ = writeln!(out, "## Corpus\n");
    let _ =
        writeln!(
        out,
        "{} pairs over {} contrasts (seed {}, config {}). Contrasts with warnings: {warnings}.\n",
        m["total_pairs"], contrasts, m["seed"], text(&m["config_hash"])
    );
}

fn effects_section(out: &mut String, a: &Value) {
    let s = &a["summary"];
    let _ = writeln!(out, "## Effects\n");
    let raters: Vec<String> = a["raters"]
        .as_array()
        .into_iter()
        .flatten()
        .map(text)
        .collect();
    let _ = writeln!(
        out,
        "Raters: {}. Config {}.\n",
        raters.join(", "),
        text(&a["config_hash"])
    );
    let _ = writeln!(out, "| statistic | value |\n|---|---|");
    let _ = writeln!(out, "| consensus cells | {} |", s["n_cells"]);
    let _ = writeln!(out, "| mean abs d | {} |", num(&s["mean_abs_d"], 3));
    let _ = writeln!(out, "| share d >= 0.5 | {} |", num(&s["frac_medium"], 3));
    let _ = writeln!(out, "| share d >= 0.8 | {} |", num(&s["frac_large"], 3));
    let _ = writeln!(
        out,
        "| contrasts significant on >= 1 dimension | {} |",
        num(&s["frac_contrasts_significant"], 3)
    );
    let _ = writeln!(
        out,
        "| median significant dimensions | {} |",
        num(&s["median_significant_dims"], 1)
    );
    if let Some(ev) = a["pca_explained_variance_ratio"].as_array() {
        let parts: Vec<String> = ev.iter().map(|v| num(v, 3)).collect();
        let _ = writeln!(out, "| PCA explained variance | {} |", parts.join(", "));
    }
    let _ = writeln!(out);
    if let Some(rows) = a["dosage"].as_array() {
        let _ = writeln!(
            out,
            "| dimension | single | double | ratio | corrected ratio |\n|---|---|---|---|---|"
        );
        for r in rows {
            let _ = writeln!(
                out,
                "| {} | {} | {} | {} | {} |",
                text(&r["dimension"]),
                num(&r["single_mean_abs"], 2),
                num(&r["double_mean_abs"], 2),
                num(&r["raw_ratio"], 2),
                num(&r["corrected_ratio"], 2)
            );
        }
        let _ = writeln!(out);
    }
}

fn predict_section(out: &mut String, p: &Value) {
    let _ = writeln!(out, "## Articulatory prediction\n");
    let _ = writeln!(
        out,
        "| class | dimension | CV R² | alpha |\n|---|---|---|---|"
    );
    for r in p["cv"].as_array().into_iter().flatten() {
        let _ = writeln!(
            out,
            "| {} | {} | {} | {} |",
            text(&r["class"]),
            text(&r["dimension"]),
            num(&r["r2"], 3),
            num(&r["alpha"], 3)
        );
    }
    let _ = writeln!(
        out,
        "\nHypotheses consistent: {}\n",
        p["hypotheses_consistent"]
    );
    let _ = writeln!(
        out,
        "| hypothesis | class | r | verdict |\n|---|---|---|---|"
    );
    for h in p["hypotheses"].as_array().into_iter().flatten() {
        let _ = writeln!(
            out,
            "| {} | {} | {} | {} |",
            text(&h["name"]),
            text(&h["class"]),
            num(&h["r"], 3),
            text(&h["verdict"])
        );
    }
    let _ = writeln!(
        out,
        "\n| finding | dimension | observed | rho | consistent |\n|---|---|---|---|---|"
    );
    for f in p["classic"].as_array().into_iter().flatten() {
        let _ = writeln!(
            out,
            "| {} | {} | {} | {} | {} |",
            text(&f["name"]),
            text(&f["dimension"]),
            text(&f["observed"]),
            num(&f["rho"], 2),
            text(&f["consistent"])
        );
    }
    let _ = writeln!(out);
}

fn behavior_section(out: &mut String, b: &Value) {
    let s = &b["study"];
    let _ = writeln!(out, "## Behavior\n");
    let _ = writeln!(
        out,
        "{} participants retained, {} excluded. Overall accuracy {} over {} trials (log10 p two-sided {}).\n",
        s["n_participants"],
        s["excluded"].as_array().map_or(0, Vec::len),
        num(&s["overall"]["accuracy"], 3),
        s["overall"]["n"],
        num(&s["overall"]["log10_p_two_sided"], 1)
    );
    let _ = writeln!(out, "| dimension | accuracy | n |\n|---|---|---|");
    for row in s["per_dimension"].as_array().into_iter().flatten() {
        let _ = writeln!(
            out,
            "| {} | {} | {} |",
            text(&row[0]),
            num(&row[1]["accuracy"], 3),
            row[1]["n"]
        );
    }
    let _ = writeln!(out);
}

/// Renders the report and writes it to the configured path.
pub fn report(cfg: &PipelineConfig, output: Option<&Path>) -> Result<String> {
    let manifest = read_json(&cfg.paths.corpus_dir().join("manifest.json"))?;
    let analysis = read_json(&cfg.paths.effects_dir().join("analysis.json"))?;
    let prediction = read_json(&cfg.paths.predict_dir().join("prediction.json"))?;
    let behavior = read_json(&cfg.paths.behavior_dir().join("behavior.json"))?;
    if manifest.is_none() && analysis.is_none() && prediction.is_none() && behavior.is_none() {
        return Err(UpstreamMissing {
            what: "stage outputs",
            path: cfg.paths.out_dir.clone(),
            stage: "generate",
        }
        .into());
    }
    let mut out = String::from("# phonosem report\n\n");
    if let Some(m) = &manifest {
        corpus_section(&mut out, m);
    }
    if let Some(a) = &analysis {
        effects_section(&mut out, a);
    }
    if let Some(p) = &prediction {
        predict_section(&mut out, p);
    }
    if let Some(b) = &behavior {
        behavior_section(&mut out, b);
    }
    let path = output.map_or_else(|| cfg.paths.report(), Path::to_path_buf);
    tsv::write_file(&path, out.as_bytes())?;
    Ok(out)
}
