//! CSV tables and plot data from result files.
//!
//! Each table uses one normalization: sums of squares for the
//! deconvolution and custom experiments, per-dimension means for
//! dereverberation. Values are written twice, as the shortest decimal that
//! round-trips to the same `f64` and with three significant digits.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use regopt::estimators::Normalization;

use crate::commands::write_text;
use crate::error::{CliError, CliResult};
use crate::pipeline::{level_name, Layout};
use crate::results::{self, Family, ResultFile, ResultRow, Risk, LEARNED_FILE, OPTIMAL_FILE};

/// `7.05e-05`: three significant digits, two-digit signed exponent.
pub fn sig3(v: f64) -> String {
    if !v.is_finite() {
        return v.to_string();
    }
    let s = format!("{v:.2e}");
    let (mant, exp) = s.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    let sign = if exp < 0 { '-' } else { '+' };
    format!("{mant}e{sign}{:02}", exp.abs())
}

fn csv_line(fields: &[String]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(fields).expect("in-memory csv");
    String::from_utf8(w.into_inner().expect("in-memory csv")).expect("utf-8 csv")
}

fn label(family: Family, method: &str) -> String {
    let name = match method {
        "lmmse" | "aff" => "Aff",
        "lav" => "Lav",
        "quad" => "Quad",
        "tikh" => "Tikh",
        "tikh-weighted" => "Tikh (weighted)",
        other => other,
    };
    match family {
        Family::Optimal => format!("Optimal {name}"),
        Family::Learned => format!("Learned {name}"),
    }
}

fn table_normalization(experiment: &str) -> Normalization {
    match experiment {
        "dereverb" => Normalization::PerDimension,
        _ => Normalization::SumOfSquares,
    }
}

fn value(r: &Risk, norm: Normalization) -> f64 {
    match norm {
        Normalization::SumOfSquares => r.sum_of_squares,
        Normalization::PerDimension => r.per_dimension,
    }
}

#[derive(Clone, Copy)]
enum SplitCol {
    Train,
    Test,
}

/// Methods as rows, noise levels as columns.
fn risk_table(files: &[ResultFile], levels: &[Option<f64>], split: SplitCol, norm: Normalization) -> String {
    let mut header = vec!["method".to_string(), "family".into(), "label".into(), "normalization".into()];
    for &eta in levels {
        let col = eta.map_or("risk".to_string(), |e| format!("eta={e}"));
        header.push(col.clone());
        header.push(format!("{col} (3 s.f.)"));
    }
    let mut out = csv_line(&header);
    for f in files {
        let mut methods: Vec<&str> = Vec::new();
        for r in &f.rows {
            if !methods.contains(&r.method.as_str()) {
                methods.push(&r.method);
            }
        }
        for method in methods {
            let mut line = vec![
                method.to_string(),
                f.family.name().to_string(),
                label(f.family, method),
                norm.label().to_string(),
            ];
            for &eta in levels {
                let row = f.rows.iter().find(|r| r.method == method && r.eta == eta);
                let risk = row.and_then(|r| match split {
                    SplitCol::Train => r.train,
                    SplitCol::Test => r.test,
                });
                match (row, risk) {
                    (_, Some(risk)) => {
                        let v = value(&risk, norm);
                        line.push(v.to_string());
                        line.push(sig3(v));
                    }
                    (Some(_), None) => {
                        line.push(String::new());
                        line.push("failed".into());
                    }
                    (None, None) => {
                        line.push(String::new());
                        line.push(String::new());
                    }
                }
            }
            out.push_str(&csv_line(&line));
        }
    }
    out
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn diagnostics_table(files: &[ResultFile]) -> String {
    let header = [
        "method",
        "family",
        "eta",
        "status",
        "asymmetry",
        "min_eigenvalue",
        "gap_residual",
        "lyapunov_residual",
        "guarded_steps",
        "seconds",
        "error",
    ];
    let mut out = csv_line(&header.map(String::from));
    for f in files {
        for r in &f.rows {
            let d = &r.diagnostics;
            out.push_str(&csv_line(&[
                r.method.clone(),
                f.family.name().to_string(),
                opt(r.eta),
                r.status.clone(),
                opt(d.asymmetry),
                opt(d.min_eigenvalue),
                opt(d.gap_residual),
                opt(d.lyapunov_residual),
                d.guarded_steps.map(|g| g.to_string()).unwrap_or_default(),
                r.seconds.to_string(),
                r.error.clone().unwrap_or_default(),
            ]));
        }
    }
    out
}

fn provenance_table(files: &[ResultFile]) -> String {
    let mut out = csv_line(&["family", "experiment", "seed", "config_hash", "deterministic", "offset_form"].map(String::from));
    for f in files {
        out.push_str(&csv_line(&[
            f.family.name().to_string(),
            f.experiment.clone(),
            f.seed.to_string(),
            f.config_hash.clone(),
            f.deterministic.to_string(),
            f.offset_form.clone(),
        ]));
    }
    out
}

fn xy(points: impl IntoIterator<Item = (f64, f64)>) -> String {
    let mut out = String::from("x,y\n");
    for (x, y) in points {
        out.push_str(&format!("{x},{y}\n"));
    }
    out
}

struct TracePoint {
    stage: String,
    global_step: f64,
    smoothed: f64,
    lr: f64,
}

fn read_trace(path: &Path) -> CliResult<Vec<TracePoint>> {
    let bad = |what: String| CliError::Data(format!("{}: {what}", path.display()));
    let mut rdr = csv::Reader::from_path(path).map_err(|e| bad(e.to_string()))?;
    let headers = rdr.headers().map_err(|e| bad(e.to_string()))?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| bad(format!("missing column `{name}`")))
    };
    let (c_stage, c_kind, c_global, c_smooth, c_lr) =
        (col("stage")?, col("kind")?, col("global_step")?, col("smoothed")?, col("lr")?);
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        if &rec[c_kind] != "batch" {
            continue;
        }
        let num = |c: usize| {
            rec[c]
                .parse::<f64>()
                .map_err(|_| bad(format!("line {}: `{}` is not a number", i + 2, &rec[c])))
        };
        out.push(TracePoint {
            stage: rec[c_stage].to_string(),
            global_step: num(c_global)?,
            smoothed: num(c_smooth)?,
            lr: num(c_lr)?,
        });
    }
    Ok(out)
}

/// Writes the report; returns the files written.
pub fn report(layout: &Layout) -> CliResult<Vec<PathBuf>> {
    let dir = layout.results();
    let candidates = [dir.join(OPTIMAL_FILE), dir.join(LEARNED_FILE)];
    let present: Vec<&PathBuf> = candidates.iter().filter(|p| p.is_file()).collect();
    if present.is_empty() {
        return Err(CliError::Data(format!(
            "empty report: no result files in {} (expected {OPTIMAL_FILE} and/or {LEARNED_FILE}; run fit-optimal or train first)",
            dir.display()
        )));
    }
    let mut files = Vec::with_capacity(present.len());
    for p in &present {
        files.push(results::load(p)?);
    }
    let experiment = files[0].experiment.clone();
    if let Some(f) = files.iter().find(|f| f.experiment != experiment) {
        return Err(CliError::Data(format!(
            "result files mix experiments `{experiment}` and `{}`",
            f.experiment
        )));
    }
    if files.iter().any(|f| f.config_hash != files[0].config_hash) {
        log::warn!("result files come from different configurations; see provenance.csv");
    }
    if files.iter().all(|f| f.rows.is_empty()) {
        return Err(CliError::Data(format!("empty report: the result files in {} have no rows", dir.display())));
    }

    let traces: BTreeSet<String> = files
        .iter()
        .flat_map(|f| f.rows.iter().filter_map(|r| r.trace.clone()))
        .collect();
    let missing: Vec<String> = traces
        .iter()
        .map(|t| layout.root.join(t))
        .filter(|p| !p.is_file())
        .map(|p| p.display().to_string())
        .collect();
    if !missing.is_empty() {
        return Err(CliError::Data(format!("missing report inputs: {}", missing.join(", "))));
    }

    let mut levels: Vec<Option<f64>> = Vec::new();
    for f in &files {
        for r in &f.rows {
            if !levels.contains(&r.eta) {
                levels.push(r.eta);
            }
        }
    }
    levels.sort_by(|a, b| a.partial_cmp(b).expect("finite noise levels"));
    let norm = table_normalization(&experiment);
    let out = layout.report();
    let mut written = Vec::new();
    let mut emit = |name: String, text: String| -> CliResult<()> {
        let path = out.join(name);
        write_text(&path, &text)?;
        written.push(path);
        Ok(())
    };
    emit("train.csv".into(), risk_table(&files, &levels, SplitCol::Train, norm))?;
    emit("test.csv".into(), risk_table(&files, &levels, SplitCol::Test, norm))?;
    emit("diagnostics.csv".into(), diagnostics_table(&files))?;
    emit("provenance.csv".into(), provenance_table(&files))?;

    let mut seen = BTreeSet::new();
    for f in &files {
        for level in &f.levels {
            let name = level_name(level.eta);
            if seen.insert(name.clone()) {
                let n = level.mean_signal.len() as f64;
                let pts = level
                    .mean_signal
                    .iter()
                    .enumerate()
                    .map(|(j, &v)| ((j as f64 + 0.5) / n, v));
                emit(format!("plots/mean_signal_{name}.csv"), xy(pts))?;
            }
        }
    }
    for t in &traces {
        let row: &ResultRow = files
            .iter()
            .flat_map(|f| f.rows.iter())
            .find(|r| r.trace.as_deref() == Some(t.as_str()))
            .expect("trace comes from a row");
        let name = level_name(row.eta);
        let points = read_trace(&layout.root.join(t))?;
        let mut stages: Vec<&str> = Vec::new();
        for p in &points {
            if !stages.contains(&p.stage.as_str()) {
                stages.push(&p.stage);
            }
        }
        for stage in stages {
            let pts = points.iter().filter(|p| p.stage == stage).map(|p| (p.global_step, p.smoothed));
            emit(format!("plots/loss_{name}_{stage}.csv"), xy(pts))?;
        }
        emit(
            format!("plots/lr_{name}.csv"),
            xy(points.iter().map(|p| (p.global_step, p.lr))),
        )?;
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::sig3;

    #[test]
    fn three_significant_digits() {
        assert_eq!(sig3(7.05e-5), "7.05e-05");
        assert_eq!(sig3(23.12), "2.31e+01");
        assert_eq!(sig3(0.0), "0.00e+00");
        assert_eq!(sig3(9.996e-4), "1.00e-03");
        assert_eq!(sig3(-1.5e12), "-1.50e+12");
    }
}
