use std::io::Write;
use std::path::Path;
use std::time::Instant;

use regopt::estimators::{asymmetry_fraction, risk_empirical};
use regopt::experiment::{self, evaluate_map, save_map, OptimalFit};
use regopt::io_util::atomic_write;
use regopt::linalg::{self, sym_eig, SymmetricMatrix};
use regopt::trainer::{
    cosine_lr, handoff, initial_tikhonov, save_checkpoint, train, Checkpoint, LossTrace, TrainingProblem, Variant,
};
use regopt::{Dataset, Matrix, Params};

use crate::config::Config;
use crate::error::{CliError, CliResult};
use crate::pipeline::{self, Layout};
use crate::results::{self, Family, LevelInfo, ResultFile, ResultRow, RowDiagnostics, LEARNED_FILE, OPTIMAL_FILE};

/// Everything a command needs besides its own inputs.
#[derive(Clone, Debug)]
pub struct Context {
    pub config: Config,
    pub layout: Layout,
    pub deterministic: bool,
}

impl Context {
    fn result_file(&self, family: Family, offset_form: &str) -> ResultFile {
        ResultFile {
            family,
            experiment: self.config.experiment.name().to_string(),
            seed: self.config.seed,
            config_hash: self.config.hash(),
            config: self.config.to_toml(),
            deterministic: self.deterministic,
            offset_form: offset_form.to_string(),
            levels: Vec::new(),
            rows: Vec::new(),
        }
    }

    fn relative(&self, path: &Path) -> String {
        path.strip_prefix(&self.layout.root)
            .unwrap_or(path)
            .to_string_lossy()
            .replace('\\', "/")
    }
}

fn level_info(eta: Option<f64>, train: &Dataset, test: &Dataset) -> LevelInfo {
    let mean = train.x().column_mean();
    LevelInfo {
        eta,
        n: train.signal_dim(),
        m: train.measurement_dim(),
        train_samples: train.len(),
        test_samples: test.len(),
        mean_signal: mean.iter().copied().collect(),
    }
}

fn eta_label(eta: Option<f64>) -> String {
    eta.map(|e| format!(" (eta = {e})")).unwrap_or_default()
}

pub fn generate(ctx: &Context) -> CliResult<()> {
    let start = Instant::now();
    let sets = pipeline::generate(&ctx.config)?;
    for (eta, train, test) in &sets {
        pipeline::save(&ctx.layout, *eta, train, test)?;
        log::info!(
            "generated{}: n = {}, m = {}, train N = {}, test N = {}",
            eta_label(*eta),
            train.signal_dim(),
            train.measurement_dim(),
            train.len(),
            test.len()
        );
    }
    log::info!("generate finished in {:.1} s", start.elapsed().as_secs_f64());
    Ok(())
}

fn optimal_row(ctx: &Context, eta: Option<f64>, fit: &OptimalFit, train: &Dataset, test: &Dataset) -> CliResult<ResultRow> {
    let eval = evaluate_map(&fit.map, train, test)?;
    let path = ctx.layout.map(eta, fit.method.name());
    save_map(&path, fit.method.name(), &fit.map)?;
    let d = fit.diagnostics;
    Ok(ResultRow {
        method: fit.method.name().to_string(),
        eta,
        status: "ok".into(),
        error: None,
        train: Some(eval.train.into()),
        test: Some(eval.test.into()),
        seconds: fit.seconds,
        diagnostics: RowDiagnostics {
            asymmetry: d.asymmetry,
            min_eigenvalue: d.min_eigenvalue,
            gap_residual: d.gap_residual,
            lyapunov_residual: d.lyapunov_residual,
            ..RowDiagnostics::default()
        },
        artifact: Some(ctx.relative(&path)),
        trace: None,
    })
}

/// Closed-form maps for every level. Failed methods get a failure row and
/// turn the exit status into a numeric error once everything is written.
pub fn fit_optimal(ctx: &Context) -> CliResult<ResultFile> {
    let cfg = &ctx.config;
    let a = pipeline::operator(cfg)?;
    let sets = pipeline::load_all(cfg, &ctx.layout, &a)?;
    let opts = cfg.fit_options();
    let mut file = ctx.result_file(Family::Optimal, "x = (AᵀA + M)⁻¹(Aᵀy + M x₀)");
    for (eta, train, test) in &sets {
        file.levels.push(level_info(*eta, train, test));
        let known = pipeline::known_noise(cfg, *eta, a.nrows())?;
        let moments = match pipeline::moments(train, &a, known.as_ref(), ctx.deterministic) {
            Ok(p) => p,
            Err(e) => {
                let msg = format!("moment estimation failed: {}", e.message());
                for m in cfg.optimal_methods() {
                    file.rows.push(ResultRow::failed(m.name(), *eta, msg.clone()));
                }
                continue;
            }
        };
        for method in cfg.optimal_methods() {
            let row = experiment::fit_optimal(&moments, method, &opts)
                .map_err(CliError::from)
                .and_then(|fit| optimal_row(ctx, *eta, &fit, train, test));
            match row {
                Ok(row) => {
                    log::info!(
                        "{}{}: train {:.6e}, test {:.6e} (sum of squares)",
                        method.name(),
                        eta_label(*eta),
                        row.train.map_or(f64::NAN, |r| r.sum_of_squares),
                        row.test.map_or(f64::NAN, |r| r.sum_of_squares)
                    );
                    file.rows.push(row);
                }
                Err(CliError::Io(m)) => return Err(CliError::Io(m)),
                Err(e) => {
                    let msg = format!("{} (jitter_rel = {:e})", e.message(), opts.jitter_rel);
                    log::error!("{}{}: {msg}", method.name(), eta_label(*eta));
                    file.rows.push(ResultRow::failed(method.name(), *eta, msg));
                }
            }
        }
    }
    results::save(&ctx.layout.results().join(OPTIMAL_FILE), &file)?;
    fail_on_failed_rows(&file)?;
    Ok(file)
}

fn fail_on_failed_rows(file: &ResultFile) -> CliResult<()> {
    let failed: Vec<String> = file
        .rows
        .iter()
        .filter(|r| !r.is_ok())
        .map(|r| format!("{}{}", r.method, eta_label(r.eta)))
        .collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Numeric(format!(
            "{} method(s) failed: {}; see the failure rows in the result file",
            failed.len(),
            failed.join(", ")
        )))
    }
}

/// Trace CSV: one `full` row per stage boundary with the full-data loss, one
/// `batch` row per optimization step with the minibatch loss and its moving
/// average.
fn write_trace(path: &Path, traces: &[LossTrace], lr0: f64, total: usize) -> CliResult<()> {
    atomic_write(path, |f| {
        let mut w = csv::Writer::from_writer(std::io::BufWriter::new(f));
        let io = |e: csv::Error| regopt::Error::Io(e.into());
        w.write_record(["stage", "kind", "step", "global_step", "loss", "smoothed", "lr"])
            .map_err(io)?;
        let mut offset = 0usize;
        for t in traces {
            let stage = t.variant.name();
            let smoothed = t.smoothed();
            let full = |w: &mut csv::Writer<_>, step: usize, loss: f64| {
                w.write_record([
                    stage.to_string(),
                    "full".into(),
                    step.to_string(),
                    (offset + step).to_string(),
                    loss.to_string(),
                    String::new(),
                    String::new(),
                ])
            };
            full(&mut w, 0, t.initial_loss).map_err(io)?;
            for (k, (loss, s)) in t.steps.iter().zip(&smoothed).enumerate() {
                w.write_record([
                    stage.to_string(),
                    "batch".into(),
                    k.to_string(),
                    (offset + k).to_string(),
                    loss.to_string(),
                    s.to_string(),
                    cosine_lr(k, total, lr0).to_string(),
                ])
                .map_err(io)?;
            }
            if t.final_loss.is_finite() {
                full(&mut w, t.steps.len(), t.final_loss).map_err(io)?;
            }
            offset += t.steps.len();
        }
        w.flush()?;
        Ok(())
    })?;
    Ok(())
}

fn learned_diagnostics(params: &Params) -> RowDiagnostics {
    let mut d = RowDiagnostics::default();
    match params {
        Params::Lav { m, .. } => d.asymmetry = asymmetry_fraction(m).ok(),
        Params::Quad { l, .. } => {
            d.min_eigenvalue = SymmetricMatrix::new(linalg::symmetrize(l))
                .and_then(|s| sym_eig(&s))
                .map(|e| e.min())
                .ok()
        }
        _ => {}
    }
    d
}

struct StageOutcome {
    rows: Vec<ResultRow>,
    traces: Vec<LossTrace>,
    error: Option<CliError>,
}

/// Tikh, Quad, Lav, Aff with warm starts, checkpointing each stage.
fn train_level(ctx: &Context, eta: Option<f64>, a: &Matrix, train_set: &Dataset, test_set: &Dataset) -> CliResult<StageOutcome> {
    let cfg = &ctx.config;
    let tc = cfg.train_config();
    let wanted = cfg.learned_variants();
    let problem = TrainingProblem::new(train_set, a)?;
    let trace_rel = ctx.relative(&ctx.layout.trace(eta));
    let mut out = StageOutcome {
        rows: Vec::new(),
        traces: Vec::new(),
        error: None,
    };
    let stages = [Variant::Tikh, Variant::Quad, Variant::Lav, Variant::Aff];
    let mut current = initial_tikhonov(problem.gram());
    for (k, &stage) in stages.iter().enumerate() {
        let start = Instant::now();
        if k > 0 {
            current = match handoff(&current, problem.gram(), a) {
                Ok(p) => p,
                Err(e) => {
                    out.error = Some(CliError::from(e).context(format!("{stage} warm start{}", eta_label(eta))));
                    break;
                }
            };
        }
        match train(&problem, &tc, current.clone()) {
            Ok(run) => {
                let path = ctx.layout.checkpoint(eta, stage.name());
                save_checkpoint(&path, &Checkpoint::new(&run.params, &run.adam))?;
                let map = run.params.to_affine(a)?;
                let tr = risk_empirical(train_set, &map)?;
                let te = risk_empirical(test_set, &map)?;
                log::info!(
                    "{stage}{}: train {:.6e}, test {:.6e} (per dimension), {:.1} s",
                    eta_label(eta),
                    tr.per_dimension,
                    te.per_dimension,
                    start.elapsed().as_secs_f64()
                );
                let mut diagnostics = learned_diagnostics(&run.params);
                diagnostics.guarded_steps = Some(run.trace.guarded_steps.len());
                diagnostics.final_train_loss = Some(run.trace.final_loss);
                if wanted.contains(&stage) {
                    out.rows.push(ResultRow {
                        method: stage.name().to_string(),
                        eta,
                        status: "ok".into(),
                        error: None,
                        train: Some(tr.into()),
                        test: Some(te.into()),
                        seconds: start.elapsed().as_secs_f64(),
                        diagnostics,
                        artifact: Some(ctx.relative(&path)),
                        trace: Some(trace_rel.clone()),
                    });
                }
                out.traces.push(run.trace);
                current = run.params;
            }
            Err(failure) => {
                log::error!("{stage}{}: {}", eta_label(eta), failure.error);
                out.traces.push(failure.trace);
                out.error = Some(CliError::from(failure.error).context(format!("{stage}{}", eta_label(eta))));
                break;
            }
        }
    }
    if let Some(e) = &out.error {
        let done: Vec<String> = out.rows.iter().map(|r| r.method.clone()).collect();
        for v in &wanted {
            if !done.iter().any(|d| d == v.name()) {
                let mut row = ResultRow::failed(v.name(), eta, e.message().to_string());
                row.trace = Some(trace_rel.clone());
                out.rows.push(row);
            }
        }
    }
    write_trace(&ctx.layout.trace(eta), &out.traces, tc.initial_lr, tc.total_steps(train_set.len()))?;
    Ok(out)
}

/// Learned maps for every level. Traces are written even when a stage
/// diverges; the error is returned after the result file.
pub fn train_learned(ctx: &Context) -> CliResult<ResultFile> {
    let cfg = &ctx.config;
    let a = pipeline::operator(cfg)?;
    let sets = pipeline::load_all(cfg, &ctx.layout, &a)?;
    let mut file = ctx.result_file(Family::Learned, "x = (AᵀA + P)⁻¹(Aᵀy + c), additive c; x₀ = P⁻¹c");
    let mut first_error = None;
    for (eta, train_set, test_set) in &sets {
        file.levels.push(level_info(*eta, train_set, test_set));
        let outcome = train_level(ctx, *eta, &a, train_set, test_set)?;
        file.rows.extend(outcome.rows);
        if first_error.is_none() {
            first_error = outcome.error;
        }
    }
    results::save(&ctx.layout.results().join(LEARNED_FILE), &file)?;
    match first_error {
        Some(e) => Err(e),
        None => Ok(file),
    }
}

pub(crate) fn write_text(path: &Path, text: &str) -> CliResult<()> {
    atomic_write(path, |f| {
        f.write_all(text.as_bytes())?;
        Ok(())
    })?;
    Ok(())
}
