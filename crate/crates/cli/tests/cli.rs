use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use regopt::datagen::load_dataset;
use regopt::trainer::load_checkpoint;
use regopt_cli::error::exit;
use regopt_cli::results::{self, ResultFile};

const SMALL: &str = r#"
experiment = "custom"
seed = 7

[custom]
n = 24
halfwidth = 4
noise = "white"
sigma = 0.05
train_size = 400
test_size = 200

[fit]
jitter_rel = 0.0

[train]
epochs = 2
batch_size = 16
initial_lr = 1e-3
"#;

fn regopt(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_regopt"));
    cmd.args(args).env("RUST_LOG", "warn").env_remove("REGOPT_THREADS");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("spawn regopt")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn ok(o: &Output) {
    assert!(o.status.success(), "exit {:?}\n{}", o.status.code(), stderr(o));
}

struct Run {
    _dir: tempfile::TempDir,
    config: PathBuf,
    out: PathBuf,
}

impl Run {
    fn new(config: &str) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("config.toml");
        fs::write(&path, config).unwrap();
        let out = dir.path().join("out");
        Self {
            config: path,
            out,
            _dir: dir,
        }
    }

    fn cmd(&self, sub: &str, extra: &[&str]) -> Output {
        let mut args = vec![sub, "--config", self.config.to_str().unwrap(), "--out", self.out.to_str().unwrap()];
        args.extend_from_slice(extra);
        regopt(&args, &[])
    }

    fn report(&self) -> Output {
        regopt(&["report", "--out", self.out.to_str().unwrap()], &[])
    }

    fn results(&self, name: &str) -> ResultFile {
        results::load(&self.out.join("results").join(name)).unwrap()
    }
}

fn test_risk(file: &ResultFile, method: &str) -> f64 {
    file.rows
        .iter()
        .find(|r| r.method == method)
        .and_then(|r| r.test)
        .unwrap_or_else(|| panic!("no test risk for {method}"))
        .sum_of_squares
}

#[test]
fn generate_is_byte_identical_per_seed() {
    let a = Run::new(SMALL);
    let b = Run::new(SMALL);
    ok(&a.cmd("generate", &[]));
    ok(&b.cmd("generate", &[]));
    for f in ["data/train.rgds", "data/test.rgds"] {
        assert_eq!(fs::read(a.out.join(f)).unwrap(), fs::read(b.out.join(f)).unwrap(), "{f}");
    }
    let c = Run::new(SMALL);
    ok(&c.cmd("generate", &["--seed", "8"]));
    assert_ne!(
        fs::read(a.out.join("data/train.rgds")).unwrap(),
        fs::read(c.out.join("data/train.rgds")).unwrap()
    );
    let d = load_dataset(&c.out.join("data/train.rgds")).unwrap();
    assert_eq!((d.signal_dim(), d.measurement_dim(), d.len(), d.meta.seed), (24, 31, 400, 8));
}

#[test]
fn invalid_config_reports_field_path() {
    let r = Run::new("[train]\nbatch_size = \"many\"\n");
    let o = r.cmd("generate", &[]);
    assert_eq!(o.status.code(), Some(exit::CONFIG));
    assert!(stderr(&o).contains("train.batch_size"), "{}", stderr(&o));

    let r = Run::new("[deconv]\nwidth = 3\n");
    let o = r.cmd("generate", &[]);
    assert_eq!(o.status.code(), Some(exit::CONFIG));
    assert!(stderr(&o).contains("width"), "{}", stderr(&o));

    let r = Run::new("optimal = [\"lmmse\", \"best\"]\n");
    let o = r.cmd("generate", &[]);
    assert_eq!(o.status.code(), Some(exit::CONFIG));
    assert!(stderr(&o).contains("optimal[1]"), "{}", stderr(&o));

    let o = regopt(&["generate", "--preset", "nope"], &[]);
    assert_eq!(o.status.code(), Some(exit::CONFIG));
    let o = regopt(&["generate"], &[]);
    assert_eq!(o.status.code(), Some(exit::CONFIG));
}

#[test]
fn bad_thread_count_is_a_config_error() {
    let r = Run::new(SMALL);
    let o = regopt(
        &["generate", "--config", r.config.to_str().unwrap(), "--out", r.out.to_str().unwrap()],
        &[("REGOPT_THREADS", "zero")],
    );
    assert_eq!(o.status.code(), Some(exit::CONFIG));
    assert!(stderr(&o).contains("REGOPT_THREADS"));
    let o = regopt(
        &["generate", "--config", r.config.to_str().unwrap(), "--out", r.out.to_str().unwrap()],
        &[("REGOPT_THREADS", "2")],
    );
    ok(&o);
}

#[test]
fn missing_datasets_are_listed() {
    let r = Run::new(SMALL);
    let o = r.cmd("fit-optimal", &[]);
    assert_eq!(o.status.code(), Some(exit::DATA));
    let e = stderr(&o);
    assert!(e.contains("train.rgds") && e.contains("test.rgds"), "{e}");
}

#[test]
fn seed_mismatch_is_a_data_error() {
    let r = Run::new(SMALL);
    ok(&r.cmd("generate", &[]));
    let o = r.cmd("fit-optimal", &["--seed", "99"]);
    assert_eq!(o.status.code(), Some(exit::DATA));
    assert!(stderr(&o).contains("seed"));
}

#[test]
fn white_noise_rows_coincide() {
    let r = Run::new(SMALL);
    ok(&r.cmd("generate", &[]));
    ok(&r.cmd("fit-optimal", &[]));
    let f = r.results("optimal.json");
    assert_eq!(f.rows.len(), 4);
    assert!(f.rows.iter().all(|row| row.is_ok()));
    let base = test_risk(&f, "lmmse");
    for m in ["lav", "quad", "tikh-weighted"] {
        let v = test_risk(&f, m);
        assert!(((v - base) / base).abs() < 1e-8, "{m}: {v} vs {base}");
    }
    for m in ["lmmse", "lav", "quad", "tikh-weighted"] {
        assert!(r.out.join(format!("maps/{m}.rgmp")).is_file());
    }
    assert_eq!(f.config_hash.len(), 64);
    assert!(f.config.contains("experiment = \"custom\""));
}

#[derive(Debug)]
struct TraceRow {
    stage: String,
    kind: String,
    loss: f64,
}

fn trace_rows(path: &Path) -> Vec<TraceRow> {
    let mut rdr = csv::Reader::from_path(path).unwrap();
    assert_eq!(
        rdr.headers().unwrap().iter().collect::<Vec<_>>(),
        ["stage", "kind", "step", "global_step", "loss", "smoothed", "lr"]
    );
    rdr.records()
        .map(|r| {
            let r = r.unwrap();
            TraceRow {
                stage: r[0].to_string(),
                kind: r[1].to_string(),
                loss: r[4].parse().unwrap(),
            }
        })
        .collect()
}

#[test]
fn train_writes_checkpoints_and_continuous_traces() {
    let r = Run::new(SMALL);
    ok(&r.cmd("generate", &[]));
    ok(&r.cmd("train", &[]));
    let f = r.results("learned.json");
    assert_eq!(
        f.rows.iter().map(|r| r.method.as_str()).collect::<Vec<_>>(),
        ["tikh", "quad", "lav", "aff"]
    );
    for v in ["aff", "lav", "quad", "tikh"] {
        let ck = load_checkpoint(&r.out.join(format!("checkpoints/{v}.rgck"))).unwrap();
        assert_eq!(ck.params.variant().name(), v);
        assert_eq!(ck.adam.t, 2 * 25);
    }
    let rows = trace_rows(&r.out.join("traces/trace.csv"));
    let full: Vec<&TraceRow> = rows.iter().filter(|r| r.kind == "full").collect();
    assert_eq!(full.len(), 8);
    // end of one stage and start of the next describe the same map
    for pair in [(1, 2), (3, 4)] {
        let (a, b) = (full[pair.0], full[pair.1]);
        assert_ne!(a.stage, b.stage);
        assert!((a.loss - b.loss).abs() <= 1e-10 * a.loss.abs(), "{a:?} vs {b:?}");
    }
    assert_eq!(rows.iter().filter(|r| r.kind == "batch").count(), 4 * 2 * 25);
}

#[test]
fn train_is_deterministic() {
    let a = Run::new(SMALL);
    let b = Run::new(SMALL);
    for r in [&a, &b] {
        ok(&r.cmd("generate", &[]));
        ok(&r.cmd("train", &[]));
    }
    let (fa, fb) = (a.results("learned.json"), b.results("learned.json"));
    for m in ["aff", "lav", "quad", "tikh"] {
        assert_eq!(test_risk(&fa, m).to_bits(), test_risk(&fb, m).to_bits(), "{m}");
    }
    assert_eq!(
        fs::read(a.out.join("checkpoints/aff.rgck")).unwrap(),
        fs::read(b.out.join("checkpoints/aff.rgck")).unwrap()
    );
}

#[test]
fn divergence_exits_numeric_and_keeps_traces() {
    let cfg = SMALL.replace("initial_lr = 1e-3", "initial_lr = 1e4\ndivergence_factor = 10.0");
    let r = Run::new(&cfg);
    ok(&r.cmd("generate", &[]));
    let o = r.cmd("train", &[]);
    assert_eq!(o.status.code(), Some(exit::NUMERIC), "{}", stderr(&o));
    assert!(r.out.join("traces/trace.csv").is_file());
    let f = r.results("learned.json");
    assert!(f.rows.iter().any(|row| !row.is_ok()));
    ok(&r.report());
}

#[test]
fn report_tables_and_plot_data() {
    let r = Run::new(SMALL);
    ok(&r.cmd("generate", &[]));
    ok(&r.cmd("fit-optimal", &[]));
    ok(&r.cmd("train", &[]));
    ok(&r.report());
    let text = fs::read_to_string(r.out.join("report/test.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "method,family,label,normalization,risk,risk (3 s.f.)");
    let rows: Vec<Vec<String>> = lines.map(|l| l.split(',').map(String::from).collect()).collect();
    assert_eq!(rows.len(), 8);
    let f = r.results("optimal.json");
    let lmmse = &rows[0];
    assert_eq!(lmmse[2], "Optimal Aff");
    assert_eq!(lmmse[3], "sum-of-squares");
    // shortest round-trip text parses back to the stored value exactly
    assert_eq!(lmmse[4].parse::<f64>().unwrap().to_bits(), test_risk(&f, "lmmse").to_bits());
    assert_eq!(lmmse[5], regopt_cli::report::sig3(test_risk(&f, "lmmse")));
    assert!(rows.iter().all(|r| r[3] == "sum-of-squares"));
    for p in ["plots/mean_signal_all.csv", "plots/loss_all_tikh.csv", "plots/loss_all_aff.csv", "plots/lr_all.csv"] {
        let t = fs::read_to_string(r.out.join("report").join(p)).unwrap();
        assert!(t.starts_with("x,y\n") && t.lines().count() > 2, "{p}");
    }
    let mean = fs::read_to_string(r.out.join("report/plots/mean_signal_all.csv")).unwrap();
    assert_eq!(mean.lines().count(), 25);
}

#[test]
fn empty_report_is_an_error() {
    let r = Run::new(SMALL);
    let o = r.report();
    assert_eq!(o.status.code(), Some(exit::DATA));
    assert!(stderr(&o).contains("empty report"));
    assert!(!r.out.join("report").exists());
}

#[test]
fn report_lists_missing_traces() {
    let r = Run::new(SMALL);
    ok(&r.cmd("generate", &[]));
    ok(&r.cmd("train", &[]));
    fs::remove_file(r.out.join("traces/trace.csv")).unwrap();
    let o = r.report();
    assert_eq!(o.status.code(), Some(exit::DATA));
    assert!(stderr(&o).contains("trace.csv"));
}

#[test]
fn dereverb_grid_has_a_column_per_noise_level() {
    let cfg = r#"
experiment = "dereverb"
optimal = ["lmmse", "lav"]
learned = ["aff"]
[dereverb]
etas = [0.1, 0.3]
train_size = 120
test_size = 40
[train]
epochs = 1
[fit]
known_noise = false
"#;
    let r = Run::new(cfg);
    ok(&r.cmd("generate", &[]));
    for eta in ["eta-0.1", "eta-0.3"] {
        let d = load_dataset(&r.out.join(format!("data/{eta}/train.rgds"))).unwrap();
        assert_eq!((d.signal_dim(), d.measurement_dim()), (500, 999));
    }
    ok(&r.cmd("fit-optimal", &[]));
    ok(&r.cmd("train", &[]));
    ok(&r.report());
    let text = fs::read_to_string(r.out.join("report/train.csv")).unwrap();
    let header = text.lines().next().unwrap();
    assert_eq!(
        header,
        "method,family,label,normalization,eta=0.1,eta=0.1 (3 s.f.),eta=0.3,eta=0.3 (3 s.f.)"
    );
    assert_eq!(text.lines().count(), 4);
    assert!(text.lines().skip(1).all(|l| l.contains("per-dimension")));
    let f = r.results("optimal.json");
    let lav = f.rows.iter().find(|r| r.method == "lav").unwrap();
    assert!(lav.diagnostics.asymmetry.unwrap() > 0.0);
    assert!(lav.diagnostics.gap_residual.unwrap() > 1e-3);
}
