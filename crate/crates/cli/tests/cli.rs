use std::path::Path;
use std::process::{Command, Output};

use condreg_cli::config::ExperimentConfig;
use condreg_cli::pipeline;

fn condreg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_condreg")).args(args).output().expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

const SMOKE: &str = r#"
experiment = "fd1"
n = 400
encoder_widths = [2, 10, 10]
decoder_widths = [11, 10, 1]
epochs = 5
mc_samples = 50
max_test_points = 20
replicates = 1
"#;

fn data_rows(csv: &str) -> usize {
    csv.lines().count() - 1
}

#[test]
fn smoke_run_writes_one_row_and_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "fd1.toml", SMOKE);
    let out = dir.path().join("out");
    let o = condreg(&["run", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let results = std::fs::read_to_string(out.join("results.csv")).unwrap();
    assert_eq!(data_rows(&results), 1);
    assert!(results.starts_with("replicate,method,seed,n_test,mse_mean,mse_sd,w1,hellinger,sigma_hat"));
    let trace = std::fs::read_to_string(out.join("trace_0.csv")).unwrap();
    assert_eq!(data_rows(&trace), 5);

    let o = condreg(&["inspect-ckpt", out.join("ckpt_0").to_str().unwrap()]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("latent_dim: 10"), "{text}");
    assert!(text.contains("decoder: widths 11-10-1"), "{text}");
}

#[test]
fn same_config_gives_identical_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "fd1.toml", SMOKE);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for d in [&a, &b] {
        assert!(condreg(&["run", &cfg, "--out", d.to_str().unwrap()]).status.success());
    }
    for f in ["results.csv", "trace_0.csv", "ckpt_0"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f} differs");
    }
}

#[test]
fn unknown_experiment_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "bad.toml", &SMOKE.replace("\"fd1\"", "\"fd9\""));
    let o = condreg(&["run", &cfg]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("experiment"));
}

#[test]
fn every_bad_field_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let text = SMOKE.replace("epochs = 5", "epochs = 0").replace("replicates = 1", "replicates = 0");
    let cfg = write(dir.path(), "bad.toml", &text);
    let o = condreg(&["run", &cfg]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("epochs") && err.contains("replicates"), "{err}");
}

const SWEEP: &str = r#"
experiment = "fd1"
n = 100
encoder_widths = [2, 10, 10]
decoder_widths = [11, 10, 1]
epochs = 2
mc_samples = 10
max_test_points = 5
replicates = 5
learning_rate = [1e-3, 2e-3, 5e-3]
"#;

#[test]
fn sweep_rows_are_cells_times_replicates_and_plot_is_stable() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "sweep.toml", SWEEP);
    let out = dir.path().join("sweep");
    let o = condreg(&["sweep", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(out.join("sweep.csv")).unwrap();
    assert_eq!(data_rows(&csv), 15);
    assert!(csv.starts_with("sweep_value,replicate,"));
    for k in 0..3 {
        assert!(out.join(format!("cell_{k}/results.csv")).exists());
    }

    let csv_path = out.join("sweep.csv");
    let svg_a = dir.path().join("a.svg");
    let svg_b = dir.path().join("b.svg");
    for svg in [&svg_a, &svg_b] {
        let o = condreg(&[
            "plot",
            csv_path.to_str().unwrap(),
            "--kind",
            "boxplot",
            "--value",
            "mse_mean",
            "--out",
            svg.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let a = std::fs::read(&svg_a).unwrap();
    assert_eq!(a, std::fs::read(&svg_b).unwrap());
    assert_eq!(String::from_utf8(a).unwrap().matches(r#"class="box""#).count(), 3);

    let o = condreg(&["plot", csv_path.to_str().unwrap(), "--out", svg_a.to_str().unwrap(), "--value", "nope"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("missing column 'nope'"));
}

#[test]
fn sweep_axis_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let empty = write(dir.path(), "e.toml", &SWEEP.replace("[1e-3, 2e-3, 5e-3]", "[]"));
    assert_eq!(condreg(&["sweep", &empty]).status.code(), Some(2));
    let two = write(dir.path(), "t.toml", &SWEEP.replace("epochs = 2", "epochs = [1, 2]"));
    let o = condreg(&["sweep", &two]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("exactly one key"));
}

#[test]
fn rates_subcommand() {
    let o = condreg(&["rates", "manifold", "--params", "beta_star=1,t_star=1,alpha=0.1"]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("regime=noise-dominated"), "{text}");
    let o = condreg(&["rates", "smooth", "--params", "beta_min=1", "--params", "d=1"]);
    assert_eq!(String::from_utf8(o.stdout).unwrap(), "exponent=0.4\n");
    assert_eq!(condreg(&["rates", "disparity", "--params", "d=1"]).status.code(), Some(2));
}

#[test]
fn corrupted_checkpoint_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(dir.path(), "ckpt", "NOT A CHECKPOINT\n");
    let o = condreg(&["inspect-ckpt", &p]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 1"));
}

#[test]
fn reloaded_checkpoint_samples_identically() {
    let cfg = ExperimentConfig::from_toml_str(SMOKE).unwrap();
    let outcome = pipeline::run_replicate(&cfg, 0, None).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ckpt");
    condreg::checkpoint::save(&outcome.model, &path).unwrap();
    let loaded = condreg::checkpoint::load(&path).unwrap();
    let a = outcome.model.sample_conditional(&[0.3], 20, 9, true).unwrap();
    let b = loaded.sample_conditional(&[0.3], 20, 9, true).unwrap();
    assert_eq!(a, b);
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(condreg::checkpoint::to_string(&loaded), text);
}
