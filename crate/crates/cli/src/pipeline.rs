//! generate → perturb → split → train → evaluate → write, per replicate.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use condreg::checkpoint;
use condreg::genmodel::{train, CvaeModel, TraceRow};
use condreg::metrics::{
    bandwidth_grids, ckde_fit, ckde_mean_sd, hellinger_1d, integrated_hellinger, mc_mean_sd, median_cost,
    mse_report, sample_moments, sinkhorn_w1, CkdeModel, EvalReport, Grid, MomentEstimate, SinkhornConfig,
};
use condreg::par::{map_indexed, Execution};
use condreg::rng::{derive_seed, stream};
use condreg::synthdata::{self, Dataset};
use condreg::Mat;

use crate::config::ExperimentConfig;

/// Columns of `results.csv`: the report fields followed by training summaries.
pub const RESULT_EXTRA_COLUMNS: [&str; 3] = ["sigma_hat", "final_neg_elbo", "label_agreement"];

pub fn result_columns() -> Vec<&'static str> {
    EvalReport::CSV_COLUMNS.iter().copied().chain(RESULT_EXTRA_COLUMNS).collect()
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("replicate {replicate}: {source}")]
    Replicate {
        replicate: usize,
        #[source]
        source: condreg::Error,
    },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("loading data: {0}")]
    Data(condreg::Error),
}

/// Everything one replicate produced.
#[derive(Debug, Clone)]
pub struct ReplicateOutcome {
    pub report: EvalReport,
    pub baseline: Option<EvalReport>,
    pub sigma_hat: f64,
    pub final_neg_elbo: f64,
    pub label_agreement: Option<f64>,
    pub trace: Vec<TraceRow>,
    pub model: CvaeModel,
}

impl ReplicateOutcome {
    pub fn csv_fields(&self) -> Vec<String> {
        let mut f = self.report.csv_fields();
        f.push(format!("{:.10e}", self.sigma_hat));
        f.push(format!("{:.10e}", self.final_neg_elbo));
        f.push(self.label_agreement.map(|v| format!("{v:.6}")).unwrap_or_default());
        f
    }
}

pub fn replicate_seed(cfg: &ExperimentConfig, replicate: usize) -> u64 {
    cfg.base_seed.wrapping_add(replicate as u64)
}

/// Loads the MNIST subset named by the config.
pub fn load_mnist(cfg: &ExperimentConfig) -> Result<Dataset, RunError> {
    let dir = &cfg.mnist_dir;
    let ds = synthdata::load_mnist_idx(&dir.join("train-images-idx3-ubyte"), &dir.join("train-labels-idx1-ubyte"))
        .map_err(RunError::Data)?;
    Ok(match cfg.mnist_limit {
        Some(k) if k < ds.len() => ds.select(&(0..k).collect::<Vec<_>>()),
        _ => ds,
    })
}

fn generate(cfg: &ExperimentConfig, seed: u64, mnist: Option<&Dataset>) -> condreg::Result<Dataset> {
    let n = cfg.n;
    let ds = match cfg.experiment.as_str() {
        "fd1" => synthdata::gen_fd1(n, seed)?,
        "fd2" => synthdata::gen_fd2(n, seed)?,
        "fd3" => synthdata::gen_fd3(n, seed)?,
        "m1" => synthdata::gen_m1(n, cfg.sigma_star, seed)?,
        "m2" => synthdata::gen_m2(n, cfg.sigma_star, seed)?,
        _ => mnist.expect("mnist data loaded before replicates").clone(),
    };
    match cfg.perturb_spec() {
        Some(spec) => synthdata::perturb(&ds, &spec, seed),
        None => Ok(ds),
    }
}

/// Distinct covariate rows in order of first appearance, and each row's group.
fn distinct_rows(x: &Mat) -> (Vec<usize>, Vec<usize>) {
    let mut seen: HashMap<Vec<u64>, usize> = HashMap::new();
    let mut firsts = Vec::new();
    let groups = (0..x.rows())
        .map(|i| {
            let key: Vec<u64> = x.row(i).iter().map(|v| v.to_bits()).collect();
            *seen.entry(key).or_insert_with(|| {
                firsts.push(i);
                firsts.len() - 1
            })
        })
        .collect();
    (firsts, groups)
}

fn truth_moments(cfg: &ExperimentConfig, test: &Dataset, full: &Dataset) -> condreg::Result<Vec<MomentEstimate>> {
    if cfg.experiment == "mnist" {
        // per-class pixel means and SDs of the whole subset
        let (firsts, groups) = distinct_rows(&full.x);
        let stats: Vec<MomentEstimate> = (0..firsts.len())
            .map(|g| {
                let idx: Vec<usize> = (0..full.len()).filter(|&i| groups[i] == g).collect();
                sample_moments(&full.y.select_rows(&idx))
            })
            .collect();
        let lookup: HashMap<Vec<u64>, usize> = firsts
            .iter()
            .enumerate()
            .map(|(g, &i)| (full.x.row(i).iter().map(|v| v.to_bits()).collect(), g))
            .collect();
        return Ok((0..test.len())
            .map(|i| {
                let key: Vec<u64> = test.x.row(i).iter().map(|v| v.to_bits()).collect();
                stats[lookup[&key]].clone()
            })
            .collect());
    }
    (0..test.len())
        .map(|i| {
            let (mean, sd) = synthdata::true_mean_sd(&cfg.experiment, test.x.row(i), cfg.sigma_star)?;
            Ok(MomentEstimate { mean, sd })
        })
        .collect()
}

/// Monte-Carlo moments, computed once per distinct covariate.
fn model_moments(cfg: &ExperimentConfig, model: &CvaeModel, test: &Dataset, seed: u64) -> condreg::Result<Vec<MomentEstimate>> {
    let (firsts, groups) = distinct_rows(&test.x);
    let eval_seed = derive_seed(seed, stream::EVAL);
    let per_group = map_indexed(Execution::default(), firsts.len(), |g| {
        mc_mean_sd(model, test.x.row(firsts[g]), cfg.mc_samples, derive_seed(eval_seed, g as u64))
    })
    .into_iter()
    .collect::<condreg::Result<Vec<_>>>()?;
    Ok(groups.into_iter().map(|g| per_group[g].clone()).collect())
}

fn hellinger_grid(cfg: &ExperimentConfig, x: &[f64]) -> condreg::Result<Grid> {
    let (m, s) = synthdata::true_mean_sd(&cfg.experiment, x, cfg.sigma_star)?;
    let half = 8.0 * s[0] + 1.0;
    Grid::new(m[0] - half, m[0] + half, cfg.hellinger_grid_steps)
}

fn sieve_hellinger(cfg: &ExperimentConfig, model: &CvaeModel, test: &Dataset, seed: u64) -> condreg::Result<f64> {
    let k = cfg.hellinger_points.min(test.len());
    let hseed = derive_seed(seed, 3000);
    let d = map_indexed(Execution::default(), k, |i| {
        let x = test.x.row(i);
        let mix = model.conditional_mixture(x, cfg.mc_samples, derive_seed(hseed, i as u64))?;
        let grid = hellinger_grid(cfg, x)?;
        hellinger_1d(
            |y| mix.density(&[y]).unwrap_or(0.0),
            |y| synthdata::true_density_1d(&cfg.experiment, y, x).unwrap_or(0.0),
            &grid,
        )
    })
    .into_iter()
    .collect::<condreg::Result<Vec<_>>>()?;
    integrated_hellinger(&d)
}

fn ckde_hellinger(cfg: &ExperimentConfig, model: &CkdeModel, test: &Dataset) -> condreg::Result<f64> {
    let k = cfg.hellinger_points.min(test.len());
    let d = map_indexed(Execution::default(), k, |i| {
        let x = test.x.row(i);
        let grid = hellinger_grid(cfg, x)?;
        let p = model.density_on_grid(x, &grid)?;
        let mut it = p.into_iter();
        hellinger_1d(
            |_| it.next().unwrap_or(0.0),
            |y| synthdata::true_density_1d(&cfg.experiment, y, x).unwrap_or(0.0),
            &grid,
        )
    })
    .into_iter()
    .collect::<condreg::Result<Vec<_>>>()?;
    integrated_hellinger(&d)
}

/// Sinkhorn W1 between noise-free truth and the generator pushforward,
/// averaged over the two conditions.
fn manifold_w1(cfg: &ExperimentConfig, model: &CvaeModel, seed: u64) -> condreg::Result<f64> {
    let mut total = 0.0;
    for (k, c) in [0.0, 1.0].into_iter().enumerate() {
        let truth = synthdata::manifold_truth_samples(&cfg.experiment, c, cfg.w1_samples, derive_seed(seed, 4000 + k as u64))?;
        let fitted = model.sample_conditional(&[c], cfg.w1_samples, derive_seed(seed, 5000 + k as u64), false)?;
        let sk = SinkhornConfig {
            reg: cfg.sinkhorn_reg_scale * median_cost(&truth, &fitted)?,
            max_iter: cfg.sinkhorn_max_iter,
            tol: cfg.sinkhorn_tol,
            ground_norm: cfg.ground_norm,
            exec: Execution::default(),
        };
        total += sinkhorn_w1(&truth, &fitted, &sk)?.w1;
    }
    Ok(total / 2.0)
}

/// Fraction of classes whose generated mean image is nearest to its own
/// real class centroid.
pub fn label_agreement(model: &CvaeModel, data: &Dataset, m: usize, seed: u64) -> condreg::Result<f64> {
    let (firsts, groups) = distinct_rows(&data.x);
    let centroids: Vec<Vec<f64>> = (0..firsts.len())
        .map(|g| {
            let idx: Vec<usize> = (0..data.len()).filter(|&i| groups[i] == g).collect();
            sample_moments(&data.y.select_rows(&idx)).mean
        })
        .collect();
    let generated = map_indexed(Execution::default(), firsts.len(), |g| {
        let s = model.sample_conditional(data.x.row(firsts[g]), m, derive_seed(seed, g as u64), false)?;
        Ok(sample_moments(&s).mean)
    })
    .into_iter()
    .collect::<condreg::Result<Vec<_>>>()?;
    let dist = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum::<f64>();
    let hits = generated
        .iter()
        .enumerate()
        .filter(|(g, gen)| {
            let nearest = centroids
                .iter()
                .enumerate()
                .min_by(|a, b| dist(gen, a.1).total_cmp(&dist(gen, b.1)))
                .map(|(k, _)| k);
            nearest == Some(*g)
        })
        .count();
    Ok(hits as f64 / firsts.len() as f64)
}

/// Runs one replicate without touching the filesystem.
pub fn run_replicate(cfg: &ExperimentConfig, replicate: usize, mnist: Option<&Dataset>) -> Result<ReplicateOutcome, RunError> {
    let wrap = |source| RunError::Replicate { replicate, source };
    let seed = replicate_seed(cfg, replicate);
    let full = generate(cfg, seed, mnist).map_err(wrap)?;
    let (tr, te) = synthdata::split(&full, (cfg.split[0], cfg.split[1]), seed).map_err(wrap)?;
    let test = match cfg.max_test_points {
        Some(k) if k < te.len() => te.select(&(0..k).collect::<Vec<_>>()),
        _ => te,
    };
    let arch = cfg.arch().map_err(|e| wrap(condreg::Error::InvalidArgument(e.to_string())))?;
    let out = train(&tr, &arch, &cfg.train_config(seed), cfg.sigma_bounds()).map_err(wrap)?;
    let model = out.model;

    let truth = truth_moments(cfg, &test, &full).map_err(wrap)?;
    let est = model_moments(cfg, &model, &test, seed).map_err(wrap)?;
    let mut report = mse_report(&est, &truth, "sieve_mle", seed).map_err(wrap)?;
    report.replicate = replicate;
    if cfg.is_manifold() && cfg.w1 {
        report.w1 = Some(manifold_w1(cfg, &model, seed).map_err(wrap)?);
    }
    if cfg.hellinger {
        report.hellinger = Some(sieve_hellinger(cfg, &model, &test, seed).map_err(wrap)?);
    }
    let label_agreement = if cfg.experiment == "mnist" {
        Some(label_agreement(&model, &full, cfg.mc_samples, derive_seed(seed, 6000)).map_err(wrap)?)
    } else {
        None
    };

    let baseline = if cfg.ckde {
        let (gx, gy) = bandwidth_grids(&tr, cfg.ckde_grid_size);
        let kde = ckde_fit(&tr, &gx, &gy).map_err(wrap)?;
        let grid = kde.default_grid();
        let est = map_indexed(Execution::default(), test.len(), |i| {
            let q = ckde_mean_sd(&kde, test.x.row(i), &grid)?;
            Ok(MomentEstimate {
                mean: vec![q.mean],
                sd: vec![q.sd],
            })
        })
        .into_iter()
        .collect::<condreg::Result<Vec<_>>>()
        .map_err(wrap)?;
        let mut r = mse_report(&est, &truth, "ckde", seed).map_err(wrap)?;
        r.replicate = replicate;
        if cfg.hellinger {
            r.hellinger = Some(ckde_hellinger(cfg, &kde, &test).map_err(wrap)?);
        }
        Some(r)
    } else {
        None
    };

    let last = out.trace.last().copied().expect("epochs >= 1");
    Ok(ReplicateOutcome {
        report,
        baseline,
        sigma_hat: model.sigma(),
        final_neg_elbo: last.mean_neg_elbo,
        label_agreement,
        trace: out.trace,
        model,
    })
}

/// Runs every replicate (concurrently when the `parallel` feature is on),
/// returning outcomes in replicate order.
pub fn run_replicates(cfg: &ExperimentConfig) -> Result<Vec<ReplicateOutcome>, RunError> {
    let mnist = if cfg.experiment == "mnist" { Some(load_mnist(cfg)?) } else { None };
    map_indexed(Execution::default(), cfg.replicates, |r| run_replicate(cfg, r, mnist.as_ref()))
        .into_iter()
        .collect()
}

pub fn results_csv(outcomes: &[ReplicateOutcome]) -> String {
    let mut s = result_columns().join(",");
    s.push('\n');
    for o in outcomes {
        s.push_str(&o.csv_fields().join(","));
        s.push('\n');
    }
    s
}

pub fn baseline_csv(outcomes: &[ReplicateOutcome]) -> Option<String> {
    let rows: Vec<&EvalReport> = outcomes.iter().filter_map(|o| o.baseline.as_ref()).collect();
    if rows.is_empty() {
        return None;
    }
    let mut s = EvalReport::csv_header();
    s.push('\n');
    for r in rows {
        s.push_str(&r.csv_row());
        s.push('\n');
    }
    Some(s)
}

pub fn trace_csv(trace: &[TraceRow]) -> String {
    let mut s = String::from("epoch,mean_neg_elbo,sigma\n");
    for t in trace {
        let _ = writeln!(s, "{},{:.16e},{:.16e}", t.epoch, t.mean_neg_elbo, t.sigma);
    }
    s
}

fn write(path: &Path, contents: &str) -> Result<(), RunError> {
    std::fs::write(path, contents).map_err(|source| RunError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes `results.csv`, `baseline.csv` (when present), `trace_r.csv` and `ckpt_r`.
pub fn write_artifacts(dir: &Path, outcomes: &[ReplicateOutcome]) -> Result<(), RunError> {
    std::fs::create_dir_all(dir).map_err(|source| RunError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    write(&dir.join("results.csv"), &results_csv(outcomes))?;
    if let Some(b) = baseline_csv(outcomes) {
        write(&dir.join("baseline.csv"), &b)?;
    }
    for (r, o) in outcomes.iter().enumerate() {
        write(&dir.join(format!("trace_{r}.csv")), &trace_csv(&o.trace))?;
        write(&dir.join(format!("ckpt_{r}")), &checkpoint::to_string(&o.model))?;
    }
    Ok(())
}

/// Full `run`: all replicates, then artifacts under `dir`.
pub fn run(cfg: &ExperimentConfig, dir: &Path) -> Result<Vec<ReplicateOutcome>, RunError> {
    let outcomes = run_replicates(cfg)?;
    write_artifacts(dir, &outcomes)?;
    Ok(outcomes)
}
