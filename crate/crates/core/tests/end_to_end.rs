use condreg::genmodel::{train, CvaeArch, SigmaBounds, TrainConfig};
use condreg::metrics::{
    bandwidth_grids, ckde_fit_with, ckde_mean_sd, mc_mean_sd, mse_report, sinkhorn_w1, MomentEstimate, SinkhornConfig,
};
use condreg::networks::LayerWidths;
use condreg::par::Execution;
use condreg::synthdata::{gen_fd1, gen_m1, manifold_truth_samples, split, true_mean_sd};
use condreg::checkpoint;

fn w(v: &[usize]) -> LayerWidths {
    LayerWidths::new(v.to_vec()).unwrap()
}

fn fd_arch() -> CvaeArch {
    CvaeArch {
        encoder: w(&[2, 10, 10]),
        decoder: w(&[11, 10, 1]),
        sparsity: None,
        output_bound: 1000.0,
    }
}

#[test]
fn fd1_training_lowers_loss_and_moment_error() {
    let ds = gen_fd1(1000, 4).unwrap();
    let (tr, te) = split(&ds, (4, 1), 4).unwrap();
    let cfg = TrainConfig {
        epochs: 60,
        seed: 4,
        ..Default::default()
    };
    let out = train(&tr, &fd_arch(), &cfg, SigmaBounds::new(0.01, 2.0).unwrap()).unwrap();
    let first = out.trace.first().unwrap().mean_neg_elbo;
    let last = out.trace.last().unwrap().mean_neg_elbo;
    assert!(last < first, "{first} -> {last}");

    let xs: Vec<f64> = (0..50).map(|i| te.x.get(i, 0)).collect();
    let truth: Vec<MomentEstimate> = xs
        .iter()
        .map(|x| {
            let (mean, sd) = true_mean_sd("fd1", &[*x], 0.0).unwrap();
            MomentEstimate { mean, sd }
        })
        .collect();
    let est: Vec<MomentEstimate> = xs.iter().map(|x| mc_mean_sd(&out.model, &[*x], 500, 1).unwrap()).collect();
    let r = mse_report(&est, &truth, "sieve_mle", 4).unwrap();
    assert!(r.mse_mean.is_finite() && r.mse_sd.is_finite());
    assert!(r.mse_mean < 1.0, "{}", r.mse_mean);
}

#[test]
fn trained_checkpoint_round_trips() {
    let ds = gen_fd1(200, 1).unwrap();
    let cfg = TrainConfig {
        epochs: 3,
        seed: 1,
        ..Default::default()
    };
    let model = train(&ds, &fd_arch(), &cfg, SigmaBounds::new(0.01, 2.0).unwrap()).unwrap().model;
    let text = checkpoint::to_string(&model);
    let back = checkpoint::from_str(&text).unwrap();
    assert_eq!(checkpoint::to_string(&back), text);
    assert_eq!(
        model.sample_conditional(&[0.2], 30, 5, true).unwrap(),
        back.sample_conditional(&[0.2], 30, 5, true).unwrap()
    );
}

#[test]
fn execution_modes_agree() {
    let ds = gen_fd1(150, 2).unwrap();
    let (gx, gy) = bandwidth_grids(&ds, 4);
    let s = ckde_fit_with(&ds, &gx, &gy, Execution::Sequential).unwrap();
    let p = ckde_fit_with(&ds, &gx, &gy, Execution::Parallel).unwrap();
    assert_eq!((s.hx.clone(), s.hy, s.cv_loglik), (p.hx.clone(), p.hy, p.cv_loglik));
    let grid = s.default_grid();
    let q = ckde_mean_sd(&s, &[0.5], &grid).unwrap();
    assert!(q.sd > 0.0 && q.mean.is_finite());

    let a = manifold_truth_samples("m1", 0.0, 60, 1).unwrap();
    let b = manifold_truth_samples("m1", 1.0, 60, 2).unwrap();
    let run = |exec| sinkhorn_w1(&a, &b, &SinkhornConfig { reg: 0.05, exec, ..Default::default() }).unwrap();
    assert_eq!(run(Execution::Sequential), run(Execution::Parallel));
}

#[test]
fn manifold_truth_is_closer_to_itself_than_to_other_class() {
    let a = manifold_truth_samples("m1", 0.0, 200, 1).unwrap();
    let a2 = manifold_truth_samples("m1", 0.0, 200, 2).unwrap();
    let b = manifold_truth_samples("m1", 1.0, 200, 3).unwrap();
    let cfg = SinkhornConfig {
        reg: 0.01,
        tol: 1e-4,
        ..Default::default()
    };
    let same = sinkhorn_w1(&a, &a2, &cfg).unwrap().w1;
    let other = sinkhorn_w1(&a, &b, &cfg).unwrap().w1;
    assert!(same < other, "{same} vs {other}");
    let ds = gen_m1(100, 0.1, 0).unwrap();
    assert_eq!(ds.y.shape(), (100, 2));
}
