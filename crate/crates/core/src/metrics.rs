//! Evaluation metrics: entropic W1, exact small-instance W1, 1-D Hellinger
//! quadrature, Monte-Carlo conditional moments and the kernel baseline.

use std::cmp::Ordering;

use crate::autodiff::logsumexp;
use crate::error::{invalid, Error, Result};
use crate::genmodel::CvaeModel;
use crate::mat::Mat;
use crate::par::{map_indexed, Execution};
use crate::synthdata::Dataset;

/// One evaluated replicate.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub replicate: usize,
    pub method: String,
    pub seed: u64,
    pub n_test: usize,
    pub mse_mean: f64,
    pub mse_sd: f64,
    pub w1: Option<f64>,
    pub hellinger: Option<f64>,
}

impl EvalReport {
    pub const CSV_COLUMNS: [&'static str; 8] =
        ["replicate", "method", "seed", "n_test", "mse_mean", "mse_sd", "w1", "hellinger"];

    pub fn csv_header() -> String {
        Self::CSV_COLUMNS.join(",")
    }

    /// Fields in [`Self::CSV_COLUMNS`] order; absent values are empty.
    pub fn csv_fields(&self) -> Vec<String> {
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.10e}")).unwrap_or_default();
        vec![
            self.replicate.to_string(),
            self.method.clone(),
            self.seed.to_string(),
            self.n_test.to_string(),
            format!("{:.10e}", self.mse_mean),
            format!("{:.10e}", self.mse_sd),
            opt(self.w1),
            opt(self.hellinger),
        ]
    }

    pub fn csv_row(&self) -> String {
        self.csv_fields().join(",")
    }

    pub fn validate(&self) -> Result<()> {
        let vals = [Some(self.mse_mean), Some(self.mse_sd), self.w1, self.hellinger];
        if vals.iter().flatten().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return invalid(format!("report values must be finite and >= 0: {self:?}"));
        }
        Ok(())
    }
}

/// Per-test-point estimates of the conditional mean and SD.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentEstimate {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
}

/// MSE of estimated against true conditional means and SDs, averaged over
/// test points and response coordinates.
pub fn mse_report(
    estimates: &[MomentEstimate],
    truths: &[MomentEstimate],
    method: &str,
    seed: u64,
) -> Result<EvalReport> {
    if estimates.len() != truths.len() || estimates.is_empty() {
        return invalid(format!(
            "need equally many estimates and truths, got {} and {}",
            estimates.len(),
            truths.len()
        ));
    }
    let mut se_mean = 0.0;
    let mut se_sd = 0.0;
    let mut count = 0usize;
    for (e, t) in estimates.iter().zip(truths) {
        if e.mean.len() != t.mean.len() || e.sd.len() != t.sd.len() || e.mean.len() != e.sd.len() {
            return invalid("estimate and truth dimensions differ");
        }
        se_mean += e.mean.iter().zip(&t.mean).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        se_sd += e.sd.iter().zip(&t.sd).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        count += e.mean.len();
    }
    let report = EvalReport {
        replicate: 0,
        method: method.to_string(),
        seed,
        n_test: estimates.len(),
        mse_mean: se_mean / count as f64,
        mse_sd: se_sd / count as f64,
        w1: None,
        hellinger: None,
    };
    report.validate()?;
    Ok(report)
}

/// Sample mean and per-coordinate SD (denominator `m − 1`) of `m` model draws.
pub fn mc_mean_sd(model: &CvaeModel, x: &[f64], m: usize, seed: u64) -> Result<MomentEstimate> {
    if m < 2 {
        return invalid("need m >= 2 draws for a standard deviation");
    }
    let draws = model.sample_conditional(x, m, seed, true)?;
    Ok(sample_moments(&draws))
}

/// Column means and SDs (denominator `rows − 1`, or 1 for a single row).
pub fn sample_moments(draws: &Mat) -> MomentEstimate {
    let (m, d) = draws.shape();
    let mut mean = vec![0.0; d];
    for i in 0..m {
        for (acc, v) in mean.iter_mut().zip(draws.row(i)) {
            *acc += v;
        }
    }
    mean.iter_mut().for_each(|v| *v /= m as f64);
    let mut var = vec![0.0; d];
    for i in 0..m {
        for ((acc, v), mu) in var.iter_mut().zip(draws.row(i)).zip(&mean) {
            *acc += (v - mu) * (v - mu);
        }
    }
    let denom = (m as f64 - 1.0).max(1.0);
    let sd = var.into_iter().map(|v| (v / denom).sqrt()).collect();
    MomentEstimate { mean, sd }
}

/// Settings for [`sinkhorn_w1`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SinkhornConfig {
    /// Entropic regularisation `ε`, in cost units.
    pub reg: f64,
    pub max_iter: usize,
    /// Stop once the L1 row-marginal violation drops below this.
    pub tol: f64,
    /// Exponent `r` of the `ℓ_r` ground cost.
    pub ground_norm: f64,
    pub exec: Execution,
}

impl Default for SinkhornConfig {
    fn default() -> Self {
        Self {
            reg: 0.01,
            max_iter: 10_000,
            tol: 1e-6,
            ground_norm: 2.0,
            exec: Execution::default(),
        }
    }
}

/// Entropic coupling between two uniform empirical measures.
#[derive(Clone, Debug, PartialEq)]
pub struct TransportPlan {
    pub coupling: Mat,
    /// L1 distance of the row sums from `1/m₁`.
    pub row_violation: f64,
    /// L1 distance of the column sums from `1/m₂`.
    pub col_violation: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SinkhornResult {
    /// `⟨plan, cost⟩`.
    pub w1: f64,
    pub plan: TransportPlan,
    pub iterations: usize,
    pub converged: bool,
}

fn lr_distance(a: &[f64], b: &[f64], r: f64) -> f64 {
    if r == 2.0 {
        a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
    } else if r == 1.0 {
        a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
    } else {
        a.iter().zip(b).map(|(x, y)| (x - y).abs().powf(r)).sum::<f64>().powf(1.0 / r)
    }
}

fn cmp_samples(a: &Mat, b: &Mat) -> Ordering {
    a.shape()
        .cmp(&b.shape())
        .then_with(|| {
            a.data()
                .iter()
                .zip(b.data())
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(Ordering::Equal)
        })
}

fn check_samples(a: &Mat, b: &Mat) -> Result<()> {
    if a.rows() == 0 || b.rows() == 0 {
        return invalid("both sample sets need at least one point");
    }
    if a.cols() != b.cols() {
        return Err(Error::Shape {
            op: "sinkhorn_w1",
            left: a.shape(),
            right: b.shape(),
        });
    }
    if !a.all_finite() || !b.all_finite() {
        return Err(Error::Domain {
            op: "sinkhorn_w1",
            detail: "samples contain non-finite values".into(),
        });
    }
    Ok(())
}

/// Pairwise ground-cost matrix.
pub fn cost_matrix(a: &Mat, b: &Mat, ground_norm: f64, exec: Execution) -> Mat {
    let rows = map_indexed(exec, a.rows(), |i| {
        (0..b.rows()).map(|j| lr_distance(a.row(i), b.row(j), ground_norm)).collect::<Vec<_>>()
    });
    Mat::new(a.rows(), b.rows(), rows.concat()).expect("rows have b.rows() entries")
}

/// Median of the pairwise Euclidean costs; the default scale for `ε`.
pub fn median_cost(a: &Mat, b: &Mat) -> Result<f64> {
    check_samples(a, b)?;
    let mut c = cost_matrix(a, b, 2.0, Execution::default()).into_data();
    let mid = c.len() / 2;
    let (_, m, _) = c.select_nth_unstable_by(mid, f64::total_cmp);
    Ok(*m)
}

/// Entropic-regularised W1 between the empirical measures of `a` and `b`.
///
/// The computation is oriented canonically (the lexicographically smaller
/// sample set plays the row role) so swapping the arguments gives the same
/// value bit for bit, with the plan transposed.
pub fn sinkhorn_w1(a: &Mat, b: &Mat, cfg: &SinkhornConfig) -> Result<SinkhornResult> {
    check_samples(a, b)?;
    if !(cfg.reg > 0.0) || !cfg.reg.is_finite() {
        return invalid(format!("reg must be positive, got {}", cfg.reg));
    }
    if !(cfg.ground_norm >= 1.0) {
        return invalid(format!("ground norm must be >= 1, got {}", cfg.ground_norm));
    }
    if cmp_samples(a, b) == Ordering::Greater {
        let mut r = sinkhorn_oriented(b, a, cfg);
        let c = &r.plan.coupling;
        r.plan.coupling = Mat::from_fn(c.cols(), c.rows(), |i, j| c.get(j, i));
        std::mem::swap(&mut r.plan.row_violation, &mut r.plan.col_violation);
        Ok(r)
    } else {
        Ok(sinkhorn_oriented(a, b, cfg))
    }
}

fn sinkhorn_oriented(a: &Mat, b: &Mat, cfg: &SinkhornConfig) -> SinkhornResult {
    let (m1, m2) = (a.rows(), b.rows());
    let eps = cfg.reg;
    let exec = cfg.exec;
    let cost = cost_matrix(a, b, cfg.ground_norm, exec);
    let scaled = cost.map(|c| c / eps);
    let scaled_t = Mat::from_fn(m2, m1, |j, i| scaled.get(i, j));
    let log_a = -(m1 as f64).ln();
    let log_b = -(m2 as f64).ln();

    // f_i = −ε LSE_j(log b + (g_j − C_ij)/ε) and symmetrically for g.
    let update = |pot: &[f64], c: &Mat, log_w: f64| -> Vec<f64> {
        let pot: Vec<f64> = pot.iter().map(|p| p / eps).collect();
        map_indexed(exec, c.rows(), |i| {
            let row = c.row(i);
            let mut top = f64::NEG_INFINITY;
            for (cij, p) in row.iter().zip(&pot) {
                top = top.max(p - cij);
            }
            let total: f64 = row.iter().zip(&pot).map(|(cij, p)| (p - cij - top).exp()).sum();
            -eps * (log_w + top + total.ln())
        })
    };

    // Scaling iterations on a kernel stabilised by the current potentials;
    // the scalings are folded back into the potentials before they can overflow.
    let kernel = |f: &[f64], g: &[f64]| -> (Mat, Mat) {
        let rows = map_indexed(exec, m1, |i| {
            (0..m2)
                .map(|j| (log_a + log_b + (f[i] + g[j]) / eps - scaled.get(i, j)).exp())
                .collect::<Vec<_>>()
        });
        let k = Mat::new(m1, m2, rows.concat()).expect("m1 x m2 kernel");
        let kt = Mat::from_fn(m2, m1, |j, i| k.get(i, j));
        (k, kt)
    };
    let matvec = |k: &Mat, v: &[f64]| -> Vec<f64> {
        map_indexed(exec, k.rows(), |i| k.row(i).iter().zip(v).map(|(kij, vj)| kij * vj).sum())
    };
    let (a_w, b_w) = (1.0 / m1 as f64, 1.0 / m2 as f64);
    const ABSORB: f64 = 1e13;

    let mut f = update(&vec![0.0; m2], &scaled, log_b);
    let mut g = update(&f, &scaled_t, log_a);
    let (mut k, mut kt) = kernel(&f, &g);
    let mut u = vec![1.0; m1];
    let mut v = vec![1.0; m2];
    let mut iterations = 0;
    let mut converged = false;
    while iterations < cfg.max_iter {
        let kv = matvec(&k, &v);
        let violation: f64 = u.iter().zip(&kv).map(|(ui, s)| (ui * s - a_w).abs()).sum();
        if violation < cfg.tol {
            converged = true;
            break;
        }
        let ok_rows = kv.iter().all(|s| *s > 0.0 && s.is_finite());
        if ok_rows {
            u = kv.iter().map(|s| a_w / s).collect();
        }
        let ktu = matvec(&kt, &u);
        let ok_cols = ok_rows && ktu.iter().all(|s| *s > 0.0 && s.is_finite());
        if ok_cols {
            v = ktu.iter().map(|s| b_w / s).collect();
        }
        let big = |w: &[f64]| w.iter().any(|x| !(*x < ABSORB && *x > 1.0 / ABSORB));
        if !ok_cols || big(&u) || big(&v) {
            for (fi, ui) in f.iter_mut().zip(&u) {
                *fi += eps * ui.ln();
            }
            for (gj, vj) in g.iter_mut().zip(&v) {
                *gj += eps * vj.ln();
            }
            if !ok_cols {
                // a scaling under- or overflowed: redo a full log-domain step
                f = update(&g, &scaled, log_b);
                g = update(&f, &scaled_t, log_a);
            }
            (k, kt) = kernel(&f, &g);
            u.fill(1.0);
            v.fill(1.0);
        }
        iterations += 1;
    }
    for (fi, ui) in f.iter_mut().zip(&u) {
        *fi += eps * ui.ln();
    }
    for (gj, vj) in g.iter_mut().zip(&v) {
        *gj += eps * vj.ln();
    }
    drop((k, kt));

    let rows = map_indexed(exec, m1, |i| {
        (0..m2)
            .map(|j| (log_a + log_b + (f[i] + g[j] - cost.get(i, j)) / eps).exp())
            .collect::<Vec<_>>()
    });
    let coupling = Mat::new(m1, m2, rows.concat()).expect("m1 x m2 plan");
    let w1 = coupling.data().iter().zip(cost.data()).map(|(p, c)| p * c).sum();
    let row_violation = (0..m1)
        .map(|i| (coupling.row(i).iter().sum::<f64>() - 1.0 / m1 as f64).abs())
        .sum();
    let col_violation = (0..m2)
        .map(|j| ((0..m1).map(|i| coupling.get(i, j)).sum::<f64>() - 1.0 / m2 as f64).abs())
        .sum();
    SinkhornResult {
        w1,
        plan: TransportPlan {
            coupling,
            row_violation,
            col_violation,
        },
        iterations,
        converged,
    }
}

/// Exact W1 between two equal-size empirical measures by enumerating all
/// permutations (`m ≤ 8`).
pub fn exact_w1_small(a: &Mat, b: &Mat) -> Result<f64> {
    check_samples(a, b)?;
    let m = a.rows();
    if b.rows() != m {
        return invalid(format!("need equal sample counts, got {m} and {}", b.rows()));
    }
    if m > 8 {
        return invalid(format!("exact W1 is limited to m <= 8, got {m}"));
    }
    let cost = cost_matrix(a, b, 2.0, Execution::Sequential);
    let total = |perm: &[usize]| perm.iter().enumerate().map(|(i, &j)| cost.get(i, j)).sum::<f64>();
    // Heap's algorithm
    let mut perm: Vec<usize> = (0..m).collect();
    let mut best = total(&perm);
    let mut c = vec![0usize; m];
    let mut i = 1;
    while i < m {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            best = best.min(total(&perm));
            c[i] += 1;
            i = 1;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    Ok(best / m as f64)
}

/// Uniform quadrature grid with `steps` points on `[lo, hi]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid {
    pub lo: f64,
    pub hi: f64,
    pub steps: usize,
}

impl Grid {
    pub fn new(lo: f64, hi: f64, steps: usize) -> Result<Self> {
        if steps < 2 || !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return invalid(format!("grid needs lo < hi and steps >= 2, got [{lo}, {hi}] x {steps}"));
        }
        Ok(Self { lo, hi, steps })
    }

    pub fn spacing(&self) -> f64 {
        (self.hi - self.lo) / (self.steps - 1) as f64
    }

    pub fn points(&self) -> impl Iterator<Item = f64> + '_ {
        let h = self.spacing();
        (0..self.steps).map(move |k| if k + 1 == self.steps { self.hi } else { self.lo + k as f64 * h })
    }

    /// Trapezoid rule for values sampled at [`Self::points`].
    pub fn trapezoid(&self, values: &[f64]) -> f64 {
        let n = values.len();
        let inner: f64 = values[1..n - 1].iter().sum();
        self.spacing() * (inner + 0.5 * (values[0] + values[n - 1]))
    }
}

/// Hellinger distance `(∫ (√p − √q)²)^{1/2}` by the trapezoid rule.
///
/// Both densities are evaluated once per grid point, in ascending order.
pub fn hellinger_1d(mut p: impl FnMut(f64) -> f64, mut q: impl FnMut(f64) -> f64, grid: &Grid) -> Result<f64> {
    let grid = Grid::new(grid.lo, grid.hi, grid.steps)?;
    let mut vals = Vec::with_capacity(grid.steps);
    for y in grid.points() {
        let (a, b) = (p(y), q(y));
        if !(a >= 0.0) || !(b >= 0.0) {
            return Err(Error::Domain {
                op: "hellinger_1d",
                detail: format!("negative or NaN density at y = {y}: {a}, {b}"),
            });
        }
        let d = a.sqrt() - b.sqrt();
        vals.push(d * d);
    }
    Ok(grid.trapezoid(&vals).max(0.0).sqrt())
}

/// Integrates per-covariate Hellinger distances over `x`:
/// `(mean_x d_H(x)²)^{1/2}`.
pub fn integrated_hellinger(per_x: &[f64]) -> Result<f64> {
    if per_x.is_empty() {
        return invalid("no test covariates");
    }
    Ok((per_x.iter().map(|d| d * d).sum::<f64>() / per_x.len() as f64).sqrt())
}

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Conditional kernel density estimate with Gaussian kernels.
#[derive(Clone, Debug, PartialEq)]
pub struct CkdeModel {
    x: Mat,
    y: Vec<f64>,
    pub hx: f64,
    pub hy: f64,
    /// Mean leave-one-out log-likelihood at the chosen bandwidths.
    pub cv_loglik: f64,
}

fn sample_sd(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    (v.iter().map(|a| (a - m) * (a - m)).sum::<f64>() / (n - 1.0).max(1.0)).sqrt()
}

/// Log-spaced grid of `k` bandwidths spanning `[lo, hi] · scale`.
pub fn log_grid(lo: f64, hi: f64, k: usize, scale: f64) -> Vec<f64> {
    if k == 1 {
        return vec![lo * scale];
    }
    (0..k)
        .map(|i| scale * lo * (hi / lo).powf(i as f64 / (k - 1) as f64))
        .collect()
}

/// Default grids: 12 log-spaced values over `[0.02, 2] ×` the pooled covariate
/// SD and the response SD.
pub fn default_bandwidth_grids(ds: &Dataset) -> (Vec<f64>, Vec<f64>) {
    bandwidth_grids(ds, 12)
}

/// `k` log-spaced values over `[0.02, 2] ×` the pooled covariate SD and the
/// response SD.
pub fn bandwidth_grids(ds: &Dataset, k: usize) -> (Vec<f64>, Vec<f64>) {
    let p = ds.covariate_dim();
    let sx = (0..p)
        .map(|j| sample_sd(&(0..ds.len()).map(|i| ds.x.get(i, j)).collect::<Vec<_>>()))
        .sum::<f64>()
        / p as f64;
    let sy = sample_sd(&(0..ds.len()).map(|i| ds.y.get(i, 0)).collect::<Vec<_>>());
    let positive = |s: f64| if s > 0.0 { s } else { 1.0 };
    (log_grid(0.02, 2.0, k, positive(sx)), log_grid(0.02, 2.0, k, positive(sy)))
}

fn check_bandwidths(name: &str, grid: &[f64]) -> Result<()> {
    if grid.is_empty() || grid.iter().any(|h| !(h.is_finite() && *h > 0.0)) {
        return invalid(format!("degenerate {name} bandwidth grid {grid:?}"));
    }
    Ok(())
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum()
}

/// Chooses `(h_x, h_y)` by leave-one-out log-likelihood over the grids.
pub fn ckde_fit(ds: &Dataset, grid_x: &[f64], grid_y: &[f64]) -> Result<CkdeModel> {
    ckde_fit_with(ds, grid_x, grid_y, Execution::default())
}

pub fn ckde_fit_with(ds: &Dataset, grid_x: &[f64], grid_y: &[f64], exec: Execution) -> Result<CkdeModel> {
    if ds.response_dim() != 1 {
        return invalid(format!("kernel baseline needs a scalar response, got D = {}", ds.response_dim()));
    }
    if ds.len() < 10 {
        return invalid(format!("kernel baseline needs n >= 10, got {}", ds.len()));
    }
    check_bandwidths("x", grid_x)?;
    check_bandwidths("y", grid_y)?;
    let n = ds.len();
    let y: Vec<f64> = ds.y.data().to_vec();
    let (gx, gy) = (grid_x.len(), grid_y.len());

    // per point i: LOO log-likelihood for every (hx, hy) pair
    let per_point: Vec<Vec<f64>> = map_indexed(exec, n, |i| {
        let xi = ds.x.row(i);
        let dx: Vec<f64> = (0..n).filter(|&j| j != i).map(|j| sq_dist(xi, ds.x.row(j))).collect();
        let dy: Vec<f64> = (0..n).filter(|&j| j != i).map(|j| (y[i] - y[j]).powi(2)).collect();
        // shifting by the nearest distance rescales numerator and denominator alike
        let dmin = dx.iter().copied().fold(f64::INFINITY, f64::min);
        let ky: Vec<Vec<f64>> = grid_y
            .iter()
            .map(|h| {
                let c = INV_SQRT_2PI / h;
                dy.iter().map(|d| c * (-d / (2.0 * h * h)).exp()).collect()
            })
            .collect();
        let mut out = vec![f64::NEG_INFINITY; gx * gy];
        for (a, hx) in grid_x.iter().enumerate() {
            let kx: Vec<f64> = dx.iter().map(|d| (-(d - dmin) / (2.0 * hx * hx)).exp()).collect();
            let den: f64 = kx.iter().sum();
            for (b, kyb) in ky.iter().enumerate() {
                let num: f64 = kx.iter().zip(kyb).map(|(u, v)| u * v).sum();
                out[a * gy + b] = (num / den).ln();
            }
        }
        out
    });
    let mut totals = vec![0.0; gx * gy];
    for row in &per_point {
        for (t, v) in totals.iter_mut().zip(row) {
            *t += v;
        }
    }
    let (best, score) = totals
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (k, v)| if v > bv { (k, v) } else { (bi, bv) });
    if !score.is_finite() {
        return invalid("cross-validation likelihood is -inf for every bandwidth pair");
    }
    Ok(CkdeModel {
        x: ds.x.clone(),
        y,
        hx: grid_x[best / gy],
        hy: grid_y[best % gy],
        cv_loglik: score / n as f64,
    })
}

/// Normalised kernel weights at `x`, pruned below `1e-14 ×` the largest.
#[derive(Clone, Debug)]
pub struct CkdeWeights {
    pub index: Vec<usize>,
    pub weight: Vec<f64>,
}

impl CkdeModel {
    /// Model with fixed bandwidths, skipping cross-validation.
    pub fn with_bandwidths(ds: &Dataset, hx: f64, hy: f64) -> Result<Self> {
        if ds.response_dim() != 1 {
            return invalid("kernel baseline needs a scalar response");
        }
        check_bandwidths("x", &[hx])?;
        check_bandwidths("y", &[hy])?;
        Ok(Self {
            x: ds.x.clone(),
            y: ds.y.data().to_vec(),
            hx,
            hy,
            cv_loglik: f64::NAN,
        })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn responses(&self) -> &[f64] {
        &self.y
    }

    pub fn weights(&self, x: &[f64]) -> Result<CkdeWeights> {
        if x.len() != self.x.cols() {
            return invalid(format!("covariate has {} entries, expected {}", x.len(), self.x.cols()));
        }
        let d: Vec<f64> = (0..self.len()).map(|i| sq_dist(x, self.x.row(i))).collect();
        let dmin = d.iter().copied().fold(f64::INFINITY, f64::min);
        let raw: Vec<f64> = d.iter().map(|v| (-(v - dmin) / (2.0 * self.hx * self.hx)).exp()).collect();
        let total: f64 = raw.iter().sum();
        let cut = 1e-14;
        let (index, weight) = raw
            .iter()
            .enumerate()
            .filter(|(_, w)| **w >= cut)
            .map(|(i, w)| (i, w / total))
            .unzip();
        Ok(CkdeWeights { index, weight })
    }

    fn density_from(&self, w: &CkdeWeights, y: f64) -> f64 {
        let h = self.hy;
        w.index
            .iter()
            .zip(&w.weight)
            .map(|(&i, wi)| wi * INV_SQRT_2PI / h * (-(y - self.y[i]).powi(2) / (2.0 * h * h)).exp())
            .sum()
    }

    /// `p̂(y | x)`.
    pub fn density(&self, y: f64, x: &[f64]) -> Result<f64> {
        let w = self.weights(x)?;
        Ok(self.density_from(&w, y))
    }

    /// `log p̂(y | x)`, finite even where the density underflows.
    pub fn log_density(&self, y: f64, x: &[f64]) -> Result<f64> {
        let w = self.weights(x)?;
        let h = self.hy;
        let terms: Vec<f64> = w
            .index
            .iter()
            .zip(&w.weight)
            .map(|(&i, wi)| wi.ln() - (y - self.y[i]).powi(2) / (2.0 * h * h))
            .collect();
        Ok(logsumexp(&terms) + (INV_SQRT_2PI / h).ln())
    }

    /// `p̂(· | x)` on every grid point.
    pub fn density_on_grid(&self, x: &[f64], grid: &Grid) -> Result<Vec<f64>> {
        let w = self.weights(x)?;
        Ok(grid.points().map(|y| self.density_from(&w, y)).collect())
    }

    /// A grid covering all responses with a `6 h_y` margin and spacing at most `h_y / 4`.
    pub fn default_grid(&self) -> Grid {
        let lo = self.y.iter().copied().fold(f64::INFINITY, f64::min) - 6.0 * self.hy;
        let hi = self.y.iter().copied().fold(f64::NEG_INFINITY, f64::max) + 6.0 * self.hy;
        let steps = (((hi - lo) / (self.hy / 4.0)).ceil() as usize + 1).clamp(512, 20_000);
        Grid { lo, hi, steps }
    }
}

/// Trapezoid mean and SD of `p̂(· | x)` on `grid`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadratureMoments {
    pub mean: f64,
    pub sd: f64,
    /// Set when round-off made the variance negative and it was clamped to 0.
    pub variance_clamped: bool,
}

/// Moments are normalised by the quadrature mass so truncation of the tails
/// does not bias them.
pub fn ckde_mean_sd(model: &CkdeModel, x: &[f64], grid: &Grid) -> Result<QuadratureMoments> {
    let grid = Grid::new(grid.lo, grid.hi, grid.steps)?;
    let p = model.density_on_grid(x, &grid)?;
    let ys: Vec<f64> = grid.points().collect();
    let mass = grid.trapezoid(&p);
    let m1 = grid.trapezoid(&p.iter().zip(&ys).map(|(d, y)| d * y).collect::<Vec<_>>()) / mass;
    let m2 = grid.trapezoid(&p.iter().zip(&ys).map(|(d, y)| d * y * y).collect::<Vec<_>>()) / mass;
    let var = m2 - m1 * m1;
    Ok(QuadratureMoments {
        mean: m1,
        sd: var.max(0.0).sqrt(),
        variance_clamped: var < 0.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::genmodel::{SigmaBounds, sigma_raw_for};
    use crate::networks::{init_mlp, LayerWidths};
    use crate::rng::rng_for;
    use crate::synthdata::{gen_fd1, DatasetMeta};
    use proptest::prelude::*;
    use rand::Rng as _;

    fn random_points(m: usize, d: usize, seed: u64) -> Mat {
        let mut rng = rng_for(seed, 0);
        Mat::from_fn(m, d, |_, _| rng.random::<f64>())
    }

    fn cfg(reg: f64) -> SinkhornConfig {
        SinkhornConfig {
            reg,
            ..Default::default()
        }
    }

    #[test]
    fn sinkhorn_identical_sets() {
        let a = random_points(5, 2, 1);
        let r = sinkhorn_w1(&a, &a, &cfg(0.01)).unwrap();
        assert!(r.w1 < 0.02, "{}", r.w1);
        assert!(r.converged);
    }

    #[test]
    fn sinkhorn_single_points() {
        let a = Mat::from_rows(&[[0.0, 0.0]]);
        let b = Mat::from_rows(&[[3.0, 4.0]]);
        let r = sinkhorn_w1(&a, &b, &cfg(0.01)).unwrap();
        assert!((r.w1 - 5.0).abs() < 1e-12);
        assert!((r.plan.coupling.item() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sinkhorn_matches_exact_six_points() {
        let a = random_points(6, 2, 2);
        let b = random_points(6, 2, 3);
        let r = sinkhorn_w1(&a, &b, &cfg(1e-3)).unwrap();
        let e = exact_w1_small(&a, &b).unwrap();
        assert!((r.w1 - e).abs() < 1e-2, "{} vs {e}", r.w1);
    }

    #[test]
    fn sinkhorn_plan_marginals() {
        let a = random_points(7, 3, 4);
        let b = random_points(4, 3, 5);
        // the stopping rule bounds the violation of one marginal only, so ask for far less than 1e-8
        let r = sinkhorn_w1(&a, &b, &SinkhornConfig { tol: 1e-12, ..cfg(0.05) }).unwrap();
        assert!(r.converged);
        let c = &r.plan.coupling;
        assert_eq!(c.shape(), (7, 4));
        assert!(c.data().iter().all(|v| *v >= 0.0));
        for i in 0..7 {
            assert!((c.row(i).iter().sum::<f64>() - 1.0 / 7.0).abs() < 1e-8);
        }
        for j in 0..4 {
            assert!(((0..7).map(|i| c.get(i, j)).sum::<f64>() - 0.25).abs() < 1e-8);
        }
        assert!(r.plan.row_violation < 1e-8 && r.plan.col_violation < 1e-8);
    }

    #[test]
    fn sinkhorn_rejects_bad_input() {
        let a = Mat::from_rows(&[[0.0, f64::NAN]]);
        let b = Mat::from_rows(&[[0.0, 1.0]]);
        assert!(sinkhorn_w1(&a, &b, &cfg(0.01)).is_err());
        assert!(sinkhorn_w1(&b, &Mat::zeros(0, 2), &cfg(0.01)).is_err());
        assert!(sinkhorn_w1(&b, &b, &cfg(0.0)).is_err());
    }

    #[test]
    fn sinkhorn_flags_non_convergence() {
        let a = random_points(20, 2, 6);
        let b = random_points(20, 2, 7);
        let c = SinkhornConfig {
            reg: 1e-3,
            max_iter: 1,
            tol: 1e-15,
            ..Default::default()
        };
        let r = sinkhorn_w1(&a, &b, &c).unwrap();
        assert!(!r.converged);
        assert!(r.w1.is_finite());
    }

    #[test]
    fn sinkhorn_sequential_equals_parallel() {
        let a = random_points(40, 2, 8);
        let b = random_points(30, 2, 9);
        let s = sinkhorn_w1(&a, &b, &SinkhornConfig { exec: Execution::Sequential, ..cfg(0.02) }).unwrap();
        let p = sinkhorn_w1(&a, &b, &SinkhornConfig { exec: Execution::Parallel, ..cfg(0.02) }).unwrap();
        assert_eq!(s, p);
    }

    #[test]
    fn exact_examples() {
        let a = random_points(5, 2, 10);
        assert_eq!(exact_w1_small(&a, &a).unwrap(), 0.0);
        let col = |v: &[f64]| Mat::new(v.len(), 1, v.to_vec()).unwrap();
        assert_eq!(exact_w1_small(&col(&[0.0, 1.0]), &col(&[1.0, 0.0])).unwrap(), 0.0);
        assert_eq!(exact_w1_small(&col(&[0.0, 2.0]), &col(&[1.0, 1.0])).unwrap(), 1.0);
        assert!(exact_w1_small(&random_points(9, 1, 0), &random_points(9, 1, 1)).is_err());
        assert!(exact_w1_small(&random_points(3, 1, 0), &random_points(4, 1, 1)).is_err());
    }

    /// Sorted matching is optimal in one dimension.
    #[test]
    fn exact_matches_sorted_pairing_in_1d() {
        for seed in 0..20 {
            let a = random_points(7, 1, seed);
            let b = random_points(7, 1, seed + 100);
            let mut sa = a.data().to_vec();
            let mut sb = b.data().to_vec();
            sa.sort_by(f64::total_cmp);
            sb.sort_by(f64::total_cmp);
            let sorted: f64 = sa.iter().zip(&sb).map(|(x, y)| (x - y).abs()).sum::<f64>() / 7.0;
            assert!((exact_w1_small(&a, &b).unwrap() - sorted).abs() < 1e-12);
        }
    }

    fn normal_pdf(y: f64, mu: f64) -> f64 {
        INV_SQRT_2PI * (-(y - mu).powi(2) / 2.0).exp()
    }

    #[test]
    fn hellinger_examples() {
        let grid = Grid::new(-8.0, 9.0, 4000).unwrap();
        assert_eq!(hellinger_1d(|y| normal_pdf(y, 0.0), |y| normal_pdf(y, 0.0), &grid).unwrap(), 0.0);
        let exact = (2.0 * (1.0 - (-1.0f64 / 8.0).exp())).sqrt();
        assert!((exact - 0.4848).abs() < 1e-4);
        let h = hellinger_1d(|y| normal_pdf(y, 0.0), |y| normal_pdf(y, 1.0), &grid).unwrap();
        assert!((h - exact).abs() < 1e-4, "{h}");
        let u1 = |y: f64| if (0.0..1.0).contains(&y) { 1.0 } else { 0.0 };
        let u2 = |y: f64| if (2.0..3.0).contains(&y) { 1.0 } else { 0.0 };
        let g = Grid::new(-1.0, 4.0, 50_001).unwrap();
        assert!((hellinger_1d(u1, u2, &g).unwrap() - 2f64.sqrt()).abs() < 1e-3);
        assert!(hellinger_1d(|_| -1.0, |_| 1.0, &grid).is_err());
        assert!(Grid::new(0.0, 1.0, 1).is_err());
    }

    #[test]
    fn integrated_hellinger_averages_squares() {
        assert_eq!(integrated_hellinger(&[0.3, 0.3]).unwrap(), 0.3);
        assert!((integrated_hellinger(&[0.0, 1.0]).unwrap() - 0.5f64.sqrt()).abs() < 1e-15);
        assert!(integrated_hellinger(&[]).is_err());
    }

    fn dataset(x: Vec<f64>, y: Vec<f64>) -> Dataset {
        let n = y.len();
        Dataset::new(
            Mat::new(n, x.len() / n, x).unwrap(),
            Mat::new(n, 1, y).unwrap(),
            DatasetMeta::default(),
        )
        .unwrap()
    }

    #[test]
    fn ckde_identical_points_is_single_kernel() {
        let ds = dataset(vec![0.5, 0.5], vec![2.0, 2.0]);
        let m = CkdeModel::with_bandwidths(&ds, 0.3, 0.2).unwrap();
        for y in [1.5, 2.0, 2.7] {
            let want = INV_SQRT_2PI / 0.2 * (-(y - 2.0f64).powi(2) / (2.0 * 0.04)).exp();
            assert!((m.density(y, &[-3.0]).unwrap() - want).abs() < 1e-14);
        }
    }

    #[test]
    fn ckde_mean_sd_single_point() {
        let ds = dataset(vec![0.0], vec![2.0]);
        let m = CkdeModel::with_bandwidths(&ds, 1.0, 0.05).unwrap();
        let q = ckde_mean_sd(&m, &[0.0], &Grid::new(0.0, 4.0, 20_001).unwrap()).unwrap();
        assert!((q.mean - 2.0).abs() < 1e-9);
        assert!((q.sd - 0.05).abs() < 1e-6);
        assert!(!q.variance_clamped);
    }

    #[test]
    fn ckde_mean_symmetric_pair() {
        let ds = dataset(vec![1.0, 1.0], vec![-1.3, 1.3]);
        let m = CkdeModel::with_bandwidths(&ds, 1.0, 0.4).unwrap();
        let q = ckde_mean_sd(&m, &[0.2], &Grid::new(-5.0, 5.0, 2001).unwrap()).unwrap();
        assert!(q.mean.abs() < 1e-12);
    }

    #[test]
    fn ckde_rejects_degenerate_input() {
        let ds = gen_fd1(50, 1).unwrap();
        assert!(ckde_fit(&ds, &[], &[0.1]).is_err());
        assert!(ckde_fit(&ds, &[0.1, 0.0], &[0.1]).is_err());
        assert!(ckde_fit(&ds, &[0.1], &[f64::NAN]).is_err());
        assert!(ckde_fit(&ds.select(&[0, 1, 2]), &[0.1], &[0.1]).is_err());
    }

    #[test]
    fn ckde_fd1_bandwidth_and_mass() {
        let ds = gen_fd1(1000, 3).unwrap();
        let (gx, gy) = default_bandwidth_grids(&ds);
        let m = ckde_fit(&ds, &gx, &gy).unwrap();
        assert!(m.hy >= 0.05 && m.hy <= 1.0, "hy = {}", m.hy);
        let grid = m.default_grid();
        for i in 0..5 {
            let p = m.density_on_grid(ds.x.row(i), &grid).unwrap();
            assert!(p.iter().all(|v| *v > 0.0));
            assert!((grid.trapezoid(&p) - 1.0).abs() < 1e-3);
        }
    }

    #[test]
    fn ckde_cv_sequential_equals_parallel() {
        let ds = gen_fd1(120, 4).unwrap();
        let (gx, gy) = default_bandwidth_grids(&ds);
        let s = ckde_fit_with(&ds, &gx, &gy, Execution::Sequential).unwrap();
        let p = ckde_fit_with(&ds, &gx, &gy, Execution::Parallel).unwrap();
        assert_eq!(s, p);
    }

    fn constant_model(c: f64, sigma: f64) -> CvaeModel {
        let zero_net = |w: Vec<usize>, out: f64| {
            let mut n = init_mlp(&LayerWidths::new(w).unwrap(), 0);
            n.weights.iter_mut().for_each(|m| m.data_mut().fill(0.0));
            n.shifts.last_mut().unwrap().data_mut().fill(out);
            n
        };
        let bounds = SigmaBounds::new(0.1, 1.0).unwrap();
        CvaeModel {
            encoder_mu: zero_net(vec![2, 3, 1], 0.0),
            encoder_logvar: zero_net(vec![2, 3, 1], 0.0),
            decoder: zero_net(vec![2, 3, 1], c),
            sigma_raw: sigma_raw_for(sigma, bounds).unwrap(),
            sigma_bounds: bounds,
            latent_dim: 1,
        }
    }

    #[test]
    fn mc_moments_constant_decoder() {
        let m = constant_model(1.7, 0.3);
        let e = mc_mean_sd(&m, &[0.0], 100_000, 4).unwrap();
        assert!((e.mean[0] - 1.7).abs() < 0.005);
        assert!((e.sd[0] - 0.3).abs() < 0.005);
        assert!(mc_mean_sd(&m, &[0.0], 2, 1).unwrap().sd[0] > 0.0);
        assert_eq!(mc_mean_sd(&m, &[0.0], 50, 9).unwrap(), mc_mean_sd(&m, &[0.0], 50, 9).unwrap());
        assert!(mc_mean_sd(&m, &[0.0], 1, 1).is_err());
    }

    #[test]
    fn mse_report_examples() {
        let t = vec![
            MomentEstimate { mean: vec![0.5], sd: vec![1.0] },
            MomentEstimate { mean: vec![-2.0], sd: vec![0.2] },
        ];
        let r = mse_report(&t, &t, "sieve", 3).unwrap();
        assert_eq!((r.mse_mean, r.mse_sd), (0.0, 0.0));
        let shifted: Vec<_> = t
            .iter()
            .map(|e| MomentEstimate {
                mean: e.mean.iter().map(|v| v + 1.0).collect(),
                sd: e.sd.iter().map(|v| v + 1.0).collect(),
            })
            .collect();
        let r = mse_report(&shifted, &t, "sieve", 3).unwrap();
        assert!((r.mse_mean - 1.0).abs() < 1e-15 && (r.mse_sd - 1.0).abs() < 1e-15);
        assert_eq!(r.n_test, 2);
        assert!(mse_report(&t[..1], &t, "sieve", 3).is_err());
        let row = r.csv_row();
        assert_eq!(row.split(',').count(), EvalReport::CSV_COLUMNS.len());
        assert!(row.ends_with(",,"));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn sinkhorn_self_distance_bounded(m in 1usize..=64, seed in 0u64..1000) {
            let a = random_points(m, 2, seed);
            let reg = 0.01;
            let r = sinkhorn_w1(&a, &a, &cfg(reg)).unwrap();
            prop_assert!(r.w1 <= reg * ((m as f64).ln() + 1.0));
        }

        #[test]
        fn sinkhorn_symmetric(m1 in 1usize..20, m2 in 1usize..20, seed in 0u64..1000) {
            let a = random_points(m1, 2, seed);
            let b = random_points(m2, 2, seed + 7);
            let ab = sinkhorn_w1(&a, &b, &cfg(0.02)).unwrap().w1;
            let ba = sinkhorn_w1(&b, &a, &cfg(0.02)).unwrap().w1;
            prop_assert!((ab - ba).abs() < 1e-10);
        }

        #[test]
        fn sinkhorn_close_to_exact(m in 1usize..=6, seed in 0u64..10_000) {
            let a = random_points(m, 2, seed);
            let b = random_points(m, 2, seed + 1);
            let s = sinkhorn_w1(&a, &b, &cfg(1e-3)).unwrap().w1;
            let e = exact_w1_small(&a, &b).unwrap();
            prop_assert!((s - e).abs() < 1e-2, "{} vs {}", s, e);
        }

        #[test]
        fn hellinger_in_range(mu in -3.0f64..3.0, s in 0.2f64..3.0) {
            let grid = Grid::new(-20.0, 20.0, 4001).unwrap();
            let q = |y: f64| INV_SQRT_2PI / s * (-((y - mu) / s).powi(2) / 2.0).exp();
            let h = hellinger_1d(|y| normal_pdf(y, 0.0), q, &grid).unwrap();
            prop_assert!((0.0..=2f64.sqrt() + 1e-3).contains(&h));
        }

        #[test]
        fn ckde_positive_and_normalised(seed in 0u64..1000, hx in 0.05f64..2.0, hy in 0.05f64..1.0) {
            let ds = gen_fd1(60, seed).unwrap();
            let m = CkdeModel::with_bandwidths(&ds, hx, hy).unwrap();
            let grid = m.default_grid();
            let x = ds.x.row(0);
            for y in grid.points().step_by(7) {
                prop_assert!(m.log_density(y, x).unwrap().is_finite());
            }
            let p = m.density_on_grid(x, &grid).unwrap();
            prop_assert!((grid.trapezoid(&p) - 1.0).abs() < 1e-3);
        }
    }
}
