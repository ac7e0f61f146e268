//! Synthetic generators, response perturbation, splitting and MNIST ingestion.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use rand::Rng as _;
use rand_distr::StandardNormal;

use crate::error::{invalid, Error, Result};
use crate::mat::Mat;
use crate::rng::{rng_for, stream, Rng};

/// SD of the FD1 mixture components (the `0.25²` in `N(±X, 0.25²)` read as a variance).
pub const FD1_COMPONENT_SD: f64 = 0.25;

/// Provenance of a dataset.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DatasetMeta {
    pub generator: String,
    pub seed: u64,
    /// Observation noise SD of the synthetic truth, when known.
    pub sigma_star: Option<f64>,
    /// Variance of the perturbation added to responses, if any.
    pub perturb_variance: Option<f64>,
    /// Raw uniform draws behind the binary condition of M1/M2.
    pub raw_u: Option<Vec<f64>>,
}

/// Paired covariates (`n × p`) and responses (`n × D`).
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub x: Mat,
    pub y: Mat,
    pub meta: DatasetMeta,
}

impl Dataset {
    pub fn new(x: Mat, y: Mat, meta: DatasetMeta) -> Result<Self> {
        if x.rows() != y.rows() || x.rows() == 0 {
            return invalid(format!(
                "covariates have {} rows and responses {}; need equal and >= 1",
                x.rows(),
                y.rows()
            ));
        }
        Ok(Self { x, y, meta })
    }

    pub fn len(&self) -> usize {
        self.x.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.rows() == 0
    }

    pub fn covariate_dim(&self) -> usize {
        self.x.cols()
    }

    pub fn response_dim(&self) -> usize {
        self.y.cols()
    }

    pub fn select(&self, idx: &[usize]) -> Dataset {
        let mut meta = self.meta.clone();
        meta.raw_u = self
            .meta
            .raw_u
            .as_ref()
            .map(|u| idx.iter().map(|&i| u[i]).collect());
        Dataset {
            x: self.x.select_rows(idx),
            y: self.y.select_rows(idx),
            meta,
        }
    }

    /// CSV with header `x1..xp,y1..yD` and 17-significant-digit values.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let header: Vec<String> = (1..=self.x.cols())
            .map(|j| format!("x{j}"))
            .chain((1..=self.y.cols()).map(|j| format!("y{j}")))
            .collect();
        out.push_str(&header.join(","));
        out.push('\n');
        for i in 0..self.len() {
            let mut first = true;
            for v in self.x.row(i).iter().chain(self.y.row(i)) {
                if !first {
                    out.push(',');
                }
                first = false;
                write!(out, "{}", fmt17(*v)).unwrap();
            }
            out.push('\n');
        }
        out
    }
}

/// 17 significant digits, enough to round-trip any `f64`.
pub fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

fn normal(rng: &mut Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn check_n(n: usize) -> Result<()> {
    if n == 0 {
        return invalid("sample size must be >= 1");
    }
    Ok(())
}

/// FD1: `X ~ N(3,1)`, `Y = ±X + N(0, 0.25²)` with a fair sign.
pub fn gen_fd1(n: usize, seed: u64) -> Result<Dataset> {
    check_n(n)?;
    let mut rng = rng_for(seed, stream::DATA);
    let mut x = Mat::zeros(n, 1);
    let mut y = Mat::zeros(n, 1);
    for i in 0..n {
        let xi = 3.0 + normal(&mut rng);
        let u: f64 = rng.random();
        let sign = if u < 0.5 { -1.0 } else { 1.0 };
        x.set(i, 0, xi);
        y.set(i, 0, sign * xi + FD1_COMPONENT_SD * normal(&mut rng));
    }
    Dataset::new(
        x,
        y,
        DatasetMeta {
            generator: "fd1".into(),
            seed,
            sigma_star: Some(FD1_COMPONENT_SD),
            ..Default::default()
        },
    )
}

fn fd_common(x: &[f64]) -> f64 {
    x[0] * x[0] + (x[1] + x[2] / 3.0).exp()
}

/// FD2: five standard normal covariates, additive unit noise.
pub fn gen_fd2(n: usize, seed: u64) -> Result<Dataset> {
    gen_fd(n, seed, "fd2")
}

/// FD3: five standard normal covariates, multiplicative noise.
pub fn gen_fd3(n: usize, seed: u64) -> Result<Dataset> {
    gen_fd(n, seed, "fd3")
}

fn gen_fd(n: usize, seed: u64, which: &str) -> Result<Dataset> {
    check_n(n)?;
    let mut rng = rng_for(seed, stream::DATA);
    let mut x = Mat::zeros(n, 5);
    let mut y = Mat::zeros(n, 1);
    for i in 0..n {
        for j in 0..5 {
            x.set(i, j, normal(&mut rng));
        }
        let eps = normal(&mut rng);
        let (mean, sd) = fd_mean_sd(which, x.row(i));
        y.set(i, 0, mean + sd * eps);
    }
    Dataset::new(
        x,
        y,
        DatasetMeta {
            generator: which.into(),
            seed,
            sigma_star: (which == "fd2").then_some(1.0),
            ..Default::default()
        },
    )
}

fn fd_mean_sd(which: &str, x: &[f64]) -> (f64, f64) {
    match which {
        "fd2" => (fd_common(x) + (x[3] + x[4]).sin(), 1.0),
        _ => (
            fd_common(x) + x[3] - x[4],
            0.5 * (1.0 + x[1] * x[1] + x[4] * x[4]),
        ),
    }
}

/// Noise-free point on the M1 moons for latent `z` and uniform condition `u`.
pub fn m1_curve(z: f64, u: f64) -> [f64; 2] {
    if u < 0.5 {
        [1.0 - z.cos(), 0.5 - z.sin()]
    } else {
        [z.cos(), z.sin()]
    }
}

/// Noise-free point on the M2 ellipses.
pub fn m2_curve(z: f64, u: f64) -> [f64; 2] {
    if u < 0.5 {
        [z.cos(), 0.5 * z.sin()]
    } else {
        [2.0 * z.cos(), z.sin()]
    }
}

/// M1: two moons, `Z ~ Unif(0, π)`.
pub fn gen_m1(n: usize, sigma_star: f64, seed: u64) -> Result<Dataset> {
    gen_manifold(n, sigma_star, seed, "m1")
}

/// M2: inner and outer ellipse, `Z ~ Unif(0, 2π)`.
pub fn gen_m2(n: usize, sigma_star: f64, seed: u64) -> Result<Dataset> {
    gen_manifold(n, sigma_star, seed, "m2")
}

fn gen_manifold(n: usize, sigma_star: f64, seed: u64, which: &str) -> Result<Dataset> {
    check_n(n)?;
    if !(sigma_star >= 0.0) {
        return invalid(format!("sigma_star must be >= 0, got {sigma_star}"));
    }
    let mut rng = rng_for(seed, stream::DATA);
    let mut x = Mat::zeros(n, 1);
    let mut y = Mat::zeros(n, 2);
    let mut raw_u = Vec::with_capacity(n);
    for i in 0..n {
        let u: f64 = rng.random();
        let g = if which == "m1" {
            m1_curve(rng.random::<f64>() * PI, u)
        } else {
            m2_curve(rng.random::<f64>() * 2.0 * PI, u)
        };
        x.set(i, 0, if u > 0.5 { 1.0 } else { 0.0 });
        for (d, gd) in g.iter().enumerate() {
            y.set(i, d, gd + sigma_star * normal(&mut rng));
        }
        raw_u.push(u);
    }
    Dataset::new(
        x,
        y,
        DatasetMeta {
            generator: which.into(),
            seed,
            sigma_star: Some(sigma_star),
            raw_u: Some(raw_u),
            ..Default::default()
        },
    )
}

/// Noise-free draws from the M1/M2 truth for a fixed binary condition.
pub fn manifold_truth_samples(which: &str, condition: f64, m: usize, seed: u64) -> Result<Mat> {
    let mut rng = rng_for(seed, stream::SAMPLE);
    // condition 1 ⇔ U > 0.5
    let u = if condition > 0.5 { 0.75 } else { 0.25 };
    let mut out = Mat::zeros(m, 2);
    for i in 0..m {
        let g = match which {
            "m1" => m1_curve(rng.random::<f64>() * PI, u),
            "m2" => m2_curve(rng.random::<f64>() * 2.0 * PI, u),
            other => return invalid(format!("no manifold generator named {other}")),
        };
        out.row_mut(i).copy_from_slice(&g);
    }
    Ok(out)
}

/// Exact conditional mean and per-coordinate SD of the synthetic truth at `x`.
///
/// For the manifolds the response includes the `N(0, σ*² I)` observation noise.
pub fn true_mean_sd(generator: &str, x: &[f64], sigma_star: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    match generator {
        "fd1" => Ok((
            vec![0.0],
            vec![(x[0] * x[0] + FD1_COMPONENT_SD * FD1_COMPONENT_SD).sqrt()],
        )),
        "fd2" | "fd3" => {
            let (m, s) = fd_mean_sd(generator, x);
            Ok((vec![m], vec![s]))
        }
        "m1" | "m2" => {
            let s2 = sigma_star * sigma_star;
            let upper = x[0] > 0.5;
            let (mean, var) = match (generator, upper) {
                // Z ~ Unif(0, π): E cos = 0, E sin = 2/π, E cos² = E sin² = 1/2
                ("m1", false) => ([1.0, 0.5 - 2.0 / PI], [0.5, 0.5 - 4.0 / (PI * PI)]),
                ("m1", true) => ([0.0, 2.0 / PI], [0.5, 0.5 - 4.0 / (PI * PI)]),
                // Z ~ Unif(0, 2π): both means vanish
                ("m2", false) => ([0.0, 0.0], [0.5, 0.125]),
                _ => ([0.0, 0.0], [2.0, 0.5]),
            };
            Ok((
                mean.to_vec(),
                var.iter().map(|v| (v + s2).sqrt()).collect(),
            ))
        }
        other => invalid(format!("no closed-form truth for generator {other}")),
    }
}

/// True conditional density of a scalar response (FD1–FD3).
pub fn true_density_1d(generator: &str, y: f64, x: &[f64]) -> Result<f64> {
    let phi = |v: f64, m: f64, s: f64| {
        let z = (v - m) / s;
        (-0.5 * z * z).exp() / (s * (2.0 * PI).sqrt())
    };
    match generator {
        "fd1" => Ok(0.5 * phi(y, -x[0], FD1_COMPONENT_SD) + 0.5 * phi(y, x[0], FD1_COMPONENT_SD)),
        "fd2" | "fd3" => {
            let (m, s) = fd_mean_sd(generator, x);
            Ok(phi(y, m, s))
        }
        other => invalid(format!("no scalar density for generator {other}")),
    }
}

/// Perturbation `N(0, n^{-β*/(β*+t*)} I_D)` added to responses.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PerturbSpec {
    pub beta_star: f64,
    pub t_star: f64,
}

impl PerturbSpec {
    pub fn variance(&self, n: usize) -> f64 {
        (n.max(1) as f64).powf(-self.beta_star / (self.beta_star + self.t_star))
    }
}

/// Adds seeded `N(0, v(n) I_D)` noise to every response; covariates are untouched.
pub fn perturb(ds: &Dataset, spec: &PerturbSpec, seed: u64) -> Result<Dataset> {
    if !(spec.beta_star > 0.0) || !(spec.t_star > 0.0) {
        return invalid("perturbation needs positive beta* and t*");
    }
    let v = spec.variance(ds.len());
    let sd = v.sqrt();
    let mut rng = rng_for(seed, stream::PERTURB);
    let mut y = ds.y.clone();
    for val in y.data_mut() {
        *val += sd * normal(&mut rng);
    }
    let mut meta = ds.meta.clone();
    meta.perturb_variance = Some(v);
    Ok(Dataset {
        x: ds.x.clone(),
        y,
        meta,
    })
}

/// Seeded permutation split with `⌊n·train/(train+test)⌋` training rows.
pub fn split(ds: &Dataset, ratio: (u32, u32), seed: u64) -> Result<(Dataset, Dataset)> {
    if ratio.0 == 0 || ratio.1 == 0 {
        return invalid(format!("split ratio parts must be positive, got {ratio:?}"));
    }
    let idx = split_indices(ds.len(), ratio, seed);
    Ok((ds.select(&idx.0), ds.select(&idx.1)))
}

/// The index sets used by [`split`].
pub fn split_indices(n: usize, ratio: (u32, u32), seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut rng = rng_for(seed, stream::SPLIT);
    let mut perm: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        perm.swap(i, j);
    }
    let n_train = (n as u128 * ratio.0 as u128 / (ratio.0 as u128 + ratio.1 as u128)) as usize;
    let test = perm.split_off(n_train);
    (perm, test)
}

const IDX_IMAGES: u32 = 0x0000_0803;
const IDX_LABELS: u32 = 0x0000_0801;

fn be_u32(bytes: &[u8], offset: usize, what: &str) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Idx {
            offset,
            msg: format!("truncated {what}"),
        })
}

/// Parses an IDX image file into `(count, rows, cols, pixels)`.
pub fn parse_idx_images(bytes: &[u8]) -> Result<(usize, usize, usize, &[u8])> {
    let magic = be_u32(bytes, 0, "magic number")?;
    if magic != IDX_IMAGES {
        return Err(Error::Idx {
            offset: 0,
            msg: format!("image magic 0x{magic:08x}, expected 0x{IDX_IMAGES:08x}"),
        });
    }
    let count = be_u32(bytes, 4, "image count")? as usize;
    let rows = be_u32(bytes, 8, "row count")? as usize;
    let cols = be_u32(bytes, 12, "column count")? as usize;
    let need = count * rows * cols;
    let payload = &bytes[16..];
    if payload.len() < need {
        return Err(Error::Idx {
            offset: 16 + payload.len(),
            msg: format!("truncated pixel payload: need {need} bytes, have {}", payload.len()),
        });
    }
    Ok((count, rows, cols, &payload[..need]))
}

/// Parses an IDX label file.
pub fn parse_idx_labels(bytes: &[u8]) -> Result<&[u8]> {
    let magic = be_u32(bytes, 0, "magic number")?;
    if magic != IDX_LABELS {
        return Err(Error::Idx {
            offset: 0,
            msg: format!("label magic 0x{magic:08x}, expected 0x{IDX_LABELS:08x}"),
        });
    }
    let count = be_u32(bytes, 4, "label count")? as usize;
    let payload = &bytes[8..];
    if payload.len() < count {
        return Err(Error::Idx {
            offset: 8 + payload.len(),
            msg: format!("truncated labels: need {count} bytes, have {}", payload.len()),
        });
    }
    Ok(&payload[..count])
}

/// Builds a dataset with `X = one-hot(label)` (p = 10) and `Y = pixels / 255`.
pub fn mnist_from_bytes(images: &[u8], labels: &[u8]) -> Result<Dataset> {
    let (count, rows, cols, pixels) = parse_idx_images(images)?;
    let labels = parse_idx_labels(labels)?;
    if labels.len() != count {
        return Err(Error::Idx {
            offset: 4,
            msg: format!("{count} images but {} labels", labels.len()),
        });
    }
    if count == 0 {
        return invalid("IDX files contain no images");
    }
    let d = rows * cols;
    let mut x = Mat::zeros(count, 10);
    for (i, &l) in labels.iter().enumerate() {
        if l > 9 {
            return Err(Error::Idx {
                offset: 8 + i,
                msg: format!("label {l} out of range 0..=9"),
            });
        }
        x.set(i, l as usize, 1.0);
    }
    let y = Mat::new(count, d, pixels.iter().map(|&p| p as f64 / 255.0).collect())?;
    Dataset::new(
        x,
        y,
        DatasetMeta {
            generator: "mnist".into(),
            ..Default::default()
        },
    )
}

/// Reads MNIST IDX image and label files.
pub fn load_mnist_idx(images_path: &Path, labels_path: &Path) -> Result<Dataset> {
    let images = std::fs::read(images_path)?;
    let labels = std::fs::read(labels_path)?;
    mnist_from_bytes(&images, &labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn fd1_truth() {
        let (m, s) = true_mean_sd("fd1", &[2.0], 0.0).unwrap();
        assert_eq!(m, vec![0.0]);
        assert!((s[0] - (4.0f64 + 0.0625).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn fd1_sign_balance_and_mean() {
        let ds = gen_fd1(100_000, 5).unwrap();
        let pos = (0..ds.len())
            .filter(|&i| ds.y.get(i, 0) * ds.x.get(i, 0) > 0.0)
            .count() as f64
            / ds.len() as f64;
        assert!((pos - 0.5).abs() < 0.01, "{pos}");
        let mean = ds.y.sum() / ds.len() as f64;
        assert!(mean.abs() < 0.05, "{mean}");
    }

    #[test]
    fn fd2_residual_sd() {
        let ds = gen_fd2(100_000, 9).unwrap();
        let n = ds.len() as f64;
        let res: Vec<f64> = (0..ds.len())
            .map(|i| ds.y.get(i, 0) - true_mean_sd("fd2", ds.x.row(i), 0.0).unwrap().0[0])
            .collect();
        let mean = res.iter().sum::<f64>() / n;
        let sd = (res.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        assert!((sd - 1.0).abs() < 0.02, "{sd}");
    }

    #[test]
    fn fd3_shapes() {
        let ds = gen_fd3(10, 1).unwrap();
        assert_eq!((ds.covariate_dim(), ds.response_dim()), (5, 1));
    }

    #[test]
    fn curves_by_substitution() {
        assert_eq!(m1_curve(0.0, 0.2), [0.0, 0.5]);
        let p = m2_curve(PI / 2.0, 0.8);
        assert!(p[0].abs() < 1e-15 && (p[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn noise_free_manifolds_lie_on_curves() {
        let m2 = gen_m2(100_000, 0.0, 3).unwrap();
        let u = m2.meta.raw_u.as_ref().unwrap();
        for i in 0..m2.len() {
            let (a, b) = (m2.y.get(i, 0), m2.y.get(i, 1));
            let r = if u[i] < 0.5 {
                a * a + 4.0 * b * b - 1.0
            } else {
                a * a / 4.0 + b * b - 1.0
            };
            assert!(r.abs() < 1e-12);
            assert_eq!(m2.x.get(i, 0), if u[i] > 0.5 { 1.0 } else { 0.0 });
        }
        let m1 = gen_m1(10_000, 0.0, 3).unwrap();
        let u = m1.meta.raw_u.as_ref().unwrap();
        for i in 0..m1.len() {
            let (a, b) = (m1.y.get(i, 0), m1.y.get(i, 1));
            let r = if u[i] < 0.5 {
                (1.0 - a).powi(2) + (0.5 - b).powi(2) - 1.0
            } else {
                a * a + b * b - 1.0
            };
            assert!(r.abs() < 1e-12);
            // upper moon has nonnegative y2, lower moon stays below 0.5
            if u[i] >= 0.5 {
                assert!(b >= 0.0);
            } else {
                assert!(b <= 0.5);
            }
        }
    }

    #[test]
    fn manifold_truth_moments_match_samples() {
        for which in ["m1", "m2"] {
            for c in [0.0, 1.0] {
                let s = manifold_truth_samples(which, c, 200_000, 1).unwrap();
                let (mean, sd) = true_mean_sd(which, &[c], 0.0).unwrap();
                for d in 0..2 {
                    let col: Vec<f64> = (0..s.rows()).map(|i| s.get(i, d)).collect();
                    let m = col.iter().sum::<f64>() / col.len() as f64;
                    let v = col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / col.len() as f64;
                    assert!((m - mean[d]).abs() < 0.01, "{which} {c} {d}");
                    assert!((v.sqrt() - sd[d]).abs() < 0.01, "{which} {c} {d}");
                }
            }
        }
    }

    #[test]
    fn perturb_variance_formula() {
        let spec = PerturbSpec {
            beta_star: 1.0,
            t_star: 1.0,
        };
        assert!((spec.variance(10_000) - 0.01).abs() < 1e-15);
        assert_eq!(spec.variance(1), 1.0);
    }

    #[test]
    fn perturb_noise_scale_and_x_untouched() {
        let ds = gen_m1(1_000_000, 0.1, 2).unwrap();
        let spec = PerturbSpec {
            beta_star: 1.0,
            t_star: 1.0,
        };
        let p = perturb(&ds, &spec, 2).unwrap();
        assert_eq!(p.x, ds.x);
        let v = spec.variance(ds.len());
        assert_eq!(p.meta.perturb_variance, Some(v));
        for d in 0..2 {
            let diffs: Vec<f64> = (0..ds.len()).map(|i| p.y.get(i, d) - ds.y.get(i, d)).collect();
            let n = diffs.len() as f64;
            let m = diffs.iter().sum::<f64>() / n;
            let sd = (diffs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
            assert!((sd / v.sqrt() - 1.0).abs() < 0.005, "{sd} vs {}", v.sqrt());
        }
    }

    #[test]
    fn split_sizes() {
        let ds = gen_fd1(5000, 1).unwrap();
        let (a, b) = split(&ds, (4, 1), 1).unwrap();
        assert_eq!((a.len(), b.len()), (4000, 1000));
        let ds = gen_fd1(5, 1).unwrap();
        let (a, b) = split(&ds, (4, 1), 1).unwrap();
        assert_eq!((a.len(), b.len()), (4, 1));
        assert!(split(&ds, (0, 1), 1).is_err());
    }

    #[test]
    fn generators_are_pure() {
        assert_eq!(gen_fd3(50, 4).unwrap(), gen_fd3(50, 4).unwrap());
        assert_eq!(gen_m2(50, 0.2, 4).unwrap(), gen_m2(50, 0.2, 4).unwrap());
        assert_ne!(gen_fd1(50, 4).unwrap(), gen_fd1(50, 5).unwrap());
    }

    #[test]
    fn csv_export() {
        let ds = Dataset::new(
            Mat::from_rows(&[[1.0]]),
            Mat::from_rows(&[[0.1, -2.0]]),
            DatasetMeta::default(),
        )
        .unwrap();
        let csv = ds.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("x1,y1,y2"));
        let vals: Vec<f64> = lines.next().unwrap().split(',').map(|v| v.parse().unwrap()).collect();
        assert_eq!(vals, vec![1.0, 0.1, -2.0]);
    }

    fn idx_images(count: u32, set: &[(usize, usize, usize, u8)]) -> Vec<u8> {
        let mut b = Vec::new();
        for v in [IDX_IMAGES, count, 28, 28] {
            b.extend_from_slice(&v.to_be_bytes());
        }
        let mut px = vec![0u8; count as usize * 784];
        for &(img, r, c, v) in set {
            px[img * 784 + r * 28 + c] = v;
        }
        b.extend(px);
        b
    }

    fn idx_labels(labels: &[u8]) -> Vec<u8> {
        let mut b = Vec::new();
        b.extend_from_slice(&IDX_LABELS.to_be_bytes());
        b.extend_from_slice(&(labels.len() as u32).to_be_bytes());
        b.extend_from_slice(labels);
        b
    }

    #[test]
    fn mnist_fixture() {
        let ds = mnist_from_bytes(&idx_images(2, &[]), &idx_labels(&[3, 7])).unwrap();
        let mut e3 = vec![0.0; 10];
        e3[3] = 1.0;
        let mut e7 = vec![0.0; 10];
        e7[7] = 1.0;
        assert_eq!(ds.x.row(0), &e3[..]);
        assert_eq!(ds.x.row(1), &e7[..]);
        assert_eq!(ds.y.max_abs(), 0.0);
        assert_eq!(ds.response_dim(), 784);

        let ds = mnist_from_bytes(&idx_images(1, &[(0, 0, 1, 255)]), &idx_labels(&[0])).unwrap();
        assert_eq!(ds.y.get(0, 1), 1.0);
        assert_eq!(ds.y.sum(), 1.0);
    }

    #[test]
    fn mnist_errors() {
        let mut bad = idx_images(1, &[]);
        bad[3] = 0x02;
        assert!(matches!(
            mnist_from_bytes(&bad, &idx_labels(&[1])),
            Err(Error::Idx { offset: 0, .. })
        ));
        let mut short = idx_images(2, &[]);
        short.truncate(16 + 784 + 10);
        let err = mnist_from_bytes(&short, &idx_labels(&[1, 2])).unwrap_err();
        assert!(matches!(err, Error::Idx { offset, .. } if offset == 16 + 794));
        assert!(mnist_from_bytes(&idx_images(2, &[]), &idx_labels(&[1])).is_err());
        assert!(mnist_from_bytes(&idx_images(1, &[]), &idx_labels(&[12])).is_err());
    }

    proptest! {
        #[test]
        fn split_partitions(n in 1usize..300, a in 1u32..6, b in 1u32..6, seed in 0u64..100) {
            let (tr, te) = split_indices(n, (a, b), seed);
            prop_assert_eq!(tr.len(), n * a as usize / (a + b) as usize);
            let mut all: Vec<usize> = tr.iter().chain(&te).copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
        }
    }
}
