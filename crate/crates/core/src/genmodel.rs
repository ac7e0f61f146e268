//! Conditional generator `g(z, x)` with isotropic Gaussian noise, fitted by
//! maximising the conditional-VAE lower bound on `Σ log p_{g,σ}(Y_j | X_j)`.
//!
//! The model density is `p_{g,σ}(y|x) = ∫ φ_σ(y − g(z, x)) dN(0, I)(z)`.
//! Training uses a diagonal Gaussian encoder `q_φ(z | y, x)`, the closed-form
//! KL to the standard normal prior and single-sample (by default)
//! reparameterised reconstruction terms. `σ` is a scalar constrained to
//! `[σ_min, σ_max]` through a logistic map.

use std::f64::consts::PI;

use rand::Rng as _;
use rand_distr::StandardNormal;

use crate::autodiff::{logsumexp, NodeId, Tape};
use crate::error::{invalid, Error, Result};
use crate::mat::Mat;
use crate::networks::{init_mlp, LayerWidths, MlpNodes, MlpParams, SparsityMask};
use crate::optim::{Adam, AdamConfig};
use crate::rng::{derive_seed, rng_for, stream, Rng};
use crate::synthdata::Dataset;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Closed interval for the noise scale.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SigmaBounds {
    pub min: f64,
    pub max: f64,
}

impl SigmaBounds {
    pub fn new(min: f64, max: f64) -> Result<Self> {
        if !(min > 0.0) || !(min <= max) || !max.is_finite() {
            return invalid(format!(
                "sigma bounds need 0 < min <= max < inf, got [{min}, {max}]"
            ));
        }
        Ok(Self { min, max })
    }
}

fn logistic(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// `σ = σ_min + (σ_max − σ_min) · logistic(θ)`.
pub fn sigma_value(theta: f64, bounds: SigmaBounds) -> Result<f64> {
    let b = SigmaBounds::new(bounds.min, bounds.max)?;
    Ok(b.min + (b.max - b.min) * logistic(theta))
}

/// Inverse of [`sigma_value`] for a target strictly inside the bounds.
pub fn sigma_raw_for(sigma: f64, bounds: SigmaBounds) -> Result<f64> {
    if !(sigma > bounds.min && sigma < bounds.max) {
        return invalid(format!(
            "sigma {sigma} must lie strictly inside [{}, {}]",
            bounds.min, bounds.max
        ));
    }
    let p = (sigma - bounds.min) / (bounds.max - bounds.min);
    Ok((p / (1.0 - p)).ln())
}

/// `KL(N(μ, diag e^{logvar}) ‖ N(0, I))`.
pub fn kl_diag_gauss(mu: &[f64], logvar: &[f64]) -> f64 {
    0.5 * mu
        .iter()
        .zip(logvar)
        .map(|(m, lv)| m * m + lv.exp() - 1.0 - lv)
        .sum::<f64>()
}

/// Encoder/decoder widths and optional per-network sparsity.
#[derive(Clone, Debug, PartialEq)]
pub struct CvaeArch {
    /// `(D + p, …, 𝔡)`, shared by the mean and log-variance encoders.
    pub encoder: LayerWidths,
    /// `(𝔡 + p, …, D)`.
    pub decoder: LayerWidths,
    /// Number of kept weights per network, if sparse.
    pub sparsity: Option<usize>,
    /// Clamp `K` applied to the decoder at sampling time.
    pub output_bound: f64,
}

impl CvaeArch {
    pub fn latent_dim(&self) -> usize {
        self.encoder.output()
    }

    /// Checks the widths against response dimension `D` and covariate dimension `p`.
    pub fn validate(&self, response_dim: usize, covariate_dim: usize) -> Result<()> {
        let d = self.latent_dim();
        if self.encoder.input() != response_dim + covariate_dim {
            return invalid(format!(
                "encoder input width {} != D + p = {}",
                self.encoder.input(),
                response_dim + covariate_dim
            ));
        }
        if self.decoder.input() != d + covariate_dim {
            return invalid(format!(
                "decoder input width {} != latent + p = {}",
                self.decoder.input(),
                d + covariate_dim
            ));
        }
        if self.decoder.output() != response_dim {
            return invalid(format!(
                "decoder output width {} != D = {response_dim}",
                self.decoder.output()
            ));
        }
        if !(self.output_bound > 0.0) {
            return invalid("output bound K must be positive");
        }
        Ok(())
    }
}

/// Encoder pair, decoder and constrained noise scale.
#[derive(Clone, Debug, PartialEq)]
pub struct CvaeModel {
    pub encoder_mu: MlpParams,
    pub encoder_logvar: MlpParams,
    pub decoder: MlpParams,
    pub sigma_raw: f64,
    pub sigma_bounds: SigmaBounds,
    pub latent_dim: usize,
}

/// Per-network masks of a sparse model.
#[derive(Clone, Debug)]
pub struct CvaeMasks {
    pub encoder_mu: SparsityMask,
    pub encoder_logvar: SparsityMask,
    pub decoder: SparsityMask,
}

impl CvaeMasks {
    pub fn apply(&self, model: &mut CvaeModel) -> Result<()> {
        self.encoder_mu.apply_in_place(&mut model.encoder_mu)?;
        self.encoder_logvar.apply_in_place(&mut model.encoder_logvar)?;
        self.decoder.apply_in_place(&mut model.decoder)
    }
}

/// Tape handles produced by [`elbo_batch`].
#[derive(Clone, Debug)]
pub struct ElboNodes {
    pub elbo: NodeId,
    pub encoder_mu: MlpNodes,
    pub encoder_logvar: MlpNodes,
    pub decoder: MlpNodes,
    pub sigma_raw: NodeId,
}

impl ElboNodes {
    /// Parameter nodes in the order of [`CvaeModel::tensors_mut`].
    pub fn param_ids(&self) -> Vec<NodeId> {
        self.encoder_mu
            .ids()
            .chain(self.encoder_logvar.ids())
            .chain(self.decoder.ids())
            .chain(std::iter::once(self.sigma_raw))
            .collect()
    }
}

impl CvaeModel {
    /// He-uniform networks, `σ` at the middle of its bounds.
    pub fn init(arch: &CvaeArch, response_dim: usize, covariate_dim: usize, bounds: SigmaBounds, seed: u64) -> Result<Self> {
        arch.validate(response_dim, covariate_dim)?;
        let bounds = SigmaBounds::new(bounds.min, bounds.max)?;
        Ok(Self {
            encoder_mu: init_mlp(&arch.encoder, derive_seed(seed, 0)),
            encoder_logvar: init_mlp(&arch.encoder, derive_seed(seed, 1)),
            decoder: init_mlp(&arch.decoder, derive_seed(seed, 2)).with_output_bound(arch.output_bound),
            sigma_raw: 0.0,
            sigma_bounds: bounds,
            latent_dim: arch.latent_dim(),
        })
    }

    pub fn response_dim(&self) -> usize {
        self.decoder.widths().output()
    }

    pub fn covariate_dim(&self) -> usize {
        self.decoder.widths().input() - self.latent_dim
    }

    pub fn sigma(&self) -> f64 {
        self.sigma_bounds.min + (self.sigma_bounds.max - self.sigma_bounds.min) * logistic(self.sigma_raw)
    }

    /// Trainable tensors: encoder-μ, encoder-logvar, decoder, then `σ_raw`.
    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        out.extend(self.encoder_mu.tensors_mut().map(|m| m.data_mut()));
        out.extend(self.encoder_logvar.tensors_mut().map(|m| m.data_mut()));
        out.extend(self.decoder.tensors_mut().map(|m| m.data_mut()));
        out.push(std::slice::from_mut(&mut self.sigma_raw));
        out
    }

    fn tensor_sizes(&self) -> Vec<usize> {
        self.encoder_mu
            .tensors()
            .chain(self.encoder_logvar.tensors())
            .chain(self.decoder.tensors())
            .map(Mat::len)
            .chain(std::iter::once(1))
            .collect()
    }

    /// Clamped decoder output for latent rows `z` at covariate `x`.
    pub fn decode(&self, z: &Mat, x: &[f64]) -> Result<Mat> {
        if x.len() != self.covariate_dim() {
            return invalid(format!(
                "covariate has {} entries, model expects {}",
                x.len(),
                self.covariate_dim()
            ));
        }
        let xs = Mat::from_fn(z.rows(), x.len(), |_, j| x[j]);
        self.decoder.eval(&z.hcat(&xs)?, true)
    }

    fn latent_draws(&self, m: usize, rng: &mut Rng) -> Mat {
        Mat::from_fn(m, self.latent_dim, |_, _| rng.sample(StandardNormal))
    }

    /// `m` draws from `p_{g,σ}(·|x)` (or from the pushforward of `g` when
    /// `add_noise` is false).
    pub fn sample_conditional(&self, x: &[f64], m: usize, seed: u64, add_noise: bool) -> Result<Mat> {
        if m == 0 {
            return invalid("need at least one sample");
        }
        let mut rng = rng_for(seed, stream::SAMPLE);
        let z = self.latent_draws(m, &mut rng);
        let mut out = self.decode(&z, x)?;
        if add_noise {
            let s = self.sigma();
            for v in out.data_mut() {
                let e: f64 = rng.sample(StandardNormal);
                *v += s * e;
            }
        }
        Ok(out)
    }

    /// The Monte-Carlo mixture `(1/m) Σ φ_σ(· − g(z_i, x))` behind [`Self::log_density_mc`].
    pub fn conditional_mixture(&self, x: &[f64], m: usize, seed: u64) -> Result<GaussianMixture> {
        if m == 0 {
            return invalid("need at least one latent draw");
        }
        let mut rng = rng_for(seed, stream::SAMPLE);
        let z = self.latent_draws(m, &mut rng);
        Ok(GaussianMixture {
            centers: self.decode(&z, x)?,
            sigma: self.sigma(),
        })
    }

    /// `log[(1/m) Σ_i φ_σ(y − g(z_i, x))]` with seeded `z_i ~ N(0, I)`.
    pub fn log_density_mc(&self, y: &[f64], x: &[f64], m: usize, seed: u64) -> Result<f64> {
        self.conditional_mixture(x, m, seed)?.log_density(y)
    }
}

/// Equal-weight isotropic Gaussian mixture.
#[derive(Clone, Debug)]
pub struct GaussianMixture {
    pub centers: Mat,
    pub sigma: f64,
}

impl GaussianMixture {
    pub fn log_density(&self, y: &[f64]) -> Result<f64> {
        let d = self.centers.cols();
        if y.len() != d {
            return invalid(format!("response has {} entries, expected {d}", y.len()));
        }
        let s2 = self.sigma * self.sigma;
        let norm = -0.5 * d as f64 * (LN_2PI + s2.ln());
        let terms: Vec<f64> = (0..self.centers.rows())
            .map(|i| {
                let ss: f64 = self
                    .centers
                    .row(i)
                    .iter()
                    .zip(y)
                    .map(|(c, v)| (v - c) * (v - c))
                    .sum();
                -0.5 * ss / s2
            })
            .collect();
        Ok(norm + logsumexp(&terms) - (terms.len() as f64).ln())
    }

    pub fn density(&self, y: &[f64]) -> Result<f64> {
        Ok(self.log_density(y)?.exp())
    }
}

fn sigma_nodes(tape: &mut Tape, theta: NodeId, bounds: SigmaBounds) -> Result<(NodeId, NodeId)> {
    // logistic(θ) = exp(θ − log(1 + e^θ))
    let zero = tape.leaf(Mat::scalar(0.0));
    let pair = tape.concat_cols(zero, theta)?;
    let softplus = tape.logsumexp_rows(pair)?;
    let log_p = tape.sub(theta, softplus)?;
    let p = tape.exp(log_p)?;
    let w = tape.leaf(Mat::scalar(bounds.max - bounds.min));
    let b = tape.leaf(Mat::scalar(bounds.min));
    let sigma = tape.affine(p, w, b)?;
    let log_sigma = tape.log(sigma)?;
    Ok((sigma, log_sigma))
}

/// Records the batch-mean lower bound
/// `mean_j [ E_ξ log φ_σ(y_j − g(μ_j + e^{lv_j/2} ⊙ ξ, x_j)) − KL_j ]`
/// where the expectation is the average over the supplied draws of `ξ`.
///
/// `noise` holds one `batch × 𝔡` matrix per draw.
pub fn elbo_batch(model: &CvaeModel, x: &Mat, y: &Mat, noise: &[Mat], tape: &mut Tape) -> Result<ElboNodes> {
    let n = x.rows();
    if y.rows() != n || n == 0 {
        return Err(Error::Shape {
            op: "elbo_batch",
            left: x.shape(),
            right: y.shape(),
        });
    }
    if noise.is_empty() {
        return invalid("need at least one reparameterisation draw");
    }
    for xi in noise {
        if xi.shape() != (n, model.latent_dim) {
            return Err(Error::Shape {
                op: "elbo_batch noise",
                left: (n, model.latent_dim),
                right: xi.shape(),
            });
        }
    }
    let d = y.cols();

    let enc_mu = model.encoder_mu.bind(tape);
    let enc_lv = model.encoder_logvar.bind(tape);
    let dec = model.decoder.bind(tape);
    let theta = tape.leaf(Mat::scalar(model.sigma_raw));

    let xn = tape.leaf(x.clone());
    let yn = tape.leaf(y.clone());
    let enc_in = tape.concat_cols(yn, xn)?;
    let mu = model.encoder_mu.forward_nodes(&enc_mu, tape, enc_in, false)?;
    let lv = model.encoder_logvar.forward_nodes(&enc_lv, tape, enc_in, false)?;
    let half_lv = tape.scale(lv, 0.5)?;
    let std = tape.exp(half_lv)?;

    let mut ss_total: Option<NodeId> = None;
    for xi in noise {
        let xi = tape.leaf(xi.clone());
        let spread = tape.hadamard(std, xi)?;
        let z = tape.add(mu, spread)?;
        let dec_in = tape.concat_cols(z, xn)?;
        let g = model.decoder.forward_nodes(&dec, tape, dec_in, false)?;
        let r = tape.sub(yn, g)?;
        let r2 = tape.square(r)?;
        let ss = tape.sum(r2)?;
        ss_total = Some(match ss_total {
            Some(acc) => tape.add(acc, ss)?,
            None => ss,
        });
    }
    let ss = tape.scale(ss_total.expect("nonempty noise"), 1.0 / noise.len() as f64)?;

    let (_, log_sigma) = sigma_nodes(tape, theta, model.sigma_bounds)?;
    let neg2 = tape.scale(log_sigma, -2.0)?;
    let inv_var = tape.exp(neg2)?;
    let quad = tape.hadamard(ss, inv_var)?;
    let quad = tape.scale(quad, -0.5)?;
    let norm = tape.scale(log_sigma, -((n * d) as f64))?;
    let loglik = tape.add(quad, norm)?;

    let mu2 = tape.square(mu)?;
    let mu2 = tape.sum(mu2)?;
    let var = tape.exp(lv)?;
    let var = tape.sum(var)?;
    let lv_sum = tape.sum(lv)?;
    let kl = tape.add(mu2, var)?;
    let kl = tape.sub(kl, lv_sum)?;
    let kl = tape.scale(kl, 0.5)?;

    let total = tape.sub(loglik, kl)?;
    // constants: −nD/2 log 2π from the likelihood, +n𝔡/2 from the KL
    let constant = -0.5 * (n * d) as f64 * LN_2PI + 0.5 * (n * model.latent_dim) as f64;
    let c = tape.leaf(Mat::scalar(constant));
    let total = tape.add(total, c)?;
    let elbo = tape.scale(total, 1.0 / n as f64)?;

    Ok(ElboNodes {
        elbo,
        encoder_mu: enc_mu,
        encoder_logvar: enc_lv,
        decoder: dec,
        sigma_raw: theta,
    })
}

/// Optimisation settings.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
    pub mc_latent_draws_per_item: usize,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 64,
            learning_rate: 1e-3,
            epochs: 300,
            seed: 0,
            mc_latent_draws_per_item: 1,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return invalid("batch_size must be >= 1");
        }
        if !(self.learning_rate > 0.0) {
            return invalid("learning_rate must be > 0");
        }
        if self.epochs == 0 {
            return invalid("epochs must be >= 1");
        }
        if self.mc_latent_draws_per_item == 0 {
            return invalid("mc_latent_draws_per_item must be >= 1");
        }
        Ok(())
    }
}

/// One row of the loss trace.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceRow {
    pub epoch: usize,
    pub mean_neg_elbo: f64,
    pub sigma: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutput {
    pub model: CvaeModel,
    pub trace: Vec<TraceRow>,
}

/// Builds the initial model and masks that [`train`] starts from.
pub fn init_for_training(
    ds: &Dataset,
    arch: &CvaeArch,
    seed: u64,
    bounds: SigmaBounds,
) -> Result<(CvaeModel, Option<CvaeMasks>)> {
    let mut model = CvaeModel::init(arch, ds.response_dim(), ds.covariate_dim(), bounds, seed)?;
    let masks = match arch.sparsity {
        Some(s) => {
            let m = CvaeMasks {
                encoder_mu: SparsityMask::random(&arch.encoder, s, derive_seed(seed, 10))?,
                encoder_logvar: SparsityMask::random(&arch.encoder, s, derive_seed(seed, 11))?,
                decoder: SparsityMask::random(&arch.decoder, s, derive_seed(seed, 12))?,
            };
            m.apply(&mut model)?;
            Some(m)
        }
        None => None,
    };
    Ok((model, masks))
}

/// Fits the model with Adam on minibatches of the negative bound.
pub fn train(ds: &Dataset, arch: &CvaeArch, config: &TrainConfig, bounds: SigmaBounds) -> Result<TrainOutput> {
    train_with(ds, arch, config, bounds, |_| {})
}

/// [`train`] with a callback invoked after every epoch.
pub fn train_with(
    ds: &Dataset,
    arch: &CvaeArch,
    config: &TrainConfig,
    bounds: SigmaBounds,
    mut on_epoch: impl FnMut(&TraceRow),
) -> Result<TrainOutput> {
    config.validate()?;
    if ds.is_empty() {
        return invalid("training set is empty");
    }
    let (mut model, masks) = init_for_training(ds, arch, config.seed, bounds)?;
    let mut adam = Adam::new(
        AdamConfig {
            learning_rate: config.learning_rate,
            beta1: config.adam_beta1,
            beta2: config.adam_beta2,
            eps: config.adam_eps,
        },
        model.tensor_sizes(),
    );
    let mut shuffle = rng_for(config.seed, stream::SHUFFLE);
    let mut reparam = rng_for(config.seed, stream::REPARAM);
    let n = ds.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut trace = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        for i in (1..n).rev() {
            let j = shuffle.random_range(0..=i);
            order.swap(i, j);
        }
        let mut loss_sum = 0.0;
        for (batch, idx) in order.chunks(config.batch_size).enumerate() {
            let xb = ds.x.select_rows(idx);
            let yb = ds.y.select_rows(idx);
            let noise: Vec<Mat> = (0..config.mc_latent_draws_per_item)
                .map(|_| Mat::from_fn(idx.len(), model.latent_dim, |_, _| reparam.sample(StandardNormal)))
                .collect();
            let mut tape = Tape::new();
            let nodes = elbo_batch(&model, &xb, &yb, &noise, &mut tape)?;
            let loss = tape.scale(nodes.elbo, -1.0)?;
            let value = tape.value(loss).item();
            if !value.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch });
            }
            let grads = tape.backward(loss)?;
            let grad_refs: Vec<&[f64]> = nodes.param_ids().into_iter().map(|id| grads.get(id).data()).collect();
            if grad_refs.iter().any(|g| g.iter().any(|v| !v.is_finite())) {
                return Err(Error::NonFiniteLoss { epoch, batch });
            }
            adam.step(&mut model.tensors_mut(), &grad_refs);
            if let Some(m) = &masks {
                m.apply(&mut model)?;
            }
            loss_sum += value * idx.len() as f64;
        }
        let row = TraceRow {
            epoch,
            mean_neg_elbo: loss_sum / n as f64,
            sigma: model.sigma(),
        };
        on_epoch(&row);
        trace.push(row);
    }
    Ok(TrainOutput { model, trace })
}

/// Log-density of `N(c, σ² I)` at `y`; convenience for callers and tests.
pub fn gaussian_log_density(y: &[f64], center: &[f64], sigma: f64) -> f64 {
    let ss: f64 = y.iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum();
    -0.5 * y.len() as f64 * (2.0 * PI * sigma * sigma).ln() - 0.5 * ss / (sigma * sigma)
}

fn hidden_preacts(net: &MlpParams, input: &Mat) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    let mut h = input.clone();
    for j in 0..net.weights.len() - 1 {
        let mut pre = h.matmul_t(&net.weights[j])?;
        for i in 0..pre.rows() {
            for (v, s) in pre.row_mut(i).iter_mut().zip(net.shifts[j].data()) {
                *v -= s;
            }
        }
        out.extend_from_slice(pre.data());
        h = pre.map(|v| v.max(0.0));
    }
    Ok(out)
}

/// Smallest distance of any hidden pre-activation in the lower-bound graph
/// from the ReLU kink, for one noise draw.
///
/// Finite differences are only meaningful when this exceeds the step size.
pub fn relu_margin(model: &CvaeModel, x: &Mat, y: &Mat, noise: &Mat) -> Result<f64> {
    let enc_in = y.hcat(x)?;
    let mu = model.encoder_mu.eval(&enc_in, false)?;
    let lv = model.encoder_logvar.eval(&enc_in, false)?;
    let z = Mat::from_fn(mu.rows(), mu.cols(), |i, j| {
        mu.get(i, j) + (0.5 * lv.get(i, j)).exp() * noise.get(i, j)
    });
    let dec_in = z.hcat(x)?;
    let mut margin = f64::INFINITY;
    for v in hidden_preacts(&model.encoder_mu, &enc_in)?
        .into_iter()
        .chain(hidden_preacts(&model.encoder_logvar, &enc_in)?)
        .chain(hidden_preacts(&model.decoder, &dec_in)?)
    {
        margin = margin.min(v.abs());
    }
    Ok(margin)
}

/// Largest relative error `|a - f| / (|a| + |f| + 1e-12)` between the taped
/// gradient of [`elbo_batch`] and central differences with step `h`, over
/// every parameter entry including the raw noise scale.
pub fn elbo_grad_check(model: &CvaeModel, x: &Mat, y: &Mat, noise: &[Mat], h: f64) -> Result<f64> {
    let eval = |m: &CvaeModel| -> Result<f64> {
        let mut t = Tape::new();
        let n = elbo_batch(m, x, y, noise, &mut t)?;
        Ok(t.value(n.elbo).item())
    };
    let mut tape = Tape::new();
    let nodes = elbo_batch(model, x, y, noise, &mut tape)?;
    let grads = tape.backward(nodes.elbo)?;
    let analytic: Vec<Vec<f64>> = nodes.param_ids().iter().map(|id| grads.get(*id).data().to_vec()).collect();
    let mut worst: f64 = 0.0;
    let mut work = model.clone();
    for (k, a_k) in analytic.iter().enumerate() {
        for (c, a) in a_k.iter().enumerate() {
            let orig = work.tensors_mut()[k][c];
            work.tensors_mut()[k][c] = orig + h;
            let up = eval(&work)?;
            work.tensors_mut()[k][c] = orig - h;
            let down = eval(&work)?;
            work.tensors_mut()[k][c] = orig;
            let num = (up - down) / (2.0 * h);
            worst = worst.max((a - num).abs() / (a.abs() + num.abs() + 1e-12));
        }
    }
    Ok(worst)
}
