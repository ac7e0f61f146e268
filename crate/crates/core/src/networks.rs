//! ReLU networks of the sparse and fully connected sieve classes.
//!
//! A network with widths `(r_0, …, r_{L+1})` computes
//!
//! ```text
//! x ↦ W_L ρ_{v_L} W_{L-1} … ρ_{v_1} W_0 x + b,    ρ_v(u) = max(u - v, 0)
//! ```
//!
//! with trainable shifts `v_j` on every hidden layer and an additive bias `b`
//! on the output layer. The output can be hard-clamped to `[-K, K]`.

use rand::Rng as _;

use crate::autodiff::{NodeId, Tape};
use crate::error::{invalid, Error, Result};
use crate::mat::Mat;
use crate::rng::{rng_for, stream};

/// Node counts `(r_0, …, r_{L+1})`; `L` is the number of hidden layers.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LayerWidths(Vec<usize>);

impl LayerWidths {
    pub fn new(widths: impl Into<Vec<usize>>) -> Result<Self> {
        let widths = widths.into();
        if widths.len() < 2 {
            return invalid(format!("need at least input and output widths, got {widths:?}"));
        }
        if widths.iter().any(|&w| w == 0) {
            return invalid(format!("widths must be >= 1, got {widths:?}"));
        }
        Ok(Self(widths))
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn hidden_layers(&self) -> usize {
        self.0.len() - 2
    }

    pub fn input(&self) -> usize {
        self.0[0]
    }

    pub fn output(&self) -> usize {
        *self.0.last().unwrap()
    }
}

/// Weights and shifts of a ReLU network.
///
/// `weights[j]` is `r_{j+1} × r_j`. `shifts[j]` is `1 × r_{j+1}`: for hidden
/// layers it is the ReLU shift `v_{j+1}`, for the last layer it is the
/// output bias.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpParams {
    widths: LayerWidths,
    pub weights: Vec<Mat>,
    pub shifts: Vec<Mat>,
    /// `B`; `None` means unbounded. Reported, never projected.
    pub weight_bound: Option<f64>,
    /// `K`, applied by clamped forwards.
    pub output_bound: f64,
}

/// Stored and nonzero parameter counts.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ParamCount {
    pub total: usize,
    pub nonzero: usize,
}

/// Tape handles for one bound network.
#[derive(Clone, Debug)]
pub struct MlpNodes {
    pub weights: Vec<NodeId>,
    pub shifts: Vec<NodeId>,
}

impl MlpNodes {
    /// Parameter node ids in the same order as [`MlpParams::tensors`].
    pub fn ids(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.weights
            .iter()
            .zip(&self.shifts)
            .flat_map(|(w, s)| [*w, *s])
    }
}

/// He-uniform initialisation: weights of layer `j` uniform on `±√(6/r_j)`, shifts zero.
pub fn init_mlp(widths: &LayerWidths, seed: u64) -> MlpParams {
    let mut rng = rng_for(seed, stream::INIT);
    let w = widths.as_slice();
    let mut weights = Vec::with_capacity(w.len() - 1);
    let mut shifts = Vec::with_capacity(w.len() - 1);
    for j in 0..w.len() - 1 {
        let bound = (6.0 / w[j] as f64).sqrt();
        weights.push(Mat::from_fn(w[j + 1], w[j], |_, _| {
            rng.random_range(-bound..bound)
        }));
        shifts.push(Mat::zeros(1, w[j + 1]));
    }
    MlpParams {
        widths: widths.clone(),
        weights,
        shifts,
        weight_bound: None,
        output_bound: f64::INFINITY,
    }
}

impl MlpParams {
    /// Assembles parameters from explicit tensors, validating shapes.
    pub fn from_parts(
        widths: LayerWidths,
        weights: Vec<Mat>,
        shifts: Vec<Mat>,
        weight_bound: Option<f64>,
        output_bound: f64,
    ) -> Result<Self> {
        let w = widths.as_slice();
        if weights.len() != w.len() - 1 || shifts.len() != w.len() - 1 {
            return invalid(format!(
                "expected {} layers, got {} weights and {} shifts",
                w.len() - 1,
                weights.len(),
                shifts.len()
            ));
        }
        for j in 0..w.len() - 1 {
            if weights[j].shape() != (w[j + 1], w[j]) {
                return Err(Error::Shape {
                    op: "mlp weights",
                    left: (w[j + 1], w[j]),
                    right: weights[j].shape(),
                });
            }
            if shifts[j].shape() != (1, w[j + 1]) {
                return Err(Error::Shape {
                    op: "mlp shifts",
                    left: (1, w[j + 1]),
                    right: shifts[j].shape(),
                });
            }
        }
        if !(output_bound > 0.0) {
            return invalid(format!("output bound must be positive, got {output_bound}"));
        }
        Ok(Self {
            widths,
            weights,
            shifts,
            weight_bound,
            output_bound,
        })
    }

    pub fn widths(&self) -> &LayerWidths {
        &self.widths
    }

    pub fn with_output_bound(mut self, k: f64) -> Self {
        self.output_bound = k;
        self
    }

    /// Parameter tensors in a fixed order: `W_0, s_0, W_1, s_1, …`.
    pub fn tensors(&self) -> impl Iterator<Item = &Mat> {
        self.weights
            .iter()
            .zip(&self.shifts)
            .flat_map(|(w, s)| [w, s])
    }

    pub fn tensors_mut(&mut self) -> impl Iterator<Item = &mut Mat> {
        self.weights
            .iter_mut()
            .zip(self.shifts.iter_mut())
            .flat_map(|(w, s)| [w, s])
    }

    /// `max_j |W_j|_∞ ∨ |v_j|_∞`.
    pub fn max_abs_parameter(&self) -> f64 {
        self.tensors().fold(0.0, |m, t| m.max(t.max_abs()))
    }

    /// Whether the parameters respect the weight bound `B` (always true when unbounded).
    pub fn within_weight_bound(&self) -> bool {
        self.weight_bound
            .is_none_or(|b| self.max_abs_parameter() <= b)
    }

    /// Registers every parameter as a tape leaf.
    pub fn bind(&self, tape: &mut Tape) -> MlpNodes {
        MlpNodes {
            weights: self.weights.iter().map(|w| tape.leaf(w.clone())).collect(),
            shifts: self.shifts.iter().map(|s| tape.leaf(s.clone())).collect(),
        }
    }

    /// Forward pass on a tape using previously bound parameter nodes.
    pub fn forward_nodes(
        &self,
        nodes: &MlpNodes,
        tape: &mut Tape,
        input: NodeId,
        clamp: bool,
    ) -> Result<NodeId> {
        let in_cols = tape.value(input).cols();
        if in_cols != self.widths.input() {
            return Err(Error::Shape {
                op: "forward_mlp",
                left: (tape.value(input).rows(), self.widths.input()),
                right: tape.value(input).shape(),
            });
        }
        let last = self.weights.len() - 1;
        let mut h = input;
        for j in 0..=last {
            if j < last {
                let neg = tape.scale(nodes.shifts[j], -1.0)?;
                let pre = tape.affine(h, nodes.weights[j], neg)?;
                h = tape.relu(pre)?;
            } else {
                h = tape.affine(h, nodes.weights[j], nodes.shifts[j])?;
            }
        }
        if clamp {
            h = clamp_on_tape(tape, h, self.output_bound)?;
        }
        Ok(h)
    }

    /// Forward pass without recording gradients.
    pub fn eval(&self, input: &Mat, clamp: bool) -> Result<Mat> {
        if input.cols() != self.widths.input() {
            return Err(Error::Shape {
                op: "forward_mlp",
                left: (input.rows(), self.widths.input()),
                right: input.shape(),
            });
        }
        let last = self.weights.len() - 1;
        let mut h = input.matmul_t(&self.weights[0])?;
        for j in 0..=last {
            if j > 0 {
                h = h.matmul_t(&self.weights[j])?;
            }
            let shift = self.shifts[j].data();
            for i in 0..h.rows() {
                let row = h.row_mut(i);
                if j < last {
                    for (v, s) in row.iter_mut().zip(shift) {
                        let u = *v - s;
                        *v = if u > 0.0 { u } else { 0.0 };
                    }
                } else {
                    for (v, s) in row.iter_mut().zip(shift) {
                        *v += s;
                    }
                }
            }
        }
        if clamp {
            let k = self.output_bound;
            h.data_mut().iter_mut().for_each(|v| *v = v.clamp(-k, k));
        }
        Ok(h)
    }

    /// Exact stored and nonzero counts. With a mask, `nonzero` counts the
    /// active support: unmasked weights plus every shift entry.
    pub fn count_params(&self, mask: Option<&SparsityMask>) -> ParamCount {
        let total = self.tensors().map(Mat::len).sum();
        let nonzero = match mask {
            Some(m) => m.active_weights() + self.shifts.iter().map(Mat::len).sum::<usize>(),
            None => self
                .tensors()
                .flat_map(|t| t.data().iter())
                .filter(|v| **v != 0.0)
                .count(),
        };
        ParamCount { total, nonzero }
    }
}

/// Records `min(K, max(-K, y))` as `relu(y + K) - relu(y - K) - K`.
fn clamp_on_tape(tape: &mut Tape, y: NodeId, k: f64) -> Result<NodeId> {
    if !k.is_finite() {
        return Ok(y);
    }
    let (r, c) = tape.value(y).shape();
    let kk = tape.leaf(Mat::filled(r, c, k));
    let up = tape.add(y, kk)?;
    let up = tape.relu(up)?;
    let down = tape.sub(y, kk)?;
    let down = tape.relu(down)?;
    let d = tape.sub(up, down)?;
    tape.sub(d, kk)
}

/// Builds the graph of a network on `input` and returns the output node.
pub fn forward_mlp(params: &MlpParams, input: &Mat, tape: &mut Tape, clamp: bool) -> Result<NodeId> {
    let nodes = params.bind(tape);
    let x = tape.leaf(input.clone());
    params.forward_nodes(&nodes, tape, x, clamp)
}

/// Fixed zero pattern over the weight matrices. Shifts are never masked.
#[derive(Clone, Debug, PartialEq)]
pub struct SparsityMask {
    pub masks: Vec<Mat>,
    pub target_s: usize,
}

impl SparsityMask {
    pub fn dense(widths: &LayerWidths) -> Self {
        let w = widths.as_slice();
        let masks: Vec<Mat> = (0..w.len() - 1)
            .map(|j| Mat::filled(w[j + 1], w[j], 1.0))
            .collect();
        let target_s = masks.iter().map(Mat::len).sum();
        Self { masks, target_s }
    }

    pub fn empty(widths: &LayerWidths) -> Self {
        let w = widths.as_slice();
        Self {
            masks: (0..w.len() - 1).map(|j| Mat::zeros(w[j + 1], w[j])).collect(),
            target_s: 0,
        }
    }

    /// Keeps exactly `target_s` weight entries, chosen uniformly at random.
    pub fn random(widths: &LayerWidths, target_s: usize, seed: u64) -> Result<Self> {
        let mut mask = Self::empty(widths);
        let sizes: Vec<usize> = mask.masks.iter().map(Mat::len).collect();
        let total: usize = sizes.iter().sum();
        if target_s > total {
            return invalid(format!(
                "sparsity target {target_s} exceeds the {total} available weights"
            ));
        }
        let mut rng = rng_for(seed, stream::MASK);
        let mut idx: Vec<usize> = (0..total).collect();
        for i in 0..target_s {
            let j = rng.random_range(i..total);
            idx.swap(i, j);
        }
        for &flat in &idx[..target_s] {
            let (mut layer, mut off) = (0, flat);
            while off >= sizes[layer] {
                off -= sizes[layer];
                layer += 1;
            }
            mask.masks[layer].data_mut()[off] = 1.0;
        }
        mask.target_s = target_s;
        Ok(mask)
    }

    pub fn active_weights(&self) -> usize {
        self.masks
            .iter()
            .flat_map(|m| m.data().iter())
            .filter(|v| **v != 0.0)
            .count()
    }

    fn check(&self, params: &MlpParams) -> Result<()> {
        if self.masks.len() != params.weights.len() {
            return invalid(format!(
                "mask has {} layers, network has {}",
                self.masks.len(),
                params.weights.len()
            ));
        }
        for (m, w) in self.masks.iter().zip(&params.weights) {
            if m.shape() != w.shape() {
                return Err(Error::Shape {
                    op: "apply_mask",
                    left: w.shape(),
                    right: m.shape(),
                });
            }
        }
        Ok(())
    }

    /// Zeroes masked-out weights in place.
    pub fn apply_in_place(&self, params: &mut MlpParams) -> Result<()> {
        self.check(params)?;
        for (m, w) in self.masks.iter().zip(params.weights.iter_mut()) {
            for (wv, mv) in w.data_mut().iter_mut().zip(m.data()) {
                if *mv == 0.0 {
                    *wv = 0.0;
                }
            }
        }
        Ok(())
    }
}

/// Returns a copy of `params` with masked-out weights set to zero.
pub fn apply_mask(params: &MlpParams, mask: &SparsityMask) -> Result<MlpParams> {
    let mut out = params.clone();
    mask.apply_in_place(&mut out)?;
    Ok(out)
}

/// Which network class a schedule targets.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Regime {
    Sparse,
    FullyConnected,
}

/// Architecture sizes that balance approximation and estimation error.
#[derive(Clone, Debug, PartialEq)]
pub struct SieveSchedule {
    pub delta_app: f64,
    pub depth: usize,
    pub width: usize,
    /// Only set for the sparse regime.
    pub sparsity: Option<usize>,
    pub weight_bound: usize,
    pub eps_star: f64,
    pub regime: Regime,
}

/// Plans `(L, r, s, B)` and the rate `ε*` for sample size `n`.
///
/// `δ = (σ*²/n)^{β*/(2β*+t*)}` with `σ* = min(n^{-α}, σ_max)`; `L = ⌈log 1/δ⌉`,
/// `r = ⌈δ^{-t*/β*}⌉` (sparse) or `⌈δ^{-t*/(2β*)}⌉` (fully connected),
/// `s = ⌈r log 1/δ⌉`, `B = ⌈1/δ⌉`. Multiplicative constants are 1.
pub fn plan_sieve(
    n: usize,
    beta_star: f64,
    t_star: f64,
    alpha: f64,
    sigma_max: f64,
    regime: Regime,
) -> Result<SieveSchedule> {
    if !(beta_star > 0.0) || !(t_star > 0.0) {
        return invalid(format!(
            "smoothness and dimension must be positive (beta*={beta_star}, t*={t_star})"
        ));
    }
    if !(alpha >= 0.0) {
        return invalid(format!("alpha must be >= 0, got {alpha}"));
    }
    if n < 2 {
        return invalid(format!("need n >= 2, got {n}"));
    }
    if !(sigma_max > 0.0) {
        return invalid(format!("sigma_max must be positive, got {sigma_max}"));
    }
    let nf = n as f64;
    let sigma = nf.powf(-alpha).min(sigma_max);
    let delta = (sigma * sigma / nf).powf(beta_star / (2.0 * beta_star + t_star));
    let log_inv = (1.0 / delta).ln();
    let depth = (log_inv.ceil() as usize).max(1);
    let width_exp = match regime {
        Regime::Sparse => t_star / beta_star,
        Regime::FullyConnected => t_star / (2.0 * beta_star),
    };
    let width = (delta.powf(-width_exp).ceil() as usize).max(1);
    let sparsity = match regime {
        Regime::Sparse => Some(((width as f64 * log_inv).ceil() as usize).max(1)),
        Regime::FullyConnected => None,
    };
    let weight_bound = ((1.0 / delta).ceil() as usize).max(1);
    let exponent = crate::rates::hellinger_exponent(beta_star, t_star, alpha);
    let eps_star = nf.powf(-exponent) * nf.ln().powi(2);
    Ok(SieveSchedule {
        delta_app: delta,
        depth,
        width,
        sparsity,
        weight_bound,
        eps_star,
        regime,
    })
}
