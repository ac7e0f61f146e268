//! Convergence-rate calculators.
//!
//! Each function returns the polynomial exponent `e` of a rate `n^{-e}`
//! (log factors are reported separately where they appear). No constants
//! are absorbed.

use crate::error::{invalid, Result};

/// Inputs shared by the rate formulas.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RateInputs {
    pub n: usize,
    pub beta_star: f64,
    pub t_star: f64,
    pub alpha: f64,
}

impl RateInputs {
    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return invalid(format!("n must be >= 2, got {}", self.n));
        }
        if !(self.beta_star > 0.0) || !(self.t_star > 0.0) {
            return invalid(format!(
                "beta* and t* must be positive, got {} and {}",
                self.beta_star, self.t_star
            ));
        }
        if !(self.alpha >= 0.0) {
            return invalid(format!("alpha must be >= 0, got {}", self.alpha));
        }
        Ok(())
    }
}

/// Smoothness and dimensions of the latent and covariate parts.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DisparityInputs {
    pub beta_z: f64,
    pub beta_x: f64,
    pub latent_dim: f64,
    pub covariate_dim: f64,
    pub alpha: f64,
}

/// Which error source dominates the manifold W1 rate.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ManifoldRegime {
    NoiseDominated,
    PerturbationDominated,
}

impl ManifoldRegime {
    pub fn as_str(&self) -> &'static str {
        match self {
            ManifoldRegime::NoiseDominated => "noise-dominated",
            ManifoldRegime::PerturbationDominated => "perturbation-dominated",
        }
    }
}

/// `(β* − t*α)/(2β* + t*)`.
pub fn hellinger_exponent(beta_star: f64, t_star: f64, alpha: f64) -> f64 {
    (beta_star - t_star * alpha) / (2.0 * beta_star + t_star)
}

/// Hellinger rate `n^{-(β*−t*α)/(2β*+t*)} · log²n`; returns `(exponent, value)`.
pub fn rate_hellinger(inp: &RateInputs) -> Result<(f64, f64)> {
    inp.validate()?;
    let e = hellinger_exponent(inp.beta_star, inp.t_star, inp.alpha);
    let n = inp.n as f64;
    Ok((e, n.powf(-e) * n.ln().powi(2)))
}

/// Noise level `α` at which the perturbed-data W1 rate switches branch.
pub fn manifold_threshold(beta_star: f64, t_star: f64) -> f64 {
    beta_star / (2.0 * (beta_star + t_star))
}

/// W1 rate of the estimator fitted to perturbed data.
///
/// Below the threshold `β*/(2(β*+t*))` the observation noise dominates and the
/// Hellinger exponent applies; at or above it the injected perturbation sets
/// the exponent `β*/(2(β*+t*))`.
pub fn rate_manifold_w1(inp: &RateInputs) -> Result<(f64, ManifoldRegime)> {
    inp.validate()?;
    let threshold = manifold_threshold(inp.beta_star, inp.t_star);
    if inp.alpha < threshold {
        Ok((
            hellinger_exponent(inp.beta_star, inp.t_star, inp.alpha),
            ManifoldRegime::NoiseDominated,
        ))
    } else {
        Ok((threshold, ManifoldRegime::PerturbationDominated))
    }
}

/// `(1 − α(d/β_Z + p/β_X)) / (2 + d/β_Z + p/β_X)`, valid for `α ≤ (d/β_Z + p/β_X)^{-1}`.
pub fn rate_disparity(inp: &DisparityInputs) -> Result<f64> {
    let DisparityInputs {
        beta_z,
        beta_x,
        latent_dim,
        covariate_dim,
        alpha,
    } = *inp;
    if !(beta_z > 0.0 && beta_x > 0.0 && latent_dim > 0.0 && covariate_dim > 0.0) {
        return invalid("smoothness and dimension parameters must be positive");
    }
    if !(alpha >= 0.0) {
        return invalid(format!("alpha must be >= 0, got {alpha}"));
    }
    let c = latent_dim / beta_z + covariate_dim / beta_x;
    // tolerate round-off when alpha is given as the boundary value itself
    if alpha > 1.0 / c * (1.0 + 1e-12) {
        return invalid(format!(
            "alpha = {alpha} outside the admissible range [0, (d/beta_Z + p/beta_X)^-1] = [0, {}]",
            1.0 / c
        ));
    }
    Ok(((1.0 - alpha * c) / (2.0 + c)).max(0.0))
}

/// `(β_min + 1 − dα)/(2β_min + 2 + d)` for smooth conditional densities.
pub fn rate_smooth(beta_min: f64, d: f64, alpha: f64) -> Result<f64> {
    if !(beta_min >= 0.0) || !(d > 0.0) {
        return invalid(format!(
            "beta_min must be >= 0 and d > 0, got {beta_min} and {d}"
        ));
    }
    if !(alpha >= 0.0) {
        return invalid(format!("alpha must be >= 0, got {alpha}"));
    }
    Ok((beta_min + 1.0 - d * alpha) / (2.0 * beta_min + 2.0 + d))
}
