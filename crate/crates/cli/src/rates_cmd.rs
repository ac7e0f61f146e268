//! `rates` subcommand: evaluates a rate formula from `key=value` parameters.

use std::collections::BTreeMap;

use condreg::networks::{plan_sieve, Regime};
use condreg::rates::{
    manifold_threshold, rate_disparity, rate_hellinger, rate_manifold_w1, rate_smooth, DisparityInputs,
    RateInputs,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Formula {
    /// Hellinger rate exponent and value at `n`.
    Hellinger,
    /// W1 exponent after perturbation, with the dominating regime.
    Manifold,
    /// Exponent when latent and covariate smoothness differ.
    Disparity,
    /// Exponent for smooth conditional densities.
    Smooth,
    /// Network sizes balancing approximation and estimation error.
    Plan,
}

#[derive(Debug, thiserror::Error)]
pub enum RatesError {
    #[error("parameter '{0}' is not of the form key=value")]
    Syntax(String),
    #[error("parameter '{key}': cannot parse '{value}'")]
    Value { key: String, value: String },
    #[error("unknown parameter '{key}' for this formula (accepted: {accepted})")]
    Unknown { key: String, accepted: String },
    #[error("missing parameter '{0}'")]
    Missing(String),
    #[error(transparent)]
    Core(#[from] condreg::Error),
}

struct Params {
    raw: BTreeMap<String, String>,
}

impl Params {
    fn parse(items: &[String], accepted: &[&str]) -> Result<Self, RatesError> {
        let mut raw = BTreeMap::new();
        for item in items {
            let (k, v) = item.split_once('=').ok_or_else(|| RatesError::Syntax(item.clone()))?;
            let k = k.trim();
            if !accepted.contains(&k) {
                return Err(RatesError::Unknown { key: k.into(), accepted: accepted.join(", ") });
            }
            raw.insert(k.to_string(), v.trim().to_string());
        }
        Ok(Self { raw })
    }

    fn get(&self, key: &str) -> Result<Option<f64>, RatesError> {
        self.raw
            .get(key)
            .map(|v| {
                v.parse::<f64>()
                    .map_err(|_| RatesError::Value { key: key.into(), value: v.clone() })
            })
            .transpose()
    }

    fn or(&self, key: &str, default: f64) -> Result<f64, RatesError> {
        Ok(self.get(key)?.unwrap_or(default))
    }

    fn required(&self, key: &str) -> Result<f64, RatesError> {
        self.get(key)?.ok_or_else(|| RatesError::Missing(key.into()))
    }

    fn count(&self, key: &str, default: usize) -> Result<usize, RatesError> {
        match self.raw.get(key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|_| RatesError::Value { key: key.into(), value: v.clone() }),
        }
    }

    fn rate_inputs(&self) -> Result<RateInputs, RatesError> {
        Ok(RateInputs {
            n: self.count("n", 5000)?,
            beta_star: self.or("beta_star", 1.0)?,
            t_star: self.or("t_star", 1.0)?,
            alpha: self.or("alpha", 0.0)?,
        })
    }
}

fn line(out: &mut String, key: &str, value: impl std::fmt::Display) {
    out.push_str(key);
    out.push('=');
    out.push_str(&value.to_string());
    out.push('\n');
}

/// Evaluates `formula`, returning `key=value` lines.
///
/// Defaults: `n = 5000`, `beta_star = t_star = 1`, `alpha = 0`, `sigma_max = 2`,
/// `regime = fully_connected`. The disparity formula requires all of
/// `beta_z, beta_x, d, p`; the smooth formula requires `beta_min` and `d`.
pub fn evaluate(formula: Formula, items: &[String]) -> Result<String, RatesError> {
    let mut out = String::new();
    match formula {
        Formula::Hellinger => {
            let p = Params::parse(items, &["n", "beta_star", "t_star", "alpha"])?;
            let (e, v) = rate_hellinger(&p.rate_inputs()?)?;
            line(&mut out, "exponent", e);
            line(&mut out, "value", v);
        }
        Formula::Manifold => {
            let p = Params::parse(items, &["n", "beta_star", "t_star", "alpha"])?;
            let inp = p.rate_inputs()?;
            let (e, regime) = rate_manifold_w1(&inp)?;
            line(&mut out, "exponent", e);
            line(&mut out, "regime", regime.as_str());
            line(&mut out, "threshold", manifold_threshold(inp.beta_star, inp.t_star));
        }
        Formula::Disparity => {
            let p = Params::parse(items, &["beta_z", "beta_x", "d", "p", "alpha"])?;
            let e = rate_disparity(&DisparityInputs {
                beta_z: p.required("beta_z")?,
                beta_x: p.required("beta_x")?,
                latent_dim: p.required("d")?,
                covariate_dim: p.required("p")?,
                alpha: p.or("alpha", 0.0)?,
            })?;
            line(&mut out, "exponent", e);
        }
        Formula::Smooth => {
            let p = Params::parse(items, &["beta_min", "d", "alpha"])?;
            let e = rate_smooth(p.required("beta_min")?, p.required("d")?, p.or("alpha", 0.0)?)?;
            line(&mut out, "exponent", e);
        }
        Formula::Plan => {
            let p = Params::parse(items, &["n", "beta_star", "t_star", "alpha", "sigma_max", "regime"])?;
            let regime = match p.raw.get("regime").map(String::as_str) {
                None | Some("fully_connected") => Regime::FullyConnected,
                Some("sparse") => Regime::Sparse,
                Some(other) => return Err(RatesError::Value { key: "regime".into(), value: other.into() }),
            };
            let inp = p.rate_inputs()?;
            let s = plan_sieve(inp.n, inp.beta_star, inp.t_star, inp.alpha, p.or("sigma_max", 2.0)?, regime)?;
            line(&mut out, "delta_app", s.delta_app);
            line(&mut out, "depth", s.depth);
            line(&mut out, "width", s.width);
            if let Some(sp) = s.sparsity {
                line(&mut out, "sparsity", sp);
            }
            line(&mut out, "weight_bound", s.weight_bound);
            line(&mut out, "eps_star", s.eps_star);
        }
    }
    Ok(out)
}
