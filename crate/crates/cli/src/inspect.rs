//! Human-readable summary of a checkpoint.

use std::fmt::Write as _;

use condreg::networks::MlpParams;
use condreg::CvaeModel;

fn net(out: &mut String, name: &str, p: &MlpParams) {
    let count = p.count_params(None);
    let widths: Vec<String> = p.widths().as_slice().iter().map(|w| w.to_string()).collect();
    let _ = writeln!(
        out,
        "{name}: widths {} params {} nonzero {} max_abs {:.6e}",
        widths.join("-"),
        count.total,
        count.nonzero,
        p.max_abs_parameter()
    );
}

pub fn describe(model: &CvaeModel) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "latent_dim: {}", model.latent_dim);
    let _ = writeln!(out, "covariate_dim: {}", model.covariate_dim());
    let _ = writeln!(out, "response_dim: {}", model.response_dim());
    let _ = writeln!(
        out,
        "sigma: {:.10e} (bounds [{}, {}])",
        model.sigma(),
        model.sigma_bounds.min,
        model.sigma_bounds.max
    );
    net(&mut out, "encoder_mu", &model.encoder_mu);
    net(&mut out, "encoder_logvar", &model.encoder_logvar);
    net(&mut out, "decoder", &model.decoder);
    let _ = writeln!(out, "output_bound: {}", model.decoder.output_bound);
    out
}
