//! Plain-text model checkpoints.
//!
//! Layout: a `CONDREG-CKPT v1` header line, then one record per tensor made of
//! a `name rows cols` line followed by `rows` lines of `cols` values written
//! with 17 significant digits. Round trips are bit-exact.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::genmodel::{CvaeModel, SigmaBounds};
use crate::mat::Mat;
use crate::networks::{LayerWidths, MlpParams};

pub const HEADER: &str = "CONDREG-CKPT v1";

const NETS: [&str; 3] = ["encoder_mu", "encoder_logvar", "decoder"];

fn write_record(out: &mut String, name: &str, m: &Mat) {
    let _ = writeln!(out, "{name} {} {}", m.rows(), m.cols());
    for i in 0..m.rows() {
        let line: Vec<String> = m.row(i).iter().map(|v| format!("{v:.16e}")).collect();
        let _ = writeln!(out, "{}", line.join(" "));
    }
}

fn net_records(out: &mut String, prefix: &str, net: &MlpParams) {
    let w: Vec<f64> = net.widths().as_slice().iter().map(|&v| v as f64).collect();
    write_record(out, &format!("{prefix}.widths"), &Mat::row_vector(&w));
    let bounds = [net.weight_bound.unwrap_or(f64::INFINITY), net.output_bound];
    write_record(out, &format!("{prefix}.bounds"), &Mat::row_vector(&bounds));
    for (j, (w, s)) in net.weights.iter().zip(&net.shifts).enumerate() {
        write_record(out, &format!("{prefix}.W{j}"), w);
        write_record(out, &format!("{prefix}.v{j}"), s);
    }
}

/// Serialises a model to the checkpoint text format.
pub fn to_string(model: &CvaeModel) -> String {
    let mut out = String::new();
    out.push_str(HEADER);
    out.push('\n');
    write_record(&mut out, "latent_dim", &Mat::scalar(model.latent_dim as f64));
    write_record(&mut out, "sigma_raw", &Mat::scalar(model.sigma_raw));
    write_record(
        &mut out,
        "sigma_bounds",
        &Mat::row_vector(&[model.sigma_bounds.min, model.sigma_bounds.max]),
    );
    for (prefix, net) in NETS.iter().zip([&model.encoder_mu, &model.encoder_logvar, &model.decoder]) {
        net_records(&mut out, prefix, net);
    }
    out
}

pub fn save(model: &CvaeModel, path: &Path) -> Result<()> {
    std::fs::write(path, to_string(model))?;
    Ok(())
}

pub fn load(path: &Path) -> Result<CvaeModel> {
    from_str(&std::fs::read_to_string(path)?)
}

fn parse_err<T>(line: usize, msg: impl Into<String>) -> Result<T> {
    Err(Error::Parse { line, msg: msg.into() })
}

/// A named tensor with the line number of its header.
#[derive(Clone, Debug, PartialEq)]
pub struct Record {
    pub name: String,
    pub line: usize,
    pub value: Mat,
}

/// Splits checkpoint text into records without interpreting names.
pub fn parse_records(text: &str) -> Result<Vec<Record>> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    match lines.next() {
        Some((_, h)) if h.trim() == HEADER => {}
        Some((n, h)) => return parse_err(n, format!("expected header '{HEADER}', found '{h}'")),
        None => return parse_err(1, "empty checkpoint"),
    }
    let mut records = Vec::new();
    while let Some((ln, head)) = lines.next() {
        if head.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = head.split_whitespace().collect();
        if parts.len() != 3 {
            return parse_err(ln, format!("expected 'name rows cols', found '{head}'"));
        }
        let dims: std::result::Result<Vec<usize>, _> = parts[1..].iter().map(|p| p.parse::<usize>()).collect();
        let Ok(dims) = dims else {
            return parse_err(ln, format!("bad tensor dimensions in '{head}'"));
        };
        let (rows, cols) = (dims[0], dims[1]);
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            let Some((rl, row)) = lines.next() else {
                return parse_err(ln, format!("tensor '{}' truncated", parts[0]));
            };
            let before = data.len();
            for tok in row.split_whitespace() {
                match tok.parse::<f64>() {
                    Ok(v) => data.push(v),
                    Err(_) => return parse_err(rl, format!("cannot parse '{tok}' as a number")),
                }
            }
            if data.len() - before != cols {
                return parse_err(rl, format!("expected {cols} values, found {}", data.len() - before));
            }
        }
        records.push(Record {
            name: parts[0].to_string(),
            line: ln,
            value: Mat::new(rows, cols, data)?,
        });
    }
    Ok(records)
}

struct Reader {
    records: std::vec::IntoIter<Record>,
    last_line: usize,
}

impl Reader {
    fn expect(&mut self, name: &str) -> Result<Mat> {
        match self.records.next() {
            Some(r) if r.name == name => {
                self.last_line = r.line;
                Ok(r.value)
            }
            Some(r) => parse_err(r.line, format!("expected tensor '{name}', found '{}'", r.name)),
            None => parse_err(self.last_line, format!("missing tensor '{name}'")),
        }
    }

    fn net(&mut self, prefix: &str) -> Result<MlpParams> {
        let line = self.last_line + 1;
        let widths_m = self.expect(&format!("{prefix}.widths"))?;
        let widths: Vec<usize> = widths_m.data().iter().map(|&v| v as usize).collect();
        let widths = LayerWidths::new(widths).or_else(|e| parse_err(line, e.to_string()))?;
        let bounds = self.expect(&format!("{prefix}.bounds"))?;
        if bounds.len() != 2 {
            return parse_err(self.last_line, "bounds record needs 2 values");
        }
        let mut weights = Vec::new();
        let mut shifts = Vec::new();
        for j in 0..widths.as_slice().len() - 1 {
            weights.push(self.expect(&format!("{prefix}.W{j}"))?);
            shifts.push(self.expect(&format!("{prefix}.v{j}"))?);
        }
        let wb = bounds.data()[0];
        MlpParams::from_parts(widths, weights, shifts, wb.is_finite().then_some(wb), bounds.data()[1])
            .or_else(|e| parse_err(self.last_line, e.to_string()))
    }
}

/// Parses checkpoint text; errors carry the offending line number.
pub fn from_str(text: &str) -> Result<CvaeModel> {
    let mut r = Reader {
        records: parse_records(text)?.into_iter(),
        last_line: 1,
    };
    let latent_dim = r.expect("latent_dim")?.item() as usize;
    let sigma_raw = r.expect("sigma_raw")?.item();
    let b = r.expect("sigma_bounds")?;
    let sigma_bounds = SigmaBounds::new(b.data()[0], b.data()[b.len() - 1])
        .or_else(|e| parse_err(r.last_line, e.to_string()))?;
    let encoder_mu = r.net(NETS[0])?;
    let encoder_logvar = r.net(NETS[1])?;
    let decoder = r.net(NETS[2])?;
    if let Some(extra) = r.records.next() {
        return parse_err(extra.line, format!("unexpected tensor '{}'", extra.name));
    }
    Ok(CvaeModel {
        encoder_mu,
        encoder_logvar,
        decoder,
        sigma_raw,
        sigma_bounds,
        latent_dim,
    })
}
