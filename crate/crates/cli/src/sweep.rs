//! Cross product of one swept key's values with replicates.

use std::path::Path;

use condreg::par::{map_indexed, Execution};

use crate::config::{value_label, SweepSpec};
use crate::pipeline::{self, result_columns, ReplicateOutcome, RunError};

/// Outcomes grouped per sweep value, each in replicate order.
pub fn run_cells(spec: &SweepSpec) -> Result<Vec<Vec<ReplicateOutcome>>, RunError> {
    let mnist = match spec.cells.first() {
        Some(c) if c.experiment == "mnist" => Some(pipeline::load_mnist(c)?),
        _ => None,
    };
    let jobs: Vec<(usize, usize)> = spec
        .cells
        .iter()
        .enumerate()
        .flat_map(|(k, c)| (0..c.replicates).map(move |r| (k, r)))
        .collect();
    let flat = map_indexed(Execution::default(), jobs.len(), |j| {
        let (k, r) = jobs[j];
        pipeline::run_replicate(&spec.cells[k], r, mnist.as_ref())
    });
    let mut cells: Vec<Vec<ReplicateOutcome>> = spec.cells.iter().map(|_| Vec::new()).collect();
    for ((k, _), outcome) in jobs.into_iter().zip(flat) {
        cells[k].push(outcome?);
    }
    Ok(cells)
}

/// Long-format table: `sweep_value` followed by the `results.csv` columns.
pub fn sweep_csv(spec: &SweepSpec, cells: &[Vec<ReplicateOutcome>]) -> String {
    let mut s = String::from("sweep_value,");
    s.push_str(&result_columns().join(","));
    s.push('\n');
    for (v, outcomes) in spec.values.iter().zip(cells) {
        for o in outcomes {
            s.push_str(&value_label(v));
            s.push(',');
            s.push_str(&o.csv_fields().join(","));
            s.push('\n');
        }
    }
    s
}

/// Runs the sweep, writing per-cell artifacts under `cell_k/` and `sweep.csv`.
pub fn run(spec: &SweepSpec, dir: &Path) -> Result<Vec<Vec<ReplicateOutcome>>, RunError> {
    let cells = run_cells(spec)?;
    for (k, outcomes) in cells.iter().enumerate() {
        pipeline::write_artifacts(&dir.join(format!("cell_{k}")), outcomes)?;
    }
    let path = dir.join("sweep.csv");
    std::fs::write(&path, sweep_csv(spec, &cells)).map_err(|source| RunError::Io { path, source })?;
    Ok(cells)
}
