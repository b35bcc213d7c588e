use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::Result;

/// One iteration of the splitting.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iter: usize,
    /// `‖b^k − v^k‖`.
    pub primal_residual: f64,
    /// `ρ‖v^k − v^{k−1}‖`.
    pub dual_residual: f64,
    pub gamma: f64,
    pub wall_ms: f64,
}

/// Per-iteration residuals, plus notes on restarts and stalled inner solves.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ResidualTrace {
    pub rows: Vec<TraceRow>,
    pub events: Vec<(usize, String)>,
}

impl ResidualTrace {
    pub fn push(&mut self, row: TraceRow, notes: Vec<String>) {
        self.events.extend(notes.into_iter().map(|n| (row.iter, n)));
        self.rows.push(row);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn last(&self) -> Option<&TraceRow> {
        self.rows.last()
    }

    /// First iteration at which both residuals are at most `tol`.
    pub fn first_below(&self, tol: f64) -> Option<usize> {
        self.rows
            .iter()
            .find(|r| r.primal_residual <= tol && r.dual_residual <= tol)
            .map(|r| r.iter)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        for r in &self.rows {
            out.serialize(r)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut rd = csv::Reader::from_path(path)?;
        let rows = rd.deserialize().collect::<std::result::Result<Vec<TraceRow>, _>>()?;
        Ok(Self {
            rows,
            events: Vec::new(),
        })
    }
}
