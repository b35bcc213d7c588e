use std::fmt;
use std::path::Path;
use std::time::Instant;

use serde::Serialize;

use crate::consensus::{Consensus, ConsensusConfig, ConsensusStatus, Method, ResidualTrace};
use crate::model::HybridSystem;
use crate::Result;

/// One entry of a method sweep.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MethodSpec {
    pub method: Method,
    pub restart: Option<usize>,
}

impl MethodSpec {
    pub const fn admm() -> Self {
        Self {
            method: Method::Admm,
            restart: None,
        }
    }

    pub const fn fast(restart: Option<usize>) -> Self {
        Self {
            method: Method::FastAdmm,
            restart,
        }
    }

    /// Plain ADMM, then accelerated ADMM without restart and with K = 10, 20, 50.
    pub fn standard() -> Vec<Self> {
        vec![
            Self::admm(),
            Self::fast(None),
            Self::fast(Some(10)),
            Self::fast(Some(20)),
            Self::fast(Some(50)),
        ]
    }

    /// `admm`, `fast-admm`, `fast-admm-k10`, ...
    pub fn label(&self) -> String {
        match (self.method, self.restart) {
            (Method::Admm, _) => "admm".into(),
            (Method::FastAdmm, None) => "fast-admm".into(),
            (Method::FastAdmm, Some(k)) => format!("fast-admm-k{k}"),
        }
    }
}

/// Summary of one method run; `error` is set when the run aborted.
#[derive(Clone, Debug, Serialize)]
pub struct MethodSummary {
    pub label: String,
    pub iterations: usize,
    pub primal_residual: Option<f64>,
    pub dual_residual: Option<f64>,
    /// Certified gain bound squared, from the final certificate.
    pub gamma: Option<f64>,
    pub eta: Option<f64>,
    pub certified: bool,
    pub converged: bool,
    /// First iteration with both residuals at most the configured tolerance.
    pub iters_to_tol: Option<usize>,
    pub wall_s: f64,
    pub error: Option<String>,
    #[serde(skip)]
    pub trace: ResidualTrace,
}

#[derive(Clone, Debug, Default)]
pub struct ComparisonTable {
    pub rows: Vec<MethodSummary>,
    pub tol: f64,
}

impl ComparisonTable {
    pub fn get(&self, label: &str) -> Option<&MethodSummary> {
        self.rows.iter().find(|r| r.label == label)
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        for r in &self.rows {
            out.serialize(r)?;
        }
        out.flush()?;
        Ok(())
    }
}

fn opt(v: Option<f64>, prec: usize) -> String {
    v.map_or_else(|| "-".into(), |x| format!("{x:.prec$e}"))
}

impl fmt::Display for ComparisonTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:<16} {:>5} {:>10} {:>10} {:>10} {:>10} {:>9} {:>8}  status",
            "method",
            "iters",
            "primal",
            "dual",
            "gamma",
            "eta",
            format!("it<{:.0e}", self.tol),
            "wall[s]"
        )?;
        for r in &self.rows {
            let status = match (&r.error, r.certified) {
                (Some(e), _) => format!("error: {e}"),
                (None, true) => "certified".into(),
                (None, false) => "uncertified".into(),
            };
            writeln!(
                f,
                "{:<16} {:>5} {:>10} {:>10} {:>10} {:>10} {:>9} {:>8.1}  {status}",
                r.label,
                r.iterations,
                opt(r.primal_residual, 3),
                opt(r.dual_residual, 3),
                opt(r.gamma, 3),
                opt(r.eta, 3),
                r.iters_to_tol.map_or_else(|| "-".into(), |k| k.to_string()),
                r.wall_s,
            )?;
        }
        Ok(())
    }
}

/// Runs every method for exactly `max_iter` iterations on the same instance
/// and initial point, one after the other.
///
/// `base` supplies ρ, ℓ and the tolerances; method and restart are taken
/// from each spec. With `out_dir`, writes `<label>.csv` residual traces and
/// `summary.csv`. A failing method is recorded and the sweep moves on.
pub fn compare_methods(
    system: &HybridSystem,
    base: &ConsensusConfig,
    methods: &[MethodSpec],
    max_iter: usize,
    out_dir: Option<&Path>,
) -> Result<ComparisonTable> {
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir)?;
    }
    let mut table = ComparisonTable {
        rows: Vec::with_capacity(methods.len()),
        tol: base.tol,
    };
    for spec in methods {
        let cfg = ConsensusConfig {
            method: spec.method,
            restart: spec.restart,
            max_iter,
            ..base.clone()
        };
        let start = Instant::now();
        let run = Consensus::new(&system.subsystems, &system.interconnection, &cfg)
            .and_then(|c| c.run_iterations(max_iter, false));
        let wall_s = start.elapsed().as_secs_f64();
        let row = match run {
            Ok(res) => {
                let last = res.trace.last().copied();
                MethodSummary {
                    label: spec.label(),
                    iterations: res.trace.len(),
                    primal_residual: last.map(|r| r.primal_residual),
                    dual_residual: last.map(|r| r.dual_residual),
                    gamma: res.gamma,
                    eta: res.eta,
                    certified: res.certified,
                    converged: res.status == ConsensusStatus::Converged,
                    iters_to_tol: res.trace.first_below(base.tol),
                    wall_s,
                    error: None,
                    trace: res.trace,
                }
            }
            Err(e) => MethodSummary {
                label: spec.label(),
                iterations: 0,
                primal_residual: None,
                dual_residual: None,
                gamma: None,
                eta: None,
                certified: false,
                converged: false,
                iters_to_tol: None,
                wall_s,
                error: Some(e.to_string()),
                trace: ResidualTrace::default(),
            },
        };
        if let Some(dir) = out_dir {
            row.trace.save_csv(&dir.join(format!("{}.csv", row.label)))?;
        }
        table.rows.push(row);
    }
    if let Some(dir) = out_dir {
        table.write_csv(std::fs::File::create(dir.join("summary.csv"))?)?;
    }
    Ok(table)
}
