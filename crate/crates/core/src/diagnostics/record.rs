use std::io::Write;

use super::DiagnosticsError;
use crate::algorithms::AlgorithmState;
use crate::objective::{dist_sq, norm_sq, FiniteSumProblem};

pub const CSV_HEADER: &str = "round,epoch,f_gap,dist_sq,grad_norm,bits_up,lyapunov";

/// Metrics of one snapshot of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    /// Communication rounds completed.
    pub round: u64,
    /// Epochs completed.
    pub epoch: usize,
    pub f_gap: f64,
    pub dist_sq: f64,
    /// `‖∇f(x)‖`.
    pub grad_norm: f64,
    pub bits_up: u64,
    pub lyapunov: Option<f64>,
}

impl RunRecord {
    pub fn measure(
        state: &AlgorithmState,
        problem: &FiniteSumProblem,
        x_star: &[f64],
        f_star: f64,
        lyapunov: Option<f64>,
    ) -> Result<Self, DiagnosticsError> {
        Ok(Self {
            round: state.rounds,
            epoch: state.epoch,
            f_gap: problem.eval_full(&state.x)? - f_star,
            dist_sq: dist_sq(&state.x, x_star),
            grad_norm: norm_sq(&problem.grad_full(&state.x)?).sqrt(),
            bits_up: state.bits_up,
            lyapunov,
        })
    }

    fn fields(&self) -> [String; 7] {
        [
            self.round.to_string(),
            self.epoch.to_string(),
            format!("{:.16e}", self.f_gap),
            format!("{:.16e}", self.dist_sq),
            format!("{:.16e}", self.grad_norm),
            self.bits_up.to_string(),
            self.lyapunov.map(|v| format!("{v:.16e}")).unwrap_or_default(),
        ]
    }
}

/// Header plus one row per record. Floats carry 17 significant digits.
pub fn write_csv<W: Write>(records: &[RunRecord], out: W) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER.split(','))?;
    for r in records {
        w.write_record(r.fields())?;
    }
    w.flush()
}
