use rayon::prelude::*;

use super::experiment::{Experiment, Multipliers};
use super::HarnessError;
use crate::diagnostics::RunRecord;

#[derive(Debug, Clone, PartialEq)]
pub struct SweepEntry {
    pub multipliers: Multipliers,
    /// `None` when the run diverged.
    pub final_f_gap: Option<f64>,
    pub diverged_at: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    pub best: Multipliers,
    pub entries: Vec<SweepEntry>,
    /// Records of the winning run.
    pub records: Vec<RunRecord>,
}

/// Every pairing of a `gamma` multiplier with an `eta` multiplier.
pub fn pair_grid(gamma: &[f64], eta: &[f64]) -> Vec<Multipliers> {
    gamma
        .iter()
        .flat_map(|&g| eta.iter().map(move |&e| Multipliers { gamma: g, eta: Some(e) }))
        .collect()
}

fn smaller(a: &Multipliers, b: &Multipliers) -> bool {
    (a.gamma, a.eta.unwrap_or(a.gamma)) < (b.gamma, b.eta.unwrap_or(b.gamma))
}

/// Runs every multiplier with the same seed and keeps the lowest final
/// `f_gap`; ties go to the smaller multiplier.
pub fn sweep(exp: &Experiment, grid: &[Multipliers], epochs: usize, seed: u64) -> Result<SweepReport, HarnessError> {
    if grid.is_empty() {
        return Err(HarnessError::Config("empty multiplier grid".into()));
    }
    let runs: Vec<Result<Vec<RunRecord>, HarnessError>> = grid
        .par_iter()
        .map(|&k| exp.run(&exp.spec(k), epochs, seed))
        .collect();
    let mut entries = Vec::with_capacity(grid.len());
    let mut best: Option<(usize, f64)> = None;
    for (i, (k, run)) in grid.iter().zip(&runs).enumerate() {
        let (final_f_gap, diverged_at) = match run {
            Ok(recs) => {
                let f = recs.last().expect("initial record").f_gap;
                (Some(f), None)
            }
            Err(HarnessError::Diverged { round }) => (None, Some(*round)),
            Err(e) => return Err(e.clone()),
        };
        if let Some(f) = final_f_gap {
            let better = match best {
                None => true,
                Some((j, bf)) => f < bf || (f == bf && smaller(k, &grid[j])),
            };
            if better {
                best = Some((i, f));
            }
        }
        entries.push(SweepEntry { multipliers: *k, final_f_gap, diverged_at });
    }
    let Some((i, _)) = best else {
        let rounds: Vec<String> = entries
            .iter()
            .map(|e| format!("x{} at round {}", e.multipliers.gamma, e.diverged_at.unwrap_or_default()))
            .collect();
        return Err(HarnessError::AllDiverged(rounds.join(", ")));
    };
    let records = runs.into_iter().nth(i).expect("index").expect("converged run");
    Ok(SweepReport { best: grid[i], entries, records })
}
