use rayon::prelude::*;

use super::DiagnosticsError;
use crate::algorithms::{MethodSpec, Simulation};
use crate::compressors::Compressor;
use crate::objective::{dist_sq, FiniteSumProblem};

/// Share of the final epochs averaged as the steady state.
pub const STEADY_FRACTION: f64 = 0.2;

/// One method on one problem, run at several stepsizes and seeds.
#[derive(Debug, Clone)]
pub struct FloorProbe<'a> {
    pub problem: &'a FiniteSumProblem,
    pub compressor: &'a Compressor,
    pub x_star: &'a [f64],
    /// `gamma` is replaced per probe point; `eta`, if any, is scaled with it.
    pub spec: MethodSpec,
    pub epochs: usize,
    pub seeds: u64,
    pub base_seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FloorPoint {
    pub gamma: f64,
    /// Mean over seeds of `‖x − x*‖²` after every round of the last
    /// [`STEADY_FRACTION`] of epochs. Sampling only at epoch ends would hide
    /// the within-epoch drift of RR-type methods, whose per-epoch gradient
    /// noise sums to zero.
    pub steady_dist_sq: f64,
}

fn steady_state(probe: &FloorProbe<'_>, gamma: f64, seed: u64) -> Result<f64, DiagnosticsError> {
    let mut spec = probe.spec.clone();
    let k = gamma / spec.gamma;
    spec.gamma = gamma;
    spec.eta = spec.eta.map(|e| e * k);
    let mut sim = Simulation::new(probe.problem, probe.compressor, spec, seed)?;
    let window = ((probe.epochs as f64 * STEADY_FRACTION).ceil() as usize).max(1);
    let rounds = sim.rounds_per_epoch();
    let mut acc = 0.0;
    for e in 0..probe.epochs {
        for _ in 0..rounds {
            sim.round()?;
            if e + window >= probe.epochs {
                acc += dist_sq(&sim.state().x, probe.x_star);
            }
        }
    }
    Ok(acc / (window * rounds) as f64)
}

/// Steady-state mean squared distance for each stepsize. Runs over
/// `(gamma, seed)` pairs in parallel; the result does not depend on
/// scheduling.
pub fn floor_scaling_probe(probe: &FloorProbe<'_>, gammas: &[f64]) -> Result<Vec<FloorPoint>, DiagnosticsError> {
    if probe.epochs == 0 || probe.seeds == 0 || !(probe.spec.gamma > 0.0) {
        return Err(DiagnosticsError::Unsupported("probe needs epochs, seeds and a positive base gamma".into()));
    }
    let jobs: Vec<(usize, u64)> = (0..gammas.len())
        .flat_map(|g| (0..probe.seeds).map(move |s| (g, s)))
        .collect();
    let values = jobs
        .par_iter()
        .map(|&(g, s)| steady_state(probe, gammas[g], probe.base_seed + s))
        .collect::<Result<Vec<f64>, _>>()?;
    Ok(gammas
        .iter()
        .enumerate()
        .map(|(g, &gamma)| {
            let per = &values[g * probe.seeds as usize..(g + 1) * probe.seeds as usize];
            FloorPoint { gamma, steady_dist_sq: per.iter().sum::<f64>() / per.len() as f64 }
        })
        .collect())
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn fit_log_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let (lx, ly): (Vec<f64>, Vec<f64>) = points.iter().map(|&(x, y)| (x.ln(), y.ln())).unzip();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}
