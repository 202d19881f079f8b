//! Desk-scale versions of the two logistic-regression comparisons: the
//! non-local methods (Q-RR, DIANA-RR against QSGD and DIANA) and the local
//! ones (Q-NASTYA, DIANA-NASTYA against FedCOM and FedPAQ).

use std::path::{Path, PathBuf};

use super::data::{load_libsvm, partition, PartitionKind, PartitionRule};
use super::experiment::{Experiment, Multipliers};
use super::sweep::{pair_grid, sweep};
use super::HarnessError;
use crate::algorithms::{BatchRule, Method};
use crate::compressors::Compressor;
use crate::diagnostics::RunRecord;
use crate::objective::{FiniteSumProblem, LossKind};
use crate::shuffling::SamplingPolicy;
use crate::stepsizes::grids;

pub const CLIENTS: usize = 20;
pub const BATCH_FRACTION: f64 = 0.1;

/// Per-dataset settings: `λ` and the Rand-k `k` (about 2% of `d`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DatasetSettings {
    pub name: &'static str,
    pub lambda: f64,
    pub k: usize,
}

pub const DATASETS: [DatasetSettings; 3] = [
    DatasetSettings { name: "mushrooms", lambda: 1.29e-4, k: 2 },
    DatasetSettings { name: "w8a", lambda: 3.3e-5, k: 6 },
    DatasetSettings { name: "a9a", lambda: 7.85e-5, k: 2 },
];

pub fn dataset_settings(name: &str) -> Result<DatasetSettings, HarnessError> {
    DATASETS
        .iter()
        .copied()
        .find(|d| d.name == name)
        .ok_or_else(|| HarnessError::Config(format!("unknown dataset {name:?}; expected mushrooms, w8a or a9a")))
}

/// Sorted 20-client split of a LibSVM file with the dataset's `λ`.
pub fn load_benchmark(path: &Path, settings: DatasetSettings) -> Result<FiniteSumProblem, HarnessError> {
    let (points, dim) = load_libsvm(path)?;
    let clients = partition(points, PartitionRule { kind: PartitionKind::SortedEqualSplit, clients: CLIENTS, seed: 0 })?;
    Ok(FiniteSumProblem::new(clients, dim, settings.lambda, LossKind::Logistic)?)
}

#[derive(Debug, Clone)]
pub struct ReproduceOptions {
    pub data_file: PathBuf,
    pub dataset: String,
    pub epochs: usize,
    pub seeds: u64,
    pub seed: u64,
    /// Full multiplier grids instead of the reduced one.
    pub full_grid: bool,
}

impl ReproduceOptions {
    /// Reduced protocol: 500 epochs, 3 seeds, 7 multipliers.
    pub fn reduced(data_file: PathBuf, dataset: &str) -> Self {
        Self { data_file, dataset: dataset.into(), epochs: 500, seeds: 3, seed: 0, full_grid: false }
    }

    /// 5000 epochs and the full grids.
    pub fn full(data_file: PathBuf, dataset: &str) -> Self {
        Self { epochs: 5000, full_grid: true, ..Self::reduced(data_file, dataset) }
    }
}

#[derive(Debug, Clone)]
pub struct MethodResult {
    pub label: &'static str,
    pub best: Multipliers,
    /// Mean over seeds of the final `f_gap` at the chosen multipliers.
    pub final_f_gap: f64,
    /// Records of the first seed.
    pub records: Vec<RunRecord>,
}

struct Entry {
    label: &'static str,
    method: Method,
    policy: SamplingPolicy,
    grid: Vec<Multipliers>,
    /// FedPAQ averages models, i.e. `η = γ n'`.
    model_averaging: bool,
}

fn uniform(g: &[f64]) -> Vec<Multipliers> {
    g.iter().copied().map(Multipliers::uniform).collect()
}

fn evaluate(problem: &FiniteSumProblem, compressor: &Compressor, e: Entry, opts: &ReproduceOptions) -> Result<MethodResult, HarnessError> {
    let mut exp = Experiment::theory(problem.clone(), compressor.clone(), e.method, e.policy, BatchRule::Fraction(BATCH_FRACTION))?;
    if e.model_averaging {
        exp.base.eta = Some(exp.base.gamma * exp.scalars()?.n as f64);
    }
    let report = sweep(&exp, &e.grid, opts.epochs, opts.seed)?;
    let spec = exp.spec(report.best);
    let runs = exp.run_seeds(&spec, opts.epochs, opts.seed, opts.seeds)?;
    let final_f_gap = runs.iter().map(|r| r.last().expect("record").f_gap).sum::<f64>() / runs.len() as f64;
    Ok(MethodResult { label: e.label, best: report.best, final_f_gap, records: runs.into_iter().next().expect("seed") })
}

fn prepare(opts: &ReproduceOptions) -> Result<(FiniteSumProblem, Compressor), HarnessError> {
    let settings = dataset_settings(&opts.dataset)?;
    let problem = load_benchmark(&opts.data_file, settings)?;
    let compressor = Compressor::rand_k(problem.dim(), settings.k)?;
    Ok((problem, compressor))
}

/// Q-RR, DIANA-RR, QSGD and DIANA, each tuned on its own grid. DIANA-RR
/// shuffles once, as in the original runs.
pub fn exp1(opts: &ReproduceOptions) -> Result<Vec<MethodResult>, HarnessError> {
    let (problem, compressor) = prepare(opts)?;
    let grid = if opts.full_grid { uniform(&grids::EXP1) } else { uniform(&grids::REDUCED) };
    let entries = [
        (Method::Qrr, SamplingPolicy::ShuffleEveryEpoch),
        (Method::DianaRr, SamplingPolicy::ShuffleOnce),
        (Method::Qsgd, SamplingPolicy::WithReplacement),
        (Method::Diana, SamplingPolicy::WithReplacement),
    ];
    entries
        .into_iter()
        .map(|(method, policy)| {
            let e = Entry { label: method.name(), method, policy, grid: grid.clone(), model_averaging: false };
            evaluate(&problem, &compressor, e, opts)
        })
        .collect()
}

/// Q-NASTYA, DIANA-NASTYA, FedCOM and FedPAQ. The first three tune `γ` and
/// `η` jointly; FedPAQ tunes `γ` only.
pub fn exp2(opts: &ReproduceOptions) -> Result<Vec<MethodResult>, HarnessError> {
    let (problem, compressor) = prepare(opts)?;
    let r = &grids::REDUCED[..];
    let (qn, dn, fc, fp) = if opts.full_grid {
        (
            pair_grid(&grids::Q_NASTYA_GAMMA, &grids::Q_NASTYA_ETA),
            pair_grid(&grids::DIANA_NASTYA, &grids::DIANA_NASTYA),
            pair_grid(&grids::FEDCOM_GAMMA, &grids::FEDCOM_ETA),
            uniform(&grids::FEDPAQ),
        )
    } else {
        (pair_grid(r, r), pair_grid(r, r), pair_grid(r, r), uniform(r))
    };
    let every = SamplingPolicy::ShuffleEveryEpoch;
    let wr = SamplingPolicy::WithReplacement;
    let entries = [
        Entry { label: "q_nastya", method: Method::QNastya, policy: every, grid: qn, model_averaging: false },
        Entry { label: "diana_nastya", method: Method::DianaNastya, policy: every, grid: dn, model_averaging: false },
        Entry { label: "fedcom", method: Method::LocalSgdQ, policy: wr, grid: fc, model_averaging: false },
        Entry { label: "fedpaq", method: Method::LocalSgdQ, policy: wr, grid: fp, model_averaging: true },
    ];
    entries.into_iter().map(|e| evaluate(&problem, &compressor, e, opts)).collect()
}
