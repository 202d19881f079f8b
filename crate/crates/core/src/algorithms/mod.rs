//! Optimization methods as state transitions over [`AlgorithmState`].
//!
//! Clients compute local gradients and build messages; the server (see
//! [`server`]) sees nothing but those messages. A communication round is one
//! inner step for the non-local methods and one full local epoch for the
//! local ones.

mod driver;
pub mod server;
mod steps;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::compressors::Compressor;
use crate::objective::FiniteSumProblem;
use crate::rng::RngStream;
use crate::shuffling::{BatchSchedule, SamplingPolicy};

pub use driver::Simulation;
pub use steps::{
    begin_epoch, run_local_epoch_rr, step_diana, step_diana_nastya, step_diana_rr, step_fedrr, step_local_sgd_q,
    step_nastya, step_q_nastya, step_qrr, step_qsgd, step_rr,
};

/// Iterates with a norm above this are treated as diverged.
pub const DIVERGENCE_NORM: f64 = 1e12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AlgorithmError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("state error: {0}")]
    State(String),
    #[error("iterate diverged at round {round}")]
    Diverged { round: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    /// Compressed distributed random reshuffling.
    #[serde(rename = "qrr")]
    Qrr,
    /// Q-RR with per-sample DIANA shifts.
    #[serde(rename = "diana_rr")]
    DianaRr,
    /// Local RR epoch, compressed pseudo-gradient, server stepsize.
    #[serde(rename = "q_nastya")]
    QNastya,
    /// Q-NASTYA with per-client DIANA shifts.
    #[serde(rename = "diana_nastya")]
    DianaNastya,
    /// Compressed distributed SGD with replacement.
    #[serde(rename = "qsgd")]
    Qsgd,
    /// QSGD with per-client shifts.
    #[serde(rename = "diana")]
    Diana,
    /// Local with-replacement SGD with a compressed model delta (FedPAQ / FedCOM shape).
    #[serde(rename = "local_sgd_q", alias = "fedpaq", alias = "fedcom")]
    LocalSgdQ,
    /// Local RR epoch followed by model averaging.
    #[serde(rename = "fedrr")]
    FedRr,
    /// Q-NASTYA without compression.
    #[serde(rename = "nastya")]
    Nastya,
    /// Uncompressed distributed random reshuffling.
    #[serde(rename = "rr")]
    Rr,
}

impl Method {
    pub const ALL: [Method; 10] = [
        Method::Qrr,
        Method::DianaRr,
        Method::QNastya,
        Method::DianaNastya,
        Method::Qsgd,
        Method::Diana,
        Method::LocalSgdQ,
        Method::FedRr,
        Method::Nastya,
        Method::Rr,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Qrr => "qrr",
            Method::DianaRr => "diana_rr",
            Method::QNastya => "q_nastya",
            Method::DianaNastya => "diana_nastya",
            Method::Qsgd => "qsgd",
            Method::Diana => "diana",
            Method::LocalSgdQ => "local_sgd_q",
            Method::FedRr => "fedrr",
            Method::Nastya => "nastya",
            Method::Rr => "rr",
        }
    }

    /// Has a separate server stepsize `η`.
    pub fn needs_eta(self) -> bool {
        matches!(self, Method::QNastya | Method::DianaNastya | Method::Nastya | Method::LocalSgdQ)
    }

    /// Learns shifts with stepsize `α`.
    pub fn needs_alpha(self) -> bool {
        matches!(self, Method::DianaRr | Method::DianaNastya | Method::Diana)
    }

    /// One communication round per epoch.
    pub fn is_local(self) -> bool {
        matches!(
            self,
            Method::QNastya | Method::DianaNastya | Method::LocalSgdQ | Method::FedRr | Method::Nastya
        )
    }

    /// Sends compressed messages.
    pub fn compresses(self) -> bool {
        !matches!(self, Method::FedRr | Method::Nastya | Method::Rr)
    }

    pub fn with_replacement(self) -> bool {
        matches!(self, Method::Qsgd | Method::Diana | Method::LocalSgdQ)
    }

    pub fn default_policy(self) -> SamplingPolicy {
        if self.with_replacement() {
            SamplingPolicy::WithReplacement
        } else {
            SamplingPolicy::ShuffleEveryEpoch
        }
    }

    pub fn shift_layout(self) -> ShiftLayout {
        match self {
            Method::DianaRr => ShiftLayout::PerSample,
            Method::DianaNastya | Method::Diana => ShiftLayout::PerClient,
            _ => ShiftLayout::None,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = AlgorithmError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "fedpaq" | "fedcom" => return Ok(Method::LocalSgdQ),
            _ => {}
        }
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| AlgorithmError::Config(format!("unknown method {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShiftLayout {
    None,
    PerClient,
    PerSample,
}

/// How each client's minibatch size is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BatchRule {
    /// `b_m = max(1, ⌊fraction · n_m⌋)`.
    Fraction(f64),
    /// Same `b` on every client.
    Size(usize),
}

impl Default for BatchRule {
    fn default() -> Self {
        BatchRule::Size(1)
    }
}

/// A method together with its stepsizes and sampling.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodSpec {
    pub method: Method,
    pub gamma: f64,
    pub eta: Option<f64>,
    pub alpha: Option<f64>,
    pub policy: SamplingPolicy,
    pub batch: BatchRule,
}

impl MethodSpec {
    pub fn new(method: Method, gamma: f64) -> Self {
        Self {
            method,
            gamma,
            eta: None,
            alpha: None,
            policy: method.default_policy(),
            batch: BatchRule::default(),
        }
    }

    pub fn with_eta(mut self, eta: f64) -> Self {
        self.eta = Some(eta);
        self
    }

    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = Some(alpha);
        self
    }

    pub fn with_policy(mut self, policy: SamplingPolicy) -> Self {
        self.policy = policy;
        self
    }

    pub fn with_batch(mut self, batch: BatchRule) -> Self {
        self.batch = batch;
        self
    }

    pub fn validate(&self) -> Result<(), AlgorithmError> {
        let bad = |msg: String| Err(AlgorithmError::Config(msg));
        let m = self.method;
        if !(self.gamma.is_finite() && self.gamma >= 0.0) {
            return bad(format!("{m}: gamma = {} must be finite and >= 0", self.gamma));
        }
        match (m.needs_eta(), self.eta) {
            (true, None) => return bad(format!("{m} requires eta")),
            (false, Some(_)) => return bad(format!("{m} takes no eta")),
            (true, Some(e)) if !(e.is_finite() && e >= 0.0) => return bad(format!("{m}: eta = {e} invalid")),
            _ => {}
        }
        match (m.needs_alpha(), self.alpha) {
            (true, None) => return bad(format!("{m} requires alpha")),
            (false, Some(_)) => return bad(format!("{m} takes no alpha")),
            (true, Some(a)) if !(a.is_finite() && a >= 0.0) => return bad(format!("{m}: alpha = {a} invalid")),
            _ => {}
        }
        let wr = self.policy == SamplingPolicy::WithReplacement;
        if wr != m.with_replacement() {
            return bad(format!("{m} cannot use sampling policy {:?}", self.policy));
        }
        match self.batch {
            BatchRule::Fraction(f) if !(f > 0.0 && f <= 1.0) => bad(format!("batch fraction {f} not in (0, 1]")),
            BatchRule::Size(0) => bad("batch size must be positive".into()),
            _ => Ok(()),
        }
    }
}

/// Per-client minibatch sizes and the common number of steps per epoch.
pub fn batch_plan(problem: &FiniteSumProblem, rule: BatchRule) -> Result<(Vec<usize>, usize), AlgorithmError> {
    let sizes: Vec<usize> = (0..problem.num_clients())
        .map(|m| {
            let n = problem.client_len(m);
            match rule {
                BatchRule::Fraction(f) => crate::shuffling::batch_size_from_fraction(n, f),
                BatchRule::Size(b) => b.min(n),
            }
        })
        .collect();
    let steps: Vec<usize> = sizes
        .iter()
        .enumerate()
        .map(|(m, b)| problem.client_len(m) / b)
        .collect();
    if steps.iter().any(|&s| s != steps[0]) {
        return Err(AlgorithmError::Config(format!(
            "clients take different numbers of steps per epoch ({:?}); equal local dataset sizes are required",
            steps
        )));
    }
    Ok((sizes, steps[0]))
}

/// Shift vectors held by the clients.
#[derive(Debug, Clone, PartialEq)]
pub enum ShiftStore {
    None,
    /// `h_m`, indexed `[m]`.
    PerClient(Vec<Vec<f64>>),
    /// `h_m^i`, indexed `[m][i]`.
    PerSample(Vec<Vec<Vec<f64>>>),
}

impl ShiftStore {
    pub fn zeros(layout: ShiftLayout, problem: &FiniteSumProblem) -> Self {
        let d = problem.dim();
        match layout {
            ShiftLayout::None => ShiftStore::None,
            ShiftLayout::PerClient => ShiftStore::PerClient(vec![vec![0.0; d]; problem.num_clients()]),
            ShiftLayout::PerSample => ShiftStore::PerSample(
                (0..problem.num_clients())
                    .map(|m| vec![vec![0.0; d]; problem.client_len(m)])
                    .collect(),
            ),
        }
    }

    pub fn layout(&self) -> ShiftLayout {
        match self {
            ShiftStore::None => ShiftLayout::None,
            ShiftStore::PerClient(_) => ShiftLayout::PerClient,
            ShiftStore::PerSample(_) => ShiftLayout::PerSample,
        }
    }

    /// Mean of the shifts over `slots` of client `m` (for per-client
    /// stores, the client's single shift).
    pub fn batch_shift(&self, m: usize, slots: &[usize], out: &mut [f64]) {
        match self {
            ShiftStore::None => out.iter_mut().for_each(|o| *o = 0.0),
            ShiftStore::PerClient(h) => out.copy_from_slice(&h[m]),
            ShiftStore::PerSample(h) => {
                out.iter_mut().for_each(|o| *o = 0.0);
                for &i in slots {
                    for (o, v) in out.iter_mut().zip(&h[m][i]) {
                        *o += v;
                    }
                }
                let b = slots.len() as f64;
                out.iter_mut().for_each(|o| *o /= b);
            }
        }
    }

    /// `h ← h + α q` on the given slots.
    pub fn absorb(&mut self, m: usize, slots: &[usize], alpha: f64, q: &[f64]) {
        match self {
            ShiftStore::None => {}
            ShiftStore::PerClient(h) => {
                for (hj, qj) in h[m].iter_mut().zip(q) {
                    *hj += alpha * qj;
                }
            }
            ShiftStore::PerSample(h) => {
                for &i in slots {
                    for (hj, qj) in h[m][i].iter_mut().zip(q) {
                        *hj += alpha * qj;
                    }
                }
            }
        }
    }
}

/// Sample order of every client for one epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochPlan {
    pub epoch: usize,
    pub schedules: Vec<BatchSchedule>,
}

/// Everything a round needs besides the mutable state.
#[derive(Debug, Clone)]
pub struct Context<'a> {
    pub problem: &'a FiniteSumProblem,
    pub compressor: &'a Compressor,
    pub stream: RngStream,
    pub policy: SamplingPolicy,
    pub batch_sizes: Vec<usize>,
    pub steps_per_epoch: usize,
}

impl<'a> Context<'a> {
    pub fn new(
        problem: &'a FiniteSumProblem,
        compressor: &'a Compressor,
        seed: u64,
        policy: SamplingPolicy,
        batch: BatchRule,
    ) -> Result<Self, AlgorithmError> {
        if compressor.dim() != problem.dim() {
            return Err(AlgorithmError::Config(format!(
                "compressor dimension {} does not match problem dimension {}",
                compressor.dim(),
                problem.dim()
            )));
        }
        let (batch_sizes, steps_per_epoch) = batch_plan(problem, batch)?;
        Ok(Self {
            problem,
            compressor,
            stream: RngStream::new(seed),
            policy,
            batch_sizes,
            steps_per_epoch,
        })
    }
}

/// Mutable state of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct AlgorithmState {
    pub x: Vec<f64>,
    /// Client-side shifts.
    pub shifts: ShiftStore,
    /// Server-side copy: per-sample mirror for DIANA-RR, the single running
    /// mean `h̄` for per-client methods.
    pub server_shifts: ShiftStore,
    pub epoch: usize,
    /// Inner step within the current epoch.
    pub step: usize,
    /// Communication rounds completed.
    pub rounds: u64,
    pub bits_up: u64,
    pub bits_down: u64,
    pub plan: Option<EpochPlan>,
}

impl AlgorithmState {
    pub fn new(x0: Vec<f64>, layout: ShiftLayout, problem: &FiniteSumProblem) -> Result<Self, AlgorithmError> {
        if x0.len() != problem.dim() {
            return Err(AlgorithmError::Config(format!(
                "x0 has dimension {}, problem has {}",
                x0.len(),
                problem.dim()
            )));
        }
        let shifts = ShiftStore::zeros(layout, problem);
        let server_shifts = match layout {
            ShiftLayout::PerClient => ShiftStore::PerClient(vec![vec![0.0; problem.dim()]]),
            _ => shifts.clone(),
        };
        Ok(Self {
            x: x0,
            shifts,
            server_shifts,
            epoch: 0,
            step: 0,
            rounds: 0,
            bits_up: 0,
            bits_down: 0,
            plan: None,
        })
    }

    /// Plan of the current epoch, if drawn.
    pub fn current_plan(&self) -> Option<&EpochPlan> {
        self.plan.as_ref().filter(|p| p.epoch == self.epoch)
    }

    /// Plan of the most recently drawn epoch (possibly already finished).
    pub fn last_plan(&self) -> Option<&EpochPlan> {
        self.plan.as_ref()
    }
}

#[cfg(test)]
mod tests;
