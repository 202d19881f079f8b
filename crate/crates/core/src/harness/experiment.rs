use rayon::prelude::*;

use super::config::{DataConfig, ExperimentConfig, StepsizePreset};
use super::data::{load_libsvm, partition, PartitionRule};
use super::synthetic::{make_synthetic, resolve_lambda, SyntheticSpec};
use super::HarnessError;
use crate::algorithms::{batch_plan, AlgorithmError, BatchRule, Method, MethodSpec, Simulation};
use crate::compressors::Compressor;
use crate::diagnostics::{
    estimate_sigma_rad, hetero_constants, lyapunov_diana_nastya, lyapunov_diana_rr, nastya_optimal_shifts, RunRecord,
};
use crate::objective::{solve_reference, FiniteSumProblem, DEFAULT_SOLVE_TOL};
use crate::rng::RngStream;
use crate::shuffling::SamplingPolicy;
use crate::stepsizes::{preset_for, Accuracy, ProblemScalars, Stepsizes};

/// Permutation samples behind the shuffling radius used by accuracy presets.
const SIGMA_RAD_SAMPLES: usize = 200;

/// Learning-rate multipliers applied to a base stepsize.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Multipliers {
    pub gamma: f64,
    /// Falls back to `gamma` when absent.
    pub eta: Option<f64>,
}

impl Multipliers {
    pub fn uniform(k: f64) -> Self {
        Self { gamma: k, eta: None }
    }
}

/// A problem with its reference solution and a method with base stepsizes.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub problem: FiniteSumProblem,
    pub compressor: Compressor,
    pub method: Method,
    /// Stepsizes before any multiplier.
    pub base: Stepsizes,
    pub policy: SamplingPolicy,
    pub batch: BatchRule,
    pub x_star: Vec<f64>,
    pub f_star: f64,
}

pub fn build_problem(cfg: &ExperimentConfig) -> Result<FiniteSumProblem, HarnessError> {
    match &cfg.data {
        DataConfig::Libsvm { path, clients, partition: kind } => {
            let (points, dim) = load_libsvm(path)?;
            let parts = partition(points, PartitionRule { kind: *kind, clients: *clients, seed: cfg.seed })?;
            let kind = crate::objective::LossKind::Logistic;
            let lambda = resolve_lambda(cfg.lambda, kind, parts.clone(), dim)?;
            Ok(FiniteSumProblem::new(parts, dim, lambda, kind)?)
        }
        DataConfig::Synthetic { loss, clients, n, dim, heterogeneity, spread } => {
            let spec = SyntheticSpec {
                kind: *loss,
                clients: *clients,
                n: *n,
                dim: *dim,
                heterogeneity: *heterogeneity,
                spread: *spread,
            };
            make_synthetic(&spec, cfg.lambda, cfg.seed)
        }
    }
}

impl Experiment {
    /// Solves for `x*` and computes theory stepsizes (no accuracy clauses).
    pub fn theory(
        problem: FiniteSumProblem,
        compressor: Compressor,
        method: Method,
        policy: SamplingPolicy,
        batch: BatchRule,
    ) -> Result<Self, HarnessError> {
        let x_star = solve_reference(&problem, DEFAULT_SOLVE_TOL)?;
        let f_star = problem.eval_full(&x_star)?;
        let mut exp = Self {
            problem,
            compressor,
            method,
            base: Stepsizes { gamma: 0.0, eta: None, alpha: None },
            policy,
            batch,
            x_star,
            f_star,
        };
        exp.base = preset_for(method, &exp.scalars()?, None)?;
        Ok(exp)
    }

    pub fn from_config(cfg: &ExperimentConfig) -> Result<Self, HarnessError> {
        let problem = build_problem(cfg)?;
        let compressor = Compressor::new(cfg.compressor, problem.dim())?;
        let m = &cfg.method;
        let policy = cfg.sampling.policy.unwrap_or(m.name.default_policy());
        let batch = match (cfg.sampling.batch_size, cfg.sampling.batch_fraction) {
            (Some(b), _) => BatchRule::Size(b),
            (None, Some(f)) => BatchRule::Fraction(f),
            (None, None) => BatchRule::default(),
        };
        let mut exp = Self::theory(problem, compressor, m.name, policy, batch)?;
        match m.stepsize_preset {
            StepsizePreset::Theory => {
                if let Some(epsilon) = m.epsilon {
                    let acc = exp.accuracy(epsilon)?;
                    exp.base = preset_for(m.name, &exp.scalars()?, Some(&acc))?;
                }
                if let Some(a) = m.alpha {
                    exp.base.alpha = Some(a);
                }
            }
            StepsizePreset::Manual => {
                let omega = exp.compressor.omega();
                exp.base = Stepsizes {
                    gamma: m.gamma.unwrap_or_default(),
                    eta: m.eta.or(m.name.needs_eta().then_some(0.0)),
                    alpha: m.alpha.or(m.name.needs_alpha().then_some(1.0 / (1.0 + omega))),
                };
                if m.name.needs_eta() && m.eta.is_none() {
                    return Err(HarnessError::Config(format!("manual {} needs method.eta", m.name)));
                }
            }
        }
        exp.base = exp.base.scaled(m.multiplier);
        Ok(exp)
    }

    pub fn scalars(&self) -> Result<ProblemScalars, HarnessError> {
        let (_, steps) = batch_plan(&self.problem, self.batch)?;
        let omega = if self.method.compresses() { self.compressor.omega() } else { 0.0 };
        Ok(ProblemScalars::new(self.problem.constants(), omega, self.problem.num_clients(), steps))
    }

    /// Heterogeneity constants and a shuffling-radius estimate at the
    /// ε-free preset stepsize.
    pub fn accuracy(&self, epsilon: f64) -> Result<Accuracy, HarnessError> {
        let h = hetero_constants(&self.problem, &self.x_star)?;
        let sigma_rad_sq = if self.problem.equal_client_len().is_some() {
            estimate_sigma_rad(&self.problem, &self.x_star, self.base.gamma, SIGMA_RAD_SAMPLES, &RngStream::new(0))?.value
        } else {
            0.0
        };
        Ok(Accuracy {
            epsilon,
            sigma_rad_sq,
            zeta_sq: h.zeta_star_sq,
            sigma_sq: h.sigma_star_sq,
            sigma_star_n_sq: h.sigma_star_n_sq.unwrap_or(h.sigma_star_sq),
        })
    }

    pub fn spec(&self, k: Multipliers) -> MethodSpec {
        let mut spec = MethodSpec::new(self.method, self.base.gamma * k.gamma)
            .with_policy(self.policy)
            .with_batch(self.batch);
        spec.eta = self.base.eta.map(|e| e * k.eta.unwrap_or(k.gamma));
        spec.alpha = self.base.alpha;
        spec
    }

    /// Initial record plus one per epoch. Lyapunov values are attached for
    /// the two DIANA shuffling methods.
    pub fn run(&self, spec: &MethodSpec, epochs: usize, seed: u64) -> Result<Vec<RunRecord>, HarnessError> {
        let mut sim = Simulation::new(&self.problem, &self.compressor, spec.clone(), seed)?;
        let omega = self.compressor.omega();
        let alpha = spec.alpha.unwrap_or(0.0);
        let nastya_h = match spec.method {
            Method::DianaNastya if spec.gamma > 0.0 => Some(nastya_optimal_shifts(&self.problem, &self.x_star, spec.gamma)?),
            _ => None,
        };
        let record = |sim: &Simulation<'_>| -> Result<RunRecord, HarnessError> {
            let st = sim.state();
            let lyap = match spec.method {
                Method::DianaRr => Some(lyapunov_diana_rr(
                    st,
                    &self.problem,
                    &self.x_star,
                    spec.gamma,
                    alpha,
                    self.problem.constants().mu_tilde,
                    omega,
                )?),
                Method::DianaNastya => match &nastya_h {
                    Some(h) => Some(lyapunov_diana_nastya(st, h, &self.x_star, spec.eta.unwrap_or(0.0), alpha, omega)?),
                    None => None,
                },
                _ => None,
            };
            Ok(RunRecord::measure(st, &self.problem, &self.x_star, self.f_star, lyap)?)
        };
        let mut out = Vec::with_capacity(epochs + 1);
        out.push(record(&sim)?);
        for _ in 0..epochs {
            sim.run_epoch().map_err(|e| match e {
                AlgorithmError::Diverged { round } => HarnessError::Diverged { round },
                other => other.into(),
            })?;
            out.push(record(&sim)?);
        }
        Ok(out)
    }

    /// [`Experiment::run`] for seeds `seed, seed + 1, ...` in parallel.
    pub fn run_seeds(
        &self,
        spec: &MethodSpec,
        epochs: usize,
        seed: u64,
        seeds: u64,
    ) -> Result<Vec<Vec<RunRecord>>, HarnessError> {
        (seed..seed + seeds)
            .into_par_iter()
            .map(|s| self.run(spec, epochs, s))
            .collect()
    }
}
