use super::steps::*;
use super::{AlgorithmError, AlgorithmState, Context, Method, MethodSpec};
use crate::compressors::Compressor;
use crate::objective::FiniteSumProblem;

/// Runs one method on one problem with one seed.
#[derive(Debug, Clone)]
pub struct Simulation<'a> {
    ctx: Context<'a>,
    spec: MethodSpec,
    state: AlgorithmState,
}

impl<'a> Simulation<'a> {
    /// Starts from `x_0 = 0` with zero shifts.
    pub fn new(
        problem: &'a FiniteSumProblem,
        compressor: &'a Compressor,
        spec: MethodSpec,
        seed: u64,
    ) -> Result<Self, AlgorithmError> {
        Self::with_start(problem, compressor, spec, seed, vec![0.0; problem.dim()])
    }

    pub fn with_start(
        problem: &'a FiniteSumProblem,
        compressor: &'a Compressor,
        spec: MethodSpec,
        seed: u64,
        x0: Vec<f64>,
    ) -> Result<Self, AlgorithmError> {
        spec.validate()?;
        if spec.method.is_local() && spec.method != Method::FedRr && spec.gamma <= 0.0 {
            return Err(AlgorithmError::Config(format!("{} needs gamma > 0", spec.method)));
        }
        let ctx = Context::new(problem, compressor, seed, spec.policy, spec.batch)?;
        let state = AlgorithmState::new(x0, spec.method.shift_layout(), problem)?;
        Ok(Self { ctx, spec, state })
    }

    pub fn state(&self) -> &AlgorithmState {
        &self.state
    }

    pub fn state_mut(&mut self) -> &mut AlgorithmState {
        &mut self.state
    }

    pub fn context(&self) -> &Context<'a> {
        &self.ctx
    }

    pub fn spec(&self) -> &MethodSpec {
        &self.spec
    }

    pub fn steps_per_epoch(&self) -> usize {
        self.ctx.steps_per_epoch
    }

    pub fn rounds_per_epoch(&self) -> usize {
        if self.spec.method.is_local() {
            1
        } else {
            self.ctx.steps_per_epoch
        }
    }

    /// One communication round.
    pub fn round(&mut self) -> Result<(), AlgorithmError> {
        let s = &self.spec;
        let (g, eta, alpha) = (s.gamma, s.eta.unwrap_or(0.0), s.alpha.unwrap_or(0.0));
        let st = &mut self.state;
        let ctx = &self.ctx;
        begin_epoch(st, ctx);
        match s.method {
            Method::Qrr => step_qrr(st, ctx, g),
            Method::Rr => step_rr(st, ctx, g),
            Method::DianaRr => step_diana_rr(st, ctx, g, alpha),
            Method::Qsgd => step_qsgd(st, ctx, g),
            Method::Diana => step_diana(st, ctx, g, alpha),
            Method::QNastya => step_q_nastya(st, ctx, g, eta),
            Method::Nastya => step_nastya(st, ctx, g, eta),
            Method::FedRr => step_fedrr(st, ctx, g),
            Method::DianaNastya => step_diana_nastya(st, ctx, g, eta, alpha),
            Method::LocalSgdQ => step_local_sgd_q(st, ctx, g, eta),
        }
    }

    /// Rounds until the epoch counter advances.
    pub fn run_epoch(&mut self) -> Result<(), AlgorithmError> {
        let target = self.state.epoch + 1;
        while self.state.epoch < target {
            self.round()?;
        }
        Ok(())
    }
}
