//! Client-side computation and the per-method round functions.

use super::server::{self, Message, Rule};
use super::{AlgorithmError, AlgorithmState, Context, EpochPlan, ShiftLayout, DIVERGENCE_NORM};
use crate::objective::FiniteSumProblem;
use crate::rng::Purpose;
use crate::shuffling::{draw_with_replacement, epoch_order, BatchSchedule, SamplingPolicy};

/// Draws every client's sample order for the current epoch unless already drawn.
pub fn begin_epoch(state: &mut AlgorithmState, ctx: &Context) {
    if state.current_plan().is_some() {
        return;
    }
    let epoch = state.epoch;
    let schedules = (0..ctx.problem.num_clients())
        .map(|m| {
            let n = ctx.problem.client_len(m);
            let b = ctx.batch_sizes[m];
            let order = match ctx.policy {
                SamplingPolicy::WithReplacement => (0..ctx.steps_per_epoch)
                    .flat_map(|i| draw_with_replacement(n, b, &mut ctx.stream.rng(Purpose::Sampling, m, epoch, i)))
                    .collect(),
                policy => epoch_order(&ctx.stream, policy, m, epoch, n),
            };
            BatchSchedule::new(order, b)
        })
        .collect();
    state.plan = Some(EpochPlan { epoch, schedules });
}

fn plan_of(state: &AlgorithmState) -> Result<EpochPlan, AlgorithmError> {
    state
        .current_plan()
        .cloned()
        .ok_or_else(|| AlgorithmError::State(format!("no sample plan drawn for epoch {}", state.epoch)))
}

fn require_policy(ctx: &Context, with_replacement: bool, name: &str) -> Result<(), AlgorithmError> {
    if (ctx.policy == SamplingPolicy::WithReplacement) != with_replacement {
        return Err(AlgorithmError::State(format!("{name} cannot run with sampling policy {:?}", ctx.policy)));
    }
    Ok(())
}

fn require_shifts(state: &AlgorithmState, layout: ShiftLayout, name: &str) -> Result<(), AlgorithmError> {
    if state.shifts.layout() != layout {
        return Err(AlgorithmError::State(format!(
            "{name} needs shift layout {layout:?}, state has {:?}",
            state.shifts.layout()
        )));
    }
    Ok(())
}

fn finish_round(state: &mut AlgorithmState, ctx: &Context, bits_per_message: u64) -> Result<(), AlgorithmError> {
    let m = ctx.problem.num_clients() as u64;
    state.rounds += 1;
    state.bits_up += m * bits_per_message;
    state.bits_down += m * 64 * ctx.problem.dim() as u64;
    let norm_sq: f64 = state.x.iter().map(|v| v * v).sum();
    if !norm_sq.is_finite() || norm_sq.sqrt() > DIVERGENCE_NORM {
        return Err(AlgorithmError::Diverged { round: state.rounds });
    }
    Ok(())
}

fn advance_step(state: &mut AlgorithmState, ctx: &Context) {
    state.step += 1;
    if state.step >= ctx.steps_per_epoch {
        state.step = 0;
        state.epoch += 1;
    }
}

#[derive(Clone, Copy)]
enum Upload {
    Raw,
    Compressed,
    Diana { alpha: f64 },
}

fn nonlocal_round(state: &mut AlgorithmState, ctx: &Context, gamma: f64, upload: Upload) -> Result<(), AlgorithmError> {
    let plan = plan_of(state)?;
    let (epoch, step) = (state.epoch, state.step);
    let d = ctx.problem.dim();
    let mut g = vec![0.0; d];
    let mut h = vec![0.0; d];
    let mut messages = Vec::with_capacity(ctx.problem.num_clients());
    for (m, sched) in plan.schedules.iter().enumerate() {
        let batch = sched.batch(step);
        ctx.problem.batch_grad_into(m, batch, &state.x, &mut g);
        let mut payload = vec![0.0; d];
        let mut slots = Vec::new();
        match upload {
            Upload::Raw => payload.copy_from_slice(&g),
            Upload::Compressed => {
                let mut rng = ctx.stream.rng(Purpose::Compression, m, epoch, step);
                ctx.compressor.compress_into(&g, &mut rng, &mut payload);
            }
            Upload::Diana { alpha } => {
                state.shifts.batch_shift(m, batch, &mut h);
                for (gj, hj) in g.iter_mut().zip(&h) {
                    *gj -= hj;
                }
                let mut rng = ctx.stream.rng(Purpose::Compression, m, epoch, step);
                ctx.compressor.compress_into(&g, &mut rng, &mut payload);
                state.shifts.absorb(m, batch, alpha, &payload);
                if state.shifts.layout() == ShiftLayout::PerSample {
                    slots = batch.to_vec();
                }
            }
        }
        messages.push(Message { client: m, payload, slots });
    }
    let (rule, bits) = match upload {
        Upload::Raw => (Rule::Plain, 64 * d as u64),
        Upload::Compressed => (Rule::Plain, ctx.compressor.bits_sent()),
        Upload::Diana { alpha } => (
            match state.shifts.layout() {
                ShiftLayout::PerSample => Rule::PerSampleShifts { alpha },
                _ => Rule::MeanShift { alpha },
            },
            ctx.compressor.bits_sent(),
        ),
    };
    server::apply(&mut state.x, &mut state.server_shifts, &messages, gamma, rule);
    advance_step(state, ctx);
    finish_round(state, ctx, bits)
}

/// Q-RR inner step: `x ← x − γ (1/M) Σ_m Q(∇f_m^{π_m^i}(x))`.
pub fn step_qrr(state: &mut AlgorithmState, ctx: &Context, gamma: f64) -> Result<(), AlgorithmError> {
    require_policy(ctx, false, "qrr")?;
    nonlocal_round(state, ctx, gamma, Upload::Compressed)
}

/// Uncompressed distributed RR inner step.
pub fn step_rr(state: &mut AlgorithmState, ctx: &Context, gamma: f64) -> Result<(), AlgorithmError> {
    require_policy(ctx, false, "rr")?;
    nonlocal_round(state, ctx, gamma, Upload::Raw)
}

/// DIANA-RR inner step: clients send `Q(∇f_m^{π_m^i}(x) − h_m^{π_m^i})` and
/// learn the visited shifts with `α`; the server steps along
/// `(1/M) Σ_m (h_m^{π_m^i} + Q(…))`.
pub fn step_diana_rr(state: &mut AlgorithmState, ctx: &Context, gamma: f64, alpha: f64) -> Result<(), AlgorithmError> {
    require_policy(ctx, false, "diana_rr")?;
    require_shifts(state, ShiftLayout::PerSample, "diana_rr")?;
    nonlocal_round(state, ctx, gamma, Upload::Diana { alpha })
}

/// QSGD step with with-replacement minibatches.
pub fn step_qsgd(state: &mut AlgorithmState, ctx: &Context, gamma: f64) -> Result<(), AlgorithmError> {
    require_policy(ctx, true, "qsgd")?;
    nonlocal_round(state, ctx, gamma, Upload::Compressed)
}

/// DIANA step: one shift per client.
pub fn step_diana(state: &mut AlgorithmState, ctx: &Context, gamma: f64, alpha: f64) -> Result<(), AlgorithmError> {
    require_policy(ctx, true, "diana")?;
    require_shifts(state, ShiftLayout::PerClient, "diana")?;
    nonlocal_round(state, ctx, gamma, Upload::Diana { alpha })
}

/// `⌊n/b⌋` sequential local steps `x ← x − γ ∇f_m^{B}(x)` following `schedule`.
pub fn run_local_epoch_rr(
    problem: &FiniteSumProblem,
    m: usize,
    schedule: &BatchSchedule,
    x0: &[f64],
    gamma: f64,
) -> Vec<f64> {
    let mut x = x0.to_vec();
    let mut g = vec![0.0; x.len()];
    for batch in schedule.batches() {
        problem.batch_grad_into(m, batch, &x, &mut g);
        for (xi, gi) in x.iter_mut().zip(&g) {
            *xi -= gamma * gi;
        }
    }
    x
}

#[derive(Clone, Copy)]
enum LocalUpload {
    Model,
    Raw,
    Compressed,
    Diana { alpha: f64 },
}

fn local_round(
    state: &mut AlgorithmState,
    ctx: &Context,
    gamma: f64,
    eta: f64,
    upload: LocalUpload,
) -> Result<(), AlgorithmError> {
    if state.step != 0 {
        return Err(AlgorithmError::State("local round started mid-epoch".into()));
    }
    if !matches!(upload, LocalUpload::Model) && gamma <= 0.0 {
        return Err(AlgorithmError::Config("local methods with a server step need gamma > 0".into()));
    }
    let plan = plan_of(state)?;
    let epoch = state.epoch;
    let d = ctx.problem.dim();
    let scale = 1.0 / (gamma * ctx.steps_per_epoch as f64);
    let mut h = vec![0.0; d];
    let mut messages = Vec::with_capacity(ctx.problem.num_clients());
    for (m, sched) in plan.schedules.iter().enumerate() {
        let xm = run_local_epoch_rr(ctx.problem, m, sched, &state.x, gamma);
        let mut payload = vec![0.0; d];
        match upload {
            LocalUpload::Model => payload = xm,
            _ => {
                let mut g: Vec<f64> = state.x.iter().zip(&xm).map(|(a, b)| (a - b) * scale).collect();
                match upload {
                    LocalUpload::Raw => payload = g,
                    LocalUpload::Compressed => {
                        let mut rng = ctx.stream.rng(Purpose::Compression, m, epoch, 0);
                        ctx.compressor.compress_into(&g, &mut rng, &mut payload);
                    }
                    LocalUpload::Diana { alpha } => {
                        state.shifts.batch_shift(m, &[], &mut h);
                        for (gj, hj) in g.iter_mut().zip(&h) {
                            *gj -= hj;
                        }
                        let mut rng = ctx.stream.rng(Purpose::Compression, m, epoch, 0);
                        ctx.compressor.compress_into(&g, &mut rng, &mut payload);
                        state.shifts.absorb(m, &[], alpha, &payload);
                    }
                    LocalUpload::Model => unreachable!(),
                }
            }
        }
        messages.push(Message {
            client: m,
            payload,
            slots: Vec::new(),
        });
    }
    let bits = match upload {
        LocalUpload::Model | LocalUpload::Raw => 64 * d as u64,
        _ => ctx.compressor.bits_sent(),
    };
    match upload {
        LocalUpload::Model => server::average_models(&mut state.x, &messages),
        LocalUpload::Diana { alpha } => {
            server::apply(&mut state.x, &mut state.server_shifts, &messages, eta, Rule::MeanShift { alpha })
        }
        _ => server::apply(&mut state.x, &mut state.server_shifts, &messages, eta, Rule::Plain),
    }
    state.epoch += 1;
    finish_round(state, ctx, bits)
}

/// Q-NASTYA round: local RR epoch on every client, then
/// `x ← x − η (1/M) Σ_m Q((x − x_m^n)/(γn))`.
pub fn step_q_nastya(state: &mut AlgorithmState, ctx: &Context, gamma: f64, eta: f64) -> Result<(), AlgorithmError> {
    require_policy(ctx, false, "q_nastya")?;
    local_round(state, ctx, gamma, eta, LocalUpload::Compressed)
}

/// Q-NASTYA without compression.
pub fn step_nastya(state: &mut AlgorithmState, ctx: &Context, gamma: f64, eta: f64) -> Result<(), AlgorithmError> {
    require_policy(ctx, false, "nastya")?;
    local_round(state, ctx, gamma, eta, LocalUpload::Raw)
}

/// FedRR round: local RR epoch on every client, then model averaging.
pub fn step_fedrr(state: &mut AlgorithmState, ctx: &Context, gamma: f64) -> Result<(), AlgorithmError> {
    require_policy(ctx, false, "fedrr")?;
    local_round(state, ctx, gamma, 0.0, LocalUpload::Model)
}

/// DIANA-NASTYA round: clients send `Q(g_m − h_m)` and set
/// `h_m ← h_m + α Q(g_m − h_m)`; the server steps along `h̄ + mean Q(…)` and
/// keeps `h̄` in sync.
pub fn step_diana_nastya(
    state: &mut AlgorithmState,
    ctx: &Context,
    gamma: f64,
    eta: f64,
    alpha: f64,
) -> Result<(), AlgorithmError> {
    require_policy(ctx, false, "diana_nastya")?;
    require_shifts(state, ShiftLayout::PerClient, "diana_nastya")?;
    local_round(state, ctx, gamma, eta, LocalUpload::Diana { alpha })
}

/// Local with-replacement SGD followed by a compressed, rescaled model delta.
pub fn step_local_sgd_q(state: &mut AlgorithmState, ctx: &Context, gamma: f64, eta: f64) -> Result<(), AlgorithmError> {
    require_policy(ctx, true, "local_sgd_q")?;
    local_round(state, ctx, gamma, eta, LocalUpload::Compressed)
}
