use super::DiagnosticsError;
use crate::algorithms::{AlgorithmState, ShiftStore};
use crate::objective::{dist_sq, FiniteSumProblem};

fn shift_weight(omega: f64, alpha: f64, lr: f64, m: usize) -> Result<f64, DiagnosticsError> {
    if omega == 0.0 {
        return Ok(0.0);
    }
    if alpha <= 0.0 {
        return Err(DiagnosticsError::Unsupported("Lyapunov weight needs alpha > 0 when omega > 0".into()));
    }
    Ok(omega * lr * lr / (alpha * (m * m) as f64))
}

/// `‖x − x*‖² + (4ωγ²/(αM²)) Σ_m Σ_j (1−γμ̃)^j ‖Δ_m^j‖²`, where `Δ_m^j` is
/// the shift of the `j`-th batch of client `m` minus that batch's gradient
/// at `x*`. The order is the most recently drawn plan (identity order
/// before the first round).
pub fn lyapunov_diana_rr(
    state: &AlgorithmState,
    problem: &FiniteSumProblem,
    x_star: &[f64],
    gamma: f64,
    alpha: f64,
    mu_tilde: f64,
    omega: f64,
) -> Result<f64, DiagnosticsError> {
    let dist = dist_sq(&state.x, x_star);
    let w = 4.0 * shift_weight(omega, alpha, gamma, problem.num_clients())?;
    if w == 0.0 {
        return Ok(dist);
    }
    let ShiftStore::PerSample(_) = &state.shifts else {
        return Err(DiagnosticsError::Unsupported("DIANA-RR Lyapunov needs per-sample shifts".into()));
    };
    let d = problem.dim();
    let (mut h, mut g) = (vec![0.0; d], vec![0.0; d]);
    let mut sum = 0.0;
    for m in 0..problem.num_clients() {
        let identity: Vec<Vec<usize>>;
        let batches: Vec<&[usize]> = match state.last_plan() {
            Some(plan) => plan.schedules[m].batches().collect(),
            None => {
                identity = (0..problem.client_len(m)).map(|i| vec![i]).collect();
                identity.iter().map(|v| v.as_slice()).collect()
            }
        };
        let mut decay = 1.0;
        for batch in batches {
            state.shifts.batch_shift(m, batch, &mut h);
            problem.batch_grad_into(m, batch, x_star, &mut g);
            sum += decay * dist_sq(&h, &g);
            decay *= 1.0 - gamma * mu_tilde;
        }
    }
    Ok(dist + w * sum)
}

/// Neighborhood `2γ²σ²_rad/μ̃` that DIANA-RR's Lyapunov function settles in.
pub fn diana_rr_floor(gamma: f64, sigma_rad_sq: f64, mu_tilde: f64) -> f64 {
    2.0 * gamma * gamma * sigma_rad_sq / mu_tilde
}

/// Neighborhood `(9/2)(γ²nL/μ)((n+1)ζ*² + σ*²)` for DIANA-NASTYA.
pub fn diana_nastya_floor(gamma: f64, n: usize, l: f64, mu: f64, zeta_star_sq: f64, sigma_star_sq: f64) -> f64 {
    let n = n as f64;
    4.5 * gamma * gamma * n * l / mu * ((n + 1.0) * zeta_star_sq + sigma_star_sq)
}

/// `h*_m = (x* − x^n_{*,m}) / (γn)` with `x^{i+1}_{*,m} = x^i_{*,m} − γ∇f_m(x*)`.
/// The recursion telescopes, so this is `∇f_m(x*)` up to rounding.
pub fn nastya_optimal_shifts(
    problem: &FiniteSumProblem,
    x_star: &[f64],
    gamma: f64,
) -> Result<Vec<Vec<f64>>, DiagnosticsError> {
    if !(gamma > 0.0) {
        return Err(DiagnosticsError::Unsupported(format!("gamma must be positive, got {gamma}")));
    }
    (0..problem.num_clients())
        .map(|m| {
            let gm = problem.grad_client(m, x_star)?;
            let n = problem.client_len(m);
            let mut x = x_star.to_vec();
            for _ in 0..n {
                x.iter_mut().zip(&gm).for_each(|(xj, gj)| *xj -= gamma * gj);
            }
            Ok(x_star.iter().zip(&x).map(|(a, b)| (a - b) / (gamma * n as f64)).collect())
        })
        .collect()
}

/// `‖x − x*‖² + (8ωη²/(αM²)) Σ_m ‖h_m − h*_m‖²`.
pub fn lyapunov_diana_nastya(
    state: &AlgorithmState,
    optimal_shifts: &[Vec<f64>],
    x_star: &[f64],
    eta: f64,
    alpha: f64,
    omega: f64,
) -> Result<f64, DiagnosticsError> {
    let dist = dist_sq(&state.x, x_star);
    let w = 8.0 * shift_weight(omega, alpha, eta, optimal_shifts.len())?;
    if w == 0.0 {
        return Ok(dist);
    }
    let ShiftStore::PerClient(h) = &state.shifts else {
        return Err(DiagnosticsError::Unsupported("DIANA-NASTYA Lyapunov needs per-client shifts".into()));
    };
    let sum: f64 = h.iter().zip(optimal_shifts).map(|(a, b)| dist_sq(a, b)).sum();
    Ok(dist + w * sum)
}
