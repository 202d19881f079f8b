//! Theoretical stepsizes `(γ, η, α)` for each method.
//!
//! Every preset has an ε-free form (the convergence caps, used for
//! constant-stepsize runs) and an accuracy form that adds the
//! ε-dependent clauses.

use thiserror::Error;

use crate::algorithms::Method;
use crate::objective::CurvatureConstants;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StepsizeError {
    #[error("preset requires a strongly convex problem (mu_tilde > 0)")]
    NotStronglyConvex,
    #[error("preset produced a non-positive or non-finite stepsize ({0})")]
    Degenerate(f64),
}

/// Problem scalars the presets consume.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProblemScalars {
    pub l_max: f64,
    pub l_tilde: f64,
    pub mu: f64,
    pub mu_tilde: f64,
    pub omega: f64,
    /// Number of clients `M`.
    pub clients: usize,
    /// Steps per epoch `n`.
    pub n: usize,
}

impl ProblemScalars {
    pub fn new(c: &CurvatureConstants, omega: f64, clients: usize, n: usize) -> Self {
        Self {
            l_max: c.l_max,
            l_tilde: c.l_tilde,
            mu: c.mu,
            mu_tilde: c.mu_tilde,
            omega,
            clients,
            n,
        }
    }

    fn w_over_m(&self) -> f64 {
        self.omega / self.clients as f64
    }

    fn alpha(&self) -> f64 {
        1.0 / (1.0 + self.omega)
    }
}

/// Target accuracy and the heterogeneity constants its clauses need.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Accuracy {
    pub epsilon: f64,
    pub sigma_rad_sq: f64,
    pub zeta_sq: f64,
    pub sigma_sq: f64,
    pub sigma_star_n_sq: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stepsizes {
    pub gamma: f64,
    pub eta: Option<f64>,
    pub alpha: Option<f64>,
}

impl Stepsizes {
    /// Multiplies the learning rates (not α) by `k`.
    pub fn scaled(self, k: f64) -> Self {
        Self {
            gamma: self.gamma * k,
            eta: self.eta.map(|e| e * k),
            alpha: self.alpha,
        }
    }
}

/// `num / den`, infinite when the denominator vanishes.
fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        f64::INFINITY
    } else {
        num / den
    }
}

fn min_of(clauses: &[f64]) -> Result<f64, StepsizeError> {
    let v = clauses.iter().copied().fold(f64::INFINITY, f64::min);
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(StepsizeError::Degenerate(v))
    }
}

fn need_strong(p: &ProblemScalars) -> Result<(), StepsizeError> {
    if p.mu_tilde > 0.0 {
        Ok(())
    } else {
        Err(StepsizeError::NotStronglyConvex)
    }
}

/// Q-RR: `γ = 1/(L̃ + 2(ω/M)L_max)`; the accuracy form adds
/// `√(εμ̃/(6σ²_rad))` and `εμ̃M/(6ω(ζ*² + σ*²))`.
pub fn preset_qrr(p: &ProblemScalars, acc: Option<&Accuracy>) -> Result<f64, StepsizeError> {
    need_strong(p)?;
    let mut clauses = vec![1.0 / (p.l_tilde + 2.0 * p.w_over_m() * p.l_max)];
    if let Some(a) = acc {
        clauses.push(ratio(a.epsilon * p.mu_tilde, 6.0 * a.sigma_rad_sq).sqrt());
        clauses.push(ratio(
            a.epsilon * p.mu_tilde * p.clients as f64,
            6.0 * p.omega * (a.zeta_sq + a.sigma_sq),
        ));
    }
    min_of(&clauses)
}

/// DIANA-RR: `α = 1/(1+ω)`, `γ = min{α/(2nμ̃), 1/(L̃ + 6(ω/M)L_max)}` plus
/// `√(εμ̃)/(2σ_rad)` in the accuracy form.
pub fn preset_diana_rr(p: &ProblemScalars, acc: Option<&Accuracy>) -> Result<Stepsizes, StepsizeError> {
    need_strong(p)?;
    let alpha = p.alpha();
    let mut clauses = vec![
        alpha / (2.0 * p.n as f64 * p.mu_tilde),
        1.0 / (p.l_tilde + 6.0 * p.w_over_m() * p.l_max),
    ];
    if let Some(a) = acc {
        clauses.push(ratio((a.epsilon * p.mu_tilde).sqrt(), 2.0 * a.sigma_rad_sq.sqrt()));
    }
    Ok(Stepsizes {
        gamma: min_of(&clauses)?,
        eta: None,
        alpha: Some(alpha),
    })
}

fn nastya_eps_clause(p: &ProblemScalars, a: &Accuracy) -> f64 {
    let n = p.n as f64;
    (a.epsilon * p.mu * n / (9.0 * p.l_max)).sqrt() * ratio(1.0, ((n + 1.0) * a.zeta_sq + a.sigma_sq).sqrt())
}

/// Q-NASTYA: `η = 1/(16L_max(1+ω/M))` (accuracy form adds
/// `√(εμn/(9L_max))((n+1)ζ*² + σ*²)^{-1/2}` and `εμM/(24ωζ*²)`), `γ = η/n`.
pub fn preset_q_nastya(p: &ProblemScalars, acc: Option<&Accuracy>) -> Result<Stepsizes, StepsizeError> {
    need_strong(p)?;
    let mut clauses = vec![1.0 / (16.0 * p.l_max * (1.0 + p.w_over_m()))];
    if let Some(a) = acc {
        clauses.push(nastya_eps_clause(p, a));
        clauses.push(ratio(a.epsilon * p.mu * p.clients as f64, 24.0 * p.omega * a.zeta_sq));
    }
    let eta = min_of(&clauses)?;
    let n = p.n as f64;
    Ok(Stepsizes {
        gamma: (eta / n).min(1.0 / (5.0 * n * p.l_max)),
        eta: Some(eta),
        alpha: None,
    })
}

/// DIANA-NASTYA: `α = 1/(1+ω)`, `η = min{α/(2μ), 1/(16L_max(1+9ω/M))}` plus
/// the accuracy clause, `γ = η/n`.
pub fn preset_diana_nastya(p: &ProblemScalars, acc: Option<&Accuracy>) -> Result<Stepsizes, StepsizeError> {
    need_strong(p)?;
    let alpha = p.alpha();
    let mut clauses = vec![
        ratio(alpha, 2.0 * p.mu),
        1.0 / (16.0 * p.l_max * (1.0 + 9.0 * p.w_over_m())),
    ];
    if let Some(a) = acc {
        clauses.push(nastya_eps_clause(p, a));
    }
    let eta = min_of(&clauses)?;
    let n = p.n as f64;
    Ok(Stepsizes {
        gamma: (eta / n).min(1.0 / (16.0 * p.l_max * n)),
        eta: Some(eta),
        alpha: Some(alpha),
    })
}

/// Q-RR when only `f` (not each summand) is strongly convex:
/// `γ = 1/(16n(L̃ + ω/(Mn) L_max))`, and in the accuracy form also
/// `√(εμ/(64nL̃))((ω/M)Δ² + σ²_{*,n})^{-1/2}` and `εμM/(24ωΔ²)` with
/// `Δ² = ζ*² + σ*²`.
pub fn preset_qrr_convex(p: &ProblemScalars, acc: Option<&Accuracy>) -> Result<f64, StepsizeError> {
    let n = p.n as f64;
    let mut clauses = vec![1.0 / (16.0 * n * (p.l_tilde + p.omega / (p.clients as f64 * n) * p.l_max))];
    if let Some(a) = acc {
        let delta = a.zeta_sq + a.sigma_sq;
        clauses.push(
            (a.epsilon * p.mu / (64.0 * n * p.l_tilde)).sqrt()
                * ratio(1.0, (p.w_over_m() * delta + a.sigma_star_n_sq).sqrt()),
        );
        clauses.push(ratio(a.epsilon * p.mu * p.clients as f64, 24.0 * p.omega * delta));
    }
    min_of(&clauses)
}

/// DIANA-RR when only `f` is strongly convex. The ε-free form is the
/// convergence cap `min{α/(nμ), 1/(12n(L̃ + 11ω/(Mn) L_max))}`; the accuracy form
/// is `min{α/(2nμ), same, √(εμ/(40nL̃σ²_{*,n}))}`.
pub fn preset_diana_rr_convex(p: &ProblemScalars, acc: Option<&Accuracy>) -> Result<Stepsizes, StepsizeError> {
    let n = p.n as f64;
    let alpha = p.alpha();
    let cap = 1.0 / (12.0 * n * (p.l_tilde + 11.0 * p.omega / (p.clients as f64 * n) * p.l_max));
    let clauses = match acc {
        None => vec![ratio(alpha, n * p.mu), cap],
        Some(a) => vec![
            ratio(alpha, 2.0 * n * p.mu),
            cap,
            ratio(a.epsilon * p.mu, 40.0 * n * p.l_tilde * a.sigma_star_n_sq).sqrt(),
        ],
    };
    Ok(Stepsizes {
        gamma: min_of(&clauses)?,
        eta: None,
        alpha: Some(alpha),
    })
}

/// Lyapunov weight `c = 10ω/(αMn)` of the convex-summand DIANA-RR analysis.
pub fn diana_rr_convex_lyapunov_constant(p: &ProblemScalars) -> f64 {
    10.0 * p.omega / (p.alpha() * p.clients as f64 * p.n as f64)
}

/// QSGD and DIANA baselines. These follow the same structural min-formulas
/// as the shuffled methods and have no separate derivation here.
pub fn preset_qsgd(p: &ProblemScalars, acc: Option<&Accuracy>) -> Result<f64, StepsizeError> {
    need_strong(p)?;
    let mut clauses = vec![1.0 / ((1.0 + 2.0 * p.w_over_m()) * p.l_max)];
    if let Some(a) = acc {
        clauses.push(ratio(
            a.epsilon * p.mu * p.clients as f64,
            2.0 * (p.omega * a.zeta_sq + (1.0 + p.omega) * a.sigma_sq),
        ));
    }
    min_of(&clauses)
}

pub fn preset_diana(p: &ProblemScalars, acc: Option<&Accuracy>) -> Result<Stepsizes, StepsizeError> {
    need_strong(p)?;
    let alpha = p.alpha();
    let mut clauses = vec![1.0 / ((1.0 + 6.0 * p.w_over_m()) * p.l_max), ratio(alpha, 2.0 * p.mu)];
    if let Some(a) = acc {
        clauses.push(ratio(
            a.epsilon * p.mu * p.clients as f64,
            2.0 * (1.0 + p.omega) * a.sigma_sq,
        ));
    }
    Ok(Stepsizes {
        gamma: min_of(&clauses)?,
        eta: None,
        alpha: Some(alpha),
    })
}

/// Theory stepsizes for any method.
pub fn preset_for(method: Method, p: &ProblemScalars, acc: Option<&Accuracy>) -> Result<Stepsizes, StepsizeError> {
    let plain = |gamma| Stepsizes { gamma, eta: None, alpha: None };
    let uncompressed = ProblemScalars { omega: 0.0, ..*p };
    match method {
        Method::Qrr => preset_qrr(p, acc).map(plain),
        Method::Rr => preset_qrr(&uncompressed, acc).map(plain),
        Method::DianaRr => preset_diana_rr(p, acc),
        Method::QNastya | Method::LocalSgdQ => preset_q_nastya(p, acc),
        Method::Nastya => preset_q_nastya(&uncompressed, acc),
        Method::FedRr => preset_q_nastya(&uncompressed, acc).map(|s| plain(s.gamma)),
        Method::DianaNastya => preset_diana_nastya(p, acc),
        Method::Qsgd => preset_qsgd(p, acc).map(plain),
        Method::Diana => preset_diana(p, acc),
    }
}

/// Stepsize multipliers tried when tuning.
pub mod grids {
    /// Q-RR, DIANA-RR, QSGD, DIANA.
    pub const EXP1: [f64; 23] = [
        0.000975, 0.00195, 0.0039, 0.0078, 0.0156, 0.0312, 0.0625, 0.125, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0,
        64.0, 128.0, 256.0, 512.0, 1024.0, 2048.0, 4096.0,
    ];
    /// Q-NASTYA local stepsize multipliers.
    pub const Q_NASTYA_GAMMA: [f64; 18] = [
        0.000975, 0.00195, 0.0039, 0.0078, 0.0156, 0.0312, 0.0625, 0.125, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0,
        64.0, 128.0,
    ];
    /// Q-NASTYA server stepsize multipliers.
    pub const Q_NASTYA_ETA: [f64; 16] = [
        0.0039, 0.0078, 0.0156, 0.0312, 0.0625, 0.125, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0, 128.0,
    ];
    pub const DIANA_NASTYA: [f64; 18] = Q_NASTYA_GAMMA;
    pub const FEDCOM_GAMMA: [f64; 21] = [
        0.0312, 0.0625, 0.125, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0, 128.0, 256.0, 512.0, 1024.0, 2048.0,
        4096.0, 8192.0, 16384.0, 32768.0,
    ];
    pub const FEDCOM_ETA: [f64; 18] = Q_NASTYA_GAMMA;
    pub const FEDPAQ: [f64; 30] = [
        0.00195, 0.0039, 0.0078, 0.0156, 0.0312, 0.0625, 0.125, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0,
        128.0, 256.0, 512.0, 1024.0, 2048.0, 4096.0, 8192.0, 16384.0, 32768.0, 65536.0, 131072.0, 262144.0, 524288.0,
        1048576.0,
    ];
    /// Seven log-spaced values drawn from `EXP1` for desk-scale sweeps.
    pub const REDUCED: [f64; 7] = [0.0156, 0.0625, 0.25, 1.0, 4.0, 16.0, 64.0];
}
