use super::{DiagnosticsError, SigmaRadEstimate};
use crate::objective::{norm_sq, FiniteSumProblem};

/// Gradient heterogeneity at the optimum.
#[derive(Debug, Clone, PartialEq)]
pub struct HeterogeneityConstants {
    /// `ζ*² = (1/M) Σ_m ‖∇f_m(x*)‖²`.
    pub zeta_star_sq: f64,
    /// `σ*² = (1/M) Σ_m (1/n_m) Σ_i ‖∇f_m^i(x*) − ∇f_m(x*)‖²`.
    pub sigma_star_sq: f64,
    /// `σ²_{*,n} = (1/n) Σ_i ‖∇f^i(x*)‖²` with `f^i = (1/M) Σ_m f_m^i`.
    /// Needs equal local dataset sizes.
    pub sigma_star_n_sq: Option<f64>,
    /// Filled in separately, see [`super::estimate_sigma_rad`].
    pub sigma_rad: Option<SigmaRadEstimate>,
    /// `(nμ̃σ*²/8, nL_max σ*²/4)`. Needs equal local dataset sizes.
    pub bounds: Option<(f64, f64)>,
}

/// `(nμ̃σ*²/8, nL_max σ*²/4)`.
pub fn sigma_rad_bounds(n: usize, mu_tilde: f64, l_max: f64, sigma_star_sq: f64) -> (f64, f64) {
    let n = n as f64;
    (n * mu_tilde * sigma_star_sq / 8.0, n * l_max * sigma_star_sq / 4.0)
}

/// Exact sums over the `M × n` grid at `x_star`.
pub fn hetero_constants(problem: &FiniteSumProblem, x_star: &[f64]) -> Result<HeterogeneityConstants, DiagnosticsError> {
    let d = problem.dim();
    let m_count = problem.num_clients();
    let mut zeta = 0.0;
    let mut sigma = 0.0;
    let mut g = vec![0.0; d];
    for m in 0..m_count {
        let gm = problem.grad_client(m, x_star)?;
        zeta += norm_sq(&gm);
        let n = problem.client_len(m);
        let mut s = 0.0;
        for i in 0..n {
            problem.summand_grad_into(m, i, x_star, &mut g);
            s += g.iter().zip(&gm).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        }
        sigma += s / n as f64;
    }
    let sigma_star_sq = sigma / m_count as f64;
    let (sigma_star_n_sq, bounds) = match problem.equal_client_len() {
        Some(n) => {
            let mut acc = 0.0;
            let mut fi = vec![0.0; d];
            for i in 0..n {
                fi.iter_mut().for_each(|v| *v = 0.0);
                for m in 0..m_count {
                    problem.summand_grad_into(m, i, x_star, &mut g);
                    fi.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
                }
                acc += norm_sq(&fi) / (m_count * m_count) as f64;
            }
            let c = problem.constants();
            (Some(acc / n as f64), Some(sigma_rad_bounds(n, c.mu_tilde, c.l_max, sigma_star_sq)))
        }
        None => (None, None),
    };
    Ok(HeterogeneityConstants {
        zeta_star_sq: zeta / m_count as f64,
        sigma_star_sq,
        sigma_star_n_sq,
        sigma_rad: None,
        bounds,
    })
}
