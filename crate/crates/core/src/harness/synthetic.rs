use rand::Rng;
use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::objective::{ClientDataset, DataPoint, FiniteSumProblem, LossKind, SparseVector};
use crate::rng::{Purpose, RngStream};

/// Desk-scale test problem.
///
/// Every point is `e + heterogeneity·u_m + spread·z_i`: a common base `e`,
/// a per-client offset `u_m` and a per-index offset `z_i` shared by all
/// clients. For quadratics the point is the summand's center; for logistic
/// regression it is the feature vector, labelled by the sign of a fixed
/// linear score. Zero heterogeneity gives identical clients, zero spread
/// gives identical samples within each client.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub kind: LossKind,
    pub clients: usize,
    pub n: usize,
    pub dim: usize,
    #[serde(default = "one")]
    pub heterogeneity: f64,
    #[serde(default = "one")]
    pub spread: f64,
}

fn one() -> f64 {
    1.0
}

/// How the regularization weight is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaRule {
    Explicit(f64),
    /// `L/μ ≈ κ`.
    ConditionNumber(f64),
    /// `L_max/μ̃ ≈ κ`.
    MaxConditionNumber(f64),
}

/// `λ` for a [`LambdaRule`], given the curvature of the unregularized problem.
///
/// Regularization adds `2λ` to every curvature constant and logistic loss
/// alone has `μ = 0`, so `(L₀ + 2λ)/(2λ) = κ` has the closed form
/// `λ = L₀/(2(κ − 1))`.
pub fn resolve_lambda(
    rule: LambdaRule,
    kind: LossKind,
    clients: Vec<ClientDataset>,
    dim: usize,
) -> Result<f64, HarnessError> {
    let (l0, kappa) = match rule {
        LambdaRule::Explicit(l) if l >= 0.0 && l.is_finite() => return Ok(l),
        LambdaRule::Explicit(l) => return Err(HarnessError::Config(format!("lambda = {l} must be finite and >= 0"))),
        LambdaRule::ConditionNumber(k) | LambdaRule::MaxConditionNumber(k) if kind == LossKind::Logistic => {
            let bare = FiniteSumProblem::new(clients, dim, 0.0, kind)?;
            let c = bare.constants();
            match rule {
                LambdaRule::ConditionNumber(_) => (c.l, k),
                _ => (c.l_max, k),
            }
        }
        _ => {
            return Err(HarnessError::Config(
                "condition-number rules need logistic loss (quadratic summands have unit condition number)".into(),
            ))
        }
    };
    if !(kappa > 1.0) {
        return Err(HarnessError::Config(format!("condition number target {kappa} must exceed 1")));
    }
    Ok(l0 / (2.0 * (kappa - 1.0)))
}

fn uniform_vec<R: Rng>(rng: &mut R, d: usize) -> Vec<f64> {
    let s = (3.0 / d as f64).sqrt();
    (0..d).map(|_| rng.random_range(-s..s)).collect()
}

/// Clients of a synthetic problem, before regularization is chosen.
pub fn synthetic_clients(spec: &SyntheticSpec, seed: u64) -> Result<Vec<ClientDataset>, HarnessError> {
    if spec.clients == 0 || spec.n == 0 || spec.dim == 0 {
        return Err(HarnessError::Config("synthetic problem needs clients, n and dim >= 1".into()));
    }
    let stream = RngStream::new(seed);
    let d = spec.dim;
    // Unit-scale vectors: entries uniform with variance 1/d.
    let base = uniform_vec(&mut stream.rng(Purpose::Synthetic, 0, 0, 0), d);
    let truth = uniform_vec(&mut stream.rng(Purpose::Synthetic, 0, 0, 1), d);
    let offsets: Vec<Vec<f64>> = (0..spec.n)
        .map(|i| uniform_vec(&mut stream.rng(Purpose::Synthetic, 0, 1, i), d))
        .collect();
    Ok((0..spec.clients)
        .map(|m| {
            let u = uniform_vec(&mut stream.rng(Purpose::Synthetic, m, 2, 0), d);
            let points = offsets
                .iter()
                .map(|z| {
                    let v: Vec<f64> = (0..d)
                        .map(|j| base[j] + spec.heterogeneity * u[j] + spec.spread * z[j])
                        .collect();
                    let y = match spec.kind {
                        LossKind::Quadratic => 1.0,
                        LossKind::Logistic => {
                            if v.iter().zip(&truth).map(|(a, b)| a * b).sum::<f64>() >= 0.0 {
                                1.0
                            } else {
                                -1.0
                            }
                        }
                    };
                    DataPoint::new(SparseVector::from_dense(&v), y).expect("labels are ±1")
                })
                .collect();
            ClientDataset { client_id: m, points }
        })
        .collect())
}

pub fn make_synthetic(spec: &SyntheticSpec, lambda: LambdaRule, seed: u64) -> Result<FiniteSumProblem, HarnessError> {
    let clients = synthetic_clients(spec, seed)?;
    let lambda = resolve_lambda(lambda, spec.kind, clients.clone(), spec.dim)?;
    Ok(FiniteSumProblem::new(clients, spec.dim, lambda, spec.kind)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagnostics::hetero_constants;
    use crate::objective::solve_reference;

    fn spec(kind: LossKind, het: f64, spread: f64, n: usize) -> SyntheticSpec {
        SyntheticSpec { kind, clients: 4, n, dim: 5, heterogeneity: het, spread }
    }

    #[test]
    fn zero_heterogeneity_means_identical_clients() {
        for kind in [LossKind::Quadratic, LossKind::Logistic] {
            let p = make_synthetic(&spec(kind, 0.0, 1.0, 6), LambdaRule::Explicit(0.1), 1).unwrap();
            assert!(p.clients().windows(2).all(|w| w[0].points == w[1].points));
            let x = solve_reference(&p, 1e-12).unwrap();
            assert!(hetero_constants(&p, &x).unwrap().zeta_star_sq < 1e-24);
        }
    }

    #[test]
    fn single_sample_has_no_within_client_variance() {
        let p = make_synthetic(&spec(LossKind::Logistic, 1.0, 1.0, 1), LambdaRule::Explicit(0.1), 2).unwrap();
        let x = solve_reference(&p, 1e-12).unwrap();
        let h = hetero_constants(&p, &x).unwrap();
        assert!(h.sigma_star_sq < 1e-28);
        assert!(h.zeta_star_sq > 1e-6);
    }

    #[test]
    fn quadratic_minimizer_is_mean_center() {
        let lambda = 0.3;
        let p = make_synthetic(&spec(LossKind::Quadratic, 1.5, 0.7, 5), LambdaRule::Explicit(lambda), 3).unwrap();
        let mut mean = vec![0.0; 5];
        for c in p.clients() {
            for pt in &c.points {
                pt.features.axpy(1.0 / 20.0, &mut mean);
            }
        }
        let analytic: Vec<f64> = mean.iter().map(|v| v / (1.0 + 2.0 * lambda)).collect();
        let x = solve_reference(&p, 1e-13).unwrap();
        for (a, b) in analytic.iter().zip(&x) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn condition_number_rules() {
        let s = spec(LossKind::Logistic, 1.0, 0.5, 8);
        let p = make_synthetic(&s, LambdaRule::ConditionNumber(1e4), 4).unwrap();
        let c = p.constants();
        assert!((c.l / c.mu / 1e4 - 1.0).abs() < 1e-3);
        let p = make_synthetic(&s, LambdaRule::MaxConditionNumber(100.0), 4).unwrap();
        let c = p.constants();
        assert!((c.l_max / c.mu_tilde / 100.0 - 1.0).abs() < 1e-9);
        assert!(make_synthetic(&spec(LossKind::Quadratic, 1.0, 1.0, 2), LambdaRule::ConditionNumber(10.0), 1).is_err());
        assert!(make_synthetic(&s, LambdaRule::ConditionNumber(0.5), 1).is_err());
    }

    #[test]
    fn deterministic_in_seed() {
        let s = spec(LossKind::Logistic, 1.0, 1.0, 3);
        let a = synthetic_clients(&s, 7).unwrap();
        assert_eq!(a, synthetic_clients(&s, 7).unwrap());
        assert_ne!(a, synthetic_clients(&s, 8).unwrap());
    }
}
