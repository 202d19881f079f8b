//! Shuffling radius.
//!
//! For permutations `π_1, ..., π_M` start at `x⁰ = x*` and follow
//! `x^{i+1} = x^i − (γ/M) Σ_m ∇f_m^{π_m(i)}(x*)`. The radius is
//! `max_i (1/(γ²M)) Σ_m E D_{f_m^{π_m(i)}}(x^i, x*)`, the expectation taken
//! over permutations only (no compression noise enters the definition).
//! The Bregman terms scale like `γ²`, so the value is nearly free of `γ`.

use itertools::Itertools;

use super::DiagnosticsError;
use crate::objective::FiniteSumProblem;
use crate::rng::{Purpose, RngStream};
use crate::shuffling::draw_permutation;

/// Largest number of permutation tuples [`sigma_rad_exhaustive`] will enumerate.
pub const EXHAUSTIVE_LIMIT: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct SigmaRadEstimate {
    /// `σ̂²_rad`.
    pub value: f64,
    /// Sample std of the maximizing term over `√samples`.
    pub half_width: f64,
    /// Inner index `i` that attains the maximum.
    pub argmax: usize,
    pub samples: usize,
}

struct Radius<'a> {
    problem: &'a FiniteSumProblem,
    x_star: &'a [f64],
    gamma: f64,
    n: usize,
    /// `∇f_m^i(x*)`, indexed `[m][i]`.
    grads: Vec<Vec<Vec<f64>>>,
}

impl<'a> Radius<'a> {
    fn new(problem: &'a FiniteSumProblem, x_star: &'a [f64], gamma: f64) -> Result<Self, DiagnosticsError> {
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(DiagnosticsError::Unsupported(format!("shuffling radius needs gamma > 0, got {gamma}")));
        }
        let n = problem.equal_client_len().ok_or_else(|| {
            DiagnosticsError::Unsupported("shuffling radius needs equal local dataset sizes".into())
        })?;
        let mut grads = Vec::with_capacity(problem.num_clients());
        for m in 0..problem.num_clients() {
            grads.push((0..n).map(|i| problem.grad_summand(m, i, x_star)).collect::<Result<Vec<_>, _>>()?);
        }
        Ok(Self { problem, x_star, gamma, n, grads })
    }

    /// Terms `B_0, ..., B_{n−1}` for one permutation tuple.
    fn terms(&self, perms: &[Vec<usize>]) -> Vec<f64> {
        let m_count = perms.len() as f64;
        let scale = 1.0 / (self.gamma * self.gamma * m_count);
        let mut x = self.x_star.to_vec();
        let mut out = Vec::with_capacity(self.n);
        for i in 0..self.n {
            let mut b = 0.0;
            for (m, p) in perms.iter().enumerate() {
                b += self.problem.bregman_unchecked(m, p[i], &x, self.x_star);
            }
            out.push(b * scale);
            for (m, p) in perms.iter().enumerate() {
                for (xj, gj) in x.iter_mut().zip(&self.grads[m][p[i]]) {
                    *xj -= self.gamma / m_count * gj;
                }
            }
        }
        out
    }
}

fn summarize(samples: Vec<Vec<f64>>, n: usize) -> SigmaRadEstimate {
    let k = samples.len();
    let means: Vec<f64> = (0..n).map(|i| samples.iter().map(|s| s[i]).sum::<f64>() / k as f64).collect();
    let (argmax, value) = means
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, v)| if v > best.1 { (i, v) } else { best });
    let half_width = if k > 1 {
        let var = samples.iter().map(|s| (s[argmax] - value).powi(2)).sum::<f64>() / (k - 1) as f64;
        (var / k as f64).sqrt()
    } else {
        0.0
    };
    SigmaRadEstimate { value, half_width, argmax, samples: k }
}

/// Monte-Carlo estimate over `num_perms` independent permutation tuples.
/// Tuple `k` of client `m` is drawn from the stream path
/// `(SigmaRadius, m, k, 0)`.
pub fn estimate_sigma_rad(
    problem: &FiniteSumProblem,
    x_star: &[f64],
    gamma: f64,
    num_perms: usize,
    stream: &RngStream,
) -> Result<SigmaRadEstimate, DiagnosticsError> {
    if num_perms == 0 {
        return Err(DiagnosticsError::Unsupported("num_perms must be at least 1".into()));
    }
    let r = Radius::new(problem, x_star, gamma)?;
    let samples = (0..num_perms)
        .map(|k| {
            let perms: Vec<Vec<usize>> = (0..problem.num_clients())
                .map(|m| draw_permutation(r.n, &mut stream.rng(Purpose::SigmaRadius, m, k, 0)))
                .collect();
            r.terms(&perms)
        })
        .collect();
    Ok(summarize(samples, r.n))
}

/// Exact expectation by enumerating all `(n!)^M` permutation tuples.
pub fn sigma_rad_exhaustive(
    problem: &FiniteSumProblem,
    x_star: &[f64],
    gamma: f64,
) -> Result<SigmaRadEstimate, DiagnosticsError> {
    let r = Radius::new(problem, x_star, gamma)?;
    let per_client: usize = (1..=r.n).product();
    let total = (0..problem.num_clients()).try_fold(1usize, |acc, _| acc.checked_mul(per_client));
    if total.is_none_or(|t| t > EXHAUSTIVE_LIMIT) {
        return Err(DiagnosticsError::Unsupported(format!(
            "(n!)^M exceeds {EXHAUSTIVE_LIMIT} tuples; use the Monte-Carlo estimate"
        )));
    }
    let samples = (0..problem.num_clients())
        .map(|_| (0..r.n).permutations(r.n))
        .multi_cartesian_product()
        .map(|perms| r.terms(&perms))
        .collect();
    Ok(summarize(samples, r.n))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objective::{solve_reference, ClientDataset, DataPoint, LossKind, SparseVector};
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn problem(kind: LossKind, m: usize, n: usize, d: usize, lambda: f64, seed: u64) -> FiniteSumProblem {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let clients = (0..m)
            .map(|c| ClientDataset {
                client_id: c,
                points: (0..n)
                    .map(|_| {
                        let v: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
                        let y = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                        DataPoint::new(SparseVector::from_dense(&v), y).unwrap()
                    })
                    .collect(),
            })
            .collect();
        FiniteSumProblem::new(clients, d, lambda, kind).unwrap()
    }

    #[test]
    fn exhaustive_matches_naive_enumeration() {
        let p = problem(LossKind::Logistic, 2, 3, 3, 0.1, 5);
        let x = solve_reference(&p, 1e-12).unwrap();
        let gamma = 0.3;
        let est = sigma_rad_exhaustive(&p, &x, gamma).unwrap();
        assert_eq!(est.samples, 36);
        // Independent loop: all 6 × 6 pairs, iterates built from grad_summand.
        let perms: Vec<Vec<usize>> = (0..3).permutations(3).collect();
        let mut means = [0.0; 3];
        for p0 in &perms {
            for p1 in &perms {
                let mut xi = x.clone();
                for i in 0..3 {
                    let b = p.bregman_summand(0, p0[i], &xi, &x).unwrap() + p.bregman_summand(1, p1[i], &xi, &x).unwrap();
                    means[i] += b / (gamma * gamma * 2.0) / 36.0;
                    let g0 = p.grad_summand(0, p0[i], &x).unwrap();
                    let g1 = p.grad_summand(1, p1[i], &x).unwrap();
                    for j in 0..3 {
                        xi[j] -= gamma / 2.0 * (g0[j] + g1[j]);
                    }
                }
            }
        }
        let best = means.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert!((est.value - best).abs() < 1e-12, "{} vs {}", est.value, best);
    }

    #[test]
    fn single_sample_is_zero() {
        let p = problem(LossKind::Logistic, 3, 1, 4, 0.1, 1);
        let x = solve_reference(&p, 1e-12).unwrap();
        let est = estimate_sigma_rad(&p, &x, 0.5, 10, &RngStream::new(0)).unwrap();
        assert_eq!(est.value, 0.0);
        assert_eq!(est.half_width, 0.0);
    }

    #[test]
    fn homogeneous_single_summand_clients_are_zero() {
        let base = problem(LossKind::Logistic, 1, 1, 3, 0.2, 9);
        let pt = base.clients()[0].points[0].clone();
        let clients = (0..4).map(|m| ClientDataset { client_id: m, points: vec![pt.clone()] }).collect();
        let p = FiniteSumProblem::new(clients, 3, 0.2, LossKind::Logistic).unwrap();
        let x = solve_reference(&p, 1e-12).unwrap();
        let est = sigma_rad_exhaustive(&p, &x, 1.0).unwrap();
        assert!(est.value.abs() < 1e-20);
    }

    #[test]
    fn quadratic_closed_form() {
        // With unit curvature and λ = 0, E B_i = i(n−i)σ*² / (2M(n−1)).
        let (m, n) = (2, 4);
        let p = problem(LossKind::Quadratic, m, n, 3, 0.0, 11);
        let x = solve_reference(&p, 1e-12).unwrap();
        let h = super::super::hetero_constants(&p, &x).unwrap();
        let est = sigma_rad_exhaustive(&p, &x, 0.7).unwrap();
        let closed = (0..n)
            .map(|i| (i * (n - i)) as f64 * h.sigma_star_sq / (2.0 * m as f64 * (n - 1) as f64))
            .fold(0.0, f64::max);
        assert!((est.value - closed).abs() < 1e-12, "{} vs {}", est.value, closed);
        assert_eq!(est.argmax, n / 2);
    }

    #[test]
    fn monte_carlo_agrees_with_exhaustive() {
        let p = problem(LossKind::Logistic, 2, 3, 3, 0.05, 21);
        let x = solve_reference(&p, 1e-12).unwrap();
        let exact = sigma_rad_exhaustive(&p, &x, 0.2).unwrap();
        let mc = estimate_sigma_rad(&p, &x, 0.2, 4000, &RngStream::new(3)).unwrap();
        assert!((mc.value - exact.value).abs() < 4.0 * mc.half_width + 1e-12);
        assert!(mc.half_width > 0.0);
    }

    #[test]
    fn nearly_gamma_free() {
        let p = problem(LossKind::Logistic, 2, 4, 3, 0.05, 8);
        let x = solve_reference(&p, 1e-12).unwrap();
        let a = sigma_rad_exhaustive(&p, &x, 1e-3).unwrap().value;
        let b = sigma_rad_exhaustive(&p, &x, 1e-2).unwrap().value;
        assert!((a - b).abs() < 0.05 * a);
    }

    #[test]
    fn rejects_bad_input() {
        let p = problem(LossKind::Logistic, 2, 3, 3, 0.05, 21);
        let x = vec![0.0; 3];
        assert!(estimate_sigma_rad(&p, &x, 0.0, 10, &RngStream::new(0)).is_err());
        assert!(estimate_sigma_rad(&p, &x, 0.1, 0, &RngStream::new(0)).is_err());
        let big = problem(LossKind::Logistic, 4, 8, 2, 0.05, 21);
        assert!(sigma_rad_exhaustive(&big, &[0.0, 0.0], 0.1).is_err());
    }
}
