use rand::Rng;

use super::{FiniteSumProblem, LossKind};

/// Smoothness and strong-convexity constants of a problem.
#[derive(Debug, Clone, PartialEq)]
pub struct CurvatureConstants {
    /// Smoothness of `f`.
    pub l: f64,
    /// `max_{m,i} L_{i,m}`.
    pub l_max: f64,
    /// `L_{i,m}` indexed `[m][i]`.
    pub l_im: Vec<Vec<f64>>,
    /// Strong convexity of `f`.
    pub mu: f64,
    /// Strong convexity of every summand.
    pub mu_tilde: f64,
    /// Smoothness of the permutation-averaged summands `(1/M) Σ_m f_m^{π_m}`.
    /// Defaults to `L_max`, which always bounds it.
    pub l_tilde: f64,
}

impl CurvatureConstants {
    pub fn is_strongly_convex(&self) -> bool {
        self.mu > 0.0
    }

    /// `L / μ`, infinite when `μ = 0`.
    pub fn condition_number(&self) -> f64 {
        self.l / self.mu
    }
}

pub(super) fn compute(problem: &FiniteSumProblem) -> CurvatureConstants {
    let two_lambda = 2.0 * problem.lambda;
    match problem.kind {
        LossKind::Quadratic => {
            let c = 1.0 + two_lambda;
            CurvatureConstants {
                l: c,
                l_max: c,
                l_im: problem.clients.iter().map(|cl| vec![c; cl.points.len()]).collect(),
                mu: c,
                mu_tilde: c,
                l_tilde: problem.l_tilde.unwrap_or(c),
            }
        }
        LossKind::Logistic => {
            let l_im: Vec<Vec<f64>> = problem
                .clients
                .iter()
                .map(|cl| cl.points.iter().map(|p| 0.25 * p.features.norm_sq() + two_lambda).collect())
                .collect();
            let l_max = l_im.iter().flatten().copied().fold(f64::NEG_INFINITY, f64::max);
            let inv_m = 1.0 / problem.clients.len() as f64;
            let data_l = power_iteration(
                problem.dim,
                |v, out| {
                    out.iter_mut().for_each(|o| *o = 0.0);
                    for cl in &problem.clients {
                        let w = 0.25 * inv_m / cl.points.len() as f64;
                        for p in &cl.points {
                            let s = p.features.dot(v);
                            p.features.axpy(w * s, out);
                        }
                    }
                },
                1e-12,
                200_000,
            );
            CurvatureConstants {
                l: data_l + two_lambda,
                l_max,
                l_im,
                mu: two_lambda,
                mu_tilde: two_lambda,
                l_tilde: problem.l_tilde.unwrap_or(l_max),
            }
        }
    }
}

/// Largest eigenvalue of a symmetric positive semidefinite operator.
///
/// Stops when the Rayleigh quotient changes by less than `rel_tol` (relative)
/// over ten consecutive iterations.
pub fn power_iteration<F>(dim: usize, apply: F, rel_tol: f64, max_iter: usize) -> f64
where
    F: Fn(&[f64], &mut [f64]),
{
    // Deterministic, generic start vector.
    let mut v: Vec<f64> = (0..dim)
        .map(|j| 1.0 + 0.5 * (((j as f64 + 1.0) * 0.618_033_988_75).fract() - 0.5))
        .collect();
    let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    v.iter_mut().for_each(|a| *a /= norm);
    let mut w = vec![0.0; dim];
    let mut rho = 0.0;
    let mut calm = 0;
    for _ in 0..max_iter {
        apply(&v, &mut w);
        let new_rho: f64 = v.iter().zip(&w).map(|(a, b)| a * b).sum();
        let wn = w.iter().map(|a| a * a).sum::<f64>().sqrt();
        if wn == 0.0 {
            return 0.0;
        }
        if (new_rho - rho).abs() <= rel_tol * new_rho.abs() {
            calm += 1;
            if calm >= 10 {
                return new_rho;
            }
        } else {
            calm = 0;
        }
        rho = new_rho;
        for (a, b) in v.iter_mut().zip(&w) {
            *a = b / wn;
        }
    }
    rho
}

/// Monte-Carlo lower estimate of `L̃`: the largest smoothness constant of
/// `(1/M) Σ_m f_m^{j_m}` over `samples` random index tuples `(j_1, …, j_M)`.
pub fn estimate_l_tilde<R: Rng>(problem: &FiniteSumProblem, samples: usize, rng: &mut R) -> f64 {
    let two_lambda = 2.0 * problem.lambda;
    if problem.kind == LossKind::Quadratic {
        return 1.0 + two_lambda;
    }
    let inv_m = 1.0 / problem.clients.len() as f64;
    let mut best = two_lambda;
    for _ in 0..samples {
        let picks: Vec<_> = problem
            .clients
            .iter()
            .map(|cl| &cl.points[rng.random_range(0..cl.points.len())].features)
            .collect();
        let top = power_iteration(
            problem.dim,
            |v, out| {
                out.iter_mut().for_each(|o| *o = 0.0);
                for a in &picks {
                    a.axpy(0.25 * inv_m * a.dot(v), out);
                }
            },
            1e-10,
            10_000,
        );
        best = best.max(top + two_lambda);
    }
    best
}

#[cfg(test)]
mod tests {
    use super::super::{ClientDataset, DataPoint, SparseVector};
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn rank_one_summand_constant() {
        let p = DataPoint::new(SparseVector::from_dense(&[2.0, 0.0]), 1.0).unwrap();
        let prob = FiniteSumProblem::new(
            vec![ClientDataset { client_id: 0, points: vec![p] }],
            2,
            0.1,
            LossKind::Logistic,
        )
        .unwrap();
        let c = prob.constants();
        assert_relative_eq!(c.l_im[0][0], 1.2, epsilon = 1e-15);
        assert_relative_eq!(c.l, 1.2, epsilon = 1e-10);
        assert_relative_eq!(c.mu, 0.2);
        assert!(c.is_strongly_convex());
    }

    fn random_problem(seed: u64, m: usize, n: usize, d: usize, lambda: f64) -> FiniteSumProblem {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let clients = (0..m)
            .map(|id| ClientDataset {
                client_id: id,
                points: (0..n + id)
                    .map(|_| {
                        let a: Vec<f64> = (0..d)
                            .map(|_| if rng.random_bool(0.6) { rng.random_range(-2.0..2.0) } else { 0.0 })
                            .collect();
                        let y = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                        DataPoint::new(SparseVector::from_dense(&a), y).unwrap()
                    })
                    .collect(),
            })
            .collect();
        FiniteSumProblem::new(clients, d, lambda, LossKind::Logistic).unwrap()
    }

    #[test]
    fn power_iteration_matches_dense_eigensolver() {
        for (seed, d) in [(1u64, 5usize), (2, 12), (3, 20)] {
            let prob = random_problem(seed, 3, 7, d, 0.01);
            let mut h = DMatrix::<f64>::zeros(d, d);
            for cl in prob.clients() {
                let w = 0.25 / (prob.num_clients() as f64 * cl.len() as f64);
                for p in &cl.points {
                    let a = nalgebra::DVector::from_vec(p.features.to_dense(d));
                    h += w * &a * a.transpose();
                }
            }
            let top = h.symmetric_eigen().eigenvalues.max() + 0.02;
            assert_relative_eq!(prob.constants().l, top, epsilon = 1e-8);
        }
    }

    #[test]
    fn ordering_of_constants() {
        for seed in 0..5 {
            let prob = random_problem(seed, 4, 6, 8, 0.05);
            let c = prob.constants();
            assert!(c.mu <= c.mu_tilde && c.mu_tilde <= c.l_tilde && c.l_tilde <= c.l_max);
            let n_total = prob.total_samples() as f64;
            let avg: f64 = c.l_im.iter().flatten().sum::<f64>() / n_total;
            // L is bounded by the weighted average of L_{i,m}; weights are 1/(M n_m).
            let weighted: f64 = c
                .l_im
                .iter()
                .map(|row| row.iter().sum::<f64>() / row.len() as f64)
                .sum::<f64>()
                / c.l_im.len() as f64;
            assert!(c.l <= weighted * (1.0 + 1e-12), "{} > {}", c.l, weighted);
            assert!(avg > 0.0);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let est = estimate_l_tilde(&prob, 50, &mut rng);
            assert!(est <= c.l_max * (1.0 + 1e-9));
        }
    }

    #[test]
    fn zero_lambda_flags_non_strong_convexity() {
        let prob = random_problem(7, 2, 3, 4, 0.0);
        assert!(!prob.constants().is_strongly_convex());
        assert_eq!(prob.constants().mu, 0.0);
    }

    #[test]
    fn explicit_l_tilde_is_used() {
        let prob = random_problem(8, 2, 3, 4, 0.1).with_l_tilde(0.9);
        assert_eq!(prob.constants().l_tilde, 0.9);
    }
}
