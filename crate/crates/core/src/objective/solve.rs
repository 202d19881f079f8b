//! Deterministic reference minimizer: Polak–Ribière+ nonlinear conjugate
//! gradient with an exact (safeguarded Newton) line search.

use super::{norm_sq, sigmoid, FiniteSumProblem, LossKind, ObjectiveError};

pub const DEFAULT_SOLVE_TOL: f64 = 1e-12;

/// One-dimensional restriction `φ(t) = f(x + t d)`.
struct Line {
    /// For logistic: margins `y aᵀx`, slopes `y aᵀd` and weights `1/(M n_m)`.
    u: Vec<f64>,
    v: Vec<f64>,
    w: Vec<f64>,
    xd: f64,
    dd: f64,
    /// `∇f(x)ᵀd` (quadratic only).
    g0d: f64,
}

impl Line {
    fn new(problem: &FiniteSumProblem, x: &[f64], d: &[f64], g: &[f64]) -> Self {
        let xd = x.iter().zip(d).map(|(a, b)| a * b).sum();
        let dd = norm_sq(d);
        let g0d = g.iter().zip(d).map(|(a, b)| a * b).sum();
        let (mut u, mut v, mut w) = (vec![], vec![], vec![]);
        if problem.kind == LossKind::Logistic {
            let inv_m = 1.0 / problem.clients.len() as f64;
            for cl in &problem.clients {
                let wt = inv_m / cl.points.len() as f64;
                for p in &cl.points {
                    u.push(p.label * p.features.dot(x));
                    v.push(p.label * p.features.dot(d));
                    w.push(wt);
                }
            }
        }
        Self { u, v, w, xd, dd, g0d }
    }

    /// `(φ'(t), φ''(t))`.
    fn derivs(&self, problem: &FiniteSumProblem, t: f64) -> (f64, f64) {
        let two_lambda = 2.0 * problem.lambda;
        match problem.kind {
            LossKind::Quadratic => {
                let c = 1.0 + two_lambda;
                (self.g0d + t * c * self.dd, c * self.dd)
            }
            LossKind::Logistic => {
                let (mut d1, mut d2) = (0.0, 0.0);
                for ((u, v), w) in self.u.iter().zip(&self.v).zip(&self.w) {
                    let s = sigmoid(-(u + t * v));
                    d1 -= w * v * s;
                    d2 += w * v * v * s * (1.0 - s);
                }
                (d1 + two_lambda * (self.xd + t * self.dd), d2 + two_lambda * self.dd)
            }
        }
    }
}

/// Exact minimization of a convex `φ` along a descent direction.
fn line_search(problem: &FiniteSumProblem, line: &Line) -> f64 {
    let (d0, h0) = line.derivs(problem, 0.0);
    if d0 >= 0.0 || h0 <= 0.0 {
        return 0.0;
    }
    // Bracket the root of φ' in [lo, hi].
    let mut lo = 0.0;
    let mut hi = f64::INFINITY;
    let mut t = -d0 / h0;
    for _ in 0..200 {
        let (d1, h1) = line.derivs(problem, t);
        if d1.abs() <= 1e-15 * d0.abs() {
            return t;
        }
        if d1 < 0.0 {
            lo = t;
        } else {
            hi = t;
        }
        let newton = if h1 > 0.0 { t - d1 / h1 } else { f64::NAN };
        let next = if newton.is_finite() && newton > lo && newton < hi {
            newton
        } else if hi.is_finite() {
            0.5 * (lo + hi)
        } else {
            2.0 * t.max(lo)
        };
        if hi.is_finite() && (hi - lo) <= 1e-16 * hi.abs() {
            return 0.5 * (lo + hi);
        }
        if next == t {
            return t;
        }
        t = next;
    }
    t
}

/// Minimizer `x*` of a strongly convex problem, from `x_0 = 0`, to
/// `‖∇f(x*)‖ ≤ tol · max(1, ‖∇f(x_0)‖)`.
pub fn solve_reference(problem: &FiniteSumProblem, tol: f64) -> Result<Vec<f64>, ObjectiveError> {
    if !problem.constants().is_strongly_convex() {
        return Err(ObjectiveError::NotStronglyConvex);
    }
    let dim = problem.dim;
    let mut x = vec![0.0; dim];
    let mut g = vec![0.0; dim];
    problem.full_grad_into(&x, &mut g);
    let target = tol * norm_sq(&g).sqrt().max(1.0);
    let max_iter = 100_000 + 50 * dim;
    let mut d: Vec<f64> = g.iter().map(|v| -v).collect();
    let mut g_new = vec![0.0; dim];
    let mut since_restart = 0;
    let mut stalled = 0;
    for iter in 0..max_iter {
        let gn = norm_sq(&g).sqrt();
        if gn <= target {
            return Ok(x);
        }
        let line = Line::new(problem, &x, &d, &g);
        let t = line_search(problem, &line);
        if t == 0.0 {
            stalled += 1;
            if stalled > 3 {
                return Err(ObjectiveError::NotConverged { iterations: iter, grad_norm: gn });
            }
            d = g.iter().map(|v| -v).collect();
            since_restart = 0;
            continue;
        }
        stalled = 0;
        for (xi, di) in x.iter_mut().zip(&d) {
            *xi += t * di;
        }
        problem.full_grad_into(&x, &mut g_new);
        let gg = norm_sq(&g);
        let beta_pr: f64 = g_new.iter().zip(&g).map(|(a, b)| a * (a - b)).sum::<f64>() / gg;
        since_restart += 1;
        let beta = if since_restart >= dim.max(1) { 0.0 } else { beta_pr.max(0.0) };
        if beta == 0.0 {
            since_restart = 0;
        }
        for (di, gi) in d.iter_mut().zip(&g_new) {
            *di = -gi + beta * *di;
        }
        if d.iter().zip(&g_new).map(|(a, b)| a * b).sum::<f64>() >= 0.0 {
            d = g_new.iter().map(|v| -v).collect();
            since_restart = 0;
        }
        std::mem::swap(&mut g, &mut g_new);
    }
    Err(ObjectiveError::NotConverged {
        iterations: max_iter,
        grad_norm: norm_sq(&g).sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::super::{ClientDataset, DataPoint, SparseVector};
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn quadratic_minimizer_is_center() {
        let c = [0.4, -1.5, 2.25];
        let points = vec![DataPoint::new(SparseVector::from_dense(&c), 1.0).unwrap()];
        let prob =
            FiniteSumProblem::new(vec![ClientDataset { client_id: 0, points }], 3, 0.0, LossKind::Quadratic).unwrap();
        let x = solve_reference(&prob, 1e-14).unwrap();
        for (a, b) in x.iter().zip(c) {
            assert_relative_eq!(*a, b, epsilon = 1e-14);
        }
    }

    /// Scalar stationarity `-σ(-x) + x = 0` solved by bisection.
    fn bisection_root() -> f64 {
        let h = |x: f64| -1.0 / (1.0 + x.exp()) + x;
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if h(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn one_dimensional_logistic_matches_bisection() {
        let points = vec![DataPoint::new(SparseVector::from_dense(&[1.0]), 1.0).unwrap()];
        let prob =
            FiniteSumProblem::new(vec![ClientDataset { client_id: 0, points }], 1, 0.5, LossKind::Logistic).unwrap();
        let x = solve_reference(&prob, 1e-14).unwrap();
        let oracle = bisection_root();
        assert_relative_eq!(x[0], oracle, epsilon = 1e-12);
        assert_relative_eq!(oracle, 0.401_058_137_541_547, epsilon = 1e-12);
    }

    #[test]
    fn refuses_without_strong_convexity() {
        let points = vec![DataPoint::new(SparseVector::from_dense(&[1.0]), 1.0).unwrap()];
        let prob =
            FiniteSumProblem::new(vec![ClientDataset { client_id: 0, points }], 1, 0.0, LossKind::Logistic).unwrap();
        assert_eq!(solve_reference(&prob, 1e-10), Err(ObjectiveError::NotStronglyConvex));
    }
}
