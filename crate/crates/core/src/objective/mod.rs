//! Finite-sum objectives `f(x) = (1/M) Σ_m (1/n_m) Σ_i f_m^i(x)`.
//!
//! Data rows are stored sparse, iterates and gradients are dense. Two summand
//! families are supported:
//!
//! * logistic: `f_m^i(x) = log(1 + exp(-y a^T x)) + λ‖x‖²`
//! * quadratic: `f_m^i(x) = ½‖x - c‖² + λ‖x‖²` with the center `c` stored as
//!   the row's feature vector (the label is ignored). Minimizer and
//!   heterogeneity constants are available in closed form, which the tests
//!   rely on.

mod constants;
pub mod libsvm;
mod solve;

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use constants::{estimate_l_tilde, power_iteration, CurvatureConstants};
pub use solve::{solve_reference, DEFAULT_SOLVE_TOL};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ObjectiveError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("summand ({client}, {sample}) does not exist")]
    IndexOutOfRange { client: usize, sample: usize },
    #[error("invalid data: {0}")]
    InvalidData(String),
    #[error("objective is not strongly convex (mu = 0)")]
    NotStronglyConvex,
    #[error("reference solve stopped after {iterations} iterations with gradient norm {grad_norm:e}")]
    NotConverged { iterations: usize, grad_norm: f64 },
}

/// Sparse vector with strictly increasing indices.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseVector {
    indices: Vec<u32>,
    values: Vec<f64>,
}

impl SparseVector {
    pub fn new(indices: Vec<u32>, values: Vec<f64>, dim: usize) -> Result<Self, ObjectiveError> {
        if indices.len() != values.len() {
            return Err(ObjectiveError::InvalidData(format!(
                "{} indices but {} values",
                indices.len(),
                values.len()
            )));
        }
        if let Some(w) = indices.windows(2).find(|w| w[0] >= w[1]) {
            return Err(ObjectiveError::InvalidData(format!(
                "indices not strictly increasing ({} then {})",
                w[0], w[1]
            )));
        }
        if let Some(&last) = indices.last() {
            if last as usize >= dim {
                return Err(ObjectiveError::InvalidData(format!(
                    "index {last} out of range for dimension {dim}"
                )));
            }
        }
        Ok(Self { indices, values })
    }

    /// Keeps the nonzero entries of `dense`.
    pub fn from_dense(dense: &[f64]) -> Self {
        let (indices, values) = dense
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(i, v)| (i as u32, *v))
            .unzip();
        Self { indices, values }
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn indices(&self) -> &[u32] {
        &self.indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.indices.iter().zip(&self.values).map(|(&i, &v)| (i as usize, v))
    }

    /// Smallest dimension able to hold this vector.
    pub fn min_dim(&self) -> usize {
        self.indices.last().map_or(0, |&i| i as usize + 1)
    }

    #[inline]
    pub fn dot(&self, x: &[f64]) -> f64 {
        self.iter().map(|(i, v)| v * x[i]).sum()
    }

    /// `y += alpha * self`
    #[inline]
    pub fn axpy(&self, alpha: f64, y: &mut [f64]) {
        for (i, v) in self.iter() {
            y[i] += alpha * v;
        }
    }

    pub fn norm_sq(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }

    pub fn to_dense(&self, dim: usize) -> Vec<f64> {
        let mut out = vec![0.0; dim];
        self.axpy(1.0, &mut out);
        out
    }
}

/// One training example `(a, y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DataPoint {
    pub features: SparseVector,
    pub label: f64,
}

impl DataPoint {
    pub fn new(features: SparseVector, label: f64) -> Result<Self, ObjectiveError> {
        if label != 1.0 && label != -1.0 {
            return Err(ObjectiveError::InvalidData(format!("label {label} is not +1 or -1")));
        }
        Ok(Self { features, label })
    }
}

/// The local dataset of one client.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientDataset {
    pub client_id: usize,
    pub points: Vec<DataPoint>,
}

impl ClientDataset {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Logistic,
    Quadratic,
}

#[inline]
pub(crate) fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + exp(t))` without overflow.
#[inline]
pub(crate) fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

/// Bregman divergence of `z ↦ log(1 + exp(-z))` between `z1` and `z0`.
fn logistic_bregman(z1: f64, z0: f64) -> f64 {
    let delta = z1 - z0;
    let s = sigmoid(-z0);
    if delta.abs() < 1e-3 {
        // Taylor expansion around z0; derivatives of softplus(-z).
        let d2 = s * (1.0 - s);
        let d3 = -d2 * (1.0 - 2.0 * s);
        let d4 = d2 * (1.0 - 6.0 * d2);
        delta * delta * (d2 / 2.0 + delta * (d3 / 6.0 + delta * d4 / 24.0))
    } else {
        softplus(-z1) - softplus(-z0) + s * delta
    }
}

/// `f(x) = (1/M) Σ_m (1/n_m) Σ_i f_m^i(x)` over a fixed client partition.
#[derive(Debug)]
pub struct FiniteSumProblem {
    clients: Vec<ClientDataset>,
    lambda: f64,
    kind: LossKind,
    dim: usize,
    l_tilde: Option<f64>,
    constants: OnceLock<CurvatureConstants>,
}

impl Clone for FiniteSumProblem {
    fn clone(&self) -> Self {
        Self {
            clients: self.clients.clone(),
            lambda: self.lambda,
            kind: self.kind,
            dim: self.dim,
            l_tilde: self.l_tilde,
            constants: OnceLock::new(),
        }
    }
}

impl FiniteSumProblem {
    pub fn new(
        clients: Vec<ClientDataset>,
        dim: usize,
        lambda: f64,
        kind: LossKind,
    ) -> Result<Self, ObjectiveError> {
        if clients.is_empty() {
            return Err(ObjectiveError::InvalidData("no clients".into()));
        }
        if dim == 0 {
            return Err(ObjectiveError::InvalidData("dimension must be positive".into()));
        }
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(ObjectiveError::InvalidData(format!("lambda = {lambda} must be >= 0")));
        }
        for (m, client) in clients.iter().enumerate() {
            if client.client_id != m {
                return Err(ObjectiveError::InvalidData(format!(
                    "client at position {m} has id {}",
                    client.client_id
                )));
            }
            if client.points.is_empty() {
                return Err(ObjectiveError::InvalidData(format!("client {m} has no samples")));
            }
            if let Some(p) = client.points.iter().find(|p| p.features.min_dim() > dim) {
                return Err(ObjectiveError::InvalidData(format!(
                    "client {m} has a feature index {} >= dimension {dim}",
                    p.features.min_dim() - 1
                )));
            }
        }
        Ok(Self {
            clients,
            lambda,
            kind,
            dim,
            l_tilde: None,
            constants: OnceLock::new(),
        })
    }

    /// Replaces the default `L̃ = L_max` with an explicit value.
    pub fn with_l_tilde(mut self, l_tilde: f64) -> Self {
        self.l_tilde = Some(l_tilde);
        self.constants = OnceLock::new();
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn kind(&self) -> LossKind {
        self.kind
    }

    pub fn num_clients(&self) -> usize {
        self.clients.len()
    }

    pub fn clients(&self) -> &[ClientDataset] {
        &self.clients
    }

    pub fn client_len(&self, m: usize) -> usize {
        self.clients[m].points.len()
    }

    /// Common sample count when every client holds the same number of points.
    pub fn equal_client_len(&self) -> Option<usize> {
        let n = self.clients[0].points.len();
        self.clients.iter().all(|c| c.points.len() == n).then_some(n)
    }

    pub fn total_samples(&self) -> usize {
        self.clients.iter().map(|c| c.points.len()).sum()
    }

    /// Cached curvature constants.
    pub fn constants(&self) -> &CurvatureConstants {
        self.constants.get_or_init(|| constants::compute(self))
    }

    fn check_dim(&self, x: &[f64]) -> Result<(), ObjectiveError> {
        if x.len() != self.dim {
            return Err(ObjectiveError::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        Ok(())
    }

    fn check_index(&self, m: usize, i: usize) -> Result<(), ObjectiveError> {
        if m >= self.clients.len() || i >= self.clients[m].points.len() {
            return Err(ObjectiveError::IndexOutOfRange { client: m, sample: i });
        }
        Ok(())
    }

    #[inline]
    fn point(&self, m: usize, i: usize) -> &DataPoint {
        &self.clients[m].points[i]
    }

    /// Data part of the summand (everything except `λ‖x‖²`).
    #[inline]
    fn data_loss(&self, p: &DataPoint, x: &[f64]) -> f64 {
        match self.kind {
            LossKind::Logistic => softplus(-p.label * p.features.dot(x)),
            LossKind::Quadratic => {
                let mut acc = 0.0;
                let mut it = p.features.iter().peekable();
                for (j, &xj) in x.iter().enumerate() {
                    let c = match it.peek() {
                        Some(&(k, v)) if k == j => {
                            it.next();
                            v
                        }
                        _ => 0.0,
                    };
                    acc += (xj - c) * (xj - c);
                }
                0.5 * acc
            }
        }
    }

    /// `out += scale * ∇(data part)(x)`.
    #[inline]
    fn add_data_grad(&self, p: &DataPoint, x: &[f64], scale: f64, out: &mut [f64]) {
        match self.kind {
            LossKind::Logistic => {
                let z = p.label * p.features.dot(x);
                let coef = -p.label * sigmoid(-z);
                p.features.axpy(scale * coef, out);
            }
            LossKind::Quadratic => {
                for (o, xj) in out.iter_mut().zip(x) {
                    *o += scale * xj;
                }
                p.features.axpy(-scale, out);
            }
        }
    }

    /// `f_m^i(x)`.
    pub fn eval_summand(&self, m: usize, i: usize, x: &[f64]) -> Result<f64, ObjectiveError> {
        self.check_index(m, i)?;
        self.check_dim(x)?;
        Ok(self.data_loss(self.point(m, i), x) + self.lambda * norm_sq(x))
    }

    /// `∇f_m^i(x)`.
    pub fn grad_summand(&self, m: usize, i: usize, x: &[f64]) -> Result<Vec<f64>, ObjectiveError> {
        self.check_index(m, i)?;
        self.check_dim(x)?;
        let mut out = vec![0.0; self.dim];
        self.summand_grad_into(m, i, x, &mut out);
        Ok(out)
    }

    /// Unchecked `out = ∇f_m^i(x)`.
    pub fn summand_grad_into(&self, m: usize, i: usize, x: &[f64], out: &mut [f64]) {
        let two_lambda = 2.0 * self.lambda;
        for (o, xj) in out.iter_mut().zip(x) {
            *o = two_lambda * xj;
        }
        self.add_data_grad(self.point(m, i), x, 1.0, out);
    }

    /// Unchecked `out = (1/|B|) Σ_{i∈B} ∇f_m^i(x)`; the minibatch gradient.
    pub fn batch_grad_into(&self, m: usize, batch: &[usize], x: &[f64], out: &mut [f64]) {
        let two_lambda = 2.0 * self.lambda;
        for (o, xj) in out.iter_mut().zip(x) {
            *o = 0.0;
            let _ = xj;
        }
        let scale = 1.0 / batch.len() as f64;
        for &i in batch {
            self.add_data_grad(self.point(m, i), x, scale, out);
        }
        for (o, xj) in out.iter_mut().zip(x) {
            *o += two_lambda * xj;
        }
    }

    /// `∇f_m(x)`, the client's average gradient.
    pub fn grad_client(&self, m: usize, x: &[f64]) -> Result<Vec<f64>, ObjectiveError> {
        if m >= self.clients.len() {
            return Err(ObjectiveError::IndexOutOfRange { client: m, sample: 0 });
        }
        self.check_dim(x)?;
        let mut out = vec![0.0; self.dim];
        self.client_grad_into(m, x, &mut out);
        Ok(out)
    }

    pub(crate) fn client_grad_into(&self, m: usize, x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        let points = &self.clients[m].points;
        let scale = 1.0 / points.len() as f64;
        for p in points {
            self.add_data_grad(p, x, scale, out);
        }
        let two_lambda = 2.0 * self.lambda;
        for (o, xj) in out.iter_mut().zip(x) {
            *o += two_lambda * xj;
        }
    }

    /// `∇f(x)`.
    pub fn grad_full(&self, x: &[f64]) -> Result<Vec<f64>, ObjectiveError> {
        self.check_dim(x)?;
        let mut out = vec![0.0; self.dim];
        self.full_grad_into(x, &mut out);
        Ok(out)
    }

    pub(crate) fn full_grad_into(&self, x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        let inv_m = 1.0 / self.clients.len() as f64;
        for client in &self.clients {
            let scale = inv_m / client.points.len() as f64;
            for p in &client.points {
                self.add_data_grad(p, x, scale, out);
            }
        }
        let two_lambda = 2.0 * self.lambda;
        for (o, xj) in out.iter_mut().zip(x) {
            *o += two_lambda * xj;
        }
    }

    /// `f_m(x)`.
    pub fn eval_client(&self, m: usize, x: &[f64]) -> Result<f64, ObjectiveError> {
        if m >= self.clients.len() {
            return Err(ObjectiveError::IndexOutOfRange { client: m, sample: 0 });
        }
        self.check_dim(x)?;
        let points = &self.clients[m].points;
        let data: f64 = points.iter().map(|p| self.data_loss(p, x)).sum::<f64>() / points.len() as f64;
        Ok(data + self.lambda * norm_sq(x))
    }

    /// `f(x)`.
    pub fn eval_full(&self, x: &[f64]) -> Result<f64, ObjectiveError> {
        self.check_dim(x)?;
        let data: f64 = self
            .clients
            .iter()
            .map(|c| c.points.iter().map(|p| self.data_loss(p, x)).sum::<f64>() / c.points.len() as f64)
            .sum::<f64>()
            / self.clients.len() as f64;
        Ok(data + self.lambda * norm_sq(x))
    }

    /// `D_{f_m^i}(x, y) = f(x) - f(y) - <∇f(y), x - y>`, evaluated without
    /// catastrophic cancellation when `x` is close to `y`.
    pub fn bregman_summand(&self, m: usize, i: usize, x: &[f64], y: &[f64]) -> Result<f64, ObjectiveError> {
        self.check_index(m, i)?;
        self.check_dim(x)?;
        self.check_dim(y)?;
        Ok(self.bregman_unchecked(m, i, x, y))
    }

    pub(crate) fn bregman_unchecked(&self, m: usize, i: usize, x: &[f64], y: &[f64]) -> f64 {
        let diff_sq: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
        let p = self.point(m, i);
        let data = match self.kind {
            LossKind::Logistic => logistic_bregman(p.label * p.features.dot(x), p.label * p.features.dot(y)),
            LossKind::Quadratic => 0.5 * diff_sq,
        };
        data + self.lambda * diff_sq
    }

    /// `dᵀ ∇²f(x) d`.
    pub fn hessian_quadratic_form(&self, x: &[f64], d: &[f64]) -> Result<f64, ObjectiveError> {
        self.check_dim(x)?;
        self.check_dim(d)?;
        let dd = norm_sq(d);
        let data = match self.kind {
            LossKind::Quadratic => dd,
            LossKind::Logistic => {
                self.clients
                    .iter()
                    .map(|c| {
                        c.points
                            .iter()
                            .map(|p| {
                                let s = sigmoid(p.label * p.features.dot(x));
                                let ad = p.features.dot(d);
                                s * (1.0 - s) * ad * ad
                            })
                            .sum::<f64>()
                            / c.points.len() as f64
                    })
                    .sum::<f64>()
                    / self.clients.len() as f64
            }
        };
        Ok(data + 2.0 * self.lambda * dd)
    }
}

pub(crate) fn norm_sq(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

pub(crate) fn dist_sq(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn point(dense: &[f64], label: f64) -> DataPoint {
        DataPoint::new(SparseVector::from_dense(dense), label).unwrap()
    }

    fn single(dense: &[f64], label: f64, lambda: f64, kind: LossKind) -> FiniteSumProblem {
        let client = ClientDataset {
            client_id: 0,
            points: vec![point(dense, label)],
        };
        FiniteSumProblem::new(vec![client], dense.len(), lambda, kind).unwrap()
    }

    #[test]
    fn logistic_at_origin_is_log_two() {
        let p = single(&[1.0, 0.0, 0.0], 1.0, 0.0, LossKind::Logistic);
        let v = p.eval_summand(0, 0, &[0.0; 3]).unwrap();
        assert_relative_eq!(v, std::f64::consts::LN_2, epsilon = 1e-15);
    }

    #[test]
    fn logistic_value_with_regularization() {
        let p = single(&[1.0, 0.0, 0.0], 1.0, 0.5, LossKind::Logistic);
        let v = p.eval_summand(0, 0, &[2.0, 0.0, 0.0]).unwrap();
        let expected = (1.0 + (-2.0f64).exp()).ln() + 0.5 * 4.0;
        assert_relative_eq!(v, expected, epsilon = 1e-14);
        assert_relative_eq!(v, 2.126_928_011_042_972_5, epsilon = 1e-12);
    }

    #[test]
    fn quadratic_vanishes_at_center() {
        let c = [0.3, -1.2];
        let p = single(&c, 1.0, 0.0, LossKind::Quadratic);
        assert_eq!(p.eval_summand(0, 0, &c).unwrap(), 0.0);
        assert_eq!(p.grad_summand(0, 0, &c).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn logistic_gradient_at_origin() {
        let a = [0.5, -2.0, 0.0];
        for y in [1.0, -1.0] {
            let p = single(&a, y, 0.0, LossKind::Logistic);
            let g = p.grad_summand(0, 0, &[0.0; 3]).unwrap();
            for (gj, aj) in g.iter().zip(a) {
                assert_relative_eq!(*gj, -y * aj / 2.0, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let p = single(&[1.0, 0.0], 1.0, 0.1, LossKind::Logistic);
        assert_eq!(
            p.eval_summand(0, 0, &[0.0; 3]),
            Err(ObjectiveError::DimensionMismatch { expected: 2, got: 3 })
        );
        assert!(p.grad_summand(0, 0, &[0.0]).is_err());
        assert!(p.grad_full(&[0.0]).is_err());
        assert!(matches!(
            p.grad_summand(0, 1, &[0.0, 0.0]),
            Err(ObjectiveError::IndexOutOfRange { .. })
        ));
    }

    #[test]
    fn sparse_vector_validates_indices() {
        assert!(SparseVector::new(vec![0, 2], vec![1.0, 2.0], 3).is_ok());
        assert!(SparseVector::new(vec![2, 2], vec![1.0, 2.0], 3).is_err());
        assert!(SparseVector::new(vec![1, 0], vec![1.0, 2.0], 3).is_err());
        assert!(SparseVector::new(vec![3], vec![1.0], 3).is_err());
        assert!(SparseVector::new(vec![0], vec![], 3).is_err());
        assert!(DataPoint::new(SparseVector::default(), 0.0).is_err());
    }

    #[test]
    fn bregman_series_matches_direct_formula() {
        for &(z1, z0) in &[(0.3, 0.3005), (-2.0, -2.0008), (5.0, 4.9995)] {
            let direct = softplus(-z1) - softplus(-z0) + sigmoid(-z0) * (z1 - z0);
            assert_relative_eq!(logistic_bregman(z1, z0), direct, max_relative = 1e-6);
        }
        assert!(logistic_bregman(1.0, 1.0) == 0.0);
    }

    #[test]
    fn single_client_single_sample_aggregates_agree() {
        let p = single(&[0.7, -0.1, 2.0], -1.0, 0.05, LossKind::Logistic);
        let x = [0.1, 0.2, -0.3];
        let gs = p.grad_summand(0, 0, &x).unwrap();
        let gc = p.grad_client(0, &x).unwrap();
        let gf = p.grad_full(&x).unwrap();
        for j in 0..3 {
            assert_relative_eq!(gs[j], gc[j], epsilon = 1e-15);
            assert_relative_eq!(gs[j], gf[j], epsilon = 1e-15);
        }
    }
}
