//! Per-agent ridge regression and ellipsoidal confidence sets.

use log::warn;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Constants entering the confidence radius.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceParams {
    /// Sub-Gaussian level of the response noise.
    pub r: f64,
    /// Bound on `‖θ_m‖₂`.
    pub s: f64,
    /// Bound on `‖x_m‖₂`.
    pub k: f64,
    pub nu: f64,
    pub delta_prime: f64,
    pub m: usize,
    pub d: usize,
    /// Base privacy noise scale.
    pub sigma: f64,
}

impl ConfidenceParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str, v: f64| Err(Error::InvalidSpec(format!("{what} = {v}")));
        if !(self.r >= 0.0 && self.r.is_finite()) {
            return bad("R", self.r);
        }
        if !(self.s > 0.0 && self.s.is_finite()) {
            return bad("S", self.s);
        }
        if !(self.k > 0.0 && self.k.is_finite()) {
            return bad("K", self.k);
        }
        if !(self.nu > 0.0 && self.nu.is_finite()) {
            return bad("nu", self.nu);
        }
        if !(self.delta_prime > 0.0 && self.delta_prime < 0.5) {
            return Err(Error::InvalidSpec(format!(
                "delta_prime = {} must lie in (0, 1/2)",
                self.delta_prime
            )));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return bad("sigma", self.sigma);
        }
        if self.m == 0 || self.d == 0 {
            return Err(Error::InvalidSpec("M and d must be positive".into()));
        }
        Ok(())
    }

    /// `R' = √(R² + α²σ²)`, the sub-Gaussian level of noise plus privacy.
    pub fn r_prime(&self, alpha: f64) -> f64 {
        (self.r * self.r + alpha * alpha * self.sigma * self.sigma).sqrt()
    }
}

/// `β_{t,m} = R'·√(d·ln((1 + tK²/ν)·M/δ')) + S√ν`.
pub fn beta(t: usize, alpha: f64, p: &ConfidenceParams) -> f64 {
    let growth = 1.0 + t as f64 * p.k * p.k / p.nu;
    let log_term = (growth * p.m as f64 / p.delta_prime).ln();
    p.r_prime(alpha) * (p.d as f64 * log_term).sqrt() + p.s * p.nu.sqrt()
}

/// `ν + T'λ̌/2`, the high-probability lower bound on `λ_min(G)` after `T'`
/// pure-exploration rounds.
pub fn min_eig_bound(t_prime: usize, nu: f64, lambda_check: f64) -> f64 {
    nu + t_prime as f64 * lambda_check / 2.0
}

/// Ridge estimate `θ̂ = G⁻¹ g` with `G = Σ x xᵀ + νI`, `g = Σ u x`.
#[derive(Debug, Clone)]
pub struct AgentEstimator {
    gram: DMatrix<f64>,
    g: DVector<f64>,
    theta_hat: DVector<f64>,
    gram_inv: DMatrix<f64>,
    gram_inv_sqrt: DMatrix<f64>,
    eig_values: DVector<f64>,
    eig_vectors: DMatrix<f64>,
    min_eig: f64,
    n_updates: usize,
    nu: f64,
    k: f64,
}

impl AgentEstimator {
    /// `k` is the action-norm bound used only for diagnostics.
    pub fn new(d: usize, nu: f64, k: f64) -> Self {
        let mut est = Self {
            gram: DMatrix::identity(d, d) * nu,
            g: DVector::zeros(d),
            theta_hat: DVector::zeros(d),
            gram_inv: DMatrix::identity(d, d) / nu,
            gram_inv_sqrt: DMatrix::identity(d, d) / nu.sqrt(),
            eig_values: DVector::from_element(d, nu),
            eig_vectors: DMatrix::identity(d, d),
            min_eig: nu,
            n_updates: 0,
            nu,
            k,
        };
        est.refresh();
        est
    }

    pub fn dim(&self) -> usize {
        self.g.len()
    }

    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    pub fn g(&self) -> &DVector<f64> {
        &self.g
    }

    pub fn theta_hat(&self) -> &DVector<f64> {
        &self.theta_hat
    }

    pub fn gram_inv(&self) -> &DMatrix<f64> {
        &self.gram_inv
    }

    /// Symmetric square root of `G⁻¹`.
    pub fn gram_inv_sqrt(&self) -> &DMatrix<f64> {
        &self.gram_inv_sqrt
    }

    /// Eigenvalues and orthonormal eigenvectors (as columns) of `G`.
    pub fn gram_eigen(&self) -> (&DVector<f64>, &DMatrix<f64>) {
        (&self.eig_values, &self.eig_vectors)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.min_eig
    }

    pub fn n_updates(&self) -> usize {
        self.n_updates
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn update(&mut self, x: &DVector<f64>, u: f64) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        if !u.is_finite() || x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("estimator update".into()));
        }
        let norm = x.norm();
        if norm > self.k + 1e-8 {
            warn!("action norm {norm} exceeds bound {}", self.k);
        }
        self.gram += x * x.transpose();
        self.g += x * u;
        self.n_updates += 1;
        self.refresh();
        Ok(())
    }

    fn refresh(&mut self) {
        // Symmetrize to keep rounding from accumulating asymmetry.
        let sym = (&self.gram + self.gram.transpose()) * 0.5;
        self.gram = sym;
        let chol = self
            .gram
            .clone()
            .cholesky()
            .expect("Gram matrix is positive definite by construction");
        self.theta_hat = chol.solve(&self.g);
        let eig = self.gram.clone().symmetric_eigen();
        let v = &eig.eigenvectors;
        let inv = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l));
        let inv_sqrt = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l.sqrt()));
        self.gram_inv = v * inv * v.transpose();
        self.gram_inv_sqrt = v * inv_sqrt * v.transpose();
        self.min_eig = eig.eigenvalues.min();
        self.eig_values = eig.eigenvalues;
        self.eig_vectors = eig.eigenvectors;
    }

    /// `‖v‖_G`.
    pub fn g_norm(&self, v: &DVector<f64>) -> f64 {
        v.dot(&(&self.gram * v)).max(0.0).sqrt()
    }

    /// `‖x‖_{G⁻¹}`.
    pub fn g_inv_norm(&self, x: &DVector<f64>) -> f64 {
        x.dot(&(&self.gram_inv * x)).max(0.0).sqrt()
    }
}

/// Whether `‖θ − θ̂‖_G <= β`.
pub fn in_confidence_set(theta: &DVector<f64>, est: &AgentEstimator, beta_val: f64) -> bool {
    est.g_norm(&(theta - est.theta_hat())) <= beta_val
}
