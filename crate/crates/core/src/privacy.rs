//! Gaussian local privacy mechanism.
//!
//! Each agent perturbs its own response before sharing it:
//! `u = y + h` with `h ~ N(0, (α_m σ)²)`, `σ = (Δy/ε)√(2 ln(1.25/δ))` and
//! `α_m = ε/ε_m`. A single round is `(ε_m, δ)`-locally private; anything
//! computed from `u` alone (estimates, actions) inherits the guarantee by
//! post-processing. Loss accumulated over many rounds is not tracked.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `(Δy/ε)·√(2 ln(1.25/δ))`.
pub fn sigma_for(epsilon: f64, delta: f64, sensitivity: f64) -> Result<f64> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::InvalidPrivacy(format!("epsilon = {epsilon} must be positive")));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidDelta(delta));
    }
    if !(sensitivity >= 0.0 && sensitivity.is_finite()) {
        return Err(Error::InvalidPrivacy(format!(
            "sensitivity = {sensitivity} must be nonnegative"
        )));
    }
    Ok(sensitivity / epsilon * (2.0 * (1.25 / delta).ln()).sqrt())
}

/// Base budget `(ε, δ)` and per-agent budgets `ε_m`, with derived noise
/// scales.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrivacyScheme {
    epsilon: f64,
    delta: f64,
    epsilon_m: Vec<f64>,
    sensitivity: f64,
    sigma: f64,
    alpha: Vec<f64>,
    sigma_m: Vec<f64>,
}

impl PrivacyScheme {
    pub fn from_epsilons(
        epsilon: f64,
        delta: f64,
        sensitivity: f64,
        epsilon_m: Vec<f64>,
    ) -> Result<Self> {
        let sigma = sigma_for(epsilon, delta, sensitivity)?;
        let alpha = alpha_levels(epsilon, &epsilon_m)?;
        let sigma_m = alpha.iter().map(|a| a * sigma).collect();
        Ok(Self {
            epsilon,
            delta,
            epsilon_m,
            sensitivity,
            sigma,
            alpha,
            sigma_m,
        })
    }

    /// Builds the scheme from privacy levels. A level of zero means the agent
    /// shares its response unperturbed (`ε_m = ∞`).
    pub fn from_alphas(epsilon: f64, delta: f64, sensitivity: f64, alpha: Vec<f64>) -> Result<Self> {
        let sigma = sigma_for(epsilon, delta, sensitivity)?;
        if let Some((m, a)) = alpha
            .iter()
            .enumerate()
            .find(|(_, a)| !(a.is_finite() && **a >= 0.0))
        {
            return Err(Error::InvalidPrivacy(format!("alpha[{m}] = {a} must be nonnegative")));
        }
        let epsilon_m = alpha.iter().map(|a| epsilon / a).collect();
        let sigma_m = alpha.iter().map(|a| a * sigma).collect();
        Ok(Self {
            epsilon,
            delta,
            epsilon_m,
            sensitivity,
            sigma,
            alpha,
            sigma_m,
        })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn sensitivity(&self) -> f64 {
        self.sensitivity
    }

    pub fn epsilon_m(&self) -> &[f64] {
        &self.epsilon_m
    }

    /// Base noise scale σ.
    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    /// Per-agent noise standard deviations `α_m σ`.
    pub fn sigma_m(&self) -> &[f64] {
        &self.sigma_m
    }

    pub fn n_agents(&self) -> usize {
        self.alpha.len()
    }
}

/// `α_m = ε/ε_m`.
pub fn alpha_levels(epsilon: f64, epsilon_m: &[f64]) -> Result<Vec<f64>> {
    epsilon_m
        .iter()
        .enumerate()
        .map(|(m, &e)| {
            if e > 0.0 && !e.is_nan() {
                Ok(epsilon / e)
            } else {
                Err(Error::InvalidPrivacy(format!("epsilon_m[{m}] = {e} must be positive")))
            }
        })
        .collect()
}

/// A privatized response as shared by an agent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerturbedResponse {
    pub u: f64,
    pub agent: usize,
    pub round: usize,
}

/// Adds the agent's Gaussian noise to `y`.
///
/// # Panics
///
/// If `agent` is out of range for the scheme.
pub fn privatize<R: Rng + ?Sized>(
    y: f64,
    agent: usize,
    round: usize,
    scheme: &PrivacyScheme,
    rng: &mut R,
) -> PerturbedResponse {
    let z: f64 = rng.sample(StandardNormal);
    PerturbedResponse {
        u: y + scheme.sigma_m[agent] * z,
        agent,
        round,
    }
}
