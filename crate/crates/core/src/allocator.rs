//! Privacy levels under a budget on the asymptotic regret constant.
//!
//! For the simplex safe set the regret bound grows like `(T² log T)^{1/3}`
//! with constant
//!
//! ```text
//! r(a) = 2LK (d(R² + α̃²σ²))^{1/3} (2S√M/λ̌ + √((M−1) + (2f(a)−1)²))
//! f(a) = max_m Σ_m' c_m √(R²+α_m'²σ²) / (c_m' √(R²+α_m²σ²))
//! ```
//!
//! where `α̃ = max_m α_m`. [`allocate`] returns the vector `a*` that equalizes
//! `h_m(α_m) = c_m/√(R²+α_m²σ²)` across agents and meets the budget with
//! equality; no agent can raise its level without exceeding the budget.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetInputs {
    /// Budget on the regret constant.
    #[serde(rename = "U")]
    pub u: f64,
    /// Lipschitz constant of the reward.
    #[serde(rename = "L")]
    pub l: f64,
    #[serde(rename = "K")]
    pub k: f64,
    #[serde(rename = "S")]
    pub s: f64,
    pub d: usize,
    #[serde(rename = "M")]
    pub m: usize,
    pub sigma: f64,
    #[serde(rename = "R")]
    pub r: f64,
    /// Simplex scales.
    pub c: Vec<f64>,
    pub lambda_check: f64,
}

impl BudgetInputs {
    pub fn validate(&self) -> Result<()> {
        let pos = [
            ("U", self.u),
            ("L", self.l),
            ("K", self.k),
            ("S", self.s),
            ("sigma", self.sigma),
            ("lambda_check", self.lambda_check),
        ];
        for (name, v) in pos {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidSpec(format!("{name} = {v} must be positive")));
            }
        }
        if !(self.r >= 0.0 && self.r.is_finite()) {
            return Err(Error::InvalidSpec(format!("R = {} must be nonnegative", self.r)));
        }
        if self.d == 0 || self.m == 0 {
            return Err(Error::InvalidSpec("d and M must be positive".into()));
        }
        if self.c.len() != self.m {
            return Err(Error::DimensionMismatch {
                expected: self.m,
                got: self.c.len(),
            });
        }
        if let Some((m, v)) = self.c.iter().enumerate().find(|(_, v)| !(**v > 0.0 && v.is_finite())) {
            return Err(Error::InvalidSpec(format!("c[{m}] = {v} must be positive")));
        }
        Ok(())
    }

    fn c_max(&self) -> f64 {
        self.c.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// `2S/λ̌ + √(4M − 3)`.
    fn shape(&self) -> f64 {
        2.0 * self.s / self.lambda_check + (4.0 * self.m as f64 - 3.0).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrivacyVector {
    pub a: Vec<f64>,
}

impl PrivacyVector {
    pub fn new(a: Vec<f64>) -> Result<Self> {
        if let Some((m, v)) = a.iter().enumerate().find(|(_, v)| !(**v >= 0.0 && v.is_finite())) {
            return Err(Error::InvalidPrivacy(format!("alpha[{m}] = {v} must be nonnegative")));
        }
        Ok(Self { a })
    }

    /// `α̃ = max_m α_m`.
    pub fn max(&self) -> f64 {
        self.a.iter().copied().fold(0.0, f64::max)
    }
}

/// `g(b) = max_m b_m · Σ_m 1/b_m`, which is at least `M`.
pub fn g_function(b: &[f64]) -> Result<f64> {
    if b.is_empty() {
        return Err(Error::InvalidSpec("empty vector".into()));
    }
    if let Some((m, v)) = b.iter().enumerate().find(|(_, v)| !(**v > 0.0 && v.is_finite())) {
        return Err(Error::InvalidSpec(format!("b[{m}] = {v} must be positive")));
    }
    let max = b.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(max * b.iter().map(|v| 1.0 / v).sum::<f64>())
}

/// `h_m(α_m) = c_m/√(R² + α_m²σ²)`.
fn h_values(a: &PrivacyVector, c: &[f64], r: f64, sigma: f64) -> Result<Vec<f64>> {
    if a.a.len() != c.len() {
        return Err(Error::DimensionMismatch {
            expected: c.len(),
            got: a.a.len(),
        });
    }
    a.a.iter()
        .zip(c)
        .enumerate()
        .map(|(m, (al, cm))| {
            let den = (r * r + al * al * sigma * sigma).sqrt();
            if den == 0.0 {
                Err(Error::DivisionByZero(format!(
                    "f(a): agent {m} has zero noise level"
                )))
            } else {
                Ok(cm / den)
            }
        })
        .collect()
}

/// `f(a) = g(h(a))`.
pub fn f_of_a(a: &PrivacyVector, c: &[f64], r: f64, sigma: f64) -> Result<f64> {
    g_function(&h_values(a, c, r, sigma)?)
}

/// The asymptotic regret constant `r(a)`; `inputs.u` is not used.
pub fn r_of_a(a: &PrivacyVector, inputs: &BudgetInputs) -> Result<f64> {
    let f = f_of_a(a, &inputs.c, inputs.r, inputs.sigma)?;
    let m = inputs.m as f64;
    let at = a.max();
    let noise = inputs.d as f64 * (inputs.r * inputs.r + at * at * inputs.sigma * inputs.sigma);
    Ok(2.0
        * inputs.l
        * inputs.k
        * noise.cbrt()
        * (2.0 * inputs.s * m.sqrt() / inputs.lambda_check
            + ((m - 1.0) + (2.0 * f - 1.0).powi(2)).sqrt()))
}

/// Smallest budget for which some privacy vector is allowed:
/// `2LK√M (2S/λ̌ + √(4M−3)) (dR²)^{1/3}`.
pub fn min_budget(inputs: &BudgetInputs) -> f64 {
    2.0 * inputs.l
        * inputs.k
        * (inputs.m as f64).sqrt()
        * inputs.shape()
        * (inputs.d as f64 * inputs.r * inputs.r).cbrt()
}

/// `r̃² σ²`, negative when the budget is below [`min_budget`].
fn r_tilde_sq_sigma_sq(inputs: &BudgetInputs) -> f64 {
    let m = inputs.m as f64;
    let denom = 8.0
        * inputs.l.powi(3)
        * inputs.k.powi(3)
        * inputs.d as f64
        * m.powf(1.5)
        * inputs.shape().powi(3);
    inputs.u.powi(3) / denom - inputs.r * inputs.r
}

/// `r̃ = (1/σ)√(U³/(8L³K³dM^{3/2}(2S/λ̌ + √(4M−3))³) − R²)`.
pub fn r_tilde(inputs: &BudgetInputs) -> Result<f64> {
    inputs.validate()?;
    let v = r_tilde_sq_sigma_sq(inputs);
    if v < 0.0 {
        return Err(Error::InfeasibleBudget {
            budget: inputs.u,
            min_budget: min_budget(inputs),
        });
    }
    Ok(v.sqrt() / inputs.sigma)
}

/// `α*_m = √((R²/σ² + r̃²) c_m²/c̃² − R²/σ²)`.
pub fn allocate(inputs: &BudgetInputs) -> Result<PrivacyVector> {
    let rt = r_tilde(inputs)?;
    let ratio = (inputs.r / inputs.sigma).powi(2);
    let c_max = inputs.c_max();
    let a = inputs
        .c
        .iter()
        .enumerate()
        .map(|(m, cm)| {
            let v = (ratio + rt * rt) * (cm / c_max).powi(2) - ratio;
            if v < 0.0 {
                Err(Error::AgentInfeasible { agent: m })
            } else {
                Ok(v.sqrt())
            }
        })
        .collect::<Result<Vec<f64>>>()?;
    PrivacyVector::new(a)
}

#[derive(Debug, Clone, PartialEq)]
pub struct UnimprovabilityReport {
    /// `|r(a*) − U| / U`.
    pub equality_rel_err: f64,
    pub samples: usize,
    /// Perturbations with `r(a* + v) <= U`.
    pub counterexamples: usize,
    /// Smallest `(r(a* + v) − U)/U` seen.
    pub worst_margin: f64,
    pub passed: bool,
}

/// Relative tolerance on `r(a*) = U`.
pub const EQUALITY_TOL: f64 = 1e-9;

/// Checks `r(a*) = U` and `r(a* + v) > U` for random `v >= 0`, `v ≠ 0`,
/// with `‖v‖₂` log-uniform in `[1e-6, 1]`.
pub fn verify_unimprovable<R: Rng + ?Sized>(
    a_star: &PrivacyVector,
    inputs: &BudgetInputs,
    n_samples: usize,
    rng: &mut R,
) -> Result<UnimprovabilityReport> {
    let u = inputs.u;
    let equality_rel_err = (r_of_a(a_star, inputs)? - u).abs() / u;
    let mut counterexamples = 0;
    let mut worst_margin = f64::INFINITY;
    let m = a_star.a.len();
    for _ in 0..n_samples {
        let dir = loop {
            let v: Vec<f64> = (0..m)
                .map(|_| rng.sample::<f64, _>(StandardNormal).abs())
                .collect();
            let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if n > 0.0 {
                break v.into_iter().map(|x| x / n).collect::<Vec<f64>>();
            }
        };
        let norm = 10f64.powf(rng.random_range(-6.0..=0.0));
        let a = PrivacyVector::new(
            a_star
                .a
                .iter()
                .zip(&dir)
                .map(|(a, v)| a + norm * v)
                .collect(),
        )?;
        let margin = (r_of_a(&a, inputs)? - u) / u;
        worst_margin = worst_margin.min(margin);
        if margin <= 0.0 {
            counterexamples += 1;
        }
    }
    Ok(UnimprovabilityReport {
        equality_rel_err,
        samples: n_samples,
        counterexamples,
        worst_margin,
        passed: equality_rel_err <= EQUALITY_TOL && counterexamples == 0,
    })
}

/// Axis probes `a* + ε e_m`; returns the smallest relative margin.
pub fn probe_axes(a_star: &PrivacyVector, inputs: &BudgetInputs, eps: f64) -> Result<f64> {
    let mut worst = f64::INFINITY;
    for m in 0..a_star.a.len() {
        let mut a = a_star.a.clone();
        a[m] += eps;
        let margin = (r_of_a(&PrivacyVector::new(a)?, inputs)? - inputs.u) / inputs.u;
        worst = worst.min(margin);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, StreamKind};
    use approx::assert_relative_eq;

    fn inputs(r: f64) -> BudgetInputs {
        BudgetInputs {
            u: 1.0e4,
            l: (0.66f64).sqrt(),
            k: 2.0,
            s: 0.5,
            d: 3,
            m: 3,
            sigma: 0.405_280,
            r,
            c: vec![1.0, 0.25, 0.5],
            lambda_check: 0.1,
        }
    }

    fn brute_f(a: &[f64], c: &[f64], r: f64, sigma: f64) -> f64 {
        let mut best = f64::NEG_INFINITY;
        for m in 0..a.len() {
            let mut s = 0.0;
            for mp in 0..a.len() {
                s += c[m] * (r * r + a[mp] * a[mp] * sigma * sigma).sqrt()
                    / (c[mp] * (r * r + a[m] * a[m] * sigma * sigma).sqrt());
            }
            best = best.max(s);
        }
        best
    }

    #[test]
    fn g_examples() {
        assert_eq!(g_function(&[2.5; 4]).unwrap(), 4.0);
        assert_eq!(g_function(&[1.0, 2.0]).unwrap(), 3.0);
        assert!(g_function(&[1.0, 0.0]).is_err());
        let mut rng = stream(1, StreamKind::Exploration, 0);
        for _ in 0..1000 {
            let m = rng.random_range(1..6);
            let b: Vec<f64> = (0..m).map(|_| rng.random_range(0.01..10.0)).collect();
            assert!(g_function(&b).unwrap() >= m as f64 * (1.0 - 1e-15));
        }
    }

    #[test]
    fn f_uniform_is_m() {
        let a = PrivacyVector::new(vec![0.7; 4]).unwrap();
        assert_relative_eq!(f_of_a(&a, &[2.0; 4], 0.1, 0.4).unwrap(), 4.0, epsilon = 1e-15);
    }

    #[test]
    fn f_matches_double_loop() {
        let mut rng = stream(2, StreamKind::Exploration, 0);
        for _ in 0..200 {
            let a: Vec<f64> = (0..3).map(|_| rng.random_range(0.0..2.0)).collect();
            let c: Vec<f64> = (0..3).map(|_| rng.random_range(0.1..2.0)).collect();
            let r = rng.random_range(0.001..0.5);
            let f = f_of_a(&PrivacyVector::new(a.clone()).unwrap(), &c, r, 0.4).unwrap();
            assert!((f - brute_f(&a, &c, r, 0.4)).abs() <= 1e-12);
        }
    }

    #[test]
    fn f_rejects_zero_noise() {
        let a = PrivacyVector::new(vec![0.0, 1.0]).unwrap();
        assert!(matches!(
            f_of_a(&a, &[1.0, 1.0], 0.0, 0.4),
            Err(Error::DivisionByZero(_))
        ));
    }

    #[test]
    fn r_uniform_closed_form() {
        let mut inp = inputs(0.0);
        inp.c = vec![0.3; 3];
        let alpha = 0.8;
        let a = PrivacyVector::new(vec![alpha; 3]).unwrap();
        let m = 3.0f64;
        let expected = 2.0 * inp.l * inp.k * (3.0 * alpha * alpha * inp.sigma.powi(2)).cbrt()
            * (2.0 * inp.s * m.sqrt() / inp.lambda_check + (4.0 * m * m - 3.0 * m).sqrt());
        assert_relative_eq!(r_of_a(&a, &inp).unwrap(), expected, max_relative = 1e-14);
        let doubled = PrivacyVector::new(vec![2.0 * alpha; 3]).unwrap();
        assert_relative_eq!(
            r_of_a(&doubled, &inp).unwrap() / expected,
            2f64.powf(2.0 / 3.0),
            max_relative = 1e-14
        );
    }

    #[test]
    fn allocation_meets_budget() {
        for r in [0.0, 0.001, 0.05] {
            let inp = inputs(r);
            let a = allocate(&inp).unwrap();
            assert_relative_eq!(r_of_a(&a, &inp).unwrap(), inp.u, max_relative = 1e-12);
            assert!((f_of_a(&a, &inp.c, r, inp.sigma).unwrap() - 3.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn noiseless_allocation_is_proportional() {
        let inp = inputs(0.0);
        let a = allocate(&inp).unwrap();
        let rt = r_tilde(&inp).unwrap();
        for m in 0..3 {
            assert_relative_eq!(a.a[m], rt * inp.c[m], max_relative = 1e-14);
        }
        let mut one = inputs(0.0);
        one.m = 1;
        one.c = vec![0.7];
        let a1 = allocate(&one).unwrap();
        assert_relative_eq!(a1.a[0], r_tilde(&one).unwrap(), max_relative = 1e-15);
    }

    #[test]
    fn budget_below_minimum_is_rejected() {
        let mut inp = inputs(0.05);
        let umin = min_budget(&inp);
        inp.u = 0.9 * umin;
        match allocate(&inp) {
            Err(Error::InfeasibleBudget { min_budget, .. }) => {
                assert_relative_eq!(min_budget, umin, max_relative = 1e-15)
            }
            other => panic!("{other:?}"),
        }
        inp.u = umin * (1.0 + 1e-9);
        assert!(r_tilde(&inp).unwrap() >= 0.0);
    }

    #[test]
    fn small_scale_agent_can_be_infeasible() {
        let mut inp = inputs(0.1);
        inp.c = vec![1.0, 0.01, 0.5];
        inp.u = min_budget(&inp) * 1.01;
        assert!(matches!(allocate(&inp), Err(Error::AgentInfeasible { agent: 1 })));
    }

    #[test]
    fn perturbations_exceed_budget() {
        let inp = inputs(0.001);
        let a = allocate(&inp).unwrap();
        let mut rng = stream(3, StreamKind::Exploration, 0);
        let rep = verify_unimprovable(&a, &inp, 2000, &mut rng).unwrap();
        assert!(rep.passed, "{rep:?}");
        assert!(probe_axes(&a, &inp, 1e-4).unwrap() > 0.0);
    }

    #[test]
    fn monotone_away_from_allocation() {
        // Increasing levels never decreases r from the equalized point.
        let inp = inputs(0.001);
        let a = allocate(&inp).unwrap();
        let base = r_of_a(&a, &inp).unwrap();
        let mut rng = stream(4, StreamKind::Exploration, 0);
        for _ in 0..1000 {
            let b: Vec<f64> = a.a.iter().map(|x| x + rng.random_range(0.0..0.5)).collect();
            assert!(r_of_a(&PrivacyVector::new(b).unwrap(), &inp).unwrap() > base);
        }
    }

    #[test]
    fn monotonicity_fails_between_arbitrary_pairs() {
        // a <= a' does not imply r(a) <= r(a'): raising a non-maximal level
        // towards the maximum can balance h and lower f.
        let mut inp = inputs(0.0);
        inp.m = 2;
        inp.c = vec![1.0, 1.0];
        let a = PrivacyVector::new(vec![0.5, 1.0]).unwrap();
        let b = PrivacyVector::new(vec![0.75, 1.0]).unwrap();
        assert!(r_of_a(&b, &inp).unwrap() < r_of_a(&a, &inp).unwrap());
    }
}
