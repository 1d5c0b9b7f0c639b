//! Single-player perpetual stopping values under GBM.
//!
//! For a call `(x−K)⁺` the value is `(b−K)(x/b)^γ` below the threshold
//! `b = γK/(γ−1)`; for a put `(K−x)⁺` it is `(K−b)(x/b)^η` above
//! `b = ηK/(η−1)`. The zero payoff has value zero and stops immediately.

use thiserror::Error;

use crate::model::{ModelParams, Payoff, Roots};

/// Closed-form value function of a perpetual stopping problem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValueFunction {
    payoff: Payoff,
    roots: Roots,
    threshold: f64,
    coefficient: f64,
}

pub fn call_value(params: &ModelParams, strike: f64) -> ValueFunction {
    let roots = params.roots();
    let gamma = roots.gamma;
    let threshold = gamma * strike / (gamma - 1.0);
    ValueFunction {
        payoff: Payoff::Call { strike },
        roots,
        threshold,
        coefficient: (threshold - strike) * threshold.powf(-gamma),
    }
}

pub fn put_value(params: &ModelParams, strike: f64) -> ValueFunction {
    let roots = params.roots();
    let eta = roots.eta;
    let threshold = eta * strike / (eta - 1.0);
    ValueFunction {
        payoff: Payoff::Put { strike },
        roots,
        threshold,
        coefficient: (strike - threshold) * threshold.powf(-eta),
    }
}

pub fn zero_value(params: &ModelParams) -> ValueFunction {
    ValueFunction {
        payoff: Payoff::Zero,
        roots: params.roots(),
        threshold: 0.0,
        coefficient: 0.0,
    }
}

/// Value function for any supported payoff.
pub fn value_function(params: &ModelParams, payoff: Payoff) -> ValueFunction {
    match payoff {
        Payoff::Call { strike } => call_value(params, strike),
        Payoff::Put { strike } => put_value(params, strike),
        Payoff::Zero => zero_value(params),
    }
}

pub fn value_at(vf: &ValueFunction, x: f64) -> f64 {
    vf.value(x)
}

impl ValueFunction {
    pub fn payoff(&self) -> Payoff {
        self.payoff
    }

    pub fn roots(&self) -> Roots {
        self.roots
    }

    /// Exercise threshold (`b_g` for calls, the lower boundary for puts).
    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    /// Multiplier of the fundamental solution in the continuation region.
    pub fn coefficient(&self) -> f64 {
        self.coefficient
    }

    /// Whether immediate stopping is optimal at `x`.
    pub fn in_stopping_region(&self, x: f64) -> bool {
        match self.payoff {
            Payoff::Call { .. } => x >= self.threshold,
            Payoff::Put { .. } => x <= self.threshold,
            Payoff::Zero => true,
        }
    }

    pub fn value(&self, x: f64) -> f64 {
        if self.in_stopping_region(x) {
            return self.payoff.eval(x);
        }
        self.continuation(x)
    }

    fn exponent(&self) -> f64 {
        match self.payoff {
            Payoff::Put { .. } => self.roots.eta,
            _ => self.roots.gamma,
        }
    }

    /// `payoff(b)·(x/b)^z`; avoids forming `b^{-z}`, which under- or
    /// overflows when |η| is large.
    fn scaled(&self, x: f64) -> f64 {
        self.payoff.eval(self.threshold) * (x / self.threshold).powf(self.exponent())
    }

    /// Analytic derivative; at the threshold this is the derivative taken
    /// from inside the continuation region.
    pub fn derivative(&self, x: f64) -> f64 {
        match self.payoff {
            Payoff::Call { .. } if x > self.threshold => 1.0,
            Payoff::Put { .. } if x < self.threshold => -1.0,
            Payoff::Call { .. } | Payoff::Put { .. } => self.exponent() * self.scaled(x) / x,
            Payoff::Zero => 0.0,
        }
    }

    /// Value in the continuation region extended analytically past the
    /// threshold, i.e. `coefficient · ψ(x)` for calls.
    pub fn continuation(&self, x: f64) -> f64 {
        match self.payoff {
            Payoff::Zero => 0.0,
            _ => self.scaled(x),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LatticeError {
    #[error("lattice needs at least 100 steps, got {0}")]
    TooFewSteps(usize),
    #[error("truncation bound {bound:e} exceeds tolerance {tolerance:e}; increase the horizon")]
    InsufficientHorizon { bound: f64, tolerance: f64 },
    #[error("drift-matched branching probability {0} is outside (0, 1); increase steps")]
    Unstable(f64),
    #[error("state must be positive, got {0}")]
    InvalidState(f64),
}

/// Binomial-lattice approximation of the perpetual value, truncated at a
/// long horizon. Independent of the closed forms above.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatticeOracle {
    pub steps: usize,
    pub horizon: f64,
    /// Admissible truncation error relative to `max(x, strike)`.
    pub relative_tolerance: f64,
}

impl LatticeOracle {
    pub fn new(steps: usize, horizon: f64) -> Self {
        LatticeOracle {
            steps,
            horizon,
            relative_tolerance: 1e-6,
        }
    }

    /// Upper bound on the discounted payoff that can be earned after the horizon.
    pub fn truncation_bound(&self, payoff: &Payoff, params: &ModelParams, x: f64) -> f64 {
        match payoff {
            Payoff::Call { .. } => x * ((params.mu() - params.r()) * self.horizon).exp(),
            Payoff::Put { strike } => strike * (-params.r() * self.horizon).exp(),
            Payoff::Zero => 0.0,
        }
    }

    pub fn value(&self, payoff: &Payoff, params: &ModelParams, x: f64) -> Result<f64, LatticeError> {
        if self.steps < 100 {
            return Err(LatticeError::TooFewSteps(self.steps));
        }
        if !(x > 0.0 && x.is_finite()) {
            return Err(LatticeError::InvalidState(x));
        }
        if payoff.is_zero() {
            return Ok(0.0);
        }
        let scale = x.max(payoff.strike().unwrap_or(x));
        let tolerance = self.relative_tolerance * scale;
        let bound = self.truncation_bound(payoff, params, x);
        if bound > tolerance {
            return Err(LatticeError::InsufficientHorizon { bound, tolerance });
        }

        let n = self.steps;
        let dt = self.horizon / n as f64;
        let up = (params.sigma() * dt.sqrt()).exp();
        let down = 1.0 / up;
        let prob = ((params.mu() * dt).exp() - down) / (up - down);
        if !(prob > 0.0 && prob < 1.0) {
            return Err(LatticeError::Unstable(prob));
        }
        let disc = (-params.r() * dt).exp();
        let (pu, pd) = (disc * prob, disc * (1.0 - prob));

        // up_pow[k + n] = up^k for k in -n..=n
        let mut up_pow = vec![0.0; 2 * n + 1];
        up_pow[n] = 1.0;
        for k in 1..=n {
            up_pow[n + k] = up_pow[n + k - 1] * up;
            up_pow[n - k] = up_pow[n - k + 1] * down;
        }
        let state = |step: usize, j: usize| x * up_pow[n + 2 * j - step];

        let mut values: Vec<f64> = (0..=n).map(|j| payoff.eval(state(n, j))).collect();
        for step in (0..n).rev() {
            for j in 0..=step {
                let cont = pu * values[j + 1] + pd * values[j];
                values[j] = cont.max(payoff.eval(state(step, j)));
            }
        }
        Ok(values[0])
    }
}

/// Convenience wrapper with the default truncation tolerance.
pub fn lattice_oracle(
    payoff: &Payoff,
    params: &ModelParams,
    x: f64,
    steps: usize,
    horizon: f64,
) -> Result<f64, LatticeError> {
    LatticeOracle::new(steps, horizon).value(payoff, params, x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::validate;

    fn unit_params() -> ModelParams {
        validate(0.0, 2f64.sqrt(), 2.0).unwrap()
    }

    #[test]
    fn call_closed_form_worked_case() {
        let vf = call_value(&unit_params(), 1.0);
        assert!((vf.threshold() - 2.0).abs() < 1e-12);
        assert!((vf.value(1.0) - 0.25).abs() < 1e-12);
        let vf3 = call_value(&unit_params(), 3.0);
        assert!((vf3.threshold() - 6.0).abs() < 1e-12);
        assert!((vf3.value(5.0) - 25.0 / 12.0).abs() < 1e-12);
    }

    #[test]
    fn call_threshold_drifting_params() {
        let params = validate(0.08, 0.01, 0.1).unwrap();
        let vf = call_value(&params, 3.0);
        assert!((vf.threshold() - 15.01).abs() < 5e-3, "{}", vf.threshold());
    }

    #[test]
    fn put_closed_form_worked_case() {
        let vf = put_value(&unit_params(), 1.0);
        assert!((vf.threshold() - 0.5).abs() < 1e-12);
        assert!((vf.value(1.0) - 0.25).abs() < 1e-12);
        assert!((vf.value(0.5) - 0.5).abs() < 1e-12);
        assert!(vf.value(1e6) < 1e-6);
    }

    #[test]
    fn value_matching_and_smooth_pasting() {
        for params in [unit_params(), validate(0.08, 0.01, 0.1).unwrap(), validate(0.03, 0.3, 0.07).unwrap()] {
            for k in [0.5, 1.0, 3.0] {
                for vf in [call_value(&params, k), put_value(&params, k)] {
                    let b = vf.threshold();
                    let pay = vf.payoff();
                    assert!((vf.value(b) - pay.eval(b)).abs() <= 1e-12 * b.max(1.0));
                    // derivative from inside the continuation region
                    let z = match pay {
                        Payoff::Call { .. } => vf.roots().gamma,
                        _ => vf.roots().eta,
                    };
                    let inside = z * pay.eval(b) / b;
                    assert!((inside - pay.derivative(b)).abs() <= 1e-9, "{pay} {inside}");
                    // continuity of the closed form across the threshold
                    assert!((vf.continuation(b) - pay.eval(b)).abs() <= 1e-12 * b.max(1.0));
                }
            }
        }
    }

    #[test]
    fn value_dominates_payoff_and_call_is_convex() {
        let params = validate(0.02, 0.25, 0.06).unwrap();
        for vf in [call_value(&params, 2.0), put_value(&params, 2.0)] {
            let b = vf.threshold();
            let n = 1000;
            let xs: Vec<f64> = (0..n)
                .map(|i| 0.01 * b * (1000f64).powf(i as f64 / (n - 1) as f64))
                .collect();
            for &x in &xs {
                assert!(vf.value(x) >= vf.payoff().eval(x) - 1e-12);
            }
            if let Payoff::Call { .. } = vf.payoff() {
                for w in xs.windows(3) {
                    assert!(vf.value(w[1]) >= vf.value(w[0]));
                    // slope of the secant is nondecreasing
                    let s1 = (vf.value(w[1]) - vf.value(w[0])) / (w[1] - w[0]);
                    let s2 = (vf.value(w[2]) - vf.value(w[1])) / (w[2] - w[1]);
                    assert!(s2 >= s1 - 1e-9);
                }
            }
        }
    }

    #[test]
    fn zero_payoff_is_identically_zero() {
        let vf = zero_value(&unit_params());
        assert_eq!(vf.value(7.0), 0.0);
        assert!(vf.in_stopping_region(0.3));
        assert_eq!(
            lattice_oracle(&Payoff::Zero, &unit_params(), 1.0, 200, 10.0).unwrap(),
            0.0
        );
    }

    #[test]
    fn lattice_matches_worked_call() {
        let v = lattice_oracle(&Payoff::Call { strike: 1.0 }, &unit_params(), 1.0, 5000, 10.0).unwrap();
        assert!((v - 0.25).abs() <= 5e-3, "{v}");
    }

    #[test]
    fn lattice_matches_worked_put() {
        let v = lattice_oracle(&Payoff::Put { strike: 1.0 }, &unit_params(), 1.0, 5000, 10.0).unwrap();
        assert!((v - 0.25).abs() <= 5e-3, "{v}");
    }

    #[test]
    fn lattice_deep_in_the_money_call() {
        let v = lattice_oracle(&Payoff::Call { strike: 1.0 }, &unit_params(), 10.0, 2000, 15.0).unwrap();
        assert!((v - 9.0).abs() <= 5e-3 * 9.0, "{v}");
    }

    #[test]
    fn lattice_refuses_short_horizon_and_few_steps() {
        let params = validate(0.08, 0.01, 0.1).unwrap();
        assert!(matches!(
            lattice_oracle(&Payoff::Call { strike: 3.0 }, &params, 10.0, 1000, 10.0),
            Err(LatticeError::InsufficientHorizon { .. })
        ));
        assert_eq!(
            lattice_oracle(&Payoff::Call { strike: 3.0 }, &params, 10.0, 50, 10.0),
            Err(LatticeError::TooFewSteps(50))
        );
    }
}
