//! Randomised controls `Γ¹`, `Γ²` along a sampled state path, the adjusted
//! beliefs `Π`, and the stopping times `γ(u)` they induce.
//!
//! All paths live on a uniform grid `t_k = k·dt`. A control is stored by its
//! grid values `Γ_k`, with `Γ_{0−} = 0`.

use thiserror::Error;

use crate::boundary::{Boundary, EquilibriumValues};
use crate::single::ValueFunction;

/// Largest move of `Γ¹` allowed in one integration panel.
pub const GAMMA1_PANEL_MOVE: f64 = 1e-3;
/// Smallest `|V^{h₂} − u₂|` accepted at a point of increase.
pub const DENOMINATOR_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StrategyError {
    #[error("probability {0} must lie in (0, 1)")]
    InvalidProbability(f64),
    #[error("control Γ¹ would reach {value} before the terminal jump at step {index}")]
    FactorOutOfRange { index: usize, value: f64 },
    #[error("|V^h2 - u2| = {gap:e} at step {index} is too small to integrate Γ¹")]
    DenominatorNearZero { index: usize, gap: f64 },
    #[error("control length {control} does not match path length {path}")]
    LengthMismatch { control: usize, path: usize },
    #[error("path is empty")]
    EmptyPath,
}

/// Record of a terminal jump of a control to 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TerminalJump {
    pub index: usize,
    pub pre: f64,
    pub post: f64,
    /// State level at which the jump happens inside its step; `None` means
    /// at the grid state.
    pub level: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlPath {
    dt: f64,
    values: Vec<f64>,
    jump: Option<TerminalJump>,
}

impl ControlPath {
    /// Wraps grid values; the caller guarantees they are nondecreasing in
    /// `[0, 1]`.
    pub fn from_values(dt: f64, values: Vec<f64>, jump: Option<TerminalJump>) -> Self {
        debug_assert!(values.windows(2).all(|w| w[1] >= w[0] - 1e-15));
        ControlPath { dt, values, jump }
    }

    pub fn zeros(dt: f64, len: usize) -> Self {
        ControlPath::from_values(dt, vec![0.0; len], None)
    }

    /// Pure stopping time at grid index `k` (`None`: never).
    pub fn stop_at(dt: f64, len: usize, k: Option<usize>) -> Self {
        let mut values = vec![0.0; len];
        let jump = k.filter(|&k| k < len).map(|k| {
            values[k..].fill(1.0);
            TerminalJump {
                index: k,
                pre: 0.0,
                post: 1.0,
                level: None,
            }
        });
        ControlPath { dt, values, jump }
    }

    /// Places the terminal jump, if any, at state `level`.
    pub fn with_jump_level(mut self, level: f64) -> Self {
        if let Some(j) = &mut self.jump {
            j.level = Some(level);
        }
        self
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn jump(&self) -> Option<TerminalJump> {
        self.jump
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.dt
    }

    /// `Γ_k`; the last value persists beyond the end of the grid.
    pub fn value(&self, k: usize) -> f64 {
        match self.values.get(k) {
            Some(v) => *v,
            None => self.values.last().copied().unwrap_or(0.0),
        }
    }

    /// `Γ_{k−}`, with `Γ_{0−} = 0`.
    pub fn left_limit(&self, k: usize) -> f64 {
        if k == 0 {
            0.0
        } else {
            self.value(k - 1)
        }
    }

    /// `ΔΓ_k = Γ_k − Γ_{k−}`.
    pub fn increment(&self, k: usize) -> f64 {
        self.value(k) - self.left_limit(k)
    }
}

/// Sampled adjusted belief `Π_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct BeliefPath {
    p: f64,
    values: Vec<f64>,
}

impl BeliefPath {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn prior(&self) -> f64 {
        self.p
    }

    pub fn value(&self, k: usize) -> f64 {
        match self.values.get(k) {
            Some(v) => *v,
            None => self.values.last().copied().unwrap_or(self.p),
        }
    }

    /// `Π_{k−}`, with `Π_{0−} = p`.
    pub fn left_limit(&self, k: usize) -> f64 {
        if k == 0 {
            self.p
        } else {
            self.value(k - 1)
        }
    }
}

/// `Π = p(1 − Γ)/(1 − pΓ)`, or 1 when `p = 1`.
pub fn belief(p: f64, gamma: f64) -> f64 {
    if p >= 1.0 {
        return 1.0;
    }
    p * (1.0 - gamma) / (1.0 - p * gamma)
}

pub fn belief_path(p: f64, gamma_other: &ControlPath) -> BeliefPath {
    BeliefPath {
        p,
        values: gamma_other.values().iter().map(|&g| belief(p, g)).collect(),
    }
}

/// `Γ² = (p − p∧m)/(p(1 − p∧m))` for a running minimum `m` of `b(X)`.
pub fn gamma2_level(p1: f64, running_min: f64) -> f64 {
    let q = p1.min(running_min);
    if q >= p1 {
        return 0.0;
    }
    ((p1 - q) / (p1 * (1.0 - q))).min(1.0)
}

/// Hold-and-jump modification of `Γ²`: frozen after `freeze_from`
/// (`τ_{g₂}`), jumping to 1 at `jump_at` (`τ_{g₁}`).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HoldRule {
    pub freeze_from: Option<usize>,
    pub jump_at: Option<usize>,
}

impl HoldRule {
    /// First grid indices at which the path reaches `lower` and `upper`.
    pub fn from_thresholds(path: &[f64], lower: f64, upper: f64) -> Self {
        HoldRule {
            freeze_from: first_at_or_above(path, lower),
            jump_at: first_at_or_above(path, upper),
        }
    }
}

/// First index with `path[k] ≥ level`.
pub fn first_at_or_above(path: &[f64], level: f64) -> Option<usize> {
    path.iter().position(|&x| x >= level)
}

/// Equilibrium control of Player 2: keeps `Π¹ ≤ b(X)` by acting on the
/// running minimum of `b` along the path.
pub fn gamma2_from_boundary(
    path: &[f64],
    dt: f64,
    b: &Boundary,
    p1: f64,
    hold: Option<HoldRule>,
) -> Result<ControlPath, StrategyError> {
    if !(p1 > 0.0 && p1 < 1.0) {
        return Err(StrategyError::InvalidProbability(p1));
    }
    let first = *path.first().ok_or(StrategyError::EmptyPath)?;
    let mut values = Vec::with_capacity(path.len());
    let mut running_max = first;
    let mut running_min = b.value(first);
    let freeze = hold.and_then(|h| h.freeze_from).unwrap_or(usize::MAX);
    let jump_at = hold.and_then(|h| h.jump_at).unwrap_or(usize::MAX);
    let mut jump = None;
    let mut level = gamma2_level(p1, running_min);
    for (k, &x) in path.iter().enumerate() {
        if k > jump_at {
            values.push(1.0);
            continue;
        }
        if x > running_max {
            running_max = x;
            running_min = running_min.min(b.value(x));
        }
        if k <= freeze {
            level = gamma2_level(p1, running_min);
        }
        if k == jump_at {
            jump = Some(TerminalJump {
                index: k,
                pre: level,
                post: 1.0,
                level: None,
            });
            values.push(1.0);
        } else {
            values.push(level);
        }
    }
    Ok(ControlPath::from_values(dt, values, jump))
}

/// Multiplier linking `Γ¹` to `Γ²` in the symmetric equilibrium, chosen so
/// that `(1 − p₂Γ¹)(1 − Π¹)` stays at its time-zero value.
pub fn gamma1_factor(b_x0: f64, p1: f64, p2: f64) -> f64 {
    p1 * (1.0 - b_x0.min(p1)) / (p2 * (1.0 - p1))
}

/// Equilibrium control of Player 1 in the symmetric game:
/// `Γ¹ = factor·(Γ² − Γ²₀)` before `τ_g` and 1 from `τ_g` on.
pub fn gamma1_sym(
    gamma2: &ControlPath,
    b_x0: f64,
    p1: f64,
    p2: f64,
    tau_g_index: Option<usize>,
) -> Result<ControlPath, StrategyError> {
    if !(p1 > 0.0 && p1 < 1.0) {
        return Err(StrategyError::InvalidProbability(p1));
    }
    let factor = gamma1_factor(b_x0, p1, p2);
    let g0 = gamma2.value(0);
    let stop = tau_g_index.unwrap_or(usize::MAX);
    let mut values = Vec::with_capacity(gamma2.len());
    let mut jump = None;
    for (k, &g) in gamma2.values().iter().enumerate() {
        let v = factor * (g - g0);
        if k >= stop {
            if k == stop {
                // the continuous part still rises up to the jump level
                jump = Some(TerminalJump {
                    index: k,
                    pre: v.clamp(0.0, 1.0),
                    post: 1.0,
                    level: None,
                });
            }
            values.push(1.0);
            continue;
        }
        if v > 1.0 + 1e-12 {
            return Err(StrategyError::FactorOutOfRange { index: k, value: v });
        }
        values.push(v.clamp(0.0, 1.0));
    }
    Ok(ControlPath::from_values(gamma2.dt(), values, jump))
}

/// Equilibrium control of Player 1 in the asymmetric game.
///
/// Integrates `p₂(V^{h₂} − u₂)dΓ¹ = p₁(1−p₁)∂u₂/∂p₁ (1 − p₂Γ¹)/(1 − p₁Γ²)² dΓ²`
/// in the `Γ²` clock. The equation is linear in `1 − p₂Γ¹`, so each grid
/// increment multiplies it by `exp(−∫κ dΓ²)` with `κ` integrated by Simpson's
/// rule on panels small enough that `Γ¹` moves at most
/// [`GAMMA1_PANEL_MOVE`] per panel. `Γ¹` jumps to 1 at `τ_{g₂}`.
pub fn gamma1_asym(
    path: &[f64],
    gamma2: &ControlPath,
    eq: &EquilibriumValues,
    vh2: &ValueFunction,
    p1: f64,
    p2: f64,
    tau_g2_index: Option<usize>,
) -> Result<ControlPath, StrategyError> {
    if path.len() != gamma2.len() {
        return Err(StrategyError::LengthMismatch {
            control: gamma2.len(),
            path: path.len(),
        });
    }
    if !(p1 > 0.0 && p1 < 1.0) {
        return Err(StrategyError::InvalidProbability(p1));
    }
    let stop = tau_g2_index.unwrap_or(usize::MAX);
    let mut values = Vec::with_capacity(path.len());
    let mut jump = None;
    // y = 1 − p₂Γ¹
    let mut y = 1.0;
    let mut running_max = path.first().copied().unwrap_or(0.0);
    for (k, &x_k) in path.iter().enumerate() {
        // Γ² rises while the path sweeps the levels between the old and the
        // new running maximum
        let x = if x_k > running_max { 0.5 * (running_max + x_k) } else { x_k };
        running_max = running_max.max(x_k);
        if k > stop {
            values.push(1.0);
            continue;
        }
        if k > 0 {
            let (from, to) = (gamma2.value(k - 1), gamma2.value(k));
            if to > from {
                let vh = vh2.value(x);
                let kappa = |g: f64| -> Result<f64, StrategyError> {
                    let pi = belief(p1, g);
                    let gap = vh - eq.u2_continuation(x, pi);
                    if gap.abs() < DENOMINATOR_FLOOR {
                        return Err(StrategyError::DenominatorNearZero { index: k, gap });
                    }
                    let denom = 1.0 - p1 * g;
                    Ok(p1 * (1.0 - p1) * eq.du2_dp1(x, pi) / (denom * denom * gap))
                };
                y *= (-integrate_kappa(&kappa, from, to, y, p2)?).exp();
            }
        }
        let v = ((1.0 - y) / p2).clamp(0.0, 1.0);
        if k == stop {
            // the continuous part still rises up to the jump level
            jump = Some(TerminalJump {
                index: k,
                pre: v,
                post: 1.0,
                level: None,
            });
            values.push(1.0);
        } else {
            values.push(v);
        }
    }
    Ok(ControlPath::from_values(gamma2.dt(), values, jump))
}

/// `∫_from^to κ` by composite Simpson, refining until each panel changes
/// `Γ¹ = (1 − y)/p₂` by at most [`GAMMA1_PANEL_MOVE`].
fn integrate_kappa<F>(kappa: &F, from: f64, to: f64, y: f64, p2: f64) -> Result<f64, StrategyError>
where
    F: Fn(f64) -> Result<f64, StrategyError>,
{
    let (k0, k1) = (kappa(from)?, kappa(to)?);
    // Γ¹ moves by about y·κ·ΔΓ²/p₂ over an increment
    let rough = y * 0.5 * (k0.abs() + k1.abs()) * (to - from) / p2;
    let panels = ((rough / GAMMA1_PANEL_MOVE).ceil() as usize).clamp(1, 1 << 16);
    let h = (to - from) / panels as f64;
    let mut total = 0.0;
    let mut left = k0;
    for i in 0..panels {
        let a = from + i as f64 * h;
        let right = if i + 1 == panels { k1 } else { kappa(a + h)? };
        total += h / 6.0 * (left + 4.0 * kappa(a + 0.5 * h)? + right);
        left = right;
    }
    Ok(total)
}

/// `γ(u)`: first grid index with `Γ_k > u`, or `None` if there is none.
pub fn randomized_stop(control: &ControlPath, u: f64) -> Option<usize> {
    let values = control.values();
    let k = values.partition_point(|&g| g <= u);
    (k < values.len()).then_some(k)
}
