//! Equilibrium stopping boundaries and the equilibrium value functions.
//!
//! A boundary is a nonincreasing map `x ↦ b(x) ∈ [0, 1]` that equals 1 at
//! and below a touch point `a` and 0 from the single-player threshold `b_g`
//! on. Player 2's control keeps Player 1's belief `Π¹` below `b(X)`.
//!
//! Three constructions are supported:
//!
//! * martingale consolation: `b = (V^g − g)/(V^g − V^h)` in closed form;
//! * supermartingale consolation: `b = 1 − exp(−∫_x^{b_g} k(y) dy)` with
//!   `k(y) = (1 − γ + Kγ/y)/(y − K − V^h(y))`, tabulated by quadrature;
//! * the asymmetric call/call game, which reuses the closed form on
//!   Player 1's data.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use thiserror::Error;

use crate::model::{GameSpec, ModelParams, Payoff, Roots};
use crate::quad::{self, QuadError};
use crate::single::{value_function, ValueFunction};

/// Number of nodes of the tabulated ODE boundary.
pub const ODE_TABLE_NODES: usize = 2048;
/// Width of the clamped layer above the touch point, relative to `b_g − a`.
pub const ODE_CLAMP_FRACTION: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BoundaryError {
    #[error("unsupported payoff family: {0}")]
    UnsupportedFamily(String),
    #[error("continuation region of h does not contain that of g (b_g = {b_g}, b_h = {b_h})")]
    InclusionViolated { b_g: f64, b_h: f64 },
    #[error("V^h - g has no sign change on [{lo}, {hi}]")]
    NoRoot { lo: f64, hi: f64 },
    #[error("boundary quadrature failed: {0}")]
    QuadratureFailure(#[from] QuadError),
    #[error("asymmetric construction needs a2 <= a1 < b_g2 (a1 = {a1}, a2 = {a2}, b_g2 = {b_g2})")]
    OrderingViolated { a1: f64, a2: f64, b_g2: f64 },
    #[error("asymmetric construction needs K2 <= K1 (K1 = {k1}, K2 = {k2})")]
    StrikeOrdering { k1: f64, k2: f64 },
    #[error("probability {0} is outside (0, 1)")]
    OutOfRange(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BoundaryMode {
    Martingale,
    Ode,
    Asym,
}

impl fmt::Display for BoundaryMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BoundaryMode::Martingale => "martingale",
            BoundaryMode::Ode => "ode",
            BoundaryMode::Asym => "asym",
        })
    }
}

impl FromStr for BoundaryMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "martingale" => Ok(BoundaryMode::Martingale),
            "ode" => Ok(BoundaryMode::Ode),
            "asym" => Ok(BoundaryMode::Asym),
            other => Err(format!("unknown mode '{other}' (martingale, ode, asym)")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Boundary {
    mode: BoundaryMode,
    touch_a: f64,
    upper_bg: f64,
    repr: Repr,
}

#[derive(Debug, Clone)]
enum Repr {
    Closed {
        vg: ValueFunction,
        vh: ValueFunction,
        g: Payoff,
    },
    Table(Arc<OdeTable>),
}

#[derive(Debug)]
struct OdeTable {
    /// Left end of the table, `a + δ`; `b ≡ 1` below it.
    start: f64,
    delta: f64,
    /// `ln((b_g − a)/δ)`
    log_ratio: f64,
    xs: Vec<f64>,
    bs: Vec<f64>,
    slopes: Vec<f64>,
    integrand: OdeIntegrand,
}

#[derive(Debug, Clone, Copy)]
struct OdeIntegrand {
    gamma: f64,
    strike: f64,
    vh: ValueFunction,
}

impl OdeIntegrand {
    /// `(g/ψ)'ψ / (g − V^h)` for `g = (y − K)⁺`.
    fn eval(&self, y: f64) -> f64 {
        let num = 1.0 - self.gamma + self.strike * self.gamma / y;
        num / (y - self.strike - self.vh.value(y))
    }
}

impl Boundary {
    pub fn mode(&self) -> BoundaryMode {
        self.mode
    }

    /// Left end `a` of the randomisation interval (`b(a) = 1`).
    pub fn touch_a(&self) -> f64 {
        self.touch_a
    }

    /// Right end `b_g` (`b(b_g) = 0`).
    pub fn upper_bg(&self) -> f64 {
        self.upper_bg
    }

    /// Largest state at which `b` is still identically 1.
    pub fn flat_until(&self) -> f64 {
        match &self.repr {
            Repr::Closed { .. } => self.touch_a,
            Repr::Table(t) => t.start,
        }
    }

    pub fn value(&self, x: f64) -> f64 {
        if x >= self.upper_bg {
            return 0.0;
        }
        match &self.repr {
            Repr::Closed { vg, vh, g } => {
                if x <= self.touch_a {
                    return 1.0;
                }
                let vgx = vg.value(x);
                ((vgx - g.eval(x)) / (vgx - vh.value(x))).clamp(0.0, 1.0)
            }
            Repr::Table(t) => t.value(x),
        }
    }

    /// `b'(x)`: analytic for the closed form, from the interpolant otherwise.
    pub fn derivative(&self, x: f64) -> f64 {
        if x >= self.upper_bg || x <= self.flat_until() {
            return 0.0;
        }
        match &self.repr {
            Repr::Closed { vg, vh, g } => {
                let (v, w, gx) = (vg.value(x), vh.value(x), g.eval(x));
                let (dv, dw, dg) = (vg.derivative(x), vh.derivative(x), g.derivative(x));
                let den = v - w;
                ((dv - dg) * den - (v - gx) * (dv - dw)) / (den * den)
            }
            Repr::Table(t) => t.derivative(x),
        }
    }

    /// `1 − exp(−∫_x^{b_g} k)` by direct adaptive quadrature, bypassing the
    /// table. Only available for the ODE construction.
    pub fn quadrature_value(&self, x: f64) -> Option<Result<f64, BoundaryError>> {
        let Repr::Table(t) = &self.repr else {
            return None;
        };
        if x >= self.upper_bg {
            return Some(Ok(0.0));
        }
        if x <= self.touch_a {
            return Some(Ok(1.0));
        }
        let f = t.integrand;
        Some(
            quad::integrate(|y| f.eval(y), x, self.upper_bg, 1e-14, 1e-13)
                .map(|i| -(-i).exp_m1())
                .map_err(BoundaryError::from),
        )
    }

    /// Evenly spaced samples `(x, b(x))` on `[lo, hi]`.
    pub fn sample(&self, lo: f64, hi: f64, n: usize) -> Vec<(f64, f64)> {
        let n = n.max(2);
        (0..n)
            .map(|i| {
                let x = lo + (hi - lo) * i as f64 / (n - 1) as f64;
                (x, self.value(x))
            })
            .collect()
    }
}

impl OdeTable {
    fn locate(&self, x: f64) -> usize {
        let n = self.xs.len();
        let s = ((x - self.start + self.delta) / self.delta).ln() / self.log_ratio * (n - 1) as f64;
        let mut k = (s.floor().max(0.0) as usize).min(n - 2);
        // guard against rounding in the log-index
        while k > 0 && x < self.xs[k] {
            k -= 1;
        }
        while k < n - 2 && x > self.xs[k + 1] {
            k += 1;
        }
        k
    }

    fn value(&self, x: f64) -> f64 {
        if x <= self.start {
            return 1.0;
        }
        let k = self.locate(x);
        let (x0, x1) = (self.xs[k], self.xs[k + 1]);
        let h = x1 - x0;
        let t = (x - x0) / h;
        let (t2, t3) = (t * t, t * t * t);
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        let v = h00 * self.bs[k] + h10 * h * self.slopes[k] + h01 * self.bs[k + 1]
            + h11 * h * self.slopes[k + 1];
        v.clamp(0.0, 1.0)
    }

    fn derivative(&self, x: f64) -> f64 {
        let k = self.locate(x);
        let (x0, x1) = (self.xs[k], self.xs[k + 1]);
        let h = x1 - x0;
        let t = (x - x0) / h;
        let t2 = t * t;
        let d00 = (6.0 * t2 - 6.0 * t) / h;
        let d10 = 3.0 * t2 - 4.0 * t + 1.0;
        let d01 = (-6.0 * t2 + 6.0 * t) / h;
        let d11 = 3.0 * t2 - 2.0 * t;
        d00 * self.bs[k] + d10 * self.slopes[k] + d01 * self.bs[k + 1] + d11 * self.slopes[k + 1]
    }
}

fn call_strike(p: &Payoff, what: &str) -> Result<f64, BoundaryError> {
    match p {
        Payoff::Call { strike } => Ok(*strike),
        other => Err(BoundaryError::UnsupportedFamily(format!(
            "{what} must be a call payoff, got {other}"
        ))),
    }
}

/// Checks that `h` is zero or a call with a strictly larger strike than `g`.
fn check_consolation(g: &Payoff, h: &Payoff) -> Result<f64, BoundaryError> {
    let k = call_strike(g, "g")?;
    match h {
        Payoff::Zero => Ok(k),
        Payoff::Call { strike } if *strike > k => Ok(k),
        Payoff::Call { .. } => Err(BoundaryError::UnsupportedFamily(format!(
            "consolation {h} must have a larger strike than {g}"
        ))),
        _ => Err(BoundaryError::UnsupportedFamily(format!(
            "consolation must be zero or a call, got {h}"
        ))),
    }
}

/// Bisection to full double precision for a sign change of `f` on `[lo, hi]`.
fn bisect<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64) -> f64 {
    let flo_positive = f(lo) > 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if (f(mid) > 0.0) == flo_positive {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Solves `V^h(a) = g(a)` on the bracket; returns `K` when `h ≡ 0`.
pub fn find_touch_point(
    g: &Payoff,
    vh: &ValueFunction,
    bracket: (f64, f64),
) -> Result<f64, BoundaryError> {
    if vh.payoff().is_zero() {
        return Ok(g.strike().unwrap_or(bracket.0));
    }
    let (lo, hi) = bracket;
    let gap = |x: f64| vh.value(x) - g.eval(x);
    let (flo, fhi) = (gap(lo), gap(hi));
    if flo == 0.0 {
        return Ok(lo);
    }
    if fhi == 0.0 {
        return Ok(hi);
    }
    if flo.signum() == fhi.signum() {
        return Err(BoundaryError::NoRoot { lo, hi });
    }
    Ok(bisect(gap, lo, hi))
}

/// Closed-form boundary for martingale consolation.
pub fn martingale_boundary(
    vg: &ValueFunction,
    vh: &ValueFunction,
    g: &Payoff,
) -> Result<Boundary, BoundaryError> {
    closed_form(vg, vh, g, BoundaryMode::Martingale)
}

fn closed_form(
    vg: &ValueFunction,
    vh: &ValueFunction,
    g: &Payoff,
    mode: BoundaryMode,
) -> Result<Boundary, BoundaryError> {
    let k = call_strike(g, "g")?;
    if vg.payoff() != *g {
        return Err(BoundaryError::UnsupportedFamily(
            "value function does not belong to g".into(),
        ));
    }
    if let Payoff::Call { strike } = vh.payoff() {
        if vh.threshold() < vg.threshold() || strike <= k {
            return Err(BoundaryError::InclusionViolated {
                b_g: vg.threshold(),
                b_h: vh.threshold(),
            });
        }
    }
    check_consolation(g, &vh.payoff())?;
    let b_g = vg.threshold();
    let a = find_touch_point(g, vh, (k, b_g))?;
    Ok(Boundary {
        mode,
        touch_a: a,
        upper_bg: b_g,
        repr: Repr::Closed {
            vg: *vg,
            vh: *vh,
            g: *g,
        },
    })
}

/// Boundary for supermartingale consolation, built by tabulating
/// `∫_x^{b_g} k(y) dy` on a log-spaced grid above the touch point.
pub fn ode_boundary(
    params: &ModelParams,
    strike: f64,
    vh: &ValueFunction,
) -> Result<Boundary, BoundaryError> {
    let g = Payoff::Call { strike };
    check_consolation(&g, &vh.payoff())?;
    let gamma = params.roots().gamma;
    let b_g = gamma * strike / (gamma - 1.0);
    let a = find_touch_point(&g, vh, (strike, b_g))?;
    let delta = ODE_CLAMP_FRACTION * (b_g - a);
    let integrand = OdeIntegrand {
        gamma,
        strike,
        vh: *vh,
    };

    let n = ODE_TABLE_NODES;
    let log_ratio = ((b_g - a) / delta).ln();
    let mut xs: Vec<f64> = (0..n)
        .map(|i| a + delta * (log_ratio * i as f64 / (n - 1) as f64).exp())
        .collect();
    xs[n - 1] = b_g;

    // cumulative integral from the right end, I(b_g) = 0
    let mut integral = vec![0.0; n];
    for k in (0..n - 1).rev() {
        let piece = quad::integrate(|y| integrand.eval(y), xs[k], xs[k + 1], 1e-14, 1e-13)?;
        integral[k] = integral[k + 1] + piece;
    }
    let bs: Vec<f64> = integral.iter().map(|i| -(-i).exp_m1()).collect();
    // b' = −k(x)·(1 − b)
    let mut slopes: Vec<f64> = xs
        .iter()
        .zip(&integral)
        .map(|(&x, &i)| -integrand.eval(x) * (-i).exp())
        .collect();
    slopes[n - 1] = 0.0;
    limit_slopes(&xs, &bs, &mut slopes);

    Ok(Boundary {
        mode: BoundaryMode::Ode,
        touch_a: a,
        upper_bg: b_g,
        repr: Repr::Table(Arc::new(OdeTable {
            start: xs[0],
            delta,
            log_ratio,
            xs,
            bs,
            slopes,
            integrand,
        })),
    })
}

/// Fritsch–Carlson limiter so the Hermite interpolant stays monotone.
fn limit_slopes(xs: &[f64], ys: &[f64], slopes: &mut [f64]) {
    for k in 0..xs.len() - 1 {
        let secant = (ys[k + 1] - ys[k]) / (xs[k + 1] - xs[k]);
        if secant == 0.0 {
            slopes[k] = 0.0;
            slopes[k + 1] = 0.0;
            continue;
        }
        let alpha = slopes[k] / secant;
        let beta = slopes[k + 1] / secant;
        if alpha < 0.0 {
            slopes[k] = 0.0;
        }
        if beta < 0.0 {
            slopes[k + 1] = 0.0;
        }
        let norm = alpha * alpha + beta * beta;
        if norm > 9.0 {
            let tau = 3.0 / norm.sqrt();
            slopes[k] = tau * alpha * secant;
            slopes[k + 1] = tau * beta * secant;
        }
    }
}

/// Boundary of the asymmetric call/call game, built from Player 1's data
/// after checking `K2 ≤ K1` and `a2 ≤ a1 < b_g2`.
pub fn asym_boundary(game: &GameSpec) -> Result<Boundary, BoundaryError> {
    let params = game.params();
    let (one, two) = (game.player1(), game.player2());
    for pl in [one, two] {
        call_strike(&pl.h, "h")?;
        check_consolation(&pl.g, &pl.h)?;
    }
    let k1 = call_strike(&one.g, "g1")?;
    let k2 = call_strike(&two.g, "g2")?;
    if k2 > k1 {
        return Err(BoundaryError::StrikeOrdering { k1, k2 });
    }
    let vg1 = value_function(params, one.g);
    let vh1 = value_function(params, one.h);
    let vg2 = value_function(params, two.g);
    let vh2 = value_function(params, two.h);
    let a1 = find_touch_point(&one.g, &vh1, (k1, vg1.threshold()))?;
    let a2 = find_touch_point(&two.g, &vh2, (k2, vg2.threshold()))?;
    let b_g2 = vg2.threshold();
    if !(a2 <= a1 && a1 < b_g2) {
        return Err(BoundaryError::OrderingViolated { a1, a2, b_g2 });
    }
    closed_form(&vg1, &vh1, &one.g, BoundaryMode::Asym)
}

/// Unique `x` in `(a, b_g)` with `b(x) = p`: Newton steps on `b` kept
/// inside a shrinking bracket, falling back to bisection.
pub fn boundary_inverse(b: &Boundary, p: f64) -> Result<f64, BoundaryError> {
    if !(p > 0.0 && p < 1.0) {
        return Err(BoundaryError::OutOfRange(p));
    }
    let (mut lo, mut hi) = (b.flat_until(), b.upper_bg());
    if b.value(lo) <= p {
        return Ok(lo);
    }
    let mut x = 0.5 * (lo + hi);
    for _ in 0..200 {
        let gap = b.value(x) - p;
        if gap == 0.0 {
            return Ok(x);
        }
        if gap > 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        if hi - lo <= 4.0 * f64::EPSILON * hi {
            break;
        }
        let slope = b.derivative(x);
        let newton = x - gap / slope;
        let next = if slope < 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if (next - x).abs() <= 2.0 * f64::EPSILON * x {
            return Ok(next);
        }
        x = next;
    }
    Ok(0.5 * (lo + hi))
}

/// Residual of `(1 − b)(g/ψ)'ψ + (g − V^h) b' = 0` at `x`, with `b'` from a
/// five-point stencil of step `1e-5·(b_g − a)`, one-sided near the ends.
pub fn ode_residual(
    b: &Boundary,
    g: &Payoff,
    roots: &Roots,
    vh: &ValueFunction,
    x: f64,
) -> f64 {
    let gamma = roots.gamma;
    let k = g.strike().unwrap_or(0.0);
    let h = 1e-5 * (b.upper_bg() - b.touch_a());
    let lo = b.flat_until();
    let hi = b.upper_bg();
    let f = |y: f64| b.value(y);
    let db = if x - 2.0 * h >= lo && x + 2.0 * h <= hi {
        (f(x - 2.0 * h) - 8.0 * f(x - h) + 8.0 * f(x + h) - f(x + 2.0 * h)) / (12.0 * h)
    } else if x + 4.0 * h <= hi {
        (-25.0 * f(x) + 48.0 * f(x + h) - 36.0 * f(x + 2.0 * h) + 16.0 * f(x + 3.0 * h)
            - 3.0 * f(x + 4.0 * h))
            / (12.0 * h)
    } else {
        (25.0 * f(x) - 48.0 * f(x - h) + 36.0 * f(x - 2.0 * h) - 16.0 * f(x - 3.0 * h)
            + 3.0 * f(x - 4.0 * h))
            / (12.0 * h)
    };
    let g_over_psi_prime_psi = 1.0 - gamma + k * gamma / x;
    ((1.0 - b.value(x)) * g_over_psi_prime_psi + (g.eval(x) - vh.value(x)) * db).abs()
}

/// Equilibrium values `u1(x, p1)` and `u2(x, p1)` for one of the solved
/// regimes. `u1` is Player 1's value, `u2` Player 2's.
#[derive(Debug, Clone)]
pub struct EquilibriumValues {
    mode: BoundaryMode,
    boundary: Boundary,
    roots: Roots,
    vg1: ValueFunction,
    vh1: ValueFunction,
    g1: Payoff,
    vg2: ValueFunction,
    g2: Payoff,
}

/// Step of the central difference in `p` used for `∂u2/∂p1`.
pub const DP_STEP: f64 = 1e-6;

impl EquilibriumValues {
    /// `u1 = (1−p)V^g + pV^h`, `u2 = max(u1, g)`.
    pub fn martingale(boundary: Boundary, vg: ValueFunction, vh: ValueFunction, g: Payoff) -> Self {
        EquilibriumValues {
            mode: BoundaryMode::Martingale,
            roots: vg.roots(),
            boundary,
            vg1: vg,
            vh1: vh,
            g1: g,
            vg2: vg,
            g2: g,
        }
    }

    /// Piecewise values built on `c(p) = g(b⁻¹(p))/ψ(b⁻¹(p))`.
    pub fn ode(boundary: Boundary, vg: ValueFunction, vh: ValueFunction, g: Payoff) -> Self {
        EquilibriumValues {
            mode: BoundaryMode::Ode,
            roots: vg.roots(),
            boundary,
            vg1: vg,
            vh1: vh,
            g1: g,
            vg2: vg,
            g2: g,
        }
    }

    /// Player 1 keeps the martingale form on its own data, Player 2 the
    /// `c₂(p)ψ(x)` form with `c₂(p) = g₂(b⁻¹(p))/ψ(b⁻¹(p))`.
    pub fn asym(
        boundary: Boundary,
        player1: (ValueFunction, ValueFunction, Payoff),
        player2: (ValueFunction, Payoff),
    ) -> Self {
        EquilibriumValues {
            mode: BoundaryMode::Asym,
            roots: player1.0.roots(),
            boundary,
            vg1: player1.0,
            vh1: player1.1,
            g1: player1.2,
            vg2: player2.0,
            g2: player2.1,
        }
    }

    pub fn mode(&self) -> BoundaryMode {
        self.mode
    }

    pub fn boundary(&self) -> &Boundary {
        &self.boundary
    }

    pub fn roots(&self) -> Roots {
        self.roots
    }

    /// `c(p)` for the ODE construction (with `g`) and the asymmetric one
    /// (with `g₂`).
    pub fn coefficient_c(&self, p: f64) -> Result<f64, BoundaryError> {
        let y = boundary_inverse(&self.boundary, p)?;
        let g = match self.mode {
            BoundaryMode::Asym => self.g2,
            _ => self.g1,
        };
        Ok(g.eval(y) / self.roots.psi(y))
    }

    fn martingale_u1(&self, x: f64, p: f64) -> f64 {
        (1.0 - p) * self.vg1.value(x) + p * self.vh1.value(x)
    }

    pub fn u1(&self, x: f64, p: f64) -> f64 {
        match self.mode {
            BoundaryMode::Martingale | BoundaryMode::Asym => self.martingale_u1(x, p),
            BoundaryMode::Ode => {
                if p <= 0.0 {
                    return self.vg1.value(x);
                }
                let bx = self.boundary.value(x);
                if p <= bx {
                    self.c_psi(x, p)
                } else {
                    ((1.0 - p) * self.g1.eval(x) + (p - bx) * self.vh1.value(x)) / (1.0 - bx)
                }
            }
        }
    }

    pub fn u2(&self, x: f64, p: f64) -> f64 {
        match self.mode {
            BoundaryMode::Martingale => self.martingale_u1(x, p).max(self.g1.eval(x)),
            BoundaryMode::Ode | BoundaryMode::Asym => {
                if p <= 0.0 {
                    return self.vg2.value(x);
                }
                if p <= self.boundary.value(x) {
                    self.c_psi(x, p)
                } else {
                    self.g2.eval(x)
                }
            }
        }
    }

    fn c_psi(&self, x: f64, p: f64) -> f64 {
        if p <= 0.0 {
            // b⁻¹(0) is the upper end b_g
            let y = self.boundary.upper_bg();
            let g = if self.mode == BoundaryMode::Asym { self.g2 } else { self.g1 };
            return g.eval(y) / self.roots.psi(y) * self.roots.psi(x);
        }
        if p >= 1.0 {
            // b⁻¹(1) is the flat end of the boundary
            let y = self.boundary.flat_until();
            let g = if self.mode == BoundaryMode::Asym { self.g2 } else { self.g1 };
            return g.eval(y) / self.roots.psi(y) * self.roots.psi(x);
        }
        self.coefficient_c(p).expect("p in (0, 1)") * self.roots.psi(x)
    }

    /// Player 2's value on the continuation branch `p ≤ b(x)`, extended to
    /// all `p ∈ (0, 1)`.
    pub fn u2_continuation(&self, x: f64, p: f64) -> f64 {
        match self.mode {
            BoundaryMode::Martingale => self.martingale_u1(x, p),
            _ => self.c_psi(x, p),
        }
    }

    /// `∂u2/∂p1` on the continuation branch. The branch `p > b(x)` is flat in
    /// `p`, so at the seam this is the one-sided derivative from below,
    /// which is the side the belief moves into when Player 2 stops.
    pub fn du2_dp1(&self, x: f64, p: f64) -> f64 {
        match self.mode {
            BoundaryMode::Martingale => self.vh1.value(x) - self.vg1.value(x),
            _ => {
                let u = |q: f64| self.u2_continuation(x, q);
                if p <= 0.0 {
                    return (u(DP_STEP) - u(0.0)) / DP_STEP;
                }
                if p >= 1.0 {
                    return (u(1.0) - u(1.0 - DP_STEP)) / DP_STEP;
                }
                let h = DP_STEP.min(0.5 * p).min(0.5 * (1.0 - p));
                (u(p + h) - u(p - h)) / (2.0 * h)
            }
        }
    }

    pub fn g1(&self) -> Payoff {
        self.g1
    }

    pub fn g2(&self) -> Payoff {
        self.g2
    }

    pub fn vg1(&self) -> &ValueFunction {
        &self.vg1
    }

    pub fn vh1(&self) -> &ValueFunction {
        &self.vh1
    }

    pub fn vg2(&self) -> &ValueFunction {
        &self.vg2
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{validate, PlayerSpec};
    use crate::single::{call_value, zero_value};

    fn unit_params() -> ModelParams {
        validate(0.0, 2f64.sqrt(), 2.0).unwrap()
    }

    fn worked() -> (ValueFunction, ValueFunction, Payoff) {
        let params = unit_params();
        (call_value(&params, 3.0), call_value(&params, 4.0), Payoff::Call { strike: 3.0 })
    }

    /// b(x) = 1 − 4(x−1)/x² for h ≡ 0, K = 1, γ = 2, from the
    /// antiderivative −2 ln y + ln(y − 1) of the integrand.
    fn ode_closed_form(x: f64) -> f64 {
        let antiderivative = |y: f64| -2.0 * y.ln() + (y - 1.0).ln();
        let integral = antiderivative(2.0) - antiderivative(x);
        1.0 - (-integral).exp()
    }

    fn ode_family() -> Boundary {
        let params = unit_params();
        ode_boundary(&params, 1.0, &zero_value(&params)).unwrap()
    }

    #[test]
    fn worked_family_touch_point_and_value() {
        let (vg, vh, g) = worked();
        let b = martingale_boundary(&vg, &vh, &g).unwrap();
        assert!((b.touch_a() - 4.0).abs() < 1e-10);
        assert!((b.upper_bg() - 6.0).abs() < 1e-12);
        // (25/12 − 2)/(25/12 − 25/16) = 0.16
        assert!((b.value(5.0) - 0.16).abs() < 1e-10);
        assert_eq!(b.value(6.0), 0.0);
        assert_eq!(b.value(7.5), 0.0);
        assert_eq!(b.value(4.0), 1.0);
        assert!((b.value(4.0 + 1e-9) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn touch_point_zero_consolation_is_strike() {
        let params = unit_params();
        let a = find_touch_point(&Payoff::Call { strike: 1.0 }, &zero_value(&params), (1.0, 2.0)).unwrap();
        assert_eq!(a, 1.0);
    }

    #[test]
    fn touch_point_drifting_params() {
        let params = validate(0.08, 0.01, 0.1).unwrap();
        let g = Payoff::Call { strike: 3.0 };
        let vh = call_value(&params, 4.0);
        let vg = call_value(&params, 3.0);
        let a = find_touch_point(&g, &vh, (3.0, vg.threshold())).unwrap();
        assert!((vh.value(a) - (a - 3.0)).abs() <= 1e-9);
        assert!(a > 3.0 && a < vg.threshold());
    }

    #[test]
    fn touch_point_without_sign_change() {
        let params = unit_params();
        let g = Payoff::Call { strike: 3.0 };
        let vh = call_value(&params, 4.0);
        assert!(matches!(
            find_touch_point(&g, &vh, (5.0, 6.0)),
            Err(BoundaryError::NoRoot { .. })
        ));
    }

    #[test]
    fn inclusion_violation_detected() {
        let params = unit_params();
        let vg = call_value(&params, 4.0);
        let vh = call_value(&params, 3.0);
        assert!(matches!(
            martingale_boundary(&vg, &vh, &Payoff::Call { strike: 4.0 }),
            Err(BoundaryError::InclusionViolated { .. })
        ));
    }

    #[test]
    fn indifference_identity_on_boundary() {
        let (vg, vh, g) = worked();
        let b = martingale_boundary(&vg, &vh, &g).unwrap();
        for i in 1..100 {
            let x = 4.0 + 2.0 * i as f64 / 100.0;
            let bx = b.value(x);
            let lhs = (1.0 - bx) * vg.value(x) + bx * vh.value(x);
            assert!((lhs - g.eval(x)).abs() <= 1e-10, "x = {x}");
        }
    }

    #[test]
    fn ode_boundary_matches_antiderivative() {
        let b = ode_family();
        assert!((b.touch_a() - 1.0).abs() < 1e-15);
        assert!((b.value(4.0 / 3.0) - 0.25).abs() < 1e-6);
        let direct = b.quadrature_value(4.0 / 3.0).unwrap().unwrap();
        assert!((direct - 0.25).abs() < 1e-8);
        for i in 1..200 {
            let x = 1.0 + i as f64 / 200.0;
            let exact = ode_closed_form(x);
            assert!((b.value(x) - exact).abs() < 1e-8, "x = {x}: {} vs {exact}", b.value(x));
        }
        assert_eq!(b.value(2.0), 0.0);
        assert!(b.value(1.0 + 1e-6) > 1.0 - 1e-3);
    }

    #[test]
    fn ode_boundary_agrees_with_closed_form_for_call_consolation() {
        // With call/call payoffs both constructions describe the same boundary.
        let (vg, vh, g) = worked();
        let closed = martingale_boundary(&vg, &vh, &g).unwrap();
        let ode = ode_boundary(&unit_params(), 3.0, &vh).unwrap();
        assert!((ode.touch_a() - closed.touch_a()).abs() < 1e-12);
        for i in 1..100 {
            let x = 4.0 + 2.0 * i as f64 / 100.0;
            assert!((ode.value(x) - closed.value(x)).abs() < 1e-7, "x = {x}");
        }
    }

    #[test]
    fn boundaries_are_nonincreasing() {
        let (vg, vh, g) = worked();
        let fig = validate(0.08, 0.01, 0.1).unwrap();
        let boundaries = [
            martingale_boundary(&vg, &vh, &g).unwrap(),
            ode_family(),
            martingale_boundary(&call_value(&fig, 3.0), &call_value(&fig, 4.0), &g).unwrap(),
            ode_boundary(&fig, 3.0, &zero_value(&fig)).unwrap(),
        ];
        for b in &boundaries {
            let (a, bg) = (b.touch_a(), b.upper_bg());
            let grid = b.sample(0.5 * a, 1.1 * bg, 500);
            for w in grid.windows(2) {
                assert!(w[1].1 <= w[0].1 + 1e-12, "{:?}", w);
                assert!((0.0..=1.0).contains(&w[0].1));
            }
            assert!(b.value(a + 1e-6 * a) >= 1.0 - 1e-3);
            assert_eq!(b.value(bg), 0.0);
        }
    }

    #[test]
    fn inverse_round_trips() {
        let (vg, vh, g) = worked();
        let b = martingale_boundary(&vg, &vh, &g).unwrap();
        assert!((boundary_inverse(&b, 0.16).unwrap() - 5.0).abs() < 1e-10);
        let ode = ode_family();
        assert!((boundary_inverse(&ode, 0.25).unwrap() - 4.0 / 3.0).abs() < 1e-8);
        assert!((boundary_inverse(&b, 1e-12).unwrap() - 6.0).abs() < 1e-4);
        assert_eq!(boundary_inverse(&b, 1.0), Err(BoundaryError::OutOfRange(1.0)));
        assert_eq!(boundary_inverse(&b, 0.0), Err(BoundaryError::OutOfRange(0.0)));
    }

    #[test]
    fn ode_residual_small() {
        let params = unit_params();
        let vh = zero_value(&params);
        let b = ode_family();
        let g = Payoff::Call { strike: 1.0 };
        let roots = params.roots();
        assert!(ode_residual(&b, &g, &roots, &vh, 1.5) <= 1e-6);
        assert!(ode_residual(&b, &g, &roots, &vh, 2.0 - 1e-7) <= 1e-6);
        let worst = (1..=50)
            .map(|i| 1.0 + i as f64 / 51.0)
            .map(|x| ode_residual(&b, &g, &roots, &vh, x))
            .fold(0.0, f64::max);
        assert!(worst <= 1e-6, "{worst}");
    }

    #[test]
    fn martingale_values() {
        let (vg, vh, g) = worked();
        let b = martingale_boundary(&vg, &vh, &g).unwrap();
        let eq = EquilibriumValues::martingale(b.clone(), vg, vh, g);
        // p1 = b(5) = 0.16 gives u1 = g(5) = 2
        assert!((eq.u1(5.0, 0.16) - 2.0).abs() < 1e-12);
        assert!((eq.u1(5.0, 1.0) - vh.value(5.0)).abs() < 1e-12);
        assert!((eq.u2(5.0, 0.5) - 2.0).abs() < 1e-12);
        assert!((eq.u2(5.0, 0.1) - eq.u1(5.0, 0.1)).abs() < 1e-12);
        // affine in p with slope V^h − V^g
        let slope = eq.u1(5.0, 0.7) - eq.u1(5.0, 0.6);
        assert!((slope / 0.1 - (vh.value(5.0) - vg.value(5.0))).abs() < 1e-10);
        assert!(eq.du2_dp1(5.0, 0.3) <= 0.0);
        assert_eq!(eq.u1(5.0, 0.0), vg.value(5.0));
    }

    #[test]
    fn ode_values_worked_family() {
        let params = unit_params();
        let vh = zero_value(&params);
        let vg = call_value(&params, 1.0);
        let g = Payoff::Call { strike: 1.0 };
        let eq = EquilibriumValues::ode(ode_family(), vg, vh, g);
        // c(0.25) = g(4/3)/ψ(4/3) = 3/16
        assert!((eq.coefficient_c(0.25).unwrap() - 3.0 / 16.0).abs() < 1e-8);
        assert!((eq.u1(1.2, 0.25) - 0.27).abs() < 1e-7);
        assert_eq!(eq.u1(1.2, 0.0), vg.value(1.2));
        // continuity of the two branches at p = b(x)
        let b = eq.boundary().clone();
        for i in 1..100 {
            let x = 1.0 + i as f64 / 100.0;
            let bx = b.value(x);
            if bx <= 0.0 || bx >= 1.0 {
                continue;
            }
            let seam = eq.coefficient_c(bx).unwrap() * params.roots().psi(x);
            assert!((seam - g.eval(x)).abs() <= 1e-8, "x = {x}");
            let above = eq.u1(x, (bx + 1e-9).min(1.0 - 1e-12));
            assert!((above - g.eval(x)).abs() < 1e-6);
        }
    }

    #[test]
    fn ode_and_martingale_values_coincide_for_call_consolation() {
        let (vg, vh, g) = worked();
        let mart = EquilibriumValues::martingale(martingale_boundary(&vg, &vh, &g).unwrap(), vg, vh, g);
        let ode = EquilibriumValues::ode(ode_boundary(&unit_params(), 3.0, &vh).unwrap(), vg, vh, g);
        for x in [4.2, 4.8, 5.0, 5.5, 5.9] {
            for p in [0.05, 0.16, 0.3, 0.6] {
                assert!((mart.u1(x, p) - ode.u1(x, p)).abs() < 1e-6, "u1 {x} {p}");
                assert!((mart.u2(x, p) - ode.u2(x, p)).abs() < 1e-6, "u2 {x} {p}");
            }
        }
    }

    fn asym_game(k1: f64, l1: f64, k2: f64, l2: f64) -> GameSpec {
        GameSpec::new(
            unit_params(),
            5.0,
            PlayerSpec::new(Payoff::Call { strike: k1 }, Payoff::Call { strike: l1 }, 0.3),
            PlayerSpec::new(Payoff::Call { strike: k2 }, Payoff::Call { strike: l2 }, 0.6),
        )
        .unwrap()
    }

    #[test]
    fn asym_degenerates_to_martingale() {
        let (vg, vh, g) = worked();
        let mart = martingale_boundary(&vg, &vh, &g).unwrap();
        let asym = asym_boundary(&asym_game(3.0, 4.0, 3.0, 4.0)).unwrap();
        assert_eq!(asym.mode(), BoundaryMode::Asym);
        for i in 0..=100 {
            let x = 3.0 + 4.0 * i as f64 / 100.0;
            assert_eq!(asym.value(x), mart.value(x));
        }
        assert!((asym.value(5.0) - 0.16).abs() < 1e-10);
    }

    #[test]
    fn asym_ordering_checks() {
        assert!(asym_boundary(&asym_game(3.3, 4.4, 3.0, 4.0)).is_ok());
        assert!(matches!(
            asym_boundary(&asym_game(3.0, 4.0, 3.3, 4.4)),
            Err(BoundaryError::StrikeOrdering { .. })
        ));
        // a1 = 16 - sqrt(96) > b_g2 = 6
        assert!(matches!(
            asym_boundary(&asym_game(5.0, 8.0, 3.0, 4.0)),
            Err(BoundaryError::OrderingViolated { .. })
        ));
    }

    #[test]
    fn asym_u2_uses_player_two_payoff() {
        let game = asym_game(3.3, 4.4, 3.0, 4.0);
        let params = game.params();
        let b = asym_boundary(&game).unwrap();
        let vg1 = call_value(params, 3.3);
        let vh1 = call_value(params, 4.4);
        let vg2 = call_value(params, 3.0);
        let g2 = Payoff::Call { strike: 3.0 };
        let eq = EquilibriumValues::asym(b.clone(), (vg1, vh1, game.player1().g), (vg2, g2));
        let x = 5.0;
        let p = 0.5 * b.value(x);
        let y = boundary_inverse(&b, p).unwrap();
        let expected = g2.eval(y) * (x / y).powi(2);
        assert!((eq.u2(x, p) - expected).abs() < 1e-10);
        assert_eq!(eq.u2(x, 0.99), g2.eval(x));
        assert_eq!(eq.u2(x, 0.0), vg2.value(x));
        // central difference agrees with Richardson extrapolation
        let f = |h: f64| (eq.u2_continuation(x, p + h) - eq.u2_continuation(x, p - h)) / (2.0 * h);
        let richardson = (4.0 * f(1e-4) - f(2e-4)) / 3.0;
        let fd = eq.du2_dp1(x, p);
        assert!((fd - richardson).abs() <= 1e-6 * richardson.abs(), "{fd} {richardson}");
        assert!(fd < 0.0);
    }
}
