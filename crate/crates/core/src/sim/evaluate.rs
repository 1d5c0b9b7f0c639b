//! Pathwise payoffs: the indicator definition of `J₁`/`J₂`, the closed
//! pathwise formulas with the randomisation device integrated out, and the
//! processes `M¹`, `M²`.
//!
//! Equilibrium controls rise only while the path sets a new maximum, so a
//! stop always happens at a state level the path is crossing upwards. With
//! [`Monitoring::Bridge`] the running maximum of the continuous path is known
//! at every grid time, and a stop in step `k` is placed at the level inside
//! `[M_{k−1}, M_k]` where the control, as a function of the running
//! maximum, crosses the device. Its time is the expected first passage of
//! that level by the Brownian bridge in `ln X` between the grid states. With [`Monitoring::Grid`] every event of step
//! `k` happens at `X_k` and time `t_k`; first passages are then seen late and
//! overshoot, which biases the estimates by `O(σ√Δt)`.

use std::fmt;
use std::str::FromStr;

use super::SimError;
use crate::equilibrium::Equilibrium;
use crate::model::Player;
use crate::strategy::{belief, ControlPath, TerminalJump};

/// Two-point Gauss–Legendre nodes on `[0, 1]`; used for the continuous part
/// of a control within one step.
const GAUSS_NODES: [f64; 2] = [0.211_324_865_405_187_1, 0.788_675_134_594_812_9];

/// Relative width of a step's level range below which one midpoint node is
/// used instead of [`GAUSS_NODES`]; the error is of order the squared width.
const NARROW_STEP: f64 = 1e-3;

/// Nodes and weights in the mass fraction for the range `[lo, hi]`.
fn mass_nodes(lo: f64, hi: f64) -> &'static [(f64, f64)] {
    const MID: [(f64, f64); 1] = [(0.5, 1.0)];
    const GAUSS: [(f64, f64); 2] = [(GAUSS_NODES[0], 0.5), (GAUSS_NODES[1], 0.5)];
    if hi - lo <= NARROW_STEP * lo {
        &MID
    } else {
        &GAUSS
    }
}

/// Number of midpoints used by the quadrature estimator in the device `u`.
pub const DEVICE_QUADRATURE_POINTS: usize = 64;

/// How the running maximum between grid points is treated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Monitoring {
    /// Only grid states are seen.
    Grid,
    /// The maximum inside each step is sampled exactly.
    #[default]
    Bridge,
}

impl fmt::Display for Monitoring {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Monitoring::Grid => "grid",
            Monitoring::Bridge => "bridge",
        })
    }
}

impl FromStr for Monitoring {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "grid" => Ok(Monitoring::Grid),
            "bridge" => Ok(Monitoring::Bridge),
            other => Err(format!("unknown monitoring `{other}` (expected grid or bridge)")),
        }
    }
}

/// Where a stop happens: grid step, state level and discount factor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StopPoint {
    pub index: usize,
    pub level: f64,
    pub discount: f64,
}

impl StopPoint {
    /// Strictly earlier along the path.
    pub fn before(&self, other: &StopPoint) -> bool {
        (self.index, self.level) < (other.index, other.level)
    }
}

/// The increase of a control within one step: a continuous part spread over
/// `[lo, hi]` and possibly the terminal jump.
struct StepPart {
    cont: f64,
    lo: f64,
    hi: f64,
    jump: Option<(f64, StopPoint)>,
}

/// One path with both equilibrium controls and the running consolation
/// integrals `C^i_k = p_i Σ e^{-rt} V^{h_i}(level) dΓ^{other}` over all events
/// up to and including step `k`.
pub struct PathEval<'a> {
    eq: &'a Equilibrium,
    states: &'a [f64],
    maxes: Vec<f64>,
    dt: f64,
    monitoring: Monitoring,
    gamma1: ControlPath,
    gamma2: ControlPath,
    ceilings: [f64; 2],
    discount: Vec<f64>,
    log_states: Vec<f64>,
    /// `σ√Δt`
    scale: f64,
    cum: [Vec<f64>; 2],
}

/// `e^{x²}·erfc(x)` for `x ≥ 0`.
fn erfcx(x: f64) -> f64 {
    if x < 25.0 {
        (x * x).exp() * libm::erfc(x)
    } else {
        let z = 1.0 / (2.0 * x * x);
        (1.0 - z * (1.0 - 3.0 * z)) / (x * std::f64::consts::PI.sqrt())
    }
}

/// Expected first-passage time of level `a`, as a fraction of the step, for
/// a Brownian bridge from `y0` to `y1` with step standard deviation `scale`,
/// given that it reaches `a ≥ y0`. With `α = (a−y0)/scale` and
/// `β = |a−y1|/scale` the time `τ/(Δt−τ)` is inverse Gaussian, so that
/// `E[τ]/Δt = α·√(π/2)·erfcx((α+β)/√2)`.
pub(crate) fn crossing_fraction(y0: f64, y1: f64, a: f64, scale: f64) -> f64 {
    let alpha = ((a - y0) / scale).max(0.0);
    let beta = (a - y1).abs() / scale;
    let f = alpha * std::f64::consts::FRAC_PI_2.sqrt() * erfcx((alpha + beta) / std::f64::consts::SQRT_2);
    f.clamp(0.0, 1.0)
}

/// Pathwise payoffs of the equilibrium pair and of unilateral deviations
/// from it, on one path.
pub trait Evaluator {
    fn equilibrium(&self) -> &Equilibrium;

    /// Number of grid points.
    fn len(&self) -> usize;

    fn dt(&self) -> f64;

    /// Stopping at time zero.
    fn immediate(&self) -> StopPoint;

    /// First grid index by which the path has reached `level`.
    fn first_passage(&self, level: f64) -> Option<usize>;

    /// Stop at the first passage of `level`.
    fn first_passage_stop(&self, level: f64) -> Option<StopPoint>;

    /// Stop of `player` under its equilibrium control with device `u`.
    fn device_stop(&self, player: Player, u: f64) -> Option<StopPoint>;

    /// Payoff of `player` stopping at `at` (`None`: never) against the
    /// opponent's equilibrium control.
    fn stop_payoff(&self, player: Player, at: Option<StopPoint>) -> f64;

    /// `∫₀¹ F(γ(u)) du` for the own control `min(1, s·Γ*)`.
    fn scaled_formula(&self, player: Player, s: f64) -> f64;

    /// `M^i` at grid index `k`; see [`PathEval::m1`] and [`PathEval::m2`].
    fn m(&self, player: Player, k: usize, u1_scale: f64, stopped: bool) -> f64;

    fn formula(&self, player: Player) -> f64 {
        self.scaled_formula(player, 1.0)
    }

    /// Midpoint rule with [`DEVICE_QUADRATURE_POINTS`] nodes in `u`.
    fn quadrature(&self, player: Player) -> f64 {
        let n = DEVICE_QUADRATURE_POINTS;
        (0..n)
            .map(|i| {
                let u = (i as f64 + 0.5) / n as f64;
                self.stop_payoff(player, self.device_stop(player, u))
            })
            .sum::<f64>()
            / n as f64
    }

    /// Realised payoff from the competition indicators `θ` and devices.
    fn indicator(&self, player: Player, theta: [bool; 2], devices: [f64; 2]) -> f64 {
        let stops = [
            self.device_stop(Player::One, devices[0]),
            self.device_stop(Player::Two, devices[1]),
        ];
        competition_payoff(self.equilibrium(), player, stops, theta)
    }
}

/// Payoff of `player` when the players would stop at `stops` and `theta`
/// says which competitors exist. Simultaneous stops go to Player 2.
pub fn competition_payoff(
    eq: &Equilibrium,
    player: Player,
    stops: [Option<StopPoint>; 2],
    theta: [bool; 2],
) -> f64 {
    let [s1, s2] = stops;
    let r1 = if theta[1] { s1 } else { None };
    let r2 = if theta[0] { s2 } else { None };
    // None is +∞
    let lt = |a: Option<StopPoint>, b: Option<StopPoint>| match (a, b) {
        (Some(a), Some(b)) => a.before(&b),
        (Some(_), None) => true,
        (None, _) => false,
    };
    let gain = |who: Player, at: Option<StopPoint>| {
        at.map_or(0.0, |s| s.discount * eq.payoff_g(who).eval(s.level))
    };
    let consolation = |who: Player, at: Option<StopPoint>| {
        at.map_or(0.0, |s| s.discount * eq.vh(who).value(s.level))
    };
    match player {
        Player::One if lt(s1, r2) => gain(Player::One, s1),
        // forestalled; nothing when there is no competitor
        Player::One => consolation(Player::One, r2),
        Player::Two if lt(r1, s2) => consolation(Player::Two, r1),
        Player::Two => gain(Player::Two, s2),
    }
}

fn check_grid(control: &ControlPath, states: &[f64], dt: f64) -> Result<(), SimError> {
    if control.len() != states.len() || (control.dt() - dt).abs() > 1e-15 * dt {
        return Err(SimError::GridMismatch {
            control: control.len(),
            path: states.len(),
        });
    }
    Ok(())
}

fn slot(player: Player) -> usize {
    player.index() as usize - 1
}

fn other(player: Player) -> Player {
    match player {
        Player::One => Player::Two,
        Player::Two => Player::One,
    }
}

impl<'a> PathEval<'a> {
    /// Builds the equilibrium controls along the path. `maxes` holds the
    /// running maximum of the continuous path at the grid times; without it
    /// the path is monitored on the grid only.
    pub fn new(
        eq: &'a Equilibrium,
        states: &'a [f64],
        maxes: Option<&[f64]>,
        dt: f64,
    ) -> Result<Self, SimError> {
        let (gamma1, gamma2) = eq.controls(maxes.unwrap_or(states), dt)?;
        Self::with_controls(eq, states, maxes, dt, gamma1, gamma2)
    }

    pub fn with_controls(
        eq: &'a Equilibrium,
        states: &'a [f64],
        maxes: Option<&[f64]>,
        dt: f64,
        gamma1: ControlPath,
        gamma2: ControlPath,
    ) -> Result<Self, SimError> {
        check_grid(&gamma1, states, dt)?;
        check_grid(&gamma2, states, dt)?;
        let n = states.len();
        let (monitoring, maxes) = match maxes {
            Some(m) if m.len() == n => (Monitoring::Bridge, m.to_vec()),
            Some(m) => {
                return Err(SimError::GridMismatch {
                    control: m.len(),
                    path: n,
                })
            }
            None => {
                let mut run = f64::NEG_INFINITY;
                let m = states
                    .iter()
                    .map(|&x| {
                        run = run.max(x);
                        run
                    })
                    .collect();
                (Monitoring::Grid, m)
            }
        };
        let r = eq.game().params().r();
        let step = (-r * dt).exp();
        let mut discount = Vec::with_capacity(n);
        let mut d = 1.0;
        for _ in 0..n {
            discount.push(d);
            d *= step;
        }
        let mut ev = PathEval {
            eq,
            states,
            maxes,
            dt,
            monitoring,
            gamma1,
            gamma2,
            ceilings: eq.ceilings(),
            discount,
            log_states: states.iter().map(|x| x.ln()).collect(),
            scale: eq.game().params().sigma() * dt.sqrt(),
            cum: [Vec::new(), Vec::new()],
        };
        for viewer in [Player::One, Player::Two] {
            let opp = other(viewer);
            let p = ev.eq.game().player(viewer).p;
            let vh = ev.eq.vh(viewer);
            let mut c = 0.0;
            let mut cum = Vec::with_capacity(n);
            for k in 0..n {
                let part = ev.part(opp, ev.control(opp), k);
                if part.cont > 0.0 {
                    c += p * ev.consolation_over(opp, viewer, &part, k, 1.0);
                }
                if let Some((mass, at)) = part.jump {
                    c += p * at.discount * vh.value(at.level) * mass;
                }
                cum.push(c);
            }
            ev.cum[slot(viewer)] = cum;
        }
        Ok(ev)
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn monitoring(&self) -> Monitoring {
        self.monitoring
    }

    pub fn gamma1(&self) -> &ControlPath {
        &self.gamma1
    }

    pub fn gamma2(&self) -> &ControlPath {
        &self.gamma2
    }

    pub fn control(&self, player: Player) -> &ControlPath {
        match player {
            Player::One => &self.gamma1,
            Player::Two => &self.gamma2,
        }
    }

    /// Discount factor at the time `level` is crossed during step `k`.
    fn crossing_discount(&self, k: usize, level: f64) -> f64 {
        if k == 0 || self.monitoring == Monitoring::Grid {
            return self.discount[k];
        }
        let r = self.eq.game().params().r();
        let frac = crossing_fraction(
            self.log_states[k - 1],
            self.log_states[k],
            level.ln(),
            self.scale,
        );
        self.discount[k - 1] * (-r * self.dt * frac).exp()
    }

    /// Increase of `control`, owned by `who`, during step `k`.
    fn part(&self, who: Player, control: &ControlPath, k: usize) -> StepPart {
        let before = control.left_limit(k);
        let jump = control.jump().filter(|j| j.index == k);
        let pre = jump.map_or(control.value(k), |j| j.pre);
        let x = self.states[k];
        let (lo, hi) = match self.monitoring {
            Monitoring::Grid => (x, x),
            Monitoring::Bridge if k == 0 => (x, x),
            Monitoring::Bridge => {
                let lo = self.maxes[k - 1];
                (lo, self.maxes[k].min(self.ceilings[slot(who)]).max(lo))
            }
        };
        let jump = jump.map(|j| {
            let at = match (self.monitoring, j.level) {
                (Monitoring::Bridge, Some(level)) if k > 0 => StopPoint {
                    index: k,
                    level,
                    discount: self.crossing_discount(k, level),
                },
                _ => StopPoint {
                    index: k,
                    level: x,
                    discount: self.discount[k],
                },
            };
            (j.post - j.pre, at)
        });
        StepPart {
            cont: (pre - before).max(0.0),
            lo,
            hi,
            jump,
        }
    }

    /// Level inside the step range of `part` where the continuous increase
    /// of `who`'s control has covered the fraction `q`.
    fn level_at(&self, who: Player, part: &StepPart, q: f64) -> f64 {
        if part.hi > part.lo {
            self.eq.level_table(who).level_at_fraction(part.lo, part.hi, q)
        } else {
            part.lo
        }
    }

    /// `∫ e^{-rt} V^{h}(level) dΓ` for `viewer` over the first fraction `q`
    /// of the continuous increase of `opp`'s control in `part`.
    fn consolation_over(&self, opp: Player, viewer: Player, part: &StepPart, k: usize, q: f64) -> f64 {
        let vh = self.eq.vh(viewer);
        mass_nodes(part.lo, part.hi)
            .iter()
            .map(|&(node, w)| {
                let level = self.level_at(opp, part, q * node);
                w * self.crossing_discount(k, level) * vh.value(level)
            })
            .sum::<f64>()
            * q
            * part.cont
    }

    /// Opponent's control just before `viewer` stops at `at`, and the
    /// consolation accrued to `viewer` by then. Player 1 sees an opponent
    /// event at the same level as already done, Player 2 does not.
    fn opponent_before(&self, viewer: Player, at: &StopPoint) -> (f64, f64) {
        let opp = other(viewer);
        let control = self.control(opp);
        let k = at.index;
        let part = self.part(opp, control, k);
        let p = self.eq.game().player(viewer).p;
        let vh = self.eq.vh(viewer);
        let ties = viewer == Player::One;
        let mut mass = control.left_limit(k);
        let mut cons = if k == 0 { 0.0 } else { self.cum[slot(viewer)][k - 1] };
        if part.cont > 0.0 {
            let frac = if part.hi > part.lo {
                self.eq.level_table(opp).fraction_at_level(part.lo, part.hi, at.level)
            } else if at.level > part.lo || (at.level == part.lo && ties) {
                1.0
            } else {
                0.0
            };
            if frac > 0.0 {
                mass += frac * part.cont;
                cons += p * self.consolation_over(opp, viewer, &part, k, frac);
            }
        }
        if let Some((jm, jat)) = part.jump {
            if jat.level < at.level || (jat.level == at.level && ties) {
                mass += jm;
                cons += p * jat.discount * vh.value(jat.level) * jm;
            }
        }
        (mass, cons)
    }

    /// Stop of `who` using `control` with device `u`: the first point where
    /// the control exceeds `u`.
    pub fn stop_of(&self, who: Player, control: &ControlPath, u: f64) -> Option<StopPoint> {
        let k = control.values().partition_point(|&g| g <= u);
        if k >= control.len() {
            return None;
        }
        let part = self.part(who, control, k);
        let before = control.left_limit(k);
        if let Some((_, at)) = part.jump {
            if u >= before + part.cont {
                return Some(at);
            }
        }
        let frac = if part.cont > 0.0 {
            ((u - before) / part.cont).clamp(0.0, 1.0)
        } else {
            1.0
        };
        let level = self.level_at(who, &part, frac);
        Some(StopPoint {
            index: k,
            level,
            discount: self.crossing_discount(k, level),
        })
    }

    /// Stopping at time zero.
    pub fn immediate(&self) -> StopPoint {
        StopPoint {
            index: 0,
            level: self.states[0],
            discount: 1.0,
        }
    }

    /// First grid index by which the path has reached `level`.
    pub fn first_passage(&self, level: f64) -> Option<usize> {
        let k = self.maxes.partition_point(|&m| m < level);
        (k < self.len()).then_some(k)
    }

    /// Stop at the first passage of `level`.
    pub fn first_passage_stop(&self, level: f64) -> Option<StopPoint> {
        let k = self.first_passage(level)?;
        Some(match self.monitoring {
            _ if k == 0 => self.immediate(),
            Monitoring::Bridge => StopPoint {
                index: k,
                level,
                discount: self.crossing_discount(k, level),
            },
            Monitoring::Grid => StopPoint {
                index: k,
                level: self.states[k],
                discount: self.discount[k],
            },
        })
    }

    /// Payoff of `player` stopping at `at` (`None`: never) against the
    /// opponent's equilibrium control.
    pub fn stop_payoff(&self, player: Player, at: Option<StopPoint>) -> f64 {
        match at {
            Some(at) => {
                let (mass, cons) = self.opponent_before(player, &at);
                let p = self.eq.game().player(player).p;
                let g = self.eq.payoff_g(player);
                at.discount * (1.0 - p * mass) * g.eval(at.level) + cons
            }
            None => self.cum[slot(player)].last().copied().unwrap_or(0.0),
        }
    }

    /// `∫₀¹ F(γ(u)) du` for the player's own control `own`: each step's
    /// continuous increase is evaluated at the middle of its level range,
    /// the jump at its level, and what is left of `[0, 1]` never stops.
    pub fn formula_with(&self, player: Player, own: &ControlPath) -> f64 {
        let mut total = 0.0;
        for k in 0..own.len() {
            if own.increment(k) <= 0.0 {
                continue;
            }
            let part = self.part(player, own, k);
            if part.cont > 0.0 {
                for &(q, w) in mass_nodes(part.lo, part.hi) {
                    let level = self.level_at(player, &part, q);
                    let at = StopPoint {
                        index: k,
                        level,
                        discount: self.crossing_discount(k, level),
                    };
                    total += w * part.cont * self.stop_payoff(player, Some(at));
                }
            }
            if let Some((mass, at)) = part.jump {
                total += mass * self.stop_payoff(player, Some(at));
            }
        }
        let rest = 1.0 - own.value(own.len().saturating_sub(1));
        if rest > 0.0 {
            total += rest * self.stop_payoff(player, None);
        }
        total
    }

    /// Midpoint rule with [`DEVICE_QUADRATURE_POINTS`] nodes in `u`.
    pub fn quadrature_with(&self, player: Player, own: &ControlPath) -> f64 {
        let n = DEVICE_QUADRATURE_POINTS;
        (0..n)
            .map(|i| {
                let u = (i as f64 + 0.5) / n as f64;
                self.stop_payoff(player, self.stop_of(player, own, u))
            })
            .sum::<f64>()
            / n as f64
    }

    /// Realised payoff from the competition indicators and devices.
    /// Simultaneous stops go to Player 2.
    pub fn indicator_with(
        &self,
        player: Player,
        gamma1: &ControlPath,
        gamma2: &ControlPath,
        theta: [bool; 2],
        devices: [f64; 2],
    ) -> f64 {
        let s1 = self.stop_of(Player::One, gamma1, devices[0]);
        let s2 = self.stop_of(Player::Two, gamma2, devices[1]);
        competition_payoff(self.eq, player, [s1, s2], theta)
    }

    /// Opponent control value at `k` and the viewer's consolation through
    /// step `k`, leaving out an opponent jump at `k` when `exclude_jump`.
    fn opponent_at(&self, viewer: Player, k: usize, exclude_jump: bool) -> (f64, f64) {
        let opp = other(viewer);
        let control = self.control(opp);
        let mut g = control.value(k);
        let mut cons = self.cum[slot(viewer)][k];
        if exclude_jump {
            if let Some((mass, at)) = self.part(opp, control, k).jump {
                let p = self.eq.game().player(viewer).p;
                g -= mass;
                cons -= p * at.discount * self.eq.vh(viewer).value(at.level) * mass;
            }
        }
        (g, cons)
    }

    /// `M¹_k = e^{-rt_k}(1 − p₁Γ²_k)·scale·u₁(X_k, Π¹_k) + C¹_k`, held at its
    /// last value past the end of the path. `stopped` evaluates it just
    /// before an opponent jump at `k`.
    pub fn m1(&self, k: usize, u1_scale: f64, stopped: bool) -> f64 {
        let k = k.min(self.len() - 1);
        let p1 = self.eq.game().p1();
        let (g, cons) = self.opponent_at(Player::One, k, stopped);
        let u = self.eq.values().u1(self.states[k], belief(p1, g));
        self.discount[k] * (1.0 - p1 * g) * u1_scale * u + cons
    }

    /// `M²_k = e^{-rt_k}(1 − p₂Γ¹_{k−})·u₂(X_k, Π¹_{k−}) + C²_{k−}`. Under
    /// bridge monitoring nothing happens exactly at a grid time after zero,
    /// so the left limits are the values at `k` for `k ≥ 1`.
    pub fn m2(&self, k: usize, stopped: bool) -> f64 {
        let k = k.min(self.len() - 1);
        let game = self.eq.game();
        let (g1, g2, cons) = if k == 0 {
            (0.0, 0.0, 0.0)
        } else {
            match self.monitoring {
                Monitoring::Grid => (
                    self.gamma1.value(k - 1),
                    self.gamma2.value(k - 1),
                    self.cum[1][k - 1],
                ),
                Monitoring::Bridge => {
                    let (g1, cons) = self.opponent_at(Player::Two, k, stopped);
                    (g1, self.gamma2.value(k), cons)
                }
            }
        };
        let pi = belief(game.p1(), g2);
        let u = self.eq.values().u2(self.states[k], pi);
        self.discount[k] * (1.0 - game.p2() * g1) * u + cons
    }

    pub fn m(&self, player: Player, k: usize, u1_scale: f64, stopped: bool) -> f64 {
        match player {
            Player::One => self.m1(k, u1_scale, stopped),
            Player::Two => self.m2(k, stopped),
        }
    }
}

impl Evaluator for PathEval<'_> {
    fn equilibrium(&self) -> &Equilibrium {
        self.eq
    }

    fn len(&self) -> usize {
        PathEval::len(self)
    }

    fn dt(&self) -> f64 {
        self.dt
    }

    fn immediate(&self) -> StopPoint {
        PathEval::immediate(self)
    }

    fn first_passage(&self, level: f64) -> Option<usize> {
        PathEval::first_passage(self, level)
    }

    fn first_passage_stop(&self, level: f64) -> Option<StopPoint> {
        PathEval::first_passage_stop(self, level)
    }

    fn device_stop(&self, player: Player, u: f64) -> Option<StopPoint> {
        self.stop_of(player, self.control(player), u)
    }

    fn stop_payoff(&self, player: Player, at: Option<StopPoint>) -> f64 {
        PathEval::stop_payoff(self, player, at)
    }

    fn scaled_formula(&self, player: Player, s: f64) -> f64 {
        if s == 1.0 {
            self.formula_with(player, self.control(player))
        } else {
            self.formula_with(player, &scaled_control(self.control(player), s))
        }
    }

    fn m(&self, player: Player, k: usize, u1_scale: f64, stopped: bool) -> f64 {
        PathEval::m(self, player, k, u1_scale, stopped)
    }
}

/// `min(1, s·Γ)`, keeping the terminal jump where it was.
pub fn scaled_control(own: &ControlPath, s: f64) -> ControlPath {
    let values = own.values().iter().map(|&g| (s * g).min(1.0)).collect();
    let jump = own.jump().map(|j| TerminalJump {
        pre: (s * j.pre).min(1.0),
        ..j
    });
    ControlPath::from_values(own.dt(), values, jump)
}
