//! Evaluation in level space for bridge-monitored paths.
//!
//! Both equilibrium controls are functions of the running maximum, so every
//! payoff along a path is an integral over the levels the maximum sweeps.
//! [`LevelGrid`] splits `[x₀, ceiling)` into cells and holds everything that
//! does not depend on the path. [`LevelEval`] adds, for each cell midpoint,
//! the grid step in which the path first reaches it and the discount factor
//! at the expected crossing time inside that step. Integrals over levels use
//! the midpoint rule on the cells, so the cost per path grows with the
//! number of cells rather than the number of steps.

use super::evaluate::{crossing_fraction, Evaluator, StopPoint};
use super::SimError;
use crate::equilibrium::Equilibrium;
use crate::model::Player;
use crate::strategy::belief;

/// Cells between `x₀` and the ceiling.
pub const LEVEL_CELLS: usize = 512;

fn slot(player: Player) -> usize {
    player.index() as usize - 1
}

/// Path-independent data of one game on the level cells.
#[derive(Debug, Clone)]
pub struct LevelGrid<'a> {
    eq: &'a Equilibrium,
    x0: f64,
    ceiling: f64,
    width: f64,
    mids: Vec<f64>,
    log_mids: Vec<f64>,
    /// `Γ^i` at the cell edges, time-zero mass included.
    edges: [Vec<f64>; 2],
    /// `Γ^i` at the cell midpoints.
    at_mid: [Vec<f64>; 2],
    g_mid: [Vec<f64>; 2],
    vh_mid: [Vec<f64>; 2],
    /// Mass of `Γ^i` at time zero.
    atoms: [f64; 2],
    /// Level and pre-jump value of each terminal jump above `x₀`.
    jumps: [Option<(f64, f64)>; 2],
}

impl<'a> LevelGrid<'a> {
    pub fn new(eq: &'a Equilibrium) -> Result<Self, SimError> {
        let x0 = eq.game().x0();
        let ceiling = eq.ceilings().into_iter().fold(x0, f64::max);
        let cells = if ceiling > x0 { LEVEL_CELLS } else { 0 };
        let width = if cells > 0 { (ceiling - x0) / cells as f64 } else { 0.0 };
        let mids: Vec<f64> = (0..cells).map(|i| x0 + (i as f64 + 0.5) * width).collect();
        let (g1, g2) = eq.controls(&[x0], 1.0)?;
        let atoms = [g1.value(0), g2.value(0)];
        let players = [Player::One, Player::Two];
        let table = |p: Player, x: f64| {
            if cells == 0 {
                atoms[slot(p)]
            } else {
                eq.level_table(p).value(x)
            }
        };
        let edges = players.map(|p| (0..=cells).map(|i| table(p, x0 + i as f64 * width)).collect());
        let at_mid = players.map(|p| mids.iter().map(|&m| table(p, m)).collect());
        let g_mid = players.map(|p| mids.iter().map(|&m| eq.payoff_g(p).eval(m)).collect());
        let vh_mid = players.map(|p| mids.iter().map(|&m| eq.vh(p).value(m)).collect());
        let levels = eq.jump_levels();
        let jumps = players.map(|p| {
            levels[slot(p)]
                .filter(|&l| l > x0)
                .map(|l| (l, table(p, ceiling)))
        });
        Ok(LevelGrid {
            eq,
            x0,
            ceiling,
            width,
            log_mids: mids.iter().map(|m| m.ln()).collect(),
            mids,
            edges,
            at_mid,
            g_mid,
            vh_mid,
            atoms,
            jumps,
        })
    }

    pub fn equilibrium(&self) -> &'a Equilibrium {
        self.eq
    }

    pub fn cells(&self) -> usize {
        self.mids.len()
    }

    /// Continuous part of `Γ^i` at `level`, time-zero mass included.
    fn control(&self, player: Player, level: f64) -> f64 {
        if self.mids.is_empty() {
            self.atoms[slot(player)]
        } else {
            self.eq.level_table(player).value(level.min(self.ceiling))
        }
    }

    /// Cell holding `level < ceiling`.
    fn cell(&self, level: f64) -> usize {
        (((level - self.x0) / self.width).max(0.0) as usize).min(self.cells() - 1)
    }
}

/// A terminal jump reached by the path.
#[derive(Debug, Clone, Copy)]
struct Jump {
    at: StopPoint,
    pre: f64,
}

/// One bridge-monitored path evaluated in level space.
pub struct LevelEval<'a> {
    grid: &'a LevelGrid<'a>,
    states: &'a [f64],
    maxes: &'a [f64],
    dt: f64,
    r: f64,
    scale: f64,
    /// Cells whose midpoint the path reaches.
    reached: usize,
    /// Discount factor at the crossing of each reached midpoint.
    node_discount: Vec<f64>,
    /// Consolation `p_i ∫ e^{-rt} V^{h_i} dΓ^{other}` accrued to each viewer
    /// by the lower edge of each cell, over continuous parts only.
    cum: [Vec<f64>; 2],
    jumps: [Option<Jump>; 2],
}

impl<'a> LevelEval<'a> {
    pub fn new(
        grid: &'a LevelGrid<'a>,
        states: &'a [f64],
        maxes: &'a [f64],
        dt: f64,
    ) -> Result<Self, SimError> {
        if states.is_empty() || maxes.len() != states.len() {
            return Err(SimError::GridMismatch {
                control: maxes.len(),
                path: states.len(),
            });
        }
        let params = grid.eq.game().params();
        let top = *maxes.last().unwrap_or(&grid.x0);
        let reached = grid.mids.partition_point(|&m| m <= top);
        let mut ev = LevelEval {
            grid,
            states,
            maxes,
            dt,
            r: params.r(),
            scale: params.sigma() * dt.sqrt(),
            reached,
            node_discount: Vec::with_capacity(reached),
            cum: [Vec::new(), Vec::new()],
            jumps: [None, None],
        };
        let mut k = 0;
        for i in 0..reached {
            let mid = grid.mids[i];
            k += maxes[k..].partition_point(|&m| m < mid);
            let d = ev.crossing_discount(k, grid.log_mids[i]);
            ev.node_discount.push(d);
        }
        for player in [Player::One, Player::Two] {
            ev.jumps[slot(player)] = grid.jumps[slot(player)].and_then(|(level, pre)| {
                let at = ev.first_passage_stop(level)?;
                Some(Jump { at, pre })
            });
        }
        let eq = grid.eq;
        for viewer in [Player::One, Player::Two] {
            let opp = viewer.other();
            let p = eq.game().player(viewer).p;
            let (v, o) = (slot(viewer), slot(opp));
            let mut c = p * eq.vh(viewer).value(grid.x0) * grid.atoms[o];
            let mut cum = Vec::with_capacity(reached + 1);
            cum.push(c);
            for i in 0..reached {
                let dg = grid.edges[o][i + 1] - grid.edges[o][i];
                c += p * ev.node_discount[i] * grid.vh_mid[v][i] * dg;
                cum.push(c);
            }
            ev.cum[v] = cum;
        }
        Ok(ev)
    }

    fn crossing_discount(&self, k: usize, log_level: f64) -> f64 {
        if k == 0 {
            return 1.0;
        }
        let frac = crossing_fraction(
            self.states[k - 1].ln(),
            self.states[k].ln(),
            log_level,
            self.scale,
        );
        (-self.r * self.dt * ((k - 1) as f64 + frac)).exp()
    }

    fn discount(&self, k: usize) -> f64 {
        (-self.r * self.dt * k as f64).exp()
    }

    /// Opponent's control just before `viewer` stops at `level` with
    /// discount `d`, and the consolation accrued to `viewer` by then. Player
    /// 1 sees an opponent event at the same level as already done, Player 2
    /// does not; at time zero this decides who gets the atoms.
    fn opponent_before(&self, viewer: Player, level: f64, d: f64, immediate: bool) -> (f64, f64) {
        let grid = self.grid;
        let eq = grid.eq;
        let opp = viewer.other();
        let (v, o) = (slot(viewer), slot(opp));
        let p = eq.game().player(viewer).p;
        if immediate {
            return match viewer {
                Player::One => (grid.atoms[o], p * eq.vh(viewer).value(grid.x0) * grid.atoms[o]),
                Player::Two => (0.0, 0.0),
            };
        }
        let (mut mass, mut cons) = if grid.cells() == 0 {
            (grid.atoms[o], self.cum[v][0])
        } else if level < grid.ceiling {
            let i = grid.cell(level);
            let g = grid.control(opp, level);
            let node = if i < self.reached { self.node_discount[i] } else { d };
            let partial = p * node * grid.vh_mid[v][i] * (g - grid.edges[o][i]);
            (g, self.cum[v][i.min(self.reached)] + partial)
        } else {
            (grid.control(opp, level), self.cum[v][self.reached])
        };
        if let Some(j) = self.jumps[o] {
            let seen = j.at.level < level || (j.at.level == level && viewer == Player::One);
            if seen {
                mass = 1.0;
                cons += p * j.at.discount * eq.vh(viewer).value(j.at.level) * (1.0 - j.pre);
            }
        }
        (mass, cons)
    }

    fn payoff_at(&self, player: Player, at: &StopPoint) -> f64 {
        let eq = self.grid.eq;
        let immediate = at.index == 0;
        let (mass, cons) = self.opponent_before(player, at.level, at.discount, immediate);
        let p = eq.game().player(player).p;
        at.discount * (1.0 - p * mass) * eq.payoff_g(player).eval(at.level) + cons
    }

    /// Consolation when `player` never stops.
    fn never(&self, player: Player) -> f64 {
        let eq = self.grid.eq;
        let (v, o) = (slot(player), slot(player.other()));
        let p = eq.game().player(player).p;
        let mut c = self.cum[v][self.reached];
        if let Some(j) = self.jumps[o] {
            c += p * j.at.discount * eq.vh(player).value(j.at.level) * (1.0 - j.pre);
        }
        c
    }

    /// Payoff of a stop at the midpoint of reached cell `i`.
    fn node_payoff(&self, player: Player, i: usize) -> f64 {
        let grid = self.grid;
        let (v, o) = (slot(player), slot(player.other()));
        let p = grid.eq.game().player(player).p;
        let d = self.node_discount[i];
        let g = grid.at_mid[o][i];
        let cons = self.cum[v][i] + p * d * grid.vh_mid[v][i] * (g - grid.edges[o][i]);
        d * (1.0 - p * g) * grid.g_mid[v][i] + cons
    }

    /// Opponent control at grid index `k` and the viewer's consolation by
    /// then, leaving out an opponent jump reached in step `k` when
    /// `exclude_jump`.
    fn opponent_at(&self, viewer: Player, k: usize, exclude_jump: bool) -> (f64, f64) {
        let grid = self.grid;
        let eq = grid.eq;
        let opp = viewer.other();
        let (v, o) = (slot(viewer), slot(opp));
        let p = eq.game().player(viewer).p;
        let level = self.maxes[k];
        let (mut g, mut cons) = if grid.cells() == 0 || k == 0 {
            (grid.atoms[o], self.cum[v][0])
        } else if level < grid.ceiling {
            let i = grid.cell(level);
            let gl = grid.control(opp, level);
            let node = if i < self.reached { self.node_discount[i] } else { self.discount(k) };
            (gl, self.cum[v][i.min(self.reached)] + p * node * grid.vh_mid[v][i] * (gl - grid.edges[o][i]))
        } else {
            (grid.control(opp, level), self.cum[v][self.reached])
        };
        if let Some(j) = self.jumps[o] {
            if j.at.index <= k && !(exclude_jump && j.at.index == k) {
                g = 1.0;
                cons += p * j.at.discount * eq.vh(viewer).value(j.at.level) * (1.0 - j.pre);
            }
        }
        (g, cons)
    }

    /// Own control of `player` at grid index `k`.
    fn own_at(&self, player: Player, k: usize) -> f64 {
        match self.jumps[slot(player)] {
            Some(j) if j.at.index <= k => 1.0,
            _ => self.grid.control(player, self.maxes[k]),
        }
    }

    pub fn m1(&self, k: usize, u1_scale: f64, stopped: bool) -> f64 {
        let k = k.min(self.states.len() - 1);
        let eq = self.grid.eq;
        let p1 = eq.game().p1();
        let (g, cons) = self.opponent_at(Player::One, k, stopped);
        let u = eq.values().u1(self.states[k], belief(p1, g));
        self.discount(k) * (1.0 - p1 * g) * u1_scale * u + cons
    }

    pub fn m2(&self, k: usize, stopped: bool) -> f64 {
        let k = k.min(self.states.len() - 1);
        let eq = self.grid.eq;
        let game = eq.game();
        let (g1, g2, cons) = if k == 0 {
            (0.0, 0.0, 0.0)
        } else {
            let (g1, cons) = self.opponent_at(Player::Two, k, stopped);
            (g1, self.own_at(Player::Two, k), cons)
        };
        let u = eq.values().u2(self.states[k], belief(game.p1(), g2));
        self.discount(k) * (1.0 - game.p2() * g1) * u + cons
    }
}

impl Evaluator for LevelEval<'_> {
    fn equilibrium(&self) -> &Equilibrium {
        self.grid.eq
    }

    fn len(&self) -> usize {
        self.states.len()
    }

    fn dt(&self) -> f64 {
        self.dt
    }

    fn immediate(&self) -> StopPoint {
        StopPoint {
            index: 0,
            level: self.states[0],
            discount: 1.0,
        }
    }

    fn first_passage(&self, level: f64) -> Option<usize> {
        let k = self.maxes.partition_point(|&m| m < level);
        (k < self.states.len()).then_some(k)
    }

    fn first_passage_stop(&self, level: f64) -> Option<StopPoint> {
        let k = self.first_passage(level)?;
        if k == 0 {
            return Some(self.immediate());
        }
        Some(StopPoint {
            index: k,
            level,
            discount: self.crossing_discount(k, level.ln()),
        })
    }

    fn device_stop(&self, player: Player, u: f64) -> Option<StopPoint> {
        let grid = self.grid;
        let i = slot(player);
        let atom = grid.atoms[i];
        if u < atom {
            return Some(self.immediate());
        }
        let top = grid.control(player, grid.ceiling);
        if grid.cells() > 0 && u < top {
            let q = (u - atom) / (top - atom);
            let level = grid.eq.level_table(player).level_at_fraction(grid.x0, grid.ceiling, q);
            return self.first_passage_stop(level);
        }
        self.jumps[i].map(|j| j.at)
    }

    fn stop_payoff(&self, player: Player, at: Option<StopPoint>) -> f64 {
        match at {
            Some(at) => self.payoff_at(player, &at),
            None => self.never(player),
        }
    }

    fn scaled_formula(&self, player: Player, s: f64) -> f64 {
        let grid = self.grid;
        let v = slot(player);
        let own = |g: f64| (s * g).min(1.0);
        let mut done = own(grid.atoms[v]);
        let mut total = done * self.payoff_at(player, &self.immediate());
        for i in 0..self.reached {
            let w = own(grid.edges[v][i + 1]) - own(grid.edges[v][i]);
            if w > 0.0 {
                total += w * self.node_payoff(player, i);
                done += w;
            }
        }
        if let Some(j) = self.jumps[v] {
            let w = 1.0 - own(j.pre);
            if w > 0.0 {
                total += w * self.payoff_at(player, &j.at);
                done += w;
            }
        }
        let rest = (1.0 - done).max(0.0);
        if rest > 0.0 {
            total += rest * self.never(player);
        }
        total
    }

    fn m(&self, player: Player, k: usize, u1_scale: f64, stopped: bool) -> f64 {
        match player {
            Player::One => self.m1(k, u1_scale, stopped),
            Player::Two => self.m2(k, stopped),
        }
    }
}
