//! A solved game: boundary, equilibrium values and the recipe for building
//! both players' controls along a path.

use thiserror::Error;

use crate::boundary::{
    asym_boundary, martingale_boundary, ode_boundary, Boundary, BoundaryError, BoundaryMode,
    EquilibriumValues,
};
use crate::model::{GameSpec, ModelError, Payoff, Player};
use crate::single::{value_function, ValueFunction};
use crate::strategy::{
    first_at_or_above, gamma1_asym, gamma1_sym, gamma2_from_boundary, ControlPath, HoldRule,
    StrategyError,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EquilibriumError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Boundary(#[from] BoundaryError),
    #[error("{0} mode needs identical payoffs for both players")]
    NotSymmetric(BoundaryMode),
    #[error(transparent)]
    Strategy(#[from] StrategyError),
}

/// Points of the level grid on which the continuous part of each control is
/// tabulated.
pub const LEVEL_TABLE_POINTS: usize = 4096;

/// A control as a nondecreasing function of the running maximum on
/// `[x₀, ceiling)`, sampled on a uniform grid.
#[derive(Debug, Clone)]
pub struct LevelTable {
    start: f64,
    step: f64,
    inv_step: f64,
    values: Vec<f64>,
}

impl LevelTable {
    fn new(start: f64, end: f64, values: Vec<f64>) -> Self {
        let step = if values.len() > 1 {
            (end - start) / (values.len() - 1) as f64
        } else {
            0.0
        };
        let inv_step = if step > 0.0 { 1.0 / step } else { 0.0 };
        LevelTable {
            start,
            step,
            inv_step,
            values,
        }
    }

    /// Control value at `level`, linear between grid points and constant
    /// outside the table.
    pub fn value(&self, level: f64) -> f64 {
        let last = self.values.len() - 1;
        if self.step <= 0.0 || level <= self.start {
            return self.values[0];
        }
        let s = (level - self.start) * self.inv_step;
        if s >= last as f64 {
            return self.values[last];
        }
        let i = s as usize;
        let w = s - i as f64;
        self.values[i] + w * (self.values[i + 1] - self.values[i])
    }

    /// Level in `[lo, hi]` at which the control covers the fraction `q` of its
    /// increase over that range.
    pub fn level_at_fraction(&self, lo: f64, hi: f64, q: f64) -> f64 {
        let (a, b) = (self.value(lo), self.value(hi));
        if !(b > a) || self.step <= 0.0 {
            return lo + q * (hi - lo);
        }
        let target = a + q * (b - a);
        let last = self.values.len() - 1;
        // only the cells between lo and hi can bracket the target
        let cell = |x: f64| (((x - self.start) * self.inv_step).max(0.0) as usize).min(last);
        let (from, to) = (cell(lo), (cell(hi) + 1).min(last));
        let i = from + self.values[from..=to].partition_point(|&v| v < target);
        let i = i.clamp(1, last);
        let (v0, v1) = (self.values[i - 1], self.values[i]);
        let w = if v1 > v0 { ((target - v0) / (v1 - v0)).clamp(0.0, 1.0) } else { 1.0 };
        (self.start + (i as f64 - 1.0 + w) * self.step).clamp(lo, hi)
    }

    /// Fraction of the increase over `[lo, hi]` reached by `level`.
    pub fn fraction_at_level(&self, lo: f64, hi: f64, level: f64) -> f64 {
        let (a, b) = (self.value(lo), self.value(hi));
        if !(b > a) {
            return if hi > lo { ((level - lo) / (hi - lo)).clamp(0.0, 1.0) } else { 1.0 };
        }
        ((self.value(level) - a) / (b - a)).clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone)]
pub struct Equilibrium {
    game: GameSpec,
    values: EquilibriumValues,
    vg: [ValueFunction; 2],
    vh: [ValueFunction; 2],
    tables: Vec<LevelTable>,
}

impl Equilibrium {
    pub fn new(game: &GameSpec, mode: BoundaryMode) -> Result<Self, EquilibriumError> {
        game.require_ordered()?;
        let params = game.params();
        let (one, two) = (game.player1(), game.player2());
        let vg = [value_function(params, one.g), value_function(params, two.g)];
        let vh = [value_function(params, one.h), value_function(params, two.h)];
        if mode != BoundaryMode::Asym && !game.is_symmetric() {
            return Err(EquilibriumError::NotSymmetric(mode));
        }
        let values = match mode {
            BoundaryMode::Martingale => {
                let b = martingale_boundary(&vg[0], &vh[0], &one.g)?;
                EquilibriumValues::martingale(b, vg[0], vh[0], one.g)
            }
            BoundaryMode::Ode => {
                let strike = match one.g {
                    Payoff::Call { strike } => strike,
                    other => {
                        return Err(BoundaryError::UnsupportedFamily(format!(
                            "g must be a call payoff, got {other}"
                        ))
                        .into())
                    }
                };
                let b = ode_boundary(params, strike, &vh[0])?;
                EquilibriumValues::ode(b, vg[0], vh[0], one.g)
            }
            BoundaryMode::Asym => {
                let b = asym_boundary(game)?;
                EquilibriumValues::asym(b, (vg[0], vh[0], one.g), (vg[1], two.g))
            }
        };
        let mut eq = Equilibrium {
            game: *game,
            values,
            vg,
            vh,
            tables: Vec::new(),
        };
        eq.tables = eq.level_tables()?;
        Ok(eq)
    }

    fn level_tables(&self) -> Result<Vec<LevelTable>, StrategyError> {
        let x0 = self.game.x0();
        let top = self.ceilings().into_iter().fold(x0, f64::max);
        if top <= x0 {
            let (g1, g2) = self.controls(&[x0], 1.0)?;
            return Ok(vec![
                LevelTable::new(x0, x0, vec![g1.value(0)]),
                LevelTable::new(x0, x0, vec![g2.value(0)]),
            ]);
        }
        // stay just below the ceiling so no terminal jump enters the table
        let end = x0 + (top - x0) * (1.0 - 1e-12);
        let n = LEVEL_TABLE_POINTS;
        let levels: Vec<f64> = (0..n)
            .map(|i| x0 + (end - x0) * i as f64 / (n - 1) as f64)
            .collect();
        let (g1, g2) = self.controls(&levels, 1.0)?;
        Ok(vec![
            LevelTable::new(x0, end, g1.values().to_vec()),
            LevelTable::new(x0, end, g2.values().to_vec()),
        ])
    }

    /// Continuous part of `player`'s control as a function of the running
    /// maximum.
    pub fn level_table(&self, player: Player) -> &LevelTable {
        &self.tables[player.index() as usize - 1]
    }

    pub fn game(&self) -> &GameSpec {
        &self.game
    }

    pub fn mode(&self) -> BoundaryMode {
        self.values.mode()
    }

    pub fn values(&self) -> &EquilibriumValues {
        &self.values
    }

    pub fn boundary(&self) -> &Boundary {
        self.values.boundary()
    }

    pub fn vg(&self, player: Player) -> &ValueFunction {
        &self.vg[player.index() as usize - 1]
    }

    pub fn vh(&self, player: Player) -> &ValueFunction {
        &self.vh[player.index() as usize - 1]
    }

    pub fn payoff_g(&self, player: Player) -> Payoff {
        self.game.player(player).g
    }

    /// `u₁(x₀, p₁)`.
    pub fn u1(&self) -> f64 {
        self.values.u1(self.game.x0(), self.game.p1())
    }

    /// `u₂(x₀, p₁)`.
    pub fn u2(&self) -> f64 {
        self.values.u2(self.game.x0(), self.game.p1())
    }

    pub fn value(&self, player: Player) -> f64 {
        match player {
            Player::One => self.u1(),
            Player::Two => self.u2(),
        }
    }

    /// State at or above which both controls equal 1.
    pub fn resolution_level(&self) -> f64 {
        self.vg[0].threshold().max(self.vg[1].threshold())
    }

    /// Levels above which `Γ¹` and `Γ²` no longer rise continuously; past
    /// them a control only moves through its terminal jump.
    pub fn ceilings(&self) -> [f64; 2] {
        match self.mode() {
            BoundaryMode::Asym => {
                let b_g2 = self.vg[1].threshold();
                [b_g2, b_g2]
            }
            _ => {
                let b_g = self.boundary().upper_bg();
                [b_g, b_g]
            }
        }
    }

    /// Levels at which `Γ¹` and `Γ²` jump to 1.
    pub fn jump_levels(&self) -> [Option<f64>; 2] {
        match self.mode() {
            BoundaryMode::Asym => [Some(self.vg[1].threshold()), Some(self.vg[0].threshold())],
            _ => [Some(self.boundary().upper_bg()), None],
        }
    }

    /// Upper bound for the discounted continuation payoff of either player
    /// at state `x`.
    pub fn value_cap(&self, x: f64) -> f64 {
        self.vg[0].value(x).max(self.vg[1].value(x))
    }

    /// Equilibrium controls `(Γ¹, Γ²)` along `path`, which may be the grid
    /// states or the running maximum of the continuous path. Terminal jumps
    /// are placed at the threshold that triggers them.
    pub fn controls(
        &self,
        path: &[f64],
        dt: f64,
    ) -> Result<(ControlPath, ControlPath), StrategyError> {
        let (p1, p2) = (self.game.p1(), self.game.p2());
        let b = self.boundary();
        match self.mode() {
            BoundaryMode::Martingale | BoundaryMode::Ode => {
                let gamma2 = gamma2_from_boundary(path, dt, b, p1, None)?;
                let tau = first_at_or_above(path, b.upper_bg());
                let b0 = b.value(*path.first().ok_or(StrategyError::EmptyPath)?);
                let gamma1 = gamma1_sym(&gamma2, b0, p1, p2, tau)?.with_jump_level(b.upper_bg());
                Ok((gamma1, gamma2))
            }
            BoundaryMode::Asym => {
                let b_g2 = self.vg[1].threshold();
                let hold = HoldRule::from_thresholds(path, b_g2, self.vg[0].threshold());
                // continuous parts stop rising at b_g2
                let capped: Vec<f64> = path.iter().map(|&x| x.min(b_g2)).collect();
                let gamma2 = gamma2_from_boundary(&capped, dt, b, p1, Some(hold))?;
                let gamma1 = gamma1_asym(
                    &capped,
                    &gamma2,
                    &self.values,
                    &self.vh[1],
                    p1,
                    p2,
                    hold.freeze_from,
                )?
                .with_jump_level(self.vg[1].threshold());
                Ok((gamma1, gamma2.with_jump_level(self.vg[0].threshold())))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{validate, PlayerSpec};

    fn worked(x0: f64, p1: f64, p2: f64) -> GameSpec {
        let params = validate(0.0, 2f64.sqrt(), 2.0).unwrap();
        GameSpec::symmetric(params, x0, Payoff::Call { strike: 3.0 }, Payoff::Call { strike: 4.0 }, p1, p2)
            .unwrap()
    }

    #[test]
    fn worked_family_values() {
        let eq = Equilibrium::new(&worked(5.0, 0.16, 0.5), BoundaryMode::Martingale).unwrap();
        assert!((eq.u1() - 2.0).abs() < 1e-12);
        assert!((eq.u2() - 2.0).abs() < 1e-12);
        assert_eq!(eq.resolution_level(), 6.0);
        let eq = Equilibrium::new(&worked(5.0, 0.1, 0.5), BoundaryMode::Martingale).unwrap();
        let u1 = 0.9 * 25.0 / 12.0 + 0.1 * 25.0 / 16.0;
        assert!((eq.u1() - u1).abs() < 1e-12);
        assert_eq!(eq.u2(), eq.u1());
    }

    #[test]
    fn unordered_probabilities_rejected() {
        assert!(matches!(
            Equilibrium::new(&worked(5.0, 0.6, 0.5), BoundaryMode::Martingale),
            Err(EquilibriumError::Model(ModelError::UnorderedProbabilities { .. }))
        ));
    }

    #[test]
    fn asymmetric_game_needs_asym_mode() {
        let params = validate(0.0, 2f64.sqrt(), 2.0).unwrap();
        let game = GameSpec::new(
            params,
            5.0,
            PlayerSpec::new(Payoff::Call { strike: 3.3 }, Payoff::Call { strike: 4.4 }, 0.3),
            PlayerSpec::new(Payoff::Call { strike: 3.0 }, Payoff::Call { strike: 4.0 }, 0.6),
        )
        .unwrap();
        assert!(matches!(
            Equilibrium::new(&game, BoundaryMode::Martingale),
            Err(EquilibriumError::NotSymmetric(_))
        ));
        let eq = Equilibrium::new(&game, BoundaryMode::Asym).unwrap();
        assert_eq!(eq.resolution_level(), eq.vg(Player::One).threshold());
        let path = [5.0, 5.5, 6.1, 6.5, 7.0, 7.4];
        let (g1, g2) = eq.controls(&path, 0.1).unwrap();
        assert_eq!(g1.value(2), 1.0);
        assert!(g2.value(3) < 1.0);
        assert_eq!(g2.value(3), g2.value(2));
        assert_eq!(g2.value(5), 1.0);
    }

    #[test]
    fn level_table_inverts_the_control() {
        let eq = Equilibrium::new(&worked(5.0, 0.5, 0.6), BoundaryMode::Martingale).unwrap();
        let t = eq.level_table(Player::Two);
        let (_, g2) = eq.controls(&[5.0, 5.3], 0.1).unwrap();
        assert!((t.value(5.3) - g2.value(1)).abs() < 1e-6);
        for q in [0.0, 0.2, 0.5, 0.9, 1.0] {
            let l = t.level_at_fraction(5.1, 5.7, q);
            assert!((t.fraction_at_level(5.1, 5.7, l) - q).abs() < 1e-9, "{q}");
        }
        // Γ² is concave in the level, so half its increase comes early
        assert!(t.level_at_fraction(5.1, 5.7, 0.5) < 5.4);
        let t1 = eq.level_table(Player::One);
        assert!(t1.value(5.99) < 0.3);
    }

    #[test]
    fn symmetric_controls_resolve_at_threshold() {
        let eq = Equilibrium::new(&worked(5.0, 0.3, 0.5), BoundaryMode::Martingale).unwrap();
        let path = [5.0, 5.4, 5.2, 5.9, 6.2];
        let (g1, g2) = eq.controls(&path, 0.1).unwrap();
        assert_eq!(g1.value(4), 1.0);
        assert_eq!(g2.value(4), 1.0);
        assert!(g1.value(3) < 1.0);
        assert_eq!(g1.value(0), 0.0);
    }
}
