//! Verdicts on the martingale processes and on unilateral deviations, plus
//! estimators that work on stored [`PathSet`]s.

use std::fmt;

use super::evaluate::{Evaluator, Monitoring, PathEval};
use super::experiment::{deviation_payoff, Deviation, LevelResult};
use super::level::{LevelEval, LevelGrid};
use super::paths::PathSet;
use super::rng::SeedTree;
use super::stats::{EstimatorKind, McEstimate, Moments};
use super::SimError;
use crate::equilibrium::Equilibrium;
use crate::model::Player;
use crate::strategy::ControlPath;

/// Statistical margin, in standard errors.
pub const MARGIN: f64 = 3.0;

/// Relative slack for deviations whose payoff is deterministic, such as
/// stopping at once, where the standard error is zero.
pub const ROUNDING: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckKind {
    /// Mean of `M_{t∧τ}` equals `M₀`.
    Stopped,
    /// Mean of `M_t` is non-increasing in `t`.
    Free,
}

impl fmt::Display for CheckKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CheckKind::Stopped => "stopped",
            CheckKind::Free => "free",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointRow {
    pub t: f64,
    pub kind: CheckKind,
    pub mean: f64,
    pub std_error: f64,
    /// Value the mean is compared against.
    pub reference: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeviationRow {
    pub id: String,
    pub estimate: f64,
    pub std_error: f64,
    /// Equilibrium value of the deviating player.
    pub value: f64,
    /// `estimate − value`.
    pub margin: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DiagnosticsReport {
    pub checkpoints: Vec<CheckpointRow>,
    pub deviation_table: Vec<DeviationRow>,
    pub verdict: bool,
}

impl DiagnosticsReport {
    fn finish(mut self) -> Self {
        self.verdict = self.checkpoints.iter().all(|r| r.pass)
            && self.deviation_table.iter().all(|r| r.pass);
        self
    }

    pub fn merge(mut self, other: DiagnosticsReport) -> Self {
        self.checkpoints.extend(other.checkpoints);
        self.deviation_table.extend(other.deviation_table);
        self.finish()
    }
}

/// `M¹` or `M²` sampled along one path.
pub fn build_m_path(
    which: Player,
    eq: &Equilibrium,
    gamma1: &ControlPath,
    gamma2: &ControlPath,
    path: &[f64],
    maxes: Option<&[f64]>,
    dt: f64,
) -> Result<Vec<f64>, SimError> {
    let ev = PathEval::with_controls(eq, path, maxes, dt, gamma1.clone(), gamma2.clone())?;
    Ok((0..path.len()).map(|k| ev.m(which, k, 1.0, false)).collect())
}

/// Checks `E[M_{t∧τ}] = M₀` and `E[M_t] ≤ M₀` within [`MARGIN`] standard
/// errors at each checkpoint index. Paths shorter than a checkpoint hold
/// their last value.
pub fn martingale_diagnostic(
    samples: &[Vec<f64>],
    stop_index: &[Option<usize>],
    checkpoints: &[usize],
    dt: f64,
) -> DiagnosticsReport {
    let m0 = samples.first().and_then(|s| s.first()).copied().unwrap_or(f64::NAN);
    let at = |s: &Vec<f64>, k: usize| s[k.min(s.len() - 1)];
    let mut report = DiagnosticsReport::default();
    for &k in checkpoints {
        let mut stopped = Moments::new(1);
        let mut free = Moments::new(1);
        for (s, tau) in samples.iter().zip(stop_index) {
            stopped.push(&[at(s, tau.map_or(k, |t| t.min(k)))]);
            free.push(&[at(s, k)]);
        }
        let t = k as f64 * dt;
        let st = stopped.estimate(0, EstimatorKind::Plain);
        let fr = free.estimate(0, EstimatorKind::Plain);
        report.checkpoints.push(CheckpointRow {
            t,
            kind: CheckKind::Stopped,
            mean: st.mean,
            std_error: st.std_error,
            reference: m0,
            pass: (st.mean - m0).abs() <= MARGIN * st.std_error,
        });
        report.checkpoints.push(CheckpointRow {
            t,
            kind: CheckKind::Free,
            mean: fr.mean,
            std_error: fr.std_error,
            reference: m0,
            pass: fr.mean <= m0 + MARGIN * fr.std_error,
        });
    }
    report.finish()
}

/// Martingale verdict for `M^i` from a streamed run: stopped means equal
/// `M₀`, unstopped means start below `M₀` and never increase between
/// checkpoints, each within [`MARGIN`] (combined) standard errors.
pub fn martingale_report(level: &LevelResult, player: Player) -> DiagnosticsReport {
    let i = player.index() as usize - 1;
    let m0 = level.m0[i];
    let mut report = DiagnosticsReport::default();
    for (t, e) in &level.m_stopped[i] {
        report.checkpoints.push(CheckpointRow {
            t: *t,
            kind: CheckKind::Stopped,
            mean: e.mean,
            std_error: e.std_error,
            reference: m0,
            pass: e.within(m0, MARGIN),
        });
    }
    let mut previous: Option<McEstimate> = None;
    for (t, e) in &level.m_free[i] {
        let (reference, tol) = match previous {
            Some(p) => (p.mean, MARGIN * e.combined_se(&p)),
            None => (m0, MARGIN * e.std_error),
        };
        report.checkpoints.push(CheckpointRow {
            t: *t,
            kind: CheckKind::Free,
            mean: e.mean,
            std_error: e.std_error,
            reference,
            pass: e.mean <= reference + tol,
        });
        previous = Some(*e);
    }
    report.finish()
}

/// Flags deviations whose estimate exceeds the equilibrium value by more
/// than [`MARGIN`] standard errors.
pub fn deviation_report(level: &LevelResult, player: Player, value: f64) -> DiagnosticsReport {
    let i = player.index() as usize - 1;
    let mut report = DiagnosticsReport::default();
    for (dev, e) in &level.deviations[i] {
        report.deviation_table.push(deviation_row(&format!("p{}:{dev}", player.index()), e, value));
    }
    report.finish()
}

fn deviation_row(id: &str, e: &McEstimate, value: f64) -> DeviationRow {
    DeviationRow {
        id: id.to_string(),
        estimate: e.mean,
        std_error: e.std_error,
        value,
        margin: e.mean - value,
        pass: e.mean - value <= MARGIN * e.std_error + ROUNDING * value.abs(),
    }
}

/// Runs `f` on every stored path with the evaluator for `monitoring`.
fn for_each_path(
    eq: &Equilibrium,
    paths: &PathSet,
    monitoring: Monitoring,
    mut f: impl FnMut(usize, &dyn Evaluator),
) -> Result<(), SimError> {
    match monitoring {
        Monitoring::Bridge => {
            let grid = LevelGrid::new(eq)?;
            for i in 0..paths.n_paths() {
                f(i, &LevelEval::new(&grid, &paths.states[i], &paths.maxes[i], paths.dt)?);
            }
        }
        Monitoring::Grid => {
            for i in 0..paths.n_paths() {
                f(i, &PathEval::new(eq, &paths.states[i], None, paths.dt)?);
            }
        }
    }
    Ok(())
}

fn check_paths(eq: &Equilibrium, paths: &PathSet) -> Result<(), SimError> {
    if paths.n_paths() < 2 {
        return Err(SimError::NoPaths);
    }
    let game = eq.game();
    if *game.params() != paths.params || game.x0() != paths.x0 {
        return Err(SimError::IncompatibleGames);
    }
    Ok(())
}

/// `J_i` of the equilibrium pair over stored paths.
pub fn estimate_j(
    player: Player,
    mode: EstimatorKind,
    eq: &Equilibrium,
    paths: &PathSet,
    monitoring: Monitoring,
    seed: u64,
) -> Result<McEstimate, SimError> {
    check_paths(eq, paths)?;
    let tree = SeedTree::new(seed);
    let game = eq.game();
    let mut moments = Moments::new(1);
    for_each_path(eq, paths, monitoring, |i, ev| {
        let value = match mode {
            EstimatorKind::Formula => ev.formula(player),
            EstimatorKind::Quadrature => ev.quadrature(player),
            EstimatorKind::Indicator | EstimatorKind::Plain => {
                let d = tree.draws(i as u64);
                let theta = [d[0] < game.p1(), d[1] < game.p2()];
                ev.indicator(player, theta, [d[2], d[3]])
            }
        };
        moments.push(&[value]);
    })?;
    Ok(moments.estimate(0, mode))
}

/// Deviation test on stored paths: each deviation of `player` is played
/// against the opponent's equilibrium control.
pub fn deviation_test(
    player: Player,
    eq: &Equilibrium,
    family: &[Deviation],
    paths: &PathSet,
) -> Result<DiagnosticsReport, SimError> {
    check_paths(eq, paths)?;
    let mut moments = Moments::new(family.len());
    let mut row = vec![0.0; family.len()];
    for_each_path(eq, paths, Monitoring::Bridge, |_, ev| {
        for (j, dev) in family.iter().enumerate() {
            row[j] = deviation_payoff(*dev, player, ev);
        }
        moments.push(&row);
    })?;
    let value = eq.value(player);
    let mut report = DiagnosticsReport::default();
    for (j, dev) in family.iter().enumerate() {
        let e = moments.estimate(j, EstimatorKind::Formula);
        report
            .deviation_table
            .push(deviation_row(&format!("p{}:{dev}", player.index()), &e, value));
    }
    Ok(report.finish())
}

/// Player 1's payoff from the pure stop `γ₁(u)` on every stored path.
pub fn device_stop_estimate(eq: &Equilibrium, u: f64, paths: &PathSet) -> Result<McEstimate, SimError> {
    check_paths(eq, paths)?;
    let mut moments = Moments::new(1);
    for_each_path(eq, paths, Monitoring::Bridge, |_, ev| {
        moments.push(&[ev.stop_payoff(Player::One, ev.device_stop(Player::One, u))]);
    })?;
    Ok(moments.estimate(0, EstimatorKind::Formula))
}
