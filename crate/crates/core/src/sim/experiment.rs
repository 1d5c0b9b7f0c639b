//! Streaming Monte Carlo runs that evaluate several games on shared paths.
//!
//! Every game in a run must share the model parameters and the initial
//! state; they typically differ in `p₁`. A run may also evaluate each path
//! on several grids `dt/m`, all subsampled from one finest path so the
//! estimates are coupled.

use std::fmt;

use super::evaluate::{Evaluator, Monitoring, PathEval, StopPoint};
use super::level::{LevelEval, LevelGrid};
use super::paths::{stream_paths, PathEnd, PathSpec, TailRule};
use super::stats::{EstimatorKind, McEstimate, Moments};
use super::SimError;
use crate::equilibrium::Equilibrium;
use crate::model::Player;

/// Hard cap on the number of grid steps of one path.
pub const MAX_STEPS: usize = 1_000_000;

/// A unilateral deviation from the equilibrium control.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Deviation {
    Immediate,
    Never,
    /// First time `X ≥ c`.
    Threshold(f64),
    /// `min(1, s·Γ*)` for the deviator's own equilibrium control.
    Scaled(f64),
}

impl fmt::Display for Deviation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Deviation::Immediate => write!(f, "immediate"),
            Deviation::Never => write!(f, "never"),
            Deviation::Threshold(c) => write!(f, "threshold:{c}"),
            Deviation::Scaled(s) => write!(f, "scaled:{s}"),
        }
    }
}

/// Twelve thresholds evenly inside `(a, 1.2·b_g)`, then immediate and never.
pub fn default_deviations(a: f64, b_g: f64) -> Vec<Deviation> {
    let top = 1.2 * b_g;
    let mut out: Vec<Deviation> = (1..=12)
        .map(|i| Deviation::Threshold(a + (top - a) * i as f64 / 13.0))
        .collect();
    out.push(Deviation::Immediate);
    out.push(Deviation::Never);
    out
}

/// What to measure on each path besides the two equilibrium values.
#[derive(Debug, Clone, Default)]
pub struct Probes {
    /// Device values `u` at which Player 1's pure stop `γ₁(u)` is evaluated.
    pub devices: Vec<f64>,
    pub deviations: Vec<Deviation>,
    /// Times at which `M¹` and `M²` are recorded.
    pub checkpoints: Vec<f64>,
    /// Multiplier applied to `u₁` inside `M¹` (1 for the real process).
    pub u1_scale: Option<f64>,
    pub quadrature: bool,
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    /// Coarsest grid step.
    pub dt: f64,
    pub n_paths: usize,
    pub seed: u64,
    /// Grids `dt/m` to evaluate; each must divide the largest.
    pub refinements: Vec<usize>,
    /// Per-path truncation once the discounted payoff bound falls below
    /// this fraction of its value at `x₀`.
    pub tail_tolerance: f64,
    pub monitoring: Monitoring,
    pub probes: Probes,
}

impl ExperimentConfig {
    pub fn new(dt: f64, n_paths: usize, seed: u64) -> Self {
        ExperimentConfig {
            dt,
            n_paths,
            seed,
            refinements: vec![1],
            tail_tolerance: 1e-6,
            monitoring: Monitoring::default(),
            probes: Probes::default(),
        }
    }
}

/// Value estimates for one player.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValueEstimates {
    pub formula: McEstimate,
    pub indicator: McEstimate,
    pub quadrature: Option<McEstimate>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LevelResult {
    pub dt: f64,
    pub j: [ValueEstimates; 2],
    pub indifference: Vec<(f64, McEstimate)>,
    pub deviations: [Vec<(Deviation, McEstimate)>; 2],
    /// `M^i` stopped at `τ_{g_i}`, per checkpoint.
    pub m_stopped: [Vec<(f64, McEstimate)>; 2],
    pub m_free: [Vec<(f64, McEstimate)>; 2],
    /// `M^i_0`, which is deterministic.
    pub m0: [f64; 2],
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioResult {
    pub x0: f64,
    pub p1: f64,
    pub p2: f64,
    /// Closed-form `u₁(x₀,p₁)`, `u₂(x₀,p₁)`.
    pub u: [f64; 2],
    pub levels: Vec<LevelResult>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub n_paths: usize,
    pub reached: u64,
    pub truncated: u64,
    pub capped: u64,
    pub scenarios: Vec<ScenarioResult>,
}

struct Layout {
    devices: usize,
    deviations: usize,
    checkpoints: usize,
    levels: usize,
}

impl Layout {
    fn block(&self) -> usize {
        6 + self.devices + 2 * self.deviations + 4 * self.checkpoints
    }

    fn base(&self, scenario: usize, level: usize) -> usize {
        (scenario * self.levels + level) * self.block()
    }

    fn devices_at(&self) -> usize {
        6
    }

    fn deviations_at(&self, player: Player) -> usize {
        6 + self.devices + (player.index() as usize - 1) * self.deviations
    }

    fn checkpoints_at(&self, player: Player, stopped: bool) -> usize {
        let i = (player.index() as usize - 1) * 2 + usize::from(!stopped);
        6 + self.devices + 2 * self.deviations + i * self.checkpoints
    }
}

struct Acc {
    moments: Moments,
    ends: [u64; 3],
    error: Option<SimError>,
}

/// Payoff of `player` from a deviation against the opponent's equilibrium
/// control.
pub fn deviation_payoff<E: Evaluator + ?Sized>(dev: Deviation, player: Player, ev: &E) -> f64 {
    let at: Option<StopPoint> = match dev {
        Deviation::Immediate => Some(ev.immediate()),
        Deviation::Never => None,
        Deviation::Threshold(c) => ev.first_passage_stop(c),
        Deviation::Scaled(s) => return ev.scaled_formula(player, s),
    };
    ev.stop_payoff(player, at)
}

fn evaluate_level<E: Evaluator>(ev: &E, draws: [f64; 4], probes: &Probes, layout: &Layout, out: &mut [f64]) {
    let eq = ev.equilibrium();
    let dt = ev.dt();
    let game = eq.game();
    let theta = [draws[0] < game.p1(), draws[1] < game.p2()];
    let devices = [draws[2], draws[3]];
    for (i, player) in [Player::One, Player::Two].into_iter().enumerate() {
        out[3 * i] = ev.formula(player);
        out[3 * i + 1] = ev.indicator(player, theta, devices);
        out[3 * i + 2] = if probes.quadrature {
            ev.quadrature(player)
        } else {
            0.0
        };
    }
    let at = layout.devices_at();
    for (j, &u) in probes.devices.iter().enumerate() {
        out[at + j] = ev.stop_payoff(Player::One, ev.device_stop(Player::One, u));
    }
    for player in [Player::One, Player::Two] {
        let at = layout.deviations_at(player);
        for (j, &dev) in probes.deviations.iter().enumerate() {
            out[at + j] = deviation_payoff(dev, player, ev);
        }
        let tau = ev.first_passage(eq.vg(player).threshold());
        let scale = probes.u1_scale.unwrap_or(1.0);
        let stopped = layout.checkpoints_at(player, true);
        let free = layout.checkpoints_at(player, false);
        for (j, &t) in probes.checkpoints.iter().enumerate() {
            let k = (t / dt).round() as usize;
            let ks = tau.map_or(k, |tau| tau.min(k));
            out[stopped + j] = ev.m(player, ks, scale, Some(ks) == tau);
            out[free + j] = ev.m(player, k, scale, false);
        }
    }
}

/// Runs all `games` on one set of paths.
pub fn run_experiment(
    games: &[Equilibrium],
    cfg: &ExperimentConfig,
) -> Result<ExperimentResult, SimError> {
    let first = games.first().ok_or(SimError::NoPaths)?;
    let params = *first.game().params();
    let x0 = first.game().x0();
    if games
        .iter()
        .any(|g| *g.game().params() != params || g.game().x0() != x0)
    {
        return Err(SimError::IncompatibleGames);
    }
    if cfg.n_paths < 2 {
        return Err(SimError::NoPaths);
    }
    if !(cfg.dt > 0.0 && cfg.dt.is_finite()) {
        return Err(SimError::InvalidStep(cfg.dt));
    }
    let finest = *cfg.refinements.iter().max().ok_or(SimError::NoPaths)?;
    if cfg.refinements.iter().any(|&m| m == 0 || finest % m != 0) {
        return Err(SimError::InvalidRefinement(cfg.refinements.clone()));
    }
    let probes = &cfg.probes;
    let layout = Layout {
        devices: probes.devices.len(),
        deviations: probes.deviations.len(),
        checkpoints: probes.checkpoints.len(),
        levels: cfg.refinements.len(),
    };
    let dim = layout.block() * games.len() * layout.levels;
    let grids = match cfg.monitoring {
        Monitoring::Bridge => games.iter().map(LevelGrid::new).collect::<Result<Vec<_>, _>>()?,
        Monitoring::Grid => Vec::new(),
    };

    // paths run until every control and deviation is resolved and the last
    // checkpoint has passed
    let mut stop_level = games.iter().map(|g| g.resolution_level()).fold(0.0, f64::max);
    for dev in &probes.deviations {
        if let Deviation::Threshold(c) = dev {
            stop_level = stop_level.max(*c);
        }
    }
    let min_steps = probes
        .checkpoints
        .iter()
        .copied()
        .reduce(f64::max)
        .map_or(0, |last| (last / cfg.dt).ceil() as usize);
    let caps: Vec<_> = [Player::One, Player::Two]
        .iter()
        .map(|&p| *first.vg(p))
        .collect();
    let scale = games.iter().map(|g| g.value_cap(x0)).fold(0.0, f64::max);
    let spec = PathSpec {
        params,
        x0,
        dt: cfg.dt / finest as f64,
        stop_level,
        check_stride: finest,
        min_steps: min_steps * finest,
        max_steps: MAX_STEPS * finest,
        tail: Some(TailRule {
            caps: games
                .iter()
                .flat_map(|g| [*g.vg(Player::One), *g.vg(Player::Two)])
                .chain(caps)
                .collect(),
            tolerance: cfg.tail_tolerance * scale,
        }),
    };

    let acc = stream_paths(
        &spec,
        cfg.n_paths,
        cfg.seed,
        || Acc {
            moments: Moments::new(dim),
            ends: [0; 3],
            error: None,
        },
        |acc, path| {
            if acc.error.is_some() {
                return;
            }
            acc.ends[match path.end {
                PathEnd::Reached => 0,
                PathEnd::Truncated => 1,
                PathEnd::StepCap => 2,
            }] += 1;
            let mut sample = vec![0.0; dim];
            let (mut coarse, mut coarse_max) = (Vec::new(), Vec::new());
            for (l, &m) in cfg.refinements.iter().enumerate() {
                let stride = finest / m;
                let (states, maxes): (&[f64], &[f64]) = if stride == 1 {
                    (path.states, path.maxes)
                } else {
                    coarse.clear();
                    coarse.extend(path.states.iter().step_by(stride));
                    coarse_max.clear();
                    coarse_max.extend(path.maxes.iter().step_by(stride));
                    (&coarse, &coarse_max)
                };
                let dt = cfg.dt / m as f64;
                for (s, eq) in games.iter().enumerate() {
                    let at = layout.base(s, l);
                    let out = &mut sample[at..at + layout.block()];
                    let done = match cfg.monitoring {
                        Monitoring::Bridge => LevelEval::new(&grids[s], states, maxes, dt)
                            .map(|ev| evaluate_level(&ev, path.draws, probes, &layout, out)),
                        Monitoring::Grid => PathEval::new(eq, states, None, dt)
                            .map(|ev| evaluate_level(&ev, path.draws, probes, &layout, out)),
                    };
                    if let Err(e) = done {
                        acc.error = Some(e);
                        return;
                    }
                }
            }
            acc.moments.push(&sample);
        },
        |a, b| {
            if a.error.is_none() {
                a.error = b.error;
            }
            a.moments.merge(&b.moments);
            for i in 0..3 {
                a.ends[i] += b.ends[i];
            }
        },
    );
    if let Some(e) = acc.error {
        return Err(e);
    }
    let capped_fraction = acc.ends[2] as f64 / cfg.n_paths as f64;
    if capped_fraction > 0.01 {
        return Err(SimError::HorizonTooShort {
            reached: 1.0 - capped_fraction,
            bound: f64::NAN,
        });
    }

    let m = &acc.moments;
    let est = |i: usize, kind| m.estimate(i, kind);
    let plain = EstimatorKind::Plain;
    let scenarios = games
        .iter()
        .enumerate()
        .map(|(s, eq)| {
            let levels = cfg
                .refinements
                .iter()
                .enumerate()
                .map(|(l, &r)| {
                    let base = layout.base(s, l);
                    let values = |i: usize| ValueEstimates {
                        formula: est(base + 3 * i, EstimatorKind::Formula),
                        indicator: est(base + 3 * i + 1, EstimatorKind::Indicator),
                        quadrature: probes
                            .quadrature
                            .then(|| est(base + 3 * i + 2, EstimatorKind::Quadrature)),
                    };
                    let per_player = |f: &dyn Fn(Player) -> usize| -> [Vec<(f64, McEstimate)>; 2] {
                        [Player::One, Player::Two].map(|p| {
                            let at = base + f(p);
                            probes
                                .checkpoints
                                .iter()
                                .enumerate()
                                .map(|(j, &t)| (t, est(at + j, plain)))
                                .collect()
                        })
                    };
                    let x = [x0];
                    let dt = cfg.dt / r as f64;
                    let m0 = PathEval::new(eq, &x, None, dt)
                        .map(|ev| {
                            [ev.m1(0, probes.u1_scale.unwrap_or(1.0), false), ev.m2(0, false)]
                        })
                        .unwrap_or([f64::NAN; 2]);
                    LevelResult {
                        dt,
                        j: [values(0), values(1)],
                        indifference: probes
                            .devices
                            .iter()
                            .enumerate()
                            .map(|(j, &u)| (u, est(base + layout.devices_at() + j, plain)))
                            .collect(),
                        deviations: [Player::One, Player::Two].map(|p| {
                            let at = base + layout.deviations_at(p);
                            probes
                                .deviations
                                .iter()
                                .enumerate()
                                .map(|(j, &d)| (d, est(at + j, plain)))
                                .collect()
                        }),
                        m_stopped: per_player(&|p| layout.checkpoints_at(p, true)),
                        m_free: per_player(&|p| layout.checkpoints_at(p, false)),
                        m0,
                    }
                })
                .collect();
            ScenarioResult {
                x0,
                p1: eq.game().p1(),
                p2: eq.game().p2(),
                u: [eq.u1(), eq.u2()],
                levels,
            }
        })
        .collect();
    Ok(ExperimentResult {
        n_paths: cfg.n_paths,
        reached: acc.ends[0],
        truncated: acc.ends[1],
        capped: acc.ends[2],
        scenarios,
    })
}
