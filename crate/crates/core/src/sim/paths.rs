//! Exact lognormal sampling of GBM paths, stored or streamed.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use super::rng::{SeedTree, StreamKind};
use super::SimError;
use crate::model::ModelParams;

/// Paths per work unit. Units are reduced in index order, so results do not
/// depend on the number of worker threads.
pub const CHUNK_PATHS: usize = 512;

/// How a streamed path is generated and when it ends.
#[derive(Debug, Clone)]
pub struct PathSpec {
    pub params: ModelParams,
    pub x0: f64,
    /// Grid step of the generated path.
    pub dt: f64,
    /// Stop once the running maximum has reached `stop_level` at a check
    /// index and at least `min_steps` steps were taken.
    pub stop_level: f64,
    pub min_steps: usize,
    /// Stop and truncation are only checked on multiples of this stride,
    /// so coarser subsampled grids see their own first passage.
    pub check_stride: usize,
    pub max_steps: usize,
    /// Truncate once `e^{-rt}·cap(X_t) ≤ tolerance`, where `cap` bounds every
    /// discounted continuation payoff.
    pub tail: Option<TailRule>,
}

#[derive(Debug, Clone)]
pub struct TailRule {
    pub caps: Vec<crate::single::ValueFunction>,
    pub tolerance: f64,
}

impl TailRule {
    fn cap(&self, x: f64) -> f64 {
        self.caps.iter().map(|v| v.value(x)).fold(0.0, f64::max)
    }
}

/// Why a streamed path ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PathEnd {
    Reached,
    Truncated,
    StepCap,
}

/// One path: grid states and the running maximum of the continuous path
/// at each grid time.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PathBuf {
    pub states: Vec<f64>,
    pub maxes: Vec<f64>,
}

impl PathBuf {
    fn clear(&mut self) {
        self.states.clear();
        self.maxes.clear();
    }
}

/// Fills `out` with one path starting at `x0`. The maximum inside each step
/// is drawn from the law of the Brownian bridge between the two log states:
/// `(y₀ + y₁ + √((y₁−y₀)² − 2σ²Δt·ln U))/2`.
pub fn generate_path(spec: &PathSpec, tree: &SeedTree, path: u64, out: &mut PathBuf) -> PathEnd {
    out.clear();
    let mut rng = tree.stream(path, StreamKind::Increments);
    let mut bridge = tree.stream(path, StreamKind::Bridge);
    let p = &spec.params;
    let drift = (p.mu() - 0.5 * p.sigma() * p.sigma()) * spec.dt;
    let vol = p.sigma() * spec.dt.sqrt();
    let bridge_var = 2.0 * vol * vol;
    let step_discount = (-p.r() * spec.dt).exp();
    let stride = spec.check_stride.max(1);
    let tail_stride = stride * 16;
    let mut log_x = spec.x0.ln();
    let mut log_max = log_x;
    let mut discount = 1.0;
    out.states.push(spec.x0);
    out.maxes.push(spec.x0);
    let mut reached = spec.x0 >= spec.stop_level;
    if reached && spec.min_steps == 0 {
        return PathEnd::Reached;
    }
    for k in 1..=spec.max_steps {
        let z: f64 = StandardNormal.sample(&mut rng);
        let prev = log_x;
        log_x += drift + vol * z;
        // 1 − U lies in (0, 1]
        let u: f64 = 1.0 - bridge.random::<f64>();
        let d = log_x - prev;
        let peak = 0.5 * (prev + log_x + (d * d - bridge_var * u.ln()).sqrt());
        let x = log_x.exp();
        out.states.push(x);
        if peak > log_max {
            log_max = peak;
        }
        out.maxes.push(log_max.exp());
        discount *= step_discount;
        if k % stride == 0 {
            reached |= log_max >= spec.stop_level.ln();
            if reached && k >= spec.min_steps {
                return PathEnd::Reached;
            }
            if k % tail_stride == 0 {
                if let Some(tail) = &spec.tail {
                    if discount * tail.cap(x) <= tail.tolerance {
                        return PathEnd::Truncated;
                    }
                }
            }
        }
    }
    PathEnd::StepCap
}

/// Paths seen by a streaming consumer.
pub struct PathSample<'a> {
    pub index: u64,
    pub states: &'a [f64],
    pub maxes: &'a [f64],
    pub end: PathEnd,
    /// `(θ₁-uniform, θ₂-uniform, U₁, U₂)`.
    pub draws: [f64; 4],
}

/// Runs `n` paths in parallel chunks. Each chunk folds its paths into a
/// fresh accumulator; chunk results are merged in chunk order.
pub fn stream_paths<A, I, F, M>(
    spec: &PathSpec,
    n: usize,
    seed: u64,
    init: I,
    per_path: F,
    merge: M,
) -> A
where
    A: Send,
    I: Fn() -> A + Sync,
    F: Fn(&mut A, &PathSample<'_>) + Sync,
    M: Fn(&mut A, A),
{
    let tree = SeedTree::new(seed);
    let chunks = n.div_ceil(CHUNK_PATHS);
    let parts: Vec<A> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut acc = init();
            let mut buf = PathBuf::default();
            let end = ((c + 1) * CHUNK_PATHS).min(n);
            for i in c * CHUNK_PATHS..end {
                let index = i as u64;
                let path_end = generate_path(spec, &tree, index, &mut buf);
                let sample = PathSample {
                    index,
                    states: &buf.states,
                    maxes: &buf.maxes,
                    end: path_end,
                    draws: tree.draws(index),
                };
                per_path(&mut acc, &sample);
            }
            acc
        })
        .collect();
    let mut parts = parts.into_iter();
    let mut total = parts.next().unwrap_or_else(&init);
    for part in parts {
        merge(&mut total, part);
    }
    total
}

/// Stored paths on a common fixed horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSet {
    pub params: ModelParams,
    pub x0: f64,
    pub dt: f64,
    pub horizon: f64,
    pub seed: u64,
    pub states: Vec<Vec<f64>>,
    /// Running maximum of the continuous path at each grid time.
    pub maxes: Vec<Vec<f64>>,
}

impl PathSet {
    pub fn n_paths(&self) -> usize {
        self.states.len()
    }

    pub fn steps(&self) -> usize {
        self.states.first().map_or(0, |s| s.len() - 1)
    }

    /// First grid index by which each path has reached `level`.
    pub fn hitting(&self, level: f64) -> Vec<Option<usize>> {
        self.maxes
            .iter()
            .map(|m| {
                let k = m.partition_point(|&x| x < level);
                (k < m.len()).then_some(k)
            })
            .collect()
    }

    /// Fails when `level` is reached on fewer than 99% of paths and the
    /// discounted tail bound `e^{-rT}·x₀e^{(μ−r)T}` exceeds `tolerance`.
    pub fn check_horizon(&self, level: f64, tolerance: f64) -> Result<(), SimError> {
        let hits = self.hitting(level).iter().filter(|h| h.is_some()).count();
        let fraction = hits as f64 / self.n_paths().max(1) as f64;
        let p = &self.params;
        let t = self.horizon;
        let bound = (-p.r() * t).exp() * self.x0 * ((p.mu() - p.r()) * t).exp();
        if fraction < 0.99 && bound > tolerance {
            return Err(SimError::HorizonTooShort {
                reached: fraction,
                bound,
            });
        }
        Ok(())
    }
}

/// `n` paths of `horizon/dt` exact lognormal steps each. Path `i` equals the
/// prefix of path `i` in any streamed run with the same seed and step.
pub fn simulate_paths(
    params: &ModelParams,
    x0: f64,
    dt: f64,
    horizon: f64,
    n: usize,
    seed: u64,
) -> Result<PathSet, SimError> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(SimError::InvalidStep(dt));
    }
    if n == 0 {
        return Err(SimError::NoPaths);
    }
    let steps = (horizon / dt).round();
    if !(steps >= 1.0) || ((steps * dt - horizon).abs() > 1e-9 * horizon.max(1.0)) {
        return Err(SimError::InvalidHorizon { horizon, dt });
    }
    if !(x0 > 0.0 && x0.is_finite()) {
        return Err(SimError::InvalidState(x0));
    }
    let spec = PathSpec {
        params: *params,
        x0,
        dt,
        stop_level: f64::INFINITY,
        min_steps: 0,
        check_stride: 1,
        max_steps: steps as usize,
        tail: None,
    };
    let tree = SeedTree::new(seed);
    let (states, maxes) = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut buf = PathBuf::default();
            generate_path(&spec, &tree, i as u64, &mut buf);
            (buf.states, buf.maxes)
        })
        .unzip();
    Ok(PathSet {
        params: *params,
        x0,
        dt,
        horizon,
        seed,
        states,
        maxes,
    })
}
