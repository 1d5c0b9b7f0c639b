use std::fs;
use std::path::Path;

use anyhow::Context;
use ghostgame::sim::{
    default_deviations, deviation_report, martingale_report, run_experiment, simulate_paths, DiagnosticsReport,
    ExperimentConfig, LevelResult, McEstimate, Monitoring, MARGIN,
};
use ghostgame::strategy::belief;
use ghostgame::{characteristic_roots, validate, Equilibrium, Player};

use crate::config::RunConfig;

/// Fractions of the horizon at which `M¹`, `M²` are recorded.
const CHECKPOINT_FRACTIONS: [f64; 5] = [0.05, 0.125, 0.25, 0.5, 1.0];

fn equilibrium(cfg: &RunConfig, p1: f64) -> anyhow::Result<Equilibrium> {
    let game = cfg.game_with_p1(p1)?;
    Ok(Equilibrium::new(&game, cfg.mode)?)
}

/// Opens `name` in the output directory, next to a copy of the effective
/// configuration.
fn writer(cfg: &RunConfig, name: &str) -> anyhow::Result<csv::Writer<fs::File>> {
    fs::create_dir_all(&cfg.out).with_context(|| format!("creating {}", cfg.out.display()))?;
    fs::write(cfg.out.join("run.cfg"), cfg.serialize())?;
    let path = cfg.out.join(name);
    csv::Writer::from_path(&path).with_context(|| format!("writing {}", path.display()))
}

fn done(path: &Path, w: csv::Writer<fs::File>, quiet: bool) -> anyhow::Result<()> {
    w.into_inner().map_err(|e| e.into_error())?.sync_all()?;
    if !quiet {
        println!("wrote {}", path.display());
    }
    Ok(())
}

/// State grid: the configured bounds, or `[a/2, 1.2·b_g]` from the boundary.
fn x_grid(cfg: &RunConfig, eq: &Equilibrium) -> Vec<f64> {
    let b = eq.boundary();
    let lo = cfg.x_min.unwrap_or(0.5 * b.touch_a());
    let hi = cfg.x_max.unwrap_or(1.2 * b.upper_bg());
    let n = cfg.x_points;
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

pub fn roots(cfg: &RunConfig, quiet: bool) -> anyhow::Result<()> {
    let params = validate(cfg.mu, cfg.sigma, cfg.r)?;
    let roots = characteristic_roots(&params);
    if !quiet {
        println!("gamma = {}", roots.gamma);
        println!("eta = {}", roots.eta);
    }
    Ok(())
}

pub fn value(cfg: &RunConfig, quiet: bool) -> anyhow::Result<()> {
    cfg.check_sim()?;
    let p1s = if cfg.p1_values.is_empty() { vec![cfg.p1] } else { cfg.p1_values.clone() };
    let mut w = writer(cfg, "value.csv")?;
    w.write_record(["p1", "x", "u1", "u2"])?;
    for &p1 in &p1s {
        let eq = equilibrium(cfg, p1)?;
        for x in x_grid(cfg, &eq) {
            let v = eq.values();
            w.write_record([p1.to_string(), x.to_string(), v.u1(x, p1).to_string(), v.u2(x, p1).to_string()])?;
        }
        if !quiet {
            println!("p1 = {p1}: u1(x0) = {:.6}, u2(x0) = {:.6}", eq.u1(), eq.u2());
        }
    }
    done(&cfg.out.join("value.csv"), w, quiet)
}

pub fn boundary(cfg: &RunConfig, quiet: bool) -> anyhow::Result<()> {
    cfg.check_sim()?;
    let eq = equilibrium(cfg, cfg.p1)?;
    let b = eq.boundary();
    let mut w = writer(cfg, "boundary.csv")?;
    w.write_record(["x", "b"])?;
    for x in x_grid(cfg, &eq) {
        w.write_record([x.to_string(), b.value(x).to_string()])?;
    }
    if !quiet {
        println!("mode = {}", cfg.mode);
        println!("a = {}", b.touch_a());
        println!("b_g = {}", b.upper_bg());
    }
    done(&cfg.out.join("boundary.csv"), w, quiet)
}

fn experiment(cfg: &RunConfig, seed: u64, paths: usize) -> ExperimentConfig {
    let mut exp = ExperimentConfig::new(cfg.dt, paths, seed);
    exp.monitoring = cfg.monitoring;
    exp
}

fn config_id(cfg: &RunConfig) -> String {
    format!("{}:x0={}:p1={}:p2={}", cfg.mode, cfg.x0, cfg.p1, cfg.p2)
}

pub fn simulate(cfg: &RunConfig, quiet: bool) -> anyhow::Result<()> {
    cfg.check_sim()?;
    let eq = equilibrium(cfg, cfg.p1)?;
    let game = eq.game();
    let set = simulate_paths(game.params(), cfg.x0, cfg.dt, cfg.horizon, 1, cfg.seed)?;
    let (states, maxes) = (&set.states[0], &set.maxes[0]);
    let levels = match cfg.monitoring {
        Monitoring::Bridge => maxes,
        Monitoring::Grid => states,
    };
    let (g1, g2) = eq.controls(levels, cfg.dt)?;
    let mut w = writer(cfg, "path.csv")?;
    w.write_record(["t", "x", "running_max", "pi1", "gamma1", "gamma2"])?;
    for k in 0..states.len() {
        w.write_record([
            (k as f64 * cfg.dt).to_string(),
            states[k].to_string(),
            levels[k].to_string(),
            belief(cfg.p1, g2.value(k)).to_string(),
            g1.value(k).to_string(),
            g2.value(k).to_string(),
        ])?;
    }
    done(&cfg.out.join("path.csv"), w, quiet)?;

    let mut exp = experiment(cfg, cfg.seed, cfg.paths);
    exp.probes.quadrature = true;
    let res = run_experiment(std::slice::from_ref(&eq), &exp)?;
    let s = &res.scenarios[0];
    let level = &s.levels[0];
    let mut w = writer(cfg, "estimates.csv")?;
    w.write_record(["config", "player", "mode", "mean", "se", "n", "u"])?;
    let id = config_id(cfg);
    for (i, player) in [Player::One, Player::Two].into_iter().enumerate() {
        let v = level.j[i];
        let rows = [Some(v.formula), Some(v.indicator), v.quadrature];
        for e in rows.into_iter().flatten() {
            w.write_record([
                id.clone(),
                player.index().to_string(),
                e.estimator.to_string(),
                e.mean.to_string(),
                e.std_error.to_string(),
                e.n.to_string(),
                s.u[i].to_string(),
            ])?;
        }
        if !quiet {
            println!(
                "J{} = {:.6} ± {:.6} (formula), {:.6} ± {:.6} (indicator); u{} = {:.6}",
                player.index(),
                v.formula.mean,
                v.formula.std_error,
                v.indicator.mean,
                v.indicator.std_error,
                player.index(),
                s.u[i]
            );
        }
    }
    done(&cfg.out.join("estimates.csv"), w, quiet)
}

struct Verdict {
    report: DiagnosticsReport,
    indifference: Vec<(f64, McEstimate, bool)>,
    pass: bool,
}

fn verdict(eq: &Equilibrium, level: &LevelResult) -> Verdict {
    let mut report = martingale_report(level, Player::One).merge(martingale_report(level, Player::Two));
    for player in [Player::One, Player::Two] {
        report = report.merge(deviation_report(level, player, eq.value(player)));
    }
    // γ₁(u) must all pay the same
    let ind = &level.indifference;
    let indifference: Vec<_> = ind
        .iter()
        .map(|(u, e)| {
            let ok = ind.iter().all(|(_, f)| (e.mean - f.mean).abs() <= MARGIN * e.combined_se(f));
            (*u, *e, ok)
        })
        .collect();
    let pass = report.verdict && indifference.iter().all(|r| r.2);
    Verdict {
        report,
        indifference,
        pass,
    }
}

pub fn verify(cfg: &RunConfig, perturb_u1: Option<f64>, quiet: bool) -> anyhow::Result<bool> {
    cfg.check_sim()?;
    let eq = equilibrium(cfg, cfg.p1)?;
    let b = eq.boundary();
    let run = |seed: u64, paths: usize| -> anyhow::Result<Verdict> {
        let mut exp = experiment(cfg, seed, paths);
        exp.probes.checkpoints = CHECKPOINT_FRACTIONS.iter().map(|f| f * cfg.horizon).collect();
        exp.probes.devices = (1..=9).map(|i| i as f64 / 10.0).collect();
        exp.probes.deviations = default_deviations(b.touch_a(), b.upper_bg());
        exp.probes.u1_scale = perturb_u1;
        let res = run_experiment(std::slice::from_ref(&eq), &exp)?;
        Ok(verdict(&eq, &res.scenarios[0].levels[0]))
    };
    let mut v = run(cfg.seed, cfg.paths)?;
    let mut paths = cfg.paths;
    if !v.pass {
        // one re-run with four times the paths before failing
        paths *= 4;
        if !quiet {
            println!("verdict failed with {} paths; re-running with {paths}", cfg.paths);
        }
        v = run(cfg.seed.wrapping_add(1), paths)?;
    }

    let mut w = writer(cfg, "diagnostics.csv")?;
    w.write_record(["process", "t", "kind", "mean", "se", "reference", "pass"])?;
    let per_player = v.report.checkpoints.len() / 2;
    for (i, row) in v.report.checkpoints.iter().enumerate() {
        w.write_record([
            format!("M{}", 1 + i / per_player.max(1)),
            row.t.to_string(),
            row.kind.to_string(),
            row.mean.to_string(),
            row.std_error.to_string(),
            row.reference.to_string(),
            row.pass.to_string(),
        ])?;
    }
    done(&cfg.out.join("diagnostics.csv"), w, quiet)?;
    let mut w = writer(cfg, "deviations.csv")?;
    w.write_record(["id", "estimate", "se", "value", "margin", "pass"])?;
    for row in &v.report.deviation_table {
        w.write_record([
            row.id.clone(),
            row.estimate.to_string(),
            row.std_error.to_string(),
            row.value.to_string(),
            row.margin.to_string(),
            row.pass.to_string(),
        ])?;
    }
    done(&cfg.out.join("deviations.csv"), w, quiet)?;
    let mut w = writer(cfg, "indifference.csv")?;
    w.write_record(["u", "estimate", "se", "u1", "pass"])?;
    for (u, e, ok) in &v.indifference {
        w.write_record([u.to_string(), e.mean.to_string(), e.std_error.to_string(), eq.u1().to_string(), ok.to_string()])?;
    }
    done(&cfg.out.join("indifference.csv"), w, quiet)?;

    if !quiet {
        let failed = v.report.checkpoints.iter().filter(|r| !r.pass).count()
            + v.report.deviation_table.iter().filter(|r| !r.pass).count()
            + v.indifference.iter().filter(|r| !r.2).count();
        println!(
            "verdict: {} ({failed} failed checks, {paths} paths)",
            if v.pass { "pass" } else { "FAIL" }
        );
    }
    Ok(v.pass)
}
