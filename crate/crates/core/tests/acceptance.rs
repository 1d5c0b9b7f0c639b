//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Monte Carlo checks that fail are re-run once with four times the
//! paths and a fresh seed before they count as failures.
//!
//! `GHOSTGAME_ACCEPTANCE_PATHS` overrides the path count of the value runs
//! (default 200000) for quick local iterations.

use std::process::ExitCode;
use std::time::Instant;

use ghostgame::sim::{
    default_deviations, deviation_report, martingale_report, run_experiment, simulate_paths, CheckKind, DeviationRow,
    ExperimentConfig, ExperimentResult, LevelResult, McEstimate, SimError,
};
use ghostgame::{
    call_value, characteristic_roots, martingale_boundary, ode_boundary, ode_residual, validate, zero_value,
    BoundaryMode, Equilibrium, GameSpec, ModelParams, Payoff, Player, PlayerSpec,
};

const DT: f64 = 1e-3;
const P2: f64 = 0.6;
const P1_GRID: [f64; 3] = [0.1, 0.3, 0.5];
const SEED: u64 = 20_240_601;

type Check = Result<(bool, String), String>;

struct Family {
    name: &'static str,
    params: ModelParams,
    strike: f64,
    consolation: f64,
    x0: [f64; 3],
}

fn worked_params() -> ModelParams {
    validate(0.0, 2f64.sqrt(), 2.0).unwrap()
}

fn families() -> [Family; 2] {
    [
        Family {
            name: "worked",
            params: worked_params(),
            strike: 3.0,
            consolation: 4.0,
            x0: [4.5, 5.0, 5.5],
        },
        Family {
            name: "drift",
            params: validate(0.08, 0.01, 0.1).unwrap(),
            strike: 3.0,
            consolation: 4.0,
            x0: [10.5, 12.0, 13.5],
        },
    ]
}

fn symmetric(params: ModelParams, x0: f64, k: f64, l: f64, p1: f64, p2: f64, mode: BoundaryMode) -> Equilibrium {
    let game = GameSpec::symmetric(params, x0, Payoff::Call { strike: k }, Payoff::Call { strike: l }, p1, p2)
        .expect("valid game");
    Equilibrium::new(&game, mode).expect("equilibrium")
}

fn asym_game() -> GameSpec {
    GameSpec::new(
        worked_params(),
        5.0,
        PlayerSpec::new(Payoff::Call { strike: 3.3 }, Payoff::Call { strike: 4.4 }, 0.3),
        PlayerSpec::new(Payoff::Call { strike: 3.0 }, Payoff::Call { strike: 4.0 }, P2),
    )
    .expect("valid game")
}

fn ode_game(x0: f64) -> GameSpec {
    GameSpec::symmetric(worked_params(), x0, Payoff::Call { strike: 1.0 }, Payoff::Zero, 0.2, 0.5)
        .expect("valid game")
}

fn value_paths() -> usize {
    std::env::var("GHOSTGAME_ACCEPTANCE_PATHS")
        .ok()
        .and_then(|s| s.parse().ok())
        .unwrap_or(200_000)
}

fn run(games: &[Equilibrium], n: usize, seed: u64, setup: impl Fn(&mut ExperimentConfig)) -> Result<ExperimentResult, String> {
    let mut cfg = ExperimentConfig::new(DT, n, seed);
    setup(&mut cfg);
    run_experiment(games, &cfg).map_err(|e: SimError| e.to_string())
}

/// Runs `check` and, if it fails, once more with four times the paths.
fn with_rerun(n: usize, check: impl Fn(usize, u64) -> Check) -> Check {
    let (pass, detail) = check(n, SEED)?;
    if pass {
        return Ok((true, detail));
    }
    let (pass, again) = check(4 * n, SEED + 1)?;
    Ok((pass, format!("{detail}; re-run with {} paths: {again}", 4 * n)))
}

fn z(e: &McEstimate, target: f64) -> f64 {
    (e.mean - target) / e.std_error
}

fn criterion_1() -> Check {
    let w = characteristic_roots(&worked_params());
    let f = validate(0.08, 0.01, 0.1).unwrap();
    let rf = characteristic_roots(&f);
    let residual = f.characteristic(rf.gamma).abs();
    let pass = (w.gamma - 2.0).abs() <= 1e-12
        && (w.eta + 1.0).abs() <= 1e-12
        && residual <= 1e-12
        && rf.gamma > 1.249
        && rf.gamma < 1.251;
    Ok((
        pass,
        format!("worked gamma={} eta={}; drift gamma={:.6} residual={residual:.1e}", w.gamma, w.eta, rf.gamma),
    ))
}

fn criterion_2() -> Check {
    let params = worked_params();
    let (vg, vh) = (call_value(&params, 3.0), call_value(&params, 4.0));
    let b = martingale_boundary(&vg, &vh, &Payoff::Call { strike: 3.0 }).map_err(|e| e.to_string())?;
    let ode = ode_boundary(&params, 1.0, &zero_value(&params)).map_err(|e| e.to_string())?;
    let x = 4.0 / 3.0;
    let table = ode.value(x);
    let direct = ode.quadrature_value(x).ok_or("no quadrature for ode boundary")?.map_err(|e| e.to_string())?;
    // with h ≡ 0, g = (x−1)⁺ and γ = 2 the integrand is 1/(x−1) − 2/x
    let antiderivative = |y: f64| (y - 1.0).ln() - 2.0 * y.ln();
    let closed = -(-(antiderivative(2.0) - antiderivative(x))).exp_m1();
    let pass = (b.touch_a() - 4.0).abs() <= 1e-10
        && (b.value(5.0) - 0.16).abs() <= 1e-10
        && (table - 0.25).abs() <= 1e-6
        && (direct - closed).abs() <= 1e-6
        && (closed - 0.25).abs() <= 1e-12;
    Ok((
        pass,
        format!(
            "a={:.12} b(5)={:.12}; ode b(4/3): table={table:.9} quadrature={direct:.9} antiderivative={closed:.9}",
            b.touch_a(),
            b.value(5.0)
        ),
    ))
}

fn criterion_3() -> Check {
    let params = worked_params();
    let vh = zero_value(&params);
    let b = ode_boundary(&params, 1.0, &vh).map_err(|e| e.to_string())?;
    let g = Payoff::Call { strike: 1.0 };
    let roots = params.roots();
    let (lo, hi) = (b.flat_until(), b.upper_bg());
    let worst = (1..=50)
        .map(|i| lo + (hi - lo) * i as f64 / 51.0)
        .map(|x| ode_residual(&b, &g, &roots, &vh, x).abs())
        .fold(0.0, f64::max);
    Ok((worst <= 1e-6, format!("max residual over 50 points {worst:.2e}")))
}

/// Per-configuration verdicts for criteria 4, 5 and 10.
struct ValueChecks {
    c4: (bool, String),
    c5: (bool, String),
    c10: (bool, String),
}

fn value_checks(fam: &Family, x0: f64, n: usize, seed: u64) -> Result<ValueChecks, String> {
    let games: Vec<Equilibrium> = P1_GRID
        .iter()
        .map(|&p1| symmetric(fam.params, x0, fam.strike, fam.consolation, p1, P2, BoundaryMode::Martingale))
        .collect();
    let res = run(&games, n, seed, |cfg| cfg.refinements = vec![1, 2])?;
    let (mut c4, mut c5, mut c10) = ((true, Vec::new()), (true, Vec::new()), (true, Vec::new()));
    for s in &res.scenarios {
        let (coarse, fine) = (&s.levels[0], &s.levels[1]);
        for i in 0..2 {
            let (f, ind) = (coarse.j[i].formula, coarse.j[i].indicator);
            let u = s.u[i];
            let ok4 = f.within(u, 3.0) && ind.within(u, 3.0) && f.std_error / u <= 0.01 && ind.std_error / u <= 0.01;
            c4.0 &= ok4;
            c4.1.push(format!("P{} z={:+.2}/{:+.2}", i + 1, z(&f, u), z(&ind, u)));
            let diff = (f.mean - ind.mean) / f.combined_se(&ind);
            c5.0 &= diff.abs() <= 3.0;
            c5.1.push(format!("P{} {diff:+.2}", i + 1));
            let moves = [
                (fine.j[i].formula.mean - f.mean).abs() / f.std_error,
                (fine.j[i].indicator.mean - ind.mean).abs() / ind.std_error,
            ];
            let worst = moves[0].max(moves[1]);
            c10.0 &= worst < 1.0;
            c10.1.push(format!("P{} {worst:.3}", i + 1));
        }
    }
    let tag = format!("{} x0={x0} n={n}", fam.name);
    let join = |v: Vec<String>| format!("{tag}: {}", v.join(" "));
    Ok(ValueChecks {
        c4: (c4.0, join(c4.1)),
        c5: (c5.0, join(c5.1)),
        c10: (c10.0, join(c10.1)),
    })
}

/// Criteria 4, 5 and 10 over both families; failing configurations are
/// re-run for the failing criterion only.
fn value_criteria() -> [Check; 3] {
    let n = value_paths();
    let mut out = [(true, Vec::new()), (true, Vec::new()), (true, Vec::new())];
    for fam in families() {
        for x0 in fam.x0 {
            let first = match value_checks(&fam, x0, n, SEED) {
                Ok(v) => v,
                Err(e) => return [Err(e.clone()), Err(e.clone()), Err(e)],
            };
            let verdicts = [first.c4, first.c5, first.c10];
            let mut again: Option<ValueChecks> = None;
            for (c, (pass, detail)) in verdicts.into_iter().enumerate() {
                let (pass, detail) = if pass {
                    (pass, detail)
                } else {
                    if again.is_none() {
                        match value_checks(&fam, x0, 4 * n, SEED + 1) {
                            Ok(v) => again = Some(v),
                            Err(e) => return [Err(e.clone()), Err(e.clone()), Err(e)],
                        }
                    }
                    let v = again.as_ref().unwrap();
                    let (p, d) = [&v.c4, &v.c5, &v.c10][c].clone();
                    (p, format!("{detail}; re-run {d}"))
                };
                out[c].0 &= pass;
                out[c].1.push(detail);
            }
        }
    }
    out.map(|(pass, lines)| Ok((pass, lines.join(" | "))))
}

fn checkpoints() -> Vec<f64> {
    vec![0.1, 0.25, 0.5, 1.0, 2.0]
}

fn martingale_verdict(level: &LevelResult) -> (bool, String) {
    let mut pass = true;
    let mut parts = Vec::new();
    for player in [Player::One, Player::Two] {
        let r = martingale_report(level, player);
        pass &= r.verdict;
        // largest deviation of a stopped mean from M₀, and largest rise of
        // the unstopped means
        let mut flat = 0.0f64;
        let mut rise = f64::NEG_INFINITY;
        for c in &r.checkpoints {
            let z = (c.mean - c.reference) / c.std_error;
            match c.kind {
                CheckKind::Stopped if z.abs() > flat.abs() => flat = z,
                CheckKind::Free => rise = rise.max(z),
                _ => {}
            }
        }
        parts.push(format!(
            "M{} {} (stopped worst {flat:+.2} SE, unstopped max rise {rise:+.2} SE)",
            player.index(),
            if r.verdict { "ok" } else { "broken" }
        ));
    }
    (pass, parts.join(" "))
}

fn criterion_6() -> Check {
    let n = value_paths() / 2;
    let eq = symmetric(worked_params(), 5.0, 3.0, 4.0, 0.3, P2, BoundaryMode::Martingale);
    let real = with_rerun(n, |n, seed| {
        let res = run(std::slice::from_ref(&eq), n, seed, |cfg| cfg.probes.checkpoints = checkpoints())?;
        Ok(martingale_verdict(&res.scenarios[0].levels[0]))
    })?;
    let res = run(std::slice::from_ref(&eq), n, SEED, |cfg| {
        cfg.probes.checkpoints = checkpoints();
        cfg.probes.u1_scale = Some(1.1);
    })?;
    let level = &res.scenarios[0].levels[0];
    let broken = !martingale_report(level, Player::One).verdict;
    let (_, detail) = martingale_verdict(level);
    Ok((real.0 && broken, format!("equilibrium: {}; u1 x1.1 control: {detail}", real.1)))
}

fn criterion_7() -> Check {
    let devices: Vec<f64> = (1..=9).map(|i| i as f64 / 10.0).collect();
    let eq = symmetric(worked_params(), 5.0, 3.0, 4.0, 0.3, P2, BoundaryMode::Martingale);
    with_rerun(value_paths() / 2, |n, seed| {
        let res = run(std::slice::from_ref(&eq), n, seed, |cfg| cfg.probes.devices = devices.clone())?;
        let ind = &res.scenarios[0].levels[0].indifference;
        let mut worst = 0.0f64;
        for (i, (_, a)) in ind.iter().enumerate() {
            for (_, b) in &ind[i + 1..] {
                worst = worst.max((a.mean - b.mean).abs() / a.combined_se(b));
            }
        }
        let means: Vec<String> = ind.iter().map(|(u, e)| format!("{u}:{:.4}", e.mean)).collect();
        Ok((worst <= 3.0, format!("max pairwise gap {worst:.2} SE; {}", means.join(" "))))
    })
}

fn deviation_check(name: &str, eq: &Equilibrium, n: usize) -> Check {
    let b = eq.boundary();
    let family = default_deviations(b.touch_a(), b.upper_bg());
    with_rerun(n, |n, seed| {
        let res = run(std::slice::from_ref(eq), n, seed, |cfg| cfg.probes.deviations = family.clone())?;
        let level = &res.scenarios[0].levels[0];
        let mut pass = true;
        let mut parts = Vec::new();
        for player in [Player::One, Player::Two] {
            let r = deviation_report(level, player, eq.value(player));
            pass &= r.verdict;
            // deterministic rows (SE = 0) that pass only differ by rounding
            let z = |row: &DeviationRow| match (row.std_error > 0.0, row.pass) {
                (true, _) => row.margin / row.std_error,
                (false, true) => 0.0,
                (false, false) => f64::INFINITY,
            };
            let worst = r
                .deviation_table
                .iter()
                .max_by(|a, b| z(a).total_cmp(&z(b)))
                .map(|row| format!("{} {:+.2} SE (margin {:+.4})", row.id, z(row), row.margin))
                .unwrap_or_default();
            parts.push(format!("P{} worst {worst}", player.index()));
        }
        Ok((pass, format!("{name}: {}", parts.join(", "))))
    })
}

fn criterion_8() -> Check {
    let n = value_paths() / 4;
    let mart = symmetric(worked_params(), 5.0, 3.0, 4.0, 0.3, P2, BoundaryMode::Martingale);
    let ode = Equilibrium::new(&ode_game(1.5), BoundaryMode::Ode).map_err(|e| e.to_string())?;
    let asym = Equilibrium::new(&asym_game(), BoundaryMode::Asym).map_err(|e| e.to_string())?;
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, eq) in [("martingale", &mart), ("ode", &ode), ("asym", &asym)] {
        let (p, d) = deviation_check(name, eq, n)?;
        pass &= p;
        parts.push(d);
    }
    Ok((pass, parts.join(" | ")))
}

fn criterion_9() -> Check {
    let params = worked_params();
    let sym = symmetric(params, 5.0, 3.0, 4.0, 0.3, P2, BoundaryMode::Martingale);
    let asym = symmetric(params, 5.0, 3.0, 4.0, 0.3, P2, BoundaryMode::Asym);
    let paths = simulate_paths(&params, 5.0, DT, 2.0, 500, SEED).map_err(|e| e.to_string())?;
    let mut gap = 0.0f64;
    for maxes in &paths.maxes {
        let (s1, s2) = sym.controls(maxes, DT).map_err(|e| e.to_string())?;
        let (a1, a2) = asym.controls(maxes, DT).map_err(|e| e.to_string())?;
        for k in 0..maxes.len() {
            gap = gap.max((s1.value(k) - a1.value(k)).abs()).max((s2.value(k) - a2.value(k)).abs());
        }
    }
    let controls_ok = gap <= 1e-4;
    let values = with_rerun(value_paths() / 4, |n, seed| {
        let res = run(&[sym.clone(), asym.clone()], n, seed, |_| {})?;
        let (s, a) = (&res.scenarios[0].levels[0], &res.scenarios[1].levels[0]);
        let mut pass = true;
        let mut parts = Vec::new();
        for i in 0..2 {
            let (x, y) = (s.j[i].formula, a.j[i].formula);
            let d = (x.mean - y.mean) / x.combined_se(&y);
            pass &= d.abs() <= 3.0;
            parts.push(format!("P{} {d:+.3} SE", i + 1));
        }
        Ok((pass, parts.join(" ")))
    })?;
    Ok((controls_ok && values.0, format!("max control gap {gap:.1e}; values {}", values.1)))
}

fn main() -> ExitCode {
    let start = Instant::now();
    let mut all = true;
    let mut report = |id: usize, name: &str, check: Check| {
        let (pass, detail) = check.unwrap_or_else(|e| (false, format!("error: {e}")));
        all &= pass;
        println!("criterion {id:>2} {}: {name}: {detail}", if pass { "PASS" } else { "FAIL" });
    };
    report(1, "characteristic roots", criterion_1());
    report(2, "closed-form boundary values", criterion_2());
    report(3, "ode residual", criterion_3());
    let [c4, c5, c10] = value_criteria();
    report(4, "equilibrium values", c4);
    report(5, "indicator vs formula", c5);
    report(6, "martingale diagnostics", criterion_6());
    report(7, "indifference", criterion_7());
    report(8, "deviation suite", criterion_8());
    report(9, "asymmetric degeneration", criterion_9());
    report(10, "dt halving", c10);
    println!("acceptance finished in {:.0?}", start.elapsed());
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
