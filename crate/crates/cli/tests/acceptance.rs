//! Acceptance suite. Each test prints one `criterion NN PASS|FAIL` line with
//! the measured numbers, then asserts.

use std::fs;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use twosettle::bid::{dual_bounds, quantity_bounds};
use twosettle::dam::{build_dam, dual_objective, stationarity_residuals};
use twosettle::lp::{check_strong_duality, solve};
use twosettle::{
    fixtures, out_of_sample, run_bid, run_myd, run_oracle, run_std, sample_scenarios, solve_bid, solve_dam,
    uc_quality, BaseProfile, BidVector, Framework, McCormickBounds, NoiseModel, PowerSystem, RunConfig, ScenarioSet,
};
use twosettle_cli::{adjust_system, apply_penetration, run_study, write_outputs, Flexibility, LineScale, Penetration, StudySpec};

const TOL: f64 = 1e-6;

fn verdict(n: u32, name: &str, pass: bool, detail: impl AsRef<str>) {
    println!(
        "criterion {n:02} {} {name}: {}",
        if pass { "PASS" } else { "FAIL" },
        detail.as_ref()
    );
    assert!(pass, "criterion {n} ({name}) failed: {}", detail.as_ref());
}

fn config() -> RunConfig {
    RunConfig::default()
}

fn fixture_suite() -> Vec<(&'static str, (PowerSystem, ScenarioSet))> {
    vec![
        ("two_bus C^U=30", fixtures::two_bus(30.0)),
        ("two_bus C^U=12", fixtures::two_bus(12.0)),
        ("two_bus load 20", fixtures::two_bus_with_load(30.0, 20.0)),
        ("two_bus 3 periods", fixtures::two_bus_periods(30.0, 3)),
        ("two_bus_congested", fixtures::two_bus_congested()),
        ("all_slow_offline", fixtures::all_slow_offline()),
        ("fractional_commitment", fixtures::fractional_commitment()),
        ("two_bus_day", fixtures::two_bus_day()),
        ("five_bus", fixtures::five_bus()),
    ]
}

fn rel_le(a: f64, b: f64) -> bool {
    a <= b + 1e-6 * (1.0 + b.abs())
}

#[test]
fn criterion_01_sandwich() {
    let start = Instant::now();
    let mut cases: Vec<(String, (PowerSystem, ScenarioSet))> =
        fixture_suite().into_iter().map(|(n, c)| (n.to_string(), c)).collect();
    cases.extend((0..25).map(|s| (format!("random seed {s}"), fixtures::random_system(s))));
    let mut broken = Vec::new();
    for (name, (sys, set)) in &cases {
        let cfg = config();
        let std = run_std(sys, set, &cfg).unwrap().report.total;
        let bid = run_bid(sys, set, &cfg).unwrap().report.total;
        let myd = run_myd(sys, set, &cfg).unwrap().report.total;
        if !rel_le(std, bid) || !rel_le(std, myd) {
            broken.push(format!("{name}: StD {std} BiD {bid} MyD {myd}"));
        }
    }
    let elapsed = start.elapsed();
    verdict(
        1,
        "sandwich",
        broken.is_empty() && elapsed < Duration::from_secs(120),
        format!("{} cases, {} violations {:?}, {:.1?}", cases.len(), broken.len(), broken, elapsed),
    );
}

#[test]
fn criterion_02_oracle_agreement() {
    let start = Instant::now();
    let mut lines = Vec::new();
    let mut pass = true;
    for up in [12.0, 30.0] {
        let (sys, set) = fixtures::two_bus(up);
        let cfg = config();
        let bid = solve_bid(&sys, &set, &cfg).unwrap().cost();
        let oracle = run_oracle(&sys, &set, &cfg).unwrap().run.report.total;
        let gap = (bid - oracle).abs() / oracle.abs();
        pass &= gap <= 0.01;
        lines.push(format!("C^U={up}: BiD {bid:.3} oracle {oracle:.3} gap {:.4}%", 100.0 * gap));
    }
    let elapsed = start.elapsed();
    pass &= elapsed < Duration::from_secs(30);
    verdict(2, "oracle agreement", pass, format!("{}; {elapsed:.1?}", lines.join("; ")));
}

/// Every point of an oracle grid, in enumeration order.
fn grid_points(grid: &[Vec<Vec<f64>>]) -> Vec<BidVector> {
    let mut points = vec![Vec::new()];
    for cell in grid.iter().flatten() {
        points = points
            .into_iter()
            .flat_map(|p: Vec<f64>| {
                cell.iter().map(move |&v| {
                    let mut q = p.clone();
                    q.push(v);
                    q
                })
            })
            .collect();
    }
    let t_len = grid.first().map_or(1, |r| r.len().max(1));
    points
        .into_iter()
        .map(|flat| BidVector(flat.chunks(t_len).map(|r| r.to_vec()).collect()))
        .collect()
}

#[test]
fn criterion_03_relaxation_lower_bound() {
    let mut cases: Vec<(String, (PowerSystem, ScenarioSet), f64)> = vec![
        ("two_bus C^U=12".into(), fixtures::two_bus(12.0), 1.0),
        ("two_bus C^U=30".into(), fixtures::two_bus(30.0), 1.0),
        ("two_bus 2 periods".into(), fixtures::two_bus_periods(30.0, 2), 1.0),
        ("two_bus_congested".into(), fixtures::two_bus_congested(), 1.0),
    ];
    // Random systems small enough for a full grid: at most two bid cells,
    // nine grid values per cell.
    for seed in 0..40 {
        let (sys, set) = fixtures::random_system(seed);
        if sys.num_vres() * set.num_periods() > 2 {
            continue;
        }
        let beta = quantity_bounds(&sys, &set, 1.0).into_iter().flatten().fold(0.0, f64::max);
        cases.push((format!("random seed {seed}"), (sys, set), (beta / 8.0).max(1e-3)));
    }
    // The relaxation bounds only bids whose lower-level multipliers fit its
    // dual box. Two checks per instance:
    //  - with xi widened until the box holds the multipliers of every grid
    //    point, the relaxed objective is below the full grid optimum;
    //  - at xi = 1, it is below the best grid point whose multipliers fit.
    let mut broken = Vec::new();
    let mut widened = Vec::new();
    for (name, (sys, set), step) in &cases {
        let base = RunConfig {
            oracle_step: *step,
            ..config()
        };
        let oracle = run_oracle(sys, set, &base).unwrap();
        let unit_box = dual_bounds(sys, set, 1.0, TOL).unwrap();
        let mut xi_cover: f64 = 1.0;
        let mut inside_best = f64::INFINITY;
        for (bids, cost) in grid_points(&oracle.grid).iter().zip(&oracle.costs) {
            let da = solve_dam(sys, set, bids, TOL).unwrap();
            let mut inside = true;
            for (k, row) in da.duals.vres_max.iter().enumerate() {
                for (t, &lam) in row.iter().enumerate() {
                    let cap = unit_box[k][t];
                    if lam > cap + 1e-9 * (1.0 + cap) {
                        inside = false;
                        xi_cover = xi_cover.max(if cap > 0.0 { lam / cap } else { f64::INFINITY });
                    }
                }
            }
            if inside {
                inside_best = inside_best.min(*cost);
            }
        }
        let relaxed = solve_bid(sys, set, &base).unwrap().relaxed_objective;
        if !rel_le(relaxed, inside_best) {
            broken.push(format!("{name}: xi=1 relaxed {relaxed} > in-box grid optimum {inside_best}"));
        }
        if xi_cover > 1.0 {
            widened.push(format!("{name} xi={xi_cover:.4}"));
        }
        if xi_cover.is_finite() {
            let wide = RunConfig {
                xi: xi_cover * (1.0 + 1e-6),
                ..base.clone()
            };
            let relaxed = solve_bid(sys, set, &wide).unwrap().relaxed_objective;
            let best = oracle.run.report.total;
            if !rel_le(relaxed, best) {
                broken.push(format!("{name}: covering box relaxed {relaxed} > grid optimum {best}"));
            }
        } else {
            broken.push(format!("{name}: no finite xi covers the grid multipliers"));
        }
    }
    verdict(
        3,
        "relaxation lower bound",
        broken.is_empty(),
        format!("{} tiny instances, widened boxes {:?}, violations {:?}", cases.len(), widened, broken),
    );
}

#[test]
fn criterion_04_bid_beats_mean_bidding() {
    let start = Instant::now();
    let (sys, set) = fixtures::five_bus();
    let slow: f64 = sys
        .conventional_units
        .iter()
        .filter(|u| u.startup_class == twosettle::StartupClass::Slow)
        .map(|u| u.p_max)
        .sum();
    let total: f64 = sys.conventional_units.iter().map(|u| u.p_max).sum();
    let cfg = config();
    let myd = run_myd(&sys, &set, &cfg).unwrap().report.total;
    let bid = run_bid(&sys, &set, &cfg).unwrap().report.total;
    // Grid {0, bound} per cell; at gamma = 1 the bound is the mean forecast,
    // so the mean-bid point is on the grid and the grid optimum bounds MyD.
    let coarse = RunConfig {
        oracle_step: 1e6,
        ..cfg.clone()
    };
    let oracle = run_oracle(&sys, &set, &coarse).unwrap();
    let best = oracle.run.report.total;
    let elapsed = start.elapsed();
    let shape_ok = sys.buses.len() == 5
        && set.num_periods() == 4
        && set.len() == 5
        && slow / total >= 0.3
        && sys.conventional_units.iter().all(|u| u.redispatch_up_cost > u.redispatch_down_cost);
    let pass = shape_ok
        && bid <= 0.95 * myd
        && best <= 0.95 * myd
        && rel_le(bid, best)
        && elapsed < Duration::from_secs(300);
    verdict(
        4,
        "BiD vs MyD",
        pass,
        format!(
            "MyD {myd:.1}, BiD {bid:.1} ({:.1}% lower), grid optimum over {} points {best:.1}, slow share {:.0}%, {elapsed:.1?}",
            100.0 * (1.0 - bid / myd),
            oracle.costs.len(),
            100.0 * slow / total
        ),
    );
}

#[test]
fn criterion_05_certificates() {
    let cfg = config();
    let mut worst_gap: f64 = 0.0;
    let mut worst_stationarity: f64 = 0.0;
    let mut worst_dual: f64 = 0.0;
    let mut solved = 0;
    for (name, (sys, set)) in fixture_suite() {
        let mut bid_vectors = vec![
            BidVector::zeros(sys.num_vres(), set.num_periods()),
            BidVector(set.expected_vres()),
        ];
        if let Some(b) = run_bid(&sys, &set, &cfg).unwrap().bids {
            bid_vectors.push(b);
        }
        for bids in &bid_vectors {
            let model = build_dam(&sys, &set, bids).unwrap();
            let sol = solve(&model.lp, TOL).unwrap();
            let scale = 1.0 + sol.objective.abs();
            worst_gap = worst_gap.max(check_strong_duality(&model.lp, &sol) / scale);
            let da = solve_dam(&sys, &set, bids, TOL).unwrap();
            let r = stationarity_residuals(&sys, &da).max();
            worst_stationarity = worst_stationarity.max(r);
            worst_dual = worst_dual.max((dual_objective(&sys, &set, &da) - da.cost).abs() / scale);
            solved += 1;
            assert!(r <= 1e-6, "{name}: stationarity residual {r}");
        }
    }
    verdict(
        5,
        "strong duality and stationarity",
        worst_gap <= 1e-6 && worst_stationarity <= 1e-6 && worst_dual <= 1e-6,
        format!(
            "{solved} DAM solves, max duality gap {worst_gap:.2e}, max dual-objective gap {worst_dual:.2e}, max stationarity residual {worst_stationarity:.2e}"
        ),
    );
}

#[test]
fn criterion_06_envelope_validity() {
    let mut boxes = Vec::new();
    let (sys, set) = fixtures::five_bus();
    for (gamma, xi) in [(0.2, 1.0), (1.0, 1.0), (1.4, 2.0)] {
        let cfg = RunConfig {
            gamma,
            xi,
            ..config()
        };
        boxes.push(McCormickBounds::from_rules(&sys, &set, &cfg).unwrap());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..3 {
        let (ql, qh): (f64, f64) = (rng.random_range(-20.0..20.0), rng.random_range(20.0..100.0));
        let (dl, dh): (f64, f64) = (rng.random_range(-50.0..0.0), rng.random_range(0.0..80.0));
        boxes.push(
            McCormickBounds {
                quantity_lower: vec![vec![ql]],
                quantity_upper: vec![vec![qh]],
                dual_lower: vec![vec![dl]],
                dual_upper: vec![vec![dh]],
            }
            .checked()
            .unwrap(),
        );
    }
    let mut cells = 0;
    let mut violations = 0;
    let mut worst: f64 = 0.0;
    for b in &boxes {
        for k in 0..b.quantity_upper.len() {
            for t in 0..b.quantity_upper[k].len() {
                cells += 1;
                let (wl, wh) = (b.quantity_lower[k][t], b.quantity_upper[k][t]);
                let (ll, lh) = (b.dual_lower[k][t], b.dual_upper[k][t]);
                for _ in 0..10_000 {
                    let w = wl + (wh - wl) * rng.random::<f64>();
                    let l = ll + (lh - ll) * rng.random::<f64>();
                    let slack = b.envelope_slacks(k, t, w, l, w * l);
                    let tol = 1e-9 * (1.0 + (w * l).abs() + wh.abs() * lh.abs());
                    let min = slack.iter().copied().fold(f64::INFINITY, f64::min);
                    worst = worst.min(min);
                    if min < -tol {
                        violations += 1;
                    }
                }
            }
        }
    }
    verdict(
        6,
        "McCormick envelope validity",
        violations == 0,
        format!("{} boxes, {} points, {violations} violations, smallest slack {worst:.2e}", cells, cells * 10_000),
    );
}

#[test]
fn criterion_07_gamma_robustness() {
    let (sys, set) = fixtures::five_bus();
    let costs: Vec<(f64, f64)> = [0.2, 0.6, 1.0, 1.4]
        .into_iter()
        .map(|gamma| {
            let cfg = RunConfig { gamma, ..config() };
            (gamma, run_bid(&sys, &set, &cfg).unwrap().report.total)
        })
        .collect();
    let best = costs.iter().map(|c| c.1).fold(f64::INFINITY, f64::min);
    let worst = costs.iter().map(|c| c.1).fold(f64::NEG_INFINITY, f64::max);
    verdict(
        7,
        "gamma robustness",
        worst <= 1.1 * best,
        format!("costs {costs:?}, worst/best {:.4}", worst / best),
    );
}

#[test]
fn criterion_08_xi_robustness() {
    let (sys, set) = fixtures::five_bus();
    let costs: Vec<(f64, f64)> = [1.0, 1.5, 2.0]
        .into_iter()
        .map(|xi| {
            let cfg = RunConfig { xi, ..config() };
            (xi, run_bid(&sys, &set, &cfg).unwrap().report.total)
        })
        .collect();
    let lo = costs.iter().map(|c| c.1).fold(f64::INFINITY, f64::min);
    let hi = costs.iter().map(|c| c.1).fold(f64::NEG_INFINITY, f64::max);
    let small: Vec<String> = [0.5, 0.8]
        .into_iter()
        .map(|xi| {
            let cfg = RunConfig { xi, ..config() };
            match run_bid(&sys, &set, &cfg) {
                Ok(r) => format!("xi={xi}: {:.1}", r.report.total),
                Err(e) => format!("xi={xi}: {e}"),
            }
        })
        .collect();
    verdict(
        8,
        "xi robustness",
        hi / lo - 1.0 < 0.01,
        format!("costs {costs:?}, spread {:.4}%; {}", 100.0 * (hi / lo - 1.0), small.join("; ")),
    );
}

#[test]
fn criterion_09_out_of_sample() {
    let (sys, set) = fixtures::five_bus();
    let cfg = config();
    let base = BaseProfile::from_expectation(&set);
    let noise = NoiseModel::default();
    let tests: Vec<ScenarioSet> = (1..=50)
        .map(|seed| sample_scenarios(&sys, &base, &noise, 5, seed).unwrap())
        .collect();
    let mut table = Vec::new();
    for fw in [Framework::Myd, Framework::Bid, Framework::Std] {
        table.push(out_of_sample(&sys, &set, fw, &tests, &cfg).unwrap());
    }
    println!("{:<6} {:>12} {:>12}", "", "mean", "std");
    for row in &table {
        println!("{:<6} {:>12.1} {:>12.1}", row.framework, row.mean, row.std);
    }
    let (myd, bid) = (&table[0], &table[1]);
    verdict(
        9,
        "out-of-sample spread",
        tests.len() == 50 && table.iter().all(|r| r.totals.len() == 50) && bid.std <= myd.std,
        format!("std BiD {:.1} vs MyD {:.1}; mean BiD {:.1} vs MyD {:.1}", bid.std, myd.std, bid.mean, myd.mean),
    );
}

#[test]
fn criterion_10_commitment_quality() {
    let (sys, set) = fixtures::five_bus();
    let mut variants = Vec::new();
    for (lines, flex) in [
        (1.0, Flexibility::Medium),
        (1.0, Flexibility::Low),
        (1.0, Flexibility::High),
        (2.0, Flexibility::Medium),
    ] {
        variants.push((format!("{}-{flex}", LineScale(lines)), adjust_system(&sys, LineScale(lines), flex).unwrap(), set.clone()));
    }
    let (s40, set40) = apply_penetration(&sys, &set, Penetration::Share(0.4)).unwrap();
    variants.push(("40R".into(), s40, set40));
    let cfg = config();
    let mut fractional = 0;
    let mut total = 0;
    let mut per_case = Vec::new();
    for (name, sys, set) in &variants {
        for run in [run_myd(sys, set, &cfg), run_bid(sys, set, &cfg), run_std(sys, set, &cfg)] {
            let run = run.unwrap();
            let q = uc_quality(&run.dam, &run.rtm, 1e-6);
            fractional += q.da_fractional + q.rt_fractional;
            total += q.da_total + q.rt_total;
            per_case.push(format!("{name}/{}: {:.2}%", run.report.framework, 100.0 * q.combined_fraction));
        }
    }
    let share = fractional as f64 / total as f64;
    verdict(
        10,
        "commitment relaxation quality",
        share < 0.05,
        format!("{fractional}/{total} fractional = {:.2}% ({})", 100.0 * share, per_case.join(", ")),
    );
}

#[test]
fn criterion_11_determinism() {
    let root = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/five_bus");
    let tmp = tempfile::tempdir().unwrap();
    let mut spec: StudySpec = serde_json::from_str(
        r#"{"sampler": {}, "frameworks": ["myd", "bid", "std"],
            "sweeps": {"gamma": [0.6, 1.0], "scenario_counts": [3, 5], "flexibility": ["mFlx", "hFlx"]},
            "seed": 11}"#,
    )
    .unwrap();
    spec.system = root.join("system.json");
    spec.scenarios = root.join("scenarios.csv");
    let mut dirs = Vec::new();
    for (i, parallel) in [false, true].into_iter().enumerate() {
        spec.parallel = parallel;
        spec.output_dir = tmp.path().join(format!("run{i}"));
        let outcome = run_study(&spec).unwrap();
        assert_eq!(outcome.failed_points(), 0);
        write_outputs(&outcome, &spec.output_dir).unwrap();
        dirs.push(spec.output_dir.clone());
    }
    let mut differing = Vec::new();
    let mut bytes = 0;
    for name in ["costs.csv", "prices_dam.csv", "prices_rt.csv", "revenues.csv", "uc_quality.csv"] {
        let a = fs::read(dirs[0].join(name)).unwrap();
        let b = fs::read(dirs[1].join(name)).unwrap();
        bytes += a.len();
        if a != b || a.is_empty() {
            differing.push(name);
        }
    }
    verdict(
        11,
        "determinism",
        differing.is_empty(),
        format!("5 CSVs, {bytes} bytes, differing {differing:?}"),
    );
}
