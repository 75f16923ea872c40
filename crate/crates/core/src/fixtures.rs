//! Small systems with known answers, shared by tests, benches and examples.
//!
//! The two-bus family has one period unless stated otherwise: unit `g1` at bus
//! `b1` (10 $/MWh, 0..100 MW, fast), wind `wind` at `b2` (30 MW installed) and
//! load `d1` at `b2` (50 MW), joined by one line with reactance 0.1.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dam::DamDuals;
use crate::scenario::{Scenario, ScenarioSet};
use crate::system::{Bus, ConventionalUnit, Line, Load, PowerSystem, StartupClass, VresUnit};

fn bus(id: &str) -> Bus {
    Bus {
        id: id.into(),
        loads: vec![],
    }
}

fn line(from: &str, to: &str, reactance: f64, capacity: f64) -> Line {
    Line {
        from: from.into(),
        to: to.into(),
        reactance,
        capacity,
    }
}

/// Fast unit with no commitment costs and ramps equal to its capacity.
pub fn simple_unit(id: &str, bus: &str, cost: f64, up: f64, down: f64, p_max: f64) -> ConventionalUnit {
    ConventionalUnit {
        id: id.into(),
        bus: bus.into(),
        variable_cost: cost,
        no_load_cost: 0.0,
        startup_cost: 0.0,
        redispatch_up_cost: up,
        redispatch_down_cost: down,
        p_min: 0.0,
        p_max,
        ramp_up: p_max,
        ramp_down: p_max,
        startup_class: StartupClass::Fast,
        initial_commitment: 0.0,
        initial_output: 0.0,
    }
}

fn two_bus_system(units: Vec<ConventionalUnit>, wind_cap: f64, line_cap: f64) -> PowerSystem {
    PowerSystem::new(
        vec![bus("b1"), bus("b2")],
        vec![line("b1", "b2", 0.1, line_cap)],
        units,
        vec![VresUnit {
            id: "wind".into(),
            bus: "b2".into(),
            capacity: wind_cap,
        }],
        vec![Load {
            id: "d1".into(),
            bus: "b2".into(),
        }],
    )
    .expect("two-bus fixture is valid")
}

/// Scenarios `(weight, wind)` with a flat load, one period.
pub fn two_bus_scenarios(system: &PowerSystem, cases: &[(f64, f64)], load: f64) -> ScenarioSet {
    let scenarios = cases
        .iter()
        .enumerate()
        .map(|(s, &(weight, wind))| Scenario {
            id: format!("w{}", s + 1),
            weight,
            vres: vec![vec![wind]],
            demand: vec![vec![load]],
        })
        .collect();
    ScenarioSet::new(system, vec![1], scenarios, Some(vec![vec![load]])).expect("valid scenarios")
}

/// Two-bus system with upward re-dispatch cost `up` (down-cost 5 $/MWh) and
/// two equally likely wind outcomes, 30 MW (`w1`) and 0 MW (`w2`).
pub fn two_bus(up: f64) -> (PowerSystem, ScenarioSet) {
    let sys = two_bus_system(vec![simple_unit("g1", "b1", 10.0, up, 5.0, 100.0)], 30.0, 100.0);
    let set = two_bus_scenarios(&sys, &[(0.5, 30.0), (0.5, 0.0)], 50.0);
    (sys, set)
}

/// [`two_bus`] with a different flat load.
pub fn two_bus_with_load(up: f64, load: f64) -> (PowerSystem, ScenarioSet) {
    let (sys, _) = two_bus(up);
    let set = two_bus_scenarios(&sys, &[(0.5, 30.0), (0.5, 0.0)], load);
    (sys, set)
}

/// [`two_bus`] repeated over `periods` identical hours.
pub fn two_bus_periods(up: f64, periods: usize) -> (PowerSystem, ScenarioSet) {
    let (sys, _) = two_bus(up);
    let scen = |id: &str, wind: f64| Scenario {
        id: id.into(),
        weight: 0.5,
        vres: vec![vec![wind; periods]],
        demand: vec![vec![50.0; periods]],
    };
    let set = ScenarioSet::new(
        &sys,
        (1..=periods as u32).collect(),
        vec![scen("w1", 30.0), scen("w2", 0.0)],
        Some(vec![vec![50.0; periods]]),
    )
    .expect("valid scenarios");
    (sys, set)
}

/// Congested two-bus variant: a 20 MW line, a 20 $/MWh peaker next to the
/// load and 35 MW of local wind. With a 20 MW wind bid the line binds and the
/// bus prices separate at 10 and 20 $/MWh.
pub fn two_bus_congested() -> (PowerSystem, ScenarioSet) {
    let sys = two_bus_system(
        vec![
            simple_unit("g1", "b1", 10.0, 30.0, 5.0, 100.0),
            simple_unit("g2", "b2", 20.0, 40.0, 5.0, 100.0),
        ],
        35.0,
        20.0,
    );
    let set = two_bus_scenarios(&sys, &[(1.0, 20.0)], 50.0);
    (sys, set)
}

/// Two-bus system whose only unit is slow and offline, with no wind in the
/// single scenario `s1`: real-time demand can only be shed.
pub fn all_slow_offline() -> (PowerSystem, ScenarioSet) {
    let mut g = simple_unit("g1", "b1", 10.0, 30.0, 5.0, 100.0);
    g.startup_class = StartupClass::Slow;
    let sys = two_bus_system(vec![g], 30.0, 100.0);
    let set = ScenarioSet::new(
        &sys,
        vec![1],
        vec![Scenario {
            id: "s1".into(),
            weight: 1.0,
            vres: vec![vec![0.0]],
            demand: vec![vec![50.0]],
        }],
        Some(vec![vec![50.0]]),
    )
    .expect("valid scenarios");
    (sys, set)
}

/// Two-bus system forcing a fractional commitment: the only unit must run at
/// least 40 MW when fully on, but the load is 20 MW.
pub fn fractional_commitment() -> (PowerSystem, ScenarioSet) {
    let mut g = simple_unit("g1", "b1", 10.0, 30.0, 5.0, 100.0);
    g.p_min = 40.0;
    g.no_load_cost = 100.0;
    let sys = two_bus_system(vec![g], 30.0, 100.0);
    let set = two_bus_scenarios(&sys, &[(1.0, 0.0)], 20.0);
    (sys, set)
}

/// Eight-hour two-bus day: a base unit always on and a peaker with a start-up
/// cost that is needed from hour 5 when the load jumps.
pub fn two_bus_day() -> (PowerSystem, ScenarioSet) {
    let mut base = simple_unit("g1", "b1", 10.0, 30.0, 5.0, 60.0);
    base.initial_commitment = 1.0;
    base.initial_output = 40.0;
    base.no_load_cost = 20.0;
    let mut peak = simple_unit("g2", "b2", 25.0, 50.0, 5.0, 60.0);
    peak.startup_cost = 200.0;
    peak.no_load_cost = 30.0;
    peak.p_min = 10.0;
    let sys = two_bus_system(vec![base, peak], 30.0, 100.0);
    let load = vec![40.0, 42.0, 45.0, 44.0, 90.0, 95.0, 92.0, 88.0];
    let scen = |id: &str, f: f64| Scenario {
        id: id.into(),
        weight: 0.5,
        vres: vec![vec![10.0 * f; 8]],
        demand: vec![load.clone()],
    };
    let set = ScenarioSet::new(
        &sys,
        (1..=8).collect(),
        vec![scen("w1", 1.5), scen("w2", 0.5)],
        Some(vec![load.clone()]),
    )
    .expect("valid scenarios");
    (sys, set)
}

/// Zero-valued dual block, for hand-built day-ahead schedules.
pub fn empty_duals(system: &PowerSystem, t_len: usize) -> DamDuals {
    let z = |n: usize| vec![vec![0.0; t_len]; n];
    let (i, k, l, n) = (system.num_units(), system.num_vres(), system.lines.len(), system.num_buses());
    DamDuals {
        balance: z(n),
        flow_min: z(l),
        flow_max: z(l),
        vres_min: z(k),
        vres_max: z(k),
        output_min: z(i),
        output_max: z(i),
        commit_min: z(i),
        commit_max: z(i),
        startup_step: z(i),
        startup_min: z(i),
        ramp_down: z(i),
        ramp_up: z(i),
    }
}

/// Wind outcome multipliers of the five scenarios of [`five_bus`].
pub const FIVE_BUS_WIND_FACTORS: [f64; 5] = [0.1, 0.6, 1.0, 1.4, 1.9];

/// Curated five-bus, four-hour system with five equally likely wind outcomes.
///
/// Half of the 720 MW of conventional capacity is cheap slow-start plant that
/// cannot follow wind in real time. Upward re-dispatch costs 80 $/MWh on slow
/// plant and 100+ $/MWh on fast plant, while downward re-dispatch only saves
/// 10 $/MWh, so holding back committed slow headroom does not pay. Wind
/// supplies 40% of expected demand with a wide spread, so day-ahead wind bids
/// well below the mean commit more cheap plant and avoid costly upward
/// re-dispatch. Units are small with distinct costs, so only the marginal
/// units end up with fractional commitment.
pub fn five_bus() -> (PowerSystem, ScenarioSet) {
    let ids = ["b1", "b2", "b3", "b4", "b5"];
    let lines = vec![
        line("b1", "b2", 0.1, 400.0),
        line("b2", "b3", 0.1, 400.0),
        line("b3", "b4", 0.1, 400.0),
        line("b4", "b5", 0.1, 400.0),
        line("b5", "b1", 0.1, 400.0),
        line("b1", "b3", 0.15, 400.0),
    ];
    let mut units = Vec::new();
    for j in 0..24 {
        units.push(ConventionalUnit {
            id: format!("s{:02}", j + 1),
            bus: ids[j % 3].into(),
            variable_cost: 20.0 + 0.05 * j as f64,
            no_load_cost: 10.0,
            startup_cost: 50.0,
            redispatch_up_cost: 80.0,
            redispatch_down_cost: 10.0,
            p_min: 5.0,
            p_max: 15.0,
            ramp_up: 15.0,
            ramp_down: 15.0,
            startup_class: StartupClass::Slow,
            initial_commitment: 0.0,
            initial_output: 0.0,
        });
    }
    for j in 0..36 {
        units.push(ConventionalUnit {
            id: format!("f{:02}", j + 1),
            bus: ids[j % 5].into(),
            variable_cost: 45.0 + 0.05 * j as f64,
            no_load_cost: 5.0,
            startup_cost: 10.0,
            redispatch_up_cost: 100.0 + 0.1 * j as f64,
            redispatch_down_cost: 10.0,
            p_min: 0.0,
            p_max: 10.0,
            ramp_up: 10.0,
            ramp_down: 10.0,
            startup_class: StartupClass::Fast,
            initial_commitment: 0.0,
            initial_output: 0.0,
        });
    }
    let vres = vec![
        VresUnit {
            id: "wind4".into(),
            bus: "b4".into(),
            capacity: 150.0,
        },
        VresUnit {
            id: "wind5".into(),
            bus: "b5".into(),
            capacity: 110.0,
        },
    ];
    let loads: Vec<Load> = ids
        .iter()
        .enumerate()
        .map(|(n, b)| Load {
            id: format!("d{}", n + 1),
            bus: (*b).into(),
        })
        .collect();
    let sys = PowerSystem::new(ids.iter().map(|b| bus(b)).collect(), lines, units, vres, loads)
        .expect("five-bus fixture is valid");

    let shares = [0.25, 0.2, 0.25, 0.15, 0.15];
    let totals = [280.0, 300.0, 320.0, 300.0];
    let demand: Vec<Vec<f64>> = shares.iter().map(|s| totals.iter().map(|t| s * t).collect()).collect();
    let wind_mean = [[70.0, 72.0, 74.0, 71.0], [50.0, 52.0, 49.0, 51.0]];
    let scenarios = FIVE_BUS_WIND_FACTORS
        .iter()
        .enumerate()
        .map(|(s, f)| Scenario {
            id: format!("s{}", s + 1),
            weight: 0.2,
            vres: wind_mean.iter().map(|row| row.iter().map(|m| m * f).collect()).collect(),
            demand: demand.clone(),
        })
        .collect();
    let set = ScenarioSet::new(&sys, vec![1, 2, 3, 4], scenarios, Some(demand.clone())).expect("valid scenarios");
    (sys, set)
}

/// Random 3–5 bus system with 2–5 scenarios, deterministic in `seed`.
///
/// Capacity and line ratings are generous so that every day-ahead bid in
/// `[0, mean]` clears and every real-time imbalance can be absorbed.
pub fn random_system(seed: u64) -> (PowerSystem, ScenarioSet) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_bus = rng.random_range(3..=5);
    let bus_ids: Vec<String> = (1..=n_bus).map(|n| format!("b{n}")).collect();
    let mut lines = Vec::new();
    for n in 1..n_bus {
        let to = rng.random_range(0..n);
        lines.push(line(&bus_ids[n], &bus_ids[to], rng.random_range(0.05..0.3), rng.random_range(150.0..300.0)));
    }
    if n_bus > 3 && rng.random_bool(0.5) {
        lines.push(line(&bus_ids[0], &bus_ids[n_bus - 1], 0.2, 200.0));
    }
    let t_len = rng.random_range(1..=3);
    let n_units = rng.random_range(2..=5);
    let units: Vec<ConventionalUnit> = (0..n_units)
        .map(|i| {
            let p_max: f64 = rng.random_range(60.0..120.0);
            let cost = rng.random_range(10.0..50.0);
            ConventionalUnit {
                id: format!("g{}", i + 1),
                bus: bus_ids[rng.random_range(0..n_bus)].clone(),
                variable_cost: cost,
                no_load_cost: rng.random_range(0.0..50.0),
                startup_cost: rng.random_range(0.0..200.0),
                redispatch_up_cost: cost + rng.random_range(5.0..60.0),
                redispatch_down_cost: rng.random_range(0.0..cost),
                p_min: p_max * rng.random_range(0.0..0.3),
                p_max,
                ramp_up: p_max * rng.random_range(0.5..1.0),
                ramp_down: p_max * rng.random_range(0.5..1.0),
                startup_class: if i == 0 || rng.random_bool(0.5) {
                    StartupClass::Fast
                } else {
                    StartupClass::Slow
                },
                initial_commitment: 0.0,
                initial_output: 0.0,
            }
        })
        .collect();
    let cap: f64 = units.iter().map(|u| u.p_max.min(u.ramp_up)).sum();
    let n_vres = rng.random_range(1..=2);
    let vres: Vec<VresUnit> = (0..n_vres)
        .map(|k| VresUnit {
            id: format!("v{}", k + 1),
            bus: bus_ids[rng.random_range(0..n_bus)].clone(),
            capacity: rng.random_range(20.0..80.0),
        })
        .collect();
    let loads: Vec<Load> = bus_ids
        .iter()
        .enumerate()
        .filter(|(n, _)| *n == 0 || rng.random_bool(0.6))
        .map(|(n, b)| Load {
            id: format!("d{}", n + 1),
            bus: b.clone(),
        })
        .collect();
    // Keep total demand well inside the first-hour reachable capacity and the
    // smallest line rating.
    let per_load = (0.5 * cap).min(140.0) / loads.len() as f64;
    let base: Vec<Vec<f64>> = loads
        .iter()
        .map(|_| (0..t_len).map(|_| per_load * rng.random_range(0.6..1.0)).collect())
        .collect();
    let n_scen = rng.random_range(2..=5);
    let raw: Vec<f64> = (0..n_scen).map(|_| rng.random_range(0.5..1.5)).collect();
    let total: f64 = raw.iter().sum();
    let scenarios: Vec<Scenario> = (0..n_scen)
        .map(|s| Scenario {
            id: format!("s{}", s + 1),
            weight: raw[s] / total,
            vres: vres
                .iter()
                .map(|v| (0..t_len).map(|_| v.capacity * rng.random_range(0.0..1.0)).collect())
                .collect(),
            demand: base
                .iter()
                .map(|row| row.iter().map(|d| d * rng.random_range(0.97..1.03)).collect())
                .collect(),
        })
        .collect();
    let sys = PowerSystem::new(bus_ids.iter().map(|b| bus(b)).collect(), lines, units, vres, loads)
        .expect("random system is valid");
    // Weights are renormalized, so rounding in the draw above is harmless.
    let sum: f64 = scenarios.iter().map(|s| s.weight).sum();
    let scenarios = scenarios
        .into_iter()
        .map(|s| Scenario {
            weight: s.weight / sum,
            ..s
        })
        .collect();
    let set = ScenarioSet::new(&sys, (1..=t_len as u32).collect(), scenarios, Some(base)).expect("valid scenarios");
    (sys, set)
}
