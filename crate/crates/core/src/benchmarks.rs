//! Reference strategies for the day-ahead VRES offer and the harnesses that
//! compare them: mean-forecast bidding, joint stochastic dispatch, brute-force
//! bid search, out-of-sample re-pricing and rolling-horizon stitching.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bid::{evaluate_bids, quantity_bounds, solve_bid};
use crate::config::RunConfig;
use crate::dam::{build_dam, extract, DamSolution};
use crate::error::{invalid, Error, Result};
use crate::lp::{self, LpModel, LpStatus, Sense};
use crate::rtm::{add_rtm_block, solve_rtm_all, DayAheadRefs, RtmSolution};
use crate::scenario::{BidVector, ScenarioSet};
use crate::system::PowerSystem;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Framework {
    /// Offer the expected VRES output.
    Myd,
    /// Offer the quantities chosen by the bilevel relaxation.
    Bid,
    /// Joint day-ahead and real-time dispatch over all scenarios.
    Std,
    /// Exhaustive search over a bid grid.
    Oracle,
}

impl Framework {
    pub const ALL: [Framework; 4] = [Framework::Myd, Framework::Bid, Framework::Std, Framework::Oracle];

    pub fn label(self) -> &'static str {
        match self {
            Framework::Myd => "MyD",
            Framework::Bid => "BiD",
            Framework::Std => "StD",
            Framework::Oracle => "Oracle",
        }
    }
}

impl fmt::Display for Framework {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.label())
    }
}

impl std::str::FromStr for Framework {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "myd" => Ok(Framework::Myd),
            "bid" => Ok(Framework::Bid),
            "std" => Ok(Framework::Std),
            "oracle" => Ok(Framework::Oracle),
            other => Err(invalid(format!("unknown framework {other:?}"))),
        }
    }
}

/// System cost of one framework, split by market.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub framework: Framework,
    /// Day-ahead cost plus expected real-time cost, $.
    pub total: f64,
    pub da_cost: f64,
    pub expected_rt_cost: f64,
    pub scenario_ids: Vec<String>,
    pub weights: Vec<f64>,
    /// Real-time cost per scenario, $.
    pub rt_costs: Vec<f64>,
    /// Probability-weighted standard deviation of the per-scenario total
    /// `da_cost + rt_costs[ω]`, $.
    pub std: f64,
}

impl CostReport {
    pub fn new(framework: Framework, da_cost: f64, scenario_ids: Vec<String>, weights: Vec<f64>, rt_costs: Vec<f64>) -> Self {
        let expected_rt_cost: f64 = weights.iter().zip(&rt_costs).map(|(p, c)| p * c).sum();
        let var: f64 = weights
            .iter()
            .zip(&rt_costs)
            .map(|(p, c)| p * (c - expected_rt_cost).powi(2))
            .sum();
        CostReport {
            framework,
            total: da_cost + expected_rt_cost,
            da_cost,
            expected_rt_cost,
            scenario_ids,
            weights,
            rt_costs,
            std: var.max(0.0).sqrt(),
        }
    }

    fn from_markets(framework: Framework, dam: &DamSolution, rtm: &RtmSolution) -> Self {
        CostReport::new(
            framework,
            dam.cost,
            rtm.scenarios.iter().map(|s| s.id.clone()).collect(),
            rtm.scenarios.iter().map(|s| s.weight).collect(),
            rtm.costs(),
        )
    }
}

/// Everything one framework produced: costs, the cleared markets, and the
/// offers where the framework has any.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameworkRun {
    pub report: CostReport,
    pub dam: DamSolution,
    pub rtm: RtmSolution,
    pub bids: Option<BidVector>,
    /// Objective of the framework's own optimization model when it has one:
    /// the relaxed LP for BiD, the joint LP for StD.
    pub model_objective: Option<f64>,
}

impl FrameworkRun {
    fn from_markets(framework: Framework, dam: DamSolution, rtm: RtmSolution, bids: Option<BidVector>) -> Self {
        FrameworkRun {
            report: CostReport::from_markets(framework, &dam, &rtm),
            dam,
            rtm,
            bids,
            model_objective: None,
        }
    }
}

/// Offers the expected VRES output in every period.
pub fn run_myd(system: &PowerSystem, scenarios: &ScenarioSet, config: &RunConfig) -> Result<FrameworkRun> {
    let bids = BidVector(scenarios.expected_vres());
    let eval = evaluate_bids(system, scenarios, &bids, config)?;
    Ok(FrameworkRun::from_markets(Framework::Myd, eval.dam, eval.rtm, Some(bids)))
}

/// Offers the quantities chosen by the bilevel relaxation.
pub fn run_bid(system: &PowerSystem, scenarios: &ScenarioSet, config: &RunConfig) -> Result<FrameworkRun> {
    let r = solve_bid(system, scenarios, config)?;
    let mut run = FrameworkRun::from_markets(Framework::Bid, r.evaluation.dam, r.evaluation.rtm, Some(r.bids));
    run.model_objective = Some(r.relaxed_objective);
    Ok(run)
}

/// Co-optimizes the day-ahead schedule with every real-time scenario. The
/// day-ahead block may schedule VRES up to installed capacity.
///
/// Real-time results are cleared again against the frozen schedule so that
/// prices and per-scenario costs come from the same market model the other
/// frameworks use; the joint objective is kept as `model_objective`.
pub fn run_std(system: &PowerSystem, scenarios: &ScenarioSet, config: &RunConfig) -> Result<FrameworkRun> {
    let cap = BidVector::capacity(system, scenarios.num_periods());
    let lower = build_dam(system, scenarios, &cap)?;
    let mut lp = LpModel::new(Sense::Minimize);
    let (map, rows) = lp.append(&lower.lp, "da.", |_| false)?;
    let vars = lower.vars.remap(&map);
    let rows = lower.rows.remap(&rows);
    let refs = DayAheadRefs::variables(&vars);
    for (w, s) in scenarios.scenarios().iter().enumerate() {
        let block = add_rtm_block(&mut lp, system, scenarios, w, &refs, config.voll, &format!("rt[{}].", s.id))?;
        lp.add_objective(&block.cost, s.weight);
    }
    let sol = lp::solve(&lp, config.solver_tolerance)?;
    match sol.status {
        LpStatus::Optimal => {}
        LpStatus::Infeasible => return Err(Error::StochasticInfeasible),
        LpStatus::Unbounded => return Err(Error::Solver("stochastic dispatch LP reported unbounded".into())),
    }
    let dam = extract(system, &vars, &rows, &sol, &cap);
    let rtm = solve_rtm_all(system, scenarios, &dam, config)?;
    let mut run = FrameworkRun::from_markets(Framework::Std, dam, rtm, None);
    run.model_objective = Some(sol.objective);
    Ok(run)
}

/// Candidate offers per `[vres][period]`: `0, δ, 2δ, …` below the bid bound,
/// plus the bound itself.
pub fn oracle_grid(system: &PowerSystem, scenarios: &ScenarioSet, config: &RunConfig) -> Vec<Vec<Vec<f64>>> {
    let step = config.oracle_step;
    quantity_bounds(system, scenarios, config.gamma)
        .into_iter()
        .map(|row| {
            row.into_iter()
                .map(|beta| {
                    let mut pts = Vec::new();
                    let mut i = 0u64;
                    loop {
                        let v = i as f64 * step;
                        if v >= beta - 1e-9 * (1.0 + beta) {
                            break;
                        }
                        pts.push(v);
                        i += 1;
                    }
                    pts.push(beta);
                    pts
                })
                .collect()
        })
        .collect()
}

/// Result of the exhaustive bid search.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleRun {
    pub run: FrameworkRun,
    /// Evaluated cost of every grid point, in enumeration order (last
    /// `[vres][period]` cell varies fastest).
    pub costs: Vec<f64>,
    pub grid: Vec<Vec<Vec<f64>>>,
}

/// Evaluates every point of the bid grid and keeps the cheapest; ties go to
/// the earliest point.
pub fn run_oracle(system: &PowerSystem, scenarios: &ScenarioSet, config: &RunConfig) -> Result<OracleRun> {
    if !(config.oracle_step > 0.0) {
        return Err(invalid("oracle_step must be > 0"));
    }
    let grid = oracle_grid(system, scenarios, config);
    let cells: Vec<&Vec<f64>> = grid.iter().flatten().collect();
    let points = cells
        .iter()
        .try_fold(1u128, |acc, c| acc.checked_mul(c.len() as u128))
        .unwrap_or(u128::MAX);
    let cap = config.oracle_cap as u128;
    if points > cap {
        return Err(Error::GridTooLarge { points, cap });
    }
    let t_len = scenarios.num_periods();
    let point = |mut idx: u64| -> BidVector {
        let mut flat = vec![0.0; cells.len()];
        for (c, cell) in cells.iter().enumerate().rev() {
            let n = cell.len() as u64;
            flat[c] = cell[(idx % n) as usize];
            idx /= n;
        }
        BidVector(flat.chunks(t_len.max(1)).map(|r| r.to_vec()).collect())
    };
    let costs = (0..points as u64)
        .into_par_iter()
        .map(|i| evaluate_bids(system, scenarios, &point(i), config).map(|e| e.cost))
        .collect::<Result<Vec<f64>>>()?;
    let best = costs
        .iter()
        .enumerate()
        .fold(0, |b, (i, &c)| if c < costs[b] { i } else { b });
    let bids = if system.num_vres() == 0 {
        BidVector(Vec::new())
    } else {
        point(best as u64)
    };
    let eval = evaluate_bids(system, scenarios, &bids, config)?;
    Ok(OracleRun {
        run: FrameworkRun::from_markets(Framework::Oracle, eval.dam, eval.rtm, Some(bids)),
        costs,
        grid,
    })
}

pub fn run_framework(
    system: &PowerSystem,
    scenarios: &ScenarioSet,
    framework: Framework,
    config: &RunConfig,
) -> Result<FrameworkRun> {
    match framework {
        Framework::Myd => run_myd(system, scenarios, config),
        Framework::Bid => run_bid(system, scenarios, config),
        Framework::Std => run_std(system, scenarios, config),
        Framework::Oracle => run_oracle(system, scenarios, config).map(|o| o.run),
    }
}

/// Totals of a frozen day-ahead schedule re-priced against fresh scenario sets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutOfSample {
    pub framework: Framework,
    /// Day-ahead cost plus expected real-time cost per test set, $.
    pub totals: Vec<f64>,
    pub mean: f64,
    /// Population standard deviation across test sets, $.
    pub std: f64,
}

/// Re-prices only the real-time market of each test set against the
/// day-ahead schedule of `run`.
pub fn reprice(
    system: &PowerSystem,
    run: &FrameworkRun,
    tests: &[ScenarioSet],
    config: &RunConfig,
) -> Result<OutOfSample> {
    let t_len = run.dam.output.first().map_or(run.dam.bids.0.first().map_or(0, |r| r.len()), |r| r.len());
    for (i, set) in tests.iter().enumerate() {
        if set.num_periods() != t_len {
            return Err(invalid(format!(
                "test set #{i} has {} periods, the schedule has {t_len}",
                set.num_periods()
            )));
        }
    }
    let totals = tests
        .par_iter()
        .map(|set| Ok(run.dam.cost + solve_rtm_all(system, set, &run.dam, config)?.expected_cost()))
        .collect::<Result<Vec<f64>>>()?;
    let n = totals.len().max(1) as f64;
    let mean = totals.iter().sum::<f64>() / n;
    let std = (totals.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
    Ok(OutOfSample {
        framework: run.report.framework,
        totals,
        mean,
        std,
    })
}

/// Runs `framework` on the training set, freezes its day-ahead schedule and
/// re-prices each test set.
pub fn out_of_sample(
    system: &PowerSystem,
    train: &ScenarioSet,
    framework: Framework,
    tests: &[ScenarioSet],
    config: &RunConfig,
) -> Result<OutOfSample> {
    for (i, set) in tests.iter().enumerate() {
        if set.periods() != train.periods() {
            return Err(invalid(format!("test set #{i} does not share the training periods")));
        }
    }
    let run = run_framework(system, train, framework, config)?;
    reprice(system, &run, tests, config)
}

/// Initial unit states a window started from, `[unit]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Handoff {
    pub commitment: Vec<f64>,
    pub output: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RollingRun {
    /// Costs summed over windows, per scenario.
    pub report: CostReport,
    pub windows: Vec<FrameworkRun>,
    /// State each window started from; the first entry is the system's own.
    pub handoffs: Vec<Handoff>,
}

/// Solves consecutive windows of `window` periods, starting each one from the
/// previous window's last day-ahead commitment and output.
pub fn rolling_horizon(
    system: &PowerSystem,
    scenarios: &ScenarioSet,
    framework: Framework,
    window: usize,
    config: &RunConfig,
) -> Result<RollingRun> {
    let t_len = scenarios.num_periods();
    if window == 0 || t_len % window != 0 {
        return Err(invalid(format!("window {window} does not divide the {t_len}-period horizon")));
    }
    let mut sys = system.clone();
    let mut windows = Vec::with_capacity(t_len / window);
    let mut handoffs = Vec::with_capacity(t_len / window);
    let mut da_cost = 0.0;
    let mut rt_costs = vec![0.0; scenarios.len()];
    for start in (0..t_len).step_by(window) {
        handoffs.push(Handoff {
            commitment: sys.conventional_units.iter().map(|u| u.initial_commitment).collect(),
            output: sys.conventional_units.iter().map(|u| u.initial_output).collect(),
        });
        let part = scenarios.window(start..start + window);
        let run = run_framework(&sys, &part, framework, config)?;
        da_cost += run.report.da_cost;
        for (acc, c) in rt_costs.iter_mut().zip(&run.report.rt_costs) {
            *acc += c;
        }
        let mut next = sys.clone();
        for (i, u) in next.conventional_units.iter_mut().enumerate() {
            let c = run.dam.commitment[i][window - 1].clamp(0.0, 1.0);
            u.initial_commitment = c;
            u.initial_output = run.dam.output[i][window - 1].clamp(c * u.p_min, c * u.p_max);
        }
        sys = next.validate()?;
        windows.push(run);
    }
    let report = CostReport::new(
        framework,
        da_cost,
        scenarios.scenarios().iter().map(|s| s.id.clone()).collect(),
        scenarios.weights(),
        rt_costs,
    );
    Ok(RollingRun {
        report,
        windows,
        handoffs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use approx::assert_abs_diff_eq;

    fn cfg() -> RunConfig {
        RunConfig {
            gamma: 2.0,
            ..RunConfig::default()
        }
    }

    #[test]
    fn two_bus_reference_costs() {
        let (sys, set) = fixtures::two_bus(30.0);
        let myd = run_myd(&sys, &set, &cfg()).unwrap();
        assert_abs_diff_eq!(myd.report.total, 537.5, epsilon = 1e-6);
        assert_eq!(myd.bids, Some(BidVector(vec![vec![15.0]])));
        let std = run_std(&sys, &set, &cfg()).unwrap();
        assert_abs_diff_eq!(std.report.total, 425.0, epsilon = 1e-6);
        assert_abs_diff_eq!(std.model_objective.unwrap(), 425.0, epsilon = 1e-6);
    }

    #[test]
    fn oracle_scans_two_bus_family() {
        let (sys, set) = fixtures::two_bus(30.0);
        let o = run_oracle(&sys, &set, &cfg()).unwrap();
        assert_eq!(o.costs.len(), 31);
        assert_eq!(o.run.bids, Some(BidVector(vec![vec![0.0]])));
        assert_abs_diff_eq!(o.run.report.total, 425.0, epsilon = 1e-6);
        assert!(o.costs.iter().all(|&c| c >= o.run.report.total - 1e-9));

        let (sys, set) = fixtures::two_bus(12.0);
        let o = run_oracle(&sys, &set, &cfg()).unwrap();
        assert_eq!(o.run.bids, Some(BidVector(vec![vec![30.0]])));
        assert_abs_diff_eq!(o.run.report.total, 380.0, epsilon = 1e-6);
    }

    #[test]
    fn oracle_grid_ends_on_the_bound() {
        let (sys, set) = fixtures::two_bus(30.0);
        let c = RunConfig {
            gamma: 1.0,
            oracle_step: 4.0,
            ..RunConfig::default()
        };
        assert_eq!(oracle_grid(&sys, &set, &c), vec![vec![vec![0.0, 4.0, 8.0, 12.0, 15.0]]]);
    }

    #[test]
    fn oracle_refuses_large_grids() {
        let (sys, set) = fixtures::two_bus(30.0);
        let c = RunConfig {
            oracle_cap: 10,
            ..cfg()
        };
        assert!(matches!(
            run_oracle(&sys, &set, &c),
            Err(Error::GridTooLarge { points: 31, cap: 10 })
        ));
    }

    #[test]
    fn deterministic_scenario_collapses_benchmarks() {
        let (sys, _) = fixtures::two_bus(30.0);
        let set = fixtures::two_bus_scenarios(&sys, &[(1.0, 20.0)], 50.0);
        let myd = run_myd(&sys, &set, &cfg()).unwrap();
        let std = run_std(&sys, &set, &cfg()).unwrap();
        assert_abs_diff_eq!(myd.report.total, std.report.total, epsilon = 1e-6);
        assert_abs_diff_eq!(std.report.total, std.report.da_cost, epsilon = 1e-6);
        assert_abs_diff_eq!(myd.report.std, 0.0, epsilon = 1e-9);
    }

    #[test]
    fn zero_wind_matches_zero_offer() {
        let (sys, _) = fixtures::two_bus(30.0);
        let set = fixtures::two_bus_scenarios(&sys, &[(0.5, 0.0), (0.5, 0.0)], 50.0);
        let myd = run_myd(&sys, &set, &cfg()).unwrap();
        let zero = evaluate_bids(&sys, &set, &BidVector::zeros(1, 1), &cfg()).unwrap();
        assert_eq!(myd.report.total, zero.cost);
    }

    #[test]
    fn report_spread_by_hand() {
        // Totals 350 + 450 and 350 - 75 with equal weights.
        let r = CostReport::new(Framework::Myd, 350.0, vec!["a".into(), "b".into()], vec![0.5, 0.5], vec![450.0, -75.0]);
        assert_abs_diff_eq!(r.total, 537.5, epsilon = 1e-12);
        assert_abs_diff_eq!(r.std, 262.5, epsilon = 1e-12);
    }

    #[test]
    fn out_of_sample_on_training_set_is_in_sample() {
        let (sys, set) = fixtures::two_bus(30.0);
        for fw in [Framework::Myd, Framework::Std] {
            let run = run_framework(&sys, &set, fw, &cfg()).unwrap();
            let oos = reprice(&sys, &run, &[set.clone(), set.clone()], &cfg()).unwrap();
            assert_eq!(oos.totals, vec![run.report.total; 2]);
            assert_eq!(oos.std, 0.0);
        }
    }

    #[test]
    fn out_of_sample_rejects_other_horizons() {
        let (sys, set) = fixtures::two_bus(30.0);
        let (_, longer) = fixtures::two_bus_periods(30.0, 2);
        assert!(out_of_sample(&sys, &set, Framework::Myd, &[longer], &cfg()).is_err());
    }

    #[test]
    fn one_window_is_a_single_solve() {
        let (sys, set) = fixtures::two_bus_day();
        let whole = run_myd(&sys, &set, &cfg()).unwrap();
        let rolled = rolling_horizon(&sys, &set, Framework::Myd, 8, &cfg()).unwrap();
        assert_eq!(rolled.report, whole.report);
    }

    #[test]
    fn separable_periods_do_not_care_about_windows() {
        let (sys, set) = fixtures::two_bus_periods(30.0, 4);
        let whole = rolling_horizon(&sys, &set, Framework::Myd, 4, &cfg()).unwrap();
        let hourly = rolling_horizon(&sys, &set, Framework::Myd, 1, &cfg()).unwrap();
        assert_abs_diff_eq!(whole.report.total, hourly.report.total, epsilon = 1e-6);
    }

    #[test]
    fn windows_start_where_the_previous_one_ended() {
        let (sys, set) = fixtures::two_bus_day();
        for fw in [Framework::Myd, Framework::Std] {
            let rolled = rolling_horizon(&sys, &set, fw, 4, &cfg()).unwrap();
            assert_eq!(rolled.windows.len(), 2);
            let first = &rolled.windows[0].dam;
            let h = &rolled.handoffs[1];
            for i in 0..sys.num_units() {
                assert_abs_diff_eq!(h.commitment[i], first.commitment[i][3], epsilon = 1e-9);
                assert_abs_diff_eq!(h.output[i], first.output[i][3], epsilon = 1e-6);
            }
        }
    }

    #[test]
    fn window_must_divide_horizon() {
        let (sys, set) = fixtures::two_bus_day();
        assert!(rolling_horizon(&sys, &set, Framework::Myd, 3, &cfg()).is_err());
        assert!(rolling_horizon(&sys, &set, Framework::Myd, 0, &cfg()).is_err());
    }

    #[test]
    fn framework_names_round_trip() {
        for fw in Framework::ALL {
            assert_eq!(fw.label().parse::<Framework>().unwrap(), fw);
            let json = serde_json::to_string(&fw).unwrap();
            assert_eq!(serde_json::from_str::<Framework>(&json).unwrap(), fw);
        }
        assert!("mpc".parse::<Framework>().is_err());
    }
}
