//! Real-time re-dispatch against a fixed (or jointly optimized) day-ahead schedule.

use rayon::prelude::*;

use crate::config::RunConfig;
use crate::dam::{angle_flows, DamSolution, DamVars};
use crate::error::{Error, Result};
use crate::lp::{self, ConId, LinExpr, LpModel, LpStatus, Relation, Sense, VarId};
use crate::scenario::ScenarioSet;
use crate::system::{PowerSystem, StartupClass};

/// Day-ahead quantities seen by the real-time block, `[unit][period]`.
///
/// Constants when re-dispatching a cleared market, variables inside the joint
/// stochastic and bilevel models.
#[derive(Debug, Clone)]
pub struct DayAheadRefs {
    pub output: Vec<Vec<LinExpr>>,
    pub commitment: Vec<Vec<LinExpr>>,
    pub startup: Vec<Vec<LinExpr>>,
}

impl DayAheadRefs {
    pub fn fixed(da: &DamSolution) -> Self {
        let c = |rows: &Vec<Vec<f64>>| -> Vec<Vec<LinExpr>> {
            rows.iter().map(|r| r.iter().map(|&v| LinExpr::constant(v)).collect()).collect()
        };
        DayAheadRefs {
            output: c(&da.output),
            commitment: c(&da.commitment),
            startup: c(&da.startup),
        }
    }

    pub fn variables(vars: &DamVars) -> Self {
        let v = |rows: &Vec<Vec<VarId>>| -> Vec<Vec<LinExpr>> {
            rows.iter().map(|r| r.iter().map(|&v| LinExpr::var(v)).collect()).collect()
        };
        DayAheadRefs {
            output: v(&vars.output),
            commitment: v(&vars.commitment),
            startup: v(&vars.startup),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RtmVars {
    pub up: Vec<Vec<VarId>>,
    pub down: Vec<Vec<VarId>>,
    pub commitment: Vec<Vec<VarId>>,
    pub startup: Vec<Vec<VarId>>,
    pub curtail: Vec<Vec<VarId>>,
    /// `[bus][period]`
    pub shed: Vec<Vec<VarId>>,
    pub angle: Vec<Vec<Option<VarId>>>,
}

/// One scenario's re-dispatch block inside some LP.
#[derive(Debug, Clone)]
pub struct RtmBlock {
    pub vars: RtmVars,
    pub balance: Vec<Vec<ConId>>,
    /// Re-dispatch cost of the scenario; the caller decides its weight.
    pub cost: LinExpr,
}

/// Adds the re-dispatch variables and rows of scenario position `w` to `lp`.
pub fn add_rtm_block(
    lp: &mut LpModel,
    system: &PowerSystem,
    scenarios: &ScenarioSet,
    w: usize,
    da: &DayAheadRefs,
    voll: f64,
    prefix: &str,
) -> Result<RtmBlock> {
    let labels = scenarios.periods();
    let t_len = labels.len();
    let scen = &scenarios.scenarios()[w];
    let demand = scenarios.bus_demand(system, w);

    let mut grid = |what: &str, ids: &[&str], lower: &dyn Fn(usize, usize) -> f64, upper: &dyn Fn(usize, usize) -> f64| {
        ids.iter()
            .enumerate()
            .map(|(e, id)| {
                (0..t_len)
                    .map(|t| lp.add_var(format!("{prefix}{what}[{id},{}]", labels[t]), lower(e, t), upper(e, t)))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()
    };
    let unit_ids: Vec<&str> = system.conventional_units.iter().map(|u| u.id.as_str()).collect();
    let vres_ids: Vec<&str> = system.vres_units.iter().map(|k| k.id.as_str()).collect();
    let bus_ids: Vec<&str> = system.buses.iter().map(|b| b.id.as_str()).collect();
    let zero = |_: usize, _: usize| 0.0;
    let inf = |_: usize, _: usize| f64::INFINITY;
    let one = |_: usize, _: usize| 1.0;
    let up = grid("up", &unit_ids, &zero, &inf)?;
    let down = grid("down", &unit_ids, &zero, &inf)?;
    let commitment = grid("u", &unit_ids, &zero, &one)?;
    let startup = grid("c", &unit_ids, &zero, &inf)?;
    let curtail = grid("curtail", &vres_ids, &zero, &|k, t| scen.vres[k][t])?;
    let shed = grid("shed", &bus_ids, &zero, &|n, t| demand[n][t])?;
    let mut angle = Vec::with_capacity(system.num_buses());
    for (n, id) in bus_ids.iter().enumerate() {
        let row = if system.is_reference(n) {
            vec![None; t_len]
        } else {
            (0..t_len)
                .map(|t| lp.add_free_var(format!("{prefix}theta[{id},{}]", labels[t])).map(Some))
                .collect::<Result<Vec<_>>>()?
        };
        angle.push(row);
    }

    let mut cost = LinExpr::new();
    for (i, u) in system.conventional_units.iter().enumerate() {
        for t in 0..t_len {
            cost.add_term(up[i][t], u.redispatch_up_cost);
            cost.add_term(down[i][t], -u.redispatch_down_cost);
            cost.add_term(commitment[i][t], u.no_load_cost);
            cost.add_scaled(&da.commitment[i][t], -u.no_load_cost);
            cost.add_term(startup[i][t], 1.0);
        }
    }
    for row in &shed {
        for &v in row {
            cost.add_term(v, voll);
        }
    }

    // Final output of unit i in period t: p* + up - down.
    let dispatched = |i: usize, t: usize| -> LinExpr {
        let mut e = da.output[i][t].clone();
        e.add_term(up[i][t], 1.0).add_term(down[i][t], -1.0);
        e
    };

    let flows = angle_flows(system, &angle, t_len);
    let mut balance = Vec::with_capacity(system.num_buses());
    for (n, id) in bus_ids.iter().enumerate() {
        let mut row = Vec::with_capacity(t_len);
        for t in 0..t_len {
            let mut e = LinExpr::new();
            for i in (0..system.num_units()).filter(|&i| system.unit_bus(i) == n) {
                e.add_scaled(&dispatched(i, t), 1.0);
            }
            for k in (0..system.num_vres()).filter(|&k| system.vres_bus(k) == n) {
                e.add_constant(scen.vres[k][t]);
                e.add_term(curtail[k][t], -1.0);
            }
            for (l, f) in flows.iter().enumerate() {
                let (from, to) = system.line_ends(l);
                if from == n {
                    e.add_scaled(&f[t], -1.0);
                }
                if to == n {
                    e.add_scaled(&f[t], 1.0);
                }
            }
            e.add_term(shed[n][t], 1.0);
            row.push(lp.add_constraint(format!("{prefix}balance[{id},{}]", labels[t]), &e, Relation::Eq, demand[n][t])?);
        }
        balance.push(row);
    }

    for (l, line) in system.lines.iter().enumerate() {
        for t in 0..t_len {
            let f = &flows[l][t];
            lp.add_constraint(format!("{prefix}flow_min[{l},{}]", labels[t]), f, Relation::Ge, -line.capacity)?;
            lp.add_constraint(format!("{prefix}flow_max[{l},{}]", labels[t]), f, Relation::Le, line.capacity)?;
        }
    }

    for (i, u) in system.conventional_units.iter().enumerate() {
        for t in 0..t_len {
            let name = |what: &str| format!("{prefix}{what}[{},{}]", u.id, labels[t]);
            let on = commitment[i][t];
            let mut e = LinExpr::var(on);
            e.add_scaled(&da.commitment[i][t], -1.0);
            let rel = match u.startup_class {
                StartupClass::Fast => Relation::Ge,
                StartupClass::Slow => Relation::Eq,
            };
            lp.add_constraint(name("commit_follow"), &e, rel, 0.0)?;

            let p = dispatched(i, t);
            let mut e = p.clone();
            e.add_term(on, -u.p_min);
            lp.add_constraint(name("output_min"), &e, Relation::Ge, 0.0)?;
            let mut e = p.clone();
            e.add_term(on, -u.p_max);
            lp.add_constraint(name("output_max"), &e, Relation::Le, 0.0)?;

            // c_rt + c_da - CSU (u_t - u_{t-1}) >= 0
            let mut e = LinExpr::var(startup[i][t]);
            e.add_scaled(&da.startup[i][t], 1.0);
            e.add_term(on, -u.startup_cost);
            if t == 0 {
                e.add_constant(u.startup_cost * u.initial_commitment);
            } else {
                e.add_term(commitment[i][t - 1], u.startup_cost);
            }
            lp.add_constraint(name("startup_step"), &e, Relation::Ge, 0.0)?;

            let mut step = p;
            if t == 0 {
                step.add_constant(-u.initial_output);
            } else {
                step.add_scaled(&dispatched(i, t - 1), -1.0);
            }
            let mut e = step.clone();
            if t == 0 {
                e.add_constant(u.ramp_down * u.initial_commitment);
            } else {
                e.add_term(commitment[i][t - 1], u.ramp_down);
            }
            lp.add_constraint(name("ramp_down"), &e, Relation::Ge, 0.0)?;
            let mut e = step;
            e.add_term(on, -u.ramp_up);
            lp.add_constraint(name("ramp_up"), &e, Relation::Le, 0.0)?;
        }
    }

    Ok(RtmBlock {
        vars: RtmVars {
            up,
            down,
            commitment,
            startup,
            curtail,
            shed,
            angle,
        },
        balance,
        cost,
    })
}

/// Standalone re-dispatch LP of one scenario against a cleared day-ahead market.
pub fn build_rtm(
    system: &PowerSystem,
    scenarios: &ScenarioSet,
    da: &DamSolution,
    scenario_id: &str,
    voll: f64,
) -> Result<(LpModel, RtmBlock)> {
    let w = scenarios
        .position(scenario_id)
        .ok_or_else(|| Error::UnknownScenario(scenario_id.to_string()))?;
    check_alignment(system, scenarios, da)?;
    let mut lp = LpModel::new(Sense::Minimize);
    let block = add_rtm_block(&mut lp, system, scenarios, w, &DayAheadRefs::fixed(da), voll, "")?;
    lp.add_objective(&block.cost, 1.0);
    Ok((lp, block))
}

fn check_alignment(system: &PowerSystem, scenarios: &ScenarioSet, da: &DamSolution) -> Result<()> {
    let t_len = scenarios.num_periods();
    if da.output.len() != system.num_units() || da.output.iter().any(|r| r.len() != t_len) {
        return Err(Error::Model("day-ahead schedule does not match the system and periods".into()));
    }
    Ok(())
}

/// Re-dispatch result of one scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct RtmScenarioSolution {
    pub id: String,
    pub weight: f64,
    /// `[unit][period]`, MW
    pub up: Vec<Vec<f64>>,
    pub down: Vec<Vec<f64>>,
    pub commitment: Vec<Vec<f64>>,
    pub startup: Vec<Vec<f64>>,
    /// `[vres][period]`, MW
    pub curtail: Vec<Vec<f64>>,
    /// `[bus][period]`, MW
    pub shed: Vec<Vec<f64>>,
    pub angle: Vec<Vec<f64>>,
    /// Real-time nodal prices `[bus][period]`, $/MWh
    pub price: Vec<Vec<f64>>,
    pub cost: f64,
}

/// Re-dispatch results for every scenario, in scenario order.
#[derive(Debug, Clone, PartialEq)]
pub struct RtmSolution {
    pub scenarios: Vec<RtmScenarioSolution>,
}

impl RtmSolution {
    pub fn expected_cost(&self) -> f64 {
        self.scenarios.iter().map(|s| s.weight * s.cost).sum()
    }

    pub fn costs(&self) -> Vec<f64> {
        self.scenarios.iter().map(|s| s.cost).collect()
    }
}

/// Clears the real-time market of one scenario.
pub fn solve_rtm(
    system: &PowerSystem,
    scenarios: &ScenarioSet,
    da: &DamSolution,
    scenario_id: &str,
    config: &RunConfig,
) -> Result<RtmScenarioSolution> {
    let (model, block) = build_rtm(system, scenarios, da, scenario_id, config.voll)?;
    let sol = lp::solve(&model, config.solver_tolerance)?;
    match sol.status {
        LpStatus::Optimal => {}
        LpStatus::Infeasible => {
            return Err(Error::RtmInfeasible {
                scenario: scenario_id.to_string(),
            })
        }
        LpStatus::Unbounded => return Err(Error::Solver(format!("real-time LP unbounded for {scenario_id}"))),
    }
    let vals = |rows: &Vec<Vec<VarId>>| -> Vec<Vec<f64>> {
        rows.iter().map(|r| r.iter().map(|&v| sol.value(v)).collect()).collect()
    };
    let v = &block.vars;
    let w = scenarios.position(scenario_id).expect("checked in build_rtm");
    Ok(RtmScenarioSolution {
        id: scenario_id.to_string(),
        weight: scenarios.scenarios()[w].weight,
        up: vals(&v.up),
        down: vals(&v.down),
        commitment: vals(&v.commitment),
        startup: vals(&v.startup),
        curtail: vals(&v.curtail),
        shed: vals(&v.shed),
        angle: v
            .angle
            .iter()
            .map(|r| r.iter().map(|a| a.map_or(0.0, |a| sol.value(a))).collect())
            .collect(),
        price: block
            .balance
            .iter()
            .map(|r| r.iter().map(|&c| sol.dual(c)).collect())
            .collect(),
        cost: sol.objective,
    })
}

/// Clears every scenario concurrently; results keep scenario order.
pub fn solve_rtm_all(
    system: &PowerSystem,
    scenarios: &ScenarioSet,
    da: &DamSolution,
    config: &RunConfig,
) -> Result<RtmSolution> {
    let solved = scenarios
        .scenarios()
        .par_iter()
        .map(|s| solve_rtm(system, scenarios, da, &s.id, config))
        .collect::<Result<Vec<_>>>()?;
    Ok(RtmSolution { scenarios: solved })
}

/// Probability-weighted re-dispatch cost.
pub fn expected_rt_cost(
    system: &PowerSystem,
    scenarios: &ScenarioSet,
    da: &DamSolution,
    config: &RunConfig,
) -> Result<f64> {
    Ok(solve_rtm_all(system, scenarios, da, config)?.expected_cost())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dam::solve_dam;
    use crate::fixtures;
    use crate::scenario::{BidVector, Scenario};
    use approx::assert_abs_diff_eq;

    fn cfg() -> RunConfig {
        RunConfig::default()
    }

    #[test]
    fn two_bus_shortfall_and_surplus() {
        let (sys, set) = fixtures::two_bus(30.0);
        let da = solve_dam(&sys, &set, &BidVector::uniform(1, 1, 15.0), 1e-6).unwrap();
        let short = solve_rtm(&sys, &set, &da, "w2", &cfg()).unwrap();
        assert_abs_diff_eq!(short.cost, 450.0, epsilon = 1e-6);
        assert_abs_diff_eq!(short.up[0][0], 15.0, epsilon = 1e-6);
        let long = solve_rtm(&sys, &set, &da, "w1", &cfg()).unwrap();
        assert_abs_diff_eq!(long.cost, -75.0, epsilon = 1e-6);
        assert_abs_diff_eq!(expected_rt_cost(&sys, &set, &da, &cfg()).unwrap(), 187.5, epsilon = 1e-6);
        assert_abs_diff_eq!(short.price[1][0], 30.0, epsilon = 1e-6);
        assert_abs_diff_eq!(long.price[1][0], 5.0, epsilon = 1e-6);
    }

    #[test]
    fn unknown_scenario() {
        let (sys, set) = fixtures::two_bus(30.0);
        let da = solve_dam(&sys, &set, &BidVector::zeros(1, 1), 1e-6).unwrap();
        let err = solve_rtm(&sys, &set, &da, "nope", &cfg()).unwrap_err();
        assert!(matches!(err, Error::UnknownScenario(_)));
    }

    #[test]
    fn forecast_scenario_needs_no_recourse() {
        let (sys, _) = fixtures::two_bus(30.0);
        let set = fixtures::two_bus_scenarios(&sys, &[(1.0, 20.0)], 50.0);
        let da = solve_dam(&sys, &set, &BidVector::uniform(1, 1, 20.0), 1e-6).unwrap();
        let rt = solve_rtm_all(&sys, &set, &da, &cfg()).unwrap();
        assert_abs_diff_eq!(rt.expected_cost(), 0.0, epsilon = 1e-9);
    }

    #[test]
    fn zero_weight_scenario_drops_out() {
        let (sys, _) = fixtures::two_bus(30.0);
        let set = fixtures::two_bus_scenarios(&sys, &[(1.0, 0.0), (0.0, 30.0)], 50.0);
        let da = solve_dam(&sys, &set, &BidVector::uniform(1, 1, 15.0), 1e-6).unwrap();
        assert_abs_diff_eq!(expected_rt_cost(&sys, &set, &da, &cfg()).unwrap(), 450.0, epsilon = 1e-6);
    }

    #[test]
    fn only_shedding_when_everything_is_off() {
        let (sys, set) = fixtures::all_slow_offline();
        let da = crate::dam::DamSolution {
            output: vec![vec![0.0]],
            commitment: vec![vec![0.0]],
            startup: vec![vec![0.0]],
            vres: vec![vec![0.0]],
            angle: vec![vec![0.0]; 2],
            flow: vec![vec![0.0]],
            cost: 0.0,
            duals: fixtures::empty_duals(&sys, 1),
            bids: BidVector::zeros(1, 1),
        };
        let rt = solve_rtm(&sys, &set, &da, "s1", &cfg()).unwrap();
        assert_abs_diff_eq!(rt.cost, 50.0 * cfg().voll, epsilon = 1e-6);
        assert_abs_diff_eq!(rt.shed[1][0], 50.0, epsilon = 1e-6);
    }

    #[test]
    fn demand_beyond_capacity_sheds() {
        let (sys, _) = fixtures::two_bus(30.0);
        let set = ScenarioSet::new(
            &sys,
            vec![1],
            vec![Scenario {
                id: "spike".into(),
                weight: 1.0,
                vres: vec![vec![0.0]],
                demand: vec![vec![150.0]],
            }],
            Some(vec![vec![50.0]]),
        )
        .unwrap();
        let da = solve_dam(&sys, &set, &BidVector::zeros(1, 1), 1e-6).unwrap();
        let rt = solve_rtm(&sys, &set, &da, "spike", &cfg()).unwrap();
        assert!(rt.shed[1][0] >= 50.0 - 1e-6);
    }

    #[test]
    fn surplus_never_costs_money() {
        let (sys, set) = fixtures::five_bus();
        let bids = BidVector::zeros(sys.num_vres(), set.num_periods());
        let da = solve_dam(&sys, &set, &bids, 1e-6).unwrap();
        // Zero bids and demand at or below the forecast: every scenario is a surplus.
        let low: Vec<Scenario> = set
            .scenarios()
            .iter()
            .map(|s| Scenario {
                demand: set.da_demand().to_vec(),
                ..s.clone()
            })
            .collect();
        let low = ScenarioSet::new(&sys, set.periods().to_vec(), low, Some(set.da_demand().to_vec())).unwrap();
        let rt = solve_rtm_all(&sys, &low, &da, &cfg()).unwrap();
        for s in &rt.scenarios {
            assert!(s.cost <= 1e-6, "{} costs {}", s.id, s.cost);
        }
    }

    #[test]
    fn slow_units_keep_their_commitment() {
        let (sys, set) = fixtures::five_bus();
        let da = solve_dam(&sys, &set, &BidVector(set.expected_vres()), 1e-6).unwrap();
        let rt = solve_rtm_all(&sys, &set, &da, &cfg()).unwrap();
        for s in &rt.scenarios {
            for (i, u) in sys.conventional_units.iter().enumerate() {
                for t in 0..set.num_periods() {
                    let (rt_u, da_u) = (s.commitment[i][t], da.commitment[i][t]);
                    match u.startup_class {
                        StartupClass::Slow => assert!((rt_u - da_u).abs() <= 1e-7),
                        StartupClass::Fast => assert!(rt_u >= da_u - 1e-7 && rt_u <= 1.0 + 1e-7),
                    }
                }
            }
        }
    }
}
