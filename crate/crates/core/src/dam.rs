//! Day-ahead market clearing: a relaxed unit-commitment DC-OPF.
//!
//! Every variable is declared free and every bound is an explicit row, so each
//! bound carries its own multiplier. That makes the full dual vector available
//! for prices, the bid relaxation and the optimality checks below.

use crate::error::{Error, Result};
use crate::lp::{self, ConId, LinExpr, LpModel, LpSolution, LpStatus, Relation, Sense, VarId};
use crate::scenario::{BidVector, ScenarioSet};
use crate::system::PowerSystem;

/// Variable handles of the day-ahead block, `[element][period]`.
#[derive(Debug, Clone)]
pub struct DamVars {
    pub output: Vec<Vec<VarId>>,
    pub commitment: Vec<Vec<VarId>>,
    pub startup: Vec<Vec<VarId>>,
    pub vres: Vec<Vec<VarId>>,
    /// `None` at reference buses, whose angle is fixed to zero.
    pub angle: Vec<Vec<Option<VarId>>>,
}

impl DamVars {
    /// Same handles after the block was copied into another model.
    pub fn remap(&self, map: &[VarId]) -> DamVars {
        let m = |rows: &Vec<Vec<VarId>>| -> Vec<Vec<VarId>> {
            rows.iter().map(|r| r.iter().map(|v| map[v.index()]).collect()).collect()
        };
        DamVars {
            output: m(&self.output),
            commitment: m(&self.commitment),
            startup: m(&self.startup),
            vres: m(&self.vres),
            angle: self
                .angle
                .iter()
                .map(|r| r.iter().map(|v| v.map(|v| map[v.index()])).collect())
                .collect(),
        }
    }

    /// Angle of bus `n` as an expression (zero at the reference bus).
    pub fn angle_expr(&self, n: usize, t: usize) -> LinExpr {
        match self.angle[n][t] {
            Some(v) => LinExpr::var(v),
            None => LinExpr::new(),
        }
    }
}

/// Row handles of the day-ahead block, `[element][period]`.
#[derive(Debug, Clone)]
pub struct DamRows {
    pub balance: Vec<Vec<ConId>>,
    pub flow_min: Vec<Vec<ConId>>,
    pub flow_max: Vec<Vec<ConId>>,
    pub vres_min: Vec<Vec<ConId>>,
    pub vres_max: Vec<Vec<ConId>>,
    pub output_min: Vec<Vec<ConId>>,
    pub output_max: Vec<Vec<ConId>>,
    pub commit_min: Vec<Vec<ConId>>,
    pub commit_max: Vec<Vec<ConId>>,
    pub startup_step: Vec<Vec<ConId>>,
    pub startup_min: Vec<Vec<ConId>>,
    pub ramp_down: Vec<Vec<ConId>>,
    pub ramp_up: Vec<Vec<ConId>>,
}

impl DamRows {
    /// Same handles after the block was copied into another model; every
    /// row must have been copied.
    pub fn remap(&self, map: &[Option<ConId>]) -> DamRows {
        let m = |rows: &Vec<Vec<ConId>>| -> Vec<Vec<ConId>> {
            rows.iter()
                .map(|r| r.iter().map(|c| map[c.index()].expect("row was copied")).collect())
                .collect()
        };
        DamRows {
            balance: m(&self.balance),
            flow_min: m(&self.flow_min),
            flow_max: m(&self.flow_max),
            vres_min: m(&self.vres_min),
            vres_max: m(&self.vres_max),
            output_min: m(&self.output_min),
            output_max: m(&self.output_max),
            commit_min: m(&self.commit_min),
            commit_max: m(&self.commit_max),
            startup_step: m(&self.startup_step),
            startup_min: m(&self.startup_min),
            ramp_down: m(&self.ramp_down),
            ramp_up: m(&self.ramp_up),
        }
    }
}

/// The day-ahead LP together with handles to its variables and rows.
#[derive(Debug, Clone)]
pub struct DamModel {
    pub lp: LpModel,
    pub vars: DamVars,
    pub rows: DamRows,
}

/// Day-ahead multipliers. Inequality multipliers are non-negative; the
/// balance multiplier is the nodal price.
#[derive(Debug, Clone, PartialEq)]
pub struct DamDuals {
    /// `[bus][period]`, $/MWh
    pub balance: Vec<Vec<f64>>,
    /// `[line][period]`, for the lower and upper flow limits
    pub flow_min: Vec<Vec<f64>>,
    pub flow_max: Vec<Vec<f64>>,
    /// `[vres][period]`
    pub vres_min: Vec<Vec<f64>>,
    pub vres_max: Vec<Vec<f64>>,
    /// `[unit][period]`
    pub output_min: Vec<Vec<f64>>,
    pub output_max: Vec<Vec<f64>>,
    pub commit_min: Vec<Vec<f64>>,
    pub commit_max: Vec<Vec<f64>>,
    pub startup_step: Vec<Vec<f64>>,
    pub startup_min: Vec<Vec<f64>>,
    pub ramp_down: Vec<Vec<f64>>,
    pub ramp_up: Vec<Vec<f64>>,
}

/// Cleared day-ahead schedule with its duals.
#[derive(Debug, Clone, PartialEq)]
pub struct DamSolution {
    /// `[unit][period]`, MW
    pub output: Vec<Vec<f64>>,
    /// `[unit][period]`, in `[0, 1]`
    pub commitment: Vec<Vec<f64>>,
    /// `[unit][period]`, $
    pub startup: Vec<Vec<f64>>,
    /// `[vres][period]`, MW
    pub vres: Vec<Vec<f64>>,
    /// `[bus][period]`, rad
    pub angle: Vec<Vec<f64>>,
    /// `[line][period]`, MW in the from → to direction
    pub flow: Vec<Vec<f64>>,
    /// Variable, no-load and start-up cost, $
    pub cost: f64,
    pub duals: DamDuals,
    /// Bids the market was cleared with.
    pub bids: BidVector,
}

/// Builds the day-ahead LP for the given VRES quantity offers.
pub fn build_dam(system: &PowerSystem, scenarios: &ScenarioSet, bids: &BidVector) -> Result<DamModel> {
    let t_len = scenarios.num_periods();
    bids.check_shape(system.num_vres(), t_len)?;
    let labels = scenarios.periods();
    let demand = scenarios.da_bus_demand(system);
    let mut lp = LpModel::new(Sense::Minimize);

    let grid = |lp: &mut LpModel, what: &str, ids: &[&str]| -> Result<Vec<Vec<VarId>>> {
        ids.iter()
            .map(|id| {
                labels
                    .iter()
                    .map(|p| lp.add_free_var(format!("{what}[{id},{p}]")))
                    .collect::<Result<Vec<_>>>()
            })
            .collect()
    };
    let unit_ids: Vec<&str> = system.conventional_units.iter().map(|u| u.id.as_str()).collect();
    let vres_ids: Vec<&str> = system.vres_units.iter().map(|k| k.id.as_str()).collect();
    let output = grid(&mut lp, "p", &unit_ids)?;
    let commitment = grid(&mut lp, "u", &unit_ids)?;
    let startup = grid(&mut lp, "c", &unit_ids)?;
    let vres = grid(&mut lp, "w", &vres_ids)?;
    let mut angle = Vec::with_capacity(system.num_buses());
    for (n, bus) in system.buses.iter().enumerate() {
        let row = if system.is_reference(n) {
            vec![None; t_len]
        } else {
            labels
                .iter()
                .map(|p| lp.add_free_var(format!("theta[{},{p}]", bus.id)).map(Some))
                .collect::<Result<Vec<_>>>()?
        };
        angle.push(row);
    }
    let vars = DamVars {
        output,
        commitment,
        startup,
        vres,
        angle,
    };

    for (i, u) in system.conventional_units.iter().enumerate() {
        for t in 0..t_len {
            lp.add_objective(&LinExpr::var(vars.output[i][t]), u.variable_cost);
            lp.add_objective(&LinExpr::var(vars.commitment[i][t]), u.no_load_cost);
            lp.add_objective(&LinExpr::var(vars.startup[i][t]), 1.0);
        }
    }

    let flows = line_flows(system, &vars, t_len);
    let mut rows = DamRows {
        balance: Vec::new(),
        flow_min: Vec::new(),
        flow_max: Vec::new(),
        vres_min: Vec::new(),
        vres_max: Vec::new(),
        output_min: Vec::new(),
        output_max: Vec::new(),
        commit_min: Vec::new(),
        commit_max: Vec::new(),
        startup_step: Vec::new(),
        startup_min: Vec::new(),
        ramp_down: Vec::new(),
        ramp_up: Vec::new(),
    };

    for (n, bus) in system.buses.iter().enumerate() {
        let mut row = Vec::with_capacity(t_len);
        for t in 0..t_len {
            let mut e = LinExpr::new();
            for i in (0..system.num_units()).filter(|&i| system.unit_bus(i) == n) {
                e.add_term(vars.output[i][t], 1.0);
            }
            for k in (0..system.num_vres()).filter(|&k| system.vres_bus(k) == n) {
                e.add_term(vars.vres[k][t], 1.0);
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
            row.push(lp.add_constraint(format!("balance[{},{}]", bus.id, labels[t]), &e, Relation::Eq, demand[n][t])?);
        }
        rows.balance.push(row);
    }

    for (l, line) in system.lines.iter().enumerate() {
        let mut lo = Vec::with_capacity(t_len);
        let mut hi = Vec::with_capacity(t_len);
        for t in 0..t_len {
            let f = &flows[l][t];
            lo.push(lp.add_constraint(format!("flow_min[{l},{}]", labels[t]), f, Relation::Ge, -line.capacity)?);
            hi.push(lp.add_constraint(format!("flow_max[{l},{}]", labels[t]), f, Relation::Le, line.capacity)?);
        }
        rows.flow_min.push(lo);
        rows.flow_max.push(hi);
    }

    for (k, unit) in system.vres_units.iter().enumerate() {
        let mut lo = Vec::with_capacity(t_len);
        let mut hi = Vec::with_capacity(t_len);
        for t in 0..t_len {
            let w = LinExpr::var(vars.vres[k][t]);
            lo.push(lp.add_constraint(format!("vres_min[{},{}]", unit.id, labels[t]), &w, Relation::Ge, 0.0)?);
            hi.push(lp.add_constraint(format!("vres_max[{},{}]", unit.id, labels[t]), &w, Relation::Le, bids.get(k, t))?);
        }
        rows.vres_min.push(lo);
        rows.vres_max.push(hi);
    }

    for (i, u) in system.conventional_units.iter().enumerate() {
        let mut r: [Vec<ConId>; 8] = Default::default();
        for t in 0..t_len {
            let p = vars.output[i][t];
            let on = vars.commitment[i][t];
            let c = vars.startup[i][t];
            let name = |what: &str| format!("{what}[{},{}]", u.id, labels[t]);
            let mut e = LinExpr::var(p);
            e.add_term(on, -u.p_min);
            r[0].push(lp.add_constraint(name("output_min"), &e, Relation::Ge, 0.0)?);
            let mut e = LinExpr::var(p);
            e.add_term(on, -u.p_max);
            r[1].push(lp.add_constraint(name("output_max"), &e, Relation::Le, 0.0)?);
            r[2].push(lp.add_constraint(name("commit_min"), &LinExpr::var(on), Relation::Ge, 0.0)?);
            r[3].push(lp.add_constraint(name("commit_max"), &LinExpr::var(on), Relation::Le, 1.0)?);

            // c - CSU (u_t - u_{t-1}) >= 0
            let mut e = LinExpr::var(c);
            e.add_term(on, -u.startup_cost);
            let mut rhs = 0.0;
            if t == 0 {
                rhs -= u.startup_cost * u.initial_commitment;
            } else {
                e.add_term(vars.commitment[i][t - 1], u.startup_cost);
            }
            r[4].push(lp.add_constraint(name("startup_step"), &e, Relation::Ge, rhs)?);
            r[5].push(lp.add_constraint(name("startup_min"), &LinExpr::var(c), Relation::Ge, 0.0)?);

            // p_t - p_{t-1} >= -RD u_{t-1}
            let mut e = LinExpr::var(p);
            let rhs = if t == 0 {
                u.initial_output - u.ramp_down * u.initial_commitment
            } else {
                e.add_term(vars.output[i][t - 1], -1.0);
                e.add_term(vars.commitment[i][t - 1], u.ramp_down);
                0.0
            };
            r[6].push(lp.add_constraint(name("ramp_down"), &e, Relation::Ge, rhs)?);

            // p_t - p_{t-1} <= RU u_t
            let mut e = LinExpr::var(p);
            e.add_term(on, -u.ramp_up);
            let rhs = if t == 0 {
                u.initial_output
            } else {
                e.add_term(vars.output[i][t - 1], -1.0);
                0.0
            };
            r[7].push(lp.add_constraint(name("ramp_up"), &e, Relation::Le, rhs)?);
        }
        let [a, b, c, d, e, f, g, h] = r;
        rows.output_min.push(a);
        rows.output_max.push(b);
        rows.commit_min.push(c);
        rows.commit_max.push(d);
        rows.startup_step.push(e);
        rows.startup_min.push(f);
        rows.ramp_down.push(g);
        rows.ramp_up.push(h);
    }

    Ok(DamModel { lp, vars, rows })
}

/// DC flow on every line, `[line][period]`, as an expression in the angles.
pub(crate) fn line_flows(system: &PowerSystem, vars: &DamVars, t_len: usize) -> Vec<Vec<LinExpr>> {
    angle_flows(system, &vars.angle, t_len)
}

pub(crate) fn angle_flows(system: &PowerSystem, angle: &[Vec<Option<VarId>>], t_len: usize) -> Vec<Vec<LinExpr>> {
    system
        .lines
        .iter()
        .enumerate()
        .map(|(l, line)| {
            let (from, to) = system.line_ends(l);
            (0..t_len)
                .map(|t| {
                    let mut e = LinExpr::new();
                    if let Some(v) = angle[from][t] {
                        e.add_term(v, 1.0 / line.reactance);
                    }
                    if let Some(v) = angle[to][t] {
                        e.add_term(v, -1.0 / line.reactance);
                    }
                    e
                })
                .collect()
        })
        .collect()
}

/// Clears the day-ahead market. An infeasible market is an error: there is no
/// shedding in the day-ahead problem.
pub fn solve_dam(
    system: &PowerSystem,
    scenarios: &ScenarioSet,
    bids: &BidVector,
    tolerance: f64,
) -> Result<DamSolution> {
    let model = build_dam(system, scenarios, bids)?;
    let sol = lp::solve(&model.lp, tolerance)?;
    match sol.status {
        LpStatus::Optimal => Ok(extract(system, &model.vars, &model.rows, &sol, bids)),
        LpStatus::Infeasible => Err(Error::DamInfeasible(
            "demand cannot be served within line and unit limits".into(),
        )),
        LpStatus::Unbounded => Err(Error::Solver("day-ahead LP reported unbounded".into())),
    }
}

/// Reads a day-ahead schedule and the multipliers of its rows out of a
/// solved model that contains the day-ahead block.
pub(crate) fn extract(
    system: &PowerSystem,
    vars: &DamVars,
    rows: &DamRows,
    sol: &LpSolution,
    bids: &BidVector,
) -> DamSolution {
    let vals = |rows: &Vec<Vec<VarId>>| -> Vec<Vec<f64>> {
        rows.iter().map(|r| r.iter().map(|&v| sol.value(v)).collect()).collect()
    };
    let mult = |rows: &Vec<Vec<ConId>>| -> Vec<Vec<f64>> {
        rows.iter().map(|r| r.iter().map(|&c| sol.multiplier(c)).collect()).collect()
    };
    let t_len = rows.balance.first().map_or(0, |r| r.len());
    let angle: Vec<Vec<f64>> = vars
        .angle
        .iter()
        .map(|r| r.iter().map(|v| v.map_or(0.0, |v| sol.value(v))).collect())
        .collect();
    let flow = line_flows(system, vars, t_len)
        .iter()
        .map(|r| r.iter().map(|e| e.eval(&sol.primal)).collect())
        .collect();
    let r = rows;
    DamSolution {
        output: vals(&vars.output),
        commitment: vals(&vars.commitment),
        startup: vals(&vars.startup),
        vres: vals(&vars.vres),
        angle,
        flow,
        cost: cost_of(system, vars, sol),
        duals: DamDuals {
            balance: mult(&r.balance),
            flow_min: mult(&r.flow_min),
            flow_max: mult(&r.flow_max),
            vres_min: mult(&r.vres_min),
            vres_max: mult(&r.vres_max),
            output_min: mult(&r.output_min),
            output_max: mult(&r.output_max),
            commit_min: mult(&r.commit_min),
            commit_max: mult(&r.commit_max),
            startup_step: mult(&r.startup_step),
            startup_min: mult(&r.startup_min),
            ramp_down: mult(&r.ramp_down),
            ramp_up: mult(&r.ramp_up),
        },
        bids: bids.clone(),
    }
}

/// Variable, no-load and start-up cost of the day-ahead block alone.
fn cost_of(system: &PowerSystem, vars: &DamVars, sol: &LpSolution) -> f64 {
    let mut cost = 0.0;
    for (i, u) in system.conventional_units.iter().enumerate() {
        for t in 0..vars.output[i].len() {
            cost += u.variable_cost * sol.value(vars.output[i][t])
                + u.no_load_cost * sol.value(vars.commitment[i][t])
                + sol.value(vars.startup[i][t]);
        }
    }
    cost
}

/// Nodal day-ahead prices `[bus][period]`, $/MWh.
pub fn lmp(solution: &DamSolution) -> Vec<Vec<f64>> {
    solution.duals.balance.clone()
}

/// Largest absolute stationarity residual per variable family.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StationarityResiduals {
    pub output: f64,
    pub startup: f64,
    pub commitment: f64,
    pub vres: f64,
    pub angle: f64,
}

impl StationarityResiduals {
    pub fn max(&self) -> f64 {
        [self.output, self.startup, self.commitment, self.vres, self.angle]
            .into_iter()
            .fold(0.0, f64::max)
    }
}

/// Evaluates the first-order conditions of the day-ahead Lagrangian at the
/// reported duals, written out term by term rather than read off the LP matrix.
///
/// Terms that refer to period `t + 1` vanish in the last period.
pub fn stationarity_residuals(system: &PowerSystem, solution: &DamSolution) -> StationarityResiduals {
    let d = &solution.duals;
    let t_len = d.balance.first().map_or(0, |r| r.len());
    let next = |rows: &Vec<Vec<f64>>, i: usize, t: usize| if t + 1 < t_len { rows[i][t + 1] } else { 0.0 };
    let mut res = StationarityResiduals::default();

    for (i, u) in system.conventional_units.iter().enumerate() {
        let n = system.unit_bus(i);
        for t in 0..t_len {
            let dp = u.variable_cost - d.balance[n][t] - d.output_min[i][t] + d.output_max[i][t] - d.ramp_down[i][t]
                + next(&d.ramp_down, i, t)
                + d.ramp_up[i][t]
                - next(&d.ramp_up, i, t);
            let dc = 1.0 - d.startup_step[i][t] - d.startup_min[i][t];
            let du = u.no_load_cost + d.commit_max[i][t] - d.commit_min[i][t] - u.p_max * d.output_max[i][t]
                + u.p_min * d.output_min[i][t]
                - u.ramp_up * d.ramp_up[i][t]
                - u.ramp_down * next(&d.ramp_down, i, t)
                + u.startup_cost * d.startup_step[i][t]
                - u.startup_cost * next(&d.startup_step, i, t);
            res.output = res.output.max(dp.abs());
            res.startup = res.startup.max(dc.abs());
            res.commitment = res.commitment.max(du.abs());
        }
    }
    for k in 0..system.num_vres() {
        let n = system.vres_bus(k);
        for t in 0..t_len {
            let dw = -d.balance[n][t] - d.vres_min[k][t] + d.vres_max[k][t];
            res.vres = res.vres.max(dw.abs());
        }
    }
    for n in (0..system.num_buses()).filter(|&n| !system.is_reference(n)) {
        for t in 0..t_len {
            let mut g = 0.0;
            for (l, line) in system.lines.iter().enumerate() {
                let (from, to) = system.line_ends(l);
                let term = (d.balance[from][t] - d.balance[to][t] - d.flow_min[l][t] + d.flow_max[l][t]) / line.reactance;
                if from == n {
                    g += term;
                }
                if to == n {
                    g -= term;
                }
            }
            res.angle = res.angle.max(g.abs());
        }
    }
    res
}

/// Dual objective of the day-ahead market at the reported duals, including
/// the terms contributed by the initial unit states.
pub fn dual_objective(system: &PowerSystem, scenarios: &ScenarioSet, solution: &DamSolution) -> f64 {
    let d = &solution.duals;
    let demand = scenarios.da_bus_demand(system);
    let mut g = 0.0;
    for (n, row) in demand.iter().enumerate() {
        for (t, l) in row.iter().enumerate() {
            g += d.balance[n][t] * l;
        }
    }
    for (l, line) in system.lines.iter().enumerate() {
        for t in 0..d.flow_min[l].len() {
            g -= (d.flow_min[l][t] + d.flow_max[l][t]) * line.capacity;
        }
    }
    for (i, u) in system.conventional_units.iter().enumerate() {
        g -= d.commit_max[i].iter().sum::<f64>();
        if let Some(&first) = d.ramp_down[i].first() {
            g += first * (u.initial_output - u.ramp_down * u.initial_commitment);
            g -= d.ramp_up[i][0] * u.initial_output;
            g -= d.startup_step[i][0] * u.startup_cost * u.initial_commitment;
        }
    }
    for (k, row) in d.vres_max.iter().enumerate() {
        for (t, lam) in row.iter().enumerate() {
            g -= lam * solution.bids.get(k, t);
        }
    }
    g
}

/// Largest power-balance mismatch of the schedule, MW.
pub fn balance_residual(system: &PowerSystem, scenarios: &ScenarioSet, solution: &DamSolution) -> f64 {
    let demand = scenarios.da_bus_demand(system);
    let mut worst: f64 = 0.0;
    for (n, row) in demand.iter().enumerate() {
        for (t, l) in row.iter().enumerate() {
            let mut inj = -l;
            for i in (0..system.num_units()).filter(|&i| system.unit_bus(i) == n) {
                inj += solution.output[i][t];
            }
            for k in (0..system.num_vres()).filter(|&k| system.vres_bus(k) == n) {
                inj += solution.vres[k][t];
            }
            for l in 0..system.lines.len() {
                let (from, to) = system.line_ends(l);
                if from == n {
                    inj -= solution.flow[l][t];
                }
                if to == n {
                    inj += solution.flow[l][t];
                }
            }
            worst = worst.max(inj.abs());
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use approx::assert_abs_diff_eq;

    const TOL: f64 = 1e-6;

    #[test]
    fn two_bus_mean_bid() {
        let (sys, set) = fixtures::two_bus(30.0);
        let sol = solve_dam(&sys, &set, &BidVector::uniform(1, 1, 15.0), TOL).unwrap();
        assert_abs_diff_eq!(sol.cost, 350.0, epsilon = 1e-6);
        assert_abs_diff_eq!(sol.output[0][0], 35.0, epsilon = 1e-6);
        assert_abs_diff_eq!(sol.vres[0][0], 15.0, epsilon = 1e-6);
        for price in lmp(&sol) {
            assert_abs_diff_eq!(price[0], 10.0, epsilon = 1e-6);
        }
        assert_abs_diff_eq!(sol.duals.vres_max[0][0], 10.0, epsilon = 1e-6);
        assert!(balance_residual(&sys, &set, &sol) <= 1e-6);
    }

    #[test]
    fn surplus_wind_clears_at_zero_cost() {
        let (sys, set) = fixtures::two_bus(30.0);
        let mut sys = sys;
        sys.vres_units[0].capacity = 60.0;
        let sys = sys.validate().unwrap();
        let sol = solve_dam(&sys, &set, &BidVector::uniform(1, 1, 60.0), TOL).unwrap();
        assert_abs_diff_eq!(sol.cost, 0.0, epsilon = 1e-6);
        assert_abs_diff_eq!(sol.vres[0][0], 50.0, epsilon = 1e-6);
        assert_abs_diff_eq!(sol.output[0][0], 0.0, epsilon = 1e-6);
        assert_abs_diff_eq!(sol.duals.balance[1][0], 0.0, epsilon = 1e-6);
    }

    #[test]
    fn zero_bid_sets_zero_rhs() {
        let (sys, set) = fixtures::two_bus(30.0);
        let m = build_dam(&sys, &set, &BidVector::zeros(1, 1)).unwrap();
        let row = m.lp.constraint(m.rows.vres_max[0][0]);
        assert_eq!(row.relation, Relation::Le);
        assert_eq!(row.rhs, 0.0);
    }

    #[test]
    fn row_and_column_tally() {
        // Per period: 2 balance + 2 flow + 2 VRES + 8 unit rows; 3 unit
        // columns, 1 VRES column and 1 angle (the other bus is the reference).
        let (sys, set) = fixtures::two_bus_periods(30.0, 2);
        let m = build_dam(&sys, &set, &BidVector::uniform(1, 2, 15.0)).unwrap();
        assert_eq!(m.lp.num_constraints(), 2 * (2 + 2 + 2 + 8));
        assert_eq!(m.lp.num_vars(), 2 * (3 + 1 + 1));
    }

    #[test]
    fn missing_bid_entry() {
        let (sys, set) = fixtures::two_bus_periods(30.0, 2);
        let err = build_dam(&sys, &set, &BidVector(vec![vec![1.0]])).unwrap_err();
        assert!(err.to_string().contains("missing bid entry"));
    }

    #[test]
    fn zero_demand_costs_nothing() {
        let (sys, set) = fixtures::two_bus_with_load(30.0, 0.0);
        let sol = solve_dam(&sys, &set, &BidVector::zeros(1, 1), TOL).unwrap();
        assert_abs_diff_eq!(sol.cost, 0.0, epsilon = 1e-9);
        // Prices are not unique here; any value up to the cheapest offer works.
        assert!(lmp(&sol).iter().flatten().all(|p| (-1e-9..=10.0 + 1e-9).contains(p)));
    }

    #[test]
    fn unservable_demand_is_reported() {
        let (mut sys, set) = fixtures::two_bus(30.0);
        sys.lines[0].capacity = 0.01;
        let sys = sys.validate().unwrap();
        let err = solve_dam(&sys, &set, &BidVector::zeros(1, 1), TOL).unwrap_err();
        assert!(matches!(err, Error::DamInfeasible(_)), "{err}");
    }

    #[test]
    fn congestion_separates_prices() {
        let (sys, set) = fixtures::two_bus_congested();
        let sol = solve_dam(&sys, &set, &BidVector::uniform(1, 1, 20.0), TOL).unwrap();
        let prices = lmp(&sol);
        assert_abs_diff_eq!(prices[0][0], 10.0, epsilon = 1e-6);
        assert_abs_diff_eq!(prices[1][0], 20.0, epsilon = 1e-6);
        assert_abs_diff_eq!(sol.flow[0][0], 20.0, epsilon = 1e-6);
        assert!(stationarity_residuals(&sys, &sol).max() <= 1e-6);
        assert_abs_diff_eq!(dual_objective(&sys, &set, &sol), sol.cost, epsilon = 1e-6);
    }

    #[test]
    fn hand_dual_objective_matches_cost() {
        let (sys, set) = fixtures::two_bus(30.0);
        for w in [0.0, 7.5, 15.0, 30.0] {
            let sol = solve_dam(&sys, &set, &BidVector::uniform(1, 1, w), TOL).unwrap();
            assert_abs_diff_eq!(dual_objective(&sys, &set, &sol), sol.cost, epsilon = 1e-6);
            assert!(stationarity_residuals(&sys, &sol).max() <= 1e-6);
        }
    }

    #[test]
    fn multipliers_are_nonnegative_with_ramps_and_startups() {
        let (sys, set) = fixtures::five_bus();
        let bids = BidVector(set.expected_vres());
        let sol = solve_dam(&sys, &set, &bids, TOL).unwrap();
        let d = &sol.duals;
        for rows in [
            &d.flow_min, &d.flow_max, &d.vres_min, &d.vres_max, &d.output_min, &d.output_max, &d.commit_min,
            &d.commit_max, &d.startup_step, &d.startup_min, &d.ramp_down, &d.ramp_up,
        ] {
            assert!(rows.iter().flatten().all(|&m| m >= -1e-7));
        }
        assert!(stationarity_residuals(&sys, &sol).max() <= 1e-6);
        assert!((dual_objective(&sys, &set, &sol) - sol.cost).abs() <= 1e-6 * (1.0 + sol.cost.abs()));
    }
}
