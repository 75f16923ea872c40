//! Day-ahead VRES bid quantities from a single-level relaxation of the
//! bilevel bidding problem.
//!
//! The upper level picks bids `W` to minimize day-ahead plus expected
//! real-time cost; the lower level is the day-ahead market itself. The lower
//! level is replaced by primal feasibility, dual feasibility, stationarity and
//! a strong-duality equation. The only nonlinearity, the product of each bid
//! with the multiplier of its VRES upper-bound row, is replaced by a variable
//! `z` inside a McCormick envelope. The bids this LP returns are then priced by
//! clearing both markets again; the relaxed objective is only a diagnostic.

use crate::config::RunConfig;
use crate::dam::{build_dam, lmp, solve_dam, DamSolution, DamVars};
use crate::error::{invalid, Error, Result};
use crate::lp::{self, ConId, LinExpr, LpModel, LpStatus, Relation, Sense, VarId};
use crate::rtm::{add_rtm_block, solve_rtm_all, DayAheadRefs, RtmBlock, RtmSolution};
use crate::scenario::{BidVector, ScenarioSet};
use crate::system::PowerSystem;

/// Boxes for the bids and for the multipliers of their upper-bound rows,
/// `[vres][period]`.
#[derive(Debug, Clone, PartialEq)]
pub struct McCormickBounds {
    pub quantity_lower: Vec<Vec<f64>>,
    pub quantity_upper: Vec<Vec<f64>>,
    pub dual_lower: Vec<Vec<f64>>,
    pub dual_upper: Vec<Vec<f64>>,
}

impl McCormickBounds {
    /// Boxes `[0, quantity_upper] × [0, dual_upper]`.
    pub fn new(quantity_upper: Vec<Vec<f64>>, dual_upper: Vec<Vec<f64>>) -> Result<Self> {
        let zeros = |m: &Vec<Vec<f64>>| m.iter().map(|r| vec![0.0; r.len()]).collect();
        McCormickBounds {
            quantity_lower: zeros(&quantity_upper),
            dual_lower: zeros(&dual_upper),
            quantity_upper,
            dual_upper,
        }
        .checked()
    }

    pub fn checked(self) -> Result<Self> {
        let shape = |m: &Vec<Vec<f64>>| m.iter().map(|r| r.len()).collect::<Vec<_>>();
        let s = shape(&self.quantity_upper);
        if shape(&self.quantity_lower) != s || shape(&self.dual_lower) != s || shape(&self.dual_upper) != s {
            return Err(invalid("bound tables differ in shape"));
        }
        let pairs = [
            ("quantity", &self.quantity_lower, &self.quantity_upper),
            ("dual", &self.dual_lower, &self.dual_upper),
        ];
        for (what, lo, hi) in pairs {
            for (k, (l, h)) in lo.iter().zip(hi).enumerate() {
                for (t, (a, b)) in l.iter().zip(h).enumerate() {
                    if !a.is_finite() || !b.is_finite() || a > b {
                        return Err(invalid(format!(
                            "{what} bounds for VRES #{k} period #{t} are empty or infinite: [{a}, {b}]"
                        )));
                    }
                }
            }
        }
        Ok(self)
    }

    /// Bounds from the default rules: `γ` times expected output for the bids
    /// and `ξ` times the zero-bid multiplier for the duals.
    pub fn from_rules(system: &PowerSystem, scenarios: &ScenarioSet, config: &RunConfig) -> Result<Self> {
        McCormickBounds::new(
            quantity_bounds(system, scenarios, config.gamma),
            dual_bounds(system, scenarios, config.xi, config.solver_tolerance)?,
        )
    }

    /// The four envelope inequalities at `(w, lambda, z)` for cell `(k, t)`,
    /// as slacks that are `>= 0` when satisfied.
    pub fn envelope_slacks(&self, k: usize, t: usize, w: f64, lambda: f64, z: f64) -> [f64; 4] {
        let (aw, bw) = (self.quantity_lower[k][t], self.quantity_upper[k][t]);
        let (al, bl) = (self.dual_lower[k][t], self.dual_upper[k][t]);
        [
            z - (al * w + aw * lambda - al * aw),
            z - (bl * w + bw * lambda - bl * bw),
            (bl * w + aw * lambda - bl * aw) - z,
            (al * w + bw * lambda - al * bw) - z,
        ]
    }
}

/// Upper bid bound `γ · E[W̃]`, capped at installed capacity.
pub fn quantity_bounds(system: &PowerSystem, scenarios: &ScenarioSet, gamma: f64) -> Vec<Vec<f64>> {
    scenarios
        .expected_vres()
        .iter()
        .enumerate()
        .map(|(k, row)| row.iter().map(|m| (gamma * m).min(system.vres_units[k].capacity)).collect())
        .collect()
}

/// Upper dual bound `ξ · max(λ̄ᵂ(0), λᵇ(0))` from the market cleared with zero
/// bids. At zero bids the VRES bound multiplier is degenerate, so the local
/// price is used when it is larger.
pub fn dual_bounds(system: &PowerSystem, scenarios: &ScenarioSet, xi: f64, tolerance: f64) -> Result<Vec<Vec<f64>>> {
    let zero = BidVector::zeros(system.num_vres(), scenarios.num_periods());
    let da = solve_dam(system, scenarios, &zero, tolerance)?;
    let prices = lmp(&da);
    Ok(da
        .duals
        .vres_max
        .iter()
        .enumerate()
        .map(|(k, row)| {
            let n = system.vres_bus(k);
            row.iter()
                .enumerate()
                .map(|(t, lam)| xi * lam.max(prices[n][t]).max(0.0))
                .collect()
        })
        .collect())
}

/// The relaxed bidding LP with handles to the pieces callers inspect.
#[derive(Debug, Clone)]
pub struct BidModel {
    pub lp: LpModel,
    pub bids: Vec<Vec<VarId>>,
    /// Stand-ins for the bid × multiplier products.
    pub products: Vec<Vec<VarId>>,
    /// Multipliers of the VRES upper-bound rows.
    pub vres_duals: Vec<Vec<VarId>>,
    pub dam: DamVars,
    pub rtm: Vec<RtmBlock>,
    /// Day-ahead cost as an expression of the primal block.
    pub dam_cost: LinExpr,
    /// Counts that make up the column total, for diagnostics.
    pub counts: BidModelCounts,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BidModelCounts {
    pub dam_vars: usize,
    pub rtm_vars: usize,
    pub dual_vars: usize,
    pub bid_vars: usize,
    pub product_vars: usize,
}

/// Builds the single-level relaxation of the bilevel bidding problem.
pub fn build_bid_mccormick(
    system: &PowerSystem,
    scenarios: &ScenarioSet,
    bounds: &McCormickBounds,
    voll: f64,
) -> Result<BidModel> {
    let bounds = bounds.clone().checked()?;
    let (k_len, t_len) = (system.num_vres(), scenarios.num_periods());
    if bounds.quantity_upper.len() != k_len || bounds.quantity_upper.iter().any(|r| r.len() != t_len) {
        return Err(invalid("bound tables do not match the VRES units and periods"));
    }
    let labels = scenarios.periods();
    let lower = build_dam(system, scenarios, &BidVector::zeros(k_len, t_len))?;
    let source = &lower.lp;
    if source.variables().iter().any(|v| v.lower.is_finite() || v.upper.is_finite()) {
        return Err(Error::Model("day-ahead block must keep all bounds as rows".into()));
    }
    let mut is_bid_row = vec![false; source.num_constraints()];
    for c in lower.rows.vres_max.iter().flatten() {
        is_bid_row[c.index()] = true;
    }

    let mut lp = LpModel::new(Sense::Minimize);
    let (map, _) = lp.append(source, "da.", |c| is_bid_row[c.index()])?;
    let dam = lower.vars.remap(&map);

    let mut bids = Vec::with_capacity(k_len);
    let mut products = Vec::with_capacity(k_len);
    for (k, unit) in system.vres_units.iter().enumerate() {
        let mut brow = Vec::with_capacity(t_len);
        let mut prow = Vec::with_capacity(t_len);
        for t in 0..t_len {
            let w = lp.add_var(
                format!("bid[{},{}]", unit.id, labels[t]),
                bounds.quantity_lower[k][t],
                bounds.quantity_upper[k][t],
            )?;
            let z = lp.add_free_var(format!("product[{},{}]", unit.id, labels[t]))?;
            let mut e = LinExpr::var(dam.vres[k][t]);
            e.add_term(w, -1.0);
            lp.add_constraint(format!("da.vres_max[{},{}]", unit.id, labels[t]), &e, Relation::Le, 0.0)?;
            brow.push(w);
            prow.push(z);
        }
        bids.push(brow);
        products.push(prow);
    }

    // One multiplier per lower-level row, non-negative on inequalities.
    let mut duals = Vec::with_capacity(source.num_constraints());
    let mut vres_dual_of_row = vec![None; source.num_constraints()];
    for (k, row) in lower.rows.vres_max.iter().enumerate() {
        for (t, c) in row.iter().enumerate() {
            vres_dual_of_row[c.index()] = Some((k, t));
        }
    }
    for (r, con) in source.constraints().iter().enumerate() {
        let name = format!("dual.{}", con.name);
        let v = match (con.relation, vres_dual_of_row[r]) {
            (_, Some((k, t))) => lp.add_var(name, bounds.dual_lower[k][t], bounds.dual_upper[k][t])?,
            (Relation::Eq, None) => lp.add_free_var(name)?,
            _ => lp.add_nonneg_var(name)?,
        };
        duals.push(v);
    }
    let vres_duals: Vec<Vec<VarId>> = lower
        .rows
        .vres_max
        .iter()
        .map(|row| row.iter().map(|c| duals[c.index()]).collect())
        .collect();

    // Lagrangian sign of each row: +1 for >= and =, -1 for <=.
    let sign = |rel: Relation| if rel == Relation::Le { -1.0 } else { 1.0 };

    // Stationarity: c_j - Σ_r sign_r · λ_r · a_rj = 0 for every column j.
    let mut columns: Vec<LinExpr> = vec![LinExpr::new(); source.num_vars()];
    for (r, con) in source.constraints().iter().enumerate() {
        let s = sign(con.relation);
        for &(v, a) in &con.terms {
            columns[v.index()].add_term(duals[r], -s * a);
        }
    }
    for (j, col) in columns.iter().enumerate() {
        let name = format!("stationarity.{}", source.variables()[j].name);
        lp.add_constraint(name, col, Relation::Eq, -source.objective_coefficients()[j])?;
    }

    // Strong duality: primal cost = Σ_r sign_r · λ_r · b_r, where the bid rows
    // contribute -z in place of -λ · W.
    let mut dam_cost = LinExpr::constant(source.objective_constant());
    for (j, &c) in source.objective_coefficients().iter().enumerate() {
        dam_cost.add_term(map[j], c);
    }
    let mut gap = dam_cost.clone();
    gap.add_constant(-source.objective_constant());
    for (r, con) in source.constraints().iter().enumerate() {
        if vres_dual_of_row[r].is_none() {
            gap.add_term(duals[r], -sign(con.relation) * con.rhs);
        }
    }
    for &z in products.iter().flatten() {
        gap.add_term(z, 1.0);
    }
    lp.add_constraint("strong_duality", &gap, Relation::Eq, 0.0)?;

    // Envelope of z = λ · W over the two boxes.
    for (k, unit) in system.vres_units.iter().enumerate() {
        for t in 0..t_len {
            let (w, lam, z) = (bids[k][t], vres_duals[k][t], products[k][t]);
            let (aw, bw) = (bounds.quantity_lower[k][t], bounds.quantity_upper[k][t]);
            let (al, bl) = (bounds.dual_lower[k][t], bounds.dual_upper[k][t]);
            let cell = format!("{},{}", unit.id, labels[t]);
            let mut add = |tag: &str, cw: f64, cl: f64, c0: f64, rel: Relation| -> Result<ConId> {
                // z - cw·W - cl·λ (rel) c0
                let mut e = LinExpr::var(z);
                e.add_term(w, -cw).add_term(lam, -cl);
                lp.add_constraint(format!("envelope_{tag}[{cell}]"), &e, rel, c0)
            };
            add("ll", al, aw, -al * aw, Relation::Ge)?;
            add("uu", bl, bw, -bl * bw, Relation::Ge)?;
            add("ul", bl, aw, -bl * aw, Relation::Le)?;
            add("lu", al, bw, -al * bw, Relation::Le)?;
        }
    }

    let vars_before_rt = lp.num_vars();
    let refs = DayAheadRefs::variables(&dam);
    let mut rtm = Vec::with_capacity(scenarios.len());
    for (w, s) in scenarios.scenarios().iter().enumerate() {
        let block = add_rtm_block(&mut lp, system, scenarios, w, &refs, voll, &format!("rt[{}].", s.id))?;
        lp.add_objective(&block.cost, s.weight);
        rtm.push(block);
    }

    let counts = BidModelCounts {
        dam_vars: source.num_vars(),
        rtm_vars: lp.num_vars() - vars_before_rt,
        dual_vars: duals.len(),
        bid_vars: k_len * t_len,
        product_vars: k_len * t_len,
    };
    Ok(BidModel {
        lp,
        bids,
        products,
        vres_duals,
        dam,
        rtm,
        dam_cost,
        counts,
    })
}

/// Day-ahead clearing followed by real-time re-dispatch in every scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub dam: DamSolution,
    pub rtm: RtmSolution,
    /// Day-ahead cost plus expected real-time cost, $.
    pub cost: f64,
}

impl Evaluation {
    pub fn expected_rt_cost(&self) -> f64 {
        self.rtm.expected_cost()
    }
}

/// Prices a bid vector by clearing the day-ahead market and then every
/// real-time scenario against it.
pub fn evaluate_bids(
    system: &PowerSystem,
    scenarios: &ScenarioSet,
    bids: &BidVector,
    config: &RunConfig,
) -> Result<Evaluation> {
    let dam = solve_dam(system, scenarios, bids, config.solver_tolerance)?;
    let rtm = solve_rtm_all(system, scenarios, &dam, config)?;
    let cost = dam.cost + rtm.expected_cost();
    Ok(Evaluation { dam, rtm, cost })
}

/// Bids chosen by the relaxation and their re-simulated cost.
#[derive(Debug, Clone, PartialEq)]
pub struct BidResult {
    pub bids: BidVector,
    /// Objective of the relaxed LP; a lower bound for diagnostics only.
    pub relaxed_objective: f64,
    pub bounds: McCormickBounds,
    /// Re-simulated markets at the chosen bids.
    pub evaluation: Evaluation,
    /// `|z − λ̄ᵂ · W|` per `[vres][period]` at the relaxed solution.
    pub envelope_gap: Vec<Vec<f64>>,
}

impl BidResult {
    /// Evaluated system cost, $.
    pub fn cost(&self) -> f64 {
        self.evaluation.cost
    }
}

/// Solves the relaxation with the given boxes and re-simulates its bids.
pub fn solve_bid_with_bounds(
    system: &PowerSystem,
    scenarios: &ScenarioSet,
    bounds: &McCormickBounds,
    config: &RunConfig,
) -> Result<BidResult> {
    let model = build_bid_mccormick(system, scenarios, bounds, config.voll)?;
    let sol = lp::solve(&model.lp, config.solver_tolerance)?;
    match sol.status {
        LpStatus::Optimal => {}
        LpStatus::Infeasible => {
            return Err(Error::RelaxationInfeasible {
                gamma: config.gamma,
                xi: config.xi,
            })
        }
        LpStatus::Unbounded => return Err(Error::Solver("bid relaxation reported unbounded".into())),
    }
    let bids = BidVector(
        model
            .bids
            .iter()
            .enumerate()
            .map(|(k, row)| {
                row.iter()
                    .enumerate()
                    .map(|(t, &w)| sol.value(w).clamp(bounds.quantity_lower[k][t], bounds.quantity_upper[k][t]))
                    .collect()
            })
            .collect(),
    );
    let envelope_gap = model
        .products
        .iter()
        .zip(&model.vres_duals)
        .zip(&model.bids)
        .map(|((zs, ls), ws)| {
            zs.iter()
                .zip(ls)
                .zip(ws)
                .map(|((&z, &l), &w)| (sol.value(z) - sol.value(l) * sol.value(w)).abs())
                .collect()
        })
        .collect();
    let evaluation = evaluate_bids(system, scenarios, &bids, config).map_err(|e| match e {
        Error::DamInfeasible(msg) => Error::Solver(format!("relaxation returned bids the market cannot clear: {msg}")),
        other => other,
    })?;
    Ok(BidResult {
        bids,
        relaxed_objective: sol.objective,
        bounds: bounds.clone(),
        evaluation,
        envelope_gap,
    })
}

/// Bids from the relaxation with bounds set by `config.gamma` and `config.xi`.
pub fn solve_bid(system: &PowerSystem, scenarios: &ScenarioSet, config: &RunConfig) -> Result<BidResult> {
    let bounds = McCormickBounds::from_rules(system, scenarios, config)?;
    solve_bid_with_bounds(system, scenarios, &bounds, config)
}
