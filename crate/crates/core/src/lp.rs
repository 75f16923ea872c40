//! Linear-program construction and solution with mandatory dual extraction.
//!
//! Models are built column by column and row by row in insertion order, so
//! identical inputs always produce identical LPs. Solving is delegated to the
//! HiGHS dual simplex, which returns vertex solutions and basic duals.
//!
//! Dual convention: [`LpSolution::dual`] is the shadow price `d objective / d rhs`.
//! For a minimization that is `>= 0` on `>=` rows and `<= 0` on `<=` rows.
//! [`LpSolution::multiplier`] flips `<=` rows so every inequality multiplier is
//! non-negative, which is the convention the market modules expose.

use std::collections::{HashMap, HashSet};
use std::fmt::{self, Write as _};

use highs::{HighsModelStatus, RowProblem, Sense as HighsSense};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VarId(usize);

impl VarId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ConId(usize);

impl ConId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Relation::Le => "<=",
            Relation::Eq => "=",
            Relation::Ge => ">=",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Minimize,
    Maximize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Variable {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub name: String,
    pub terms: Vec<(VarId, f64)>,
    pub relation: Relation,
    pub rhs: f64,
}

/// Affine expression `Σ coeff · var + constant`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LinExpr {
    pub terms: Vec<(VarId, f64)>,
    pub constant: f64,
}

impl LinExpr {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn constant(value: f64) -> Self {
        LinExpr {
            terms: Vec::new(),
            constant: value,
        }
    }

    pub fn var(v: VarId) -> Self {
        LinExpr {
            terms: vec![(v, 1.0)],
            constant: 0.0,
        }
    }

    pub fn add_term(&mut self, v: VarId, coeff: f64) -> &mut Self {
        if coeff != 0.0 {
            self.terms.push((v, coeff));
        }
        self
    }

    pub fn add_constant(&mut self, value: f64) -> &mut Self {
        self.constant += value;
        self
    }

    /// `self += scale · other`
    pub fn add_scaled(&mut self, other: &LinExpr, scale: f64) -> &mut Self {
        for &(v, c) in &other.terms {
            self.add_term(v, c * scale);
        }
        self.constant += other.constant * scale;
        self
    }

    pub fn scaled(&self, scale: f64) -> LinExpr {
        let mut out = LinExpr::new();
        out.add_scaled(self, scale);
        out
    }

    pub fn eval(&self, values: &[f64]) -> f64 {
        self.constant + self.terms.iter().map(|&(v, c)| c * values[v.0]).sum::<f64>()
    }
}

impl From<f64> for LinExpr {
    fn from(value: f64) -> Self {
        LinExpr::constant(value)
    }
}

impl From<VarId> for LinExpr {
    fn from(v: VarId) -> Self {
        LinExpr::var(v)
    }
}

/// A linear program: variables with bounds, a linear objective, linear rows.
#[derive(Debug, Clone)]
pub struct LpModel {
    sense: Sense,
    vars: Vec<Variable>,
    objective: Vec<f64>,
    objective_constant: f64,
    constraints: Vec<Constraint>,
    names: HashSet<String>,
}

impl LpModel {
    pub fn new(sense: Sense) -> Self {
        LpModel {
            sense,
            vars: Vec::new(),
            objective: Vec::new(),
            objective_constant: 0.0,
            constraints: Vec::new(),
            names: HashSet::new(),
        }
    }

    pub fn sense(&self) -> Sense {
        self.sense
    }

    pub fn variables(&self) -> &[Variable] {
        &self.vars
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn constraint(&self, c: ConId) -> &Constraint {
        &self.constraints[c.0]
    }

    pub fn variable(&self, v: VarId) -> &Variable {
        &self.vars[v.0]
    }

    pub fn objective_coefficients(&self) -> &[f64] {
        &self.objective
    }

    pub fn objective_constant(&self) -> f64 {
        self.objective_constant
    }

    pub fn num_vars(&self) -> usize {
        self.vars.len()
    }

    pub fn num_constraints(&self) -> usize {
        self.constraints.len()
    }

    pub fn num_nonzeros(&self) -> usize {
        self.constraints.iter().map(|c| c.terms.len()).sum()
    }

    fn claim_name(&mut self, name: &str) -> Result<()> {
        if !self.names.insert(name.to_string()) {
            return Err(Error::Model(format!("duplicate name {name:?}")));
        }
        Ok(())
    }

    /// Adds a variable; use infinities for missing bounds.
    pub fn add_var(&mut self, name: impl Into<String>, lower: f64, upper: f64) -> Result<VarId> {
        let name = name.into();
        if lower.is_nan() || upper.is_nan() || lower > upper || lower == f64::INFINITY || upper == f64::NEG_INFINITY {
            return Err(Error::Model(format!("variable {name:?}: invalid bounds [{lower}, {upper}]")));
        }
        self.claim_name(&name)?;
        self.vars.push(Variable { name, lower, upper });
        self.objective.push(0.0);
        Ok(VarId(self.vars.len() - 1))
    }

    pub fn add_free_var(&mut self, name: impl Into<String>) -> Result<VarId> {
        self.add_var(name, f64::NEG_INFINITY, f64::INFINITY)
    }

    pub fn add_nonneg_var(&mut self, name: impl Into<String>) -> Result<VarId> {
        self.add_var(name, 0.0, f64::INFINITY)
    }

    /// The objective as an expression, constant included.
    pub fn objective_expr(&self) -> LinExpr {
        let mut e = LinExpr::constant(self.objective_constant);
        for (j, &c) in self.objective.iter().enumerate() {
            e.add_term(VarId(j), c);
        }
        e
    }

    /// Replaces the objective.
    pub fn set_objective(&mut self, expr: &LinExpr) {
        self.objective.iter_mut().for_each(|c| *c = 0.0);
        self.objective_constant = 0.0;
        self.add_objective(expr, 1.0);
    }

    /// `objective += scale · expr`
    pub fn add_objective(&mut self, expr: &LinExpr, scale: f64) {
        for &(v, c) in &expr.terms {
            self.objective[v.0] += c * scale;
        }
        self.objective_constant += expr.constant * scale;
    }

    /// Adds `expr (relation) rhs`; the expression's constant moves to the right.
    pub fn add_constraint(
        &mut self,
        name: impl Into<String>,
        expr: &LinExpr,
        relation: Relation,
        rhs: f64,
    ) -> Result<ConId> {
        let name = name.into();
        if !rhs.is_finite() || !expr.constant.is_finite() {
            return Err(Error::Model(format!("constraint {name:?}: non-finite right-hand side")));
        }
        let mut terms: Vec<(VarId, f64)> = Vec::with_capacity(expr.terms.len());
        let mut seen: HashMap<VarId, usize> = HashMap::with_capacity(expr.terms.len());
        for &(v, c) in &expr.terms {
            if v.0 >= self.vars.len() {
                return Err(Error::Model(format!("constraint {name:?} references undeclared variable #{}", v.0)));
            }
            if !c.is_finite() {
                return Err(Error::Model(format!("constraint {name:?}: non-finite coefficient")));
            }
            match seen.get(&v) {
                Some(&pos) => terms[pos].1 += c,
                None => {
                    seen.insert(v, terms.len());
                    terms.push((v, c));
                }
            }
        }
        terms.retain(|&(_, c)| c != 0.0);
        self.claim_name(&name)?;
        self.constraints.push(Constraint {
            name,
            terms,
            relation,
            rhs: rhs - expr.constant,
        });
        Ok(ConId(self.constraints.len() - 1))
    }

    /// Copies every variable, objective coefficient and row of `source` into
    /// this model under `prefix`, leaving out the rows `skip` selects.
    /// Returns the new handle of each source variable and of each copied row.
    pub fn append(
        &mut self,
        source: &LpModel,
        prefix: &str,
        skip: impl Fn(ConId) -> bool,
    ) -> Result<(Vec<VarId>, Vec<Option<ConId>>)> {
        if source.sense != self.sense {
            return Err(Error::Model("cannot append a model with a different sense".into()));
        }
        let mut map = Vec::with_capacity(source.vars.len());
        for (j, var) in source.vars.iter().enumerate() {
            let v = self.add_var(format!("{prefix}{}", var.name), var.lower, var.upper)?;
            self.objective[v.0] += source.objective[j];
            map.push(v);
        }
        self.objective_constant += source.objective_constant;
        let mut rows = Vec::with_capacity(source.constraints.len());
        for (r, con) in source.constraints.iter().enumerate() {
            if skip(ConId(r)) {
                rows.push(None);
                continue;
            }
            let expr = LinExpr {
                terms: con.terms.iter().map(|&(v, a)| (map[v.0], a)).collect(),
                constant: 0.0,
            };
            rows.push(Some(self.add_constraint(format!("{prefix}{}", con.name), &expr, con.relation, con.rhs)?));
        }
        Ok((map, rows))
    }

    /// Objective value at `values`, including the constant.
    pub fn objective_value(&self, values: &[f64]) -> f64 {
        self.objective_constant + self.objective.iter().zip(values).map(|(c, x)| c * x).sum::<f64>()
    }

    pub fn row_activity(&self, c: ConId, values: &[f64]) -> f64 {
        self.constraints[c.0].terms.iter().map(|&(v, a)| a * values[v.0]).sum()
    }

    /// Largest violation of any row or bound at `values`.
    pub fn primal_residual(&self, values: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for (j, var) in self.vars.iter().enumerate() {
            worst = worst.max(var.lower - values[j]).max(values[j] - var.upper);
        }
        for (r, con) in self.constraints.iter().enumerate() {
            let act = self.row_activity(ConId(r), values);
            let viol = match con.relation {
                Relation::Le => act - con.rhs,
                Relation::Ge => con.rhs - act,
                Relation::Eq => (act - con.rhs).abs(),
            };
            worst = worst.max(viol);
        }
        worst
    }

    /// Writes the model in CPLEX LP text format for cross-checking with other solvers.
    pub fn to_lp_format(&self) -> String {
        let clean = |prefix: &str, idx: usize, name: &str| -> String {
            let body: String = name
                .chars()
                .map(|c| if c.is_ascii_alphanumeric() || c == '_' { c } else { '_' })
                .collect();
            format!("{prefix}{idx}_{body}")
        };
        let vname: Vec<String> = self.vars.iter().enumerate().map(|(j, v)| clean("x", j, &v.name)).collect();
        let mut out = String::new();
        let _ = writeln!(out, "\\ objective constant: {}", self.objective_constant);
        out.push_str(match self.sense {
            Sense::Minimize => "Minimize\n",
            Sense::Maximize => "Maximize\n",
        });
        out.push_str(" obj:");
        let mut any = false;
        for (j, &c) in self.objective.iter().enumerate() {
            if c != 0.0 {
                let _ = write!(out, " {} {} {}", if c < 0.0 { "-" } else { "+" }, c.abs(), vname[j]);
                any = true;
            }
        }
        if !any {
            out.push_str(" 0 x0_dummy");
        }
        out.push_str("\nSubject To\n");
        for (r, con) in self.constraints.iter().enumerate() {
            let _ = write!(out, " {}:", clean("c", r, &con.name));
            if con.terms.is_empty() {
                out.push_str(" 0 x0_dummy");
            }
            for &(v, a) in &con.terms {
                let _ = write!(out, " {} {} {}", if a < 0.0 { "-" } else { "+" }, a.abs(), vname[v.0]);
            }
            let _ = writeln!(out, " {} {}", con.relation, con.rhs);
        }
        out.push_str("Bounds\n");
        for (j, var) in self.vars.iter().enumerate() {
            match (var.lower.is_finite(), var.upper.is_finite()) {
                (false, false) => {
                    let _ = writeln!(out, " {} free", vname[j]);
                }
                (true, false) => {
                    let _ = writeln!(out, " {} >= {}", vname[j], var.lower);
                }
                (false, true) => {
                    let _ = writeln!(out, " -inf <= {} <= {}", vname[j], var.upper);
                }
                (true, true) => {
                    let _ = writeln!(out, " {} <= {} <= {}", var.lower, vname[j], var.upper);
                }
            }
        }
        out.push_str("End\n");
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

/// Outcome of [`solve`]. Primal/dual vectors are empty unless optimal.
#[derive(Debug, Clone)]
pub struct LpSolution {
    pub status: LpStatus,
    pub objective: f64,
    pub primal: Vec<f64>,
    /// Shadow price per row, `d objective / d rhs`.
    pub duals: Vec<f64>,
    /// `c_j - Σ_r dual_r a_rj` per variable.
    pub reduced_costs: Vec<f64>,
    sense: Sense,
    relations: Vec<Relation>,
}

impl LpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }

    pub fn value(&self, v: VarId) -> f64 {
        self.primal[v.0]
    }

    pub fn dual(&self, c: ConId) -> f64 {
        self.duals[c.0]
    }

    /// Lagrange multiplier under the non-negative convention: `>= 0` for every
    /// inequality of a well-solved model, free for equalities.
    pub fn multiplier(&self, c: ConId) -> f64 {
        let y = self.duals[c.0];
        let flip = match (self.sense, self.relations[c.0]) {
            (Sense::Minimize, Relation::Le) | (Sense::Maximize, Relation::Ge) => -1.0,
            _ => 1.0,
        };
        y * flip
    }

    /// Same solution with `duals` overwritten, for sensitivity checks.
    pub fn with_duals(&self, duals: Vec<f64>) -> LpSolution {
        LpSolution {
            duals,
            ..self.clone()
        }
    }
}

const HIGHS_TOL: f64 = 1e-9;

/// Solves `model` with HiGHS and verifies the result against `tolerance`.
///
/// Infeasible and unbounded models are reported through [`LpStatus`]; a solver
/// error or an optimal report that fails the primal-residual or duality-gap
/// check surfaces as [`Error::Solver`].
pub fn solve(model: &LpModel, tolerance: f64) -> Result<LpSolution> {
    let relations: Vec<Relation> = model.constraints.iter().map(|c| c.relation).collect();
    let empty = |status| LpSolution {
        status,
        objective: f64::NAN,
        primal: Vec::new(),
        duals: Vec::new(),
        reduced_costs: Vec::new(),
        sense: model.sense,
        relations: relations.clone(),
    };
    if model.vars.is_empty() {
        let infeasible = model.constraints.iter().any(|c| match c.relation {
            Relation::Le => 0.0 > c.rhs + tolerance,
            Relation::Ge => 0.0 < c.rhs - tolerance,
            Relation::Eq => c.rhs.abs() > tolerance,
        });
        if infeasible {
            return Ok(empty(LpStatus::Infeasible));
        }
        return Ok(LpSolution {
            status: LpStatus::Optimal,
            objective: model.objective_constant,
            primal: Vec::new(),
            duals: vec![0.0; model.constraints.len()],
            reduced_costs: Vec::new(),
            sense: model.sense,
            relations,
        });
    }

    let flip = match model.sense {
        Sense::Minimize => 1.0,
        Sense::Maximize => -1.0,
    };
    let (status, raw) = run_highs(model, flip, true)?;
    let (status, raw) = if status == HighsModelStatus::UnboundedOrInfeasible {
        run_highs(model, flip, false)?
    } else {
        (status, raw)
    };
    match status {
        HighsModelStatus::Optimal => {}
        HighsModelStatus::Infeasible => return Ok(empty(LpStatus::Infeasible)),
        HighsModelStatus::Unbounded => return Ok(empty(LpStatus::Unbounded)),
        other => return Err(Error::Solver(format!("HiGHS returned status {other:?}"))),
    }
    let raw = raw.expect("optimal solve carries a solution");
    let primal = raw.columns().to_vec();
    // HiGHS reports minimization duals; undo the objective flip.
    let duals: Vec<f64> = raw.dual_rows().iter().map(|y| y * flip).collect();
    let reduced_costs: Vec<f64> = raw.dual_columns().iter().map(|d| d * flip).collect();
    let objective = model.objective_value(&primal);
    let solution = LpSolution {
        status: LpStatus::Optimal,
        objective,
        primal,
        duals,
        reduced_costs,
        sense: model.sense,
        relations,
    };

    let residual = model.primal_residual(&solution.primal);
    let scale = 1.0
        + model
            .constraints
            .iter()
            .map(|c| c.rhs.abs())
            .fold(0.0, f64::max)
            .min(1e6);
    if residual > tolerance * scale {
        return Err(Error::Solver(format!("primal residual {residual:e} exceeds tolerance")));
    }
    let gap = check_strong_duality(model, &solution);
    if gap > tolerance * (1.0 + objective.abs()) {
        return Err(Error::Solver(format!(
            "duality gap {gap:e} exceeds tolerance at objective {objective}"
        )));
    }
    Ok(solution)
}

fn run_highs(
    model: &LpModel,
    flip: f64,
    presolve: bool,
) -> Result<(HighsModelStatus, Option<highs::Solution>)> {
    let mut pb = RowProblem::default();
    let cols: Vec<highs::Col> = model
        .vars
        .iter()
        .zip(&model.objective)
        .map(|(v, &c)| pb.add_column(c * flip, v.lower..=v.upper))
        .collect();
    for con in &model.constraints {
        let factors = con.terms.iter().map(|&(v, a)| (cols[v.0], a));
        match con.relation {
            Relation::Le => pb.add_row(f64::NEG_INFINITY..=con.rhs, factors),
            Relation::Eq => pb.add_row(con.rhs..=con.rhs, factors),
            Relation::Ge => pb.add_row(con.rhs..=f64::INFINITY, factors),
        }
    }
    let mut highs_model = pb.try_optimise(HighsSense::Minimise).map_err(|s| Error::Solver(format!("{s:?}")))?;
    highs_model.make_quiet();
    let set = |m: &mut highs::Model, k: &str, v: f64| {
        m.try_set_option(k, v).map_err(|e| Error::Solver(format!("option {k}: {e:?}")))
    };
    set(&mut highs_model, "primal_feasibility_tolerance", HIGHS_TOL)?;
    set(&mut highs_model, "dual_feasibility_tolerance", HIGHS_TOL)?;
    highs_model
        .try_set_option("solver", "simplex")
        .map_err(|e| Error::Solver(format!("option solver: {e:?}")))?;
    if !presolve {
        highs_model
            .try_set_option("presolve", "off")
            .map_err(|e| Error::Solver(format!("option presolve: {e:?}")))?;
    }
    let solved = highs_model.try_solve().map_err(|s| Error::Solver(format!("HiGHS run failed: {s:?}")))?;
    let status = solved.status();
    let solution = (status == HighsModelStatus::Optimal).then(|| solved.get_solution());
    Ok((status, solution))
}

/// `|primal objective − dual objective|` with the dual objective rebuilt from
/// the reported row duals and the model data alone.
///
/// Reduced costs are recomputed as `c − Aᵀy`; each one is charged against the
/// variable bound it points at. A non-negligible reduced cost towards an
/// infinite bound means the duals are infeasible and the residual is infinite.
pub fn check_strong_duality(model: &LpModel, solution: &LpSolution) -> f64 {
    let mut reduced = model.objective.clone();
    let mut dual_obj = model.objective_constant;
    for (r, con) in model.constraints.iter().enumerate() {
        let y = solution.duals[r];
        dual_obj += y * con.rhs;
        for &(v, a) in &con.terms {
            reduced[v.0] -= y * a;
        }
    }
    // For maximization the roles of the bounds swap.
    let toward_lower = |d: f64| match model.sense {
        Sense::Minimize => d > 0.0,
        Sense::Maximize => d < 0.0,
    };
    for (j, var) in model.vars.iter().enumerate() {
        let d = reduced[j];
        let scale = 1.0 + model.objective[j].abs();
        if d.abs() <= 1e-9 * scale {
            continue;
        }
        let bound = if toward_lower(d) { var.lower } else { var.upper };
        if !bound.is_finite() {
            return f64::INFINITY;
        }
        dual_obj += d * bound;
    }
    (solution.objective - dual_obj).abs()
}

/// Largest `|multiplier · slack|` over all rows.
pub fn complementary_slackness(model: &LpModel, solution: &LpSolution) -> f64 {
    model
        .constraints
        .iter()
        .enumerate()
        .map(|(r, con)| {
            let slack = model.row_activity(ConId(r), &solution.primal) - con.rhs;
            (solution.duals[r] * slack).abs()
        })
        .fold(0.0, f64::max)
}
