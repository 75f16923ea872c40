//! Weighted real-time scenarios, the day-ahead load forecast, and bid vectors.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::system::PowerSystem;

const WEIGHT_TOL: f64 = 1e-9;
const VALUE_TOL: f64 = 1e-9;

/// One realization of renewable output and demand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub id: String,
    pub weight: f64,
    /// `[vres unit][period]`, MW
    pub vres: Vec<Vec<f64>>,
    /// `[load][period]`, MW
    pub demand: Vec<Vec<f64>>,
}

/// Scenario set aligned with a [`PowerSystem`]'s unit and load ordering.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSet {
    periods: Vec<u32>,
    scenarios: Vec<Scenario>,
    /// `[load][period]`, MW
    da_demand: Vec<Vec<f64>>,
}

impl ScenarioSet {
    /// Validates dimensions and values against `system`.
    ///
    /// Weights summing to one within 1e-9 are renormalized; anything else is
    /// rejected. Without an explicit day-ahead forecast the probability-weighted
    /// scenario demand is used.
    pub fn new(
        system: &PowerSystem,
        periods: Vec<u32>,
        mut scenarios: Vec<Scenario>,
        da_demand: Option<Vec<Vec<f64>>>,
    ) -> Result<Self> {
        let t_len = periods.len();
        if t_len == 0 {
            return Err(invalid("scenario set has no periods"));
        }
        if periods.windows(2).any(|w| w[0] >= w[1]) {
            return Err(invalid("periods must be strictly increasing"));
        }
        if scenarios.is_empty() {
            return Err(invalid("scenario set is empty"));
        }
        let mut total = 0.0;
        for s in &scenarios {
            if !s.weight.is_finite() || s.weight < 0.0 {
                return Err(invalid(format!("scenario {:?}: weight must be >= 0", s.id)));
            }
            total += s.weight;
            check_shape(&s.vres, system.num_vres(), t_len, &format!("scenario {:?} vres", s.id))?;
            check_shape(&s.demand, system.num_loads(), t_len, &format!("scenario {:?} demand", s.id))?;
            for (k, row) in s.vres.iter().enumerate() {
                let cap = system.vres_units[k].capacity;
                for (t, &w) in row.iter().enumerate() {
                    if !w.is_finite() || w < -VALUE_TOL {
                        return Err(invalid(format!(
                            "scenario {:?}: VRES {:?} period {} is negative",
                            s.id, system.vres_units[k].id, periods[t]
                        )));
                    }
                    if w > cap + VALUE_TOL {
                        return Err(invalid(format!(
                            "scenario {:?}: VRES {:?} period {} output {w} exceeds capacity {cap}",
                            s.id, system.vres_units[k].id, periods[t]
                        )));
                    }
                }
            }
            check_nonnegative(&s.demand, &format!("scenario {:?} demand", s.id))?;
        }
        if (total - 1.0).abs() > WEIGHT_TOL {
            return Err(invalid(format!("weights sum to {total}")));
        }
        let mut ids: Vec<&str> = scenarios.iter().map(|s| s.id.as_str()).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(invalid("duplicate scenario id"));
        }
        for s in &mut scenarios {
            s.weight /= total;
        }
        let da_demand = match da_demand {
            Some(d) => {
                check_shape(&d, system.num_loads(), t_len, "day-ahead demand")?;
                check_nonnegative(&d, "day-ahead demand")?;
                d
            }
            None => (0..system.num_loads())
                .map(|d| {
                    (0..t_len)
                        .map(|t| scenarios.iter().map(|s| s.weight * s.demand[d][t]).sum())
                        .collect()
                })
                .collect(),
        };
        Ok(ScenarioSet {
            periods,
            scenarios,
            da_demand,
        })
    }

    pub fn periods(&self) -> &[u32] {
        &self.periods
    }

    pub fn num_periods(&self) -> usize {
        self.periods.len()
    }

    pub fn scenarios(&self) -> &[Scenario] {
        &self.scenarios
    }

    pub fn len(&self) -> usize {
        self.scenarios.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scenarios.is_empty()
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.scenarios.iter().position(|s| s.id == id)
    }

    pub fn weights(&self) -> Vec<f64> {
        self.scenarios.iter().map(|s| s.weight).collect()
    }

    /// `[load][period]` day-ahead forecast.
    pub fn da_demand(&self) -> &[Vec<f64>] {
        &self.da_demand
    }

    /// Probability-weighted VRES output, `[vres unit][period]`.
    pub fn expected_vres(&self) -> Vec<Vec<f64>> {
        let k_len = self.scenarios[0].vres.len();
        (0..k_len)
            .map(|k| {
                (0..self.num_periods())
                    .map(|t| self.scenarios.iter().map(|s| s.weight * s.vres[k][t]).sum())
                    .collect()
            })
            .collect()
    }

    /// Day-ahead forecast aggregated per bus, `[bus][period]`.
    pub fn da_bus_demand(&self, system: &PowerSystem) -> Vec<Vec<f64>> {
        aggregate_loads(system, &self.da_demand, self.num_periods())
    }

    /// Scenario demand aggregated per bus, `[bus][period]`.
    pub fn bus_demand(&self, system: &PowerSystem, scenario: usize) -> Vec<Vec<f64>> {
        aggregate_loads(system, &self.scenarios[scenario].demand, self.num_periods())
    }

    /// Probability-weighted total demand energy over the horizon.
    pub fn expected_demand_energy(&self) -> f64 {
        self.scenarios
            .iter()
            .map(|s| s.weight * s.demand.iter().flatten().sum::<f64>())
            .sum()
    }

    /// Probability-weighted total VRES energy over the horizon.
    pub fn expected_vres_energy(&self) -> f64 {
        self.scenarios
            .iter()
            .map(|s| s.weight * s.vres.iter().flatten().sum::<f64>())
            .sum()
    }

    /// Restricts every profile to periods `range` (positions, not labels).
    pub fn window(&self, range: std::ops::Range<usize>) -> ScenarioSet {
        let cut = |rows: &[Vec<f64>]| -> Vec<Vec<f64>> { rows.iter().map(|r| r[range.clone()].to_vec()).collect() };
        ScenarioSet {
            periods: self.periods[range.clone()].to_vec(),
            scenarios: self
                .scenarios
                .iter()
                .map(|s| Scenario {
                    id: s.id.clone(),
                    weight: s.weight,
                    vres: cut(&s.vres),
                    demand: cut(&s.demand),
                })
                .collect(),
            da_demand: cut(&self.da_demand),
        }
    }

    /// Multiplies every VRES realization by `factor` (capacities must be
    /// scaled alongside by the caller).
    pub fn scale_vres(&self, factor: f64) -> ScenarioSet {
        let mut out = self.clone();
        for s in &mut out.scenarios {
            for v in s.vres.iter_mut().flatten() {
                *v *= factor;
            }
        }
        out
    }

    /// Writes the set in the scenario CSV layout, day-ahead rows first.
    pub fn to_csv(&self, system: &PowerSystem) -> String {
        let mut out = String::from("scenario_id,weight,kind,element_id,period,value_mw\n");
        for (d, load) in system.loads.iter().enumerate() {
            for (t, p) in self.periods.iter().enumerate() {
                let _ = writeln!(out, "DA,,load,{},{p},{}", load.id, self.da_demand[d][t]);
            }
        }
        for s in &self.scenarios {
            for (k, unit) in system.vres_units.iter().enumerate() {
                for (t, p) in self.periods.iter().enumerate() {
                    let _ = writeln!(out, "{},{},vres,{},{p},{}", s.id, s.weight, unit.id, s.vres[k][t]);
                }
            }
            for (d, load) in system.loads.iter().enumerate() {
                for (t, p) in self.periods.iter().enumerate() {
                    let _ = writeln!(out, "{},{},load,{},{p},{}", s.id, s.weight, load.id, s.demand[d][t]);
                }
            }
        }
        out
    }
}

fn aggregate_loads(system: &PowerSystem, per_load: &[Vec<f64>], t_len: usize) -> Vec<Vec<f64>> {
    let mut out = vec![vec![0.0; t_len]; system.num_buses()];
    for (d, row) in per_load.iter().enumerate() {
        let n = system.load_bus(d);
        for (t, v) in row.iter().enumerate() {
            out[n][t] += v;
        }
    }
    out
}

fn check_shape(rows: &[Vec<f64>], n: usize, t_len: usize, what: &str) -> Result<()> {
    if rows.len() != n || rows.iter().any(|r| r.len() != t_len) {
        return Err(invalid(format!("{what}: expected {n} rows of {t_len} periods")));
    }
    Ok(())
}

fn check_nonnegative(rows: &[Vec<f64>], what: &str) -> Result<()> {
    if rows.iter().flatten().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(invalid(format!("{what}: values must be finite and >= 0")));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
enum Kind {
    Vres,
    Load,
}

#[derive(Debug, Deserialize)]
struct CsvRow {
    scenario_id: String,
    weight: Option<f64>,
    kind: Kind,
    element_id: String,
    period: u32,
    value_mw: f64,
}

/// Reads a scenario CSV (`scenario_id, weight, kind, element_id, period, value_mw`).
///
/// Rows with `scenario_id = "DA"` carry the day-ahead load forecast; they are
/// optional and default to the scenario mean.
pub fn load_scenarios(path: impl AsRef<Path>, system: &PowerSystem) -> Result<ScenarioSet> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_scenarios(&text, system).map_err(|e| match e {
        Error::Parse { line, column, message, .. } => Error::Parse {
            path: path.to_path_buf(),
            line,
            column,
            message,
        },
        other => other,
    })
}

/// [`load_scenarios`] on in-memory CSV text.
pub fn parse_scenarios(text: &str, system: &PowerSystem) -> Result<ScenarioSet> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    // scenario id -> (weight, vres map, demand map)
    type Cells = BTreeMap<(usize, u32), f64>;
    let mut order: Vec<String> = Vec::new();
    let mut weights: BTreeMap<String, f64> = BTreeMap::new();
    let mut vres: BTreeMap<String, Cells> = BTreeMap::new();
    let mut demand: BTreeMap<String, Cells> = BTreeMap::new();
    let mut da: Cells = BTreeMap::new();
    let mut periods = std::collections::BTreeSet::new();

    for record in reader.deserialize::<CsvRow>() {
        let row = record.map_err(|e| {
            let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
            Error::Parse {
                path: Default::default(),
                line,
                column: 0,
                message: e.to_string(),
            }
        })?;
        periods.insert(row.period);
        let is_da = row.scenario_id == "DA";
        let element = match row.kind {
            Kind::Vres => system
                .vres_index(&row.element_id)
                .ok_or_else(|| invalid(format!("unknown unit id {:?}", row.element_id)))?,
            Kind::Load => system
                .load_index(&row.element_id)
                .ok_or_else(|| invalid(format!("unknown load id {:?}", row.element_id)))?,
        };
        if is_da {
            if row.kind != Kind::Load {
                return Err(invalid("day-ahead rows must have kind = load"));
            }
            if da.insert((element, row.period), row.value_mw).is_some() {
                return Err(invalid(format!("duplicate DA row for {} period {}", row.element_id, row.period)));
            }
            continue;
        }
        let weight = row
            .weight
            .ok_or_else(|| invalid(format!("scenario {:?}: missing weight", row.scenario_id)))?;
        match weights.get(&row.scenario_id) {
            None => {
                order.push(row.scenario_id.clone());
                weights.insert(row.scenario_id.clone(), weight);
            }
            Some(&w) if (w - weight).abs() > WEIGHT_TOL => {
                return Err(invalid(format!("scenario {:?}: inconsistent weights", row.scenario_id)));
            }
            Some(_) => {}
        }
        let table = match row.kind {
            Kind::Vres => vres.entry(row.scenario_id.clone()).or_default(),
            Kind::Load => demand.entry(row.scenario_id.clone()).or_default(),
        };
        if table.insert((element, row.period), row.value_mw).is_some() {
            return Err(invalid(format!(
                "scenario {:?}: duplicate row for {} period {}",
                row.scenario_id, row.element_id, row.period
            )));
        }
    }

    let periods: Vec<u32> = periods.into_iter().collect();
    let dense = |cells: Option<&Cells>, n: usize, what: &str| -> Result<Vec<Vec<f64>>> {
        let empty = Cells::new();
        let cells = cells.unwrap_or(&empty);
        let mut out = vec![vec![0.0; periods.len()]; n];
        for (e, row) in out.iter_mut().enumerate() {
            for (t, p) in periods.iter().enumerate() {
                row[t] = *cells
                    .get(&(e, *p))
                    .ok_or_else(|| invalid(format!("{what}: missing value for element #{e} period {p}")))?;
            }
        }
        Ok(out)
    };
    let scenarios = order
        .iter()
        .map(|id| {
            Ok(Scenario {
                id: id.clone(),
                weight: weights[id],
                vres: dense(vres.get(id), system.num_vres(), &format!("scenario {id:?} vres"))?,
                demand: dense(demand.get(id), system.num_loads(), &format!("scenario {id:?} load"))?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let da_demand = if da.is_empty() {
        None
    } else {
        Some(dense(Some(&da), system.num_loads(), "day-ahead forecast")?)
    };
    ScenarioSet::new(system, periods, scenarios, da_demand)
}

/// Mean trace the sampler perturbs around.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaseProfile {
    pub periods: Vec<u32>,
    /// `[vres unit][period]`, MW
    pub vres: Vec<Vec<f64>>,
    /// `[load][period]`, MW
    pub demand: Vec<Vec<f64>>,
}

impl BaseProfile {
    /// Expected values of an existing set.
    pub fn from_expectation(set: &ScenarioSet) -> Self {
        BaseProfile {
            periods: set.periods().to_vec(),
            vres: set.expected_vres(),
            demand: set.da_demand().to_vec(),
        }
    }
}

/// Standard deviations of the sampler's Gaussian perturbations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    /// Fraction of installed VRES capacity.
    pub vres_rel_std: f64,
    /// Fraction of the base demand value.
    pub demand_rel_std: f64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        NoiseModel {
            vres_rel_std: 0.2,
            demand_rel_std: 0.03,
        }
    }
}

/// Draws `n` equal-weight scenarios by independent truncated-Gaussian
/// perturbation of `base` per (element, period). Deterministic in `seed`.
pub fn sample_scenarios(
    system: &PowerSystem,
    base: &BaseProfile,
    noise: &NoiseModel,
    n: usize,
    seed: u64,
) -> Result<ScenarioSet> {
    if n == 0 {
        return Err(invalid("sample count must be >= 1"));
    }
    let t_len = base.periods.len();
    check_shape(&base.vres, system.num_vres(), t_len, "base profile vres")?;
    check_shape(&base.demand, system.num_loads(), t_len, "base profile demand")?;
    for (k, row) in base.vres.iter().enumerate() {
        let cap = system.vres_units[k].capacity;
        if row.iter().any(|&w| !(0.0..=cap + VALUE_TOL).contains(&w)) {
            return Err(invalid(format!(
                "base profile for VRES {:?} must lie within [0, {cap}]",
                system.vres_units[k].id
            )));
        }
    }
    check_nonnegative(&base.demand, "base profile demand")?;
    if noise.vres_rel_std < 0.0 || noise.demand_rel_std < 0.0 {
        return Err(invalid("noise standard deviations must be >= 0"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let weight = 1.0 / n as f64;
    let scenarios = (0..n)
        .map(|s| {
            let vres = base
                .vres
                .iter()
                .enumerate()
                .map(|(k, row)| {
                    let cap = system.vres_units[k].capacity;
                    row.iter()
                        .map(|&m| truncated_normal(&mut rng, m, noise.vres_rel_std * cap, 0.0, cap))
                        .collect()
                })
                .collect();
            let demand = base
                .demand
                .iter()
                .map(|row| {
                    row.iter()
                        .map(|&m| truncated_normal(&mut rng, m, noise.demand_rel_std * m, 0.0, f64::INFINITY))
                        .collect()
                })
                .collect();
            Scenario {
                id: format!("s{}", s + 1),
                weight,
                vres,
                demand,
            }
        })
        .collect();
    ScenarioSet::new(system, base.periods.clone(), scenarios, Some(base.demand.clone()))
}

fn truncated_normal(rng: &mut impl Rng, mean: f64, std: f64, lo: f64, hi: f64) -> f64 {
    if std <= 0.0 {
        return mean.clamp(lo, hi);
    }
    let normal = Normal::new(mean, std).expect("finite std");
    for _ in 0..64 {
        let x = normal.sample(rng);
        if (lo..=hi).contains(&x) {
            return x;
        }
    }
    mean.clamp(lo, hi)
}

/// Day-ahead quantity offers `[vres unit][period]` in MW.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BidVector(pub Vec<Vec<f64>>);

impl BidVector {
    pub fn new(values: Vec<Vec<f64>>) -> Result<Self> {
        if values.iter().flatten().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(invalid("bids must be finite and >= 0"));
        }
        Ok(BidVector(values))
    }

    pub fn zeros(k_len: usize, t_len: usize) -> Self {
        BidVector(vec![vec![0.0; t_len]; k_len])
    }

    pub fn uniform(k_len: usize, t_len: usize, value: f64) -> Self {
        BidVector(vec![vec![value; t_len]; k_len])
    }

    /// Bids at installed capacity.
    pub fn capacity(system: &PowerSystem, t_len: usize) -> Self {
        BidVector(system.vres_units.iter().map(|k| vec![k.capacity; t_len]).collect())
    }

    pub fn get(&self, k: usize, t: usize) -> f64 {
        self.0[k][t]
    }

    /// Checks that every `(unit, period)` is covered.
    pub fn check_shape(&self, k_len: usize, t_len: usize) -> Result<()> {
        if self.0.len() != k_len {
            return Err(Error::Model(format!("bid vector has {} units, expected {k_len}", self.0.len())));
        }
        if let Some((k, row)) = self.0.iter().enumerate().find(|(_, r)| r.len() != t_len) {
            return Err(Error::Model(format!(
                "missing bid entry: unit #{k} has {} periods, expected {t_len}",
                row.len()
            )));
        }
        Ok(())
    }

    pub fn total(&self) -> f64 {
        self.0.iter().flatten().sum()
    }
}
