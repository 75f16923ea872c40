//! Settlement, price statistics and commitment-relaxation quality, plus the
//! CSV and JSON tables studies emit.
//!
//! Real-time quantities settle as deviations from the day-ahead position at
//! real-time prices. Revenues are gross market revenues; production and
//! re-dispatch costs are reported next to them.

use serde::{Deserialize, Serialize};

use crate::benchmarks::{CostReport, Framework, FrameworkRun};
use crate::dam::DamSolution;
use crate::error::{Error, Result};
use crate::rtm::RtmSolution;
use crate::scenario::ScenarioSet;
use crate::system::PowerSystem;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParticipantKind {
    Vres,
    Conventional,
}

/// Market revenues of one producer, $. Real-time values are expectations
/// over scenarios.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticipantRevenue {
    pub id: String,
    pub kind: ParticipantKind,
    pub bus: String,
    pub da_revenue: f64,
    pub rt_settlement: f64,
    /// `da_revenue + rt_settlement`
    pub total_revenue: f64,
    /// Real-time settlement per scenario.
    pub rt_by_scenario: Vec<f64>,
    /// Day-ahead production cost.
    pub da_cost: f64,
    /// Expected re-dispatch cost.
    pub rt_cost: f64,
    /// `total_revenue - da_cost - rt_cost`
    pub profit: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SettlementReport {
    pub participants: Vec<ParticipantRevenue>,
    /// Day-ahead plus expected real-time payments of all loads, $.
    pub load_payments: f64,
    /// Day-ahead plus expected real-time congestion rent, $.
    pub congestion_rent: f64,
    /// `|Σ total_revenue − (load_payments − congestion_rent)|`, $.
    pub identity_residual: f64,
}

/// Settles day-ahead positions at day-ahead prices and real-time deviations
/// at real-time prices.
pub fn settle(
    system: &PowerSystem,
    scenarios: &ScenarioSet,
    dam: &DamSolution,
    rtm: &RtmSolution,
) -> SettlementReport {
    let t_len = scenarios.num_periods();
    let da_price = &dam.duals.balance;
    let mut participants = Vec::with_capacity(system.num_vres() + system.num_units());

    for (k, unit) in system.vres_units.iter().enumerate() {
        let n = system.vres_bus(k);
        let da_revenue: f64 = (0..t_len).map(|t| da_price[n][t] * dam.vres[k][t]).sum();
        let rt_by_scenario: Vec<f64> = rtm
            .scenarios
            .iter()
            .zip(scenarios.scenarios())
            .map(|(s, scen)| {
                (0..t_len)
                    .map(|t| s.price[n][t] * ((scen.vres[k][t] - s.curtail[k][t]) - dam.vres[k][t]))
                    .sum()
            })
            .collect();
        participants.push(participant(
            &unit.id,
            ParticipantKind::Vres,
            &system.buses[n].id,
            da_revenue,
            rt_by_scenario,
            0.0,
            vec![0.0; rtm.scenarios.len()],
            rtm,
        ));
    }

    for (i, unit) in system.conventional_units.iter().enumerate() {
        let n = system.unit_bus(i);
        let da_revenue: f64 = (0..t_len).map(|t| da_price[n][t] * dam.output[i][t]).sum();
        let da_cost: f64 = (0..t_len)
            .map(|t| unit.variable_cost * dam.output[i][t] + unit.no_load_cost * dam.commitment[i][t] + dam.startup[i][t])
            .sum();
        let rt_by_scenario = rtm
            .scenarios
            .iter()
            .map(|s| (0..t_len).map(|t| s.price[n][t] * (s.up[i][t] - s.down[i][t])).sum())
            .collect();
        let rt_costs = rtm
            .scenarios
            .iter()
            .map(|s| {
                (0..t_len)
                    .map(|t| {
                        unit.redispatch_up_cost * s.up[i][t] - unit.redispatch_down_cost * s.down[i][t]
                            + unit.no_load_cost * (s.commitment[i][t] - dam.commitment[i][t])
                            + s.startup[i][t]
                    })
                    .sum()
            })
            .collect();
        participants.push(participant(
            &unit.id,
            ParticipantKind::Conventional,
            &system.buses[n].id,
            da_revenue,
            rt_by_scenario,
            da_cost,
            rt_costs,
            rtm,
        ));
    }

    let da_demand = scenarios.da_bus_demand(system);
    let mut load_payments = 0.0;
    let mut congestion_rent = 0.0;
    for t in 0..t_len {
        for n in 0..system.num_buses() {
            load_payments += da_price[n][t] * da_demand[n][t];
        }
        for l in 0..system.lines.len() {
            let (from, to) = system.line_ends(l);
            congestion_rent += dam.flow[l][t] * (da_price[to][t] - da_price[from][t]);
        }
    }
    for (w, s) in rtm.scenarios.iter().enumerate() {
        let demand = scenarios.bus_demand(system, w);
        let mut pay = 0.0;
        let mut rent = 0.0;
        for t in 0..t_len {
            for n in 0..system.num_buses() {
                pay += s.price[n][t] * ((demand[n][t] - s.shed[n][t]) - da_demand[n][t]);
            }
            for (l, line) in system.lines.iter().enumerate() {
                let (from, to) = system.line_ends(l);
                let flow = (s.angle[from][t] - s.angle[to][t]) / line.reactance;
                rent += (flow - dam.flow[l][t]) * (s.price[to][t] - s.price[from][t]);
            }
        }
        load_payments += s.weight * pay;
        congestion_rent += s.weight * rent;
    }
    let revenue: f64 = participants.iter().map(|p| p.total_revenue).sum();
    SettlementReport {
        identity_residual: (revenue - (load_payments - congestion_rent)).abs(),
        participants,
        load_payments,
        congestion_rent,
    }
}

#[allow(clippy::too_many_arguments)]
fn participant(
    id: &str,
    kind: ParticipantKind,
    bus: &str,
    da_revenue: f64,
    rt_by_scenario: Vec<f64>,
    da_cost: f64,
    rt_costs: Vec<f64>,
    rtm: &RtmSolution,
) -> ParticipantRevenue {
    let expect = |v: &[f64]| -> f64 { rtm.scenarios.iter().zip(v).map(|(s, x)| s.weight * x).sum() };
    let rt_settlement = expect(&rt_by_scenario);
    let rt_cost = expect(&rt_costs);
    let total_revenue = da_revenue + rt_settlement;
    ParticipantRevenue {
        id: id.to_string(),
        kind,
        bus: bus.to_string(),
        da_revenue,
        rt_settlement,
        total_revenue,
        rt_by_scenario,
        da_cost,
        rt_cost,
        profit: total_revenue - da_cost - rt_cost,
    }
}

/// Nodal prices with their spreads. Node averages are unweighted; scenario
/// statistics use scenario probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceTables {
    pub periods: Vec<u32>,
    pub buses: Vec<String>,
    pub scenarios: Vec<String>,
    pub weights: Vec<f64>,
    /// `[bus][period]`
    pub dam: Vec<Vec<f64>>,
    /// `[scenario][bus][period]`
    pub rt: Vec<Vec<Vec<f64>>>,
    /// Spread of day-ahead prices across nodes, `[period]`.
    pub dam_node_std: Vec<f64>,
    /// Probability-weighted mean real-time price, `[bus][period]`.
    pub rt_scenario_mean: Vec<Vec<f64>>,
    /// Spread across nodes of `rt_scenario_mean`, `[period]`.
    pub rt_node_std: Vec<f64>,
    /// Node-averaged real-time price, `[scenario][period]`.
    pub rt_node_mean: Vec<Vec<f64>>,
    /// Probability-weighted spread across scenarios of `rt_node_mean`, `[period]`.
    pub rt_scenario_std: Vec<f64>,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (mean, (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt())
}

fn weighted_mean_std(values: &[f64], weights: &[f64]) -> (f64, f64) {
    let mean: f64 = values.iter().zip(weights).map(|(v, p)| p * v).sum();
    let var: f64 = values.iter().zip(weights).map(|(v, p)| p * (v - mean).powi(2)).sum();
    (mean, var.max(0.0).sqrt())
}

pub fn price_tables(system: &PowerSystem, scenarios: &ScenarioSet, dam: &DamSolution, rtm: &RtmSolution) -> PriceTables {
    let t_len = scenarios.num_periods();
    let n_len = system.num_buses();
    let weights: Vec<f64> = rtm.scenarios.iter().map(|s| s.weight).collect();
    let dam_prices = dam.duals.balance.clone();
    let rt: Vec<Vec<Vec<f64>>> = rtm.scenarios.iter().map(|s| s.price.clone()).collect();
    let column = |m: &Vec<Vec<f64>>, t: usize| -> Vec<f64> { m.iter().map(|r| r[t]).collect() };

    let dam_node_std = (0..t_len).map(|t| mean_std(&column(&dam_prices, t)).1).collect();
    let rt_scenario_mean: Vec<Vec<f64>> = (0..n_len)
        .map(|n| {
            (0..t_len)
                .map(|t| weighted_mean_std(&rt.iter().map(|s| s[n][t]).collect::<Vec<_>>(), &weights).0)
                .collect()
        })
        .collect();
    let rt_node_std = (0..t_len).map(|t| mean_std(&column(&rt_scenario_mean, t)).1).collect();
    let rt_node_mean: Vec<Vec<f64>> = rt
        .iter()
        .map(|s| (0..t_len).map(|t| mean_std(&column(s, t)).0).collect())
        .collect();
    let rt_scenario_std = (0..t_len)
        .map(|t| weighted_mean_std(&column(&rt_node_mean, t), &weights).1)
        .collect();

    PriceTables {
        periods: scenarios.periods().to_vec(),
        buses: system.buses.iter().map(|b| b.id.clone()).collect(),
        scenarios: rtm.scenarios.iter().map(|s| s.id.clone()).collect(),
        weights,
        dam: dam_prices,
        rt,
        dam_node_std,
        rt_scenario_mean,
        rt_node_std,
        rt_node_mean,
        rt_scenario_std,
    }
}

/// How often the relaxed commitment variables end up strictly between 0 and 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UcQualityReport {
    pub epsilon: f64,
    pub da_fractional: usize,
    pub da_total: usize,
    pub rt_fractional: usize,
    pub rt_total: usize,
    pub da_fraction: f64,
    pub rt_fraction: f64,
    /// Over all day-ahead and real-time values together.
    pub combined_fraction: f64,
    /// Counts of all commitment values in ten equal buckets over `[0, 1]`;
    /// the last bucket includes 1.
    pub histogram: [usize; 10],
}

pub fn uc_quality(dam: &DamSolution, rtm: &RtmSolution, epsilon: f64) -> UcQualityReport {
    let fractional = |u: f64| u > epsilon && u < 1.0 - epsilon;
    let da: Vec<f64> = dam.commitment.iter().flatten().copied().collect();
    let rt: Vec<f64> = rtm
        .scenarios
        .iter()
        .flat_map(|s| s.commitment.iter().flatten().copied())
        .collect();
    let da_fractional = da.iter().filter(|&&u| fractional(u)).count();
    let rt_fractional = rt.iter().filter(|&&u| fractional(u)).count();
    let mut histogram = [0usize; 10];
    for &u in da.iter().chain(&rt) {
        histogram[((u.clamp(0.0, 1.0) * 10.0) as usize).min(9)] += 1;
    }
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    UcQualityReport {
        epsilon,
        da_fractional,
        da_total: da.len(),
        rt_fractional,
        rt_total: rt.len(),
        da_fraction: ratio(da_fractional, da.len()),
        rt_fraction: ratio(rt_fractional, rt.len()),
        combined_fraction: ratio(da_fractional + rt_fractional, da.len() + rt.len()),
        histogram,
    }
}

/// Everything produced for one sweep point.
#[derive(Debug, Clone)]
pub struct PointRecord {
    pub label: String,
    pub system: PowerSystem,
    pub scenarios: ScenarioSet,
    pub runs: Vec<FrameworkRun>,
}

fn num(x: f64) -> String {
    let s = format!("{x:.6}");
    if s.trim_start_matches('-').bytes().all(|b| b == b'0' || b == b'.') {
        s.trim_start_matches('-').to_string()
    } else {
        s
    }
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| Error::Model(format!("csv buffer: {e}")))?;
    String::from_utf8(bytes).map_err(|e| Error::Model(format!("csv encoding: {e}")))
}

fn csv_err(e: csv::Error) -> Error {
    Error::Model(format!("csv writer: {e}"))
}

/// `point,framework,total,da_cost,expected_rt_cost,std,model_objective`
pub fn costs_csv(points: &[PointRecord]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["point", "framework", "total", "da_cost", "expected_rt_cost", "std", "model_objective"])
        .map_err(csv_err)?;
    for p in points {
        for r in &p.runs {
            let c = &r.report;
            w.write_record([
                p.label.clone(),
                c.framework.to_string(),
                num(c.total),
                num(c.da_cost),
                num(c.expected_rt_cost),
                num(c.std),
                r.model_objective.map(num).unwrap_or_default(),
            ])
            .map_err(csv_err)?;
        }
    }
    finish(w)
}

/// `point,framework,bus,period,price`
pub fn prices_dam_csv(points: &[PointRecord]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["point", "framework", "bus", "period", "price"]).map_err(csv_err)?;
    for p in points {
        for r in &p.runs {
            for (n, bus) in p.system.buses.iter().enumerate() {
                for (t, period) in p.scenarios.periods().iter().enumerate() {
                    w.write_record([
                        p.label.clone(),
                        r.report.framework.to_string(),
                        bus.id.clone(),
                        period.to_string(),
                        num(r.dam.duals.balance[n][t]),
                    ])
                    .map_err(csv_err)?;
                }
            }
        }
    }
    finish(w)
}

/// `point,framework,scenario,weight,bus,period,price`
pub fn prices_rt_csv(points: &[PointRecord]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["point", "framework", "scenario", "weight", "bus", "period", "price"])
        .map_err(csv_err)?;
    for p in points {
        for r in &p.runs {
            for s in &r.rtm.scenarios {
                for (n, bus) in p.system.buses.iter().enumerate() {
                    for (t, period) in p.scenarios.periods().iter().enumerate() {
                        w.write_record([
                            p.label.clone(),
                            r.report.framework.to_string(),
                            s.id.clone(),
                            num(s.weight),
                            bus.id.clone(),
                            period.to_string(),
                            num(s.price[n][t]),
                        ])
                        .map_err(csv_err)?;
                    }
                }
            }
        }
    }
    finish(w)
}

/// `point,framework,participant,kind,bus,da_revenue,rt_settlement,total_revenue,da_cost,rt_cost,profit`
pub fn revenues_csv(points: &[PointRecord]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "point",
        "framework",
        "participant",
        "kind",
        "bus",
        "da_revenue",
        "rt_settlement",
        "total_revenue",
        "da_cost",
        "rt_cost",
        "profit",
    ])
    .map_err(csv_err)?;
    for p in points {
        for r in &p.runs {
            let s = settle(&p.system, &p.scenarios, &r.dam, &r.rtm);
            for q in &s.participants {
                let kind = match q.kind {
                    ParticipantKind::Vres => "vres",
                    ParticipantKind::Conventional => "conventional",
                };
                w.write_record([
                    p.label.clone(),
                    r.report.framework.to_string(),
                    q.id.clone(),
                    kind.to_string(),
                    q.bus.clone(),
                    num(q.da_revenue),
                    num(q.rt_settlement),
                    num(q.total_revenue),
                    num(q.da_cost),
                    num(q.rt_cost),
                    num(q.profit),
                ])
                .map_err(csv_err)?;
            }
        }
    }
    finish(w)
}

/// `point,framework,epsilon,da_fraction,rt_fraction,combined_fraction,bucket_0..bucket_9`
pub fn uc_quality_csv(points: &[PointRecord], epsilon: f64) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> = ["point", "framework", "epsilon", "da_fraction", "rt_fraction", "combined_fraction"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend((0..10).map(|b| format!("bucket_{b}")));
    w.write_record(&header).map_err(csv_err)?;
    for p in points {
        for r in &p.runs {
            let q = uc_quality(&r.dam, &r.rtm, epsilon);
            let mut row = vec![
                p.label.clone(),
                r.report.framework.to_string(),
                format!("{epsilon:e}"),
                num(q.da_fraction),
                num(q.rt_fraction),
                num(q.combined_fraction),
            ];
            row.extend(q.histogram.iter().map(|c| c.to_string()));
            w.write_record(&row).map_err(csv_err)?;
        }
    }
    finish(w)
}

/// Per-point summary written to `run_summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointSummary {
    pub label: String,
    pub reports: Vec<CostReport>,
    /// Failures of individual frameworks at this point.
    pub errors: Vec<FrameworkError>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameworkError {
    pub framework: Framework,
    pub message: String,
}
