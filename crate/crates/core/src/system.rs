//! Static grid description: buses, lines, conventional and renewable units, loads.
//!
//! A [`PowerSystem`] is only ever handed out after [`PowerSystem::validate`] has
//! resolved every cross-reference, so downstream model builders index units and
//! buses by position without further checks.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    pub id: String,
    /// Loads attached to this bus. Filled in from `loads` when left empty.
    #[serde(default)]
    pub loads: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Line {
    pub from: String,
    pub to: String,
    /// Series reactance in per unit.
    pub reactance: f64,
    /// Thermal limit in MW.
    pub capacity: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StartupClass {
    /// May be committed in the real-time market.
    Fast,
    /// Real-time commitment is locked to the day-ahead commitment.
    Slow,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConventionalUnit {
    pub id: String,
    pub bus: String,
    /// $/MWh
    pub variable_cost: f64,
    /// $/h while committed
    pub no_load_cost: f64,
    /// $ per start
    pub startup_cost: f64,
    /// $/MWh for upward real-time adjustment
    pub redispatch_up_cost: f64,
    /// $/MWh saved for downward real-time adjustment
    pub redispatch_down_cost: f64,
    pub p_min: f64,
    pub p_max: f64,
    /// MW/h
    pub ramp_up: f64,
    /// MW/h
    pub ramp_down: f64,
    pub startup_class: StartupClass,
    #[serde(default)]
    pub initial_commitment: f64,
    #[serde(default)]
    pub initial_output: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VresUnit {
    pub id: String,
    pub bus: String,
    /// Installed capacity in MW.
    pub capacity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Load {
    pub id: String,
    pub bus: String,
}

/// Validated network with resolved bus indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerSystem {
    pub buses: Vec<Bus>,
    pub lines: Vec<Line>,
    pub conventional_units: Vec<ConventionalUnit>,
    pub vres_units: Vec<VresUnit>,
    pub loads: Vec<Load>,
    #[serde(skip)]
    index: Index,
}

#[derive(Debug, Clone, Default, PartialEq)]
struct Index {
    bus_pos: BTreeMap<String, usize>,
    line_ends: Vec<(usize, usize)>,
    unit_bus: Vec<usize>,
    vres_bus: Vec<usize>,
    load_bus: Vec<usize>,
    load_pos: BTreeMap<String, usize>,
    vres_pos: BTreeMap<String, usize>,
    unit_pos: BTreeMap<String, usize>,
    /// One reference bus per connected component (lowest id in the component).
    reference: Vec<bool>,
}

/// Read and validate a system JSON file.
pub fn load_system(path: impl AsRef<Path>) -> Result<PowerSystem> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let raw: PowerSystem = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    raw.validate()
}

impl PowerSystem {
    pub fn new(
        buses: Vec<Bus>,
        lines: Vec<Line>,
        conventional_units: Vec<ConventionalUnit>,
        vres_units: Vec<VresUnit>,
        loads: Vec<Load>,
    ) -> Result<Self> {
        PowerSystem {
            buses,
            lines,
            conventional_units,
            vres_units,
            loads,
            index: Index::default(),
        }
        .validate()
    }

    /// Check every invariant and build the lookup tables.
    pub fn validate(mut self) -> Result<Self> {
        let mut bus_pos = BTreeMap::new();
        for (pos, bus) in self.buses.iter().enumerate() {
            if bus_pos.insert(bus.id.clone(), pos).is_some() {
                return Err(invalid(format!("duplicate bus id {:?}", bus.id)));
            }
        }
        if self.buses.is_empty() {
            return Err(invalid("system has no buses"));
        }
        let resolve = |what: &str, id: &str, bus: &str| -> Result<usize> {
            bus_pos
                .get(bus)
                .copied()
                .ok_or_else(|| invalid(format!("{what} {id:?} references unknown bus {bus:?}")))
        };

        let mut line_ends = Vec::with_capacity(self.lines.len());
        for (pos, line) in self.lines.iter().enumerate() {
            let name = format!("#{pos} ({}-{})", line.from, line.to);
            let from = resolve("line", &name, &line.from)?;
            let to = resolve("line", &name, &line.to)?;
            if from == to {
                return Err(invalid(format!("line {name}: from and to must differ")));
            }
            if !(line.reactance > 0.0) || !line.reactance.is_finite() {
                return Err(invalid(format!("line {name}: reactance must be > 0")));
            }
            if !(line.capacity >= 0.0) || !line.capacity.is_finite() {
                return Err(invalid(format!("line {name}: capacity must be >= 0")));
            }
            line_ends.push((from, to));
        }

        let mut unit_pos = BTreeMap::new();
        let mut unit_bus = Vec::with_capacity(self.conventional_units.len());
        for (pos, u) in self.conventional_units.iter().enumerate() {
            if unit_pos.insert(u.id.clone(), pos).is_some() {
                return Err(invalid(format!("duplicate conventional unit id {:?}", u.id)));
            }
            unit_bus.push(resolve("conventional unit", &u.id, &u.bus)?);
            validate_unit(u)?;
        }

        let mut vres_pos = BTreeMap::new();
        let mut vres_bus = Vec::with_capacity(self.vres_units.len());
        for (pos, k) in self.vres_units.iter().enumerate() {
            if vres_pos.insert(k.id.clone(), pos).is_some() {
                return Err(invalid(format!("duplicate VRES unit id {:?}", k.id)));
            }
            if unit_pos.contains_key(&k.id) {
                return Err(invalid(format!("id {:?} used by two units", k.id)));
            }
            vres_bus.push(resolve("VRES unit", &k.id, &k.bus)?);
            if !(k.capacity >= 0.0) || !k.capacity.is_finite() {
                return Err(invalid(format!("VRES unit {:?}: capacity must be >= 0", k.id)));
            }
        }

        let mut load_pos = BTreeMap::new();
        let mut load_bus = Vec::with_capacity(self.loads.len());
        for (pos, l) in self.loads.iter().enumerate() {
            if load_pos.insert(l.id.clone(), pos).is_some() {
                return Err(invalid(format!("duplicate load id {:?}", l.id)));
            }
            load_bus.push(resolve("load", &l.id, &l.bus)?);
        }

        // Bus-side load lists must agree with the load records when given.
        for (n, bus) in self.buses.iter_mut().enumerate() {
            let attached: Vec<String> = self
                .loads
                .iter()
                .zip(&load_bus)
                .filter(|(_, &b)| b == n)
                .map(|(l, _)| l.id.clone())
                .collect();
            if bus.loads.is_empty() {
                bus.loads = attached;
            } else {
                let mut listed = bus.loads.clone();
                listed.sort();
                let mut expected = attached.clone();
                expected.sort();
                if listed != expected {
                    return Err(invalid(format!(
                        "bus {:?} lists loads {:?} but loads referencing it are {:?}",
                        bus.id, bus.loads, attached
                    )));
                }
            }
        }

        let reference = reference_buses(&self.buses, &bus_pos, &line_ends);
        self.index = Index {
            bus_pos,
            line_ends,
            unit_bus,
            vres_bus,
            load_bus,
            load_pos,
            vres_pos,
            unit_pos,
            reference,
        };
        Ok(self)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("system serializes")
    }

    pub fn bus_index(&self, id: &str) -> Option<usize> {
        self.index.bus_pos.get(id).copied()
    }

    pub fn load_index(&self, id: &str) -> Option<usize> {
        self.index.load_pos.get(id).copied()
    }

    pub fn vres_index(&self, id: &str) -> Option<usize> {
        self.index.vres_pos.get(id).copied()
    }

    pub fn unit_index(&self, id: &str) -> Option<usize> {
        self.index.unit_pos.get(id).copied()
    }

    /// `(from, to)` bus positions of line `l`.
    pub fn line_ends(&self, l: usize) -> (usize, usize) {
        self.index.line_ends[l]
    }

    pub fn unit_bus(&self, i: usize) -> usize {
        self.index.unit_bus[i]
    }

    pub fn vres_bus(&self, k: usize) -> usize {
        self.index.vres_bus[k]
    }

    pub fn load_bus(&self, d: usize) -> usize {
        self.index.load_bus[d]
    }

    /// Whether bus `n` carries the fixed zero angle of its island.
    pub fn is_reference(&self, n: usize) -> bool {
        self.index.reference[n]
    }

    pub fn num_buses(&self) -> usize {
        self.buses.len()
    }

    pub fn num_units(&self) -> usize {
        self.conventional_units.len()
    }

    pub fn num_vres(&self) -> usize {
        self.vres_units.len()
    }

    pub fn num_loads(&self) -> usize {
        self.loads.len()
    }

    pub fn max_redispatch_up_cost(&self) -> f64 {
        self.conventional_units
            .iter()
            .map(|u| u.redispatch_up_cost)
            .fold(0.0, f64::max)
    }
}

fn validate_unit(u: &ConventionalUnit) -> Result<()> {
    let id = &u.id;
    let numbers = [
        ("variable_cost", u.variable_cost),
        ("no_load_cost", u.no_load_cost),
        ("startup_cost", u.startup_cost),
        ("redispatch_up_cost", u.redispatch_up_cost),
        ("redispatch_down_cost", u.redispatch_down_cost),
        ("p_min", u.p_min),
        ("p_max", u.p_max),
        ("ramp_up", u.ramp_up),
        ("ramp_down", u.ramp_down),
    ];
    for (name, v) in numbers {
        if !v.is_finite() || v < 0.0 {
            return Err(invalid(format!("unit {id:?}: {name} must be finite and >= 0")));
        }
    }
    if u.p_min > u.p_max {
        return Err(invalid(format!(
            "unit {id:?}: unit bounds violated, p_min {} > p_max {}",
            u.p_min, u.p_max
        )));
    }
    if !(0.0..=1.0).contains(&u.initial_commitment) {
        return Err(invalid(format!("unit {id:?}: initial_commitment must lie in [0, 1]")));
    }
    let lo = u.initial_commitment * u.p_min;
    let hi = u.initial_commitment * u.p_max;
    if u.initial_output < lo - 1e-9 || u.initial_output > hi + 1e-9 {
        return Err(invalid(format!(
            "unit {id:?}: initial_output {} outside [{lo}, {hi}]",
            u.initial_output
        )));
    }
    Ok(())
}

/// Marks the lowest-id bus of every connected component.
fn reference_buses(
    buses: &[Bus],
    bus_pos: &BTreeMap<String, usize>,
    line_ends: &[(usize, usize)],
) -> Vec<bool> {
    let n = buses.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], x: usize) -> usize {
        let mut root = x;
        while parent[root] != root {
            root = parent[root];
        }
        let mut cur = x;
        while parent[cur] != root {
            let next = parent[cur];
            parent[cur] = root;
            cur = next;
        }
        root
    }
    for &(a, b) in line_ends {
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        if ra != rb {
            parent[ra] = rb;
        }
    }
    let mut reference = vec![false; n];
    let mut seen = std::collections::BTreeSet::new();
    // BTreeMap iterates ids in ascending order.
    for &pos in bus_pos.values() {
        let root = find(&mut parent, pos);
        if seen.insert(root) {
            reference[pos] = true;
        }
    }
    reference
}
