//! Study runner: expands a [`StudySpec`] into sweep points, runs the requested
//! frameworks at each point and writes the report tables.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context};
use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use twosettle::report::{self, FrameworkError, PointRecord, PointSummary};
use twosettle::system::StartupClass;
use twosettle::{
    load_scenarios, load_system, rolling_horizon, run_framework, sample_scenarios, BaseProfile, Framework, FrameworkRun, NoiseModel, PowerSystem,
    RunConfig, ScenarioSet,
};

/// Epsilon used for the commitment-quality table.
pub const UC_EPSILON: f64 = 1e-6;

/// VRES penetration setting of a sweep point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Penetration {
    /// Inputs as given.
    AsIs,
    /// Expected VRES energy as a share of expected demand energy; `"40R"` is 0.4.
    Share(f64),
}

impl FromStr for Penetration {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> anyhow::Result<Self> {
        if s.eq_ignore_ascii_case("base") {
            return Ok(Penetration::AsIs);
        }
        let pct = s
            .strip_suffix('R')
            .and_then(|v| v.parse::<f64>().ok())
            .filter(|v| v.is_finite() && *v >= 0.0)
            .with_context(|| format!("VRES level {s:?} is neither \"base\" nor like \"40R\""))?;
        Ok(Penetration::Share(pct / 100.0))
    }
}

impl fmt::Display for Penetration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Penetration::AsIs => f.write_str("base"),
            Penetration::Share(s) => write!(f, "{}R", s * 100.0),
        }
    }
}

/// Multiplier on every line rating; `"2L"` doubles them.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineScale(pub f64);

impl FromStr for LineScale {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> anyhow::Result<Self> {
        s.strip_suffix('L')
            .and_then(|v| v.parse::<f64>().ok())
            .filter(|v| v.is_finite() && *v >= 0.0)
            .map(LineScale)
            .with_context(|| format!("line scale {s:?} is not like \"2L\""))
    }
}

impl fmt::Display for LineScale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}L", self.0)
    }
}

/// Start-up flexibility override.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Flexibility {
    /// Every unit slow.
    Low,
    /// Unit classes as given.
    Medium,
    /// Every unit fast.
    High,
}

impl FromStr for Flexibility {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> anyhow::Result<Self> {
        match s {
            "lFlx" => Ok(Flexibility::Low),
            "mFlx" => Ok(Flexibility::Medium),
            "hFlx" => Ok(Flexibility::High),
            _ => bail!("flexibility {s:?} is not one of lFlx, mFlx, hFlx"),
        }
    }
}

impl fmt::Display for Flexibility {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Flexibility::Low => "lFlx",
            Flexibility::Medium => "mFlx",
            Flexibility::High => "hFlx",
        })
    }
}

macro_rules! string_serde {
    ($($t:ty),*) => {$(
        impl Serialize for $t {
            fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                s.collect_str(self)
            }
        }
        impl<'de> Deserialize<'de> for $t {
            fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
                String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
            }
        }
    )*};
}
string_serde!(Penetration, LineScale, Flexibility);

/// Lists swept over; every combination is one sweep point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Sweeps {
    pub gamma: Vec<f64>,
    pub xi: Vec<f64>,
    /// Sampled scenario counts; only used with a sampler.
    pub scenario_counts: Vec<usize>,
    pub vres: Vec<Penetration>,
    pub lines: Vec<LineScale>,
    pub flexibility: Vec<Flexibility>,
}

impl Default for Sweeps {
    fn default() -> Self {
        let c = RunConfig::default();
        Sweeps {
            gamma: vec![c.gamma],
            xi: vec![c.xi],
            scenario_counts: vec![10],
            vres: vec![Penetration::AsIs],
            lines: vec![LineScale(1.0)],
            flexibility: vec![Flexibility::Medium],
        }
    }
}

/// Draw scenarios instead of using the scenario file's set directly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerSpec {
    pub vres_rel_std: f64,
    pub demand_rel_std: f64,
    /// Mean trace to perturb; defaults to the expectation of the scenario file.
    pub base: Option<BaseProfile>,
}

impl Default for SamplerSpec {
    fn default() -> Self {
        let n = NoiseModel::default();
        SamplerSpec {
            vres_rel_std: n.vres_rel_std,
            demand_rel_std: n.demand_rel_std,
            base: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudySpec {
    pub system: PathBuf,
    /// May be left empty when the sampler carries its own base profile.
    pub scenarios: PathBuf,
    pub sampler: Option<SamplerSpec>,
    pub frameworks: Vec<Framework>,
    pub sweeps: Sweeps,
    /// Base settings; swept fields are overwritten per point.
    pub config: RunConfig,
    pub output_dir: PathBuf,
    pub seed: u64,
    /// Run sweep points concurrently.
    pub parallel: bool,
}

impl Default for StudySpec {
    fn default() -> Self {
        StudySpec {
            system: PathBuf::new(),
            scenarios: PathBuf::new(),
            sampler: None,
            frameworks: vec![Framework::Myd, Framework::Bid, Framework::Std],
            sweeps: Sweeps::default(),
            config: RunConfig::default(),
            output_dir: PathBuf::from("out"),
            seed: 0,
            parallel: false,
        }
    }
}

impl StudySpec {
    /// Reads a spec; relative input and output paths resolve against the
    /// spec file's directory.
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut spec: StudySpec =
            serde_json::from_str(&text).with_context(|| format!("parsing study spec {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut spec.system, &mut spec.scenarios, &mut spec.output_dir] {
            if !p.as_os_str().is_empty() && p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(spec)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        if self.frameworks.is_empty() {
            bail!("at least one framework is required");
        }
        if self.system.as_os_str().is_empty() {
            bail!("no system file given");
        }
        let has_base = self.sampler.as_ref().is_some_and(|s| s.base.is_some());
        if self.scenarios.as_os_str().is_empty() && !has_base {
            bail!("no scenario file and no sampler base profile given");
        }
        let s = &self.sweeps;
        let lists = [
            ("gamma", s.gamma.len()),
            ("xi", s.xi.len()),
            ("vres", s.vres.len()),
            ("lines", s.lines.len()),
            ("flexibility", s.flexibility.len()),
        ];
        for (name, len) in lists {
            if len == 0 {
                bail!("sweep list {name} is empty");
            }
        }
        if self.sampler.is_some() && (s.scenario_counts.is_empty() || s.scenario_counts.contains(&0)) {
            bail!("sampling needs non-empty, positive scenario_counts");
        }
        if let Some(sampler) = &self.sampler {
            if !(sampler.vres_rel_std >= 0.0) || !(sampler.demand_rel_std >= 0.0) {
                bail!("sampler standard deviations must be >= 0");
            }
        }
        Ok(())
    }
}

/// One combination of sweep values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub label: String,
    pub gamma: f64,
    pub xi: f64,
    pub scenario_count: Option<usize>,
    pub vres: Penetration,
    pub lines: LineScale,
    pub flexibility: Flexibility,
}

pub fn sweep_points(spec: &StudySpec) -> Vec<SweepPoint> {
    let s = &spec.sweeps;
    let counts: Vec<Option<usize>> = if spec.sampler.is_some() {
        s.scenario_counts.iter().map(|&n| Some(n)).collect()
    } else {
        vec![None]
    };
    let mut out = Vec::new();
    for &vres in &s.vres {
        for &lines in &s.lines {
            for &flexibility in &s.flexibility {
                for &count in &counts {
                    for &gamma in &s.gamma {
                        for &xi in &s.xi {
                            let mut label = format!("{vres}-{lines}-{flexibility}");
                            if let Some(n) = count {
                                label += &format!("-n{n}");
                            }
                            label += &format!("-g{gamma}-x{xi}");
                            out.push(SweepPoint {
                                label,
                                gamma,
                                xi,
                                scenario_count: count,
                                vres,
                                lines,
                                flexibility,
                            });
                        }
                    }
                }
            }
        }
    }
    out
}

/// Applies line scaling and the flexibility override.
pub fn adjust_system(system: &PowerSystem, lines: LineScale, flexibility: Flexibility) -> twosettle::Result<PowerSystem> {
    let mut sys = system.clone();
    for line in &mut sys.lines {
        line.capacity *= lines.0;
    }
    let class = match flexibility {
        Flexibility::Low => Some(StartupClass::Slow),
        Flexibility::Medium => None,
        Flexibility::High => Some(StartupClass::Fast),
    };
    if let Some(class) = class {
        for u in &mut sys.conventional_units {
            u.startup_class = class;
        }
    }
    sys.validate()
}

/// Scales VRES capacities and realizations so expected VRES energy is the
/// requested share of expected demand energy.
pub fn apply_penetration(
    system: &PowerSystem,
    scenarios: &ScenarioSet,
    level: Penetration,
) -> anyhow::Result<(PowerSystem, ScenarioSet)> {
    let Penetration::Share(share) = level else {
        return Ok((system.clone(), scenarios.clone()));
    };
    let vres = scenarios.expected_vres_energy();
    if vres <= 0.0 {
        bail!("cannot scale VRES to {level}: expected VRES energy is zero");
    }
    let factor = share * scenarios.expected_demand_energy() / vres;
    let mut sys = system.clone();
    for k in &mut sys.vres_units {
        k.capacity *= factor;
    }
    let sys = sys.validate()?;
    let set = scenarios.scale_vres(factor);
    let set = ScenarioSet::new(
        &sys,
        set.periods().to_vec(),
        set.scenarios().to_vec(),
        Some(set.da_demand().to_vec()),
    )?;
    Ok((sys, set))
}

/// Status of one sweep point in the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointStatus {
    pub label: String,
    pub ok: bool,
    pub errors: Vec<FrameworkError>,
    /// Set when inputs for the point could not be prepared.
    pub setup_error: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub spec: StudySpec,
    pub seed: u64,
    pub version: String,
    pub solver: String,
    pub points: Vec<PointStatus>,
}

#[derive(Debug, Clone)]
pub struct StudyOutcome {
    pub records: Vec<PointRecord>,
    pub manifest: Manifest,
    pub summaries: Vec<PointSummary>,
}

impl StudyOutcome {
    pub fn failed_points(&self) -> usize {
        self.manifest.points.iter().filter(|p| !p.ok).count()
    }
}

struct PointResult {
    status: PointStatus,
    summary: PointSummary,
    records: Vec<PointRecord>,
}

fn run_point(
    spec: &StudySpec,
    system: &PowerSystem,
    scenarios: Option<&ScenarioSet>,
    base: Option<&BaseProfile>,
    point: &SweepPoint,
) -> PointResult {
    let fail = |msg: String| {
        warn!("{}: {msg}", point.label);
        PointResult {
            status: PointStatus {
                label: point.label.clone(),
                ok: false,
                errors: Vec::new(),
                setup_error: Some(msg),
            },
            summary: PointSummary {
                label: point.label.clone(),
                reports: Vec::new(),
                errors: Vec::new(),
            },
            records: Vec::new(),
        }
    };
    let prepared = (|| -> anyhow::Result<(PowerSystem, ScenarioSet, RunConfig)> {
        let sys = adjust_system(system, point.lines, point.flexibility)?;
        let set = match (point.scenario_count, &spec.sampler, base, scenarios) {
            (Some(n), Some(sampler), Some(base), _) => {
                let noise = NoiseModel {
                    vres_rel_std: sampler.vres_rel_std,
                    demand_rel_std: sampler.demand_rel_std,
                };
                sample_scenarios(&sys, base, &noise, n, spec.seed.wrapping_add(n as u64))?
            }
            (_, _, _, Some(set)) => set.clone(),
            _ => bail!("no scenarios to run on"),
        };
        let (sys, set) = apply_penetration(&sys, &set, point.vres)?;
        let config = RunConfig {
            gamma: point.gamma,
            xi: point.xi,
            seed: spec.seed,
            ..spec.config.clone()
        };
        config.validate(&sys)?;
        Ok((sys, set, config))
    })();
    let (sys, set, config) = match prepared {
        Ok(v) => v,
        Err(e) => return fail(format!("{e:#}")),
    };

    let t_len = set.num_periods();
    let window = config.horizon_window;
    if window < t_len && t_len % window != 0 {
        return fail(format!("horizon_window {window} does not divide the {t_len}-period horizon"));
    }
    let windows = if window < t_len { t_len / window } else { 1 };

    // runs[w] holds every framework's run on window w.
    let mut runs: Vec<Vec<FrameworkRun>> = vec![Vec::new(); windows];
    let mut handoffs = Vec::new();
    let mut reports = Vec::new();
    let mut errors = Vec::new();
    for &fw in &spec.frameworks {
        info!("{}: running {fw}", point.label);
        let outcome = if windows > 1 {
            rolling_horizon(&sys, &set, fw, window, &config).map(|r| {
                if handoffs.is_empty() {
                    handoffs = r.handoffs;
                }
                (r.report, r.windows)
            })
        } else {
            run_framework(&sys, &set, fw, &config).map(|r| (r.report.clone(), vec![r]))
        };
        match outcome {
            Ok((report, parts)) => {
                reports.push(report);
                for (slot, run) in runs.iter_mut().zip(parts) {
                    slot.push(run);
                }
            }
            Err(e) => {
                warn!("{}: {fw} failed: {e}", point.label);
                errors.push(FrameworkError {
                    framework: fw,
                    message: e.to_string(),
                });
            }
        }
    }
    let ok = errors.is_empty();
    let summary = PointSummary {
        label: point.label.clone(),
        reports,
        errors: errors.clone(),
    };
    // A failed point is aborted: nothing of it reaches the tables.
    let records = if !ok {
        Vec::new()
    } else if windows == 1 {
        vec![PointRecord {
            label: point.label.clone(),
            system: sys,
            scenarios: set,
            runs: runs.pop().unwrap_or_default(),
        }]
    } else {
        runs.into_iter()
            .enumerate()
            .map(|(w, runs)| {
                // Handoffs differ by framework; the first framework's states
                // stand in for the window's starting point.
                let mut s = sys.clone();
                if let Some(h) = handoffs.get(w) {
                    for (i, u) in s.conventional_units.iter_mut().enumerate() {
                        u.initial_commitment = h.commitment[i];
                        u.initial_output = h.output[i];
                    }
                }
                PointRecord {
                    label: format!("{}-w{}", point.label, w + 1),
                    system: s,
                    scenarios: set.window(w * window..(w + 1) * window),
                    runs,
                }
            })
            .collect()
    };
    PointResult {
        status: PointStatus {
            label: point.label.clone(),
            ok,
            errors,
            setup_error: None,
        },
        summary,
        records,
    }
}

/// Loads inputs and runs every sweep point. Input and spec problems are
/// errors; failures inside a sweep point are recorded and the sweep goes on.
pub fn run_study(spec: &StudySpec) -> anyhow::Result<StudyOutcome> {
    spec.validate()?;
    let system = load_system(&spec.system)?;
    let scenarios = if spec.scenarios.as_os_str().is_empty() {
        None
    } else {
        Some(load_scenarios(&spec.scenarios, &system)?)
    };
    let base = match &spec.sampler {
        Some(SamplerSpec { base: Some(b), .. }) => Some(b.clone()),
        Some(_) => scenarios.as_ref().map(BaseProfile::from_expectation),
        None => None,
    };
    let points = sweep_points(spec);
    let run = |p: &SweepPoint| run_point(spec, &system, scenarios.as_ref(), base.as_ref(), p);
    let results: Vec<PointResult> = if spec.parallel {
        points.par_iter().map(run).collect()
    } else {
        points.iter().map(run).collect()
    };
    let mut records = Vec::new();
    let mut summaries = Vec::new();
    let mut statuses = Vec::new();
    for r in results {
        statuses.push(r.status);
        summaries.push(r.summary);
        records.extend(r.records);
    }
    Ok(StudyOutcome {
        records,
        summaries,
        manifest: Manifest {
            spec: spec.clone(),
            seed: spec.seed,
            version: format!("twosettle-cli {} / twosettle-core {}", env!("CARGO_PKG_VERSION"), twosettle::VERSION),
            solver: "HiGHS (dual simplex)".into(),
            points: statuses,
        },
    })
}

/// Writes every table, the summary and the manifest into `dir`.
pub fn write_outputs(outcome: &StudyOutcome, dir: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let r = &outcome.records;
    let files = [
        ("costs.csv", report::costs_csv(r)?),
        ("prices_dam.csv", report::prices_dam_csv(r)?),
        ("prices_rt.csv", report::prices_rt_csv(r)?),
        ("revenues.csv", report::revenues_csv(r)?),
        ("uc_quality.csv", report::uc_quality_csv(r, UC_EPSILON)?),
        ("run_summary.json", serde_json::to_string_pretty(&outcome.summaries)? + "\n"),
        ("manifest.json", serde_json::to_string_pretty(&outcome.manifest)? + "\n"),
    ];
    for (name, body) in files {
        let path = dir.join(name);
        fs::write(&path, body).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels_parse_and_print() {
        assert_eq!("40R".parse::<Penetration>().unwrap(), Penetration::Share(0.4));
        assert_eq!("base".parse::<Penetration>().unwrap(), Penetration::AsIs);
        assert!("40".parse::<Penetration>().is_err());
        assert_eq!("2L".parse::<LineScale>().unwrap(), LineScale(2.0));
        assert!("-1L".parse::<LineScale>().is_err());
        assert_eq!("hFlx".parse::<Flexibility>().unwrap(), Flexibility::High);
        assert!("xFlx".parse::<Flexibility>().is_err());
        assert_eq!(Penetration::Share(0.4).to_string(), "40R");
        assert_eq!(LineScale(2.0).to_string(), "2L");
    }

    #[test]
    fn spec_json_uses_the_labels() {
        let spec: StudySpec = serde_json::from_str(
            r#"{"system": "s.json", "scenarios": "c.csv", "frameworks": ["myd", "std"],
                "sweeps": {"vres": ["40R"], "lines": ["2L"], "flexibility": ["lFlx", "hFlx"], "gamma": [0.2, 1.4]}}"#,
        )
        .unwrap();
        assert_eq!(spec.frameworks, vec![Framework::Myd, Framework::Std]);
        spec.validate().unwrap();
        let points = sweep_points(&spec);
        assert_eq!(points.len(), 4);
        assert_eq!(points[0].label, "40R-2L-lFlx-g0.2-x1");
        assert!(serde_json::from_str::<StudySpec>(r#"{"bogus": 1}"#).is_err());
    }

    #[test]
    fn empty_lists_are_rejected() {
        let mut spec = StudySpec {
            system: "s.json".into(),
            scenarios: "c.csv".into(),
            ..StudySpec::default()
        };
        spec.validate().unwrap();
        spec.frameworks.clear();
        assert!(spec.validate().is_err());
        spec.frameworks.push(Framework::Myd);
        spec.sweeps.xi.clear();
        assert!(spec.validate().is_err());
    }

    #[test]
    fn flexibility_override_and_line_scaling() {
        let (sys, _) = twosettle::fixtures::five_bus();
        let low = adjust_system(&sys, LineScale(2.0), Flexibility::Low).unwrap();
        assert!(low.conventional_units.iter().all(|u| u.startup_class == StartupClass::Slow));
        assert_eq!(low.lines[0].capacity, 2.0 * sys.lines[0].capacity);
        let high = adjust_system(&sys, LineScale(1.0), Flexibility::High).unwrap();
        assert!(high.conventional_units.iter().all(|u| u.startup_class == StartupClass::Fast));
        assert_eq!(adjust_system(&sys, LineScale(1.0), Flexibility::Medium).unwrap(), sys);
    }

    #[test]
    fn penetration_hits_the_target_share() {
        let (sys, set) = twosettle::fixtures::five_bus();
        let (s2, set2) = apply_penetration(&sys, &set, Penetration::Share(0.4)).unwrap();
        let share = set2.expected_vres_energy() / set2.expected_demand_energy();
        assert!((share - 0.4).abs() < 1e-9);
        let factor = s2.vres_units[0].capacity / sys.vres_units[0].capacity;
        assert!((s2.vres_units[1].capacity / sys.vres_units[1].capacity - factor).abs() < 1e-12);
    }
}
