//! Benchmark instances shared by the criterion targets.

use twosettle::{fixtures, sample_scenarios, BaseProfile, NoiseModel, PowerSystem, ScenarioSet};

pub struct Instance {
    pub name: String,
    pub system: PowerSystem,
    pub scenarios: ScenarioSet,
}

impl Instance {
    fn new(name: impl Into<String>, (system, scenarios): (PowerSystem, ScenarioSet)) -> Self {
        Instance {
            name: name.into(),
            system,
            scenarios,
        }
    }
}

/// The five-bus system with `n` scenarios sampled around its forecast.
pub fn five_bus_sampled(n: usize) -> Instance {
    let (system, set) = fixtures::five_bus();
    let scenarios = sample_scenarios(&system, &BaseProfile::from_expectation(&set), &NoiseModel::default(), n, 1)
        .expect("sampling the five-bus fixture");
    Instance::new(format!("five_bus_n{n}"), (system, scenarios))
}

/// Small to mid-sized instances, cheapest first.
pub fn instances() -> Vec<Instance> {
    vec![
        Instance::new("two_bus", fixtures::two_bus(30.0)),
        Instance::new("two_bus_day", fixtures::two_bus_day()),
        Instance::new("random_7", fixtures::random_system(7)),
        Instance::new("five_bus", fixtures::five_bus()),
        five_bus_sampled(20),
    ]
}
