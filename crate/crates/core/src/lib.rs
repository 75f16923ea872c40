//! Two-settlement electricity market engine.
//!
//! Clears a day-ahead market and per-scenario real-time markets as linear
//! programs, chooses day-ahead VRES offers through a single-level relaxation
//! of the bilevel bidding problem, and compares the result with mean-forecast
//! bidding, joint stochastic dispatch and a brute-force bid search.
//!
//! ```no_run
//! use twosettle::{fixtures, run_framework, Framework, RunConfig};
//!
//! let (system, scenarios) = fixtures::two_bus(30.0);
//! let run = run_framework(&system, &scenarios, Framework::Bid, &RunConfig::default()).unwrap();
//! println!("{:.1}", run.report.total);
//! ```

/// Crate version, recorded in study manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub mod benchmarks;
pub mod bid;
pub mod config;
pub mod dam;
pub mod error;
pub mod fixtures;
pub mod lp;
pub mod report;
pub mod rtm;
pub mod scenario;
pub mod system;

pub use benchmarks::{
    out_of_sample, reprice, rolling_horizon, run_bid, run_framework, run_myd, run_oracle, run_std, CostReport,
    Framework, FrameworkRun, OutOfSample, RollingRun,
};
pub use bid::{evaluate_bids, solve_bid, BidResult, Evaluation, McCormickBounds};
pub use config::RunConfig;
pub use dam::{solve_dam, DamSolution};
pub use error::{Error, Result};
pub use report::{price_tables, settle, uc_quality, PointRecord, PriceTables, SettlementReport, UcQualityReport};
pub use rtm::{solve_rtm, solve_rtm_all, RtmScenarioSolution, RtmSolution};
pub use scenario::{load_scenarios, sample_scenarios, BaseProfile, BidVector, NoiseModel, Scenario, ScenarioSet};
pub use system::{load_system, PowerSystem, StartupClass};
