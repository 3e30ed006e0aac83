//! Optimal battery management for a photovoltaic self-consumption group.
//!
//! Price, demand and pv production are seasonal exponential Ornstein-Uhlenbeck
//! processes; the battery is dispatched to minimise purchase cost net of
//! sales and of the incentive on virtually self-consumed energy.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod battery;
pub mod cost;
pub mod error;
pub mod hjb;
pub mod model;
pub mod policy;
pub mod scalar;
pub mod stochastic;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type ModelConfig = model::ModelConfig<f64>;
pub type SeasonalSpec = model::SeasonalSpec<f64>;
pub type PvSeasonalSpec = model::PvSeasonalSpec<f64>;
pub type OuParams = model::OuParams<f64>;
pub type BatterySpec = model::BatterySpec<f64>;
pub type ControlAction = battery::ControlAction<f64>;
pub type TimeGrid = stochastic::TimeGrid<f64>;
pub type SamplePathSet = stochastic::SamplePathSet<f64>;
pub type SeriesSample = stochastic::SeriesSample<f64>;
pub type SolverGrid = hjb::SolverGrid<f64>;
pub type ValueField = hjb::ValueField<f64>;
pub type PolicyField = hjb::PolicyField<f64>;
pub type PolicyDecision = policy::PolicyDecision<f64>;
pub type CostRate = cost::CostRate<f64>;

pub type ModelConfigF32 = model::ModelConfig<f32>;
pub type ControlActionF32 = battery::ControlAction<f32>;
pub type SolverGridF32 = hjb::SolverGrid<f32>;
pub type ValueFieldF32 = hjb::ValueField<f32>;
