//! Variable-speed hydropower plant models: elastic waterway, four hydraulic
//! turbine models, PID governor, time-domain simulation and small-signal
//! analysis.

pub mod efficiency;
pub mod error;
pub mod governor;
pub mod params;
pub mod plant;
pub mod sim;
pub mod smallsignal;
pub mod turbines;
pub mod units;
pub mod waterway;

pub use error::{Error, Result};
pub use params::{
    load_params, parse_params, EulerHeadSign, GovernorParams, LoadedParams, PenstockMode, PlantParams, RotorLaw,
    TanhOrder, TurbineParams, WaterwayParams,
};
pub use plant::{ModelKind, Plant, PlantInputs, StateLayout, Trim};
pub use sim::{run, Event, EventInput, Scenario, SimTrace};
pub use smallsignal::{linearize, modes, sweep, LinearModel, ModalReport};

/// Version tag written into every output file.
pub const SCHEMA_VERSION: u32 = 1;
