//! Localization of moving ground targets from RSSI ranging on board a small
//! UAV fleet, and planning of the follow-up tours that refine those fixes.
//!
//! The pipeline has two phases. A serpentine scan ([`scan`]) sweeps the area
//! while every in-range person is ranged with log-normal noise ([`ranging`]);
//! each reception window is turned into a constant-velocity track by
//! single-anchor maximum likelihood ([`mle`]) with an annulus-intersection
//! error bound ([`bound`]). The fleet then flies min-makespan tours
//! ([`planner`]) that stop at the edge of each target's accuracy circle,
//! re-ranges the targets and refits them ([`sim`]).

pub mod bound;
pub mod energy;
pub mod error;
pub mod mle;
pub mod model;
pub mod planner;
pub mod ranging;
pub mod scan;
pub mod seed;
pub mod sim;
pub mod validate;

pub use bound::{Annulus, BoundResult, ErrorModel, Resolution};
pub use energy::PowerParams;
pub use error::{Error, Result};
pub use mle::{FitOptions, Hypothesis, Line, RangeWindow, TrackEstimate};
pub use model::{Area, BoundaryMode, PersonState, RawScenario, Scenario, UavState, Vec2, Vec3};
pub use planner::{Plan, PlannerKind, SwarmParams};
pub use ranging::RangingParams;
pub use scan::{ScanGrid, ScanPath};
pub use sim::{MetricsRow, MissionReport};
