//! Discrete-event throughput simulator: traditional human-driven scheduling
//! versus automated 24/7 queue servers, over a working-hours calendar.

pub mod calendar;
pub mod engine;
pub mod scenario;
pub mod table;

pub use calendar::WorkCalendar;
pub use engine::{compare, metrics, simulate, Metrics, Savings, TaskKind, Timeline, TimelineEntry};
pub use scenario::{DeviceTask, Discipline, ResourceKind, ResourceSpec, Scenario, ScenarioError};
pub use table::{format_cell, format_instant, render_table};
