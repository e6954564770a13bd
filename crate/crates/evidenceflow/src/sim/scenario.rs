//! Scenario files: sectioned `key=value` text describing devices, resources
//! and the calendar. Reference scenarios `table1.scn` and `table2.scn` ship
//! in the repository's `scenarios/` directory.
//!
//! ```text
//! [calendar]
//! anchor = 2014-07-01
//!
//! [resource]
//! name = encase
//! kind = human_gated
//! discipline = listed_order
//!
//! [device]
//! name = HDD1
//! station = es1
//! imaging_minutes = 1000
//! prep.encase = 2000
//! # optional earliest-start pin for one prep task:
//! # not_before.encase = 2014-07-17T08:00
//! ```

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use chrono::{NaiveDate, NaiveDateTime};
use thiserror::Error;

use super::calendar::WorkCalendar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResourceKind {
    /// Starts require a human, so they are gated to working hours.
    HumanGated,
    /// Queue servers run 24/7; starts happen the instant work is ready.
    AlwaysOn,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Discipline {
    /// Serve tasks in the order they become ready (FIFO).
    FifoByReady,
    /// Serve tasks in the order devices are listed in the scenario.
    ListedOrder,
}

#[derive(Debug, Clone)]
pub struct ResourceSpec {
    pub name: String,
    pub kind: ResourceKind,
    pub discipline: Discipline,
    /// Human delay before each start, minutes.
    pub turnaround_minutes: i64,
}

#[derive(Debug, Clone)]
pub struct DeviceTask {
    pub name: String,
    pub station: String,
    pub imaging_minutes: i64,
    /// Preparation durations keyed by resource name, in listed order.
    pub prep_minutes: Vec<(String, i64)>,
    /// Optional release times pinning anomalous observed starts.
    pub not_before: Vec<(String, NaiveDateTime)>,
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub calendar: WorkCalendar,
    pub resources: Vec<ResourceSpec>,
    pub devices: Vec<DeviceTask>,
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read scenario {0}: {1}")]
    Io(String, #[source] std::io::Error),
    #[error("scenario line {0}: {1}")]
    Line(usize, String),
    #[error("scenario validation: {0}")]
    Invalid(String),
}

impl Scenario {
    pub fn from_file(path: &Path) -> Result<Self, ScenarioError> {
        let text = fs::read_to_string(path)
            .map_err(|e| ScenarioError::Io(path.display().to_string(), e))?;
        Self::from_str(&text)
    }

    pub fn from_str(text: &str) -> Result<Self, ScenarioError> {
        let mut anchor: Option<NaiveDate> = None;
        let mut resources: Vec<ResourceSpec> = Vec::new();
        let mut devices: Vec<DeviceTask> = Vec::new();

        #[derive(PartialEq)]
        enum Section {
            None,
            Calendar,
            Resource,
            Device,
        }
        let mut section = Section::None;

        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            match line {
                "[calendar]" => {
                    section = Section::Calendar;
                    continue;
                }
                "[resource]" => {
                    section = Section::Resource;
                    resources.push(ResourceSpec {
                        name: String::new(),
                        kind: ResourceKind::HumanGated,
                        discipline: Discipline::FifoByReady,
                        turnaround_minutes: 0,
                    });
                    continue;
                }
                "[device]" => {
                    section = Section::Device;
                    devices.push(DeviceTask {
                        name: String::new(),
                        station: String::new(),
                        imaging_minutes: 0,
                        prep_minutes: Vec::new(),
                        not_before: Vec::new(),
                    });
                    continue;
                }
                _ if line.starts_with('[') => {
                    return Err(ScenarioError::Line(line_no, format!("unknown section {line}")));
                }
                _ => {}
            }

            let (key, value) = line
                .split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| ScenarioError::Line(line_no, "not a key=value pair".into()))?;

            let bad = |msg: String| ScenarioError::Line(line_no, msg);
            match section {
                Section::None => return Err(bad("key outside any section".into())),
                Section::Calendar => match key {
                    "anchor" => {
                        anchor = Some(
                            NaiveDate::parse_from_str(value, "%Y-%m-%d")
                                .map_err(|_| bad(format!("bad anchor date {value:?}")))?,
                        )
                    }
                    _ => return Err(bad(format!("unknown calendar key {key:?}"))),
                },
                Section::Resource => {
                    let res = resources.last_mut().unwrap();
                    match key {
                        "name" => res.name = value.to_string(),
                        "kind" => {
                            res.kind = match value {
                                "human_gated" => ResourceKind::HumanGated,
                                "always_on" => ResourceKind::AlwaysOn,
                                _ => return Err(bad(format!("unknown kind {value:?}"))),
                            }
                        }
                        "discipline" => {
                            res.discipline = match value {
                                "fifo_by_ready" => Discipline::FifoByReady,
                                "listed_order" => Discipline::ListedOrder,
                                _ => return Err(bad(format!("unknown discipline {value:?}"))),
                            }
                        }
                        "turnaround_minutes" => {
                            res.turnaround_minutes = value
                                .parse()
                                .map_err(|_| bad(format!("bad turnaround {value:?}")))?
                        }
                        _ => return Err(bad(format!("unknown resource key {key:?}"))),
                    }
                }
                Section::Device => {
                    let dev = devices.last_mut().unwrap();
                    match key {
                        "name" => dev.name = value.to_string(),
                        "station" => dev.station = value.to_string(),
                        "imaging_minutes" => {
                            dev.imaging_minutes = value
                                .parse()
                                .map_err(|_| bad(format!("bad imaging_minutes {value:?}")))?
                        }
                        _ => {
                            if let Some(res) = key.strip_prefix("prep.") {
                                let minutes: i64 = value
                                    .parse()
                                    .map_err(|_| bad(format!("bad prep minutes {value:?}")))?;
                                dev.prep_minutes.push((res.to_string(), minutes));
                            } else if let Some(res) = key.strip_prefix("not_before.") {
                                let t =
                                    NaiveDateTime::parse_from_str(value, "%Y-%m-%dT%H:%M")
                                        .map_err(|_| {
                                            bad(format!("bad not_before timestamp {value:?}"))
                                        })?;
                                dev.not_before.push((res.to_string(), t));
                            } else {
                                return Err(bad(format!("unknown device key {key:?}")));
                            }
                        }
                    }
                }
            }
        }

        let anchor = anchor
            .ok_or_else(|| ScenarioError::Invalid("missing [calendar] anchor".into()))?;
        let scenario = Scenario {
            calendar: WorkCalendar::new(anchor),
            resources,
            devices,
        };
        scenario.validate()?;
        Ok(scenario)
    }

    fn validate(&self) -> Result<(), ScenarioError> {
        let inv = |msg: String| ScenarioError::Invalid(msg);
        let mut names = BTreeSet::new();
        for res in &self.resources {
            if res.name.is_empty() {
                return Err(inv("resource without a name".into()));
            }
            if !names.insert(res.name.as_str()) {
                return Err(inv(format!("duplicate resource {:?}", res.name)));
            }
            if res.kind == ResourceKind::AlwaysOn && res.turnaround_minutes != 0 {
                return Err(inv(format!(
                    "resource {:?}: always_on implies turnaround 0",
                    res.name
                )));
            }
        }
        let mut device_names = BTreeSet::new();
        for dev in &self.devices {
            if dev.name.is_empty() {
                return Err(inv("device without a name".into()));
            }
            if !device_names.insert(dev.name.as_str()) {
                return Err(inv(format!("duplicate device {:?}", dev.name)));
            }
            if !names.contains(dev.station.as_str()) {
                return Err(inv(format!(
                    "device {:?}: station {:?} is not a declared resource",
                    dev.name, dev.station
                )));
            }
            if dev.imaging_minutes <= 0 {
                return Err(inv(format!("device {:?}: imaging duration must be > 0", dev.name)));
            }
            let mut prep_targets = BTreeSet::new();
            for (res, minutes) in &dev.prep_minutes {
                if !names.contains(res.as_str()) {
                    return Err(inv(format!(
                        "device {:?}: prep tool {res:?} is not a declared resource",
                        dev.name
                    )));
                }
                if !prep_targets.insert(res.as_str()) {
                    return Err(inv(format!(
                        "device {:?}: prep tool {res:?} listed twice",
                        dev.name
                    )));
                }
                if *minutes <= 0 {
                    return Err(inv(format!("device {:?}: prep duration must be > 0", dev.name)));
                }
            }
            for (res, _) in &dev.not_before {
                if !prep_targets.contains(res.as_str()) {
                    return Err(inv(format!(
                        "device {:?}: not_before for {res:?} without a matching prep",
                        dev.name
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn resource(&self, name: &str) -> Option<&ResourceSpec> {
        self.resources.iter().find(|r| r.name == name)
    }
}
