//! Deterministic discrete-event scheduler: evidence stations with
//! human-gated starts feed preparation resources that are either human-gated
//! workstations (traditional method) or 24/7 queue servers (automated).
//! Tasks once started run to completion regardless of working hours.

use std::collections::BTreeMap;

use chrono::{Duration, NaiveDateTime};

use super::calendar::WorkCalendar;
use super::scenario::{Discipline, ResourceKind, ResourceSpec, Scenario};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaskKind {
    Imaging,
    Prep,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TimelineEntry {
    pub device: String,
    pub resource: String,
    pub kind: TaskKind,
    pub start: NaiveDateTime,
    pub end: NaiveDateTime,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Timeline {
    pub entries: Vec<TimelineEntry>,
}

impl Timeline {
    pub fn entry(&self, device: &str, resource: &str) -> Option<&TimelineEntry> {
        self.entries
            .iter()
            .find(|e| e.device == device && e.resource == resource)
    }

    pub fn global_start(&self) -> Option<NaiveDateTime> {
        self.entries.iter().map(|e| e.start).min()
    }

    pub fn global_end(&self) -> Option<NaiveDateTime> {
        self.entries.iter().map(|e| e.end).max()
    }
}

fn gated_start(
    res: &ResourceSpec,
    cal: &WorkCalendar,
    earliest: NaiveDateTime,
) -> NaiveDateTime {
    match res.kind {
        ResourceKind::AlwaysOn => earliest,
        ResourceKind::HumanGated => {
            let mut t = cal.next_permitted_start(earliest);
            if res.turnaround_minutes > 0 {
                t = cal.next_permitted_start(t + Duration::minutes(res.turnaround_minutes));
            }
            t
        }
    }
}

/// Schedule every imaging task (per station, in listed device order) and
/// every preparation task (per resource, by its discipline). A prep task is
/// ready the instant its device's image exists; nothing is lost between the
/// steps on an always-on resource, while a human-gated resource waits for
/// the next permitted start.
pub fn simulate(scenario: &Scenario) -> Timeline {
    let cal = &scenario.calendar;
    let scenario_start = scenario.calendar.anchor.and_hms_opt(0, 0, 0).unwrap();

    let mut timeline = Timeline::default();
    let mut imaging_end: BTreeMap<&str, NaiveDateTime> = BTreeMap::new();
    let mut resource_free: BTreeMap<&str, NaiveDateTime> = BTreeMap::new();

    // Imaging: each station works through its devices in listed order.
    for dev in &scenario.devices {
        let station = scenario
            .resource(&dev.station)
            .expect("validated: station resolves");
        let free = *resource_free.get(dev.station.as_str()).unwrap_or(&scenario_start);
        let start = gated_start(station, cal, free.max(scenario_start));
        let end = start + Duration::minutes(dev.imaging_minutes);
        resource_free.insert(dev.station.as_str(), end);
        imaging_end.insert(dev.name.as_str(), end);
        timeline.entries.push(TimelineEntry {
            device: dev.name.clone(),
            resource: dev.station.clone(),
            kind: TaskKind::Imaging,
            start,
            end,
        });
    }

    // Preparation: per resource, ordered by its queue discipline.
    struct PrepTask<'a> {
        device: &'a str,
        listed_idx: usize,
        ready: NaiveDateTime,
        minutes: i64,
        not_before: Option<NaiveDateTime>,
    }
    for res in &scenario.resources {
        let mut tasks: Vec<PrepTask> = Vec::new();
        for (idx, dev) in scenario.devices.iter().enumerate() {
            if let Some((_, minutes)) = dev.prep_minutes.iter().find(|(r, _)| r == &res.name) {
                tasks.push(PrepTask {
                    device: &dev.name,
                    listed_idx: idx,
                    ready: imaging_end[dev.name.as_str()],
                    minutes: *minutes,
                    not_before: dev
                        .not_before
                        .iter()
                        .find(|(r, _)| r == &res.name)
                        .map(|(_, t)| *t),
                });
            }
        }
        if tasks.is_empty() {
            continue;
        }
        if res.discipline == Discipline::FifoByReady {
            tasks.sort_by_key(|t| (t.ready, t.listed_idx));
        }
        let mut free: Option<NaiveDateTime> = None;
        for task in tasks {
            let mut earliest = task.ready;
            if let Some(f) = free {
                earliest = earliest.max(f);
            }
            if let Some(nb) = task.not_before {
                earliest = earliest.max(nb);
            }
            let start = gated_start(res, cal, earliest);
            let end = start + Duration::minutes(task.minutes);
            free = Some(end);
            timeline.entries.push(TimelineEntry {
                device: task.device.to_string(),
                resource: res.name.clone(),
                kind: TaskKind::Prep,
                start,
                end,
            });
        }
    }

    timeline
}

#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    /// Elapsed hours from the first task start to the last task end.
    pub makespan_hours: f64,
    /// Hours from the first task start to the earliest prep-task end.
    pub first_result_raw_hours: Option<f64>,
    /// When a human can first view that result: the next permitted start
    /// after the earliest prep end.
    pub first_result_available: Option<NaiveDateTime>,
}

fn hours_between(a: NaiveDateTime, b: NaiveDateTime) -> f64 {
    (b - a).num_minutes() as f64 / 60.0
}

pub fn metrics(timeline: &Timeline, cal: &WorkCalendar) -> Metrics {
    let Some(start) = timeline.global_start() else {
        return Metrics {
            makespan_hours: 0.0,
            first_result_raw_hours: None,
            first_result_available: None,
        };
    };
    let end = timeline.global_end().unwrap();
    let first_prep_end = timeline
        .entries
        .iter()
        .filter(|e| e.kind == TaskKind::Prep)
        .map(|e| e.end)
        .min();
    Metrics {
        makespan_hours: hours_between(start, end),
        first_result_raw_hours: first_prep_end.map(|t| hours_between(start, t)),
        first_result_available: first_prep_end.map(|t| cal.next_permitted_start(t)),
    }
}

/// Relative savings of an automated run over a traditional run on the same
/// device set, as percentages.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Savings {
    pub first_result_saving_pct: f64,
    pub makespan_saving_pct: f64,
}

impl Savings {
    /// Percentage at 0.1 precision.
    pub fn first_result_tenths(&self) -> f64 {
        (self.first_result_saving_pct * 10.0).round() / 10.0
    }

    pub fn makespan_tenths(&self) -> f64 {
        (self.makespan_saving_pct * 10.0).round() / 10.0
    }

    /// Integer rounding as quoted in summaries.
    pub fn first_result_rounded(&self) -> i64 {
        self.first_result_saving_pct.round() as i64
    }

    pub fn makespan_rounded(&self) -> i64 {
        self.makespan_saving_pct.round() as i64
    }
}

pub fn compare(traditional: &Metrics, automated: &Metrics) -> Savings {
    let ratio = |auto: f64, trad: f64| {
        if trad == 0.0 {
            0.0
        } else {
            (1.0 - auto / trad) * 100.0
        }
    };
    Savings {
        first_result_saving_pct: ratio(
            automated.first_result_raw_hours.unwrap_or(0.0),
            traditional.first_result_raw_hours.unwrap_or(0.0),
        ),
        makespan_saving_pct: ratio(automated.makespan_hours, traditional.makespan_hours),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;

    fn at(d: u32, h: u32, min: u32) -> NaiveDateTime {
        NaiveDate::from_ymd_opt(2014, 7, d)
            .unwrap()
            .and_hms_opt(h, min, 0)
            .unwrap()
    }

    const TWO_DEVICE: &str = "\
[calendar]
anchor = 2014-07-01

[resource]
name = es1
kind = human_gated

[resource]
name = srv
kind = always_on

[device]
name = A
station = es1
imaging_minutes = 1000
prep.srv = 200

[device]
name = B
station = es1
imaging_minutes = 120
prep.srv = 60
";

    #[test]
    fn always_on_starts_at_ready_human_gated_waits() {
        let s = Scenario::from_str(TWO_DEVICE).unwrap();
        let t = simulate(&s);
        // A images July 1 8:00 -> July 2 0:40 (overnight, unattended)
        let a_img = t.entry("A", "es1").unwrap();
        assert_eq!(a_img.start, at(1, 8, 0));
        assert_eq!(a_img.end, at(2, 0, 40));
        // prep on the 24/7 server starts the instant the image exists
        let a_prep = t.entry("A", "srv").unwrap();
        assert_eq!(a_prep.start, at(2, 0, 40));
        assert_eq!(a_prep.end, at(2, 4, 0));
        // B's imaging is human-gated to 8:00 the same morning
        let b_img = t.entry("B", "es1").unwrap();
        assert_eq!(b_img.start, at(2, 8, 0));
    }

    #[test]
    fn empty_scenario_yields_empty_timeline() {
        let s = Scenario::from_str("[calendar]\nanchor = 2014-07-01\n").unwrap();
        let t = simulate(&s);
        assert!(t.entries.is_empty());
        let m = metrics(&t, &s.calendar);
        assert_eq!(m.makespan_hours, 0.0);
        assert_eq!(m.first_result_raw_hours, None);
    }

    #[test]
    fn per_resource_entries_never_overlap() {
        let s = Scenario::from_str(TWO_DEVICE).unwrap();
        let t = simulate(&s);
        for a in &t.entries {
            for b in &t.entries {
                if std::ptr::eq(a, b) || a.resource != b.resource {
                    continue;
                }
                assert!(a.end <= b.start || b.end <= a.start, "{a:?} overlaps {b:?}");
            }
        }
    }

    #[test]
    fn duration_fidelity() {
        let s = Scenario::from_str(TWO_DEVICE).unwrap();
        let t = simulate(&s);
        let a_prep = t.entry("A", "srv").unwrap();
        assert_eq!((a_prep.end - a_prep.start).num_minutes(), 200);
    }

    #[test]
    fn simulate_is_deterministic() {
        let s = Scenario::from_str(TWO_DEVICE).unwrap();
        assert_eq!(simulate(&s), simulate(&s));
    }

    #[test]
    fn compare_identical_metrics_is_zero() {
        let m = Metrics {
            makespan_hours: 10.0,
            first_result_raw_hours: Some(5.0),
            first_result_available: None,
        };
        let s = compare(&m, &m);
        assert_eq!(s.first_result_rounded(), 0);
        assert_eq!(s.makespan_rounded(), 0);
    }
}
