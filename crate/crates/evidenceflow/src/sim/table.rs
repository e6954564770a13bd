//! Render a timeline as a start/stop table: one row per device, one column
//! per resource, cells in the style `July 1, 8:00 AM / July 2, 0:40 AM`.

use chrono::{Datelike, NaiveDateTime, Timelike};

use super::engine::Timeline;
use super::scenario::Scenario;

const MONTHS: [&str; 12] = [
    "January", "February", "March", "April", "May", "June", "July", "August", "September",
    "October", "November", "December",
];

/// `July 2, 0:40 AM` — twelve-hour clock with the midnight hour written as 0
/// and noon as 12:00 PM.
pub fn format_instant(t: NaiveDateTime) -> String {
    let h = t.hour();
    let (display, half) = if h == 12 {
        (12, "PM")
    } else if h > 12 {
        (h - 12, "PM")
    } else {
        (h, "AM")
    };
    format!(
        "{} {}, {}:{:02} {}",
        MONTHS[(t.month() - 1) as usize],
        t.day(),
        display,
        t.minute(),
        half
    )
}

pub fn format_cell(start: NaiveDateTime, end: NaiveDateTime) -> String {
    format!("{} / {}", format_instant(start), format_instant(end))
}

/// Deterministic text table; devices as rows in listed order, resources as
/// columns in declared order, empty cell when a device never visits a
/// resource.
pub fn render_table(scenario: &Scenario, timeline: &Timeline) -> String {
    let mut columns: Vec<&str> = vec!["Device"];
    columns.extend(scenario.resources.iter().map(|r| r.name.as_str()));

    let mut rows: Vec<Vec<String>> = Vec::new();
    rows.push(columns.iter().map(|c| c.to_string()).collect());
    for dev in &scenario.devices {
        let mut row = vec![dev.name.clone()];
        for res in &scenario.resources {
            row.push(
                timeline
                    .entry(&dev.name, &res.name)
                    .map(|e| format_cell(e.start, e.end))
                    .unwrap_or_default(),
            );
        }
        rows.push(row);
    }

    let width = |col: usize| rows.iter().map(|r| r[col].len()).max().unwrap_or(0);
    let widths: Vec<usize> = (0..rows[0].len()).map(width).collect();
    let mut out = String::new();
    for row in &rows {
        let line: Vec<String> = row
            .iter()
            .enumerate()
            .map(|(i, cell)| format!("{cell:<w$}", w = widths[i]))
            .collect();
        out.push_str(line.join(" | ").trim_end());
        out.push('\n');
    }
    out
}
