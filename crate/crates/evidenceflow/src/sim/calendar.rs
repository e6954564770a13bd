//! Working-hours calendar arithmetic. Human-started steps are gated to
//! 8:00 AM - 5:00 PM on Monday through Friday; work already running continues
//! unattended through nights and weekends.

use chrono::{Datelike, NaiveDate, NaiveDateTime, NaiveTime, Weekday};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WorkCalendar {
    pub day_start: NaiveTime,
    pub day_end: NaiveTime,
    /// Date that scenario day numbering starts from.
    pub anchor: NaiveDate,
}

impl WorkCalendar {
    pub fn new(anchor: NaiveDate) -> Self {
        WorkCalendar {
            day_start: NaiveTime::from_hms_opt(8, 0, 0).unwrap(),
            day_end: NaiveTime::from_hms_opt(17, 0, 0).unwrap(),
            anchor,
        }
    }

    pub fn is_workday(&self, date: NaiveDate) -> bool {
        !matches!(date.weekday(), Weekday::Sat | Weekday::Sun)
    }

    pub fn in_working_hours(&self, t: NaiveDateTime) -> bool {
        self.is_workday(t.date()) && t.time() >= self.day_start && t.time() < self.day_end
    }

    /// The instant itself when it falls within working hours on a workday;
    /// otherwise 8:00 AM of the next workday (same-day 8:00 for an
    /// early-morning instant).
    pub fn next_permitted_start(&self, t: NaiveDateTime) -> NaiveDateTime {
        if self.in_working_hours(t) {
            return t;
        }
        let mut date = t.date();
        if !(self.is_workday(date) && t.time() < self.day_start) {
            date = date.succ_opt().expect("date overflow");
        }
        while !self.is_workday(date) {
            date = date.succ_opt().expect("date overflow");
        }
        date.and_time(self.day_start)
    }
}
