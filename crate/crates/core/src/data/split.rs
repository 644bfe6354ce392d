use chrono::{Datelike, Duration, NaiveDate, TimeZone, Utc};
use serde::{Deserialize, Serialize};

use super::station::TimeRange;
use crate::error::{Error, Result};

/// Chronological train / validation / test ranges.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train: TimeRange,
    pub val: TimeRange,
    pub test: TimeRange,
}

/// Share of the pre-test span held out for validation, in percent.
pub const VAL_PERCENT: i64 = 15;

/// Tests on the last complete water year inside `span` (the year ending
/// with month `water_year_end_month`); the final 15% of the remaining hours,
/// rounded down, validate and the rest train. `span` must hold at least two
/// complete water years.
pub fn make_split(span: TimeRange, water_year_end_month: u32) -> Result<SplitSpec> {
    if !(1..=12).contains(&water_year_end_month) {
        return Err(Error::Split(format!("month {water_year_end_month} is not in 1..=12")));
    }
    let start_month = water_year_end_month % 12 + 1;
    let boundary = |year: i32| {
        let d = NaiveDate::from_ymd_opt(year, start_month, 1).expect("first of month exists");
        Utc.from_utc_datetime(&d.and_hms_opt(0, 0, 0).expect("midnight exists"))
    };
    // latest water-year boundary at or before the end of the span
    let mut year = span.end.year();
    while boundary(year) > span.end {
        year -= 1;
    }
    let test = TimeRange::new(boundary(year - 1), boundary(year));
    let previous_start = boundary(year - 2);
    if previous_start < span.start {
        return Err(Error::Split(format!(
            "span {} .. {} holds fewer than two complete water years",
            span.start, span.end
        )));
    }
    let val_hours = validation_hours((test.start - span.start).num_hours());
    let val_start = test.start - Duration::hours(val_hours);
    Ok(SplitSpec {
        train: TimeRange::new(span.start, val_start),
        val: TimeRange::new(val_start, test.start),
        test,
    })
}

/// Whole hours of validation carved from a pre-test span of `pre_test_hours`.
pub fn validation_hours(pre_test_hours: i64) -> i64 {
    pre_test_hours * VAL_PERCENT / 100
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::DateTime;

    fn t(s: &str) -> DateTime<Utc> {
        s.parse().unwrap()
    }

    #[test]
    fn oct_2011_to_sep_2018_tests_on_last_water_year() {
        let span = TimeRange::new(t("2011-10-01T00:00:00Z"), t("2018-10-01T00:00:00Z"));
        let s = make_split(span, 9).unwrap();
        assert_eq!(s.test, TimeRange::new(t("2017-10-01T00:00:00Z"), t("2018-10-01T00:00:00Z")));
        assert_eq!(s.train.start, span.start);
        assert_eq!(s.train.end, s.val.start);
        assert_eq!(s.val.end, s.test.start);
        assert_eq!(s.val.hours(), s.test.start.signed_duration_since(span.start).num_hours() * 15 / 100);
    }

    #[test]
    fn pre_test_span_of_1000_hours_validates_on_final_150() {
        assert_eq!(validation_hours(1000), 150);
        assert_eq!(validation_hours(999), 149);
        let span = TimeRange::new(t("2011-10-01T00:00:00Z"), t("2013-10-01T00:00:00Z"));
        let s = make_split(span, 9).unwrap();
        assert_eq!(s.val.hours(), validation_hours(8784));
        assert_eq!(s.train.hours() + s.val.hours(), 8784);
    }

    #[test]
    fn six_months_is_too_short() {
        let span = TimeRange::new(t("2012-01-01T00:00:00Z"), t("2012-07-01T00:00:00Z"));
        assert!(matches!(make_split(span, 9), Err(Error::Split(_))));
    }

    #[test]
    fn partial_trailing_year_is_ignored() {
        let span = TimeRange::new(t("2011-10-01T00:00:00Z"), t("2014-03-15T05:00:00Z"));
        let s = make_split(span, 9).unwrap();
        assert_eq!(s.test, TimeRange::new(t("2012-10-01T00:00:00Z"), t("2013-10-01T00:00:00Z")));
    }
}
