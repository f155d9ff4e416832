use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::calendar::{Month, Quarter, QuarterRange};
use crate::data::series::{Frequency, SeriesMeta, TimeSeries};
use crate::error::{Error, Result};

/// One panel column aligned to the panel calendar.
#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    pub meta: SeriesMeta,
    pub values: Vec<Option<f64>>,
}

impl Column {
    pub fn id(&self) -> &str {
        &self.meta.id
    }

    pub fn first_observed(&self, calendar: &[Month]) -> Option<Month> {
        self.values
            .iter()
            .position(Option::is_some)
            .map(|i| calendar[i])
    }
}

/// Columns sharing a contiguous monthly calendar that always spans whole
/// quarters. Quarterly columns carry values only in quarter-end months.
#[derive(Debug, Clone, PartialEq)]
pub struct Panel {
    calendar: Vec<Month>,
    columns: Vec<Column>,
}

impl Panel {
    pub fn new(calendar: Vec<Month>, columns: Vec<Column>) -> Result<Self> {
        if calendar.is_empty() {
            return Err(Error::invalid("panel calendar is empty"));
        }
        if calendar.windows(2).any(|w| w[1] != w[0].add(1)) {
            return Err(Error::invalid("panel calendar must be contiguous"));
        }
        let mut seen = HashSet::new();
        for c in &columns {
            if c.values.len() != calendar.len() {
                return Err(Error::invalid(format!("column {} misaligned with calendar", c.id())));
            }
            if !seen.insert(c.id().to_string()) {
                return Err(Error::DuplicateId(c.id().to_string()));
            }
        }
        if columns.iter().filter(|c| c.meta.is_target).count() != 1 {
            return Err(Error::invalid("panel needs exactly one target column"));
        }
        Ok(Panel { calendar, columns })
    }

    pub fn calendar(&self) -> &[Month] {
        &self.calendar
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn columns_mut(&mut self) -> &mut [Column] {
        &mut self.columns
    }

    pub fn n_rows(&self) -> usize {
        self.calendar.len()
    }

    pub fn start(&self) -> Month {
        self.calendar[0]
    }

    pub fn end(&self) -> Month {
        *self.calendar.last().expect("non-empty calendar")
    }

    pub fn first_quarter(&self) -> Quarter {
        self.start().quarter()
    }

    pub fn last_quarter(&self) -> Quarter {
        self.end().quarter()
    }

    /// Row index of month `m`, if inside the calendar.
    pub fn row(&self, m: Month) -> Option<usize> {
        let d = m.diff(self.start());
        (d >= 0 && (d as usize) < self.calendar.len()).then_some(d as usize)
    }

    pub fn target_index(&self) -> usize {
        self.columns
            .iter()
            .position(|c| c.meta.is_target)
            .expect("panel invariant: target present")
    }

    pub fn target(&self) -> &Column {
        &self.columns[self.target_index()]
    }

    pub fn column(&self, id: &str) -> Option<&Column> {
        self.columns.iter().find(|c| c.id() == id)
    }

    pub fn ids(&self) -> Vec<String> {
        self.columns.iter().map(|c| c.id().to_string()).collect()
    }

    pub fn value(&self, col: usize, m: Month) -> Option<f64> {
        self.row(m).and_then(|r| self.columns[col].values[r])
    }

    /// Target value for quarter `q` (stored in its final month).
    pub fn target_value(&self, q: Quarter) -> Option<f64> {
        self.value(self.target_index(), q.last_month())
    }

    /// Indices of non-target columns of the given frequency.
    pub fn feature_indices(&self, freq: Frequency) -> Vec<usize> {
        self.columns
            .iter()
            .enumerate()
            .filter(|(_, c)| !c.meta.is_target && c.meta.frequency == freq)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn to_series(&self, col: usize) -> TimeSeries {
        let c = &self.columns[col];
        let observations = self
            .calendar
            .iter()
            .zip(&c.values)
            .filter(|(m, _)| c.meta.frequency == Frequency::Monthly || m.is_quarter_end())
            .map(|(m, v)| (*m, *v))
            .collect();
        TimeSeries {
            meta: c.meta.clone(),
            observations,
        }
    }

    /// Keeps rows whose month lies in `[start, end]` (clamped to the
    /// calendar, extended to whole quarters).
    pub fn slice_months(&self, start: Month, end: Month) -> Result<Panel> {
        let start = start.max(self.start()).quarter().first_month();
        let end = end.min(self.end()).quarter().last_month();
        if end < start {
            return Err(Error::EmptyPartition(format!("{start}..{end}")));
        }
        let (a, b) = (self.row(start).unwrap(), self.row(end).unwrap());
        let columns = self
            .columns
            .iter()
            .map(|c| Column {
                meta: c.meta.clone(),
                values: c.values[a..=b].to_vec(),
            })
            .collect();
        Panel::new(self.calendar[a..=b].to_vec(), columns)
    }

    pub fn slice_quarters(&self, range: QuarterRange) -> Result<Panel> {
        if range.is_empty() {
            return Err(Error::EmptyPartition(format!("{}..{}", range.start, range.end)));
        }
        if range.end < self.first_quarter() || range.start > self.last_quarter() {
            return Err(Error::EmptyPartition(format!(
                "{}..{} outside calendar {}..{}",
                range.start,
                range.end,
                self.first_quarter(),
                self.last_quarter()
            )));
        }
        self.slice_months(range.start.first_month(), range.end.last_month())
    }

    /// Rows up to and including the final month of `q`.
    pub fn through_quarter(&self, q: Quarter) -> Result<Panel> {
        self.slice_quarters(QuarterRange::new(self.first_quarter(), q))
    }

    /// Extends the calendar with missing rows through `end` (whole quarters).
    pub fn extend_to(&self, end: Month) -> Panel {
        let end = end.quarter().last_month();
        if end <= self.end() {
            return self.clone();
        }
        let extra = end.diff(self.end()) as usize;
        let mut calendar = self.calendar.clone();
        calendar.extend((1..=extra as i32).map(|k| self.end().add(k)));
        let columns = self
            .columns
            .iter()
            .map(|c| {
                let mut values = c.values.clone();
                values.extend(std::iter::repeat_n(None, extra));
                Column {
                    meta: c.meta.clone(),
                    values,
                }
            })
            .collect();
        Panel { calendar, columns }
    }

    pub fn with_columns(&self, keep: impl Fn(&Column) -> bool) -> Panel {
        Panel {
            calendar: self.calendar.clone(),
            columns: self.columns.iter().filter(|c| keep(c)).cloned().collect(),
        }
    }
}

/// Aligns series onto a union monthly calendar spanning whole quarters.
pub fn build_panel(series: &[TimeSeries]) -> Result<Panel> {
    if series.is_empty() {
        return Err(Error::invalid("build_panel needs at least one series"));
    }
    let mut seen = HashSet::new();
    for s in series {
        if !seen.insert(s.id()) {
            return Err(Error::DuplicateId(s.id().to_string()));
        }
    }
    let start = series
        .iter()
        .filter_map(|s| s.observations.keys().next().copied())
        .min()
        .ok_or_else(|| Error::invalid("all series are empty"))?
        .quarter()
        .first_month();
    let end = series
        .iter()
        .filter_map(|s| s.observations.keys().next_back().copied())
        .max()
        .expect("non-empty")
        .quarter()
        .last_month();
    let calendar: Vec<Month> = Month::range_inclusive(start, end).collect();

    let columns = series
        .iter()
        .map(|s| {
            let mut values = vec![None; calendar.len()];
            for (m, v) in &s.observations {
                let m = match s.meta.frequency {
                    Frequency::Monthly => *m,
                    Frequency::Quarterly => m.quarter().last_month(),
                };
                values[m.diff(start) as usize] = *v;
            }
            Column {
                meta: s.meta.clone(),
                values,
            }
        })
        .collect();
    Panel::new(calendar, columns)
}

/// Keeps the columns whose first observation is at or before the end of
/// `cutoff`. The target column is always kept.
pub fn availability_filter(panel: &Panel, cutoff: Quarter) -> Panel {
    let last = cutoff.last_month();
    let cal = panel.calendar().to_vec();
    panel.with_columns(|c| c.meta.is_target || c.first_observed(&cal).is_some_and(|m| m <= last))
}

/// Train/validation/test boundaries. Validation subdivides the training
/// span: tuning fits on quarters before `valid_start` and the final model
/// is refit on everything through `train_end`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_end: Quarter,
    pub valid_start: Quarter,
    pub valid_end: Quarter,
    pub test_start: Quarter,
    pub test_end: Quarter,
}

impl SplitSpec {
    pub fn new(
        train_end: Quarter,
        valid_start: Quarter,
        valid_end: Quarter,
        test_start: Quarter,
        test_end: Quarter,
    ) -> Result<Self> {
        let s = SplitSpec {
            train_end,
            valid_start,
            valid_end,
            test_start,
            test_end,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.valid_start <= self.valid_end
            && self.valid_end <= self.train_end
            && self.train_end < self.test_start
            && self.test_start <= self.test_end;
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("inconsistent split boundaries: {self:?}")))
        }
    }

    pub fn test_range(&self) -> QuarterRange {
        QuarterRange::new(self.test_start, self.test_end)
    }

    pub fn valid_range(&self) -> QuarterRange {
        QuarterRange::new(self.valid_start, self.valid_end)
    }

    pub fn test_quarters(&self) -> Vec<Quarter> {
        self.test_range().iter().collect()
    }

    pub fn valid_quarters(&self) -> Vec<Quarter> {
        self.valid_range().iter().collect()
    }

    /// Split used while tuning: train on quarters before validation,
    /// "test" on the validation quarters.
    pub fn tuning_split(&self) -> SplitSpec {
        let pre = self.valid_start.add(-1);
        SplitSpec {
            train_end: pre,
            valid_start: pre,
            valid_end: pre,
            test_start: self.valid_start,
            test_end: self.valid_end,
        }
    }
}

/// Row-wise partition. `train` runs from the panel start through
/// `train_end` (and therefore contains the validation rows).
pub fn split(panel: &Panel, spec: &SplitSpec) -> Result<(Panel, Panel, Panel)> {
    spec.validate()?;
    let first = panel.first_quarter();
    let train = panel.slice_quarters(QuarterRange::new(first, spec.train_end))?;
    let valid = panel.slice_quarters(spec.valid_range())?;
    if spec.test_start > panel.last_quarter() {
        return Err(Error::EmptyPartition(format!(
            "test starts {} after calendar end {}",
            spec.test_start,
            panel.last_quarter()
        )));
    }
    let test = panel.slice_quarters(spec.test_range())?;
    Ok((train, valid, test))
}

/// Calendar month → value map for quick lookups in tests and fixtures.
pub fn column_map(panel: &Panel, col: usize) -> BTreeMap<Month, Option<f64>> {
    panel
        .calendar()
        .iter()
        .copied()
        .zip(panel.columns()[col].values.iter().copied())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(y: i32, mo: u32) -> Month {
        Month::new(y, mo).unwrap()
    }

    fn q(s: &str) -> Quarter {
        Quarter::parse(s).unwrap()
    }

    fn monthly(id: &str, start: Month, n: usize) -> TimeSeries {
        let vals: Vec<_> = (0..n).map(|i| Some(i as f64)).collect();
        TimeSeries::from_values(SeriesMeta::monthly(id, 0, start), start, &vals).unwrap()
    }

    fn gdp(start: Month, n: usize) -> TimeSeries {
        let vals: Vec<_> = (0..n).map(|i| Some(i as f64)).collect();
        TimeSeries::from_values(SeriesMeta::quarterly("gdp", 1, start).target(), start, &vals).unwrap()
    }

    #[test]
    fn single_monthly_series_calendar() {
        let mut s = monthly("x", m(2000, 1), 3);
        s.meta.is_target = true;
        let p = build_panel(&[s]).unwrap();
        assert_eq!(p.n_rows(), 3);
    }

    #[test]
    fn quarterly_values_land_in_quarter_end_months() {
        let p = build_panel(&[gdp(m(1947, 3), 2)]).unwrap();
        let col = &p.columns()[0].values;
        assert_eq!(p.start(), m(1947, 1));
        assert_eq!(col, &vec![None, None, Some(0.0), None, None, Some(1.0)]);
    }

    #[test]
    fn mixed_frequency_calendar() {
        let p = build_panel(&[monthly("x", m(2000, 1), 6), gdp(m(2000, 3), 1)]).unwrap();
        assert_eq!(p.n_rows(), 6);
        let missing = p.target().values.iter().filter(|v| v.is_none()).count();
        assert_eq!(missing, 5);
    }

    #[test]
    fn duplicate_ids_rejected() {
        let err = build_panel(&[monthly("x", m(2000, 1), 3), monthly("x", m(2000, 1), 3)]).unwrap_err();
        assert!(matches!(err, Error::DuplicateId(_)));
    }

    fn availability_panel() -> Panel {
        let n = 12 * 30;
        let start = m(1947, 1);
        let late = |id: &str, year: i32| {
            let vals: Vec<_> = (0..n)
                .map(|i| (start.add(i as i32).year() >= year).then_some(1.0))
                .collect();
            TimeSeries::from_values(SeriesMeta::monthly(id, 0, m(year, 1)), start, &vals).unwrap()
        };
        build_panel(&[
            gdp(m(1947, 3), n / 3),
            late("a", 1947),
            late("b", 1959),
            late("c", 1967),
            late("d", 1961),
        ])
        .unwrap()
    }

    #[test]
    fn availability_filter_rules() {
        let p = availability_panel();
        let kept = availability_filter(&p, q("1960Q4")).ids();
        assert_eq!(kept, vec!["gdp", "a", "b"]);
        assert!(!kept.contains(&"d".to_string()));
        let all = availability_filter(&p, q("1975Q4"));
        assert_eq!(all.columns().len(), 5);
    }

    #[test]
    fn availability_filter_idempotent_and_monotone() {
        let p = availability_panel();
        let once = availability_filter(&p, q("1960Q4"));
        assert_eq!(availability_filter(&once, q("1960Q4")), once);
        let mut prev: Vec<String> = Vec::new();
        for y in 1946..1970 {
            let ids = availability_filter(&p, Quarter::new(y, 4).unwrap()).ids();
            assert!(prev.iter().all(|id| ids.contains(id)));
            prev = ids;
        }
    }

    fn long_panel() -> Panel {
        let start = m(1947, 1);
        let n = 12 * 75;
        build_panel(&[monthly("x", start, n), gdp(m(1947, 3), n / 3)]).unwrap()
    }

    #[test]
    fn period_one_split() {
        let p = long_panel();
        let spec = SplitSpec::new(q("1971Q4"), q("1966Q1"), q("1971Q4"), q("1972Q1"), q("1983Q4")).unwrap();
        let (train, valid, test) = split(&p, &spec).unwrap();
        assert_eq!(train.last_quarter(), q("1971Q4"));
        assert_eq!(test.first_quarter(), q("1972Q1"));
        assert_eq!(test.last_quarter(), q("1983Q4"));
        assert_eq!(valid.first_quarter(), q("1966Q1"));
        assert!(valid.last_quarter() <= train.last_quarter());
        assert!(train.end() < test.start());
        assert_eq!(train.n_rows() + test.n_rows(), (q("1983Q4").diff(q("1947Q1")) as usize + 1) * 3);
    }

    #[test]
    fn period_three_validation_window() {
        let p = long_panel();
        let spec = SplitSpec::new(q("2015Q4"), q("2006Q1"), q("2015Q4"), q("2016Q1"), q("2021Q3")).unwrap();
        let (_, valid, _) = split(&p, &spec).unwrap();
        assert_eq!(valid.first_quarter(), q("2006Q1"));
        assert_eq!(valid.last_quarter(), q("2015Q4"));
    }

    #[test]
    fn test_after_calendar_end_is_empty_partition() {
        let p = long_panel();
        let spec = SplitSpec::new(q("2015Q4"), q("2006Q1"), q("2015Q4"), q("2030Q1"), q("2031Q1")).unwrap();
        assert!(matches!(split(&p, &spec), Err(Error::EmptyPartition(_))));
    }

    #[test]
    fn inconsistent_split_rejected() {
        assert!(SplitSpec::new(q("1971Q4"), q("1966Q1"), q("1972Q4"), q("1972Q1"), q("1983Q4")).is_err());
    }
}
