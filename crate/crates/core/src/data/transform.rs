use std::collections::BTreeMap;

use crate::calendar::Month;
use crate::data::series::{Frequency, TimeSeries};
use crate::error::{Error, Result};

/// Period-over-period growth `x_t / x_{t-1} - 1`.
///
/// Quarterly series are differenced quarter-to-quarter on quarter-end
/// cells. The first period and any period adjacent to a missing level is
/// missing.
pub fn to_growth(series: &TimeSeries) -> Result<TimeSeries> {
    let step = match series.meta.frequency {
        Frequency::Monthly => 1,
        Frequency::Quarterly => 3,
    };
    let observed_pairs = series
        .observations
        .iter()
        .filter(|(m, v)| v.is_some() && series.get(m.add(-step)).is_some())
        .count();
    if observed_pairs == 0 {
        return Err(Error::invalid(format!(
            "{}: growth needs at least two consecutive observations",
            series.id()
        )));
    }

    let mut out: BTreeMap<Month, Option<f64>> = BTreeMap::new();
    for (&m, &v) in &series.observations {
        let prev = series.get(m.add(-step));
        let g = match (v, prev) {
            (Some(x), Some(p)) => {
                if p == 0.0 {
                    return Err(Error::ZeroBase {
                        series: series.id().to_string(),
                        date: m.to_string(),
                    });
                }
                Some(x / p - 1.0)
            }
            _ => None,
        };
        out.insert(m, g);
    }
    TimeSeries::new(series.meta.clone(), out)
}

/// Inverse of [`to_growth`] given the first level: compounds growth rates
/// forward. Missing growth yields missing levels from that point on.
pub fn compound_levels(growth: &TimeSeries, first_level: f64) -> Vec<Option<f64>> {
    let mut level = Some(first_level);
    let mut out = Vec::with_capacity(growth.observations.len());
    for (i, v) in growth.observations.values().enumerate() {
        if i == 0 {
            out.push(level);
            continue;
        }
        level = match (level, v) {
            (Some(l), Some(g)) => Some(l * (1.0 + g)),
            _ => None,
        };
        out.push(level);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::series::SeriesMeta;
    use proptest::prelude::*;

    fn monthly(values: &[Option<f64>]) -> TimeSeries {
        let start = Month::new(2000, 1).unwrap();
        TimeSeries::from_values(SeriesMeta::monthly("x", 0, start), start, values).unwrap()
    }

    #[test]
    fn one_step_growth() {
        let g = to_growth(&monthly(&[Some(100.0), Some(110.0)])).unwrap();
        let v = g.values();
        assert_eq!(v[0], None);
        assert!((v[1].unwrap() - 0.10).abs() < 1e-12);
    }

    #[test]
    fn constant_levels_zero_growth() {
        let g = to_growth(&monthly(&[Some(5.0), Some(5.0), Some(5.0)])).unwrap();
        assert_eq!(g.values(), vec![None, Some(0.0), Some(0.0)]);
    }

    #[test]
    fn growth_then_decline() {
        let v = to_growth(&monthly(&[Some(100.0), Some(110.0), Some(99.0)]))
            .unwrap()
            .values();
        assert!((v[1].unwrap() - 0.10).abs() < 1e-12);
        assert!((v[2].unwrap() - (99.0 / 110.0 - 1.0)).abs() < 1e-12);
        assert!((v[2].unwrap() + 0.10).abs() < 1e-12);
    }

    #[test]
    fn missing_propagates_to_both_neighbours() {
        let v = to_growth(&monthly(&[Some(1.0), Some(2.0), None, Some(3.0), Some(6.0)]))
            .unwrap()
            .values();
        assert_eq!(v[2], None);
        assert_eq!(v[3], None);
        assert_eq!(v[4], Some(1.0));
    }

    #[test]
    fn zero_base_is_error() {
        let err = to_growth(&monthly(&[Some(0.0), Some(1.0)])).unwrap_err();
        assert!(matches!(err, Error::ZeroBase { .. }));
    }

    #[test]
    fn quarterly_growth_uses_quarter_steps() {
        let start = Month::new(1947, 3).unwrap();
        let s = TimeSeries::from_values(
            SeriesMeta::quarterly("gdp", 1, start),
            start,
            &[Some(100.0), Some(102.0)],
        )
        .unwrap();
        let g = to_growth(&s).unwrap();
        assert_eq!(g.get(Month::new(1947, 6).unwrap()), Some(102.0 / 100.0 - 1.0));
    }

    proptest! {
        #[test]
        fn compounding_reconstructs_levels(levels in prop::collection::vec(0.5f64..200.0, 2..60)) {
            let s = monthly(&levels.iter().map(|&x| Some(x)).collect::<Vec<_>>());
            let g = to_growth(&s).unwrap();
            let back = compound_levels(&g, levels[0]);
            for (a, b) in levels.iter().zip(back) {
                let b = b.unwrap();
                prop_assert!(((a - b) / a).abs() < 1e-10);
            }
        }
    }
}
