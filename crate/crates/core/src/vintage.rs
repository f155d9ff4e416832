//! Simulated data vintages: the panel as it looked at a publication month
//! relative to the target quarter.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::calendar::{Month, Quarter};
use crate::data::Panel;
use crate::error::{Error, Result};

/// Months relative to the final month of the target quarter, in −2..=2.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "i32", into = "i32")]
pub struct VintageOffset(i8);

impl VintageOffset {
    pub const ALL: [VintageOffset; 5] = [
        VintageOffset(-2),
        VintageOffset(-1),
        VintageOffset(0),
        VintageOffset(1),
        VintageOffset(2),
    ];

    pub fn new(months: i32) -> Result<Self> {
        if (-2..=2).contains(&months) {
            Ok(VintageOffset(months as i8))
        } else {
            Err(Error::invalid(format!("vintage offset {months} not in -2..=2")))
        }
    }

    pub fn months(self) -> i32 {
        self.0 as i32
    }

    /// Position in [`VintageOffset::ALL`].
    pub fn index(self) -> usize {
        (self.0 + 2) as usize
    }

    /// Row label used in the ratio tables.
    pub fn label(self) -> &'static str {
        match self.0 {
            -2 => "2 months before",
            -1 => "1 month before",
            0 => "month of",
            1 => "1 month after",
            _ => "2 months after",
        }
    }
}

impl TryFrom<i32> for VintageOffset {
    type Error = Error;
    fn try_from(v: i32) -> Result<Self> {
        VintageOffset::new(v)
    }
}

impl From<VintageOffset> for i32 {
    fn from(v: VintageOffset) -> i32 {
        v.months()
    }
}

impl fmt::Display for VintageOffset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A panel masked to what was observable at `cutoff_month`.
#[derive(Debug, Clone, PartialEq)]
pub struct VintageView {
    pub panel: Panel,
    pub target_quarter: Quarter,
    pub offset: VintageOffset,
    pub cutoff_month: Month,
}

impl VintageView {
    /// Last month whose rows can carry any observation in this view.
    pub fn horizon(&self) -> Month {
        self.cutoff_month.max(self.target_quarter.last_month())
    }
}

/// Final month of the target quarter shifted by the offset: for Q2,
/// offset −2 is April and +2 is August.
pub fn publication_cutoff(target_quarter: Quarter, offset: VintageOffset) -> Month {
    target_quarter.last_month().add(offset.months())
}

/// Masks every cell dated after `cutoff − lag` for each column, and the
/// target for `target_quarter` and later.
pub fn mask_vintage(panel: &Panel, target_quarter: Quarter, offset: VintageOffset) -> VintageView {
    let cutoff = publication_cutoff(target_quarter, offset);
    let mut masked = panel.clone();
    let calendar = panel.calendar().to_vec();
    let target_first = target_quarter.first_month();
    for col in masked.columns_mut() {
        let last_available = cutoff.add(-(col.meta.publication_lag_months as i32));
        let is_target = col.meta.is_target;
        for (m, v) in calendar.iter().zip(col.values.iter_mut()) {
            if *m > last_available || (is_target && *m >= target_first) {
                *v = None;
            }
        }
    }
    VintageView {
        panel: masked,
        target_quarter,
        offset,
        cutoff_month: cutoff,
    }
}

/// Quarter-major, offset-ascending Cartesian product.
pub fn vintage_grid(quarters: &[Quarter]) -> Result<Vec<(Quarter, VintageOffset)>> {
    if quarters.is_empty() {
        return Err(Error::invalid("vintage grid needs at least one quarter"));
    }
    Ok(quarters
        .iter()
        .flat_map(|&q| VintageOffset::ALL.into_iter().map(move |o| (q, o)))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{build_panel, SeriesMeta, TimeSeries};

    fn q(s: &str) -> Quarter {
        Quarter::parse(s).unwrap()
    }

    fn off(k: i32) -> VintageOffset {
        VintageOffset::new(k).unwrap()
    }

    fn lag_panel() -> Panel {
        let start = Month::new(2000, 1).unwrap();
        let mk = |id: &str, lag: u32| {
            let vals: Vec<_> = (0..12).map(|i| Some(i as f64)).collect();
            TimeSeries::from_values(SeriesMeta::monthly(id, lag, start), start, &vals).unwrap()
        };
        let gdp = TimeSeries::from_values(
            SeriesMeta::quarterly("gdp", 1, start.add(2)).target(),
            start.add(2),
            &[Some(1.0), Some(2.0), Some(3.0), Some(4.0)],
        )
        .unwrap();
        build_panel(&[gdp, mk("a", 0), mk("b", 1), mk("c", 2)]).unwrap()
    }

    #[test]
    fn cutoff_convention() {
        assert_eq!(publication_cutoff(q("2000Q2"), off(-2)), Month::new(2000, 4).unwrap());
        assert_eq!(publication_cutoff(q("2000Q2"), off(0)), Month::new(2000, 6).unwrap());
        assert_eq!(publication_cutoff(q("2000Q2"), off(2)), Month::new(2000, 8).unwrap());
    }

    fn pattern(view: &VintageView, id: &str) -> String {
        view.panel
            .column(id)
            .unwrap()
            .values
            .iter()
            .map(|v| if v.is_some() { '1' } else { '0' })
            .collect()
    }

    #[test]
    fn lag_rule() {
        let p = lag_panel();
        let v = mask_vintage(&p, q("2000Q2"), off(-2));
        assert_eq!(pattern(&v, "a"), "111100000000");
        assert_eq!(pattern(&v, "b"), "111000000000");
    }

    #[test]
    fn target_quarter_always_masked() {
        let p = lag_panel();
        let v = mask_vintage(&p, q("2000Q2"), off(1));
        assert_eq!(pattern(&v, "gdp"), "001000000000");
        assert_eq!(v.panel.target_value(q("2000Q2")), None);
        assert_eq!(v.panel.target_value(q("2000Q1")), Some(1.0));
    }

    #[test]
    fn hand_enumerated_masks() {
        let p = lag_panel();
        let expected = [
            ["111100000000", "111000000000", "110000000000"],
            ["111110000000", "111100000000", "111000000000"],
            ["111111000000", "111110000000", "111100000000"],
            ["111111100000", "111111000000", "111110000000"],
            ["111111110000", "111111100000", "111111000000"],
        ];
        for (o, exp) in VintageOffset::ALL.iter().zip(expected) {
            let v = mask_vintage(&p, q("2000Q2"), *o);
            assert_eq!([pattern(&v, "a"), pattern(&v, "b"), pattern(&v, "c")], exp.map(String::from));
        }
    }

    #[test]
    fn masks_are_nested() {
        let p = lag_panel();
        for w in VintageOffset::ALL.windows(2) {
            let early = mask_vintage(&p, q("2000Q3"), w[0]);
            let late = mask_vintage(&p, q("2000Q3"), w[1]);
            for (ce, cl) in early.panel.columns().iter().zip(late.panel.columns()) {
                for (a, b) in ce.values.iter().zip(&cl.values) {
                    assert!(a.is_none() || b.is_some());
                }
            }
        }
    }

    #[test]
    fn grid_shapes() {
        let quarters: Vec<_> = (0..23).map(|k| q("2016Q1").add(k)).collect();
        let g = vintage_grid(&quarters).unwrap();
        assert_eq!(g.len(), 115);
        assert_eq!(g[0], (q("2016Q1"), off(-2)));
        assert_eq!(g[4], (q("2016Q1"), off(2)));
        assert_eq!(g[5], (q("2016Q2"), off(-2)));
        assert_eq!(vintage_grid(&quarters[..1]).unwrap().len(), 5);
        assert!(vintage_grid(&[]).is_err());
    }

    #[test]
    fn offset_bounds() {
        assert!(VintageOffset::new(3).is_err());
        assert!(VintageOffset::new(-3).is_err());
    }
}
