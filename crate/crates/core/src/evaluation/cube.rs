use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};

use crate::calendar::Quarter;
use crate::error::{Error, Result};
use crate::model_api::{MethodologyId, PredictionRecord};
use crate::vintage::VintageOffset;

pub const CUBE_HEADER: [&str; 5] = ["methodology", "period", "quarter", "offset", "value"];

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CellKey {
    pub methodology: MethodologyId,
    pub period: String,
    pub quarter: Quarter,
    pub offset: VintageOffset,
}

impl CellKey {
    pub fn new(methodology: MethodologyId, period: &str, quarter: Quarter, offset: VintageOffset) -> Self {
        CellKey {
            methodology,
            period: period.to_string(),
            quarter,
            offset,
        }
    }
}

/// Nowcasts keyed by (methodology, period, quarter, offset) and the
/// realized values they are scored against.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PredictionCube {
    records: BTreeMap<CellKey, f64>,
    actuals: BTreeMap<Quarter, f64>,
}

impl PredictionCube {
    pub fn insert(&mut self, r: PredictionRecord) -> Result<()> {
        if !r.value.is_finite() {
            return Err(Error::invalid(format!("non-finite nowcast for {} {}", r.methodology, r.quarter)));
        }
        let key = CellKey::new(r.methodology, &r.period, r.quarter, r.offset);
        if self.records.contains_key(&key) {
            return Err(Error::DuplicateId(format!("{} {} {} {}", r.methodology, r.period, r.quarter, r.offset)));
        }
        self.records.insert(key, r.value);
        Ok(())
    }

    pub fn remove(&mut self, key: &CellKey) -> Option<f64> {
        self.records.remove(key)
    }

    pub fn contains(&self, key: &CellKey) -> bool {
        self.records.contains_key(key)
    }

    pub fn set_actual(&mut self, q: Quarter, value: f64) {
        self.actuals.insert(q, value);
    }

    pub fn actual(&self, q: Quarter) -> Option<f64> {
        self.actuals.get(&q).copied()
    }

    pub fn actuals(&self) -> &BTreeMap<Quarter, f64> {
        &self.actuals
    }

    pub fn get(&self, id: MethodologyId, period: &str, q: Quarter, o: VintageOffset) -> Option<f64> {
        self.records.get(&CellKey::new(id, period, q, o)).copied()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn periods(&self) -> Vec<String> {
        let set: BTreeSet<&String> = self.records.keys().map(|k| &k.period).collect();
        set.into_iter().cloned().collect()
    }

    /// Methodologies with records in `period`, in table order.
    pub fn methodologies(&self, period: &str) -> Vec<MethodologyId> {
        let set: BTreeSet<MethodologyId> = self
            .records
            .keys()
            .filter(|k| k.period == period)
            .map(|k| k.methodology)
            .collect();
        set.into_iter().collect()
    }

    pub fn quarters(&self, period: &str) -> Vec<Quarter> {
        let set: BTreeSet<Quarter> = self.records.keys().filter(|k| k.period == period).map(|k| k.quarter).collect();
        set.into_iter().collect()
    }

    /// Records in canonical (sorted key) order.
    pub fn records(&self) -> impl Iterator<Item = PredictionRecord> + '_ {
        self.records.iter().map(|(k, v)| PredictionRecord {
            methodology: k.methodology,
            period: k.period.clone(),
            quarter: k.quarter,
            offset: k.offset,
            value: *v,
        })
    }

    /// Every record's quarter must have an actual.
    pub fn validate(&self) -> Result<()> {
        for k in self.records.keys() {
            if !self.actuals.contains_key(&k.quarter) {
                return Err(Error::MissingCells(format!("no actual for {}", k.quarter)));
            }
        }
        Ok(())
    }

    /// Canonical CSV: header then records sorted by key.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(CUBE_HEADER)?;
        for r in self.records() {
            wr.write_record(record_fields(&r))?;
        }
        wr.flush()?;
        Ok(())
    }

    /// Parses cube rows; actuals must be supplied separately.
    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut cube = PredictionCube::default();
        for rec in parse_records(r)? {
            cube.insert(rec)?;
        }
        Ok(cube)
    }

    pub fn write_actuals_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["quarter", "value"])?;
        for (q, v) in &self.actuals {
            wr.write_record([q.to_string(), v.to_string()])?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn read_actuals_csv<R: Read>(&mut self, r: R) -> Result<()> {
        let mut rd = csv::Reader::from_reader(r);
        for row in rd.records() {
            let row = row?;
            let q = Quarter::parse(&row[0])?;
            let v: f64 = row[1].parse().map_err(|_| Error::Parse(format!("bad actual {:?}", &row[1])))?;
            self.set_actual(q, v);
        }
        Ok(())
    }
}

/// CSV fields of one record; values use the shortest round-trip decimal.
pub fn record_fields(r: &PredictionRecord) -> [String; 5] {
    [
        r.methodology.as_str().to_string(),
        r.period.clone(),
        r.quarter.to_string(),
        r.offset.months().to_string(),
        r.value.to_string(),
    ]
}

pub fn parse_records<R: Read>(r: R) -> Result<Vec<PredictionRecord>> {
    let mut rd = csv::Reader::from_reader(r);
    if rd.headers()?.iter().collect::<Vec<_>>() != CUBE_HEADER {
        return Err(Error::Parse(format!("cube header must be {}", CUBE_HEADER.join(","))));
    }
    let mut out = Vec::new();
    for row in rd.records() {
        let row = row?;
        let bad = |what: &str| Error::Parse(format!("bad {what} in cube row {row:?}"));
        out.push(PredictionRecord {
            methodology: row[0].parse()?,
            period: row[1].to_string(),
            quarter: Quarter::parse(&row[2])?,
            offset: VintageOffset::new(row[3].parse().map_err(|_| bad("offset"))?)?,
            value: row[4].parse().map_err(|_| bad("value"))?,
        });
    }
    Ok(out)
}
