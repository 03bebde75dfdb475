//! Uniformly sampled signal tables and their CSV form.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::digest;

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("malformed trace CSV: {0}")]
    Csv(String),
    #[error("trace has no rows")]
    Empty,
    #[error("first column must be `t`, found {0:?}")]
    MissingTimeColumn(String),
    #[error("time column not uniformly spaced at row {row}: expected {expected}, found {found}")]
    NonUniform { row: usize, expected: f64, found: f64 },
    #[error("column {column}: {message}")]
    BadValue { column: String, message: String },
    #[error("column {0} has the wrong length")]
    Length(String),
    #[error("invalid step {0}: must be > 0")]
    Step(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Column {
    Num(Vec<f64>),
    Bool(Vec<bool>),
}

impl Column {
    pub fn len(&self) -> usize {
        match self {
            Column::Num(v) => v.len(),
            Column::Bool(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Signals sampled at `t0 + k * dt`. Lookup between samples returns the
/// latest sample at or before the requested time.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    t0: f64,
    dt: f64,
    len: usize,
    columns: BTreeMap<String, Column>,
}

const TIME_EPS: f64 = 1e-9;

impl Trace {
    pub fn new(t0: f64, dt: f64, columns: BTreeMap<String, Column>) -> Result<Self, TraceError> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(TraceError::Step(dt));
        }
        let len = columns.values().next().map(Column::len).ok_or(TraceError::Empty)?;
        if len == 0 {
            return Err(TraceError::Empty);
        }
        if let Some((name, _)) = columns.iter().find(|(_, c)| c.len() != len) {
            return Err(TraceError::Length(name.clone()));
        }
        for (name, col) in &columns {
            if let Column::Num(v) = col {
                if v.iter().any(|x| !x.is_finite()) {
                    return Err(TraceError::BadValue {
                        column: name.clone(),
                        message: "non-finite value".into(),
                    });
                }
            }
        }
        Ok(Self { t0, dt, len, columns })
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn time(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.dt
    }

    pub fn t_last(&self) -> f64 {
        self.time(self.len - 1)
    }

    pub fn column(&self, name: &str) -> Option<&Column> {
        self.columns.get(name)
    }

    pub fn columns(&self) -> &BTreeMap<String, Column> {
        &self.columns
    }

    pub fn num(&self, name: &str) -> Option<&[f64]> {
        match self.columns.get(name) {
            Some(Column::Num(v)) => Some(v),
            _ => None,
        }
    }

    pub fn bool(&self, name: &str) -> Option<&[bool]> {
        match self.columns.get(name) {
            Some(Column::Bool(v)) => Some(v),
            _ => None,
        }
    }

    /// Index of the latest sample with timestamp <= `t`, or `None` when `t`
    /// lies before the first or after the last sample.
    pub fn index_at(&self, t: f64) -> Option<usize> {
        let x = (t - self.t0) / self.dt;
        if !x.is_finite() || x < -TIME_EPS || x > (self.len - 1) as f64 + TIME_EPS {
            return None;
        }
        Some(((x + TIME_EPS).floor().max(0.0) as usize).min(self.len - 1))
    }

    /// Sample indices whose timestamps lie in `[lo, hi]` after clamping both
    /// bounds into the trace's time span.
    pub fn indices_in(&self, lo: f64, hi: f64) -> std::ops::RangeInclusive<usize> {
        let last = self.t_last();
        let lo = lo.clamp(self.t0, last);
        let hi = hi.clamp(self.t0, last);
        let kmin = ((lo - self.t0) / self.dt - TIME_EPS).ceil().max(0.0) as usize;
        let kmax = (((hi - self.t0) / self.dt + TIME_EPS).floor().max(0.0) as usize).min(self.len - 1);
        // An empty range when no sample falls inside.
        if kmin > kmax {
            #[allow(clippy::reversed_empty_ranges)]
            return 1..=0;
        }
        kmin..=kmax
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("t");
        for name in self.columns.keys() {
            out.push(',');
            out.push_str(name);
        }
        out.push('\n');
        for k in 0..self.len {
            out.push_str(&self.time(k).to_string());
            for col in self.columns.values() {
                out.push(',');
                match col {
                    Column::Num(v) => out.push_str(&v[k].to_string()),
                    Column::Bool(v) => out.push_str(if v[k] { "true" } else { "false" }),
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self, TraceError> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let headers: Vec<String> = rdr
            .headers()
            .map_err(|e| TraceError::Csv(e.to_string()))?
            .iter()
            .map(str::to_string)
            .collect();
        match headers.first() {
            Some(h) if h == "t" => {}
            other => return Err(TraceError::MissingTimeColumn(other.cloned().unwrap_or_default())),
        }
        let mut times = Vec::new();
        let mut raw: Vec<Vec<String>> = vec![Vec::new(); headers.len() - 1];
        for rec in rdr.records() {
            let rec = rec.map_err(|e| TraceError::Csv(e.to_string()))?;
            let t: f64 = rec[0].parse().map_err(|_| TraceError::BadValue {
                column: "t".into(),
                message: format!("not a number: {:?}", &rec[0]),
            })?;
            times.push(t);
            for (i, cell) in rec.iter().skip(1).enumerate() {
                raw[i].push(cell.to_string());
            }
        }
        if times.is_empty() {
            return Err(TraceError::Empty);
        }
        let t0 = times[0];
        let dt = if times.len() > 1 {
            (times[times.len() - 1] - t0) / (times.len() - 1) as f64
        } else {
            1.0
        };
        if !(dt > 0.0) {
            return Err(TraceError::Step(dt));
        }
        for (row, t) in times.iter().enumerate() {
            let expected = t0 + row as f64 * dt;
            if (t - expected).abs() > 1e-6 * dt.max(1.0) {
                return Err(TraceError::NonUniform { row, expected, found: *t });
            }
        }
        let mut columns = BTreeMap::new();
        for (name, cells) in headers.iter().skip(1).zip(raw) {
            let col = if cells.iter().all(|c| c == "true" || c == "false") {
                Column::Bool(cells.iter().map(|c| c == "true").collect())
            } else {
                let mut vals = Vec::with_capacity(cells.len());
                for c in &cells {
                    let v: f64 = c.parse().map_err(|_| TraceError::BadValue {
                        column: name.clone(),
                        message: format!("expected number or true/false, found {c:?}"),
                    })?;
                    vals.push(v);
                }
                Column::Num(vals)
            };
            columns.insert(name.clone(), col);
        }
        if columns.is_empty() {
            // A trace with only a time column still has a sample count.
            columns.insert("t".into(), Column::Num(times.clone()));
        }
        Trace::new(t0, dt, columns)
    }

    /// Content digest of the CSV form.
    pub fn digest(&self) -> String {
        digest::sha256_hex(self.to_csv().as_bytes())
    }
}
