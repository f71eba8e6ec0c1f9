use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::fl::PeriodRecord;
use crate::stealth::{pca_2d, Point, Reduced2D};

/// Who uploaded a traced model: a client, or the server's shadow model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TraceKey {
    Server,
    Client(usize),
}

impl fmt::Display for TraceKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TraceKey::Server => f.write_str("server"),
            TraceKey::Client(id) => write!(f, "{id}"),
        }
    }
}

impl FromStr for TraceKey {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s == "server" {
            Ok(TraceKey::Server)
        } else {
            s.parse().map(TraceKey::Client).map_err(|_| format!("bad client `{s}`"))
        }
    }
}

/// Per-period, per-client 2-D points in round order, `None` for rounds the
/// client was not selected.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelTraceStore {
    period_len: usize,
    entries: BTreeMap<(usize, TraceKey), BTreeMap<usize, Option<Point>>>,
}

impl ModelTraceStore {
    pub fn new(period_len: usize) -> Result<Self> {
        if period_len == 0 {
            return Err(Error::config("mcd.period", "must be at least 1"));
        }
        Ok(Self {
            period_len,
            entries: BTreeMap::new(),
        })
    }

    pub fn period_len(&self) -> usize {
        self.period_len
    }

    pub fn period_of(&self, round: usize) -> usize {
        round / self.period_len
    }

    pub fn record(&mut self, round: usize, key: TraceKey, point: Option<Point>) -> Result<()> {
        let f = self.period_of(round);
        let list = self.entries.entry((f, key)).or_default();
        if list.insert(round, point).is_some() {
            return Err(Error::precondition(format!("round {round} of {key} recorded twice")));
        }
        Ok(())
    }

    pub fn trace(&self, period: usize, key: TraceKey) -> Option<Vec<Option<Point>>> {
        self.entries.get(&(period, key)).map(|m| m.values().copied().collect())
    }

    pub fn periods(&self) -> Vec<usize> {
        let mut p: Vec<usize> = self.entries.keys().map(|(f, _)| *f).collect();
        p.dedup();
        p
    }

    pub fn clients(&self, period: usize) -> Vec<usize> {
        self.entries
            .keys()
            .filter_map(|(f, k)| match k {
                TraceKey::Client(id) if *f == period => Some(*id),
                _ => None,
            })
            .collect()
    }

    pub fn remove_client(&mut self, period: usize, id: usize) {
        self.entries.remove(&(period, TraceKey::Client(id)));
    }

    /// CSV with columns `period,client,round,x,y,null_flag`; NULL rows leave
    /// `x` and `y` empty and the server's trace uses client `server`.
    pub fn write_csv(&self, out: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["period", "client", "round", "x", "y", "null_flag"])?;
        for ((f, key), rounds) in &self.entries {
            for (round, p) in rounds {
                let (x, y, null) = match p {
                    Some(p) => (format!("{:.17e}", p[0]), format!("{:.17e}", p[1]), "0"),
                    None => (String::new(), String::new(), "1"),
                };
                w.write_record([f.to_string(), key.to_string(), round.to_string(), x, y, null.to_string()])?;
            }
        }
        w.flush().map_err(|e| Error::io("trace csv", e))?;
        Ok(())
    }

    pub fn read_csv(input: impl Read, period_len: usize) -> Result<Self> {
        let mut store = Self::new(period_len)?;
        let mut rdr = csv::Reader::from_reader(input);
        let header = rdr.headers()?.clone();
        if header.iter().collect::<Vec<_>>() != ["period", "client", "round", "x", "y", "null_flag"] {
            return Err(Error::Trace {
                line: 1,
                message: "expected header period,client,round,x,y,null_flag".into(),
            });
        }
        for (i, rec) in rdr.records().enumerate() {
            let line = i + 2;
            let bad = |message: String| Error::Trace { line, message };
            let rec = rec?;
            if rec.len() != 6 {
                return Err(bad(format!("expected 6 fields, found {}", rec.len())));
            }
            let num = |j: usize, name: &str| -> Result<usize> {
                rec[j].parse().map_err(|_| bad(format!("bad {name} `{}`", &rec[j])))
            };
            let period = num(0, "period")?;
            let key: TraceKey = rec[1].parse().map_err(bad)?;
            let round = num(2, "round")?;
            if period != store.period_of(round) {
                return Err(bad(format!(
                    "round {round} belongs to period {}, not {period}",
                    store.period_of(round)
                )));
            }
            let point = match &rec[5] {
                "1" => None,
                "0" => {
                    let coord = |j: usize| -> Result<f64> {
                        rec[j]
                            .parse::<f64>()
                            .ok()
                            .filter(|v| v.is_finite())
                            .ok_or_else(|| bad(format!("bad coordinate `{}`", &rec[j])))
                    };
                    Some([coord(3)?, coord(4)?])
                }
                other => return Err(bad(format!("null_flag must be 0 or 1, found `{other}`"))),
            };
            store.record(round, key, point).map_err(|e| bad(e.to_string()))?;
        }
        Ok(store)
    }
}

/// Joint PCA of every upload (and shadow model) of one period.
#[derive(Debug, Clone)]
pub struct PeriodReduction {
    pub reduced: Reduced2D,
    /// `(uploader, round)` of each PCA row.
    pub rows: Vec<(TraceKey, usize)>,
}

/// Fit the period's PCA basis on all its uploads and append the resulting
/// points (and NULLs for unselected clients) to `store`.
pub fn reduce_period(record: &PeriodRecord, num_clients: usize, store: &mut ModelTraceStore) -> Result<PeriodReduction> {
    let mut rows = Vec::new();
    let mut models = Vec::new();
    for r in &record.rounds {
        for (id, m) in &r.uploads {
            rows.push((TraceKey::Client(*id), r.round));
            models.push(m.values());
        }
        if let Some(s) = &r.shadow {
            rows.push((TraceKey::Server, r.round));
            models.push(s.values());
        }
    }
    let d = models.first().map_or(0, |m| m.len());
    let mut x = Array2::zeros((models.len(), d));
    for (mut row, m) in x.rows_mut().into_iter().zip(&models) {
        row.assign(&ndarray::ArrayView1::from(*m));
    }
    let reduced = pca_2d(x.view())?;
    let mut point_of = BTreeMap::new();
    for (key, p) in rows.iter().zip(&reduced.points) {
        point_of.insert(*key, *p);
    }
    for r in &record.rounds {
        for id in 0..num_clients {
            let key = TraceKey::Client(id);
            store.record(r.round, key, point_of.get(&(key, r.round)).copied())?;
        }
        if r.shadow.is_some() {
            store.record(r.round, TraceKey::Server, point_of.get(&(TraceKey::Server, r.round)).copied())?;
        }
    }
    Ok(PeriodReduction { reduced, rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn periods_follow_rounds() {
        let mut s = ModelTraceStore::new(3).unwrap();
        s.record(0, TraceKey::Client(1), Some([1.0, 2.0])).unwrap();
        s.record(2, TraceKey::Client(1), None).unwrap();
        s.record(3, TraceKey::Client(1), Some([0.0, 0.0])).unwrap();
        s.record(4, TraceKey::Server, Some([5.0, 5.0])).unwrap();
        assert_eq!(s.trace(0, TraceKey::Client(1)).unwrap(), vec![Some([1.0, 2.0]), None]);
        assert_eq!(s.periods(), vec![0, 1]);
        assert_eq!(s.clients(1), vec![1]);
        assert!(s.record(4, TraceKey::Server, None).is_err());
    }

    #[test]
    fn csv_round_trip_and_errors() {
        let mut s = ModelTraceStore::new(2).unwrap();
        s.record(0, TraceKey::Server, Some([0.1, -0.3])).unwrap();
        s.record(1, TraceKey::Client(4), None).unwrap();
        s.record(2, TraceKey::Client(4), Some([1.0 / 3.0, 2.0])).unwrap();
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.contains("0,server,0,"));
        assert!(text.contains("0,4,1,,,1"));
        assert_eq!(ModelTraceStore::read_csv(&buf[..], 2).unwrap(), s);
        let wrong_period = "period,client,round,x,y,null_flag\n1,3,0,0.0,0.0,0\n";
        match ModelTraceStore::read_csv(wrong_period.as_bytes(), 2) {
            Err(Error::Trace { line: 2, .. }) => {}
            other => panic!("{other:?}"),
        }
        let bad_flag = "period,client,round,x,y,null_flag\n0,3,0,0.0,0.0,2\n";
        assert!(ModelTraceStore::read_csv(bad_flag.as_bytes(), 2).unwrap_err().is_config());
    }
}
