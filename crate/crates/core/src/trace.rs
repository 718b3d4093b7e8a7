//! Time-indexed closed-loop records and their CSV form.
//!
//! Column order: `t, x1..n, xhat1..n, e1..n, ebar1..n, xd1..n, u_raw, u_sat,
//! delta_u, F_L, o1..n, Q1..n, psi1..n, theta1..n, fstar1..n, fbar1..n,
//! dstar1..n, gamma1..n`. Values are written with 17 significant digits.

use std::io::{Read, Write};
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("unexpected header: {0}")]
    Header(String),
    #[error("row {row}: {msg}")]
    Row { row: usize, msg: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub t: f64,
    pub x: Vec<f64>,
    pub x_hat: Vec<f64>,
    pub e: Vec<f64>,
    pub e_bar: Vec<f64>,
    pub xd: Vec<f64>,
    pub u_raw: f64,
    pub u_sat: f64,
    pub delta_u: f64,
    pub load: f64,
    pub o: Vec<f64>,
    pub q: Vec<f64>,
    pub psi: Vec<f64>,
    pub theta: Vec<f64>,
    pub f_star: Vec<f64>,
    pub f_bar: Vec<f64>,
    pub d_star: Vec<f64>,
    pub gamma: Vec<f64>,
    /// Derivative-filter memory in effect for this sample. Not serialized.
    pub xd_filter: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trace {
    pub n: usize,
    pub records: Vec<Record>,
}

const VECTOR_GROUPS_HEAD: [&str; 5] = ["x", "xhat", "e", "ebar", "xd"];
const SCALARS: [&str; 4] = ["u_raw", "u_sat", "delta_u", "F_L"];
const VECTOR_GROUPS_TAIL: [&str; 8] = ["o", "Q", "psi", "theta", "fstar", "fbar", "dstar", "gamma"];

pub fn header(n: usize) -> Vec<String> {
    let mut h = vec!["t".to_string()];
    let group = |h: &mut Vec<String>, name: &str| h.extend((1..=n).map(|i| format!("{name}{i}")));
    for g in VECTOR_GROUPS_HEAD {
        group(&mut h, g);
    }
    h.extend(SCALARS.iter().map(|s| s.to_string()));
    for g in VECTOR_GROUPS_TAIL {
        group(&mut h, g);
    }
    h
}

/// 17 significant digits, which round-trips every finite `f64`.
pub fn format_value(v: f64) -> String {
    format!("{v:.16e}")
}

impl Record {
    fn values(&self) -> Vec<f64> {
        let mut v = vec![self.t];
        for g in [&self.x, &self.x_hat, &self.e, &self.e_bar, &self.xd] {
            v.extend_from_slice(g);
        }
        v.extend([self.u_raw, self.u_sat, self.delta_u, self.load]);
        for g in [
            &self.o, &self.q, &self.psi, &self.theta, &self.f_star, &self.f_bar, &self.d_star, &self.gamma,
        ] {
            v.extend_from_slice(g);
        }
        v
    }

    fn from_values(n: usize, v: &[f64]) -> Self {
        let mut at = 1;
        let mut take = |k: usize| {
            let s = v[at..at + k].to_vec();
            at += k;
            s
        };
        let (x, x_hat, e, e_bar, xd) = (take(n), take(n), take(n), take(n), take(n));
        let s = take(4);
        let (o, q, psi, theta) = (take(n), take(n), take(n), take(n));
        let (f_star, f_bar, d_star, gamma) = (take(n), take(n), take(n), take(n));
        Record {
            t: v[0],
            x,
            x_hat,
            e,
            e_bar,
            xd,
            u_raw: s[0],
            u_sat: s[1],
            delta_u: s[2],
            load: s[3],
            o,
            q,
            psi,
            theta,
            f_star,
            f_bar,
            d_star,
            gamma,
            xd_filter: Vec::new(),
        }
    }
}

impl Trace {
    pub fn new(n: usize) -> Self {
        Self { n, records: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn times(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.t).collect()
    }

    /// Values of one CSV column by header name.
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let idx = header(self.n).iter().position(|h| h == name)?;
        Some(self.records.iter().map(|r| r.values()[idx]).collect())
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), TraceError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(header(self.n))?;
        for r in &self.records {
            w.write_record(r.values().into_iter().map(format_value))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("ascii output")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), TraceError> {
        let file = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(file))
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self, TraceError> {
        let mut r = csv::Reader::from_reader(reader);
        let head: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
        // 1 + 13 n + 4 columns
        let n = head
            .len()
            .checked_sub(5)
            .filter(|k| k % 13 == 0 && *k > 0)
            .map(|k| k / 13)
            .ok_or_else(|| TraceError::Header(format!("{} columns", head.len())))?;
        if head != header(n) {
            return Err(TraceError::Header(head.join(",")));
        }
        let mut trace = Trace::new(n);
        for (row, rec) in r.records().enumerate() {
            let rec = rec?;
            let values = rec
                .iter()
                .map(|s| s.trim().parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| TraceError::Row { row, msg: e.to_string() })?;
            if values.len() != head.len() {
                return Err(TraceError::Row { row, msg: format!("{} fields", values.len()) });
            }
            trace.records.push(Record::from_values(n, &values));
        }
        Ok(trace)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, TraceError> {
        Self::read_csv(std::fs::File::open(path)?)
    }
}
