//! Exogenous PV / wind / load series and their CSV form.

use std::io::{Read, Write};
use std::path::Path;

use chrono::{Duration, NaiveDateTime, Timelike};

use super::GridError;

pub const TIMESTAMP_FORMAT: &str = "%Y-%m-%dT%H:%M:%S";
pub const CSV_HEADER: [&str; 4] = ["timestamp", "pv_kW", "wt_kW", "load_kW"];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRecord {
    pub timestamp: NaiveDateTime,
    pub pv: f64,
    pub wt: f64,
    pub load: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExogenousTrace {
    pub records: Vec<TraceRecord>,
    /// Step length in hours.
    pub dt: f64,
}

impl ExogenousTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn start(&self) -> Option<NaiveDateTime> {
        self.records.first().map(|r| r.timestamp)
    }

    /// Clock hour (fractional) of record `i`.
    pub fn hour_of(&self, i: usize) -> f64 {
        let ts = self.records[i].timestamp;
        ts.hour() as f64 + ts.minute() as f64 / 60.0 + ts.second() as f64 / 3600.0
    }

    /// Index of the first record of every whole episode of `steps` records
    /// that starts at midnight.
    pub fn episode_starts(&self, steps: usize) -> Vec<usize> {
        let mut out = Vec::new();
        let mut i = 0;
        while i + steps <= self.len() {
            if self.hour_of(i) == 0.0 {
                out.push(i);
                i += steps;
            } else {
                i += 1;
            }
        }
        out
    }

    /// Sub-trace with records `[from, to)`.
    pub fn slice(&self, from: usize, to: usize) -> ExogenousTrace {
        ExogenousTrace {
            records: self.records[from..to].to_vec(),
            dt: self.dt,
        }
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), GridError> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(CSV_HEADER).map_err(io_err)?;
        for r in &self.records {
            wr.write_record([
                r.timestamp.format(TIMESTAMP_FORMAT).to_string(),
                r.pv.to_string(),
                r.wt.to_string(),
                r.load.to_string(),
            ])
            .map_err(io_err)?;
        }
        wr.flush().map_err(|e| GridError::Io(e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<(), GridError> {
        let f = std::fs::File::create(path)
            .map_err(|e| GridError::Io(format!("{}: {e}", path.display())))?;
        self.write_csv(std::io::BufWriter::new(f))
    }
}

fn io_err(e: csv::Error) -> GridError {
    GridError::Io(e.to_string())
}

/// Reads and validates a trace file.
pub fn load_traces(path: &Path, dt: f64) -> Result<ExogenousTrace, GridError> {
    let f =
        std::fs::File::open(path).map_err(|e| GridError::Io(format!("{}: {e}", path.display())))?;
    read_traces(f, dt)
}

pub fn read_traces<R: Read>(input: R, dt: f64) -> Result<ExogenousTrace, GridError> {
    if !(dt > 0.0) {
        return Err(GridError::Config("dt must be positive".into()));
    }
    let step = Duration::milliseconds((dt * 3.6e6).round() as i64);
    let mut rd = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(input);
    let ingest = |line: usize, msg: String| GridError::Ingestion { line, msg };
    let headers = rd.headers().map_err(|e| ingest(1, e.to_string()))?.clone();
    if headers.len() < 4 {
        return Err(ingest(
            1,
            format!("expected columns {CSV_HEADER:?}, found {headers:?}"),
        ));
    }
    let mut records: Vec<TraceRecord> = Vec::new();
    for (k, row) in rd.records().enumerate() {
        let line = k + 2;
        let row = row.map_err(|e| ingest(line, e.to_string()))?;
        if row.len() < 4 {
            return Err(ingest(
                line,
                format!("expected 4 fields, found {}", row.len()),
            ));
        }
        let timestamp = NaiveDateTime::parse_from_str(&row[0], TIMESTAMP_FORMAT)
            .map_err(|e| ingest(line, format!("bad timestamp {:?}: {e}", &row[0])))?;
        let mut vals = [0.0; 3];
        for (i, v) in vals.iter_mut().enumerate() {
            let raw = &row[i + 1];
            *v = raw.parse::<f64>().map_err(|e| {
                ingest(
                    line,
                    format!("bad number {raw:?} in column {}: {e}", CSV_HEADER[i + 1]),
                )
            })?;
            if !v.is_finite() {
                return Err(ingest(
                    line,
                    format!("non-finite value in column {}", CSV_HEADER[i + 1]),
                ));
            }
            if *v < 0.0 {
                return Err(ingest(
                    line,
                    format!("negative power in column {}", CSV_HEADER[i + 1]),
                ));
            }
        }
        if let Some(prev) = records.last() {
            if timestamp <= prev.timestamp {
                return Err(ingest(line, "non-monotone timestamps".into()));
            }
            if timestamp - prev.timestamp != step {
                return Err(ingest(
                    line,
                    format!("timestamp gap: expected a step of {dt} h"),
                ));
            }
        }
        records.push(TraceRecord {
            timestamp,
            pv: vals[0],
            wt: vals[1],
            load: vals[2],
        });
    }
    Ok(ExogenousTrace { records, dt })
}
