//! Records CSV: `iter, l2_rel_err, interior_loss, boundary_loss, n_points,
//! peak_mem_bytes, wall_s`, with `NA` for an unavailable memory figure.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use super::{RecordFlags, TrainRecord};
use crate::error::{Error, Result};

pub const RECORD_COLUMNS: [&str; 7] =
    ["iter", "l2_rel_err", "interior_loss", "boundary_loss", "n_points", "peak_mem_bytes", "wall_s"];

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::InvalidArgument(format!("records csv: {other:?}")),
    }
}

fn row(r: &TrainRecord) -> [String; 7] {
    [
        r.iter.to_string(),
        format!("{:e}", r.l2_rel_err),
        format!("{:e}", r.interior_loss),
        format!("{:e}", r.boundary_loss),
        r.n_points.to_string(),
        r.peak_mem_bytes.map_or_else(|| "NA".to_string(), |b| b.to_string()),
        format!("{:.6}", r.wall_s),
    ]
}

/// Append-only writer; every row is flushed so a crashed run keeps its history.
pub struct RecordWriter {
    inner: csv::Writer<BufWriter<File>>,
}

impl RecordWriter {
    pub fn create(path: &Path) -> Result<Self> {
        let mut inner = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
        inner.write_record(RECORD_COLUMNS).map_err(csv_err)?;
        inner.flush()?;
        Ok(Self { inner })
    }

    pub fn append(&mut self, record: &TrainRecord) -> Result<()> {
        self.inner.write_record(row(record)).map_err(csv_err)?;
        self.inner.flush()?;
        Ok(())
    }
}

pub fn write_records_csv(path: &Path, records: &[TrainRecord]) -> Result<()> {
    let mut w = RecordWriter::create(path)?;
    records.iter().try_for_each(|r| w.append(r))
}

/// Reads a records CSV back; flags are not stored and come back empty.
pub fn read_records_csv(path: &Path) -> Result<Vec<TrainRecord>> {
    let mut reader = csv::Reader::from_path(path).map_err(csv_err)?;
    let bad = |what: &str, line: usize| Error::Corrupt { path: path.display().to_string(), reason: format!("{what} on line {line}") };
    let header: Vec<String> = reader.headers().map_err(csv_err)?.iter().map(str::to_string).collect();
    if header != RECORD_COLUMNS {
        return Err(bad("unexpected header", 1));
    }
    let mut out = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let line = i + 2;
        let f = |k: usize| rec.get(k).and_then(|s| s.parse::<f64>().ok()).ok_or_else(|| bad(RECORD_COLUMNS[k], line));
        let u = |k: usize| rec.get(k).and_then(|s| s.parse::<usize>().ok()).ok_or_else(|| bad(RECORD_COLUMNS[k], line));
        let mem = match rec.get(5) {
            Some("NA") => None,
            Some(s) => Some(s.parse::<u64>().map_err(|_| bad("peak_mem_bytes", line))?),
            None => return Err(bad("peak_mem_bytes", line)),
        };
        out.push(TrainRecord {
            iter: u(0)?,
            l2_rel_err: f(1)?,
            interior_loss: f(2)?,
            boundary_loss: f(3)?,
            n_points: u(4)?,
            peak_mem_bytes: mem,
            wall_s: f(6)?,
            flags: RecordFlags::default(),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_with_na() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("records.csv");
        let recs = vec![
            TrainRecord {
                iter: 0,
                l2_rel_err: 0.123456789012345,
                interior_loss: 1e-7,
                boundary_loss: 3.5e-9,
                n_points: 2000,
                peak_mem_bytes: None,
                wall_s: 1.25,
                flags: RecordFlags::default(),
            },
            TrainRecord {
                iter: 1,
                l2_rel_err: 0.01,
                interior_loss: 2e-8,
                boundary_loss: 0.0,
                n_points: 2000,
                peak_mem_bytes: Some(123456),
                wall_s: 2.5,
                flags: RecordFlags::default(),
            },
        ];
        write_records_csv(&path, &recs).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("iter,l2_rel_err,interior_loss,boundary_loss,n_points,peak_mem_bytes,wall_s\n"));
        assert!(text.lines().nth(1).unwrap().contains(",NA,"));
        assert_eq!(read_records_csv(&path).unwrap(), recs);
    }
}
