//! CSV datasets and output tables.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use sha2::{Digest, Sha256};

use crate::ensemble::{Ensemble, QuantileSummary};
use crate::error::{Error, Result};

/// A `time x series` panel with an integer time column.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub times: Vec<i64>,
    pub names: Vec<String>,
    pub values: DMatrix<f64>,
    index: HashMap<String, usize>,
}

impl Dataset {
    pub fn new(times: Vec<i64>, names: Vec<String>, values: DMatrix<f64>) -> Result<Self> {
        if values.shape() != (times.len(), names.len()) {
            return Err(Error::dim(format!(
                "values are {}x{}, expected {}x{}",
                values.nrows(),
                values.ncols(),
                times.len(),
                names.len()
            )));
        }
        if let Some(w) = times.windows(2).find(|w| w[1] <= w[0]) {
            return Err(Error::input(format!("time is not strictly increasing ({} then {})", w[0], w[1])));
        }
        let mut index = HashMap::new();
        for (j, n) in names.iter().enumerate() {
            if index.insert(n.clone(), j).is_some() {
                return Err(Error::input(format!("duplicate series name {n:?}")));
            }
        }
        Ok(Self { times, names, values, index })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.index.get(name).copied().ok_or_else(|| Error::input(format!("unknown series {name:?}")))
    }

    /// Columns in the given order.
    pub fn select(&self, names: &[String]) -> Result<DMatrix<f64>> {
        let idx = names.iter().map(|n| self.index_of(n)).collect::<Result<Vec<_>>>()?;
        Ok(self.values.select_columns(idx.iter()))
    }

    /// 1-based row of a time value.
    pub fn row_of_time(&self, time: i64) -> Result<usize> {
        self.times
            .binary_search(&time)
            .map(|i| i + 1)
            .map_err(|_| Error::input(format!("time {time} not present in the dataset")))
    }
}

pub fn load_dataset(path: &Path, log: bool) -> Result<Dataset> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_dataset(file, path, log)
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { path: path.to_path_buf(), line, msg: msg.into() }
}

/// Parse a `time,<series>...` CSV. `log` replaces each value by its natural
/// logarithm.
pub fn parse_dataset(reader: impl Read, path: &Path, log: bool) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(reader);
    let header = rdr.headers().map_err(|e| parse_err(path, 1, e.to_string()))?.clone();
    if header.get(0).map(str::trim) != Some("time") {
        return Err(parse_err(path, 1, "first column must be named \"time\""));
    }
    let names: Vec<String> = header.iter().skip(1).map(|s| s.trim().to_string()).collect();
    if names.is_empty() {
        return Err(parse_err(path, 1, "no series columns"));
    }
    if let Some(n) = names.iter().find(|n| n.is_empty()) {
        return Err(parse_err(path, 1, format!("empty series name {n:?}")));
    }
    let mut times = Vec::new();
    let mut flat = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
            parse_err(path, line, e.to_string())
        })?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        if rec.len() != names.len() + 1 {
            return Err(parse_err(path, line, format!("expected {} fields, found {}", names.len() + 1, rec.len())));
        }
        let time: i64 = rec[0]
            .trim()
            .parse()
            .map_err(|_| parse_err(path, line, format!("time {:?} is not an integer", &rec[0])))?;
        if let Some(&prev) = times.last() {
            if time <= prev {
                return Err(parse_err(path, line, format!("time {time} does not increase (previous {prev})")));
            }
        }
        times.push(time);
        for (j, cell) in rec.iter().skip(1).enumerate() {
            let cell = cell.trim();
            if cell.is_empty() {
                return Err(parse_err(path, line, format!("missing value for series {:?}", names[j])));
            }
            let v: f64 = cell
                .parse()
                .map_err(|_| parse_err(path, line, format!("{cell:?} is not a number (series {:?})", names[j])))?;
            if !v.is_finite() {
                return Err(parse_err(path, line, format!("non-finite value for series {:?}", names[j])));
            }
            let v = if log {
                if v <= 0.0 {
                    return Err(parse_err(path, line, format!("cannot log non-positive value {v} (series {:?})", names[j])));
                }
                v.ln()
            } else {
                v
            };
            flat.push(v);
        }
    }
    if times.is_empty() {
        return Err(parse_err(path, 2, "no data rows"));
    }
    let values = DMatrix::from_row_slice(times.len(), names.len(), &flat);
    Dataset::new(times, names, values).map_err(|e| parse_err(path, 1, e.to_string()))
}

/// Full-precision float formatting (17 significant digits).
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub(crate) fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    Ok(csv::WriterBuilder::new().from_writer(create(path)?))
}

fn csv_io(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |e| Error::io(path, std::io::Error::other(e))
}

/// Write a `time,<series>...` table.
pub fn write_dataset(path: &Path, times: &[i64], names: &[String], values: &DMatrix<f64>) -> Result<()> {
    if values.shape() != (times.len(), names.len()) {
        return Err(Error::dim("table shape does not match its labels"));
    }
    let mut w = csv_writer(path)?;
    let on_err = csv_io(path);
    let mut header = vec!["time".to_string()];
    header.extend(names.iter().cloned());
    w.write_record(&header).map_err(&on_err)?;
    for (i, t) in times.iter().enumerate() {
        let mut row = vec![t.to_string()];
        row.extend(values.row(i).iter().map(|&v| fmt_f64(v)));
        w.write_record(&row).map_err(&on_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Column label for a probability, e.g. `0.05 -> p05`, `0.975 -> p97.5`.
pub fn prob_label(p: f64) -> String {
    let pct = p * 100.0;
    if (pct - pct.round()).abs() < 1e-9 {
        format!("p{:02}", pct.round() as i64)
    } else {
        format!("p{pct}")
    }
}

/// Rows of a long-format quantile table.
#[derive(Debug, Default)]
pub struct QuantileTable {
    probs: Vec<f64>,
    rows: Vec<(String, String, Vec<f64>)>,
}

impl QuantileTable {
    pub fn new(probs: &[f64]) -> Self {
        Self { probs: probs.to_vec(), rows: Vec::new() }
    }

    /// Append one row per series of `summary`, labelled with `key`.
    pub fn push(&mut self, key: impl ToString, names: &[String], summary: &QuantileSummary) -> Result<()> {
        if summary.probs != self.probs || summary.values.len() != names.len() {
            return Err(Error::dim("summary does not match the table layout"));
        }
        let key = key.to_string();
        for (name, vals) in names.iter().zip(&summary.values) {
            self.rows.push((key.clone(), name.clone(), vals.clone()));
        }
        Ok(())
    }

    pub fn push_ensemble(&mut self, key: impl ToString, names: &[String], ens: &Ensemble) -> Result<()> {
        let s = crate::ensemble::summarize(ens, &self.probs)?;
        self.push(key, names, &s)
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn write(&self, path: &Path, key_column: &str) -> Result<()> {
        let mut w = csv_writer(path)?;
        let on_err = csv_io(path);
        let mut header = vec![key_column.to_string(), "series".to_string()];
        header.extend(self.probs.iter().map(|&p| prob_label(p)));
        w.write_record(&header).map_err(&on_err)?;
        for (key, name, vals) in &self.rows {
            let mut row = vec![key.clone(), name.clone()];
            row.extend(vals.iter().map(|&v| fmt_f64(v)));
            w.write_record(&row).map_err(&on_err)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Write any string-cell table with a header.
pub fn write_rows(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv_writer(path)?;
    let on_err = csv_io(path);
    w.write_record(header).map_err(&on_err)?;
    for r in rows {
        w.write_record(r).map_err(&on_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| Error::io(path, std::io::Error::other(e)))?;
    w.write_all(b"\n").and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}

pub fn matrix_json(m: &DMatrix<f64>) -> serde_json::Value {
    serde_json::Value::from(m.row_iter().map(|r| r.iter().copied().collect::<Vec<f64>>()).collect::<Vec<_>>())
}

pub fn sha256_hex(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

/// A `unit,<t1>,<t2>,...` panel of units by time.
#[derive(Debug, Clone, PartialEq)]
pub struct Panel {
    pub units: Vec<String>,
    pub times: Vec<String>,
    pub values: DMatrix<f64>,
}

pub fn load_panel(path: &Path) -> Result<Panel> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(file);
    let header = rdr.headers().map_err(|e| parse_err(path, 1, e.to_string()))?.clone();
    if header.len() < 2 {
        return Err(parse_err(path, 1, "panel needs a unit column and at least one time column"));
    }
    let times: Vec<String> = header.iter().skip(1).map(|s| s.trim().to_string()).collect();
    let mut units = Vec::new();
    let mut flat = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| parse_err(path, e.position().map(|p| p.line() as usize).unwrap_or(0), e.to_string()))?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        if rec.len() != header.len() {
            return Err(parse_err(path, line, format!("expected {} fields, found {}", header.len(), rec.len())));
        }
        units.push(rec[0].trim().to_string());
        for (j, cell) in rec.iter().skip(1).enumerate() {
            let v: f64 = cell
                .trim()
                .parse()
                .map_err(|_| parse_err(path, line, format!("{:?} is not a number (column {:?})", cell, times[j])))?;
            if !v.is_finite() {
                return Err(parse_err(path, line, "non-finite value"));
            }
            flat.push(v);
        }
    }
    if units.is_empty() {
        return Err(parse_err(path, 2, "no units"));
    }
    let values = DMatrix::from_row_slice(units.len(), times.len(), &flat);
    Ok(Panel { units, times, values })
}

pub fn output_path(dir: &Path, name: &str) -> PathBuf {
    dir.join(name)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str, log: bool) -> Result<Dataset> {
        parse_dataset(s.as_bytes(), Path::new("test.csv"), log)
    }

    #[test]
    fn well_formed() {
        let d = parse("time,a,b\n1,1.0,2.0\n2,3,4\n5,5,6\n", false).unwrap();
        assert_eq!(d.values.shape(), (3, 2));
        assert_eq!(d.times, vec![1, 2, 5]);
        assert_eq!(d.index_of("b").unwrap(), 1);
        assert_eq!(d.row_of_time(5).unwrap(), 3);
        assert!(d.row_of_time(3).is_err());
        assert_eq!(d.select(&["b".into(), "a".into()]).unwrap()[(2, 0)], 6.0);
        assert!(d.select(&["zz".into()]).is_err());
    }

    #[test]
    fn missing_cell_names_line() {
        match parse("time,a,b\n1,1.0,2.0\n2,,4\n", false) {
            Err(Error::Parse { line, msg, .. }) => {
                assert_eq!(line, 3);
                assert!(msg.contains("\"a\""), "{msg}");
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(parse("time,a\n1,1\n2\n", false), Err(Error::Parse { line: 3, .. })));
    }

    #[test]
    fn structural_errors() {
        assert!(matches!(parse("t,a\n1,1\n", false), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(parse("time,a,a\n1,1,2\n", false), Err(Error::Parse { .. })));
        assert!(matches!(parse("time,a\n2,1\n2,1\n", false), Err(Error::Parse { line: 3, .. })));
        assert!(matches!(parse("time,a\n1,x\n", false), Err(Error::Parse { line: 2, .. })));
        assert!(matches!(parse("time,a\n", false), Err(Error::Parse { .. })));
        assert!(matches!(parse("time,a\n1,-1\n", true), Err(Error::Parse { .. })));
    }

    #[test]
    fn log_round_trip() {
        let raw = parse("time,a,b\n1,1.5,20\n2,3.25,0.125\n", false).unwrap();
        let logged = parse("time,a,b\n1,1.5,20\n2,3.25,0.125\n", true).unwrap();
        for (r, l) in raw.values.iter().zip(logged.values.iter()) {
            assert!((l.exp() - r).abs() <= 1e-14 * r.abs());
        }
    }

    #[test]
    fn dataset_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        let values = DMatrix::from_row_slice(2, 2, &[0.1, 1.0 / 3.0, -2.5e-17, 1e300]);
        write_dataset(&path, &[3, 7], &["x".into(), "y".into()], &values).unwrap();
        let back = load_dataset(&path, false).unwrap();
        assert_eq!(back.values, values);
        assert_eq!(back.times, vec![3, 7]);
    }

    #[test]
    fn prob_labels() {
        assert_eq!(prob_label(0.05), "p05");
        assert_eq!(prob_label(0.5), "p50");
        assert_eq!(prob_label(0.975), "p97.5");
    }
}
