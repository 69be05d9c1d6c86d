//! `metrics.csv` reading and appending.

use std::collections::HashSet;
use std::fs::{self, OpenOptions};
use std::path::Path;

use crate::error::{Error, Result};
use crate::metrics::MetricRow;

pub const METRICS_HEADER: [&str; 8] = ["dataset", "architecture", "digest", "seed", "metric", "value", "sampler", "flags"];

fn csv_err(path: &Path, e: csv::Error) -> Error {
    Error::format(path, e.to_string())
}

/// Loads a metrics file, rejecting duplicate `(dataset, architecture,
/// digest, seed, metric)` keys.
pub fn read_metrics(path: &Path) -> Result<Vec<MetricRow>> {
    let text = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::Reader::from_reader(text.as_slice());
    let headers = reader.headers().map_err(|e| csv_err(path, e))?.clone();
    if headers.iter().collect::<Vec<_>>() != METRICS_HEADER {
        return Err(Error::format(path, format!("unexpected header `{}`", headers.iter().collect::<Vec<_>>().join(","))));
    }
    let mut seen = HashSet::new();
    let mut rows = Vec::new();
    for rec in reader.deserialize::<MetricRow>() {
        let row = rec.map_err(|e| csv_err(path, e))?;
        if !seen.insert(row.key()) {
            return Err(Error::format(path, format!("duplicate row for {:?}", row.key())));
        }
        rows.push(row);
    }
    Ok(rows)
}

/// Reads `path` if it exists, otherwise returns no rows.
pub fn read_metrics_if_present(path: &Path) -> Result<Vec<MetricRow>> {
    if path.exists() {
        read_metrics(path)
    } else {
        Ok(Vec::new())
    }
}

/// Appends rows, writing the header first when the file is new.
pub fn append_metrics(path: &Path, rows: &[MetricRow]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let fresh = !path.exists() || fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
    let existing = if fresh { Vec::new() } else { read_metrics(path)? };
    let mut keys: HashSet<_> = existing.iter().map(MetricRow::key).collect();
    for r in rows {
        if !keys.insert(r.key()) {
            return Err(Error::InvalidArgument(format!("{} already holds a row for {:?}", path.display(), r.key())));
        }
    }
    let file = OpenOptions::new().create(true).append(true).open(path).map_err(|e| Error::io(path, e))?;
    let mut writer = csv::WriterBuilder::new().has_headers(fresh).from_writer(file);
    for r in rows {
        writer.serialize(r).map_err(|e| csv_err(path, e))?;
    }
    if fresh && rows.is_empty() {
        writer.write_record(METRICS_HEADER).map_err(|e| csv_err(path, e))?;
    }
    writer.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(seed: u64, metric: &str, value: f64) -> MetricRow {
        MetricRow {
            dataset: "toy".into(),
            architecture: "dava".into(),
            digest: "abc".into(),
            seed,
            metric: metric.into(),
            value,
            sampler: "uniform_range".into(),
            flags: String::new(),
        }
    }

    #[test]
    fn append_then_read() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("metrics.csv");
        append_metrics(&path, &[row(0, "pipe", 0.25)]).unwrap();
        append_metrics(&path, &[row(1, "pipe", f64::NAN), row(1, "mig", 0.1)]).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("dataset,architecture,digest,seed,metric,value,sampler,flags\n"));
        assert_eq!(text.lines().count(), 4);
        let rows = read_metrics(&path).unwrap();
        assert_eq!(rows.len(), 3);
        assert!(rows[1].value.is_nan());
        assert!(append_metrics(&path, &[row(0, "pipe", 0.3)]).is_err());
    }

    #[test]
    fn duplicate_keys_are_rejected_on_load() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("metrics.csv");
        fs::write(
            &path,
            "dataset,architecture,digest,seed,metric,value,sampler,flags\nt,a,d,0,m,1,,\nt,a,d,0,m,2,,\n",
        )
        .unwrap();
        assert!(read_metrics(&path).is_err());
    }
}
