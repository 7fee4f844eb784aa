//! On-disk dataset format: one JSON manifest plus one CSV score matrix per
//! clip (row = frame, column = channel). Optional companion CSVs carry
//! spatial cells and dense frame descriptors.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Dataset, Grid, Matrix, VideoRecord};
use crate::error::{Error, Result};

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    version: u32,
    num_activities: usize,
    num_channels: usize,
    fps: f64,
    records: Vec<ManifestRecord>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestRecord {
    id: String,
    label: usize,
    scores: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    boxes: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    dense: Option<String>,
}

const MANIFEST_VERSION: u32 = 1;

/// Loads and validates a dataset from a manifest path. Any invariant
/// violation is rejected (not clamped) with an error naming the record id.
pub fn load_dataset(manifest_path: impl AsRef<Path>) -> Result<Dataset> {
    let manifest_path = manifest_path.as_ref();
    let text =
        fs::read_to_string(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
    let manifest: Manifest =
        serde_json::from_str(&text).map_err(|e| Error::parse(manifest_path, e.to_string()))?;
    if manifest.version != MANIFEST_VERSION {
        return Err(Error::parse(
            manifest_path,
            format!("unsupported manifest version {}", manifest.version),
        ));
    }
    let base = manifest_path.parent().unwrap_or_else(|| Path::new("."));

    let mut records = Vec::with_capacity(manifest.records.len());
    for mr in &manifest.records {
        let scores = read_f64_csv(&base.join(&mr.scores))?;
        let boxes = mr
            .boxes
            .as_ref()
            .map(|p| read_u8_csv(&base.join(p)))
            .transpose()?;
        let dense = mr
            .dense
            .as_ref()
            .map(|p| read_f64_csv(&base.join(p)))
            .transpose()?;
        records.push(VideoRecord {
            id: mr.id.clone(),
            label: mr.label,
            fps: manifest.fps,
            scores,
            boxes,
            dense,
        });
    }

    let dataset = Dataset {
        num_activities: manifest.num_activities,
        num_channels: manifest.num_channels,
        fps: manifest.fps,
        records,
    };
    dataset.validate()?;
    Ok(dataset)
}

/// Writes a dataset to `dir` as `manifest.json` plus per-clip CSVs and
/// returns the manifest path. Output bytes are a pure function of the
/// dataset, so identical datasets serialize identically.
pub fn save_dataset(dataset: &Dataset, dir: impl AsRef<Path>) -> Result<PathBuf> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    dataset.validate()?;

    let mut records = Vec::with_capacity(dataset.records.len());
    for rec in &dataset.records {
        let scores_name = format!("{}.csv", rec.id);
        write_f64_csv(&dir.join(&scores_name), &rec.scores)?;
        let boxes_name = rec.boxes.as_ref().map(|b| {
            let name = format!("{}.cells.csv", rec.id);
            (name, b)
        });
        if let Some((name, b)) = &boxes_name {
            write_u8_csv(&dir.join(name), b)?;
        }
        let dense_name = rec.dense.as_ref().map(|d| {
            let name = format!("{}.dense.csv", rec.id);
            (name, d)
        });
        if let Some((name, d)) = &dense_name {
            write_f64_csv(&dir.join(name), d)?;
        }
        records.push(ManifestRecord {
            id: rec.id.clone(),
            label: rec.label,
            scores: scores_name,
            boxes: boxes_name.map(|(n, _)| n),
            dense: dense_name.map(|(n, _)| n),
        });
    }

    let manifest = Manifest {
        version: MANIFEST_VERSION,
        num_activities: dataset.num_activities,
        num_channels: dataset.num_channels,
        fps: dataset.fps,
        records,
    };
    let path = dir.join("manifest.json");
    write_json(&path, &manifest)?;
    Ok(path)
}

/// Serializes a value as pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::parse(path, e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::parse(path, e.to_string()))
}

fn read_f64_csv(path: &Path) -> Result<Matrix> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(|e| Error::parse(path, e.to_string()))?;
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::parse(path, e.to_string()))?;
        let row: std::result::Result<Vec<f64>, _> =
            record.iter().map(str::trim).map(str::parse).collect();
        rows.push(row.map_err(|e| Error::parse(path, format!("bad float: {e}")))?);
    }
    Matrix::from_rows(rows)
}

fn read_u8_csv(path: &Path) -> Result<Grid<u8>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(|e| Error::parse(path, e.to_string()))?;
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::parse(path, e.to_string()))?;
        let row: std::result::Result<Vec<u8>, _> =
            record.iter().map(str::trim).map(str::parse).collect();
        rows.push(row.map_err(|e| Error::parse(path, format!("bad cell index: {e}")))?);
    }
    Ok(Grid::from_rows(rows)?)
}

fn write_f64_csv(path: &Path, m: &Matrix) -> Result<()> {
    let mut writer = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(|e| Error::parse(path, e.to_string()))?;
    for r in 0..m.rows() {
        let row: Vec<String> = m.row(r).iter().map(|v| format!("{v}")).collect();
        writer
            .write_record(&row)
            .map_err(|e| Error::parse(path, e.to_string()))?;
    }
    writer.flush().map_err(|e| Error::io(path, e))
}

fn write_u8_csv(path: &Path, m: &Grid<u8>) -> Result<()> {
    let mut writer = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(|e| Error::parse(path, e.to_string()))?;
    for r in 0..m.rows() {
        let row: Vec<String> = m.row(r).iter().map(|v| format!("{v}")).collect();
        writer
            .write_record(&row)
            .map_err(|e| Error::parse(path, e.to_string()))?;
    }
    writer.flush().map_err(|e| Error::io(path, e))
}
