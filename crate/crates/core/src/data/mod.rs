//! Dataset model: per-clip score matrices, manifest i/o, synthetic stream
//! generation, and the untrimmed concatenation protocol.

pub mod io;
mod synthetic;
mod untrimmed;

pub use io::{load_dataset, save_dataset};
pub use synthetic::{gen_synthetic, SyntheticConfig};
pub use untrimmed::{concat_untrimmed, UntrimmedRecord};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense row-major matrix. Used for per-frame detection scores (`T x N`),
/// frame descriptors (`T x D`), and spatial-cell assignments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Copy + Default> Grid<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Grid {
            rows,
            cols,
            data: vec![T::default(); rows * cols],
        }
    }

    pub fn from_rows(rows: Vec<Vec<T>>) -> Result<Self> {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(nrows * ncols);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != ncols {
                return Err(Error::Dimension {
                    context: "matrix row",
                    expected: ncols,
                    got: rows[i].len(),
                });
            }
            data.extend_from_slice(row);
        }
        Ok(Grid {
            rows: nrows,
            cols: ncols,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: T) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn values(&self) -> &[T] {
        &self.data
    }

    /// Copies rows `[start, end)` into a new grid.
    pub fn slice_rows(&self, start: usize, end: usize) -> Self {
        Grid {
            rows: end - start,
            cols: self.cols,
            data: self.data[start * self.cols..end * self.cols].to_vec(),
        }
    }
}

pub type Matrix = Grid<f64>;

/// One trimmed video clip expressed as precomputed per-frame feature scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoRecord {
    pub id: String,
    /// Activity index in `[0, L)`.
    pub label: usize,
    /// Frames per second of the score stream (default 1).
    pub fps: f64,
    /// `T x N` detection probabilities in `[0, 1]`.
    pub scores: Matrix,
    /// Optional `T x N` spatial cell index per detection (2x2 grid, 0..4).
    pub boxes: Option<Grid<u8>>,
    /// Optional `T x D` per-frame dense descriptors (mean-pool mode).
    pub dense: Option<Matrix>,
}

impl VideoRecord {
    pub fn frames(&self) -> usize {
        self.scores.rows()
    }

    pub fn channels(&self) -> usize {
        self.scores.cols()
    }

    /// Checks the per-record invariants against the dataset header.
    pub fn validate(&self, num_activities: usize, num_channels: usize) -> Result<()> {
        if self.frames() == 0 {
            return Err(Error::data(&self.id, "clip has zero frames"));
        }
        if self.channels() != num_channels {
            return Err(Error::data(
                &self.id,
                format!(
                    "expected {} channels, found {}",
                    num_channels,
                    self.channels()
                ),
            ));
        }
        if self.label >= num_activities {
            return Err(Error::data(
                &self.id,
                format!(
                    "label {} out of range for {} activities",
                    self.label, num_activities
                ),
            ));
        }
        if self.fps <= 0.0 || !self.fps.is_finite() {
            return Err(Error::data(&self.id, format!("invalid fps {}", self.fps)));
        }
        for (i, &v) in self.scores.values().iter().enumerate() {
            if !(0.0..=1.0).contains(&v) {
                let (t, n) = (i / self.channels(), i % self.channels());
                return Err(Error::data(
                    &self.id,
                    format!("score {v} at frame {t}, channel {n} outside [0, 1]"),
                ));
            }
        }
        if let Some(boxes) = &self.boxes {
            if boxes.rows() != self.frames() || boxes.cols() != self.channels() {
                return Err(Error::data(&self.id, "boxes shape differs from scores"));
            }
            if let Some(&c) = boxes.values().iter().find(|&&c| c >= 4) {
                return Err(Error::data(&self.id, format!("spatial cell {c} >= 4")));
            }
        }
        if let Some(dense) = &self.dense {
            if dense.rows() != self.frames() {
                return Err(Error::data(&self.id, "dense row count differs from frames"));
            }
            if dense.values().iter().any(|v| !v.is_finite()) {
                return Err(Error::data(&self.id, "non-finite dense descriptor entry"));
            }
        }
        Ok(())
    }
}

/// A validated collection of clips sharing one channel bank and label space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    /// Number of activity categories `L`.
    pub num_activities: usize,
    /// Number of feature channels `N`.
    pub num_channels: usize,
    pub fps: f64,
    pub records: Vec<VideoRecord>,
}

impl Dataset {
    pub fn validate(&self) -> Result<()> {
        if self.num_activities == 0 {
            return Err(Error::Config("dataset declares zero activities".into()));
        }
        if self.num_channels == 0 {
            return Err(Error::Config("dataset declares zero channels".into()));
        }
        for rec in &self.records {
            rec.validate(self.num_activities, self.num_channels)?;
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.records.iter().map(|r| r.label).collect()
    }

    /// Median clip length in frames (0 for an empty dataset).
    pub fn median_frames(&self) -> usize {
        if self.records.is_empty() {
            return 0;
        }
        let mut lens: Vec<usize> = self.records.iter().map(VideoRecord::frames).collect();
        lens.sort_unstable();
        lens[lens.len() / 2]
    }

    /// Dense descriptor dimensionality, if every record carries one.
    pub fn dense_dim(&self) -> Option<usize> {
        let first = self.records.first()?.dense.as_ref()?.cols();
        self.records
            .iter()
            .all(|r| r.dense.as_ref().map(Grid::cols) == Some(first))
            .then_some(first)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(id: &str, label: usize, scores: Vec<Vec<f64>>) -> VideoRecord {
        VideoRecord {
            id: id.into(),
            label,
            fps: 1.0,
            scores: Matrix::from_rows(scores).unwrap(),
            boxes: None,
            dense: None,
        }
    }

    #[test]
    fn out_of_range_score_is_rejected_with_record_id() {
        let rec = record("clip-7", 0, vec![vec![0.2, 1.2]]);
        let err = rec.validate(2, 2).unwrap_err();
        assert!(err.to_string().contains("clip-7"), "{err}");
        assert!(err.to_string().contains("1.2"), "{err}");
    }

    #[test]
    fn label_out_of_range_is_rejected() {
        let rec = record("clip-3", 7, vec![vec![0.5]]);
        let err = rec.validate(4, 1).unwrap_err();
        assert!(err.to_string().contains("clip-3"), "{err}");
        assert!(err.to_string().contains("label 7"), "{err}");
    }

    #[test]
    fn zero_frame_clip_is_rejected() {
        let rec = record("clip-0", 0, vec![]);
        assert!(rec.validate(1, 1).is_err());
    }

    #[test]
    fn grid_slice_rows_round_trip() {
        let g = Matrix::from_rows(vec![vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]]).unwrap();
        let s = g.slice_rows(1, 3);
        assert_eq!(s.rows(), 2);
        assert_eq!(s.row(0), &[3.0, 4.0]);
        assert_eq!(s.row(1), &[5.0, 6.0]);
    }
}
