//! Incremental video representation: max-pool over per-object detection
//! probabilities, or running mean over dense frame descriptors.

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Matrix, VideoRecord};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PoolMode {
    /// Bag-of-objects: entry `n` is the maximum observed probability of
    /// object `n` so far. Entries never decrease.
    Max,
    /// Running arithmetic mean of submitted frame descriptors.
    Mean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DescriptorState {
    pub mode: PoolMode,
    psi: Vec<f64>,
    /// Number of frame descriptors averaged (mean-pool only).
    count: usize,
    /// Channels that have ever been updated.
    observed: Vec<bool>,
}

/// Creates a descriptor of the given dimensionality. Streaming episodes fold
/// in the first frame's observation; batch episodes start empty and rely on
/// imputation for unobserved channels.
pub fn init_descriptor(
    mode: PoolMode,
    dim: usize,
    first_frame: Option<&[f64]>,
) -> Result<DescriptorState> {
    let mut state = DescriptorState {
        mode,
        psi: vec![0.0; dim],
        count: 0,
        observed: vec![false; dim],
    };
    if let Some(frame) = first_frame {
        if frame.len() != dim {
            return Err(Error::Dimension {
                context: "descriptor init frame",
                expected: dim,
                got: frame.len(),
            });
        }
        match mode {
            PoolMode::Max => {
                for (n, &x) in frame.iter().enumerate() {
                    state.update_max(n, x)?;
                }
            }
            PoolMode::Mean => state.update_mean(frame)?,
        }
    }
    Ok(state)
}

impl DescriptorState {
    pub fn dim(&self) -> usize {
        self.psi.len()
    }

    pub fn psi(&self) -> &[f64] {
        &self.psi
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn observed(&self) -> &[bool] {
        &self.observed
    }

    pub fn is_observed(&self, channel: usize) -> bool {
        self.observed[channel]
    }

    /// Folds one detection probability into channel `n`:
    /// `psi'_n = max(psi_n, x)`.
    pub fn update_max(&mut self, channel: usize, x: f64) -> Result<()> {
        if self.mode != PoolMode::Max {
            return Err(Error::Usage(
                "update_max called on a mean-pool descriptor".into(),
            ));
        }
        if channel >= self.psi.len() {
            return Err(Error::Dimension {
                context: "descriptor channel",
                expected: self.psi.len(),
                got: channel,
            });
        }
        self.psi[channel] = self.psi[channel].max(x);
        self.observed[channel] = true;
        Ok(())
    }

    /// Folds one frame descriptor into the running mean:
    /// `psi' = (count * psi + d) / (count + 1)`.
    pub fn update_mean(&mut self, frame: &[f64]) -> Result<()> {
        if self.mode != PoolMode::Mean {
            return Err(Error::Usage(
                "update_mean called on a max-pool descriptor".into(),
            ));
        }
        if frame.len() != self.psi.len() {
            return Err(Error::Dimension {
                context: "descriptor frame",
                expected: self.psi.len(),
                got: frame.len(),
            });
        }
        let k = self.count as f64;
        for (p, &d) in self.psi.iter_mut().zip(frame) {
            *p += (d - *p) / (k + 1.0);
        }
        self.count += 1;
        for o in &mut self.observed {
            *o = true;
        }
        Ok(())
    }
}

/// Max-pool descriptor of a fully observed score matrix.
pub fn full_max_descriptor(scores: &Matrix) -> Vec<f64> {
    let mut psi = vec![0.0f64; scores.cols()];
    for t in 0..scores.rows() {
        for (p, &v) in psi.iter_mut().zip(scores.row(t)) {
            *p = (*p).max(v);
        }
    }
    psi
}

/// Mean-pool descriptor of a fully observed dense matrix.
pub fn full_mean_descriptor(dense: &Matrix) -> Vec<f64> {
    let mut psi = vec![0.0; dense.cols()];
    for t in 0..dense.rows() {
        for (p, &v) in psi.iter_mut().zip(dense.row(t)) {
            *p += v;
        }
    }
    let n = dense.rows() as f64;
    psi.iter_mut().for_each(|p| *p /= n);
    psi
}

/// Full-observation descriptor of one record under the given pooling mode.
pub fn full_descriptor(record: &VideoRecord, mode: PoolMode) -> Result<Vec<f64>> {
    match mode {
        PoolMode::Max => Ok(full_max_descriptor(&record.scores)),
        PoolMode::Mean => {
            let dense = record.dense.as_ref().ok_or_else(|| {
                Error::data(&record.id, "mean-pool mode requires dense descriptors")
            })?;
            Ok(full_mean_descriptor(dense))
        }
    }
}

/// Full-observation descriptors and labels for a whole dataset.
pub fn full_descriptors(dataset: &Dataset, mode: PoolMode) -> Result<(Vec<Vec<f64>>, Vec<usize>)> {
    let mut xs = Vec::with_capacity(dataset.len());
    for rec in &dataset.records {
        xs.push(full_descriptor(rec, mode)?);
    }
    Ok((xs, dataset.labels()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn mean_pool_first_frame_is_the_frame() {
        let d = init_descriptor(PoolMode::Mean, 2, Some(&[0.3, 0.9])).unwrap();
        assert_eq!(d.psi(), &[0.3, 0.9]);
        assert_eq!(d.count(), 1);
    }

    #[test]
    fn max_pool_empty_init_is_zero_and_unobserved() {
        let d = init_descriptor(PoolMode::Max, 3, None).unwrap();
        assert_eq!(d.psi(), &[0.0, 0.0, 0.0]);
        assert!(d.observed().iter().all(|&o| !o));
    }

    #[test]
    fn max_pool_first_frame_copies_scores() {
        let d = init_descriptor(PoolMode::Max, 2, Some(&[0.2, 0.7])).unwrap();
        assert_eq!(d.psi(), &[0.2, 0.7]);
        assert!(d.observed().iter().all(|&o| o));
    }

    #[test]
    fn update_max_takes_running_maximum() {
        let mut d = init_descriptor(PoolMode::Max, 1, None).unwrap();
        d.update_max(0, 0.3).unwrap();
        d.update_max(0, 0.5).unwrap();
        assert_eq!(d.psi(), &[0.5]);
        d.update_max(0, 0.4).unwrap();
        assert_eq!(d.psi(), &[0.5]);
    }

    #[test]
    fn update_max_is_idempotent() {
        let mut a = init_descriptor(PoolMode::Max, 2, None).unwrap();
        a.update_max(1, 0.5).unwrap();
        let mut b = a.clone();
        b.update_max(1, 0.5).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn wrong_mode_is_a_usage_error() {
        let mut d = init_descriptor(PoolMode::Mean, 2, None).unwrap();
        assert!(d.update_max(0, 0.5).is_err());
        let mut d = init_descriptor(PoolMode::Max, 2, None).unwrap();
        assert!(d.update_mean(&[0.1, 0.2]).is_err());
    }

    #[test]
    fn mean_of_two_frames() {
        let mut d = init_descriptor(PoolMode::Mean, 2, Some(&[1.0, 0.0])).unwrap();
        d.update_mean(&[0.0, 1.0]).unwrap();
        assert_eq!(d.psi(), &[0.5, 0.5]);
        assert_eq!(d.count(), 2);
    }

    #[test]
    fn mean_of_three_scalars() {
        let mut d = init_descriptor(PoolMode::Mean, 1, None).unwrap();
        for v in [1.0, 2.0, 3.0] {
            d.update_mean(&[v]).unwrap();
        }
        assert!((d.psi()[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        assert!(init_descriptor(PoolMode::Mean, 2, Some(&[0.1])).is_err());
        let mut d = init_descriptor(PoolMode::Mean, 2, None).unwrap();
        assert!(d.update_mean(&[0.1, 0.2, 0.3]).is_err());
    }

    proptest! {
        #[test]
        fn max_pool_coordinates_never_decrease(
            updates in proptest::collection::vec((0usize..4, 0.0f64..=1.0), 0..40)
        ) {
            let mut d = init_descriptor(PoolMode::Max, 4, None).unwrap();
            let mut prev = d.psi().to_vec();
            for (n, x) in updates {
                d.update_max(n, x).unwrap();
                for (a, b) in prev.iter().zip(d.psi()) {
                    prop_assert!(b >= a);
                }
                prev = d.psi().to_vec();
            }
        }

        #[test]
        fn pooling_is_order_insensitive(
            mut updates in proptest::collection::vec((0usize..3, 0.0f64..=1.0), 1..20),
            swap_a in 0usize..20,
            swap_b in 0usize..20,
        ) {
            let mut fwd = init_descriptor(PoolMode::Max, 3, None).unwrap();
            for &(n, x) in &updates {
                fwd.update_max(n, x).unwrap();
            }
            let la = swap_a % updates.len();
            let lb = swap_b % updates.len();
            updates.swap(la, lb);
            let mut swapped = init_descriptor(PoolMode::Max, 3, None).unwrap();
            for &(n, x) in &updates {
                swapped.update_max(n, x).unwrap();
            }
            prop_assert_eq!(fwd.psi(), swapped.psi());

            let frames: Vec<Vec<f64>> =
                updates.iter().map(|&(n, x)| vec![x, n as f64]).collect();
            let mut fwd = init_descriptor(PoolMode::Mean, 2, None).unwrap();
            for f in &frames {
                fwd.update_mean(f).unwrap();
            }
            let mut rev = init_descriptor(PoolMode::Mean, 2, None).unwrap();
            for f in frames.iter().rev() {
                rev.update_mean(f).unwrap();
            }
            for (a, b) in fwd.psi().iter().zip(rev.psi()) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }

        #[test]
        fn incremental_updates_match_batch_descriptor(
            rows in proptest::collection::vec(
                proptest::collection::vec(0.0f64..=1.0, 3),
                1..12,
            )
        ) {
            let m = Matrix::from_rows(rows.clone()).unwrap();
            let mut d = init_descriptor(PoolMode::Max, 3, None).unwrap();
            for row in &rows {
                for (n, &x) in row.iter().enumerate() {
                    d.update_max(n, x).unwrap();
                }
            }
            let full = full_max_descriptor(&m);
            prop_assert_eq!(d.psi(), full.as_slice());
        }
    }
}
