//! Untrimmed stream construction: concatenate trimmed clips so that exactly
//! one positive span is embedded among randomly drawn negatives.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Matrix, VideoRecord};
use crate::error::{Error, Result};
use crate::util::derive_seed;

pub const SLOTS: usize = 5;

/// A concatenated stream with one ground-truth positive span.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UntrimmedRecord {
    pub id: String,
    /// Concatenated `T x N` score matrix.
    pub frames: Matrix,
    /// Ground-truth `[start, end)` frame interval of the positive clip.
    pub span: (usize, usize),
    /// Activity index of the positive clip.
    pub target: usize,
    pub fps: f64,
}

impl UntrimmedRecord {
    pub fn len(&self) -> usize {
        self.frames.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.rows() == 0
    }
}

/// Builds `placements` untrimmed records per positive clip. Each record
/// places the positive at a distinct slot index in `0..SLOTS` and fills the
/// remaining slots with negatives drawn without replacement within the
/// record (with replacement across records).
pub fn concat_untrimmed(
    positives: &[VideoRecord],
    negatives: &[VideoRecord],
    placements: usize,
    seed: u64,
) -> Result<Vec<UntrimmedRecord>> {
    if placements == 0 || placements > SLOTS {
        return Err(Error::Config(format!(
            "placements must be in 1..={SLOTS}, got {placements}"
        )));
    }
    if negatives.len() < SLOTS - 1 {
        return Err(Error::Config(format!(
            "negative pool of {} cannot fill {} slots",
            negatives.len(),
            SLOTS - 1
        )));
    }

    let mut out = Vec::with_capacity(positives.len() * placements);
    for (pi, pos) in positives.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, pi as u64, 0));
        let mut slots: Vec<usize> = (0..SLOTS).collect();
        slots.shuffle(&mut rng);
        for (k, &slot) in slots.iter().take(placements).enumerate() {
            let mut pool: Vec<usize> = (0..negatives.len()).collect();
            pool.shuffle(&mut rng);
            let draw: Vec<&VideoRecord> =
                pool[..SLOTS - 1].iter().map(|&i| &negatives[i]).collect();

            let mut parts: Vec<&VideoRecord> = Vec::with_capacity(SLOTS);
            let mut draw_iter = draw.into_iter();
            for s in 0..SLOTS {
                if s == slot {
                    parts.push(pos);
                } else {
                    parts.push(draw_iter.next().expect("enough negatives drawn"));
                }
            }

            let channels = pos.channels();
            let mut rows = Vec::new();
            let mut span = (0usize, 0usize);
            for (s, part) in parts.iter().enumerate() {
                if part.channels() != channels {
                    return Err(Error::Dimension {
                        context: "untrimmed concatenation channels",
                        expected: channels,
                        got: part.channels(),
                    });
                }
                if (part.fps - pos.fps).abs() > f64::EPSILON {
                    return Err(Error::Config(
                        "all clips in an untrimmed record must share one fps".into(),
                    ));
                }
                if s == slot {
                    span = (rows.len(), rows.len() + part.frames());
                }
                for t in 0..part.frames() {
                    rows.push(part.scores.row(t).to_vec());
                }
            }

            out.push(UntrimmedRecord {
                id: format!("{}-u{k}", pos.id),
                frames: Matrix::from_rows(rows)?,
                span,
                target: pos.label,
                fps: pos.fps,
            });
        }
    }
    Ok(out)
}
