//! Action selectors: the learned policy plus the static comparison
//! strategies. A [`Selector`] is immutable and shareable; each episode
//! obtains its own [`SelectorCursor`] with a seeded generator.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::qpolicy::{select_action, ActionId, QModel, StateActionFeature};

#[derive(Debug, Clone)]
pub enum Selector {
    /// Epsilon-greedy over a linear Q-model.
    Policy { model: QModel, epsilon: f64 },
    /// Uniform over legal non-skip actions; in batch this realizes a uniform
    /// permutation of the action set.
    Passive,
    /// Cycles a ranked action list, skipping illegal entries.
    StaticOrder { ranked: Vec<ActionId> },
    /// Cycles within a fixed top subset only.
    TopSet { ranked: Vec<ActionId> },
}

impl Selector {
    pub fn policy(model: QModel, epsilon: f64) -> Self {
        Selector::Policy { model, epsilon }
    }

    /// Greedy deployment of a trained policy.
    pub fn greedy(model: QModel) -> Self {
        Selector::Policy {
            model,
            epsilon: 0.0,
        }
    }

    pub fn cursor(&self, seed: u64) -> SelectorCursor<'_> {
        SelectorCursor {
            selector: self,
            rng: ChaCha8Rng::seed_from_u64(seed),
            picks: 0,
        }
    }
}

/// What a selector sees at one decision point.
pub struct SelectCtx<'a> {
    /// Legal actions this step, ascending ids.
    pub candidates: &'a [ActionId],
    /// State-action features aligned with `candidates`.
    pub phis: &'a [StateActionFeature],
    /// Id of the skip action, when the setting has one.
    pub skip_id: Option<ActionId>,
}

/// Per-episode selector state: seeded randomness plus a cycle position.
pub struct SelectorCursor<'a> {
    selector: &'a Selector,
    rng: ChaCha8Rng,
    picks: usize,
}

impl SelectorCursor<'_> {
    pub fn select(&mut self, ctx: &SelectCtx<'_>) -> Result<ActionId> {
        if ctx.candidates.is_empty() {
            return Err(Error::Usage("no candidate actions".into()));
        }
        let choice = match self.selector {
            Selector::Policy { model, epsilon } => {
                select_action(model, ctx.phis, ctx.candidates, *epsilon, &mut self.rng)?
            }
            Selector::Passive => {
                let legal: Vec<ActionId> = ctx
                    .candidates
                    .iter()
                    .copied()
                    .filter(|a| Some(*a) != ctx.skip_id)
                    .collect();
                if legal.is_empty() {
                    // Nothing left to extract until the stream moves: wait.
                    self.forced_skip(ctx)?
                } else {
                    legal[self.rng.random_range(0..legal.len())]
                }
            }
            Selector::StaticOrder { ranked } | Selector::TopSet { ranked } => {
                let n = ranked.len();
                if n == 0 {
                    return Err(Error::Usage("empty action ordering".into()));
                }
                match (0..n)
                    .map(|i| ranked[(self.picks + i) % n])
                    .find(|a| ctx.candidates.contains(a))
                {
                    Some(a) => a,
                    None => self.forced_skip(ctx)?,
                }
            }
        };
        self.picks += 1;
        Ok(choice)
    }

    fn forced_skip(&self, ctx: &SelectCtx<'_>) -> Result<ActionId> {
        ctx.skip_id
            .filter(|a| ctx.candidates.contains(a))
            .ok_or_else(|| Error::Usage("selector has no legal action".into()))
    }
}
