//! Seeded corruption of gloss assignments: whole-sequence offset and random
//! boundary drift of up to three glosses.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::error::{Error, Result};

/// Shift every gloss list one pair later: pair 0 becomes empty and the last
/// pair's glosses are dropped. Text is untouched.
pub fn offset_by_one(corpus: &Corpus) -> Corpus {
    let mut out = corpus.clone();
    let n = out.len();
    if n == 0 {
        return out;
    }
    for i in (1..n).rev() {
        out.pairs[i].glosses = std::mem::take(&mut out.pairs[i - 1].glosses);
    }
    out.pairs[0].glosses.clear();
    out
}

/// Ground truth for an offset corpus: the original assignment with the
/// final pair's glosses removed, since [`offset_by_one`] discards them.
pub fn offset_reference(original: &Corpus) -> Corpus {
    let mut out = original.clone();
    if let Some(last) = out.pairs.last_mut() {
        last.glosses.clear();
    }
    out
}

/// Per-pair event probabilities. `p_move[k - 1]` is the probability of
/// moving `k` glosses in each direction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorruptionSpec {
    pub seed: u64,
    pub p_move: Vec<f64>,
    pub p_none: f64,
}

impl CorruptionSpec {
    /// 15/20/10% for 1/2/3 glosses per direction, 10% untouched.
    pub fn new(seed: u64) -> Self {
        CorruptionSpec {
            seed,
            p_move: vec![0.15, 0.20, 0.10],
            p_none: 0.10,
        }
    }

    pub fn max_shift(&self) -> usize {
        self.p_move.len()
    }

    pub fn validate(&self) -> Result<()> {
        let probs = self.p_move.iter().chain(std::iter::once(&self.p_none));
        if probs.clone().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::Config("probabilities must lie in [0, 1]".into()));
        }
        let total = 2.0 * self.p_move.iter().sum::<f64>() + self.p_none;
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "event probabilities sum to {total}, expected 1"
            )));
        }
        Ok(())
    }

    /// Events in sampling order with their probabilities.
    pub fn events(&self) -> Vec<(CorruptionEvent, f64)> {
        let mut out = vec![(CorruptionEvent::None, self.p_none)];
        for (i, &p) in self.p_move.iter().enumerate() {
            out.push((CorruptionEvent::Prev(i + 1), p));
            out.push((CorruptionEvent::Next(i + 1), p));
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorruptionEvent {
    None,
    /// Move the first `k` glosses to the end of the previous pair.
    Prev(usize),
    /// Move the last `k` glosses to the front of the next pair.
    Next(usize),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairEvent {
    pub pair: usize,
    pub event: CorruptionEvent,
    /// False when the pair had too few glosses or no neighbour.
    pub applied: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CorruptionLog {
    pub events: Vec<PairEvent>,
    pub moved_to_previous: usize,
    pub moved_to_next: usize,
}

impl CorruptionLog {
    pub fn skipped(&self) -> usize {
        self.events
            .iter()
            .filter(|e| !e.applied && e.event != CorruptionEvent::None)
            .count()
    }
}

/// Randomly drift glosses across sentence boundaries.
///
/// One event is drawn per pair, all draws made up front from a ChaCha
/// generator seeded with `spec.seed`. Events are then applied in pair order
/// to the current state. A move of `k` glosses is skipped when the pair
/// holds fewer than `k` glosses at that point or the target neighbour does
/// not exist. Only boundary glosses move, so the global gloss order is kept.
pub fn gloss_misalign(corpus: &Corpus, spec: &CorruptionSpec) -> Result<(Corpus, CorruptionLog)> {
    spec.validate()?;
    let table = spec.events();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let draws: Vec<CorruptionEvent> = (0..corpus.len())
        .map(|_| sample(&table, rng.random::<f64>()))
        .collect();

    let mut out = corpus.clone();
    let mut log = CorruptionLog::default();
    let n = out.len();
    for (i, event) in draws.into_iter().enumerate() {
        let len = out.pairs[i].glosses.len();
        let applied = match event {
            CorruptionEvent::None => false,
            CorruptionEvent::Prev(k) => {
                if i > 0 && len >= k {
                    let moved: Vec<_> = out.pairs[i].glosses.drain(..k).collect();
                    out.pairs[i - 1].glosses.extend(moved);
                    log.moved_to_previous += k;
                    true
                } else {
                    false
                }
            }
            CorruptionEvent::Next(k) => {
                if i + 1 < n && len >= k {
                    let moved: Vec<_> = out.pairs[i].glosses.drain(len - k..).collect();
                    out.pairs[i + 1].glosses.splice(0..0, moved);
                    log.moved_to_next += k;
                    true
                } else {
                    false
                }
            }
        };
        log.events.push(PairEvent {
            pair: i,
            event,
            applied,
        });
    }
    Ok((out, log))
}

fn sample(table: &[(CorruptionEvent, f64)], u: f64) -> CorruptionEvent {
    let mut acc = 0.0;
    for &(event, p) in table {
        acc += p;
        if u < acc {
            return event;
        }
    }
    // u landed in rounding slack above the cumulative sum
    table
        .iter()
        .rev()
        .find(|(_, p)| *p > 0.0)
        .map_or(CorruptionEvent::None, |(e, _)| *e)
}
