//! Auto-regressive re-splitting of adjacent gloss sequences over a whole
//! corpus, alternating forward and backward passes.

use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::align::{align, best_split, split_scores, AlignConfig};
use crate::corpus::Corpus;
use crate::embeddings::Providers;
use crate::error::{Error, Result};
use crate::eval::{bleu1_corpus, EvalConfig, EvalResult};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Forward,
    Backward,
}

impl Direction {
    pub fn reversed(self) -> Self {
        match self {
            Direction::Forward => Direction::Backward,
            Direction::Backward => Direction::Forward,
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::Forward => "forward",
            Direction::Backward => "backward",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub max_passes: usize,
    pub align: AlignConfig,
    pub stop_on_no_moves: bool,
    pub eval: EvalConfig,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            max_passes: 8,
            align: AlignConfig::default(),
            stop_on_no_moves: true,
            eval: EvalConfig::default(),
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_passes == 0 {
            return Err(Error::Config("max_passes must be at least 1".into()));
        }
        self.align.validate()
    }
}

/// Statistics for one pass. Pass 0 is the unaligned baseline and has no
/// direction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PassRecord {
    pub pass: usize,
    pub direction: Option<Direction>,
    /// Pairs whose boundary moved.
    pub boundary_moves: usize,
    pub glosses_moved: usize,
    pub eval: Option<EvalResult>,
}

impl PassRecord {
    pub fn bleu1(&self) -> Option<f64> {
        self.eval.as_ref().map(|e| e.bleu1)
    }

    pub fn direction_label(&self) -> String {
        self.direction
            .map_or_else(|| "baseline".to_string(), |d| d.to_string())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub passes: Vec<PassRecord>,
}

impl SweepReport {
    /// Directional passes actually run (excludes the baseline record).
    pub fn pass_count(&self) -> usize {
        self.passes.iter().filter(|p| p.direction.is_some()).count()
    }

    /// `pass,direction,moves,glosses_moved,bleu1`; the BLEU column is empty
    /// when no reference was given.
    pub fn write_csv<W: Write>(&self, out: &mut W) -> Result<()> {
        writeln!(out, "pass,direction,moves,glosses_moved,bleu1")?;
        for p in &self.passes {
            let bleu = p.bleu1().map(|b| format!("{b:.4}")).unwrap_or_default();
            writeln!(
                out,
                "{},{},{},{},{}",
                p.pass,
                p.direction_label(),
                p.boundary_moves,
                p.glosses_moved,
                bleu
            )?;
        }
        Ok(())
    }
}

/// Re-split the glosses of pairs `i` and `i + 1`. Returns how many glosses
/// crossed the boundary.
pub fn realign_pair(corpus: &mut Corpus, i: usize, providers: &Providers, cfg: &AlignConfig) -> Result<usize> {
    if i + 1 >= corpus.len() {
        return Err(Error::Config(format!(
            "pair index {i} has no right neighbour in a corpus of {}",
            corpus.len()
        )));
    }
    let (head, tail) = corpus.pairs.split_at_mut(i + 1);
    let left = &mut head[i];
    let right = &mut tail[0];
    let current_k = left.glosses.len();
    if current_k + right.glosses.len() == 0 {
        return Ok(0);
    }

    let mut concat = std::mem::take(&mut left.glosses);
    concat.append(&mut right.glosses);

    let scored = align(&left.text, &concat, providers, cfg).and_then(|a_left| {
        let a_right = align(&right.text, &concat, providers, cfg)?;
        split_scores(&a_left, &a_right)
    });
    let k = match scored {
        Ok(curve) => best_split(&curve, current_k),
        Err(e) => {
            // restore the original boundary before bailing out
            right.glosses = concat.split_off(current_k);
            left.glosses = concat;
            return Err(e);
        }
    };
    right.glosses = concat.split_off(k);
    left.glosses = concat;
    Ok(k.abs_diff(current_k))
}

/// One directional pass over all adjacent pairs. Each re-split sees the
/// state left by the previous one. Returns `(boundary_moves, glosses_moved)`.
pub fn sweep_pass(
    corpus: &mut Corpus,
    direction: Direction,
    providers: &Providers,
    cfg: &AlignConfig,
) -> Result<(usize, usize)> {
    let n = corpus.len();
    if n < 2 {
        return Ok((0, 0));
    }
    let order: Box<dyn Iterator<Item = usize>> = match direction {
        Direction::Forward => Box::new(0..n - 1),
        Direction::Backward => Box::new((0..n - 1).rev()),
    };
    let mut boundary_moves = 0;
    let mut glosses_moved = 0;
    for i in order {
        let moved = realign_pair(corpus, i, providers, cfg)?;
        if moved > 0 {
            boundary_moves += 1;
            glosses_moved += moved;
        }
    }
    Ok((boundary_moves, glosses_moved))
}

/// Alternate forward and backward passes until a pass moves nothing (when
/// `stop_on_no_moves`) or `max_passes` is reached. With a reference, every
/// record (including the baseline) carries BLEU-1 against it.
pub fn run_alignment(
    mut corpus: Corpus,
    providers: &Providers,
    cfg: &SweepConfig,
    reference: Option<&Corpus>,
) -> Result<(Corpus, SweepReport)> {
    cfg.validate()?;
    let evaluate = |c: &Corpus| -> Result<Option<EvalResult>> {
        reference.map(|r| bleu1_corpus(c, r, &cfg.eval)).transpose()
    };

    let mut report = SweepReport::default();
    report.passes.push(PassRecord {
        pass: 0,
        direction: None,
        boundary_moves: 0,
        glosses_moved: 0,
        eval: evaluate(&corpus)?,
    });

    let mut direction = Direction::Forward;
    for pass in 1..=cfg.max_passes {
        let (boundary_moves, glosses_moved) = sweep_pass(&mut corpus, direction, providers, &cfg.align)?;
        report.passes.push(PassRecord {
            pass,
            direction: Some(direction),
            boundary_moves,
            glosses_moved,
            eval: evaluate(&corpus)?,
        });
        if boundary_moves == 0 && cfg.stop_on_no_moves {
            break;
        }
        direction = direction.reversed();
    }
    Ok((corpus, report))
}
