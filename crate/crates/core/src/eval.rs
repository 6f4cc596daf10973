//! BLEU-1 between gloss assignments and report emission.

use std::collections::HashMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Pair};
use crate::error::{Error, Result};
use crate::sweep::SweepReport;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalConfig {
    /// Compare glosses case-insensitively.
    pub case_fold: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig { case_fold: true }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    /// Corpus-level BLEU-1 on a 0..100 scale.
    pub bleu1: f64,
    pub unigram_precision: f64,
    /// `exp(1 - r/c)` when the candidate is shorter than the reference.
    /// Zero when the candidate is empty and the reference is not.
    pub brevity_penalty: f64,
    pub exact_pair_match_rate: f64,
}

fn key(surface: &str, cfg: &EvalConfig) -> String {
    if cfg.case_fold {
        surface.to_lowercase()
    } else {
        surface.to_string()
    }
}

/// (clipped matches, candidate length, reference length, exact match)
fn pair_stats(candidate: &Pair, reference: &Pair, cfg: &EvalConfig) -> (usize, usize, usize, bool) {
    let mut ref_counts: HashMap<String, usize> = HashMap::new();
    for t in &reference.glosses {
        *ref_counts.entry(key(&t.surface, cfg)).or_default() += 1;
    }
    let mut matches = 0;
    for t in &candidate.glosses {
        if let Some(n) = ref_counts.get_mut(&key(&t.surface, cfg)) {
            if *n > 0 {
                *n -= 1;
                matches += 1;
            }
        }
    }
    let exact = candidate.glosses.len() == reference.glosses.len()
        && candidate
            .glosses
            .iter()
            .zip(&reference.glosses)
            .all(|(a, b)| key(&a.surface, cfg) == key(&b.surface, cfg));
    (matches, candidate.glosses.len(), reference.glosses.len(), exact)
}

fn score(matches: usize, cand_len: usize, ref_len: usize) -> (f64, f64, f64) {
    if cand_len == 0 {
        return if ref_len == 0 {
            (100.0, 1.0, 1.0)
        } else {
            (0.0, 0.0, 0.0)
        };
    }
    let precision = matches as f64 / cand_len as f64;
    let bp = if cand_len < ref_len {
        (1.0 - ref_len as f64 / cand_len as f64).exp()
    } else {
        1.0
    };
    (100.0 * bp * precision, precision, bp)
}

fn check_lengths(candidate: &Corpus, reference: &Corpus) -> Result<()> {
    if candidate.len() != reference.len() {
        return Err(Error::PairCount {
            candidate: candidate.len(),
            reference: reference.len(),
        });
    }
    Ok(())
}

/// Corpus-level BLEU-1 over the gloss lists of index-matched pairs:
/// clipped unigram matches summed over pairs divided by the total candidate
/// length, times the corpus brevity penalty.
pub fn bleu1_corpus(candidate: &Corpus, reference: &Corpus, cfg: &EvalConfig) -> Result<EvalResult> {
    check_lengths(candidate, reference)?;
    let (mut matches, mut c, mut r, mut exact) = (0, 0, 0, 0);
    for (cp, rp) in candidate.pairs.iter().zip(&reference.pairs) {
        let (m, cl, rl, e) = pair_stats(cp, rp, cfg);
        matches += m;
        c += cl;
        r += rl;
        exact += usize::from(e);
    }
    let (bleu1, unigram_precision, brevity_penalty) = score(matches, c, r);
    let exact_pair_match_rate = if candidate.is_empty() {
        1.0
    } else {
        exact as f64 / candidate.len() as f64
    };
    Ok(EvalResult {
        bleu1,
        unigram_precision,
        brevity_penalty,
        exact_pair_match_rate,
    })
}

/// Mean of per-pair BLEU-1 scores. A pair whose candidate and reference are
/// both empty scores 100.
pub fn bleu1_sentence_average(candidate: &Corpus, reference: &Corpus, cfg: &EvalConfig) -> Result<f64> {
    check_lengths(candidate, reference)?;
    if candidate.is_empty() {
        return Ok(100.0);
    }
    let total: f64 = candidate
        .pairs
        .iter()
        .zip(&reference.pairs)
        .map(|(cp, rp)| {
            let (m, c, r, _) = pair_stats(cp, rp, cfg);
            score(m, c, r).0
        })
        .sum();
    Ok(total / candidate.len() as f64)
}

/// Write `pass,direction,moves,bleu1`, one row per recorded pass, with
/// BLEU-1 taken from `results` (one entry per pass).
pub fn emit_report<W: Write>(report: &SweepReport, results: &[EvalResult], out: &mut W) -> Result<()> {
    if results.len() != report.passes.len() {
        return Err(Error::Config(format!(
            "{} evaluation results for {} recorded passes",
            results.len(),
            report.passes.len()
        )));
    }
    writeln!(out, "pass,direction,moves,bleu1")?;
    for (rec, res) in report.passes.iter().zip(results) {
        writeln!(
            out,
            "{},{},{},{:.4}",
            rec.pass,
            rec.direction_label(),
            rec.boundary_moves,
            res.bleu1
        )?;
    }
    Ok(())
}
