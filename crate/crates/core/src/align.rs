//! Gloss/word alignment matrices and split-point selection for two adjacent
//! sentences.

use std::io::Write;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::corpus::Token;
use crate::embeddings::{embed_sequence, EmbeddingMatrix, Providers};
use crate::error::{Error, Result};

/// Split scores closer than this to the maximum count as tied.
pub const TIE_TOLERANCE: f64 = 1e-9;

/// How the static-vector channel enters the combined score.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FilterMode {
    /// Keep static similarities `>= alpha`, zero the rest, then add.
    #[default]
    Threshold,
    /// Add `alpha * static` without filtering.
    Scale,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlignConfig {
    pub alpha: f64,
    pub use_static: bool,
    pub use_contextual: bool,
    pub filter_mode: FilterMode,
}

impl Default for AlignConfig {
    fn default() -> Self {
        AlignConfig {
            alpha: 0.9,
            use_static: true,
            use_contextual: true,
            filter_mode: FilterMode::Threshold,
        }
    }
}

impl AlignConfig {
    pub fn static_only() -> Self {
        AlignConfig {
            use_contextual: false,
            ..AlignConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Config(format!(
                "alpha must lie in [0, 1], got {}",
                self.alpha
            )));
        }
        if !self.use_static && !self.use_contextual {
            return Err(Error::Config(
                "at least one of the static and contextual channels must be enabled".into(),
            ));
        }
        Ok(())
    }
}

/// `G x W` gloss-by-word score matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct AlignmentMatrix {
    scores: Array2<f64>,
}

impl AlignmentMatrix {
    pub fn from_array(scores: Array2<f64>) -> Self {
        AlignmentMatrix { scores }
    }

    pub fn from_rows(rows: &[Vec<f64>], words: usize) -> Result<Self> {
        let mut scores = Array2::zeros((rows.len(), words));
        for (g, row) in rows.iter().enumerate() {
            if row.len() != words {
                return Err(Error::Shape(format!(
                    "row {g} has {} entries, expected {words}",
                    row.len()
                )));
            }
            for (w, &v) in row.iter().enumerate() {
                scores[[g, w]] = v;
            }
        }
        Ok(AlignmentMatrix { scores })
    }

    pub fn zeros(glosses: usize, words: usize) -> Self {
        AlignmentMatrix {
            scores: Array2::zeros((glosses, words)),
        }
    }

    pub fn gloss_count(&self) -> usize {
        self.scores.nrows()
    }

    pub fn word_count(&self) -> usize {
        self.scores.ncols()
    }

    pub fn get(&self, gloss: usize, word: usize) -> f64 {
        self.scores[[gloss, word]]
    }

    pub fn scores(&self) -> &Array2<f64> {
        &self.scores
    }

    /// Best score of one gloss over all words; 0 when there are no words.
    pub fn row_max(&self, gloss: usize) -> f64 {
        self.scores
            .row(gloss)
            .iter()
            .copied()
            .reduce(f64::max)
            .unwrap_or(0.0)
    }

    fn shape_str(&self) -> String {
        format!("{}x{}", self.gloss_count(), self.word_count())
    }

    /// Heatmap dump: a header `gloss,<word>...` then one row per gloss.
    pub fn write_csv<W: Write>(&self, out: &mut W, glosses: &[Token], words: &[Token]) -> Result<()> {
        if glosses.len() != self.gloss_count() || words.len() != self.word_count() {
            return Err(Error::Shape(format!(
                "labels {}x{} do not match matrix {}",
                glosses.len(),
                words.len(),
                self.shape_str()
            )));
        }
        write!(out, "gloss")?;
        for w in words {
            write!(out, ",{}", csv_field(&w.surface))?;
        }
        writeln!(out)?;
        for (g, gloss) in glosses.iter().enumerate() {
            write!(out, "{}", csv_field(&gloss.surface))?;
            for w in 0..self.word_count() {
                write!(out, ",{}", self.scores[[g, w]])?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// All pairwise dot products between gloss rows and word rows.
pub fn similarity_matrix(glosses: &EmbeddingMatrix, words: &EmbeddingMatrix) -> Result<AlignmentMatrix> {
    if glosses.dim() != words.dim() {
        return Err(Error::DimMismatch {
            expected: glosses.dim(),
            found: words.dim(),
        });
    }
    Ok(AlignmentMatrix {
        scores: glosses.as_array().dot(&words.as_array().t()),
    })
}

/// Merge the contextual and static channels according to `cfg`.
///
/// Disabled channels are ignored. With only the static channel enabled the
/// result is the filtered (or scaled) static matrix.
pub fn combine_alignments(
    contextual: Option<&AlignmentMatrix>,
    static_vec: Option<&AlignmentMatrix>,
    cfg: &AlignConfig,
) -> Result<AlignmentMatrix> {
    let contextual = contextual.filter(|_| cfg.use_contextual);
    let static_vec = static_vec.filter(|_| cfg.use_static);
    if let (Some(c), Some(s)) = (contextual, static_vec) {
        if c.scores.dim() != s.scores.dim() {
            return Err(Error::Shape(format!(
                "contextual {} vs static {}",
                c.shape_str(),
                s.shape_str()
            )));
        }
    }
    let filtered = static_vec.map(|s| {
        let alpha = cfg.alpha;
        match cfg.filter_mode {
            FilterMode::Threshold => s.scores.mapv(|v| if v >= alpha { v } else { 0.0 }),
            FilterMode::Scale => s.scores.mapv(|v| alpha * v),
        }
    });
    let scores = match (contextual, filtered) {
        (Some(c), Some(f)) => &c.scores + &f,
        (Some(c), None) => c.scores.clone(),
        (None, Some(f)) => f,
        (None, None) => {
            return Err(Error::Config(
                "no enabled similarity channel was supplied".into(),
            ))
        }
    };
    Ok(AlignmentMatrix { scores })
}

/// Score every gloss against every word of one sentence.
pub fn align(
    words: &[Token],
    glosses: &[Token],
    providers: &Providers,
    cfg: &AlignConfig,
) -> Result<AlignmentMatrix> {
    cfg.validate()?;
    let channel = |enabled: bool, provider: &Option<_>, name: &str| -> Result<Option<AlignmentMatrix>> {
        if !enabled {
            return Ok(None);
        }
        let provider = provider
            .as_ref()
            .ok_or_else(|| Error::Config(format!("{name} channel is enabled but has no provider")))?;
        let y = embed_sequence(provider, glosses);
        let x = embed_sequence(provider, words);
        similarity_matrix(&y, &x).map(Some)
    };
    let contextual = channel(cfg.use_contextual, &providers.contextual, "contextual")?;
    let static_vec = channel(cfg.use_static, &providers.static_channel, "static")?;
    combine_alignments(contextual.as_ref(), static_vec.as_ref(), cfg)
}

/// Scores of every split index `k` of the concatenated gloss sequence:
/// glosses before `k` are credited with their best match in the left
/// sentence, the rest with their best match in the right sentence.
#[derive(Clone, Debug, PartialEq)]
pub struct SplitCurve {
    pub scores: Vec<f64>,
}

impl SplitCurve {
    /// Number of glosses in the concatenated sequence.
    pub fn gloss_count(&self) -> usize {
        self.scores.len().saturating_sub(1)
    }
}

pub fn split_scores(left: &AlignmentMatrix, right: &AlignmentMatrix) -> Result<SplitCurve> {
    let g = left.gloss_count();
    if right.gloss_count() != g {
        return Err(Error::Shape(format!(
            "left matrix has {g} glosses, right has {}",
            right.gloss_count()
        )));
    }
    let left_max: Vec<f64> = (0..g).map(|i| left.row_max(i)).collect();
    let right_max: Vec<f64> = (0..g).map(|i| right.row_max(i)).collect();

    let mut prefix = vec![0.0; g + 1];
    for k in 0..g {
        prefix[k + 1] = prefix[k] + left_max[k];
    }
    let mut suffix = vec![0.0; g + 1];
    for k in (0..g).rev() {
        suffix[k] = suffix[k + 1] + right_max[k];
    }
    Ok(SplitCurve {
        scores: prefix.iter().zip(&suffix).map(|(p, s)| p + s).collect(),
    })
}

/// Arg-max split index. Among scores within [`TIE_TOLERANCE`] of the best,
/// prefer the one closest to `current_k`, then the smaller index.
pub fn best_split(curve: &SplitCurve, current_k: usize) -> usize {
    let best = curve
        .scores
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    curve
        .scores
        .iter()
        .enumerate()
        .filter(|(_, &s)| s >= best - TIE_TOLERANCE)
        .map(|(k, _)| k)
        .min_by_key(|&k| (k.abs_diff(current_k), k))
        .unwrap_or(current_k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{NormalizationConfig, Pair};
    use crate::embeddings::{Provider, StaticTable};

    fn am(rows: &[&[f64]]) -> AlignmentMatrix {
        let w = rows.first().map_or(0, |r| r.len());
        AlignmentMatrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>(), w).unwrap()
    }

    fn emb(rows: &[&[f64]]) -> EmbeddingMatrix {
        let dim = rows[0].len();
        EmbeddingMatrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>(), dim).unwrap()
    }

    #[test]
    fn similarity_examples() {
        let y = emb(&[&[1.0, 0.0], &[0.0, 1.0]]);
        let x = emb(&[&[1.0, 0.0]]);
        let a = similarity_matrix(&y, &x).unwrap();
        assert_eq!(a, am(&[&[1.0], &[0.0]]));

        let x = emb(&[&[0.0, 1.0], &[0.0, 0.0]]);
        let a = similarity_matrix(&y, &x).unwrap();
        assert_eq!(a.get(0, 1), 0.0);
        assert_eq!(a.get(1, 1), 0.0);

        let s = (0.5f64).sqrt();
        let y = emb(&[&[1.0, 0.0, 0.0], &[0.0, s, s], &[0.0, -s, s]]);
        let a = similarity_matrix(&y, &y).unwrap();
        for i in 0..3 {
            assert!((a.get(i, i) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn similarity_dim_mismatch() {
        let y = emb(&[&[1.0, 0.0]]);
        let x = emb(&[&[1.0, 0.0, 0.0]]);
        assert!(matches!(similarity_matrix(&y, &x), Err(Error::DimMismatch { .. })));
    }

    #[test]
    fn combine_examples() {
        let bert = am(&[&[0.5]]);
        let cfg = AlignConfig::default();
        let out = combine_alignments(Some(&bert), Some(&am(&[&[0.95]])), &cfg).unwrap();
        assert!((out.get(0, 0) - 1.45).abs() < 1e-12);
        let out = combine_alignments(Some(&bert), Some(&am(&[&[0.80]])), &cfg).unwrap();
        assert_eq!(out.get(0, 0), 0.5);
        let scale = AlignConfig {
            filter_mode: FilterMode::Scale,
            ..cfg.clone()
        };
        let out = combine_alignments(Some(&bert), Some(&am(&[&[0.95]])), &scale).unwrap();
        assert!((out.get(0, 0) - 1.355).abs() < 1e-12);
    }

    #[test]
    fn combine_single_channel_and_shape_errors() {
        let bert = am(&[&[0.5, 0.2]]);
        let vec = am(&[&[0.95, 0.3]]);
        let only_ctx = AlignConfig {
            use_static: false,
            ..AlignConfig::default()
        };
        assert_eq!(combine_alignments(Some(&bert), Some(&vec), &only_ctx).unwrap(), bert);
        let only_static = AlignConfig::static_only();
        assert_eq!(
            combine_alignments(Some(&bert), Some(&vec), &only_static).unwrap(),
            am(&[&[0.95, 0.0]])
        );
        assert!(combine_alignments(Some(&bert), Some(&am(&[&[0.1]])), &AlignConfig::default()).is_err());
        assert!(combine_alignments(None, None, &AlignConfig::default()).is_err());
    }

    #[test]
    fn config_validation() {
        let cfg = AlignConfig {
            alpha: 1.5,
            ..AlignConfig::default()
        };
        assert!(cfg.validate().is_err());
        let cfg = AlignConfig {
            use_static: false,
            use_contextual: false,
            ..AlignConfig::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn split_curve_one_hot_fixture() {
        // g1, g2 belong to the left sentence, g3 to the right.
        let left = am(&[&[1.0, 0.0], &[0.0, 1.0], &[0.0, 0.0]]);
        let right = am(&[&[0.0], &[0.0], &[1.0]]);
        let curve = split_scores(&left, &right).unwrap();
        assert_eq!(curve.scores, vec![1.0, 2.0, 3.0, 2.0]);
        assert_eq!(best_split(&curve, 2), 2);
        assert_eq!(best_split(&curve, 0), 2);
    }

    #[test]
    fn split_curve_degenerate_inputs() {
        let curve = split_scores(&AlignmentMatrix::zeros(3, 2), &AlignmentMatrix::zeros(3, 4)).unwrap();
        assert_eq!(curve.scores, vec![0.0; 4]);
        assert_eq!(best_split(&curve, 1), 1);

        let curve = split_scores(&AlignmentMatrix::zeros(0, 2), &AlignmentMatrix::zeros(0, 4)).unwrap();
        assert_eq!(curve.scores, vec![0.0]);
        assert_eq!(best_split(&curve, 0), 0);

        // empty sentence: max over no words is 0
        let curve = split_scores(&AlignmentMatrix::zeros(2, 0), &am(&[&[0.5], &[0.7]])).unwrap();
        assert_eq!(curve.scores, vec![1.2, 0.7, 0.0]);

        assert!(split_scores(&AlignmentMatrix::zeros(2, 1), &AlignmentMatrix::zeros(3, 1)).is_err());
    }

    #[test]
    fn negative_maxima_are_not_clamped() {
        let left = am(&[&[-0.5, -0.25]]);
        let right = am(&[&[-0.75]]);
        let curve = split_scores(&left, &right).unwrap();
        assert_eq!(curve.scores, vec![-0.75, -0.25]);
    }

    #[test]
    fn best_split_tie_break() {
        let curve = SplitCurve {
            scores: vec![0.0, 5.0, 5.0],
        };
        assert_eq!(best_split(&curve, 0), 1);
        assert_eq!(best_split(&curve, 2), 2);
        let curve = SplitCurve {
            scores: vec![5.0, 1.0, 5.0],
        };
        // equidistant: smaller index wins
        assert_eq!(best_split(&curve, 1), 0);
    }

    #[test]
    fn align_lexical_matches_food_factory_example() {
        let mut table = StaticTable::new(4);
        table.insert("food", vec![1.0, 0.0, 0.0, 0.0]).unwrap();
        table.insert("factory", vec![0.0, 1.0, 0.0, 0.0]).unwrap();
        table.insert("bread", vec![0.0, 0.0, 1.0, 0.0]).unwrap();
        table.insert("make", vec![0.0, 0.0, 0.0, 1.0]).unwrap();
        table.insert("barn", vec![0.3, 0.3, 0.3, 0.3]).unwrap();
        let providers = Providers::static_only(Provider::Static(table));
        let mut pair = Pair::from_strings(
            "s1",
            "I've set up my own food factory inside this barn",
            "FOOD FACTORY BREAD MAKE",
        );
        let mut corpus = crate::corpus::Corpus::new(vec![pair.clone()]);
        corpus.normalize(&NormalizationConfig::default());
        pair = corpus.pairs.remove(0);
        let a = align(&pair.text, &pair.glosses, &providers, &AlignConfig::static_only()).unwrap();
        assert_eq!((a.gloss_count(), a.word_count()), (4, 10));
        assert_eq!(a.get(0, 5), 1.0);
        assert_eq!(a.get(1, 6), 1.0);
        assert_eq!(a.row_max(2), 0.0);
        assert_eq!(a.row_max(3), 0.0);

        let empty = align(&pair.text, &[], &providers, &AlignConfig::static_only()).unwrap();
        assert_eq!((empty.gloss_count(), empty.word_count()), (0, 10));

        let mut oov = Pair::from_strings("s2", "food factory", "QQQ ZZZ");
        for t in &mut oov.glosses {
            t.normalized = t.surface.to_lowercase();
        }
        let z = align(&pair.text, &oov.glosses, &providers, &AlignConfig::static_only()).unwrap();
        assert!(z.scores().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn align_requires_provider_for_enabled_channel() {
        let providers = Providers::static_only(Provider::Synthetic { dim: 8, seed: 1 });
        let r = align(&[], &[], &providers, &AlignConfig::default());
        assert!(matches!(r, Err(Error::Config(_))));
    }

    #[test]
    fn heatmap_csv() {
        let pair = Pair::from_strings("s", "food barn", "FOOD");
        let a = am(&[&[1.0, 0.25]]);
        let mut out = Vec::new();
        a.write_csv(&mut out, &pair.glosses, &pair.text).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "gloss,food,barn\nFOOD,1,0.25\n");
    }
}
