//! Re-assign sign-language gloss tokens to the subtitle sentences they
//! translate.
//!
//! Glosses and words are embedded (static word vectors and/or precomputed
//! contextual vectors), compared with cosine similarity, and adjacent gloss
//! sequences are greedily re-split at the boundary that maximizes the summed
//! per-gloss best match. Forward and backward sweeps over the corpus repeat
//! the pairwise re-split until no boundary moves.
//!
//! The crate also contains seeded corruption simulators and corpus-level
//! BLEU-1 scoring used to evaluate alignment runs.

pub mod align;
pub mod corpus;
pub mod corrupt;
pub mod embeddings;
pub mod eval;
pub mod sweep;

mod error;

pub use align::{
    align, best_split, combine_alignments, similarity_matrix, split_scores, AlignConfig,
    AlignmentMatrix, FilterMode, SplitCurve,
};
pub use corpus::{
    load_corpus, normalize_token, split_compounds, write_corpus, Corpus, CorpusFormat,
    NormalizationConfig, Origin, Pair, Side, Token,
};
pub use corrupt::{gloss_misalign, offset_by_one, CorruptionEvent, CorruptionLog, CorruptionSpec};
pub use embeddings::{
    attach_embeddings, embed_sequence, load_contextual_cache, load_static_vectors, synthetic_embed,
    Channel, ContextCache, EmbeddingMatrix, Provider, Providers, StaticTable,
};
pub use error::{Error, Result};
pub use eval::{bleu1_corpus, bleu1_sentence_average, emit_report, EvalConfig, EvalResult};
pub use sweep::{
    realign_pair, run_alignment, sweep_pass, Direction, PassRecord, SweepConfig, SweepReport,
};
