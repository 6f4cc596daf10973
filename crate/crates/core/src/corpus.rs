//! Parallel text/gloss corpora: data model, JSONL/TSV serialization, token
//! normalization and compound splitting.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

/// Which side of a pair a token belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Side {
    Word,
    Gloss,
}

impl Side {
    /// Name used in contextual cache records.
    pub fn cache_name(self) -> &'static str {
        match self {
            Side::Word => "text",
            Side::Gloss => "gloss",
        }
    }
}

/// Where a token was first embedded: sequence id and position in it.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Origin {
    pub seq_id: String,
    pub position: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Token {
    pub surface: String,
    /// Lookup key. Empty until the corpus is normalized.
    pub normalized: String,
    pub side: Side,
    pub static_emb: Option<Vec<f64>>,
    pub ctx_emb: Option<Vec<f64>>,
    pub origin: Origin,
}

impl Token {
    pub fn new(surface: impl Into<String>, side: Side, origin: Origin) -> Self {
        Token {
            surface: surface.into(),
            normalized: String::new(),
            side,
            static_emb: None,
            ctx_emb: None,
            origin,
        }
    }
}

/// One subtitle sentence and the glosses currently assigned to it.
#[derive(Clone, Debug, PartialEq)]
pub struct Pair {
    pub id: String,
    pub text: Vec<Token>,
    pub glosses: Vec<Token>,
    pub meta: Option<BTreeMap<String, Value>>,
}

impl Pair {
    /// Build a pair by whitespace-tokenizing `text` and `glosses`. Token
    /// origins point at this pair.
    pub fn from_strings(id: impl Into<String>, text: &str, glosses: &str) -> Self {
        let id = id.into();
        let text = tokenize(text, Side::Word, &id);
        let glosses = tokenize(glosses, Side::Gloss, &id);
        Pair {
            id,
            text,
            glosses,
            meta: None,
        }
    }

    pub fn text_string(&self) -> String {
        join_surfaces(&self.text)
    }

    pub fn gloss_string(&self) -> String {
        join_surfaces(&self.glosses)
    }
}

fn tokenize(s: &str, side: Side, id: &str) -> Vec<Token> {
    s.split_whitespace()
        .enumerate()
        .map(|(position, surface)| {
            Token::new(
                surface,
                side,
                Origin {
                    seq_id: id.to_string(),
                    position,
                },
            )
        })
        .collect()
}

fn join_surfaces(tokens: &[Token]) -> String {
    let mut out = String::new();
    for (i, t) in tokens.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        out.push_str(&t.surface);
    }
    out
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Corpus {
    pub pairs: Vec<Pair>,
}

impl Corpus {
    pub fn new(pairs: Vec<Pair>) -> Self {
        Corpus { pairs }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// All gloss tokens in corpus order.
    pub fn gloss_stream(&self) -> impl Iterator<Item = &Token> {
        self.pairs.iter().flat_map(|p| p.glosses.iter())
    }

    pub fn gloss_count(&self) -> usize {
        self.pairs.iter().map(|p| p.glosses.len()).sum()
    }

    /// Fill in `normalized` for every word and gloss token.
    pub fn normalize(&mut self, cfg: &NormalizationConfig) {
        for pair in &mut self.pairs {
            for tok in pair.text.iter_mut().chain(pair.glosses.iter_mut()) {
                tok.normalized = normalize_token(&tok.surface, tok.side, cfg);
            }
        }
    }

    /// Replace each gloss token that decomposes over `lexicon` by one token
    /// per part. Parts inherit the origin of the compound.
    pub fn split_gloss_compounds(&mut self, lexicon: &HashSet<String>, min_part_len: usize) {
        for pair in &mut self.pairs {
            let mut out = Vec::with_capacity(pair.glosses.len());
            for tok in pair.glosses.drain(..) {
                let key = if tok.normalized.is_empty() {
                    tok.surface.to_lowercase()
                } else {
                    tok.normalized.clone()
                };
                let parts = split_compounds(&key, lexicon, min_part_len);
                if parts.len() < 2 {
                    out.push(tok);
                    continue;
                }
                let upper = tok.surface.chars().any(char::is_uppercase)
                    && !tok.surface.chars().any(char::is_lowercase);
                for part in parts {
                    let surface = if upper { part.to_uppercase() } else { part.clone() };
                    out.push(Token {
                        surface,
                        normalized: part,
                        side: Side::Gloss,
                        static_emb: None,
                        ctx_emb: None,
                        origin: tok.origin.clone(),
                    });
                }
            }
            pair.glosses = out;
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CorpusFormat {
    Jsonl,
    Tsv,
}

impl CorpusFormat {
    /// Guess from the file extension; anything but `.tsv` is JSONL.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("tsv") => CorpusFormat::Tsv,
            _ => CorpusFormat::Jsonl,
        }
    }
}

impl FromStr for CorpusFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "jsonl" => Ok(CorpusFormat::Jsonl),
            "tsv" => Ok(CorpusFormat::Tsv),
            other => Err(Error::Config(format!("unknown corpus format `{other}`"))),
        }
    }
}

impl fmt::Display for CorpusFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CorpusFormat::Jsonl => "jsonl",
            CorpusFormat::Tsv => "tsv",
        })
    }
}

#[derive(Serialize, Deserialize)]
struct Record {
    id: String,
    text: String,
    glosses: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    meta: Option<BTreeMap<String, Value>>,
}

const TSV_HEADER: &str = "id\ttext\tglosses";

pub fn load_corpus(path: impl AsRef<Path>, format: CorpusFormat) -> Result<Corpus> {
    let reader = BufReader::new(File::open(path)?);
    read_corpus(reader, format)
}

/// Parse a corpus from a reader. Tokens are split on whitespace and left
/// unnormalized.
pub fn read_corpus<R: BufRead>(reader: R, format: CorpusFormat) -> Result<Corpus> {
    let mut pairs = Vec::new();
    let mut seen = HashSet::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        let line = line.strip_suffix('\r').unwrap_or(&line);
        if line.trim().is_empty() {
            continue;
        }
        let record = match format {
            CorpusFormat::Jsonl => serde_json::from_str::<Record>(line)
                .map_err(|e| Error::parse(lineno, e.to_string()))?,
            CorpusFormat::Tsv => {
                if lineno == 1 && line == TSV_HEADER {
                    continue;
                }
                let fields: Vec<&str> = line.split('\t').collect();
                if fields.len() != 3 {
                    return Err(Error::parse(
                        lineno,
                        format!("expected 3 tab-separated fields, found {}", fields.len()),
                    ));
                }
                Record {
                    id: fields[0].to_string(),
                    text: fields[1].to_string(),
                    glosses: fields[2].to_string(),
                    meta: None,
                }
            }
        };
        if !seen.insert(record.id.clone()) {
            return Err(Error::DuplicateId {
                id: record.id,
                line: lineno,
            });
        }
        let mut pair = Pair::from_strings(record.id, &record.text, &record.glosses);
        pair.meta = record.meta;
        pairs.push(pair);
    }
    Ok(Corpus { pairs })
}

/// Write a corpus. Embeddings are not serialized; TSV drops `meta`.
pub fn write_corpus(corpus: &Corpus, path: impl AsRef<Path>, format: CorpusFormat) -> Result<()> {
    let mut writer = BufWriter::new(File::create(path)?);
    write_corpus_to(corpus, &mut writer, format)?;
    writer.flush()?;
    Ok(())
}

pub fn write_corpus_to<W: Write>(corpus: &Corpus, writer: &mut W, format: CorpusFormat) -> Result<()> {
    if format == CorpusFormat::Tsv {
        writeln!(writer, "{TSV_HEADER}")?;
    }
    for pair in &corpus.pairs {
        match format {
            CorpusFormat::Jsonl => {
                let record = Record {
                    id: pair.id.clone(),
                    text: pair.text_string(),
                    glosses: pair.gloss_string(),
                    meta: pair.meta.clone(),
                };
                let line = serde_json::to_string(&record)
                    .map_err(|e| Error::Io(std::io::Error::other(e)))?;
                writeln!(writer, "{line}")?;
            }
            CorpusFormat::Tsv => {
                if pair.id.contains(['\t', '\n', '\r']) {
                    return Err(Error::Config(format!(
                        "pair id `{}` cannot be written as TSV",
                        pair.id
                    )));
                }
                writeln!(writer, "{}\t{}\t{}", pair.id, pair.text_string(), pair.gloss_string())?;
            }
        }
    }
    Ok(())
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct NormalizationConfig {
    /// Remove gloss variant suffixes such as `1A`, trailing digits and
    /// `*`/`^` markers. Useful for DGS-style gloss labels.
    pub strip_variant_markers: bool,
}

impl NormalizationConfig {
    pub fn with_variant_stripping() -> Self {
        NormalizationConfig {
            strip_variant_markers: true,
        }
    }
}

/// Lowercase, trim surrounding punctuation and (optionally, glosses only)
/// strip variant annotations.
///
/// Lowercasing keeps one char per input char, so the result is never longer
/// than the input in chars. Variant stripping never consumes a whole token:
/// `"1A"` stays `"1a"`.
pub fn normalize_token(surface: &str, side: Side, cfg: &NormalizationConfig) -> String {
    let lowered: String = surface
        .chars()
        .map(|c| c.to_lowercase().next().unwrap_or(c))
        .collect();
    let trimmed = lowered.trim_matches(|c: char| !c.is_alphanumeric());
    if side == Side::Gloss && cfg.strip_variant_markers {
        let stripped = strip_variant_suffix(trimmed);
        if stripped.is_empty() {
            trimmed.to_string()
        } else {
            stripped.to_string()
        }
    } else {
        trimmed.to_string()
    }
}

fn strip_variant_suffix(s: &str) -> &str {
    let mut cur = s;
    loop {
        let before = cur.len();
        cur = cur.trim_end_matches(|c: char| !c.is_alphanumeric());
        let mut chars = cur.char_indices().rev();
        if let Some((last_idx, last)) = chars.next() {
            if last.is_ascii_digit() {
                cur = cur.trim_end_matches(|c: char| c.is_ascii_digit());
            } else if last.is_alphabetic() {
                if let Some((_, prev)) = chars.next() {
                    if prev.is_ascii_digit() {
                        cur = cur[..last_idx].trim_end_matches(|c: char| c.is_ascii_digit());
                    }
                }
            }
        }
        if cur.len() == before {
            return cur;
        }
    }
}

/// Single characters that may join two compound parts (German Fugenelemente).
pub const LINKING_ELEMENTS: [char; 3] = ['s', 'n', 'e'];

/// Greedy longest-match decomposition of `token` into lexicon words of at
/// least `min_part_len` chars, optionally joined by one linking character.
///
/// Prefixes are tried longest first and the search backtracks when the rest
/// cannot be decomposed. Returns `[token]` when no full decomposition exists.
pub fn split_compounds(token: &str, lexicon: &HashSet<String>, min_part_len: usize) -> Vec<String> {
    let chars: Vec<char> = token.chars().collect();
    let min_part_len = min_part_len.max(1);
    let mut dead_ends = HashSet::new();
    match decompose(&chars, 0, lexicon, min_part_len, &mut dead_ends) {
        Some(parts) => parts,
        None => vec![token.to_string()],
    }
}

fn decompose(
    chars: &[char],
    start: usize,
    lexicon: &HashSet<String>,
    min_len: usize,
    dead_ends: &mut HashSet<usize>,
) -> Option<Vec<String>> {
    if dead_ends.contains(&start) {
        return None;
    }
    let len = chars.len();
    let mut end = len;
    while end >= start + min_len {
        let part: String = chars[start..end].iter().collect();
        if lexicon.contains(&part) {
            if end == len {
                return Some(vec![part]);
            }
            let mut next_starts = vec![end];
            if end + 1 < len && LINKING_ELEMENTS.contains(&chars[end]) {
                next_starts.push(end + 1);
            }
            for next in next_starts {
                if let Some(mut rest) = decompose(chars, next, lexicon, min_len, dead_ends) {
                    rest.insert(0, part);
                    return Some(rest);
                }
            }
        }
        end -= 1;
    }
    dead_ends.insert(start);
    None
}
