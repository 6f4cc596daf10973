mod manifest;

use std::collections::HashSet;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use glossalign::corrupt::offset_reference;
use glossalign::{
    attach_embeddings, bleu1_corpus, bleu1_sentence_average, gloss_misalign, load_contextual_cache,
    load_corpus, load_static_vectors, offset_by_one, run_alignment, write_corpus, AlignConfig,
    Corpus, CorpusFormat, CorruptionSpec, EvalConfig, FilterMode, NormalizationConfig, Provider,
    Providers, SweepConfig,
};

use manifest::{InputFile, RunManifest};

#[derive(Parser)]
#[command(name = "glossalign", version, about = "Re-align sign-language glosses to subtitle sentences")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Re-split gloss sequences between adjacent sentences.
    Align(AlignArgs),
    /// Corrupt gloss assignments to simulate spotting misalignment.
    Corrupt(CorruptArgs),
    /// Score a gloss assignment against a reference with BLEU-1.
    Eval(EvalArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Jsonl,
    Tsv,
}

impl From<FormatArg> for CorpusFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Jsonl => CorpusFormat::Jsonl,
            FormatArg::Tsv => CorpusFormat::Tsv,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum FilterArg {
    Threshold,
    Scale,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Offset,
    Gloss,
}

#[derive(clap::Args)]
struct AlignArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Static word vectors in the `<count> <dim>` text format.
    #[arg(long)]
    static_vecs: Option<PathBuf>,
    /// Contextual embedding cache (JSONL).
    #[arg(long)]
    ctx_cache: Option<PathBuf>,
    /// Use deterministic synthetic vectors of this width as the static channel.
    #[arg(long, requires = "seed")]
    synthetic_dim: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 0.9)]
    alpha: f64,
    #[arg(long, default_value_t = 8)]
    max_passes: usize,
    #[arg(long, value_enum, default_value = "threshold")]
    filter_mode: FilterArg,
    /// Keep sweeping after a pass that moves nothing.
    #[arg(long)]
    no_early_stop: bool,
    /// Ground-truth corpus; adds BLEU-1 to every report row.
    #[arg(long)]
    reference: Option<PathBuf>,
    /// Per-pass CSV report.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Defaults to `<out>.manifest.json`.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Corpus file format; inferred from the extension when omitted.
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
    /// Strip gloss variant suffixes (`HAUS1A*` -> `haus`).
    #[arg(long)]
    strip_variants: bool,
    /// One word per line; enables compound splitting of glosses.
    #[arg(long)]
    compound_lexicon: Option<PathBuf>,
    #[arg(long, default_value_t = 4)]
    min_part_len: usize,
}

#[derive(clap::Args)]
struct CorruptArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum)]
    mode: ModeArg,
    #[arg(long)]
    seed: Option<u64>,
    /// Corruption log (JSON).
    #[arg(long)]
    log: Option<PathBuf>,
    /// Also write the ground truth matching the corrupted corpus.
    #[arg(long)]
    reference_out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
}

#[derive(clap::Args)]
struct EvalArgs {
    #[arg(long)]
    candidate: PathBuf,
    #[arg(long)]
    reference: PathBuf,
    /// Write the full result as JSON.
    #[arg(long)]
    json: Option<PathBuf>,
    /// Compare glosses case-sensitively.
    #[arg(long)]
    case_sensitive: bool,
    /// Average per-pair BLEU-1 instead of the corpus-level score.
    #[arg(long)]
    sentence_average: bool,
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
}

enum Failure {
    Usage(String),
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

impl From<glossalign::Error> for Failure {
    fn from(e: glossalign::Error) -> Self {
        Failure::Runtime(e.into())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Align(args) => cmd_align(args),
        Command::Corrupt(args) => cmd_corrupt(args),
        Command::Eval(args) => cmd_eval(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn format_for(path: &Path, arg: Option<FormatArg>) -> CorpusFormat {
    arg.map_or_else(|| CorpusFormat::from_path(path), Into::into)
}

fn read_corpus_file(path: &Path, format: Option<FormatArg>) -> Result<Corpus> {
    load_corpus(path, format_for(path, format)).with_context(|| format!("loading corpus {}", path.display()))
}

fn read_lexicon(path: &Path) -> Result<HashSet<String>> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut words = HashSet::new();
    for line in BufReader::new(file).lines() {
        let line = line?;
        let w = line.trim();
        if !w.is_empty() {
            words.insert(w.to_lowercase());
        }
    }
    Ok(words)
}

fn cmd_align(args: AlignArgs) -> Result<(), Failure> {
    if !(0.0..=1.0).contains(&args.alpha) {
        return Err(Failure::Usage(format!("--alpha must lie in [0, 1], got {}", args.alpha)));
    }
    if args.max_passes == 0 {
        return Err(Failure::Usage("--max-passes must be at least 1".into()));
    }
    if args.static_vecs.is_some() && args.synthetic_dim.is_some() {
        return Err(Failure::Usage(
            "--static-vecs and --synthetic-dim both fill the static channel; pick one".into(),
        ));
    }
    if args.synthetic_dim.is_some_and(|d| d < 2) {
        return Err(Failure::Usage("--synthetic-dim must be at least 2".into()));
    }
    if args.static_vecs.is_none() && args.synthetic_dim.is_none() && args.ctx_cache.is_none() {
        return Err(Failure::Usage(
            "no embedding source: give --static-vecs, --ctx-cache or --synthetic-dim".into(),
        ));
    }

    let norm = NormalizationConfig {
        strip_variant_markers: args.strip_variants,
    };
    let lexicon = args.compound_lexicon.as_deref().map(read_lexicon).transpose()?;
    let prepare = |mut c: Corpus| {
        c.normalize(&norm);
        if let Some(lex) = &lexicon {
            c.split_gloss_compounds(lex, args.min_part_len);
        }
        c
    };

    let mut corpus = prepare(read_corpus_file(&args.corpus, args.format)?);
    let reference = match &args.reference {
        Some(p) => Some(prepare(read_corpus_file(p, args.format)?)),
        None => None,
    };

    let mut inputs = vec![InputFile::hash("corpus", &args.corpus)?];
    let static_channel = match (&args.static_vecs, args.synthetic_dim) {
        (Some(path), _) => {
            let vocab: HashSet<String> = corpus
                .pairs
                .iter()
                .flat_map(|p| p.text.iter().chain(&p.glosses))
                .map(|t| t.normalized.clone())
                .collect();
            let table = load_static_vectors(path, Some(&vocab))
                .with_context(|| format!("loading static vectors {}", path.display()))?;
            inputs.push(InputFile::hash("static_vecs", path)?);
            Some(Provider::Static(table))
        }
        (None, Some(dim)) => Some(Provider::Synthetic {
            dim,
            seed: args.seed.expect("clap enforces --seed"),
        }),
        (None, None) => None,
    };
    let contextual = match &args.ctx_cache {
        Some(path) => {
            let loaded = load_contextual_cache(path)
                .with_context(|| format!("loading contextual cache {}", path.display()))?;
            if loaded.duplicates > 0 {
                eprintln!(
                    "warning: {} duplicate cache records in {} (last one kept)",
                    loaded.duplicates,
                    path.display()
                );
            }
            inputs.push(InputFile::hash("ctx_cache", path)?);
            Some(Provider::Contextual(loaded.cache))
        }
        None => None,
    };
    if let Some(p) = &args.reference {
        inputs.push(InputFile::hash("reference", p)?);
    }
    if let Some(p) = &args.compound_lexicon {
        inputs.push(InputFile::hash("compound_lexicon", p)?);
    }

    let cfg = SweepConfig {
        max_passes: args.max_passes,
        stop_on_no_moves: !args.no_early_stop,
        align: AlignConfig {
            alpha: args.alpha,
            use_static: static_channel.is_some(),
            use_contextual: contextual.is_some(),
            filter_mode: match args.filter_mode {
                FilterArg::Threshold => FilterMode::Threshold,
                FilterArg::Scale => FilterMode::Scale,
            },
        },
        eval: EvalConfig::default(),
    };
    let providers = Providers {
        static_channel,
        contextual,
    };
    attach_embeddings(&mut corpus, &providers);

    let (aligned, report) = run_alignment(corpus, &providers, &cfg, reference.as_ref())?;

    let out_format = format_for(&args.out, args.format);
    write_corpus(&aligned, &args.out, out_format)
        .with_context(|| format!("writing {}", args.out.display()))?;
    let mut outputs = vec![args.out.clone()];
    if let Some(path) = &args.report {
        let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
        report.write_csv(&mut w)?;
        w.flush().context("writing report")?;
        outputs.push(path.clone());
    }

    for p in &report.passes {
        let bleu = p.bleu1().map(|b| format!(" bleu1={b:.2}")).unwrap_or_default();
        eprintln!(
            "pass {} {}: {} boundaries moved, {} glosses{bleu}",
            p.pass,
            p.direction_label(),
            p.boundary_moves,
            p.glosses_moved
        );
    }

    let manifest_path = args.manifest.clone().unwrap_or_else(|| manifest::default_path(&args.out));
    let mut m = RunManifest::new(
        "align",
        json!({
            "sweep": cfg,
            "normalization": { "strip_variant_markers": args.strip_variants },
            "compound_min_part_len": lexicon.as_ref().map(|_| args.min_part_len),
            "synthetic_dim": args.synthetic_dim,
            "format": out_format.to_string(),
        }),
        args.seed,
    );
    m.inputs = inputs;
    m.outputs = outputs;
    m.passes = report.passes;
    m.write_atomic(&manifest_path)?;
    Ok(())
}

fn cmd_corrupt(args: CorruptArgs) -> Result<(), Failure> {
    if matches!(args.mode, ModeArg::Gloss) && args.seed.is_none() {
        return Err(Failure::Usage("--mode gloss requires --seed".into()));
    }
    let original = read_corpus_file(&args.corpus, args.format)?;
    let (corrupted, reference, log) = match args.mode {
        ModeArg::Offset => {
            let dropped = original.pairs.last().map_or(0, |p| p.glosses.len());
            let log = json!({ "mode": "offset", "dropped_glosses": dropped });
            (offset_by_one(&original), offset_reference(&original), log)
        }
        ModeArg::Gloss => {
            let spec = CorruptionSpec::new(args.seed.expect("checked above"));
            let (c, log) = gloss_misalign(&original, &spec)?;
            eprintln!(
                "moved {} glosses to the previous pair and {} to the next; {} draws skipped",
                log.moved_to_previous,
                log.moved_to_next,
                log.skipped()
            );
            let log = json!({ "mode": "gloss", "spec": spec, "log": log });
            (c, original.clone(), log)
        }
    };

    let format = format_for(&args.out, args.format);
    write_corpus(&corrupted, &args.out, format).with_context(|| format!("writing {}", args.out.display()))?;
    let mut outputs = vec![args.out.clone()];
    if let Some(path) = &args.reference_out {
        write_corpus(&reference, path, format_for(path, args.format))
            .with_context(|| format!("writing {}", path.display()))?;
        outputs.push(path.clone());
    }
    if let Some(path) = &args.log {
        let text = serde_json::to_string_pretty(&log).context("serializing log")?;
        fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))?;
        outputs.push(path.clone());
    }

    let mode = match args.mode {
        ModeArg::Offset => "offset",
        ModeArg::Gloss => "gloss",
    };
    let mut m = RunManifest::new("corrupt", json!({ "mode": mode }), args.seed);
    m.inputs = vec![InputFile::hash("corpus", &args.corpus)?];
    m.outputs = outputs;
    m.write_atomic(&manifest::default_path(&args.out))?;
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> Result<(), Failure> {
    let candidate = read_corpus_file(&args.candidate, args.format)?;
    let reference = read_corpus_file(&args.reference, args.format)?;
    let cfg = EvalConfig {
        case_fold: !args.case_sensitive,
    };
    let result = bleu1_corpus(&candidate, &reference, &cfg)?;
    let shown = if args.sentence_average {
        bleu1_sentence_average(&candidate, &reference, &cfg)?
    } else {
        result.bleu1
    };
    println!("{shown:.2}");
    if let Some(path) = &args.json {
        let mut value = serde_json::to_value(&result).context("serializing result")?;
        if args.sentence_average {
            value["sentence_average_bleu1"] = json!(shown);
        }
        let text = serde_json::to_string_pretty(&value).context("serializing result")?;
        fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}
