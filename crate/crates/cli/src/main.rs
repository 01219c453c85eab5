use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use nrg_bench::corpus::{default_cache_dir, fetch_corpus, CorpusName, CorpusSel, FetchError};
use nrg_bench::run::{bracket_sweep, run_bench, stats, to_json_lines, to_table, verify, Algorithm, BenchConfig};
use nrg_bench::synthetic::{framed, FramedSpec};
use nrg_core::bracket::{extract_brackets, score, write_tsv, BracketKind, Corpus, GoldTreebank, LeafToken, Scores};
use nrg_core::encoder::{decode, encode, format_stream_text, parse_stream_text, read_nrg, write_nrg};
use nrg_core::error::Error as CoreError;
use nrg_core::grammar::{AlphabetMode, Encoding, Grammar, Sequence};
use nrg_core::inference::{greedy, nrgreedy_fix_with, post_process, NrGreedyOptions, RunTrace};
use nrg_core::interchange::{parse_grammar, write_grammar};
use nrg_core::synth::{generate_bytes, TableSpec};

/// Failure categories, reported through the exit code.
enum Fail {
    Io(String),
    Format(String),
    Verify(String),
    Other(String),
}

impl Fail {
    fn code(&self) -> u8 {
        match self {
            Fail::Other(_) => 1,
            Fail::Io(_) => 3,
            Fail::Format(_) => 4,
            Fail::Verify(_) => 5,
        }
    }

    fn report(&self) -> String {
        match self {
            Fail::Io(m) => format!("io error: {m}"),
            Fail::Format(m) => format!("format error: {m}"),
            Fail::Verify(m) => format!("verification failed: {m}"),
            Fail::Other(m) => format!("error: {m}"),
        }
    }
}

impl From<CoreError> for Fail {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::Parse { .. } | CoreError::Stream { .. } => Fail::Format(e.to_string()),
            _ => Fail::Other(e.to_string()),
        }
    }
}

type Res<T> = Result<T, Fail>;

fn read(p: &Path) -> Res<Vec<u8>> {
    fs::read(p).map_err(|e| Fail::Io(format!("{}: {e}", p.display())))
}

fn read_text(p: &Path) -> Res<String> {
    String::from_utf8(read(p)?).map_err(|_| Fail::Format(format!("{}: not UTF-8", p.display())))
}

fn write(p: &Path, bytes: &[u8]) -> Res<()> {
    fs::write(p, bytes).map_err(|e| Fail::Io(format!("{}: {e}", p.display())))
}

fn stdout(bytes: &[u8]) -> Res<()> {
    let mut out = std::io::stdout().lock();
    out.write_all(bytes)
        .and_then(|_| out.flush())
        .map_err(|e| Fail::Io(format!("stdout: {e}")))
}

#[derive(Parser)]
#[command(name = "nrg", version, about = "Infer small non-recursive grammars from a single sequence")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum Algo {
    Greedy,
    NrgreedyFix,
}

#[derive(Clone, Copy, ValueEnum)]
enum EncodingArg {
    Fixed,
    Variable,
}

impl From<EncodingArg> for Encoding {
    fn from(e: EncodingArg) -> Self {
        match e {
            EncodingArg::Fixed => Encoding::Fixed,
            EncodingArg::Variable => Encoding::Variable,
        }
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Length, alphabet size and repeated substrings per symbol of a file.
    Stats {
        input: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Infer a grammar for INPUT and write it in the text grammar format.
    Infer {
        #[arg(long, value_enum, default_value = "greedy")]
        algo: Algo,
        #[arg(long)]
        max_iter: Option<usize>,
        /// Largest gap searched by nrgreedy-fix.
        #[arg(long)]
        max_gap: Option<usize>,
        /// Treat the input as whitespace-separated tokens.
        #[arg(long)]
        tokens: bool,
        /// Grammar output (default: INPUT.grammar).
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Write one JSON record per step.
        #[arg(long)]
        trace: Option<PathBuf>,
        input: PathBuf,
    },
    /// Generalize a straight-line grammar with branching rules.
    Post {
        #[arg(long)]
        grammar: PathBuf,
        #[arg(long)]
        max_iter: Option<usize>,
        /// Grammar output (default: GRAMMAR with extension .post.grammar).
        #[arg(short, long)]
        output: Option<PathBuf>,
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Encode a grammar as a symbol stream.
    Encode {
        #[arg(long)]
        grammar: PathBuf,
        #[arg(long, value_enum, default_value = "fixed")]
        encoding: EncodingArg,
        /// Write the readable stream text instead of the binary format.
        #[arg(long)]
        text: bool,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Decode a stream and write the sequence it derives.
    Decode {
        input: PathBuf,
        /// Read stream text (as written by `encode --text`) instead of binary.
        #[arg(long)]
        text: bool,
        /// Alphabet of a text stream.
        #[arg(long)]
        tokens: bool,
        #[arg(long, value_enum, default_value = "fixed")]
        encoding: EncodingArg,
        /// Also write the decoded grammar here.
        #[arg(long)]
        grammar: Option<PathBuf>,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Score the brackets of a grammar against gold trees.
    Brackets {
        #[arg(long)]
        grammar: PathBuf,
        /// One sentence per line, tokens separated by whitespace.
        #[arg(long)]
        corpus: PathBuf,
        /// Bracketed parse trees.
        #[arg(long)]
        gold: PathBuf,
        /// Use the preterminal labels of the gold trees as tokens.
        #[arg(long)]
        tags: bool,
        /// Write predictions as TSV.
        #[arg(long)]
        predictions: Option<PathBuf>,
        #[arg(long)]
        json: bool,
    },
    /// Generate a random fixed-field table.
    SynthTable {
        #[arg(long)]
        rows: usize,
        #[arg(long)]
        cols: usize,
        #[arg(long)]
        width: usize,
        #[arg(long)]
        fill: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Grammar sizes over a corpus, each verified by a decode round trip.
    Bench {
        /// `dna`, `canterbury`, or file paths.
        #[arg(long, num_args = 1.., required_unless_present = "sweep")]
        corpus: Vec<String>,
        #[arg(long, value_delimiter = ',', default_value = "greedy,post")]
        algorithms: Vec<String>,
        #[arg(long)]
        max_iter: Option<usize>,
        /// Cache directory (default: $NRG_CACHE_DIR or ~/.cache/nrg).
        #[arg(long)]
        cache_dir: Option<PathBuf>,
        /// Never download; use the cache only.
        #[arg(long)]
        offline: bool,
        /// Line-delimited JSON records instead of a table.
        #[arg(long)]
        json: bool,
        /// Bracket sweep over greedy stopping points, e.g. `100,1000,10000`.
        /// Without `--sentences` the framed synthetic treebank is used.
        #[arg(long, value_delimiter = ',')]
        sweep: Option<Vec<usize>>,
        #[arg(long, requires_all = ["sweep", "gold"])]
        sentences: Option<PathBuf>,
        #[arg(long, requires_all = ["sweep", "sentences"])]
        gold: Option<PathBuf>,
        #[arg(long)]
        tags: bool,
    },
}

fn sequence(bytes: &[u8], tokens: bool) -> Res<Sequence> {
    if tokens {
        let text = std::str::from_utf8(bytes).map_err(|_| Fail::Format("token input is not UTF-8".into()))?;
        Ok(Sequence::from_text(text))
    } else {
        Ok(Sequence::from_bytes(bytes))
    }
}

fn write_trace(path: Option<&Path>, trace: &RunTrace) -> Res<()> {
    let Some(p) = path else { return Ok(()) };
    let mut out = String::new();
    for s in &trace.steps {
        out.push_str(&serde_json::to_string(s).expect("step serializes"));
        out.push('\n');
    }
    write(p, out.as_bytes())
}

fn load_grammar(p: &Path) -> Res<Grammar> {
    Ok(parse_grammar(&read_text(p)?)?)
}

fn save_grammar(p: &Path, g: &Grammar) -> Res<()> {
    write(p, write_grammar(g)?.as_bytes())
}

fn scores_table(s: &Scores) -> String {
    let mut out = format!(
        "{:<13} {:>9} {:>9} {:>9} {:>10} {:>13}\n",
        "kind", "extracted", "scored", "matched", "precision", "non-crossing"
    );
    let rows = BracketKind::ALL.iter().map(|k| (k.name(), s.kind(*k))).chain([("all", &s.all)]);
    for (name, r) in rows {
        out.push_str(&format!(
            "{:<13} {:>9} {:>9} {:>9} {:>9.2}% {:>12.2}%\n",
            name,
            r.extracted,
            r.scored,
            r.matched,
            100.0 * r.precision(),
            100.0 * r.non_crossing_pct()
        ));
    }
    out
}

fn gold(path: &Path, tags: bool) -> Res<GoldTreebank> {
    let leaf = if tags { LeafToken::Tag } else { LeafToken::Word };
    Ok(GoldTreebank::parse(&read_text(path)?, leaf)?)
}

fn run(cmd: Cmd) -> Res<()> {
    match cmd {
        Cmd::Stats { input, json } => {
            let s = stats(&Sequence::from_bytes(&read(&input)?));
            let text = if json {
                serde_json::to_string(&s).expect("stats serialize") + "\n"
            } else {
                format!(
                    "length {}\nalphabet {}\nrepeats/length {:.2}\n",
                    s.length, s.alphabet, s.repeats_per_length
                )
            };
            stdout(text.as_bytes())
        }
        Cmd::Infer {
            algo,
            max_iter,
            max_gap,
            tokens,
            output,
            trace,
            input,
        } => {
            let bytes = read(&input)?;
            let s = sequence(&bytes, tokens)?;
            let inferred = match algo {
                Algo::Greedy => greedy(&s, max_iter)?,
                Algo::NrgreedyFix => {
                    let mut opts = NrGreedyOptions {
                        max_iterations: max_iter,
                        ..NrGreedyOptions::default()
                    };
                    if max_gap.is_some() {
                        opts.search.max_gap = max_gap;
                    }
                    nrgreedy_fix_with(&s, opts)?
                }
            };
            let size = inferred.trace.final_size();
            verify(&inferred.grammar, &s.to_bytes(), size).map_err(Fail::Verify)?;
            let out = output.unwrap_or_else(|| input.with_extension("grammar"));
            save_grammar(&out, &inferred.grammar)?;
            write_trace(trace.as_deref(), &inferred.trace)?;
            stdout(format!("{size}\n").as_bytes())
        }
        Cmd::Post {
            grammar,
            max_iter,
            output,
            trace,
        } => {
            let g = load_grammar(&grammar)?;
            let before = g.expand_sequence()?.to_bytes();
            let p = post_process(&g, max_iter)?;
            verify(&p.grammar, &before, p.trace.final_size()).map_err(Fail::Verify)?;
            let out = output.unwrap_or_else(|| grammar.with_extension("post.grammar"));
            save_grammar(&out, &p.grammar)?;
            write_trace(trace.as_deref(), &p.trace)?;
            stdout(format!("{} {} n_ctx {}\n", p.trace.initial_size, p.trace.final_size(), p.n_ctx).as_bytes())
        }
        Cmd::Encode {
            grammar,
            encoding,
            text,
            output,
        } => {
            let g = load_grammar(&grammar)?;
            let stream = encode(&g, encoding.into())?;
            if text {
                write(&output, (format_stream_text(&stream) + "\n").as_bytes())?;
            } else {
                write(&output, &write_nrg(&stream))?;
            }
            stdout(format!("{}\n", stream.len()).as_bytes())
        }
        Cmd::Decode {
            input,
            text,
            tokens,
            encoding,
            grammar,
            output,
        } => {
            let stream = if text {
                let mode = if tokens { AlphabetMode::Token } else { AlphabetMode::Byte };
                parse_stream_text(&read_text(&input)?, mode, encoding.into())?
            } else {
                read_nrg(&read(&input)?)?
            };
            let (g, _) = decode(&stream)?;
            if let Some(p) = grammar {
                save_grammar(&p, &g)?;
            }
            let bytes = g.expand_sequence()?.to_bytes();
            match output {
                Some(p) => write(&p, &bytes),
                None => stdout(&bytes),
            }
        }
        Cmd::Brackets {
            grammar,
            corpus,
            gold: gold_path,
            tags,
            predictions,
            json,
        } => {
            let g = load_grammar(&grammar)?;
            let corpus = Corpus::from_lines(&read_text(&corpus)?);
            let gold = gold(&gold_path, tags)?;
            let b = extract_brackets(&g, &corpus).map_err(|e| match e {
                CoreError::Bracket(m) => Fail::Verify(m),
                e => e.into(),
            })?;
            if let Some(p) = predictions {
                write(&p, write_tsv(&b).as_bytes())?;
            }
            let s = score(&b, &gold).map_err(|e| Fail::Verify(e.to_string()))?;
            let text = if json {
                serde_json::to_string(&s).expect("scores serialize") + "\n"
            } else {
                scores_table(&s)
            };
            stdout(text.as_bytes())
        }
        Cmd::SynthTable {
            rows,
            cols,
            width,
            fill,
            seed,
            out,
        } => {
            let spec = TableSpec {
                rows,
                cols,
                field_width: width,
                fill_ratio: fill,
                seed,
            };
            spec.validate().map_err(Fail::Other)?;
            let bytes = generate_bytes(&spec);
            write(&out, &bytes)?;
            stdout(format!("{}\n", bytes.len()).as_bytes())
        }
        Cmd::Bench {
            corpus,
            algorithms,
            max_iter,
            cache_dir,
            offline,
            json,
            sweep,
            sentences,
            gold: gold_path,
            tags,
        } => {
            if let Some(grid) = sweep {
                let (corpus, gold) = match (sentences, gold_path) {
                    (Some(s), Some(g)) => (Corpus::from_lines(&read_text(&s)?), gold(&g, tags)?),
                    _ => framed(&FramedSpec::default()),
                };
                let points = bracket_sweep(&corpus, &gold, &grid).map_err(Fail::Other)?;
                let mut out = String::new();
                for p in &points {
                    out.push_str(&serde_json::to_string(p).expect("sweep point serializes"));
                    out.push('\n');
                }
                return stdout(out.as_bytes());
            }
            let algorithms = algorithms
                .iter()
                .filter(|a| !a.is_empty())
                .map(|a| a.parse::<Algorithm>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(Fail::Other)?;
            let sel = match corpus.as_slice() {
                [one] if one == "dna" || one == "canterbury" => CorpusSel::Named(one.parse::<CorpusName>().map_err(Fail::Other)?),
                paths => CorpusSel::Paths(paths.iter().map(PathBuf::from).collect()),
            };
            let cache = cache_dir.unwrap_or_else(default_cache_dir);
            let files = fetch_corpus(&sel, &cache, !offline).map_err(|e| match e {
                FetchError::Checksum { .. } | FetchError::Length { .. } => Fail::Verify(e.to_string()),
                e => Fail::Io(e.to_string()),
            })?;
            let reports = run_bench(
                &files,
                &BenchConfig {
                    algorithms,
                    max_iterations: max_iter,
                },
            );
            let text = if json { to_json_lines(&reports) } else { to_table(&reports) };
            stdout(text.as_bytes())?;
            match reports.iter().find_map(|r| r.error.as_ref().map(|e| (&r.file, e))) {
                Some((f, e)) if e.contains("decode") || e.contains("size") => Err(Fail::Verify(format!("{f}: {e}"))),
                Some((f, e)) => Err(Fail::Other(format!("{f}: {e}"))),
                None => Ok(()),
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("nrg: {}", f.report());
            ExitCode::from(f.code())
        }
    }
}
