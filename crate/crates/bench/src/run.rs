//! Per-file statistics and grammar sizes, every size re-verified by a
//! decode round trip before it is reported.

use std::path::{Path, PathBuf};
use std::time::Instant;

use nrg_core::bracket::{extract_brackets, score, Corpus, GoldTreebank, Scores};
use nrg_core::encoder::{decode, encode, stream_length};
use nrg_core::grammar::{Encoding, Grammar, Sequence};
use nrg_core::inference::{greedy, nrgreedy_fix, post_process};
use nrg_core::repeat::repeat_counts;
use rayon::prelude::*;
use serde::Serialize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    Greedy,
    NrgreedyFix,
    /// Post-processing of the greedy grammar.
    Post,
}

impl std::str::FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "greedy" => Ok(Algorithm::Greedy),
            "nrgreedy-fix" => Ok(Algorithm::NrgreedyFix),
            "post" => Ok(Algorithm::Post),
            _ => Err(format!("unknown algorithm `{s}` (expected greedy, nrgreedy-fix or post)")),
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct BenchConfig {
    pub algorithms: Vec<Algorithm>,
    pub max_iterations: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Stats {
    pub length: usize,
    pub alphabet: usize,
    /// Distinct substrings occurring at least twice, per input symbol.
    pub repeats_per_length: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AlgoResult {
    pub size: usize,
    pub steps: usize,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PostResult {
    pub size: usize,
    /// Size change relative to the greedy grammar (negative is smaller).
    pub delta: i64,
    pub n_ctx: usize,
    pub seconds: f64,
}

/// One structured record per input file.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FileReport {
    pub file: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stats: Option<Stats>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub greedy: Option<AlgoResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nrgreedy_fix: Option<AlgoResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub post: Option<PostResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Checks that `g` encodes to `size` symbols and decodes back to `source`.
pub fn verify(g: &Grammar, source: &[u8], size: usize) -> Result<(), String> {
    let enc = Encoding::Fixed;
    let len = stream_length(g, enc).map_err(|e| e.to_string())?;
    let stream = encode(g, enc).map_err(|e| e.to_string())?;
    if len != size || stream.len() != size {
        return Err(format!("reported size {size}, stream length {len}, encoded {}", stream.len()));
    }
    let (back, _) = decode(&stream).map_err(|e| e.to_string())?;
    let bytes = back.expand_sequence().map_err(|e| e.to_string())?.to_bytes();
    if bytes != source {
        return Err("decoded grammar does not reproduce the input".into());
    }
    Ok(())
}

pub fn stats(s: &Sequence) -> Stats {
    let symbols: Vec<u32> = s.to_bytes().iter().map(|&b| b as u32).collect();
    let r = repeat_counts(&symbols);
    Stats {
        length: s.len(),
        alphabet: s.distinct(),
        repeats_per_length: r.distinct as f64 / s.len().max(1) as f64,
    }
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let t = Instant::now();
    let out = f();
    (out, t.elapsed().as_secs_f64())
}

fn run_one(path: &Path, cfg: &BenchConfig) -> Result<FileReport, String> {
    let bytes = std::fs::read(path).map_err(|e| format!("{}: {e}", path.display()))?;
    if bytes.is_empty() {
        return Err("empty file".into());
    }
    let s = Sequence::from_bytes(&bytes);
    let mut rep = FileReport {
        file: path
            .file_name()
            .map_or_else(|| path.display().to_string(), |n| n.to_string_lossy().into_owned()),
        stats: Some(stats(&s)),
        greedy: None,
        nrgreedy_fix: None,
        post: None,
        error: None,
    };
    let want = |a| cfg.algorithms.contains(&a);
    if want(Algorithm::Greedy) || want(Algorithm::Post) {
        let (g, secs) = timed(|| greedy(&s, cfg.max_iterations));
        let g = g.map_err(|e| format!("greedy: {e}"))?;
        let size = g.trace.final_size();
        verify(&g.grammar, &bytes, size).map_err(|e| format!("greedy: {e}"))?;
        if want(Algorithm::Post) {
            let (p, psecs) = timed(|| post_process(&g.grammar, None));
            let p = p.map_err(|e| format!("post: {e}"))?;
            let psize = p.trace.final_size();
            verify(&p.grammar, &bytes, psize).map_err(|e| format!("post: {e}"))?;
            rep.post = Some(PostResult {
                size: psize,
                delta: psize as i64 - size as i64,
                n_ctx: p.n_ctx,
                seconds: psecs,
            });
        }
        rep.greedy = Some(AlgoResult {
            size,
            steps: g.trace.steps.len(),
            seconds: secs,
        });
    }
    if want(Algorithm::NrgreedyFix) {
        let (g, secs) = timed(|| nrgreedy_fix(&s));
        let g = g.map_err(|e| format!("nrgreedy-fix: {e}"))?;
        let size = g.trace.final_size();
        verify(&g.grammar, &bytes, size).map_err(|e| format!("nrgreedy-fix: {e}"))?;
        rep.nrgreedy_fix = Some(AlgoResult {
            size,
            steps: g.trace.steps.len(),
            seconds: secs,
        });
    }
    Ok(rep)
}

/// Runs every file independently; a failing file yields a record with
/// `error` set. Records are ordered by file name.
pub fn run_bench(files: &[PathBuf], cfg: &BenchConfig) -> Vec<FileReport> {
    let mut out: Vec<FileReport> = files
        .par_iter()
        .map(|p| {
            run_one(p, cfg).unwrap_or_else(|e| FileReport {
                file: p
                    .file_name()
                    .map_or_else(|| p.display().to_string(), |n| n.to_string_lossy().into_owned()),
                stats: None,
                greedy: None,
                nrgreedy_fix: None,
                post: None,
                error: Some(e),
            })
        })
        .collect();
    out.sort_by(|a, b| a.file.cmp(&b.file));
    out
}

/// Line-delimited JSON, one record per file.
pub fn to_json_lines(reports: &[FileReport]) -> String {
    reports
        .iter()
        .map(|r| serde_json::to_string(r).expect("report serializes") + "\n")
        .collect()
}

pub fn to_table(reports: &[FileReport]) -> String {
    let cell = |v: Option<String>| v.unwrap_or_else(|| "-".into());
    let mut out = format!(
        "{:<14} {:>9} {:>4} {:>7} {:>9} {:>9} {:>9} {:>6}\n",
        "file", "length", "|S|", "R/len", "greedy", "nrg-fix", "+post", "#ctx"
    );
    for r in reports {
        if let Some(e) = &r.error {
            out.push_str(&format!("{:<14} error: {e}\n", r.file));
            continue;
        }
        let st = r.stats.as_ref();
        out.push_str(&format!(
            "{:<14} {:>9} {:>4} {:>7} {:>9} {:>9} {:>9} {:>6}\n",
            r.file,
            cell(st.map(|s| s.length.to_string())),
            cell(st.map(|s| s.alphabet.to_string())),
            cell(st.map(|s| format!("{:.2}", s.repeats_per_length))),
            cell(r.greedy.as_ref().map(|g| g.size.to_string())),
            cell(r.nrgreedy_fix.as_ref().map(|g| g.size.to_string())),
            cell(r.post.as_ref().map(|p| p.size.to_string())),
            cell(r.post.as_ref().map(|p| p.n_ctx.to_string())),
        ));
    }
    out
}

/// Bracket quality at one greedy stopping point.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepPoint {
    pub max_iterations: usize,
    pub greedy_steps: usize,
    pub n_ctx: usize,
    pub scores: Scores,
}

/// Stops greedy after each iteration count in `grid`, post-processes and
/// scores the resulting brackets against `gold`.
pub fn bracket_sweep(corpus: &Corpus, gold: &GoldTreebank, grid: &[usize]) -> Result<Vec<SweepPoint>, String> {
    let s = corpus.sequence();
    grid.par_iter()
        .map(|&it| {
            let g = greedy(&s, Some(it)).map_err(|e| e.to_string())?;
            let p = post_process(&g.grammar, None).map_err(|e| e.to_string())?;
            let b = extract_brackets(&p.grammar, corpus).map_err(|e| e.to_string())?;
            Ok(SweepPoint {
                max_iterations: it,
                greedy_steps: g.trace.steps.len(),
                n_ctx: p.n_ctx,
                scores: score(&b, gold).map_err(|e| e.to_string())?,
            })
        })
        .collect()
}
