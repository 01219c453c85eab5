//! Corpus manifests and the download cache.
//!
//! Layout: `<cache>/<corpus>/<file>` plus `<cache>/<corpus>/SHA256SUMS`,
//! written on first fetch and checked on every later use.

use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};
use thiserror::Error;

/// Environment variable overriding the cache directory.
pub const CACHE_ENV: &str = "NRG_CACHE_DIR";

#[derive(Debug, Error)]
pub enum FetchError {
    #[error("{file}: not cached and download failed: {reason}")]
    Network { file: String, reason: String },
    #[error("{file}: checksum mismatch (pinned {pinned}, found {found})")]
    Checksum { file: String, pinned: String, found: String },
    #[error("{file}: expected {expected} bytes, found {found}")]
    Length { file: String, expected: usize, found: usize },
    #[error("{0}: no such file")]
    Missing(PathBuf),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> FetchError + '_ {
    move |source| FetchError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CorpusName {
    Dna,
    Canterbury,
}

enum Source {
    /// Gzipped tarball holding every file at its top level.
    Tarball(&'static str),
    /// One URL per file: base followed by the file name.
    PerFile(&'static str),
}

impl CorpusName {
    pub fn dir(self) -> &'static str {
        match self {
            CorpusName::Dna => "dna",
            CorpusName::Canterbury => "canterbury",
        }
    }

    /// File names and byte lengths.
    pub fn files(self) -> &'static [(&'static str, usize)] {
        match self {
            CorpusName::Dna => &[
                ("chmpxx", 121_024),
                ("chntxx", 155_844),
                ("hehcmvcg", 229_354),
                ("humdystrop", 38_770),
                ("humghcsa", 66_495),
                ("humhbb", 73_308),
                ("humhdabcd", 58_864),
                ("humprtb", 56_737),
                ("mpomtcg", 186_609),
                ("mtpacga", 100_314),
                ("vaccg", 191_737),
            ],
            CorpusName::Canterbury => &[
                ("alice29.txt", 152_089),
                ("asyoulik.txt", 125_179),
                ("cp.html", 24_603),
                ("fields.c", 11_150),
                ("grammar.lsp", 3_721),
                ("kennedy.xls", 1_029_744),
                ("lcet10.txt", 426_754),
                ("plrabn12.txt", 481_861),
                ("ptt5", 513_216),
                ("sum", 38_240),
                ("xargs.1", 4_227),
            ],
        }
    }

    fn source(self) -> Source {
        match self {
            CorpusName::Dna => Source::PerFile("http://people.unipmn.it/~manzini/dnacorpus/historical/"),
            CorpusName::Canterbury => Source::Tarball("http://corpus.canterbury.ac.nz/resources/cantrbry.tar.gz"),
        }
    }
}

impl std::str::FromStr for CorpusName {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "dna" => Ok(CorpusName::Dna),
            "canterbury" => Ok(CorpusName::Canterbury),
            _ => Err(format!("unknown corpus `{s}` (expected dna or canterbury)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum CorpusSel {
    Named(CorpusName),
    Paths(Vec<PathBuf>),
}

/// `$NRG_CACHE_DIR`, else `$XDG_CACHE_HOME/nrg`, else `~/.cache/nrg`.
pub fn default_cache_dir() -> PathBuf {
    if let Some(d) = std::env::var_os(CACHE_ENV) {
        return PathBuf::from(d);
    }
    if let Some(d) = std::env::var_os("XDG_CACHE_HOME") {
        return PathBuf::from(d).join("nrg");
    }
    let home = std::env::var_os("HOME").map_or_else(|| PathBuf::from("."), PathBuf::from);
    home.join(".cache").join("nrg")
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

struct Pins {
    path: PathBuf,
    entries: Vec<(String, String)>,
}

impl Pins {
    fn load(dir: &Path) -> Result<Self, FetchError> {
        let path = dir.join("SHA256SUMS");
        let mut entries = Vec::new();
        if path.exists() {
            for line in fs::read_to_string(&path).map_err(io(&path))?.lines() {
                if let Some((sum, name)) = line.split_once("  ") {
                    entries.push((name.to_string(), sum.to_string()));
                }
            }
        }
        Ok(Pins { path, entries })
    }

    fn get(&self, name: &str) -> Option<&str> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, s)| s.as_str())
    }

    fn pin(&mut self, name: &str, sum: String) -> Result<(), FetchError> {
        self.entries.push((name.to_string(), sum));
        self.entries.sort();
        let text: String = self.entries.iter().map(|(n, s)| format!("{s}  {n}\n")).collect();
        fs::write(&self.path, text).map_err(io(&self.path))
    }

    /// Checks `bytes` against the pin for `name`, pinning it if new.
    fn verify(&mut self, name: &str, bytes: &[u8]) -> Result<(), FetchError> {
        let found = sha256_hex(bytes);
        match self.get(name) {
            Some(p) if p != found => Err(FetchError::Checksum {
                file: name.to_string(),
                pinned: p.to_string(),
                found,
            }),
            Some(_) => Ok(()),
            None => self.pin(name, found),
        }
    }
}

fn download(url: &str) -> Result<Vec<u8>, String> {
    let resp = ureq::get(url).call().map_err(|e| e.to_string())?;
    let mut out = Vec::new();
    resp.into_body().into_reader().read_to_end(&mut out).map_err(|e| e.to_string())?;
    Ok(out)
}

fn unpack(tgz: &[u8], wanted: &[(&str, usize)], dir: &Path) -> Result<(), String> {
    let mut ar = tar::Archive::new(flate2::read::GzDecoder::new(tgz));
    for entry in ar.entries().map_err(|e| e.to_string())? {
        let mut entry = entry.map_err(|e| e.to_string())?;
        let path = entry.path().map_err(|e| e.to_string())?.into_owned();
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else {
            continue;
        };
        if wanted.iter().any(|(w, _)| *w == name) {
            let mut buf = Vec::new();
            entry.read_to_end(&mut buf).map_err(|e| e.to_string())?;
            fs::write(dir.join(name), buf).map_err(|e| e.to_string())?;
        }
    }
    Ok(())
}

/// Status of one manifest file in the cache, without touching the network.
#[derive(Clone, Debug)]
pub struct CachedFile {
    pub name: &'static str,
    pub expected_len: usize,
    pub path: Option<PathBuf>,
}

/// Files of `corpus` already present in `cache` with the expected length
/// and pinned checksum.
pub fn cached(corpus: CorpusName, cache: &Path) -> Result<Vec<CachedFile>, FetchError> {
    let dir = cache.join(corpus.dir());
    let mut pins = if dir.exists() { Some(Pins::load(&dir)?) } else { None };
    let mut out = Vec::new();
    for &(name, len) in corpus.files() {
        let p = dir.join(name);
        let path = match (&mut pins, fs::read(&p)) {
            (Some(pins), Ok(bytes)) if bytes.len() == len => {
                pins.verify(name, &bytes)?;
                Some(p)
            }
            _ => None,
        };
        out.push(CachedFile {
            name,
            expected_len: len,
            path,
        });
    }
    Ok(out)
}

/// Local paths of every file of the selection, downloading missing files
/// into `cache` when `network` is set.
pub fn fetch_corpus(sel: &CorpusSel, cache: &Path, network: bool) -> Result<Vec<PathBuf>, FetchError> {
    let corpus = match sel {
        CorpusSel::Paths(ps) => {
            return ps
                .iter()
                .map(|p| {
                    if p.is_file() {
                        Ok(p.clone())
                    } else {
                        Err(FetchError::Missing(p.clone()))
                    }
                })
                .collect();
        }
        CorpusSel::Named(c) => *c,
    };
    let dir = cache.join(corpus.dir());
    fs::create_dir_all(&dir).map_err(io(&dir))?;
    let files = corpus.files();
    let missing: Vec<&(&str, usize)> = files.iter().filter(|(n, _)| !dir.join(n).exists()).collect();
    if !missing.is_empty() {
        let fail = |file: &str, reason: String| FetchError::Network {
            file: file.to_string(),
            reason,
        };
        if !network {
            return Err(fail(missing[0].0, "network access disabled".into()));
        }
        match corpus.source() {
            Source::Tarball(url) => {
                let tgz = download(url).map_err(|e| fail(missing[0].0, format!("{url}: {e}")))?;
                unpack(&tgz, files, &dir).map_err(|e| fail(missing[0].0, format!("{url}: {e}")))?;
            }
            Source::PerFile(base) => {
                for (name, _) in missing {
                    let url = format!("{base}{name}");
                    let bytes = download(&url).map_err(|e| fail(name, format!("{url}: {e}")))?;
                    let p = dir.join(name);
                    fs::write(&p, bytes).map_err(io(&p))?;
                }
            }
        }
    }
    let mut pins = Pins::load(&dir)?;
    let mut out = Vec::with_capacity(files.len());
    for &(name, len) in files {
        let p = dir.join(name);
        let bytes = fs::read(&p).map_err(|_| FetchError::Missing(p.clone()))?;
        if bytes.len() != len {
            return Err(FetchError::Length {
                file: name.to_string(),
                expected: len,
                found: bytes.len(),
            });
        }
        pins.verify(name, &bytes)?;
        out.push(p);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cache_hit_needs_no_network_and_pins() {
        let tmp = tempfile::tempdir().unwrap();
        let dir = tmp.path().join("canterbury");
        fs::create_dir_all(&dir).unwrap();
        for &(name, len) in CorpusName::Canterbury.files() {
            fs::write(dir.join(name), vec![b'x'; len]).unwrap();
        }
        let sel = CorpusSel::Named(CorpusName::Canterbury);
        let a = fetch_corpus(&sel, tmp.path(), false).unwrap();
        assert_eq!(a.len(), 11);
        assert!(dir.join("SHA256SUMS").exists());
        assert_eq!(fetch_corpus(&sel, tmp.path(), false).unwrap(), a);

        fs::write(dir.join("sum"), vec![b'y'; 38_240]).unwrap();
        assert!(matches!(fetch_corpus(&sel, tmp.path(), false), Err(FetchError::Checksum { .. })));
        fs::write(dir.join("sum"), b"short").unwrap();
        assert!(matches!(fetch_corpus(&sel, tmp.path(), false), Err(FetchError::Length { .. })));
    }

    #[test]
    fn cache_miss_without_network() {
        let tmp = tempfile::tempdir().unwrap();
        let sel = CorpusSel::Named(CorpusName::Dna);
        assert!(matches!(fetch_corpus(&sel, tmp.path(), false), Err(FetchError::Network { .. })));
        let c = cached(CorpusName::Dna, tmp.path()).unwrap();
        assert_eq!(c.len(), 11);
        assert_eq!(c[0].expected_len, 121_024);
        assert!(c.iter().all(|f| f.path.is_none()));
    }

    #[test]
    fn custom_paths_pass_through() {
        let tmp = tempfile::tempdir().unwrap();
        let p = tmp.path().join("a.txt");
        fs::write(&p, b"abc").unwrap();
        let sel = CorpusSel::Paths(vec![p.clone()]);
        assert_eq!(fetch_corpus(&sel, tmp.path(), false).unwrap(), vec![p]);
        let sel = CorpusSel::Paths(vec![tmp.path().join("nope")]);
        assert!(matches!(fetch_corpus(&sel, tmp.path(), false), Err(FetchError::Missing(_))));
    }
}
