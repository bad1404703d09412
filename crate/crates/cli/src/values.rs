//! Flag values that name files or parameter families, and loading them.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use bucketzip::{
    AlphabetKind, BucketCode, BucketPartition, CodeKind, ModelBinding, NGramModel, PartitionSpec, PerturbMode,
    PredictiveDistribution, Predictor, Rational, ReplaySource, TokenAlphabet, TokenId,
};

use crate::error::{read, CliError, CliResult};

#[derive(Debug, Clone, PartialEq)]
pub enum ModelSpec {
    NGram(PathBuf),
    Replay(PathBuf),
}

impl FromStr for ModelSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.split_once(':') {
            Some(("ngram", p)) if !p.is_empty() => Ok(ModelSpec::NGram(p.into())),
            Some(("replay", p)) if !p.is_empty() => Ok(ModelSpec::Replay(p.into())),
            _ => Err(format!("expected ngram:<path> or replay:<path>, got {s:?}")),
        }
    }
}

pub enum Model {
    NGram { model: NGramModel, sha256: [u8; 32] },
    Replay(ReplaySource),
}

impl ModelSpec {
    pub fn load(&self) -> CliResult<Model> {
        match self {
            ModelSpec::NGram(p) => {
                let model = NGramModel::from_bytes(&read(p)?)?;
                let sha256 = model.content_hash();
                Ok(Model::NGram { model, sha256 })
            }
            ModelSpec::Replay(p) => Ok(Model::Replay(ReplaySource::from_bytes(&read(p)?)?)),
        }
    }
}

impl Model {
    pub fn binding(&self) -> ModelBinding {
        match self {
            Model::NGram { sha256, .. } => ModelBinding::NGram { sha256: *sha256 },
            Model::Replay(r) => ModelBinding::Replay {
                alphabet_size: r.alphabet_size(),
                records: r.records() as u64,
            },
        }
    }

    /// The decoder-side model may be a different replay recording, so for
    /// replay only the shape is checked.
    pub fn check_binding(&self, stored: &ModelBinding, tokens: u64) -> CliResult<()> {
        match (self.binding(), stored) {
            (ModelBinding::NGram { sha256: ours }, ModelBinding::NGram { sha256 }) if ours == *sha256 => Ok(()),
            (ModelBinding::NGram { .. }, ModelBinding::NGram { .. }) => Err(CliError::ModelBinding(
                "n-gram model hash differs from the one used to compress".into(),
            )),
            (
                ModelBinding::Replay {
                    alphabet_size: a,
                    records,
                },
                ModelBinding::Replay { alphabet_size, .. },
            ) => {
                if a != *alphabet_size {
                    Err(CliError::ModelBinding(format!(
                        "replay alphabet {a}, container expects {alphabet_size}"
                    )))
                } else if records < tokens {
                    Err(CliError::ModelBinding(format!(
                        "replay has {records} records for {tokens} tokens"
                    )))
                } else {
                    Ok(())
                }
            }
            (_, ModelBinding::None) => Ok(()),
            (ours, theirs) => Err(CliError::ModelBinding(format!(
                "container bound to {theirs:?}, got {ours:?}"
            ))),
        }
    }
}

impl Predictor for Model {
    fn alphabet_size(&self) -> u32 {
        match self {
            Model::NGram { model, .. } => model.alphabet_size(),
            Model::Replay(r) => r.alphabet_size(),
        }
    }

    fn next_distribution(&self, position: usize, context: &[TokenId]) -> bucketzip::Result<PredictiveDistribution> {
        match self {
            Model::NGram { model, .. } => model.next_distribution(position, context),
            Model::Replay(r) => r.next_distribution(position, context),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum AlphabetSpec {
    Byte,
    Words(PathBuf),
    Ids(u32),
}

impl FromStr for AlphabetSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.split_once(':') {
            None if s == "byte" => Ok(AlphabetSpec::Byte),
            Some(("words", p)) if !p.is_empty() => Ok(AlphabetSpec::Words(p.into())),
            Some(("ids", n)) => n
                .parse()
                .map(AlphabetSpec::Ids)
                .map_err(|_| format!("bad alphabet size {n:?}")),
            _ => Err(format!("expected byte, words:<dictionary> or ids:<size>, got {s:?}")),
        }
    }
}

impl AlphabetSpec {
    pub fn load(&self) -> CliResult<TokenAlphabet> {
        match self {
            AlphabetSpec::Byte => Ok(TokenAlphabet::bytes()),
            AlphabetSpec::Ids(n) => Ok(TokenAlphabet::external(*n)?),
            AlphabetSpec::Words(p) => {
                let text = String::from_utf8(read(p)?)
                    .map_err(|_| CliError::Usage(format!("{}: dictionary is not UTF-8", p.display())))?;
                Ok(TokenAlphabet::from_dictionary_text(&text)?)
            }
        }
    }

    /// Alphabet a container header describes; word alphabets need the
    /// dictionary from the command line.
    pub fn for_header(given: Option<&AlphabetSpec>, kind: AlphabetKind, size: u32) -> CliResult<TokenAlphabet> {
        let alphabet = match (kind, given) {
            (AlphabetKind::Byte, _) => TokenAlphabet::bytes(),
            (AlphabetKind::External, _) => TokenAlphabet::external(size)?,
            (AlphabetKind::Word, Some(spec @ AlphabetSpec::Words(_))) => spec.load()?,
            (AlphabetKind::Word, _) => {
                return Err(CliError::Usage(
                    "container uses a word alphabet; pass --alphabet words:<dictionary>".into(),
                ))
            }
        };
        if alphabet.size() != size {
            return Err(CliError::ModelBinding(format!(
                "alphabet has {} tokens, container expects {size}",
                alphabet.size()
            )));
        }
        Ok(alphabet)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum BucketsSpec {
    Geometric { gamma: Rational, count: u16 },
    File(PathBuf),
}

impl Default for BucketsSpec {
    fn default() -> Self {
        match PartitionSpec::default_geometric() {
            PartitionSpec::Geometric { gamma, count } => BucketsSpec::Geometric { gamma, count },
            PartitionSpec::Explicit(_) => unreachable!(),
        }
    }
}

impl FromStr for BucketsSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if let Some(p) = s.strip_prefix("file:") {
            return Ok(BucketsSpec::File(p.into()));
        }
        let parts: Vec<&str> = s.split(':').collect();
        match parts.as_slice() {
            ["geometric", gamma, count] => {
                let gamma: Rational = gamma.parse().map_err(|e| format!("{e}"))?;
                if gamma.num() >= gamma.den() {
                    return Err(format!("geometric ratio {gamma} must be below 1 (e.g. 1/8)"));
                }
                let count = count.parse().map_err(|_| format!("bad bucket count {count:?}"))?;
                Ok(BucketsSpec::Geometric { gamma, count })
            }
            _ => Err(format!("expected geometric:<gamma>:<K> or file:<path>, got {s:?}")),
        }
    }
}

impl BucketsSpec {
    pub fn load(&self) -> CliResult<BucketPartition> {
        match self {
            BucketsSpec::Geometric { gamma, count } => Ok(BucketPartition::geometric(*gamma, *count)?),
            BucketsSpec::File(p) => Ok(BucketPartition::new(PartitionSpec::Explicit(read_boundaries(p)?))?),
        }
    }
}

/// One interior boundary per line, ascending; `#` starts a comment.
pub fn read_boundaries(path: &Path) -> CliResult<Vec<f64>> {
    let text = String::from_utf8_lossy(&read(path)?).into_owned();
    content_lines(&text)
        .map(|l| {
            l.parse::<f64>()
                .map_err(|_| CliError::Usage(format!("{}: bad boundary {l:?}", path.display())))
        })
        .collect()
}

pub fn format_boundaries(boundaries: &[f64], comment: &str) -> String {
    let mut s = format!("# {comment}\n");
    for b in boundaries {
        s.push_str(&format!("{b:e}\n"));
    }
    s
}

fn content_lines(text: &str) -> impl Iterator<Item = &str> {
    text.lines()
        .map(|l| l.split('#').next().unwrap_or("").trim())
        .filter(|l| !l.is_empty())
}

#[derive(Debug, Clone, PartialEq)]
pub enum CodeSpec {
    Unary,
    Huffman(PathBuf),
}

impl FromStr for CodeSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.split_once(':') {
            None if s == "unary" => Ok(CodeSpec::Unary),
            Some(("huffman", p)) if !p.is_empty() => Ok(CodeSpec::Huffman(p.into())),
            _ => Err(format!("expected unary or huffman:<path>, got {s:?}")),
        }
    }
}

impl CodeSpec {
    pub fn load(&self, buckets: usize) -> CliResult<BucketCode> {
        match self {
            CodeSpec::Unary => Ok(BucketCode::unary(buckets)?),
            CodeSpec::Huffman(p) => {
                let text = String::from_utf8_lossy(&read(p)?).into_owned();
                let lengths = content_lines(&text)
                    .find_map(|l| l.strip_prefix("lengths="))
                    .ok_or_else(|| CliError::Usage(format!("{}: no lengths= line", p.display())))?
                    .split(',')
                    .map(|v| v.trim().parse::<u8>())
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(|_| CliError::Usage(format!("{}: bad code length", p.display())))?;
                if lengths.len() != buckets {
                    return Err(CliError::Usage(format!(
                        "{}: code has {} lengths for {buckets} buckets",
                        p.display(),
                        lengths.len()
                    )));
                }
                Ok(BucketCode::from_lengths(CodeKind::Huffman, lengths)?)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerturbSpec {
    pub c_sim: Rational,
    pub mode: PerturbMode,
    pub seed: u64,
}

impl FromStr for PerturbSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let parts: Vec<&str> = s.split(':').collect();
        let [c, mode, seed] = parts.as_slice() else {
            return Err(format!("expected <c_sim>:<certified|stress>:<seed>, got {s:?}"));
        };
        let c_sim: Rational = c.parse().map_err(|e| format!("{e}"))?;
        if c_sim.num() < c_sim.den() {
            return Err(format!("c_sim = {c_sim} must be at least 1"));
        }
        Ok(PerturbSpec {
            c_sim,
            mode: mode.parse().map_err(|e| format!("{e}"))?,
            seed: seed.parse().map_err(|_| format!("bad seed {seed:?}"))?,
        })
    }
}

/// Mismatch factor from `--c` or `--q`, defaulting to `c = 10/3`.
pub fn mismatch(c: Option<Rational>, q: Option<Rational>) -> CliResult<Rational> {
    let c = match (c, q) {
        (Some(c), None) => c,
        (None, Some(q)) => q.recip(),
        (None, None) => Rational::new(10, 3)?,
        (Some(_), Some(_)) => return Err(CliError::Usage("give --c or --q, not both".into())),
    };
    if c.num() < c.den() {
        return Err(CliError::Usage(format!("c = {c} must be at least 1 (q at most 1)")));
    }
    Ok(c)
}
