//! Sentence corpora: normalization, aggregation, TSV I/O and a synthetic
//! Zipfian generator.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};

/// A distinct normalized sentence and how often it occurs.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SentenceRecord {
    pub text: String,
    pub count: u64,
}

impl SentenceRecord {
    pub fn new(text: impl Into<String>, count: u64) -> Self {
        Self {
            text: text.into(),
            count,
        }
    }
}

/// A set of sentences with unique texts.
///
/// Records are kept sorted by text, so two corpora with the same content
/// compare equal regardless of how they were built.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Corpus {
    records: Vec<SentenceRecord>,
    total_count: u64,
}

impl Corpus {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Builds a corpus from `(text, count)` pairs. Texts are taken as given
    /// (callers normalize); duplicates are merged by summing counts and
    /// zero-count or empty-text entries are dropped.
    pub fn from_pairs<I, S>(pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, u64)>,
        S: Into<String>,
    {
        let mut map: HashMap<String, u64> = HashMap::new();
        for (text, count) in pairs {
            add_count(&mut map, text.into(), count)?;
        }
        Self::from_map(map)
    }

    pub fn from_records(records: impl IntoIterator<Item = SentenceRecord>) -> Result<Self> {
        Self::from_pairs(records.into_iter().map(|r| (r.text, r.count)))
    }

    pub(crate) fn from_map(map: HashMap<String, u64>) -> Result<Self> {
        let mut records: Vec<SentenceRecord> = map
            .into_iter()
            .filter(|(t, c)| *c > 0 && !t.is_empty())
            .map(|(text, count)| SentenceRecord { text, count })
            .collect();
        records.sort_unstable_by(|a, b| a.text.cmp(&b.text));
        let mut total: u64 = 0;
        for r in &records {
            total = total
                .checked_add(r.count)
                .ok_or_else(|| Error::CountOverflow(r.text.clone()))?;
        }
        Ok(Self {
            records,
            total_count: total,
        })
    }

    /// Builds from records already known to be unique, non-empty and
    /// positive; only sorting is performed.
    pub(crate) fn from_unique_records(mut records: Vec<SentenceRecord>) -> Self {
        records.retain(|r| r.count > 0);
        records.par_sort_unstable_by(|a, b| a.text.cmp(&b.text));
        let total_count = records.iter().map(|r| r.count).sum();
        Self {
            records,
            total_count,
        }
    }

    /// Records sorted by text.
    pub fn records(&self) -> &[SentenceRecord] {
        &self.records
    }

    pub fn iter(&self) -> std::slice::Iter<'_, SentenceRecord> {
        self.records.iter()
    }

    pub fn total_count(&self) -> u64 {
        self.total_count
    }

    pub fn distinct_count(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, text: &str) -> Option<u64> {
        self.records
            .binary_search_by(|r| r.text.as_str().cmp(text))
            .ok()
            .map(|i| self.records[i].count)
    }

    /// Keeps records satisfying `pred`, counts unchanged.
    pub fn filter(&self, pred: impl Fn(&SentenceRecord) -> bool + Sync) -> Corpus {
        let records: Vec<SentenceRecord> = self
            .records
            .par_iter()
            .filter(|r| pred(r))
            .cloned()
            .collect();
        let total_count = records.iter().map(|r| r.count).sum();
        Corpus {
            records,
            total_count,
        }
    }

    /// Merges two corpora, summing counts of shared texts.
    pub fn merged(&self, other: &Corpus) -> Result<Corpus> {
        Self::from_pairs(
            self.records
                .iter()
                .chain(other.records.iter())
                .map(|r| (r.text.clone(), r.count)),
        )
    }

    /// Records in the canonical on-disk order: count descending, text
    /// ascending.
    pub fn records_by_count(&self) -> Vec<&SentenceRecord> {
        let mut v: Vec<&SentenceRecord> = self.records.iter().collect();
        v.sort_by(|a, b| b.count.cmp(&a.count).then_with(|| a.text.cmp(&b.text)));
        v
    }
}

impl<'a> IntoIterator for &'a Corpus {
    type Item = &'a SentenceRecord;
    type IntoIter = std::slice::Iter<'a, SentenceRecord>;

    fn into_iter(self) -> Self::IntoIter {
        self.records.iter()
    }
}

fn add_count(map: &mut HashMap<String, u64>, text: String, count: u64) -> Result<()> {
    match map.get_mut(&text) {
        Some(slot) => {
            *slot = slot
                .checked_add(count)
                .ok_or_else(|| Error::CountOverflow(text.clone()))?;
        }
        None => {
            map.insert(text, count);
        }
    }
    Ok(())
}

fn merge_maps(mut a: HashMap<String, u64>, b: HashMap<String, u64>) -> Result<HashMap<String, u64>> {
    if a.len() < b.len() {
        return merge_maps(b, a);
    }
    for (text, count) in b {
        add_count(&mut a, text, count)?;
    }
    Ok(a)
}

/// Lowercases, trims, and collapses internal whitespace runs to one space.
pub fn normalize(raw: &str) -> String {
    let lower = raw.to_lowercase();
    let mut out = String::with_capacity(lower.len());
    for tok in lower.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(tok);
    }
    out
}

/// Splits a normalized sentence into unigrams.
pub fn tokenize(text: &str) -> Vec<&str> {
    if text.is_empty() {
        Vec::new()
    } else {
        text.split(' ').collect()
    }
}

/// Hook for an upstream spelling corrector. Currently the identity.
pub fn correct_spelling(text: String) -> String {
    text
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputFormat {
    /// One sentence per line; each line counts once.
    RawLines,
    /// `count<TAB>text` per line.
    AggregatedTsv,
}

const SHARD_LINES: usize = 16 * 1024;

/// Reads and aggregates a corpus file. Shards are counted in parallel and
/// merged; the result does not depend on line order.
pub fn read_aggregate(path: impl AsRef<Path>, format: InputFormat) -> Result<Corpus> {
    let path = path.as_ref();
    let data = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let lines: Vec<&str> = data.lines().collect();

    let merged = lines
        .par_chunks(SHARD_LINES)
        .enumerate()
        .map(|(shard, chunk)| -> Result<HashMap<String, u64>> {
            let mut map = HashMap::new();
            for (i, line) in chunk.iter().enumerate() {
                let line_no = shard * SHARD_LINES + i + 1;
                let (text, count) = match format {
                    InputFormat::RawLines => (*line, 1),
                    InputFormat::AggregatedTsv => parse_tsv_line(line).map_err(|msg| {
                        Error::Malformed {
                            path: path.to_path_buf(),
                            line: line_no,
                            msg,
                        }
                    })?,
                };
                let text = correct_spelling(normalize(text));
                if text.is_empty() {
                    continue;
                }
                add_count(&mut map, text, count)?;
            }
            Ok(map)
        })
        .try_reduce(HashMap::new, merge_maps)?;

    Corpus::from_map(merged)
}

fn parse_tsv_line(line: &str) -> std::result::Result<(&str, u64), String> {
    let (count, text) = line
        .split_once('\t')
        .ok_or_else(|| "expected 'count<TAB>text'".to_string())?;
    let count: u64 = count
        .parse()
        .map_err(|_| format!("malformed count '{count}'"))?;
    if count == 0 {
        return Err("count must be positive".into());
    }
    Ok((text, count))
}

/// Writes `corpus` as aggregated TSV in canonical order.
pub fn write_corpus_to<W: Write>(corpus: &Corpus, out: W) -> std::io::Result<()> {
    let mut w = BufWriter::new(out);
    for r in corpus.records_by_count() {
        writeln!(w, "{}\t{}", r.count, r.text)?;
    }
    w.flush()
}

pub fn write_corpus(corpus: &Corpus, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_corpus_to(corpus, f).map_err(|e| Error::io(path, e))
}

/// Parameters of the synthetic Zipfian corpus generator.
#[derive(Debug, Clone, PartialEq)]
pub struct ZipfGenSpec {
    /// Distinct sentences at frequency 1.
    pub amplitude: f64,
    pub alpha: f64,
    pub f_max: u64,
    pub vocab_size: usize,
    pub max_len: usize,
    /// `(frequency, k)`: add `k` extra sentences occurring `frequency` times.
    pub head_boost: Vec<(u64, u64)>,
    /// Rotation of the token popularity ranking. Token `w{i}` has rank
    /// `(i - domain_profile) mod vocab_size`, so two profiles half a
    /// vocabulary apart put their mass on nearly disjoint tokens.
    pub domain_profile: u64,
    pub seed: u64,
}

impl ZipfGenSpec {
    pub fn new(amplitude: f64, alpha: f64, f_max: u64) -> Self {
        Self {
            amplitude,
            alpha,
            f_max,
            vocab_size: 1000,
            max_len: 6,
            head_boost: Vec::new(),
            domain_profile: 0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::param(format!("alpha must be > 0, got {}", self.alpha)));
        }
        if !(self.amplitude >= 1.0 && self.amplitude.is_finite()) {
            return Err(Error::param(format!(
                "amplitude must be >= 1, got {}",
                self.amplitude
            )));
        }
        if self.f_max < 1 {
            return Err(Error::param("f_max must be >= 1"));
        }
        if self.vocab_size < 2 {
            return Err(Error::param("vocab_size must be >= 2"));
        }
        if self.max_len < 1 {
            return Err(Error::param("max_len must be >= 1"));
        }
        Ok(())
    }

    /// Number of distinct sentences generated at frequency `f` by the power
    /// law alone, `round(A * f^-alpha)`.
    pub fn power_law_bin(&self, f: u64) -> u64 {
        (self.amplitude * (f as f64).powf(-self.alpha)).round() as u64
    }
}

pub fn token_name(i: usize) -> String {
    format!("w{i}")
}

/// Cumulative token weights for a domain profile: token `i` weighs
/// `1 / (1 + rank(i))`.
pub(crate) fn token_cdf(vocab_size: usize, profile: u64) -> Vec<f64> {
    let shift = (profile % vocab_size as u64) as usize;
    let mut acc = 0.0;
    (0..vocab_size)
        .map(|i| {
            let rank = (i + vocab_size - shift) % vocab_size;
            acc += 1.0 / (1.0 + rank as f64);
            acc
        })
        .collect()
}

const MAX_DUPLICATE_STREAK: usize = 10_000;

/// Generates a corpus whose frequency histogram is exactly the rounded power
/// law `round(A * f^-alpha)` for `f = 1..=f_max`, plus the head-boost
/// injections.
pub fn gen_zipf(spec: &ZipfGenSpec) -> Result<Corpus> {
    spec.validate()?;
    let cdf = token_cdf(spec.vocab_size, spec.domain_profile);
    let total_weight = *cdf.last().expect("vocab_size >= 2");
    let vocab: Vec<String> = (0..spec.vocab_size).map(token_name).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let bins = (1..=spec.f_max)
        .map(|f| (f, spec.power_law_bin(f)))
        .chain(spec.head_boost.iter().copied());

    let mut seen: HashSet<String> = HashSet::new();
    let mut records = Vec::new();
    for (f, k) in bins {
        if f == 0 {
            continue;
        }
        for _ in 0..k {
            let mut streak = 0;
            let text = loop {
                let len = rng.random_range(1..=spec.max_len);
                let mut s = String::new();
                for j in 0..len {
                    let u = rng.random::<f64>() * total_weight;
                    let idx = cdf.partition_point(|&c| c <= u).min(spec.vocab_size - 1);
                    if j > 0 {
                        s.push(' ');
                    }
                    s.push_str(&vocab[idx]);
                }
                if !seen.contains(&s) {
                    break s;
                }
                streak += 1;
                if streak >= MAX_DUPLICATE_STREAK {
                    return Err(Error::param(
                        "vocab_size/max_len too small for the requested number of distinct sentences",
                    ));
                }
            };
            seen.insert(text.clone());
            records.push(SentenceRecord { text, count: f });
        }
    }
    Ok(Corpus::from_unique_records(records))
}
