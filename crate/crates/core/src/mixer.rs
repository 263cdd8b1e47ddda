//! Minibatch mixing of the four selection sources.
//!
//! Every slot of every batch picks its source by a categorical draw over the
//! ratios, then picks a sentence from that source with probability
//! proportional to its count. Both draws come from a counter-based generator
//! keyed by `(seed, batch, slot)`, so any batch can be produced on its own.

use std::fmt;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::hash::{counter_below, counter_unit};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Source {
    /// Downsampled corpus.
    D,
    /// Acoustic transcripts.
    A,
    /// Rare-unigram filtered.
    R,
    /// Contrastive filtered.
    C,
}

impl Source {
    pub const ALL: [Source; 4] = [Source::D, Source::A, Source::R, Source::C];

    fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

/// Integer percentages per source; must sum to 100.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixRatios {
    #[serde(rename = "D", default)]
    pub d: u32,
    #[serde(rename = "A", default)]
    pub a: u32,
    #[serde(rename = "R", default)]
    pub r: u32,
    #[serde(rename = "C", default)]
    pub c: u32,
}

impl MixRatios {
    pub fn new(d: u32, a: u32, r: u32, c: u32) -> Self {
        Self { d, a, r, c }
    }

    pub fn get(&self, s: Source) -> u32 {
        match s {
            Source::D => self.d,
            Source::A => self.a,
            Source::R => self.r,
            Source::C => self.c,
        }
    }

    fn as_array(&self) -> [u32; 4] {
        [self.d, self.a, self.r, self.c]
    }
}

/// Parses `D,A,R,C`, e.g. `0,20,40,40`.
impl FromStr for MixRatios {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<u32> = s
            .split(',')
            .map(|p| p.trim().parse::<u32>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::param(format!("ratios must be 'D,A,R,C' integers, got '{s}'")))?;
        match parts.as_slice() {
            &[d, a, r, c] => Ok(Self::new(d, a, r, c)),
            _ => Err(Error::param(format!("ratios need exactly 4 values, got '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixSpec {
    pub ratios: MixRatios,
    pub batch_size: usize,
    pub num_batches: usize,
    #[serde(default)]
    pub seed: u64,
}

impl MixSpec {
    pub fn validate(&self) -> Result<()> {
        let sum: u32 = self.ratios.as_array().iter().sum();
        if sum != 100 {
            return Err(Error::param(format!("mix ratios must sum to 100, got {sum}")));
        }
        if self.batch_size == 0 || self.num_batches == 0 {
            return Err(Error::param("batch_size and num_batches must be positive"));
        }
        Ok(())
    }
}

/// Occurrence-weighted sampler over one corpus, by inversion on the
/// cumulative count array.
struct SourceSampler<'a> {
    corpus: &'a Corpus,
    cumulative: Vec<u64>,
}

impl<'a> SourceSampler<'a> {
    fn new(corpus: &'a Corpus) -> Self {
        let mut acc = 0u64;
        let cumulative = corpus
            .iter()
            .map(|r| {
                acc += r.count;
                acc
            })
            .collect();
        Self { corpus, cumulative }
    }

    fn draw(&self, seed: u64, counters: &[u64]) -> &'a str {
        let total = *self.cumulative.last().expect("non-empty source");
        let x = counter_below(seed, counters, total);
        let i = self.cumulative.partition_point(|&c| c <= x);
        &self.corpus.records()[i].text
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MixItem {
    pub source: Source,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Batch {
    pub index: usize,
    pub items: Vec<MixItem>,
}

/// Source corpora bound to their mix names. Unbound sources must have a
/// ratio of 0.
#[derive(Debug, Clone, Copy, Default)]
pub struct MixSources<'a> {
    slots: [Option<&'a Corpus>; 4],
}

impl<'a> MixSources<'a> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, source: Source, corpus: &'a Corpus) -> Self {
        self.slots[source.index()] = Some(corpus);
        self
    }

    pub fn get(&self, source: Source) -> Option<&'a Corpus> {
        self.slots[source.index()]
    }
}

pub struct Mixer<'a> {
    spec: MixSpec,
    /// Cumulative percentages, D A R C order.
    cum_ratios: [u32; 4],
    samplers: [Option<SourceSampler<'a>>; 4],
}

impl<'a> Mixer<'a> {
    pub fn new(sources: &MixSources<'a>, spec: &MixSpec) -> Result<Self> {
        spec.validate()?;
        let mut samplers: [Option<SourceSampler<'a>>; 4] = Default::default();
        for s in Source::ALL {
            if spec.ratios.get(s) == 0 {
                continue;
            }
            match sources.get(s) {
                Some(c) if !c.is_empty() => samplers[s.index()] = Some(SourceSampler::new(c)),
                _ => {
                    return Err(Error::param(format!(
                        "source {s} has ratio {} but no non-empty corpus",
                        spec.ratios.get(s)
                    )))
                }
            }
        }
        let mut cum_ratios = [0u32; 4];
        let mut acc = 0;
        for (i, r) in spec.ratios.as_array().into_iter().enumerate() {
            acc += r;
            cum_ratios[i] = acc;
        }
        Ok(Self {
            spec: spec.clone(),
            cum_ratios,
            samplers,
        })
    }

    fn pick_source(&self, batch: u64, slot: u64) -> Source {
        let u = counter_unit(self.spec.seed, &[batch, slot, 0]) * 100.0;
        for s in Source::ALL {
            if u < f64::from(self.cum_ratios[s.index()]) && self.spec.ratios.get(s) > 0 {
                return s;
            }
        }
        // u < 100 always, so only rounding can land here.
        *Source::ALL
            .iter()
            .rev()
            .find(|s| self.spec.ratios.get(**s) > 0)
            .expect("ratios sum to 100")
    }

    pub fn batch(&self, index: usize) -> Batch {
        let b = index as u64;
        let items = (0..self.spec.batch_size as u64)
            .map(|slot| {
                let source = self.pick_source(b, slot);
                let sampler = self.samplers[source.index()].as_ref().expect("validated");
                MixItem {
                    source,
                    text: sampler.draw(self.spec.seed, &[b, slot, 1]).to_string(),
                }
            })
            .collect();
        Batch { index, items }
    }

    /// All batches, generated in parallel by index.
    pub fn batches(&self) -> Vec<Batch> {
        (0..self.spec.num_batches)
            .into_par_iter()
            .map(|i| self.batch(i))
            .collect()
    }
}

pub fn mix_stream(sources: &MixSources<'_>, spec: &MixSpec) -> Result<Vec<Batch>> {
    Ok(Mixer::new(sources, spec)?.batches())
}

/// Aggregates a batch stream back into a corpus of drawn sentences.
pub fn batches_to_corpus(batches: &[Batch]) -> Result<Corpus> {
    Corpus::from_pairs(
        batches
            .iter()
            .flat_map(|b| b.items.iter().map(|it| (it.text.clone(), 1u64))),
    )
}

/// `batch_index<TAB>source<TAB>text` per drawn sentence.
pub fn write_batches_to<W: Write>(batches: &[Batch], out: W) -> std::io::Result<()> {
    let mut w = BufWriter::new(out);
    for b in batches {
        for it in &b.items {
            writeln!(w, "{}\t{}\t{}", b.index, it.source, it.text)?;
        }
    }
    w.flush()
}

pub fn write_batches(batches: &[Batch], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_batches_to(batches, f).map_err(|e| Error::io(path, e))
}
