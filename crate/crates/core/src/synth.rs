//! Synthetic two-domain world for selection experiments.
//!
//! A large, head-boosted background domain and a smaller target domain whose
//! token popularity is rotated half a vocabulary away. Each target-domain
//! sentence's occurrences are split at random between the text corpus, the
//! acoustic transcripts and a held-out test set, so the three share one
//! generating distribution.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};

use crate::corpus::{gen_zipf, SentenceRecord, ZipfGenSpec};
use crate::error::{Error, Result};
use crate::hash::stable_hash;
use crate::rarefilter::{build_unigram_table, DEFAULT_THRESHOLD};
use crate::Corpus;

#[derive(Debug, Clone, PartialEq)]
pub struct TwoDomainSpec {
    pub background: ZipfGenSpec,
    pub target: ZipfGenSpec,
    /// Share of target-domain occurrences routed to the text corpus.
    pub text_share: f64,
    /// Share routed to the acoustic transcripts; the remainder is test data.
    pub acoustic_share: f64,
    /// Acoustic frequency below which a word makes a test sentence part of
    /// the tail set.
    pub rare_threshold: u64,
    pub seed: u64,
}

impl TwoDomainSpec {
    /// The standard experiment world over 5000 words: background A=3e4,
    /// alpha=1.6 with a boosted head; target A=8e3, alpha=1.2 on the
    /// opposite token ranks, split 60/10/30 between text, transcripts and
    /// test.
    pub fn standard(seed: u64) -> Self {
        let vocab = 5000;
        let mut background = ZipfGenSpec::new(3e4, 1.6, 3000);
        background.head_boost = vec![(50_000, 3), (20_000, 5)];
        background.vocab_size = vocab;
        background.seed = seed.wrapping_mul(2).wrapping_add(1);
        let mut target = ZipfGenSpec::new(8e3, 1.2, 1000);
        target.domain_profile = (vocab / 2) as u64;
        target.vocab_size = vocab;
        target.seed = seed.wrapping_mul(2).wrapping_add(2);
        Self {
            background,
            target,
            text_share: 0.6,
            acoustic_share: 0.1,
            rare_threshold: DEFAULT_THRESHOLD,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.background.validate()?;
        self.target.validate()?;
        let shares_ok = (0.0..=1.0).contains(&self.text_share)
            && (0.0..=1.0).contains(&self.acoustic_share)
            && self.text_share + self.acoustic_share < 1.0;
        if !shares_ok {
            return Err(Error::param("text and acoustic shares must be in [0, 1] and sum below 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TwoDomainWorld {
    /// Background plus the text share of the target domain.
    pub text: Corpus,
    pub acoustic: Corpus,
    /// Held-out target-domain occurrences.
    pub target_test: Corpus,
    /// Target test sentences containing a word rarer than the threshold in
    /// the acoustic transcripts.
    pub tail_test: Corpus,
    pub background: Corpus,
    pub target: Corpus,
}

fn split_counts(count: u64, text: &str, spec: &TwoDomainSpec) -> Result<[u64; 3]> {
    let mut rng = ChaCha8Rng::seed_from_u64(stable_hash(spec.seed, text));
    let mut bin = |n: u64, p: f64| -> Result<u64> {
        let d = Binomial::new(n, p.clamp(0.0, 1.0)).map_err(|e| Error::param(e.to_string()))?;
        Ok(d.sample(&mut rng))
    };
    let to_text = bin(count, spec.text_share)?;
    let rest = count - to_text;
    let to_acoustic = bin(rest, spec.acoustic_share / (1.0 - spec.text_share))?;
    Ok([to_text, to_acoustic, rest - to_acoustic])
}

pub fn two_domain_world(spec: &TwoDomainSpec) -> Result<TwoDomainWorld> {
    spec.validate()?;
    let background = gen_zipf(&spec.background)?;
    let target = gen_zipf(&spec.target)?;

    let mut parts: [Vec<SentenceRecord>; 3] = Default::default();
    for r in &target {
        let split = split_counts(r.count, &r.text, spec)?;
        for (part, n) in parts.iter_mut().zip(split) {
            if n > 0 {
                part.push(SentenceRecord::new(r.text.clone(), n));
            }
        }
    }
    let [text_part, acoustic, test] = parts;
    let text = background.merged(&Corpus::from_records(text_part)?)?;
    let acoustic = Corpus::from_records(acoustic)?;
    let target_test = Corpus::from_records(test)?;
    let table = build_unigram_table(&acoustic)?;
    let tail_test = target_test.filter(|r| table.has_rare_token(&r.text, spec.rare_threshold));
    Ok(TwoDomainWorld {
        text,
        acoustic,
        target_test,
        tail_test,
        background,
        target,
    })
}
