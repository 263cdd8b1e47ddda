//! Rare acoustic unigram filtering.
//!
//! Keeps text-only sentences that contain at least one word whose frequency
//! in the acoustic transcripts is below a threshold. Words never seen in the
//! transcripts have frequency 0 and always qualify for a positive threshold.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::Serialize;

use crate::corpus::{tokenize, Corpus};
use crate::error::{Error, Result};
use crate::stats::FrequencyHistogram;

pub const DEFAULT_THRESHOLD: u64 = 15;

/// Count-weighted unigram frequencies of the acoustic transcripts.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct UnigramTable {
    freq: HashMap<String, u64>,
    total_tokens: u64,
}

impl UnigramTable {
    pub fn freq(&self, token: &str) -> u64 {
        self.freq.get(token).copied().unwrap_or(0)
    }

    pub fn total_tokens(&self) -> u64 {
        self.total_tokens
    }

    pub fn len(&self) -> usize {
        self.freq.len()
    }

    pub fn is_empty(&self) -> bool {
        self.freq.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, u64)> {
        self.freq.iter().map(|(t, &c)| (t.as_str(), c))
    }

    /// Distinct unigrams per frequency, for plotting the acoustic word
    /// distribution.
    pub fn histogram(&self) -> FrequencyHistogram {
        FrequencyHistogram::from_frequencies(self.freq.values().copied())
    }

    /// True if some token of `text` has table frequency below `threshold`.
    pub fn has_rare_token(&self, text: &str, threshold: u64) -> bool {
        tokenize(text).into_iter().any(|t| self.freq(t) < threshold)
    }
}

pub fn build_unigram_table(acoustic: &Corpus) -> Result<UnigramTable> {
    if acoustic.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let freq = acoustic
        .records()
        .par_iter()
        .fold(HashMap::new, |mut m: HashMap<String, u64>, r| {
            for t in tokenize(&r.text) {
                match m.get_mut(t) {
                    Some(c) => *c += r.count,
                    None => {
                        m.insert(t.to_string(), r.count);
                    }
                }
            }
            m
        })
        .reduce(HashMap::new, |mut a, b| {
            for (t, c) in b {
                *a.entry(t).or_insert(0) += c;
            }
            a
        });
    let total_tokens = freq.values().sum();
    Ok(UnigramTable { freq, total_tokens })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RareFilterReport {
    pub kept_records: u64,
    pub kept_fraction: f64,
    pub kept_total: u64,
}

/// Keeps exactly the records with a token whose acoustic frequency is
/// strictly below `threshold`. Counts are preserved.
pub fn filter_rare(corpus: &Corpus, table: &UnigramTable, threshold: u64) -> (Corpus, RareFilterReport) {
    let kept = corpus.filter(|r| table.has_rare_token(&r.text, threshold));
    let report = RareFilterReport {
        kept_records: kept.distinct_count() as u64,
        kept_fraction: if corpus.is_empty() {
            0.0
        } else {
            kept.distinct_count() as f64 / corpus.distinct_count() as f64
        },
        kept_total: kept.total_count(),
    };
    (kept, report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn table(pairs: &[(&str, u64)]) -> UnigramTable {
        build_unigram_table(&Corpus::from_pairs(pairs.iter().copied()).unwrap()).unwrap()
    }

    #[test]
    fn table_is_count_weighted() {
        let t = table(&[("the weather", 3)]);
        assert_eq!(t.freq("the"), 3);
        assert_eq!(t.freq("weather"), 3);
        assert_eq!(t.total_tokens(), 6);
        let t = table(&[("a a", 2)]);
        assert_eq!(t.freq("a"), 4);
        assert_eq!(t.freq("b"), 0);
        assert!(build_unigram_table(&Corpus::empty()).is_err());
    }

    #[test]
    fn table_histogram() {
        let t = table(&[("a b", 2), ("a c", 1)]);
        let h = t.histogram();
        assert_eq!(h.get(3), 1);
        assert_eq!(h.get(2), 1);
        assert_eq!(h.get(1), 1);
    }

    #[test]
    fn keeps_sentences_with_rare_words() {
        let acoustic = Corpus::from_pairs([("the", 100), ("weather", 90), ("konigsberg", 3)]).unwrap();
        let t = build_unigram_table(&acoustic).unwrap();
        let text = Corpus::from_pairs([("the weather", 50), ("turn on konigsberg tv", 2)]).unwrap();
        let (kept, rep) = filter_rare(&text, &t, 15);
        assert_eq!(kept, Corpus::from_pairs([("turn on konigsberg tv", 2)]).unwrap());
        assert_eq!(rep.kept_records, 1);
        assert_eq!(rep.kept_fraction, 0.5);

        let (none, _) = filter_rare(&text, &t, 0);
        assert!(none.is_empty());
    }

    #[test]
    fn seeded_rare_records_are_found() {
        // Common words c0..c4 (freq 100), "edge" sits exactly at the
        // threshold, r0 / r1 are below it and "oov" is absent.
        let acoustic = Corpus::from_pairs([
            ("c0 c1 c2 c3 c4", 100),
            ("edge", 15),
            ("r0", 14),
            ("r1", 3),
        ])
        .unwrap();
        let t = build_unigram_table(&acoustic).unwrap();
        let rare_words = ["r0", "r1", "oov"];
        let seeded = |i: usize| (i * 7) % 200 < 37;
        let text = Corpus::from_pairs((0..200usize).map(|i| {
            // Base-5 digits of i as common words keep every text unique.
            let mut words: Vec<String> = (0..4).map(|k| format!("c{}", (i / 5usize.pow(k)) % 5)).collect();
            words.push("edge".into());
            if seeded(i) {
                words.insert(i % 5, rare_words[i % 3].to_string());
            }
            (words.join(" "), 1 + i as u64 % 3)
        }))
        .unwrap();

        let oracle: Vec<&str> = text
            .iter()
            .filter(|r| {
                r.text.split(' ').any(|w| {
                    let f: u64 = acoustic
                        .iter()
                        .map(|a| a.count * a.text.split(' ').filter(|x| *x == w).count() as u64)
                        .sum();
                    f < 15
                })
            })
            .map(|r| r.text.as_str())
            .collect();
        assert_eq!(oracle.len(), 37);

        let (kept, rep) = filter_rare(&text, &t, 15);
        assert_eq!(kept.iter().map(|r| r.text.as_str()).collect::<Vec<_>>(), oracle);
        assert_eq!(rep.kept_records, 37);
        for r in &kept {
            assert_eq!(text.get(&r.text), Some(r.count));
        }
    }

    proptest! {
        #[test]
        fn matches_naive_rule_and_is_monotone(
            acoustic in proptest::collection::vec(("[a-f]( [a-f]){0,3}", 1u64..20), 1..20),
            text in proptest::collection::vec(("[a-j]( [a-j]){0,3}", 1u64..5), 0..40),
            threshold in 0u64..40,
        ) {
            let t = build_unigram_table(&Corpus::from_pairs(acoustic.clone()).unwrap()).unwrap();
            let mut naive_freq: HashMap<&str, u64> = HashMap::new();
            for (s, c) in &acoustic {
                for w in s.split(' ') {
                    *naive_freq.entry(w).or_default() += c;
                }
            }
            let text = Corpus::from_pairs(text).unwrap();
            let (kept, _) = filter_rare(&text, &t, threshold);
            for r in &text {
                let rare = r.text.split(' ').any(|w| naive_freq.get(w).copied().unwrap_or(0) < threshold);
                prop_assert_eq!(kept.get(&r.text), rare.then_some(r.count));
            }
            let (looser, _) = filter_rare(&text, &t, threshold + 5);
            for r in &kept {
                prop_assert!(looser.get(&r.text).is_some());
            }
        }
    }
}
