//! Contrastive (Moore-Lewis style) selection.
//!
//! Each sentence is scored `L_target(x) - L_background(x)`; lower means more
//! target-like. Selection keeps everything at or below a nearest-rank
//! percentile of the score distribution.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::ngram::{log_perplexity, LanguageModel};

pub const DEFAULT_KEEP_PERCENTILE: f64 = 6.0;

#[derive(Debug, Clone, PartialEq)]
pub struct ContrastiveScore {
    pub text: String,
    pub count: u64,
    pub score: f64,
}

/// `log_perplexity(target, x) - log_perplexity(background, x)`.
pub fn contrastive_score<T, B>(x: &str, target: &T, background: &B) -> Result<f64>
where
    T: LanguageModel + ?Sized,
    B: LanguageModel + ?Sized,
{
    if target.order() != background.order() {
        return Err(Error::OrderMismatch(target.order(), background.order()));
    }
    Ok(log_perplexity(target, x) - log_perplexity(background, x))
}

/// Scores every record; the result is sorted ascending by `(score, text)`.
pub fn score_corpus<T, B>(corpus: &Corpus, target: &T, background: &B) -> Result<Vec<ContrastiveScore>>
where
    T: LanguageModel + ?Sized,
    B: LanguageModel + ?Sized,
{
    if target.order() != background.order() {
        return Err(Error::OrderMismatch(target.order(), background.order()));
    }
    let mut scores: Vec<ContrastiveScore> = corpus
        .records()
        .par_iter()
        .map(|r| ContrastiveScore {
            text: r.text.clone(),
            count: r.count,
            score: log_perplexity(target, &r.text) - log_perplexity(background, &r.text),
        })
        .collect();
    scores.par_sort_by(|a, b| a.score.total_cmp(&b.score).then_with(|| a.text.cmp(&b.text)));
    Ok(scores)
}

fn check_percentile(q: f64) -> Result<()> {
    if !(q > 0.0 && q <= 100.0) {
        return Err(Error::param(format!("keep percentile must be in (0, 100], got {q}")));
    }
    Ok(())
}

/// Nearest-rank percentile of ascending `sorted`: the element at 1-based
/// rank `ceil(q / 100 * N)`.
pub fn nearest_rank_threshold(sorted: &[f64], q: f64) -> Result<f64> {
    check_percentile(q)?;
    if sorted.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let n = sorted.len();
    let rank = ((q * n as f64) / 100.0).ceil() as usize;
    Ok(sorted[rank.clamp(1, n) - 1])
}

/// Occurrence-weighted variant: the smallest score whose cumulative count
/// reaches `ceil(q / 100 * total)`.
fn weighted_threshold(scores: &[ContrastiveScore], q: f64) -> f64 {
    let total: u64 = scores.iter().map(|s| s.count).sum();
    let need = ((q * total as f64) / 100.0).ceil().max(1.0) as u64;
    let mut acc = 0u64;
    for s in scores {
        acc += s.count;
        if acc >= need {
            return s.score;
        }
    }
    scores.last().map(|s| s.score).unwrap_or(f64::NEG_INFINITY)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ContrastiveReport {
    pub threshold: f64,
    pub kept_records: u64,
    pub kept_fraction: f64,
    pub kept_total: u64,
}

#[derive(Debug, Clone)]
pub struct Selection {
    pub corpus: Corpus,
    /// All scores, ascending.
    pub scores: Vec<ContrastiveScore>,
    pub report: ContrastiveReport,
}

/// Keeps records scoring at or below the `keep_percentile`-th percentile.
/// The percentile is taken over distinct records unless `weighted`, in which
/// case it is taken over occurrence mass. Ties at the threshold are kept.
pub fn select_contrastive<T, B>(
    corpus: &Corpus,
    target: &T,
    background: &B,
    keep_percentile: f64,
    weighted: bool,
) -> Result<Selection>
where
    T: LanguageModel + ?Sized,
    B: LanguageModel + ?Sized,
{
    check_percentile(keep_percentile)?;
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let scores = score_corpus(corpus, target, background)?;
    select_by_scores(corpus, scores, keep_percentile, weighted)
}

/// Selection step on precomputed scores (ascending, as from
/// [`score_corpus`]).
pub fn select_by_scores(
    corpus: &Corpus,
    scores: Vec<ContrastiveScore>,
    keep_percentile: f64,
    weighted: bool,
) -> Result<Selection> {
    let threshold = if weighted {
        check_percentile(keep_percentile)?;
        weighted_threshold(&scores, keep_percentile)
    } else {
        let values: Vec<f64> = scores.iter().map(|s| s.score).collect();
        nearest_rank_threshold(&values, keep_percentile)?
    };
    let kept = Corpus::from_records(
        scores
            .iter()
            .take_while(|s| s.score <= threshold)
            .map(|s| crate::corpus::SentenceRecord::new(s.text.clone(), s.count)),
    )?;
    let report = ContrastiveReport {
        threshold,
        kept_records: kept.distinct_count() as u64,
        kept_fraction: kept.distinct_count() as f64 / corpus.distinct_count() as f64,
        kept_total: kept.total_count(),
    };
    Ok(Selection {
        corpus: kept,
        scores,
        report,
    })
}

pub fn write_scores_to<W: Write>(scores: &[ContrastiveScore], out: W) -> std::io::Result<()> {
    let mut w = BufWriter::new(out);
    for s in scores {
        writeln!(w, "{}\t{}\t{}", s.score, s.count, s.text)?;
    }
    w.flush()
}

/// Writes `score<TAB>count<TAB>text` lines in ascending score order.
pub fn write_scores(scores: &[ContrastiveScore], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_scores_to(scores, f).map_err(|e| Error::io(path, e))
}
