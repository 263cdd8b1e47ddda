//! Interpolated absolute-discounting n-gram language models.
//!
//! `p_k(t | c) = max(c(c,t) - d, 0) / c(c) + d * T(c) / c(c) * p_{k-1}(t | c')`
//!
//! where `c'` drops the oldest context token and `T(c)` is the number of
//! distinct continuations of `c`. Contexts never seen in training pass the
//! lower-order estimate through unchanged. The recursion bottoms out in an
//! add-one unigram over the vocabulary plus `<unk>` and `</s>`.
//!
//! All scores are natural logs.

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;

use crate::corpus::{normalize, tokenize, Corpus};
use crate::error::{Error, Result};

pub const BOS: &str = "<s>";
pub const EOS: &str = "</s>";
pub const UNK: &str = "<unk>";

const UNK_ID: u32 = 0;
const EOS_ID: u32 = 1;
const BOS_ID: u32 = 2;
const FIRST_WORD_ID: u32 = 3;

pub const MAX_ORDER: usize = 5;
pub const DEFAULT_ORDER: usize = 3;
pub const DEFAULT_DISCOUNT: f64 = 0.75;

/// Context ids packed 32 bits apiece, most recent token in the low word.
type CtxKey = u128;

fn pack(ctx: &[u32]) -> CtxKey {
    ctx.iter()
        .rev()
        .enumerate()
        .fold(0u128, |k, (i, &id)| k | (u128::from(id) << (32 * i)))
}

/// Anything that assigns probabilities to token events.
pub trait LanguageModel: Sync {
    fn order(&self) -> usize;

    /// Probability of each event of a tokenized sentence: the `m` tokens
    /// followed by `</s>`, each conditioned on its `<s>`-padded history.
    fn event_probs(&self, tokens: &[&str]) -> Vec<f64>;

    /// `ln p(token | context)`. Only the last `order - 1` context tokens
    /// matter; shorter contexts are left-padded with `<s>`.
    fn score_token(&self, context: &[&str], token: &str) -> f64;
}

/// Mean negative log probability per event of `sentence` (its tokens plus
/// `</s>`).
pub fn log_perplexity<M: LanguageModel + ?Sized>(model: &M, sentence: &str) -> f64 {
    let text = normalize(sentence);
    let probs = model.event_probs(&tokenize(&text));
    -probs.iter().map(|p| p.ln()).sum::<f64>() / probs.len() as f64
}

/// Count-weighted mean of [`log_perplexity`] over the records of `corpus`.
pub fn corpus_perplexity<M: LanguageModel + ?Sized>(model: &M, corpus: &Corpus) -> Result<f64> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let per_record: Vec<f64> = corpus
        .records()
        .par_iter()
        .map(|r| log_perplexity(model, &r.text))
        .collect();
    let weighted: f64 = corpus
        .iter()
        .zip(&per_record)
        .map(|(r, l)| r.count as f64 * l)
        .sum();
    Ok(weighted / corpus.total_count() as f64)
}

#[derive(Debug, Clone, Default, PartialEq)]
struct Level {
    ngrams: HashMap<(CtxKey, u32), u64>,
    /// context -> (total count, distinct continuations)
    contexts: HashMap<CtxKey, (u64, u64)>,
}

impl Level {
    fn rebuild_contexts(&mut self) {
        self.contexts.clear();
        for (&(ctx, _), &c) in &self.ngrams {
            let e = self.contexts.entry(ctx).or_insert((0, 0));
            e.0 += c;
            e.1 += 1;
        }
    }
}

/// A trained n-gram model. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct NGramModel {
    order: usize,
    discount: f64,
    /// Id -> token; ids `0..3` are `<unk>`, `</s>`, `<s>`, then words sorted.
    tokens: Vec<String>,
    ids: HashMap<String, u32>,
    unigram: Vec<u64>,
    unigram_total: u64,
    /// `levels[k - 1]` holds contexts of length `k`.
    levels: Vec<Level>,
}

fn check_params(order: usize, discount: f64) -> Result<()> {
    if !(1..=MAX_ORDER).contains(&order) {
        return Err(Error::param(format!("order must be in 1..={MAX_ORDER}, got {order}")));
    }
    if !(discount > 0.0 && discount < 1.0) {
        return Err(Error::param(format!("discount must be in (0, 1), got {discount}")));
    }
    Ok(())
}

fn is_reserved(tok: &str) -> bool {
    tok == BOS || tok == EOS || tok == UNK
}

impl NGramModel {
    fn with_vocab(order: usize, discount: f64, words: BTreeSet<String>) -> Self {
        let mut tokens = vec![UNK.to_string(), EOS.to_string(), BOS.to_string()];
        tokens.extend(words);
        let ids = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        let n = tokens.len();
        Self {
            order,
            discount,
            tokens,
            ids,
            unigram: vec![0; n],
            unigram_total: 0,
            levels: vec![Level::default(); order - 1],
        }
    }

    /// Trains on `corpus`, weighting every sentence by its count.
    pub fn train(corpus: &Corpus, order: usize, discount: f64) -> Result<Self> {
        check_params(order, discount)?;
        if corpus.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let words: BTreeSet<String> = corpus
            .records()
            .par_iter()
            .fold(BTreeSet::new, |mut s, r| {
                for t in tokenize(&r.text) {
                    if !is_reserved(t) && !s.contains(t) {
                        s.insert(t.to_string());
                    }
                }
                s
            })
            .reduce(BTreeSet::new, |mut a, b| {
                a.extend(b);
                a
            });
        let mut model = Self::with_vocab(order, discount, words);

        let vocab_len = model.tokens.len();
        let (unigram, levels) = corpus
            .records()
            .par_iter()
            .fold(
                || (vec![0u64; vocab_len], vec![Level::default(); order - 1]),
                |(mut uni, mut levels), r| {
                    let seq = model.padded_ids(&tokenize(&r.text));
                    for i in order - 1..seq.len() {
                        let t = seq[i];
                        uni[t as usize] += r.count;
                        for (k, level) in levels.iter_mut().enumerate() {
                            let ctx = pack(&seq[i - (k + 1)..i]);
                            *level.ngrams.entry((ctx, t)).or_insert(0) += r.count;
                        }
                    }
                    (uni, levels)
                },
            )
            .reduce(
                || (vec![0u64; vocab_len], vec![Level::default(); order - 1]),
                |(mut ua, mut la), (ub, lb)| {
                    for (a, b) in ua.iter_mut().zip(ub) {
                        *a += b;
                    }
                    for (a, b) in la.iter_mut().zip(lb) {
                        let (mut big, small) = if a.ngrams.len() >= b.ngrams.len() {
                            (std::mem::take(&mut a.ngrams), b.ngrams)
                        } else {
                            (b.ngrams, std::mem::take(&mut a.ngrams))
                        };
                        for (k, c) in small {
                            *big.entry(k).or_insert(0) += c;
                        }
                        a.ngrams = big;
                    }
                    (ua, la)
                },
            );
        model.unigram_total = unigram.iter().sum();
        model.unigram = unigram;
        model.levels = levels;
        for level in &mut model.levels {
            level.rebuild_contexts();
        }
        Ok(model)
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    /// Known words, excluding the reserved markers.
    pub fn vocab(&self) -> impl Iterator<Item = &str> {
        self.tokens[FIRST_WORD_ID as usize..].iter().map(String::as_str)
    }

    /// Size of the predicted-token support: words plus `<unk>` and `</s>`.
    pub fn support_size(&self) -> usize {
        self.tokens.len() - 1
    }

    fn id(&self, tok: &str) -> u32 {
        self.ids.get(tok).copied().filter(|&i| i != BOS_ID || tok == BOS).unwrap_or(UNK_ID)
    }

    fn word_id(&self, tok: &str) -> u32 {
        if is_reserved(tok) {
            UNK_ID
        } else {
            self.ids.get(tok).copied().unwrap_or(UNK_ID)
        }
    }

    fn padded_ids(&self, tokens: &[&str]) -> Vec<u32> {
        let mut seq = Vec::with_capacity(tokens.len() + self.order);
        seq.extend(std::iter::repeat_n(BOS_ID, self.order - 1));
        seq.extend(tokens.iter().map(|t| self.word_id(t)));
        seq.push(EOS_ID);
        seq
    }

    /// Raw training count of `token` after `context` (`context` given
    /// exactly, without padding). Mostly useful for inspection and tests.
    pub fn count(&self, context: &[&str], token: &str) -> u64 {
        let t = self.id(token);
        if context.is_empty() {
            return self.unigram[t as usize];
        }
        if context.len() >= self.order {
            return 0;
        }
        let ctx: Vec<u32> = context.iter().map(|c| self.id(c)).collect();
        self.levels[context.len() - 1]
            .ngrams
            .get(&(pack(&ctx), t))
            .copied()
            .unwrap_or(0)
    }

    /// `p(t | ctx)` where `ctx` holds exactly `order - 1` ids.
    fn prob_ids(&self, ctx: &[u32], t: u32) -> f64 {
        debug_assert_eq!(ctx.len(), self.order - 1);
        let mut p = (self.unigram[t as usize] + 1) as f64
            / (self.unigram_total + self.support_size() as u64) as f64;
        for (k, level) in self.levels.iter().enumerate() {
            let key = pack(&ctx[ctx.len() - (k + 1)..]);
            if let Some(&(total, distinct)) = level.contexts.get(&key) {
                let c = level.ngrams.get(&(key, t)).copied().unwrap_or(0) as f64;
                let total = total as f64;
                p = (c - self.discount).max(0.0) / total
                    + self.discount * distinct as f64 / total * p;
            }
        }
        p
    }

    /// Probability of every support token after `context`, in id order
    /// (`<unk>`, `</s>`, then words). Sums to 1.
    pub fn distribution(&self, context: &[&str]) -> Vec<(String, f64)> {
        let ctx = self.context_ids(context);
        std::iter::once(UNK_ID)
            .chain(std::iter::once(EOS_ID))
            .chain(FIRST_WORD_ID..self.tokens.len() as u32)
            .map(|t| (self.tokens[t as usize].clone(), self.prob_ids(&ctx, t)))
            .collect()
    }

    fn context_ids(&self, context: &[&str]) -> Vec<u32> {
        let need = self.order - 1;
        let tail = &context[context.len().saturating_sub(need)..];
        let mut ctx = vec![BOS_ID; need - tail.len()];
        ctx.extend(tail.iter().map(|t| self.id(t)));
        ctx
    }

    /// Text serialization: a header line, then one sorted
    /// `context<TAB>token<TAB>count` line per stored n-gram.
    pub fn write_to<W: Write>(&self, out: W) -> std::io::Result<()> {
        let mut lines: Vec<String> = Vec::new();
        for (t, &c) in self.unigram.iter().enumerate() {
            if c > 0 {
                lines.push(format!("\t{}\t{c}", self.tokens[t]));
            }
        }
        for (k, level) in self.levels.iter().enumerate() {
            let len = k + 1;
            for (&(ctx, t), &c) in &level.ngrams {
                let words: Vec<&str> = (0..len)
                    .rev()
                    .map(|i| self.tokens[((ctx >> (32 * i)) as u32) as usize].as_str())
                    .collect();
                lines.push(format!("{}\t{}\t{c}", words.join(" "), self.tokens[t as usize]));
            }
        }
        lines.sort_unstable();
        let mut w = BufWriter::new(out);
        writeln!(w, "ngram v1 order={} discount={}", self.order, self.discount)?;
        for l in lines {
            writeln!(w, "{l}")?;
        }
        w.flush()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_to(f).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let data = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&data).map_err(|(line, msg)| Error::Malformed {
            path: path.to_path_buf(),
            line,
            msg,
        })
    }

    fn parse(data: &str) -> std::result::Result<Self, (usize, String)> {
        let mut lines = data.lines();
        let header = lines.next().ok_or((1, "missing header".to_string()))?;
        let (order, discount) = parse_header(header).map_err(|m| (1, m))?;
        check_params(order, discount).map_err(|e| (1, e.to_string()))?;

        let mut entries: Vec<(Vec<&str>, &str, u64)> = Vec::new();
        let mut words = BTreeSet::new();
        for (i, line) in lines.enumerate() {
            let line_no = i + 2;
            let mut parts = line.split('\t');
            let (Some(ctx), Some(tok), Some(count), None) =
                (parts.next(), parts.next(), parts.next(), parts.next())
            else {
                return Err((line_no, "expected 'context<TAB>token<TAB>count'".into()));
            };
            let count: u64 = count
                .parse()
                .map_err(|_| (line_no, format!("bad count '{count}'")))?;
            if count == 0 {
                return Err((line_no, "counts must be >= 1".into()));
            }
            if tok == BOS {
                return Err((line_no, "<s> cannot be predicted".into()));
            }
            let ctx: Vec<&str> = if ctx.is_empty() { Vec::new() } else { ctx.split(' ').collect() };
            if ctx.len() >= order {
                return Err((line_no, format!("context longer than order {order}")));
            }
            if ctx.contains(&EOS) {
                return Err((line_no, "</s> inside a context".into()));
            }
            for w in ctx.iter().copied().chain(std::iter::once(tok)) {
                if !is_reserved(w) {
                    words.insert(w.to_string());
                }
            }
            entries.push((ctx, tok, count));
        }

        let mut model = Self::with_vocab(order, discount, words);
        for (ctx, tok, count) in entries {
            let t = model.ids[tok];
            if ctx.is_empty() {
                model.unigram[t as usize] += count;
            } else {
                let ids: Vec<u32> = ctx.iter().map(|c| model.ids[*c]).collect();
                *model.levels[ctx.len() - 1]
                    .ngrams
                    .entry((pack(&ids), t))
                    .or_insert(0) += count;
            }
        }
        model.unigram_total = model.unigram.iter().sum();
        for level in &mut model.levels {
            level.rebuild_contexts();
        }
        Ok(model)
    }
}

fn parse_header(h: &str) -> std::result::Result<(usize, f64), String> {
    let mut it = h.split(' ');
    if it.next() != Some("ngram") || it.next() != Some("v1") {
        return Err(format!("bad header '{h}'"));
    }
    let order = it
        .next()
        .and_then(|s| s.strip_prefix("order="))
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| format!("bad order in header '{h}'"))?;
    let discount = it
        .next()
        .and_then(|s| s.strip_prefix("discount="))
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| format!("bad discount in header '{h}'"))?;
    Ok((order, discount))
}

impl LanguageModel for NGramModel {
    fn order(&self) -> usize {
        self.order
    }

    fn event_probs(&self, tokens: &[&str]) -> Vec<f64> {
        let seq = self.padded_ids(tokens);
        let h = self.order - 1;
        (h..seq.len()).map(|i| self.prob_ids(&seq[i - h..i], seq[i])).collect()
    }

    fn score_token(&self, context: &[&str], token: &str) -> f64 {
        let t = if token == EOS { EOS_ID } else { self.word_id(token) };
        self.prob_ids(&self.context_ids(context), t).ln()
    }
}

/// `lambda * p_acoustic + (1 - lambda) * p_background`, mixed in probability
/// space.
#[derive(Debug, Clone, Copy)]
pub struct InterpolatedModel<'a> {
    pub background: &'a NGramModel,
    pub acoustic: &'a NGramModel,
    pub lambda: f64,
}

impl<'a> InterpolatedModel<'a> {
    pub fn new(background: &'a NGramModel, acoustic: &'a NGramModel, lambda: f64) -> Result<Self> {
        if background.order != acoustic.order {
            return Err(Error::OrderMismatch(background.order, acoustic.order));
        }
        if !(0.0..=1.0).contains(&lambda) {
            return Err(Error::param(format!("lambda must be in [0, 1], got {lambda}")));
        }
        Ok(Self {
            background,
            acoustic,
            lambda,
        })
    }

    fn mix(&self, pa: f64, pb: f64) -> f64 {
        self.lambda * pa + (1.0 - self.lambda) * pb
    }
}

impl LanguageModel for InterpolatedModel<'_> {
    fn order(&self) -> usize {
        self.background.order
    }

    fn event_probs(&self, tokens: &[&str]) -> Vec<f64> {
        let pa = self.acoustic.event_probs(tokens);
        let pb = self.background.event_probs(tokens);
        pa.into_iter().zip(pb).map(|(a, b)| self.mix(a, b)).collect()
    }

    fn score_token(&self, context: &[&str], token: &str) -> f64 {
        let pa = self.acoustic.score_token(context, token).exp();
        let pb = self.background.score_token(context, token).exp();
        self.mix(pa, pb).ln()
    }
}
