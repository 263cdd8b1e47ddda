//! End-to-end selection pipeline and the equal-budget evaluation report.
//!
//! Stages: histogram and power-law fit of the text corpus, downsampling,
//! then rare-unigram filtering and contrastive selection side by side on the
//! downsampled corpus, then the mix stream and the evaluation report. Every
//! artifact is written as `<name>.partial` and renamed once complete.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::contrastive::{self, ContrastiveReport, DEFAULT_KEEP_PERCENTILE};
use crate::corpus::{read_aggregate, tokenize, write_corpus_to, Corpus, InputFormat, SentenceRecord};
use crate::downsample::{downsample_corpus, DownsampleKind, DownsampleReport, DownsampleSpec};
use crate::error::{Error, Result};
use crate::hash::counter_below;
use crate::mixer::{batches_to_corpus, write_batches_to, MixSources, MixSpec, Mixer, Source};
use crate::ngram::{corpus_perplexity, InterpolatedModel, NGramModel, DEFAULT_DISCOUNT, DEFAULT_ORDER};
use crate::rarefilter::{build_unigram_table, filter_rare, RareFilterReport, DEFAULT_THRESHOLD};
use crate::stats::{fit_power_law, histogram, write_histogram_to, PowerLawFit};

pub const HISTOGRAM_FILE: &str = "histogram.tsv";
pub const FIT_FILE: &str = "fit.txt";
pub const DOWNSAMPLED_FILE: &str = "downsampled.tsv";
pub const DEDUP_FILE: &str = "dedup.tsv";
pub const BACKGROUND_LM_FILE: &str = "background.lm";
pub const ACOUSTIC_LM_FILE: &str = "acoustic.lm";
pub const RARE_FILE: &str = "rare.tsv";
pub const CONTRASTIVE_FILE: &str = "contrastive.tsv";
pub const SCORES_FILE: &str = "scores.tsv";
pub const MIX_FILE: &str = "mix.tsv";
pub const REPORT_FILE: &str = "report.tsv";
pub const MANIFEST_FILE: &str = "manifest.json";

pub const REPORT_HEADER: &str = "label\ttotal\tdistinct\tlogppl_target\tlogppl_tail";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitOptions {
    #[serde(default = "default_fmin")]
    pub fmin: u64,
    /// `None` picks the largest frequency with at least 5 distinct sentences.
    #[serde(default)]
    pub fmax: Option<u64>,
}

fn default_fmin() -> u64 {
    1
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { fmin: 1, fmax: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContrastiveConfig {
    #[serde(default = "default_order")]
    pub order: usize,
    #[serde(default = "default_discount")]
    pub discount: f64,
    /// Weight of the acoustic-transcript model in the target model.
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default = "default_keep_percentile")]
    pub keep_percentile: f64,
    #[serde(default)]
    pub weighted: bool,
}

fn default_order() -> usize {
    DEFAULT_ORDER
}
fn default_discount() -> f64 {
    DEFAULT_DISCOUNT
}
fn default_lambda() -> f64 {
    0.5
}
fn default_keep_percentile() -> f64 {
    DEFAULT_KEEP_PERCENTILE
}
fn default_threshold() -> u64 {
    DEFAULT_THRESHOLD
}

impl Default for ContrastiveConfig {
    fn default() -> Self {
        Self {
            order: DEFAULT_ORDER,
            discount: DEFAULT_DISCOUNT,
            lambda: default_lambda(),
            keep_percentile: DEFAULT_KEEP_PERCENTILE,
            weighted: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    pub target_testset_path: PathBuf,
    pub tail_testset_path: PathBuf,
    #[serde(default = "default_order")]
    pub lm_order: usize,
    #[serde(default = "default_discount")]
    pub lm_discount: f64,
    pub token_budget: u64,
}

/// Pipeline configuration, read from JSON. Unknown fields are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub text_corpus_path: PathBuf,
    pub acoustic_corpus_path: PathBuf,
    pub downsample: DownsampleSpec,
    #[serde(default)]
    pub fit: FitOptions,
    #[serde(default = "default_threshold")]
    pub rare_threshold: u64,
    #[serde(default)]
    pub contrastive: ContrastiveConfig,
    pub mix: MixSpec,
    /// Without an eval section no report is produced.
    #[serde(default)]
    pub eval: Option<EvalConfig>,
    pub output_dir: PathBuf,
    /// Seeds the evaluation sampler.
    #[serde(default)]
    pub seed: u64,
}

impl PipelineConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let mut inputs = vec![&self.text_corpus_path, &self.acoustic_corpus_path];
        if let Some(e) = &self.eval {
            inputs.push(&e.target_testset_path);
            inputs.push(&e.tail_testset_path);
        }
        for p in inputs {
            if !p.is_file() {
                return Err(Error::param(format!("input file {} does not exist", p.display())));
            }
        }
        self.downsample.validate()?;
        self.mix.validate()?;
        let c = &self.contrastive;
        if !(1..=crate::ngram::MAX_ORDER).contains(&c.order) {
            return Err(Error::param(format!("contrastive order must be in 1..=5, got {}", c.order)));
        }
        if !(c.discount > 0.0 && c.discount < 1.0) {
            return Err(Error::param(format!("discount must be in (0, 1), got {}", c.discount)));
        }
        if !(0.0..=1.0).contains(&c.lambda) {
            return Err(Error::param(format!("lambda must be in [0, 1], got {}", c.lambda)));
        }
        if !(c.keep_percentile > 0.0 && c.keep_percentile <= 100.0) {
            return Err(Error::param(format!(
                "keep_percentile must be in (0, 100], got {}",
                c.keep_percentile
            )));
        }
        if let Some(e) = &self.eval {
            if e.token_budget == 0 {
                return Err(Error::param("token_budget must be positive"));
            }
            if !(1..=crate::ngram::MAX_ORDER).contains(&e.lm_order) {
                return Err(Error::param(format!("lm_order must be in 1..=5, got {}", e.lm_order)));
            }
            if !(e.lm_discount > 0.0 && e.lm_discount < 1.0) {
                return Err(Error::param(format!("lm_discount must be in (0, 1), got {}", e.lm_discount)));
            }
        }
        Ok(())
    }
}

/// Parameters of the per-row evaluation LM.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EvalSettings {
    pub lm_order: usize,
    pub lm_discount: f64,
    pub token_budget: u64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalRow {
    pub label: String,
    pub total: u64,
    pub distinct: u64,
    pub logppl_target: f64,
    pub logppl_tail: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
}

impl EvalReport {
    pub fn row(&self, label: &str) -> Option<&EvalRow> {
        self.rows.iter().find(|r| r.label == label)
    }

    pub fn write_to<W: Write>(&self, out: W) -> std::io::Result<()> {
        let mut w = BufWriter::new(out);
        writeln!(w, "{REPORT_HEADER}")?;
        for r in &self.rows {
            writeln!(
                w,
                "{}\t{}\t{}\t{}\t{}",
                r.label, r.total, r.distinct, r.logppl_target, r.logppl_tail
            )?;
        }
        w.flush()
    }
}

/// Draws sentences with probability proportional to their count and keeps
/// them while the running token total stays within `token_budget`; the
/// first draw that would overflow the budget ends the sample.
pub fn budget_sample(corpus: &Corpus, token_budget: u64, seed: u64) -> Result<Corpus> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut acc = 0u64;
    let cumulative: Vec<u64> = corpus
        .iter()
        .map(|r| {
            acc += r.count;
            acc
        })
        .collect();
    let mut used = 0u64;
    let mut drawn: Vec<usize> = Vec::new();
    for k in 0u64.. {
        let x = counter_below(seed, &[k], acc);
        let i = cumulative.partition_point(|&c| c <= x);
        let len = tokenize(&corpus.records()[i].text).len() as u64;
        if used + len > token_budget {
            break;
        }
        used += len;
        drawn.push(i);
    }
    if drawn.is_empty() {
        return Err(Error::BudgetTooSmall { budget: token_budget });
    }
    let records = corpus.records();
    Corpus::from_records(drawn.into_iter().map(|i| SentenceRecord::new(records[i].text.clone(), 1)))
}

/// One row per selection: an LM trained on a budget-limited sample of the
/// selection, scored on both testsets. Rows keep the input order.
pub fn eval_report(
    selections: &[(String, &Corpus)],
    target_testset: &Corpus,
    tail_testset: &Corpus,
    settings: &EvalSettings,
) -> Result<EvalReport> {
    if target_testset.is_empty() || tail_testset.is_empty() {
        return Err(Error::param("evaluation testsets must be non-empty"));
    }
    if settings.token_budget == 0 {
        return Err(Error::param("token_budget must be positive"));
    }
    let rows = selections
        .par_iter()
        .map(|(label, corpus)| -> Result<EvalRow> {
            let sample = budget_sample(corpus, settings.token_budget, settings.seed)?;
            let lm = NGramModel::train(&sample, settings.lm_order, settings.lm_discount)?;
            Ok(EvalRow {
                label: label.clone(),
                total: corpus.total_count(),
                distinct: corpus.distinct_count() as u64,
                logppl_target: corpus_perplexity(&lm, target_testset)?,
                logppl_tail: corpus_perplexity(&lm, tail_testset)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalReport { rows })
}

/// Writes `dir/name.partial`, then renames it to `dir/name`. A failed write
/// leaves the `.partial` file behind.
pub fn write_artifact(
    dir: &Path,
    name: &str,
    write: impl FnOnce(&mut dyn Write) -> std::io::Result<()>,
) -> Result<PathBuf> {
    let dest = dir.join(name);
    let partial = dir.join(format!("{name}.partial"));
    let mut f = fs::File::create(&partial).map_err(|e| Error::io(&partial, e))?;
    write(&mut f).map_err(|e| Error::io(&partial, e))?;
    f.sync_all().map_err(|e| Error::io(&partial, e))?;
    drop(f);
    fs::rename(&partial, &dest).map_err(|e| Error::io(&dest, e))?;
    Ok(dest)
}

fn write_corpus_artifact(dir: &Path, name: &str, corpus: &Corpus) -> Result<PathBuf> {
    write_artifact(dir, name, |w| write_corpus_to(corpus, w))
}

fn stage<T>(name: &'static str, r: Result<T>) -> Result<T> {
    r.map_err(|e| Error::Stage {
        stage: name,
        source: Box::new(e),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MixSummary {
    pub draws: u64,
    pub draws_per_source: [u64; 4],
    pub distinct_drawn: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReductionFactors {
    /// Raw over downsampled total.
    pub downsample: f64,
    /// Downsampled total over rare-filtered total.
    pub rare: f64,
    /// Downsampled total over contrastive-selected total.
    pub contrastive: f64,
}

/// Everything needed to reproduce a run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Manifest {
    pub config: PipelineConfig,
    pub fit: Option<String>,
    pub fit_error: Option<String>,
    pub resolved_downsample: DownsampleSpec,
    pub downsample: DownsampleReport,
    pub rare: RareFilterReport,
    pub contrastive: ContrastiveReport,
    pub mix: MixSummary,
    pub reduction_factors: ReductionFactors,
    pub eval_settings: Option<EvalSettings>,
    /// Selections left out of the report because they are empty.
    pub eval_skipped: Vec<String>,
    pub report: Option<EvalReport>,
}

/// Results of [`run_pipeline`]; all of them are also on disk.
#[derive(Debug, Clone)]
pub struct Artifacts {
    pub output_dir: PathBuf,
    pub fit: Option<PowerLawFit>,
    pub downsampled: Corpus,
    pub rare: Corpus,
    pub contrastive: Corpus,
    pub mix: Corpus,
    pub manifest: Manifest,
}

pub fn run_pipeline(config: &PipelineConfig) -> Result<Artifacts> {
    stage("config", config.validate())?;
    let out = config.output_dir.as_path();
    stage("config", fs::create_dir_all(out).map_err(|e| Error::io(out, e)))?;

    let text = stage("read", read_aggregate(&config.text_corpus_path, InputFormat::AggregatedTsv))?;
    let acoustic = stage("read", read_aggregate(&config.acoustic_corpus_path, InputFormat::AggregatedTsv))?;

    // (1) histogram and fit. The fit only matters when the downsampling
    // parameter is expressed relative to it.
    let hist = stage("fit", histogram(&text))?;
    stage("fit", write_artifact(out, HISTOGRAM_FILE, |w| write_histogram_to(&hist, w)))?;
    let fit = fit_power_law(&hist, config.fit.fmin, config.fit.fmax);
    let (fit, fit_error) = match fit {
        Ok(f) => {
            stage("fit", write_artifact(out, FIT_FILE, |w| writeln!(w, "{f}")))?;
            (Some(f), None)
        }
        Err(e) if !config.downsample.needs_fit() => (None, Some(e.to_string())),
        Err(e) => return stage("fit", Err(e)),
    };

    // (2) downsample
    let resolved = match &fit {
        Some(f) => stage("downsample", config.downsample.resolve_params(f))?,
        None => config.downsample.clone(),
    };
    let (downsampled, ds_report) = stage("downsample", downsample_corpus(&text, &resolved, None))?;
    stage("downsample", write_corpus_artifact(out, DOWNSAMPLED_FILE, &downsampled))?;

    // (3) rare filter and contrastive selection, side by side
    let (rare, contrastive) = rayon::join(
        || -> Result<(Corpus, RareFilterReport)> {
            let table = stage("rare_filter", build_unigram_table(&acoustic))?;
            let (kept, report) = filter_rare(&downsampled, &table, config.rare_threshold);
            stage("rare_filter", write_corpus_artifact(out, RARE_FILE, &kept))?;
            Ok((kept, report))
        },
        || stage("contrastive", run_contrastive(config, &text, &acoustic, &downsampled)),
    );
    let (rare, rare_report) = rare?;
    let (contrastive, contrastive_report) = contrastive?;

    // (4) mix
    let sources = MixSources::new()
        .with(Source::D, &downsampled)
        .with(Source::A, &acoustic)
        .with(Source::R, &rare)
        .with(Source::C, &contrastive);
    let mixer = stage("mix", Mixer::new(&sources, &config.mix))?;
    let batches = mixer.batches();
    stage("mix", write_artifact(out, MIX_FILE, |w| write_batches_to(&batches, w)))?;
    let mix = stage("mix", batches_to_corpus(&batches))?;
    let mut draws_per_source = [0u64; 4];
    for it in batches.iter().flat_map(|b| &b.items) {
        draws_per_source[it.source as usize] += 1;
    }
    let mix_summary = MixSummary {
        draws: mix.total_count(),
        draws_per_source,
        distinct_drawn: mix.distinct_count() as u64,
    };

    // (5) eval
    let (eval_settings, eval_skipped, report) = match &config.eval {
        Some(e) => {
            let (settings, skipped, report) =
                stage("eval", run_eval(e, config.seed, &text, &downsampled, &rare, &contrastive, &mix))?;
            stage("eval", write_artifact(out, REPORT_FILE, |w| report.write_to(w)))?;
            (Some(settings), skipped, Some(report))
        }
        None => (None, Vec::new(), None),
    };

    let ratio = |a: u64, b: u64| if b == 0 { f64::INFINITY } else { a as f64 / b as f64 };
    let manifest = Manifest {
        config: config.clone(),
        fit: fit.as_ref().map(|f| f.to_string()),
        fit_error,
        resolved_downsample: resolved,
        downsample: ds_report,
        rare: rare_report,
        contrastive: contrastive_report,
        mix: mix_summary,
        reduction_factors: ReductionFactors {
            downsample: ds_report.reduction_factor,
            rare: ratio(downsampled.total_count(), rare.total_count()),
            contrastive: ratio(downsampled.total_count(), contrastive.total_count()),
        },
        eval_settings,
        eval_skipped,
        report,
    };
    let json = stage("manifest", serde_json::to_string_pretty(&manifest).map_err(Error::from))?;
    stage("manifest", write_artifact(out, MANIFEST_FILE, |w| writeln!(w, "{json}")))?;

    Ok(Artifacts {
        output_dir: out.to_path_buf(),
        fit,
        downsampled,
        rare,
        contrastive,
        mix,
        manifest,
    })
}

/// Background LM on the deduplicated text corpus, target LM interpolating it
/// with the acoustic-transcript LM, then percentile selection on the
/// downsampled corpus.
fn run_contrastive(
    config: &PipelineConfig,
    text: &Corpus,
    acoustic: &Corpus,
    downsampled: &Corpus,
) -> Result<(Corpus, ContrastiveReport)> {
    let c = &config.contrastive;
    let out = config.output_dir.as_path();
    let (dedup, _) = downsample_corpus(text, &DownsampleSpec::new(DownsampleKind::Dedup), None)?;
    write_corpus_artifact(out, DEDUP_FILE, &dedup)?;
    let (background, acoustic_lm) = rayon::join(
        || NGramModel::train(&dedup, c.order, c.discount),
        || NGramModel::train(acoustic, c.order, c.discount),
    );
    let (background, acoustic_lm) = (background?, acoustic_lm?);
    write_artifact(out, BACKGROUND_LM_FILE, |w| background.write_to(w))?;
    write_artifact(out, ACOUSTIC_LM_FILE, |w| acoustic_lm.write_to(w))?;
    let target = InterpolatedModel::new(&background, &acoustic_lm, c.lambda)?;
    let sel = contrastive::select_contrastive(downsampled, &target, &background, c.keep_percentile, c.weighted)?;
    write_corpus_artifact(out, CONTRASTIVE_FILE, &sel.corpus)?;
    write_artifact(out, SCORES_FILE, |w| contrastive::write_scores_to(&sel.scores, w))?;
    Ok((sel.corpus, sel.report))
}

fn run_eval(
    e: &EvalConfig,
    seed: u64,
    text: &Corpus,
    downsampled: &Corpus,
    rare: &Corpus,
    contrastive: &Corpus,
    mix: &Corpus,
) -> Result<(EvalSettings, Vec<String>, EvalReport)> {
    let target = read_aggregate(&e.target_testset_path, InputFormat::AggregatedTsv)?;
    let tail = read_aggregate(&e.tail_testset_path, InputFormat::AggregatedTsv)?;
    let (dedup, _) = downsample_corpus(text, &DownsampleSpec::new(DownsampleKind::Dedup), None)?;
    let settings = EvalSettings {
        lm_order: e.lm_order,
        lm_discount: e.lm_discount,
        token_budget: e.token_budget,
        seed,
    };
    let candidates: [(&str, &Corpus); 6] = [
        ("raw", text),
        ("dedup", &dedup),
        ("downsampled", downsampled),
        ("rare", rare),
        ("contrastive", contrastive),
        ("mix", mix),
    ];
    let (present, empty): (Vec<_>, Vec<_>) = candidates.into_iter().partition(|(_, c)| !c.is_empty());
    let selections: Vec<(String, &Corpus)> = present.into_iter().map(|(l, c)| (l.to_string(), c)).collect();
    let report = eval_report(&selections, &target, &tail, &settings)?;
    Ok((settings, empty.into_iter().map(|(l, _)| l.to_string()).collect(), report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::write_corpus;
    use crate::mixer::MixRatios;

    fn write_input(dir: &Path, name: &str, c: &Corpus) -> PathBuf {
        let p = dir.join(name);
        write_corpus(c, &p).unwrap();
        p
    }

    fn small_world(dir: &Path) -> PipelineConfig {
        let text = Corpus::from_pairs([
            ("the weather", 40),
            ("weather today", 9),
            ("turn on the radio", 3),
            ("play konigsberg symphony", 1),
            ("call mom", 5),
            ("set an alarm", 2),
        ])
        .unwrap();
        let acoustic = Corpus::from_pairs([("the weather", 20), ("call mom", 20), ("set an alarm", 16)]).unwrap();
        let test = Corpus::from_pairs([("play konigsberg", 2), ("the weather", 3)]).unwrap();
        PipelineConfig {
            text_corpus_path: write_input(dir, "text.tsv", &text),
            acoustic_corpus_path: write_input(dir, "acoustic.tsv", &acoustic),
            downsample: DownsampleSpec::soft_log(2.0).with_seed(3),
            fit: FitOptions::default(),
            rare_threshold: 15,
            contrastive: ContrastiveConfig {
                keep_percentile: 50.0,
                ..Default::default()
            },
            mix: MixSpec {
                ratios: MixRatios::new(25, 25, 25, 25),
                batch_size: 8,
                num_batches: 4,
                seed: 11,
            },
            eval: Some(EvalConfig {
                target_testset_path: write_input(dir, "target.tsv", &test),
                tail_testset_path: write_input(dir, "tail.tsv", &test),
                lm_order: 2,
                lm_discount: 0.75,
                token_budget: 20,
            }),
            output_dir: dir.join("out"),
            seed: 5,
        }
    }

    #[test]
    fn config_json_rejects_unknown_fields() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small_world(dir.path());
        let json = serde_json::to_string(&cfg).unwrap();
        assert_eq!(PipelineConfig::from_json(&json).unwrap(), cfg);
        let bad = json.replacen("\"seed\":5", "\"seed\":5,\"sed\":1", 1);
        assert!(PipelineConfig::from_json(&bad).is_err());
    }

    #[test]
    fn config_defaults() {
        let cfg = PipelineConfig::from_json(
            r#"{"text_corpus_path":"t","acoustic_corpus_path":"a","downsample":{"function":"dedup"},
                "mix":{"ratios":{"D":100},"batch_size":4,"num_batches":1},"output_dir":"o"}"#,
        )
        .unwrap();
        assert_eq!(cfg.rare_threshold, 15);
        assert_eq!(cfg.contrastive.keep_percentile, 6.0);
        assert_eq!(cfg.contrastive.lambda, 0.5);
        assert_eq!(cfg.fit, FitOptions::default());
        assert!(cfg.eval.is_none());
        assert!(cfg.validate().is_err(), "input paths do not exist");
    }

    #[test]
    fn runs_end_to_end() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small_world(dir.path());
        let art = run_pipeline(&cfg).unwrap();
        for f in [
            HISTOGRAM_FILE,
            DOWNSAMPLED_FILE,
            DEDUP_FILE,
            BACKGROUND_LM_FILE,
            ACOUSTIC_LM_FILE,
            RARE_FILE,
            CONTRASTIVE_FILE,
            SCORES_FILE,
            MIX_FILE,
            REPORT_FILE,
            MANIFEST_FILE,
        ] {
            assert!(cfg.output_dir.join(f).is_file(), "{f}");
        }
        let leftovers = fs::read_dir(&cfg.output_dir)
            .unwrap()
            .filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == "partial"))
            .count();
        assert_eq!(leftovers, 0);
        // Every downsampled sentence except those built from transcript words
        // alone ("the weather", "call mom", "set an alarm") is rare.
        let common = ["the weather", "call mom", "set an alarm"];
        let expected = art.downsampled.filter(|r| !common.contains(&r.text.as_str()));
        assert_eq!(art.rare, expected);
        assert!(art.rare.get("weather today").is_some());
        assert_eq!(art.mix.total_count(), 32);
        let report = fs::read_to_string(cfg.output_dir.join(REPORT_FILE)).unwrap();
        assert!(report.starts_with(REPORT_HEADER));
        assert_eq!(report.lines().count(), 7);
        let m = &art.manifest;
        assert_eq!(m.resolved_downsample.fc, Some(2.0));
        assert_eq!(m.eval_settings.unwrap().seed, 5);
    }

    #[test]
    fn fit_failure_is_fatal_only_when_needed() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small_world(dir.path());
        cfg.fit.fmin = 1000;
        let art = run_pipeline(&cfg).unwrap();
        assert!(art.fit.is_none());
        assert!(art.manifest.fit_error.is_some());

        cfg.downsample = DownsampleSpec::with_paper_param(DownsampleKind::SoftLog, 1.0);
        match run_pipeline(&cfg) {
            Err(Error::Stage { stage, .. }) => assert_eq!(stage, "fit"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn stage_errors_are_labelled() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small_world(dir.path());
        cfg.rare_threshold = 0;
        cfg.mix.ratios = MixRatios::new(0, 0, 100, 0);
        let err = run_pipeline(&cfg).unwrap_err();
        assert!(matches!(err, Error::Stage { stage: "mix", .. }), "{err}");
        assert!(err.to_string().contains("mix"));
    }

    #[test]
    fn budget_sample_respects_budget() {
        let c = Corpus::from_pairs([("a b c", 5), ("d", 1), ("e f", 2)]).unwrap();
        let s = budget_sample(&c, 50, 1).unwrap();
        let tokens: u64 = s.iter().map(|r| r.count * tokenize(&r.text).len() as u64).sum();
        assert!((48..=50).contains(&tokens), "{tokens}");
        assert_eq!(s, budget_sample(&c, 50, 1).unwrap());
        let long = Corpus::from_pairs([("a b c d", 1)]).unwrap();
        assert!(matches!(budget_sample(&long, 3, 0), Err(Error::BudgetTooSmall { budget: 3 })));
    }

    #[test]
    fn identical_selections_give_identical_rows() {
        let c = Corpus::from_pairs([("a b", 3), ("b c", 1)]).unwrap();
        let test = Corpus::from_pairs([("a b", 1)]).unwrap();
        let settings = EvalSettings {
            lm_order: 2,
            lm_discount: 0.5,
            token_budget: 30,
            seed: 4,
        };
        let r = eval_report(&[("x".into(), &c), ("y".into(), &c)], &test, &test, &settings).unwrap();
        assert_eq!(r.rows[0].logppl_target, r.rows[1].logppl_target);
        assert_eq!(r.rows[0].logppl_tail, r.rows[1].logppl_tail);
        assert_eq!((r.rows[0].total, r.rows[0].distinct), (4, 2));
        assert!(eval_report(&[("x".into(), &c)], &Corpus::empty(), &test, &settings).is_err());
    }

    #[test]
    fn in_domain_selection_scores_better() {
        let target_domain = Corpus::from_pairs((0..50).map(|i| (format!("play song {i}"), 2))).unwrap();
        let background = Corpus::from_pairs((0..50).map(|i| (format!("stock price {i} today"), 2))).unwrap();
        let test = Corpus::from_pairs((0..10).map(|i| (format!("play song {i}"), 1))).unwrap();
        let settings = EvalSettings {
            lm_order: 3,
            lm_discount: 0.75,
            token_budget: 300,
            seed: 0,
        };
        let r = eval_report(
            &[("target".into(), &target_domain), ("background".into(), &background)],
            &test,
            &test,
            &settings,
        )
        .unwrap();
        assert!(r.rows[0].logppl_target < r.rows[1].logppl_target);
    }
}
