use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use dataselect::contrastive::{select_contrastive, write_scores, DEFAULT_KEEP_PERCENTILE};
use dataselect::corpus::{gen_zipf, read_aggregate, write_corpus, InputFormat, ZipfGenSpec};
use dataselect::downsample::{downsample_corpus, DownsampleKind, DownsampleSpec};
use dataselect::mixer::{mix_stream, write_batches, MixRatios, MixSources, MixSpec, Source};
use dataselect::ngram::{corpus_perplexity, InterpolatedModel, NGramModel, DEFAULT_DISCOUNT, DEFAULT_ORDER};
use dataselect::pipeline::{run_pipeline, PipelineConfig};
use dataselect::rarefilter::{build_unigram_table, filter_rare, DEFAULT_THRESHOLD};
use dataselect::stats::{emit_histogram_tsv, fit_power_law, histogram, read_histogram_tsv, PowerLawFit};
use dataselect::Corpus;

#[derive(Parser, Debug)]
#[command(version, about = "Select LM training data from a large text corpus")]
struct Cli {
    /// Worker threads (default: all cores)
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Aggregate a corpus into count<TAB>text lines
    Count(CountArgs),
    /// Generate a synthetic corpus with a Zipfian frequency histogram
    GenZipf(GenZipfArgs),
    /// Frequency histogram of an aggregated corpus
    Hist(HistArgs),
    /// Fit a power law to a histogram
    Fit(FitArgs),
    /// Downsample sentence frequencies
    Downsample(DownsampleArgs),
    /// Train an n-gram model
    LmTrain(LmTrainArgs),
    /// Count-weighted mean log perplexity of a corpus
    Ppl(PplArgs),
    /// Keep sentences with a word that is rare in the acoustic transcripts
    RareFilter(RareFilterArgs),
    /// Contrastive (target minus background) selection
    Contrastive(ContrastiveArgs),
    /// Emit a minibatch mix stream
    Mix(MixArgs),
    /// Run the full selection pipeline from a JSON config
    Pipeline(PipelineArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Format {
    Raw,
    Agg,
}

#[derive(Args, Debug)]
struct CountArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, value_enum, default_value = "raw")]
    format: Format,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct GenZipfArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    amplitude: f64,
    #[arg(long)]
    alpha: f64,
    #[arg(long)]
    fmax: u64,
    #[arg(long, default_value_t = 1000)]
    vocab: usize,
    #[arg(long, default_value_t = 6)]
    max_len: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Extra head sentences as FREQ:K (repeatable)
    #[arg(long, value_name = "F:K", value_parser = parse_boost)]
    head_boost: Vec<(u64, u64)>,
    #[arg(long, default_value_t = 0)]
    domain_profile: u64,
}

#[derive(Args, Debug)]
struct HistArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct FitArgs {
    #[arg(long)]
    hist: PathBuf,
    #[arg(long, default_value_t = 1)]
    fmin: u64,
    /// Upper frequency bound, or "auto"
    #[arg(long, default_value = "auto")]
    fmax: String,
}

#[derive(Args, Debug)]
struct DownsampleArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// simple-power, soft-log, pure-log, dedup or none
    #[arg(long = "fn")]
    function: DownsampleKind,
    #[arg(long, conflicts_with_all = ["fc", "param"])]
    beta: Option<f64>,
    #[arg(long, conflicts_with = "param")]
    fc: Option<f64>,
    /// Parameter relative to a power-law fit; needs --fit
    #[arg(long, requires = "fit")]
    param: Option<f64>,
    /// File holding the one-line output of `fit`
    #[arg(long)]
    fit: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug)]
struct LmTrainArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, default_value_t = DEFAULT_ORDER)]
    order: usize,
    #[arg(long, default_value_t = DEFAULT_DISCOUNT)]
    discount: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct PplArgs {
    /// Background model
    #[arg(long)]
    lm: PathBuf,
    /// Second model, mixed in with weight --lambda
    #[arg(long, requires = "lambda")]
    lm2: Option<PathBuf>,
    #[arg(long, requires = "lm2")]
    lambda: Option<f64>,
    #[arg(long = "in")]
    input: PathBuf,
}

#[derive(Args, Debug)]
struct RareFilterArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    acoustic: PathBuf,
    #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
    threshold: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct ContrastiveArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    target_lm: PathBuf,
    #[arg(long)]
    background_lm: PathBuf,
    /// Use lambda * target + (1 - lambda) * background as the target model
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_KEEP_PERCENTILE)]
    keep_percentile: f64,
    /// Take the percentile over occurrences instead of distinct sentences
    #[arg(long)]
    weighted: bool,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    scores_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct MixArgs {
    #[arg(long)]
    d: Option<PathBuf>,
    #[arg(long)]
    a: Option<PathBuf>,
    #[arg(long)]
    r: Option<PathBuf>,
    #[arg(long)]
    c: Option<PathBuf>,
    /// Percentages D,A,R,C summing to 100
    #[arg(long)]
    ratios: MixRatios,
    #[arg(long, default_value_t = 256)]
    batch: usize,
    #[arg(long, default_value_t = 100)]
    batches: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct PipelineArgs {
    #[arg(long)]
    config: PathBuf,
}

fn parse_boost(s: &str) -> Result<(u64, u64), String> {
    let (f, k) = s.split_once(':').ok_or_else(|| format!("expected F:K, got '{s}'"))?;
    let f = f.trim().parse().map_err(|_| format!("bad frequency in '{s}'"))?;
    let k = k.trim().parse().map_err(|_| format!("bad count in '{s}'"))?;
    Ok((f, k))
}

fn read_agg(path: &Path) -> Result<Corpus> {
    read_aggregate(path, InputFormat::AggregatedTsv).with_context(|| format!("reading {}", path.display()))
}

fn load_lm(path: &Path) -> Result<NGramModel> {
    NGramModel::load(path).with_context(|| format!("loading model {}", path.display()))
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring thread pool")?;
    }
    match cli.command {
        Command::Count(a) => {
            let format = match a.format {
                Format::Raw => InputFormat::RawLines,
                Format::Agg => InputFormat::AggregatedTsv,
            };
            let c = read_aggregate(&a.input, format)?;
            write_corpus(&c, &a.out)?;
            println!("total={} distinct={}", c.total_count(), c.distinct_count());
        }
        Command::GenZipf(a) => {
            let spec = ZipfGenSpec {
                amplitude: a.amplitude,
                alpha: a.alpha,
                f_max: a.fmax,
                vocab_size: a.vocab,
                max_len: a.max_len,
                head_boost: a.head_boost,
                domain_profile: a.domain_profile,
                seed: a.seed,
            };
            let c = gen_zipf(&spec)?;
            write_corpus(&c, &a.out)?;
            println!("total={} distinct={}", c.total_count(), c.distinct_count());
        }
        Command::Hist(a) => {
            let h = histogram(&read_agg(&a.input)?)?;
            emit_histogram_tsv(&h, &a.out)?;
        }
        Command::Fit(a) => {
            let fmax = match a.fmax.as_str() {
                "auto" => None,
                s => Some(s.parse().with_context(|| format!("--fmax must be a number or 'auto', got '{s}'"))?),
            };
            let h = read_histogram_tsv(&a.hist)?;
            println!("{}", fit_power_law(&h, a.fmin, fmax)?);
        }
        Command::Downsample(a) => {
            let spec = DownsampleSpec {
                function: a.function,
                beta: a.beta,
                fc: a.fc,
                paper_param: a.param,
                seed: a.seed,
            };
            let fit = match &a.fit {
                Some(p) => {
                    let line = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                    Some(line.parse::<PowerLawFit>()?)
                }
                None => None,
            };
            let (out, report) = downsample_corpus(&read_agg(&a.input)?, &spec, fit.as_ref())?;
            write_corpus(&out, &a.out)?;
            println!("{}", serde_json::to_string(&report)?);
        }
        Command::LmTrain(a) => {
            let lm = NGramModel::train(&read_agg(&a.input)?, a.order, a.discount)?;
            lm.save(&a.out)?;
        }
        Command::Ppl(a) => {
            let corpus = read_agg(&a.input)?;
            let lm = load_lm(&a.lm)?;
            let l = match (&a.lm2, a.lambda) {
                (Some(p), Some(lambda)) => {
                    let lm2 = load_lm(p)?;
                    corpus_perplexity(&InterpolatedModel::new(&lm, &lm2, lambda)?, &corpus)?
                }
                _ => corpus_perplexity(&lm, &corpus)?,
            };
            println!("{l}");
        }
        Command::RareFilter(a) => {
            let table = build_unigram_table(&read_agg(&a.acoustic)?)?;
            let (kept, report) = filter_rare(&read_agg(&a.input)?, &table, a.threshold);
            write_corpus(&kept, &a.out)?;
            println!("kept_records={} kept_fraction={}", report.kept_records, report.kept_fraction);
        }
        Command::Contrastive(a) => {
            let corpus = read_agg(&a.input)?;
            let target = load_lm(&a.target_lm)?;
            let background = load_lm(&a.background_lm)?;
            let sel = match a.lambda {
                Some(lambda) => {
                    let mixed = InterpolatedModel::new(&background, &target, lambda)?;
                    select_contrastive(&corpus, &mixed, &background, a.keep_percentile, a.weighted)?
                }
                None => select_contrastive(&corpus, &target, &background, a.keep_percentile, a.weighted)?,
            };
            write_corpus(&sel.corpus, &a.out)?;
            if let Some(p) = &a.scores_out {
                write_scores(&sel.scores, p)?;
            }
            println!(
                "threshold={} kept_records={} kept_fraction={}",
                sel.report.threshold, sel.report.kept_records, sel.report.kept_fraction
            );
        }
        Command::Mix(a) => {
            let load = |p: &Option<PathBuf>| p.as_deref().map(read_agg).transpose();
            let corpora = [load(&a.d)?, load(&a.a)?, load(&a.r)?, load(&a.c)?];
            let mut sources = MixSources::new();
            for (s, c) in Source::ALL.into_iter().zip(&corpora) {
                if let Some(c) = c {
                    sources = sources.with(s, c);
                }
            }
            let spec = MixSpec {
                ratios: a.ratios,
                batch_size: a.batch,
                num_batches: a.batches,
                seed: a.seed,
            };
            write_batches(&mix_stream(&sources, &spec)?, &a.out)?;
        }
        Command::Pipeline(a) => {
            let cfg = PipelineConfig::load(&a.config)?;
            let art = run_pipeline(&cfg)?;
            if let Some(r) = &art.manifest.report {
                r.write_to(std::io::stdout().lock())?;
            } else {
                println!("outputs in {}", art.output_dir.display());
            }
        }
    }
    Ok(())
}
