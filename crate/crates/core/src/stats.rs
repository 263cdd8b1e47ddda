//! Frequency histograms and log-log power-law fits.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;

use crate::corpus::Corpus;
use crate::error::{Error, Result};

/// Number of distinct items observed at each frequency. Empty bins are
/// omitted.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FrequencyHistogram {
    bins: BTreeMap<u64, u64>,
}

/// Smallest bin size kept by the automatic upper fit bound.
pub const AUTO_FIT_MIN_BIN: u64 = 5;

impl FrequencyHistogram {
    /// Histogram of an arbitrary multiset of frequencies; zeros are ignored.
    pub fn from_frequencies(freqs: impl IntoIterator<Item = u64>) -> Self {
        let mut bins = BTreeMap::new();
        for f in freqs.into_iter().filter(|&f| f > 0) {
            *bins.entry(f).or_insert(0) += 1;
        }
        Self { bins }
    }

    /// Builds from explicit `(f, distinct_count)` pairs, dropping empty bins
    /// and summing repeated keys.
    pub fn from_bins(pairs: impl IntoIterator<Item = (u64, u64)>) -> Self {
        let mut bins = BTreeMap::new();
        for (f, n) in pairs {
            if f > 0 && n > 0 {
                *bins.entry(f).or_insert(0) += n;
            }
        }
        Self { bins }
    }

    pub fn bins(&self) -> &BTreeMap<u64, u64> {
        &self.bins
    }

    pub fn get(&self, f: u64) -> u64 {
        self.bins.get(&f).copied().unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.bins.is_empty()
    }

    /// `sum f * bins[f]`.
    pub fn total_mass(&self) -> u128 {
        self.bins
            .iter()
            .map(|(&f, &n)| u128::from(f) * u128::from(n))
            .sum()
    }

    /// `sum bins[f]`.
    pub fn distinct(&self) -> u64 {
        self.bins.values().sum()
    }

    /// Largest `f` whose bin holds at least [`AUTO_FIT_MIN_BIN`] items.
    pub fn auto_fit_max(&self) -> Option<u64> {
        self.bins
            .iter()
            .rev()
            .find(|(_, &n)| n >= AUTO_FIT_MIN_BIN)
            .map(|(&f, _)| f)
    }
}

/// Histogram of record counts. Errors on an empty corpus.
pub fn histogram(corpus: &Corpus) -> Result<FrequencyHistogram> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let bins = corpus
        .records()
        .par_chunks(64 * 1024)
        .map(|chunk| {
            let mut m: BTreeMap<u64, u64> = BTreeMap::new();
            for r in chunk {
                *m.entry(r.count).or_insert(0) += 1;
            }
            m
        })
        .reduce(BTreeMap::new, |mut a, b| {
            for (f, n) in b {
                *a.entry(f).or_insert(0) += n;
            }
            a
        });
    Ok(FrequencyHistogram { bins })
}

/// `distinct_count(f) ~= amplitude * f^-alpha`, fitted by least squares in
/// log10-log10 space.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerLawFit {
    pub amplitude: f64,
    pub alpha: f64,
    /// Inclusive frequency interval the fit used. Absent when the fit was
    /// parsed from its one-line text form.
    pub f_range: Option<(u64, u64)>,
    /// Frequency where the fitted line reaches 1, i.e. `amplitude^(1/alpha)`.
    pub fr: Option<f64>,
    /// RMS residual in log10 units.
    pub residual: f64,
}

impl PowerLawFit {
    /// A fit with the given parameters and `fr` derived from them.
    pub fn from_params(amplitude: f64, alpha: f64) -> Self {
        Self {
            amplitude,
            alpha,
            f_range: None,
            fr: fr_of(amplitude, alpha),
            residual: 0.0,
        }
    }

    pub fn predict(&self, f: f64) -> f64 {
        self.amplitude * f.powf(-self.alpha)
    }
}

fn fr_of(amplitude: f64, alpha: f64) -> Option<f64> {
    (alpha > 0.0).then(|| amplitude.powf(1.0 / alpha))
}

impl fmt::Display for PowerLawFit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "A={} alpha={} fr=", self.amplitude, self.alpha)?;
        match self.fr {
            Some(fr) => write!(f, "{fr}")?,
            None => f.write_str("none")?,
        }
        write!(f, " residual={}", self.residual)
    }
}

impl FromStr for PowerLawFit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut amplitude = None;
        let mut alpha = None;
        let mut fr = None;
        let mut residual = None;
        for field in s.split_whitespace() {
            let (k, v) = field
                .split_once('=')
                .ok_or_else(|| Error::param(format!("fit line: bad field '{field}'")))?;
            let num = || {
                v.parse::<f64>()
                    .map_err(|_| Error::param(format!("fit line: bad value for {k}: '{v}'")))
            };
            match k {
                "A" => amplitude = Some(num()?),
                "alpha" => alpha = Some(num()?),
                "fr" => fr = Some(if v == "none" { None } else { Some(num()?) }),
                "residual" => residual = Some(num()?),
                _ => return Err(Error::param(format!("fit line: unknown field '{k}'"))),
            }
        }
        let missing = |name: &str| Error::param(format!("fit line: missing {name}"));
        Ok(PowerLawFit {
            amplitude: amplitude.ok_or_else(|| missing("A"))?,
            alpha: alpha.ok_or_else(|| missing("alpha"))?,
            f_range: None,
            fr: fr.ok_or_else(|| missing("fr"))?,
            residual: residual.ok_or_else(|| missing("residual"))?,
        })
    }
}

/// Ordinary least squares on `(log10 f, log10 distinct_count(f))` for bins
/// with `f_min <= f <= f_max`. `f_max = None` selects
/// [`FrequencyHistogram::auto_fit_max`].
pub fn fit_power_law(
    hist: &FrequencyHistogram,
    f_min: u64,
    f_max: Option<u64>,
) -> Result<PowerLawFit> {
    let f_max = match f_max {
        Some(m) => m,
        None => hist.auto_fit_max().ok_or(Error::InsufficientPoints(0))?,
    };
    let points: Vec<(f64, f64)> = hist
        .bins
        .range(f_min..=f_max)
        .map(|(&f, &n)| ((f as f64).log10(), (n as f64).log10()))
        .collect();
    if points.len() < 2 {
        return Err(Error::InsufficientPoints(points.len()));
    }
    let n = points.len() as f64;
    let mean_x = points.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mean_x).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::DegenerateFit);
    }
    let sxy: f64 = points.iter().map(|p| (p.0 - mean_x) * (p.1 - mean_y)).sum();
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let residual = (points
        .iter()
        .map(|p| (p.1 - (intercept + slope * p.0)).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();

    let lo = *hist.bins.range(f_min..=f_max).next().unwrap().0;
    let hi = *hist.bins.range(f_min..=f_max).next_back().unwrap().0;
    let amplitude = 10f64.powf(intercept);
    let alpha = -slope;
    Ok(PowerLawFit {
        amplitude,
        alpha,
        f_range: Some((lo, hi)),
        fr: fr_of(amplitude, alpha),
        residual,
    })
}

/// Writes `f<TAB>distinct_count` lines, ascending in `f`.
pub fn emit_histogram_tsv(hist: &FrequencyHistogram, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_histogram_to(hist, f).map_err(|e| Error::io(path, e))
}

pub fn write_histogram_to<W: Write>(hist: &FrequencyHistogram, out: W) -> std::io::Result<()> {
    let mut w = BufWriter::new(out);
    for (f, n) in &hist.bins {
        writeln!(w, "{f}\t{n}")?;
    }
    w.flush()
}

pub fn read_histogram_tsv(path: impl AsRef<Path>) -> Result<FrequencyHistogram> {
    let path = path.as_ref();
    let data = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut pairs = Vec::new();
    for (i, line) in data.lines().enumerate() {
        let malformed = |msg: &str| Error::Malformed {
            path: path.to_path_buf(),
            line: i + 1,
            msg: msg.to_string(),
        };
        let (f, n) = line
            .split_once('\t')
            .ok_or_else(|| malformed("expected 'f<TAB>distinct_count'"))?;
        let f: u64 = f.parse().map_err(|_| malformed("bad frequency"))?;
        let n: u64 = n.parse().map_err(|_| malformed("bad distinct_count"))?;
        pairs.push((f, n));
    }
    Ok(FrequencyHistogram::from_bins(pairs))
}
