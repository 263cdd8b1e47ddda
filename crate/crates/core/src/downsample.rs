//! Sentence-frequency downsampling.
//!
//! A downsampling function maps an original frequency `f0` to a (generally
//! fractional) target frequency `f1`; [`realize_count`] turns `f1` into an
//! integer count by hash-keyed stochastic rounding.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, SentenceRecord};
use crate::error::{Error, Result};
use crate::hash::{stable_hash, unit_from_hash};
use crate::stats::PowerLawFit;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DownsampleKind {
    SimplePower,
    SoftLog,
    PureLog,
    Dedup,
    None,
}

impl FromStr for DownsampleKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.replace('_', "-").as_str() {
            "simple-power" => Self::SimplePower,
            "soft-log" => Self::SoftLog,
            "pure-log" => Self::PureLog,
            "dedup" => Self::Dedup,
            "none" => Self::None,
            _ => return Err(Error::param(format!("unknown downsampling function '{s}'"))),
        })
    }
}

impl fmt::Display for DownsampleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::SimplePower => "simple-power",
            Self::SoftLog => "soft-log",
            Self::PureLog => "pure-log",
            Self::Dedup => "dedup",
            Self::None => "none",
        })
    }
}

/// A downsampling function with concrete parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Downsampler {
    /// `f1 = f0^beta`
    SimplePower { beta: f64 },
    /// `f1 = fc * ln(1 + f0 / fc)`
    SoftLog { fc: f64 },
    /// `f1 = max(0, ln f0)`
    PureLog,
    /// `f1 = 1` for every present sentence.
    Dedup,
    Identity,
}

impl Downsampler {
    /// Target frequency for original frequency `f0`.
    pub fn apply(&self, f0: f64) -> Result<f64> {
        if !(f0 >= 0.0) {
            return Err(Error::param(format!("frequency must be non-negative, got {f0}")));
        }
        Ok(match *self {
            Downsampler::SimplePower { beta } => {
                if f0 == 0.0 {
                    0.0
                } else {
                    f0.powf(beta)
                }
            }
            Downsampler::SoftLog { fc } => fc * (f0 / fc).ln_1p(),
            Downsampler::PureLog => {
                if f0 >= 1.0 {
                    f0.ln().max(0.0)
                } else {
                    0.0
                }
            }
            Downsampler::Dedup => {
                if f0 >= 1.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Downsampler::Identity => f0,
        })
    }
}

/// Free-function form of [`Downsampler::apply`].
pub fn downsample_frequency(function: &Downsampler, f0: f64) -> Result<f64> {
    function.apply(f0)
}

/// Downsampling configuration as given by a user: either a concrete
/// parameter (`beta` / `fc`) or a `paper_param` to be resolved against a
/// power-law fit.
///
/// For Simple Power `paper_param = alpha * beta`; for Soft Log
/// `paper_param = log10(fr / fc)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DownsampleSpec {
    pub function: DownsampleKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fc: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub paper_param: Option<f64>,
    #[serde(default)]
    pub seed: u64,
}

impl DownsampleSpec {
    pub fn new(function: DownsampleKind) -> Self {
        Self {
            function,
            beta: None,
            fc: None,
            paper_param: None,
            seed: 0,
        }
    }

    pub fn simple_power(beta: f64) -> Self {
        Self {
            beta: Some(beta),
            ..Self::new(DownsampleKind::SimplePower)
        }
    }

    pub fn soft_log(fc: f64) -> Self {
        Self {
            fc: Some(fc),
            ..Self::new(DownsampleKind::SoftLog)
        }
    }

    pub fn with_paper_param(function: DownsampleKind, p: f64) -> Self {
        Self {
            paper_param: Some(p),
            ..Self::new(function)
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let set = |o: Option<f64>| o.is_some() as u8;
        match self.function {
            DownsampleKind::SimplePower => {
                if set(self.beta) + set(self.paper_param) != 1 || self.fc.is_some() {
                    return Err(Error::param("simple-power needs exactly one of beta / paper_param"));
                }
                if let Some(b) = self.beta {
                    if !(b > 0.0 && b.is_finite()) {
                        return Err(Error::param(format!("beta must be > 0, got {b}")));
                    }
                }
            }
            DownsampleKind::SoftLog => {
                if set(self.fc) + set(self.paper_param) != 1 || self.beta.is_some() {
                    return Err(Error::param("soft-log needs exactly one of fc / paper_param"));
                }
                if let Some(fc) = self.fc {
                    if !(fc > 0.0 && fc.is_finite()) {
                        return Err(Error::param(format!("fc must be > 0, got {fc}")));
                    }
                }
            }
            DownsampleKind::PureLog | DownsampleKind::Dedup | DownsampleKind::None => {
                if self.beta.is_some() || self.fc.is_some() || self.paper_param.is_some() {
                    return Err(Error::param(format!("{} takes no parameters", self.function)));
                }
            }
        }
        if let Some(p) = self.paper_param {
            if !(p >= 0.0 && p.is_finite()) {
                return Err(Error::param(format!("paper_param must be >= 0, got {p}")));
            }
        }
        Ok(())
    }

    pub fn needs_fit(&self) -> bool {
        self.paper_param.is_some()
    }

    /// Replaces `paper_param` by the concrete parameter implied by `fit`:
    /// `beta = p / alpha` or `fc = fr / 10^p`. Specs without a fit-relative
    /// parameter are returned unchanged.
    pub fn resolve_params(&self, fit: &PowerLawFit) -> Result<DownsampleSpec> {
        self.validate()?;
        let Some(p) = self.paper_param else {
            return Ok(self.clone());
        };
        if !(fit.alpha > 0.0) {
            return Err(Error::param(format!("fit alpha must be > 0, got {}", fit.alpha)));
        }
        let mut out = self.clone();
        out.paper_param = None;
        match self.function {
            DownsampleKind::SimplePower => out.beta = Some(p / fit.alpha),
            DownsampleKind::SoftLog => {
                let fr = fit.fr.ok_or(Error::MissingFr)?;
                let fc = fr / 10f64.powf(p);
                if !(fc > 0.0) {
                    return Err(Error::param(format!("resolved fc must be > 0, got {fc}")));
                }
                out.fc = Some(fc);
            }
            _ => unreachable!("validate rejects paper_param for parameterless functions"),
        }
        Ok(out)
    }

    /// The concrete function. Fails if `paper_param` is still unresolved.
    pub fn downsampler(&self) -> Result<Downsampler> {
        self.validate()?;
        if self.paper_param.is_some() {
            return Err(Error::param("paper_param must be resolved against a fit first"));
        }
        Ok(match self.function {
            DownsampleKind::SimplePower => Downsampler::SimplePower {
                beta: self.beta.unwrap(),
            },
            DownsampleKind::SoftLog => Downsampler::SoftLog { fc: self.fc.unwrap() },
            DownsampleKind::PureLog => Downsampler::PureLog,
            DownsampleKind::Dedup => Downsampler::Dedup,
            DownsampleKind::None => Downsampler::Identity,
        })
    }
}

/// `floor(f1) + b`, where `b = 1` iff `H(seed, text) / 2^64 < frac(f1)` with
/// `H` = [`stable_hash`].
pub fn realize_count(f1: f64, text: &str, seed: u64) -> u64 {
    if !(f1 > 0.0) {
        return 0;
    }
    let whole = f1.floor();
    let frac = f1 - whole;
    let bump = frac > 0.0 && unit_from_hash(stable_hash(seed, text)) < frac;
    whole as u64 + u64::from(bump)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DownsampleReport {
    pub input_total: u64,
    pub output_total: u64,
    pub input_distinct: u64,
    pub output_distinct: u64,
    pub reduction_factor: f64,
}

/// Maps every record through the downsampling function and
/// [`realize_count`]; records realizing 0 are dropped.
///
/// `fit` is only consulted when `spec` carries a `paper_param`.
pub fn downsample_corpus(
    corpus: &Corpus,
    spec: &DownsampleSpec,
    fit: Option<&PowerLawFit>,
) -> Result<(Corpus, DownsampleReport)> {
    let function = if spec.needs_fit() {
        let fit = fit.ok_or_else(|| Error::param("paper_param requires a power-law fit"))?;
        spec.resolve_params(fit)?.downsampler()?
    } else {
        spec.downsampler()?
    };
    let seed = spec.seed;
    let records: Vec<SentenceRecord> = corpus
        .records()
        .par_iter()
        .map(|r| -> Result<Option<SentenceRecord>> {
            let f1 = function.apply(r.count as f64)?;
            let n = realize_count(f1, &r.text, seed);
            Ok((n > 0).then(|| SentenceRecord::new(r.text.clone(), n)))
        })
        .filter_map(|r| r.transpose())
        .collect::<Result<_>>()?;
    let out = Corpus::from_unique_records(records);
    let report = DownsampleReport {
        input_total: corpus.total_count(),
        output_total: out.total_count(),
        input_distinct: corpus.distinct_count() as u64,
        output_distinct: out.distinct_count() as u64,
        reduction_factor: corpus.total_count() as f64 / out.total_count() as f64,
    };
    Ok((out, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{gen_zipf, ZipfGenSpec};
    use proptest::prelude::*;

    #[test]
    fn resolve_simple_power() {
        let spec = DownsampleSpec::with_paper_param(DownsampleKind::SimplePower, 2.2);
        let r = spec.resolve_params(&PowerLawFit::from_params(1e6, 1.1)).unwrap();
        assert!((r.beta.unwrap() - 2.0).abs() < 1e-12);
        assert_eq!(r.paper_param, None);
    }

    #[test]
    fn resolve_soft_log() {
        let fit = PowerLawFit::from_params(1e6, 2.0);
        let s2 = DownsampleSpec::with_paper_param(DownsampleKind::SoftLog, 2.0);
        assert!((s2.resolve_params(&fit).unwrap().fc.unwrap() - 10.0).abs() < 1e-9);
        let s0 = DownsampleSpec::with_paper_param(DownsampleKind::SoftLog, 0.0);
        assert!((s0.resolve_params(&fit).unwrap().fc.unwrap() - 1000.0).abs() < 1e-9);
    }

    #[test]
    fn resolve_errors() {
        let s = DownsampleSpec::with_paper_param(DownsampleKind::SoftLog, 2.0);
        let mut fit = PowerLawFit::from_params(1e6, 2.0);
        fit.fr = None;
        assert!(matches!(s.resolve_params(&fit), Err(Error::MissingFr)));
        assert!(s.resolve_params(&PowerLawFit::from_params(1e6, -1.0)).is_err());
        // fr / 10^p underflows to 0.
        let huge = DownsampleSpec::with_paper_param(DownsampleKind::SoftLog, 400.0);
        assert!(huge.resolve_params(&PowerLawFit::from_params(10.0, 1.0)).is_err());
    }

    #[test]
    fn spec_validation() {
        let mut s = DownsampleSpec::simple_power(0.5);
        s.paper_param = Some(1.0);
        assert!(s.validate().is_err());
        assert!(DownsampleSpec::new(DownsampleKind::SoftLog).validate().is_err());
        let mut d = DownsampleSpec::new(DownsampleKind::Dedup);
        d.fc = Some(1.0);
        assert!(d.validate().is_err());
        assert!(DownsampleSpec::soft_log(-1.0).validate().is_err());
        assert!(DownsampleSpec::with_paper_param(DownsampleKind::SoftLog, 1.0)
            .downsampler()
            .is_err());
    }

    #[test]
    fn function_values() {
        let soft = Downsampler::SoftLog { fc: 10.0 };
        assert!((soft.apply(10.0).unwrap() - 6.931_471_805_599_453).abs() < 1e-12);
        assert_eq!(soft.apply(0.0).unwrap(), 0.0);
        assert_eq!(Downsampler::SimplePower { beta: 1.0 }.apply(37.0).unwrap(), 37.0);
        assert_eq!(Downsampler::SimplePower { beta: 0.5 }.apply(16.0).unwrap(), 4.0);
        assert_eq!(Downsampler::Dedup.apply(213.0).unwrap(), 1.0);
        assert_eq!(Downsampler::PureLog.apply(1.0).unwrap(), 0.0);
        assert!((Downsampler::PureLog.apply(std::f64::consts::E).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(Downsampler::Identity.apply(5.5).unwrap(), 5.5);
        assert!(soft.apply(-1.0).is_err());
    }

    #[test]
    fn realize_whole_and_zero() {
        for seed in 0..20 {
            assert_eq!(realize_count(4.0, &format!("t{seed}"), seed), 4);
            assert_eq!(realize_count(0.0, "x", seed), 0);
        }
    }

    #[test]
    fn realize_fraction_is_bernoulli() {
        let n = 10_000;
        let ones = (0..n).filter(|i| realize_count(0.25, &format!("s{i}"), 9) == 1).count();
        let p = ones as f64 / n as f64;
        assert!((p - 0.25).abs() < 0.02, "{p}");
    }

    #[test]
    fn dedup_and_identity_corpora() {
        let c = Corpus::from_pairs([("a", 5), ("b", 1)]).unwrap();
        let (d, rep) = downsample_corpus(&c, &DownsampleSpec::new(DownsampleKind::Dedup), None).unwrap();
        assert_eq!(d, Corpus::from_pairs([("a", 1), ("b", 1)]).unwrap());
        assert_eq!(rep.reduction_factor, 3.0);
        let (same, rep) = downsample_corpus(&c, &DownsampleSpec::new(DownsampleKind::None), None).unwrap();
        assert_eq!(same, c);
        assert_eq!(rep.reduction_factor, 1.0);
    }

    #[test]
    fn pure_log_drops_singletons() {
        let c = Corpus::from_pairs([("a", 1), ("b", 100)]).unwrap();
        let (d, _) = downsample_corpus(&c, &DownsampleSpec::new(DownsampleKind::PureLog), None).unwrap();
        assert_eq!(d.get("a"), None);
        assert!(matches!(d.get("b"), Some(4) | Some(5)));
    }

    #[test]
    fn paper_param_without_fit_is_an_error() {
        let c = Corpus::from_pairs([("a", 1)]).unwrap();
        let s = DownsampleSpec::with_paper_param(DownsampleKind::SoftLog, 2.0);
        assert!(downsample_corpus(&c, &s, None).is_err());
    }

    #[test]
    fn soft_log_total_matches_expectation() {
        let mut gen = ZipfGenSpec::new(2e4, 1.5, 2000);
        gen.head_boost = vec![(50_000, 2)];
        let c = gen_zipf(&gen).unwrap();
        let spec = DownsampleSpec::soft_log(12.0).with_seed(3);
        let (out, _) = downsample_corpus(&c, &spec, None).unwrap();
        let f = Downsampler::SoftLog { fc: 12.0 };
        let (mut mean, mut var) = (0.0, 0.0);
        for r in &c {
            let f1 = f.apply(r.count as f64).unwrap();
            let frac = f1 - f1.floor();
            mean += f1;
            var += frac * (1.0 - frac);
        }
        let dev = (out.total_count() as f64 - mean).abs();
        assert!(dev <= 3.0 * var.sqrt(), "dev {dev} sigma {}", var.sqrt());
    }

    #[test]
    fn soft_log_flattens_head_more_than_tail() {
        let mut gen = ZipfGenSpec::new(1e4, 1.3, 1000);
        gen.head_boost = vec![(100_000, 3)];
        let c = gen_zipf(&gen).unwrap();
        let fit = crate::stats::fit_power_law(&crate::stats::histogram(&c).unwrap(), 1, None).unwrap();
        let spec = DownsampleSpec::with_paper_param(DownsampleKind::SoftLog, 2.0);
        let (out, _) = downsample_corpus(&c, &spec, Some(&fit)).unwrap();
        let max_in = c.iter().map(|r| r.count).max().unwrap() as f64;
        let max_out = out.iter().map(|r| r.count).max().unwrap() as f64;
        let ones_in = c.iter().filter(|r| r.count == 1).count() as f64;
        let ones_out = c
            .iter()
            .filter(|r| r.count == 1 && out.get(&r.text).is_some())
            .count() as f64;
        assert!(ones_out / ones_in > 0.69 - 0.02);
        assert!(max_in / max_out > ones_in / ones_out);
    }

    proptest! {
        #[test]
        fn functions_are_monotone(a in 0.0f64..1e6, b in 0.0f64..1e6, beta in 0.05f64..3.0, fc in 0.5f64..1e4) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            for f in [
                Downsampler::SimplePower { beta },
                Downsampler::SoftLog { fc },
                Downsampler::PureLog,
                Downsampler::Dedup,
                Downsampler::Identity,
            ] {
                prop_assert!(f.apply(lo).unwrap() <= f.apply(hi).unwrap(), "{:?} {} {}", f, lo, hi);
            }
        }

        #[test]
        fn soft_log_contracts_and_caps(f0 in 0.0f64..1e7, fc in 0.1f64..1e4) {
            let f1 = Downsampler::SoftLog { fc }.apply(f0).unwrap();
            prop_assert!(f1 <= f0);
            if f0 >= 1e-3 {
                prop_assert!(f1 < f0);
            }
            if f0 >= 1e-3 && f0 < fc / 10.0 {
                prop_assert!((f1 - f0).abs() / f0 < f0 / (2.0 * fc));
            }
        }

        #[test]
        fn simple_power_fixes_one(beta in 0.01f64..10.0) {
            prop_assert_eq!(Downsampler::SimplePower { beta }.apply(1.0).unwrap(), 1.0);
        }

        #[test]
        fn realize_is_floor_or_ceil(f1 in 0.0f64..1e6, seed in any::<u64>(), text in "[a-z ]{1,12}") {
            let n = realize_count(f1, &text, seed) as f64;
            prop_assert!(n == f1.floor() || n == f1.floor() + 1.0);
            prop_assert_eq!(realize_count(f1, &text, seed) as f64, n);
        }
    }
}
