//! Two-sample likelihood-ratio test for discrete power-law degree sequences.
//!
//! Only degrees `>= d_min` enter the sample. A sample is summarised by its
//! size `n` and log-degree sum `R`; everything else (the scaling parameter,
//! the log-likelihood, the test statistic) is a closed-form function of
//! `(n, R)`, which is what makes single-edge updates constant time.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::AttributedGraph;

/// Sign convention of the power-law log-likelihood.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LogLikForm {
    /// `n ln α + n α ln d_min − (α + 1) R`.
    #[default]
    Standard,
    /// `n ln α + n α ln d_min + (α + 1) R`, the alternative published sign.
    PrintedSigns,
}

/// `(|D|, Σ ln d)` over the degrees that pass the `d_min` filter.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct DegreeSummary {
    pub count: usize,
    pub log_sum: f64,
}

impl DegreeSummary {
    pub fn from_degrees(degrees: impl IntoIterator<Item = usize>, d_min: usize) -> Self {
        let mut s = DegreeSummary::default();
        for d in degrees.into_iter().filter(|&d| d >= d_min) {
            s.count += 1;
            s.log_sum += (d as f64).ln();
        }
        s
    }

    /// Multiset sum of two samples.
    pub fn combine(&self, other: &DegreeSummary) -> DegreeSummary {
        DegreeSummary {
            count: self.count + other.count,
            log_sum: self.log_sum + other.log_sum,
        }
    }

    /// Approximate discrete MLE of the scaling parameter, `None` when empty.
    pub fn alpha(&self, d_min: usize) -> Option<f64> {
        if self.count == 0 {
            return None;
        }
        let n = self.count as f64;
        Some(1.0 + n / (self.log_sum - n * (d_min as f64 - 0.5).ln()))
    }

    /// Log-likelihood at the sample's own scaling parameter; zero when empty.
    pub fn loglik(&self, d_min: usize, form: LogLikForm) -> f64 {
        match self.alpha(d_min) {
            Some(alpha) => loglik_from_summary(self.count, self.log_sum, alpha, d_min, form),
            None => 0.0,
        }
    }
}

pub fn loglik_from_summary(n: usize, log_sum: f64, alpha: f64, d_min: usize, form: LogLikForm) -> f64 {
    let n = n as f64;
    let base = n * alpha.ln() + n * alpha * (d_min as f64).ln();
    match form {
        LogLikForm::Standard => base - (alpha + 1.0) * log_sum,
        LogLikForm::PrintedSigns => base + (alpha + 1.0) * log_sum,
    }
}

fn check_d_min(d_min: usize) -> Result<()> {
    if d_min == 0 {
        Err(Error::InvalidConfig("d_min must be at least 1".into()))
    } else {
        Ok(())
    }
}

/// `α = 1 + |D| [Σ ln(d_i / (d_min − ½))]⁻¹` over `d_i >= d_min`.
pub fn estimate_alpha(degrees: &[usize], d_min: usize) -> Result<f64> {
    check_d_min(d_min)?;
    DegreeSummary::from_degrees(degrees.iter().copied(), d_min)
        .alpha(d_min)
        .ok_or(Error::EmptyDegreeSample { d_min })
}

pub fn powerlaw_loglikelihood(degrees: &[usize], alpha: f64, d_min: usize, form: LogLikForm) -> Result<f64> {
    check_d_min(d_min)?;
    if alpha.is_nan() || alpha <= 0.0 {
        return Err(Error::InvalidAlpha(alpha));
    }
    let s = DegreeSummary::from_degrees(degrees.iter().copied(), d_min);
    if s.count == 0 {
        return Err(Error::EmptyDegreeSample { d_min });
    }
    Ok(loglik_from_summary(s.count, s.log_sum, alpha, d_min, form))
}

/// `Λ = −2 ℓ(D_comb) + 2 (ℓ(D_0) + ℓ(D_1))` from sample summaries.
pub fn lambda_from_summaries(s0: &DegreeSummary, s1: &DegreeSummary, d_min: usize, form: LogLikForm) -> f64 {
    let comb = s0.combine(s1);
    -2.0 * comb.loglik(d_min, form) + 2.0 * (s0.loglik(d_min, form) + s1.loglik(d_min, form))
}

pub fn lambda_statistic(deg0: &[usize], deg1: &[usize], d_min: usize, form: LogLikForm) -> Result<f64> {
    check_d_min(d_min)?;
    let s0 = DegreeSummary::from_degrees(deg0.iter().copied(), d_min);
    let s1 = DegreeSummary::from_degrees(deg1.iter().copied(), d_min);
    if s0.count == 0 || s1.count == 0 {
        return Err(Error::EmptyDegreeSample { d_min });
    }
    Ok(lambda_from_summaries(&s0, &s1, d_min, form))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DegreeTestConfig {
    pub d_min: usize,
    pub tau: f64,
    pub form: LogLikForm,
}

impl Default for DegreeTestConfig {
    fn default() -> Self {
        DegreeTestConfig {
            d_min: 2,
            tau: 0.004,
            form: LogLikForm::Standard,
        }
    }
}

/// Result of evaluating one candidate edge flip against the clean graph.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DegreeTestOutcome {
    pub sample: DegreeSummary,
    pub alpha: Option<f64>,
    pub loglik: f64,
    pub lambda: f64,
}

/// Running degree-test quantities for the clean graph and the current graph.
#[derive(Debug, Clone, PartialEq)]
pub struct DegreeTestState {
    config: DegreeTestConfig,
    reference: DegreeSummary,
    current: DegreeSummary,
}

impl DegreeTestState {
    pub fn new(g0: &AttributedGraph, config: DegreeTestConfig) -> Result<Self> {
        check_d_min(config.d_min)?;
        let reference = DegreeSummary::from_degrees(g0.degrees(), config.d_min);
        Ok(DegreeTestState {
            config,
            reference,
            current: reference,
        })
    }

    pub fn config(&self) -> &DegreeTestConfig {
        &self.config
    }

    pub fn reference(&self) -> DegreeSummary {
        self.reference
    }

    pub fn current(&self) -> DegreeSummary {
        self.current
    }

    pub fn alpha(&self) -> Option<f64> {
        self.current.alpha(self.config.d_min)
    }

    /// `Λ(G⁽⁰⁾, G⁽ᵗ⁾)` for the committed state.
    pub fn lambda(&self) -> f64 {
        lambda_from_summaries(&self.reference, &self.current, self.config.d_min, self.config.form)
    }

    /// Sample summary after flipping an edge whose endpoints currently have
    /// degrees `d_m` and `d_n`; `present` tells whether the edge exists.
    pub fn summary_after_flip(&self, d_m: usize, d_n: usize, present: bool) -> DegreeSummary {
        let d_min = self.config.d_min as i64;
        let a = present as i64;
        let x = 1 - 2 * a;
        let (d_m, d_n) = (d_m as i64, d_n as i64);
        let enters = |d: i64| (d + 1 - a == d_min) as i64;
        let count = self.current.count as i64 + (enters(d_m) + enters(d_n)) * x;
        let term = |d: i64| if d >= d_min { (d as f64).ln() } else { 0.0 };
        let log_sum = self.current.log_sum - term(d_m) + term(d_m + x) - term(d_n) + term(d_n + x);
        DegreeSummary {
            count: count as usize,
            log_sum,
        }
    }

    pub fn evaluate_flip(&self, d_m: usize, d_n: usize, present: bool) -> DegreeTestOutcome {
        let sample = self.summary_after_flip(d_m, d_n, present);
        let (d_min, form) = (self.config.d_min, self.config.form);
        DegreeTestOutcome {
            sample,
            alpha: sample.alpha(d_min),
            loglik: sample.loglik(d_min, form),
            lambda: lambda_from_summaries(&self.reference, &sample, d_min, form),
        }
    }

    pub fn accepts(&self, outcome: &DegreeTestOutcome) -> bool {
        outcome.lambda < self.config.tau
    }

    /// Evaluates the flip of `(m, n)` on `g`, the graph the state tracks.
    pub fn evaluate_edge(&self, g: &AttributedGraph, m: usize, n: usize) -> DegreeTestOutcome {
        self.evaluate_flip(g.deg(m), g.deg(n), g.has_edge(m, n))
    }

    pub fn commit(&mut self, d_m: usize, d_n: usize, present: bool) {
        self.current = self.summary_after_flip(d_m, d_n, present);
    }

    /// Compares the running summary with a from-scratch recount on `g`.
    pub fn verify(&self, g: &AttributedGraph, tol: f64) -> Result<()> {
        let fresh = DegreeSummary::from_degrees(g.degrees(), self.config.d_min);
        if fresh.count != self.current.count || (fresh.log_sum - self.current.log_sum).abs() > tol {
            return Err(Error::InconsistentCache(format!(
                "degree sample ({}, {}) vs recomputed ({}, {})",
                self.current.count, self.current.log_sum, fresh.count, fresh.log_sum
            )));
        }
        Ok(())
    }
}
