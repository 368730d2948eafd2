//! Monte Carlo calibration of the statistical tests.
//!
//! Repetition `i` draws from its own ChaCha stream (`seed`, stream `i`), so
//! results are reproducible and identical whichever [`Strategy`] runs them.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Cauchy, Distribution, Exp, Normal, StudentT};

use crate::error::{Error, Result};
use crate::par::{map_indices, Strategy};
use crate::protocol::{assess_speedup, Decision, ProtocolConfig, TimingSample, Variant};
use crate::stats::{shapiro_wilk_statistic, ConfidenceLevel, Sample};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SimDistribution {
    Normal { mean: f64, sd: f64 },
    Cauchy { location: f64, scale: f64 },
    StudentT { df: f64 },
    Exponential { rate: f64 },
}

impl SimDistribution {
    fn draw(&self, rng: &mut ChaCha8Rng, n: usize) -> Result<Vec<f64>> {
        let bad = |e: &dyn std::fmt::Display| Error::invalid(format!("{self:?}: {e}"));
        Ok(match *self {
            SimDistribution::Normal { mean, sd } => {
                let d = Normal::new(mean, sd).map_err(|e| bad(&e))?;
                (0..n).map(|_| d.sample(rng)).collect()
            }
            SimDistribution::Cauchy { location, scale } => {
                let d = Cauchy::new(location, scale).map_err(|e| bad(&e))?;
                (0..n).map(|_| d.sample(rng)).collect()
            }
            SimDistribution::StudentT { df } => {
                let d = StudentT::new(df).map_err(|e| bad(&e))?;
                (0..n).map(|_| d.sample(rng)).collect()
            }
            SimDistribution::Exponential { rate } => {
                let d = Exp::new(rate).map_err(|e| bad(&e))?;
                (0..n).map(|_| d.sample(rng)).collect()
            }
        })
    }
}

fn stream(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

fn fraction(hits: Vec<Result<bool>>) -> Result<f64> {
    let n = hits.len();
    if n == 0 {
        return Err(Error::invalid("at least one repetition is required"));
    }
    let mut count = 0usize;
    for h in hits {
        count += usize::from(h?);
    }
    Ok(count as f64 / n as f64)
}

/// Setup for estimating how often the protocol confirms a speedup that
/// does not exist.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NullSpeedupExperiment {
    pub repetitions: usize,
    pub runs_per_variant: usize,
    /// Both variants draw from this distribution; values must stay positive.
    pub distribution: SimDistribution,
    pub level: ConfidenceLevel,
    pub seed: u64,
}

/// Fraction of repetitions in which two samples from the same distribution
/// produce `SpeedupConfirmed`.
pub fn false_speedup_rate(exp: &NullSpeedupExperiment, strategy: Strategy) -> Result<f64> {
    let config = ProtocolConfig::default();
    let hits = map_indices(strategy, exp.repetitions, |i| {
        let mut rng = stream(exp.seed, i);
        let mut sample = |variant| -> Result<TimingSample> {
            let values = exp.distribution.draw(&mut rng, exp.runs_per_variant)?;
            TimingSample::new("null", variant, Sample::new(values)?)
        };
        let baseline = sample(Variant::Baseline)?;
        let optimized = sample(Variant::Optimized)?;
        let verdict = assess_speedup(&baseline, &optimized, exp.level, &config)?;
        Ok(verdict.decision == Decision::SpeedupConfirmed)
    });
    fraction(hits)
}

/// Fraction of `repetitions` samples of size `size` for which the
/// Shapiro-Wilk p-value falls below `threshold`.
pub fn shapiro_rejection_rate(
    distribution: SimDistribution,
    size: usize,
    repetitions: usize,
    threshold: f64,
    seed: u64,
    strategy: Strategy,
) -> Result<f64> {
    let hits = map_indices(strategy, repetitions, |i| {
        let values = distribution.draw(&mut stream(seed, i), size)?;
        let (_, p) = shapiro_wilk_statistic(&values)?;
        Ok(p < threshold)
    });
    fraction(hits)
}
