//! Experiment configuration.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ConfigError {
    #[error("{0} must be positive")]
    NonPositive(&'static str),
    #[error("quoted spread must lie in (0, 1)")]
    SpreadOutOfRange,
    #[error("price-time matching needs plaintext rates; not available under {0:?}")]
    PriceTimeUnavailable(Protocol),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Protocol {
    Centralized,
    ZeroPrivacy,
    SemiPrivate,
    OffchainMatching,
    Bucketization,
    Rialto,
    RialtoPlus,
}

impl Protocol {
    pub fn uses_brokers(&self) -> bool {
        matches!(self, Protocol::Rialto | Protocol::RialtoPlus)
    }

    pub fn plaintext_rates(&self) -> bool {
        matches!(
            self,
            Protocol::Centralized
                | Protocol::ZeroPrivacy
                | Protocol::SemiPrivate
                | Protocol::OffchainMatching
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MatchingAlgo {
    MaximalFair,
    PriceTime,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RateDistribution {
    Uniform,
    Normal,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SettlementScheme {
    Difference,
    Mean,
}

/// Order-rate generator parameters. `variance` is a variance, not a
/// standard deviation; the report metadata repeats this reading.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateModel {
    pub distribution: RateDistribution,
    pub buyer_mean: f64,
    pub seller_mean: f64,
    pub variance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub protocol: Protocol,
    /// Poisson mean of orders generated per round.
    pub orders_per_round: f64,
    pub rounds: u64,
    pub brokers: usize,
    pub top_k: usize,
    pub bucket_width: u64,
    pub rate_model: RateModel,
    /// Quoted spread as a fraction; recenters buyer and seller means around
    /// their midpoint when set.
    pub spread: Option<f64>,
    pub max_unmatched_rounds: u64,
    pub matching: MatchingAlgo,
    pub settlement_scheme: SettlementScheme,
    pub initial_balance: u64,
    /// Probability a trader misses the bucket-disclosure phase.
    pub phase2_dropout: f64,
    /// Test mode: carry tracked openings for conservation oracles.
    pub tracking: bool,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            protocol: Protocol::Rialto,
            orders_per_round: 512.0,
            rounds: 12,
            brokers: 3,
            top_k: 16,
            bucket_width: 4,
            rate_model: RateModel {
                distribution: RateDistribution::Uniform,
                buyer_mean: 255.0,
                seller_mean: 245.0,
                variance: 15.0,
            },
            spread: None,
            max_unmatched_rounds: 2,
            matching: MatchingAlgo::MaximalFair,
            settlement_scheme: SettlementScheme::Difference,
            initial_balance: 100_000,
            phase2_dropout: 0.0,
            tracking: true,
            seed: 7,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.orders_per_round <= 0.0 {
            return Err(ConfigError::NonPositive("orders_per_round"));
        }
        if self.rounds == 0 {
            return Err(ConfigError::NonPositive("rounds"));
        }
        if self.brokers == 0 {
            return Err(ConfigError::NonPositive("brokers"));
        }
        if self.bucket_width == 0 {
            return Err(ConfigError::NonPositive("bucket_width"));
        }
        if self.rate_model.variance <= 0.0 {
            return Err(ConfigError::NonPositive("variance"));
        }
        if let Some(s) = self.spread {
            if !(s > 0.0 && s < 1.0) {
                return Err(ConfigError::SpreadOutOfRange);
            }
        }
        if self.matching == MatchingAlgo::PriceTime && !self.protocol.plaintext_rates() {
            return Err(ConfigError::PriceTimeUnavailable(self.protocol));
        }
        Ok(())
    }

    /// Buyer and seller means after the optional spread recentering. A
    /// quoted spread keeps both sides' means at their midpoint and instead
    /// determines the rate range: bid and ask extremes sit s*m apart, so
    /// both sides draw uniformly from [m(1 - s/2), m(1 + s/2)].
    pub fn effective_means(&self) -> (f64, f64) {
        match self.spread {
            None => (self.rate_model.buyer_mean, self.rate_model.seller_mean),
            Some(_) => {
                let mid = (self.rate_model.buyer_mean + self.rate_model.seller_mean) / 2.0;
                (mid, mid)
            }
        }
    }

    /// Half-width of the uniform rate range: spread-determined when a
    /// spread is set, variance-matched otherwise.
    pub fn uniform_half_width(&self, mean: f64) -> f64 {
        match self.spread {
            Some(s) => (s * mean / 2.0).round(),
            None => (3.0 * self.rate_model.variance).sqrt().round(),
        }
    }

    /// Moment-matched Gaussian for the pooled buyer + seller population.
    pub fn true_rate_params(&self) -> crate::privacy::GaussianParams {
        let (b, s) = self.effective_means();
        let mid = (b + s) / 2.0;
        let variance = match (self.spread, self.rate_model.distribution) {
            (Some(_), RateDistribution::Uniform) => {
                let h = self.uniform_half_width(mid);
                h * h / 3.0
            }
            _ => self.rate_model.variance + (b - mid).powi(2),
        };
        crate::privacy::GaussianParams::new(mid, variance.sqrt())
    }

    /// Shamir threshold for the malicious-minority mode.
    pub fn threshold_k(&self) -> usize {
        self.brokers / 2 + 1
    }
}
