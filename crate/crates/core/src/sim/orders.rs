//! Trader intent generation.

use rand::{CryptoRng, Rng, RngCore};

use crate::matching::Side;

use super::config::{ExperimentConfig, RateDistribution};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TraderIntent {
    pub side: Side,
    pub rate: u64,
}

/// Poisson sampler. Knuth's product method underflows for large means, so
/// big lambdas split in half recursively.
pub fn poisson<R: RngCore + CryptoRng>(rng: &mut R, lambda: f64) -> u64 {
    if lambda <= 0.0 {
        return 0;
    }
    if lambda > 500.0 {
        return poisson(rng, lambda / 2.0) + poisson(rng, lambda - lambda / 2.0);
    }
    let limit = (-lambda).exp();
    let mut product: f64 = rng.gen();
    let mut count = 0u64;
    while product > limit {
        product *= rng.gen::<f64>();
        count += 1;
    }
    count
}

/// One round's worth of intents: Poisson-many orders, even buy/sell split,
/// integer rates from the configured distribution.
pub fn generate_orders<R: RngCore + CryptoRng>(
    config: &ExperimentConfig,
    rng: &mut R,
) -> Vec<TraderIntent> {
    let count = poisson(rng, config.orders_per_round);
    let (buyer_mean, seller_mean) = config.effective_means();
    (0..count)
        .map(|_| {
            let side = if rng.gen_bool(0.5) { Side::Buy } else { Side::Sell };
            let mean = if side == Side::Buy { buyer_mean } else { seller_mean };
            let rate = draw_rate(config, mean, rng);
            TraderIntent { side, rate }
        })
        .collect()
}

fn draw_rate<R: RngCore + CryptoRng>(
    config: &ExperimentConfig,
    mean: f64,
    rng: &mut R,
) -> u64 {
    let raw = match config.rate_model.distribution {
        RateDistribution::Uniform => {
            // Half-width comes from the quoted spread when one is set,
            // otherwise from the variance (sqrt(3 * var)).
            let half_width = config.uniform_half_width(mean);
            let lo = (mean.round() - half_width).max(1.0) as i64;
            let hi = (mean.round() + half_width) as i64;
            rng.gen_range(lo..=hi) as f64
        }
        RateDistribution::Normal => {
            let sigma = config.rate_model.variance.sqrt();
            (mean + sigma * standard_normal(rng)).round()
        }
    };
    raw.clamp(1.0, u32::MAX as f64) as u64
}

/// Box-Muller standard normal draw.
pub fn standard_normal<R: RngCore + CryptoRng>(rng: &mut R) -> f64 {
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn fixed_seed_reproduces_intents() {
        let config = ExperimentConfig::default();
        let a = generate_orders(&config, &mut ChaCha20Rng::seed_from_u64(9));
        let b = generate_orders(&config, &mut ChaCha20Rng::seed_from_u64(9));
        assert_eq!(a, b);
        assert!(!a.is_empty());
    }

    #[test]
    fn uniform_mean_converges() {
        // 10^5 buyer draws at mean 255: sample mean within 255 +- 0.5.
        let config = ExperimentConfig::default();
        let mut rng = ChaCha20Rng::seed_from_u64(10);
        let n = 100_000;
        let sum: f64 = (0..n).map(|_| draw_rate(&config, 255.0, &mut rng) as f64).sum();
        let mean = sum / n as f64;
        assert!((mean - 255.0).abs() < 0.5, "mean = {mean}");
    }

    #[test]
    fn spread_determines_range_endpoints() {
        // A 4% quoted spread at midpoint 250 makes the bid/ask extremes sit
        // 10 rate units apart: both sides draw from [245, 255].
        let config = ExperimentConfig { spread: Some(0.04), ..ExperimentConfig::default() };
        let (b, s) = config.effective_means();
        assert_eq!((b, s), (250.0, 250.0));
        let h = config.uniform_half_width(250.0);
        assert_eq!(2.0 * h, 10.0);
        let mut rng = ChaCha20Rng::seed_from_u64(13);
        for _ in 0..10_000 {
            let r = draw_rate(&config, 250.0, &mut rng);
            assert!((245..=255).contains(&r), "rate {r} outside the spread range");
        }
    }

    #[test]
    fn poisson_mean_large_lambda() {
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        let n = 2_000;
        let sum: u64 = (0..n).map(|_| poisson(&mut rng, 1024.0)).sum();
        let mean = sum as f64 / n as f64;
        assert!((mean - 1024.0).abs() < 3.0, "mean = {mean}");
    }

    #[test]
    fn normal_draws_have_right_moments() {
        let config = ExperimentConfig {
            rate_model: crate::sim::RateModel {
                distribution: RateDistribution::Normal,
                buyer_mean: 255.0,
                seller_mean: 245.0,
                variance: 225.0,
            },
            ..ExperimentConfig::default()
        };
        let mut rng = ChaCha20Rng::seed_from_u64(12);
        let n = 100_000;
        let draws: Vec<f64> =
            (0..n).map(|_| draw_rate(&config, 250.0, &mut rng) as f64).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
        assert!((mean - 250.0).abs() < 0.3, "mean = {mean}");
        assert!((var - 225.0).abs() < 5.0, "var = {var}");
    }
}
