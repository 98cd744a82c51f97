//! Order-rate privacy quantification.
//!
//! After a round an observer holds the top-K settled rates and the sorted
//! permutation (plus, for a trader, its own rank and rate; plus, under
//! bucketization, the bucket histogram). Treating rates as draws from a
//! Gaussian, Blom's order-statistic approximation
//!
//!   Blom(r, n) = mu - quantile((r - a) / (n - 2a + 2)) * sigma,  a = pi/8
//!
//! with ranks counted from the top links each revealed rate to a standard
//! normal quantile, so mu and sigma fall out of a least-squares fit. The
//! privacy gain of a round is the KL divergence of the estimated Gaussian
//! from the true one as a percentage of the true distribution's entropy.

use rand::{CryptoRng, Rng, RngCore};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const BLOM_ALPHA: f64 = std::f64::consts::PI / 8.0;

/// Floor applied to estimated sigmas.
pub const SIGMA_FLOOR: f64 = 1e-6;

#[derive(Debug, Error, PartialEq)]
pub enum PrivacyError {
    #[error("quantile argument {0} outside (0, 1)")]
    QuantileDomain(f64),
    #[error("need at least two rate observations, got {0}")]
    InsufficientData(usize),
    #[error("sigma must be positive, got {0}")]
    NonPositiveSigma(f64),
    #[error("true distribution entropy {0} is not positive; gain undefined")]
    UndefinedGain(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianParams {
    pub mu: f64,
    pub sigma: f64,
}

impl GaussianParams {
    pub fn new(mu: f64, sigma: f64) -> Self {
        GaussianParams { mu, sigma }
    }
}

/// What one observer learned from one round.
#[derive(Clone, Debug, Default)]
pub struct LeakageView {
    /// Top-K settled buy rates, descending; rank of `top_k[i]` is i + 1.
    pub top_k: Vec<f64>,
    /// Total orders N in the round.
    pub total_orders: u64,
    /// Trader observers also know their own (rank from top, rate).
    pub own: Option<(u64, f64)>,
    /// Bucketization only: (bucket floor, count) per bucket, plus the width.
    pub histogram: Option<Vec<(i64, u64)>>,
    pub bucket_width: Option<u64>,
}

/// Standard normal quantile, Wichura's AS 241 rational approximation
/// (double precision; absolute error well under 1e-9).
pub fn normal_quantile(p: f64) -> Result<f64, PrivacyError> {
    if !(p > 0.0 && p < 1.0) {
        return Err(PrivacyError::QuantileDomain(p));
    }
    let q = p - 0.5;
    let x = if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        q * poly(
            r,
            &[
                3.387_132_872_796_366_5,
                1.331_416_678_917_843_8e2,
                1.971_590_950_306_551_3e3,
                1.373_169_376_550_946e4,
                4.592_195_393_154_987e4,
                6.726_577_092_700_87e4,
                3.343_057_558_358_813e4,
                2.509_080_928_730_122_7e3,
            ],
        ) / poly(
            r,
            &[
                1.0,
                4.231_333_070_160_091e1,
                6.871_870_074_920_579e2,
                5.394_196_021_424_751e3,
                2.121_379_430_158_659_7e4,
                3.930_789_580_009_271e4,
                2.872_908_573_572_194_3e4,
                5.226_495_278_852_854e3,
            ],
        )
    } else {
        let mut r = if q < 0.0 { p } else { 1.0 - p };
        r = (-r.ln()).sqrt();
        let val = if r <= 5.0 {
            let r = r - 1.6;
            poly(
                r,
                &[
                    1.423_437_110_749_683_5,
                    4.630_337_846_156_546,
                    5.769_497_221_460_691,
                    3.647_848_324_763_204_5,
                    1.270_458_252_452_368_4,
                    2.417_807_251_774_506e-1,
                    2.272_384_498_926_918_4e-2,
                    7.745_450_142_783_414e-4,
                ],
            ) / poly(
                r,
                &[
                    1.0,
                    2.053_191_626_637_759,
                    1.676_384_830_183_803_8,
                    6.897_673_349_851e-1,
                    1.481_039_764_274_800_8e-1,
                    1.519_866_656_361_645_7e-2,
                    5.475_938_084_995_345e-4,
                    1.050_750_071_644_416_9e-9,
                ],
            )
        } else {
            let r = r - 5.0;
            poly(
                r,
                &[
                    6.657_904_643_501_103,
                    5.463_784_911_164_114,
                    1.784_826_539_917_291_3,
                    2.965_605_718_285_048_7e-1,
                    2.653_218_952_657_612_4e-2,
                    1.242_660_947_388_078_4e-3,
                    2.711_555_568_743_487_6e-5,
                    2.010_334_399_292_288_1e-7,
                ],
            ) / poly(
                r,
                &[
                    1.0,
                    5.998_322_065_558_88e-1,
                    1.369_298_809_227_358e-1,
                    1.487_536_129_085_061_5e-2,
                    7.868_691_311_456_133e-4,
                    1.846_318_317_510_054_8e-5,
                    1.421_511_758_316_446e-7,
                    2.044_263_103_389_939_7e-15,
                ],
            )
        };
        if q < 0.0 {
            -val
        } else {
            val
        }
    };
    Ok(x)
}

fn poly(x: f64, coeffs: &[f64]) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c)
}

/// Expected value of the rank-r-from-the-top order statistic among n draws.
pub fn blom_expectation(
    rank: u64,
    count: u64,
    params: &GaussianParams,
) -> Result<f64, PrivacyError> {
    let arg = blom_argument(rank, count);
    let z = normal_quantile(arg)?;
    Ok(params.mu - z * params.sigma)
}

fn blom_argument(rank: u64, count: u64) -> f64 {
    (rank as f64 - BLOM_ALPHA) / (count as f64 - 2.0 * BLOM_ALPHA + 2.0)
}

/// Least-squares fit of (rank, rate) observations to the Blom model. The
/// model is linear in (mu, sigma): rate = mu - quantile(arg(rank)) * sigma.
pub fn estimate_params(view: &LeakageView) -> Result<GaussianParams, PrivacyError> {
    let mut points: Vec<(f64, f64)> = Vec::new();
    for (i, &rate) in view.top_k.iter().enumerate() {
        let z = normal_quantile(blom_argument(i as u64 + 1, view.total_orders))?;
        points.push((z, rate));
    }
    if let Some((rank, rate)) = view.own {
        if rank as usize > view.top_k.len() {
            let z = normal_quantile(blom_argument(rank, view.total_orders))?;
            points.push((z, rate));
        }
    }
    fit_linear(&points)
}

fn fit_linear(points: &[(f64, f64)]) -> Result<GaussianParams, PrivacyError> {
    if points.len() < 2 {
        return Err(PrivacyError::InsufficientData(points.len()));
    }
    let n = points.len() as f64;
    let mean_z = points.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_x = points.iter().map(|p| p.1).sum::<f64>() / n;
    let mut cov = 0.0;
    let mut var = 0.0;
    for (z, x) in points {
        cov += (z - mean_z) * (x - mean_x);
        var += (z - mean_z) * (z - mean_z);
    }
    let sigma = if var > 0.0 { (-cov / var).max(SIGMA_FLOOR) } else { SIGMA_FLOOR };
    let mu = mean_x + sigma * mean_z;
    Ok(GaussianParams { mu, sigma })
}

/// KL(P_E || P_T) for Gaussians, in nats.
pub fn gaussian_kl(est: &GaussianParams, truth: &GaussianParams) -> Result<f64, PrivacyError> {
    if est.sigma <= 0.0 {
        return Err(PrivacyError::NonPositiveSigma(est.sigma));
    }
    if truth.sigma <= 0.0 {
        return Err(PrivacyError::NonPositiveSigma(truth.sigma));
    }
    let var_ratio = (est.sigma * est.sigma) / (truth.sigma * truth.sigma);
    let mean_term = (est.mu - truth.mu).powi(2) / (truth.sigma * truth.sigma);
    Ok((truth.sigma / est.sigma).ln() + 0.5 * (var_ratio + mean_term) - 0.5)
}

/// Differential entropy of a Gaussian, in nats.
pub fn gaussian_entropy(params: &GaussianParams) -> Result<f64, PrivacyError> {
    if params.sigma <= 0.0 {
        return Err(PrivacyError::NonPositiveSigma(params.sigma));
    }
    Ok(0.5 * (2.0 * std::f64::consts::PI * std::f64::consts::E * params.sigma * params.sigma).ln())
}

/// Privacy gain as a percentage: KL(P_E, P_T) / H(P_T) x 100.
pub fn privacy_gain(
    est: &GaussianParams,
    truth: &GaussianParams,
) -> Result<f64, PrivacyError> {
    let entropy = gaussian_entropy(truth)?;
    if entropy <= 0.0 {
        return Err(PrivacyError::UndefinedGain(entropy));
    }
    Ok(gaussian_kl(est, truth)? / entropy * 100.0)
}

/// Full per-round privacy quantification.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PrivacyReport {
    pub round: u64,
    pub estimated: GaussianParams,
    pub kl_nats: f64,
    pub entropy_nats: f64,
    pub gain_pct: f64,
}

pub fn privacy_report(
    round: u64,
    est: &GaussianParams,
    truth: &GaussianParams,
) -> Result<PrivacyReport, PrivacyError> {
    Ok(PrivacyReport {
        round,
        estimated: *est,
        kl_nats: gaussian_kl(est, truth)?,
        entropy_nats: gaussian_entropy(truth)?,
        gain_pct: privacy_gain(est, truth)?,
    })
}

/// Bucketization-view estimator: rebuild a synthetic sample with the exact
/// values where they are known (top-K and the observer's own rate) and a
/// uniform draw within the bucket for everything else, then take the sample
/// mean and the Bessel-corrected sample variance.
///
/// The source recipe reads "scaling the sample's variance by N", which we
/// take as undoing the 1/N of the mean-squared deviation; reports flag the
/// reading as `variance_rule`.
pub const VARIANCE_RULE: &str = "mean-squared-deviation-scaled-by-n-over-n-minus-1";

pub fn bucketization_estimate<R: RngCore + CryptoRng>(
    view: &LeakageView,
    rng: &mut R,
) -> Result<GaussianParams, PrivacyError> {
    let histogram = view.histogram.as_ref().ok_or(PrivacyError::InsufficientData(0))?;
    let width = view.bucket_width.unwrap_or(1).max(1) as f64;
    let total: u64 = histogram.iter().map(|(_, c)| c).sum();
    if total == 0 {
        return Err(PrivacyError::InsufficientData(0));
    }

    let mut exact: Vec<f64> = view.top_k.clone();
    if let Some((rank, rate)) = view.own {
        if rank as usize > view.top_k.len() {
            exact.push(rate);
        }
    }

    // Remove the buckets the exact values occupy, then sample the rest.
    let mut counts: Vec<(i64, u64)> = histogram.clone();
    for &x in &exact {
        if let Some(slot) = counts
            .iter_mut()
            .find(|(floor, c)| *c > 0 && x >= *floor as f64 && x < (*floor as f64 + width))
        {
            slot.1 -= 1;
        }
    }

    let mut sample = exact;
    for (floor, count) in counts {
        for _ in 0..count {
            sample.push(floor as f64 + rng.gen::<f64>() * width);
        }
    }
    if sample.len() < 2 {
        return Err(PrivacyError::InsufficientData(sample.len()));
    }

    let n = sample.len() as f64;
    let mean = sample.iter().sum::<f64>() / n;
    let msd = sample.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let variance = msd * n / (n - 1.0);
    Ok(GaussianParams { mu: mean, sigma: variance.sqrt().max(SIGMA_FLOOR) })
}
