//! Additive and (k,n)-threshold secret sharing over the scalar field.
//!
//! Threshold shares are Shamir points with party index i evaluated at x = i;
//! indices run 1..=n. Additive shares reuse the same indexing so the two
//! schemes are interchangeable downstream.

use rand::{CryptoRng, RngCore};
use thiserror::Error;

use crate::group::{Commitment, GroupParams, Scalar};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SharingError {
    #[error("need at least 2 parties, got {0}")]
    TooFewParties(usize),
    #[error("invalid threshold k={k} for n={n}")]
    InvalidThreshold { k: usize, n: usize },
    #[error("duplicate party index {0}")]
    DuplicateIndex(usize),
    #[error("insufficient shares: have {have}, need {need}")]
    InsufficientShares { have: usize, need: usize },
    #[error("party index {0} out of range")]
    IndexOutOfRange(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scheme {
    Additive,
    Threshold { k: usize, n: usize },
}

impl Scheme {
    /// Shares required for reconstruction.
    pub fn quorum(&self, total: usize) -> usize {
        match self {
            Scheme::Additive => total,
            Scheme::Threshold { k, .. } => *k,
        }
    }
}

/// Shares of one secret: (party index, share) pairs.
#[derive(Clone, Debug)]
pub struct ShareSet {
    pub scheme: Scheme,
    pub shares: Vec<(usize, Scalar)>,
}

pub fn split_additive<R: RngCore + CryptoRng>(
    params: &GroupParams,
    secret: &Scalar,
    parties: usize,
    rng: &mut R,
) -> Result<ShareSet, SharingError> {
    if parties < 2 {
        return Err(SharingError::TooFewParties(parties));
    }
    let mut shares = Vec::with_capacity(parties);
    let mut acc = params.scalar_zero();
    for i in 1..parties {
        let s = params.random_scalar(rng);
        acc = params.scalar_add(&acc, &s);
        shares.push((i, s));
    }
    shares.push((parties, params.scalar_sub(secret, &acc)));
    Ok(ShareSet { scheme: Scheme::Additive, shares })
}

pub fn split_threshold<R: RngCore + CryptoRng>(
    params: &GroupParams,
    secret: &Scalar,
    k: usize,
    n: usize,
    rng: &mut R,
) -> Result<ShareSet, SharingError> {
    if k < 2 || k > n {
        return Err(SharingError::InvalidThreshold { k, n });
    }
    // Random polynomial of degree k-1 with constant term = secret.
    let mut coeffs = vec![*secret];
    for _ in 1..k {
        coeffs.push(params.random_scalar(rng));
    }
    let shares = (1..=n)
        .map(|i| {
            let x = params.scalar_from_u64(i as u64);
            let mut acc = params.scalar_zero();
            for c in coeffs.iter().rev() {
                acc = params.scalar_add(&params.scalar_mul(&acc, &x), c);
            }
            (i, acc)
        })
        .collect();
    Ok(ShareSet { scheme: Scheme::Threshold { k, n }, shares })
}

/// Reconstruct a secret from a subset of shares.
pub fn reconstruct(
    params: &GroupParams,
    scheme: Scheme,
    shares: &[(usize, Scalar)],
) -> Result<Scalar, SharingError> {
    check_indices(shares)?;
    match scheme {
        Scheme::Additive => {
            let mut acc = params.scalar_zero();
            for (_, s) in shares {
                acc = params.scalar_add(&acc, s);
            }
            Ok(acc)
        }
        Scheme::Threshold { k, .. } => {
            if shares.len() < k {
                return Err(SharingError::InsufficientShares { have: shares.len(), need: k });
            }
            let points = &shares[..k];
            let mut acc = params.scalar_zero();
            for (i, (xi, yi)) in points.iter().enumerate() {
                let li = lagrange_at_zero(params, points, i, *xi)?;
                acc = params.scalar_add(&acc, &params.scalar_mul(yi, &li));
            }
            Ok(acc)
        }
    }
}

/// Lagrange coefficients at x = 0 for a share subset, keyed by party index.
/// A linear combination of group elements with these exponents reconstructs
/// in the exponent.
pub fn lagrange_coefficients(
    params: &GroupParams,
    indices: &[usize],
) -> Result<Vec<Scalar>, SharingError> {
    let pts: Vec<(usize, Scalar)> =
        indices.iter().map(|&i| (i, params.scalar_zero())).collect();
    check_indices(&pts)?;
    indices
        .iter()
        .enumerate()
        .map(|(pos, &xi)| lagrange_at_zero(params, &pts, pos, xi))
        .collect()
}

fn lagrange_at_zero(
    params: &GroupParams,
    points: &[(usize, Scalar)],
    skip: usize,
    xi: usize,
) -> Result<Scalar, SharingError> {
    let xi_s = params.scalar_from_u64(xi as u64);
    let mut num = params.scalar_one();
    let mut den = params.scalar_one();
    for (j, (xj, _)) in points.iter().enumerate() {
        if j == skip {
            continue;
        }
        let xj_s = params.scalar_from_u64(*xj as u64);
        num = params.scalar_mul(&num, &xj_s);
        den = params.scalar_mul(&den, &params.scalar_sub(&xj_s, &xi_s));
    }
    let den_inv = params
        .scalar_invert(&den)
        .map_err(|_| SharingError::DuplicateIndex(xi))?;
    Ok(params.scalar_mul(&num, &den_inv))
}

fn check_indices(shares: &[(usize, Scalar)]) -> Result<(), SharingError> {
    let mut seen = std::collections::BTreeSet::new();
    for (i, _) in shares {
        if *i == 0 {
            return Err(SharingError::IndexOutOfRange(*i));
        }
        if !seen.insert(*i) {
            return Err(SharingError::DuplicateIndex(*i));
        }
    }
    Ok(())
}

/// Share a value together with its commitment blinding so that the product
/// of the per-share commitments equals the commitment of the secret.
pub fn share_with_commitments<R: RngCore + CryptoRng>(
    params: &GroupParams,
    secret: &Scalar,
    blinding: &Scalar,
    scheme: Scheme,
    parties: usize,
    rng: &mut R,
) -> Result<(ShareSet, ShareSet, Vec<Commitment>), SharingError> {
    let (values, blindings) = match scheme {
        Scheme::Additive => (
            split_additive(params, secret, parties, rng)?,
            split_additive(params, blinding, parties, rng)?,
        ),
        Scheme::Threshold { k, n } => {
            if n != parties {
                return Err(SharingError::InvalidThreshold { k, n });
            }
            (
                split_threshold(params, secret, k, n, rng)?,
                split_threshold(params, blinding, k, n, rng)?,
            )
        }
    };
    let commitments = values
        .shares
        .iter()
        .zip(&blindings.shares)
        .map(|((_, v), (_, r))| params.commit(v, r))
        .collect();
    Ok((values, blindings, commitments))
}

/// Combine per-share commitments into the commitment of the secret: plain
/// product for additive shares, Lagrange-weighted product for threshold.
pub fn reconstruct_commitment(
    params: &GroupParams,
    scheme: Scheme,
    commitments: &[(usize, Commitment)],
) -> Result<Commitment, SharingError> {
    match scheme {
        Scheme::Additive => {
            let mut acc = params.identity();
            for (_, c) in commitments {
                acc = params.mul(&acc, &c.0);
            }
            Ok(Commitment(acc))
        }
        Scheme::Threshold { k, .. } => {
            if commitments.len() < k {
                return Err(SharingError::InsufficientShares {
                    have: commitments.len(),
                    need: k,
                });
            }
            let subset = &commitments[..k];
            let indices: Vec<usize> = subset.iter().map(|(i, _)| *i).collect();
            let coeffs = lagrange_coefficients(params, &indices)?;
            let mut acc = params.identity();
            for ((_, c), l) in subset.iter().zip(&coeffs) {
                acc = params.mul(&acc, &params.pow(&c.0, l));
            }
            Ok(Commitment(acc))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn additive_shares_sum_to_secret() {
        let params = GroupParams::ristretto();
        let mut rng = ChaCha20Rng::seed_from_u64(41);
        let secret = params.scalar_from_u64(7);
        let set = split_additive(&params, &secret, 3, &mut rng).unwrap();
        assert_eq!(reconstruct(&params, set.scheme, &set.shares).unwrap(), secret);
    }

    #[test]
    fn additive_two_party_symmetry() {
        let params = GroupParams::tiny();
        let mut rng = ChaCha20Rng::seed_from_u64(42);
        let set = split_additive(&params, &params.scalar_zero(), 2, &mut rng).unwrap();
        let (_, a) = set.shares[0];
        let (_, b) = set.shares[1];
        assert_eq!(params.scalar_add(&a, &b), params.scalar_zero());
        assert_eq!(b, params.scalar_neg(&a));
    }

    #[test]
    fn additive_round_trip_tiny_seeded() {
        let params = GroupParams::tiny();
        let mut rng = ChaCha20Rng::seed_from_u64(43);
        let secret = params.scalar_from_u64(4);
        let set = split_additive(&params, &secret, 3, &mut rng).unwrap();
        assert_eq!(reconstruct(&params, set.scheme, &set.shares).unwrap(), secret);
    }

    #[test]
    fn too_few_parties_rejected() {
        let params = GroupParams::tiny();
        let mut rng = ChaCha20Rng::seed_from_u64(44);
        assert_eq!(
            split_additive(&params, &params.scalar_zero(), 1, &mut rng).unwrap_err(),
            SharingError::TooFewParties(1)
        );
    }

    #[test]
    fn threshold_any_k_subset_reconstructs() {
        let params = GroupParams::tiny();
        let mut rng = ChaCha20Rng::seed_from_u64(45);
        let secret = params.scalar_from_u64(9);
        let set = split_threshold(&params, &secret, 2, 3, &mut rng).unwrap();
        // All C(3,2) subsets.
        for a in 0..3 {
            for b in (a + 1)..3 {
                let subset = vec![set.shares[a], set.shares[b]];
                assert_eq!(reconstruct(&params, set.scheme, &subset).unwrap(), secret);
            }
        }
    }

    #[test]
    fn threshold_consistency_between_subsets() {
        let params = GroupParams::ristretto();
        let mut rng = ChaCha20Rng::seed_from_u64(46);
        let secret = params.random_scalar(&mut rng);
        let set = split_threshold(&params, &secret, 2, 3, &mut rng).unwrap();
        let r1 = reconstruct(&params, set.scheme, &[set.shares[0], set.shares[2]]).unwrap();
        let r2 = reconstruct(&params, set.scheme, &[set.shares[1], set.shares[2]]).unwrap();
        assert_eq!(r1, r2);
        assert_eq!(r1, secret);
    }

    #[test]
    fn threshold_below_quorum_fails() {
        let params = GroupParams::ristretto();
        let mut rng = ChaCha20Rng::seed_from_u64(47);
        let set =
            split_threshold(&params, &params.scalar_from_u64(1), 3, 4, &mut rng).unwrap();
        let err = reconstruct(&params, set.scheme, &set.shares[..2]).unwrap_err();
        assert_eq!(err, SharingError::InsufficientShares { have: 2, need: 3 });
    }

    #[test]
    fn duplicate_indices_rejected() {
        let params = GroupParams::ristretto();
        let mut rng = ChaCha20Rng::seed_from_u64(48);
        let set = split_threshold(&params, &params.scalar_from_u64(1), 2, 3, &mut rng).unwrap();
        let dup = vec![set.shares[0], set.shares[0]];
        assert_eq!(
            reconstruct(&params, set.scheme, &dup).unwrap_err(),
            SharingError::DuplicateIndex(1)
        );
    }

    #[test]
    fn round_trip_random_trials_both_schemes() {
        let params = GroupParams::ristretto();
        let mut rng = ChaCha20Rng::seed_from_u64(49);
        for _ in 0..1000 {
            let secret = params.random_scalar(&mut rng);
            let add = split_additive(&params, &secret, 4, &mut rng).unwrap();
            assert_eq!(reconstruct(&params, add.scheme, &add.shares).unwrap(), secret);
            let thr = split_threshold(&params, &secret, 3, 5, &mut rng).unwrap();
            assert_eq!(
                reconstruct(&params, thr.scheme, &thr.shares[1..4]).unwrap(),
                secret
            );
        }
    }

    #[test]
    fn share_commitments_multiply_to_secret_commitment() {
        let params = GroupParams::ristretto();
        let mut rng = ChaCha20Rng::seed_from_u64(50);
        let secret = params.scalar_from_u64(10);
        let blinding = params.random_scalar(&mut rng);
        for scheme in [Scheme::Additive, Scheme::Threshold { k: 2, n: 3 }] {
            let (values, blindings, comms) =
                share_with_commitments(&params, &secret, &blinding, scheme, 3, &mut rng)
                    .unwrap();
            // Each per-share commitment opens with its share pair.
            for (((_, v), (_, r)), c) in
                values.shares.iter().zip(&blindings.shares).zip(&comms)
            {
                assert_eq!(params.commit(v, r), *c);
            }
            let indexed: Vec<(usize, Commitment)> =
                comms.iter().enumerate().map(|(i, c)| (i + 1, *c)).collect();
            let combined = reconstruct_commitment(&params, scheme, &indexed).unwrap();
            assert_eq!(combined, params.commit(&secret, &blinding));
        }
    }

    #[test]
    fn exhaustive_share_vectors_tiny_field() {
        // q = 11, M = 2, secret = 5: every additive share vector (s, 5 - s)
        // has commitment product equal to commit(5, blinding).
        let params = GroupParams::tiny();
        let secret = params.scalar_from_u64(5);
        for b in 0..11u64 {
            let blinding = params.scalar_from_u64(b);
            for s in 0..11u64 {
                let v1 = params.scalar_from_u64(s);
                let v2 = params.scalar_sub(&secret, &v1);
                for rb in 0..11u64 {
                    let r1 = params.scalar_from_u64(rb);
                    let r2 = params.scalar_sub(&blinding, &r1);
                    let prod =
                        params.mul(&params.commit(&v1, &r1).0, &params.commit(&v2, &r2).0);
                    assert_eq!(prod, params.commit(&secret, &blinding).0);
                }
            }
        }
    }

    #[test]
    fn additive_marginal_uniformity_chi_square() {
        // Any single share of an additive split over q = 11 is uniform:
        // chi-square over 10^4 samples must not reject at p > 0.01.
        let params = GroupParams::tiny();
        let mut rng = ChaCha20Rng::seed_from_u64(51);
        let secret = params.scalar_from_u64(6);
        let mut counts = [0u64; 11];
        let samples = 10_000;
        for _ in 0..samples {
            let set = split_additive(&params, &secret, 3, &mut rng).unwrap();
            if let (_, Scalar::Tiny(x)) = set.shares[2] {
                counts[x as usize] += 1;
            }
        }
        let expected = samples as f64 / 11.0;
        let chi2: f64 = counts
            .iter()
            .map(|&c| {
                let d = c as f64 - expected;
                d * d / expected
            })
            .sum();
        // Critical value for 10 degrees of freedom at p = 0.01.
        assert!(chi2 < 23.21, "chi2 = {chi2}");
    }
}
