//! Schnorr proof of knowledge of a Pedersen commitment opening.
//!
//! Standard sigma protocol made non-interactive over the transcript hash:
//! announcement d = g^y h^s, challenge e bound to (params, statement,
//! announcement, context), responses a = y + e v and b = s + e r. A verifier
//! accepts iff g^a h^b = d c^e and the challenge matches its own transcript
//! recomputation.

use rand::{CryptoRng, RngCore};

use super::{Commitment, Element, GroupParams, Scalar, Transcript};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct OpeningProof {
    pub announcement: Element,
    pub challenge: Scalar,
    pub response_value: Scalar,
    pub response_blinding: Scalar,
}

fn opening_transcript(
    params: &GroupParams,
    commitment: &Commitment,
    announcement: &Element,
    context: &[u8],
) -> Transcript {
    let mut t = Transcript::new("rialto/opening-proof");
    t.append_params(params);
    t.append("context", context);
    t.append("commitment", &commitment.to_bytes());
    t.append("announcement", &announcement.to_bytes());
    t
}

pub fn prove_opening<R: RngCore + CryptoRng>(
    params: &GroupParams,
    value: &Scalar,
    blinding: &Scalar,
    commitment: &Commitment,
    context: &[u8],
    rng: &mut R,
) -> OpeningProof {
    let y = params.random_scalar(rng);
    let s = params.random_scalar(rng);
    let announcement = params.commit(&y, &s).0;
    let e = opening_transcript(params, commitment, &announcement, context)
        .challenge_scalar(params);
    OpeningProof {
        announcement,
        challenge: e,
        response_value: params.scalar_add(&y, &params.scalar_mul(&e, value)),
        response_blinding: params.scalar_add(&s, &params.scalar_mul(&e, blinding)),
    }
}

pub fn verify_opening(
    params: &GroupParams,
    commitment: &Commitment,
    proof: &OpeningProof,
    context: &[u8],
) -> bool {
    let expected =
        opening_transcript(params, commitment, &proof.announcement, context)
            .challenge_scalar(params);
    if expected != proof.challenge {
        return false;
    }
    let lhs = params.commit(&proof.response_value, &proof.response_blinding).0;
    let rhs = params.mul(
        &proof.announcement,
        &params.pow(&commitment.0, &proof.challenge),
    );
    lhs == rhs
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    const CTX: &[u8] = b"test";

    #[test]
    fn honest_proof_accepts() {
        let mut rng = ChaCha20Rng::seed_from_u64(21);
        for params in [GroupParams::ristretto(), GroupParams::tiny()] {
            let v = params.random_scalar(&mut rng);
            let r = params.random_scalar(&mut rng);
            let c = params.commit(&v, &r);
            let proof = prove_opening(&params, &v, &r, &c, CTX, &mut rng);
            assert!(verify_opening(&params, &c, &proof, CTX));
        }
    }

    #[test]
    fn proof_rejected_against_other_commitment() {
        let mut rng = ChaCha20Rng::seed_from_u64(22);
        let params = GroupParams::ristretto();
        let v = params.random_scalar(&mut rng);
        let r = params.random_scalar(&mut rng);
        let c = params.commit(&v, &r);
        let proof = prove_opening(&params, &v, &r, &c, CTX, &mut rng);
        let c2 = params.commit(&params.scalar_add(&v, &params.scalar_one()), &r);
        assert!(!verify_opening(&params, &c2, &proof, CTX));
    }

    #[test]
    fn tampered_response_rejected() {
        let mut rng = ChaCha20Rng::seed_from_u64(23);
        for params in [GroupParams::ristretto(), GroupParams::tiny()] {
            let v = params.random_scalar(&mut rng);
            let r = params.random_scalar(&mut rng);
            let c = params.commit(&v, &r);
            let mut proof = prove_opening(&params, &v, &r, &c, CTX, &mut rng);
            proof.response_value =
                params.scalar_add(&proof.response_value, &params.scalar_one());
            assert!(!verify_opening(&params, &c, &proof, CTX));
        }
    }

    #[test]
    fn tampered_announcement_rejected() {
        let mut rng = ChaCha20Rng::seed_from_u64(24);
        for params in [GroupParams::ristretto(), GroupParams::tiny()] {
            let v = params.random_scalar(&mut rng);
            let r = params.random_scalar(&mut rng);
            let c = params.commit(&v, &r);
            let mut proof = prove_opening(&params, &v, &r, &c, CTX, &mut rng);
            proof.announcement = params.mul(&proof.announcement, &params.generator_g());
            assert!(!verify_opening(&params, &c, &proof, CTX));
        }
    }

    #[test]
    fn mismatched_witness_fails_verification() {
        // Proving with a witness that does not open c yields a proof, but the
        // verifier rejects it. No silent success.
        let mut rng = ChaCha20Rng::seed_from_u64(25);
        let params = GroupParams::tiny();
        let v = params.scalar_from_u64(4);
        let r = params.scalar_from_u64(5);
        let c = params.commit(&v, &r);
        let wrong = params.scalar_from_u64(6);
        let proof = prove_opening(&params, &wrong, &r, &c, CTX, &mut rng);
        assert!(!verify_opening(&params, &c, &proof, CTX));
    }

    #[test]
    fn exhaustive_completeness_tiny_group() {
        // 1000 random honest instances in the test group: all accept.
        let mut rng = ChaCha20Rng::seed_from_u64(26);
        let params = GroupParams::tiny();
        let mut accepts = 0;
        for _ in 0..1000 {
            let v = params.random_scalar(&mut rng);
            let r = params.random_scalar(&mut rng);
            let c = params.commit(&v, &r);
            let proof = prove_opening(&params, &v, &r, &c, CTX, &mut rng);
            if verify_opening(&params, &c, &proof, CTX) {
                accepts += 1;
            }
        }
        assert_eq!(accepts, 1000);
    }
}
