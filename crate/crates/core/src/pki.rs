//! Per-account keypairs for the bucketization settlement exchange: Schnorr
//! signatures and ElGamal-hybrid encryption over the same group the
//! commitments live in.

use rand::{CryptoRng, RngCore};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::group::{Element, GroupParams, Scalar, Transcript};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PkiError {
    #[error("ciphertext is malformed")]
    MalformedCiphertext,
}

#[derive(Clone, Debug)]
pub struct Keypair {
    secret: Scalar,
    pub public: Element,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Signature {
    pub nonce_point: Element,
    pub response: Scalar,
}

#[derive(Clone, Debug)]
pub struct Ciphertext {
    pub ephemeral: Element,
    pub body: Vec<u8>,
}

impl Keypair {
    pub fn generate<R: RngCore + CryptoRng>(params: &GroupParams, rng: &mut R) -> Self {
        let secret = params.random_scalar(rng);
        let public = params.pow(&params.generator_g(), &secret);
        Keypair { secret, public }
    }

    pub fn sign<R: RngCore + CryptoRng>(
        &self,
        params: &GroupParams,
        message: &[u8],
        rng: &mut R,
    ) -> Signature {
        let nonce = params.random_scalar(rng);
        let nonce_point = params.pow(&params.generator_g(), &nonce);
        let e = sig_challenge(params, &self.public, &nonce_point, message);
        Signature {
            nonce_point,
            response: params.scalar_add(&nonce, &params.scalar_mul(&e, &self.secret)),
        }
    }

    pub fn decrypt(&self, params: &GroupParams, ct: &Ciphertext) -> Result<Vec<u8>, PkiError> {
        if ct.body.len() < 32 {
            return Err(PkiError::MalformedCiphertext);
        }
        let shared = params.pow(&ct.ephemeral, &self.secret);
        let (payload, tag) = ct.body.split_at(ct.body.len() - 32);
        let plain = xor_stream(&shared, payload);
        if mac(&shared, &plain) != tag {
            return Err(PkiError::MalformedCiphertext);
        }
        Ok(plain)
    }
}

pub fn verify_signature(
    params: &GroupParams,
    public: &Element,
    message: &[u8],
    sig: &Signature,
) -> bool {
    let e = sig_challenge(params, public, &sig.nonce_point, message);
    let lhs = params.pow(&params.generator_g(), &sig.response);
    let rhs = params.mul(&sig.nonce_point, &params.pow(public, &e));
    lhs == rhs
}

pub fn encrypt<R: RngCore + CryptoRng>(
    params: &GroupParams,
    recipient: &Element,
    plaintext: &[u8],
    rng: &mut R,
) -> Ciphertext {
    let k = params.random_scalar(rng);
    let ephemeral = params.pow(&params.generator_g(), &k);
    let shared = params.pow(recipient, &k);
    let mut body = xor_stream(&shared, plaintext);
    body.extend_from_slice(&mac(&shared, plaintext));
    Ciphertext { ephemeral, body }
}

fn sig_challenge(
    params: &GroupParams,
    public: &Element,
    nonce_point: &Element,
    message: &[u8],
) -> Scalar {
    let mut t = Transcript::new("rialto/signature");
    t.append_params(params);
    t.append("public", &public.to_bytes());
    t.append("nonce", &nonce_point.to_bytes());
    t.append("message", message);
    t.challenge_scalar(params)
}

fn xor_stream(shared: &Element, data: &[u8]) -> Vec<u8> {
    let key = shared.to_bytes();
    let mut out = Vec::with_capacity(data.len());
    let mut counter = 0u64;
    let mut block = [0u8; 32];
    for (i, b) in data.iter().enumerate() {
        if i % 32 == 0 {
            let mut h = Sha256::new();
            h.update(b"rialto/stream");
            h.update(&key);
            h.update(counter.to_be_bytes());
            block.copy_from_slice(&h.finalize());
            counter += 1;
        }
        out.push(b ^ block[i % 32]);
    }
    out
}

fn mac(shared: &Element, plaintext: &[u8]) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(b"rialto/mac");
    h.update(shared.to_bytes());
    h.update(plaintext);
    h.finalize().into()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn sign_verify_round_trip() {
        let params = GroupParams::ristretto();
        let mut rng = ChaCha20Rng::seed_from_u64(101);
        let kp = Keypair::generate(&params, &mut rng);
        let sig = kp.sign(&params, b"settle at 7", &mut rng);
        assert!(verify_signature(&params, &kp.public, b"settle at 7", &sig));
        assert!(!verify_signature(&params, &kp.public, b"settle at 8", &sig));
    }

    #[test]
    fn encrypt_decrypt_round_trip() {
        let params = GroupParams::ristretto();
        let mut rng = ChaCha20Rng::seed_from_u64(102);
        let kp = Keypair::generate(&params, &mut rng);
        let msg = b"rate=7 blinding=deadbeef".to_vec();
        let ct = encrypt(&params, &kp.public, &msg, &mut rng);
        assert_eq!(kp.decrypt(&params, &ct).unwrap(), msg);
    }

    #[test]
    fn tampered_ciphertext_rejected() {
        let params = GroupParams::ristretto();
        let mut rng = ChaCha20Rng::seed_from_u64(103);
        let kp = Keypair::generate(&params, &mut rng);
        let mut ct = encrypt(&params, &kp.public, b"hello", &mut rng);
        ct.body[0] ^= 1;
        assert!(kp.decrypt(&params, &ct).is_err());
    }

    #[test]
    fn wrong_recipient_cannot_decrypt() {
        let params = GroupParams::ristretto();
        let mut rng = ChaCha20Rng::seed_from_u64(104);
        let alice = Keypair::generate(&params, &mut rng);
        let bob = Keypair::generate(&params, &mut rng);
        let ct = encrypt(&params, &alice.public, b"secret", &mut rng);
        assert!(bob.decrypt(&params, &ct).is_err());
    }
}
