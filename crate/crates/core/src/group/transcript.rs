//! Domain-separated Fiat-Shamir transcript over SHA-256.

use sha2::{Digest, Sha256};

use super::{GroupId, GroupParams, Scalar};
use curve25519_dalek::scalar::Scalar as DalekScalar;

/// Accumulates labeled protocol messages and squeezes challenge scalars.
///
/// Every append is length-framed, so distinct message sequences can never
/// collide into the same hash input.
#[derive(Clone)]
pub struct Transcript {
    hasher: Sha256,
}

impl Transcript {
    pub fn new(domain: &str) -> Self {
        let mut hasher = Sha256::new();
        hasher.update((domain.len() as u64).to_be_bytes());
        hasher.update(domain.as_bytes());
        Transcript { hasher }
    }

    pub fn append(&mut self, label: &str, data: &[u8]) {
        self.hasher.update((label.len() as u64).to_be_bytes());
        self.hasher.update(label.as_bytes());
        self.hasher.update((data.len() as u64).to_be_bytes());
        self.hasher.update(data);
    }

    pub fn append_params(&mut self, params: &GroupParams) {
        let tag: &[u8] = match params.id() {
            GroupId::Ristretto => b"ristretto",
            GroupId::Tiny => b"tiny-23-11",
        };
        self.append("group", tag);
        self.append("g", &params.generator_g().to_bytes());
        self.append("h", &params.generator_h().to_bytes());
    }

    /// Nonzero challenge scalar. Zero is excluded so that a challenge can
    /// never wash out the witness term in a verification equation.
    pub fn challenge_scalar(&self, params: &GroupParams) -> Scalar {
        let mut counter = 0u64;
        loop {
            let mut h = self.hasher.clone();
            h.update(b"challenge");
            h.update(counter.to_be_bytes());
            let digest = h.finalize();
            match params.id() {
                GroupId::Ristretto => {
                    let mut wide = [0u8; 64];
                    wide[..32].copy_from_slice(&digest);
                    let s = DalekScalar::from_bytes_mod_order_wide(&wide);
                    if s != DalekScalar::ZERO {
                        return Scalar::Big(s);
                    }
                }
                GroupId::Tiny => {
                    let mut take = [0u8; 8];
                    take.copy_from_slice(&digest[..8]);
                    let x = u64::from_be_bytes(take) % super::TINY_Q;
                    if x != 0 {
                        return Scalar::Tiny(x);
                    }
                }
            }
            counter += 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn challenge_changes_with_any_message() {
        let params = GroupParams::ristretto();
        let mut t1 = Transcript::new("test");
        t1.append("a", b"hello");
        let mut t2 = t1.clone();
        t2.append("b", b"world");
        assert_ne!(t1.challenge_scalar(&params), t2.challenge_scalar(&params));

        let mut t3 = Transcript::new("test");
        t3.append("a", b"hellp");
        assert_ne!(t1.challenge_scalar(&params), t3.challenge_scalar(&params));
    }

    #[test]
    fn challenge_never_zero_tiny() {
        let params = GroupParams::tiny();
        for i in 0..1000u32 {
            let mut t = Transcript::new("zero-sweep");
            t.append("i", &i.to_be_bytes());
            let c = t.challenge_scalar(&params);
            assert_ne!(c, params.scalar_zero());
        }
    }
}
