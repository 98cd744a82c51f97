//! Prime-order group abstraction with Pedersen commitments.
//!
//! Two backends live behind the same interface: the Ristretto group over
//! Curve25519 for real runs, and a tiny subgroup of order 11 inside the
//! multiplicative group mod 23 (g = 2, h = 3) that is small enough for
//! brute-force oracle tests.

mod range;
mod schnorr;
mod transcript;

pub use range::{prove_range, verify_range, BitOrProof, RangeProof, RangeProofError, DEFAULT_RANGE_BITS};
pub use schnorr::{prove_opening, verify_opening, OpeningProof};
pub use transcript::Transcript;

use curve25519_dalek::constants::RISTRETTO_BASEPOINT_POINT;
use curve25519_dalek::ristretto::{CompressedRistretto, RistrettoPoint};
use curve25519_dalek::scalar::Scalar as DalekScalar;
use curve25519_dalek::traits::Identity;
use rand::{CryptoRng, RngCore};
use sha2::{Digest, Sha512};
use thiserror::Error;

/// Order of the tiny test group (subgroup of squares mod 23).
pub const TINY_Q: u64 = 11;
/// Modulus of the tiny test group.
pub const TINY_P: u64 = 23;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GroupError {
    #[error("scalar does not fit in the representable signed range")]
    ScalarOutOfRange,
    #[error("byte string does not encode a group element")]
    MalformedElement,
    #[error("byte string does not encode a scalar")]
    MalformedScalar,
    #[error("scalar has no inverse")]
    NotInvertible,
}

/// Scalar in Z_q for the active backend.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Scalar {
    Big(DalekScalar),
    Tiny(u64),
}

/// Group element for the active backend.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Element {
    Big(RistrettoPoint),
    Tiny(u64),
}

/// Pedersen commitment g^v h^r.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct Commitment(pub Element);

impl Commitment {
    pub fn to_bytes(&self) -> Vec<u8> {
        self.0.to_bytes()
    }

    pub fn to_hex(&self) -> String {
        hex_encode(&self.to_bytes())
    }
}

impl Element {
    /// Fixed-length encoding: 32-byte compressed point, or 8-byte big-endian
    /// residue for the tiny backend.
    pub fn to_bytes(&self) -> Vec<u8> {
        match self {
            Element::Big(p) => p.compress().as_bytes().to_vec(),
            Element::Tiny(x) => x.to_be_bytes().to_vec(),
        }
    }

    pub fn to_hex(&self) -> String {
        hex_encode(&self.to_bytes())
    }
}

impl Scalar {
    /// Fixed-length big-endian encoding (32 bytes / 8 bytes).
    pub fn to_bytes(&self) -> Vec<u8> {
        match self {
            Scalar::Big(s) => {
                let mut be = s.to_bytes();
                be.reverse();
                be.to_vec()
            }
            Scalar::Tiny(x) => x.to_be_bytes().to_vec(),
        }
    }

    pub fn to_hex(&self) -> String {
        hex_encode(&self.to_bytes())
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum GroupId {
    Ristretto,
    Tiny,
}

/// Group descriptor: generators g, h and the scalar modulus q.
#[derive(Clone, Debug)]
pub struct GroupParams {
    id: GroupId,
    g_big: RistrettoPoint,
    h_big: RistrettoPoint,
}

impl GroupParams {
    /// Production group: Ristretto with h derived by hashing g to the group,
    /// so nobody knows log_g(h).
    pub fn ristretto() -> Self {
        let g = RISTRETTO_BASEPOINT_POINT;
        let mut hasher = Sha512::new();
        hasher.update(b"rialto/pedersen-h");
        hasher.update(g.compress().as_bytes());
        let h = RistrettoPoint::from_hash(hasher);
        GroupParams { id: GroupId::Ristretto, g_big: g, h_big: h }
    }

    /// Deterministic test group: order-11 subgroup mod 23 with g = 2, h = 3.
    pub fn tiny() -> Self {
        GroupParams {
            id: GroupId::Tiny,
            g_big: RistrettoPoint::identity(),
            h_big: RistrettoPoint::identity(),
        }
    }

    pub fn id(&self) -> GroupId {
        self.id
    }

    pub fn is_tiny(&self) -> bool {
        self.id == GroupId::Tiny
    }

    /// Number of bits usable for committed values; bounds range-proof widths.
    pub fn q_bits(&self) -> u32 {
        match self.id {
            GroupId::Ristretto => 252,
            GroupId::Tiny => 3,
        }
    }

    pub fn generator_g(&self) -> Element {
        match self.id {
            GroupId::Ristretto => Element::Big(self.g_big),
            GroupId::Tiny => Element::Tiny(2),
        }
    }

    pub fn generator_h(&self) -> Element {
        match self.id {
            GroupId::Ristretto => Element::Big(self.h_big),
            GroupId::Tiny => Element::Tiny(3),
        }
    }

    pub fn identity(&self) -> Element {
        match self.id {
            GroupId::Ristretto => Element::Big(RistrettoPoint::identity()),
            GroupId::Tiny => Element::Tiny(1),
        }
    }

    // ---- scalar arithmetic ----

    pub fn scalar_zero(&self) -> Scalar {
        self.scalar_from_u64(0)
    }

    pub fn scalar_one(&self) -> Scalar {
        self.scalar_from_u64(1)
    }

    pub fn scalar_from_u64(&self, v: u64) -> Scalar {
        match self.id {
            GroupId::Ristretto => Scalar::Big(DalekScalar::from(v)),
            GroupId::Tiny => Scalar::Tiny(v % TINY_Q),
        }
    }

    pub fn scalar_from_i64(&self, v: i64) -> Scalar {
        if v >= 0 {
            self.scalar_from_u64(v as u64)
        } else {
            self.scalar_neg(&self.scalar_from_u64(v.unsigned_abs()))
        }
    }

    pub fn scalar_add(&self, a: &Scalar, b: &Scalar) -> Scalar {
        match (a, b) {
            (Scalar::Big(a), Scalar::Big(b)) => Scalar::Big(a + b),
            (Scalar::Tiny(a), Scalar::Tiny(b)) => Scalar::Tiny((a + b) % TINY_Q),
            _ => panic!("mixed scalar backends"),
        }
    }

    pub fn scalar_sub(&self, a: &Scalar, b: &Scalar) -> Scalar {
        match (a, b) {
            (Scalar::Big(a), Scalar::Big(b)) => Scalar::Big(a - b),
            (Scalar::Tiny(a), Scalar::Tiny(b)) => Scalar::Tiny((a + TINY_Q - b) % TINY_Q),
            _ => panic!("mixed scalar backends"),
        }
    }

    pub fn scalar_mul(&self, a: &Scalar, b: &Scalar) -> Scalar {
        match (a, b) {
            (Scalar::Big(a), Scalar::Big(b)) => Scalar::Big(a * b),
            (Scalar::Tiny(a), Scalar::Tiny(b)) => Scalar::Tiny((a * b) % TINY_Q),
            _ => panic!("mixed scalar backends"),
        }
    }

    pub fn scalar_neg(&self, a: &Scalar) -> Scalar {
        match a {
            Scalar::Big(a) => Scalar::Big(-a),
            Scalar::Tiny(a) => Scalar::Tiny((TINY_Q - a) % TINY_Q),
        }
    }

    pub fn scalar_invert(&self, a: &Scalar) -> Result<Scalar, GroupError> {
        match a {
            Scalar::Big(s) => {
                if *s == DalekScalar::ZERO {
                    Err(GroupError::NotInvertible)
                } else {
                    Ok(Scalar::Big(s.invert()))
                }
            }
            Scalar::Tiny(x) => {
                if *x == 0 {
                    Err(GroupError::NotInvertible)
                } else {
                    // q is prime, so x^(q-2) inverts x.
                    let mut acc = 1u64;
                    let mut base = *x % TINY_Q;
                    let mut e = TINY_Q - 2;
                    while e > 0 {
                        if e & 1 == 1 {
                            acc = acc * base % TINY_Q;
                        }
                        base = base * base % TINY_Q;
                        e >>= 1;
                    }
                    Ok(Scalar::Tiny(acc))
                }
            }
        }
    }

    pub fn random_scalar<R: RngCore + CryptoRng>(&self, rng: &mut R) -> Scalar {
        match self.id {
            GroupId::Ristretto => {
                let mut wide = [0u8; 64];
                rng.fill_bytes(&mut wide);
                Scalar::Big(DalekScalar::from_bytes_mod_order_wide(&wide))
            }
            GroupId::Tiny => Scalar::Tiny(rng.next_u64() % TINY_Q),
        }
    }

    /// Centered representative of a scalar: the unique integer in
    /// (-q/2, q/2] congruent to it, provided it fits in an i64.
    pub fn scalar_to_centered_i64(&self, a: &Scalar) -> Result<i64, GroupError> {
        match a {
            Scalar::Tiny(x) => {
                let half = TINY_Q / 2;
                if *x <= half {
                    Ok(*x as i64)
                } else {
                    Ok(*x as i64 - TINY_Q as i64)
                }
            }
            Scalar::Big(s) => {
                if let Some(v) = small_dalek(s) {
                    return Ok(v as i64);
                }
                if let Some(v) = small_dalek(&-s) {
                    return Ok(-(v as i64));
                }
                Err(GroupError::ScalarOutOfRange)
            }
        }
    }

    // ---- group arithmetic ----

    /// Group operation (written multiplicatively).
    pub fn mul(&self, a: &Element, b: &Element) -> Element {
        match (a, b) {
            (Element::Big(a), Element::Big(b)) => Element::Big(a + b),
            (Element::Tiny(a), Element::Tiny(b)) => Element::Tiny(a * b % TINY_P),
            _ => panic!("mixed element backends"),
        }
    }

    pub fn div(&self, a: &Element, b: &Element) -> Element {
        self.mul(a, &self.inv(b))
    }

    pub fn inv(&self, a: &Element) -> Element {
        match a {
            Element::Big(p) => Element::Big(-p),
            Element::Tiny(x) => {
                // x^(p-2) mod p
                let mut acc = 1u64;
                let mut base = *x % TINY_P;
                let mut e = TINY_P - 2;
                while e > 0 {
                    if e & 1 == 1 {
                        acc = acc * base % TINY_P;
                    }
                    base = base * base % TINY_P;
                    e >>= 1;
                }
                Element::Tiny(acc)
            }
        }
    }

    pub fn pow(&self, a: &Element, e: &Scalar) -> Element {
        match (a, e) {
            (Element::Big(p), Scalar::Big(s)) => Element::Big(p * s),
            (Element::Tiny(x), Scalar::Tiny(e)) => {
                let mut acc = 1u64;
                let mut base = *x % TINY_P;
                let mut e = *e % TINY_Q;
                while e > 0 {
                    if e & 1 == 1 {
                        acc = acc * base % TINY_P;
                    }
                    base = base * base % TINY_P;
                    e >>= 1;
                }
                Element::Tiny(acc)
            }
            _ => panic!("mixed element backends"),
        }
    }

    /// Pedersen commitment g^v h^r.
    pub fn commit(&self, v: &Scalar, r: &Scalar) -> Commitment {
        let gv = self.pow(&self.generator_g(), v);
        let hr = self.pow(&self.generator_h(), r);
        Commitment(self.mul(&gv, &hr))
    }

    pub fn commit_u64(&self, v: u64, r: &Scalar) -> Commitment {
        self.commit(&self.scalar_from_u64(v), r)
    }

    /// h^r, the commitment of zero under blinding r.
    pub fn commit_zero(&self, r: &Scalar) -> Commitment {
        Commitment(self.pow(&self.generator_h(), r))
    }

    // ---- serialization ----

    pub fn element_from_bytes(&self, bytes: &[u8]) -> Result<Element, GroupError> {
        match self.id {
            GroupId::Ristretto => {
                let arr: [u8; 32] =
                    bytes.try_into().map_err(|_| GroupError::MalformedElement)?;
                CompressedRistretto(arr)
                    .decompress()
                    .map(Element::Big)
                    .ok_or(GroupError::MalformedElement)
            }
            GroupId::Tiny => {
                let arr: [u8; 8] =
                    bytes.try_into().map_err(|_| GroupError::MalformedElement)?;
                let x = u64::from_be_bytes(arr);
                // Subgroup membership: x^q == 1 mod p.
                if x == 0 || x >= TINY_P {
                    return Err(GroupError::MalformedElement);
                }
                if tiny_pow(x, TINY_Q) == 1 {
                    Ok(Element::Tiny(x))
                } else {
                    Err(GroupError::MalformedElement)
                }
            }
        }
    }

    pub fn scalar_from_bytes(&self, bytes: &[u8]) -> Result<Scalar, GroupError> {
        match self.id {
            GroupId::Ristretto => {
                let mut arr: [u8; 32] =
                    bytes.try_into().map_err(|_| GroupError::MalformedScalar)?;
                arr.reverse();
                Option::<DalekScalar>::from(DalekScalar::from_canonical_bytes(arr))
                    .map(Scalar::Big)
                    .ok_or(GroupError::MalformedScalar)
            }
            GroupId::Tiny => {
                let arr: [u8; 8] =
                    bytes.try_into().map_err(|_| GroupError::MalformedScalar)?;
                let x = u64::from_be_bytes(arr);
                if x < TINY_Q {
                    Ok(Scalar::Tiny(x))
                } else {
                    Err(GroupError::MalformedScalar)
                }
            }
        }
    }

    pub fn element_len(&self) -> usize {
        match self.id {
            GroupId::Ristretto => 32,
            GroupId::Tiny => 8,
        }
    }

    pub fn scalar_len(&self) -> usize {
        match self.id {
            GroupId::Ristretto => 32,
            GroupId::Tiny => 8,
        }
    }
}

fn tiny_pow(x: u64, mut e: u64) -> u64 {
    let mut acc = 1u64;
    let mut base = x % TINY_P;
    while e > 0 {
        if e & 1 == 1 {
            acc = acc * base % TINY_P;
        }
        base = base * base % TINY_P;
        e >>= 1;
    }
    acc
}

/// Canonical little-endian value of a dalek scalar, when below 2^63.
fn small_dalek(s: &DalekScalar) -> Option<u64> {
    let b = s.to_bytes();
    if b[8..].iter().any(|&x| x != 0) || b[7] & 0x80 != 0 {
        return None;
    }
    let mut le = [0u8; 8];
    le.copy_from_slice(&b[..8]);
    Some(u64::from_le_bytes(le))
}

pub fn hex_encode(bytes: &[u8]) -> String {
    let mut s = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        s.push_str(&format!("{b:02x}"));
    }
    s
}

pub fn hex_decode(s: &str) -> Option<Vec<u8>> {
    if !s.len().is_multiple_of(2) {
        return None;
    }
    (0..s.len() / 2)
        .map(|i| u8::from_str_radix(&s[2 * i..2 * i + 2], 16).ok())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn commit_identity_case() {
        for params in [GroupParams::ristretto(), GroupParams::tiny()] {
            let zero = params.scalar_zero();
            assert_eq!(params.commit(&zero, &zero).0, params.identity());
        }
    }

    #[test]
    fn commit_homomorphism_small_case() {
        for params in [GroupParams::ristretto(), GroupParams::tiny()] {
            let c1 = params.commit_u64(2, &params.scalar_from_u64(3));
            let c2 = params.commit_u64(5, &params.scalar_from_u64(7));
            let sum = params.commit_u64(7, &params.scalar_from_u64(10));
            assert_eq!(params.mul(&c1.0, &c2.0), sum.0);
        }
    }

    #[test]
    fn tiny_commit_4_5_is_one() {
        // 2^4 * 3^5 mod 23 = 16 * 243 mod 23 = 1
        let params = GroupParams::tiny();
        let c = params.commit_u64(4, &params.scalar_from_u64(5));
        assert_eq!(c.0, Element::Tiny(1));
    }

    #[test]
    fn homomorphism_random_trials() {
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        for params in [GroupParams::ristretto(), GroupParams::tiny()] {
            for _ in 0..1000 {
                let v1 = params.random_scalar(&mut rng);
                let r1 = params.random_scalar(&mut rng);
                let v2 = params.random_scalar(&mut rng);
                let r2 = params.random_scalar(&mut rng);
                let lhs = params.mul(&params.commit(&v1, &r1).0, &params.commit(&v2, &r2).0);
                let rhs = params
                    .commit(&params.scalar_add(&v1, &v2), &params.scalar_add(&r1, &r2));
                assert_eq!(lhs, rhs.0);
            }
        }
    }

    #[test]
    fn hiding_blinds_are_distinct() {
        // Commitments to a fixed value under fresh blindings never collide
        // across 1000 trials in the big group.
        let params = GroupParams::ristretto();
        let mut rng = ChaCha20Rng::seed_from_u64(12);
        let v = params.scalar_from_u64(42);
        let mut seen = std::collections::HashSet::new();
        for _ in 0..1000 {
            let r = params.random_scalar(&mut rng);
            assert!(seen.insert(params.commit(&v, &r).to_bytes()));
        }
    }

    #[test]
    fn centered_representative() {
        for params in [GroupParams::ristretto(), GroupParams::tiny()] {
            let a = params.scalar_from_i64(-3);
            assert_eq!(params.scalar_to_centered_i64(&a).unwrap(), -3);
            let b = params.scalar_from_u64(5);
            assert_eq!(params.scalar_to_centered_i64(&b).unwrap(), 5);
            let diff = params.scalar_sub(&params.scalar_from_u64(2), &params.scalar_from_u64(4));
            assert_eq!(params.scalar_to_centered_i64(&diff).unwrap(), -2);
        }
    }

    #[test]
    fn element_round_trip() {
        let mut rng = ChaCha20Rng::seed_from_u64(13);
        for params in [GroupParams::ristretto(), GroupParams::tiny()] {
            for _ in 0..50 {
                let r = params.random_scalar(&mut rng);
                let e = params.pow(&params.generator_g(), &r);
                let back = params.element_from_bytes(&e.to_bytes()).unwrap();
                assert_eq!(e, back);
                let s = params.scalar_from_bytes(&r.to_bytes()).unwrap();
                assert_eq!(r, s);
            }
        }
    }

    #[test]
    fn malformed_element_rejected() {
        let params = GroupParams::tiny();
        // 5 is not a square mod 23, so it is outside the order-11 subgroup.
        assert!(params.element_from_bytes(&5u64.to_be_bytes()).is_err());
        assert!(params.element_from_bytes(&0u64.to_be_bytes()).is_err());
        let params = GroupParams::ristretto();
        assert!(params.element_from_bytes(&[0xffu8; 32]).is_err());
        assert!(params.element_from_bytes(&[1u8; 7]).is_err());
    }
}
