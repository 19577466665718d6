//! Cryptographic building blocks shared by both protocols: finite-field
//! Diffie–Hellman groups, password hashing, keystream masking, and AEAD.

use std::sync::OnceLock;

use aes_gcm::aead::{Aead, KeyInit};
use aes_gcm::{Aes256Gcm, Nonce};
use hkdf::Hkdf;
use num_bigint::{BigUint, RandBigInt};
use rand::RngCore;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const NONCE_LEN: usize = 12;
pub const TAG_LEN: usize = 16;
pub const EXPONENT_BITS: u64 = 256;

const MODP2048_HEX: &str = "ffffffffffffffffc90fdaa22168c234c4c6628b80dc1cd129024e088a67cc74020bbea63b139b22514a08798e3404ddef9519b3cd3a431b302b0a6df25f14374fe1356d6d51c245e485b576625e7ec6f44c42e9a637ed6b0bff5cb6f406b7edee386bfb5a899fa5ae9f24117c4b1fe649286651ece45b3dc2007cb8a163bf0598da48361c55d39a69163fa8fd24cf5f83655d23dca3ad961c62f356208552bb9ed529077096966d670c354e4abc9804f1746c08ca18217c32905e462e36ce3be39e772c180e86039b2783a2ec07a28fb5c55df06f4c52c9de2bcbf6955817183995497cea956ae515d2261898fa051015728e5a8aacaa68ffffffffffffffff";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GroupId {
    /// 2048-bit MODP safe prime with generator 11.
    Modp2048,
    /// 512-bit safe prime 2^512 − 38117 with generator 2. Insecure; for fast tests only.
    Test512,
}

impl std::str::FromStr for GroupId {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "modp2048" => Ok(GroupId::Modp2048),
            "test512" => Ok(GroupId::Test512),
            other => Err(format!("unknown group '{other}'")),
        }
    }
}

#[derive(Debug)]
pub struct Group {
    pub id: GroupId,
    pub p: BigUint,
    pub g: BigUint,
    byte_len: usize,
}

static MODP2048: OnceLock<Group> = OnceLock::new();
static TEST512: OnceLock<Group> = OnceLock::new();

impl Group {
    /// Generators are primitive roots of the full group Z_p*, so every
    /// element in [1, p−1] is a valid public value.
    pub fn get(id: GroupId) -> &'static Group {
        match id {
            GroupId::Modp2048 => MODP2048.get_or_init(|| {
                let p = BigUint::parse_bytes(MODP2048_HEX.as_bytes(), 16).expect("valid hex");
                Group::build(id, p, 11u32.into())
            }),
            GroupId::Test512 => TEST512.get_or_init(|| {
                let p = (BigUint::from(1u8) << 512usize) - BigUint::from(38117u32);
                Group::build(id, p, 2u32.into())
            }),
        }
    }

    fn build(id: GroupId, p: BigUint, g: BigUint) -> Group {
        let byte_len = p.bits().div_ceil(8) as usize;
        Group { id, p, g, byte_len }
    }

    pub fn element_len(&self) -> usize {
        self.byte_len
    }

    pub fn random_exponent<R: RngCore + ?Sized>(&self, rng: &mut R) -> BigUint {
        loop {
            let mut bytes = [0u8; (EXPONENT_BITS / 8) as usize];
            rng.fill_bytes(&mut bytes);
            let x = BigUint::from_bytes_be(&bytes);
            if x > BigUint::from(1u8) {
                return x;
            }
        }
    }

    pub fn public(&self, secret: &BigUint) -> BigUint {
        self.g.modpow(secret, &self.p)
    }

    pub fn shared(&self, peer: &BigUint, secret: &BigUint) -> BigUint {
        peer.modpow(secret, &self.p)
    }

    /// Accepts elements in [2, p−2]; rejects 0, 1, p−1 and anything ≥ p.
    pub fn is_valid_public(&self, x: &BigUint) -> bool {
        let one = BigUint::from(1u8);
        x > &one && x < &(&self.p - &one)
    }

    pub fn random_element<R: RngCore + ?Sized>(&self, rng: &mut R) -> BigUint {
        let lo = BigUint::from(2u8);
        let hi = &self.p - BigUint::from(1u8);
        rng.gen_biguint_range(&lo, &hi)
    }

    pub fn encode(&self, x: &BigUint) -> Vec<u8> {
        let raw = x.to_bytes_be();
        let mut out = vec![0u8; self.byte_len.saturating_sub(raw.len())];
        out.extend_from_slice(&raw);
        out
    }

    pub fn decode(&self, bytes: &[u8]) -> BigUint {
        BigUint::from_bytes_be(bytes)
    }
}

pub fn sha256(data: &[u8]) -> [u8; 32] {
    Sha256::digest(data).into()
}

/// HKDF-SHA256 with no salt, expanded to `len` bytes (at most 8160).
pub fn derive(secret: &[u8], label: &str, len: usize) -> Vec<u8> {
    let hk = Hkdf::<Sha256>::new(None, secret);
    let mut out = vec![0u8; len];
    hk.expand(label.as_bytes(), &mut out).expect("requested length within HKDF limit");
    out
}

pub fn derive_key(secret: &[u8], label: &str) -> [u8; 32] {
    derive(secret, label, 32).try_into().expect("32 bytes")
}

/// XORs `data` with a keystream bound to `key` and `label`. Applying it
/// twice restores the input; wrong keys yield uniformly random output.
pub fn mask(key: &[u8], label: &str, data: &[u8]) -> Vec<u8> {
    let ks = derive(key, label, data.len());
    data.iter().zip(ks).map(|(a, b)| a ^ b).collect()
}

/// AES-256-GCM; output is nonce ‖ ciphertext ‖ tag.
pub fn seal<R: RngCore + ?Sized>(key: &[u8; 32], plaintext: &[u8], rng: &mut R) -> Vec<u8> {
    let cipher = Aes256Gcm::new(key.into());
    let mut nonce = [0u8; NONCE_LEN];
    rng.fill_bytes(&mut nonce);
    let ct = cipher.encrypt(Nonce::from_slice(&nonce), plaintext).expect("encryption cannot fail");
    let mut out = nonce.to_vec();
    out.extend(ct);
    out
}

pub fn open(key: &[u8; 32], sealed: &[u8]) -> Option<Vec<u8>> {
    if sealed.len() < NONCE_LEN + TAG_LEN {
        return None;
    }
    let (nonce, ct) = sealed.split_at(NONCE_LEN);
    Aes256Gcm::new(key.into()).decrypt(Nonce::from_slice(nonce), ct).ok()
}
