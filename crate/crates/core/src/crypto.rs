//! Hashing and signatures.
//!
//! Hashes are SHA-256. Signatures go through [`SignatureScheme`]; the default scheme is
//! Ed25519, whose signatures are deterministic, so identical inputs always produce
//! byte-identical chains.

use std::collections::BTreeMap;
use std::fmt;

use ed25519_dalek::{Signer as _, SigningKey, Verifier as _, VerifyingKey};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};

use crate::canonical::{from_hex, to_hex};
use crate::ids::ActorId;

macro_rules! byte_newtype {
    ($name:ident, $len:expr) => {
        #[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
        pub struct $name(pub [u8; $len]);

        impl $name {
            pub fn to_hex(&self) -> String {
                to_hex(&self.0)
            }

            pub fn from_hex(s: &str) -> Option<Self> {
                from_hex(s)?.try_into().ok().map(Self)
            }
        }

        impl fmt::Debug for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}({})", stringify!($name), self.to_hex())
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.to_hex())
            }
        }

        impl Serialize for $name {
            fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                s.serialize_str(&self.to_hex())
            }
        }

        impl<'de> Deserialize<'de> for $name {
            fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
                let raw = String::deserialize(d)?;
                Self::from_hex(&raw).ok_or_else(|| serde::de::Error::custom("bad hex length or digits"))
            }
        }
    };
}

byte_newtype!(Hash, 32);
byte_newtype!(PublicKey, 32);
byte_newtype!(Signature, 64);

impl Hash {
    pub const ZERO: Hash = Hash([0u8; 32]);
}

pub fn sha256(data: &[u8]) -> Hash {
    Hash(Sha256::digest(data).into())
}

pub trait SignatureScheme {
    fn verify(&self, key: &PublicKey, msg: &[u8], sig: &Signature) -> bool;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Ed25519;

impl SignatureScheme for Ed25519 {
    fn verify(&self, key: &PublicKey, msg: &[u8], sig: &Signature) -> bool {
        let Ok(vk) = VerifyingKey::from_bytes(&key.0) else {
            return false;
        };
        let sig = ed25519_dalek::Signature::from_bytes(&sig.0);
        vk.verify(msg, &sig).is_ok()
    }
}

/// A node's signing identity.
#[derive(Clone)]
pub struct SecretKey(SigningKey);

impl SecretKey {
    pub fn from_seed(seed: [u8; 32]) -> Self {
        Self(SigningKey::from_bytes(&seed))
    }

    /// Deterministic key for `node` under a network seed; used for desk-scale provisioning.
    pub fn derive(network_seed: &[u8], node: &ActorId) -> Self {
        let mut h = Sha256::new();
        h.update(b"scftwin/node-key/v1");
        h.update((network_seed.len() as u64).to_be_bytes());
        h.update(network_seed);
        h.update(node.as_str().as_bytes());
        Self::from_seed(h.finalize().into())
    }

    pub fn public_key(&self) -> PublicKey {
        PublicKey(self.0.verifying_key().to_bytes())
    }

    pub fn sign(&self, msg: &[u8]) -> Signature {
        Signature(self.0.sign(msg).to_bytes())
    }

    pub fn seed(&self) -> [u8; 32] {
        self.0.to_bytes()
    }
}

impl fmt::Debug for SecretKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SecretKey({})", self.public_key())
    }
}

/// Secret keys held by this process. At desk scale one process simulates every node.
#[derive(Debug, Clone, Default)]
pub struct Keyring {
    keys: BTreeMap<ActorId, SecretKey>,
}

impl Keyring {
    pub fn insert(&mut self, node: ActorId, key: SecretKey) {
        self.keys.insert(node, key);
    }

    pub fn get(&self, node: &ActorId) -> Option<&SecretKey> {
        self.keys.get(node)
    }

    pub fn derive_for<'a>(seed: &[u8], nodes: impl IntoIterator<Item = &'a ActorId>) -> Self {
        let mut ring = Keyring::default();
        for node in nodes {
            ring.insert(node.clone(), SecretKey::derive(seed, node));
        }
        ring
    }

    pub fn iter(&self) -> impl Iterator<Item = (&ActorId, &SecretKey)> {
        self.keys.iter()
    }
}
