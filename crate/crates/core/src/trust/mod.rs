//! Credential and signature primitives shared by every other module.
//!
//! Keys are Ed25519; generation is deterministic from a caller-supplied seed
//! so simulation runs are reproducible. All signable values go through the
//! canonical encoding in [`encoding`] before signing, and keys, signatures,
//! and digests serialize as lowercase hex in JSON artifacts.
//!
//! Everything here is immutable after construction and the operations are
//! pure functions, so values can be shared freely.

pub mod encoding;

use std::collections::BTreeMap;
use std::fmt;

use ed25519_dalek::{Signer as _, Verifier as _};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest as _, Sha256};
use thiserror::Error;

pub use encoding::Canonical;

use encoding::{tag, EncodingError, Reader};

/// Simulation time in integer seconds. Supplied by the harness clock,
/// never by the wall clock.
pub type SimTime = u64;

pub type SpaceId = String;
pub type ParticipantId = String;

pub const SIGNATURE_ALGORITHM: &str = "ed25519";

const KEYGEN_DOMAIN: &[u8] = b"dsb-keygen-v1";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TrustError {
    #[error("key seed must not be empty")]
    EmptySeed,
}

// ---------------------------------------------------------------------------
// byte newtypes (lowercase hex in JSON)
// ---------------------------------------------------------------------------

macro_rules! hex_bytes_newtype {
    ($name:ident, $doc:literal) => {
        #[doc = $doc]
        #[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
        pub struct $name(pub Vec<u8>);

        impl $name {
            pub fn as_bytes(&self) -> &[u8] {
                &self.0
            }

            pub fn to_hex(&self) -> String {
                hex::encode(&self.0)
            }

            pub fn from_hex(s: &str) -> Result<Self, hex::FromHexError> {
                hex::decode(s).map(Self)
            }
        }

        impl fmt::Debug for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, concat!(stringify!($name), "({})"), self.to_hex())
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
                let text = String::deserialize(d)?;
                Self::from_hex(&text).map_err(serde::de::Error::custom)
            }
        }
    };
}

hex_bytes_newtype!(PublicKey, "Verification key bytes (32 for generated keys).");
hex_bytes_newtype!(PrivateKey, "Signing key bytes. Simulator state, persisted like any other field.");
hex_bytes_newtype!(Bytes, "Opaque byte payload (nonces, dataset contents).");

/// SHA-256 digest, lowercase hex in JSON.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Sha256Digest(pub [u8; 32]);

impl Sha256Digest {
    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Result<Self, String> {
        let bytes = hex::decode(s).map_err(|e| e.to_string())?;
        let arr: [u8; 32] = bytes
            .try_into()
            .map_err(|_| "digest must be 32 bytes".to_string())?;
        Ok(Self(arr))
    }
}

impl fmt::Debug for Sha256Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Sha256Digest({})", self.to_hex())
    }
}

impl fmt::Display for Sha256Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl Serialize for Sha256Digest {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for Sha256Digest {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        Self::from_hex(&text).map_err(serde::de::Error::custom)
    }
}

pub fn sha256(bytes: &[u8]) -> Sha256Digest {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    Sha256Digest(hasher.finalize().into())
}

// ---------------------------------------------------------------------------
// key pairs and detached signatures
// ---------------------------------------------------------------------------

/// A signing/verification key pair. `key_id` is derived from the public key,
/// so identical seeds give identical ids.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyPair {
    pub key_id: String,
    pub public_key: PublicKey,
    pub private_key: PrivateKey,
}

/// Detached signature over the canonical encoding of some domain value.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Signature {
    pub signer_key_id: String,
    pub algorithm_label: String,
    pub value: Bytes,
}

pub fn key_id_for(public_key: &PublicKey) -> String {
    format!("key-{}", &sha256(public_key.as_bytes()).to_hex()[..16])
}

/// Deterministic key generation: the Ed25519 secret is the SHA-256 of a
/// domain string plus the seed, so any non-empty byte string works as a seed.
pub fn generate_keypair(seed: &[u8]) -> Result<KeyPair, TrustError> {
    if seed.is_empty() {
        return Err(TrustError::EmptySeed);
    }
    let mut hasher = Sha256::new();
    hasher.update(KEYGEN_DOMAIN);
    hasher.update(seed);
    let secret: [u8; 32] = hasher.finalize().into();
    let signing = ed25519_dalek::SigningKey::from_bytes(&secret);
    let public = PublicKey(signing.verifying_key().to_bytes().to_vec());
    Ok(KeyPair {
        key_id: key_id_for(&public),
        public_key: public,
        private_key: PrivateKey(secret.to_vec()),
    })
}

/// Sign a payload. Ed25519 is deterministic, so equal inputs give equal
/// signatures. The private key must come from [`generate_keypair`].
pub fn sign(private_key: &PrivateKey, payload: &[u8]) -> Signature {
    let secret: [u8; 32] = private_key
        .as_bytes()
        .try_into()
        .expect("private key is 32 bytes");
    let signing = ed25519_dalek::SigningKey::from_bytes(&secret);
    let public = PublicKey(signing.verifying_key().to_bytes().to_vec());
    Signature {
        signer_key_id: key_id_for(&public),
        algorithm_label: SIGNATURE_ALGORITHM.to_string(),
        value: Bytes(signing.sign(payload).to_bytes().to_vec()),
    }
}

/// True iff `sig` was produced by the key matching `public_key` over exactly
/// `payload`. Malformed keys or signature bytes yield `false`, never a panic.
pub fn verify(public_key: &PublicKey, payload: &[u8], sig: &Signature) -> bool {
    if sig.algorithm_label != SIGNATURE_ALGORITHM {
        return false;
    }
    let Ok(key_bytes) = <[u8; 32]>::try_from(public_key.as_bytes()) else {
        return false;
    };
    let Ok(verifying) = ed25519_dalek::VerifyingKey::from_bytes(&key_bytes) else {
        return false;
    };
    let Ok(sig_bytes) = <[u8; 64]>::try_from(sig.value.as_bytes()) else {
        return false;
    };
    let signature = ed25519_dalek::Signature::from_bytes(&sig_bytes);
    verifying.verify(payload, &signature).is_ok()
}

// ---------------------------------------------------------------------------
// credential artifacts
// ---------------------------------------------------------------------------

/// Bearer token issued by a centralized space's identity provider.
/// The signature covers the canonical encoding of all other fields; the
/// token id for introspection lives in the `jti` claim.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignedToken {
    pub subject: ParticipantId,
    pub issuer: SpaceId,
    pub issued_at: SimTime,
    pub expires_at: SimTime,
    pub claims: BTreeMap<String, String>,
    pub signature: Signature,
}

impl SignedToken {
    pub fn token_id(&self) -> Option<&str> {
        self.claims.get("jti").map(String::as_str)
    }

    pub fn signing_bytes(&self) -> Vec<u8> {
        let mut out = vec![tag::SIGNED_TOKEN];
        encoding::put_str(&mut out, &self.subject);
        encoding::put_str(&mut out, &self.issuer);
        encoding::put_u64(&mut out, self.issued_at);
        encoding::put_u64(&mut out, self.expires_at);
        encoding::put_str_map(&mut out, self.claims.iter(), self.claims.len());
        out
    }
}

/// DID document of shape `did:sim:<hex of public-key hash>`, resolvable
/// through a verifiable data registry.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DidDocument {
    pub did: String,
    pub public_key: PublicKey,
    pub controller: SpaceId,
}

pub fn did_for(public_key: &PublicKey) -> String {
    format!("did:sim:{}", &sha256(public_key.as_bytes()).to_hex()[..32])
}

/// Space-membership credential signed by the operating company's key.
/// The `revoked` field holds the as-issued value and is covered by the
/// signature; live revocation status is tracked in the issuer's registry.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MembershipCredential {
    pub credential_id: String,
    pub holder_did: String,
    pub issuer_did: String,
    pub space_id: SpaceId,
    pub issued_at: SimTime,
    pub revoked: bool,
    pub signature: Signature,
}

impl MembershipCredential {
    pub fn signing_bytes(&self) -> Vec<u8> {
        let mut out = vec![tag::MEMBERSHIP_CREDENTIAL];
        encoding::put_str(&mut out, &self.credential_id);
        encoding::put_str(&mut out, &self.holder_did);
        encoding::put_str(&mut out, &self.issuer_did);
        encoding::put_str(&mut out, &self.space_id);
        encoding::put_u64(&mut out, self.issued_at);
        encoding::put_bool(&mut out, self.revoked);
        out
    }
}

/// Holder-signed, audience- and nonce-bound proof derived from a membership
/// credential. The holder proof covers (credential id, audience, nonce), so a
/// presentation cannot be replayed to another verifier or challenge.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Presentation {
    pub credential: MembershipCredential,
    pub holder_proof: Signature,
    pub audience: String,
    pub nonce: Bytes,
}

pub fn presentation_proof_bytes(credential_id: &str, audience: &str, nonce: &[u8]) -> Vec<u8> {
    let mut out = vec![tag::PRESENTATION_PAYLOAD];
    encoding::put_str(&mut out, credential_id);
    encoding::put_str(&mut out, audience);
    encoding::put_bytes(&mut out, nonce);
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ValidationLevel {
    DomainValidated,
    ExtendedValidation,
}

impl ValidationLevel {
    fn discriminant(self) -> u8 {
        match self {
            ValidationLevel::DomainValidated => 0,
            ValidationLevel::ExtendedValidation => 1,
        }
    }

    fn from_discriminant(d: u8) -> Result<Self, EncodingError> {
        match d {
            0 => Ok(ValidationLevel::DomainValidated),
            1 => Ok(ValidationLevel::ExtendedValidation),
            other => Err(EncodingError::InvalidDiscriminant(other)),
        }
    }
}

/// CA-issued binding of an endpoint domain to a public key.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EndpointCertificate {
    pub domain: String,
    pub subject_public_key: PublicKey,
    pub validation_level: ValidationLevel,
    pub issuer_ca: String,
    pub not_after: SimTime,
    pub signature: Signature,
}

impl EndpointCertificate {
    pub fn signing_bytes(&self) -> Vec<u8> {
        let mut out = vec![tag::ENDPOINT_CERTIFICATE];
        encoding::put_str(&mut out, &self.domain);
        encoding::put_bytes(&mut out, self.subject_public_key.as_bytes());
        encoding::put_u8(&mut out, self.validation_level.discriminant());
        encoding::put_str(&mut out, &self.issuer_ca);
        encoding::put_u64(&mut out, self.not_after);
        out
    }
}

// ---------------------------------------------------------------------------
// canonical encoding impls
// ---------------------------------------------------------------------------

fn put_signature(out: &mut Vec<u8>, sig: &Signature) {
    encoding::put_str(out, &sig.signer_key_id);
    encoding::put_str(out, &sig.algorithm_label);
    encoding::put_bytes(out, sig.value.as_bytes());
}

fn take_signature(r: &mut Reader<'_>) -> Result<Signature, EncodingError> {
    Ok(Signature {
        signer_key_id: r.take_str("signer_key_id")?,
        algorithm_label: r.take_str("algorithm_label")?,
        value: Bytes(r.take_bytes("signature value")?),
    })
}

impl Canonical for KeyPair {
    const TAG: u8 = tag::KEY_PAIR;

    fn encode_body(&self, out: &mut Vec<u8>) {
        encoding::put_str(out, &self.key_id);
        encoding::put_bytes(out, self.public_key.as_bytes());
        encoding::put_bytes(out, self.private_key.as_bytes());
    }

    fn decode_body(r: &mut Reader<'_>) -> Result<Self, EncodingError> {
        Ok(KeyPair {
            key_id: r.take_str("key_id")?,
            public_key: PublicKey(r.take_bytes("public_key")?),
            private_key: PrivateKey(r.take_bytes("private_key")?),
        })
    }
}

impl Canonical for Signature {
    const TAG: u8 = tag::SIGNATURE;

    fn encode_body(&self, out: &mut Vec<u8>) {
        put_signature(out, self);
    }

    fn decode_body(r: &mut Reader<'_>) -> Result<Self, EncodingError> {
        take_signature(r)
    }
}

impl Canonical for SignedToken {
    const TAG: u8 = tag::SIGNED_TOKEN;

    fn encode_body(&self, out: &mut Vec<u8>) {
        encoding::put_str(out, &self.subject);
        encoding::put_str(out, &self.issuer);
        encoding::put_u64(out, self.issued_at);
        encoding::put_u64(out, self.expires_at);
        encoding::put_str_map(out, self.claims.iter(), self.claims.len());
        put_signature(out, &self.signature);
    }

    fn decode_body(r: &mut Reader<'_>) -> Result<Self, EncodingError> {
        Ok(SignedToken {
            subject: r.take_str("subject")?,
            issuer: r.take_str("issuer")?,
            issued_at: r.take_u64("issued_at")?,
            expires_at: r.take_u64("expires_at")?,
            claims: r.take_str_map("claims")?,
            signature: take_signature(r)?,
        })
    }
}

impl Canonical for DidDocument {
    const TAG: u8 = tag::DID_DOCUMENT;

    fn encode_body(&self, out: &mut Vec<u8>) {
        encoding::put_str(out, &self.did);
        encoding::put_bytes(out, self.public_key.as_bytes());
        encoding::put_str(out, &self.controller);
    }

    fn decode_body(r: &mut Reader<'_>) -> Result<Self, EncodingError> {
        Ok(DidDocument {
            did: r.take_str("did")?,
            public_key: PublicKey(r.take_bytes("public_key")?),
            controller: r.take_str("controller")?,
        })
    }
}

impl Canonical for MembershipCredential {
    const TAG: u8 = tag::MEMBERSHIP_CREDENTIAL;

    fn encode_body(&self, out: &mut Vec<u8>) {
        encoding::put_str(out, &self.credential_id);
        encoding::put_str(out, &self.holder_did);
        encoding::put_str(out, &self.issuer_did);
        encoding::put_str(out, &self.space_id);
        encoding::put_u64(out, self.issued_at);
        encoding::put_bool(out, self.revoked);
        put_signature(out, &self.signature);
    }

    fn decode_body(r: &mut Reader<'_>) -> Result<Self, EncodingError> {
        Ok(MembershipCredential {
            credential_id: r.take_str("credential_id")?,
            holder_did: r.take_str("holder_did")?,
            issuer_did: r.take_str("issuer_did")?,
            space_id: r.take_str("space_id")?,
            issued_at: r.take_u64("issued_at")?,
            revoked: r.take_bool("revoked")?,
            signature: take_signature(r)?,
        })
    }
}

impl Canonical for Presentation {
    const TAG: u8 = tag::PRESENTATION;

    fn encode_body(&self, out: &mut Vec<u8>) {
        self.credential.encode_body(out);
        put_signature(out, &self.holder_proof);
        encoding::put_str(out, &self.audience);
        encoding::put_bytes(out, self.nonce.as_bytes());
    }

    fn decode_body(r: &mut Reader<'_>) -> Result<Self, EncodingError> {
        Ok(Presentation {
            credential: MembershipCredential::decode_body(r)?,
            holder_proof: take_signature(r)?,
            audience: r.take_str("audience")?,
            nonce: Bytes(r.take_bytes("nonce")?),
        })
    }
}

impl Canonical for EndpointCertificate {
    const TAG: u8 = tag::ENDPOINT_CERTIFICATE;

    fn encode_body(&self, out: &mut Vec<u8>) {
        encoding::put_str(out, &self.domain);
        encoding::put_bytes(out, self.subject_public_key.as_bytes());
        encoding::put_u8(out, self.validation_level.discriminant());
        encoding::put_str(out, &self.issuer_ca);
        encoding::put_u64(out, self.not_after);
        put_signature(out, &self.signature);
    }

    fn decode_body(r: &mut Reader<'_>) -> Result<Self, EncodingError> {
        Ok(EndpointCertificate {
            domain: r.take_str("domain")?,
            subject_public_key: PublicKey(r.take_bytes("subject_public_key")?),
            validation_level: ValidationLevel::from_discriminant(r.take_u8("validation_level")?)?,
            issuer_ca: r.take_str("issuer_ca")?,
            not_after: r.take_u64("not_after")?,
            signature: take_signature(r)?,
        })
    }
}

#[cfg(test)]
mod tests;
