//! The two participant-authentication frameworks plus the shared
//! clearing-house validator.
//!
//! A centralized space runs an [`IdentityProvider`]: accounts with salted
//! secret hashes, bearer-token issuance, and introspection performed by the
//! provider itself. A decentralized space runs a [`VerifiableDataRegistry`]:
//! DID documents plus issuer-signed membership credentials, verified locally
//! by whoever receives a presentation — [`verify_presentation`] takes only
//! the registry and the presentation, so the operating company is not in the
//! verification path by construction.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::trust::{
    did_for, presentation_proof_bytes, sha256, sign, verify, Bytes, KeyPair, MembershipCredential,
    ParticipantId, Presentation, Sha256Digest, SignedToken, SimTime, SpaceId,
};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum IdentityError {
    #[error("participant {0} is already registered")]
    DuplicateParticipant(ParticipantId),
    #[error("unknown participant {0}")]
    UnknownParticipant(ParticipantId),
    #[error("wrong secret")]
    WrongSecret,
    #[error("did {0} is already registered")]
    DuplicateDid(String),
    #[error("did {0} not found")]
    NotFound(String),
    #[error("holder did {0} is not registered")]
    UnknownHolder(String),
    #[error("keypair does not match the issuer's registered key")]
    IssuerKeyMismatch,
    #[error("keypair does not match the credential holder's did")]
    HolderKeyMismatch,
    #[error("credential {0} was not issued by this registry")]
    UnknownCredential(String),
    #[error("application is missing a field required by rule {0}")]
    MissingField(String),
    #[error("unknown validation rule {0}")]
    UnknownRule(String),
}

/// Account credential handed back at registration. Held by the applicant;
/// the provider keeps only the salted hash.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PasswordCredential {
    pub participant_id: ParticipantId,
    pub secret: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub(crate) struct StoredAccount {
    pub(crate) salt: Bytes,
    pub(crate) secret_hash: Sha256Digest,
}

fn hash_secret(salt: &[u8], secret: &str) -> Sha256Digest {
    let mut material = salt.to_vec();
    material.extend_from_slice(secret.as_bytes());
    sha256(&material)
}

/// Result of token introspection at the issuing provider.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TokenStatus {
    Active,
    Expired,
    Unknown,
    BadSignature,
}

/// Centralized participant registry: issues and introspects bearer tokens.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityProvider {
    pub space_id: SpaceId,
    pub issuer_keypair: KeyPair,
    pub token_ttl: SimTime,
    pub(crate) accounts: BTreeMap<ParticipantId, StoredAccount>,
    pub(crate) issued_tokens: BTreeSet<String>,
    pub(crate) token_counter: u64,
}

impl IdentityProvider {
    pub fn new(space_id: SpaceId, issuer_keypair: KeyPair, token_ttl: SimTime) -> Self {
        Self {
            space_id,
            issuer_keypair,
            token_ttl,
            accounts: BTreeMap::new(),
            issued_tokens: BTreeSet::new(),
            token_counter: 0,
        }
    }

    pub fn has_account(&self, participant_id: &str) -> bool {
        self.accounts.contains_key(participant_id)
    }

    /// Register an account. The secret is stored only as a salted hash; the
    /// salt is derived deterministically so simulation state is reproducible.
    pub fn register(
        &mut self,
        participant_id: &str,
        secret: &str,
    ) -> Result<PasswordCredential, IdentityError> {
        if self.accounts.contains_key(participant_id) {
            return Err(IdentityError::DuplicateParticipant(
                participant_id.to_string(),
            ));
        }
        let salt_material = format!("salt:{}:{}", self.space_id, participant_id);
        let salt = Bytes(sha256(salt_material.as_bytes()).0.to_vec());
        let secret_hash = hash_secret(salt.as_bytes(), secret);
        self.accounts
            .insert(participant_id.to_string(), StoredAccount { salt, secret_hash });
        Ok(PasswordCredential {
            participant_id: participant_id.to_string(),
            secret: secret.to_string(),
        })
    }

    /// OIDC-style issuance: check the secret, mint a signed token with the
    /// configured TTL, and record its id for later introspection.
    pub fn issue_token(
        &mut self,
        participant_id: &str,
        secret: &str,
        now: SimTime,
    ) -> Result<SignedToken, IdentityError> {
        let account = self
            .accounts
            .get(participant_id)
            .ok_or_else(|| IdentityError::UnknownParticipant(participant_id.to_string()))?;
        if hash_secret(account.salt.as_bytes(), secret) != account.secret_hash {
            return Err(IdentityError::WrongSecret);
        }
        self.token_counter += 1;
        let jti = format!("tok-{}-{:06}", self.space_id, self.token_counter);
        let mut claims = BTreeMap::new();
        claims.insert("jti".to_string(), jti.clone());
        let mut token = SignedToken {
            subject: participant_id.to_string(),
            issuer: self.space_id.clone(),
            issued_at: now,
            expires_at: now + self.token_ttl,
            claims,
            signature: crate::trust::Signature {
                signer_key_id: String::new(),
                algorithm_label: String::new(),
                value: Bytes(Vec::new()),
            },
        };
        token.signature = sign(&self.issuer_keypair.private_key, &token.signing_bytes());
        self.issued_tokens.insert(jti);
        Ok(token)
    }

    /// Introspection is the authoritative verification step: only the issuing
    /// provider reports a token `Active`; anyone else's tokens are `Unknown`.
    /// Expiry is exclusive — a token is valid on `[issued_at, expires_at)`.
    pub fn introspect(&self, token: &SignedToken, now: SimTime) -> TokenStatus {
        if token.issuer != self.space_id {
            return TokenStatus::Unknown;
        }
        match token.token_id() {
            Some(jti) if self.issued_tokens.contains(jti) => {}
            _ => return TokenStatus::Unknown,
        }
        if !verify(
            &self.issuer_keypair.public_key,
            &token.signing_bytes(),
            &token.signature,
        ) {
            return TokenStatus::BadSignature;
        }
        if now >= token.expires_at {
            return TokenStatus::Expired;
        }
        TokenStatus::Active
    }
}

/// Decentralized participant registry: DID documents plus the revocation
/// status of issued membership credentials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifiableDataRegistry {
    pub space_id: SpaceId,
    pub issuer_did: String,
    pub(crate) documents: BTreeMap<String, crate::trust::DidDocument>,
    pub(crate) credential_status: BTreeMap<String, bool>,
    pub(crate) credential_counter: u64,
}

impl VerifiableDataRegistry {
    /// Create a registry whose operating company controls `issuer_key`.
    /// The issuer's own DID document is registered up front so it is always
    /// resolvable.
    pub fn new(space_id: SpaceId, issuer_public_key: &crate::trust::PublicKey) -> Self {
        let issuer_did = did_for(issuer_public_key);
        let mut documents = BTreeMap::new();
        documents.insert(
            issuer_did.clone(),
            crate::trust::DidDocument {
                did: issuer_did.clone(),
                public_key: issuer_public_key.clone(),
                controller: space_id.clone(),
            },
        );
        Self {
            space_id,
            issuer_did,
            documents,
            credential_status: BTreeMap::new(),
            credential_counter: 0,
        }
    }

    pub fn register(&mut self, doc: crate::trust::DidDocument) -> Result<String, IdentityError> {
        if self.documents.contains_key(&doc.did) {
            return Err(IdentityError::DuplicateDid(doc.did));
        }
        let did = doc.did.clone();
        self.documents.insert(did.clone(), doc);
        Ok(did)
    }

    pub fn resolve(&self, did: &str) -> Result<&crate::trust::DidDocument, IdentityError> {
        self.documents
            .get(did)
            .ok_or_else(|| IdentityError::NotFound(did.to_string()))
    }

    pub fn documents(&self) -> impl Iterator<Item = &crate::trust::DidDocument> {
        self.documents.values()
    }

    pub fn credential_statuses(&self) -> impl Iterator<Item = (&String, &bool)> {
        self.credential_status.iter()
    }

    /// Issue a membership credential to a registered holder, signed by the
    /// operating company. The keypair must match the issuer's DID document.
    pub fn issue_membership_credential(
        &mut self,
        issuer_keypair: &KeyPair,
        holder_did: &str,
        now: SimTime,
    ) -> Result<MembershipCredential, IdentityError> {
        if !self.documents.contains_key(holder_did) {
            return Err(IdentityError::UnknownHolder(holder_did.to_string()));
        }
        let issuer_doc = self.resolve(&self.issuer_did.clone())?;
        if issuer_doc.public_key != issuer_keypair.public_key {
            return Err(IdentityError::IssuerKeyMismatch);
        }
        self.credential_counter += 1;
        let mut credential = MembershipCredential {
            credential_id: format!("vc-{}-{:06}", self.space_id, self.credential_counter),
            holder_did: holder_did.to_string(),
            issuer_did: self.issuer_did.clone(),
            space_id: self.space_id.clone(),
            issued_at: now,
            revoked: false,
            signature: crate::trust::Signature {
                signer_key_id: String::new(),
                algorithm_label: String::new(),
                value: Bytes(Vec::new()),
            },
        };
        credential.signature = sign(&issuer_keypair.private_key, &credential.signing_bytes());
        self.credential_status
            .insert(credential.credential_id.clone(), false);
        Ok(credential)
    }

    /// Mark a credential revoked in the issuer's store. Holders keep their
    /// copy; verification consults this registry and reports `Revoked`.
    pub fn revoke(&mut self, credential_id: &str) -> Result<(), IdentityError> {
        match self.credential_status.get_mut(credential_id) {
            Some(revoked) => {
                *revoked = true;
                Ok(())
            }
            None => Err(IdentityError::UnknownCredential(credential_id.to_string())),
        }
    }

    pub fn is_revoked(&self, credential_id: &str) -> bool {
        self.credential_status
            .get(credential_id)
            .copied()
            .unwrap_or(false)
    }
}

/// Build a holder-bound presentation for one verifier and challenge nonce.
pub fn present(
    credential: &MembershipCredential,
    holder_keypair: &KeyPair,
    audience: &str,
    nonce: &[u8],
) -> Result<Presentation, IdentityError> {
    if did_for(&holder_keypair.public_key) != credential.holder_did {
        return Err(IdentityError::HolderKeyMismatch);
    }
    let proof_bytes = presentation_proof_bytes(&credential.credential_id, audience, nonce);
    Ok(Presentation {
        credential: credential.clone(),
        holder_proof: sign(&holder_keypair.private_key, &proof_bytes),
        audience: audience.to_string(),
        nonce: Bytes(nonce.to_vec()),
    })
}

/// Presentation verification outcome, first failed check in order: issuer
/// signature, holder proof, audience, nonce, revocation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PresentationVerdict {
    Valid,
    Revoked,
    BadIssuerSignature,
    BadHolderProof,
    AudienceMismatch,
    NonceMismatch,
}

/// Verify a presentation using only the registry and the presentation
/// itself. `now` is accepted for interface stability; membership
/// credentials do not expire, they are revoked.
pub fn verify_presentation(
    verifier_id: &str,
    presentation: &Presentation,
    vdr: &VerifiableDataRegistry,
    nonce: &[u8],
    _now: SimTime,
) -> PresentationVerdict {
    let credential = &presentation.credential;

    let issuer_key = match vdr.resolve(&credential.issuer_did) {
        Ok(doc) => &doc.public_key,
        Err(_) => return PresentationVerdict::BadIssuerSignature,
    };
    if credential.issuer_did != vdr.issuer_did
        || !verify(issuer_key, &credential.signing_bytes(), &credential.signature)
    {
        return PresentationVerdict::BadIssuerSignature;
    }

    let holder_key = match vdr.resolve(&credential.holder_did) {
        Ok(doc) => &doc.public_key,
        Err(_) => return PresentationVerdict::BadHolderProof,
    };
    let proof_bytes = presentation_proof_bytes(
        &credential.credential_id,
        &presentation.audience,
        presentation.nonce.as_bytes(),
    );
    if !verify(holder_key, &proof_bytes, &presentation.holder_proof) {
        return PresentationVerdict::BadHolderProof;
    }

    if presentation.audience != verifier_id {
        return PresentationVerdict::AudienceMismatch;
    }
    if presentation.nonce.as_bytes() != nonce {
        return PresentationVerdict::NonceMismatch;
    }
    if vdr.is_revoked(&credential.credential_id) {
        return PresentationVerdict::Revoked;
    }
    PresentationVerdict::Valid
}

// ---------------------------------------------------------------------------
// clearing house and validation rules
// ---------------------------------------------------------------------------

/// Organization data submitted through an onboarding portal.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrgApplication {
    pub participant_id: ParticipantId,
    pub legal_name: String,
    pub country: String,
    #[serde(default)]
    pub lei: Option<String>,
}

/// Context a space supplies when evaluating rules against an application.
#[derive(Debug, Clone, Default)]
pub struct RuleContext<'a> {
    pub country_allowlist: &'a [String],
}

pub const RULE_NONEMPTY_LEGAL_NAME: &str = "nonempty-legal-name";
pub const RULE_COUNTRY_ALLOWLIST: &str = "country-allowlist";
pub const RULE_LEI_CHECK: &str = "lei-check";

pub const KNOWN_RULES: &[&str] = &[
    RULE_NONEMPTY_LEGAL_NAME,
    RULE_COUNTRY_ALLOWLIST,
    RULE_LEI_CHECK,
];

/// Rules a clearing house can run without space-specific context.
pub const CONTEXT_FREE_RULES: &[&str] = &[RULE_NONEMPTY_LEGAL_NAME, RULE_LEI_CHECK];

/// ISO 17442 shape: 20 uppercase alphanumeric characters ending in two
/// decimal check digits that satisfy ISO 7064 MOD 97-10.
pub fn lei_is_valid(lei: &str) -> bool {
    let bytes = lei.as_bytes();
    if bytes.len() != 20 {
        return false;
    }
    if !bytes.iter().all(|b| b.is_ascii_digit() || b.is_ascii_uppercase()) {
        return false;
    }
    if !bytes[18].is_ascii_digit() || !bytes[19].is_ascii_digit() {
        return false;
    }
    mod_97_10(lei) == 1
}

/// ISO 7064 MOD 97-10 over the usual letter expansion (A=10 … Z=35).
pub fn mod_97_10(value: &str) -> u32 {
    let mut rem: u32 = 0;
    for b in value.bytes() {
        let v = if b.is_ascii_digit() {
            u32::from(b - b'0')
        } else {
            u32::from(b - b'A') + 10
        };
        rem = if v < 10 {
            (rem * 10 + v) % 97
        } else {
            (rem * 100 + v) % 97
        };
    }
    rem
}

/// Evaluate one validation rule. `Ok(bool)` is pass/fail; a rule whose input
/// field is absent cannot be evaluated and errors with `MissingField`.
pub fn evaluate_rule(
    rule_id: &str,
    application: &OrgApplication,
    ctx: &RuleContext<'_>,
) -> Result<bool, IdentityError> {
    match rule_id {
        RULE_NONEMPTY_LEGAL_NAME => Ok(!application.legal_name.trim().is_empty()),
        RULE_COUNTRY_ALLOWLIST => Ok(ctx
            .country_allowlist
            .iter()
            .any(|c| c == &application.country)),
        RULE_LEI_CHECK => match &application.lei {
            None => Err(IdentityError::MissingField(RULE_LEI_CHECK.to_string())),
            Some(lei) => Ok(lei_is_valid(lei)),
        },
        other => Err(IdentityError::UnknownRule(other.to_string())),
    }
}

/// Per-rule validation outcome; every configured rule appears exactly once.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub results: Vec<(String, bool)>,
}

impl ValidationReport {
    pub fn overall_pass(&self) -> bool {
        self.results.iter().all(|(_, pass)| *pass)
    }

    pub fn failed_rules(&self) -> Vec<String> {
        self.results
            .iter()
            .filter(|(_, pass)| !*pass)
            .map(|(rule, _)| rule.clone())
            .collect()
    }
}

/// Shared validation service usable by multiple spaces during onboarding.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClearingHouse {
    pub id: String,
    pub recognized_by: BTreeSet<SpaceId>,
    pub validation_rules: Vec<String>,
}

/// Run every clearing-house rule against an application. The clearing house
/// holds no space-specific context, so only context-free rules belong in its
/// rule list (enforced at configuration load).
pub fn clearing_house_validate(
    ch: &ClearingHouse,
    application: &OrgApplication,
) -> Result<ValidationReport, IdentityError> {
    let ctx = RuleContext::default();
    let mut results = Vec::new();
    for rule in &ch.validation_rules {
        results.push((rule.clone(), evaluate_rule(rule, application, &ctx)?));
    }
    Ok(ValidationReport { results })
}
