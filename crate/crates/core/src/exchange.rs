//! Datasets, the signable distribution package, contracts, and the signed
//! send/receive/payment logs produced by a transfer.
//!
//! Logs within one exchange are hash-chained: the receive log carries the
//! digest of the send log, the payment log the digest of the receive log.
//! The digest covers the full log including its signature, so any mutation
//! breaks either a link or a signature. Payment is a signed record only;
//! no balances are kept.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::trust::encoding::{self, tag, Canonical, EncodingError, Reader};
use crate::trust::{
    sha256, sign, verify, Bytes, KeyPair, ParticipantId, PublicKey, Sha256Digest, Signature,
    SimTime,
};

pub type DatasetId = String;
pub type ContractId = String;
pub type LogId = String;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ExchangeError {
    #[error("signing keypair does not match the dataset owner's registered key")]
    KeyMismatch,
    #[error("contract negotiation is not offered by space {0}")]
    NegotiationUnsupported(String),
    #[error("dataset {0} is not published by the provider")]
    UnknownDataset(DatasetId),
    #[error("external broker is unavailable")]
    BrokerUnavailable,
    #[error("contract is not concluded")]
    ContractNotConcluded,
    #[error("contract state only changes from Proposed")]
    InvalidStateTransition,
    #[error("payment must follow the recorded receive log")]
    OrderViolation,
}

// ---------------------------------------------------------------------------
// datasets and distribution packages
// ---------------------------------------------------------------------------

/// Provider-held data payload; the content hash always matches the payload.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dataset {
    pub dataset_id: DatasetId,
    pub owner: ParticipantId,
    pub model_id: String,
    pub payload: Bytes,
    pub content_hash: Sha256Digest,
}

impl Dataset {
    pub fn new(dataset_id: &str, owner: &str, model_id: &str, payload: Vec<u8>) -> Self {
        let content_hash = sha256(&payload);
        Self {
            dataset_id: dataset_id.to_string(),
            owner: owner.to_string(),
            model_id: model_id.to_string(),
            payload: Bytes(payload),
            content_hash,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PackageManifest {
    pub creator: ParticipantId,
    pub created_at: SimTime,
    pub content_hash: Sha256Digest,
    pub model_id: String,
}

impl Canonical for PackageManifest {
    const TAG: u8 = tag::PACKAGE_MANIFEST;

    fn encode_body(&self, out: &mut Vec<u8>) {
        encoding::put_str(out, &self.creator);
        encoding::put_u64(out, self.created_at);
        encoding::put_bytes(out, &self.content_hash.0);
        encoding::put_str(out, &self.model_id);
    }

    fn decode_body(r: &mut Reader<'_>) -> Result<Self, EncodingError> {
        let creator = r.take_str("creator")?;
        let created_at = r.take_u64("created_at")?;
        let hash_bytes = r.take_bytes("content_hash")?;
        let content_hash = Sha256Digest(
            hash_bytes
                .try_into()
                .map_err(|_| EncodingError::BadLength("content_hash"))?,
        );
        Ok(PackageManifest {
            creator,
            created_at,
            content_hash,
            model_id: r.take_str("model_id")?,
        })
    }
}

/// Signable container proving who created a dataset. Optional: unsigned
/// datasets transfer fine, they just cannot be authenticity-checked.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataPackage {
    pub dataset_id: DatasetId,
    pub payload: Bytes,
    pub manifest: PackageManifest,
    pub creator_signature: Signature,
}

/// Magic prefix of the on-disk package container.
pub const PACKAGE_MAGIC: &[u8; 4] = b"DDP1";

impl DataPackage {
    /// Serialize to the documented two-part container: magic, length-prefixed
    /// manifest JSON (includes dataset id and signature), length-prefixed raw
    /// payload.
    pub fn to_container_bytes(&self) -> Vec<u8> {
        #[derive(Serialize)]
        struct ManifestDoc<'a> {
            dataset_id: &'a str,
            manifest: &'a PackageManifest,
            creator_signature: &'a Signature,
        }
        let manifest_json = serde_json::to_vec(&ManifestDoc {
            dataset_id: &self.dataset_id,
            manifest: &self.manifest,
            creator_signature: &self.creator_signature,
        })
        .expect("manifest serializes");
        let mut out = Vec::with_capacity(manifest_json.len() + self.payload.0.len() + 20);
        out.extend_from_slice(PACKAGE_MAGIC);
        out.extend_from_slice(&(manifest_json.len() as u64).to_be_bytes());
        out.extend_from_slice(&manifest_json);
        out.extend_from_slice(&(self.payload.0.len() as u64).to_be_bytes());
        out.extend_from_slice(self.payload.as_bytes());
        out
    }

    pub fn from_container_bytes(bytes: &[u8]) -> Result<Self, String> {
        #[derive(Deserialize)]
        struct ManifestDoc {
            dataset_id: String,
            manifest: PackageManifest,
            creator_signature: Signature,
        }
        let rest = bytes
            .strip_prefix(PACKAGE_MAGIC.as_slice())
            .ok_or("missing package magic")?;
        let take = |rest: &mut &[u8]| -> Result<Vec<u8>, String> {
            if rest.len() < 8 {
                return Err("truncated length prefix".into());
            }
            let (head, tail) = rest.split_at(8);
            let len = u64::from_be_bytes(head.try_into().expect("8 bytes")) as usize;
            if tail.len() < len {
                return Err("truncated section".into());
            }
            let (body, tail) = tail.split_at(len);
            *rest = tail;
            Ok(body.to_vec())
        };
        let mut rest = rest;
        let manifest_json = take(&mut rest)?;
        let payload = take(&mut rest)?;
        if !rest.is_empty() {
            return Err("trailing bytes after payload".into());
        }
        let doc: ManifestDoc =
            serde_json::from_slice(&manifest_json).map_err(|e| e.to_string())?;
        Ok(DataPackage {
            dataset_id: doc.dataset_id,
            payload: Bytes(payload),
            manifest: doc.manifest,
            creator_signature: doc.creator_signature,
        })
    }
}

/// Build a signed package. `registered_key` is the owner's key on file with
/// the space registry; the signing keypair must match it.
pub fn package_sign(
    dataset: &Dataset,
    creator_keypair: &KeyPair,
    registered_key: &PublicKey,
    now: SimTime,
) -> Result<DataPackage, ExchangeError> {
    if &creator_keypair.public_key != registered_key {
        return Err(ExchangeError::KeyMismatch);
    }
    let manifest = PackageManifest {
        creator: dataset.owner.clone(),
        created_at: now,
        content_hash: dataset.content_hash,
        model_id: dataset.model_id.clone(),
    };
    let creator_signature = sign(&creator_keypair.private_key, &manifest.canonical_encode());
    Ok(DataPackage {
        dataset_id: dataset.dataset_id.clone(),
        payload: dataset.payload.clone(),
        manifest,
        creator_signature,
    })
}

/// Package verification outcome; the payload hash is checked before the
/// creator signature.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PackageCheck {
    Ok,
    HashMismatch,
    BadSignature,
}

pub fn package_verify(package: &DataPackage, creator_public_key: &PublicKey) -> PackageCheck {
    if sha256(package.payload.as_bytes()) != package.manifest.content_hash {
        return PackageCheck::HashMismatch;
    }
    if !verify(
        creator_public_key,
        &package.manifest.canonical_encode(),
        &package.creator_signature,
    ) {
        return PackageCheck::BadSignature;
    }
    PackageCheck::Ok
}

// ---------------------------------------------------------------------------
// contracts
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ContractState {
    Proposed,
    Agreed,
    Declined,
    ExternallyConcluded,
}

impl ContractState {
    fn discriminant(self) -> u8 {
        match self {
            ContractState::Proposed => 0,
            ContractState::Agreed => 1,
            ContractState::Declined => 2,
            ContractState::ExternallyConcluded => 3,
        }
    }

    fn from_discriminant(d: u8) -> Result<Self, EncodingError> {
        match d {
            0 => Ok(ContractState::Proposed),
            1 => Ok(ContractState::Agreed),
            2 => Ok(ContractState::Declined),
            3 => Ok(ContractState::ExternallyConcluded),
            other => Err(EncodingError::InvalidDiscriminant(other)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConsumerDecision {
    Accept,
    Decline,
}

/// Outcome of negotiation or external conclusion between two participants.
/// Usage terms are carried, not enforced.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Contract {
    pub contract_id: ContractId,
    pub provider: ParticipantId,
    pub consumer: ParticipantId,
    pub dataset_id: DatasetId,
    pub usage_terms: BTreeMap<String, String>,
    pub state: ContractState,
    pub external_ref: Option<String>,
    /// Party signatures over the concluded contract, kept only when a space
    /// offers contract attestation.
    #[serde(default)]
    pub attestations: BTreeMap<ParticipantId, Signature>,
}

impl Contract {
    pub fn proposed(
        contract_id: &str,
        provider: &str,
        consumer: &str,
        dataset_id: &str,
        usage_terms: BTreeMap<String, String>,
    ) -> Self {
        Self {
            contract_id: contract_id.to_string(),
            provider: provider.to_string(),
            consumer: consumer.to_string(),
            dataset_id: dataset_id.to_string(),
            usage_terms,
            state: ContractState::Proposed,
            external_ref: None,
            attestations: BTreeMap::new(),
        }
    }

    pub fn externally_concluded(
        contract_id: &str,
        provider: &str,
        consumer: &str,
        dataset_id: &str,
        usage_terms: BTreeMap<String, String>,
        external_ref: &str,
    ) -> Self {
        Self {
            contract_id: contract_id.to_string(),
            provider: provider.to_string(),
            consumer: consumer.to_string(),
            dataset_id: dataset_id.to_string(),
            usage_terms,
            state: ContractState::ExternallyConcluded,
            external_ref: Some(external_ref.to_string()),
            attestations: BTreeMap::new(),
        }
    }

    /// Apply the consumer's confirmation. Valid only from `Proposed`.
    pub fn resolve(&mut self, decision: ConsumerDecision) -> Result<(), ExchangeError> {
        if self.state != ContractState::Proposed {
            return Err(ExchangeError::InvalidStateTransition);
        }
        self.state = match decision {
            ConsumerDecision::Accept => ContractState::Agreed,
            ConsumerDecision::Decline => ContractState::Declined,
        };
        Ok(())
    }

    pub fn is_concluded(&self) -> bool {
        matches!(
            self.state,
            ContractState::Agreed | ContractState::ExternallyConcluded
        )
    }

    /// Bytes each party signs when attesting a concluded contract.
    pub fn attestation_bytes(&self) -> Vec<u8> {
        let mut body = self.clone();
        body.attestations = BTreeMap::new();
        body.canonical_encode()
    }
}

impl Canonical for Contract {
    const TAG: u8 = tag::CONTRACT;

    fn encode_body(&self, out: &mut Vec<u8>) {
        encoding::put_str(out, &self.contract_id);
        encoding::put_str(out, &self.provider);
        encoding::put_str(out, &self.consumer);
        encoding::put_str(out, &self.dataset_id);
        encoding::put_str_map(out, self.usage_terms.iter(), self.usage_terms.len());
        encoding::put_u8(out, self.state.discriminant());
        match &self.external_ref {
            None => encoding::put_u8(out, 0),
            Some(r) => {
                encoding::put_u8(out, 1);
                encoding::put_str(out, r);
            }
        }
        encoding::put_u64(out, self.attestations.len() as u64);
        for (party, sig) in &self.attestations {
            encoding::put_str(out, party);
            encoding::put_str(out, &sig.signer_key_id);
            encoding::put_str(out, &sig.algorithm_label);
            encoding::put_bytes(out, sig.value.as_bytes());
        }
    }

    fn decode_body(r: &mut Reader<'_>) -> Result<Self, EncodingError> {
        let contract_id = r.take_str("contract_id")?;
        let provider = r.take_str("provider")?;
        let consumer = r.take_str("consumer")?;
        let dataset_id = r.take_str("dataset_id")?;
        let usage_terms = r.take_str_map("usage_terms")?;
        let state = ContractState::from_discriminant(r.take_u8("state")?)?;
        let external_ref = match r.take_u8("external_ref flag")? {
            0 => None,
            1 => Some(r.take_str("external_ref")?),
            d => return Err(EncodingError::InvalidDiscriminant(d)),
        };
        let count = r.take_u64("attestations")?;
        let mut attestations = BTreeMap::new();
        for _ in 0..count {
            let party = r.take_str("attesting party")?;
            attestations.insert(
                party,
                Signature {
                    signer_key_id: r.take_str("signer_key_id")?,
                    algorithm_label: r.take_str("algorithm_label")?,
                    value: Bytes(r.take_bytes("signature value")?),
                },
            );
        }
        Ok(Contract {
            contract_id,
            provider,
            consumer,
            dataset_id,
            usage_terms,
            state,
            external_ref,
            attestations,
        })
    }
}

/// Stand-in for an external contract brokering service. Returns a document
/// id per concluded contract; can be configured unavailable.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BrokerStub {
    pub id: String,
    pub available: bool,
    pub(crate) document_counter: u64,
}

impl BrokerStub {
    pub fn new(id: &str, available: bool) -> Self {
        Self {
            id: id.to_string(),
            available,
            document_counter: 0,
        }
    }

    pub fn conclude(&mut self) -> Result<String, ExchangeError> {
        if !self.available {
            return Err(ExchangeError::BrokerUnavailable);
        }
        self.document_counter += 1;
        Ok(format!("doc-{}", self.document_counter))
    }
}

// ---------------------------------------------------------------------------
// transfer logs
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LogKind {
    Send,
    Receive,
    Payment,
}

impl LogKind {
    fn discriminant(self) -> u8 {
        match self {
            LogKind::Send => 0,
            LogKind::Receive => 1,
            LogKind::Payment => 2,
        }
    }

    fn from_discriminant(d: u8) -> Result<Self, EncodingError> {
        match d {
            0 => Ok(LogKind::Send),
            1 => Ok(LogKind::Receive),
            2 => Ok(LogKind::Payment),
            other => Err(EncodingError::InvalidDiscriminant(other)),
        }
    }
}

/// One signed entry in an exchange's log chain. `prev_hash` is the digest of
/// the preceding log in the same exchange (none for the send log). `amount`
/// is set on payment logs only.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransferLog {
    pub log_id: LogId,
    pub kind: LogKind,
    pub contract_id: ContractId,
    pub dataset_id: DatasetId,
    pub actor: ParticipantId,
    pub counterparty: ParticipantId,
    pub timestamp: SimTime,
    pub prev_hash: Option<Sha256Digest>,
    pub amount: Option<u64>,
    pub signature: Signature,
}

impl TransferLog {
    pub fn signing_bytes(&self) -> Vec<u8> {
        let mut out = vec![tag::TRANSFER_LOG];
        self.encode_unsigned(&mut out);
        out
    }

    fn encode_unsigned(&self, out: &mut Vec<u8>) {
        encoding::put_str(out, &self.log_id);
        encoding::put_u8(out, self.kind.discriminant());
        encoding::put_str(out, &self.contract_id);
        encoding::put_str(out, &self.dataset_id);
        encoding::put_str(out, &self.actor);
        encoding::put_str(out, &self.counterparty);
        encoding::put_u64(out, self.timestamp);
        match &self.prev_hash {
            None => encoding::put_u8(out, 0),
            Some(h) => {
                encoding::put_u8(out, 1);
                encoding::put_bytes(out, &h.0);
            }
        }
        encoding::put_opt_u64(out, self.amount);
    }

    /// Digest over the full log including its signature; chaining on this
    /// makes both content and signature tamper-evident.
    pub fn log_hash(&self) -> Sha256Digest {
        sha256(&self.canonical_encode())
    }
}

impl Canonical for TransferLog {
    const TAG: u8 = tag::TRANSFER_LOG;

    fn encode_body(&self, out: &mut Vec<u8>) {
        self.encode_unsigned(out);
        encoding::put_str(out, &self.signature.signer_key_id);
        encoding::put_str(out, &self.signature.algorithm_label);
        encoding::put_bytes(out, self.signature.value.as_bytes());
    }

    fn decode_body(r: &mut Reader<'_>) -> Result<Self, EncodingError> {
        let log_id = r.take_str("log_id")?;
        let kind = LogKind::from_discriminant(r.take_u8("kind")?)?;
        let contract_id = r.take_str("contract_id")?;
        let dataset_id = r.take_str("dataset_id")?;
        let actor = r.take_str("actor")?;
        let counterparty = r.take_str("counterparty")?;
        let timestamp = r.take_u64("timestamp")?;
        let prev_hash = match r.take_u8("prev_hash flag")? {
            0 => None,
            1 => {
                let bytes = r.take_bytes("prev_hash")?;
                Some(Sha256Digest(
                    bytes
                        .try_into()
                        .map_err(|_| EncodingError::BadLength("prev_hash"))?,
                ))
            }
            d => return Err(EncodingError::InvalidDiscriminant(d)),
        };
        let amount = r.take_opt_u64("amount")?;
        Ok(TransferLog {
            log_id,
            kind,
            contract_id,
            dataset_id,
            actor,
            counterparty,
            timestamp,
            prev_hash,
            amount,
            signature: Signature {
                signer_key_id: r.take_str("signer_key_id")?,
                algorithm_label: r.take_str("algorithm_label")?,
                value: Bytes(r.take_bytes("signature value")?),
            },
        })
    }
}

/// Build and sign one transfer log entry.
#[allow(clippy::too_many_arguments)]
pub fn build_log(
    log_id: &str,
    kind: LogKind,
    contract: &Contract,
    actor: &str,
    counterparty: &str,
    timestamp: SimTime,
    prev_hash: Option<Sha256Digest>,
    amount: Option<u64>,
    actor_keypair: &KeyPair,
) -> TransferLog {
    let mut log = TransferLog {
        log_id: log_id.to_string(),
        kind,
        contract_id: contract.contract_id.clone(),
        dataset_id: contract.dataset_id.clone(),
        actor: actor.to_string(),
        counterparty: counterparty.to_string(),
        timestamp,
        prev_hash,
        amount,
        signature: Signature {
            signer_key_id: String::new(),
            algorithm_label: String::new(),
            value: Bytes(Vec::new()),
        },
    };
    log.signature = sign(&actor_keypair.private_key, &log.signing_bytes());
    log
}

pub fn verify_log_signature(log: &TransferLog, actor_key: &PublicKey) -> bool {
    verify(actor_key, &log.signing_bytes(), &log.signature)
}

/// Recompute the chain links of one exchange's logs (in recorded order) and
/// every signature. Returns the first problem found.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum ChainCheck {
    Ok,
    BadSignature { log_id: LogId },
    BrokenLink { log_id: LogId },
    UnknownActor { participant_id: ParticipantId },
}

pub fn verify_exchange_chain(
    logs: &[TransferLog],
    resolve_key: impl Fn(&str) -> Option<PublicKey>,
) -> ChainCheck {
    let mut prev: Option<Sha256Digest> = None;
    for log in logs {
        let Some(key) = resolve_key(&log.actor) else {
            return ChainCheck::UnknownActor {
                participant_id: log.actor.clone(),
            };
        };
        if !verify_log_signature(log, &key) {
            return ChainCheck::BadSignature {
                log_id: log.log_id.clone(),
            };
        }
        if log.prev_hash != prev {
            return ChainCheck::BrokenLink {
                log_id: log.log_id.clone(),
            };
        }
        prev = Some(log.log_hash());
    }
    ChainCheck::Ok
}
