//! World state persistence under a data directory.
//!
//! Registry contents go to JSON-lines files, one record per line:
//! `idp_<space>.jsonl`, `vdr_<space>.jsonl`, `registry_<space>.jsonl`,
//! plus `models_<space>.jsonl`, `pms_<space>.jsonl`, `logs.jsonl`,
//! `index.jsonl`, `connectors.jsonl`, `contracts.jsonl`, `datasets.jsonl`,
//! and `events.jsonl`. Catalogs are written as a JSON array file per space.
//! Clock, counters, and the RNG position live in `meta.json`, so a reloaded
//! world continues exactly where it stopped.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::connector::Connector;
use crate::events::{EventLog, EventRecord};
use crate::exchange::{BrokerStub, Contract, Dataset, TransferLog};
use crate::identity::{ClearingHouse, IdentityProvider, VerifiableDataRegistry};
use crate::provenance::ProvenanceService;
use crate::registry::{
    Device, EndpointResolver, Participant, ParticipantRegistry, SearchKey, SimulatedCa,
    SpaceAuthority, SpaceDefinition, TrustModel,
};
use crate::semantics::{CatalogRecord, CatalogStore, IndexEntry, ModelRepository, SemanticIndex, SemanticModel};
use crate::trust::{Bytes, KeyPair, PublicKey, Sha256Digest, Signature, SimTime};
use crate::world::{SpaceState, World, WorldCounters};

#[derive(Debug, Error)]
pub enum PersistError {
    #[error("io error on {path}: {reason}")]
    Io { path: String, reason: String },
    #[error("invalid json in {path}: {reason}")]
    Json { path: String, reason: String },
    #[error("inconsistent state: {0}")]
    Inconsistent(String),
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> PersistError {
    PersistError::Io {
        path: path.display().to_string(),
        reason: e.to_string(),
    }
}

fn json_err(path: &Path, e: impl std::fmt::Display) -> PersistError {
    PersistError::Json {
        path: path.display().to_string(),
        reason: e.to_string(),
    }
}

fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<(), PersistError> {
    let mut out = String::new();
    for record in records {
        out.push_str(&serde_json::to_string(record).map_err(|e| json_err(path, e))?);
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| io_err(path, e))
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, PersistError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| json_err(path, e)))
        .collect()
}

#[derive(Serialize, Deserialize)]
struct MetaDoc {
    seed: u64,
    clock: SimTime,
    counters: WorldCounters,
    rng: rand_chacha::ChaCha20Rng,
    broker: BrokerStub,
    index_suggest_threshold: f64,
    holders: BTreeMap<String, BTreeSet<String>>,
    publications: BTreeMap<String, String>,
    device_keys: BTreeMap<String, PublicKey>,
    clearing_houses: Vec<ClearingHouse>,
    certificate_authorities: Vec<SimulatedCa>,
}

#[derive(Serialize, Deserialize)]
struct SpaceDoc {
    definition: SpaceDefinition,
    operator_keypair: KeyPair,
    catalog_record_counter: u64,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
enum IdpLine {
    Provider {
        space_id: String,
        issuer_keypair: KeyPair,
        token_ttl: SimTime,
        token_counter: u64,
    },
    Account {
        participant_id: String,
        salt: Bytes,
        secret_hash: Sha256Digest,
    },
    Token {
        jti: String,
    },
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
enum VdrLine {
    Registry {
        space_id: String,
        issuer_did: String,
        credential_counter: u64,
    },
    DidDocument {
        document: crate::trust::DidDocument,
    },
    CredentialStatus {
        credential_id: String,
        revoked: bool,
    },
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
enum RegistryLine {
    Meta {
        device_counter: u64,
    },
    Participant {
        participant: Participant,
    },
    SigningKey {
        participant_id: String,
        public_key: PublicKey,
    },
    Device {
        device: Device,
    },
    ResolverEntry {
        key: SearchKey,
        device_ids: BTreeSet<String>,
    },
}

#[derive(Serialize, Deserialize)]
struct CatalogEntry {
    record: CatalogRecord,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    signature: Option<Signature>,
}

#[derive(Serialize, Deserialize)]
struct ContractLogLine {
    contract_id: String,
    log: TransferLog,
}

/// True when `dir` already holds a persisted world.
pub fn is_initialized(dir: &Path) -> bool {
    dir.join("meta.json").is_file()
}

pub fn save_world(world: &World, dir: &Path) -> Result<(), PersistError> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;

    let publications: BTreeMap<String, String> = world
        .publications
        .iter()
        .map(|((space, record), dataset)| (format!("{space}/{record}"), dataset.clone()))
        .collect();
    let meta = MetaDoc {
        seed: world.seed,
        clock: world.clock,
        counters: world.counters.clone(),
        rng: world.rng.clone(),
        broker: world.broker.clone(),
        index_suggest_threshold: world.index_suggest_threshold,
        holders: world.holders.clone(),
        publications,
        device_keys: world.device_keys.clone(),
        clearing_houses: world.clearing_houses.values().cloned().collect(),
        certificate_authorities: world.cas.values().cloned().collect(),
    };
    let meta_path = dir.join("meta.json");
    fs::write(
        &meta_path,
        serde_json::to_string_pretty(&meta).map_err(|e| json_err(&meta_path, e))?,
    )
    .map_err(|e| io_err(&meta_path, e))?;

    let spaces: Vec<SpaceDoc> = world
        .spaces
        .values()
        .map(|s| SpaceDoc {
            definition: s.definition.clone(),
            operator_keypair: s.operator_keypair.clone(),
            catalog_record_counter: s.catalog.record_counter,
        })
        .collect();
    let spaces_path = dir.join("spaces.json");
    fs::write(
        &spaces_path,
        serde_json::to_string_pretty(&spaces).map_err(|e| json_err(&spaces_path, e))?,
    )
    .map_err(|e| io_err(&spaces_path, e))?;

    for (space_id, state) in &world.spaces {
        match &state.authority {
            SpaceAuthority::Idp(idp) => {
                let mut lines = vec![IdpLine::Provider {
                    space_id: idp.space_id.clone(),
                    issuer_keypair: idp.issuer_keypair.clone(),
                    token_ttl: idp.token_ttl,
                    token_counter: idp.token_counter,
                }];
                for (pid, account) in &idp.accounts {
                    lines.push(IdpLine::Account {
                        participant_id: pid.clone(),
                        salt: account.salt.clone(),
                        secret_hash: account.secret_hash,
                    });
                }
                for jti in &idp.issued_tokens {
                    lines.push(IdpLine::Token { jti: jti.clone() });
                }
                write_jsonl(&dir.join(format!("idp_{space_id}.jsonl")), &lines)?;
            }
            SpaceAuthority::Vdr(vdr) => {
                let mut lines = vec![VdrLine::Registry {
                    space_id: vdr.space_id.clone(),
                    issuer_did: vdr.issuer_did.clone(),
                    credential_counter: vdr.credential_counter,
                }];
                for document in vdr.documents.values() {
                    lines.push(VdrLine::DidDocument {
                        document: document.clone(),
                    });
                }
                for (credential_id, revoked) in &vdr.credential_status {
                    lines.push(VdrLine::CredentialStatus {
                        credential_id: credential_id.clone(),
                        revoked: *revoked,
                    });
                }
                write_jsonl(&dir.join(format!("vdr_{space_id}.jsonl")), &lines)?;
            }
        }

        let registry = &state.registry;
        let mut lines = vec![RegistryLine::Meta {
            device_counter: registry.device_counter,
        }];
        for participant in registry.participants.values() {
            lines.push(RegistryLine::Participant {
                participant: participant.clone(),
            });
        }
        for (pid, key) in &registry.signing_keys {
            lines.push(RegistryLine::SigningKey {
                participant_id: pid.clone(),
                public_key: key.clone(),
            });
        }
        for device in registry.devices.values() {
            lines.push(RegistryLine::Device {
                device: device.clone(),
            });
        }
        for (key, device_ids) in &registry.resolver.entries {
            lines.push(RegistryLine::ResolverEntry {
                key: key.clone(),
                device_ids: device_ids.clone(),
            });
        }
        write_jsonl(&dir.join(format!("registry_{space_id}.jsonl")), &lines)?;

        let models: Vec<SemanticModel> = state.model_repo.list().cloned().collect();
        write_jsonl(&dir.join(format!("models_{space_id}.jsonl")), &models)?;

        let catalog: Vec<CatalogEntry> = state
            .catalog
            .records
            .values()
            .map(|record| CatalogEntry {
                record: record.clone(),
                signature: state.catalog.signatures.get(&record.record_id).cloned(),
            })
            .collect();
        let catalog_path = dir.join(format!("catalog_{space_id}.json"));
        fs::write(
            &catalog_path,
            serde_json::to_string_pretty(&catalog).map_err(|e| json_err(&catalog_path, e))?,
        )
        .map_err(|e| io_err(&catalog_path, e))?;

        if let Some(pms) = &state.pms {
            let logs: Vec<TransferLog> = pms.logs().cloned().collect();
            write_jsonl(&dir.join(format!("pms_{space_id}.jsonl")), &logs)?;
        }
    }

    let connectors: Vec<Connector> = world.connectors.values().cloned().collect();
    write_jsonl(&dir.join("connectors.jsonl"), &connectors)?;

    let contracts: Vec<Contract> = world.contracts.values().cloned().collect();
    write_jsonl(&dir.join("contracts.jsonl"), &contracts)?;

    let mut log_lines = Vec::new();
    for (contract_id, logs) in &world.contract_logs {
        for log in logs {
            log_lines.push(ContractLogLine {
                contract_id: contract_id.clone(),
                log: log.clone(),
            });
        }
    }
    write_jsonl(&dir.join("logs.jsonl"), &log_lines)?;

    let datasets: Vec<Dataset> = world.datasets.values().cloned().collect();
    write_jsonl(&dir.join("datasets.jsonl"), &datasets)?;

    let entries: Vec<IndexEntry> = world.index.entries().to_vec();
    write_jsonl(&dir.join("index.jsonl"), &entries)?;

    write_jsonl(&dir.join("events.jsonl"), world.events.events())?;
    Ok(())
}

pub fn load_world(dir: &Path) -> Result<World, PersistError> {
    let meta_path = dir.join("meta.json");
    let meta: MetaDoc = serde_json::from_str(
        &fs::read_to_string(&meta_path).map_err(|e| io_err(&meta_path, e))?,
    )
    .map_err(|e| json_err(&meta_path, e))?;

    let spaces_path = dir.join("spaces.json");
    let space_docs: Vec<SpaceDoc> = serde_json::from_str(
        &fs::read_to_string(&spaces_path).map_err(|e| io_err(&spaces_path, e))?,
    )
    .map_err(|e| json_err(&spaces_path, e))?;

    let mut spaces = BTreeMap::new();
    for doc in space_docs {
        let space_id = doc.definition.space_id.clone();

        let authority = match doc.definition.trust_model {
            TrustModel::Centralized => {
                let path = dir.join(format!("idp_{space_id}.jsonl"));
                let lines: Vec<IdpLine> = read_jsonl(&path)?;
                let mut provider: Option<IdentityProvider> = None;
                let mut accounts = BTreeMap::new();
                let mut issued_tokens = BTreeSet::new();
                for line in lines {
                    match line {
                        IdpLine::Provider {
                            space_id,
                            issuer_keypair,
                            token_ttl,
                            token_counter,
                        } => {
                            let mut idp =
                                IdentityProvider::new(space_id, issuer_keypair, token_ttl);
                            idp.token_counter = token_counter;
                            provider = Some(idp);
                        }
                        IdpLine::Account {
                            participant_id,
                            salt,
                            secret_hash,
                        } => {
                            accounts.insert(
                                participant_id,
                                crate::identity::StoredAccount { salt, secret_hash },
                            );
                        }
                        IdpLine::Token { jti } => {
                            issued_tokens.insert(jti);
                        }
                    }
                }
                let mut idp = provider.ok_or_else(|| {
                    PersistError::Inconsistent(format!("{space_id}: missing provider line"))
                })?;
                idp.accounts = accounts;
                idp.issued_tokens = issued_tokens;
                SpaceAuthority::Idp(idp)
            }
            TrustModel::Decentralized => {
                let path = dir.join(format!("vdr_{space_id}.jsonl"));
                let lines: Vec<VdrLine> = read_jsonl(&path)?;
                let mut header: Option<(String, String, u64)> = None;
                let mut documents = BTreeMap::new();
                let mut credential_status = BTreeMap::new();
                for line in lines {
                    match line {
                        VdrLine::Registry {
                            space_id,
                            issuer_did,
                            credential_counter,
                        } => header = Some((space_id, issuer_did, credential_counter)),
                        VdrLine::DidDocument { document } => {
                            documents.insert(document.did.clone(), document);
                        }
                        VdrLine::CredentialStatus {
                            credential_id,
                            revoked,
                        } => {
                            credential_status.insert(credential_id, revoked);
                        }
                    }
                }
                let (vdr_space, issuer_did, credential_counter) = header.ok_or_else(|| {
                    PersistError::Inconsistent(format!("{space_id}: missing registry line"))
                })?;
                SpaceAuthority::Vdr(VerifiableDataRegistry {
                    space_id: vdr_space,
                    issuer_did,
                    documents,
                    credential_status,
                    credential_counter,
                })
            }
        };

        let path = dir.join(format!("registry_{space_id}.jsonl"));
        let lines: Vec<RegistryLine> = read_jsonl(&path)?;
        let mut registry = ParticipantRegistry::new(space_id.clone());
        let mut resolver = EndpointResolver::new(space_id.clone());
        for line in lines {
            match line {
                RegistryLine::Meta { device_counter } => registry.device_counter = device_counter,
                RegistryLine::Participant { participant } => {
                    registry
                        .participants
                        .insert(participant.participant_id.clone(), participant);
                }
                RegistryLine::SigningKey {
                    participant_id,
                    public_key,
                } => {
                    registry.signing_keys.insert(participant_id, public_key);
                }
                RegistryLine::Device { device } => {
                    registry.devices.insert(device.device_id.clone(), device);
                }
                RegistryLine::ResolverEntry { key, device_ids } => {
                    resolver.entries.insert(key, device_ids);
                }
            }
        }
        registry.resolver = resolver;

        let mut model_repo = ModelRepository::new(space_id.clone());
        let models: Vec<SemanticModel> = read_jsonl(&dir.join(format!("models_{space_id}.jsonl")))?;
        for model in models {
            model_repo
                .models
                .insert((model.model_id.clone(), model.version), model);
        }

        let catalog_path = dir.join(format!("catalog_{space_id}.json"));
        let entries: Vec<CatalogEntry> = serde_json::from_str(
            &fs::read_to_string(&catalog_path).map_err(|e| io_err(&catalog_path, e))?,
        )
        .map_err(|e| json_err(&catalog_path, e))?;
        let mut catalog = CatalogStore::new(space_id.clone());
        catalog.record_counter = doc.catalog_record_counter;
        for entry in entries {
            let id = entry.record.record_id.clone();
            if let Some(sig) = entry.signature {
                catalog.signatures.insert(id.clone(), sig);
            }
            catalog.records.insert(id, entry.record);
        }

        let pms = if doc.definition.capabilities.provenance_service {
            let mut pms = ProvenanceService::new(space_id.clone());
            let pms_path = dir.join(format!("pms_{space_id}.jsonl"));
            if pms_path.is_file() {
                let logs: Vec<TransferLog> = read_jsonl(&pms_path)?;
                for log in logs {
                    pms.logs.insert(log.log_id.clone(), log);
                }
            }
            Some(pms)
        } else {
            None
        };

        spaces.insert(
            space_id,
            SpaceState {
                definition: doc.definition,
                authority,
                operator_keypair: doc.operator_keypair,
                registry,
                model_repo,
                catalog,
                pms,
            },
        );
    }

    let connectors: Vec<Connector> = read_jsonl(&dir.join("connectors.jsonl"))?;
    let contracts: Vec<Contract> = read_jsonl(&dir.join("contracts.jsonl"))?;
    let log_lines: Vec<ContractLogLine> = read_jsonl(&dir.join("logs.jsonl"))?;
    let datasets: Vec<Dataset> = read_jsonl(&dir.join("datasets.jsonl"))?;
    let index_entries: Vec<IndexEntry> = read_jsonl(&dir.join("index.jsonl"))?;
    let events: Vec<EventRecord> = read_jsonl(&dir.join("events.jsonl"))?;

    let mut contract_logs: BTreeMap<String, Vec<TransferLog>> = BTreeMap::new();
    for line in log_lines {
        contract_logs
            .entry(line.contract_id)
            .or_default()
            .push(line.log);
    }
    let publications = meta
        .publications
        .into_iter()
        .map(|(key, dataset)| {
            let (space, record) = key.split_once('/').ok_or_else(|| {
                PersistError::Inconsistent(format!("bad publication key {key}"))
            })?;
            Ok(((space.to_string(), record.to_string()), dataset))
        })
        .collect::<Result<BTreeMap<_, _>, PersistError>>()?;

    Ok(World {
        clock: meta.clock,
        seed: meta.seed,
        rng: meta.rng,
        spaces,
        cas: meta
            .certificate_authorities
            .into_iter()
            .map(|ca| (ca.ca_id.clone(), ca))
            .collect(),
        clearing_houses: meta
            .clearing_houses
            .into_iter()
            .map(|ch| (ch.id.clone(), ch))
            .collect(),
        broker: meta.broker,
        index: SemanticIndex {
            entries: index_entries,
        },
        index_suggest_threshold: meta.index_suggest_threshold,
        connectors: connectors
            .into_iter()
            .map(|c| (c.connector_id.clone(), c))
            .collect(),
        contracts: contracts
            .into_iter()
            .map(|c| (c.contract_id.clone(), c))
            .collect(),
        contract_logs,
        datasets: datasets
            .into_iter()
            .map(|d| (d.dataset_id.clone(), d))
            .collect(),
        holders: meta.holders,
        publications,
        device_keys: meta.device_keys,
        events: EventLog { events },
        counters: meta.counters,
    })
}

/// Resolve the data directory: explicit flag, `DSB_DATA_DIR`, or `./data`.
pub fn resolve_data_dir(flag: Option<PathBuf>) -> PathBuf {
    flag.or_else(|| std::env::var_os("DSB_DATA_DIR").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("data"))
}
