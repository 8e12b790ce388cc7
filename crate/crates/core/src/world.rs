//! The assembled simulation: spaces with their stores, shared services,
//! connectors, and the deterministic clock and RNG.
//!
//! All state lives here and every operation takes `&mut World`, so mutations
//! are serialized by construction. Key material and nonces come from the
//! seeded RNG in execution order; two runs with the same setup and seed are
//! byte-identical.

use std::collections::{BTreeMap, BTreeSet};

use rand::RngCore;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::connector::{Connector, CredentialArtifact, Phase};
use crate::events::EventLog;
use crate::exchange::{
    build_log, BrokerStub, Contract, ContractId, Dataset, DatasetId, ExchangeError, LogKind,
    TransferLog,
};
use crate::identity::{ClearingHouse, IdentityError, IdentityProvider, OrgApplication};
use crate::provenance::{ProvenanceChain, ProvenanceError, ProvenanceService, ProvenanceVerdict};
use crate::registry::{
    self, CredentialRequest, Device, IssuedCredential, OnboardOutcome, OnboardRequest,
    ParticipantRegistry, RegistryError, SearchKey, SearchKeyKind, SimulatedCa, SpaceAuthority,
    SpaceDefinition, TrustModel,
};
use crate::semantics::{
    catalog_validate, CatalogCheck, CatalogRecord, CatalogStore, DistributionEndpoint,
    IndexEntry, ModelRepository, SemanticIndex, SemanticModel, SemanticsError,
};
use crate::trust::{generate_keypair, sign, Canonical, KeyPair, PublicKey, SimTime, SpaceId};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum WorldError {
    #[error("unknown space {0}")]
    UnknownSpace(SpaceId),
    #[error("unknown connector {0}")]
    UnknownConnector(String),
    #[error("unknown certificate authority {0}")]
    UnknownCa(String),
    #[error("unknown contract {0}")]
    UnknownContract(ContractId),
    #[error("unknown dataset {0}")]
    UnknownDataset(DatasetId),
    #[error("unknown device {0}")]
    UnknownDevice(String),
    #[error("connector {connector} holds no credential for space {space}")]
    NoHolding { connector: String, space: SpaceId },
    #[error("connector {connector} does not hold dataset {dataset}")]
    NotHolder { connector: String, dataset: DatasetId },
    #[error("connector {0} has no cached token")]
    NoCachedToken(String),
    #[error("catalog record rejected: {0}")]
    PublishRejected(String),
    #[error("space {space} does not offer {capability}")]
    CapabilityUnavailable { space: SpaceId, capability: String },
    #[error(transparent)]
    Registry(#[from] RegistryError),
    #[error(transparent)]
    Identity(#[from] IdentityError),
    #[error(transparent)]
    Semantics(#[from] SemanticsError),
    #[error(transparent)]
    Exchange(#[from] ExchangeError),
    #[error(transparent)]
    Provenance(#[from] ProvenanceError),
}

/// Everything one space operates: definition, authentication infrastructure,
/// participant registry, model repository, catalog, and the optional
/// provenance service.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpaceState {
    pub definition: SpaceDefinition,
    pub authority: SpaceAuthority,
    pub operator_keypair: KeyPair,
    pub registry: ParticipantRegistry,
    pub model_repo: ModelRepository,
    pub catalog: CatalogStore,
    pub pms: Option<ProvenanceService>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaSetup {
    pub ca_id: String,
    #[serde(default = "default_ca_ttl")]
    pub certificate_ttl_seconds: SimTime,
}

fn default_ca_ttl() -> SimTime {
    31_536_000
}

/// Blueprint the harness assembles from configuration.
#[derive(Debug, Clone)]
pub struct WorldSetup {
    pub spaces: Vec<SpaceDefinition>,
    pub clearing_houses: Vec<ClearingHouse>,
    pub certificate_authorities: Vec<CaSetup>,
    pub broker_available: bool,
    pub index_suggest_threshold: f64,
    pub preloaded_models: Vec<SemanticModel>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorldCounters {
    pub contract: u64,
    pub log: u64,
    pub exchange: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct World {
    pub clock: SimTime,
    pub seed: u64,
    pub rng: ChaCha20Rng,
    pub spaces: BTreeMap<SpaceId, SpaceState>,
    pub cas: BTreeMap<String, SimulatedCa>,
    pub clearing_houses: BTreeMap<String, ClearingHouse>,
    pub broker: BrokerStub,
    pub index: SemanticIndex,
    pub index_suggest_threshold: f64,
    pub connectors: BTreeMap<String, Connector>,
    pub contracts: BTreeMap<ContractId, Contract>,
    pub contract_logs: BTreeMap<ContractId, Vec<TransferLog>>,
    pub datasets: BTreeMap<DatasetId, Dataset>,
    pub holders: BTreeMap<DatasetId, BTreeSet<String>>,
    /// (space, record id) -> dataset advertised by that catalog record.
    pub publications: BTreeMap<(SpaceId, String), DatasetId>,
    /// Actual key an endpoint presents; normally its certificate's subject.
    pub device_keys: BTreeMap<String, PublicKey>,
    pub events: EventLog,
    pub counters: WorldCounters,
}

impl World {
    pub fn new(setup: WorldSetup, seed: u64) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut spaces = BTreeMap::new();
        let mut sorted_spaces = setup.spaces;
        sorted_spaces.sort_by(|a, b| a.space_id.cmp(&b.space_id));
        for definition in sorted_spaces {
            let operator_keypair = draw_keypair(&mut rng);
            let authority = match definition.trust_model {
                TrustModel::Centralized => SpaceAuthority::Idp(IdentityProvider::new(
                    definition.space_id.clone(),
                    operator_keypair.clone(),
                    definition.token_ttl_seconds,
                )),
                TrustModel::Decentralized => {
                    SpaceAuthority::Vdr(crate::identity::VerifiableDataRegistry::new(
                        definition.space_id.clone(),
                        &operator_keypair.public_key,
                    ))
                }
            };
            let pms = definition
                .capabilities
                .provenance_service
                .then(|| ProvenanceService::new(definition.space_id.clone()));
            let mut model_repo = ModelRepository::new(definition.space_id.clone());
            for model in setup
                .preloaded_models
                .iter()
                .filter(|m| m.space_id == definition.space_id)
            {
                model_repo
                    .register(model.clone())
                    .expect("preloaded models are unique per space");
            }
            spaces.insert(
                definition.space_id.clone(),
                SpaceState {
                    registry: ParticipantRegistry::new(definition.space_id.clone()),
                    catalog: CatalogStore::new(definition.space_id.clone()),
                    model_repo,
                    authority,
                    operator_keypair,
                    pms,
                    definition,
                },
            );
        }

        let mut cas = BTreeMap::new();
        let mut sorted_cas = setup.certificate_authorities;
        sorted_cas.sort_by(|a, b| a.ca_id.cmp(&b.ca_id));
        for ca in sorted_cas {
            cas.insert(
                ca.ca_id.clone(),
                SimulatedCa {
                    ca_id: ca.ca_id,
                    keypair: draw_keypair(&mut rng),
                    certificate_ttl: ca.certificate_ttl_seconds,
                },
            );
        }

        World {
            clock: 0,
            seed,
            rng,
            spaces,
            cas,
            clearing_houses: setup
                .clearing_houses
                .into_iter()
                .map(|ch| (ch.id.clone(), ch))
                .collect(),
            broker: BrokerStub::new("ext-broker", setup.broker_available),
            index: SemanticIndex::new(),
            index_suggest_threshold: setup.index_suggest_threshold,
            connectors: BTreeMap::new(),
            contracts: BTreeMap::new(),
            contract_logs: BTreeMap::new(),
            datasets: BTreeMap::new(),
            holders: BTreeMap::new(),
            publications: BTreeMap::new(),
            device_keys: BTreeMap::new(),
            events: EventLog::new(),
            counters: WorldCounters::default(),
        }
    }

    pub fn now(&self) -> SimTime {
        self.clock
    }

    pub fn advance_clock(&mut self, seconds: SimTime) {
        self.clock += seconds;
    }

    pub fn draw_seed(&mut self) -> [u8; 32] {
        let mut seed = [0u8; 32];
        self.rng.fill_bytes(&mut seed);
        seed
    }

    pub fn draw_nonce(&mut self) -> Vec<u8> {
        let mut nonce = vec![0u8; 16];
        self.rng.fill_bytes(&mut nonce);
        nonce
    }

    pub fn next_contract_id(&mut self) -> ContractId {
        self.counters.contract += 1;
        format!("ctr-{:04}", self.counters.contract)
    }

    pub fn next_log_id(&mut self) -> String {
        self.counters.log += 1;
        format!("log-{:04}", self.counters.log)
    }

    pub fn next_exchange_id(&mut self) -> String {
        self.counters.exchange += 1;
        format!("exch-{:04}", self.counters.exchange)
    }

    pub fn space(&self, space_id: &str) -> Result<&SpaceState, WorldError> {
        self.spaces
            .get(space_id)
            .ok_or_else(|| WorldError::UnknownSpace(space_id.to_string()))
    }

    pub fn space_mut(&mut self, space_id: &str) -> Result<&mut SpaceState, WorldError> {
        self.spaces
            .get_mut(space_id)
            .ok_or_else(|| WorldError::UnknownSpace(space_id.to_string()))
    }

    pub fn connector(&self, id: &str) -> Result<&Connector, WorldError> {
        self.connectors
            .get(id)
            .ok_or_else(|| WorldError::UnknownConnector(id.to_string()))
    }

    pub fn connector_mut(&mut self, id: &str) -> Result<&mut Connector, WorldError> {
        self.connectors
            .get_mut(id)
            .ok_or_else(|| WorldError::UnknownConnector(id.to_string()))
    }

    /// Resolve a participant's registered signing key via the owning
    /// space's registry. Spaces are searched in id order; participant ids
    /// are expected to be distinct across spaces.
    pub fn resolve_signing_key(&self, participant_id: &str) -> Option<PublicKey> {
        for state in self.spaces.values() {
            if let Some(key) = state.registry.signing_key(participant_id) {
                return Some(key.clone());
            }
        }
        None
    }

    pub fn key_resolver(&self) -> impl Fn(&str) -> Option<PublicKey> + '_ {
        move |id: &str| self.resolve_signing_key(id)
    }

    fn record(&mut self, actor: &str, event: &str, outcome: &str) {
        self.events.record(self.clock, actor, event, outcome);
    }

    // -----------------------------------------------------------------------
    // onboarding and credentials
    // -----------------------------------------------------------------------

    /// Onboard a connector's organization onto a space. The connector is
    /// created on first use; onboarding a second space turns the wallet
    /// dual-stack. Centralized spaces hand back an account whose first
    /// token is acquired and cached immediately.
    pub fn onboard_connector(
        &mut self,
        connector_id: &str,
        space_id: &str,
        application: OrgApplication,
        secret: Option<String>,
    ) -> Result<OnboardOutcome, WorldError> {
        self.space(space_id)?;
        if let Some(connector) = self.connectors.get(connector_id) {
            if connector.wallet.holding(space_id).is_some() {
                return Err(RegistryError::DuplicateApplication(
                    application.participant_id.clone(),
                )
                .into());
            }
        }

        let keys = generate_keypair(&self.draw_seed()).expect("non-empty seed");
        let secret = secret.unwrap_or_else(|| format!("pw-{}", keys.key_id));
        let trust_model = self.space(space_id)?.definition.trust_model;
        let credential_request = match trust_model {
            TrustModel::Centralized => CredentialRequest::Password {
                secret: secret.clone(),
                signing_public_key: keys.public_key.clone(),
            },
            TrustModel::Decentralized => CredentialRequest::SelfSovereign {
                public_key: keys.public_key.clone(),
            },
        };
        let request = OnboardRequest {
            application: application.clone(),
            credential_request,
        };

        let now = self.clock;
        let clearing_houses = self.clearing_houses.clone();
        let state = self.space_mut(space_id)?;
        let operator = state.operator_keypair.clone();
        let outcome = registry::onboard(
            &state.definition.clone(),
            &mut state.authority,
            &mut state.registry,
            &clearing_houses,
            &operator,
            &request,
            now,
        );

        let outcome = match outcome {
            Ok(outcome) => outcome,
            Err(e) => {
                self.record(connector_id, "onboard", &format!("rejected:{e}"));
                return Err(e.into());
            }
        };

        let holding = match &outcome.credential {
            IssuedCredential::Password(password) => CredentialArtifact::Centralized {
                participant_id: application.participant_id.clone(),
                password: password.clone(),
                cached_token: None,
                signing_keys: keys,
            },
            IssuedCredential::Membership { did, credential } => {
                CredentialArtifact::Decentralized {
                    participant_id: application.participant_id.clone(),
                    did: did.clone(),
                    membership: credential.clone(),
                    keys,
                }
            }
        };

        let connector = self
            .connectors
            .entry(connector_id.to_string())
            .or_insert_with(|| {
                Connector::new(connector_id, &application.participant_id, space_id)
            });
        connector.wallet.insert(space_id, holding);
        connector.advance(Phase::Onboarded, now);
        self.record(connector_id, "onboard", &format!("active:{space_id}"));

        if matches!(trust_model, TrustModel::Centralized) {
            self.acquire_token(connector_id, space_id)?;
        }
        Ok(outcome)
    }

    /// Fetch a fresh token from the space's identity provider and cache it
    /// in the wallet. Tokens are otherwise never refreshed implicitly, so
    /// expiry is observable.
    pub fn acquire_token(
        &mut self,
        connector_id: &str,
        space_id: &str,
    ) -> Result<(), WorldError> {
        let now = self.clock;
        let connector = self.connector(connector_id)?;
        let holding = connector
            .wallet
            .holding(space_id)
            .ok_or_else(|| WorldError::NoHolding {
                connector: connector_id.to_string(),
                space: space_id.to_string(),
            })?;
        let CredentialArtifact::Centralized {
            participant_id,
            password,
            ..
        } = holding
        else {
            return Err(WorldError::CapabilityUnavailable {
                space: space_id.to_string(),
                capability: "token issuance".into(),
            });
        };
        let participant_id = participant_id.clone();
        let secret = password.secret.clone();

        let state = self.space_mut(space_id)?;
        let SpaceAuthority::Idp(idp) = &mut state.authority else {
            return Err(WorldError::CapabilityUnavailable {
                space: space_id.to_string(),
                capability: "token issuance".into(),
            });
        };
        let token = idp.issue_token(&participant_id, &secret, now)?;
        let jti = token.token_id().unwrap_or("").to_string();

        let connector = self.connector_mut(connector_id)?;
        if let Some(CredentialArtifact::Centralized { cached_token, .. }) =
            connector.wallet.holding_mut(space_id)
        {
            *cached_token = Some(token);
        }
        self.record(connector_id, "idp-issue-token", &jti);
        Ok(())
    }

    /// Revoke the membership credential a connector holds in a space.
    pub fn revoke_credential(
        &mut self,
        connector_id: &str,
        space_id: &str,
    ) -> Result<(), WorldError> {
        let connector = self.connector(connector_id)?;
        let Some(CredentialArtifact::Decentralized { membership, .. }) =
            connector.wallet.holding(space_id)
        else {
            return Err(WorldError::NoHolding {
                connector: connector_id.to_string(),
                space: space_id.to_string(),
            });
        };
        let credential_id = membership.credential_id.clone();
        let state = self.space_mut(space_id)?;
        let SpaceAuthority::Vdr(vdr) = &mut state.authority else {
            return Err(WorldError::UnknownSpace(space_id.to_string()));
        };
        vdr.revoke(&credential_id)?;
        self.record(connector_id, "revoke-credential", &credential_id);
        Ok(())
    }

    // -----------------------------------------------------------------------
    // devices
    // -----------------------------------------------------------------------

    pub fn register_device(
        &mut self,
        connector_id: &str,
        space_id: &str,
        endpoint_domain: &str,
    ) -> Result<Device, WorldError> {
        let now = self.clock;
        let device_keys = generate_keypair(&self.draw_seed()).expect("non-empty seed");
        let connector = self.connector(connector_id)?;
        let participant_id = connector
            .wallet
            .participant_in(space_id)
            .ok_or_else(|| WorldError::NoHolding {
                connector: connector_id.to_string(),
                space: space_id.to_string(),
            })?
            .to_string();

        let ca_id = self.space(space_id)?.definition.issuing_ca.clone();
        let ca = self
            .cas
            .get(&ca_id)
            .ok_or_else(|| WorldError::UnknownCa(ca_id.clone()))?
            .clone();
        let state = self.space_mut(space_id)?;
        let device = registry::register_device(
            &state.definition.clone(),
            &mut state.registry,
            &ca,
            &participant_id,
            Some(connector_id),
            endpoint_domain,
            &device_keys.public_key,
            now,
        )?;
        self.device_keys
            .insert(device.device_id.clone(), device_keys.public_key.clone());
        self.record(
            connector_id,
            "register-device",
            &format!("{}:{endpoint_domain}", device.device_id),
        );
        Ok(device)
    }

    pub fn deregister_device(
        &mut self,
        space_id: &str,
        device_id: &str,
    ) -> Result<(), WorldError> {
        let state = self.space_mut(space_id)?;
        registry::deregister_device(&mut state.registry, device_id)?;
        Ok(())
    }

    /// Move a device to a new advertised domain without re-issuing its
    /// certificate; endpoint verification will see the stale binding.
    pub fn tamper_device_domain(
        &mut self,
        space_id: &str,
        device_id: &str,
        new_domain: &str,
    ) -> Result<(), WorldError> {
        let state = self.space_mut(space_id)?;
        let device = state
            .registry
            .devices
            .get_mut(device_id)
            .ok_or_else(|| WorldError::UnknownDevice(device_id.to_string()))?;
        device.endpoint_domain = new_domain.to_string();
        Ok(())
    }

    pub fn devices_of(&self, space_id: &str, connector_id: &str) -> Vec<String> {
        let Ok(connector) = self.connector(connector_id) else {
            return Vec::new();
        };
        let Some(pid) = connector.wallet.participant_in(space_id) else {
            return Vec::new();
        };
        let Ok(state) = self.space(space_id) else {
            return Vec::new();
        };
        state
            .registry
            .devices
            .values()
            .filter(|d| d.owner == pid)
            .map(|d| d.device_id.clone())
            .collect()
    }

    // -----------------------------------------------------------------------
    // models, datasets, catalogs
    // -----------------------------------------------------------------------

    pub fn register_model(&mut self, model: SemanticModel) -> Result<(), WorldError> {
        let state = self.space_mut(&model.space_id.clone())?;
        state.model_repo.register(model)?;
        Ok(())
    }

    pub fn index_add(&mut self, entry: IndexEntry) -> Result<IndexEntry, WorldError> {
        let repos: BTreeMap<SpaceId, ModelRepository> = self
            .spaces
            .iter()
            .map(|(id, s)| (id.clone(), s.model_repo.clone()))
            .collect();
        Ok(self.index.add(entry, &repos)?)
    }

    /// Publish a dataset with a catalog record in one space. A fresh
    /// dataset id creates the dataset owned by the publisher; an existing id
    /// may be re-published by any connector that holds the data.
    #[allow(clippy::too_many_arguments)]
    pub fn publish_dataset(
        &mut self,
        connector_id: &str,
        space_id: &str,
        dataset_id: &str,
        model_id: &str,
        payload: Option<Vec<u8>>,
        catalog: CatalogFields,
    ) -> Result<String, WorldError> {
        let now = self.clock;
        let connector = self.connector(connector_id)?;
        let participant_id = connector
            .wallet
            .participant_in(space_id)
            .ok_or_else(|| WorldError::NoHolding {
                connector: connector_id.to_string(),
                space: space_id.to_string(),
            })?
            .to_string();
        if !self.space(space_id)?.registry.is_active(&participant_id) {
            return Err(RegistryError::OwnerNotActive(participant_id).into());
        }

        if let Some(dataset) = self.datasets.get(dataset_id) {
            let holds = self
                .holders
                .get(dataset_id)
                .is_some_and(|h| h.contains(connector_id));
            if !holds {
                return Err(WorldError::NotHolder {
                    connector: connector_id.to_string(),
                    dataset: dataset_id.to_string(),
                });
            }
            let _ = dataset;
        } else {
            let payload = payload.unwrap_or_default();
            let dataset = Dataset::new(dataset_id, &participant_id, model_id, payload);
            self.datasets.insert(dataset_id.to_string(), dataset);
            self.holders
                .entry(dataset_id.to_string())
                .or_default()
                .insert(connector_id.to_string());
        }

        // advertised endpoint: the publisher's registered device when there
        // is one, otherwise whatever the catalog claims
        let device_domain = {
            let state = self.space(space_id)?;
            let key = SearchKey {
                kind: SearchKeyKind::ParticipantId,
                value: participant_id.clone(),
            };
            registry::resolve_endpoint(&state.registry, &key)
                .first()
                .map(|(domain, _)| domain.clone())
        };
        let domain = device_domain
            .or(catalog.endpoint_domain)
            .unwrap_or_else(|| format!("{participant_id}.sim"));

        let state = self.space_mut(space_id)?;
        let record = CatalogRecord {
            record_id: state.catalog.next_record_id(),
            title: catalog.title,
            description: catalog.description,
            publisher: participant_id.clone(),
            theme: catalog.theme,
            conforms_to: model_id.to_string(),
            distribution_endpoint: DistributionEndpoint {
                domain,
                path: format!("/datasets/{dataset_id}"),
            },
            issued: now,
            extensions: catalog.extensions,
        };
        match catalog_validate(&record, &state.model_repo) {
            CatalogCheck::Ok => {}
            CatalogCheck::MissingPrincipalProperty(name) => {
                return Err(WorldError::PublishRejected(format!(
                    "missing principal property {name}"
                )));
            }
            CatalogCheck::UnknownModel(model) => {
                return Err(WorldError::PublishRejected(format!(
                    "model {model} not in the space repository"
                )));
            }
        }

        let signature = if state.definition.capabilities.catalog_signing {
            let connector = self.connectors.get(connector_id).expect("checked above");
            let keys = connector
                .wallet
                .signing_keys_in(space_id)
                .expect("holding exists");
            Some(sign(&keys.private_key, &record.canonical_encode()))
        } else {
            None
        };

        let state = self.space_mut(space_id)?;
        let record_id = state.catalog.insert(record, signature)?;
        self.publications.insert(
            (space_id.to_string(), record_id.clone()),
            dataset_id.to_string(),
        );
        let connector = self.connector_mut(connector_id)?;
        connector.advance(Phase::Planned, now);
        self.record(connector_id, "publish", &format!("{space_id}:{record_id}"));
        Ok(record_id)
    }

    /// Catalog record(s) in a space advertising a dataset by a publisher.
    pub fn records_advertising(
        &self,
        space_id: &str,
        dataset_id: &str,
        publisher: &str,
    ) -> Vec<&CatalogRecord> {
        let Ok(state) = self.space(space_id) else {
            return Vec::new();
        };
        let mut records: Vec<&CatalogRecord> = self
            .publications
            .iter()
            .filter(|((sid, _), did)| sid == space_id && did.as_str() == dataset_id)
            .filter_map(|((_, rid), _)| state.catalog.get(rid))
            .filter(|record| record.publisher == publisher)
            .collect();
        records.sort_by(|a, b| a.record_id.cmp(&b.record_id));
        records
    }

    // -----------------------------------------------------------------------
    // payment and provenance
    // -----------------------------------------------------------------------

    /// Record a signed payment log for a concluded contract. The payment
    /// chains after the receive log, so paying before the transfer is an
    /// ordering violation.
    pub fn record_payment(
        &mut self,
        consumer_connector_id: &str,
        contract_id: &str,
        amount: u64,
    ) -> Result<TransferLog, WorldError> {
        let now = self.clock;
        let contract = self
            .contracts
            .get(contract_id)
            .ok_or_else(|| WorldError::UnknownContract(contract_id.to_string()))?
            .clone();
        if !contract.is_concluded() {
            return Err(ExchangeError::ContractNotConcluded.into());
        }
        let logs = self.contract_logs.get(contract_id).cloned().unwrap_or_default();
        let receive = logs
            .iter()
            .rfind(|l| l.kind == LogKind::Receive)
            .ok_or(ExchangeError::OrderViolation)?
            .clone();

        let connector = self.connector(consumer_connector_id)?;
        let holding_space = connector
            .wallet
            .space_of_participant(&contract.consumer)
            .ok_or_else(|| WorldError::NoHolding {
                connector: consumer_connector_id.to_string(),
                space: "<consumer identity>".into(),
            })?;
        let keys = connector
            .wallet
            .signing_keys_in(&holding_space)
            .expect("holding exists")
            .clone();

        let log_id = self.next_log_id();
        let payment = build_log(
            &log_id,
            LogKind::Payment,
            &contract,
            &contract.consumer,
            &contract.provider,
            now,
            Some(receive.log_hash()),
            Some(amount),
            &keys,
        );
        self.contract_logs
            .get_mut(contract_id)
            .expect("logs exist")
            .push(payment.clone());
        let connector = self.connector_mut(consumer_connector_id)?;
        connector.local_logs.push(payment.clone());
        connector.advance(Phase::Paid, now);
        self.record(consumer_connector_id, "payment", &format!("{contract_id}:{amount}"));
        Ok(payment)
    }

    pub fn pms_ingest(&mut self, space_id: &str, log: TransferLog) -> Result<String, WorldError> {
        let resolver: BTreeMap<String, PublicKey> = self.all_signing_keys();
        let state = self.space_mut(space_id)?;
        let Some(pms) = state.pms.as_mut() else {
            return Err(WorldError::CapabilityUnavailable {
                space: space_id.to_string(),
                capability: "provenance-service".into(),
            });
        };
        let id = pms.ingest(log, |pid| resolver.get(pid).cloned())?;
        Ok(id)
    }

    pub fn pms_chain(&self, space_id: &str, dataset_id: &str) -> Result<ProvenanceChain, WorldError> {
        let state = self.space(space_id)?;
        let Some(pms) = state.pms.as_ref() else {
            return Err(WorldError::CapabilityUnavailable {
                space: space_id.to_string(),
                capability: "provenance-service".into(),
            });
        };
        Ok(pms.chain(dataset_id))
    }

    pub fn pms_verify(
        &self,
        space_id: &str,
        chain: &ProvenanceChain,
    ) -> Result<ProvenanceVerdict, WorldError> {
        self.space(space_id)?;
        Ok(crate::provenance::verify_chain(chain, self.key_resolver())?)
    }

    /// Build a signed distribution package for a dataset the connector
    /// created. Available only where the space offers the signable-package
    /// format.
    pub fn build_package(
        &mut self,
        connector_id: &str,
        space_id: &str,
        dataset_id: &str,
    ) -> Result<crate::exchange::DataPackage, WorldError> {
        let now = self.clock;
        let state = self.space(space_id)?;
        if !state.definition.capabilities.signable_package {
            return Err(WorldError::CapabilityUnavailable {
                space: space_id.to_string(),
                capability: "signable-package".into(),
            });
        }
        let dataset = self
            .datasets
            .get(dataset_id)
            .ok_or_else(|| WorldError::UnknownDataset(dataset_id.to_string()))?
            .clone();
        let connector = self.connector(connector_id)?;
        let keys = connector
            .wallet
            .signing_keys_in(space_id)
            .ok_or_else(|| WorldError::NoHolding {
                connector: connector_id.to_string(),
                space: space_id.to_string(),
            })?
            .clone();
        let registered = self
            .resolve_signing_key(&dataset.owner)
            .ok_or_else(|| WorldError::UnknownDataset(dataset.owner.clone()))?;
        Ok(crate::exchange::package_sign(&dataset, &keys, &registered, now)?)
    }

    /// Check a published record's publisher signature at query time.
    /// Available only where the space signs catalog records.
    pub fn verify_catalog_signature(
        &self,
        space_id: &str,
        record_id: &str,
    ) -> Result<bool, WorldError> {
        let state = self.space(space_id)?;
        if !state.definition.capabilities.catalog_signing {
            return Err(WorldError::CapabilityUnavailable {
                space: space_id.to_string(),
                capability: "catalog-signing".into(),
            });
        }
        let Some(record) = state.catalog.get(record_id) else {
            return Ok(false);
        };
        let Some(signature) = state.catalog.signatures.get(record_id) else {
            return Ok(false);
        };
        let Some(publisher_key) = self.resolve_signing_key(&record.publisher) else {
            return Ok(false);
        };
        Ok(crate::trust::verify(
            &publisher_key,
            &record.canonical_encode(),
            signature,
        ))
    }

    /// Check both parties' signatures over a concluded contract. Available
    /// only where the space attests contracts.
    pub fn verify_contract_attestation(
        &self,
        space_id: &str,
        contract_id: &str,
    ) -> Result<bool, WorldError> {
        let state = self.space(space_id)?;
        if !state.definition.capabilities.contract_attestation {
            return Err(WorldError::CapabilityUnavailable {
                space: space_id.to_string(),
                capability: "contract-attestation".into(),
            });
        }
        let contract = self
            .contracts
            .get(contract_id)
            .ok_or_else(|| WorldError::UnknownContract(contract_id.to_string()))?;
        let bytes = contract.attestation_bytes();
        for party in [&contract.provider, &contract.consumer] {
            let Some(signature) = contract.attestations.get(party) else {
                return Ok(false);
            };
            let Some(key) = self.resolve_signing_key(party) else {
                return Ok(false);
            };
            if !crate::trust::verify(&key, &bytes, signature) {
                return Ok(false);
            }
        }
        Ok(true)
    }

    fn all_signing_keys(&self) -> BTreeMap<String, PublicKey> {
        let mut keys = BTreeMap::new();
        for state in self.spaces.values() {
            for (pid, key) in &state.registry.signing_keys {
                keys.entry(pid.clone()).or_insert_with(|| key.clone());
            }
        }
        keys
    }
}

fn draw_keypair(rng: &mut ChaCha20Rng) -> KeyPair {
    let mut seed = [0u8; 32];
    rng.fill_bytes(&mut seed);
    generate_keypair(&seed).expect("non-empty seed")
}

/// Catalog fields supplied at publish time.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CatalogFields {
    pub title: String,
    pub description: String,
    #[serde(default)]
    pub theme: Vec<String>,
    #[serde(default)]
    pub extensions: BTreeMap<String, String>,
    #[serde(default)]
    pub endpoint_domain: Option<String>,
}
