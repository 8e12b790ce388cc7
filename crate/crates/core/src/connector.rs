//! The connector: one participant's credential wallet, phase state machine,
//! counterpart verification, and the end-to-end exchange process.
//!
//! A wallet holds at most one credential per space; holding two makes the
//! connector dual-stack. Verification protocol selection needs no handshake:
//! the proof artifact's type plus its issuing space determine it. A verifier
//! accepts proofs rooted in any space it is onboarded to, plus spaces in its
//! recognition set; everything else is an unrecognized framework.
//!
//! Recognition is directional. Both sides must configure it for symmetric
//! cross-space exchange.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::events::EventRecord;
use crate::exchange::{
    build_log, package_sign, package_verify, verify_exchange_chain, ChainCheck, ConsumerDecision,
    Contract, LogKind, PackageCheck, TransferLog,
};
use crate::identity::{
    verify_presentation, PasswordCredential, PresentationVerdict, TokenStatus,
};
use crate::provenance::ProvenanceVerdict;
use crate::registry::{
    resolve_devices, verify_endpoint, Device, EndpointCheck, SearchKey, SearchKeyKind,
    SpaceAuthority,
};
use crate::semantics::{catalog_convert, CatalogRecord, ConversionWarning};
use crate::trust::{
    sign, KeyPair, MembershipCredential, ParticipantId, Presentation, SignedToken, SimTime,
    SpaceId,
};
use crate::world::{World, WorldError};

// ---------------------------------------------------------------------------
// wallet
// ---------------------------------------------------------------------------

/// Credential material a connector holds for one space.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum CredentialArtifact {
    Centralized {
        participant_id: ParticipantId,
        password: PasswordCredential,
        /// Acquired at onboarding and on explicit refresh only, so token
        /// expiry is observable in scenarios.
        cached_token: Option<SignedToken>,
        signing_keys: KeyPair,
    },
    Decentralized {
        participant_id: ParticipantId,
        keys: KeyPair,
        did: String,
        membership: MembershipCredential,
    },
}

impl CredentialArtifact {
    pub fn participant_id(&self) -> &str {
        match self {
            CredentialArtifact::Centralized { participant_id, .. } => participant_id,
            CredentialArtifact::Decentralized { participant_id, .. } => participant_id,
        }
    }

    pub fn signing_keys(&self) -> &KeyPair {
        match self {
            CredentialArtifact::Centralized { signing_keys, .. } => signing_keys,
            CredentialArtifact::Decentralized { keys, .. } => keys,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Wallet {
    holdings: BTreeMap<SpaceId, CredentialArtifact>,
}

impl Wallet {
    pub fn holding(&self, space_id: &str) -> Option<&CredentialArtifact> {
        self.holdings.get(space_id)
    }

    pub fn holding_mut(&mut self, space_id: &str) -> Option<&mut CredentialArtifact> {
        self.holdings.get_mut(space_id)
    }

    pub fn insert(&mut self, space_id: &str, artifact: CredentialArtifact) {
        self.holdings.insert(space_id.to_string(), artifact);
    }

    pub fn spaces(&self) -> impl Iterator<Item = &SpaceId> {
        self.holdings.keys()
    }

    pub fn is_dual_stack(&self) -> bool {
        self.holdings.len() >= 2
    }

    pub fn is_empty(&self) -> bool {
        self.holdings.is_empty()
    }

    pub fn participant_in(&self, space_id: &str) -> Option<&str> {
        self.holding(space_id).map(|h| h.participant_id())
    }

    pub fn signing_keys_in(&self, space_id: &str) -> Option<&KeyPair> {
        self.holding(space_id).map(|h| h.signing_keys())
    }

    pub fn space_of_participant(&self, participant_id: &str) -> Option<SpaceId> {
        self.holdings
            .iter()
            .find(|(_, h)| h.participant_id() == participant_id)
            .map(|(space, _)| space.clone())
    }
}

// ---------------------------------------------------------------------------
// connector state
// ---------------------------------------------------------------------------

/// Lifecycle phases in process order. A connector's phase is its
/// high-water mark; it never moves backwards.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize,
)]
#[serde(rename_all = "kebab-case")]
pub enum Phase {
    Idle,
    Onboarded,
    Planned,
    Discovered,
    Contracted,
    Transferred,
    Paid,
    Verified,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConnectorState {
    pub phase: Phase,
    pub participant_id: ParticipantId,
    pub home_space: SpaceId,
    pub event_trace: Vec<EventRecord>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProtocolKind {
    IntrospectToken,
    VerifyPresentation,
}

/// How this connector verifies counterparts: which proof protocols it
/// accepts and which foreign frameworks it recognizes beyond its own
/// space's configuration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerificationPolicy {
    pub home_space: SpaceId,
    pub accepted_protocols: Vec<ProtocolKind>,
    pub recognized_foreign: BTreeSet<SpaceId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Connector {
    pub connector_id: String,
    pub state: ConnectorState,
    pub wallet: Wallet,
    pub policy: VerificationPolicy,
    pub local_logs: Vec<TransferLog>,
}

impl Connector {
    pub fn new(connector_id: &str, participant_id: &str, home_space: &str) -> Self {
        Self {
            connector_id: connector_id.to_string(),
            state: ConnectorState {
                phase: Phase::Idle,
                participant_id: participant_id.to_string(),
                home_space: home_space.to_string(),
                event_trace: Vec::new(),
            },
            wallet: Wallet::default(),
            policy: VerificationPolicy {
                home_space: home_space.to_string(),
                accepted_protocols: vec![
                    ProtocolKind::IntrospectToken,
                    ProtocolKind::VerifyPresentation,
                ],
                recognized_foreign: BTreeSet::new(),
            },
            local_logs: Vec::new(),
        }
    }

    /// Move the phase forward (never backward) and trace the advance.
    pub fn advance(&mut self, phase: Phase, now: SimTime) {
        if phase > self.state.phase {
            self.state.phase = phase;
            self.state.event_trace.push(EventRecord {
                at: now,
                actor: self.connector_id.clone(),
                event: "phase".into(),
                outcome: format!("{phase:?}").to_lowercase(),
            });
        }
    }
}

// ---------------------------------------------------------------------------
// counterpart verification
// ---------------------------------------------------------------------------

/// Proof a counterpart offers: a bearer token or a credential presentation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum CounterpartProof {
    Token(SignedToken),
    Presentation(Presentation),
}

/// Challenge a verifier hands out before accepting a presentation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Challenge {
    pub audience: String,
    pub nonce: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum RejectReason {
    UnrecognizedFramework,
    ProtocolNotAccepted,
    UnknownIssuerSpace,
    UnverifiableProof,
    Token(TokenStatus),
    Presentation(PresentationVerdict),
}

impl RejectReason {
    pub fn code(&self) -> String {
        match self {
            RejectReason::UnrecognizedFramework => "unrecognized-framework".into(),
            RejectReason::ProtocolNotAccepted => "protocol-not-accepted".into(),
            RejectReason::UnknownIssuerSpace => "unknown-issuer-space".into(),
            RejectReason::UnverifiableProof => "unverifiable-proof".into(),
            RejectReason::Token(status) => match status {
                TokenStatus::Active => "active".into(),
                TokenStatus::Expired => "expired".into(),
                TokenStatus::Unknown => "unknown".into(),
                TokenStatus::BadSignature => "bad-signature".into(),
            },
            RejectReason::Presentation(verdict) => match verdict {
                PresentationVerdict::Valid => "valid".into(),
                PresentationVerdict::Revoked => "revoked".into(),
                PresentationVerdict::BadIssuerSignature => "bad-issuer-signature".into(),
                PresentationVerdict::BadHolderProof => "bad-holder-proof".into(),
                PresentationVerdict::AudienceMismatch => "audience-mismatch".into(),
                PresentationVerdict::NonceMismatch => "nonce-mismatch".into(),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum CounterpartDecision {
    Accepted(ProtocolKind),
    Rejected(RejectReason),
}

/// Spaces whose trust framework this verifier accepts: every space it is
/// onboarded to, its own extra recognition set, and the recognition sets
/// those spaces configure.
fn accepted_spaces(world: &World, verifier: &Connector) -> BTreeSet<SpaceId> {
    let mut accepted: BTreeSet<SpaceId> = verifier.wallet.spaces().cloned().collect();
    accepted.insert(verifier.policy.home_space.clone());
    accepted.extend(verifier.policy.recognized_foreign.iter().cloned());
    for space_id in verifier.wallet.spaces() {
        if let Ok(state) = world.space(space_id) {
            accepted.extend(
                state
                    .definition
                    .recognized_foreign_frameworks
                    .iter()
                    .cloned(),
            );
        }
    }
    accepted
}

/// Verify a counterpart's proof. Tokens are introspected at the issuing
/// space's identity provider; presentations are verified locally against
/// the issuing space's registry — the issuer is not contacted.
pub fn verify_counterpart(
    world: &mut World,
    verifier_connector_id: &str,
    proof: &CounterpartProof,
    challenge: &Challenge,
    now: SimTime,
) -> Result<CounterpartDecision, WorldError> {
    let verifier = world.connector(verifier_connector_id)?.clone();
    let accepted = accepted_spaces(world, &verifier);

    let decision = match proof {
        CounterpartProof::Token(token) => {
            if !verifier
                .policy
                .accepted_protocols
                .contains(&ProtocolKind::IntrospectToken)
            {
                CounterpartDecision::Rejected(RejectReason::ProtocolNotAccepted)
            } else if !world.spaces.contains_key(&token.issuer) {
                CounterpartDecision::Rejected(RejectReason::UnknownIssuerSpace)
            } else if !accepted.contains(&token.issuer) {
                CounterpartDecision::Rejected(RejectReason::UnrecognizedFramework)
            } else {
                let state = world.space(&token.issuer)?;
                match &state.authority {
                    SpaceAuthority::Idp(idp) => {
                        let status = idp.introspect(token, now);
                        world.events.record(
                            now,
                            verifier_connector_id,
                            "idp-introspect",
                            &format!("{}:{status:?}", token.issuer),
                        );
                        match status {
                            TokenStatus::Active => {
                                CounterpartDecision::Accepted(ProtocolKind::IntrospectToken)
                            }
                            other => {
                                CounterpartDecision::Rejected(RejectReason::Token(other))
                            }
                        }
                    }
                    SpaceAuthority::Vdr(_) => {
                        CounterpartDecision::Rejected(RejectReason::UnverifiableProof)
                    }
                }
            }
        }
        CounterpartProof::Presentation(presentation) => {
            let issuer_space = presentation.credential.space_id.clone();
            if !verifier
                .policy
                .accepted_protocols
                .contains(&ProtocolKind::VerifyPresentation)
            {
                CounterpartDecision::Rejected(RejectReason::ProtocolNotAccepted)
            } else if !world.spaces.contains_key(&issuer_space) {
                CounterpartDecision::Rejected(RejectReason::UnknownIssuerSpace)
            } else if !accepted.contains(&issuer_space) {
                CounterpartDecision::Rejected(RejectReason::UnrecognizedFramework)
            } else {
                let state = world.space(&issuer_space)?;
                match &state.authority {
                    SpaceAuthority::Vdr(vdr) => {
                        let verdict = verify_presentation(
                            &challenge.audience,
                            presentation,
                            vdr,
                            &challenge.nonce,
                            now,
                        );
                        world.events.record(
                            now,
                            verifier_connector_id,
                            "verify-presentation",
                            &format!("{issuer_space}:{verdict:?}"),
                        );
                        match verdict {
                            PresentationVerdict::Valid => {
                                CounterpartDecision::Accepted(ProtocolKind::VerifyPresentation)
                            }
                            other => {
                                CounterpartDecision::Rejected(RejectReason::Presentation(other))
                            }
                        }
                    }
                    SpaceAuthority::Idp(_) => {
                        CounterpartDecision::Rejected(RejectReason::UnverifiableProof)
                    }
                }
            }
        }
    };

    let outcome = match &decision {
        CounterpartDecision::Accepted(protocol) => format!("accepted:{protocol:?}"),
        CounterpartDecision::Rejected(reason) => format!("rejected:{}", reason.code()),
    };
    world
        .events
        .record(now, verifier_connector_id, "participant.verify", &outcome);
    Ok(decision)
}

/// Pick the credential a consumer presents to a verifier in `target_space`:
/// the holding for that space when the wallet has one (the dual-stack
/// path), otherwise the home-space credential.
pub fn select_proof(
    world: &World,
    consumer_connector_id: &str,
    target_space: &str,
    challenge: &Challenge,
) -> Result<(CounterpartProof, ParticipantId, SpaceId), WorldError> {
    let connector = world.connector(consumer_connector_id)?;
    let (space, holding) = match connector.wallet.holding(target_space) {
        Some(holding) => (target_space.to_string(), holding),
        None => {
            let home = connector.state.home_space.clone();
            let holding =
                connector
                    .wallet
                    .holding(&home)
                    .ok_or_else(|| WorldError::NoHolding {
                        connector: consumer_connector_id.to_string(),
                        space: home.clone(),
                    })?;
            (home, holding)
        }
    };
    let proof = match holding {
        CredentialArtifact::Centralized {
            cached_token: Some(token),
            ..
        } => CounterpartProof::Token(token.clone()),
        CredentialArtifact::Centralized {
            cached_token: None, ..
        } => {
            return Err(WorldError::NoCachedToken(
                consumer_connector_id.to_string(),
            ))
        }
        CredentialArtifact::Decentralized {
            keys, membership, ..
        } => CounterpartProof::Presentation(crate::identity::present(
            membership,
            keys,
            &challenge.audience,
            &challenge.nonce,
        )?),
    };
    Ok((proof, holding.participant_id().to_string(), space))
}

// ---------------------------------------------------------------------------
// discovery
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiscoveryQuery {
    /// Space to search; the consumer's home space when absent.
    pub space: Option<SpaceId>,
    pub theme: Option<String>,
    pub publisher: Option<ParticipantId>,
    pub model_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscoveredRecord {
    pub record: CatalogRecord,
    pub source_space: SpaceId,
    pub warnings: Vec<ConversionWarning>,
}

/// Search a catalog. Cross-space queries convert results into the
/// consumer's home-space shape and surface the conversion warnings.
pub fn discover(
    world: &mut World,
    consumer_connector_id: &str,
    query: &DiscoveryQuery,
) -> Result<Vec<DiscoveredRecord>, WorldError> {
    let now = world.now();
    let connector = world.connector(consumer_connector_id)?;
    if connector.wallet.is_empty() {
        return Err(WorldError::NoHolding {
            connector: consumer_connector_id.to_string(),
            space: "<any>".into(),
        });
    }
    let home_space = connector.state.home_space.clone();
    let target_space = query.space.clone().unwrap_or_else(|| home_space.clone());

    let matches: Vec<CatalogRecord> = {
        let state = world.space(&target_space)?;
        state
            .catalog
            .list()
            .filter(|record| {
                query
                    .theme
                    .as_ref()
                    .is_none_or(|theme| record.theme.iter().any(|t| t == theme))
                    && query
                        .publisher
                        .as_ref()
                        .is_none_or(|publisher| &record.publisher == publisher)
                    && query
                        .model_id
                        .as_ref()
                        .is_none_or(|model| &record.conforms_to == model)
            })
            .cloned()
            .collect()
    };

    let mut results = Vec::new();
    if target_space == home_space {
        for record in matches {
            results.push(DiscoveredRecord {
                record,
                source_space: target_space.clone(),
                warnings: Vec::new(),
            });
        }
    } else {
        let from_def = world.space(&target_space)?.definition.clone();
        let to_def = world.space(&home_space)?.definition.clone();
        for record in matches {
            let (converted, warnings) =
                catalog_convert(&record, &from_def, &to_def, &world.index);
            results.push(DiscoveredRecord {
                record: converted,
                source_space: target_space.clone(),
                warnings,
            });
        }
    }

    world.events.record(
        now,
        consumer_connector_id,
        "discover",
        &format!("{target_space}:{} records", results.len()),
    );
    let connector = world.connector_mut(consumer_connector_id)?;
    connector.advance(Phase::Discovered, now);
    Ok(results)
}

// ---------------------------------------------------------------------------
// the exchange process
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ContractMode {
    /// Negotiate when the exchange space offers the API and the consumer
    /// can act in that space; conclude externally otherwise.
    Auto,
    Negotiate,
    External,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExchangeOptions {
    pub use_ddp: bool,
    pub use_pms: bool,
    pub contract_mode: ContractMode,
    pub consumer_decision: ConsumerDecision,
    pub usage_terms: BTreeMap<String, String>,
    pub payment_amount: u64,
    /// Corrupt the delivered payload in transit; with a signed package the
    /// receiver's check must catch it.
    pub tamper_payload_in_transit: bool,
}

impl Default for ExchangeOptions {
    fn default() -> Self {
        Self {
            use_ddp: false,
            use_pms: false,
            contract_mode: ContractMode::Auto,
            consumer_decision: ConsumerDecision::Accept,
            usage_terms: BTreeMap::new(),
            payment_amount: 100,
            tamper_payload_in_transit: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PhaseName {
    Planning,
    Discovery,
    Contract,
    Transfer,
    Payment,
    Verification,
}

pub const PHASE_ORDER: [PhaseName; 6] = [
    PhaseName::Planning,
    PhaseName::Discovery,
    PhaseName::Contract,
    PhaseName::Transfer,
    PhaseName::Payment,
    PhaseName::Verification,
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PhaseOutcome {
    Ok,
    Failed,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhaseResult {
    pub phase: PhaseName,
    pub outcome: PhaseOutcome,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error_code: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub warnings: Vec<String>,
}

impl PhaseResult {
    fn ok(phase: PhaseName) -> Self {
        Self {
            phase,
            outcome: PhaseOutcome::Ok,
            error_code: None,
            detail: None,
            warnings: Vec::new(),
        }
    }

    fn failed(phase: PhaseName, code: &str) -> Self {
        Self {
            phase,
            outcome: PhaseOutcome::Failed,
            error_code: Some(code.to_string()),
            detail: None,
            warnings: Vec::new(),
        }
    }

    fn with_detail(mut self, detail: impl Into<String>) -> Self {
        self.detail = Some(detail.into());
        self
    }
}

/// Per-phase outcomes plus the full event trace of one exchange run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExchangeReport {
    pub exchange_id: String,
    pub provider: String,
    pub consumer: String,
    pub dataset_id: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exchange_space: Option<SpaceId>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub contract_id: Option<String>,
    pub phases: Vec<PhaseResult>,
    pub events: Vec<EventRecord>,
}

impl ExchangeReport {
    pub fn phase(&self, name: PhaseName) -> &PhaseResult {
        self.phases
            .iter()
            .find(|p| p.phase == name)
            .expect("all six phases are always reported")
    }

    pub fn all_ok(&self) -> bool {
        self.phases.iter().all(|p| p.outcome == PhaseOutcome::Ok)
    }

    pub fn first_failure(&self) -> Option<&PhaseResult> {
        self.phases.iter().find(|p| p.outcome == PhaseOutcome::Failed)
    }
}

fn endpoint_check_code(check: EndpointCheck) -> &'static str {
    match check {
        EndpointCheck::Ok => "ok",
        EndpointCheck::DomainMismatch => "domain-mismatch",
        EndpointCheck::KeyMismatch => "key-mismatch",
        EndpointCheck::ExpiredCert => "expired-cert",
        EndpointCheck::BadCaSignature => "bad-ca-signature",
    }
}

pub fn provenance_verdict_code(verdict: &ProvenanceVerdict) -> String {
    match verdict {
        ProvenanceVerdict::Ok => "ok".into(),
        ProvenanceVerdict::BrokenLink { hop } => format!("broken-link:{hop}"),
        ProvenanceVerdict::BadSignature { log_id } => format!("bad-signature:{log_id}"),
        ProvenanceVerdict::ActorMismatch { hop } => format!("actor-mismatch:{hop}"),
    }
}

struct PhaseLedger {
    phases: Vec<PhaseResult>,
}

impl PhaseLedger {
    fn new() -> Self {
        Self { phases: Vec::new() }
    }

    fn push(&mut self, result: PhaseResult) -> bool {
        let ok = result.outcome == PhaseOutcome::Ok;
        self.phases.push(result);
        ok
    }

    /// Mark every phase after the last recorded one as skipped.
    fn finish_skipped(mut self) -> Vec<PhaseResult> {
        for name in PHASE_ORDER.iter().skip(self.phases.len()) {
            self.phases.push(PhaseResult {
                phase: *name,
                outcome: PhaseOutcome::Skipped,
                error_code: None,
                detail: None,
                warnings: Vec::new(),
            });
        }
        self.phases
    }
}

/// A phase that could not complete, carrying its stable error code.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PhaseFailure {
    pub code: String,
    pub detail: Option<String>,
}

impl PhaseFailure {
    fn new(code: impl Into<String>) -> Self {
        Self {
            code: code.into(),
            detail: None,
        }
    }
}

impl std::fmt::Display for PhaseFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match &self.detail {
            Some(detail) => write!(f, "{} ({detail})", self.code),
            None => f.write_str(&self.code),
        }
    }
}

/// Where a provider advertises a dataset: the space, the catalog record,
/// and the provider's participant id there. The provider's home space wins
/// when it published in several.
pub fn resolve_publication(
    world: &World,
    provider_connector_id: &str,
    dataset_id: &str,
) -> Result<Option<(SpaceId, CatalogRecord, ParticipantId)>, WorldError> {
    let provider = world.connector(provider_connector_id)?;
    if !world.datasets.contains_key(dataset_id) {
        return Ok(None);
    }
    let mut candidate_spaces: Vec<SpaceId> = provider.wallet.spaces().cloned().collect();
    let home = provider.state.home_space.clone();
    candidate_spaces.sort_by_key(|s| (s != &home, s.clone()));
    for space_id in candidate_spaces {
        let pid = provider
            .wallet
            .participant_in(&space_id)
            .expect("holding exists")
            .to_string();
        if let Some(record) = world.records_advertising(&space_id, dataset_id, &pid).first() {
            return Ok(Some((space_id, (*record).clone(), pid)));
        }
    }
    Ok(None)
}

/// Run the contract phase: negotiate over the exchange space's API (after
/// mutual participant verification) or conclude externally through the
/// broker. The concluded contract is stored and, where the space offers it,
/// attested by both parties.
pub fn make_contract(
    world: &mut World,
    provider_connector_id: &str,
    consumer_connector_id: &str,
    dataset_id: &str,
    options: &ExchangeOptions,
) -> Result<Result<Contract, PhaseFailure>, WorldError> {
    let Some((exchange_space, _, provider_pid)) =
        resolve_publication(world, provider_connector_id, dataset_id)?
    else {
        return Ok(Err(PhaseFailure::new("unknown-dataset")));
    };
    let consumer = world.connector(consumer_connector_id)?.clone();
    let consumer_pid = consumer
        .wallet
        .participant_in(&exchange_space)
        .or(consumer.wallet.participant_in(&consumer.state.home_space))
        .ok_or_else(|| WorldError::NoHolding {
            connector: consumer_connector_id.to_string(),
            space: exchange_space.clone(),
        })?
        .to_string();

    let negotiation_offered = world
        .space(&exchange_space)?
        .definition
        .capabilities
        .negotiation_api;
    let consumer_acts_natively = consumer.wallet.holding(&exchange_space).is_some();
    let negotiate = match options.contract_mode {
        ContractMode::Negotiate => true,
        ContractMode::External => false,
        ContractMode::Auto => negotiation_offered && consumer_acts_natively,
    };

    let contract = if negotiate {
        if !negotiation_offered {
            world.events.record(
                world.now(),
                provider_connector_id,
                "negotiate",
                &format!("unsupported:{exchange_space}"),
            );
            return Ok(Err(PhaseFailure::new("negotiation-unsupported")));
        }
        // the negotiation API runs over mutually verified channels
        let consumer_challenge = Challenge {
            audience: provider_pid.clone(),
            nonce: world.draw_nonce(),
        };
        let (consumer_proof, _, _) = select_proof(
            world,
            consumer_connector_id,
            &exchange_space,
            &consumer_challenge,
        )?;
        let now = world.now();
        let decision = verify_counterpart(
            world,
            provider_connector_id,
            &consumer_proof,
            &consumer_challenge,
            now,
        )?;
        if let CounterpartDecision::Rejected(reason) = decision {
            return Ok(Err(PhaseFailure::new(format!(
                "participant-verification-failed/{}",
                reason.code()
            ))));
        }
        let provider_challenge = Challenge {
            audience: consumer_pid.clone(),
            nonce: world.draw_nonce(),
        };
        let (provider_proof, _, _) = select_proof(
            world,
            provider_connector_id,
            &exchange_space,
            &provider_challenge,
        )?;
        let now = world.now();
        let decision = verify_counterpart(
            world,
            consumer_connector_id,
            &provider_proof,
            &provider_challenge,
            now,
        )?;
        if let CounterpartDecision::Rejected(reason) = decision {
            return Ok(Err(PhaseFailure::new(format!(
                "participant-verification-failed/{}",
                reason.code()
            ))));
        }

        let id = world.next_contract_id();
        let mut contract = Contract::proposed(
            &id,
            &provider_pid,
            &consumer_pid,
            dataset_id,
            options.usage_terms.clone(),
        );
        contract
            .resolve(options.consumer_decision)
            .expect("fresh proposal");
        world.events.record(
            world.now(),
            provider_connector_id,
            "negotiate",
            &format!("{id}:{:?}", contract.state).to_lowercase(),
        );
        contract
    } else {
        match world.broker.conclude() {
            Ok(doc_id) => {
                let id = world.next_contract_id();
                world.events.record(
                    world.now(),
                    provider_connector_id,
                    "conclude-external",
                    &format!("{id}:{doc_id}"),
                );
                Contract::externally_concluded(
                    &id,
                    &provider_pid,
                    &consumer_pid,
                    dataset_id,
                    options.usage_terms.clone(),
                    &doc_id,
                )
            }
            Err(_) => {
                world.events.record(
                    world.now(),
                    provider_connector_id,
                    "conclude-external",
                    "broker-unavailable",
                );
                return Ok(Err(PhaseFailure::new("broker-unavailable")));
            }
        }
    };

    let mut contract = contract;
    if contract.is_concluded()
        && world
            .space(&exchange_space)?
            .definition
            .capabilities
            .contract_attestation
    {
        let bytes = contract.attestation_bytes();
        for (connector_id, pid) in [
            (provider_connector_id, contract.provider.clone()),
            (consumer_connector_id, contract.consumer.clone()),
        ] {
            let connector = world.connector(connector_id)?;
            if let Some(space) = connector.wallet.space_of_participant(&pid) {
                let keys = connector.wallet.signing_keys_in(&space).expect("holding");
                contract
                    .attestations
                    .insert(pid.clone(), sign(&keys.private_key, &bytes));
            }
        }
        world.events.record(
            world.now(),
            provider_connector_id,
            "contract-attest",
            &format!(
                "{}:{} parties",
                contract.contract_id,
                contract.attestations.len()
            ),
        );
    }

    world
        .contracts
        .insert(contract.contract_id.clone(), contract.clone());
    world
        .contract_logs
        .entry(contract.contract_id.clone())
        .or_default();
    let now = world.now();
    world
        .connector_mut(provider_connector_id)?
        .advance(Phase::Contracted, now);
    world
        .connector_mut(consumer_connector_id)?
        .advance(Phase::Contracted, now);
    Ok(Ok(contract))
}

/// What a completed transfer hands back.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransferOutcome {
    pub contract_id: String,
    pub payload: crate::trust::Bytes,
    /// Present when the payload went out as a signed distribution package.
    pub package: Option<crate::exchange::DataPackage>,
    pub send_log: TransferLog,
    pub receive_log: TransferLog,
    pub warnings: Vec<String>,
}

/// Run the transfer phase against a concluded contract: resolve and verify
/// the provider's endpoint, verify the consumer's credential proof, deliver
/// the payload (optionally as a signed package), and record the chained
/// send/receive logs, forwarding them to the provenance service when asked.
pub fn perform_transfer(
    world: &mut World,
    provider_connector_id: &str,
    consumer_connector_id: &str,
    contract_id: &str,
    options: &ExchangeOptions,
) -> Result<Result<TransferOutcome, PhaseFailure>, WorldError> {
    let contract = world
        .contracts
        .get(contract_id)
        .ok_or_else(|| WorldError::UnknownContract(contract_id.to_string()))?
        .clone();
    if !contract.is_concluded() {
        return Ok(Err(PhaseFailure::new("contract-not-concluded")));
    }
    let provider = world.connector(provider_connector_id)?.clone();
    let consumer = world.connector(consumer_connector_id)?.clone();
    let provider_pid = contract.provider.clone();
    let exchange_space = provider
        .wallet
        .space_of_participant(&provider_pid)
        .ok_or_else(|| WorldError::NoHolding {
            connector: provider_connector_id.to_string(),
            space: "<provider identity>".into(),
        })?;
    let mut warnings: Vec<String> = Vec::new();

    // endpoint resolution and verification (consumer side)
    let devices: Vec<Device> = {
        let state = world.space(&exchange_space)?;
        resolve_devices(
            &state.registry,
            &SearchKey {
                kind: SearchKeyKind::ParticipantId,
                value: provider_pid.clone(),
            },
        )
        .into_iter()
        .cloned()
        .collect()
    };
    let Some(device) = devices.first() else {
        world.events.record(
            world.now(),
            consumer_connector_id,
            "endpoint.verify",
            "unregistered",
        );
        return Ok(Err(PhaseFailure::new("endpoint-unregistered")));
    };
    let presented_key = world
        .device_keys
        .get(&device.device_id)
        .cloned()
        .unwrap_or_else(|| device.certificate.subject_public_key.clone());
    let consumer_home_trusts = world
        .space(&consumer.state.home_space)?
        .definition
        .trusted_cas
        .clone();
    let ca_key = if consumer_home_trusts.contains(&device.certificate.issuer_ca) {
        world
            .cas
            .get(&device.certificate.issuer_ca)
            .map(|ca| ca.keypair.public_key.clone())
    } else {
        None
    };
    let endpoint_check = match ca_key {
        Some(ca_key) => verify_endpoint(
            &device.certificate,
            &device.endpoint_domain,
            &presented_key,
            &ca_key,
            world.now(),
        ),
        None => EndpointCheck::BadCaSignature,
    };
    world.events.record(
        world.now(),
        consumer_connector_id,
        "endpoint.verify",
        endpoint_check_code(endpoint_check),
    );
    if endpoint_check != EndpointCheck::Ok {
        return Ok(Err(PhaseFailure::new(format!(
            "endpoint-verification-failed/{}",
            endpoint_check_code(endpoint_check)
        ))));
    }

    // participant verification (provider side)
    let challenge = Challenge {
        audience: provider_pid.clone(),
        nonce: world.draw_nonce(),
    };
    let (proof, consumer_acting_pid, consumer_acting_space) =
        select_proof(world, consumer_connector_id, &exchange_space, &challenge)?;
    let now = world.now();
    let decision = verify_counterpart(world, provider_connector_id, &proof, &challenge, now)?;
    if let CounterpartDecision::Rejected(reason) = decision {
        return Ok(Err(PhaseFailure::new(format!(
            "participant-verification-failed/{}",
            reason.code()
        ))));
    }

    // payload delivery, optionally as a signed package
    let dataset = world
        .datasets
        .get(&contract.dataset_id)
        .ok_or_else(|| WorldError::UnknownDataset(contract.dataset_id.clone()))?
        .clone();
    let mut delivered_payload = dataset.payload.0.clone();
    if options.tamper_payload_in_transit && !delivered_payload.is_empty() {
        delivered_payload[0] ^= 0x01;
    }

    let mut delivered_package = None;
    if options.use_ddp {
        let ddp_offered = world
            .space(&exchange_space)?
            .definition
            .capabilities
            .signable_package;
        if !ddp_offered {
            warnings.push("ddp-unavailable".into());
        } else if provider_pid != dataset.owner {
            warnings.push("ddp-skipped-not-creator".into());
        } else {
            let provider_keys = provider
                .wallet
                .signing_keys_in(&exchange_space)
                .expect("provider holding")
                .clone();
            let registered = world
                .resolve_signing_key(&dataset.owner)
                .expect("owner key registered");
            let mut package = package_sign(&dataset, &provider_keys, &registered, world.now())?;
            package.payload.0 = delivered_payload.clone();
            let check = package_verify(&package, &registered);
            let outcome = match check {
                PackageCheck::Ok => "ok",
                PackageCheck::HashMismatch => "hash-mismatch",
                PackageCheck::BadSignature => "bad-signature",
            };
            world
                .events
                .record(world.now(), consumer_connector_id, "package.verify", outcome);
            if check != PackageCheck::Ok {
                return Ok(Err(PhaseFailure::new(format!(
                    "package-verification-failed/{outcome}"
                ))));
            }
            delivered_package = Some(package);
        }
    }

    world.events.record(
        world.now(),
        &contract.contract_id,
        "transfer.delivered",
        &format!("{} bytes", delivered_payload.len()),
    );

    // signed send/receive logs, chained
    let provider_keys = provider
        .wallet
        .signing_keys_in(&exchange_space)
        .expect("provider holding")
        .clone();
    let consumer_keys = world
        .connector(consumer_connector_id)?
        .wallet
        .signing_keys_in(&consumer_acting_space)
        .expect("consumer holding")
        .clone();
    let send_id = world.next_log_id();
    let send_log = build_log(
        &send_id,
        LogKind::Send,
        &contract,
        &provider_pid,
        &consumer_acting_pid,
        world.now(),
        None,
        None,
        &provider_keys,
    );
    let receive_id = world.next_log_id();
    let receive_log = build_log(
        &receive_id,
        LogKind::Receive,
        &contract,
        &consumer_acting_pid,
        &provider_pid,
        world.now(),
        Some(send_log.log_hash()),
        None,
        &consumer_keys,
    );

    let logs = world
        .contract_logs
        .entry(contract.contract_id.clone())
        .or_default();
    logs.push(send_log.clone());
    logs.push(receive_log.clone());
    world
        .connector_mut(provider_connector_id)?
        .local_logs
        .push(send_log.clone());
    let consumer_conn = world.connector_mut(consumer_connector_id)?;
    consumer_conn.local_logs.push(send_log.clone());
    consumer_conn.local_logs.push(receive_log.clone());
    world
        .holders
        .entry(contract.dataset_id.clone())
        .or_default()
        .insert(consumer_connector_id.to_string());

    let pms_available = world.space(&exchange_space)?.pms.is_some();
    if options.use_pms {
        if pms_available {
            world.pms_ingest(&exchange_space, send_log.clone())?;
            world.pms_ingest(&exchange_space, receive_log.clone())?;
            world.events.record(
                world.now(),
                &contract.contract_id,
                "pms-ingest",
                &format!("{send_id},{receive_id}"),
            );
        } else {
            warnings.push("pms-unavailable".into());
        }
    }

    let now = world.now();
    world
        .connector_mut(provider_connector_id)?
        .advance(Phase::Transferred, now);
    world
        .connector_mut(consumer_connector_id)?
        .advance(Phase::Transferred, now);
    Ok(Ok(TransferOutcome {
        contract_id: contract.contract_id.clone(),
        payload: crate::trust::Bytes(delivered_payload),
        package: delivered_package,
        send_log,
        receive_log,
        warnings,
    }))
}

/// Run the verification phase: recompute the contract's local log chain and,
/// when the provenance service was used, verify the reconstructed
/// dataset-wide chain too. Returns a human-readable detail on success.
pub fn verify_fulfilment(
    world: &mut World,
    contract_id: &str,
    use_pms: bool,
) -> Result<Result<String, PhaseFailure>, WorldError> {
    let contract = world
        .contracts
        .get(contract_id)
        .ok_or_else(|| WorldError::UnknownContract(contract_id.to_string()))?
        .clone();
    let logs = world
        .contract_logs
        .get(contract_id)
        .cloned()
        .unwrap_or_default();
    let local_check = verify_exchange_chain(&logs, world.key_resolver());
    world.events.record(
        world.now(),
        contract_id,
        "verify.local-chain",
        &format!("{local_check:?}").to_lowercase(),
    );
    if local_check != ChainCheck::Ok {
        return Ok(Err(PhaseFailure::new(
            format!("log-chain-broken/{local_check:?}").to_lowercase(),
        )));
    }
    let mut detail = format!("local-logs={}", logs.len());

    if use_pms {
        let provider_space = world
            .connectors
            .values()
            .find_map(|c| c.wallet.space_of_participant(&contract.provider));
        if let Some(space_id) = provider_space {
            if world.space(&space_id)?.pms.is_some() {
                let chain = world.pms_chain(&space_id, &contract.dataset_id)?;
                let verdict = world.pms_verify(&space_id, &chain)?;
                world.events.record(
                    world.now(),
                    contract_id,
                    "verify.provenance",
                    &provenance_verdict_code(&verdict),
                );
                if verdict != ProvenanceVerdict::Ok {
                    return Ok(Err(PhaseFailure::new(format!(
                        "provenance-verification-failed/{}",
                        provenance_verdict_code(&verdict)
                    ))));
                }
                detail.push_str(&format!(" pms-hops={}", chain.hops.len()));
            }
        }
    }
    Ok(Ok(detail))
}

/// Run the full process — discovery, contract, transfer, payment,
/// verification — between two onboarded connectors for one published
/// dataset. Planning is checked as a precondition phase: the dataset must
/// exist and be advertised by the provider. Per-phase failures land in the
/// report and skip the remaining phases.
pub fn run_exchange(
    world: &mut World,
    provider_connector_id: &str,
    consumer_connector_id: &str,
    dataset_id: &str,
    options: &ExchangeOptions,
) -> Result<ExchangeReport, WorldError> {
    world.connector(provider_connector_id)?;
    world.connector(consumer_connector_id)?;
    let exchange_id = world.next_exchange_id();
    let events_mark = world.events.len();
    let started = world.now();
    world.events.record(
        started,
        &exchange_id,
        "exchange.start",
        &format!("{provider_connector_id}->{consumer_connector_id}:{dataset_id}"),
    );

    let mut ledger = PhaseLedger::new();
    let mut exchange_space: Option<SpaceId> = None;
    let mut contract_id: Option<String> = None;

    'phases: {
        // --- planning ---
        let provider = world.connector(provider_connector_id)?.clone();
        let consumer = world.connector(consumer_connector_id)?.clone();
        if provider.wallet.is_empty() || consumer.wallet.is_empty() {
            ledger.push(PhaseResult::failed(PhaseName::Planning, "not-onboarded"));
            break 'phases;
        }
        if !world.datasets.contains_key(dataset_id) {
            ledger.push(PhaseResult::failed(PhaseName::Planning, "unknown-dataset"));
            break 'phases;
        }
        let Some((space, record, provider_pid)) =
            resolve_publication(world, provider_connector_id, dataset_id)?
        else {
            ledger.push(PhaseResult::failed(PhaseName::Planning, "not-published"));
            break 'phases;
        };
        exchange_space = Some(space.clone());
        ledger.push(
            PhaseResult::ok(PhaseName::Planning)
                .with_detail(format!("space={space} record={}", record.record_id)),
        );

        // --- discovery ---
        let discovered = discover(
            world,
            consumer_connector_id,
            &DiscoveryQuery {
                space: Some(space.clone()),
                publisher: Some(provider_pid.clone()),
                theme: None,
                model_id: None,
            },
        )?;
        match discovered
            .iter()
            .find(|d| d.record.record_id == record.record_id)
        {
            Some(found) => {
                let mut result = PhaseResult::ok(PhaseName::Discovery)
                    .with_detail(format!("record={}", found.record.record_id));
                result.warnings = found.warnings.iter().map(|w| w.to_string()).collect();
                ledger.push(result);
            }
            None => {
                ledger.push(PhaseResult::failed(PhaseName::Discovery, "not-found"));
                break 'phases;
            }
        }

        // --- contract ---
        let contract = match make_contract(
            world,
            provider_connector_id,
            consumer_connector_id,
            dataset_id,
            options,
        )? {
            Ok(contract) => contract,
            Err(failure) => {
                ledger.push(PhaseResult::failed(PhaseName::Contract, &failure.code));
                break 'phases;
            }
        };
        contract_id = Some(contract.contract_id.clone());
        ledger.push(
            PhaseResult::ok(PhaseName::Contract)
                .with_detail(format!("{:?}", contract.state).to_lowercase()),
        );

        // --- transfer ---
        let outcome = match perform_transfer(
            world,
            provider_connector_id,
            consumer_connector_id,
            &contract.contract_id,
            options,
        )? {
            Ok(outcome) => outcome,
            Err(failure) => {
                ledger.push(PhaseResult::failed(PhaseName::Transfer, &failure.code));
                break 'phases;
            }
        };
        let mut transfer_result = PhaseResult::ok(PhaseName::Transfer).with_detail(format!(
            "logs={},{}",
            outcome.send_log.log_id, outcome.receive_log.log_id
        ));
        transfer_result.warnings = outcome.warnings.clone();
        ledger.push(transfer_result);

        // --- payment ---
        match world.record_payment(
            consumer_connector_id,
            &contract.contract_id,
            options.payment_amount,
        ) {
            Ok(payment) => {
                let now = world.now();
                world
                    .connector_mut(provider_connector_id)?
                    .advance(Phase::Paid, now);
                ledger.push(PhaseResult::ok(PhaseName::Payment).with_detail(format!(
                    "log={} amount={}",
                    payment.log_id, options.payment_amount
                )));
            }
            Err(e) => {
                ledger.push(PhaseResult::failed(PhaseName::Payment, &error_code_of(&e)));
                break 'phases;
            }
        }

        // --- verification ---
        match verify_fulfilment(world, &contract.contract_id, options.use_pms)? {
            Ok(detail) => {
                let now = world.now();
                world
                    .connector_mut(provider_connector_id)?
                    .advance(Phase::Verified, now);
                world
                    .connector_mut(consumer_connector_id)?
                    .advance(Phase::Verified, now);
                ledger.push(PhaseResult::ok(PhaseName::Verification).with_detail(detail));
            }
            Err(failure) => {
                ledger.push(PhaseResult::failed(PhaseName::Verification, &failure.code));
                break 'phases;
            }
        }
    }

    let report = ExchangeReport {
        exchange_id: exchange_id.clone(),
        provider: provider_connector_id.to_string(),
        consumer: consumer_connector_id.to_string(),
        dataset_id: dataset_id.to_string(),
        exchange_space,
        contract_id,
        phases: ledger.finish_skipped(),
        events: world.events.since(events_mark).to_vec(),
    };
    let outcome = match report.first_failure() {
        None => "ok".to_string(),
        Some(failure) => format!(
            "failed:{:?}:{}",
            failure.phase,
            failure.error_code.as_deref().unwrap_or("-")
        )
        .to_lowercase(),
    };
    world
        .events
        .record(world.now(), &exchange_id, "exchange.end", &outcome);
    Ok(report)
}

fn error_code_of(e: &WorldError) -> String {
    match e {
        WorldError::Exchange(crate::exchange::ExchangeError::OrderViolation) => {
            "order-violation".into()
        }
        WorldError::Exchange(crate::exchange::ExchangeError::ContractNotConcluded) => {
            "contract-not-concluded".into()
        }
        other => format!("{other}"),
    }
}
