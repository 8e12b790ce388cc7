//! Onboarding, per-space participant registry, device registration with the
//! endpoint resolver, and the simulated certificate authority.
//!
//! A space's "specific standards" are just its configured rule list; the
//! clearing house runs the rules it offers, the space runs the rest locally.
//! Device trust is the layer both spaces share: one CA can serve both, and a
//! certificate verifies the same way no matter which space checks it.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::identity::{
    clearing_house_validate, evaluate_rule, ClearingHouse, IdentityError, IdentityProvider,
    OrgApplication, PasswordCredential, RuleContext, ValidationReport, VerifiableDataRegistry,
};
use crate::trust::{
    did_for, sign, verify, Bytes, DidDocument, EndpointCertificate, KeyPair, MembershipCredential,
    ParticipantId, PublicKey, Signature, SimTime, SpaceId, ValidationLevel,
};

pub type DeviceId = String;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RegistryError {
    #[error("validation failed for rules: {}", .0.join(", "))]
    ValidationFailed(Vec<String>),
    #[error("participant {0} already applied to this space")]
    DuplicateApplication(ParticipantId),
    #[error("credential request does not match the space's trust model")]
    CredentialKindMismatch,
    #[error("participant {0} is not active")]
    OwnerNotActive(ParticipantId),
    #[error("certificate issuance failed: {0}")]
    CertificateIssuanceFailed(String),
    #[error("domain is not well formed: {0}")]
    BadDomain(String),
    #[error("unknown device {0}")]
    UnknownDevice(DeviceId),
    #[error(transparent)]
    Identity(#[from] IdentityError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrustModel {
    Centralized,
    Decentralized,
}

/// Platform functions a space may or may not offer. The gap report probes
/// these by exercising them, so every capability is backed by a real
/// mechanism somewhere in the simulator.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpaceCapabilities {
    pub negotiation_api: bool,
    pub signable_package: bool,
    pub provenance_service: bool,
    pub catalog_signing: bool,
    pub contract_attestation: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SearchKeyKind {
    ParticipantId,
    ConnectorId,
}

/// Static definition of one space: trust model, validation policy, platform
/// capabilities, and recognition sets. Loaded from the harness config and
/// fixed for the space's lifetime.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpaceDefinition {
    pub space_id: SpaceId,
    #[serde(default)]
    pub display_name: String,
    pub trust_model: TrustModel,
    pub validation_policy: Vec<String>,
    #[serde(default)]
    pub country_allowlist: Vec<String>,
    #[serde(default)]
    pub recognized_clearing_houses: BTreeSet<String>,
    #[serde(default)]
    pub recognized_foreign_frameworks: BTreeSet<SpaceId>,
    #[serde(default = "default_token_ttl")]
    pub token_ttl_seconds: SimTime,
    #[serde(default)]
    pub capabilities: SpaceCapabilities,
    #[serde(default = "default_search_keys")]
    pub resolver_search_keys: Vec<SearchKeyKind>,
    /// Catalog extension keys this space's tooling understands; foreign
    /// extensions are dropped during conversion.
    #[serde(default)]
    pub catalog_extension_keys: BTreeSet<String>,
    #[serde(default = "default_issuing_ca")]
    pub issuing_ca: String,
    #[serde(default = "default_trusted_cas")]
    pub trusted_cas: BTreeSet<String>,
}

fn default_token_ttl() -> SimTime {
    3600
}

fn default_search_keys() -> Vec<SearchKeyKind> {
    vec![SearchKeyKind::ParticipantId, SearchKeyKind::ConnectorId]
}

fn default_issuing_ca() -> String {
    "root-ca".to_string()
}

fn default_trusted_cas() -> BTreeSet<String> {
    ["root-ca".to_string()].into()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ParticipantStatus {
    Applied,
    Validated,
    Active,
    Rejected,
}

/// Onboarded (or rejected) organization account, bound to one space.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Participant {
    pub participant_id: ParticipantId,
    pub legal_name: String,
    pub country: String,
    pub lei: Option<String>,
    pub space_id: SpaceId,
    pub status: ParticipantStatus,
    pub credential_ref: Option<String>,
}

/// Server + endpoint a connector runs on, with its CA-issued certificate.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Device {
    pub device_id: DeviceId,
    pub owner: ParticipantId,
    pub endpoint_domain: String,
    pub certificate: EndpointCertificate,
    pub resolver_registered: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SearchKey {
    pub kind: SearchKeyKind,
    pub value: String,
}

/// Space-operated directory from search keys to validated devices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EndpointResolver {
    pub space_id: SpaceId,
    pub entries: BTreeMap<SearchKey, BTreeSet<DeviceId>>,
}

impl EndpointResolver {
    pub fn new(space_id: SpaceId) -> Self {
        Self {
            space_id,
            entries: BTreeMap::new(),
        }
    }

    fn add(&mut self, key: SearchKey, device_id: &str) {
        self.entries
            .entry(key)
            .or_default()
            .insert(device_id.to_string());
    }
}

// ---------------------------------------------------------------------------
// certificate authority
// ---------------------------------------------------------------------------

/// External CA applying common standards regardless of space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulatedCa {
    pub ca_id: String,
    pub keypair: KeyPair,
    pub certificate_ttl: SimTime,
}

fn domain_is_well_formed(domain: &str) -> bool {
    !domain.is_empty()
        && domain.split('.').all(|label| {
            !label.is_empty()
                && label
                    .bytes()
                    .all(|b| b.is_ascii_alphanumeric() || b == b'-')
        })
}

/// Issue an endpoint certificate binding `domain` to `subject_public_key`.
pub fn ca_issue(
    ca: &SimulatedCa,
    domain: &str,
    subject_public_key: &PublicKey,
    level: ValidationLevel,
    now: SimTime,
) -> Result<EndpointCertificate, RegistryError> {
    if !domain_is_well_formed(domain) {
        return Err(RegistryError::BadDomain(domain.to_string()));
    }
    let mut cert = EndpointCertificate {
        domain: domain.to_string(),
        subject_public_key: subject_public_key.clone(),
        validation_level: level,
        issuer_ca: ca.ca_id.clone(),
        not_after: now + ca.certificate_ttl,
        signature: Signature {
            signer_key_id: String::new(),
            algorithm_label: String::new(),
            value: Bytes(Vec::new()),
        },
    };
    cert.signature = sign(&ca.keypair.private_key, &cert.signing_bytes());
    Ok(cert)
}

/// Endpoint verification outcome; checks run in this order: domain, key,
/// expiry, CA signature. Certificates are valid through `not_after`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EndpointCheck {
    Ok,
    DomainMismatch,
    KeyMismatch,
    ExpiredCert,
    BadCaSignature,
}

pub fn verify_endpoint(
    certificate: &EndpointCertificate,
    claimed_domain: &str,
    presented_public_key: &PublicKey,
    ca_public_key: &PublicKey,
    now: SimTime,
) -> EndpointCheck {
    if certificate.domain != claimed_domain {
        return EndpointCheck::DomainMismatch;
    }
    if &certificate.subject_public_key != presented_public_key {
        return EndpointCheck::KeyMismatch;
    }
    if now > certificate.not_after {
        return EndpointCheck::ExpiredCert;
    }
    if !verify(
        ca_public_key,
        &certificate.signing_bytes(),
        &certificate.signature,
    ) {
        return EndpointCheck::BadCaSignature;
    }
    EndpointCheck::Ok
}

// ---------------------------------------------------------------------------
// per-space participant registry
// ---------------------------------------------------------------------------

/// Mutable per-space registry state: participants, their signing keys,
/// devices, and the endpoint resolver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticipantRegistry {
    pub space_id: SpaceId,
    pub participants: BTreeMap<ParticipantId, Participant>,
    pub signing_keys: BTreeMap<ParticipantId, PublicKey>,
    pub devices: BTreeMap<DeviceId, Device>,
    pub resolver: EndpointResolver,
    pub(crate) device_counter: u64,
}

impl ParticipantRegistry {
    pub fn new(space_id: SpaceId) -> Self {
        Self {
            resolver: EndpointResolver::new(space_id.clone()),
            space_id,
            participants: BTreeMap::new(),
            signing_keys: BTreeMap::new(),
            devices: BTreeMap::new(),
            device_counter: 0,
        }
    }

    pub fn participant(&self, id: &str) -> Option<&Participant> {
        self.participants.get(id)
    }

    pub fn is_active(&self, id: &str) -> bool {
        matches!(
            self.participants.get(id).map(|p| p.status),
            Some(ParticipantStatus::Active)
        )
    }

    pub fn signing_key(&self, id: &str) -> Option<&PublicKey> {
        self.signing_keys.get(id)
    }
}

/// The space-side authentication infrastructure, one per space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SpaceAuthority {
    Idp(IdentityProvider),
    Vdr(VerifiableDataRegistry),
}

/// What the applicant submits: organization data plus the credential kind
/// matching the space (a chosen secret, or a self-managed public key).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OnboardRequest {
    pub application: OrgApplication,
    pub credential_request: CredentialRequest,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum CredentialRequest {
    Password {
        secret: String,
        signing_public_key: PublicKey,
    },
    SelfSovereign {
        public_key: PublicKey,
    },
}

impl CredentialRequest {
    fn signing_public_key(&self) -> &PublicKey {
        match self {
            CredentialRequest::Password {
                signing_public_key, ..
            } => signing_public_key,
            CredentialRequest::SelfSovereign { public_key } => public_key,
        }
    }
}

/// Credential handed to a successfully onboarded participant.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum IssuedCredential {
    Password(PasswordCredential),
    Membership {
        did: String,
        credential: MembershipCredential,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OnboardOutcome {
    pub participant: Participant,
    pub credential: IssuedCredential,
    pub validation: ValidationReport,
}

/// Evaluate the space's validation policy. Rules offered by a recognized
/// clearing house run there; the rest run locally with space context. A rule
/// that cannot be evaluated (missing input field) counts as failed.
pub fn validate_application(
    space: &SpaceDefinition,
    clearing_houses: &BTreeMap<String, ClearingHouse>,
    application: &OrgApplication,
) -> Result<ValidationReport, RegistryError> {
    let mut ch_reports: BTreeMap<String, BTreeMap<String, bool>> = BTreeMap::new();
    for ch_id in &space.recognized_clearing_houses {
        if let Some(ch) = clearing_houses.get(ch_id) {
            let report = match clearing_house_validate(ch, application) {
                Ok(report) => report.results.into_iter().collect(),
                Err(IdentityError::MissingField(rule)) => [(rule, false)].into(),
                Err(e) => return Err(e.into()),
            };
            ch_reports.insert(ch_id.clone(), report);
        }
    }

    let ctx = RuleContext {
        country_allowlist: &space.country_allowlist,
    };
    let mut results = Vec::new();
    for rule in &space.validation_policy {
        let delegated = ch_reports
            .values()
            .find_map(|report| report.get(rule).copied());
        let pass = match delegated {
            Some(pass) => pass,
            None => match evaluate_rule(rule, application, &ctx) {
                Ok(pass) => pass,
                Err(IdentityError::MissingField(_)) => false,
                Err(e) => return Err(e.into()),
            },
        };
        results.push((rule.clone(), pass));
    }
    Ok(ValidationReport { results })
}

/// Run the onboarding portal flow: validate the organization, then create
/// the space-appropriate credential. `operator_keypair` is the operating
/// company's signing key, used to sign membership credentials in
/// decentralized spaces (the VDR itself holds only public material).
/// Failed applications are recorded as `Rejected` and return
/// `ValidationFailed`.
pub fn onboard(
    space: &SpaceDefinition,
    authority: &mut SpaceAuthority,
    registry: &mut ParticipantRegistry,
    clearing_houses: &BTreeMap<String, ClearingHouse>,
    operator_keypair: &KeyPair,
    request: &OnboardRequest,
    now: SimTime,
) -> Result<OnboardOutcome, RegistryError> {
    let issuer_keypair = operator_keypair;
    let application = &request.application;
    if registry.participants.contains_key(&application.participant_id) {
        return Err(RegistryError::DuplicateApplication(
            application.participant_id.clone(),
        ));
    }

    let mut participant = Participant {
        participant_id: application.participant_id.clone(),
        legal_name: application.legal_name.clone(),
        country: application.country.clone(),
        lei: application.lei.clone(),
        space_id: space.space_id.clone(),
        status: ParticipantStatus::Applied,
        credential_ref: None,
    };

    let validation = validate_application(space, clearing_houses, application)?;
    if !validation.overall_pass() {
        participant.status = ParticipantStatus::Rejected;
        registry
            .participants
            .insert(participant.participant_id.clone(), participant);
        return Err(RegistryError::ValidationFailed(validation.failed_rules()));
    }
    participant.status = ParticipantStatus::Validated;

    let credential = match (&space.trust_model, &request.credential_request) {
        (TrustModel::Centralized, CredentialRequest::Password { secret, .. }) => {
            let SpaceAuthority::Idp(idp) = authority else {
                return Err(RegistryError::CredentialKindMismatch);
            };
            let password = idp.register(&application.participant_id, secret)?;
            participant.credential_ref =
                Some(format!("idp-account:{}", application.participant_id));
            IssuedCredential::Password(password)
        }
        (TrustModel::Decentralized, CredentialRequest::SelfSovereign { public_key }) => {
            let SpaceAuthority::Vdr(vdr) = authority else {
                return Err(RegistryError::CredentialKindMismatch);
            };
            let did = did_for(public_key);
            vdr.register(DidDocument {
                did: did.clone(),
                public_key: public_key.clone(),
                controller: space.space_id.clone(),
            })
            .map_err(|_| {
                RegistryError::DuplicateApplication(application.participant_id.clone())
            })?;
            let credential = vdr.issue_membership_credential(issuer_keypair, &did, now)?;
            participant.credential_ref = Some(credential.credential_id.clone());
            IssuedCredential::Membership { did, credential }
        }
        _ => return Err(RegistryError::CredentialKindMismatch),
    };

    participant.status = ParticipantStatus::Active;
    registry.signing_keys.insert(
        application.participant_id.clone(),
        request.credential_request.signing_public_key().clone(),
    );
    registry
        .participants
        .insert(participant.participant_id.clone(), participant.clone());

    Ok(OnboardOutcome {
        participant,
        credential,
        validation,
    })
}

/// Register a device for an active participant: the CA issues an Extended
/// Validation certificate and the resolver gains an entry per configured
/// search key.
#[allow(clippy::too_many_arguments)]
pub fn register_device(
    space: &SpaceDefinition,
    registry: &mut ParticipantRegistry,
    ca: &SimulatedCa,
    participant_id: &str,
    connector_id: Option<&str>,
    endpoint_domain: &str,
    device_public_key: &PublicKey,
    now: SimTime,
) -> Result<Device, RegistryError> {
    if !registry.is_active(participant_id) {
        return Err(RegistryError::OwnerNotActive(participant_id.to_string()));
    }
    let certificate = ca_issue(
        ca,
        endpoint_domain,
        device_public_key,
        ValidationLevel::ExtendedValidation,
        now,
    )
    .map_err(|e| RegistryError::CertificateIssuanceFailed(e.to_string()))?;

    registry.device_counter += 1;
    let device_id = format!("dev-{}-{:04}", registry.space_id, registry.device_counter);
    let device = Device {
        device_id: device_id.clone(),
        owner: participant_id.to_string(),
        endpoint_domain: endpoint_domain.to_string(),
        certificate,
        resolver_registered: true,
    };

    for kind in &space.resolver_search_keys {
        let value = match kind {
            SearchKeyKind::ParticipantId => Some(participant_id.to_string()),
            SearchKeyKind::ConnectorId => connector_id.map(str::to_string),
        };
        if let Some(value) = value {
            registry.resolver.add(SearchKey { kind: *kind, value }, &device_id);
        }
    }
    registry.devices.insert(device_id, device.clone());
    Ok(device)
}

/// Drop a device from resolver results. The entry disappears from lookups
/// immediately; the device record stays for audit.
pub fn deregister_device(
    registry: &mut ParticipantRegistry,
    device_id: &str,
) -> Result<(), RegistryError> {
    match registry.devices.get_mut(device_id) {
        Some(device) => {
            device.resolver_registered = false;
            Ok(())
        }
        None => Err(RegistryError::UnknownDevice(device_id.to_string())),
    }
}

/// Resolve validated endpoints for a search key. Only currently registered
/// devices of currently active owners are returned, ordered by device id.
pub fn resolve_endpoint(
    registry: &ParticipantRegistry,
    key: &SearchKey,
) -> Vec<(String, ParticipantId)> {
    let Some(device_ids) = registry.resolver.entries.get(key) else {
        return Vec::new();
    };
    device_ids
        .iter()
        .filter_map(|id| registry.devices.get(id))
        .filter(|d| d.resolver_registered && registry.is_active(&d.owner))
        .map(|d| (d.endpoint_domain.clone(), d.owner.clone()))
        .collect()
}

/// Like [`resolve_endpoint`] but returning the devices themselves, for
/// flows that need the certificate.
pub fn resolve_devices<'a>(
    registry: &'a ParticipantRegistry,
    key: &SearchKey,
) -> Vec<&'a Device> {
    let Some(device_ids) = registry.resolver.entries.get(key) else {
        return Vec::new();
    };
    device_ids
        .iter()
        .filter_map(|id| registry.devices.get(id))
        .filter(|d| d.resolver_registered && registry.is_active(&d.owner))
        .collect()
}
