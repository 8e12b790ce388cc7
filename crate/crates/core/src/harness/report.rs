//! Capability gap matrix: six object rows by (perspective, space) columns.
//!
//! Every cell is computed by a probe that actually exercises the mechanism
//! in a scratch world built from the active configuration — nothing is
//! hardcoded, so flipping a capability flag flips the corresponding cell.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::connector::{
    run_exchange, select_proof, verify_counterpart, Challenge, ContractMode,
    CounterpartDecision, ExchangeOptions, PhaseName, PhaseOutcome, ProtocolKind,
};
use crate::exchange::package_verify;
use crate::identity::OrgApplication;
use crate::registry::{
    resolve_devices, verify_endpoint, EndpointCheck, SearchKey, SearchKeyKind,
};
use crate::semantics::SemanticModel;
use crate::trust::SpaceId;
use crate::world::{CatalogFields, World, WorldError};

use super::config::SimulationConfig;

/// A structurally valid legal-entity identifier for probe applications.
pub const SAMPLE_LEI: &str = "RAND00TESTENTITY0137";

const PROBE_SEED: u64 = 0x9e3779b9;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("probes missing for cells: {}", .0.join(", "))]
    IncompleteProbes(Vec<String>),
    #[error("probe {cell} failed: {reason}")]
    ProbeFailed { cell: String, reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum CellValue {
    Supported { mechanism: String },
    NotAvailable,
}

impl CellValue {
    pub fn is_supported(&self) -> bool {
        matches!(self, CellValue::Supported { .. })
    }
}

pub const GAP_OBJECTS: [&str; 6] = [
    "participant",
    "device",
    "dataset",
    "data-catalog",
    "contract",
    "log",
];

pub const PERSPECTIVES: [&str; 2] = ["p1", "p2"];

/// Probe outcomes keyed by (object row, perspective, space).
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ProbeResults {
    pub cells: BTreeMap<String, CellValue>,
}

impl ProbeResults {
    fn cell_key(object: &str, perspective: &str, space_id: &str) -> String {
        format!("{object}/{perspective}/{space_id}")
    }

    fn set(&mut self, object: &str, perspective: &str, space_id: &str, value: CellValue) {
        self.cells
            .insert(Self::cell_key(object, perspective, space_id), value);
    }

    pub fn get(&self, object: &str, perspective: &str, space_id: &str) -> Option<&CellValue> {
        self.cells.get(&Self::cell_key(object, perspective, space_id))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GapCell {
    pub object: String,
    pub perspective: String,
    pub space_id: SpaceId,
    pub value: CellValue,
}

/// The 6x4 analysis matrix.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GapMatrix {
    pub space_order: Vec<SpaceId>,
    pub cells: Vec<GapCell>,
}

impl GapMatrix {
    pub fn cell(&self, object: &str, perspective: &str, space_id: &str) -> Option<&GapCell> {
        self.cells.iter().find(|c| {
            c.object == object && c.perspective == perspective && c.space_id == space_id
        })
    }
}

// ---------------------------------------------------------------------------
// probe execution
// ---------------------------------------------------------------------------

struct ProbeWorld {
    world: World,
    space_id: String,
}

impl ProbeWorld {
    fn new(config: &SimulationConfig, space_id: &str) -> Self {
        Self {
            world: config.build_world(PROBE_SEED),
            space_id: space_id.to_string(),
        }
    }

    fn application(&self, name: &str) -> OrgApplication {
        let space = self
            .world
            .space(&self.space_id)
            .expect("probe space exists");
        let country = space
            .definition
            .country_allowlist
            .first()
            .cloned()
            .unwrap_or_else(|| "JP".to_string());
        OrgApplication {
            participant_id: format!("org-{name}-{}", self.space_id),
            legal_name: format!("Probe {name} Org"),
            country,
            lei: Some(SAMPLE_LEI.to_string()),
        }
    }

    fn onboard(&mut self, name: &str) -> Result<String, WorldError> {
        let connector_id = format!("probe-{name}-{}", self.space_id);
        let application = self.application(name);
        self.world
            .onboard_connector(&connector_id, &self.space_id, application, None)?;
        Ok(connector_id)
    }

    fn register_probe_model(&mut self) -> Result<String, WorldError> {
        let model_id = "probe-model".to_string();
        self.world.register_model(SemanticModel {
            model_id: model_id.clone(),
            space_id: self.space_id.clone(),
            name: "probe measurement".into(),
            version: 1,
            attributes: vec![("value".into(), "unit".into())],
        })?;
        Ok(model_id)
    }

    fn publish(&mut self, connector_id: &str, dataset_id: &str) -> Result<String, WorldError> {
        let model_id = self.register_probe_model()?;
        self.world.publish_dataset(
            connector_id,
            &self.space_id,
            dataset_id,
            &model_id,
            Some(b"probe-payload".to_vec()),
            CatalogFields {
                title: "Probe dataset".into(),
                description: "Capability probe".into(),
                theme: vec!["probe".into()],
                ..CatalogFields::default()
            },
        )
    }
}

type ProbeFn = fn(&SimulationConfig, &str) -> Result<CellValue, WorldError>;

fn probe_participant_p1(config: &SimulationConfig, space_id: &str) -> Result<CellValue, WorldError> {
    let mut probe = ProbeWorld::new(config, space_id);
    if probe
        .world
        .space(space_id)?
        .definition
        .validation_policy
        .is_empty()
    {
        return Ok(CellValue::NotAvailable);
    }
    probe.onboard("valid")?;
    let invalid = OrgApplication {
        participant_id: format!("org-invalid-{space_id}"),
        legal_name: "  ".into(),
        country: "ZZ-NOWHERE".into(),
        lei: Some("123".into()),
    };
    let rejected = probe
        .world
        .onboard_connector("probe-invalid", space_id, invalid, None)
        .is_err();
    Ok(if rejected {
        CellValue::Supported {
            mechanism: "onboarding-portal".into(),
        }
    } else {
        CellValue::NotAvailable
    })
}

fn probe_participant_p2(config: &SimulationConfig, space_id: &str) -> Result<CellValue, WorldError> {
    let mut probe = ProbeWorld::new(config, space_id);
    let verifier = probe.onboard("verifier")?;
    let subject = probe.onboard("subject")?;
    let verifier_pid = probe
        .world
        .connector(&verifier)?
        .wallet
        .participant_in(space_id)
        .expect("holding")
        .to_string();
    let challenge = Challenge {
        audience: verifier_pid,
        nonce: probe.world.draw_nonce(),
    };
    let (proof, _, _) = select_proof(&probe.world, &subject, space_id, &challenge)?;
    let now = probe.world.now();
    let decision = verify_counterpart(&mut probe.world, &verifier, &proof, &challenge, now)?;
    Ok(match decision {
        CounterpartDecision::Accepted(ProtocolKind::IntrospectToken) => CellValue::Supported {
            mechanism: "oidc-token-introspection".into(),
        },
        CounterpartDecision::Accepted(ProtocolKind::VerifyPresentation) => CellValue::Supported {
            mechanism: "dcp-presentation".into(),
        },
        CounterpartDecision::Rejected(_) => CellValue::NotAvailable,
    })
}

fn probe_device_p1(config: &SimulationConfig, space_id: &str) -> Result<CellValue, WorldError> {
    let mut probe = ProbeWorld::new(config, space_id);
    let owner = probe.onboard("owner")?;
    let device = probe
        .world
        .register_device(&owner, space_id, "probe-device.sim")?;
    let pid = probe
        .world
        .connector(&owner)?
        .wallet
        .participant_in(space_id)
        .expect("holding")
        .to_string();
    let state = probe.world.space(space_id)?;
    let resolved = resolve_devices(
        &state.registry,
        &SearchKey {
            kind: SearchKeyKind::ParticipantId,
            value: pid,
        },
    );
    let registered = resolved.iter().any(|d| d.device_id == device.device_id);
    let ev = device.certificate.validation_level
        == crate::trust::ValidationLevel::ExtendedValidation;
    Ok(if registered && ev {
        CellValue::Supported {
            mechanism: "resolver-registration+ca-ev".into(),
        }
    } else {
        CellValue::NotAvailable
    })
}

fn probe_device_p2(config: &SimulationConfig, space_id: &str) -> Result<CellValue, WorldError> {
    let mut probe = ProbeWorld::new(config, space_id);
    let owner = probe.onboard("owner")?;
    let device = probe
        .world
        .register_device(&owner, space_id, "probe-device.sim")?;
    let ca = probe
        .world
        .cas
        .get(&device.certificate.issuer_ca)
        .expect("issuing CA exists")
        .clone();
    let check = verify_endpoint(
        &device.certificate,
        &device.endpoint_domain,
        &device.certificate.subject_public_key,
        &ca.keypair.public_key,
        probe.world.now(),
    );
    Ok(if check == EndpointCheck::Ok {
        CellValue::Supported {
            mechanism: "endpoint-certificate".into(),
        }
    } else {
        CellValue::NotAvailable
    })
}

fn probe_dataset_p1(config: &SimulationConfig, space_id: &str) -> Result<CellValue, WorldError> {
    let mut probe = ProbeWorld::new(config, space_id);
    let model_id = probe.register_probe_model()?;
    let found = probe
        .world
        .space(space_id)?
        .model_repo
        .contains(&model_id);
    Ok(if found {
        CellValue::Supported {
            mechanism: "model-repository".into(),
        }
    } else {
        CellValue::NotAvailable
    })
}

fn probe_dataset_p2(config: &SimulationConfig, space_id: &str) -> Result<CellValue, WorldError> {
    let mut probe = ProbeWorld::new(config, space_id);
    let owner = probe.onboard("owner")?;
    probe.publish(&owner, "ds-probe")?;
    match probe.world.build_package(&owner, space_id, "ds-probe") {
        Ok(package) => {
            let owner_pid = probe
                .world
                .connector(&owner)?
                .wallet
                .participant_in(space_id)
                .expect("holding")
                .to_string();
            let key = probe
                .world
                .resolve_signing_key(&owner_pid)
                .expect("registered");
            let verified = package_verify(&package, &key) == crate::exchange::PackageCheck::Ok;
            Ok(if verified {
                CellValue::Supported {
                    mechanism: "signable-data-package".into(),
                }
            } else {
                CellValue::NotAvailable
            })
        }
        Err(WorldError::CapabilityUnavailable { .. }) => Ok(CellValue::NotAvailable),
        Err(e) => Err(e),
    }
}

fn probe_catalog_p1(config: &SimulationConfig, space_id: &str) -> Result<CellValue, WorldError> {
    let mut probe = ProbeWorld::new(config, space_id);
    let owner = probe.onboard("owner")?;
    probe.publish(&owner, "ds-probe")?;
    // the creation function must reject records missing principal properties
    let rejected = probe
        .world
        .publish_dataset(
            &owner,
            space_id,
            "ds-probe-bad",
            "probe-model",
            Some(b"x".to_vec()),
            CatalogFields {
                title: String::new(),
                description: "missing title".into(),
                theme: vec!["probe".into()],
                ..CatalogFields::default()
            },
        )
        .is_err();
    Ok(if rejected {
        CellValue::Supported {
            mechanism: "dcat-v2-restriction".into(),
        }
    } else {
        CellValue::NotAvailable
    })
}

fn probe_catalog_p2(config: &SimulationConfig, space_id: &str) -> Result<CellValue, WorldError> {
    let mut probe = ProbeWorld::new(config, space_id);
    let owner = probe.onboard("owner")?;
    let record_id = probe.publish(&owner, "ds-probe")?;
    match probe.world.verify_catalog_signature(space_id, &record_id) {
        Ok(true) => Ok(CellValue::Supported {
            mechanism: "signed-catalog-record".into(),
        }),
        Ok(false) => Ok(CellValue::NotAvailable),
        Err(WorldError::CapabilityUnavailable { .. }) => Ok(CellValue::NotAvailable),
        Err(e) => Err(e),
    }
}

fn exchange_in_space(
    probe: &mut ProbeWorld,
    contract_mode: ContractMode,
    use_pms: bool,
) -> Result<crate::connector::ExchangeReport, WorldError> {
    let provider = probe.onboard("provider")?;
    let consumer = probe.onboard("consumer")?;
    probe
        .world
        .register_device(&provider, &probe.space_id, "probe-provider.sim")?;
    probe.publish(&provider, "ds-probe")?;
    run_exchange(
        &mut probe.world,
        &provider,
        &consumer,
        "ds-probe",
        &ExchangeOptions {
            contract_mode,
            use_pms,
            ..ExchangeOptions::default()
        },
    )
}

fn probe_contract_p1(config: &SimulationConfig, space_id: &str) -> Result<CellValue, WorldError> {
    let mut probe = ProbeWorld::new(config, space_id);
    let report = exchange_in_space(&mut probe, ContractMode::Negotiate, false)?;
    let contract_phase = report.phase(PhaseName::Contract);
    Ok(
        if contract_phase.outcome == PhaseOutcome::Ok
            && contract_phase.detail.as_deref() == Some("agreed")
        {
            CellValue::Supported {
                mechanism: "negotiation-api".into(),
            }
        } else {
            CellValue::NotAvailable
        },
    )
}

fn probe_contract_p2(config: &SimulationConfig, space_id: &str) -> Result<CellValue, WorldError> {
    let mut probe = ProbeWorld::new(config, space_id);
    let report = exchange_in_space(&mut probe, ContractMode::Auto, false)?;
    let Some(contract_id) = report.contract_id.clone() else {
        return Ok(CellValue::NotAvailable);
    };
    match probe.world.verify_contract_attestation(space_id, &contract_id) {
        Ok(true) => Ok(CellValue::Supported {
            mechanism: "contract-attestation".into(),
        }),
        Ok(false) => Ok(CellValue::NotAvailable),
        Err(WorldError::CapabilityUnavailable { .. }) => Ok(CellValue::NotAvailable),
        Err(e) => Err(e),
    }
}

fn probe_log_p1(config: &SimulationConfig, space_id: &str) -> Result<CellValue, WorldError> {
    let mut probe = ProbeWorld::new(config, space_id);
    let report = exchange_in_space(&mut probe, ContractMode::Auto, true)?;
    if !report.all_ok() {
        return Ok(CellValue::NotAvailable);
    }
    match probe.world.pms_chain(space_id, "ds-probe") {
        Ok(chain) if !chain.hops.is_empty() => Ok(CellValue::Supported {
            mechanism: "provenance-service".into(),
        }),
        Ok(_) => Ok(CellValue::NotAvailable),
        Err(WorldError::CapabilityUnavailable { .. }) => Ok(CellValue::NotAvailable),
        Err(e) => Err(e),
    }
}

fn probe_log_p2(config: &SimulationConfig, space_id: &str) -> Result<CellValue, WorldError> {
    let mut probe = ProbeWorld::new(config, space_id);
    exchange_in_space(&mut probe, ContractMode::Auto, true)?;
    match probe.world.pms_chain(space_id, "ds-probe") {
        Ok(chain) => {
            let verdict = probe.world.pms_verify(space_id, &chain)?;
            Ok(if verdict == crate::provenance::ProvenanceVerdict::Ok
                && !chain.hops.is_empty()
            {
                CellValue::Supported {
                    mechanism: "provenance-service".into(),
                }
            } else {
                CellValue::NotAvailable
            })
        }
        Err(WorldError::CapabilityUnavailable { .. }) => Ok(CellValue::NotAvailable),
        Err(e) => Err(e),
    }
}

/// Execute every probe for every configured space.
pub fn run_probes(config: &SimulationConfig) -> Result<ProbeResults, ReportError> {
    let probes: [(&str, &str, ProbeFn); 12] = [
        ("participant", "p1", probe_participant_p1),
        ("participant", "p2", probe_participant_p2),
        ("device", "p1", probe_device_p1),
        ("device", "p2", probe_device_p2),
        ("dataset", "p1", probe_dataset_p1),
        ("dataset", "p2", probe_dataset_p2),
        ("data-catalog", "p1", probe_catalog_p1),
        ("data-catalog", "p2", probe_catalog_p2),
        ("contract", "p1", probe_contract_p1),
        ("contract", "p2", probe_contract_p2),
        ("log", "p1", probe_log_p1),
        ("log", "p2", probe_log_p2),
    ];
    let mut results = ProbeResults::default();
    for space in &config.spaces {
        for (object, perspective, probe) in &probes {
            let value = probe(config, &space.space_id).map_err(|e| ReportError::ProbeFailed {
                cell: ProbeResults::cell_key(object, perspective, &space.space_id),
                reason: e.to_string(),
            })?;
            results.set(object, perspective, &space.space_id, value);
        }
    }
    Ok(results)
}

/// Assemble the matrix from executed probes; every one of the 6x4 cells
/// must be present.
pub fn gap_report(
    config: &SimulationConfig,
    probe_results: &ProbeResults,
) -> Result<GapMatrix, ReportError> {
    let space_order: Vec<SpaceId> = config.spaces.iter().map(|s| s.space_id.clone()).collect();
    let mut cells = Vec::new();
    let mut missing = Vec::new();
    for object in GAP_OBJECTS {
        for perspective in PERSPECTIVES {
            for space_id in &space_order {
                match probe_results.get(object, perspective, space_id) {
                    Some(value) => cells.push(GapCell {
                        object: object.to_string(),
                        perspective: perspective.to_string(),
                        space_id: space_id.clone(),
                        value: value.clone(),
                    }),
                    None => missing.push(ProbeResults::cell_key(object, perspective, space_id)),
                }
            }
        }
    }
    if !missing.is_empty() {
        return Err(ReportError::IncompleteProbes(missing));
    }
    Ok(GapMatrix { space_order, cells })
}

/// Plain-text rendering for the CLI.
pub fn render_gap_matrix(config: &SimulationConfig, matrix: &GapMatrix) -> String {
    let name_of = |space_id: &str| -> String {
        config
            .space(space_id)
            .map(|s| {
                if s.display_name.is_empty() {
                    s.space_id.clone()
                } else {
                    s.display_name.clone()
                }
            })
            .unwrap_or_else(|| space_id.to_string())
    };
    let cell_text = |object: &str, perspective: &str, space: &str| -> String {
        match matrix.cell(object, perspective, space).map(|c| &c.value) {
            Some(CellValue::Supported { mechanism }) => mechanism.clone(),
            Some(CellValue::NotAvailable) => "N/A".into(),
            None => "?".into(),
        }
    };

    let mut columns: Vec<(String, String)> = Vec::new();
    for perspective in PERSPECTIVES {
        for space in &matrix.space_order {
            columns.push((perspective.to_string(), space.clone()));
        }
    }
    let mut header: Vec<String> = vec!["object".into()];
    for (perspective, space) in &columns {
        header.push(format!("{perspective} {}", name_of(space)));
    }
    let mut table: Vec<Vec<String>> = vec![header];
    for object in GAP_OBJECTS {
        let mut row = vec![object.to_string()];
        for (perspective, space) in &columns {
            row.push(cell_text(object, perspective, space));
        }
        table.push(row);
    }

    let widths: Vec<usize> = (0..table[0].len())
        .map(|i| table.iter().map(|row| row[i].len()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for (r, row) in table.iter().enumerate() {
        let line: Vec<String> = row
            .iter()
            .zip(&widths)
            .map(|(cell, w)| format!("{cell:<w$}"))
            .collect();
        out.push_str(line.join(" | ").trim_end());
        out.push('\n');
        if r == 0 {
            let sep: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
            out.push_str(&sep.join("-+-"));
            out.push('\n');
        }
    }
    out
}
