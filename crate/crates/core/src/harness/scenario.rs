//! Declarative scenarios: a setup script, one or more exchange runs with
//! per-phase expectations, optional post steps, and final checks. Scenarios
//! are data, so each shipped case maps one-to-one to a claim about the two
//! platforms, and users can add their own.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::connector::{
    discover, run_exchange, DiscoveryQuery, ExchangeOptions, ExchangeReport, PhaseName,
    PhaseOutcome,
};
use crate::exchange::{build_log, LogKind};
use crate::identity::OrgApplication;
use crate::registry::{resolve_devices, verify_endpoint, EndpointCheck, SearchKey, SearchKeyKind};
use crate::semantics::{IndexEntry, SemanticModel};
use crate::trust::{SimTime, SpaceId};
use crate::world::{CatalogFields, World};

use super::config::SimulationConfig;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read scenario {path}: {reason}")]
    Io { path: String, reason: String },
    #[error("scenario parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("setup step {index} ({step}) failed: {message}")]
    Setup {
        index: usize,
        step: String,
        message: String,
    },
    #[error("exchange {index} failed to run: {message}")]
    Exchange { index: usize, message: String },
    #[error("check {index} failed to run: {message}")]
    Check { index: usize, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "step", rename_all = "snake_case", deny_unknown_fields)]
pub enum Step {
    Onboard {
        connector: String,
        space: SpaceId,
        application: OrgApplication,
        #[serde(default)]
        secret: Option<String>,
    },
    AcquireToken {
        connector: String,
        space: SpaceId,
    },
    AdvanceClock {
        seconds: SimTime,
    },
    RegisterDevice {
        connector: String,
        space: SpaceId,
        endpoint_domain: String,
    },
    DeregisterDevice {
        connector: String,
        space: SpaceId,
    },
    TamperDeviceDomain {
        connector: String,
        space: SpaceId,
        new_domain: String,
    },
    RegisterModel {
        model: SemanticModel,
    },
    IndexAdd {
        entry: IndexEntry,
    },
    /// Run name identification between two spaces' repositories and add
    /// every suggestion at or above the configured threshold.
    IndexSuggestAndAdd {
        space_a: SpaceId,
        space_b: SpaceId,
    },
    PublishDataset {
        connector: String,
        space: SpaceId,
        dataset_id: String,
        model_id: String,
        #[serde(default)]
        payload_text: Option<String>,
        catalog: CatalogFields,
    },
    RevokeCredential {
        connector: String,
        space: SpaceId,
    },
    /// Configure one space to accept proofs rooted in a foreign framework.
    RecognizeForeign {
        space: SpaceId,
        foreign: SpaceId,
    },
    /// Submit a provider's genuine send log plus a receive log whose
    /// counterparty is a lie, signed by the forger itself, to the space's
    /// provenance service.
    ForgeProvenanceLog {
        space: SpaceId,
        contract_id: String,
        claimed_counterparty: String,
    },
}

impl Step {
    fn name(&self) -> &'static str {
        match self {
            Step::Onboard { .. } => "onboard",
            Step::AcquireToken { .. } => "acquire_token",
            Step::AdvanceClock { .. } => "advance_clock",
            Step::RegisterDevice { .. } => "register_device",
            Step::DeregisterDevice { .. } => "deregister_device",
            Step::TamperDeviceDomain { .. } => "tamper_device_domain",
            Step::RegisterModel { .. } => "register_model",
            Step::IndexAdd { .. } => "index_add",
            Step::IndexSuggestAndAdd { .. } => "index_suggest_and_add",
            Step::PublishDataset { .. } => "publish_dataset",
            Step::RevokeCredential { .. } => "revoke_credential",
            Step::RecognizeForeign { .. } => "recognize_foreign",
            Step::ForgeProvenanceLog { .. } => "forge_provenance_log",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Expectation {
    pub phase: PhaseName,
    pub outcome: PhaseOutcome,
    #[serde(default)]
    pub error_code: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExchangeSpec {
    pub provider: String,
    pub consumer: String,
    pub dataset_id: String,
    /// Steps to run right before this exchange, e.g. a middleman
    /// re-publishing a dataset it received in an earlier exchange.
    #[serde(default)]
    pub pre: Vec<Step>,
    #[serde(default)]
    pub options: ExchangeOptions,
    pub expectations: Vec<Expectation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "check", rename_all = "snake_case", deny_unknown_fields)]
pub enum Check {
    /// Reconstruct and verify a dataset's provenance chain. The expected
    /// verdict matches by prefix ("actor-mismatch" matches any hop index).
    Provenance {
        space: SpaceId,
        dataset_id: String,
        #[serde(default)]
        expect_verdict: Option<String>,
        #[serde(default)]
        expect_hops: Option<usize>,
        #[serde(default)]
        expect_gaps: Option<usize>,
    },
    Discovery {
        connector: String,
        query: DiscoveryQuery,
        expect_records: usize,
        #[serde(default)]
        expect_warnings: Vec<String>,
    },
    Wallet {
        connector: String,
        expect_dual_stack: bool,
    },
    /// Verify a provider's endpoint certificate using the trust anchors of
    /// some (possibly different) space.
    Endpoint {
        connector: String,
        space: SpaceId,
        from_space: SpaceId,
        expect: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub scenario_id: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub setup: Vec<Step>,
    #[serde(default)]
    pub exchanges: Vec<ExchangeSpec>,
    #[serde(default)]
    pub post: Vec<Step>,
    #[serde(default)]
    pub checks: Vec<Check>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpectationResult {
    pub subject: String,
    pub expected: String,
    pub actual: String,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioResult {
    pub scenario_id: String,
    pub seed: u64,
    pub passed: bool,
    pub expectation_results: Vec<ExpectationResult>,
    pub exchange_reports: Vec<ExchangeReport>,
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario, ScenarioError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| ScenarioError::Io {
        path: path.display().to_string(),
        reason: e.to_string(),
    })?;
    serde_json::from_str(&text).map_err(|e| ScenarioError::Parse {
        line: e.line(),
        message: e.to_string(),
    })
}

fn apply_step(world: &mut World, index: usize, step: &Step) -> Result<(), ScenarioError> {
    let fail = |message: String| ScenarioError::Setup {
        index,
        step: step.name().to_string(),
        message,
    };
    match step {
        Step::Onboard {
            connector,
            space,
            application,
            secret,
        } => {
            world
                .onboard_connector(connector, space, application.clone(), secret.clone())
                .map_err(|e| fail(e.to_string()))?;
        }
        Step::AcquireToken { connector, space } => {
            world
                .acquire_token(connector, space)
                .map_err(|e| fail(e.to_string()))?;
        }
        Step::AdvanceClock { seconds } => world.advance_clock(*seconds),
        Step::RegisterDevice {
            connector,
            space,
            endpoint_domain,
        } => {
            world
                .register_device(connector, space, endpoint_domain)
                .map_err(|e| fail(e.to_string()))?;
        }
        Step::DeregisterDevice { connector, space } => {
            let devices = world.devices_of(space, connector);
            if devices.is_empty() {
                return Err(fail("no devices registered".into()));
            }
            for device_id in devices {
                world
                    .deregister_device(space, &device_id)
                    .map_err(|e| fail(e.to_string()))?;
            }
        }
        Step::TamperDeviceDomain {
            connector,
            space,
            new_domain,
        } => {
            let devices = world.devices_of(space, connector);
            if devices.is_empty() {
                return Err(fail("no devices registered".into()));
            }
            for device_id in devices {
                world
                    .tamper_device_domain(space, &device_id, new_domain)
                    .map_err(|e| fail(e.to_string()))?;
            }
        }
        Step::RegisterModel { model } => {
            world
                .register_model(model.clone())
                .map_err(|e| fail(e.to_string()))?;
        }
        Step::IndexAdd { entry } => {
            world
                .index_add(entry.clone())
                .map_err(|e| fail(e.to_string()))?;
        }
        Step::IndexSuggestAndAdd { space_a, space_b } => {
            let repo_a = world
                .space(space_a)
                .map_err(|e| fail(e.to_string()))?
                .model_repo
                .clone();
            let repo_b = world
                .space(space_b)
                .map_err(|e| fail(e.to_string()))?
                .model_repo
                .clone();
            let threshold = world.index_suggest_threshold;
            for entry in crate::semantics::index_suggest(&repo_a, &repo_b, threshold) {
                world.index_add(entry).map_err(|e| fail(e.to_string()))?;
            }
        }
        Step::PublishDataset {
            connector,
            space,
            dataset_id,
            model_id,
            payload_text,
            catalog,
        } => {
            let payload = payload_text.as_ref().map(|t| t.as_bytes().to_vec());
            world
                .publish_dataset(connector, space, dataset_id, model_id, payload, catalog.clone())
                .map_err(|e| fail(e.to_string()))?;
        }
        Step::RevokeCredential { connector, space } => {
            world
                .revoke_credential(connector, space)
                .map_err(|e| fail(e.to_string()))?;
        }
        Step::RecognizeForeign { space, foreign } => {
            let state = world.space_mut(space).map_err(|e| fail(e.to_string()))?;
            state
                .definition
                .recognized_foreign_frameworks
                .insert(foreign.clone());
        }
        Step::ForgeProvenanceLog {
            space,
            contract_id,
            claimed_counterparty,
        } => {
            let contract = world
                .contracts
                .get(contract_id)
                .ok_or_else(|| fail(format!("unknown contract {contract_id}")))?
                .clone();
            let logs = world
                .contract_logs
                .get(contract_id)
                .cloned()
                .unwrap_or_default();
            let send = logs
                .iter()
                .find(|l| l.kind == LogKind::Send)
                .ok_or_else(|| fail("contract has no send log".into()))?
                .clone();
            // the forger is the contract's consumer; it signs a receive log
            // that lies about who it received from
            let forger_connector = world
                .connectors
                .values()
                .find(|c| {
                    c.wallet
                        .space_of_participant(&contract.consumer)
                        .is_some()
                })
                .ok_or_else(|| fail("consumer connector not found".into()))?;
            let forger_space = forger_connector
                .wallet
                .space_of_participant(&contract.consumer)
                .expect("checked above");
            let keys = forger_connector
                .wallet
                .signing_keys_in(&forger_space)
                .expect("holding exists")
                .clone();
            let log_id = world.next_log_id();
            let now = world.now();
            let forged = build_log(
                &log_id,
                LogKind::Receive,
                &contract,
                &contract.consumer,
                claimed_counterparty,
                now,
                Some(send.log_hash()),
                None,
                &keys,
            );
            world
                .pms_ingest(space, send)
                .map_err(|e| fail(e.to_string()))?;
            world
                .pms_ingest(space, forged)
                .map_err(|e| fail(e.to_string()))?;
        }
    }
    Ok(())
}

fn evaluate_expectation(
    exchange_index: usize,
    expectation: &Expectation,
    report: &ExchangeReport,
) -> ExpectationResult {
    let phase = report.phase(expectation.phase);
    let expected = match &expectation.error_code {
        Some(code) => format!("{:?}:{code}", expectation.outcome).to_lowercase(),
        None => format!("{:?}", expectation.outcome).to_lowercase(),
    };
    let actual = match &phase.error_code {
        Some(code) => format!("{:?}:{code}", phase.outcome).to_lowercase(),
        None => format!("{:?}", phase.outcome).to_lowercase(),
    };
    let outcome_matches = phase.outcome == expectation.outcome;
    let error_matches = match &expectation.error_code {
        Some(code) => phase.error_code.as_deref() == Some(code.as_str()),
        None => true,
    };
    ExpectationResult {
        subject: format!(
            "exchange {} phase {:?}",
            exchange_index + 1,
            expectation.phase
        )
        .to_lowercase(),
        expected,
        actual,
        pass: outcome_matches && error_matches,
    }
}

fn evaluate_check(
    world: &mut World,
    index: usize,
    check: &Check,
) -> Result<ExpectationResult, ScenarioError> {
    let run_err = |message: String| ScenarioError::Check { index, message };
    match check {
        Check::Provenance {
            space,
            dataset_id,
            expect_verdict,
            expect_hops,
            expect_gaps,
        } => {
            let chain = world
                .pms_chain(space, dataset_id)
                .map_err(|e| run_err(e.to_string()))?;
            let verdict = world
                .pms_verify(space, &chain)
                .map_err(|e| run_err(e.to_string()))?;
            let verdict_code = crate::connector::provenance_verdict_code(&verdict);
            let mut pass = true;
            let mut expected = Vec::new();
            let mut actual = Vec::new();
            if let Some(want) = expect_verdict {
                expected.push(format!("verdict={want}"));
                actual.push(format!("verdict={verdict_code}"));
                pass &= verdict_code.starts_with(want.as_str());
            }
            if let Some(want) = expect_hops {
                expected.push(format!("hops={want}"));
                actual.push(format!("hops={}", chain.hops.len()));
                pass &= chain.hops.len() == *want;
            }
            if let Some(want) = expect_gaps {
                expected.push(format!("gaps={want}"));
                actual.push(format!("gaps={}", chain.gap_count()));
                pass &= chain.gap_count() == *want;
            }
            Ok(ExpectationResult {
                subject: format!("provenance of {dataset_id} in {space}"),
                expected: expected.join(" "),
                actual: actual.join(" "),
                pass,
            })
        }
        Check::Discovery {
            connector,
            query,
            expect_records,
            expect_warnings,
        } => {
            let results =
                discover(world, connector, query).map_err(|e| run_err(e.to_string()))?;
            let mut warnings: Vec<String> = results
                .iter()
                .flat_map(|r| r.warnings.iter().map(|w| w.to_string()))
                .collect();
            warnings.sort();
            let mut expected_warnings = expect_warnings.clone();
            expected_warnings.sort();
            let pass = results.len() == *expect_records && warnings == expected_warnings;
            Ok(ExpectationResult {
                subject: format!("discovery by {connector}"),
                expected: format!(
                    "records={expect_records} warnings=[{}]",
                    expected_warnings.join(",")
                ),
                actual: format!("records={} warnings=[{}]", results.len(), warnings.join(",")),
                pass,
            })
        }
        Check::Wallet {
            connector,
            expect_dual_stack,
        } => {
            let c = world
                .connector(connector)
                .map_err(|e| run_err(e.to_string()))?;
            let actual = c.wallet.is_dual_stack();
            Ok(ExpectationResult {
                subject: format!("wallet of {connector}"),
                expected: format!("dual_stack={expect_dual_stack}"),
                actual: format!("dual_stack={actual}"),
                pass: actual == *expect_dual_stack,
            })
        }
        Check::Endpoint {
            connector,
            space,
            from_space,
            expect,
        } => {
            let pid = world
                .connector(connector)
                .map_err(|e| run_err(e.to_string()))?
                .wallet
                .participant_in(space)
                .ok_or_else(|| run_err(format!("{connector} has no holding in {space}")))?
                .to_string();
            let devices: Vec<crate::registry::Device> = {
                let state = world.space(space).map_err(|e| run_err(e.to_string()))?;
                resolve_devices(
                    &state.registry,
                    &SearchKey {
                        kind: SearchKeyKind::ParticipantId,
                        value: pid,
                    },
                )
                .into_iter()
                .cloned()
                .collect()
            };
            let device = devices
                .first()
                .ok_or_else(|| run_err("no registered device".into()))?;
            let trusted = world
                .space(from_space)
                .map_err(|e| run_err(e.to_string()))?
                .definition
                .trusted_cas
                .clone();
            let ca_key = trusted
                .contains(&device.certificate.issuer_ca)
                .then(|| world.cas.get(&device.certificate.issuer_ca))
                .flatten()
                .map(|ca| ca.keypair.public_key.clone());
            let code = match ca_key {
                Some(key) => {
                    let check = verify_endpoint(
                        &device.certificate,
                        &device.endpoint_domain,
                        &device.certificate.subject_public_key,
                        &key,
                        world.now(),
                    );
                    match check {
                        EndpointCheck::Ok => "ok",
                        EndpointCheck::DomainMismatch => "domain-mismatch",
                        EndpointCheck::KeyMismatch => "key-mismatch",
                        EndpointCheck::ExpiredCert => "expired-cert",
                        EndpointCheck::BadCaSignature => "bad-ca-signature",
                    }
                }
                None => "bad-ca-signature",
            };
            Ok(ExpectationResult {
                subject: format!("endpoint of {connector} verified from {from_space}"),
                expected: expect.clone(),
                actual: code.to_string(),
                pass: code == expect,
            })
        }
    }
}

/// Execute a scenario against a fresh world built from the configuration
/// and seed. Deterministic: equal inputs give byte-identical results.
pub fn run_scenario(
    config: &SimulationConfig,
    scenario: &Scenario,
    seed: u64,
) -> Result<ScenarioResult, ScenarioError> {
    let mut world = config.build_world(seed);

    for (index, step) in scenario.setup.iter().enumerate() {
        apply_step(&mut world, index, step)?;
    }

    let mut expectation_results = Vec::new();
    let mut exchange_reports = Vec::new();
    for (index, spec) in scenario.exchanges.iter().enumerate() {
        for (step_index, step) in spec.pre.iter().enumerate() {
            apply_step(&mut world, step_index, step)?;
        }
        let report = run_exchange(
            &mut world,
            &spec.provider,
            &spec.consumer,
            &spec.dataset_id,
            &spec.options,
        )
        .map_err(|e| ScenarioError::Exchange {
            index,
            message: e.to_string(),
        })?;
        for expectation in &spec.expectations {
            expectation_results.push(evaluate_expectation(index, expectation, &report));
        }
        exchange_reports.push(report);
    }

    for (index, step) in scenario.post.iter().enumerate() {
        apply_step(&mut world, index, step)?;
    }

    for (index, check) in scenario.checks.iter().enumerate() {
        expectation_results.push(evaluate_check(&mut world, index, check)?);
    }

    let passed = expectation_results.iter().all(|r| r.pass);
    Ok(ScenarioResult {
        scenario_id: scenario.scenario_id.clone(),
        seed,
        passed,
        expectation_results,
        exchange_reports,
    })
}
