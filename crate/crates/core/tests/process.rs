//! End-to-end process behavior driven through the public API with the
//! shipped default configuration.

use std::path::{Path, PathBuf};

use dsb_core::connector::{
    discover, run_exchange, select_proof, verify_counterpart, Challenge, ContractMode,
    CounterpartDecision, CredentialArtifact, DiscoveryQuery, ExchangeOptions, Phase, PhaseName,
    PhaseOutcome, ProtocolKind, RejectReason,
};
use dsb_core::harness::config::{load_config, SimulationConfig};
use dsb_core::harness::scenario::{load_scenario, run_scenario};
use dsb_core::identity::OrgApplication;
use dsb_core::semantics::{IndexEntry, IndexOrigin, ModelRef};
use dsb_core::world::{CatalogFields, World, WorldError};

fn repo_path(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel)
}

fn default_config() -> SimulationConfig {
    load_config(repo_path("config/default.json")).expect("default config loads")
}

fn world() -> World {
    default_config().build_world(7)
}

const LEI_A: &str = "RAND00TESTENTITY0137";
const LEI_B: &str = "RAND00MUSTERWERK0077";

fn application(pid: &str, country: &str, lei: &str) -> OrgApplication {
    OrgApplication {
        participant_id: pid.into(),
        legal_name: format!("{pid} Org"),
        country: country.into(),
        lei: Some(lei.into()),
    }
}

fn onboard(world: &mut World, connector: &str, space: &str, pid: &str) {
    let country = if space == "space-j" { "JP" } else { "DE" };
    let lei = if pid.ends_with("2") { LEI_B } else { LEI_A };
    world
        .onboard_connector(connector, space, application(pid, country, lei), None)
        .expect("onboarding succeeds");
}

fn publish(world: &mut World, connector: &str, space: &str, dataset: &str, model: &str) {
    world.register_device(connector, space, &format!("{connector}.sim")).unwrap();
    world
        .publish_dataset(
            connector,
            space,
            dataset,
            model,
            Some(b"payload-bytes".to_vec()),
            CatalogFields {
                title: "Test dataset".into(),
                description: "Data for process tests".into(),
                theme: vec!["test".into()],
                ..CatalogFields::default()
            },
        )
        .unwrap();
}

#[test]
fn centralized_onboarding_fills_wallet_with_password_and_token() {
    let mut w = world();
    onboard(&mut w, "conn-1", "space-j", "org-1");
    let holding = w.connector("conn-1").unwrap().wallet.holding("space-j").cloned();
    match holding {
        Some(CredentialArtifact::Centralized { cached_token, .. }) => {
            assert!(cached_token.is_some(), "token cached at onboarding");
        }
        other => panic!("expected centralized credential, got {other:?}"),
    }
    assert!(w.connector("conn-1").unwrap().state.phase >= Phase::Onboarded);
}

#[test]
fn onboarding_both_spaces_makes_the_wallet_dual_stack() {
    let mut w = world();
    onboard(&mut w, "conn-1", "space-j", "org-1j");
    assert!(!w.connector("conn-1").unwrap().wallet.is_dual_stack());
    onboard(&mut w, "conn-1", "space-e", "org-1e");
    assert!(w.connector("conn-1").unwrap().wallet.is_dual_stack());
}

#[test]
fn failed_validation_leaves_the_connector_idle() {
    let mut w = world();
    let mut bad = application("org-bad", "XX", LEI_A);
    bad.legal_name = " ".into();
    let err = w.onboard_connector("conn-bad", "space-j", bad, None);
    assert!(err.is_err());
    match w.connector("conn-bad") {
        Ok(c) => assert_eq!(c.state.phase, Phase::Idle),
        Err(WorldError::UnknownConnector(_)) => {}
        Err(e) => panic!("unexpected error {e}"),
    }
}

#[test]
fn intra_space_token_is_accepted_via_introspection() {
    let mut w = world();
    onboard(&mut w, "verifier", "space-j", "org-v");
    onboard(&mut w, "subject", "space-j", "org-s");
    let challenge = Challenge { audience: "org-v".into(), nonce: w.draw_nonce() };
    let (proof, _, _) = select_proof(&w, "subject", "space-j", &challenge).unwrap();
    let now = w.now();
    let decision = verify_counterpart(&mut w, "verifier", &proof, &challenge, now).unwrap();
    assert_eq!(decision, CounterpartDecision::Accepted(ProtocolKind::IntrospectToken));
}

#[test]
fn foreign_token_is_rejected_without_recognition() {
    let mut w = world();
    onboard(&mut w, "verifier", "space-e", "org-v");
    onboard(&mut w, "subject", "space-j", "org-s");
    let challenge = Challenge { audience: "org-v".into(), nonce: w.draw_nonce() };
    let (proof, _, _) = select_proof(&w, "subject", "space-e", &challenge).unwrap();
    let now = w.now();
    let decision = verify_counterpart(&mut w, "verifier", &proof, &challenge, now).unwrap();
    assert_eq!(
        decision,
        CounterpartDecision::Rejected(RejectReason::UnrecognizedFramework)
    );
}

#[test]
fn dual_stack_consumer_presents_native_credential() {
    let mut w = world();
    onboard(&mut w, "verifier", "space-e", "org-v");
    onboard(&mut w, "subject", "space-j", "org-sj");
    onboard(&mut w, "subject", "space-e", "org-se");
    let challenge = Challenge { audience: "org-v".into(), nonce: w.draw_nonce() };
    let (proof, acting_pid, acting_space) =
        select_proof(&w, "subject", "space-e", &challenge).unwrap();
    assert_eq!(acting_space, "space-e");
    assert_eq!(acting_pid, "org-se");
    let now = w.now();
    let decision = verify_counterpart(&mut w, "verifier", &proof, &challenge, now).unwrap();
    assert_eq!(
        decision,
        CounterpartDecision::Accepted(ProtocolKind::VerifyPresentation)
    );
}

#[test]
fn discovery_matches_theme_and_returns_empty_for_unknown() {
    let mut w = world();
    onboard(&mut w, "prov", "space-j", "org-p");
    onboard(&mut w, "cons", "space-j", "org-c");
    publish(&mut w, "prov", "space-j", "ds-1", "co2-report");

    let hits = discover(
        &mut w,
        "cons",
        &DiscoveryQuery { theme: Some("test".into()), ..DiscoveryQuery::default() },
    )
    .unwrap();
    assert_eq!(hits.len(), 1);
    assert!(hits[0].warnings.is_empty());

    let none = discover(
        &mut w,
        "cons",
        &DiscoveryQuery { theme: Some("nope".into()), ..DiscoveryQuery::default() },
    )
    .unwrap();
    assert!(none.is_empty());
}

#[test]
fn cross_space_discovery_surfaces_portability_warnings() {
    let mut w = world();
    onboard(&mut w, "prov", "space-e", "org-p");
    onboard(&mut w, "cons", "space-j", "org-c");
    publish(&mut w, "prov", "space-e", "ds-1", "pcf-exchange");

    let hits = discover(
        &mut w,
        "cons",
        &DiscoveryQuery {
            space: Some("space-e".into()),
            theme: Some("test".into()),
            ..DiscoveryQuery::default()
        },
    )
    .unwrap();
    assert_eq!(hits.len(), 1);
    assert_eq!(hits[0].warnings.len(), 1);
    assert_eq!(hits[0].warnings[0].to_string(), "portability:pcf-exchange");

    // a mutually-best mapping removes the warning and remaps the model
    w.index_add(IndexEntry {
        model_a: ModelRef { space_id: "space-j".into(), model_id: "co2-report".into() },
        model_b: ModelRef { space_id: "space-e".into(), model_id: "pcf-exchange".into() },
        confidence: 1.0,
        origin: IndexOrigin::Manual,
    })
    .unwrap();
    let hits = discover(
        &mut w,
        "cons",
        &DiscoveryQuery {
            space: Some("space-e".into()),
            theme: Some("test".into()),
            ..DiscoveryQuery::default()
        },
    )
    .unwrap();
    assert!(hits[0].warnings.is_empty());
    assert_eq!(hits[0].record.conforms_to, "co2-report");
}

#[test]
fn intra_space_exchange_completes_and_orders_verification_before_delivery() {
    let mut w = world();
    onboard(&mut w, "prov", "space-j", "org-p");
    onboard(&mut w, "cons", "space-j", "org-c");
    publish(&mut w, "prov", "space-j", "ds-1", "co2-report");

    let report = run_exchange(
        &mut w,
        "prov",
        "cons",
        "ds-1",
        &ExchangeOptions { use_pms: true, use_ddp: true, ..ExchangeOptions::default() },
    )
    .unwrap();
    assert!(report.all_ok(), "report: {report:?}");

    // no payload delivery without a prior endpoint and participant success
    let delivered_at = report
        .events
        .iter()
        .position(|e| e.event == "transfer.delivered")
        .expect("payload delivered");
    let before = &report.events[..delivered_at];
    assert!(before
        .iter()
        .any(|e| e.event == "endpoint.verify" && e.outcome == "ok"));
    assert!(before
        .iter()
        .any(|e| e.event == "participant.verify" && e.outcome.starts_with("accepted")));

    // both parties reached the final phase
    assert_eq!(w.connector("prov").unwrap().state.phase, Phase::Verified);
    assert_eq!(w.connector("cons").unwrap().state.phase, Phase::Verified);
}

#[test]
fn connector_phase_trace_is_monotone() {
    let mut w = world();
    onboard(&mut w, "prov", "space-j", "org-p");
    onboard(&mut w, "cons", "space-j", "org-c");
    publish(&mut w, "prov", "space-j", "ds-1", "co2-report");
    run_exchange(&mut w, "prov", "cons", "ds-1", &ExchangeOptions::default()).unwrap();

    let order = [
        "idle", "onboarded", "planned", "discovered", "contracted", "transferred", "paid",
        "verified",
    ];
    for connector in ["prov", "cons"] {
        let trace = &w.connector(connector).unwrap().state.event_trace;
        let indices: Vec<usize> = trace
            .iter()
            .filter(|e| e.event == "phase")
            .map(|e| order.iter().position(|p| *p == e.outcome).unwrap())
            .collect();
        let mut sorted = indices.clone();
        sorted.sort_unstable();
        assert_eq!(indices, sorted, "{connector} phases advanced out of order");
    }
}

#[test]
fn cross_space_single_stack_fails_exactly_at_participant_verification() {
    // both directions: provider in either space, single-stack consumer from
    // the other, recognition sets empty
    for (provider_space, consumer_space, model) in [
        ("space-e", "space-j", "pcf-exchange"),
        ("space-j", "space-e", "co2-report"),
    ] {
        let mut w = world();
        onboard(&mut w, "prov", provider_space, "org-p");
        onboard(&mut w, "cons", consumer_space, "org-c");
        publish(&mut w, "prov", provider_space, "ds-1", model);

        let report = run_exchange(
            &mut w,
            "prov",
            "cons",
            "ds-1",
            &ExchangeOptions { contract_mode: ContractMode::External, ..ExchangeOptions::default() },
        )
        .unwrap();
        // never earlier
        assert_eq!(report.phase(PhaseName::Planning).outcome, PhaseOutcome::Ok);
        assert_eq!(report.phase(PhaseName::Discovery).outcome, PhaseOutcome::Ok);
        assert_eq!(report.phase(PhaseName::Contract).outcome, PhaseOutcome::Ok);
        // exactly at participant verification
        let transfer = report.phase(PhaseName::Transfer);
        assert_eq!(transfer.outcome, PhaseOutcome::Failed, "{provider_space} -> {consumer_space}");
        assert_eq!(
            transfer.error_code.as_deref(),
            Some("participant-verification-failed/unrecognized-framework")
        );
        // never later
        assert_eq!(report.phase(PhaseName::Payment).outcome, PhaseOutcome::Skipped);
        assert_eq!(report.phase(PhaseName::Verification).outcome, PhaseOutcome::Skipped);
    }
}

#[test]
fn mutual_recognition_lets_single_stack_exchange_complete() {
    let mut w = world();
    onboard(&mut w, "prov", "space-e", "org-p");
    onboard(&mut w, "cons", "space-j", "org-c");
    publish(&mut w, "prov", "space-e", "ds-1", "pcf-exchange");
    w.space_mut("space-e")
        .unwrap()
        .definition
        .recognized_foreign_frameworks
        .insert("space-j".into());

    let report = run_exchange(
        &mut w,
        "prov",
        "cons",
        "ds-1",
        &ExchangeOptions { contract_mode: ContractMode::External, ..ExchangeOptions::default() },
    )
    .unwrap();
    assert!(report.all_ok(), "report: {report:?}");
    // the accepted protocol was token introspection at the consumer's home
    assert!(report
        .events
        .iter()
        .any(|e| e.event == "idp-introspect" && e.outcome.starts_with("space-j")));
}

#[test]
fn dual_stack_consumer_completes_against_single_stack_providers_in_both_spaces() {
    let mut w = world();
    onboard(&mut w, "prov-j", "space-j", "org-pj");
    onboard(&mut w, "prov-e", "space-e", "org-pe");
    onboard(&mut w, "cons", "space-j", "org-cj");
    onboard(&mut w, "cons", "space-e", "org-ce");
    publish(&mut w, "prov-j", "space-j", "ds-j", "co2-report");
    publish(&mut w, "prov-e", "space-e", "ds-e", "pcf-exchange");

    for (provider, dataset) in [("prov-j", "ds-j"), ("prov-e", "ds-e")] {
        let report =
            run_exchange(&mut w, provider, "cons", dataset, &ExchangeOptions::default()).unwrap();
        assert!(report.all_ok(), "against {provider}: {report:?}");
    }
}

#[test]
fn verification_protocols_match_the_issuer_trust_model() {
    let mut w = world();
    onboard(&mut w, "prov-j", "space-j", "org-pj");
    onboard(&mut w, "prov-e", "space-e", "org-pe");
    onboard(&mut w, "cons", "space-j", "org-cj");
    onboard(&mut w, "cons", "space-e", "org-ce");
    publish(&mut w, "prov-j", "space-j", "ds-j", "co2-report");
    publish(&mut w, "prov-e", "space-e", "ds-e", "pcf-exchange");

    let report_j =
        run_exchange(&mut w, "prov-j", "cons", "ds-j", &ExchangeOptions::default()).unwrap();
    assert!(report_j.events.iter().any(|e| e.event == "idp-introspect"));
    assert!(!report_j.events.iter().any(|e| e.event == "verify-presentation"));

    let report_e =
        run_exchange(&mut w, "prov-e", "cons", "ds-e", &ExchangeOptions::default()).unwrap();
    assert!(report_e.events.iter().any(|e| e.event == "verify-presentation"));
    // verifier locality: the decentralized path never consults a provider
    assert!(!report_e.events.iter().any(|e| e.event == "idp-introspect"));
}

#[test]
fn payment_before_transfer_is_an_order_violation() {
    let mut w = world();
    onboard(&mut w, "prov", "space-e", "org-p");
    onboard(&mut w, "cons", "space-e", "org-c");
    publish(&mut w, "prov", "space-e", "ds-1", "battery-passport");

    // conclude a contract without transferring
    let doc = w.broker.conclude().unwrap();
    let contract_id = w.next_contract_id();
    let contract = dsb_core::exchange::Contract::externally_concluded(
        &contract_id,
        "org-p",
        "org-c",
        "ds-1",
        Default::default(),
        &doc,
    );
    w.contracts.insert(contract_id.clone(), contract);
    w.contract_logs.insert(contract_id.clone(), Vec::new());

    let err = w.record_payment("cons", &contract_id, 100).unwrap_err();
    assert!(matches!(
        err,
        WorldError::Exchange(dsb_core::exchange::ExchangeError::OrderViolation)
    ));
}

#[test]
fn unsigned_transfers_succeed_without_package_support() {
    // the signable package is optional equipment: a space without it still
    // delivers data, only authenticity checking is unavailable
    let mut w = world();
    onboard(&mut w, "prov", "space-e", "org-p");
    onboard(&mut w, "cons", "space-e", "org-c");
    publish(&mut w, "prov", "space-e", "ds-1", "battery-passport");

    let report = run_exchange(
        &mut w,
        "prov",
        "cons",
        "ds-1",
        &ExchangeOptions { use_ddp: true, ..ExchangeOptions::default() },
    )
    .unwrap();
    assert!(report.all_ok());
    let transfer = report.phase(PhaseName::Transfer);
    assert!(transfer.warnings.iter().any(|w| w == "ddp-unavailable"));
}

#[test]
fn shipped_scenarios_all_pass() {
    let config = default_config();
    let dir = repo_path("scenarios");
    let mut names: Vec<_> = std::fs::read_dir(&dir)
        .expect("scenarios directory")
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .collect();
    names.sort();
    assert!(names.len() >= 8, "at least eight shipped scenarios");
    for path in names {
        let scenario = load_scenario(&path).unwrap_or_else(|e| panic!("{path:?}: {e}"));
        let result = run_scenario(&config, &scenario, 42)
            .unwrap_or_else(|e| panic!("{path:?}: {e}"));
        assert!(
            result.passed,
            "{}: {:#?}",
            scenario.scenario_id,
            result
                .expectation_results
                .iter()
                .filter(|r| !r.pass)
                .collect::<Vec<_>>()
        );
    }
}

#[test]
fn externally_concluded_contracts_transfer_in_both_spaces() {
    let mut w = world();
    onboard(&mut w, "prov-j", "space-j", "org-pj");
    onboard(&mut w, "cons-j", "space-j", "org-cj");
    onboard(&mut w, "prov-e", "space-e", "org-pe");
    onboard(&mut w, "cons-e", "space-e", "org-ce");
    publish(&mut w, "prov-j", "space-j", "ds-j", "co2-report");
    publish(&mut w, "prov-e", "space-e", "ds-e", "pcf-exchange");

    for (provider, consumer, dataset) in
        [("prov-j", "cons-j", "ds-j"), ("prov-e", "cons-e", "ds-e")]
    {
        let report = run_exchange(
            &mut w,
            provider,
            consumer,
            dataset,
            &ExchangeOptions { contract_mode: ContractMode::External, ..ExchangeOptions::default() },
        )
        .unwrap();
        assert!(report.all_ok(), "{provider}->{consumer}: {report:?}");
        let contract_id = report.contract_id.clone().unwrap();
        assert!(w.contracts[&contract_id].external_ref.is_some());
    }
}

#[test]
fn exchange_completes_without_a_provenance_service() {
    // centralized log management is optional equipment; asking for it in a
    // space without one only downgrades to local logs
    let mut w = world();
    onboard(&mut w, "prov", "space-e", "org-p");
    onboard(&mut w, "cons", "space-e", "org-c");
    publish(&mut w, "prov", "space-e", "ds-1", "battery-passport");
    let report = run_exchange(
        &mut w,
        "prov",
        "cons",
        "ds-1",
        &ExchangeOptions { use_pms: true, ..ExchangeOptions::default() },
    )
    .unwrap();
    assert!(report.all_ok(), "{report:?}");
    let transfer = report.phase(PhaseName::Transfer);
    assert!(transfer.warnings.iter().any(|w| w == "pms-unavailable"));
    assert!(matches!(
        w.pms_chain("space-e", "ds-1"),
        Err(WorldError::CapabilityUnavailable { .. })
    ));
}

#[test]
fn negotiation_is_unsupported_in_the_centralized_space() {
    let mut w = world();
    onboard(&mut w, "prov", "space-j", "org-p");
    onboard(&mut w, "cons", "space-j", "org-c");
    publish(&mut w, "prov", "space-j", "ds-1", "co2-report");
    let report = run_exchange(
        &mut w,
        "prov",
        "cons",
        "ds-1",
        &ExchangeOptions { contract_mode: ContractMode::Negotiate, ..ExchangeOptions::default() },
    )
    .unwrap();
    let contract = report.phase(PhaseName::Contract);
    assert_eq!(contract.outcome, PhaseOutcome::Failed);
    assert_eq!(contract.error_code.as_deref(), Some("negotiation-unsupported"));
}

#[test]
fn broker_outage_fails_the_contract_phase() {
    let mut w = world();
    w.broker.available = false;
    onboard(&mut w, "prov", "space-j", "org-p");
    onboard(&mut w, "cons", "space-j", "org-c");
    publish(&mut w, "prov", "space-j", "ds-1", "co2-report");
    let report =
        run_exchange(&mut w, "prov", "cons", "ds-1", &ExchangeOptions::default()).unwrap();
    let contract = report.phase(PhaseName::Contract);
    assert_eq!(contract.outcome, PhaseOutcome::Failed);
    assert_eq!(contract.error_code.as_deref(), Some("broker-unavailable"));
    assert_eq!(report.phase(PhaseName::Transfer).outcome, PhaseOutcome::Skipped);
}

#[test]
fn separate_cas_break_cross_space_device_trust() {
    // one shared CA is the default; with per-space CAs and disjoint trust
    // sets, a foreign consumer no longer accepts the provider's certificate
    let mut config = default_config();
    config.certificate_authorities.push(dsb_core::world::CaSetup {
        ca_id: "euro-ca".into(),
        certificate_ttl_seconds: 31_536_000,
    });
    {
        let space_e = config.spaces.iter_mut().find(|s| s.space_id == "space-e").unwrap();
        space_e.issuing_ca = "euro-ca".into();
        space_e.trusted_cas = ["euro-ca".to_string()].into();
    }
    let mut w = config.build_world(7);
    onboard(&mut w, "prov", "space-e", "org-p");
    onboard(&mut w, "cons", "space-j", "org-c");
    w.space_mut("space-e")
        .unwrap()
        .definition
        .recognized_foreign_frameworks
        .insert("space-j".into());
    publish(&mut w, "prov", "space-e", "ds-1", "pcf-exchange");

    let report = run_exchange(
        &mut w,
        "prov",
        "cons",
        "ds-1",
        &ExchangeOptions { contract_mode: ContractMode::External, ..ExchangeOptions::default() },
    )
    .unwrap();
    let transfer = report.phase(PhaseName::Transfer);
    assert_eq!(transfer.outcome, PhaseOutcome::Failed);
    assert_eq!(
        transfer.error_code.as_deref(),
        Some("endpoint-verification-failed/bad-ca-signature")
    );

    // intra-space exchange under the dedicated CA still works
    onboard(&mut w, "cons-e", "space-e", "org-c2");
    let report =
        run_exchange(&mut w, "prov", "cons-e", "ds-1", &ExchangeOptions::default()).unwrap();
    assert!(report.all_ok(), "{report:?}");
}

#[test]
fn world_event_log_shows_no_delivery_without_prior_verification() {
    // run a mix of succeeding and failing exchanges, then audit the whole
    // event log: inside each exchange, payload delivery requires an earlier
    // endpoint success and participant acceptance, and declined contracts
    // never reach delivery
    let mut w = world();
    onboard(&mut w, "prov-j", "space-j", "org-pj");
    onboard(&mut w, "cons-j", "space-j", "org-cj");
    onboard(&mut w, "prov-e", "space-e", "org-pe");
    onboard(&mut w, "cons-e", "space-e", "org-ce");
    publish(&mut w, "prov-j", "space-j", "ds-j", "co2-report");
    publish(&mut w, "prov-e", "space-e", "ds-e", "pcf-exchange");

    // ok, cross-space failure, declined, ok
    run_exchange(&mut w, "prov-j", "cons-j", "ds-j", &ExchangeOptions::default()).unwrap();
    run_exchange(
        &mut w,
        "prov-e",
        "cons-j",
        "ds-e",
        &ExchangeOptions { contract_mode: ContractMode::External, ..ExchangeOptions::default() },
    )
    .unwrap();
    let declined = run_exchange(
        &mut w,
        "prov-e",
        "cons-e",
        "ds-e",
        &ExchangeOptions {
            contract_mode: ContractMode::Negotiate,
            consumer_decision: dsb_core::exchange::ConsumerDecision::Decline,
            ..ExchangeOptions::default()
        },
    )
    .unwrap();
    assert!(declined.first_failure().is_some());
    run_exchange(&mut w, "prov-e", "cons-e", "ds-e", &ExchangeOptions::default()).unwrap();

    let events = w.events.events();
    let mut endpoint_ok = false;
    let mut participant_ok = false;
    let mut deliveries = 0;
    for event in events {
        match event.event.as_str() {
            "exchange.start" => {
                endpoint_ok = false;
                participant_ok = false;
            }
            "endpoint.verify" if event.outcome == "ok" => endpoint_ok = true,
            "participant.verify" if event.outcome.starts_with("accepted") => {
                participant_ok = true;
            }
            "transfer.delivered" => {
                deliveries += 1;
                assert!(
                    endpoint_ok && participant_ok,
                    "delivery at {:?} without prior verification successes",
                    event
                );
            }
            _ => {}
        }
    }
    assert_eq!(deliveries, 2, "exactly the two successful exchanges delivered");

    // the declined exchange's slice contains no delivery at all
    let declined_delivers = declined
        .events
        .iter()
        .any(|e| e.event == "transfer.delivered");
    assert!(!declined_delivers);
}

#[test]
fn independent_scenarios_run_concurrently_with_identical_results() {
    use dsb_core::harness::scenario::{load_scenario, run_scenario};

    let config = default_config();
    let names = ["intra_space_j", "intra_space_e", "cross_space_dual_stack"];
    let sequential: Vec<String> = names
        .iter()
        .map(|name| {
            let scenario =
                load_scenario(repo_path(&format!("scenarios/{name}.json"))).unwrap();
            serde_json::to_string(&run_scenario(&config, &scenario, 7).unwrap()).unwrap()
        })
        .collect();

    let handles: Vec<_> = names
        .iter()
        .map(|name| {
            let config = config.clone();
            let path = repo_path(&format!("scenarios/{name}.json"));
            std::thread::spawn(move || {
                let scenario = load_scenario(path).unwrap();
                serde_json::to_string(&run_scenario(&config, &scenario, 7).unwrap()).unwrap()
            })
        })
        .collect();
    for (expected, handle) in sequential.iter().zip(handles) {
        assert_eq!(expected, &handle.join().unwrap());
    }
}
