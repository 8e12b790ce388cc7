//! `dsb` — drive the two-space data-sharing simulator from the command
//! line. State persists between invocations under a data directory; the
//! report and scenario commands run against fresh deterministic worlds.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, Context, Result};
use clap::{Args, Parser, Subcommand};

use dsb_core::connector::{
    discover, make_contract, perform_transfer, provenance_verdict_code, verify_fulfilment,
    ContractMode, DiscoveryQuery, ExchangeOptions,
};
use dsb_core::exchange::ConsumerDecision;
use dsb_core::harness::config::{load_config, SimulationConfig};
use dsb_core::harness::persist::{is_initialized, load_world, resolve_data_dir, save_world};
use dsb_core::harness::report::{gap_report, render_gap_matrix, run_probes};
use dsb_core::harness::scenario::{load_scenario, run_scenario};
use dsb_core::identity::OrgApplication;
use dsb_core::provenance::ProvenanceVerdict;
use dsb_core::world::{CatalogFields, World};

#[derive(Parser)]
#[command(
    name = "dsb",
    about = "Deterministic simulator of two data-sharing platforms with different trust architectures",
    version
)]
struct Cli {
    /// Simulation configuration file.
    #[arg(long, global = true, default_value = "config/default.json")]
    config: PathBuf,
    /// State directory; DSB_DATA_DIR overrides the default `./data`.
    #[arg(long, global = true)]
    data_dir: Option<PathBuf>,
    /// Seed for key material and nonces.
    #[arg(long, global = true, default_value_t = 42)]
    seed: u64,
    /// Emit machine-readable JSON instead of summaries.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Onboard an organization onto a space, optionally registering its
    /// connector endpoint.
    Onboard(OnboardArgs),
    /// Publish a dataset with a catalog record.
    Publish(PublishArgs),
    /// Search a catalog, converting cross-space results.
    Discover(DiscoverArgs),
    /// Conclude a contract: negotiate over the space API or via the
    /// external broker.
    Negotiate(NegotiateArgs),
    /// Transfer a dataset against a concluded contract, then record the
    /// payment and verify fulfilment.
    Transfer(TransferArgs),
    /// Reconstruct and verify a dataset's provenance chain.
    VerifyProvenance(VerifyProvenanceArgs),
    /// Probe both spaces and print the capability gap matrix.
    Report,
    /// Run a declarative scenario against a fresh world.
    RunScenario(RunScenarioArgs),
}

#[derive(Args)]
struct OnboardArgs {
    #[arg(long)]
    connector: String,
    #[arg(long)]
    space: String,
    #[arg(long)]
    participant_id: String,
    #[arg(long)]
    legal_name: String,
    #[arg(long)]
    country: String,
    #[arg(long)]
    lei: Option<String>,
    /// Secret for centralized spaces; generated when omitted.
    #[arg(long)]
    secret: Option<String>,
    /// Register a device under this endpoint domain after onboarding.
    #[arg(long)]
    endpoint_domain: Option<String>,
}

#[derive(Args)]
struct PublishArgs {
    #[arg(long)]
    connector: String,
    #[arg(long)]
    space: String,
    #[arg(long)]
    dataset_id: String,
    #[arg(long)]
    model_id: String,
    #[arg(long, conflicts_with = "payload_text")]
    payload_file: Option<PathBuf>,
    #[arg(long)]
    payload_text: Option<String>,
    #[arg(long)]
    title: String,
    #[arg(long)]
    description: String,
    /// Comma-separated theme tags.
    #[arg(long, value_delimiter = ',')]
    theme: Vec<String>,
    /// Extension entries as key=value.
    #[arg(long = "extension", value_parser = parse_key_value)]
    extensions: Vec<(String, String)>,
    #[arg(long)]
    endpoint_domain: Option<String>,
}

#[derive(Args)]
struct DiscoverArgs {
    #[arg(long)]
    connector: String,
    /// Space to search; the connector's home space when omitted.
    #[arg(long)]
    space: Option<String>,
    #[arg(long)]
    theme: Option<String>,
    #[arg(long)]
    publisher: Option<String>,
    #[arg(long)]
    model_id: Option<String>,
}

#[derive(Args)]
struct NegotiateArgs {
    #[arg(long)]
    provider: String,
    #[arg(long)]
    consumer: String,
    #[arg(long)]
    dataset_id: String,
    #[arg(long, value_enum, default_value = "auto")]
    mode: CliContractMode,
    #[arg(long, value_enum, default_value = "accept")]
    decision: CliDecision,
    /// Usage terms as key=value.
    #[arg(long = "term", value_parser = parse_key_value)]
    terms: Vec<(String, String)>,
}

#[derive(Args)]
struct TransferArgs {
    #[arg(long)]
    provider: String,
    #[arg(long)]
    consumer: String,
    #[arg(long)]
    contract_id: String,
    /// Deliver as a signed distribution package.
    #[arg(long)]
    use_ddp: bool,
    /// Forward logs to the provider space's provenance service.
    #[arg(long)]
    use_pms: bool,
    /// Payment to record after delivery.
    #[arg(long, default_value_t = 100)]
    amount: u64,
    /// Write the signed distribution package container to this path.
    #[arg(long)]
    package_out: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyProvenanceArgs {
    #[arg(long)]
    space: String,
    #[arg(long)]
    dataset_id: String,
}

#[derive(Args)]
struct RunScenarioArgs {
    #[arg(long)]
    scenario: PathBuf,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum CliContractMode {
    Auto,
    Negotiate,
    External,
}

impl From<CliContractMode> for ContractMode {
    fn from(mode: CliContractMode) -> Self {
        match mode {
            CliContractMode::Auto => ContractMode::Auto,
            CliContractMode::Negotiate => ContractMode::Negotiate,
            CliContractMode::External => ContractMode::External,
        }
    }
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum CliDecision {
    Accept,
    Decline,
}

impl From<CliDecision> for ConsumerDecision {
    fn from(decision: CliDecision) -> Self {
        match decision {
            CliDecision::Accept => ConsumerDecision::Accept,
            CliDecision::Decline => ConsumerDecision::Decline,
        }
    }
}

fn parse_key_value(raw: &str) -> Result<(String, String), String> {
    raw.split_once('=')
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .ok_or_else(|| format!("expected key=value, got {raw}"))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn load_or_init_world(cli: &Cli) -> Result<(World, PathBuf)> {
    let dir = resolve_data_dir(cli.data_dir.clone());
    let world = if is_initialized(&dir) {
        load_world(&dir).with_context(|| format!("loading state from {}", dir.display()))?
    } else {
        let config = load_config(&cli.config)
            .with_context(|| format!("loading config {}", cli.config.display()))?;
        config.build_world(cli.seed)
    };
    Ok((world, dir))
}

fn config_of(cli: &Cli) -> Result<SimulationConfig> {
    load_config(&cli.config).with_context(|| format!("loading config {}", cli.config.display()))
}

fn run(cli: Cli) -> Result<ExitCode> {
    match &cli.command {
        Command::Onboard(args) => {
            let (mut world, dir) = load_or_init_world(&cli)?;
            let application = OrgApplication {
                participant_id: args.participant_id.clone(),
                legal_name: args.legal_name.clone(),
                country: args.country.clone(),
                lei: args.lei.clone(),
            };
            let outcome = world
                .onboard_connector(&args.connector, &args.space, application, args.secret.clone())
                .map_err(|e| anyhow!("onboarding failed: {e}"))?;
            let device = match &args.endpoint_domain {
                Some(domain) => Some(
                    world
                        .register_device(&args.connector, &args.space, domain)
                        .map_err(|e| anyhow!("device registration failed: {e}"))?,
                ),
                None => None,
            };
            save_world(&world, &dir)?;
            if cli.json {
                println!(
                    "{}",
                    serde_json::to_string_pretty(&serde_json::json!({
                        "participant": outcome.participant,
                        "validation": outcome.validation,
                        "device": device,
                    }))?
                );
            } else {
                println!(
                    "onboarded {} onto {} as {} ({:?})",
                    args.connector, args.space, outcome.participant.participant_id,
                    outcome.participant.status
                );
                if let Some(device) = device {
                    println!("registered device {} at {}", device.device_id, device.endpoint_domain);
                }
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Publish(args) => {
            let (mut world, dir) = load_or_init_world(&cli)?;
            let payload = match (&args.payload_file, &args.payload_text) {
                (Some(path), _) => {
                    Some(std::fs::read(path).with_context(|| format!("reading {}", path.display()))?)
                }
                (None, Some(text)) => Some(text.as_bytes().to_vec()),
                (None, None) => None,
            };
            let record_id = world
                .publish_dataset(
                    &args.connector,
                    &args.space,
                    &args.dataset_id,
                    &args.model_id,
                    payload,
                    CatalogFields {
                        title: args.title.clone(),
                        description: args.description.clone(),
                        theme: args.theme.clone(),
                        extensions: args.extensions.iter().cloned().collect(),
                        endpoint_domain: args.endpoint_domain.clone(),
                    },
                )
                .map_err(|e| anyhow!("publish failed: {e}"))?;
            let record = world
                .space(&args.space)
                .ok()
                .and_then(|s| s.catalog.get(&record_id))
                .cloned();
            save_world(&world, &dir)?;
            if cli.json {
                println!("{}", serde_json::to_string_pretty(&record)?);
            } else {
                println!("published {} as catalog record {record_id}", args.dataset_id);
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Discover(args) => {
            let (mut world, dir) = load_or_init_world(&cli)?;
            let results = discover(
                &mut world,
                &args.connector,
                &DiscoveryQuery {
                    space: args.space.clone(),
                    theme: args.theme.clone(),
                    publisher: args.publisher.clone(),
                    model_id: args.model_id.clone(),
                },
            )
            .map_err(|e| anyhow!("discovery failed: {e}"))?;
            save_world(&world, &dir)?;
            if cli.json {
                println!("{}", serde_json::to_string_pretty(&results)?);
            } else if results.is_empty() {
                println!("no matching catalog records");
            } else {
                for found in &results {
                    println!(
                        "{} [{}] \"{}\" publisher={} model={}",
                        found.record.record_id,
                        found.source_space,
                        found.record.title,
                        found.record.publisher,
                        found.record.conforms_to
                    );
                    for warning in &found.warnings {
                        println!("  warning: {warning}");
                    }
                }
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Negotiate(args) => {
            let (mut world, dir) = load_or_init_world(&cli)?;
            let options = ExchangeOptions {
                contract_mode: args.mode.into(),
                consumer_decision: args.decision.into(),
                usage_terms: args.terms.iter().cloned().collect::<BTreeMap<_, _>>(),
                ..ExchangeOptions::default()
            };
            let result = make_contract(
                &mut world,
                &args.provider,
                &args.consumer,
                &args.dataset_id,
                &options,
            )
            .map_err(|e| anyhow!("negotiation could not run: {e}"))?;
            match result {
                Ok(contract) => {
                    save_world(&world, &dir)?;
                    if cli.json {
                        println!("{}", serde_json::to_string_pretty(&contract)?);
                    } else {
                        println!(
                            "contract {} between {} and {}: {:?}{}",
                            contract.contract_id,
                            contract.provider,
                            contract.consumer,
                            contract.state,
                            contract
                                .external_ref
                                .as_deref()
                                .map(|r| format!(" (external ref {r})"))
                                .unwrap_or_default()
                        );
                    }
                    Ok(ExitCode::SUCCESS)
                }
                Err(failure) => {
                    save_world(&world, &dir)?;
                    eprintln!("contract phase failed: {failure}");
                    Ok(ExitCode::from(1))
                }
            }
        }
        Command::Transfer(args) => {
            let (mut world, dir) = load_or_init_world(&cli)?;
            let options = ExchangeOptions {
                use_ddp: args.use_ddp,
                use_pms: args.use_pms,
                payment_amount: args.amount,
                ..ExchangeOptions::default()
            };
            let result = perform_transfer(
                &mut world,
                &args.provider,
                &args.consumer,
                &args.contract_id,
                &options,
            )
            .map_err(|e| anyhow!("transfer could not run: {e}"))?;
            let outcome = match result {
                Ok(outcome) => outcome,
                Err(failure) => {
                    save_world(&world, &dir)?;
                    eprintln!("transfer failed: {failure}");
                    return Ok(ExitCode::from(1));
                }
            };
            if let Some(path) = &args.package_out {
                match &outcome.package {
                    Some(package) => std::fs::write(path, package.to_container_bytes())
                        .with_context(|| format!("writing {}", path.display()))?,
                    None => eprintln!("note: no signed package was produced; nothing written"),
                }
            }
            let payment = world
                .record_payment(&args.consumer, &args.contract_id, args.amount)
                .map_err(|e| anyhow!("payment failed: {e}"))?;
            let verification = verify_fulfilment(&mut world, &args.contract_id, args.use_pms)
                .map_err(|e| anyhow!("verification could not run: {e}"))?;
            save_world(&world, &dir)?;
            match verification {
                Ok(detail) => {
                    if cli.json {
                        println!(
                            "{}",
                            serde_json::to_string_pretty(&serde_json::json!({
                                "transfer": outcome,
                                "payment": payment,
                                "verification": detail,
                            }))?
                        );
                    } else {
                        println!(
                            "transferred {} bytes under {} (logs {}, {}; payment {})",
                            outcome.payload.as_bytes().len(),
                            outcome.contract_id,
                            outcome.send_log.log_id,
                            outcome.receive_log.log_id,
                            payment.log_id
                        );
                        for warning in &outcome.warnings {
                            println!("  warning: {warning}");
                        }
                        println!("verification: {detail}");
                    }
                    Ok(ExitCode::SUCCESS)
                }
                Err(failure) => {
                    eprintln!("verification failed: {failure}");
                    Ok(ExitCode::from(1))
                }
            }
        }
        Command::VerifyProvenance(args) => {
            let (world, _) = load_or_init_world(&cli)?;
            let chain = world
                .pms_chain(&args.space, &args.dataset_id)
                .map_err(|e| anyhow!("no provenance chain: {e}"))?;
            let verdict = world
                .pms_verify(&args.space, &chain)
                .map_err(|e| anyhow!("verification could not run: {e}"))?;
            let code = provenance_verdict_code(&verdict);
            if cli.json {
                println!(
                    "{}",
                    serde_json::to_string_pretty(&serde_json::json!({
                        "chain": chain,
                        "verdict": code,
                    }))?
                );
            } else {
                println!(
                    "dataset {}: {} hops, {} gaps, verdict {code}",
                    args.dataset_id,
                    chain.hops.len(),
                    chain.gap_count()
                );
            }
            Ok(if verdict == ProvenanceVerdict::Ok {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            })
        }
        Command::Report => {
            let config = config_of(&cli)?;
            let probes = run_probes(&config).map_err(|e| anyhow!("probe suite failed: {e}"))?;
            let matrix = gap_report(&config, &probes).map_err(|e| anyhow!("{e}"))?;
            if cli.json {
                println!("{}", serde_json::to_string_pretty(&matrix)?);
            } else {
                print!("{}", render_gap_matrix(&config, &matrix));
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::RunScenario(args) => {
            let config = config_of(&cli)?;
            let scenario = load_scenario(&args.scenario)
                .map_err(|e| anyhow!("loading scenario: {e}"))?;
            let result = run_scenario(&config, &scenario, cli.seed)
                .map_err(|e| anyhow!("scenario failed to run: {e}"))?;
            if cli.json {
                println!("{}", serde_json::to_string_pretty(&result)?);
            } else {
                println!(
                    "scenario {} (seed {}): {}",
                    result.scenario_id,
                    result.seed,
                    if result.passed { "PASS" } else { "FAIL" }
                );
                for exp in &result.expectation_results {
                    println!(
                        "  [{}] {} expected {} got {}",
                        if exp.pass { "ok" } else { "FAIL" },
                        exp.subject,
                        exp.expected,
                        exp.actual
                    );
                }
            }
            Ok(if result.passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            })
        }
    }
}
