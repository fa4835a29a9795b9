//! `vdc` — operator command line for the virtual data catalog.
//!
//! Every subcommand except `serve` and in-process `simulate` talks to a
//! running server (`--server` flag or `VDC_SERVER` environment variable).
//! Exit codes: 0 success, 1 validation/API error, 2 connectivity error.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::Serialize;
use vdc_core::api::*;
use vdc_core::sim::run_simulation_on;
use vdc_core::{
    Dataset, ObjectId, PlannerConfig, Recipe, Service, SimConfig, Transformation, TxRef,
};

use vdc_cli::client::{Client, ClientError};

#[derive(Parser)]
#[command(name = "vdc", version, about = "virtual data catalog operator tool")]
struct Cli {
    /// Server base URL, e.g. http://127.0.0.1:8640
    #[arg(long, global = true, env = "VDC_SERVER")]
    server: Option<String>,
    /// Emit machine-readable JSON instead of tables
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Transformation catalog
    Tx {
        #[command(subcommand)]
        cmd: TxCmd,
    },
    /// Recipe catalog
    Recipe {
        #[command(subcommand)]
        cmd: RecipeCmd,
    },
    /// Dataset composition and monitoring
    Dataset {
        #[command(subcommand)]
        cmd: DatasetCmd,
    },
    /// Planner maintenance operations
    Run {
        #[command(subcommand)]
        cmd: RunCmd,
    },
    /// Plan the re-production of an object from its recipe chain
    Materialize { object_id: String },
    /// Supersede a dataset's recipe and cascade downstream
    Reprocess {
        dataset: String,
        #[arg(long)]
        recipe: String,
    },
    /// Show the provenance chain of a derivation
    Provenance { derivation_id: String },
    /// Run the deterministic production simulation
    Simulate { config: PathBuf },
    /// Catalog-wide counters
    Status,
    /// Run the catalog server in the foreground
    Serve {
        #[arg(long)]
        journal: PathBuf,
        #[arg(long, default_value = "127.0.0.1:0")]
        listen: SocketAddr,
        /// Claim timeout in planner time units (milliseconds)
        #[arg(long, default_value_t = PlannerConfig::default().claim_timeout)]
        claim_timeout: i64,
        #[arg(long, default_value_t = PlannerConfig::default().max_attempts)]
        max_attempts: u32,
        #[arg(long, default_value_t = PlannerConfig::default().gc_period)]
        gc_period: i64,
    },
}

#[derive(Subcommand)]
enum TxCmd {
    /// Register a transformation from a JSON definition file
    Add { file: PathBuf },
    /// Print a registered transformation
    Show { name: String, version: u32 },
}

#[derive(Subcommand)]
enum RecipeCmd {
    /// Register a recipe from a JSON definition file
    Add { file: PathBuf },
    /// Mark a recipe as expert-validated
    Validate {
        name: String,
        #[arg(long, default_value = "")]
        note: String,
    },
}

#[derive(Subcommand)]
enum DatasetCmd {
    /// Compose a dataset from a JSON definition file
    Compose { file: PathBuf },
    /// Per-state derivation counts for one dataset version
    Status { name: String, version: u32 },
}

#[derive(Subcommand)]
enum RunCmd {
    /// Trigger a claim-timeout sweep
    Gc,
}

struct Failure {
    code: u8,
    message: String,
}

impl From<ClientError> for Failure {
    fn from(err: ClientError) -> Failure {
        let code = match err {
            ClientError::Connect { .. } => 2,
            _ => 1,
        };
        Failure {
            code,
            message: err.to_string(),
        }
    }
}

fn fail(message: impl Into<String>) -> Failure {
    Failure {
        code: 1,
        message: message.into(),
    }
}

fn read_definition<T: DeserializeOwned>(path: &PathBuf) -> Result<T, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| fail(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| fail(format!("{}: {e}", path.display())))
}

fn require_server(server: &Option<String>) -> Result<Client, Failure> {
    match server {
        Some(url) => Ok(Client::new(url)),
        None => Err(fail(
            "no server configured: pass --server or set VDC_SERVER",
        )),
    }
}

fn emit<T: Serialize>(json: bool, value: &T, human: impl FnOnce(&T) -> String) {
    if json {
        println!("{}", serde_json::to_string_pretty(value).expect("serializable"));
    } else {
        print!("{}", human(value));
    }
}

fn parse_object_id(raw: &str) -> Result<ObjectId, Failure> {
    raw.parse::<ObjectId>()
        .map_err(|e| fail(format!("{raw}: {e}")))
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Tx { cmd } => match cmd {
            TxCmd::Add { file } => {
                let tx: Transformation = read_definition(&file)?;
                let client = require_server(&cli.server)?;
                let r: TxRef = client.post_expect("/v1/transformations", &tx)?;
                emit(cli.json, &r, |r| format!("registered {} v{}\n", r.name, r.version));
            }
            TxCmd::Show { name, version } => {
                let client = require_server(&cli.server)?;
                let tx: Transformation =
                    client.get(&format!("/v1/transformations/{name}/{version}"))?;
                emit(cli.json, &tx, |tx| {
                    let mut out = format!(
                        "{} v{}  step={}\ntemplate: {}\nbody_hash: {}\n\n{:<16} {:<6} {:<8} {:<9} default\n",
                        tx.name, tx.version, tx.step, tx.template, tx.body_hash,
                        "parameter", "domain", "type", "required",
                    );
                    for spec in &tx.schema.entries {
                        out.push_str(&format!(
                            "{:<16} {:<6} {:<8} {:<9} {}\n",
                            spec.name,
                            format!("{:?}", spec.domain).to_uppercase(),
                            format!("{:?}", spec.ptype).to_lowercase(),
                            spec.required,
                            spec.default
                                .as_ref()
                                .map(|v| serde_json::to_string(v).unwrap())
                                .unwrap_or_else(|| "-".into()),
                        ));
                    }
                    out
                });
            }
        },
        Command::Recipe { cmd } => match cmd {
            RecipeCmd::Add { file } => {
                let recipe: Recipe = read_definition(&file)?;
                let client = require_server(&cli.server)?;
                let r: serde_json::Value = client.post_expect("/v1/recipes", &recipe)?;
                emit(cli.json, &r, |r| format!("registered recipe {}\n", r["name"]));
            }
            RecipeCmd::Validate { name, note } => {
                let client = require_server(&cli.server)?;
                let r: serde_json::Value =
                    client.post_expect(&format!("/v1/recipes/{name}/validate"), &ValidateRecipeRequest { note })?;
                emit(cli.json, &r, |r| format!("validated {}\n", r["name"]));
            }
        },
        Command::Dataset { cmd } => match cmd {
            DatasetCmd::Compose { file } => {
                let ds: Dataset = read_definition(&file)?;
                let client = require_server(&cli.server)?;
                let r: ComposeResponse = client.post_expect("/v1/datasets", &ds)?;
                emit(cli.json, &r, |r| {
                    format!(
                        "composed {} v{}: {} new derivations, {} shared\n",
                        r.name,
                        r.version,
                        r.created.len(),
                        r.linked.len()
                    )
                });
            }
            DatasetCmd::Status { name, version } => {
                let client = require_server(&cli.server)?;
                let r: DatasetStatusResponse =
                    client.get(&format!("/v1/datasets/{name}/{version}/derivations"))?;
                emit(cli.json, &r, |r| {
                    format!(
                        "{} v{}: {} derivations\n  defined   {}\n  claimed   {}\n  completed {}\n  failed    {}\n",
                        r.name,
                        r.version,
                        r.derivations.len(),
                        r.counts.defined,
                        r.counts.claimed,
                        r.counts.completed,
                        r.counts.failed
                    )
                });
            }
        },
        Command::Run { cmd } => match cmd {
            RunCmd::Gc => {
                let client = require_server(&cli.server)?;
                let r: GcResponse = client.post_expect("/v1/gc", &GcRequest::default())?;
                emit(cli.json, &r, |r| format!("requeued {} derivations\n", r.requeued.len()));
            }
        },
        Command::Materialize { object_id } => {
            let target = parse_object_id(&object_id)?;
            let client = require_server(&cli.server)?;
            let r: MaterializeResponse =
                client.post_expect("/v1/materialize", &MaterializeRequest { target })?;
            emit(cli.json, &r, |r| {
                let mut out = format!("target {}\n", r.target);
                if r.stages.is_empty() {
                    out.push_str("already materialized\n");
                }
                for (i, stage) in r.stages.iter().enumerate() {
                    out.push_str(&format!("stage {i}:\n"));
                    for id in stage {
                        out.push_str(&format!("  {id}\n"));
                    }
                }
                out.push_str(&format!("pruned: {} already-satisfied objects\n", r.pruned.len()));
                out
            });
        }
        Command::Reprocess { dataset, recipe } => {
            let client = require_server(&cli.server)?;
            let r: ReprocessResponse = client.post_expect(
                &format!("/v1/datasets/{dataset}/reprocess"),
                &ReprocessRequest { recipe },
            )?;
            emit(cli.json, &r, |r| {
                format!(
                    "{dataset} → v{}: {} derivations invalidated, {} reused\n",
                    r.new_version,
                    r.invalidated.len(),
                    r.reused.len()
                )
            });
        }
        Command::Provenance { derivation_id } => {
            let id = parse_object_id(&derivation_id)?;
            let client = require_server(&cli.server)?;
            let r: ProvenanceResponse = client.get(&format!("/v1/derivations/{id}/provenance"))?;
            emit(cli.json, &r, |r| {
                let mut out = String::new();
                for node in &r.chain {
                    out.push_str(&format!(
                        "{}  {} v{}  inputs={}\n",
                        node.output_id,
                        node.transformation,
                        node.version,
                        node.inputs.len()
                    ));
                    if let Some(p) = &node.provenance {
                        out.push_str(&format!(
                            "    ran on {} ({}, {})  {} → {}  digest {}\n",
                            p.compute_element,
                            p.network_domain,
                            p.country,
                            p.started.to_rfc3339(),
                            p.finished.to_rfc3339(),
                            p.output_digest
                        ));
                    } else {
                        out.push_str("    never executed\n");
                    }
                }
                out
            });
        }
        Command::Simulate { config } => {
            let sim_config: SimConfig = read_definition(&config)?;
            let report = match &cli.server {
                Some(url) => {
                    let mut backend = Client::new(url);
                    run_simulation_on(&mut backend, &sim_config)
                }
                None => {
                    // in-process server: same catalog code, no sockets
                    let mut service = Service::in_memory(sim_config.planner.clone())
                        .map_err(|e| fail(e.to_string()))?;
                    run_simulation_on(&mut service, &sim_config)
                }
            }
            .map_err(|e| match e {
                vdc_core::VdcError::Remote(detail) => Failure { code: 2, message: detail },
                other => fail(other.to_string()),
            })?;
            emit(cli.json, &report, |r| r.human_table());
        }
        Command::Status => {
            let client = require_server(&cli.server)?;
            let r: StatusResponse = client.get("/v1/status")?;
            emit(cli.json, &r, |r| {
                format!(
                    "transformations      {}\ndatasets             {}\ninvocations          {}\n\
                     compute elements     {}\nnetwork domains      {}\ncountries            {}\n\
                     replicas             {}\nnon-determinism      {}\n\
                     defined/claimed      {}/{}\ncompleted/failed     {}/{}\n",
                    r.transformations,
                    r.datasets,
                    r.invocations,
                    r.compute_elements,
                    r.network_domains,
                    r.countries,
                    r.replicas,
                    r.non_determinism_incidents,
                    r.derivations.defined,
                    r.derivations.claimed,
                    r.derivations.completed,
                    r.derivations.failed
                )
            });
        }
        Command::Serve {
            journal,
            listen,
            claim_timeout,
            max_attempts,
            gc_period,
        } => {
            let planner = PlannerConfig {
                claim_timeout,
                max_attempts,
                gc_period,
            };
            planner.validate().map_err(|e| fail(e.to_string()))?;
            vdc_server::serve(vdc_server::ServerConfig {
                listen,
                journal_path: journal,
                planner,
            })
            .map_err(|e| fail(e.to_string()))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {}", failure.message);
            ExitCode::from(failure.code)
        }
    }
}
