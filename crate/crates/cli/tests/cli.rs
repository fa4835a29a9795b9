//! End-to-end tests of the `vdc` binary: every subcommand must succeed
//! against a live server, and its `--json` output must parse back into the
//! declared response type. Also checks the exit-code contract.

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, Command, Stdio};

use vdc_core::api::{
    ComposeResponse, DatasetStatusResponse, GcResponse, MaterializeResponse, ProvenanceResponse,
    ReprocessResponse, StatusResponse,
};
use vdc_core::{SimReport, Transformation, TxRef};

const BIN: &str = env!("CARGO_BIN_EXE_vdc");

struct ServerProc {
    child: Child,
    url: String,
}

impl ServerProc {
    fn start(journal: &std::path::Path) -> ServerProc {
        let mut child = Command::new(BIN)
            .args(["serve", "--journal"])
            .arg(journal)
            .args(["--listen", "127.0.0.1:0"])
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .expect("spawn server");
        let stdout = child.stdout.take().expect("stdout");
        let mut line = String::new();
        BufReader::new(stdout).read_line(&mut line).expect("banner");
        let url = line
            .trim()
            .strip_prefix("listening on ")
            .expect("listen banner")
            .to_string();
        ServerProc { child, url }
    }
}

impl Drop for ServerProc {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

fn vdc(server: Option<&str>, args: &[&str]) -> (i32, String, String) {
    let mut cmd = Command::new(BIN);
    if let Some(url) = server {
        cmd.args(["--server", url]);
    }
    cmd.args(args).env_remove("VDC_SERVER");
    let out = cmd.output().expect("run vdc");
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

fn vdc_json<T: serde::de::DeserializeOwned>(server: Option<&str>, args: &[&str]) -> T {
    let mut with_json = args.to_vec();
    with_json.push("--json");
    let (code, stdout, stderr) = vdc(server, &with_json);
    assert_eq!(code, 0, "vdc {args:?} failed: {stderr}");
    serde_json::from_str(&stdout).unwrap_or_else(|e| panic!("vdc {args:?} output not typed JSON: {e}\n{stdout}"))
}

fn write_fixture(dir: &std::path::Path, name: &str, body: &str) -> String {
    let path = dir.join(name);
    let mut f = std::fs::File::create(&path).expect("fixture");
    f.write_all(body.as_bytes()).expect("fixture write");
    path.to_string_lossy().into_owned()
}

const TX_JSON: &str = r#"{
  "name": "evgen_cli", "version": 1, "step": "evgen",
  "template": "run_evgen -seed ${random_seed} -events ${events} -dir ${workdir}",
  "schema": [
    {"name": "events", "domain": "REPRO", "type": "int", "required": true},
    {"name": "gen_tune", "domain": "REPRO", "type": "string", "required": false, "default": "A"},
    {"name": "workdir", "domain": "SITE", "type": "string", "required": false, "default": "/tmp"}
  ],
  "inputs": []
}"#;

const SITE_RECIPE_JSON: &str =
    r#"{"name": "site.alpha", "domain": "SITE", "bindings": {"workdir": "/data/alpha"}}"#;

const REPRO_RECIPE_JSON: &str =
    r#"{"name": "repro.tuneb", "domain": "REPRO", "bindings": {"gen_tune": "B"}}"#;

const DATASET_JSON: &str = r#"{
  "name": "cli_ds", "version": 1,
  "transformation": {"name": "evgen_cli", "version": 1},
  "partitions": 3, "base_seed": 500, "seed_stride": 1,
  "overrides": {"events": 2}, "inputs": []
}"#;

const SIM_JSON: &str = r#"{
  "compute_elements": 10, "network_domains": 2, "countries": 2,
  "transformations": 4, "invocations": 100, "datasets": 4,
  "ce_crash_probability": 0.0, "server_outage_windows": [], "rng_seed": 7,
  "planner": {"claim_timeout": 20, "max_attempts": 5, "gc_period": 10}
}"#;

#[test]
fn every_subcommand_round_trips_json() {
    let dir = tempfile::tempdir().expect("tempdir");
    let server = ServerProc::start(&dir.path().join("journal.ndjson"));
    let url = server.url.as_str();

    let tx_file = write_fixture(dir.path(), "tx.json", TX_JSON);
    let site_file = write_fixture(dir.path(), "site.json", SITE_RECIPE_JSON);
    let repro_file = write_fixture(dir.path(), "repro.json", REPRO_RECIPE_JSON);
    let ds_file = write_fixture(dir.path(), "ds.json", DATASET_JSON);
    let sim_file = write_fixture(dir.path(), "sim.json", SIM_JSON);

    let tx_ref: TxRef = vdc_json(Some(url), &["tx", "add", &tx_file]);
    assert_eq!((tx_ref.name.as_str(), tx_ref.version), ("evgen_cli", 1));

    let tx: Transformation = vdc_json(Some(url), &["tx", "show", "evgen_cli", "1"]);
    assert_eq!(tx.schema.entries.len(), 3);
    assert!(!tx.body_hash.is_empty());

    let added: serde_json::Value = vdc_json(Some(url), &["recipe", "add", &site_file]);
    assert_eq!(added["name"], "site.alpha");
    let _: serde_json::Value = vdc_json(Some(url), &["recipe", "add", &repro_file]);
    let validated: serde_json::Value = vdc_json(Some(url), &["recipe", "validate", "site.alpha"]);
    assert_eq!(validated["validated"], true);
    let _: serde_json::Value = vdc_json(Some(url), &["recipe", "validate", "repro.tuneb"]);

    let composed: ComposeResponse = vdc_json(Some(url), &["dataset", "compose", &ds_file]);
    assert_eq!(composed.created.len(), 3);

    let status: DatasetStatusResponse = vdc_json(Some(url), &["dataset", "status", "cli_ds", "1"]);
    assert_eq!(status.counts.defined, 3);

    let gc: GcResponse = vdc_json(Some(url), &["run", "gc"]);
    assert!(gc.requeued.is_empty());

    let target = composed.created[0].to_string();
    let plan: MaterializeResponse = vdc_json(Some(url), &["materialize", &target]);
    assert_eq!(plan.stages.len(), 1);
    assert_eq!(plan.stages[0], vec![composed.created[0]]);

    let chain: ProvenanceResponse = vdc_json(Some(url), &["provenance", &target]);
    assert_eq!(chain.chain.len(), 1);
    assert!(chain.chain[0].provenance.is_none());

    let repro: ReprocessResponse =
        vdc_json(Some(url), &["reprocess", "cli_ds", "--recipe", "repro.tuneb"]);
    assert_eq!(repro.new_version, 2);
    assert_eq!(repro.invalidated.len(), 3);

    let rollup: StatusResponse = vdc_json(Some(url), &["status"]);
    assert_eq!(rollup.transformations, 1);
    assert_eq!(rollup.invocations, 6); // 3 original + 3 reprocessed

    // simulate runs in-process when no server is given
    let report: SimReport = vdc_json(None, &["simulate", &sim_file]);
    assert_eq!(report.completed, 100);
    assert_eq!(report.failed, 0);

    // and drives the same scenario over HTTP when one is; the remote run
    // also drains the six cli_ds derivations already queued on the server
    let remote: SimReport = vdc_json(Some(url), &["simulate", &sim_file]);
    assert_eq!(remote.completed, 106);
    let after: StatusResponse = vdc_json(Some(url), &["status"]);
    assert_eq!(after.derivations.completed, 106);
}

#[test]
fn exit_codes_distinguish_usage_api_and_connectivity_errors() {
    let dir = tempfile::tempdir().expect("tempdir");
    let server = ServerProc::start(&dir.path().join("journal.ndjson"));
    let url = server.url.as_str();

    // 0: success
    let (code, _, _) = vdc(Some(url), &["status"]);
    assert_eq!(code, 0);

    // 1: no server configured
    let (code, _, stderr) = vdc(None, &["status"]);
    assert_eq!(code, 1);
    assert!(stderr.contains("VDC_SERVER"), "{stderr}");

    // 1: API rejection (unknown dataset)
    let (code, _, stderr) = vdc(Some(url), &["dataset", "status", "nope", "1"]);
    assert_eq!(code, 1);
    assert!(stderr.contains("nope"), "{stderr}");

    // 1: malformed object id
    let (code, _, _) = vdc(Some(url), &["provenance", "not-an-id"]);
    assert_eq!(code, 1);

    // 2: connectivity failure reports the attempted URL
    let dead = "http://127.0.0.1:1";
    let (code, _, stderr) = vdc(Some(dead), &["status"]);
    assert_eq!(code, 2);
    assert!(stderr.contains(dead), "{stderr}");
}
