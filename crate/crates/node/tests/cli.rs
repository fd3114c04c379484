use std::net::{TcpListener, TcpStream};
use std::path::Path;
use std::process::{Child, Command, Output, Stdio};
use std::time::{Duration, Instant};

struct Daemon(Child);

impl Drop for Daemon {
    fn drop(&mut self) {
        let _ = self.0.kill();
        let _ = self.0.wait();
    }
}

fn free_port() -> u16 {
    TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port()
}

fn spawn(bin: &str, args: &[&str]) -> (Daemon, String) {
    let port = free_port();
    let listen = format!("127.0.0.1:{port}");
    let child = Command::new(bin)
        .args(["--listen", &listen])
        .args(args)
        .stdout(Stdio::null())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let deadline = Instant::now() + Duration::from_secs(10);
    while TcpStream::connect(&listen).is_err() {
        assert!(Instant::now() < deadline, "{bin} did not start");
        std::thread::sleep(Duration::from_millis(20));
    }
    (Daemon(child), format!("http://{listen}"))
}

fn run(bin: &str, args: &[&str]) -> Output {
    Command::new(bin).args(args).env("MORPHEO_PASSPHRASE", "pw").output().unwrap()
}

fn ok(bin: &str, args: &[&str]) -> String {
    let out = run(bin, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn daemons_and_client_over_processes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let challenge = write(d, "toy.json", r#"{"challenge_id":"toy","label_set":["A","B"]}"#);
    let chain = d.join("chain.ndjson");
    let chain = chain.to_str().unwrap();
    let blobs = d.join("blobs");

    let (_storage, storage) = spawn(env!("CARGO_BIN_EXE_storage"), &["--dir", blobs.to_str().unwrap()]);
    let orch_args = ["--storage", &storage, "--chain-path", chain, "--challenge", &challenge, "--admin-token", "t"];
    let (orch_proc, orch) = spawn(env!("CARGO_BIN_EXE_orchestrator"), &orch_args);
    let mut custodian_flags = Vec::new();
    let mut custodians = Vec::new();
    for i in 0..2 {
        let (p, url) = spawn(env!("CARGO_BIN_EXE_custodian"), &["--node-id", &format!("c{i}"), "--orchestrator", &orch]);
        custodians.push(p);
        custodian_flags.extend(["--custodian".to_string(), format!("c{i}={url}")]);
    }

    let client = env!("CARGO_BIN_EXE_client");
    let with = |vault: &str, rest: &[&str]| {
        let mut v: Vec<String> = ["--vault", vault, "--orchestrator", &orch, "--storage", &storage].map(String::from).to_vec();
        v.extend(custodian_flags.iter().cloned());
        v.extend(rest.iter().map(|s| s.to_string()));
        v
    };
    let call = |vault: &str, rest: &[&str]| {
        let v = with(vault, rest);
        ok(client, &v.iter().map(String::as_str).collect::<Vec<_>>())
    };
    let vault = d.join("v.bin");
    let vault = vault.to_str().unwrap();
    let validation = write(d, "val.csv", "x,y,label\n0.2,0.3,A\n2.8,2.7,B\n0.5,0.1,A\n2.5,2.9,B\n");
    let data = write(d, "data.csv", "x,y,label\n0,0,A\n0,1,A\n3,3,B\n3,2,B\n");
    let algo = write(d, "centroid.json", r#"{"name":"centroid"}"#);
    let input = write(d, "input.csv", "x,y\n0.1,0.2\n2.9,3.1\n");

    assert!(call(vault, &["keygen"]).starts_with("account "));
    assert!(!run(client, &with(vault, &["keygen"]).iter().map(String::as_str).collect::<Vec<_>>()).status.success());
    call(vault, &["upload", &validation, "--challenge", "toy", "--validation"]);
    call(vault, &["upload", &data, "--challenge", "toy"]);
    call(vault, &["submit-algo", &algo, "--challenge", "toy"]);

    let worker = |orch: &str| {
        let mut args = vec!["--orchestrator".to_string(), orch.to_string(), "--storage".into(), storage.clone(), "--once".into()];
        args.extend(custodian_flags.iter().cloned());
        let mut done = 0;
        loop {
            let out = ok(env!("CARGO_BIN_EXE_worker"), &args.iter().map(String::as_str).collect::<Vec<_>>());
            if out.trim().is_empty() {
                return done;
            }
            done += 1;
        }
    };
    assert!(worker(&orch) >= 1);
    let bench: serde_json::Value = serde_json::from_str(&call(vault, &["benchmark", "toy"])).unwrap();
    assert_eq!(bench.as_array().unwrap().len(), 1);

    // admin without token is refused, with token funds this vault
    assert!(!run(client, &with(vault, &["admin", "fund", "30"]).iter().map(String::as_str).collect::<Vec<_>>()).status.success());
    call(vault, &["admin", "--token", "t", "fund", "30"]);
    assert_eq!(call(vault, &["balance"]).trim(), "30");

    // restart the orchestrator from its chain file; custodians keep their replicas
    drop(orch_proc);
    let restart_args: Vec<&str> = orch_args.iter().copied().chain(["--listen", &orch["http://".len()..]]).collect();
    let _orch2 = {
        let child = Command::new(env!("CARGO_BIN_EXE_orchestrator"))
            .args(&restart_args)
            .stdout(Stdio::null())
            .stderr(Stdio::null())
            .spawn()
            .unwrap();
        let deadline = Instant::now() + Duration::from_secs(10);
        while TcpStream::connect(&orch["http://".len()..]).is_err() {
            assert!(Instant::now() < deadline);
            std::thread::sleep(Duration::from_millis(20));
        }
        Daemon(child)
    };
    assert_eq!(call(vault, &["balance"]).trim(), "30");

    let task = call(vault, &["predict", &input, "--challenge", "toy", "--payment", "10"]);
    let task = task.trim();
    assert!(!run(client, &with(vault, &["fetch", task]).iter().map(String::as_str).collect::<Vec<_>>()).status.success());
    worker(&orch);
    assert_eq!(call(vault, &["fetch", task]), "A\nB\n");

    let audit: serde_json::Value = serde_json::from_str(&call(vault, &["audit"])).unwrap();
    assert_eq!(audit["verdict"]["verdict"], "valid");

    let non_loopback = run(client, &with(vault, &["serve-ui", "--listen", "0.0.0.0:7300"]).iter().map(String::as_str).collect::<Vec<_>>());
    assert!(!non_loopback.status.success());
    assert!(String::from_utf8_lossy(&non_loopback.stderr).contains("loopback"));
}

#[test]
fn simnet_run_and_verify() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("trace.ndjson");
    let config = concat!(env!("CARGO_MANIFEST_DIR"), "/../../scenarios/prediction.json");
    let simnet = env!("CARGO_BIN_EXE_simnet");
    let out = ok(simnet, &["run", "--config", config, "--seed", "3", "--out", trace.to_str().unwrap()]);
    assert!(out.contains("privacy   ok") && out.contains("replay    ok"), "{out}");
    let again = ok(simnet, &["run", "--config", config, "--seed", "3", "--json"]);
    let again: serde_json::Value = serde_json::from_str(&again).unwrap();
    let digest = again["digest"].as_str().unwrap();
    assert!(out.contains(digest), "same seed, same trace");
    let report: serde_json::Value = serde_json::from_str(&ok(simnet, &["verify-trace", trace.to_str().unwrap()])).unwrap();
    assert_eq!(report["problems"], serde_json::json!([]));

    let mut text = std::fs::read_to_string(&trace).unwrap();
    let cut = text.find('\n').unwrap() + 1;
    text.replace_range(..cut, "");
    std::fs::write(&trace, text).unwrap();
    assert!(!run(simnet, &["verify-trace", trace.to_str().unwrap()]).status.success());
}
