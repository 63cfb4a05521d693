use std::net::TcpListener;
use std::path::Path;
use std::process::{Command, Output, Stdio};
use std::thread;
use std::time::{Duration, Instant};

use askac_core::advisors::cartpole_expert;
use serde_json::{json, Value};

fn askac(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_askac"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    assert!(o.status.success(), "askac failed: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn train(dir: &Path, algo: &str, steps: &str) -> Value {
    let out = askac(&[
        "train",
        "--algo",
        algo,
        "--env",
        "cartpole",
        "--seed",
        "2",
        "--total-steps",
        steps,
        "--out",
        dir.to_str().unwrap(),
        "--deterministic-timing",
    ]);
    serde_json::from_str(&stdout(&out)).unwrap()
}

#[test]
fn train_eval_and_metrics_verbs() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    let summary = train(&a, "askppo", "20480");
    assert_eq!(summary["iterations"], 10);
    assert_eq!(summary["algorithm"], "askppo");
    let csv = std::fs::read_to_string(a.join("metrics.csv")).unwrap();
    assert_eq!(csv.lines().count(), 11);

    let params = a.join("params.json");
    let eval = stdout(&askac(&["eval", "--params", params.to_str().unwrap(), "--episodes", "3"]));
    assert!(eval.contains("over 3 episodes"), "{eval}");

    let m = a.join("metrics.csv");
    let m = m.to_str().unwrap();
    let same = stdout(&askac(&["metrics", "--compute", "anr", "--run", m, "--ref", m, "--target", "0"]));
    assert_eq!(same.trim(), "1.000000");
    let never = stdout(&askac(&["metrics", "--compute", "ser", "--run", m, "--ref", m, "--target", "1000"]));
    assert!(never.starts_with("undefined"), "{never}");
}

#[test]
fn config_file_with_overrides() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.toml");
    std::fs::write(
        &cfg,
        "algorithm = \"ppo\"\nenv = \"cartpole\"\ntotal_timesteps = 4096\ntimesteps_per_iteration = 1024\nminibatch_size = 128\n",
    )
    .unwrap();
    let out = askac(&["train", "--config", cfg.to_str().unwrap(), "--seed", "5"]);
    let summary: Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(summary["iterations"], 4);
    assert_eq!(summary["seed"], 5);

    std::fs::write(&cfg, "algorithm = \"ppo\"\nenv = \"cartpole\"\ntotal_timesteps = 4096\nlearning_rat = 0.1\n").unwrap();
    let bad = askac(&["train", "--config", cfg.to_str().unwrap()]);
    assert!(!bad.status.success());
    assert!(String::from_utf8_lossy(&bad.stderr).contains("learning_rat"));
}

#[test]
fn sweep_verb_runs_every_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let out = askac(&[
        "sweep",
        "--seeds",
        "2",
        "--algo",
        "ppo",
        "--env",
        "cartpole",
        "--total-steps",
        "2048",
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    let text = stdout(&out);
    assert!(text.contains("seed 0:") && text.contains("seed 1:"), "{text}");
    assert!(tmp.path().join("seed_1/summary.json").exists());
}

fn free_port() -> u16 {
    TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port()
}

/// Plays the console: answers every query with the scripted expert.
fn console(port: u16) -> (usize, Vec<u64>) {
    let deadline = Instant::now() + Duration::from_secs(30);
    let (mut ws, _) = loop {
        match tungstenite::connect(format!("ws://127.0.0.1:{port}")) {
            Ok(c) => break c,
            Err(_) if Instant::now() < deadline => thread::sleep(Duration::from_millis(50)),
            Err(e) => panic!("console could not connect: {e}"),
        }
    };
    let mut answered = 0;
    let mut ids = Vec::new();
    let mut stats = 0;
    loop {
        let msg = match ws.read() {
            Ok(m) => m,
            Err(_) => break,
        };
        if !msg.is_text() {
            continue;
        }
        let v: Value = serde_json::from_str(msg.to_text().unwrap()).unwrap();
        match v["type"].as_str().unwrap() {
            "hello" => {
                assert_eq!(v["env"], "cartpole");
                assert_eq!(v["actions"].as_array().unwrap().len(), 2);
            }
            "ask" => {
                let state: Vec<f64> = serde_json::from_value(v["state"].clone()).unwrap();
                assert!(v["render"].is_object());
                let id = v["id"].as_u64().unwrap();
                ids.push(id);
                let reply = json!({"type": "feedback", "id": id, "action": cartpole_expert(&state)});
                if ws.send(reply.to_string().into()).is_err() {
                    break;
                }
                answered += 1;
            }
            "stats" => {
                assert!(v["roa"].as_f64().is_some() && v.get("return").is_some());
                stats += 1;
            }
            other => panic!("unexpected message {other}"),
        }
    }
    assert!(stats >= 1, "no stats reached the console");
    (answered, ids)
}

#[test]
fn serve_flag_takes_advice_from_a_console() {
    let port = free_port();
    let tmp = tempfile::tempdir().unwrap();
    let child = Command::new(env!("CARGO_BIN_EXE_askac"))
        .args([
            "train",
            "--algo",
            "askppo",
            "--env",
            "cartpole",
            "--total-steps",
            "4096",
            "--serve",
            &port.to_string(),
            "--wait-console",
            "30",
            "--advisor-timeout",
            "10",
            "--out",
            tmp.path().to_str().unwrap(),
        ])
        .env("RUST_LOG", "warn")
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let console = thread::spawn(move || console(port));
    let out = child.wait_with_output().unwrap();
    let summary: Value = serde_json::from_str(&stdout(&out)).unwrap();
    let (answered, ids) = console.join().unwrap();
    assert!(answered >= 50, "only {answered} queries");
    assert!(ids.windows(2).all(|w| w[0] < w[1]), "ids repeat or go backwards");
    assert_eq!(summary["total_queries"].as_u64().unwrap() as usize, answered);
    assert!(!String::from_utf8_lossy(&out.stderr).contains("advisor unavailable"));
}
