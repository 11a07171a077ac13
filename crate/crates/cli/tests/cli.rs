use std::io::Write;
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Output, Stdio};
use std::time::{Duration, Instant};

use serde_json::Value;
use sopplan_core::fixtures::{golf_world, GOLF_TASK_JSON};
use sopplan_core::llm::{ScriptRule, TemplateId};

const COOPERATIVE: [&str; 4] = [
    "Yes, speaking, this is me.",
    "That sounds fun, I would like to join.",
    "Two people, Saturday morning at nine.",
    "Great, thank you, goodbye.",
];

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_sopplan"));
    c.env_remove("SOPPLAN_TOKEN").env_remove("SOPPLAN_URL");
    c
}

/// Writes a scripted backend config for the golf world and returns its path.
fn scripted_backend(dir: &Path) -> PathBuf {
    let task: Value = serde_json::from_str(GOLF_TASK_JSON).unwrap();
    let adjacency = task["sop"]["adjacency_list"].to_string();
    let mut rules = golf_world(false).rules();
    rules.push(ScriptRule::new(TemplateId::SopAl, &[], &[&adjacency]));
    std::fs::write(dir.join("rules.json"), serde_json::to_string(&rules).unwrap()).unwrap();
    let cfg = dir.join("backend.json");
    std::fs::write(&cfg, r#"{"kind": "scripted", "rules": "rules.json"}"#).unwrap();
    cfg
}

fn ok(out: Output) -> String {
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(out.status.success(), "stdout:\n{stdout}\nstderr:\n{}", String::from_utf8_lossy(&out.stderr));
    stdout
}

fn run(args: &[&str]) -> String {
    ok(bin().args(args).output().unwrap())
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn plan_sop_then_score_it() {
    let dir = tempfile::tempdir().unwrap();
    let backend = scripted_backend(dir.path());
    let pred = dir.path().join("pred.json");
    let out = bin()
        .args(["plan-sop", "--task", "06a14", "--method", "al", "--score"])
        .args(["--backend", s(&backend), "--out", s(&pred)])
        .output()
        .unwrap();
    assert!(String::from_utf8_lossy(&out.stderr).contains("GED"));
    ok(out);
    let report: Value = serde_json::from_str(&run(&["eval", "sop", "--pred", s(&pred), "--task", "06a14", "--json"])).unwrap();
    assert_eq!(report["sop"]["ged"], 0);
    assert_eq!(report["sop"]["paths"]["f1"], 1.0);
}

#[test]
fn chat_transcript_feeds_replay_and_eval() {
    let dir = tempfile::tempdir().unwrap();
    let backend = scripted_backend(dir.path());
    let tdir = dir.path().join("transcripts");
    let mut child = bin()
        .args(["chat", "--task", "06a14", "--backend", s(&backend), "--transcript-dir", s(&tdir)])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    child.stdin.take().unwrap().write_all((COOPERATIVE.join("\n") + "\n").as_bytes()).unwrap();
    let stdout = ok(child.wait_with_output().unwrap());
    assert!(stdout.contains("agent [Agent.VerifyIdentity]"), "{stdout}");
    assert!(stdout.contains("agent [Agent.InformBookingSuccess]"));
    assert!(stdout.contains("5 turns, succeeded: true"), "{stdout}");

    let files: Vec<_> = std::fs::read_dir(&tdir).unwrap().map(|e| e.unwrap().path()).collect();
    assert_eq!(files.len(), 1);
    let transcript = s(&files[0]);

    let replay = run(&["replay", "--dialogues", transcript, "--backend", s(&backend)]);
    assert_eq!(replay.lines().filter(|l| l.contains("\tok\t")).count(), 5, "{replay}");

    let report: Value =
        serde_json::from_str(&run(&["eval", "dialogue", "--pred", transcript, "--gold", transcript, "--json"])).unwrap();
    assert_eq!(report["turns"]["acc_t"], 1.0);
}

#[test]
fn datagen_then_benchmark() {
    let dir = tempfile::tempdir().unwrap();
    let backend = scripted_backend(dir.path());
    let items = dir.path().join("items.jsonl");
    let dialogues = dir.path().join("dialogues.jsonl");
    run(&["datagen", "--task", "03c07", "--count", "6", "--seed", "9", "--out", s(&items), "--dialogues", s(&dialogues)]);
    let text = std::fs::read_to_string(&items).unwrap();
    assert_eq!(text.lines().count(), 6);
    let first: Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
    assert_eq!(first["quality"]["scene_source"], "fallback");

    // identical inputs give identical outputs
    let again = dir.path().join("again.jsonl");
    run(&["datagen", "--task", "03c07", "--count", "6", "--seed", "9", "--out", s(&again)]);
    assert_eq!(std::fs::read_to_string(&again).unwrap(), text);

    let report: Value = serde_json::from_str(&run(&[
        "eval", "dialogue", "--pred", s(&dialogues), "--gold", s(&dialogues), "--json",
    ]))
    .unwrap();
    assert_eq!(report["turns"]["acc_t"], 1.0);

    // benchmark the golf transcript from a self-play run
    let play = dir.path().join("play.jsonl");
    let out = run(&["self-play", "--task", "06a14", "--backend", s(&backend), "--out", s(&play)]);
    assert!(out.contains("success: true"), "{out}");
    let bench = dir.path().join("bench.json");
    let out = run(&[
        "benchmark", "--dialogues", s(&play), "--backend", s(&backend),
        "--method", "MCTS_SOP", "--method", "cot-sop", "--out", s(&bench),
    ]);
    assert!(out.contains("== MCTS_SOP") && out.contains("== CoT_SOP"), "{out}");
    let v: Value = serde_json::from_str(&std::fs::read_to_string(&bench).unwrap()).unwrap();
    assert_eq!(v["MCTS_SOP"]["report"]["turns"]["acc_t"], 1.0);
}

#[test]
fn bad_inputs_fail_cleanly() {
    let out = bin().args(["tasks", "nope"]).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("neither a task file nor a bundled task id"));
    let out = bin().args(["chat", "--task", "06a14", "--backend", "/no/such.json"]).output().unwrap();
    assert!(!out.status.success());
    let out = bin().args(["self-play", "--task", "06a14", "--backend", "x", "--method", "beam"]).output().unwrap();
    assert!(!out.status.success());
}

struct Server(Child);

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.0.kill();
        let _ = self.0.wait();
    }
}

#[test]
fn client_drives_a_served_session() {
    let dir = tempfile::tempdir().unwrap();
    let backend = scripted_backend(dir.path());
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let url = format!("http://127.0.0.1:{port}");
    let _server = Server(
        bin()
            .args(["serve", "--backend", s(&backend), "--addr", &format!("127.0.0.1:{port}")])
            .env("SOPPLAN_TOKEN", "tok")
            .stdout(Stdio::null())
            .stderr(Stdio::null())
            .spawn()
            .unwrap(),
    );
    let client = |args: &[&str], token: Option<&str>| {
        let mut c = bin();
        c.args(["client", "--url", &url]).args(args);
        if let Some(t) = token {
            c.env("SOPPLAN_TOKEN", t);
        }
        c.output().unwrap()
    };
    let started = Instant::now();
    while !client(&["health"], None).status.success() {
        assert!(started.elapsed() < Duration::from_secs(20), "server did not come up");
        std::thread::sleep(Duration::from_millis(100));
    }

    let denied = client(&["tasks"], None);
    assert!(!denied.status.success());
    assert!(String::from_utf8_lossy(&denied.stderr).contains("401"));

    let tasks: Value = serde_json::from_str(&ok(client(&["tasks"], Some("tok")))).unwrap();
    assert_eq!(tasks.as_array().unwrap().len(), 3);
    let task: Value = serde_json::from_str(&ok(client(&["task", "06a14"], Some("tok")))).unwrap();
    assert_eq!(task["a_id"], "06a14");

    let created: Value =
        serde_json::from_str(&ok(client(&["create", "--task", "06a14", "--method", "mcts_sop"], Some("tok")))).unwrap();
    let id = created["session"]["id"].as_str().unwrap().to_string();
    for u in COOPERATIVE {
        ok(client(&["say", &id, u], Some("tok")));
    }
    let view: Value = serde_json::from_str(&ok(client(&["session", &id], Some("tok")))).unwrap();
    assert_eq!(view["status"], "ended");
    assert_eq!(view["succeeded"], true);
    let sessions: Value = serde_json::from_str(&ok(client(&["sessions"], Some("tok")))).unwrap();
    assert_eq!(sessions.as_array().unwrap().len(), 1);
    let trace: Value = serde_json::from_str(&ok(client(&["trace", &id, "2"], Some("tok")))).unwrap();
    assert_eq!(trace["decision"]["trace"]["detail"]["kind"], "mcts");
    let transcript = ok(client(&["transcript", &id], Some("tok")));
    assert_eq!(transcript.lines().count(), 5);

    let closed = client(&["say", &id, "hello?"], Some("tok"));
    assert!(String::from_utf8_lossy(&closed.stderr).contains("session_closed"));
}
