//! Thin client for the HTTP service; prints the JSON replies.

use anyhow::{bail, Result};
use clap::{Args, Subcommand};
use reqwest::blocking::{Client, RequestBuilder};
use serde_json::{json, Value};

#[derive(Args)]
pub struct ClientArgs {
    #[arg(long, env = "SOPPLAN_URL", default_value = "http://127.0.0.1:8080")]
    url: String,
    #[arg(long, env = sopplan_server::TOKEN_ENV, hide_env_values = true)]
    token: Option<String>,
    #[command(subcommand)]
    cmd: ClientCmd,
}

#[derive(Subcommand)]
enum ClientCmd {
    Health,
    Tasks,
    Task {
        id: String,
    },
    Sessions,
    /// Start a session; prints the session and the agent's opening turn.
    Create {
        #[arg(long)]
        task: String,
        #[arg(long)]
        method: Option<String>,
        /// `ground_truth` or `predicted:<file>` (a path on the server).
        #[arg(long)]
        sop_source: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Send one user message.
    Say {
        session: String,
        text: String,
    },
    Session {
        id: String,
    },
    Trace {
        session: String,
        turn: usize,
    },
    /// Print the JSONL transcript.
    Transcript {
        session: String,
    },
}

fn send(req: RequestBuilder, token: Option<&str>) -> Result<String> {
    let req = match token {
        Some(t) => req.bearer_auth(t),
        None => req,
    };
    let resp = req.send()?;
    let status = resp.status();
    let body = resp.text()?;
    if !status.is_success() {
        bail!("{status}: {body}");
    }
    Ok(body)
}

pub fn run(a: ClientArgs) -> Result<()> {
    let http = Client::new();
    let base = a.url.trim_end_matches('/');
    let get = |path: &str| http.get(format!("{base}{path}"));
    let post = |path: &str, body: Value| http.post(format!("{base}{path}")).json(&body);
    let req = match &a.cmd {
        ClientCmd::Health => get("/health"),
        ClientCmd::Tasks => get("/tasks"),
        ClientCmd::Task { id } => get(&format!("/tasks/{id}")),
        ClientCmd::Sessions => get("/sessions"),
        ClientCmd::Create { task, method, sop_source, seed } => post(
            "/sessions",
            json!({"task": task, "method": method, "sop_source": sop_source, "seed": seed}),
        ),
        ClientCmd::Say { session, text } => post(&format!("/sessions/{session}/messages"), json!({"text": text})),
        ClientCmd::Session { id } => get(&format!("/sessions/{id}")),
        ClientCmd::Trace { session, turn } => get(&format!("/sessions/{session}/trace/{turn}")),
        ClientCmd::Transcript { session } => get(&format!("/sessions/{session}/transcript")),
    };
    let body = send(req, a.token.as_deref())?;
    if matches!(a.cmd, ClientCmd::Transcript { .. }) {
        print!("{body}");
    } else {
        let v: Value = serde_json::from_str(&body)?;
        println!("{}", serde_json::to_string_pretty(&v)?);
    }
    Ok(())
}
