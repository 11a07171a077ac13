//! Interactive conversation on stdin/stdout, run through the same service
//! code as the HTTP server.

use std::io::{self, BufRead, Write};
use std::path::PathBuf;

use anyhow::Result;
use clap::Args;
use sopplan_core::llm::TemplateSet;
use sopplan_core::online::TurnDecision;
use sopplan_core::service::{CreateSession, SessionStatus, SopSource};

use crate::{backend, local_service, resolve_task, PlannerArgs};

#[derive(Args)]
pub struct ChatArgs {
    #[arg(long)]
    task: String,
    #[command(flatten)]
    planner: PlannerArgs,
    #[arg(long)]
    backend: PathBuf,
    /// Backend that plays the user in search roll-outs; `--backend` when absent.
    #[arg(long)]
    user_sim: Option<PathBuf>,
    /// Predicted SOP file to plan with instead of the task's own.
    #[arg(long)]
    sop: Option<PathBuf>,
    /// Directory receiving the JSONL transcript.
    #[arg(long)]
    transcript_dir: Option<PathBuf>,
    /// Print the planner trace after every turn.
    #[arg(long)]
    trace: bool,
    /// Wait for the user to speak first.
    #[arg(long)]
    user_opens: bool,
}

fn show(d: &TurnDecision, trace: bool) -> Result<()> {
    if let Some(s) = &d.user_state {
        println!("  (user state: {s})");
    }
    println!("agent [{}] {}", d.agent_action, d.agent_response);
    if trace {
        println!("{}", serde_json::to_string_pretty(&d.trace)?);
    }
    Ok(())
}

pub fn run(a: ChatArgs, tpl: TemplateSet) -> Result<()> {
    let task = resolve_task(&a.task)?;
    let a_id = task.a_id.clone();
    let b = backend(&a.backend)?;
    let sim = match &a.user_sim {
        Some(p) => backend(p)?,
        None => b.clone(),
    };
    let mut svc = local_service(task, b, sim, tpl, a.planner.config()?)?.user_opens(a.user_opens);
    if let Some(d) = &a.transcript_dir {
        svc = svc.with_transcript_dir(d)?;
    }
    let created = svc.create_session(&CreateSession {
        task: a_id,
        method: Some(a.planner.method),
        sop_source: a.sop.clone().map(SopSource::Predicted),
        seed: a.planner.seed,
    })?;
    let id = created.session.id;
    if let Some(d) = &created.opening {
        show(d, a.trace)?;
    }

    let stdin = io::stdin();
    let mut lines = stdin.lock().lines();
    loop {
        print!("you> ");
        io::stdout().flush()?;
        let Some(line) = lines.next().transpose()? else { break };
        let text = line.trim();
        if text.is_empty() {
            continue;
        }
        match svc.post_user_message(&id, text) {
            Ok(t) => {
                show(&t.decision, a.trace)?;
                if t.session.status == SessionStatus::Ended {
                    break;
                }
            }
            Err(e) => eprintln!("error: {e}"),
        }
    }
    let view = svc.get_session(&id)?;
    println!("session {id}: {} turns, succeeded: {}", view.turns, view.succeeded);
    Ok(())
}
