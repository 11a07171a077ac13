use std::sync::Arc;

use sopplan_core::catalog::TaskCatalog;
use sopplan_core::eval::{compare_dialogues, run_benchmark};
use sopplan_core::fixtures::{golf_world, ScriptedWorld, GOLF_TASK_JSON};
use sopplan_core::llm::{SharedBackend, TemplateSet};
use sopplan_core::online::{PlannerConfig, PlannerMethod, TraceDetail};
use sopplan_core::service::{
    read_any_dialogues, AgentService, CreateSession, ServiceError, SessionStatus, SopSource,
};
use sopplan_core::QualifiedLabel;

const GOLF: &str = "06a14";

fn service_for(world: ScriptedWorld) -> AgentService {
    let b: SharedBackend = Arc::new(world.backend());
    AgentService::new(TaskCatalog::bundled(), b.clone(), b, TemplateSet::default(), PlannerConfig::default())
}

fn create(svc: &AgentService, method: PlannerMethod) -> (String, QualifiedLabel) {
    let c = svc
        .create_session(&CreateSession {
            task: GOLF.into(),
            method: Some(method),
            ..CreateSession::default()
        })
        .unwrap();
    (c.session.id, c.opening.unwrap().agent_action)
}

fn agent(name: &str) -> QualifiedLabel {
    QualifiedLabel::agent(name)
}

const COOPERATIVE: [&str; 4] = [
    "Yes, speaking, this is me.",
    "That sounds fun, I would like to join.",
    "Two people, Saturday morning at nine.",
    "Great, thank you, goodbye.",
];

#[test]
fn golf_conversation_succeeds_then_ends() {
    let svc = service_for(golf_world(false));
    let (id, first) = create(&svc, PlannerMethod::MctsSop);
    assert_eq!(first, agent("VerifyIdentity"));
    let mut statuses = Vec::new();
    let mut actions = Vec::new();
    for u in COOPERATIVE {
        let t = svc.post_user_message(&id, u).unwrap();
        actions.push(t.decision.agent_action.name().to_string());
        statuses.push(t.session.status);
    }
    assert_eq!(
        actions,
        ["InviteToGolfExperienceEvent", "InquireAboutParticipationNumberOrTime", "InformBookingSuccess", "PoliteEnd"]
    );
    assert_eq!(
        statuses,
        [SessionStatus::Active, SessionStatus::Active, SessionStatus::Succeeded, SessionStatus::Ended]
    );
    let view = svc.get_session(&id).unwrap();
    assert!(view.succeeded);
    assert!(view.turns <= 8);
    assert_eq!(
        svc.post_user_message(&id, "hello?").unwrap_err(),
        ServiceError::SessionClosed(id.clone())
    );
}

#[test]
fn wrong_person_ends_the_call() {
    let world = golf_world(false)
        .heard("Wrong number, sorry.", "NotThemselves")
        .policy("NotThemselves", &["PoliteEnd"]);
    let svc = service_for(world);
    for method in [PlannerMethod::CotSop, PlannerMethod::MctsSop] {
        let (id, _) = create(&svc, method);
        let t = svc.post_user_message(&id, "Wrong number, sorry.").unwrap();
        assert_eq!(t.decision.user_state, Some(QualifiedLabel::user("NotThemselves")));
        assert_eq!(t.decision.agent_action, agent("PoliteEnd"), "{method}");
        assert_eq!(t.session.status, SessionStatus::Ended);
        assert!(!t.session.succeeded);
    }
}

#[test]
fn trace_reports_search_tree_and_guidance() {
    let svc = service_for(golf_world(false));
    let (id, _) = create(&svc, PlannerMethod::MctsSop);
    svc.post_user_message(&id, COOPERATIVE[0]).unwrap();
    let rec = svc.get_trace(&id, 1).unwrap();
    let d = rec.decision.unwrap();
    let TraceDetail::Mcts(tree) = &d.trace.detail else { panic!("not an MCTS trace") };
    assert_eq!(tree.tree[0].visits as usize, PlannerConfig::default().n_iterations);
    assert!(d.trace.guidance.is_some());
    assert_eq!(
        svc.get_trace(&id, 9).unwrap_err(),
        ServiceError::UnknownTurn { session: id.clone(), turn: 9 }
    );
    assert!(matches!(svc.get_trace("nope", 0), Err(ServiceError::UnknownSession(_))));
}

#[test]
fn creation_errors() {
    let svc = service_for(golf_world(false));
    let err = svc
        .create_session(&CreateSession {
            task: "missing".into(),
            ..CreateSession::default()
        })
        .unwrap_err();
    assert_eq!(err, ServiceError::UnknownTask("missing".into()));

    let dir = tempfile::tempdir().unwrap();
    // an edge to an undeclared vertex fails validation
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"Agent.Start": ["Agent.Teleport"]}"#).unwrap();
    let err = svc
        .create_session(&CreateSession {
            task: GOLF.into(),
            sop_source: Some(SopSource::Predicted(bad)),
            ..CreateSession::default()
        })
        .unwrap_err();
    assert!(matches!(err, ServiceError::InvalidConfig(_)), "{err:?}");

    // a valid prediction is accepted
    let task: serde_json::Value = serde_json::from_str(GOLF_TASK_JSON).unwrap();
    let good = dir.path().join("good.json");
    std::fs::write(&good, task["sop"]["adjacency_list"].to_string()).unwrap();
    let c = svc
        .create_session(&CreateSession {
            task: GOLF.into(),
            sop_source: Some(SopSource::Predicted(good)),
            ..CreateSession::default()
        })
        .unwrap();
    assert!(matches!(c.session.sop_source, SopSource::Predicted(_)));
}

#[test]
fn planner_failure_is_persisted() {
    let svc = service_for(golf_world(false));
    let (id, _) = create(&svc, PlannerMethod::Cot);
    // no CoT rule covers this utterance
    let err = svc.post_user_message(&id, "Something unscripted.").unwrap_err();
    assert!(matches!(err, ServiceError::Planner { turn_index: 1, .. }));
    let rec = svc.get_trace(&id, 1).unwrap();
    assert!(rec.error.is_some() && rec.decision.is_none());
    // the session is still usable
    let t = svc.post_user_message(&id, COOPERATIVE[0]).unwrap();
    assert_eq!(t.turn_index, 2);
    assert_eq!(t.session.turns, 2);
}

#[test]
fn transcript_round_trips_into_eval() {
    let dir = tempfile::tempdir().unwrap();
    let svc = service_for(golf_world(false)).with_transcript_dir(dir.path()).unwrap();
    let (id, _) = create(&svc, PlannerMethod::MctsSop);
    for u in COOPERATIVE {
        svc.post_user_message(&id, u).unwrap();
    }
    let exported = svc.export_transcript(&id).unwrap();
    let on_disk = std::fs::read_to_string(dir.path().join(format!("{id}.jsonl"))).unwrap();
    assert_eq!(exported, on_disk);

    let dialogues = read_any_dialogues(&exported).unwrap();
    assert_eq!(dialogues.len(), 1);
    assert_eq!(dialogues[0], svc.dialogue(&id).unwrap());
    assert_eq!(dialogues[0].turns.len(), 5);

    let (report, _) = compare_dialogues(&dialogues, &dialogues, &TaskCatalog::bundled()).unwrap();
    assert_eq!(report.turns.unwrap().acc_t, 1.0);

    let backend = golf_world(false).backend();
    let cfg = PlannerConfig::with_method(PlannerMethod::MctsSop);
    let out = run_benchmark(&TaskCatalog::bundled(), &dialogues, &cfg, &backend, TemplateSet::builtin()).unwrap();
    let t = out.report.turns.unwrap();
    assert_eq!(t.turns, 5);
    assert_eq!(t.acc_t, 1.0);
}

#[test]
fn user_can_open_the_call() {
    let world = golf_world(false).heard("Hello, who is this?", "Greeting").policy("Greeting", &["VerifyIdentity"]);
    let svc = service_for(world).user_opens(true);
    let c = svc
        .create_session(&CreateSession {
            task: GOLF.into(),
            method: Some(PlannerMethod::CotSop),
            ..CreateSession::default()
        })
        .unwrap();
    assert!(c.opening.is_none());
    assert_eq!(c.session.turns, 0);
    let t = svc.post_user_message(&c.session.id, "Hello, who is this?").unwrap();
    assert_eq!(t.turn_index, 0);
    assert_eq!(t.decision.agent_action, agent("VerifyIdentity"));
}

#[test]
fn interleaved_sessions_match_serial_runs() {
    let serial = |svc: &AgentService| {
        let (id, _) = create(svc, PlannerMethod::MctsSop);
        for u in COOPERATIVE {
            svc.post_user_message(&id, u).unwrap();
        }
        svc.dialogue(&id).unwrap().turns
    };
    let want = serial(&service_for(golf_world(false)));

    let svc = service_for(golf_world(false));
    let ids: Vec<String> = (0..4).map(|_| create(&svc, PlannerMethod::MctsSop).0).collect();
    std::thread::scope(|s| {
        for id in &ids {
            let svc = &svc;
            s.spawn(move || {
                for u in COOPERATIVE {
                    svc.post_user_message(id, u).unwrap();
                }
            });
        }
    });
    for id in &ids {
        assert_eq!(svc.dialogue(id).unwrap().turns, want);
    }
    assert_eq!(svc.list_sessions().len(), 4);
}

#[test]
fn lists_tasks_from_a_directory() {
    let svc = service_for(golf_world(false));
    assert_eq!(svc.list_tasks().len(), 3);
    let dir = tempfile::tempdir().unwrap();
    for (name, json) in sopplan_core::fixtures::ALL_TASKS {
        std::fs::write(dir.path().join(format!("{name}.json")), json).unwrap();
    }
    let catalog = TaskCatalog::load_dir(dir.path()).unwrap();
    let summaries = catalog.summaries();
    assert_eq!(summaries.len(), 3);
    assert!(summaries.iter().all(|s| !s.domain.is_empty() && !s.task.is_empty()));
}
