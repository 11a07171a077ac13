use proptest::prelude::*;
use sopplan_core::catalog::TaskCatalog;
use sopplan_core::eval::{
    bleu, compare_dialogues, run_benchmark, score_turns, self_play, EvalError, TurnOutcome,
};
use sopplan_core::fixtures::{golf_graph, golf_task, golf_world};
use sopplan_core::llm::{ScriptRule, ScriptedBackend, TemplateId, TemplateSet};
use sopplan_core::online::{PlannerConfig, PlannerMethod};
use sopplan_core::sop::SopGuide;
use sopplan_core::{Dialogue, QualifiedLabel};

fn played(busy: bool, id: &str) -> Dialogue {
    let task = golf_task();
    let guide = SopGuide::new(golf_graph()).unwrap();
    let backend = golf_world(busy).backend();
    let cfg = PlannerConfig::with_method(PlannerMethod::Cot);
    let out = self_play(&task, &guide, &cfg, &backend, &backend, TemplateSet::builtin()).unwrap();
    let mut d = out.dialogue;
    d.dialogue_id = Some(id.into());
    d
}

fn fixture() -> Vec<Dialogue> {
    let mut short = played(true, "c");
    short.turns.truncate(2);
    vec![played(false, "a"), played(true, "b"), short]
}

fn cot() -> PlannerConfig {
    PlannerConfig::with_method(PlannerMethod::Cot)
}

#[test]
fn self_play_reaches_goal_when_cooperative() {
    let d = played(false, "a");
    let actions: Vec<&str> = d.turns.iter().map(|t| t.agent_action.name()).collect();
    assert_eq!(
        actions,
        vec![
            "VerifyIdentity",
            "InviteToGolfExperienceEvent",
            "InquireAboutParticipationNumberOrTime",
            "InformBookingSuccess",
            "PoliteEnd"
        ]
    );
    assert!(d.turns[1..].iter().all(|t| t.user_state.is_some()));
}

#[test]
fn correct_planner_scores_one() {
    let dialogues = fixture();
    let backend = golf_world(true).backend();
    // the busy world's CoT rules cover the cooperative dialogue's replies too
    let mut rules = golf_world(false).rules();
    rules.extend(backend.rules().iter().cloned());
    let backend = ScriptedBackend::new(rules);
    let out = run_benchmark(&TaskCatalog::bundled(), &dialogues, &cot(), &backend, TemplateSet::builtin()).unwrap();
    let t = out.report.turns.unwrap();
    assert_eq!((t.acc_t, t.acc_c, t.acc_d), (1.0, 1.0, 1.0));
    assert_eq!(out.report.errors, 0);
    assert!(out.report.usage.total() > 0 && out.report.usage_estimated);
    assert_eq!(out.report.bleu2, Some(1.0));
}

#[test]
fn one_wrong_turn() {
    let dialogues = fixture();
    let total: usize = dialogues.iter().map(|d| d.turns.len()).sum();
    let mut rules = vec![ScriptRule::new(
        TemplateId::Cot,
        &["Two people, Saturday morning at nine."],
        &["User State: ProvidedParticipationNumberAndTime\nAgent Action: Chat\nAgent Response: Nice weather."],
    )
    .after_last("User Response: ")];
    rules.extend(golf_world(false).rules());
    rules.extend(golf_world(true).rules());
    let backend = ScriptedBackend::new(rules);
    let out = run_benchmark(&TaskCatalog::bundled(), &dialogues, &cot(), &backend, TemplateSet::builtin()).unwrap();
    let t = out.report.turns.unwrap();
    assert_eq!(t.acc_t, (total - 1) as f64 / total as f64);
    let bad_turns = dialogues[0].turns.len();
    assert_eq!(t.acc_d, (total - bad_turns) as f64 / total as f64);
    assert_eq!((t.perfect_dialogues, t.dialogues), (2, 3));
}

#[test]
fn failing_dialogue_is_isolated_and_runs_reproduce() {
    let mut dialogues = fixture();
    let mut odd = dialogues[0].clone();
    odd.dialogue_id = Some("odd".into());
    odd.turns[1].user_utterance = "an unscripted reply".into();
    dialogues.push(odd);
    let mut rules = golf_world(false).rules();
    rules.extend(golf_world(true).rules());
    let backend = ScriptedBackend::new(rules);
    let run = || run_benchmark(&TaskCatalog::bundled(), &dialogues, &cot(), &backend, TemplateSet::builtin()).unwrap();
    let out = run();
    assert_eq!(out.failures.len(), 1);
    assert_eq!(out.failures[0].dialogue_id, "odd");
    assert_eq!(out.failures[0].turn_index, Some(1));
    assert_eq!(out.report.errors, 1);
    assert_eq!(out.report.turns.unwrap().dialogues, 3);
    let again = run();
    assert_eq!(serde_json::to_string(&out.report).unwrap(), serde_json::to_string(&again.report).unwrap());
    assert_eq!(out.judgments, again.judgments);
}

#[test]
fn compare_against_itself() {
    let dialogues = fixture();
    let (report, judgments) = compare_dialogues(&dialogues, &dialogues, &TaskCatalog::bundled()).unwrap();
    assert_eq!(judgments.len(), dialogues.iter().map(|d| d.turns.len()).sum::<usize>());
    assert_eq!(report.turns.unwrap().acc_t, 1.0);

    let mut bad = dialogues.clone();
    bad[0].task_ref = "nope".into();
    assert_eq!(
        compare_dialogues(&bad, &bad, &TaskCatalog::bundled()).unwrap_err(),
        EvalError::UnknownTask("nope".into())
    );
    let mut shorter = dialogues.clone();
    shorter[0].turns.pop();
    let (r, _) = compare_dialogues(&shorter, &dialogues, &TaskCatalog::bundled()).unwrap();
    assert!(r.turns.unwrap().acc_t < 1.0);
}

#[test]
fn controllable_split_uses_gold_action() {
    let d = played(false, "a");
    let task = golf_task();
    let (_, judgments) = compare_dialogues(std::slice::from_ref(&d), std::slice::from_ref(&d), &TaskCatalog::bundled()).unwrap();
    for j in judgments {
        assert_eq!(j.gold_is_controllable, task.sop.vertex.contains(&j.gold.agent_action));
    }
    assert!(task.sop.vertex.contains(&QualifiedLabel::agent("PoliteEnd")));
}

fn outcomes() -> impl Strategy<Value = Vec<TurnOutcome>> {
    prop::collection::vec((0u8..5, any::<bool>(), any::<bool>()), 1..60).prop_map(|v| {
        v.into_iter()
            .map(|(d, ok, c)| TurnOutcome {
                dialogue_id: d.to_string(),
                action_correct: ok,
                gold_is_controllable: c,
            })
            .collect()
    })
}

proptest! {
    #[test]
    fn accuracy_identities(v in outcomes()) {
        let s = score_turns(&v).unwrap();
        prop_assert!(s.acc_d <= s.acc_t);
        let lhs = s.acc_t * s.turns as f64;
        let rhs = s.acc_c * s.controllable as f64 + s.acc_p * s.proactive as f64;
        prop_assert!((lhs - rhs).abs() < 1e-9);
        for x in [s.acc_t, s.acc_c, s.acc_p, s.acc_d] {
            prop_assert!((0.0..=1.0).contains(&x));
        }
    }

    #[test]
    fn bleu_self_is_one(words in prop::collection::vec("[a-z]{1,6}|[一-龥]", 1..20), n in 1usize..=4) {
        let x = words.join(" ");
        prop_assert!((bleu(&x, &[&x], n).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn bleu_reference_order_invariant(
        c in prop::collection::vec("[a-d]", 1..12),
        r1 in prop::collection::vec("[a-d]", 1..12),
        r2 in prop::collection::vec("[a-d]", 1..12),
    ) {
        let (c, r1, r2) = (c.join(" "), r1.join(" "), r2.join(" "));
        prop_assert_eq!(bleu(&c, &[&r1, &r2], 4).unwrap(), bleu(&c, &[&r2, &r1], 4).unwrap());
    }
}
