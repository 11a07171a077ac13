//! Scripted conversation worlds: rule sets that make a [`ScriptedBackend`]
//! behave like a consistent agent model, judge and simulated customer.

use crate::llm::{ScriptRule, ScriptedBackend, TemplateId};

/// How the simulated customer answers one agent action.
#[derive(Debug, Clone, PartialEq)]
pub struct Reply {
    pub after_action: String,
    pub utterance: String,
    pub state: String,
}

/// Declarative description of a scripted world. Actions and states are bare
/// names from the task vocabulary.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScriptedWorld {
    pub opening: Vec<String>,
    /// Sampled actions keyed by the latest user state.
    pub policy: Vec<(String, Vec<String>)>,
    pub replies: Vec<Reply>,
    pub default_reply: Option<(String, String)>,
    /// Judge verdict per action; unlisted actions get `default_verdict`.
    pub verdicts: Vec<(String, bool)>,
    pub default_verdict: bool,
    pub lines: Vec<(String, String)>,
    /// Utterances the user may say that the simulator never produces.
    pub heard: Vec<(String, String)>,
}

impl ScriptedWorld {
    pub fn reply(mut self, after_action: &str, utterance: &str, state: &str) -> Self {
        self.replies.retain(|r| r.after_action != after_action);
        self.replies.push(Reply {
            after_action: after_action.into(),
            utterance: utterance.into(),
            state: state.into(),
        });
        self
    }

    pub fn heard(mut self, utterance: &str, state: &str) -> Self {
        self.heard.push((utterance.into(), state.into()));
        self
    }

    pub fn policy(mut self, state: &str, actions: &[&str]) -> Self {
        self.policy.retain(|(s, _)| s != state);
        self.policy.push((state.into(), actions.iter().map(|a| a.to_string()).collect()));
        self
    }

    pub fn verdict(mut self, action: &str, ok: bool) -> Self {
        self.verdicts.retain(|(a, _)| a != action);
        self.verdicts.push((action.into(), ok));
        self
    }

    fn line_for(&self, action: &str) -> String {
        self.lines
            .iter()
            .find(|(a, _)| a == action)
            .map(|(_, l)| l.clone())
            .unwrap_or_else(|| format!("({action}) Let me take care of that for you."))
    }

    fn state_after(&self, utterance: &str) -> Option<&str> {
        self.replies
            .iter()
            .find(|r| r.utterance == utterance)
            .map(|r| r.state.as_str())
            .or(self.default_reply.as_ref().filter(|(u, _)| u == utterance).map(|(_, s)| s.as_str()))
            .or(self.heard.iter().find(|(u, _)| u == utterance).map(|(_, s)| s.as_str()))
    }

    pub fn rules(&self) -> Vec<ScriptRule> {
        let mut rules = Vec::new();
        let all_actions: Vec<&str> = self
            .policy
            .iter()
            .flat_map(|(_, a)| a.iter())
            .chain(self.opening.iter())
            .chain(self.replies.iter().map(|r| &r.after_action))
            .chain(self.verdicts.iter().map(|(a, _)| a))
            .chain(self.lines.iter().map(|(a, _)| a))
            .map(String::as_str)
            .collect();
        let mut seen = Vec::new();
        for a in all_actions {
            if seen.contains(&a) {
                continue;
            }
            seen.push(a);
            rules.push(ScriptRule::new(
                TemplateId::GenResponse,
                &[&format!("Chosen agent action: {a}\n")],
                &[&self.line_for(a)],
            ));
            let verdict = self.verdicts.iter().find(|(x, _)| x == a).map_or(self.default_verdict, |(_, v)| *v);
            rules.push(ScriptRule::new(
                TemplateId::RewardJudge,
                &[&format!("Proposed agent action: {a}\n")],
                &[&format!("Judgement noted.\nTherefore, the answer is: {}", u8::from(verdict))],
            ));
        }
        rules.push(ScriptRule::new(
            TemplateId::GenResponse,
            &[],
            &["Let me take care of that for you."],
        ));
        rules.push(ScriptRule::new(
            TemplateId::RewardJudge,
            &[],
            &[&format!("Therefore, the answer is: {}", u8::from(self.default_verdict))],
        ));

        for r in &self.replies {
            rules.push(
                ScriptRule::new(
                    TemplateId::UserSim,
                    &[&format!("{}\n", r.after_action)],
                    &[&format!("User Response: {}", r.utterance)],
                )
                .after_last("Agent Action: "),
            );
        }
        if let Some((u, _)) = &self.default_reply {
            rules.push(ScriptRule::new(TemplateId::UserSim, &[], &[&format!("User Response: {u}")]));
        }

        let utterances = self
            .replies
            .iter()
            .map(|r| r.utterance.as_str())
            .chain(self.default_reply.as_ref().map(|(u, _)| u.as_str()))
            .chain(self.heard.iter().map(|(u, _)| u.as_str()));
        for u in utterances {
            let Some(state) = self.state_after(u) else { continue };
            rules.push(
                ScriptRule::new(TemplateId::UserState, &[u], &[&format!("User State: {state}")])
                    .after_last("User Response: "),
            );
            if let Some(action) = self.policy_for(state).first() {
                let text = format!(
                    "User State: {state}\nAgent Action: {action}\nAgent Response: {}",
                    self.line_for(action)
                );
                for id in [TemplateId::Cot, TemplateId::CotSop] {
                    rules.push(ScriptRule::new(id, &[u], &[&text]).after_last("User Response: "));
                }
            }
        }

        if let Some(first) = self.opening.first() {
            let text = format!("Agent Action: {first}\nAgent Response: {}", self.line_for(first));
            for id in [TemplateId::Cot, TemplateId::CotSop] {
                rules.push(ScriptRule::new(id, &["(the call is just starting"], &[&text]));
            }
            let samples: Vec<String> = self
                .opening
                .iter()
                .map(|a| format!("Analysis: open the call.\nTherefore, the best agent action is: {a}"))
                .collect();
            let refs: Vec<&str> = samples.iter().map(String::as_str).collect();
            rules.push(ScriptRule::new(TemplateId::SampleAction, &["(the call is just starting"], &refs));
        }
        for (state, actions) in &self.policy {
            let samples: Vec<String> = actions
                .iter()
                .map(|a| format!("Analysis: the customer is {state}.\nTherefore, the best agent action is: {a}"))
                .collect();
            let refs: Vec<&str> = samples.iter().map(String::as_str).collect();
            rules.push(
                ScriptRule::new(TemplateId::SampleAction, &[&format!("{state}\n")], &refs).after_last("User State: "),
            );
        }
        rules.push(ScriptRule::new(
            TemplateId::TotVote,
            &[],
            &["All similar.\nTherefore, the best candidate is: 1"],
        ));
        rules
    }

    fn policy_for(&self, state: &str) -> &[String] {
        self.policy
            .iter()
            .find(|(s, _)| s == state)
            .map(|(_, a)| a.as_slice())
            .unwrap_or(&[])
    }

    pub fn backend(&self) -> ScriptedBackend {
        ScriptedBackend::new(self.rules())
    }
}

/// Golf-invitation world. A `busy` customer first declines the invitation
/// and accepts once persuaded.
pub fn golf_world(busy: bool) -> ScriptedWorld {
    let w = ScriptedWorld {
        opening: vec!["VerifyIdentity".into()],
        default_reply: Some(("Hmm, go on.".into(), "HabitualResponseAndContinue".into())),
        default_verdict: true,
        lines: vec![
            ("VerifyIdentity".into(), "Hello, am I speaking with the member on file?".into()),
            (
                "InviteToGolfExperienceEvent".into(),
                "We are hosting a free golf experience day and would love to invite you.".into(),
            ),
            (
                "AttemptPersuasion".into(),
                "It only takes a morning, and a coach will be there the whole time.".into(),
            ),
            (
                "InquireAboutParticipationNumberOrTime".into(),
                "How many people will come, and what time suits you?".into(),
            ),
            ("InformBookingSuccess".into(), "You are booked in. We look forward to seeing you.".into()),
            ("PoliteEnd".into(), "Thank you for your time. Goodbye.".into()),
            ("Chat".into(), "The weather has been lovely for golf lately.".into()),
        ],
        ..ScriptedWorld::default()
    };
    let w = w
        .reply("VerifyIdentity", "Yes, speaking, this is me.", "IsThemselves")
        .reply("AttemptPersuasion", "Well, if it is free, count me in.", "ClearAgreement")
        .reply(
            "InquireAboutParticipationNumberOrTime",
            "Two people, Saturday morning at nine.",
            "ProvidedParticipationNumberAndTime",
        )
        .reply("InformBookingSuccess", "Great, thank you, goodbye.", "Ending")
        .reply("PoliteEnd", "Goodbye.", "Ending");
    let w = if busy {
        w.reply("InviteToGolfExperienceEvent", "I am afraid I am quite busy lately.", "Inconvenient")
    } else {
        w.reply("InviteToGolfExperienceEvent", "That sounds fun, I would like to join.", "ClearAgreement")
    };
    w.policy("IsThemselves", &["InviteToGolfExperienceEvent"])
        .policy("ClearAgreement", &["InquireAboutParticipationNumberOrTime"])
        .policy("Inconvenient", &["PoliteEnd", "AttemptPersuasion"])
        .policy("ProvidedParticipationNumberAndTime", &["InformBookingSuccess"])
        .policy("Ending", &["PoliteEnd"])
        .policy("HabitualResponseAndContinue", &["PoliteEnd"])
        .verdict("PoliteEnd", false)
        .verdict("Chat", false)
}
