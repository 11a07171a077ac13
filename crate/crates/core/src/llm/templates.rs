use std::collections::BTreeMap;
use std::path::Path;
use std::sync::OnceLock;

use thiserror::Error;

use super::TemplateId;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TemplateError {
    #[error("template {template} has no value for slot `{slot}`")]
    MissingSlot { template: TemplateId, slot: String },
    #[error("reading templates: {0}")]
    Io(String),
}

macro_rules! builtin {
    ($($id:ident => $file:literal),* $(,)?) => {
        fn builtin_text(id: TemplateId) -> &'static str {
            match id {
                $(TemplateId::$id => include_str!(concat!("../../templates/", $file)),)*
            }
        }
    };
}

builtin! {
    SopAl => "sop_al.txt",
    SopTcotDescribe => "sop_tcot_describe.txt",
    SopTcotTranslate => "sop_tcot_translate.txt",
    SceneEnrich => "scene_enrich.txt",
    DialogueWrite => "dialogue_write.txt",
    SampleAction => "sample_action.txt",
    GenResponse => "gen_response.txt",
    RewardJudge => "reward_judge.txt",
    UserState => "user_state.txt",
    Cot => "cot.txt",
    CotSop => "cot_sop.txt",
    TotVote => "tot_vote.txt",
    UserSim => "user_sim.txt",
    ProfileSim => "profile_sim.txt",
}

/// Prompt templates with `{{slot}}` placeholders. The built-in set is
/// compiled in; a directory of same-named files can override any of them.
#[derive(Debug, Clone)]
pub struct TemplateSet {
    texts: BTreeMap<TemplateId, String>,
}

impl Default for TemplateSet {
    fn default() -> Self {
        TemplateSet {
            texts: TemplateId::ALL
                .into_iter()
                .map(|id| (id, builtin_text(id).to_string()))
                .collect(),
        }
    }
}

impl TemplateSet {
    pub fn builtin() -> &'static TemplateSet {
        static SET: OnceLock<TemplateSet> = OnceLock::new();
        SET.get_or_init(TemplateSet::default)
    }

    /// Built-ins overridden by any `<template_id>.txt` files in `dir`.
    pub fn with_overrides(dir: &Path) -> Result<TemplateSet, TemplateError> {
        let mut set = TemplateSet::default();
        for id in TemplateId::ALL {
            let path = dir.join(id.file_name());
            if path.exists() {
                let text = std::fs::read_to_string(&path)
                    .map_err(|e| TemplateError::Io(format!("{}: {e}", path.display())))?;
                set.texts.insert(id, text);
            }
        }
        Ok(set)
    }

    pub fn text(&self, id: TemplateId) -> &str {
        &self.texts[&id]
    }

    /// Placeholders used by a template, in first-use order.
    pub fn slots(&self, id: TemplateId) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        let text = self.text(id);
        let mut rest = text;
        while let Some(i) = rest.find("{{") {
            let after = &rest[i + 2..];
            let Some(j) = after.find("}}") else { break };
            let name = after[..j].trim().to_string();
            if !out.contains(&name) {
                out.push(name);
            }
            rest = &after[j + 2..];
        }
        out
    }

    pub fn render(&self, id: TemplateId, values: &[(&str, &str)]) -> Result<String, TemplateError> {
        let text = self.text(id);
        let mut out = String::with_capacity(text.len() + values.iter().map(|(_, v)| v.len()).sum::<usize>());
        let mut rest = text;
        while let Some(i) = rest.find("{{") {
            out.push_str(&rest[..i]);
            let after = &rest[i + 2..];
            let Some(j) = after.find("}}") else {
                out.push_str(&rest[i..]);
                rest = "";
                break;
            };
            let name = after[..j].trim();
            let value = values
                .iter()
                .find(|(k, _)| *k == name)
                .map(|(_, v)| *v)
                .ok_or_else(|| TemplateError::MissingSlot {
                    template: id,
                    slot: name.to_string(),
                })?;
            out.push_str(value);
            rest = &after[j + 2..];
        }
        out.push_str(rest);
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_template_renders_with_its_slots() {
        let set = TemplateSet::builtin();
        for id in TemplateId::ALL {
            let slots = set.slots(id);
            assert!(!slots.is_empty(), "{id} has no slots");
            let values: Vec<(String, String)> = slots.iter().map(|s| (s.clone(), format!("<{s}>"))).collect();
            let refs: Vec<(&str, &str)> = values.iter().map(|(a, b)| (a.as_str(), b.as_str())).collect();
            let out = set.render(id, &refs).unwrap();
            assert!(!out.contains("{{"), "{id} left a placeholder");
            for s in &slots {
                assert!(out.contains(&format!("<{s}>")));
            }
        }
    }

    #[test]
    fn output_labels_present() {
        let set = TemplateSet::builtin();
        assert!(set.text(TemplateId::SampleAction).contains("Therefore, the best agent action is:"));
        assert!(set.text(TemplateId::RewardJudge).contains("Therefore, the answer is:"));
        assert!(set.text(TemplateId::UserState).contains("User State:"));
        for id in [TemplateId::Cot, TemplateId::CotSop] {
            let t = set.text(id);
            assert!(t.contains("User State:") && t.contains("Agent Action:") && t.contains("Agent Response:"));
        }
        assert!(set.text(TemplateId::TotVote).contains("Therefore, the best candidate is:"));
    }

    #[test]
    fn missing_slot_is_an_error() {
        let err = TemplateSet::builtin().render(TemplateId::UserState, &[]).unwrap_err();
        assert!(matches!(err, TemplateError::MissingSlot { .. }));
    }

    #[test]
    fn directory_overrides() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("cot.txt"), "custom {{context}}").unwrap();
        let set = TemplateSet::with_overrides(dir.path()).unwrap();
        assert_eq!(set.render(TemplateId::Cot, &[("context", "x")]).unwrap(), "custom x");
        assert_eq!(set.text(TemplateId::SopAl), TemplateSet::builtin().text(TemplateId::SopAl));
    }
}
