use indexmap::IndexMap;
use rand::seq::IndexedRandom;
use rand::Rng;

use super::DatagenError;
use crate::llm::{extract_json_block, Backend, PromptRequest, Sampling, TemplateId, TemplateSet};
use crate::task::{TaskDefinition, UserProfile};

const SURNAMES: &[&str] = &[
    "Wang", "Li", "Zhang", "Liu", "Chen", "Yang", "Huang", "Zhao", "Wu", "Zhou", "Xu", "Sun", "Ma", "Zhu", "Hu",
    "Guo", "He", "Gao", "Lin", "Luo", "Zheng", "Liang", "Xie", "Song", "Tang", "Han", "Feng", "Deng", "Cao", "Peng",
];
const GIVEN: &[&str] = &[
    "Wei", "Fang", "Na", "Min", "Jing", "Lei", "Qiang", "Yan", "Jie", "Tao", "Ming", "Chao", "Xiu", "Hui", "Ping",
    "Gang", "Hong", "Yun", "Bo", "Lan", "Jun", "Kai", "Ling", "Rui", "Xin", "Hao", "Yu", "Zhen", "Qing", "Dan",
];
const OCCUPATIONS: &[&str] = &[
    "Teacher", "Nurse", "Software Engineer", "Accountant", "Sales Manager", "Civil Servant", "Doctor", "Lawyer",
    "Shop Owner", "Driver", "Retired", "Student", "Architect", "Chef", "Company Executive",
];
const CUSTOMER_TYPES: &[&str] = &["Ordinary", "Large Deposit", "VIP", "New Customer", "Long-term Customer"];

fn sample_value<R: Rng + ?Sized>(key: &str, original: &str, rng: &mut R) -> String {
    let k = key.to_ascii_lowercase();
    let one = |pool: &[&str], rng: &mut R| pool.choose(rng).copied().unwrap_or_default().to_string();
    if k == "name" || k.ends_with(" name") || k.ends_with("_name") {
        format!("{} {}{}", one(SURNAMES, rng), one(GIVEN, rng), one(GIVEN, rng).to_lowercase())
    } else if k == "title" {
        one(&["Mr.", "Ms."], rng)
    } else if k == "gender" || k == "sex" {
        one(&["Male", "Female"], rng)
    } else if k == "age" {
        rng.random_range(18..=80).to_string()
    } else if k.contains("occupation") || k == "job" {
        one(OCCUPATIONS, rng)
    } else if k.contains("customer_type") || k.contains("customer type") {
        one(CUSTOMER_TYPES, rng)
    } else if !original.is_empty() && original.chars().all(|c| c.is_ascii_digit()) {
        (0..original.len()).map(|_| char::from(b'0' + rng.random_range(0..10u8))).collect()
    } else {
        // free text the pools know nothing about stays as the task wrote it
        original.to_string()
    }
}

/// Seeded profile with the task's key set. Names, titles, gender, age,
/// occupation, customer type and all-digit fields are redrawn.
pub fn sample_profile<R: Rng + ?Sized>(task: &TaskDefinition, rng: &mut R) -> UserProfile {
    UserProfile(
        task.user_profile
            .0
            .iter()
            .map(|(k, v)| (k.clone(), sample_value(k, v, rng)))
            .collect(),
    )
}

/// Asks the backend to role-play a customer. The reply must be a JSON object
/// with exactly the task's profile keys; values are stringified.
pub fn backend_profile(
    task: &TaskDefinition,
    backend: &dyn Backend,
    templates: &TemplateSet,
) -> Result<UserProfile, DatagenError> {
    let keys: Vec<&str> = task.user_profile.keys().collect();
    let text = templates.render(
        TemplateId::ProfileSim,
        &[
            ("profile_keys", &serde_json::to_string(&keys).unwrap_or_default()),
            ("task_knowledge", &task.knowledge_json()),
        ],
    )?;
    let out = backend.complete(&PromptRequest::new(TemplateId::ProfileSim, text, Sampling::TASK2, 1))?;
    let (value, _) = extract_json_block(&out[0].text)?;
    let obj = value
        .as_object()
        .ok_or_else(|| DatagenError::ProfileInvalid("expected a JSON object".into()))?;
    let mut profile = IndexMap::new();
    for k in &keys {
        let v = obj
            .get(*k)
            .ok_or_else(|| DatagenError::ProfileInvalid(format!("missing key `{k}`")))?;
        let v = match v {
            serde_json::Value::String(s) => s.clone(),
            other => other.to_string(),
        };
        profile.insert(k.to_string(), v);
    }
    if let Some(extra) = obj.keys().find(|k| !task.user_profile.0.contains_key(*k)) {
        return Err(DatagenError::ProfileInvalid(format!("unexpected key `{extra}`")));
    }
    Ok(UserProfile(profile))
}
