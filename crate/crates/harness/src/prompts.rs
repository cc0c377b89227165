use std::fmt;

use serde::{Deserialize, Serialize};
use tvl_core::tvl::{render_tvl, TvlQuery};

use crate::DatasetRecord;

const GEN_BASIC: &str = include_str!("../prompts/gen_basic.txt");
const GEN_AREA: &str = include_str!("../prompts/gen_area_diverse.txt");
const GEN_TIME: &str = include_str!("../prompts/gen_time_diverse.txt");
const CORRECT_REDUNDANCY: &str = include_str!("../prompts/correct_redundancy.txt");
const CORRECT_MISSING: &str = include_str!("../prompts/correct_missing.txt");
const CORRECT_ERROR: &str = include_str!("../prompts/correct_error.txt");
const FEWSHOT: &str = include_str!("../prompts/fewshot_translate.txt");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptKind {
    GenBasic,
    GenAreaDiverse,
    GenTimeDiverse,
    CorrectRedundancy,
    CorrectMissing,
    CorrectError,
    FewshotTranslate,
}

impl PromptKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PromptKind::GenBasic => "gen_basic",
            PromptKind::GenAreaDiverse => "gen_area_diverse",
            PromptKind::GenTimeDiverse => "gen_time_diverse",
            PromptKind::CorrectRedundancy => "correct_redundancy",
            PromptKind::CorrectMissing => "correct_missing",
            PromptKind::CorrectError => "correct_error",
            PromptKind::FewshotTranslate => "fewshot_translate",
        }
    }
}

impl fmt::Display for PromptKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// The defect a question was flagged with during review.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Issue {
    Redundancy,
    Missing,
    Error,
}

impl std::str::FromStr for Issue {
    type Err = String;

    fn from_str(s: &str) -> Result<Issue, String> {
        match s.to_ascii_lowercase().as_str() {
            "redundancy" => Ok(Issue::Redundancy),
            "missing" => Ok(Issue::Missing),
            "error" => Ok(Issue::Error),
            _ => Err(format!("unknown issue `{s}` (expected redundancy, missing or error)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Demo {
    pub question: String,
    pub tvl: String,
}

impl From<&DatasetRecord> for Demo {
    fn from(r: &DatasetRecord) -> Demo {
        Demo { question: r.question.clone(), tvl: r.tvl.clone() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptSpec {
    pub kind: PromptKind,
    pub system: String,
    pub demos: Vec<Demo>,
    pub payload: String,
}

impl PromptSpec {
    /// Chat messages: the system text, each demonstration as a user turn
    /// answered by an assistant turn, then the payload.
    pub fn messages(&self) -> Vec<Message> {
        let mut out = vec![Message { role: Role::System, content: self.system.clone() }];
        for d in &self.demos {
            out.push(Message { role: Role::User, content: d.question.clone() });
            out.push(Message { role: Role::Assistant, content: d.tvl.clone() });
        }
        out.push(Message { role: Role::User, content: self.payload.clone() });
        out
    }

    /// Single-text rendering for logs and the command line.
    pub fn render(&self) -> String {
        let mut s = format!("### {}\n{}\n", self.kind, self.system.trim_end());
        for (i, d) in self.demos.iter().enumerate() {
            s.push_str(&format!("\nExample {}\nQuestion: {}\nTVL: {}\n", i + 1, d.question, d.tvl));
        }
        s.push_str(&format!("\n{}\n", self.payload));
        s
    }
}

fn tvl_payload(q: &TvlQuery) -> String {
    format!("TVL: {}", render_tvl(q))
}

/// Question-generation prompts for one statement. The time variant is only
/// built when the statement has a window.
pub fn build_nlq_prompts(q: &TvlQuery) -> Vec<PromptSpec> {
    let mut kinds = vec![(PromptKind::GenBasic, GEN_BASIC), (PromptKind::GenAreaDiverse, GEN_AREA)];
    if q.time.is_some() {
        kinds.push((PromptKind::GenTimeDiverse, GEN_TIME));
    }
    kinds
        .into_iter()
        .map(|(kind, system)| PromptSpec { kind, system: system.to_string(), demos: vec![], payload: tvl_payload(q) })
        .collect()
}

pub fn build_correction_prompt(q: &TvlQuery, question: &str, issue: Issue) -> PromptSpec {
    let (kind, system) = match issue {
        Issue::Redundancy => (PromptKind::CorrectRedundancy, CORRECT_REDUNDANCY),
        Issue::Missing => (PromptKind::CorrectMissing, CORRECT_MISSING),
        Issue::Error => (PromptKind::CorrectError, CORRECT_ERROR),
    };
    PromptSpec {
        kind,
        system: system.to_string(),
        demos: vec![],
        payload: format!("{}\nQuestion: {}", tvl_payload(q), question.trim()),
    }
}

/// Translation prompt with `demos` in the order given.
///
/// # Panics
///
/// If `demos` is empty.
pub fn build_fewshot_prompt(question: &str, demos: &[Demo]) -> PromptSpec {
    assert!(!demos.is_empty(), "a few-shot prompt needs at least one demonstration");
    PromptSpec {
        kind: PromptKind::FewshotTranslate,
        system: FEWSHOT.to_string(),
        demos: demos.to_vec(),
        payload: question.trim().to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use tvl_core::tvl::parse_tvl;

    const FULL: &str = "VISUALIZE map AREA \"Miyun District, Beijing\" TIME \"2010-03-22 09:00:00\" TO \"2012-05-04 21:01:00\" SQL SELECT latitude, longitude FROM traj_data";

    fn demo(i: usize) -> Demo {
        Demo { question: format!("question {i}"), tvl: format!("VISUALIZE bar SQL SELECT travel_mode, COUNT(*) FROM traj_labels GROUP BY travel_mode -- {i}") }
    }

    #[test]
    fn generation_variants() {
        let q = parse_tvl(FULL).unwrap();
        let ps = build_nlq_prompts(&q);
        let kinds: Vec<_> = ps.iter().map(|p| p.kind).collect();
        assert_eq!(kinds, [PromptKind::GenBasic, PromptKind::GenAreaDiverse, PromptKind::GenTimeDiverse]);
        for p in &ps {
            assert!(p.payload.contains("Miyun District, Beijing"));
            assert!(p.payload.contains(&render_tvl(&q)));
        }
        assert!(ps[1].system.contains("consistency of spatial references"));

        let no_time = parse_tvl("VISUALIZE map AREA \"Miyun District, Beijing\" SQL SELECT latitude FROM traj_data").unwrap();
        assert_eq!(build_nlq_prompts(&no_time).len(), 2);
    }

    #[test]
    fn correction_instructions() {
        let q = parse_tvl(FULL).unwrap();
        let p = |i| build_correction_prompt(&q, "Show me Miyun.", i);
        assert!(p(Issue::Missing).system.contains("cover all the necessary fields in the TVL"));
        assert!(p(Issue::Error).system.contains("time, area, and SQL"));
        assert!(p(Issue::Redundancy).system.contains("not related to TVL"));
        let m = p(Issue::Error);
        assert!(m.payload.contains(FULL) && m.payload.ends_with("Question: Show me Miyun."));
    }

    #[test]
    fn fewshot_keeps_order_and_is_deterministic() {
        let demos: Vec<Demo> = (1..=6).map(demo).collect();
        let p = build_fewshot_prompt("How many points per mode?", &demos);
        let msgs = p.messages();
        assert_eq!(msgs.len(), 1 + 2 * 6 + 1);
        for (i, d) in demos.iter().enumerate() {
            assert_eq!(msgs[1 + 2 * i].content, d.question);
            assert_eq!(msgs[2 + 2 * i].role, Role::Assistant);
        }
        assert_eq!(msgs.last().unwrap().content, "How many points per mode?");
        assert_eq!(p.render(), build_fewshot_prompt("How many points per mode?", &demos).render());

        let one = build_fewshot_prompt("q", &demos[..1]);
        assert_eq!(one.render().matches("Example ").count(), 1);
    }

    #[test]
    #[should_panic]
    fn fewshot_without_demos() {
        build_fewshot_prompt("q", &[]);
    }
}
