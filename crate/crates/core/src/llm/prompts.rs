use serde::{Deserialize, Serialize};

use crate::difficulty::MostCommonIncorrect;
use crate::ingest::{QuestionRecord, ResponsePayload, ResponseType};

use super::LlmError;

pub const SYNOPSIS_MODEL: &str = "gemini-2.0-flash";
pub const MISCONCEPTION_MODEL: &str = "gpt-4o-2024-08-06";
pub const SYNOPSIS_TEMPERATURE: f64 = 0.0;
pub const MISCONCEPTION_TEMPERATURE: f64 = 0.3;

pub const SYNOPSIS_TEMPLATE: &str = "You are tasked with creating a concise synopsis of a subsection of an online course for a teacher who will be using the course. Your goal is to produce a bulleted list of concepts covered in this section based on the provided lecture transcripts and topic title.

First, here is the title of the topic:

<topic_title>
${TOPIC_TITLE}
</topic_title>

Now, here are the transcripts of the lecture videos covering this topic:

<lecture_transcripts>
${VIDEO_TRANSCRIPTS}
</lecture_transcripts>

To create the synopsis:

1. Carefully read through the lecture transcripts.
2. Identify the main concepts discussed in the lectures.
3. For each concept, create a brief, one-sentence description that captures its essence.
4. Remember that the teacher already knows the subject material, so focus on describing what is being taught rather than explaining the concept in detail.

Create a markdown bulleted list of the concepts covered in this section. Each bullet point should follow this format:

<concept_name> - <concept description>

Where:

- <concept_name> is a short, clear name for the concept
- <concept description> is a single sentence describing what is being taught about this concept

Your final output should be a concise list of 5-10 bullet points, depending on the complexity and breadth of the topic. Present your list inside <synopsis> tags.

Example format:

<synopsis>

- Concept A - Description of what is taught about Concept A.
- Concept B - Description of what is taught about Concept B.
- Concept C - Description of what is taught about Concept C.

</synopsis>

Remember to keep each bullet point concise and focused on what is being taught, rather than explaining the concept itself.";

pub const MISCONCEPTION_SYSTEM: &str = "You are a helpful assistant who comes up with possible student misconceptions based on info about a problem, its most common incorrect answer, and a transcript of a video that goes with the problem.

You will be given the problem information, the most common incorrect answer, and the transcript of the video. First, carefully read all of the information given to you. Then, reason through what you think the most common student misconception(s) might be. Record your reasoning. Finally, list the misconception(s) you think are most likely.";

pub const MISCONCEPTION_TEMPLATE: &str = "Problem information:
${PROBLEM_INFO}

Most commonly selected incorrect answer choice (0-indexed on the choices if this is a list of integers):
${TOP_INCORRECT_ANSWER}

Transcript of the video, delimited by ####:
####
${TRANSCRIPT}
####

Now, reason to come up with the most common student misconceptions and list them, along with your reasoning.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemaId {
    /// Raw text holding a `<synopsis>` block.
    Synopsis,
    /// `{reasoning, misconceptions}`.
    Misconception,
}

impl SchemaId {
    pub fn as_str(self) -> &'static str {
        match self {
            SchemaId::Synopsis => "synopsis",
            SchemaId::Misconception => "misconception",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub model_name: String,
    pub temperature: f64,
    pub schema_id: SchemaId,
}

impl ModelParams {
    pub fn synopsis() -> Self {
        ModelParams {
            model_name: SYNOPSIS_MODEL.to_string(),
            temperature: SYNOPSIS_TEMPERATURE,
            schema_id: SchemaId::Synopsis,
        }
    }

    pub fn misconception() -> Self {
        ModelParams {
            model_name: MISCONCEPTION_MODEL.to_string(),
            temperature: MISCONCEPTION_TEMPERATURE,
            schema_id: SchemaId::Misconception,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Provenance {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub course: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quiz_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub question_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub topic: Option<String>,
}

impl Provenance {
    /// Mock fixture key: the question id for misconception calls, `synopsis__<topic>`
    /// for synopsis calls, with anything outside `[A-Za-z0-9_.-]` mapped to `_`.
    pub fn key(&self) -> String {
        let raw = match (&self.question_id, &self.topic, &self.quiz_id) {
            (Some(q), _, _) => q.clone(),
            (None, Some(t), _) => format!("synopsis__{t}"),
            (None, None, Some(q)) => format!("quiz__{q}"),
            _ => self.course.clone().unwrap_or_default(),
        };
        sanitize_key(&raw)
    }
}

pub fn sanitize_key(raw: &str) -> String {
    raw.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.') {
                c
            } else {
                '_'
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub system_message: String,
    pub user_message: String,
    pub model_params: ModelParams,
    pub provenance: Provenance,
}

impl PromptBundle {
    pub fn key(&self) -> String {
        self.provenance.key()
    }

    /// System message, a blank line, then the user message; the user message alone
    /// when there is no system message.
    pub fn to_text(&self) -> String {
        if self.system_message.is_empty() {
            self.user_message.clone()
        } else {
            format!("{}\n\n{}", self.system_message, self.user_message)
        }
    }
}

/// Single left-to-right pass, so placeholder-like text inside values is never expanded.
fn fill(template: &str, values: &[(&str, &str)]) -> String {
    let mut out =
        String::with_capacity(template.len() + values.iter().map(|(_, v)| v.len()).sum::<usize>());
    let mut rest = template;
    while let Some(start) = rest.find("${") {
        out.push_str(&rest[..start]);
        let after = &rest[start + 2..];
        let end = after.find('}').expect("template placeholders are closed");
        let name = &after[..end];
        let value = values
            .iter()
            .find(|(k, _)| *k == name)
            .unwrap_or_else(|| panic!("no value for template placeholder {name}"))
            .1;
        out.push_str(value);
        rest = &after[end + 1..];
    }
    out.push_str(rest);
    out
}

/// Manifest order, one blank line between transcripts.
pub fn join_transcripts<S: AsRef<str>>(transcripts: &[S]) -> String {
    transcripts
        .iter()
        .map(|t| t.as_ref())
        .collect::<Vec<_>>()
        .join("\n\n")
}

pub fn build_synopsis_prompt<S: AsRef<str>>(
    topic_title: &str,
    transcripts: &[S],
) -> Result<PromptBundle, LlmError> {
    if transcripts.is_empty() {
        return Err(LlmError::EmptyTranscripts);
    }
    let joined = join_transcripts(transcripts);
    Ok(PromptBundle {
        system_message: String::new(),
        user_message: fill(
            SYNOPSIS_TEMPLATE,
            &[("TOPIC_TITLE", topic_title), ("VIDEO_TRANSCRIPTS", &joined)],
        ),
        model_params: ModelParams::synopsis(),
        provenance: Provenance {
            topic: Some(topic_title.to_string()),
            ..Provenance::default()
        },
    })
}

/// `[0]` for choice types, the JSON-quoted text for short answers.
pub fn render_top_incorrect(payload: &ResponsePayload) -> String {
    match payload {
        ResponsePayload::Choices(v) => serde_json::to_string(v).expect("index list serializes"),
        ResponsePayload::Text(t) => serde_json::to_string(t).expect("string serializes"),
    }
}

pub fn build_misconception_prompt<S: AsRef<str>>(
    question: &QuestionRecord,
    top_incorrect: &MostCommonIncorrect,
    transcripts: &[S],
) -> Result<PromptBundle, LlmError> {
    if question.response_type == ResponseType::DragAndDrop {
        return Err(LlmError::ExcludedType(question.question_id.clone()));
    }
    if transcripts.is_empty() {
        return Err(LlmError::EmptyTranscripts);
    }
    let info = question.problem_info().to_pretty_json();
    let top = render_top_incorrect(&top_incorrect.payload);
    let joined = join_transcripts(transcripts);
    Ok(PromptBundle {
        system_message: MISCONCEPTION_SYSTEM.to_string(),
        user_message: fill(
            MISCONCEPTION_TEMPLATE,
            &[
                ("PROBLEM_INFO", &info),
                ("TOP_INCORRECT_ANSWER", &top),
                ("TRANSCRIPT", &joined),
            ],
        ),
        model_params: ModelParams::misconception(),
        provenance: Provenance {
            question_id: Some(question.question_id.clone()),
            ..Provenance::default()
        },
    })
}
