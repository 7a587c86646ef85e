//! Problem XML (an OLX subset) into [`QuestionRecord`]s.

use std::fmt;

use roxmltree::{Document, Node};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResponseType {
    MultipleChoice,
    Checkbox,
    Dropdown,
    ShortAnswer,
    DragAndDrop,
}

impl ResponseType {
    pub const ALL: [ResponseType; 5] = [
        ResponseType::MultipleChoice,
        ResponseType::Checkbox,
        ResponseType::Dropdown,
        ResponseType::ShortAnswer,
        ResponseType::DragAndDrop,
    ];

    /// Human label used inside the problem-information record ("multiple choice").
    pub fn label(self) -> &'static str {
        match self {
            ResponseType::MultipleChoice => "multiple choice",
            ResponseType::Checkbox => "checkbox",
            ResponseType::Dropdown => "dropdown",
            ResponseType::ShortAnswer => "short answer",
            ResponseType::DragAndDrop => "drag and drop",
        }
    }

    pub fn from_label(label: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|t| t.label() == label)
    }

    /// Types answered by selecting choice indices.
    pub fn is_choice(self) -> bool {
        matches!(
            self,
            ResponseType::MultipleChoice | ResponseType::Checkbox | ResponseType::Dropdown
        )
    }
}

impl fmt::Display for ResponseType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// One parsed assessment item.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionRecord {
    pub question_id: String,
    pub problem_stem: String,
    pub response_type: ResponseType,
    /// Empty for short answer and drag and drop.
    pub choices: Vec<String>,
    /// Sorted 0-based indices; choice types only.
    pub correct_choices: Vec<usize>,
    /// Short answer only.
    pub accepted_answers: Vec<String>,
    pub explanation: String,
    pub excluded_from_misconceptions: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProblemError {
    #[error("XML syntax error: {0}")]
    XmlSyntax(String),
    #[error("unsupported response type <{0}>")]
    UnsupportedResponseType(String),
    #[error("choice question {0} has no correct choice")]
    NoCorrectChoice(String),
    #[error(
        "question {question_id}: {response_type} needs exactly one correct choice, found {found}"
    )]
    MultipleCorrect {
        question_id: String,
        response_type: ResponseType,
        found: usize,
    },
    #[error("question {question_id}: correct index {index} out of bounds for {n_choices} choices")]
    CorrectOutOfBounds {
        question_id: String,
        index: usize,
        n_choices: usize,
    },
    #[error("short answer question {0} has no accepted answer")]
    NoAcceptedAnswer(String),
}

impl QuestionRecord {
    /// Builds a record and checks its invariants.
    pub fn new(
        question_id: impl Into<String>,
        problem_stem: impl Into<String>,
        response_type: ResponseType,
        choices: Vec<String>,
        mut correct_choices: Vec<usize>,
        accepted_answers: Vec<String>,
        explanation: impl Into<String>,
    ) -> Result<Self, ProblemError> {
        let question_id = question_id.into();
        correct_choices.sort_unstable();
        correct_choices.dedup();
        if response_type.is_choice() {
            if correct_choices.is_empty() {
                return Err(ProblemError::NoCorrectChoice(question_id));
            }
            if let Some(&index) = correct_choices.iter().find(|&&i| i >= choices.len()) {
                return Err(ProblemError::CorrectOutOfBounds {
                    question_id,
                    index,
                    n_choices: choices.len(),
                });
            }
            if response_type != ResponseType::Checkbox && correct_choices.len() != 1 {
                return Err(ProblemError::MultipleCorrect {
                    question_id,
                    response_type,
                    found: correct_choices.len(),
                });
            }
        }
        if response_type == ResponseType::ShortAnswer && accepted_answers.is_empty() {
            return Err(ProblemError::NoAcceptedAnswer(question_id));
        }
        Ok(QuestionRecord {
            question_id,
            problem_stem: problem_stem.into(),
            response_type,
            choices,
            correct_choices,
            accepted_answers,
            explanation: explanation.into(),
            excluded_from_misconceptions: response_type == ResponseType::DragAndDrop,
        })
    }

    /// The problem-information record placed in prompts.
    pub fn problem_info(&self) -> ProblemInfo {
        let correct_choices = if self.response_type == ResponseType::ShortAnswer {
            self.accepted_answers
                .iter()
                .map(|a| CorrectChoice::Text(a.clone()))
                .collect()
        } else {
            self.correct_choices
                .iter()
                .map(|&i| CorrectChoice::Index(i))
                .collect()
        };
        ProblemInfo {
            problem_stem: self.problem_stem.clone(),
            response_type: self.response_type.label().to_string(),
            choices: self.choices.clone(),
            correct_choices,
            explanation: self.explanation.clone(),
        }
    }

    /// Inverse of [`QuestionRecord::problem_info`].
    pub fn from_problem_info(
        question_id: impl Into<String>,
        info: &ProblemInfo,
    ) -> Result<Self, ProblemError> {
        let response_type = ResponseType::from_label(&info.response_type)
            .ok_or_else(|| ProblemError::UnsupportedResponseType(info.response_type.clone()))?;
        let mut indices = Vec::new();
        let mut texts = Vec::new();
        for c in &info.correct_choices {
            match c {
                CorrectChoice::Index(i) => indices.push(*i),
                CorrectChoice::Text(t) => texts.push(t.clone()),
            }
        }
        QuestionRecord::new(
            question_id,
            info.problem_stem.clone(),
            response_type,
            info.choices.clone(),
            indices,
            texts,
            info.explanation.clone(),
        )
    }
}

/// Field order here is the serialized key order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProblemInfo {
    pub problem_stem: String,
    pub response_type: String,
    pub choices: Vec<String>,
    pub correct_choices: Vec<CorrectChoice>,
    pub explanation: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CorrectChoice {
    Index(usize),
    Text(String),
}

impl ProblemInfo {
    /// Two-space indented JSON in fixed key order.
    pub fn to_pretty_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("problem info serializes")
    }
}

fn collapse(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn text_of(node: Node<'_, '_>) -> String {
    let raw: String = node
        .descendants()
        .filter(|n| n.is_text())
        .filter_map(|n| n.text())
        .collect::<Vec<_>>()
        .join(" ");
    collapse(&raw)
}

fn is_truthy(value: Option<&str>) -> bool {
    value.is_some_and(|v| v.trim().eq_ignore_ascii_case("true"))
}

/// Splits an OLX options attribute such as `('a','b','c')`.
fn parse_options_attr(attr: &str) -> Vec<String> {
    let inner = attr.trim().trim_start_matches('(').trim_end_matches(')');
    let mut out = Vec::new();
    let mut chars = inner.chars().peekable();
    while let Some(c) = chars.next() {
        if c == '\'' || c == '"' {
            let quote = c;
            let mut item = String::new();
            for d in chars.by_ref() {
                if d == quote {
                    break;
                }
                item.push(d);
            }
            out.push(item);
        }
    }
    if out.is_empty() && !inner.trim().is_empty() {
        out = inner.split(',').map(|s| s.trim().to_string()).collect();
    }
    out
}

fn stem_for(problem: Node<'_, '_>, response: Node<'_, '_>) -> String {
    if let Some(label) = response
        .descendants()
        .find(|n| n.has_tag_name("label"))
        .map(text_of)
        .filter(|s| !s.is_empty())
    {
        return label;
    }
    // Fall back to prose preceding the response element.
    let parts: Vec<String> = problem
        .children()
        .take_while(|n| *n != response)
        .filter(|n| n.is_element() && !n.has_tag_name("solution"))
        .map(text_of)
        .filter(|s| !s.is_empty())
        .collect();
    parts.join(" ")
}

fn is_response_element(node: &Node<'_, '_>) -> bool {
    node.is_element() && node.tag_name().name().ends_with("response")
}

/// Parses one problem document.
pub fn parse_problem_xml(
    xml_text: &str,
    question_id: &str,
) -> Result<QuestionRecord, ProblemError> {
    let doc = Document::parse(xml_text).map_err(|e| ProblemError::XmlSyntax(e.to_string()))?;
    let problem = doc.root_element();
    if !problem.has_tag_name("problem") {
        return Err(ProblemError::XmlSyntax(format!(
            "root element is <{}>, expected <problem>",
            problem.tag_name().name()
        )));
    }
    let response = problem
        .descendants()
        .find(is_response_element)
        .ok_or_else(|| ProblemError::UnsupportedResponseType("none".to_string()))?;
    let explanation = problem
        .descendants()
        .find(|n| n.has_tag_name("solution"))
        .map(text_of)
        .unwrap_or_default();
    let stem = stem_for(problem, response);

    let kind = response.tag_name().name();
    let (response_type, choices, correct, accepted) = match kind {
        "multiplechoiceresponse" | "choiceresponse" => {
            let response_type = if kind == "choiceresponse" {
                ResponseType::Checkbox
            } else {
                ResponseType::MultipleChoice
            };
            let mut choices = Vec::new();
            let mut correct = Vec::new();
            for (i, choice) in response
                .descendants()
                .filter(|n| n.has_tag_name("choice"))
                .enumerate()
            {
                choices.push(text_of(choice));
                if is_truthy(choice.attribute("correct")) {
                    correct.push(i);
                }
            }
            (response_type, choices, correct, Vec::new())
        }
        "optionresponse" => {
            let input = response
                .descendants()
                .find(|n| n.has_tag_name("optioninput"));
            let option_nodes: Vec<Node> = input
                .into_iter()
                .flat_map(|n| n.children().filter(|c| c.has_tag_name("option")))
                .collect();
            let (choices, correct) = if !option_nodes.is_empty() {
                let choices: Vec<String> = option_nodes.iter().map(|n| text_of(*n)).collect();
                let correct = option_nodes
                    .iter()
                    .enumerate()
                    .filter(|(_, n)| is_truthy(n.attribute("correct")))
                    .map(|(i, _)| i)
                    .collect();
                (choices, correct)
            } else {
                let options_attr = response
                    .attribute("options")
                    .or_else(|| input.and_then(|n| n.attribute("options")))
                    .unwrap_or("");
                let choices = parse_options_attr(options_attr);
                let correct_text = response
                    .attribute("correct")
                    .or_else(|| input.and_then(|n| n.attribute("correct")))
                    .unwrap_or("");
                let correct = choices
                    .iter()
                    .position(|c| c == correct_text)
                    .into_iter()
                    .collect();
                (choices, correct)
            };
            (ResponseType::Dropdown, choices, correct, Vec::new())
        }
        "stringresponse" => {
            let mut accepted: Vec<String> = response
                .attribute("answer")
                .map(|a| vec![a.trim().to_string()])
                .unwrap_or_default();
            accepted.extend(
                response
                    .descendants()
                    .filter(|n| n.has_tag_name("additional_answer"))
                    .filter_map(|n| {
                        n.attribute("answer")
                            .map(str::to_string)
                            .or_else(|| Some(text_of(n)))
                    })
                    .map(|s| s.trim().to_string())
                    .filter(|s| !s.is_empty()),
            );
            (ResponseType::ShortAnswer, Vec::new(), Vec::new(), accepted)
        }
        "draganddropresponse" => (
            ResponseType::DragAndDrop,
            Vec::new(),
            Vec::new(),
            Vec::new(),
        ),
        "customresponse"
            if response
                .descendants()
                .any(|n| n.has_tag_name("drag_and_drop_input")) =>
        {
            (
                ResponseType::DragAndDrop,
                Vec::new(),
                Vec::new(),
                Vec::new(),
            )
        }
        other => return Err(ProblemError::UnsupportedResponseType(other.to_string())),
    };

    QuestionRecord::new(
        question_id,
        stem,
        response_type,
        choices,
        correct,
        accepted,
        explanation,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testdata::IMMUNOTHERAPY_XML;

    #[test]
    fn multiple_choice_record() {
        let q = parse_problem_xml(IMMUNOTHERAPY_XML, "imm-nit-1").unwrap();
        assert_eq!(q.response_type, ResponseType::MultipleChoice);
        assert_eq!(q.correct_choices, vec![2]);
        assert_eq!(q.choices.len(), 4);
        assert_eq!(q.choices[0], "tumor vaccination with neoantigens");
        assert!(q.problem_stem.starts_with("Which of the therapies"));
        assert!(q.explanation.starts_with("Current checkpoint blockade"));
        assert!(!q.excluded_from_misconceptions);
    }

    #[test]
    fn checkbox_record() {
        let xml = r#"<problem><p>Pick the right ones.</p>
          <choiceresponse><checkboxgroup>
            <choice correct="false">A</choice><choice correct="true">B</choice><choice correct="True">C</choice>
          </checkboxgroup></choiceresponse></problem>"#;
        let q = parse_problem_xml(xml, "cb").unwrap();
        assert_eq!(q.response_type, ResponseType::Checkbox);
        assert_eq!(q.correct_choices, vec![1, 2]);
        assert_eq!(q.problem_stem, "Pick the right ones.");
        assert_eq!(q.explanation, "");
    }

    #[test]
    fn dropdown_from_options_attribute() {
        let xml = r#"<problem><p>The pH falls.</p>
          <optionresponse options="('rises','falls','stays')" correct="falls"><optioninput/></optionresponse>
          </problem>"#;
        let q = parse_problem_xml(xml, "dd").unwrap();
        assert_eq!(q.response_type, ResponseType::Dropdown);
        assert_eq!(q.choices, vec!["rises", "falls", "stays"]);
        assert_eq!(q.correct_choices, vec![1]);
    }

    #[test]
    fn dropdown_from_option_elements() {
        let xml = r#"<problem><optionresponse><label>Which?</label><optioninput>
            <option correct="False">a</option><option correct="True">b</option></optioninput>
          </optionresponse></problem>"#;
        let q = parse_problem_xml(xml, "dd2").unwrap();
        assert_eq!(q.correct_choices, vec![1]);
        assert_eq!(q.problem_stem, "Which?");
    }

    #[test]
    fn short_answer_with_additional() {
        let xml = r#"<problem><p>Name the pathway.</p>
          <stringresponse answer="glycolysis" type="ci">
            <additional_answer answer="Embden-Meyerhof pathway"/>
            <textline/>
          </stringresponse></problem>"#;
        let q = parse_problem_xml(xml, "sa").unwrap();
        assert_eq!(q.response_type, ResponseType::ShortAnswer);
        assert_eq!(
            q.accepted_answers,
            vec!["glycolysis", "Embden-Meyerhof pathway"]
        );
        assert!(q.choices.is_empty());
    }

    #[test]
    fn drag_and_drop_is_excluded() {
        let xml = r#"<problem><customresponse><drag_and_drop_input img="x.png"/></customresponse></problem>"#;
        let q = parse_problem_xml(xml, "dnd").unwrap();
        assert_eq!(q.response_type, ResponseType::DragAndDrop);
        assert!(q.excluded_from_misconceptions);
    }

    #[test]
    fn unsupported_and_malformed() {
        let xml = r#"<problem><imageresponse><imageinput/></imageresponse></problem>"#;
        assert_eq!(
            parse_problem_xml(xml, "img").unwrap_err(),
            ProblemError::UnsupportedResponseType("imageresponse".into())
        );
        assert!(matches!(
            parse_problem_xml("<problem><p>", "bad").unwrap_err(),
            ProblemError::XmlSyntax(_)
        ));
        let none_correct = r#"<problem><multiplechoiceresponse><choicegroup>
            <choice correct="false">a</choice></choicegroup></multiplechoiceresponse></problem>"#;
        assert_eq!(
            parse_problem_xml(none_correct, "nc").unwrap_err(),
            ProblemError::NoCorrectChoice("nc".into())
        );
    }

    #[test]
    fn problem_info_layout_and_round_trip() {
        let q = parse_problem_xml(IMMUNOTHERAPY_XML, "imm-nit-1").unwrap();
        let info = q.problem_info();
        let json = info.to_pretty_json();
        assert!(json.starts_with("{\n  \"problem_stem\": "));
        assert!(json.contains("\"response_type\": \"multiple choice\""));
        assert!(json.contains("\"correct_choices\": [\n    2\n  ]"));
        let keys: Vec<usize> = [
            "problem_stem",
            "response_type",
            "choices",
            "correct_choices",
            "explanation",
        ]
        .iter()
        .map(|k| json.find(&format!("\"{k}\"")).unwrap())
        .collect();
        assert!(keys.windows(2).all(|w| w[0] < w[1]));

        let parsed: ProblemInfo = serde_json::from_str(&json).unwrap();
        assert_eq!(
            QuestionRecord::from_problem_info("imm-nit-1", &parsed).unwrap(),
            q
        );
    }

    #[test]
    fn short_answer_info_round_trip() {
        let q = QuestionRecord::new(
            "sa",
            "Name it.",
            ResponseType::ShortAnswer,
            vec![],
            vec![],
            vec!["glycolysis".into()],
            "",
        )
        .unwrap();
        let info = q.problem_info();
        let back: ProblemInfo = serde_json::from_str(&info.to_pretty_json()).unwrap();
        assert_eq!(QuestionRecord::from_problem_info("sa", &back).unwrap(), q);
    }
}
