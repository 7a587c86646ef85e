//! Tracking-log lines into [`AttemptEvent`]s.

use std::io::BufRead;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

/// What a student submitted.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ResponsePayload {
    /// 0-based choice indices.
    Choices(Vec<usize>),
    Text(String),
}

impl ResponsePayload {
    /// Choice indices as a sorted, deduplicated set.
    pub fn choice_set(indices: impl IntoIterator<Item = usize>) -> Self {
        let mut v: Vec<usize> = indices.into_iter().collect();
        v.sort_unstable();
        v.dedup();
        ResponsePayload::Choices(v)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttemptEvent {
    pub student_id: String,
    pub question_id: String,
    pub timestamp: DateTime<Utc>,
    /// Position in read order across every parsed log.
    pub sequence_no: u64,
    pub response: ResponsePayload,
    pub run_label: String,
    /// Platform-reported correctness; consulted only for drag and drop.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub platform_correct: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    Syntax,
    Schema,
    EventType,
    Timestamp,
}

/// A quarantined log line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reject {
    /// 1-based line number within its source.
    pub line: usize,
    pub reason: RejectReason,
    pub detail: String,
}

#[derive(Debug, Deserialize)]
struct RawEvent {
    event_type: String,
    username: String,
    problem_id: String,
    time: String,
    run: String,
    answer: RawAnswer,
    #[serde(default)]
    correct: Option<bool>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum RawAnswer {
    Indices(Vec<usize>),
    Text(String),
}

/// The wire form of one log line. Used by generators and tests.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogLine {
    pub event_type: String,
    pub username: String,
    pub problem_id: String,
    pub time: String,
    pub run: String,
    pub answer: ResponsePayload,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correct: Option<bool>,
}

impl LogLine {
    pub fn problem_check(
        username: &str,
        problem_id: &str,
        time: DateTime<Utc>,
        run: &str,
        answer: ResponsePayload,
    ) -> Self {
        LogLine {
            event_type: PROBLEM_CHECK.to_string(),
            username: username.to_string(),
            problem_id: problem_id.to_string(),
            time: time.to_rfc3339_opts(chrono::SecondsFormat::AutoSi, true),
            run: run.to_string(),
            answer,
            correct: None,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("log line serializes")
    }
}

pub const PROBLEM_CHECK: &str = "problem_check";

/// Incremental parser that keeps sequence numbers increasing across several logs.
#[derive(Debug, Default)]
pub struct EventLogParser {
    next_seq: u64,
}

impl EventLogParser {
    pub fn new() -> Self {
        Self::default()
    }

    /// Parses one line. `Ok(None)` for blank lines.
    fn parse_line(&mut self, line: &str) -> Result<Option<AttemptEvent>, (RejectReason, String)> {
        let trimmed = line.trim();
        if trimmed.is_empty() {
            return Ok(None);
        }
        let value: serde_json::Value =
            serde_json::from_str(trimmed).map_err(|e| (RejectReason::Syntax, e.to_string()))?;
        let raw: RawEvent =
            serde_json::from_value(value).map_err(|e| (RejectReason::Schema, e.to_string()))?;
        if raw.event_type != PROBLEM_CHECK {
            return Err((RejectReason::EventType, raw.event_type));
        }
        let timestamp = DateTime::parse_from_rfc3339(&raw.time)
            .map_err(|e| (RejectReason::Timestamp, format!("{}: {e}", raw.time)))?
            .with_timezone(&Utc);
        let response = match raw.answer {
            RawAnswer::Indices(v) => ResponsePayload::choice_set(v),
            RawAnswer::Text(t) => ResponsePayload::Text(t),
        };
        let seq = self.next_seq;
        self.next_seq += 1;
        Ok(Some(AttemptEvent {
            student_id: raw.username,
            question_id: raw.problem_id,
            timestamp,
            sequence_no: seq,
            response,
            run_label: raw.run,
            platform_correct: raw.correct,
        }))
    }

    /// Parses a whole stream; malformed lines are collected, never fatal.
    pub fn parse<R: BufRead>(
        &mut self,
        reader: R,
    ) -> std::io::Result<(Vec<AttemptEvent>, Vec<Reject>)> {
        let mut events = Vec::new();
        let mut rejects = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            match self.parse_line(&line) {
                Ok(Some(ev)) => events.push(ev),
                Ok(None) => {}
                Err((reason, detail)) => rejects.push(Reject {
                    line: i + 1,
                    reason,
                    detail,
                }),
            }
        }
        Ok((events, rejects))
    }
}

/// Parses one log stream with sequence numbers starting at 0.
pub fn parse_event_log(text: &str) -> (Vec<AttemptEvent>, Vec<Reject>) {
    EventLogParser::new()
        .parse(text.as_bytes())
        .expect("reading from memory cannot fail")
}

#[cfg(test)]
mod tests {
    use super::*;

    const LINES: [&str; 3] = [
        r#"{"event_type":"problem_check","username":"s1","problem_id":"q1","time":"2020-01-01T10:00:00Z","run":"r1","answer":[2]}"#,
        r#"{"event_type":"problem_check","username":"s1","problem_id":"q2","time":"2020-01-01T10:01:00+02:00","run":"r1","answer":"glycolysis"}"#,
        r#"{"event_type":"problem_check","username":"s2","problem_id":"q1","time":"2020-01-01T10:02:00Z","run":"r1","answer":[1,0,1],"correct":true}"#,
    ];

    #[test]
    fn happy_path() {
        let (events, rejects) = parse_event_log(&LINES.join("\n"));
        assert!(rejects.is_empty());
        assert_eq!(events.len(), 3);
        assert_eq!(
            events.iter().map(|e| e.sequence_no).collect::<Vec<_>>(),
            vec![0, 1, 2]
        );
        assert_eq!(events[0].response, ResponsePayload::Choices(vec![2]));
        assert_eq!(
            events[1].response,
            ResponsePayload::Text("glycolysis".into())
        );
        assert_eq!(
            events[1].timestamp.to_rfc3339(),
            "2020-01-01T08:01:00+00:00"
        );
        assert_eq!(events[2].response, ResponsePayload::Choices(vec![0, 1]));
        assert_eq!(events[2].platform_correct, Some(true));
    }

    #[test]
    fn truncated_line_is_quarantined() {
        let truncated = &LINES[1][..40];
        let text = [LINES[0], truncated, LINES[2]].join("\n");
        let (events, rejects) = parse_event_log(&text);
        assert_eq!(events.len(), 2);
        assert_eq!(rejects.len(), 1);
        assert_eq!(rejects[0].line, 2);
        assert_eq!(rejects[0].reason, RejectReason::Syntax);
        assert_eq!(events[1].sequence_no, 1);
    }

    #[test]
    fn schema_and_type_rejects() {
        let text = [
            r#"{"event_type":"play_video","username":"s","problem_id":"q","time":"2020-01-01T00:00:00Z","run":"r","answer":[0]}"#,
            r#"{"event_type":"problem_check","username":"s"}"#,
            r#"{"event_type":"problem_check","username":"s","problem_id":"q","time":"yesterday","run":"r","answer":[0]}"#,
            "",
        ]
        .join("\n");
        let (events, rejects) = parse_event_log(&text);
        assert!(events.is_empty());
        let reasons: Vec<_> = rejects.iter().map(|r| r.reason.clone()).collect();
        assert_eq!(
            reasons,
            vec![
                RejectReason::EventType,
                RejectReason::Schema,
                RejectReason::Timestamp
            ]
        );
    }

    #[test]
    fn sequence_continues_across_streams() {
        let mut parser = EventLogParser::new();
        let (a, _) = parser.parse(LINES[0].as_bytes()).unwrap();
        let (b, _) = parser.parse(LINES[2].as_bytes()).unwrap();
        assert_eq!(a[0].sequence_no, 0);
        assert_eq!(b[0].sequence_no, 1);
    }

    #[test]
    fn log_line_round_trips_through_parser() {
        let t = DateTime::parse_from_rfc3339("2021-03-04T05:06:07.250Z")
            .unwrap()
            .with_timezone(&Utc);
        let line = LogLine::problem_check("u", "p", t, "run", ResponsePayload::Choices(vec![3]));
        let (events, rejects) = parse_event_log(&line.to_json());
        assert!(rejects.is_empty());
        assert_eq!(events[0].timestamp, t);
        assert_eq!(events[0].response, ResponsePayload::Choices(vec![3]));
    }
}
