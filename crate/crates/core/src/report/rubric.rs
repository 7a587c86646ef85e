use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{CourseReport, ReportError};

const RUBRIC_TEMPLATE: &str = "Instructions for evaluating misconceptions

You are evaluating the quality of AI-generated student misconceptions in ${SUBJECT}. For each question, you will be given the question, answer choices, a topic summary, and a potential misconception a student might have based on choosing a specific incorrect answer.

Please rate each misconception using the following 3-point scale:

3 - Excellent: The misconception is highly plausible, clearly stated, ${ADVERB} accurate, and directly addresses the specific error highlighted by the incorrect answer choice. It would be very useful for an instructor to address.

2 - Good: The misconception is plausible and generally accurate but may be slightly vague, not entirely specific to the question, or have a minor ${ADJECTIVE} imprecision that doesn't fundamentally mislead. It's still useful but might need some refinement.

1 - Poor: The misconception is implausible, inaccurate, irrelevant to the question, or fundamentally flawed from an ${ADJECTIVE} perspective. It would not be useful or might even be misleading.

Focus on whether the misconception is plausible (could a student reasonably hold this belief?), ${ADVERB} accurate, relevant to the question and incorrect answer, and clearly stated. A 'good' misconception doesn't have to be the only possible misconception, just a reasonable one.

If you rate a misconception as anything other than 'Excellent (3)', please optionally choose ONE of the following codes to indicate the primary reason:

A - Accuracy Issue: The core ${ADJECTIVE} concept is incorrect or misrepresented.

R - Relevance Issue: The misconception doesn't seem connected to the specific question or the chosen incorrect answer.

C - Clarity Issue: The misconception is poorly worded, vague, or difficult to understand.

S - Specificity Issue: The misconception is too general and doesn't explain why a student might choose that particular wrong answer.

Example: A rating of \"2-S\" would mean \"Good, but lacks specificity to the incorrect answer.\" A rating of \"3\" would mean no sub-category is needed.

Your expertise is invaluable in determining if these misconceptions are accurate and helpful for improving student understanding.";

/// (noun, adverb, adjective) used in the rubric for a course type.
fn subject_forms(course_type: &str) -> (String, String, String) {
    let noun = course_type.trim().to_lowercase();
    let adjective = if let Some(stem) = noun.strip_suffix("ology") {
        format!("{stem}ological")
    } else if let Some(stem) = noun.strip_suffix("ics") {
        format!("{stem}ic")
    } else if let Some(stem) = noun.strip_suffix("istry") {
        format!("{stem}ical")
    } else {
        return (noun, "scientifically".into(), "scientific".into());
    };
    let adverb = if adjective.ends_with("ic") {
        format!("{adjective}ally")
    } else {
        format!("{adjective}ly")
    };
    (noun, adverb, adjective)
}

/// Rubric instructions for a course; the article before the adjective becomes "a"
/// for subjects starting with a consonant.
pub fn rubric_instructions(course_type: &str) -> String {
    let (noun, adverb, adjective) = subject_forms(course_type);
    let mut text = RUBRIC_TEMPLATE
        .replace("${SUBJECT}", &noun)
        .replace("${ADVERB}", &adverb)
        .replace("${ADJECTIVE}", &adjective);
    if !adjective.starts_with(['a', 'e', 'i', 'o', 'u']) {
        text = text.replace(
            &format!("from an {adjective}"),
            &format!("from a {adjective}"),
        );
    }
    text
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Rating {
    Excellent,
    Good,
    Poor,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Subcode {
    A,
    R,
    C,
    S,
}

impl Rating {
    /// `Excellent`, `Good`, `Poor` (any case) or the scale points 3, 2, 1.
    fn parse(s: &str) -> Option<Rating> {
        match s.trim().to_ascii_lowercase().as_str() {
            "excellent" | "3" => Some(Rating::Excellent),
            "good" | "2" => Some(Rating::Good),
            "poor" | "1" => Some(Rating::Poor),
            _ => None,
        }
    }
}

impl Subcode {
    fn parse(s: &str) -> Option<Subcode> {
        match s.trim().to_ascii_uppercase().as_str() {
            "A" => Some(Subcode::A),
            "R" => Some(Subcode::R),
            "C" => Some(Subcode::C),
            "S" => Some(Subcode::S),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorksheetRow {
    pub question_id: String,
    pub topic: String,
    pub response_type: String,
    /// One misconception per line.
    pub misconceptions: String,
    pub rating: String,
    pub subcode: String,
    pub comment: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RubricWorksheet {
    pub course_type: String,
    pub instructions: String,
    pub rows: Vec<WorksheetRow>,
}

/// One blank-rated row per reported question.
pub fn rubric_worksheet(report: &CourseReport) -> RubricWorksheet {
    RubricWorksheet {
        course_type: report.course_type.clone(),
        instructions: rubric_instructions(&report.course_type),
        rows: report
            .entries()
            .map(|(section, entry)| WorksheetRow {
                question_id: entry.question.question_id.clone(),
                topic: section.topic.topic.as_str().to_string(),
                response_type: entry.question.response_type.label().to_string(),
                misconceptions: entry.misconceptions.misconceptions.join("\n"),
                rating: String::new(),
                subcode: String::new(),
                comment: String::new(),
            })
            .collect(),
    }
}

/// Tab-separated; instruction lines are prefixed with `# `, then a header row and one
/// row per question. Fields with tabs or newlines are quoted.
pub fn worksheet_to_tsv(sheet: &RubricWorksheet) -> String {
    let mut out = format!("# Course: {}\n", sheet.course_type);
    for line in sheet.instructions.lines() {
        if line.is_empty() {
            out.push_str("#\n");
        } else {
            out.push_str("# ");
            out.push_str(line);
            out.push('\n');
        }
    }
    out.push_str("# Fill in rating (Excellent, Good, Poor), an optional subcode (A, R, C, S) and a comment.\n");
    let mut w = csv::WriterBuilder::new()
        .delimiter(b'\t')
        .from_writer(Vec::new());
    w.write_record([
        "question_id",
        "topic",
        "response_type",
        "misconceptions",
        "rating",
        "subcode",
        "comment",
    ])
    .expect("in-memory write");
    for r in &sheet.rows {
        w.write_record([
            &r.question_id,
            &r.topic,
            &r.response_type,
            &r.misconceptions,
            &r.rating,
            &r.subcode,
            &r.comment,
        ])
        .expect("in-memory write");
    }
    out.push_str(
        &String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields"),
    );
    out
}

pub fn write_worksheet(sheet: &RubricWorksheet, path: impl AsRef<Path>) -> Result<(), ReportError> {
    let path = path.as_ref();
    std::fs::write(path, worksheet_to_tsv(sheet))
        .map_err(|e| ReportError::Io(format!("{}: {e}", path.display())))
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RatingCount {
    pub count: usize,
    /// One decimal.
    pub percent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatingSummary {
    pub course_type: String,
    pub problem_types: Vec<String>,
    pub total_evaluated: usize,
    pub unrated: usize,
    pub excellent: RatingCount,
    pub good: RatingCount,
    pub poor: RatingCount,
    /// Subcodes given with Good or Poor ratings.
    pub reasons: BTreeMap<Subcode, usize>,
}

fn percent(n: usize, total: usize) -> f64 {
    if total == 0 {
        return 0.0;
    }
    // Integer half-up rounding to tenths.
    ((n * 2000 + total) / (2 * total)) as f64 / 10.0
}

/// Parses a filled worksheet and tallies it. Ratings may carry the subcode inline
/// (`2-S`); anything outside the fixed vocabularies is rejected with its line number.
pub fn import_worksheet(text: &str) -> Result<RatingSummary, ReportError> {
    let course_type = text
        .lines()
        .find_map(|l| l.strip_prefix("# Course: "))
        .unwrap_or_default()
        .trim()
        .to_string();
    let mut r = csv::ReaderBuilder::new()
        .delimiter(b'\t')
        .comment(Some(b'#'))
        .flexible(false)
        .from_reader(text.as_bytes());
    let headers = r
        .headers()
        .map_err(|e| ReportError::Worksheet {
            line: 0,
            message: e.to_string(),
        })?
        .clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| ReportError::Worksheet {
                line: 0,
                message: format!("missing column {name}"),
            })
    };
    let (c_type, c_rating, c_sub) = (col("response_type")?, col("rating")?, col("subcode")?);
    let mut counts: BTreeMap<Rating, usize> = BTreeMap::new();
    let mut reasons: BTreeMap<Subcode, usize> = BTreeMap::new();
    let mut types: Vec<String> = Vec::new();
    let mut unrated = 0;
    for record in r.records() {
        let record = record.map_err(|e| ReportError::Worksheet {
            line: e.position().map(|p| p.line() as usize).unwrap_or(0),
            message: e.to_string(),
        })?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        let bad = |message: String| ReportError::Worksheet { line, message };
        let kind = record.get(c_type).unwrap_or_default().to_string();
        if !kind.is_empty() && !types.contains(&kind) {
            types.push(kind);
        }
        let raw_rating = record.get(c_rating).unwrap_or_default().trim();
        let (rating_text, inline_code) = match raw_rating.split_once('-') {
            Some((r, c)) => (r, Some(c)),
            None => (raw_rating, None),
        };
        let code_text = record.get(c_sub).unwrap_or_default().trim();
        if rating_text.is_empty() {
            if !code_text.is_empty() {
                return Err(bad(format!("subcode {code_text:?} without a rating")));
            }
            unrated += 1;
            continue;
        }
        let rating = Rating::parse(rating_text).ok_or_else(|| {
            bad(format!(
                "rating {raw_rating:?} is not one of Excellent, Good, Poor"
            ))
        })?;
        let mut code = None;
        for c in inline_code
            .into_iter()
            .chain((!code_text.is_empty()).then_some(code_text))
        {
            let parsed = Subcode::parse(c)
                .ok_or_else(|| bad(format!("subcode {c:?} is not one of A, R, C, S")))?;
            if code.is_some_and(|prev| prev != parsed) {
                return Err(bad("conflicting subcodes".into()));
            }
            code = Some(parsed);
        }
        if let Some(c) = code {
            if rating == Rating::Excellent {
                return Err(bad("subcodes apply only to Good or Poor ratings".into()));
            }
            *reasons.entry(c).or_default() += 1;
        }
        *counts.entry(rating).or_default() += 1;
    }
    let total: usize = counts.values().sum();
    let count = |r: Rating| {
        let n = counts.get(&r).copied().unwrap_or(0);
        RatingCount {
            count: n,
            percent: percent(n, total),
        }
    };
    Ok(RatingSummary {
        course_type,
        problem_types: types,
        total_evaluated: total,
        unrated,
        excellent: count(Rating::Excellent),
        good: count(Rating::Good),
        poor: count(Rating::Poor),
        reasons,
    })
}

#[cfg(test)]
mod tests {
    use super::super::tests::sample;
    use super::*;

    #[test]
    fn immunology_rubric_is_verbatim() {
        let t = rubric_instructions("Immunology");
        assert!(t.contains("3 - Excellent: The misconception is highly plausible, clearly stated, immunologically accurate, and directly addresses the specific error highlighted by the incorrect answer choice."));
        assert!(t.contains("fundamentally flawed from an immunological perspective."));
        assert!(t.contains(
            "A - Accuracy Issue: The core immunological concept is incorrect or misrepresented."
        ));
        assert!(t.contains("student misconceptions in immunology."));
    }

    #[test]
    fn other_subjects_adapt_wording() {
        let t = rubric_instructions("Physiology");
        assert!(t.contains("physiologically accurate"));
        assert!(t.contains("from a physiological perspective"));
        assert!(rubric_instructions("Genetics").contains("genetically accurate"));
        assert!(rubric_instructions("Biochemistry").contains("core biochemical concept"));
        assert!(rubric_instructions("Pharmacology").contains("pharmacologically accurate"));
        assert!(!rubric_instructions("Physiology").contains("immuno"));
    }

    #[test]
    fn one_row_per_question() {
        let s = rubric_worksheet(&sample(7, 4));
        assert_eq!(s.rows.len(), 28);
        let tsv = worksheet_to_tsv(&s);
        let summary = import_worksheet(&tsv).unwrap();
        assert_eq!(summary.unrated, 28);
        assert_eq!(summary.total_evaluated, 0);
    }

    #[test]
    fn empty_report_gives_instructions_only() {
        let s = rubric_worksheet(&sample(0, 0));
        assert!(s.rows.is_empty());
        let tsv = worksheet_to_tsv(&s);
        assert!(tsv.contains("# Please rate each misconception"));
        assert_eq!(tsv.lines().filter(|l| !l.starts_with('#')).count(), 1);
    }

    fn filled(ratings: &[(&str, &str)]) -> String {
        let mut s = rubric_worksheet(&sample(1, ratings.len()));
        for (row, (r, c)) in s.rows.iter_mut().zip(ratings) {
            row.rating = r.to_string();
            row.subcode = c.to_string();
        }
        worksheet_to_tsv(&s)
    }

    #[test]
    fn table_style_summary() {
        let mut ratings = vec![("Excellent", ""); 25];
        ratings.extend([("Good", "S"), ("2-S", ""), ("good", "s")]);
        let s = import_worksheet(&filled(&ratings)).unwrap();
        assert_eq!(s.course_type, "Immunology");
        assert_eq!(s.total_evaluated, 28);
        assert_eq!(
            s.excellent,
            RatingCount {
                count: 25,
                percent: 89.3
            }
        );
        assert_eq!(
            s.good,
            RatingCount {
                count: 3,
                percent: 10.7
            }
        );
        assert_eq!(s.poor.count, 0);
        assert_eq!(s.reasons, BTreeMap::from([(Subcode::S, 3)]));
        assert_eq!(s.problem_types, vec!["multiple choice".to_string()]);
    }

    #[test]
    fn vocabulary_is_enforced() {
        assert!(matches!(
            import_worksheet(&filled(&[("Good", "B")])),
            Err(ReportError::Worksheet { message, .. }) if message.contains("\"B\"")
        ));
        assert!(import_worksheet(&filled(&[("Great", "")])).is_err());
        assert!(import_worksheet(&filled(&[("Excellent", "A")])).is_err());
        assert!(import_worksheet(&filled(&[("", "A")])).is_err());
        assert!(import_worksheet(&filled(&[("Poor", "A"), ("1-C", "")])).is_ok());
    }

    #[test]
    fn multiline_misconceptions_survive_the_file() {
        let s = rubric_worksheet(&sample(1, 1));
        let tsv = worksheet_to_tsv(&s);
        let mut r = csv::ReaderBuilder::new()
            .delimiter(b'\t')
            .comment(Some(b'#'))
            .from_reader(tsv.as_bytes());
        let rows: Vec<WorksheetRow> = r.deserialize().map(Result::unwrap).collect();
        assert_eq!(rows, s.rows);
    }
}
