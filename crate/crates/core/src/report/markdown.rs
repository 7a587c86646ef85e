use std::fmt::Write;

use crate::ingest::{QuestionRecord, ResponsePayload, ResponseType};

use super::{CourseReport, QuestionEntry, TopicSection};

/// Neutralizes `${` so no rendered value reads as a template placeholder, and keeps
/// table cells on one line.
fn text(s: &str) -> String {
    s.replace("${", "$\\{")
}

fn cell(s: &str) -> String {
    text(s).replace('|', "\\|").replace(['\n', '\r'], " ")
}

fn describe_choice(q: &QuestionRecord, i: usize) -> String {
    match q.choices.get(i) {
        Some(c) => format!("[{i}] {}", text(c)),
        None => format!("[{i}]"),
    }
}

fn correct_answer(q: &QuestionRecord) -> String {
    match q.response_type {
        ResponseType::ShortAnswer => q
            .accepted_answers
            .iter()
            .map(|a| format!("\"{}\"", text(a)))
            .collect::<Vec<_>>()
            .join(" or "),
        ResponseType::DragAndDrop => "(not shown)".into(),
        _ => q
            .correct_choices
            .iter()
            .map(|&i| describe_choice(q, i))
            .collect::<Vec<_>>()
            .join("; "),
    }
}

fn wrong_answer(entry: &QuestionEntry) -> String {
    let answer = match &entry.top_incorrect.payload {
        ResponsePayload::Choices(v) if v.is_empty() => "(no selection)".to_string(),
        ResponsePayload::Choices(v) => v
            .iter()
            .map(|&i| describe_choice(&entry.question, i))
            .collect::<Vec<_>>()
            .join("; "),
        ResponsePayload::Text(t) => format!("\"{}\"", text(t)),
    };
    format!(
        "{answer} ({} of {} incorrect first attempts)",
        entry.top_incorrect.count, entry.top_incorrect.n_incorrect_total
    )
}

fn render_question(out: &mut String, entry: &QuestionEntry) {
    let q = &entry.question;
    let _ = writeln!(out, "### Question {}\n", q.question_id);
    let _ = writeln!(out, "**Stem:** {}\n", text(&q.problem_stem));
    let _ = writeln!(out, "**Type:** {}\n", q.response_type.label());
    if !q.choices.is_empty() {
        out.push_str("**Choices:**\n\n");
        for i in 0..q.choices.len() {
            let _ = writeln!(out, "- {}", describe_choice(q, i));
        }
        out.push('\n');
    }
    let _ = writeln!(out, "**Correct answer:** {}\n", correct_answer(q));
    let _ = writeln!(
        out,
        "**Most common incorrect answer:** {}\n",
        wrong_answer(entry)
    );
    if !q.explanation.is_empty() {
        let _ = writeln!(
            out,
            "**Explanation shown to students:** {}\n",
            text(&q.explanation)
        );
    }
    let _ = writeln!(
        out,
        "**Reasoning:** {}\n",
        text(&entry.misconceptions.reasoning)
    );
    out.push_str("**Misconceptions:**\n\n");
    for m in &entry.misconceptions.misconceptions {
        let _ = writeln!(out, "- {}", text(m));
    }
    out.push('\n');
}

fn render_topic(out: &mut String, section: &TopicSection) {
    let t = &section.topic;
    let _ = writeln!(out, "## Topic: {}\n", text(t.topic.as_str()));
    let _ = writeln!(
        out,
        "Cohort support: {} ({}). Quizzes: {}. Questions: {}.\n",
        t.cohort_support,
        t.supporting_cohorts.join(", "),
        t.quiz_ids.iter().cloned().collect::<Vec<_>>().join(", "),
        t.question_count
    );
    out.push_str("**Synopsis:**\n\n");
    for b in &section.synopsis.bullets {
        if b.description.is_empty() {
            let _ = writeln!(out, "- {}", text(&b.concept_name));
        } else {
            let _ = writeln!(
                out,
                "- **{}** - {}",
                text(&b.concept_name),
                text(&b.description)
            );
        }
    }
    out.push('\n');
    for entry in &section.questions {
        render_question(out, entry);
    }
    if !section.failures.is_empty() {
        out.push_str("**Questions without results:**\n\n");
        for f in &section.failures {
            let _ = writeln!(out, "- {}: {}", f.question_id, text(&f.error));
        }
        out.push('\n');
    }
    if !section.exclusions.is_empty() {
        out.push_str("**Excluded questions:**\n\n");
        for e in &section.exclusions {
            let _ = writeln!(out, "- {}: {}", e.question_id, text(&e.reason));
        }
        out.push('\n');
    }
}

fn render_grid(out: &mut String, report: &CourseReport) {
    let g = &report.grid;
    out.push_str("## Challenging topics by cohort\n\n");
    let _ = writeln!(
        out,
        "Cells count the topic's quizzes in each cohort's {} lowest-scoring quizzes.\n",
        report.params.top_k
    );
    let _ = write!(out, "| Topic |");
    for c in &g.cohorts {
        let _ = write!(out, " {} |", cell(c));
    }
    out.push_str(" Support | Persistent |\n|---|");
    for _ in &g.cohorts {
        out.push_str("---|");
    }
    out.push_str("---|---|\n");
    for (j, topic) in g.topics.iter().enumerate() {
        let _ = write!(out, "| {} |", cell(topic.as_str()));
        let mut support = 0;
        for row in &g.cells {
            let n = row.get(j).copied().unwrap_or(0);
            support += usize::from(n > 0);
            if n == 0 {
                out.push_str("  |");
            } else {
                let _ = write!(out, " {n} |");
            }
        }
        let _ = writeln!(
            out,
            " {support} | {} |",
            if g.persistent.get(j) == Some(&true) {
                "yes"
            } else {
                ""
            }
        );
    }
    out.push('\n');
}

fn render_cost(out: &mut String, report: &CourseReport) {
    let u = &report.usage;
    out.push_str("## Cost\n\n| Model | Input tokens | Output tokens | Total tokens | Cost (USD) |\n|---|---|---|---|---|\n");
    for (model, t) in &u.per_model {
        let _ = writeln!(
            out,
            "| {} | {} | {} | {} | {} |",
            cell(model),
            t.input_tokens,
            t.output_tokens,
            t.total_tokens(),
            u.display(t.cost)
        );
    }
    let g = &u.grand_total;
    let _ = writeln!(
        out,
        "| Grand total | {} | {} | {} | {} |\n",
        g.input_tokens,
        g.output_tokens,
        g.total_tokens(),
        u.grand_total_display()
    );
}

fn p_value(p: f64) -> String {
    if p < 1e-4 {
        format!("{p:.1e}")
    } else {
        format!("{p:.4}")
    }
}

/// Section order: summary, cohort grid, ranking validation, one section per topic, cost.
pub fn render_markdown(report: &CourseReport) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "# Challenging topics and misconceptions: {}\n",
        text(&report.course_type)
    );
    out.push_str("## Summary\n\n");
    let s = &report.summary;
    let _ = writeln!(
        out,
        "- Persistently challenging topics: {} of {} identified ({}%)",
        s.persistent, s.identified, s.percent_persistent
    );
    let p = &report.params;
    let _ = writeln!(
        out,
        "- Criteria: top {} quizzes per cohort, support in at least {} cohorts, quizzes with at least {} questions",
        p.top_k, p.min_cohort_support, p.min_questions_per_quiz
    );
    let _ = writeln!(
        out,
        "- Questions analyzed: {} (without results: {}, excluded: {})\n",
        report.question_count(),
        report.failure_count(),
        report.exclusion_count()
    );
    render_grid(&mut out, report);
    if let Some(v) = &report.validation {
        out.push_str("## Ranking validation\n\n");
        let _ = writeln!(
            out,
            "Spearman correlation between the first-attempt ranking and the Rasch ranking: rho = {:.3}, two-sided p = {} (n = {} quizzes).\n",
            v.rho,
            p_value(v.p_value),
            v.n
        );
    }
    for section in &report.topics {
        render_topic(&mut out, section);
    }
    render_cost(&mut out, report);
    out
}
