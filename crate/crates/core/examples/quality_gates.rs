//! Run the four collection rules over a handful of candidate explanations.

use cage_core::corpus::{Annotation, Example, Span};
use cage_core::quality::validate_annotation;

fn main() -> cage_core::Result<()> {
    let example = Example::new(
        "q1",
        "While eating a hamburger with friends, what are people trying to do?",
        vec!["have fun".into(), "tasty".into(), "indigestion".into()],
        Some(0),
    )?;
    let candidates = [
        ("Usually a hamburger with friends indicates a good time.", vec![Span(15, 37)]),
        ("Usually a hamburger with friends indicates a good time.", vec![]),
        ("have fun", vec![Span(15, 37)]),
        ("eating a hamburger with friends", vec![Span(15, 37)]),
        ("have fun is the only option that is correct", vec![Span(15, 37)]),
    ];
    for (text, spans) in candidates {
        let annotation = Annotation::new("q1", text, spans)?;
        let report = validate_annotation(&example, &annotation);
        println!("{:<58} {}", format!("{text:?}"), if report.passed { "accepted" } else { "rejected" });
        for rule in report.rules.iter().filter(|r| !r.passed) {
            println!("    {}: {}", rule.rule, rule.reason);
        }
    }
    Ok(())
}
