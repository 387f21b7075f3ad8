//! The two language-model prompts: reasoning (no answer) and
//! rationalization (conditioned on an answer).

use cage_core::cage::{build_context, ConditioningMode};
use cage_core::corpus::Example;

fn main() -> cage_core::Result<()> {
    let example = Example::new(
        "q1",
        "While eating a hamburger with friends, what are people trying to do?",
        vec!["have fun".into(), "tasty".into(), "indigestion".into()],
        Some(0),
    )?;
    println!("reasoning:       {}", build_context(&example, ConditioningMode::Reasoning, None)?);
    println!("rationalization: {}", build_context(&example, ConditioningMode::Rationalization, Some(0))?);
    Ok(())
}
