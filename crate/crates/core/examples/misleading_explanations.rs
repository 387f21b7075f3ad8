//! Rewrite explanations so they argue for a wrong answer.

use cage_core::cage::perturb_misleading;
use cage_core::synthetic;

fn main() -> cage_core::Result<()> {
    let data = synthetic::generate("m", 6, synthetic::SyntheticConfig { seed: 4, ..Default::default() });
    let (perturbed, ids) = perturb_misleading(&data, 3, 0)?;
    for ((example, before), (_, after)) in data.iter().zip(&perturbed) {
        let mark = if ids.contains(&example.id) { "*" } else { " " };
        println!("{mark} [{}] gold {:?}", example.choices.join(", "), example.answer().unwrap_or("-"));
        println!("    {}", before.open_ended);
        if mark == "*" {
            println!("    -> {}", after.open_ended);
        }
    }
    Ok(())
}
