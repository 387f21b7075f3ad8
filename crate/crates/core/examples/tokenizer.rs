//! Build a vocabulary, encode a sentence and decode it back.

use cage_core::tokenizer::Vocabulary;

fn main() -> cage_core::Result<()> {
    let corpus = [
        "While eating a hamburger with friends, what are people trying to do?",
        "Usually a hamburger with friends indicates a good time.",
    ];
    let vocab = Vocabulary::build(&corpus, 1, usize::MAX);
    println!("{} tokens, first ten: {:?}", vocab.len(), &vocab.tokens()[..10.min(vocab.len())]);
    let ids = vocab.encode("People eat a hamburger with FRIENDS!");
    println!("ids     {ids:?}");
    println!("decoded {:?}", vocab.decode(&ids)?);
    Ok(())
}
