//! Prints every prompt kind rendered against a two-document context.

use alignrag::domain::{Benchmark, Document};
use alignrag::prompts::{render, render_cft_target, PromptInput, PromptKind};

fn main() -> anyhow::Result<()> {
    let docs = vec![
        Document::new("Mary in Islam", "Hannah, the mother of Mary, prayed for a child.")?,
        Document::new("Imran", "Imran is regarded as the father of Mary.")?,
    ];
    let bench = Benchmark::PopQa;
    let question = "Who is the mother of Mary in Islam?";
    let weak = "The documents are not relevant to the question";
    let gold = "Document [1] names Hannah as the mother of Mary";

    for kind in PromptKind::ALL {
        let input = PromptInput::new(&docs).benchmark(&bench);
        let input = match kind {
            PromptKind::TaskInstruction => input,
            PromptKind::RationaleSynthesis => input.slot("question", question).slot("answer", "Hannah"),
            PromptKind::CdaRationale => input.slot("question", question),
            PromptKind::CritiqueSynthesis => {
                input.slot("question", question).slot("weak_rationale", weak).slot("gold_rationale", gold)
            }
            PromptKind::CdaRefine => input
                .slot("question", question)
                .slot("weak_rationale", weak)
                .slot("critique", "Document [1] answers the question directly"),
            _ => input.slot("question", question).slot("weak_rationale", weak),
        };
        println!("===== {kind} ({})", kind.caption());
        println!("{}\n", render(kind, &input)?.text);
    }
    println!("===== cft target");
    println!("{}", render_cft_target("The rationale dismisses Document [1]", gold)?);
    Ok(())
}
