//! Template rendering: zero-shot, few-shot exemplars, chain-of-thought
//! system prompts, and choice-order permutation with label maps.
//!
//! Run with: `cargo run --example render_prompts`

use medeval::corpus::{Benchmark, BenchmarkItem, Choice, Split};
use medeval::prompt::{builtin_templates, make_variants, render};

fn sample_item() -> BenchmarkItem {
    BenchmarkItem {
        id: "demo-1".into(),
        benchmark: Benchmark::Medqa,
        subset: None,
        split: Split::Test,
        question: "A 23-year-old pregnant woman at 22 weeks gestation presents with burning \
                   upon urination. Which of the following is the best treatment for this patient?"
            .into(),
        context: None,
        choices: [
            ("A", "Ampicillin"),
            ("B", "Ceftriaxone"),
            ("C", "Doxycycline"),
            ("D", "Nitrofurantoin"),
        ]
        .iter()
        .map(|(label, text)| Choice {
            label: (*label).into(),
            text: (*text).into(),
        })
        .collect(),
        gold: Some("D".into()),
        explanation: None,
        reference: None,
    }
}

fn main() -> medeval::Result<()> {
    let registry = builtin_templates();
    println!("built-in templates: {}\n", registry.names().join(", "));

    let item = sample_item();

    // Zero-shot render: a system turn plus the item as the final user turn.
    let prompt = render(&item, registry.get("zero_shot")?, &[])?;
    println!("=== zero_shot ===");
    for message in &prompt.messages {
        println!("[{}]\n{}\n", message.role, message.content);
    }

    // One-shot render: the exemplar contributes a worked user/assistant pair.
    let mut exemplar = sample_item();
    exemplar.id = "exemplar-1".into();
    exemplar.split = Split::Dev;
    let one_shot = registry.get("few_shot")?.with_k(1);
    let prompt = render(&item, &one_shot, std::slice::from_ref(&exemplar))?;
    println!("=== few_shot (k=1): exemplar assistant turn ===");
    println!("{}\n", prompt.messages[2].content);

    // The chain-of-thought system prompts drive step-by-step answers.
    let cot = registry.get("cot_7")?;
    println!("=== cot_7 system text (first 200 chars) ===");
    let system: String = cot.system_text.chars().take(200).collect();
    println!("{system}…\n");

    // Ensembling variants: rotate templates and shuffle choice order; the
    // label map records the way back to the original labels.
    let variants = make_variants(
        &item,
        &[registry.get("zero_shot")?, registry.get("cot_1")?],
        &[],
        true,
        4,
        42,
    )?;
    println!("=== 4 permuted ensemble variants (seed 42) ===");
    for (i, variant) in variants.iter().enumerate() {
        let map: Vec<String> = variant
            .label_map
            .iter()
            .map(|(rendered, original)| format!("{rendered}->{original}"))
            .collect();
        println!(
            "variant {i}: template {}, label map {{{}}}",
            variant.template_name,
            map.join(", ")
        );
    }
    Ok(())
}
