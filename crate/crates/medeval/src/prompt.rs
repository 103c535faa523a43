//! Prompt rendering: templates, few-shot exemplars, and ensembling variants.
//!
//! A [`TemplateSpec`] describes one prompting strategy; [`render`] turns a
//! benchmark item into a chat message sequence under it, and
//! [`make_variants`] produces the ensemble (template rotation plus seeded
//! choice-order permutation). Choices are always presented under canonical
//! labels; [`RenderedPrompt::label_map`] records how presented labels map
//! back to the item's original label space.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::sync::OnceLock;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::BenchmarkItem;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

impl Message {
    pub fn system(content: impl Into<String>) -> Message {
        Message {
            role: Role::System,
            content: content.into(),
        }
    }
    pub fn user(content: impl Into<String>) -> Message {
        Message {
            role: Role::User,
            content: content.into(),
        }
    }
    pub fn assistant(content: impl Into<String>) -> Message {
        Message {
            role: Role::Assistant,
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Strategy {
    ZeroShot,
    FewShot { k: usize },
    CotZeroShot,
    CotFewShot { k: usize },
}

impl Strategy {
    fn from_parts(name: &str, k: usize) -> Result<Strategy> {
        match (name, k) {
            ("zero_shot", 0) => Ok(Strategy::ZeroShot),
            ("zero_shot", _) => Err(Error::Template("zero_shot requires k = 0".into())),
            ("few_shot", k) if k >= 1 => Ok(Strategy::FewShot { k }),
            ("few_shot", _) => Err(Error::Template("few_shot requires k >= 1".into())),
            ("cot_zero_shot", 0) => Ok(Strategy::CotZeroShot),
            ("cot_zero_shot", _) => Err(Error::Template("cot_zero_shot requires k = 0".into())),
            ("cot_few_shot", k) if k >= 1 => Ok(Strategy::CotFewShot { k }),
            ("cot_few_shot", _) => Err(Error::Template("cot_few_shot requires k >= 1".into())),
            (other, _) => Err(Error::Template(format!("unknown strategy: {other}"))),
        }
    }

    pub fn shot_count(&self) -> usize {
        match self {
            Strategy::ZeroShot | Strategy::CotZeroShot => 0,
            Strategy::FewShot { k } | Strategy::CotFewShot { k } => *k,
        }
    }

    pub fn is_cot(&self) -> bool {
        matches!(self, Strategy::CotZeroShot | Strategy::CotFewShot { .. })
    }

    /// The same strategy family with a different exemplar count.
    pub fn with_k(self, k: usize) -> Strategy {
        match (self.is_cot(), k) {
            (false, 0) => Strategy::ZeroShot,
            (false, k) => Strategy::FewShot { k },
            (true, 0) => Strategy::CotZeroShot,
            (true, k) => Strategy::CotFewShot { k },
        }
    }
}

/// How choices are labeled in the rendered prompt.
///
/// `Letters` relabels the presented order to A, B, C, ... which is also the
/// identity for letter-labeled benchmarks; `Keep` presents original labels
/// (used by direct-token templates such as yes/no/maybe, where the label is
/// the answer itself and no `{choices}` block is required).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Relabel {
    Letters,
    Keep,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemplateSpec {
    pub name: String,
    pub strategy: Strategy,
    pub system_text: String,
    pub item_pattern: String,
    pub choice_line_pattern: String,
    pub answer_directive: String,
    pub relabel: Relabel,
}

impl TemplateSpec {
    /// Clone with a different exemplar count, renamed to reflect it.
    pub fn with_k(&self, k: usize) -> TemplateSpec {
        let mut spec = self.clone();
        spec.strategy = spec.strategy.with_k(k);
        spec
    }
}

/// Substitute `{key}` placeholders; unknown placeholders pass through.
pub fn fill(pattern: &str, substitutions: &[(&str, &str)]) -> String {
    let mut out = pattern.to_string();
    for (key, value) in substitutions {
        out = out.replace(&format!("{{{key}}}"), value);
    }
    out
}

/// Parse a template file: `key: value` front matter, `---`, system text,
/// `---`, item pattern.
pub fn parse_template(text: &str) -> Result<TemplateSpec> {
    let mut name = None;
    let mut strategy_name = None;
    let mut k = 0usize;
    let mut relabel = Relabel::Letters;
    let mut choice_line = "{label}. {text}".to_string();
    let mut answer_directive = "Answer: {label}. {text}".to_string();

    let mut lines = text.lines();
    for line in lines.by_ref() {
        if line.trim() == "---" {
            break;
        }
        if line.trim().is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once(':')
            .ok_or_else(|| Error::Template(format!("front matter line without colon: {line:?}")))?;
        let value = value.trim();
        match key.trim() {
            "name" => name = Some(value.to_string()),
            "strategy" => strategy_name = Some(value.to_string()),
            "k" => {
                k = value
                    .parse()
                    .map_err(|_| Error::Template(format!("invalid k: {value:?}")))?
            }
            "relabel" => {
                relabel = match value {
                    "letters" => Relabel::Letters,
                    "keep" => Relabel::Keep,
                    other => return Err(Error::Template(format!("invalid relabel: {other:?}"))),
                }
            }
            "choice_line" => choice_line = value.to_string(),
            "answer_directive" => answer_directive = value.to_string(),
            other => {
                return Err(Error::Template(format!(
                    "unknown front matter key: {other:?}"
                )))
            }
        }
    }

    let mut system_text = String::new();
    let mut saw_separator = false;
    for line in lines.by_ref() {
        if line.trim() == "---" {
            saw_separator = true;
            break;
        }
        if !system_text.is_empty() {
            system_text.push('\n');
        }
        system_text.push_str(line);
    }
    if !saw_separator {
        return Err(Error::Template(
            "template needs a second --- separator before the item pattern".into(),
        ));
    }
    let item_pattern = lines.collect::<Vec<_>>().join("\n");

    let spec = TemplateSpec {
        name: name.ok_or_else(|| Error::Template("template front matter needs a name".into()))?,
        strategy: Strategy::from_parts(
            &strategy_name
                .ok_or_else(|| Error::Template("template front matter needs a strategy".into()))?,
            k,
        )?,
        system_text,
        item_pattern,
        choice_line_pattern: choice_line,
        answer_directive,
        relabel,
    };
    if !spec.item_pattern.contains("{question}") {
        return Err(Error::Template(format!(
            "template {} item pattern must reference {{question}}",
            spec.name
        )));
    }
    Ok(spec)
}

pub fn load_template_file(path: &Path) -> Result<TemplateSpec> {
    parse_template(&std::fs::read_to_string(path)?)
}

/// Named collection of templates.
#[derive(Debug, Clone, Default)]
pub struct TemplateRegistry {
    templates: BTreeMap<String, TemplateSpec>,
}

impl TemplateRegistry {
    pub fn new() -> TemplateRegistry {
        TemplateRegistry::default()
    }

    pub fn insert(&mut self, spec: TemplateSpec) {
        self.templates.insert(spec.name.clone(), spec);
    }

    pub fn get(&self, name: &str) -> Result<&TemplateSpec> {
        self.templates.get(name).ok_or_else(|| {
            Error::Config(format!(
                "unknown template {name:?}; known: {}",
                self.names().join(", ")
            ))
        })
    }

    pub fn names(&self) -> Vec<&str> {
        self.templates.keys().map(String::as_str).collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = &TemplateSpec> {
        self.templates.values()
    }
}

const BUILTIN_TEMPLATES: &[&str] = &[
    include_str!("../assets/templates/zero_shot.tmpl"),
    include_str!("../assets/templates/few_shot.tmpl"),
    include_str!("../assets/templates/cot_1.tmpl"),
    include_str!("../assets/templates/cot_2.tmpl"),
    include_str!("../assets/templates/cot_3.tmpl"),
    include_str!("../assets/templates/cot_4.tmpl"),
    include_str!("../assets/templates/cot_5.tmpl"),
    include_str!("../assets/templates/cot_6.tmpl"),
    include_str!("../assets/templates/cot_7.tmpl"),
    include_str!("../assets/templates/pubmedqa.tmpl"),
    include_str!("../assets/templates/pubmedqa_direct.tmpl"),
    include_str!("../assets/templates/translation.tmpl"),
    include_str!("../assets/templates/judge_rubric.tmpl"),
    include_str!("../assets/templates/quality_rubric.tmpl"),
];

/// The built-in template registry: plain zero/few-shot, the seven CoT
/// system-prompt variants, PubMedQA (lettered and direct-token), translation,
/// and the judge and data-quality rubrics.
pub fn builtin_templates() -> &'static TemplateRegistry {
    static REGISTRY: OnceLock<TemplateRegistry> = OnceLock::new();
    REGISTRY.get_or_init(|| {
        let mut registry = TemplateRegistry::new();
        for text in BUILTIN_TEMPLATES {
            let spec = parse_template(text).expect("builtin template parses");
            registry.insert(spec);
        }
        registry
    })
}

/// A fully materialized message sequence for one item under one template.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderedPrompt {
    pub item_id: String,
    pub template_name: String,
    pub messages: Vec<Message>,
    /// Rendered label -> original choice label; a bijection over the item's
    /// labels, identity whenever no permutation or relabeling applied.
    pub label_map: BTreeMap<String, String>,
    pub permutation_seed: Option<u64>,
}

impl RenderedPrompt {
    /// The labels the model is expected to answer in.
    pub fn rendered_labels(&self) -> Vec<String> {
        self.label_map.keys().cloned().collect()
    }

    pub fn original_label(&self, rendered: &str) -> Option<&str> {
        self.label_map.get(rendered).map(String::as_str)
    }

    /// The last user turn (the item under evaluation).
    pub fn final_user(&self) -> &str {
        self.messages
            .iter()
            .rev()
            .find(|m| m.role == Role::User)
            .map(|m| m.content.as_str())
            .unwrap_or("")
    }

    /// Single-block form for plain-completion endpoints.
    pub fn flatten(&self) -> String {
        self.messages
            .iter()
            .map(|m| m.content.as_str())
            .collect::<Vec<_>>()
            .join("\n\n")
    }
}

fn letter(i: usize) -> String {
    ((b'A' + i as u8) as char).to_string()
}

/// Presented choices for an item: (rendered label, original index) in
/// presentation order, plus the rendered-to-original label map.
fn presentation(
    item: &BenchmarkItem,
    permutation: Option<&[usize]>,
    relabel: Relabel,
) -> (Vec<(String, usize)>, BTreeMap<String, String>) {
    let order: Vec<usize> = match permutation {
        Some(p) => p.to_vec(),
        None => (0..item.choices.len()).collect(),
    };
    let mut presented = Vec::with_capacity(order.len());
    let mut label_map = BTreeMap::new();
    for (position, &idx) in order.iter().enumerate() {
        let rendered = match relabel {
            Relabel::Letters => letter(position),
            Relabel::Keep => item.choices[idx].label.clone(),
        };
        label_map.insert(rendered.clone(), item.choices[idx].label.clone());
        presented.push((rendered, idx));
    }
    (presented, label_map)
}

fn render_item_text(
    item: &BenchmarkItem,
    template: &TemplateSpec,
    presented: &[(String, usize)],
) -> Result<String> {
    let choices_block = presented
        .iter()
        .map(|(label, idx)| {
            fill(
                &template.choice_line_pattern,
                &[
                    ("label", label.as_str()),
                    ("text", &item.choices[*idx].text),
                ],
            )
        })
        .collect::<Vec<_>>()
        .join("\n");
    if !item.choices.is_empty()
        && template.relabel == Relabel::Letters
        && !template.item_pattern.contains("{choices}")
    {
        return Err(Error::Template(format!(
            "template {} lacks a {{choices}} placeholder needed by item {}",
            template.name, item.id
        )));
    }
    Ok(fill(
        &template.item_pattern,
        &[
            ("question", item.question.as_str()),
            ("context", item.context.as_deref().unwrap_or("")),
            ("choices", choices_block.as_str()),
            ("answer", ""),
        ],
    ))
}

/// The assistant turn for one exemplar: the gold answer in the template's
/// directive format, preceded by the worked explanation for CoT strategies.
fn exemplar_answer(exemplar: &BenchmarkItem, template: &TemplateSpec) -> Result<String> {
    let (presented, _) = presentation(exemplar, None, template.relabel);
    let gold = exemplar
        .gold
        .as_deref()
        .ok_or_else(|| Error::Data(format!("exemplar {} has no gold label", exemplar.id)))?;
    let (rendered_label, idx) = presented
        .iter()
        .find(|(_, idx)| exemplar.choices[*idx].label == gold)
        .ok_or_else(|| Error::Data(format!("exemplar {} gold not among choices", exemplar.id)))?;
    let directive = fill(
        &template.answer_directive,
        &[
            ("label", rendered_label.as_str()),
            ("text", &exemplar.choices[*idx].text),
        ],
    );
    Ok(match (&exemplar.explanation, template.strategy.is_cot()) {
        (Some(explanation), true) => format!("{explanation}\n{directive}"),
        _ => directive,
    })
}

fn render_inner(
    item: &BenchmarkItem,
    template: &TemplateSpec,
    exemplars: &[BenchmarkItem],
    permutation: Option<&[usize]>,
    permutation_seed: Option<u64>,
) -> Result<RenderedPrompt> {
    let expected = template.strategy.shot_count();
    if exemplars.len() != expected {
        return Err(Error::Config(format!(
            "template {} expects {expected} exemplar(s), got {}",
            template.name,
            exemplars.len()
        )));
    }
    if exemplars.iter().any(|e| e.id == item.id) {
        return Err(Error::Config(format!(
            "item {} appears among its own exemplars",
            item.id
        )));
    }

    let mut messages = Vec::with_capacity(2 + 2 * exemplars.len());
    if !template.system_text.is_empty() {
        messages.push(Message::system(template.system_text.clone()));
    }
    for exemplar in exemplars {
        let (presented, _) = presentation(exemplar, None, template.relabel);
        messages.push(Message::user(render_item_text(
            exemplar, template, &presented,
        )?));
        messages.push(Message::assistant(exemplar_answer(exemplar, template)?));
    }
    let (presented, label_map) = presentation(item, permutation, template.relabel);
    messages.push(Message::user(render_item_text(item, template, &presented)?));

    Ok(RenderedPrompt {
        item_id: item.id.clone(),
        template_name: template.name.clone(),
        messages,
        label_map,
        permutation_seed,
    })
}

/// Render one item under one template with the given exemplars.
///
/// Exemplars each contribute a user turn and an assistant turn carrying the
/// gold answer; the item itself is the final user turn and never carries its
/// answer or explanation.
pub fn render(
    item: &BenchmarkItem,
    template: &TemplateSpec,
    exemplars: &[BenchmarkItem],
) -> Result<RenderedPrompt> {
    render_inner(item, template, exemplars, None, None)
}

/// Stable per-variant seed: fold the run seed, item id, and variant index
/// through SHA-256 so the stream is reproducible across platforms.
pub fn derive_seed(seed: u64, item_id: &str, variant: u64) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(item_id.as_bytes());
    hasher.update(variant.to_le_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest is long enough"))
}

/// Produce `n_variants` renderings for ensembling: templates rotate in
/// order, and with `permute_choices` each variant presents the choices in an
/// independently drawn order (relabeled canonically, with `label_map`
/// recording the way back).
pub fn make_variants(
    item: &BenchmarkItem,
    templates: &[&TemplateSpec],
    exemplars: &[BenchmarkItem],
    permute_choices: bool,
    n_variants: usize,
    seed: u64,
) -> Result<Vec<RenderedPrompt>> {
    if templates.is_empty() {
        return Err(Error::Config(
            "make_variants needs at least one template".into(),
        ));
    }
    if n_variants == 0 {
        return Err(Error::Config("n_variants must be at least 1".into()));
    }
    let mut variants = Vec::with_capacity(n_variants);
    for i in 0..n_variants {
        let template = templates[i % templates.len()];
        let (permutation, permutation_seed) = if permute_choices && item.choices.len() > 1 {
            let variant_seed = derive_seed(seed, &item.id, i as u64);
            let mut rng = ChaCha8Rng::seed_from_u64(variant_seed);
            let mut order: Vec<usize> = (0..item.choices.len()).collect();
            order.shuffle(&mut rng);
            (Some(order), Some(variant_seed))
        } else {
            (None, None)
        };
        variants.push(render_inner(
            item,
            template,
            exemplars,
            permutation.as_deref(),
            permutation_seed,
        )?);
    }
    Ok(variants)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Benchmark, Choice, Split};

    fn mcq_item(id: &str, gold: &str) -> BenchmarkItem {
        BenchmarkItem {
            id: id.into(),
            benchmark: Benchmark::Medqa,
            subset: None,
            split: Split::Test,
            question: format!("Question body for {id}?"),
            context: None,
            choices: [
                ("A", "Ampicillin"),
                ("B", "Ceftriaxone"),
                ("C", "Doxycycline"),
                ("D", "Nitrofurantoin"),
            ]
            .iter()
            .map(|(l, t)| Choice {
                label: (*l).into(),
                text: (*t).into(),
            })
            .collect(),
            gold: Some(gold.into()),
            explanation: None,
            reference: None,
        }
    }

    fn zero_shot() -> &'static TemplateSpec {
        builtin_templates().get("zero_shot").unwrap()
    }

    #[test]
    fn zero_shot_renders_system_plus_user() {
        let item = mcq_item("t1", "A");
        let prompt = render(&item, zero_shot(), &[]).unwrap();
        assert_eq!(prompt.messages.len(), 2);
        assert_eq!(prompt.messages[0].role, Role::System);
        assert_eq!(prompt.messages[1].role, Role::User);
        let user = &prompt.messages[1].content;
        for (label, text) in [
            ("A", "Ampicillin"),
            ("B", "Ceftriaxone"),
            ("C", "Doxycycline"),
            ("D", "Nitrofurantoin"),
        ] {
            assert!(user.contains(&format!("{label}. {text}")), "{user}");
        }
        // Identity map when nothing is permuted.
        for (rendered, original) in &prompt.label_map {
            assert_eq!(rendered, original);
        }
    }

    #[test]
    fn five_shot_renders_twelve_messages() {
        let item = mcq_item("t1", "A");
        let exemplars: Vec<BenchmarkItem> = (0..5)
            .map(|i| {
                let mut e = mcq_item(&format!("e{i}"), "B");
                e.split = Split::Dev;
                e
            })
            .collect();
        let template = builtin_templates().get("few_shot").unwrap();
        let prompt = render(&item, template, &exemplars).unwrap();
        assert_eq!(prompt.messages.len(), 12);
        let roles: Vec<Role> = prompt.messages.iter().map(|m| m.role).collect();
        assert_eq!(roles[0], Role::System);
        assert_eq!(roles[11], Role::User);
        for pair in roles[1..11].chunks(2) {
            assert_eq!(pair, [Role::User, Role::Assistant]);
        }
    }

    #[test]
    fn exemplar_turn_ends_with_gold_directive() {
        let item = mcq_item("t1", "A");
        let mut uti = mcq_item("uti", "D");
        uti.split = Split::Dev;
        uti.question = "A 23-year-old pregnant woman at 22 weeks gestation presents with burning \
                        upon urination. Which of the following is the best treatment for this patient?"
            .into();
        let template = builtin_templates().get("few_shot").unwrap().with_k(1);
        let prompt = render(&item, &template, std::slice::from_ref(&uti)).unwrap();
        let assistant = &prompt.messages[2];
        assert_eq!(assistant.role, Role::Assistant);
        assert!(
            assistant.content.ends_with("Answer: D. Nitrofurantoin"),
            "{}",
            assistant.content
        );
    }

    #[test]
    fn exemplar_count_mismatch_is_rejected() {
        let item = mcq_item("t1", "A");
        let template = builtin_templates().get("few_shot").unwrap();
        assert!(render(&item, template, &[]).is_err());
    }

    #[test]
    fn item_among_exemplars_is_rejected() {
        let mut item = mcq_item("t1", "A");
        item.split = Split::Dev;
        let template = builtin_templates().get("few_shot").unwrap().with_k(1);
        assert!(render(&item, &template, std::slice::from_ref(&item)).is_err());
    }

    #[test]
    fn rendering_is_deterministic() {
        let item = mcq_item("t1", "C");
        let a = render(&item, zero_shot(), &[]).unwrap();
        let b = render(&item, zero_shot(), &[]).unwrap();
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
        let va = make_variants(&item, &[zero_shot()], &[], true, 3, 99).unwrap();
        let vb = make_variants(&item, &[zero_shot()], &[], true, 3, 99).unwrap();
        assert_eq!(va, vb);
    }

    #[test]
    fn singleton_variant_equals_plain_render() {
        let item = mcq_item("t1", "B");
        let variants = make_variants(&item, &[zero_shot()], &[], false, 1, 7).unwrap();
        assert_eq!(variants.len(), 1);
        assert_eq!(variants[0], render(&item, zero_shot(), &[]).unwrap());
    }

    #[test]
    fn templates_cycle_in_order() {
        let item = mcq_item("t1", "B");
        let few = builtin_templates().get("cot_1").unwrap();
        let variants = make_variants(&item, &[zero_shot(), few], &[], false, 5, 7).unwrap();
        let names: Vec<&str> = variants.iter().map(|v| v.template_name.as_str()).collect();
        assert_eq!(
            names,
            ["zero_shot", "cot_1", "zero_shot", "cot_1", "zero_shot"]
        );
    }

    /// Brute-force remap oracle: for many random permutations, find where the
    /// gold text landed in the rendered prompt and check label_map recovers
    /// the original gold label.
    #[test]
    fn label_map_recovers_gold_under_permutation() {
        let item = mcq_item("t1", "D");
        let gold_text = "Nitrofurantoin";
        let variants = make_variants(&item, &[zero_shot()], &[], true, 200, 1234).unwrap();
        let mut saw_non_identity = false;
        for prompt in &variants {
            let user = prompt.final_user();
            // Oracle: scan the rendered lines for the gold text.
            let rendered_gold = user
                .lines()
                .find_map(|line| {
                    let (label, text) = line.split_once(". ")?;
                    (text == gold_text).then(|| label.trim().to_string())
                })
                .expect("gold text must be presented");
            assert_eq!(prompt.original_label(&rendered_gold), Some("D"));
            if rendered_gold != "D" {
                saw_non_identity = true;
            }
            // Bijection: values are exactly the original label set.
            let mut originals: Vec<&str> = prompt.label_map.values().map(String::as_str).collect();
            originals.sort();
            assert_eq!(originals, ["A", "B", "C", "D"]);
            assert!(prompt.permutation_seed.is_some());
        }
        assert!(
            saw_non_identity,
            "200 permutations should move the gold at least once"
        );
    }

    #[test]
    fn builtin_registry_has_seven_cot_variants() {
        let registry = builtin_templates();
        let cot_count = registry
            .names()
            .iter()
            .filter(|n| n.starts_with("cot_"))
            .count();
        assert!(cot_count >= 7, "got {cot_count}");
        let cot1 = registry.get("cot_1").unwrap();
        assert!(cot1.system_text.contains("Answer: Option"));
    }

    #[test]
    fn every_builtin_renders_a_dummy_item() {
        let mut item = mcq_item("dummy", "A");
        item.context = Some("Dummy context.".into());
        for template in builtin_templates().iter() {
            let exemplars: Vec<BenchmarkItem> = (0..template.strategy.shot_count())
                .map(|i| {
                    let mut e = mcq_item(&format!("ex{i}"), "B");
                    e.split = Split::Dev;
                    e.context = Some("Exemplar context.".into());
                    e
                })
                .collect();
            render(&item, template, &exemplars)
                .unwrap_or_else(|e| panic!("template {} failed: {e}", template.name));
        }
    }

    #[test]
    fn final_user_turn_never_leaks_gold_or_explanation() {
        let mut item = mcq_item("t1", "D");
        item.explanation = Some("SECRET-REASONING".into());
        let mut exemplar = mcq_item("e1", "B");
        exemplar.split = Split::Dev;
        exemplar.explanation = Some("exemplar working".into());
        let template = builtin_templates().get("cot_1").unwrap().with_k(1);
        let prompt = render(&item, &template, std::slice::from_ref(&exemplar)).unwrap();
        let user = prompt.final_user();
        assert!(!user.contains("Answer: D"));
        assert!(!user.contains("SECRET-REASONING"));
        // The exemplar's explanation does appear in its assistant turn.
        assert!(prompt.messages[2].content.contains("exemplar working"));
    }

    #[test]
    fn pubmedqa_template_relabels_tokens_to_letters() {
        let item = BenchmarkItem {
            id: "p1".into(),
            benchmark: Benchmark::Pubmedqa,
            subset: None,
            split: Split::Test,
            question: "Is it so?".into(),
            context: Some("Abstract text.".into()),
            choices: ["yes", "no", "maybe"]
                .iter()
                .map(|l| Choice {
                    label: (*l).into(),
                    text: (*l).into(),
                })
                .collect(),
            gold: Some("yes".into()),
            explanation: None,
            reference: None,
        };
        let prompt = render(&item, builtin_templates().get("pubmedqa").unwrap(), &[]).unwrap();
        assert_eq!(prompt.original_label("A"), Some("yes"));
        assert_eq!(prompt.original_label("B"), Some("no"));
        assert_eq!(prompt.original_label("C"), Some("maybe"));
        assert!(prompt.final_user().contains("Abstract text."));

        let direct = render(
            &item,
            builtin_templates().get("pubmedqa_direct").unwrap(),
            &[],
        )
        .unwrap();
        assert_eq!(direct.original_label("yes"), Some("yes"));
        assert!(!direct.final_user().contains("{choices}"));
    }

    #[test]
    fn template_file_roundtrip_of_front_matter() {
        let text = "name: custom\nstrategy: few_shot\nk: 2\n---\nSystem here.\n---\nQ: {question}\n{choices}";
        let spec = parse_template(text).unwrap();
        assert_eq!(spec.name, "custom");
        assert_eq!(spec.strategy, Strategy::FewShot { k: 2 });
        assert_eq!(spec.system_text, "System here.");
        assert_eq!(spec.item_pattern, "Q: {question}\n{choices}");
    }

    #[test]
    fn template_without_question_placeholder_is_rejected() {
        let text = "name: bad\nstrategy: zero_shot\nk: 0\n---\nSys.\n---\nNo placeholder.";
        assert!(parse_template(text).is_err());
    }
}
