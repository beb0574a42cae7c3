//! Mapping-level grading of code pairs, post-hoc reasoning, session
//! summaries, and the direct code-mapping baseline.

mod parse;

use std::fmt;
use std::str::FromStr;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

pub use parse::parse_level;

use crate::codes;
use crate::llm::{ChatProvider, ChatRequest, LlmError, Message, Role, DEFAULT_TEMPERATURE};
use crate::template;

const LEVEL_TEMPLATE: &str = include_str!("../../prompts/level_prediction.txt");
const LEVEL_INSTRUCTIONS: &str = include_str!("../../prompts/level_instructions.txt");
const LEVEL_INSTRUCTIONS_COT: &str = include_str!("../../prompts/level_instructions_cot.txt");
const LEVEL_REPROMPT: &str = include_str!("../../prompts/level_reprompt.txt");
const REASONING_TEMPLATE: &str = include_str!("../../prompts/reasoning.txt");
const SUMMARY_TEMPLATE: &str = include_str!("../../prompts/summarization.txt");
const DIRECT_TEMPLATE: &str = include_str!("../../prompts/direct_mapping.txt");
const FEW_SHOT_BANK: &str = include_str!("../../prompts/examples_few_shot.json");
const ENHANCED_BANK: &str = include_str!("../../prompts/examples_enhanced.json");

pub const FEW_SHOT_SIZE: usize = 16;
pub const ENHANCED_SIZE: usize = 21;

/// Three-way proximity grade for a pair of labels.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MappingLevel {
    A,
    B,
    C,
}

impl MappingLevel {
    pub const ALL: [MappingLevel; 3] = [MappingLevel::A, MappingLevel::B, MappingLevel::C];

    pub fn definition(self) -> &'static str {
        match self {
            MappingLevel::A => {
                "The content or the semantics of the original label and the mapped label are completely consistent."
            }
            MappingLevel::B => {
                "Parts of the original and the mapped labels are related, but it is not certain whether they match or conflict."
            }
            MappingLevel::C => "The original and the mapped labels partially conflict with each other.",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            MappingLevel::A => "A",
            MappingLevel::B => "B",
            MappingLevel::C => "C",
        }
    }
}

impl fmt::Display for MappingLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown mapping level {0:?}")]
pub struct UnknownLevel(pub String);

impl FromStr for MappingLevel {
    type Err = UnknownLevel;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "A" | "a" => Ok(MappingLevel::A),
            "B" | "b" => Ok(MappingLevel::B),
            "C" | "c" => Ok(MappingLevel::C),
            other => Err(UnknownLevel(other.to_string())),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StrategyKind {
    ZeroShot,
    FewShot,
    EnhancedFewShot,
    Cot,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 4] = [
        StrategyKind::ZeroShot,
        StrategyKind::FewShot,
        StrategyKind::EnhancedFewShot,
        StrategyKind::Cot,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            StrategyKind::ZeroShot => "zero-shot",
            StrategyKind::FewShot => "few-shot",
            StrategyKind::EnhancedFewShot => "enhanced-few-shot",
            StrategyKind::Cot => "cot",
        }
    }

    /// Bank kind this strategy draws examples from, if any.
    pub fn bank_kind(self) -> Option<BankKind> {
        match self {
            StrategyKind::ZeroShot => None,
            StrategyKind::FewShot => Some(BankKind::FewShot),
            StrategyKind::EnhancedFewShot | StrategyKind::Cot => Some(BankKind::EnhancedFewShot),
        }
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StrategyKind {
    type Err = ReasonerError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        StrategyKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| ReasonerError::Config(format!("unknown strategy {s:?}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BankKind {
    FewShot,
    EnhancedFewShot,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BankEntry {
    pub desc1: String,
    pub desc2: String,
    pub level: MappingLevel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rationale: Option<String>,
}

/// Worked examples for few-shot prompting, with a declared kind that fixes
/// the expected size.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExampleBank {
    pub kind: BankKind,
    pub entries: Vec<BankEntry>,
}

impl ExampleBank {
    pub fn from_json(text: &str) -> Result<Self, ReasonerError> {
        let bank: ExampleBank =
            serde_json::from_str(text).map_err(|e| ReasonerError::Config(format!("example bank: {e}")))?;
        bank.check()?;
        Ok(bank)
    }

    pub fn load(path: &std::path::Path) -> Result<Self, ReasonerError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ReasonerError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn few_shot() -> Self {
        Self::from_json(FEW_SHOT_BANK).expect("bundled few-shot bank is valid")
    }

    pub fn enhanced() -> Self {
        Self::from_json(ENHANCED_BANK).expect("bundled enhanced bank is valid")
    }

    pub fn bundled(kind: BankKind) -> Self {
        match kind {
            BankKind::FewShot => Self::few_shot(),
            BankKind::EnhancedFewShot => Self::enhanced(),
        }
    }

    fn check(&self) -> Result<(), ReasonerError> {
        let expected = match self.kind {
            BankKind::FewShot => FEW_SHOT_SIZE,
            BankKind::EnhancedFewShot => ENHANCED_SIZE,
        };
        if self.entries.len() != expected {
            return Err(ReasonerError::Config(format!(
                "{:?} bank must hold {expected} entries, found {}",
                self.kind,
                self.entries.len()
            )));
        }
        if self.kind == BankKind::EnhancedFewShot {
            let extra_b = self.entries[FEW_SHOT_SIZE..]
                .iter()
                .filter(|e| e.level == MappingLevel::B)
                .count();
            if extra_b != ENHANCED_SIZE - FEW_SHOT_SIZE {
                return Err(ReasonerError::Config(
                    "the entries after the first 16 of an enhanced bank must all be level B".into(),
                ));
            }
        }
        Ok(())
    }

    /// Count of entries per level, in A, B, C order.
    pub fn level_counts(&self) -> [usize; 3] {
        let mut counts = [0; 3];
        for e in &self.entries {
            counts[e.level.index()] += 1;
        }
        counts
    }
}

/// Prompting strategy and sampling settings for level prediction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StrategyConfig {
    pub kind: StrategyKind,
    pub temperature: f64,
    /// Replaces the bundled bank for strategies that use examples.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bank: Option<ExampleBank>,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
}

fn default_max_tokens() -> u32 {
    512
}

impl StrategyConfig {
    pub fn new(kind: StrategyKind, temperature: f64) -> Self {
        StrategyConfig {
            kind,
            temperature,
            bank: None,
            max_tokens: default_max_tokens(),
        }
    }

    /// The examples this strategy shows, or `None` for zero-shot.
    pub fn examples(&self) -> Result<Option<ExampleBank>, ReasonerError> {
        let Some(kind) = self.kind.bank_kind() else {
            return Ok(None);
        };
        match &self.bank {
            Some(bank) if bank.kind != kind => Err(ReasonerError::Config(format!(
                "{} needs a {kind:?} bank, got {:?}",
                self.kind, bank.kind
            ))),
            Some(bank) => Ok(Some(bank.clone())),
            None => Ok(Some(ExampleBank::bundled(kind))),
        }
    }

    fn request(&self, messages: Vec<Message>) -> ChatRequest {
        ChatRequest {
            messages,
            temperature: self.temperature,
            max_tokens: self.max_tokens,
            model_id: String::new(),
        }
    }
}

impl Default for StrategyConfig {
    fn default() -> Self {
        Self::new(StrategyKind::ZeroShot, DEFAULT_TEMPERATURE)
    }
}

/// A label with an optional code shown for context.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledCode {
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub code: Option<String>,
}

impl LabeledCode {
    pub fn new(label: impl Into<String>) -> Self {
        LabeledCode {
            label: label.into(),
            code: None,
        }
    }

    pub fn with_code(label: impl Into<String>, code: impl Into<String>) -> Self {
        LabeledCode {
            label: label.into(),
            code: Some(code.into()),
        }
    }

    fn render(&self) -> String {
        match &self.code {
            Some(c) => format!("{} (code {c})", self.label),
            None => self.label.clone(),
        }
    }
}

/// One pair to grade: the code named in the question and a retrieved code.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairInput {
    pub queried: LabeledCode,
    pub retrieved: LabeledCode,
    /// Extra retrieved context appended to the prompt, such as parents.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub context: Option<String>,
}

impl PairInput {
    pub fn labels(desc1: impl Into<String>, desc2: impl Into<String>) -> Self {
        PairInput {
            queried: LabeledCode::new(desc1),
            retrieved: LabeledCode::new(desc2),
            context: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Assessment {
    pub queried_label: String,
    pub retrieved_label: String,
    pub queried_code: Option<String>,
    pub retrieved_code: Option<String>,
    pub level: MappingLevel,
    pub reasoning: String,
    pub model_id: String,
    pub strategy: StrategyKind,
    pub temperature: f64,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ReasonerError {
    #[error("no mapping level in response: {0:?}")]
    UnparseableLevel(String),
    #[error("empty reasoning after retry")]
    EmptyReasoning,
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error(transparent)]
    Provider(#[from] LlmError),
    #[error("configuration: {0}")]
    Config(String),
}

fn definitions() -> String {
    MappingLevel::ALL
        .iter()
        .map(|l| format!("{l}: {}", l.definition()))
        .collect::<Vec<_>>()
        .join("\n")
}

fn render_examples(bank: &ExampleBank, with_rationale: bool) -> String {
    let mut out = String::from("\nExamples:\n");
    for (i, e) in bank.entries.iter().enumerate() {
        out.push_str(&format!(
            "\nExample {}:\nOriginal label: {}\nMapped label: {}\n",
            i + 1,
            e.desc1,
            e.desc2
        ));
        if let (true, Some(r)) = (with_rationale, &e.rationale) {
            out.push_str(&format!("Reasoning: {r}\n"));
        }
        out.push_str(&format!("Mapping level: {}\n", e.level));
    }
    out
}

/// The level-prediction prompt for one pair under a strategy.
pub fn level_prompt(pair: &PairInput, strategy: &StrategyConfig) -> Result<String, ReasonerError> {
    let cot = strategy.kind == StrategyKind::Cot;
    let examples = strategy
        .examples()?
        .map(|bank| render_examples(&bank, cot))
        .unwrap_or_default();
    let context = pair
        .context
        .as_deref()
        .map(|c| format!("Additional context:\n{c}\n"))
        .unwrap_or_default();
    let instructions = if cot {
        LEVEL_INSTRUCTIONS_COT
    } else {
        LEVEL_INSTRUCTIONS
    };
    let desc1 = pair.queried.render();
    let desc2 = pair.retrieved.render();
    Ok(template::render(
        LEVEL_TEMPLATE,
        &[
            ("definitions", definitions().as_str()),
            ("examples", examples.as_str()),
            ("desc1", desc1.as_str()),
            ("desc2", desc2.as_str()),
            ("context", context.as_str()),
            ("instructions", instructions.trim_end()),
        ],
    )
    .trim_end()
    .to_string())
}

/// Grades a pair. An unparseable reply gets one follow-up asking for just
/// the letter.
pub fn predict_level(
    pair: &PairInput,
    strategy: &StrategyConfig,
    provider: &dyn ChatProvider,
) -> Result<MappingLevel, ReasonerError> {
    if pair.queried.label.trim().is_empty() || pair.retrieved.label.trim().is_empty() {
        return Err(ReasonerError::EmptyInput("both descriptions must be non-empty"));
    }
    let last = strategy.kind == StrategyKind::Cot;
    let prompt = level_prompt(pair, strategy)?;
    let mut messages = vec![Message::user(prompt)];
    let first = provider.complete(&strategy.request(messages.clone()))?;
    if let Some(level) = parse_level(&first, last) {
        return Ok(level);
    }
    log::debug!("unparseable level reply, asking again: {first:?}");
    messages.push(Message {
        role: Role::Assistant,
        content: first,
    });
    messages.push(Message::user(LEVEL_REPROMPT.trim_end()));
    let second = provider.complete(&strategy.request(messages))?;
    parse_level(&second, false).ok_or(ReasonerError::UnparseableLevel(second))
}

pub fn reasoning_prompt(pair: &PairInput, level: MappingLevel) -> String {
    template::render(
        REASONING_TEMPLATE,
        &[
            ("level", level.as_str()),
            ("definition", level.definition()),
            ("desc1", &pair.queried.render()),
            ("desc2", &pair.retrieved.render()),
        ],
    )
    .trim_end()
    .to_string()
}

/// Asks for a justification of an already predicted level. The level is
/// not re-derived from the reply.
pub fn explain(
    pair: &PairInput,
    level: MappingLevel,
    strategy: &StrategyConfig,
    provider: &dyn ChatProvider,
) -> Result<String, ReasonerError> {
    let request = strategy.request(vec![Message::user(reasoning_prompt(pair, level))]);
    for _ in 0..2 {
        let text = provider.complete(&request)?;
        if !text.trim().is_empty() {
            return Ok(text.trim().to_string());
        }
    }
    Err(ReasonerError::EmptyReasoning)
}

/// Predicts and explains one pair.
pub fn assess(
    pair: &PairInput,
    strategy: &StrategyConfig,
    provider: &dyn ChatProvider,
) -> Result<Assessment, ReasonerError> {
    let level = predict_level(pair, strategy, provider)?;
    let reasoning = explain(pair, level, strategy, provider)?;
    Ok(Assessment {
        queried_label: pair.queried.label.clone(),
        retrieved_label: pair.retrieved.label.clone(),
        queried_code: pair.queried.code.clone(),
        retrieved_code: pair.retrieved.code.clone(),
        level,
        reasoning,
        model_id: provider.model_id().to_string(),
        strategy: strategy.kind,
        temperature: strategy.temperature,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairFailure {
    pub index: usize,
    pub error: String,
}

/// Results of a batch, in input order, with failures listed separately.
#[derive(Debug, Clone, Default)]
pub struct BatchOutcome {
    /// `(input index, assessment)` for every pair that succeeded.
    pub assessments: Vec<(usize, Assessment)>,
    pub errors: Vec<(usize, ReasonerError)>,
}

impl BatchOutcome {
    pub fn levels(&self) -> Vec<MappingLevel> {
        self.assessments.iter().map(|(_, a)| a.level).collect()
    }

    pub fn failures(&self) -> Vec<PairFailure> {
        self.errors
            .iter()
            .map(|(index, e)| PairFailure {
                index: *index,
                error: e.to_string(),
            })
            .collect()
    }
}

/// Assesses every pair, using up to `workers` threads. Per-pair errors do
/// not stop the batch.
pub fn assess_pairs(
    pairs: &[PairInput],
    strategy: &StrategyConfig,
    provider: &dyn ChatProvider,
    workers: usize,
) -> Result<BatchOutcome, ReasonerError> {
    if pairs.is_empty() {
        return Err(ReasonerError::EmptyInput("no pairs to assess"));
    }
    strategy.examples()?;
    let results: Vec<Result<Assessment, ReasonerError>> = if workers <= 1 {
        pairs.iter().map(|p| assess(p, strategy, provider)).collect()
    } else {
        let chunk = pairs.len().div_ceil(workers);
        std::thread::scope(|scope| {
            let handles: Vec<_> = pairs
                .chunks(chunk)
                .map(|part| scope.spawn(move || part.iter().map(|p| assess(p, strategy, provider)).collect::<Vec<_>>()))
                .collect();
            handles
                .into_iter()
                .flat_map(|h| h.join().expect("assessment worker panicked"))
                .collect()
        })
    };
    let mut outcome = BatchOutcome::default();
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(a) => outcome.assessments.push((i, a)),
            Err(e) => outcome.errors.push((i, e)),
        }
    }
    Ok(outcome)
}

pub fn summary_prompt(nlq: &str, assessments: &[Assessment]) -> String {
    let show = |label: &str, code: &Option<String>| match code {
        Some(c) => format!("{c} {label}"),
        None => label.to_string(),
    };
    let pairs = assessments
        .iter()
        .enumerate()
        .map(|(i, a)| {
            format!(
                "{}. {} -> {}\n   Mapping level: {}\n   Reasoning: {}",
                i + 1,
                show(&a.queried_label, &a.queried_code),
                show(&a.retrieved_label, &a.retrieved_code),
                a.level,
                a.reasoning
            )
        })
        .collect::<Vec<_>>()
        .join("\n");
    template::render(SUMMARY_TEMPLATE, &[("nlq", nlq), ("pairs", &pairs)])
        .trim_end()
        .to_string()
}

/// Final pass over a session's assessments.
pub fn summarize(
    nlq: &str,
    assessments: &[Assessment],
    temperature: f64,
    provider: &dyn ChatProvider,
) -> Result<String, ReasonerError> {
    if assessments.is_empty() {
        return Err(ReasonerError::EmptyInput("no assessments to summarize"));
    }
    let request = ChatRequest::user(summary_prompt(nlq, assessments)).with_temperature(temperature);
    Ok(provider.complete(&request)?)
}

pub fn direct_prompt(icd9_code: &str) -> String {
    template::render(DIRECT_TEMPLATE, &[("code", icd9_code)])
}

static ICD10_TOKEN: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\b[A-Z][0-9]{2}(?:\.?[A-Z0-9]{1,4})?\b").unwrap());

/// ICD-10-CM shaped tokens in order of appearance, dotless and without
/// repeats. Echoes of `exclude` (the queried ICD-9-CM code, in any dot
/// form) are blanked first, since ICD-9 E-codes have the same shape.
pub fn extract_icd10_codes(text: &str, exclude: Option<&str>) -> Vec<String> {
    let mut text = text.to_string();
    if let Some(code) = exclude.filter(|c| !c.trim().is_empty()) {
        let mut forms = vec![
            code.trim().to_string(),
            codes::normalize(code),
            codes::icd9_display(code),
        ];
        forms.sort_by_key(|f| std::cmp::Reverse(f.len()));
        for form in forms {
            text = text.replace(&form, " ");
        }
    }
    let mut out: Vec<String> = Vec::new();
    for m in ICD10_TOKEN.find_iter(&text) {
        let code = codes::normalize(m.as_str());
        if !out.contains(&code) {
            out.push(code);
        }
    }
    out
}

/// The zero-shot direct-mapping baseline: ask for ICD-10-CM codes for an
/// ICD-9-CM code and collect every code-shaped token in the reply.
pub fn direct_map(
    icd9_code: &str,
    temperature: f64,
    provider: &dyn ChatProvider,
) -> Result<Vec<String>, ReasonerError> {
    if icd9_code.trim().is_empty() {
        return Err(ReasonerError::EmptyInput("code must be non-empty"));
    }
    let request = ChatRequest::user(direct_prompt(icd9_code)).with_temperature(temperature);
    let reply = provider.complete(&request)?;
    Ok(extract_icd10_codes(&reply, Some(icd9_code)))
}
