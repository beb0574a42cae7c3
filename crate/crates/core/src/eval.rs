//! Gold datasets, direct-mapping and mapping-level evaluation, metrics and
//! report rendering.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::codes;
use crate::llm::ChatProvider;
use crate::reasoner::{self, MappingLevel, PairInput, ReasonerError, StrategyConfig, StrategyKind};

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("gold target set is empty")]
    EmptyGold,
    #[error("prediction and gold lists differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("dataset line {line}: {message}")]
    Dataset { line: usize, message: String },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("invalid run specification: {0}")]
    Spec(String),
    #[error(transparent)]
    Reasoner(#[from] ReasonerError),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldMapping {
    pub source_code: String,
    pub gold_targets: BTreeSet<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldPair {
    pub desc1: String,
    pub desc2: String,
    pub gold_level: MappingLevel,
}

fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'))
}

/// `ICD9<TAB>ICD10a|ICD10b` per line; codes are normalized.
pub fn parse_direct_dataset(text: &str) -> Result<Vec<GoldMapping>, EvalError> {
    let mut out = Vec::new();
    for (line, l) in data_lines(text) {
        let bad = |message: &str| EvalError::Dataset {
            line,
            message: message.to_string(),
        };
        let (source, targets) = l.split_once('\t').ok_or_else(|| bad("expected SOURCE<TAB>TARGETS"))?;
        let source_code = codes::normalize(source);
        let gold_targets: BTreeSet<String> = targets
            .split('|')
            .map(codes::normalize)
            .filter(|c| !c.is_empty())
            .collect();
        if source_code.is_empty() || gold_targets.is_empty() {
            return Err(bad("empty source code or gold target set"));
        }
        out.push(GoldMapping {
            source_code,
            gold_targets,
        });
    }
    Ok(out)
}

/// `desc1<TAB>desc2<TAB>LEVEL` per line.
pub fn parse_pair_dataset(text: &str) -> Result<Vec<GoldPair>, EvalError> {
    let mut out = Vec::new();
    for (line, l) in data_lines(text) {
        let fields: Vec<&str> = l.split('\t').collect();
        let bad = |message: String| EvalError::Dataset { line, message };
        let [d1, d2, level] = fields[..] else {
            return Err(bad(format!("expected 3 tab-separated fields, found {}", fields.len())));
        };
        if d1.trim().is_empty() || d2.trim().is_empty() {
            return Err(bad("empty description".into()));
        }
        out.push(GoldPair {
            desc1: d1.trim().to_string(),
            desc2: d2.trim().to_string(),
            gold_level: level.parse().map_err(|e: reasoner::UnknownLevel| bad(e.to_string()))?,
        });
    }
    Ok(out)
}

/// Share of gold codes found among the predictions. Extra predictions are
/// not penalized.
pub fn score_direct(gold: &BTreeSet<String>, predicted: &BTreeSet<String>) -> Result<f64, EvalError> {
    let gold: BTreeSet<String> = gold.iter().map(|c| codes::normalize(c)).collect();
    if gold.is_empty() {
        return Err(EvalError::EmptyGold);
    }
    let predicted: BTreeSet<String> = predicted.iter().map(|c| codes::normalize(c)).collect();
    Ok(gold.intersection(&predicted).count() as f64 / gold.len() as f64)
}

pub type Confusion = [[u64; 3]; 3];

/// Rows are gold levels, columns predicted levels. Invalid predictions
/// (`None`) are left out.
pub fn confusion_matrix(preds: &[Option<MappingLevel>], golds: &[MappingLevel]) -> Result<Confusion, EvalError> {
    if preds.len() != golds.len() {
        return Err(EvalError::LengthMismatch(preds.len(), golds.len()));
    }
    let mut m = [[0; 3]; 3];
    for (p, g) in preds.iter().zip(golds) {
        if let Some(p) = p {
            m[g.index()][p.index()] += 1;
        }
    }
    Ok(m)
}

fn precision_from(m: &Confusion) -> [Option<f64>; 3] {
    std::array::from_fn(|l| {
        let predicted: u64 = (0..3).map(|g| m[g][l]).sum();
        (predicted > 0).then(|| m[l][l] as f64 * 100.0 / predicted as f64)
    })
}

/// Per-level precision in percent; `None` where nothing was predicted at
/// that level.
pub fn precision_per_level(
    preds: &[Option<MappingLevel>],
    golds: &[MappingLevel],
) -> Result<[Option<f64>; 3], EvalError> {
    Ok(precision_from(&confusion_matrix(preds, golds)?))
}

pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalMode {
    Direct,
    Levels,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSpec {
    pub strategy: StrategyKind,
    pub temperature: f64,
    pub repeats: usize,
    /// Records evaluated concurrently within one repeat.
    #[serde(default = "one")]
    pub workers: usize,
}

fn one() -> usize {
    1
}

impl RunSpec {
    pub fn new(strategy: StrategyKind, temperature: f64) -> Self {
        RunSpec {
            strategy,
            temperature,
            repeats: 3,
            workers: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub std_definition: String,
    pub accuracy_averaging: String,
    /// Gold counts per level (A, B, C) for level runs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub level_distribution: Option<[u64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generated_at: Option<String>,
}

/// Outcome of one (strategy, temperature) cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mode: EvalMode,
    pub model_id: String,
    pub strategy: StrategyKind,
    pub temperature: f64,
    pub dataset_size: usize,
    pub repeats: usize,
    pub mean_accuracy: f64,
    pub std_accuracy: f64,
    pub per_repeat_accuracies: Vec<f64>,
    /// Percent per level A, B, C over pooled predictions; `None` when undefined.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_level_precision: Option<[Option<f64>; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confusion: Option<Confusion>,
    #[serde(default)]
    pub confusion_per_repeat: Vec<Confusion>,
    /// Pooled count of unparseable predictions per gold level.
    #[serde(default)]
    pub invalid_by_gold: [u64; 3],
    /// Records whose provider call failed (pooled over repeats).
    pub errors: u64,
    pub metadata: ReportMetadata,
}

impl EvalReport {
    /// The report without wall-clock fields, for comparisons.
    pub fn comparable(&self) -> EvalReport {
        let mut r = self.clone();
        r.metadata.generated_at = None;
        r
    }

    pub fn invalid(&self) -> u64 {
        self.invalid_by_gold.iter().sum()
    }
}

fn metadata(level_distribution: Option<[u64; 3]>) -> ReportMetadata {
    ReportMetadata {
        std_definition: "population (divide by n) over repeats".into(),
        accuracy_averaging: "macro over records".into(),
        level_distribution,
        generated_at: Some(chrono::Utc::now().to_rfc3339()),
    }
}

fn check(spec: &RunSpec, len: usize) -> Result<(), EvalError> {
    if len == 0 {
        return Err(EvalError::EmptyDataset);
    }
    if spec.repeats == 0 {
        return Err(EvalError::Spec("repeats must be at least 1".into()));
    }
    Ok(())
}

fn map_records<T: Sync, R: Send>(items: &[T], workers: usize, f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    if workers <= 1 || items.len() < 2 {
        return items.iter().map(&f).collect();
    }
    let chunk = items.len().div_ceil(workers);
    let f = &f;
    std::thread::scope(|s| {
        let handles: Vec<_> = items
            .chunks(chunk)
            .map(|part| s.spawn(move || part.iter().map(f).collect::<Vec<_>>()))
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("worker panicked"))
            .collect()
    })
}

/// Direct-mapping accuracy: per repeat, the mean record score times 100.
/// A failed provider call scores 0 and is counted in `errors`.
pub fn evaluate_direct(
    dataset: &[GoldMapping],
    spec: &RunSpec,
    provider: &dyn ChatProvider,
) -> Result<EvalReport, EvalError> {
    check(spec, dataset.len())?;
    let mut accuracies = Vec::with_capacity(spec.repeats);
    let mut errors = 0;
    for _ in 0..spec.repeats {
        let scores = map_records(dataset, spec.workers, |g| {
            match reasoner::direct_map(&g.source_code, spec.temperature, provider) {
                Ok(codes) => (
                    score_direct(&g.gold_targets, &codes.into_iter().collect()).unwrap_or(0.0),
                    false,
                ),
                Err(e) => {
                    log::warn!("direct mapping of {} failed: {e}", g.source_code);
                    (0.0, true)
                }
            }
        });
        errors += scores.iter().filter(|(_, e)| *e).count() as u64;
        accuracies.push(scores.iter().map(|(s, _)| s).sum::<f64>() * 100.0 / dataset.len() as f64);
    }
    let (mean, std) = mean_std(&accuracies);
    Ok(EvalReport {
        mode: EvalMode::Direct,
        model_id: provider.model_id().to_string(),
        strategy: spec.strategy,
        temperature: spec.temperature,
        dataset_size: dataset.len(),
        repeats: spec.repeats,
        mean_accuracy: mean,
        std_accuracy: std,
        per_repeat_accuracies: accuracies,
        per_level_precision: None,
        confusion: None,
        confusion_per_repeat: Vec::new(),
        invalid_by_gold: [0; 3],
        errors,
        metadata: metadata(None),
    })
}

/// Mapping-level accuracy, pooled precision and confusion matrices.
/// Unparseable or failed predictions count as wrong and are tallied as
/// invalid by gold level.
pub fn evaluate_levels(
    dataset: &[GoldPair],
    spec: &RunSpec,
    provider: &dyn ChatProvider,
) -> Result<EvalReport, EvalError> {
    check(spec, dataset.len())?;
    let strategy = StrategyConfig::new(spec.strategy, spec.temperature);
    strategy.examples()?;
    let golds: Vec<MappingLevel> = dataset.iter().map(|p| p.gold_level).collect();
    let mut accuracies = Vec::new();
    let mut per_repeat = Vec::new();
    let mut pooled = [[0; 3]; 3];
    let mut invalid_by_gold = [0; 3];
    let mut errors = 0;
    for _ in 0..spec.repeats {
        let preds: Vec<Option<MappingLevel>> = map_records(dataset, spec.workers, |p| {
            match reasoner::predict_level(&PairInput::labels(&p.desc1, &p.desc2), &strategy, provider) {
                Ok(level) => Ok(level),
                Err(ReasonerError::UnparseableLevel(_)) => Err(false),
                Err(e) => {
                    log::warn!("level prediction failed: {e}");
                    Err(true)
                }
            }
        })
        .into_iter()
        .map(|r| {
            errors += matches!(r, Err(true)) as u64;
            r.ok()
        })
        .collect();
        let m = confusion_matrix(&preds, &golds)?;
        let correct: u64 = (0..3).map(|i| m[i][i]).sum();
        accuracies.push(correct as f64 * 100.0 / dataset.len() as f64);
        for (p, g) in preds.iter().zip(&golds) {
            if p.is_none() {
                invalid_by_gold[g.index()] += 1;
            }
        }
        for (g, row) in m.iter().enumerate() {
            for (p, n) in row.iter().enumerate() {
                pooled[g][p] += n;
            }
        }
        per_repeat.push(m);
    }
    let (mean, std) = mean_std(&accuracies);
    let mut distribution = [0; 3];
    for g in &golds {
        distribution[g.index()] += 1;
    }
    Ok(EvalReport {
        mode: EvalMode::Levels,
        model_id: provider.model_id().to_string(),
        strategy: spec.strategy,
        temperature: spec.temperature,
        dataset_size: dataset.len(),
        repeats: spec.repeats,
        mean_accuracy: mean,
        std_accuracy: std,
        per_repeat_accuracies: accuracies,
        per_level_precision: Some(precision_from(&pooled)),
        confusion: Some(pooled),
        confusion_per_repeat: per_repeat,
        invalid_by_gold,
        errors,
        metadata: metadata(Some(distribution)),
    })
}

/// Strategies × temperatures grid to evaluate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub strategies: Vec<StrategyKind>,
    pub temperatures: Vec<f64>,
    pub repeats: usize,
    pub workers: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            strategies: StrategyKind::ALL.to_vec(),
            temperatures: vec![0.2, 0.6, 1.0],
            repeats: 3,
            workers: 1,
        }
    }
}

impl SweepConfig {
    pub fn specs(&self) -> Vec<RunSpec> {
        self.strategies
            .iter()
            .flat_map(|s| {
                self.temperatures.iter().map(move |t| RunSpec {
                    strategy: *s,
                    temperature: *t,
                    repeats: self.repeats,
                    workers: self.workers,
                })
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub reports: Vec<EvalReport>,
}

/// Runs every cell of the grid. Direct mode ignores the strategy axis and
/// runs once per temperature.
pub fn run_sweep(
    mode: EvalMode,
    direct: &[GoldMapping],
    pairs: &[GoldPair],
    sweep: &SweepConfig,
    provider: &dyn ChatProvider,
) -> Result<SweepReport, EvalError> {
    let mut specs = sweep.specs();
    if mode == EvalMode::Direct {
        specs.retain(|s| s.strategy == sweep.strategies[0]);
        for s in &mut specs {
            s.strategy = StrategyKind::ZeroShot;
        }
    }
    let mut reports = Vec::new();
    for spec in specs {
        log::info!("evaluating {} at T={}", spec.strategy, spec.temperature);
        reports.push(match mode {
            EvalMode::Direct => evaluate_direct(direct, &spec, provider)?,
            EvalMode::Levels => evaluate_levels(pairs, &spec, provider)?,
        });
    }
    Ok(SweepReport { reports })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
    Markdown,
}

impl std::str::FromStr for ReportFormat {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            other => Err(EvalError::Spec(format!("unknown report format {other:?}"))),
        }
    }
}

fn pct(v: Option<f64>) -> String {
    v.map(|v| format!("{v:.2}")).unwrap_or_else(|| "n/a".into())
}

fn row_label(r: &EvalReport) -> String {
    match r.mode {
        EvalMode::Direct => format!("direct ({})", r.model_id),
        EvalMode::Levels => r.strategy.to_string(),
    }
}

pub fn render_report(sweep: &SweepReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Json => serde_json::to_string_pretty(sweep).expect("report serializes"),
        ReportFormat::Csv => render_csv(sweep),
        ReportFormat::Markdown => render_markdown(sweep),
    }
}

fn render_csv(sweep: &SweepReport) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "mode",
        "model_id",
        "strategy",
        "temperature",
        "repeat",
        "accuracy",
        "precision_a",
        "precision_b",
        "precision_c",
    ])
    .expect("in-memory write");
    for r in &sweep.reports {
        for (i, acc) in r.per_repeat_accuracies.iter().enumerate() {
            let precision: [String; 3] = match r.confusion_per_repeat.get(i) {
                Some(m) => precision_from(m).map(pct),
                None => std::array::from_fn(|_| String::new()),
            };
            let mode = match r.mode {
                EvalMode::Direct => "direct",
                EvalMode::Levels => "levels",
            };
            w.write_record([
                mode.to_string(),
                r.model_id.clone(),
                r.strategy.to_string(),
                format!("{}", r.temperature),
                (i + 1).to_string(),
                format!("{acc:.2}"),
                precision[0].clone(),
                precision[1].clone(),
                precision[2].clone(),
            ])
            .expect("in-memory write");
        }
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
}

fn render_markdown(sweep: &SweepReport) -> String {
    let mut temps: Vec<f64> = Vec::new();
    let mut rows: Vec<String> = Vec::new();
    for r in &sweep.reports {
        if !temps.contains(&r.temperature) {
            temps.push(r.temperature);
        }
        let label = row_label(r);
        if !rows.contains(&label) {
            rows.push(label);
        }
    }
    let mut out = String::from("## Accuracy (%)\n\n| Strategy |");
    for t in &temps {
        let _ = write!(out, " T={t} |");
    }
    out.push_str("\n|---|");
    out.push_str(&"---|".repeat(temps.len()));
    out.push('\n');
    for label in &rows {
        let _ = write!(out, "| {label} |");
        for t in &temps {
            let cell = sweep
                .reports
                .iter()
                .find(|r| row_label(r) == *label && r.temperature == *t)
                .map(|r| format!("{:.2}±{:.2}", r.mean_accuracy, r.std_accuracy))
                .unwrap_or_else(|| "-".into());
            let _ = write!(out, " {cell} |");
        }
        out.push('\n');
    }
    let level_reports: Vec<&EvalReport> = sweep.reports.iter().filter(|r| r.mode == EvalMode::Levels).collect();
    if !level_reports.is_empty() {
        out.push_str(
            "\n## Precision per level (%)\n\n| Strategy | T | A | B | C | invalid |\n|---|---|---|---|---|---|\n",
        );
        for r in &level_reports {
            let p = r.per_level_precision.unwrap_or([None; 3]);
            let _ = writeln!(
                out,
                "| {} | {} | {} | {} | {} | {} |",
                r.strategy,
                r.temperature,
                pct(p[0]),
                pct(p[1]),
                pct(p[2]),
                r.invalid()
            );
        }
        out.push_str("\n## Confusion matrices (rows gold, columns predicted, pooled over repeats)\n");
        for r in &level_reports {
            let Some(m) = r.confusion else { continue };
            let _ = write!(
                out,
                "\n### {} at T={}\n\n| gold \\ pred | A | B | C |\n|---|---|---|---|\n",
                r.strategy, r.temperature
            );
            for (g, row) in m.iter().enumerate() {
                let _ = writeln!(
                    out,
                    "| {} | {} | {} | {} |",
                    MappingLevel::ALL[g],
                    row[0],
                    row[1],
                    row[2]
                );
            }
        }
    }
    out
}
