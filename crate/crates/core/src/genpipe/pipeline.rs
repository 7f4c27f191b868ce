use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::clean::Cleaner;
use super::prompt::{render_prompt, PromptCatalog, PromptTemplate, TrailingPrompt};
use super::provider::{ProviderClient, ProviderError, RetryPolicy, TokenBucket};
use super::GenError;
use crate::corpus::{DatasetManifest, Label, LabeledText};
use crate::words::{truncate_words, word_count};

pub const MAX_GENERATED_WORDS: usize = 1500;

#[derive(Debug, Clone, PartialEq)]
pub enum JobSource {
    /// Text to rewrite (classes III and IV).
    Text(LabeledText),
    /// Task statement for pure generation (class II).
    Task { id: String, domain: String, statement: String },
}

impl JobSource {
    pub fn id(&self) -> &str {
        match self {
            JobSource::Text(t) => &t.id,
            JobSource::Task { id, .. } => id,
        }
    }

    pub fn domain(&self) -> &str {
        match self {
            JobSource::Text(t) => &t.domain,
            JobSource::Task { domain, .. } => domain,
        }
    }

    fn prompt_input(&self) -> &str {
        match self {
            JobSource::Text(t) => &t.text,
            JobSource::Task { statement, .. } => statement,
        }
    }
}

#[derive(Clone)]
pub struct GenerationJob {
    pub id: String,
    pub source: JobSource,
    pub template: PromptTemplate,
    pub provider: Arc<dyn ProviderClient>,
    pub generator_name: String,
}

impl GenerationJob {
    pub fn new(source: JobSource, template: PromptTemplate, provider: Arc<dyn ProviderClient>) -> Self {
        let generator_name = provider.name().to_string();
        let id = format!("{}.{}.{}", source.id(), template.target_label.roman().to_lowercase(), generator_name);
        GenerationJob { id, source, template, provider, generator_name }
    }
}

#[derive(Debug, Clone)]
pub struct GenerationConfig {
    pub max_words: usize,
    pub min_words: usize,
    pub retry: RetryPolicy,
    pub parallelism: usize,
    /// Requests per second per provider; `None` disables throttling.
    pub rate_limit: Option<f64>,
    pub burst: f64,
    pub trailing: TrailingPrompt,
    pub cleaner: Cleaner,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        GenerationConfig {
            max_words: MAX_GENERATED_WORDS,
            min_words: 30,
            retry: RetryPolicy::default(),
            parallelism: 4,
            rate_limit: None,
            burst: 4.0,
            trailing: TrailingPrompt::default(),
            cleaner: Cleaner::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum JobStatus {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JobProvenance {
    pub job_id: String,
    pub source_id: String,
    pub provider: String,
    pub label: Label,
    pub instruction: String,
    pub attempts: usize,
    pub status: JobStatus,
    pub truncated: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JobFailure {
    pub job_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationSummary {
    pub manifest: DatasetManifest,
    pub failures: Vec<JobFailure>,
    pub provenance: Vec<JobProvenance>,
}

impl GenerationSummary {
    pub fn succeeded(&self) -> usize {
        self.manifest.len()
    }
}

struct JobResult {
    entry: Option<LabeledText>,
    provenance: JobProvenance,
}

fn call_with_retry(
    provider: &dyn ProviderClient,
    prompt: &str,
    cfg: &GenerationConfig,
    bucket: Option<&TokenBucket>,
) -> (Result<String, ProviderError>, usize) {
    let attempts = cfg.retry.attempts.max(1);
    let mut last = ProviderError::Transient("no attempt made".into());
    for attempt in 1..=attempts {
        if attempt > 1 {
            std::thread::sleep(cfg.retry.delay_before(attempt - 1));
        }
        if let Some(b) = bucket {
            b.acquire();
        }
        match provider.complete(prompt, cfg.max_words) {
            Ok(text) => return (Ok(text), attempt),
            Err(e @ ProviderError::Fatal(_)) => return (Err(e), attempt),
            Err(e) => {
                tracing::warn!(provider = provider.name(), attempt, "transient failure: {e}");
                last = e;
            }
        }
    }
    (Err(last), attempts)
}

fn run_job(job: &GenerationJob, cfg: &GenerationConfig, bucket: Option<&TokenBucket>) -> JobResult {
    let mut prov = JobProvenance {
        job_id: job.id.clone(),
        source_id: job.source.id().to_string(),
        provider: job.provider.name().to_string(),
        label: job.template.target_label,
        instruction: job.template.instruction.clone(),
        attempts: 0,
        status: JobStatus::Failed,
        truncated: false,
        error: None,
    };
    let fail = |mut prov: JobProvenance, reason: String| {
        prov.error = Some(reason);
        JobResult { entry: None, provenance: prov }
    };
    let prompt = match render_prompt(&job.template, &cfg.trailing, job.source.prompt_input()) {
        Ok(p) => p,
        Err(e) => return fail(prov, e.to_string()),
    };
    let (raw, attempts) = call_with_retry(job.provider.as_ref(), &prompt, cfg, bucket);
    prov.attempts = attempts;
    let raw = match raw {
        Ok(r) => r,
        Err(e) => return fail(prov, format!("provider exhausted: {e}")),
    };
    let cleaned = cfg.cleaner.clean(&raw);
    if cleaned.is_empty() {
        return fail(prov, "empty generation".into());
    }
    let (text, truncated) = truncate_words(&cleaned, cfg.max_words);
    let words = word_count(text);
    if words < cfg.min_words {
        return fail(prov, format!("too short: {words} words < {}", cfg.min_words));
    }
    let entry = LabeledText::new(
        job.id.clone(),
        text.to_string(),
        job.template.target_label,
        job.source.domain().to_string(),
        job.generator_name.clone(),
    );
    if let Err(e) = entry.validate() {
        return fail(prov, e.to_string());
    }
    prov.status = JobStatus::Ok;
    prov.truncated = truncated;
    JobResult { entry: Some(entry), provenance: prov }
}

/// Runs every job (concurrently up to `cfg.parallelism`), cleaning and
/// length-filtering outputs. Failed jobs are reported, never fatal. Output
/// entries are ordered by job id.
pub fn run_generation(jobs: &[GenerationJob], cfg: &GenerationConfig) -> GenerationSummary {
    let mut buckets: BTreeMap<String, TokenBucket> = BTreeMap::new();
    if let Some(rate) = cfg.rate_limit {
        for j in jobs {
            buckets
                .entry(j.provider.name().to_string())
                .or_insert_with(|| TokenBucket::new(rate, cfg.burst));
        }
    }
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<(usize, JobResult)>> = Mutex::new(Vec::with_capacity(jobs.len()));
    let workers = cfg.parallelism.clamp(1, jobs.len().max(1));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(job) = jobs.get(i) else { break };
                let r = run_job(job, cfg, buckets.get(job.provider.name()));
                results.lock().expect("results lock").push((i, r));
            });
        }
    });
    let mut results = results.into_inner().expect("results lock");
    results.sort_by(|a, b| a.1.provenance.job_id.cmp(&b.1.provenance.job_id).then(a.0.cmp(&b.0)));

    let mut entries = Vec::new();
    let mut failures = Vec::new();
    let mut provenance = Vec::new();
    for (_, r) in results {
        match r.entry {
            Some(e) => entries.push(e),
            None => failures.push(JobFailure {
                job_id: r.provenance.job_id.clone(),
                reason: r.provenance.error.clone().unwrap_or_default(),
            }),
        }
        provenance.push(r.provenance);
    }
    let mut manifest = DatasetManifest::new(entries);
    manifest.provenance = format!(
        "generated: {} jobs, {} ok, {} failed, max_words {}, min_words {}",
        jobs.len(),
        manifest.len(),
        failures.len(),
        cfg.max_words,
        cfg.min_words
    );
    GenerationSummary { manifest, failures, provenance }
}

/// First sentence of `text`, capped at 25 words; used as the topic for
/// pure generation.
pub fn task_statement(text: &str) -> String {
    let first = text
        .split_inclusive(['.', '?', '!', '\n'])
        .find(|s| !s.trim().is_empty())
        .unwrap_or(text);
    let (head, _) = truncate_words(first.trim(), 25);
    head.trim_end_matches(['.', '\n']).to_string()
}

fn pick_jobs(
    sources: Vec<JobSource>,
    target: Label,
    catalog: &PromptCatalog,
    provider: &Arc<dyn ProviderClient>,
    seed: u64,
) -> Result<Vec<GenerationJob>, GenError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sources
        .into_iter()
        .map(|src| {
            let pool = catalog.pool(target, src.domain());
            if pool.is_empty() {
                return Err(GenError::NoTemplate { label: target, domain: src.domain().to_string() });
            }
            let template = pool[rng.random_range(0..pool.len())].clone();
            Ok(GenerationJob::new(src, template, Arc::clone(provider)))
        })
        .collect()
}

fn require_class(operation: &'static str, sources: &[LabeledText], expected: Label) -> Result<(), GenError> {
    match sources.iter().find(|s| s.label != expected) {
        Some(s) => Err(GenError::WrongInputClass { operation, id: s.id.clone(), expected, found: s.label }),
        None => Ok(()),
    }
}

/// Class III: rewrite machine-generated texts to read as human-written.
pub fn humanize(
    sources: &[LabeledText],
    catalog: &PromptCatalog,
    provider: Arc<dyn ProviderClient>,
    cfg: &GenerationConfig,
    seed: u64,
) -> Result<GenerationSummary, GenError> {
    require_class("humanize", sources, Label::MachineGenerated)?;
    let src = sources.iter().cloned().map(JobSource::Text).collect();
    let jobs = pick_jobs(src, Label::MachineHumanized, catalog, &provider, seed)?;
    Ok(run_generation(&jobs, cfg))
}

/// Class IV: polish human-written texts.
pub fn polish(
    sources: &[LabeledText],
    catalog: &PromptCatalog,
    provider: Arc<dyn ProviderClient>,
    cfg: &GenerationConfig,
    seed: u64,
) -> Result<GenerationSummary, GenError> {
    require_class("polish", sources, Label::HumanWritten)?;
    let src = sources.iter().cloned().map(JobSource::Text).collect();
    let jobs = pick_jobs(src, Label::MachinePolished, catalog, &provider, seed)?;
    Ok(run_generation(&jobs, cfg))
}

/// Class II: generate from the task statement of each source (its first
/// sentence), whatever the source class.
pub fn generate_machine(
    sources: &[LabeledText],
    catalog: &PromptCatalog,
    provider: Arc<dyn ProviderClient>,
    cfg: &GenerationConfig,
    seed: u64,
) -> Result<GenerationSummary, GenError> {
    let src = sources
        .iter()
        .map(|s| JobSource::Task { id: s.id.clone(), domain: s.domain.clone(), statement: task_statement(&s.text) })
        .collect();
    let jobs = pick_jobs(src, Label::MachineGenerated, catalog, &provider, seed)?;
    Ok(run_generation(&jobs, cfg))
}
