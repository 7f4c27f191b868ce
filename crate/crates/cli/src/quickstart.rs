//! The offline end-to-end run: seed corpus, mock generation of the three
//! machine classes, split, a small model, evaluation and a written report.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use mgtd_core::corpus::{stratified_split, DatasetManifest, Split};
use mgtd_core::eval::{evaluate, render_grid, render_svg, render_table, EvalReport};
use mgtd_core::genpipe::{
    generate_machine, humanize, polish, GenerationConfig, MockProvider, PromptCatalog, ProviderClient, RetryPolicy,
};
use mgtd_core::neural::{save_model, ClassifierModel, EncoderConfig, Vocabulary, DEFAULT_MAX_VOCAB};
use mgtd_core::synthetic::seed_human_corpus;
use mgtd_core::training::{make_preset, train, TrainReport};
use mgtd_core::Label;

use crate::CliError;

pub const SPLIT_RATIOS: [f64; 3] = [0.7, 0.15, 0.15];

#[derive(Debug, Clone)]
pub struct QuickstartOptions {
    pub out: PathBuf,
    pub seed: u64,
    /// Human seed texts per bundled domain.
    pub per_domain: usize,
}

#[derive(Debug, Clone)]
pub struct QuickstartOutcome {
    pub corpus_size: usize,
    pub train: TrainReport,
    pub test: EvalReport,
}

pub fn quickstart_encoder() -> EncoderConfig {
    EncoderConfig { embedding_dim: 32, num_layers: 1, num_heads: 2, feedforward_dim: 64, max_seq_len: 128, dropout: 0.1 }
}

fn stage<T, E: std::fmt::Display>(name: &str, r: Result<T, E>) -> Result<T, CliError> {
    r.map_err(|e| CliError::Runtime(format!("stage {name} failed: {e}")))
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError::Runtime(format!("stage report failed: {}: {e}", path.display())))
}

/// Builds the four-class corpus from the seed corpus with the mock provider.
pub fn build_corpus(seed: u64, per_domain: usize) -> Result<DatasetManifest, CliError> {
    let human = seed_human_corpus(per_domain, seed);
    let catalog = PromptCatalog::default();
    let provider: Arc<dyn ProviderClient> = Arc::new(MockProvider::new("mock", seed));
    let cfg = GenerationConfig { retry: RetryPolicy::no_delay(2), ..Default::default() };
    let machine = stage("generate", generate_machine(&human.entries, &catalog, Arc::clone(&provider), &cfg, seed))?;
    let humanized = stage(
        "generate",
        humanize(&machine.manifest.entries, &catalog, Arc::clone(&provider), &cfg, seed.wrapping_add(1)),
    )?;
    let polished = stage("generate", polish(&human.entries, &catalog, provider, &cfg, seed.wrapping_add(2)))?;
    for s in [&machine, &humanized, &polished] {
        if !s.failures.is_empty() {
            return Err(CliError::Runtime(format!(
                "stage generate failed: {} jobs failed, first: {}",
                s.failures.len(),
                s.failures[0].reason
            )));
        }
    }
    let mut entries = human.entries;
    entries.extend(machine.manifest.entries);
    entries.extend(humanized.manifest.entries);
    entries.extend(polished.manifest.entries);
    let mut m = DatasetManifest::new(entries).with_seed(seed);
    m.provenance = format!("quickstart: seed corpus ({per_domain} per domain) plus mock generation");
    stage("split", stratified_split(&m, SPLIT_RATIOS, seed))
}

pub fn run(opts: &QuickstartOptions) -> Result<QuickstartOutcome, CliError> {
    fs::create_dir_all(&opts.out).map_err(|e| CliError::Runtime(format!("{}: {e}", opts.out.display())))?;
    tracing::info!("stage corpus");
    let corpus = build_corpus(opts.seed, opts.per_domain)?;
    stage("corpus", corpus.save(opts.out.join("corpus.jsonl")))?;

    tracing::info!("stage train");
    let train_split = corpus.split(Split::Train);
    let dev_split = corpus.split(Split::Dev);
    let test_split = corpus.split(Split::Test);
    let vocab = Vocabulary::build(train_split.iter().map(|e| e.text.as_str()), DEFAULT_MAX_VOCAB);
    let mut model = stage("train", ClassifierModel::new(vocab, quickstart_encoder(), corpus.domains(), opts.seed))?;
    let mut cfg = stage("train", make_preset("full_dataset"))?;
    cfg.learning_rate = 1e-3;
    cfg.seed = opts.seed;
    let report = stage("train", train(&mut model, &train_split, &dev_split, &cfg))?;
    stage("train", save_model(&model, opts.out.join("model.mgtd")))?;
    write(&opts.out.join("train_report.json"), stage("train", serde_json::to_vec_pretty(&report))?)?;

    tracing::info!("stage evaluate");
    let test = stage("evaluate", evaluate(&model, &test_split))?;
    let names: Vec<&str> = Label::ALL.iter().map(|l| l.name()).collect();
    write(&opts.out.join("eval_report.json"), stage("report", serde_json::to_vec_pretty(&test))?)?;
    let mut table = render_table(&[("quickstart", &test)]);
    table.push('\n');
    table.push_str(&render_grid(&test.confusion, &names));
    write(&opts.out.join("eval_table.txt"), table)?;
    write(&opts.out.join("confusion.svg"), render_svg(&test.confusion, &names, "quickstart test split"))?;
    Ok(QuickstartOutcome { corpus_size: corpus.len(), train: report, test })
}
