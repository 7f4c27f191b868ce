use std::fs;
use std::io::{BufRead, Write};
use std::net::SocketAddr;
use std::path::Path;
use std::time::Duration;

use mgtd_core::corpus::{
    balance_classes, corpus_stats, load_manifest, normalize_domain, stratified_split, CorpusError, DatasetManifest,
};
use mgtd_core::eval::{binary_collapse, cross_domain_evaluate, evaluate, render_grid, render_svg, render_table, EvalError};
use mgtd_core::genpipe::{
    generate_machine, humanize, polish, Cleaner, GenError, GenerationConfig, PromptCatalog, RetryPolicy, TrailingPrompt,
};
use mgtd_core::neural::{load_model, save_model, ClassifierModel, EncoderConfig, NeuralError, Vocabulary};
use mgtd_core::service::{self, ServiceError};
use mgtd_core::training::{dann_train, make_preset, train, GrlSchedule, OptimizerKind, TrainError};
use mgtd_core::{Label, LabeledText, Split};
use serde_json::json;

use crate::provider::make_provider;
use crate::quickstart::{self, QuickstartOptions};
use crate::{
    BalanceArgs, CliError, Command, EndToEndArgs, EvaluateArgs, GenerateArgs, PredictArgs, ServeArgs, SplitArgs,
    StatsArgs, TrainArgs,
};

pub(crate) fn dispatch(cmd: Command, seed: u64, out: &mut dyn Write) -> Result<(), CliError> {
    match cmd {
        Command::Generate(a) => generate(a, seed, out),
        Command::Stats(a) => stats(a, out),
        Command::Split(a) => split(a, seed, out),
        Command::Balance(a) => balance(a, seed, out),
        Command::Train(a) => train_cmd(a, seed, out),
        Command::Evaluate(a) => evaluate_cmd(a, out),
        Command::Predict(a) => predict(a, out),
        Command::Serve(a) => serve(a, seed),
        Command::EndToEnd(a) => end_to_end(a, seed, out),
    }
}

fn corpus_err(path: &Path, e: CorpusError) -> CliError {
    match e {
        CorpusError::BadRatios(_) => CliError::Usage(e.to_string()),
        CorpusError::Io(_) if !path.exists() => CliError::Data(format!("{}: no such file", path.display())),
        _ => CliError::Data(format!("{}: {e}", path.display())),
    }
}

fn neural_err(path: &Path, e: NeuralError) -> CliError {
    match e {
        NeuralError::Config(_) => CliError::Usage(e.to_string()),
        _ => CliError::Data(format!("{}: {e}", path.display())),
    }
}

fn train_err(e: TrainError) -> CliError {
    match e {
        TrainError::Config(_) => CliError::Usage(e.to_string()),
        TrainError::NonFinite { .. } | TrainError::Neural(NeuralError::Io(_)) => CliError::Runtime(e.to_string()),
        TrainError::Neural(NeuralError::Config(_)) => CliError::Usage(e.to_string()),
        _ => CliError::Data(e.to_string()),
    }
}

fn gen_err(e: GenError) -> CliError {
    match e {
        GenError::Io(_) => CliError::Runtime(e.to_string()),
        GenError::Template(_) | GenError::Catalog { .. } | GenError::PlaceholderMismatch(_) => {
            CliError::Data(e.to_string())
        }
        GenError::WrongInputClass { .. } | GenError::NoTemplate { .. } => CliError::Data(e.to_string()),
    }
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Runtime(format!("{}: {e}", path.display()))
}

fn emit(out: &mut dyn Write, text: &str) -> Result<(), CliError> {
    out.write_all(text.as_bytes()).map_err(|e| CliError::Runtime(format!("stdout: {e}")))
}

fn load(path: &Path) -> Result<DatasetManifest, CliError> {
    load_manifest(path).map_err(|e| corpus_err(path, e))
}

fn save(m: &DatasetManifest, path: &Path) -> Result<(), CliError> {
    m.save(path).map_err(|e| match e {
        CorpusError::Io(io) => io_err(path, io),
        other => CliError::Data(other.to_string()),
    })
}

fn generate(a: GenerateArgs, seed: u64, out: &mut dyn Write) -> Result<(), CliError> {
    let target: Label = a.class.parse().map_err(|e| CliError::Usage(format!("--class: {e}")))?;
    let domain = match &a.domain {
        Some(d) => Some(normalize_domain(d).ok_or_else(|| CliError::Usage(format!("--domain: invalid name {d:?}")))?),
        None => None,
    };
    let mut catalog = PromptCatalog::default();
    if let Some(p) = &a.catalog {
        catalog.extend(PromptCatalog::load(p).map_err(gen_err)?);
    }
    let mut cleaner = Cleaner::default();
    if let Some(p) = &a.phrases {
        let text = fs::read_to_string(p).map_err(|e| CliError::Data(format!("{}: {e}", p.display())))?;
        for phrase in Cleaner::from_lines(&text).phrases() {
            cleaner = cleaner.with_phrase(phrase.clone());
        }
    }
    let trailing = match &a.trailing {
        Some(t) => TrailingPrompt::new(t.clone()).map_err(|e| CliError::Usage(format!("--trailing: {e}")))?,
        None => TrailingPrompt::default(),
    };
    let cfg = GenerationConfig {
        retry: RetryPolicy { attempts: a.retries.max(1), ..Default::default() },
        parallelism: a.parallelism.max(1),
        rate_limit: a.rate_limit,
        trailing,
        cleaner,
        ..Default::default()
    };

    let source = load(&a.input)?;
    let wanted = match target {
        Label::HumanWritten => return Err(CliError::Usage("--class must be II, III or IV".into())),
        Label::MachineGenerated => None,
        Label::MachineHumanized => Some(Label::MachineGenerated),
        Label::MachinePolished => Some(Label::HumanWritten),
    };
    let sources: Vec<LabeledText> = source
        .entries
        .into_iter()
        .filter(|e| domain.as_deref().is_none_or(|d| d == e.domain))
        .filter(|e| wanted.is_none_or(|l| l == e.label))
        .collect();
    if sources.is_empty() {
        return Err(CliError::Data(format!("{}: no usable source texts for class {}", a.input.display(), target.roman())));
    }

    let provider = make_provider(&a.provider, a.model_name.as_deref(), seed).map_err(CliError::Usage)?;
    let summary = match target {
        Label::MachineGenerated => generate_machine(&sources, &catalog, provider, &cfg, seed),
        Label::MachineHumanized => humanize(&sources, &catalog, provider, &cfg, seed),
        _ => polish(&sources, &catalog, provider, &cfg, seed),
    }
    .map_err(gen_err)?;
    let mut manifest = summary.manifest.clone().with_seed(seed);
    manifest.provenance = format!("{}; provider {}; class {}", summary.manifest.provenance, a.provider, target.roman());
    save(&manifest, &a.out)?;
    if let Some(p) = &a.provenance {
        let mut lines = String::new();
        for row in &summary.provenance {
            lines.push_str(&serde_json::to_string(row).expect("provenance serializes"));
            lines.push('\n');
        }
        fs::write(p, lines).map_err(|e| io_err(p, e))?;
    }
    for f in &summary.failures {
        eprintln!("failed {}: {}", f.job_id, f.reason);
    }
    emit(
        out,
        &format!("generated {} of {} texts (class {}) -> {}\n", summary.succeeded(), sources.len(), target.roman(), a.out.display()),
    )?;
    if summary.succeeded() == 0 {
        return Err(CliError::Runtime("every generation job failed".into()));
    }
    Ok(())
}

fn stats(a: StatsArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let m = load(&a.input)?;
    let s = corpus_stats(&m);
    emit(out, &if a.tsv { s.render_tsv() } else { s.render_table() })
}

fn parse_ratios(s: &str) -> Result<[f64; 3], CliError> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| CliError::Usage(format!("--ratios {s:?}: {e}")))?;
    <[f64; 3]>::try_from(parts).map_err(|_| CliError::Usage(format!("--ratios {s:?}: expected three numbers")))
}

fn split(a: SplitArgs, seed: u64, out: &mut dyn Write) -> Result<(), CliError> {
    let ratios = parse_ratios(&a.ratios)?;
    let m = load(&a.input)?;
    let s = stratified_split(&m, ratios, seed).map_err(|e| corpus_err(&a.input, e))?;
    save(&s, &a.out)?;
    let counts: Vec<String> = Split::ALL.iter().map(|sp| format!("{} {}", sp.name(), s.split(*sp).len())).collect();
    emit(out, &format!("{} -> {}\n", counts.join(", "), a.out.display()))
}

fn balance(a: BalanceArgs, seed: u64, out: &mut dyn Write) -> Result<(), CliError> {
    if a.cap == 0 {
        return Err(CliError::Usage("--cap must be at least 1".into()));
    }
    let m = load(&a.input)?.with_seed(seed);
    let b = balance_classes(&m, a.cap);
    save(&b, &a.out)?;
    emit(out, &format!("kept {} of {} entries -> {}\n", b.len(), m.len(), a.out.display()))
}

fn train_cmd(a: TrainArgs, seed: u64, out: &mut dyn Write) -> Result<(), CliError> {
    let mut cfg = make_preset(&a.preset).map_err(|e| CliError::Usage(format!("--preset: {e}")))?;
    cfg.seed = seed;
    if let Some(v) = a.epochs {
        cfg.epochs = v;
    }
    if let Some(v) = a.lr {
        cfg.learning_rate = v;
    }
    if let Some(v) = a.batch_size {
        cfg.batch_size = v;
    }
    if let Some(v) = a.weight_decay {
        cfg.weight_decay = v;
    }
    if let Some(v) = &a.grl {
        cfg.grl_schedule = v.parse::<GrlSchedule>().map_err(|e| CliError::Usage(format!("--grl: {e}")))?;
    }
    if let Some(v) = &a.optimizer {
        cfg.optimizer = v.parse::<OptimizerKind>().map_err(|e| CliError::Usage(format!("--optimizer: {e}")))?;
    }
    cfg.patience = a.patience;
    if let Some(v) = a.domain_head_lr_scale {
        cfg.domain_head_lr_scale = v;
    }
    if let Some(v) = a.domain_head_weight_decay {
        cfg.domain_head_weight_decay = v;
    }
    let encoder = EncoderConfig {
        embedding_dim: a.dim,
        num_layers: a.layers,
        num_heads: a.heads,
        feedforward_dim: a.ff,
        max_seq_len: a.max_seq_len,
        dropout: a.dropout,
    };
    encoder.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    if a.dann { cfg.validate_adversarial() } else { cfg.validate() }.map_err(train_err)?;

    let m = load(&a.data)?;
    let train_split = m.split(Split::Train);
    let dev_split = m.split(Split::Dev);
    fs::create_dir_all(&a.out).map_err(|e| io_err(&a.out, e))?;
    let model_path = a.out.join("model.mgtd");
    cfg.checkpoint = Some(model_path.clone());

    let mut domains: Vec<String> = train_split.iter().map(|e| e.domain.clone()).collect();
    domains.sort();
    domains.dedup();
    let vocab = Vocabulary::build(train_split.iter().map(|e| e.text.as_str()), a.vocab_size);
    let mut model = ClassifierModel::new(vocab, encoder, domains, seed).map_err(|e| neural_err(&a.data, e))?;
    tracing::info!(params = model.num_params(), train = train_split.len(), dev = dev_split.len(), "training");
    let report = if a.dann {
        dann_train(&mut model, &train_split, &dev_split, &cfg)
    } else {
        train(&mut model, &train_split, &dev_split, &cfg)
    }
    .map_err(train_err)?;
    save_model(&model, &model_path).map_err(|e| CliError::Runtime(e.to_string()))?;

    let report_path = a.out.join("train_report.json");
    let json = serde_json::to_vec_pretty(&json!({ "config": cfg, "encoder": encoder, "report": report }))
        .expect("report serializes");
    fs::write(&report_path, json).map_err(|e| io_err(&report_path, e))?;
    let log_path = a.out.join("train_log.txt");
    let log = report.render();
    fs::write(&log_path, &log).map_err(|e| io_err(&log_path, e))?;
    emit(out, &log)?;
    emit(out, &format!("model -> {}\n", model_path.display()))
}

fn open_model(path: &Path) -> Result<ClassifierModel, CliError> {
    load_model(path).map_err(|e| match e {
        NeuralError::Io(io) if io.kind() == std::io::ErrorKind::NotFound => {
            CliError::Data(format!("{}: no such file", path.display()))
        }
        other => CliError::Data(format!("{}: {other}", path.display())),
    })
}

fn evaluate_cmd(a: EvaluateArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let model = open_model(&a.model)?;
    let m = load(&a.data)?;
    let entries = if a.split == "all" {
        m.entries.clone()
    } else {
        let s: Split = a.split.parse().map_err(|e| CliError::Usage(format!("--split: {e}")))?;
        m.split(s)
    };
    let empty = |_: EvalError| CliError::Data(format!("{}: split {} is empty", a.data.display(), a.split));
    let report = evaluate(&model, &entries).map_err(empty)?;
    let name = a.model.file_stem().map_or("model".into(), |s| s.to_string_lossy().into_owned());
    let mut rows = vec![(name.clone(), report.clone())];
    let binary = a.binary.then(|| binary_collapse(&report.confusion));
    if let Some(b) = &binary {
        rows.push((format!("{name} (binary)"), b.clone()));
    }
    let by_domain = if a.by_domain { Some(cross_domain_evaluate(&model, &entries).map_err(empty)?) } else { None };
    if let Some(cd) = &by_domain {
        for d in &cd.domains {
            let tag = if d.unseen { " (unseen)" } else { "" };
            rows.push((format!("{}{tag}", d.domain), d.report.clone()));
        }
    }
    let view: Vec<(&str, &mgtd_core::EvalReport)> = rows.iter().map(|(n, r)| (n.as_str(), r)).collect();
    emit(out, &render_table(&view))?;
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    let names: Vec<&str> = Label::ALL.iter().map(|l| l.name()).collect();
    if a.grid {
        emit(out, "\n")?;
        emit(out, &render_grid(&report.confusion, &names))?;
    }
    if let Some(p) = &a.svg {
        let title = format!("{name} on {}", a.split);
        fs::write(p, render_svg(&report.confusion, &names, &title)).map_err(|e| io_err(p, e))?;
    }
    if let Some(dir) = &a.out {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        let path = dir.join("eval_report.json");
        let doc = json!({
            "model": a.model,
            "data": a.data,
            "split": a.split,
            "report": report,
            "binary": binary,
            "by_domain": by_domain,
        });
        fs::write(&path, serde_json::to_vec_pretty(&doc).expect("report serializes")).map_err(|e| io_err(&path, e))?;
    }
    Ok(())
}

fn read_inputs(a: &PredictArgs) -> Result<Vec<String>, CliError> {
    let reader: Box<dyn BufRead> = match &a.input {
        Some(p) if p.as_os_str() != "-" => {
            let f = fs::File::open(p).map_err(|e| CliError::Data(format!("{}: {e}", p.display())))?;
            Box::new(std::io::BufReader::new(f))
        }
        _ => Box::new(std::io::stdin().lock()),
    };
    let mut texts = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| CliError::Data(format!("input line {}: {e}", n + 1)))?;
        if line.trim().is_empty() && !a.jsonl {
            continue;
        }
        if a.jsonl {
            if line.trim().is_empty() {
                continue;
            }
            let v: serde_json::Value =
                serde_json::from_str(&line).map_err(|e| CliError::Data(format!("input line {}: {e}", n + 1)))?;
            let t = v["text"]
                .as_str()
                .ok_or_else(|| CliError::Data(format!("input line {}: no string field \"text\"", n + 1)))?;
            texts.push(t.to_string());
        } else {
            texts.push(line);
        }
    }
    Ok(texts)
}

fn predict(a: PredictArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let model = open_model(&a.model)?;
    let texts = read_inputs(&a)?;
    let mut table = String::from("index\tlabel");
    for l in Label::ALL {
        table.push('\t');
        table.push_str(l.name());
    }
    table.push_str("\twords\n");
    let mut rejected = 0;
    for (i, text) in texts.iter().enumerate() {
        match service::detect(&model, text) {
            Ok(r) => {
                table.push_str(&format!("{i}\t{}", r.label.name()));
                for p in r.probabilities.values() {
                    table.push_str(&format!("\t{p:.6}"));
                }
                table.push_str(&format!("\t{}\n", r.word_count));
            }
            Err(e) => {
                rejected += 1;
                let words = match e {
                    ServiceError::TooShort { words } | ServiceError::TooLong { words } => words,
                    _ => 0,
                };
                table.push_str(&format!("{i}\trejected:{}", e.code()));
                table.push_str(&"\t-".repeat(Label::COUNT));
                table.push_str(&format!("\t{words}\n"));
                eprintln!("text {i}: {e}");
            }
        }
    }
    emit(out, &table)?;
    if rejected > 0 && !a.lenient {
        return Err(CliError::Data(format!("{rejected} of {} texts rejected", texts.len())));
    }
    Ok(())
}

fn serve(a: ServeArgs, seed: u64) -> Result<(), CliError> {
    let addr: SocketAddr = a.addr.parse().map_err(|e| CliError::Usage(format!("--addr {:?}: {e}", a.addr)))?;
    if !a.model.exists() {
        return Err(CliError::Data(format!("{}: no such file", a.model.display())));
    }
    let mut cfg = mgtd_server::ServerConfig::new(a.model);
    cfg.addr = addr;
    cfg.pool_manifest = a.pool;
    cfg.static_dir = a.static_dir;
    cfg.session_ttl = Duration::from_secs(a.ttl_secs.max(1));
    cfg.snapshot = a.snapshot;
    cfg.seed = seed;
    let rt = tokio::runtime::Runtime::new().map_err(|e| CliError::Runtime(e.to_string()))?;
    rt.block_on(mgtd_server::serve(cfg)).map_err(|e| match e {
        mgtd_server::ServeError::Data(m) => CliError::Data(m),
        mgtd_server::ServeError::Io(e) => CliError::Runtime(e.to_string()),
    })
}

fn end_to_end(a: EndToEndArgs, seed: u64, out: &mut dyn Write) -> Result<(), CliError> {
    if !a.quickstart {
        return Err(CliError::Usage("end-to-end currently runs only in --quickstart mode".into()));
    }
    if a.per_domain < 4 {
        return Err(CliError::Usage("--per-domain must be at least 4".into()));
    }
    let outcome = quickstart::run(&QuickstartOptions { out: a.out.clone(), seed, per_domain: a.per_domain })?;
    emit(out, &format!("corpus: {} texts\n", outcome.corpus_size))?;
    emit(out, &outcome.train.render())?;
    emit(out, &render_table(&[("quickstart (test)", &outcome.test)]))?;
    emit(out, &format!("accuracy {:.2}\nartifacts -> {}\n", outcome.test.accuracy, a.out.display()))
}
