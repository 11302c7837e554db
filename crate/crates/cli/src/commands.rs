use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use mucos::bench::{
    analytical_from_stats, analytical_speedup, bench_queries, empirical_bench, parse_decimal,
    ComplexityReport, REFERENCE_AVG_APPEARANCE, REFERENCE_AVG_DENSITY,
};
use mucos::context::{format_entities, format_tokens, ContextSampler};
use mucos::density::DensityIndex;
use mucos::eval::{evaluate_split, Evaluator, RankingReport};
use mucos::kg::{generate_synthetic, ingest_split_files, Dataset, Split, SyntheticSpec};
use mucos::model::EncoderModel;
use mucos::train::{train, TrainConfig, TrainOptions, CONFIG_KEYS};
use mucos::Error;

use crate::run::{Run, RunManifest};
use crate::{
    BenchArgs, Cli, Command, EvalArgs, GlobalArgs, IngestArgs, SynthArgs, EXIT_CHECKPOINT,
    EXIT_CONFIG, EXIT_DATA, EXIT_MISSING_FILE, EXIT_OTHER,
};

/// Exit status for the first recognizable cause in the chain.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<Error>() {
            return match e {
                Error::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => {
                    EXIT_MISSING_FILE
                }
                Error::Io { .. } | Error::StaleTrace | Error::NonFinite(_) => EXIT_OTHER,
                Error::Config(_) | Error::SequenceTooShort(_) | Error::Bench(_) => EXIT_CONFIG,
                Error::Checkpoint(_) | Error::Dimension(_) => EXIT_CHECKPOINT,
                Error::Parse { .. }
                | Error::EmptyFile(_)
                | Error::EmptyGraph
                | Error::Infeasible(_)
                | Error::UnknownLabel { .. }
                | Error::EmptySubtask(_)
                | Error::GoldNotCandidate(_)
                | Error::NoRanks => EXIT_DATA,
            };
        }
        if let Some(io) = cause.downcast_ref::<std::io::Error>() {
            if io.kind() == std::io::ErrorKind::NotFound {
                return EXIT_MISSING_FILE;
            }
        }
    }
    EXIT_OTHER
}

pub fn dispatch(cli: Cli) -> Result<()> {
    let g = &cli.global;
    match cli.command {
        Command::Ingest(ref a) => ingest(g, a),
        Command::Stats { ref dataset } => stats(g, dataset),
        Command::Sample {
            ref dataset,
            ref query,
        } => sample(g, dataset, query),
        Command::Train { ref dataset } => train_cmd(g, dataset),
        Command::Eval(ref a) => eval(g, a),
        Command::Bench(ref a) => bench(g, a),
        Command::Synth(ref a) => synth(g, a),
    }
}

/// Config file, then `--set` overrides, then the dedicated flags.
fn resolve_config(g: &GlobalArgs, base: TrainConfig) -> Result<TrainConfig> {
    let mut c = base;
    if let Some(path) = &g.config {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io { path: path.clone(), source: e })?;
        c.apply_kv(&text)
            .with_context(|| format!("in {}", path.display()))?;
    }
    for o in &g.overrides {
        let (k, v) = o
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got `{o}`")))?;
        c.set(k, v)?;
    }
    let flags = [
        ("seed", g.seed.map(|x| x.to_string())),
        ("mode", g.mode.clone()),
        ("n", g.n.map(|x| x.to_string())),
        ("k", g.k.map(|x| x.to_string())),
        ("task", g.task.clone()),
        ("subtask", g.subtask.clone()),
    ];
    for (k, v) in flags {
        if let Some(v) = v {
            c.set(k, &v)?;
        }
    }
    c.validate()?;
    Ok(c)
}

fn load_dataset(path: &Path) -> Result<Dataset> {
    if !path.exists() {
        return Err(Error::Io {
            path: path.to_owned(),
            source: std::io::Error::new(std::io::ErrorKind::NotFound, "no such dataset directory"),
        }
        .into());
    }
    Ok(Dataset::read_dir(path)?)
}

fn parse_delimiter(s: &str) -> Result<char> {
    Ok(match s {
        "tab" | "\\t" | "\t" => '\t',
        "comma" | "," => ',',
        "space" | " " => ' ',
        other => {
            let mut chars = other.chars();
            match (chars.next(), chars.next()) {
                (Some(c), None) => c,
                _ => return Err(Error::Config(format!("bad delimiter `{other}`")).into()),
            }
        }
    })
}

fn store_dataset(run: &mut Run, ds: &Dataset, dest: Option<&PathBuf>) -> Result<()> {
    let dest = dest.cloned().unwrap_or_else(|| run.dir.join("dataset"));
    ds.write_dir(&dest)?;
    let stats = ds.stats()?;
    print!("{stats}");
    println!("fingerprint={}", ds.fingerprint());
    println!("dataset={}", dest.display());
    let mut body = stats.to_kv();
    body.push(("dataset".to_owned(), dest.display().to_string()));
    run.write_report("dataset_report.txt", &body)?;
    Ok(())
}

fn ingest(g: &GlobalArgs, a: &IngestArgs) -> Result<()> {
    let delim = parse_delimiter(&a.delimiter)?;
    let mut ds = ingest_split_files(&a.train, a.valid.as_deref(), a.test.as_deref(), delim)?;
    ds.set_drug_target_labels(&a.drug_target)?;
    let manifest = RunManifest::new("ingest", g.seed.unwrap_or(0)).with_dataset(&ds);
    let mut run = Run::start(&g.out, manifest)?;
    store_dataset(&mut run, &ds, a.dest.as_ref())
}

fn synth(g: &GlobalArgs, a: &SynthArgs) -> Result<()> {
    let seed = g.seed.unwrap_or(0);
    let mut ds = generate_synthetic(SyntheticSpec {
        num_entities: a.entities,
        num_relations: a.relations,
        num_triples: a.triples,
        seed,
    })?;
    ds.set_drug_target_labels(&a.drug_target)?;
    let config = vec![
        ("entities".to_owned(), a.entities.to_string()),
        ("relations".to_owned(), a.relations.to_string()),
        ("triples".to_owned(), a.triples.to_string()),
        ("drug_target".to_owned(), a.drug_target.join(",")),
    ];
    let manifest = RunManifest::new("synth", seed)
        .with_config(config)
        .with_dataset(&ds);
    let mut run = Run::start(&g.out, manifest)?;
    store_dataset(&mut run, &ds, a.dest.as_ref())
}

fn stats(g: &GlobalArgs, dataset: &Path) -> Result<()> {
    let ds = load_dataset(dataset)?;
    let s = ds.stats()?;
    print!("{s}");
    let manifest = RunManifest::new("stats", g.seed.unwrap_or(0)).with_dataset(&ds);
    Run::start(&g.out, manifest)?.write_report("stats.txt", &s.to_kv())?;
    Ok(())
}

fn labeled(prefix: &str, body: String) -> String {
    if body.is_empty() {
        prefix.to_owned()
    } else {
        format!("{prefix} {body}")
    }
}

fn sample(g: &GlobalArgs, dataset: &Path, query: &[String]) -> Result<()> {
    let parts: Vec<&str> = query.iter().flat_map(|q| q.split_whitespace()).collect();
    let [h, r, t] = parts[..] else {
        bail!(Error::Config(format!(
            "query needs three parts like `A r1 ?`, got {}",
            parts.len()
        )));
    };
    let config = resolve_config(g, TrainConfig::default())?;
    let ds = load_dataset(dataset)?;
    let graph = &ds.graph;
    let d = DensityIndex::build(graph, config.density_mode);
    let sampler = ContextSampler::new(graph, &d, config.context);
    if h == "?" {
        bail!(Error::Config("head prediction `? r t` is not supported".into()));
    }
    let head = graph.entity(h)?;
    let mut lines = Vec::new();
    let mut body = Vec::new();
    let hc = format_tokens(&sampler.head_context(head, None), graph);
    lines.push(labeled("Hc:", hc.clone()));
    body.push(("Hc".to_owned(), hc));
    if t != "?" {
        let tc = format_tokens(&sampler.tail_context(graph.entity(t)?, None), graph);
        lines.push(labeled("Tc:", tc.clone()));
        body.push(("Tc".to_owned(), tc));
    }
    if r != "?" {
        let rc = format_entities(&sampler.relation_context(graph.relation(r)?, None), graph);
        lines.push(labeled("Rc:", rc.clone()));
        body.push(("Rc".to_owned(), rc));
    }
    if r == "?" && t == "?" {
        bail!(Error::Config("query needs a relation or a tail".into()));
    }
    println!("{}", lines.join(" | "));
    body.insert(0, ("query".to_owned(), format!("{h} {r} {t}")));
    let manifest = RunManifest::new("sample", config.seed)
        .with_config(config.to_kv())
        .with_dataset(&ds);
    Run::start(&g.out, manifest)?.write_report("sample.txt", &body)?;
    Ok(())
}

fn train_cmd(g: &GlobalArgs, dataset: &Path) -> Result<()> {
    let config = resolve_config(g, TrainConfig::default())?;
    let ds = load_dataset(dataset)?;
    let manifest = RunManifest::new("train", config.seed)
        .with_config(config.to_kv())
        .with_dataset(&ds);
    let mut run = Run::start(&g.out, manifest)?;
    let options = TrainOptions {
        checkpoint_dir: Some(run.dir.clone()),
        echo: run.manifest.echo(),
    };
    let (_, report) = train(&ds, &config, &options)?;
    let mut body = report.to_kv();
    for (k, v) in body.iter_mut() {
        if k == "checkpoint" {
            *v = "best.ckpt".to_owned();
        }
    }
    let path = run.write_report("train_report.txt", &body)?;
    let losses = &report.epoch_losses;
    println!(
        "epochs={} loss first={:.6} last={:.6}",
        losses.len(),
        losses.first().copied().unwrap_or(f64::NAN),
        losses.last().copied().unwrap_or(f64::NAN)
    );
    if let (Some(e), Some(m)) = (report.best_epoch, report.valid_mrr.iter().copied().reduce(f64::max)) {
        println!("best_epoch={e} valid_mrr={m:.6}");
    }
    if let Some(ckpt) = &report.checkpoint {
        println!("checkpoint={}", ckpt.display());
    }
    println!("report={}", path.display());
    Ok(())
}

fn parse_split(s: &str) -> Result<Split> {
    Ok(match s {
        "train" => Split::Train,
        "valid" => Split::Valid,
        "test" => Split::Test,
        other => bail!(Error::Config(format!("unknown split `{other}`"))),
    })
}

fn eval(g: &GlobalArgs, a: &EvalArgs) -> Result<()> {
    let split = parse_split(&a.split)?;
    let (model, echo) = EncoderModel::load(&a.checkpoint)?;
    let mut base = TrainConfig::default();
    for key in CONFIG_KEYS {
        if let Some(v) = echo.get(*key) {
            base.set(key, v)
                .map_err(|e| Error::Checkpoint(format!("bad echoed config: {e}")))?;
        }
    }
    let config = resolve_config(g, base)?;
    let ds = load_dataset(&a.dataset)?;
    let want = config.model_config(&ds);
    if *model.config() != want {
        bail!(Error::Checkpoint(format!(
            "{} holds {:?}, but this dataset and config need {:?}",
            a.checkpoint.display(),
            model.config(),
            want
        )));
    }
    if let Some(h) = echo.get("manifest.dataset.sha256") {
        if *h != ds.fingerprint() {
            eprintln!("warning: checkpoint was trained on a different dataset ({h})");
        }
    }
    let reports: Vec<RankingReport> = if g.subtask.is_some() {
        let d = DensityIndex::build(&ds.graph, config.density_mode);
        let sampler = ContextSampler::new(&ds.graph, &d, config.context);
        let ev = Evaluator::new(&ds, &sampler, &d, &config);
        vec![ev.evaluate(&model, split, config.subtask)?]
    } else {
        evaluate_split(&model, &ds, &config, split)?.into_values().collect()
    };
    let mut body = vec![("checkpoint".to_owned(), a.checkpoint.display().to_string())];
    for r in &reports {
        print!("{r}");
        body.extend(
            r.to_kv()
                .into_iter()
                .map(|(k, v)| (format!("{}.{k}", r.subtask), v)),
        );
    }
    let manifest = RunManifest::new("eval", config.seed)
        .with_config(config.to_kv())
        .with_dataset(&ds);
    let path = Run::start(&g.out, manifest)?.write_report("eval_report.txt", &body)?;
    println!("report={}", path.display());
    Ok(())
}

fn bench(g: &GlobalArgs, a: &BenchArgs) -> Result<()> {
    let config = resolve_config(g, TrainConfig::default())?;
    let (n, k) = (config.context.n, config.context.k);
    let mut manifest = RunManifest::new("bench", config.seed).with_config(vec![
        ("n".to_owned(), n.to_string()),
        ("k".to_owned(), k.to_string()),
        ("queries".to_owned(), a.queries.to_string()),
        ("repetitions".to_owned(), a.repetitions.to_string()),
    ]);
    let report = match (&a.dataset, &a.avg_density, &a.avg_appearance) {
        (Some(path), _, _) => {
            let ds = load_dataset(path)?;
            manifest = manifest.with_dataset(&ds);
            let mut r = ComplexityReport::with_reference(analytical_from_stats(&ds.stats()?, n, k)?)?;
            if !a.analytical_only {
                let d = DensityIndex::build(&ds.graph, config.density_mode);
                let queries = bench_queries(&ds.graph, a.queries, config.seed);
                r.empirical = Some(empirical_bench(&ds.graph, &d, &queries, n, k, a.repetitions)?);
            }
            r
        }
        (None, Some(density), Some(appearance)) => ComplexityReport::with_reference(
            analytical_speedup(parse_decimal(density)?, parse_decimal(appearance)?, n, k)?,
        )?,
        _ => ComplexityReport {
            analytical: analytical_speedup(
                parse_decimal(REFERENCE_AVG_DENSITY)?,
                parse_decimal(REFERENCE_AVG_APPEARANCE)?,
                n,
                k,
            )?,
            reference: None,
            reference_check: None,
            empirical: None,
        },
    };
    print!("{report}");
    println!("speedup={:.2}", report.analytical.speedup_f64());
    let path = Run::start(&g.out, manifest)?.write_report("bench_report.txt", &report.to_kv())?;
    println!("report={}", path.display());
    Ok(())
}
