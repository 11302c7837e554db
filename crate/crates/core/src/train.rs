//! Mini-batch training with AdamW. Each train triple contributes exactly one
//! positive example per epoch, classified against every class through the
//! softmax head; no corrupted triples are generated.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::context::{ContextConfig, ContextSampler};
use crate::density::{DensityIndex, DensityMode};
use crate::error::{Error, Result};
use crate::eval::Evaluator;
use crate::kg::{Dataset, Split, Triple};
use crate::model::{loss, EncoderKind, EncoderModel, ModelConfig, Params};
use crate::optim::{adamw_step, AdamWConfig, AdamWState};
use crate::sequence::{InputSequence, SequenceConfig, TokenVocab};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Task {
    /// `(h, ?, t)`
    #[default]
    Relation,
    /// `(h, r, ?)`
    Tail,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Subtask {
    #[default]
    General,
    DrugTarget,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TailCandidates {
    #[default]
    All,
    /// Only entities that occur as a tail in train.
    SeenTails,
}

macro_rules! string_enum {
    ($ty:ty { $($variant:ident => $name:literal $(| $alias:literal)*),+ $(,)? }) => {
        impl FromStr for $ty {
            type Err = String;
            fn from_str(s: &str) -> std::result::Result<Self, String> {
                match s {
                    $($name $(| $alias)* => Ok(<$ty>::$variant),)+
                    other => Err(format!("unknown {} `{other}`", stringify!($ty))),
                }
            }
        }
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(match self { $(<$ty>::$variant => $name,)+ })
            }
        }
    };
}

string_enum!(Task { Relation => "relation", Tail => "tail" });
string_enum!(Subtask { General => "general", DrugTarget => "drug-target" | "drug_target" });
string_enum!(TailCandidates { All => "all", SeenTails => "seen_tails" | "seen-tails" });

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub task: Task,
    pub subtask: Subtask,
    pub context: ContextConfig,
    pub density_mode: DensityMode,
    pub sequence: SequenceConfig,
    pub encoder: EncoderKind,
    pub dim: usize,
    pub ff_dim: usize,
    pub init_scale: f64,
    pub adamw: AdamWConfig,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Drop a training query's own edge from its contexts.
    pub exclude_query_edge: bool,
    /// Filtered ranking: other known answers are removed from the candidates.
    pub filtered: bool,
    pub tail_candidates: TailCandidates,
    /// Keep the parameters of the epoch with the best validation MRR.
    pub select_best: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            task: Task::Relation,
            subtask: Subtask::General,
            context: ContextConfig::default(),
            density_mode: DensityMode::Both,
            sequence: SequenceConfig::default(),
            encoder: EncoderKind::MeanPool,
            dim: 64,
            ff_dim: 128,
            init_scale: 0.05,
            adamw: AdamWConfig::default(),
            batch_size: 16,
            epochs: 50,
            seed: 0,
            exclude_query_edge: true,
            filtered: false,
            tail_candidates: TailCandidates::All,
            select_best: true,
        }
    }
}

pub const CONFIG_KEYS: &[&str] = &[
    "task",
    "subtask",
    "mode",
    "n",
    "k",
    "undirected_context",
    "density_mode",
    "max_len",
    "use_head_context",
    "use_relation_context",
    "encoder",
    "dim",
    "ff_dim",
    "init_scale",
    "lr",
    "beta1",
    "beta2",
    "eps",
    "weight_decay",
    "batch_size",
    "epochs",
    "seed",
    "exclude_query_edge",
    "filtered",
    "tail_candidates",
    "select_best",
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: fmt::Display,
{
    value
        .parse()
        .map_err(|e| Error::Config(format!("{key}={value}: {e}")))
}

impl TrainConfig {
    /// Sets one key. Unknown keys are rejected.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key.trim() {
            "task" => self.task = parse(key, v)?,
            "subtask" => self.subtask = parse(key, v)?,
            "mode" => self.context.mode = parse(key, v)?,
            "n" => self.context.n = parse(key, v)?,
            "k" => self.context.k = parse(key, v)?,
            "undirected_context" => self.context.undirected = parse(key, v)?,
            "density_mode" => self.density_mode = parse(key, v)?,
            "max_len" => self.sequence.max_len = parse(key, v)?,
            "use_head_context" => self.sequence.use_head_context = parse(key, v)?,
            "use_relation_context" => self.sequence.use_relation_context = parse(key, v)?,
            "encoder" => self.encoder = parse(key, v)?,
            "dim" => self.dim = parse(key, v)?,
            "ff_dim" => self.ff_dim = parse(key, v)?,
            "init_scale" => self.init_scale = parse(key, v)?,
            "lr" => self.adamw.lr = parse(key, v)?,
            "beta1" => self.adamw.beta1 = parse(key, v)?,
            "beta2" => self.adamw.beta2 = parse(key, v)?,
            "eps" => self.adamw.eps = parse(key, v)?,
            "weight_decay" => self.adamw.weight_decay = parse(key, v)?,
            "batch_size" => self.batch_size = parse(key, v)?,
            "epochs" => self.epochs = parse(key, v)?,
            "seed" => self.seed = parse(key, v)?,
            "exclude_query_edge" => self.exclude_query_edge = parse(key, v)?,
            "filtered" => self.filtered = parse(key, v)?,
            "tail_candidates" => self.tail_candidates = parse(key, v)?,
            "select_best" => self.select_best = parse(key, v)?,
            other => return Err(Error::Config(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    /// Applies a flat `key=value` document on top of `self`. Blank lines and
    /// `#` comments are skipped.
    pub fn apply_kv(&mut self, text: &str) -> Result<()> {
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key=value", i + 1)))?;
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn from_kv(text: &str) -> Result<Self> {
        let mut c = Self::default();
        c.apply_kv(text)?;
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.to_owned()));
        if !(self.adamw.lr > 0.0) {
            return fail("lr must be > 0");
        }
        if self.batch_size == 0 {
            return fail("batch_size must be >= 1");
        }
        if self.epochs == 0 {
            return fail("epochs must be >= 1");
        }
        if self.sequence.max_len < crate::sequence::MIN_MAX_LEN {
            return fail("max_len must be >= 7");
        }
        if self.dim == 0 || self.ff_dim == 0 {
            return fail("dim and ff_dim must be >= 1");
        }
        if !(self.adamw.beta1 >= 0.0 && self.adamw.beta1 < 1.0)
            || !(self.adamw.beta2 >= 0.0 && self.adamw.beta2 < 1.0)
        {
            return fail("betas must lie in [0, 1)");
        }
        Ok(())
    }

    pub fn to_kv(&self) -> Vec<(String, String)> {
        let c = &self.context;
        let s = &self.sequence;
        let a = &self.adamw;
        let pairs: Vec<(&str, String)> = vec![
            ("task", self.task.to_string()),
            ("subtask", self.subtask.to_string()),
            ("mode", c.mode.to_string()),
            ("n", c.n.to_string()),
            ("k", c.k.to_string()),
            ("undirected_context", c.undirected.to_string()),
            ("density_mode", self.density_mode.to_string()),
            ("max_len", s.max_len.to_string()),
            ("use_head_context", s.use_head_context.to_string()),
            ("use_relation_context", s.use_relation_context.to_string()),
            ("encoder", self.encoder.to_string()),
            ("dim", self.dim.to_string()),
            ("ff_dim", self.ff_dim.to_string()),
            ("init_scale", self.init_scale.to_string()),
            ("lr", a.lr.to_string()),
            ("beta1", a.beta1.to_string()),
            ("beta2", a.beta2.to_string()),
            ("eps", a.eps.to_string()),
            ("weight_decay", a.weight_decay.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("epochs", self.epochs.to_string()),
            ("seed", self.seed.to_string()),
            ("exclude_query_edge", self.exclude_query_edge.to_string()),
            ("filtered", self.filtered.to_string()),
            ("tail_candidates", self.tail_candidates.to_string()),
            ("select_best", self.select_best.to_string()),
        ];
        pairs.into_iter().map(|(k, v)| (k.to_owned(), v)).collect()
    }

    pub fn model_config(&self, ds: &Dataset) -> ModelConfig {
        let vocab = TokenVocab::for_graph(&ds.graph);
        let num_classes = match self.task {
            Task::Relation => ds.graph.num_relations(),
            Task::Tail => ds.graph.num_entities(),
        };
        ModelConfig {
            kind: self.encoder,
            vocab_size: vocab.size(),
            dim: self.dim,
            ff_dim: self.ff_dim,
            num_classes,
            max_positions: self.sequence.max_len,
        }
    }

    /// Train triples for this config's subtask.
    pub fn train_triples(&self, ds: &Dataset) -> Vec<Triple> {
        match self.subtask {
            Subtask::General => ds.splits.train.clone(),
            Subtask::DrugTarget => ds.splits.drug_target(Split::Train),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainReport {
    pub epoch_losses: Vec<f64>,
    pub epoch_seconds: Vec<f64>,
    pub context_seconds: f64,
    pub valid_mrr: Vec<f64>,
    pub best_epoch: Option<usize>,
    pub examples: usize,
    /// train triples that also occur in valid/test and were left out
    pub skipped_overlap: usize,
    pub clamped_losses: usize,
    pub checkpoint: Option<PathBuf>,
}

impl TrainReport {
    /// Key/value lines; wall-clock entries carry a `time.` prefix.
    pub fn to_kv(&self) -> Vec<(String, String)> {
        let mut kv = vec![
            ("examples".to_owned(), self.examples.to_string()),
            ("skipped_overlap".to_owned(), self.skipped_overlap.to_string()),
            ("clamped_losses".to_owned(), self.clamped_losses.to_string()),
            (
                "best_epoch".to_owned(),
                self.best_epoch.map_or("none".to_owned(), |e| e.to_string()),
            ),
        ];
        for (i, l) in self.epoch_losses.iter().enumerate() {
            kv.push((format!("epoch.{}.loss", i + 1), format!("{l:.9}")));
        }
        for (i, m) in self.valid_mrr.iter().enumerate() {
            kv.push((format!("epoch.{}.valid_mrr", i + 1), format!("{m:.6}")));
        }
        kv.push((
            "time.context_seconds".to_owned(),
            format!("{:.6}", self.context_seconds),
        ));
        for (i, s) in self.epoch_seconds.iter().enumerate() {
            kv.push((format!("time.epoch.{}.seconds", i + 1), format!("{s:.6}")));
        }
        if let Some(p) = &self.checkpoint {
            kv.push(("checkpoint".to_owned(), p.display().to_string()));
        }
        kv
    }
}

/// Where and how to persist checkpoints.
#[derive(Debug, Clone, Default)]
pub struct TrainOptions {
    /// Directory receiving `best.ckpt`; nothing is written when `None`.
    pub checkpoint_dir: Option<PathBuf>,
    /// Extra metadata echoed into the checkpoint.
    pub echo: BTreeMap<String, String>,
}

/// Trains a fresh model. Deterministic for a fixed `config.seed`.
pub fn train(
    ds: &Dataset,
    config: &TrainConfig,
    options: &TrainOptions,
) -> Result<(EncoderModel, TrainReport)> {
    config.validate()?;
    let density = DensityIndex::build(&ds.graph, config.density_mode);
    let mut report = TrainReport::default();

    let held: HashSet<Triple> = ds
        .splits
        .valid
        .iter()
        .chain(&ds.splits.test)
        .copied()
        .collect();
    let all = config.train_triples(ds);
    let triples: Vec<Triple> = all.iter().filter(|t| !held.contains(t)).copied().collect();
    report.skipped_overlap = all.len() - triples.len();
    if triples.is_empty() {
        return Err(Error::EmptySubtask(format!(
            "no {} train triples",
            config.subtask
        )));
    }
    report.examples = triples.len();

    let started = Instant::now();
    let sampler = ContextSampler::new(&ds.graph, &density, config.context);
    let evaluator = Evaluator::new(ds, &sampler, &density, config);
    let examples: Vec<(InputSequence, usize)> = triples
        .par_iter()
        .map(|t| evaluator.sequence(t))
        .collect::<Result<_>>()?;
    report.context_seconds = started.elapsed().as_secs_f64();

    let model_config = config.model_config(ds);
    let mut model = EncoderModel::new(model_config, config.seed, config.init_scale);
    let mut state = AdamWState::new(model.params());
    let mut grads: Params = model.params().zeros_like();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(0x5eed));
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut best: Option<(f64, Params)> = None;
    let validate = config.select_best && !ds.splits.valid.is_empty();

    for epoch in 0..config.epochs {
        let epoch_start = Instant::now();
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(config.batch_size) {
            grads.scale(0.0);
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                let (seq, gold) = &examples[i];
                let trace = model.forward(seq)?;
                let (l, clamped) = loss(&trace.probs, *gold);
                if !l.is_finite() {
                    return Err(Error::NonFinite(format!(
                        "loss {l} at epoch {} example {i}",
                        epoch + 1
                    )));
                }
                report.clamped_losses += clamped as usize;
                total += l;
                model.backward_into(&trace, *gold, &mut grads, scale)?;
            }
            adamw_step(model.params_mut(), &grads, &mut state, &config.adamw)?;
        }
        if !model.params().all_finite() {
            return Err(Error::NonFinite(format!(
                "parameters diverged at epoch {}",
                epoch + 1
            )));
        }
        report.epoch_losses.push(total / examples.len() as f64);
        if validate {
            let valid: Vec<Triple> = match config.subtask {
                Subtask::General => ds.splits.valid.clone(),
                Subtask::DrugTarget => ds.splits.drug_target(Split::Valid),
            };
            if !valid.is_empty() {
                let ranks = evaluator.ranks(&model, &valid)?;
                let mrr = crate::eval::compute_metrics(&ranks)?.mrr;
                report.valid_mrr.push(mrr);
                if best.as_ref().is_none_or(|(b, _)| mrr > *b) {
                    best = Some((mrr, model.params().clone()));
                    report.best_epoch = Some(epoch + 1);
                }
            }
        }
        report.epoch_seconds.push(epoch_start.elapsed().as_secs_f64());
    }

    if let Some((_, params)) = best {
        model = EncoderModel::from_params(model_config, params)?;
    }
    if let Some(dir) = &options.checkpoint_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join("best.ckpt");
        let mut echo: BTreeMap<String, String> = config.to_kv().into_iter().collect();
        echo.extend(options.echo.clone());
        model.save(&path, &echo)?;
        report.checkpoint = Some(path);
    }
    Ok((model, report))
}
