//! Ranking of every candidate class per query, plus MRR and Hits@k.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;

use rayon::prelude::*;

use crate::context::{ContextSampler, Query};
use crate::density::DensityIndex;
use crate::error::{Error, Result};
use crate::kg::{Dataset, EntityId, RelationId, Split, Triple};
use crate::model::EncoderModel;
use crate::sequence::{relation_sequence, tail_sequence, InputSequence, TokenVocab};
use crate::train::{Subtask, Task, TailCandidates, TrainConfig};

pub const HITS_AT: [usize; 4] = [1, 3, 5, 10];

/// `1 + |{c ≠ gold : score(c) > score(gold)}|` over `candidates` (all
/// classes when `None`). Ties go in favor of the gold class.
pub fn rank_from_scores(scores: &[f64], gold: usize, candidates: Option<&[usize]>) -> Result<usize> {
    if gold >= scores.len() {
        return Err(Error::GoldNotCandidate(gold));
    }
    let g = scores[gold];
    let better = match candidates {
        None => scores
            .iter()
            .enumerate()
            .filter(|&(c, &s)| c != gold && s > g)
            .count(),
        Some(cands) => {
            if !cands.contains(&gold) {
                return Err(Error::GoldNotCandidate(gold));
            }
            cands
                .iter()
                .filter(|&&c| c != gold && scores[c] > g)
                .count()
        }
    };
    Ok(1 + better)
}

/// Scores every class with one forward pass and ranks `gold`.
pub fn rank_query(
    model: &EncoderModel,
    seq: &InputSequence,
    gold: usize,
    candidates: Option<&[usize]>,
) -> Result<usize> {
    let trace = model.forward(seq)?;
    rank_from_scores(&trace.logits, gold, candidates)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    pub n: usize,
    pub mrr: f64,
    /// `(k, Hits@k)` for k in [`HITS_AT`]
    pub hits: Vec<(usize, f64)>,
    pub hits_count: Vec<(usize, usize)>,
}

impl Metrics {
    pub fn hits_at(&self, k: usize) -> Option<f64> {
        self.hits.iter().find(|(x, _)| *x == k).map(|&(_, v)| v)
    }
}

pub fn compute_metrics(ranks: &[usize]) -> Result<Metrics> {
    if ranks.is_empty() {
        return Err(Error::NoRanks);
    }
    if ranks.contains(&0) {
        return Err(Error::Dimension("ranks start at 1".into()));
    }
    let n = ranks.len();
    let reciprocal: f64 = ranks.iter().map(|&r| 1.0 / r as f64).sum();
    let hits_count: Vec<(usize, usize)> = HITS_AT
        .iter()
        .map(|&k| (k, ranks.iter().filter(|&&r| r <= k).count()))
        .collect();
    Ok(Metrics {
        n,
        mrr: reciprocal / n as f64,
        hits: hits_count
            .iter()
            .map(|&(k, c)| (k, c as f64 / n as f64))
            .collect(),
        hits_count,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankingReport {
    pub task: Task,
    pub subtask: Subtask,
    pub split: &'static str,
    pub mode: String,
    pub n: usize,
    pub k: usize,
    pub ranks: Vec<usize>,
    pub metrics: Metrics,
    /// queries whose head (or either endpoint, for relation queries) never
    /// appears in train
    pub unseen_queries: usize,
}

impl RankingReport {
    pub fn mrr(&self) -> f64 {
        self.metrics.mrr
    }

    pub fn to_kv(&self) -> Vec<(String, String)> {
        let mut kv = vec![
            ("task".to_owned(), self.task.to_string()),
            ("subtask".to_owned(), self.subtask.to_string()),
            ("split".to_owned(), self.split.to_owned()),
            ("mode".to_owned(), self.mode.clone()),
            ("n".to_owned(), self.n.to_string()),
            ("k".to_owned(), self.k.to_string()),
            ("N".to_owned(), self.metrics.n.to_string()),
            ("MRR".to_owned(), format!("{:.6}", self.metrics.mrr)),
        ];
        for &(k, v) in &self.metrics.hits {
            kv.push((format!("Hits@{k}"), format!("{v:.6}")));
        }
        kv.push(("unseen_queries".to_owned(), self.unseen_queries.to_string()));
        kv
    }
}

impl fmt::Display for RankingReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:<9} {:<12} {:<8} {:>6} {:>8} {:>8} {:>8} {:>8} {:>8}",
            "task", "subtask", "mode", "N", "MRR", "Hits@1", "Hits@3", "Hits@5", "Hits@10"
        )?;
        let h = |k| self.metrics.hits_at(k).unwrap_or(0.0);
        writeln!(
            f,
            "{:<9} {:<12} {:<8} {:>6} {:>8.4} {:>8.4} {:>8.4} {:>8.4} {:>8.4}",
            self.task.to_string(),
            self.subtask.to_string(),
            self.mode,
            self.metrics.n,
            self.metrics.mrr,
            h(1),
            h(3),
            h(5),
            h(10)
        )
    }
}

/// Known-true answers per query over every split, for filtered ranking.
#[derive(Debug, Default)]
pub struct KnownAnswers {
    tails: HashMap<(EntityId, RelationId), HashSet<EntityId>>,
    relations: HashMap<(EntityId, EntityId), HashSet<RelationId>>,
}

impl KnownAnswers {
    pub fn new(ds: &Dataset) -> Self {
        let mut known = Self::default();
        let s = &ds.splits;
        for t in s.train.iter().chain(&s.valid).chain(&s.test) {
            known.tails.entry((t.head, t.relation)).or_default().insert(t.tail);
            known
                .relations
                .entry((t.head, t.tail))
                .or_default()
                .insert(t.relation);
        }
        known
    }
}

/// Everything needed to turn triples into ranked queries.
pub struct Evaluator<'a> {
    ds: &'a Dataset,
    sampler: &'a ContextSampler,
    density: &'a DensityIndex,
    config: &'a TrainConfig,
    vocab: TokenVocab,
    known: Option<KnownAnswers>,
    seen_tails: Option<Vec<usize>>,
}

impl<'a> Evaluator<'a> {
    pub fn new(
        ds: &'a Dataset,
        sampler: &'a ContextSampler,
        density: &'a DensityIndex,
        config: &'a TrainConfig,
    ) -> Self {
        let known = config.filtered.then(|| KnownAnswers::new(ds));
        let seen_tails = (config.task == Task::Tail
            && config.tail_candidates == TailCandidates::SeenTails)
            .then(|| {
                let mut tails: Vec<usize> =
                    ds.splits.train.iter().map(|t| t.tail.index()).collect();
                tails.sort_unstable();
                tails.dedup();
                tails
            });
        Self {
            ds,
            sampler,
            density,
            config,
            vocab: TokenVocab::for_graph(&ds.graph),
            known,
            seen_tails,
        }
    }

    /// Input sequence and gold class for one triple under the configured task.
    pub fn sequence(&self, t: &Triple) -> Result<(InputSequence, usize)> {
        let exclude = self.config.exclude_query_edge.then_some(t);
        match self.config.task {
            Task::Relation => {
                let b = self.sampler.bundle(
                    Query::Relation {
                        head: t.head,
                        tail: t.tail,
                    },
                    exclude,
                );
                let s = relation_sequence(t.head, t.tail, &b, &self.vocab, &self.config.sequence, t.relation)?;
                Ok((s, t.relation.index()))
            }
            Task::Tail => {
                let b = self.sampler.bundle(
                    Query::Tail {
                        head: t.head,
                        relation: t.relation,
                    },
                    exclude,
                );
                let s = tail_sequence(t.head, t.relation, &b, &self.vocab, &self.config.sequence, t.tail)?;
                Ok((s, t.tail.index()))
            }
        }
    }

    fn candidates(&self, t: &Triple, num_classes: usize) -> Option<Vec<usize>> {
        let mut base: Option<Vec<usize>> = self.seen_tails.clone();
        if let Some(known) = &self.known {
            let drop: HashSet<usize> = match self.config.task {
                Task::Tail => known
                    .tails
                    .get(&(t.head, t.relation))
                    .map(|s| s.iter().map(|e| e.index()).collect())
                    .unwrap_or_default(),
                Task::Relation => known
                    .relations
                    .get(&(t.head, t.tail))
                    .map(|s| s.iter().map(|r| r.index()).collect())
                    .unwrap_or_default(),
            };
            let gold = match self.config.task {
                Task::Tail => t.tail.index(),
                Task::Relation => t.relation.index(),
            };
            let all = base.take().unwrap_or_else(|| (0..num_classes).collect());
            base = Some(
                all.into_iter()
                    .filter(|c| *c == gold || !drop.contains(c))
                    .collect(),
            );
        }
        if let Some(b) = &mut base {
            let gold = match self.config.task {
                Task::Tail => t.tail.index(),
                Task::Relation => t.relation.index(),
            };
            // seen-tail candidate sets may lack an unseen gold; rank it anyway
            if !b.contains(&gold) {
                b.push(gold);
            }
        }
        base
    }

    fn is_unseen(&self, t: &Triple) -> bool {
        let unseen = |e: EntityId| self.density.get(e) == 0;
        match self.config.task {
            Task::Tail => unseen(t.head),
            Task::Relation => unseen(t.head) || unseen(t.tail),
        }
    }

    /// Ranks of the given triples, in input order.
    pub fn ranks(&self, model: &EncoderModel, triples: &[Triple]) -> Result<Vec<usize>> {
        let num_classes = model.config().num_classes;
        triples
            .par_iter()
            .map(|t| {
                let (seq, gold) = self.sequence(t)?;
                let cands = self.candidates(t, num_classes);
                rank_query(model, &seq, gold, cands.as_deref())
            })
            .collect()
    }

    pub fn evaluate(
        &self,
        model: &EncoderModel,
        split: Split,
        subtask: Subtask,
    ) -> Result<RankingReport> {
        let triples: Vec<Triple> = match subtask {
            Subtask::General => self.ds.splits.get(split).to_vec(),
            Subtask::DrugTarget => self.ds.splits.drug_target(split),
        };
        if triples.is_empty() {
            return Err(Error::EmptySubtask(format!(
                "no {subtask} triples in the {} split",
                split_name(split)
            )));
        }
        let ranks = self.ranks(model, &triples)?;
        let metrics = compute_metrics(&ranks)?;
        let ctx = self.sampler.config();
        Ok(RankingReport {
            task: self.config.task,
            subtask,
            split: split_name(split),
            mode: ctx.mode.to_string(),
            n: ctx.n,
            k: ctx.k,
            ranks,
            metrics,
            unseen_queries: triples.iter().filter(|t| self.is_unseen(t)).count(),
        })
    }
}

pub fn split_name(split: Split) -> &'static str {
    match split {
        Split::Train => "train",
        Split::Valid => "valid",
        Split::Test => "test",
    }
}

/// Reports for the general and (when relations are marked) drug-target
/// subtasks of one split.
pub fn evaluate_split(
    model: &EncoderModel,
    ds: &Dataset,
    config: &TrainConfig,
    split: Split,
) -> Result<BTreeMap<String, RankingReport>> {
    let density = DensityIndex::build(&ds.graph, config.density_mode);
    let sampler = ContextSampler::new(&ds.graph, &density, config.context);
    let ev = Evaluator::new(ds, &sampler, &density, config);
    let mut out = BTreeMap::new();
    out.insert(
        Subtask::General.to_string(),
        ev.evaluate(model, split, Subtask::General)?,
    );
    if !ds.splits.drug_target_relation_ids.is_empty() {
        out.insert(
            Subtask::DrugTarget.to_string(),
            ev.evaluate(model, split, Subtask::DrugTarget)?,
        );
    }
    Ok(out)
}
