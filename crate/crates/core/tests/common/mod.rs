#![allow(dead_code)]

use std::collections::HashSet;

use mucos::context::{
    sample_bundle, sample_head_context, sample_relation_context, sample_tail_context,
    ContextConfig, ContextMode, ContextSampler, ContextToken, Query,
};
use mucos::density::{DensityIndex, DensityMode};
use mucos::eval::{compute_metrics, rank_query, Evaluator};
use mucos::kg::{Dataset, EntityId, KnowledgeGraph, LabeledTriple, RelationId, Triple};
use mucos::model::{loss, EncoderKind, EncoderModel, ModelConfig};
use mucos::sequence::{InputSequence, PAD};
use mucos::train::{Task, TrainConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const G0: [[&str; 3]; 5] = [
    ["A", "r1", "B"],
    ["A", "r1", "C"],
    ["B", "r2", "C"],
    ["C", "r2", "A"],
    ["D", "r1", "A"],
];

pub fn labeled(rows: &[[&str; 3]]) -> Vec<LabeledTriple> {
    rows.iter()
        .map(|r| [r[0].to_owned(), r[1].to_owned(), r[2].to_owned()])
        .collect()
}

pub fn g0() -> Dataset {
    Dataset::from_labeled(&labeled(&G0), &[], &[]).unwrap()
}

/// Random multigraph (self-loops and repeated triples allowed) with small
/// held-out splits over the same vocabulary.
pub fn random_dataset(seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ne = rng.gen_range(2..=30);
    let nr = rng.gen_range(1..=5);
    let nt = rng.gen_range(1..=480);
    let row = |rng: &mut ChaCha8Rng| -> LabeledTriple {
        [
            format!("e{}", rng.gen_range(0..ne)),
            format!("r{}", rng.gen_range(0..nr)),
            format!("e{}", rng.gen_range(0..ne)),
        ]
    };
    let train: Vec<_> = (0..nt).map(|_| row(&mut rng)).collect();
    let valid: Vec<_> = (0..10).map(|_| row(&mut rng)).collect();
    let test: Vec<_> = (0..10).map(|_| row(&mut rng)).collect();
    Dataset::from_labeled(&train, &valid, &test).unwrap()
}

pub fn density_oracle(g: &KnowledgeGraph, mode: DensityMode) -> Vec<u64> {
    (0..g.num_entities())
        .map(|e| {
            let e = EntityId(e as u32);
            g.triples()
                .iter()
                .map(|t| {
                    let head = (mode == DensityMode::Both && t.head == e) as u64;
                    head + (t.tail == e) as u64
                })
                .sum()
        })
        .collect()
}

fn uniq<T: PartialEq + Copy>(xs: impl IntoIterator<Item = T>) -> Vec<T> {
    let mut out = Vec::new();
    for x in xs {
        if !out.contains(&x) {
            out.push(x);
        }
    }
    out
}

/// Edges at `anchor` as `(relation, neighbor)`: outgoing for heads,
/// incoming for tails, in triple order.
fn scan(triples: &[Triple], anchor: EntityId, outgoing: bool) -> Vec<(RelationId, EntityId)> {
    triples
        .iter()
        .filter_map(|t| match outgoing {
            true if t.head == anchor => Some((t.relation, t.tail)),
            false if t.tail == anchor => Some((t.relation, t.head)),
            _ => None,
        })
        .collect()
}

/// FULL: every relation, then every neighbor, in first-appearance order.
/// Otherwise enumerate, sort by density (ties by id), truncate to `n`.
pub fn entity_context_oracle(
    triples: &[Triple],
    rho: &[u64],
    anchor: EntityId,
    outgoing: bool,
    n: Option<usize>,
) -> Vec<ContextToken> {
    let edges = scan(triples, anchor, outgoing);
    let (relations, entities) = match n {
        None => (
            uniq(edges.iter().map(|e| e.0)),
            uniq(edges.iter().map(|e| e.1)),
        ),
        Some(n) => {
            let mut ents = uniq(edges.iter().map(|e| e.1));
            ents.sort_by_key(|e| (std::cmp::Reverse(rho[e.index()]), e.0));
            ents.truncate(n);
            let rels = uniq(
                ents.iter()
                    .flat_map(|&x| edges.iter().filter(move |e| e.1 == x).map(|e| e.0)),
            );
            (rels, ents)
        }
    };
    relations
        .into_iter()
        .map(ContextToken::Relation)
        .chain(entities.into_iter().map(ContextToken::Entity))
        .collect()
}

pub fn relation_context_oracle(
    triples: &[Triple],
    rho: &[u64],
    r: RelationId,
    k: Option<usize>,
) -> Vec<EntityId> {
    // `k = None` is FULL
    let mut pairs = uniq(
        triples
            .iter()
            .filter(|t| t.relation == r)
            .map(|t| (t.head, t.tail)),
    );
    if let Some(k) = k {
        pairs.sort_by_key(|&(h, t)| {
            (
                std::cmp::Reverse(rho[h.index()] + rho[t.index()]),
                h.0,
                t.0,
            )
        });
        pairs.truncate(k);
    }
    pairs.into_iter().flat_map(|(h, t)| [h, t]).collect()
}

/// `usize::MAX` stands for an unbounded threshold.
pub const THRESHOLDS: [usize; 4] = [1, 2, 5, usize::MAX];

#[derive(Debug, Default)]
pub struct OracleOutcome {
    pub checks: usize,
    pub mismatches: Vec<String>,
}

impl OracleOutcome {
    fn check<T: PartialEq + std::fmt::Debug>(&mut self, what: impl FnOnce() -> String, got: T, want: T) {
        self.checks += 1;
        if got != want {
            self.mismatches
                .push(format!("{}: got {got:?}, want {want:?}", what()));
        }
    }
}

/// Density, head, tail and relation contexts against the oracles on one graph,
/// for every entity/relation and every threshold, through both the free
/// functions and the precomputed sampler.
pub fn sampling_oracle(seed: u64, out: &mut OracleOutcome) {
    let ds = random_dataset(seed);
    let g = &ds.graph;
    for mode in [DensityMode::Both, DensityMode::TailOnly] {
        let d = DensityIndex::build(g, mode);
        out.check(|| format!("seed {seed} density {mode}"), d.counts().to_vec(), density_oracle(g, mode));
    }
    let d = DensityIndex::build(g, DensityMode::Both);
    let rho = density_oracle(g, DensityMode::Both);
    let triples = g.triples();
    for &n in &THRESHOLDS {
        for &k in &THRESHOLDS {
            let cfg = ContextConfig {
                mode: ContextMode::Sampled,
                n,
                k,
                undirected: false,
            };
            let sampler = ContextSampler::new(g, &d, cfg);
            for e in 0..g.num_entities() {
                let e = EntityId(e as u32);
                let want_h = entity_context_oracle(triples, &rho, e, true, Some(n));
                let want_t = entity_context_oracle(triples, &rho, e, false, Some(n));
                let m = ContextMode::Sampled;
                out.check(|| format!("seed {seed} head {e:?} n={n}"), sample_head_context(g, &d, e, n, m), want_h.clone());
                out.check(|| format!("seed {seed} tail {e:?} n={n}"), sample_tail_context(g, &d, e, n, m), want_t.clone());
                out.check(|| format!("seed {seed} sampler head {e:?} n={n}"), sampler.head_context(e, None), want_h);
                out.check(|| format!("seed {seed} sampler tail {e:?} n={n}"), sampler.tail_context(e, None), want_t);
            }
            for r in 0..g.num_relations() {
                let r = RelationId(r as u32);
                let want = relation_context_oracle(triples, &rho, r, Some(k));
                out.check(|| format!("seed {seed} relation {r:?} k={k}"), sample_relation_context(g, &d, r, k, ContextMode::Sampled), want.clone());
                out.check(|| format!("seed {seed} sampler relation {r:?} k={k}"), sampler.relation_context(r, None), want);
            }
        }
    }
    for e in 0..g.num_entities() {
        let e = EntityId(e as u32);
        out.check(|| format!("seed {seed} full head {e:?}"), sample_head_context(g, &d, e, 1, ContextMode::Full), entity_context_oracle(triples, &rho, e, true, None));
        out.check(|| format!("seed {seed} full tail {e:?}"), sample_tail_context(g, &d, e, 1, ContextMode::Full), entity_context_oracle(triples, &rho, e, false, None));
    }
    for r in 0..g.num_relations() {
        let r = RelationId(r as u32);
        out.check(|| format!("seed {seed} full relation {r:?}"), sample_relation_context(g, &d, r, 1, ContextMode::Full), relation_context_oracle(triples, &rho, r, None));
    }
}

pub fn entities_of(tokens: &[ContextToken]) -> Vec<EntityId> {
    tokens
        .iter()
        .filter_map(|t| match t {
            ContextToken::Entity(e) => Some(*e),
            _ => None,
        })
        .collect()
}

pub fn pairs_of(flat: &[EntityId]) -> Vec<(EntityId, EntityId)> {
    flat.chunks(2).map(|c| (c[0], c[1])).collect()
}

/// Whether a tail-query bundle for `t` still shows `t`'s own edge: its pair
/// in the relation context, or `t.tail` / `t.relation` in the head context
/// with no other edge of `t.head` to justify them. Contexts are expected to
/// be built from train without `t` (held-out) or with `t` excluded.
pub fn leaks(g: &KnowledgeGraph, t: &Triple, relation_ctx: &[EntityId], head_ctx: &[ContextToken]) -> bool {
    if pairs_of(relation_ctx).contains(&(t.head, t.tail)) {
        return true;
    }
    let out = g.outgoing(t.head);
    let tail_only_via_query = out.iter().filter(|&&(_, x)| x == t.tail).all(|&(r, _)| r == t.relation);
    let rel_only_via_query = out.iter().filter(|&&(r, _)| r == t.relation).all(|&(_, x)| x == t.tail);
    (entities_of(head_ctx).contains(&t.tail) && tail_only_via_query)
        || (head_ctx.contains(&ContextToken::Relation(t.relation)) && rel_only_via_query)
}

/// Leakage over every held-out triple (plain contexts) and every train
/// triple (with its own edge excluded).
pub fn leakage_violations(seed: u64) -> usize {
    let ds = random_dataset(seed);
    let g = &ds.graph;
    let d = DensityIndex::build(g, DensityMode::Both);
    let mut bad = 0;
    for mode in [ContextMode::Full, ContextMode::Sampled] {
        let cfg = ContextConfig {
            mode,
            n: 2,
            k: 3,
            undirected: false,
        };
        let sampler = ContextSampler::new(g, &d, cfg);
        let tail_query = |t: &Triple| Query::Tail {
            head: t.head,
            relation: t.relation,
        };
        let held = ds
            .splits
            .valid
            .iter()
            .chain(&ds.splits.test)
            .filter(|t| !g.triples().contains(t));
        for t in held {
            let b = sampler.bundle(tail_query(t), None);
            bad += leaks(g, t, &b.relation_context, &b.head_context) as usize;
        }
        for t in g.triples() {
            let b = sampler.bundle(tail_query(t), Some(t));
            bad += leaks(g, t, &b.relation_context, &b.head_context) as usize;
            bad += (sample_bundle(g, &d, &cfg, tail_query(t), Some(t)) != b) as usize;
        }
    }
    bad
}

/// A random G0 query and its sequence under `task`.
pub fn g0_example(ds: &Dataset, task: Task, rng: &mut ChaCha8Rng) -> (InputSequence, usize) {
    let config = TrainConfig {
        task,
        ..TrainConfig::default()
    };
    let d = DensityIndex::build(&ds.graph, config.density_mode);
    let sampler = ContextSampler::new(&ds.graph, &d, config.context);
    let ev = Evaluator::new(ds, &sampler, &d, &config);
    let t = ds.splits.train[rng.gen_range(0..ds.splits.train.len())];
    ev.sequence(&t).unwrap()
}

pub fn small_model(ds: &Dataset, kind: EncoderKind, task: Task, seed: u64) -> EncoderModel {
    let config = TrainConfig {
        task,
        encoder: kind,
        dim: 6,
        ff_dim: 8,
        ..TrainConfig::default()
    };
    EncoderModel::new(config.model_config(ds), seed, 0.5)
}

pub const FD_EPS: f64 = 1e-4;
pub const FD_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, Default)]
pub struct GradOutcome {
    pub scalars: usize,
    pub max_rel_err: f64,
}

/// Central finite differences on every scalar of a small model.
pub fn gradient_check(kind: EncoderKind, task: Task, seed: u64) -> GradOutcome {
    let ds = g0();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xfd);
    let (seq, gold) = g0_example(&ds, task, &mut rng);
    let mut model = small_model(&ds, kind, task, seed);
    let trace = model.forward(&seq).unwrap();
    let grads = model.backward(&trace, gold).unwrap();
    let objective = |m: &EncoderModel| loss(&m.forward(&seq).unwrap().probs, gold).0;

    let mut out = GradOutcome::default();
    let names: Vec<&str> = model.params().tensors().iter().map(|(n, _)| *n).collect();
    for (ti, name) in names.iter().enumerate() {
        let analytic = grads.tensors()[ti].1.data.clone();
        for (i, &a) in analytic.iter().enumerate() {
            let orig = model.params().tensors()[ti].1.data[i];
            model.params_mut().tensors_mut()[ti].1.data[i] = orig + FD_EPS;
            let plus = objective(&model);
            model.params_mut().tensors_mut()[ti].1.data[i] = orig - FD_EPS;
            let minus = objective(&model);
            model.params_mut().tensors_mut()[ti].1.data[i] = orig;
            let numeric = (plus - minus) / (2.0 * FD_EPS);
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(FD_FLOOR);
            assert!(rel.is_finite(), "{name}[{i}]");
            out.max_rel_err = out.max_rel_err.max(rel);
            out.scalars += 1;
        }
    }
    out
}

pub const ENCODERS: [EncoderKind; 2] = [EncoderKind::MeanPool, EncoderKind::Attention];
pub const TASKS: [Task; 2] = [Task::Relation, Task::Tail];

/// Worst relative error over 20 seeds, both encoders and both heads.
pub fn gradient_suite() -> (usize, f64) {
    let mut scalars = 0;
    let mut worst: f64 = 0.0;
    for kind in ENCODERS {
        for task in TASKS {
            for seed in 0..20 {
                let o = gradient_check(kind, task, seed);
                scalars += o.scalars;
                worst = worst.max(o.max_rel_err);
            }
        }
    }
    (scalars, worst)
}

pub fn brute_metrics(ranks: &[usize]) -> (f64, [f64; 4]) {
    let n = ranks.len() as f64;
    let mrr = ranks.iter().map(|&r| 1.0 / r as f64).sum::<f64>() / n;
    let hits = [1, 3, 5, 10].map(|k| ranks.iter().filter(|&&r| r <= k).count() as f64 / n);
    (mrr, hits)
}

/// Mismatches between `compute_metrics` and the brute-force version.
pub fn metric_oracle(lists: usize) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut bad = 0;
    for _ in 0..lists {
        let len = rng.gen_range(1..=50);
        let max = rng.gen_range(1..=40);
        let ranks: Vec<usize> = (0..len).map(|_| rng.gen_range(1..=max)).collect();
        let m = compute_metrics(&ranks).unwrap();
        let (mrr, hits) = brute_metrics(&ranks);
        let ok = (m.mrr - mrr).abs() <= 1e-12
            && [1, 3, 5, 10]
                .iter()
                .zip(hits)
                .all(|(&k, h)| m.hits_at(k) == Some(h))
            && m.n == ranks.len();
        bad += !ok as usize;
    }
    bad
}

/// Position of `gold` after sorting classes by descending score, gold first
/// among equals.
pub fn brute_rank(scores: &[f64], gold: usize) -> usize {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .unwrap()
            .then((a != gold).cmp(&(b != gold)))
    });
    order.iter().position(|&c| c == gold).unwrap() + 1
}

pub fn random_sequence(rng: &mut ChaCha8Rng, vocab: usize, max_len: usize) -> InputSequence {
    let active = rng.gen_range(1..=max_len);
    let mut token_ids: Vec<u32> = (0..active).map(|_| rng.gen_range(1..vocab as u32)).collect();
    let mut attention_mask = vec![1u8; active];
    token_ids.resize(max_len, PAD);
    attention_mask.resize(max_len, 0);
    InputSequence {
        token_ids,
        attention_mask,
        label: 0,
    }
}

/// Rank mismatches on `queries` random queries against a 5-class toy model.
pub fn rank_oracle(queries: usize) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut bad = 0;
    for q in 0..queries {
        let kind = ENCODERS[q % 2];
        let cfg = ModelConfig {
            kind,
            vocab_size: 12,
            dim: 8,
            ff_dim: 8,
            num_classes: 5,
            max_positions: 16,
        };
        let model = EncoderModel::new(cfg, q as u64, 1.0);
        let seq = random_sequence(&mut rng, 12, 10);
        let gold = rng.gen_range(0..5);
        let logits = model.forward(&seq).unwrap().logits;
        bad += (rank_query(&model, &seq, gold, None).unwrap() != brute_rank(&logits, gold)) as usize;
    }
    bad
}

pub fn unique_sets<T: std::hash::Hash + Eq + Copy>(xs: &[T]) -> HashSet<T> {
    xs.iter().copied().collect()
}
