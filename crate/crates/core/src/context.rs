//! Head, tail and relation contexts in FULL and SAMPLED modes.
//!
//! The free functions compute a context from the graph indexes on every
//! call. [`ContextSampler`] precomputes each neighborhood once, already
//! ranked by density, so a SAMPLED query only walks a prefix of length `n`
//! (or `k`) while a FULL query copies the whole neighborhood.

use std::collections::{HashMap, HashSet};
use std::fmt;

use crate::density::DensityIndex;
use crate::kg::{EntityId, KnowledgeGraph, RelationId, Triple};

pub const DEFAULT_N: usize = 15;
pub const DEFAULT_K: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ContextMode {
    /// Whole neighborhoods, no sampling.
    Full,
    /// Top-n neighbors and top-k relation pairs by density.
    #[default]
    Sampled,
}

impl std::str::FromStr for ContextMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "full" => Ok(Self::Full),
            "sampled" => Ok(Self::Sampled),
            other => Err(format!("unknown context mode `{other}`")),
        }
    }
}

impl fmt::Display for ContextMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Full => "full",
            Self::Sampled => "sampled",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ContextToken {
    Relation(RelationId),
    Entity(EntityId),
}

impl ContextToken {
    pub fn label<'g>(&self, g: &'g KnowledgeGraph) -> &'g str {
        match *self {
            ContextToken::Relation(r) => g.relation_label(r),
            ContextToken::Entity(e) => g.entity_label(e),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ContextConfig {
    pub mode: ContextMode,
    pub n: usize,
    pub k: usize,
    /// Use both edge directions for head and tail contexts.
    pub undirected: bool,
}

impl Default for ContextConfig {
    fn default() -> Self {
        Self {
            mode: ContextMode::Sampled,
            n: DEFAULT_N,
            k: DEFAULT_K,
            undirected: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ContextBundle {
    pub head_context: Vec<ContextToken>,
    pub tail_context: Vec<ContextToken>,
    pub relation_context: Vec<EntityId>,
    pub mode: ContextMode,
    pub n: usize,
    pub k: usize,
}

pub fn format_tokens(tokens: &[ContextToken], g: &KnowledgeGraph) -> String {
    tokens
        .iter()
        .map(|t| t.label(g))
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn format_entities(entities: &[EntityId], g: &KnowledgeGraph) -> String {
    entities
        .iter()
        .map(|&e| g.entity_label(e))
        .collect::<Vec<_>>()
        .join(" ")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Direction {
    Out,
    In,
    Both,
}

impl Direction {
    fn head(undirected: bool) -> Self {
        if undirected {
            Direction::Both
        } else {
            Direction::Out
        }
    }

    fn tail(undirected: bool) -> Self {
        if undirected {
            Direction::Both
        } else {
            Direction::In
        }
    }
}

/// `(relation, neighbor, source triple)` for every edge at `anchor`.
fn edges(
    g: &KnowledgeGraph,
    anchor: EntityId,
    dir: Direction,
) -> impl Iterator<Item = (RelationId, EntityId, Triple)> + '_ {
    let out = matches!(dir, Direction::Out | Direction::Both);
    let inc = matches!(dir, Direction::In | Direction::Both);
    let out_edges = g
        .outgoing(anchor)
        .iter()
        .filter(move |_| out)
        .map(move |&(r, t)| (r, t, Triple::new(anchor, r, t)));
    let in_edges = g
        .incoming(anchor)
        .iter()
        .filter(move |_| inc)
        .map(move |&(r, h)| (r, h, Triple::new(h, r, anchor)));
    out_edges.chain(in_edges)
}

fn push_unique<T: PartialEq>(v: &mut Vec<T>, x: T) {
    if !v.contains(&x) {
        v.push(x);
    }
}

fn neighborhood(
    g: &KnowledgeGraph,
    anchor: EntityId,
    dir: Direction,
    exclude: Option<&Triple>,
) -> (Vec<RelationId>, Vec<EntityId>) {
    let mut relations = Vec::new();
    let mut entities = Vec::new();
    for (r, e, src) in edges(g, anchor, dir) {
        if exclude == Some(&src) {
            continue;
        }
        push_unique(&mut relations, r);
        push_unique(&mut entities, e);
    }
    (relations, entities)
}

fn entity_context(
    g: &KnowledgeGraph,
    d: &DensityIndex,
    anchor: EntityId,
    dir: Direction,
    n: usize,
    mode: ContextMode,
    exclude: Option<&Triple>,
) -> Vec<ContextToken> {
    let (relations, entities) = neighborhood(g, anchor, dir, exclude);
    let (relations, entities) = match mode {
        ContextMode::Full => (relations, entities),
        ContextMode::Sampled => {
            let mut selected = entities;
            selected.sort_by(|&a, &b| d.cmp_entities(a, b));
            selected.truncate(n);
            let kept: Vec<_> = edges(g, anchor, dir)
                .filter(|(_, _, src)| exclude != Some(src))
                .collect();
            let mut linking = Vec::new();
            for &e in &selected {
                for &(r, _, _) in kept.iter().filter(|(_, x, _)| *x == e) {
                    push_unique(&mut linking, r);
                }
            }
            (linking, selected)
        }
    };
    relations
        .into_iter()
        .map(ContextToken::Relation)
        .chain(entities.into_iter().map(ContextToken::Entity))
        .collect()
}

/// Outgoing relations and outgoing neighbors of `h`, deduplicated in
/// first-appearance order.
pub fn head_neighborhood(g: &KnowledgeGraph, h: EntityId) -> (Vec<RelationId>, Vec<EntityId>) {
    neighborhood(g, h, Direction::Out, None)
}

/// Incoming relations and incoming neighbors of `t`.
pub fn tail_neighborhood(g: &KnowledgeGraph, t: EntityId) -> (Vec<RelationId>, Vec<EntityId>) {
    neighborhood(g, t, Direction::In, None)
}

/// Head context: linking relations, then neighbor entities.
///
/// SAMPLED keeps the `n` densest outgoing neighbors and the distinct
/// relations that link `h` to them, walking the neighbors densest first.
pub fn sample_head_context(
    g: &KnowledgeGraph,
    d: &DensityIndex,
    h: EntityId,
    n: usize,
    mode: ContextMode,
) -> Vec<ContextToken> {
    entity_context(g, d, h, Direction::Out, n, mode, None)
}

/// Mirror of [`sample_head_context`] over the incoming edges of `t`.
pub fn sample_tail_context(
    g: &KnowledgeGraph,
    d: &DensityIndex,
    t: EntityId,
    n: usize,
    mode: ContextMode,
) -> Vec<ContextToken> {
    entity_context(g, d, t, Direction::In, n, mode, None)
}

/// Relation context: `(head, tail)` pairs of `r`, flattened.
///
/// SAMPLED keeps the `k` pairs with the largest density sum, ties by
/// ascending `(head, tail)`.
pub fn sample_relation_context(
    g: &KnowledgeGraph,
    d: &DensityIndex,
    r: RelationId,
    k: usize,
    mode: ContextMode,
) -> Vec<EntityId> {
    relation_context_excluding(g, d, r, k, mode, None)
}

fn relation_context_excluding(
    g: &KnowledgeGraph,
    d: &DensityIndex,
    r: RelationId,
    k: usize,
    mode: ContextMode,
    exclude: Option<&Triple>,
) -> Vec<EntityId> {
    let mut seen = HashSet::new();
    let mut pairs: Vec<(EntityId, EntityId)> = Vec::new();
    for &(h, t) in g.pairs(r) {
        if exclude == Some(&Triple::new(h, r, t)) {
            continue;
        }
        if seen.insert((h, t)) {
            pairs.push((h, t));
        }
    }
    if mode == ContextMode::Sampled {
        pairs.sort_by(|a, b| cmp_pairs(d, *a, *b));
        pairs.truncate(k);
    }
    pairs.into_iter().flat_map(|(h, t)| [h, t]).collect()
}

fn cmp_pairs(d: &DensityIndex, a: (EntityId, EntityId), b: (EntityId, EntityId)) -> std::cmp::Ordering {
    let sa = d.get(a.0) + d.get(a.1);
    let sb = d.get(b.0) + d.get(b.1);
    sb.cmp(&sa).then(a.cmp(&b))
}

/// Builds contexts directly from the graph for one query.
pub fn sample_bundle(
    g: &KnowledgeGraph,
    d: &DensityIndex,
    config: &ContextConfig,
    query: Query,
    exclude: Option<&Triple>,
) -> ContextBundle {
    let ContextConfig {
        mode,
        n,
        k,
        undirected,
    } = *config;
    let mut bundle = ContextBundle {
        mode,
        n,
        k,
        ..Default::default()
    };
    match query {
        Query::Relation { head, tail } => {
            bundle.head_context =
                entity_context(g, d, head, Direction::head(undirected), n, mode, exclude);
            bundle.tail_context =
                entity_context(g, d, tail, Direction::tail(undirected), n, mode, exclude);
        }
        Query::Tail { head, relation } => {
            bundle.head_context =
                entity_context(g, d, head, Direction::head(undirected), n, mode, exclude);
            bundle.relation_context = relation_context_excluding(g, d, relation, k, mode, exclude);
        }
    }
    bundle
}

/// A completion query: `(h, ?, t)` or `(h, r, ?)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Query {
    Relation { head: EntityId, tail: EntityId },
    Tail { head: EntityId, relation: RelationId },
}

#[derive(Debug, Clone)]
struct Neighbor {
    entity: EntityId,
    total: u32,
    /// relation multiplicities, first-appearance order
    relations: Vec<(RelationId, u32)>,
}

#[derive(Debug, Clone, Default)]
struct RankedNeighborhood {
    /// `(relation, neighbor, source triple)` in adjacency order
    edges: Vec<(RelationId, EntityId, Triple)>,
    relations: Vec<(RelationId, u32)>,
    neighbors: Vec<Neighbor>,
    /// indices into `neighbors`, densest first
    ranked: Vec<u32>,
}

impl RankedNeighborhood {
    fn build(g: &KnowledgeGraph, d: &DensityIndex, anchor: EntityId, dir: Direction) -> Self {
        let mut nb = RankedNeighborhood::default();
        let mut slot: HashMap<EntityId, usize> = HashMap::new();
        nb.edges = edges(g, anchor, dir).collect();
        for &(r, e, _) in &nb.edges {
            match nb.relations.iter_mut().find(|(x, _)| *x == r) {
                Some((_, c)) => *c += 1,
                None => nb.relations.push((r, 1)),
            }
            let i = *slot.entry(e).or_insert_with(|| {
                nb.neighbors.push(Neighbor {
                    entity: e,
                    total: 0,
                    relations: Vec::new(),
                });
                nb.neighbors.len() - 1
            });
            let n = &mut nb.neighbors[i];
            n.total += 1;
            match n.relations.iter_mut().find(|(x, _)| *x == r) {
                Some((_, c)) => *c += 1,
                None => n.relations.push((r, 1)),
            }
        }
        nb.ranked = (0..nb.neighbors.len() as u32).collect();
        let neighbors = &nb.neighbors;
        nb.ranked.sort_by(|&a, &b| {
            d.cmp_entities(neighbors[a as usize].entity, neighbors[b as usize].entity)
        });
        nb
    }
}

/// Edge multiplicity to subtract from one neighborhood.
#[derive(Debug, Clone, Copy)]
struct Exclusion {
    relation: RelationId,
    out_entity: Option<EntityId>,
    in_entity: Option<EntityId>,
    copies: u32,
}

impl Exclusion {
    fn removed(&self, e: EntityId, r: RelationId) -> u32 {
        if r != self.relation {
            return 0;
        }
        let hits = (self.out_entity == Some(e)) as u32 + (self.in_entity == Some(e)) as u32;
        hits * self.copies
    }
}

#[derive(Debug, Clone, Default)]
struct RankedPairs {
    /// first-appearance order
    pairs: Vec<(EntityId, EntityId)>,
    /// indices into `pairs`, best first
    ranked: Vec<u32>,
}

/// Precomputed, density-ranked neighborhoods for fast per-query sampling.
///
/// Output is identical to the free functions of this module; preprocessing
/// is paid once at construction.
#[derive(Debug, Clone)]
pub struct ContextSampler {
    config: ContextConfig,
    heads: Vec<RankedNeighborhood>,
    tails: Vec<RankedNeighborhood>,
    pairs: Vec<RankedPairs>,
    multiplicity: HashMap<Triple, u32>,
    head_dir: Direction,
    tail_dir: Direction,
}

impl ContextSampler {
    pub fn new(g: &KnowledgeGraph, d: &DensityIndex, config: ContextConfig) -> Self {
        let head_dir = Direction::head(config.undirected);
        let tail_dir = Direction::tail(config.undirected);
        let entities = (0..g.num_entities() as u32).map(EntityId);
        let heads: Vec<_> = entities
            .clone()
            .map(|e| RankedNeighborhood::build(g, d, e, head_dir))
            .collect();
        let tails = if config.undirected {
            heads.clone()
        } else {
            entities
                .map(|e| RankedNeighborhood::build(g, d, e, tail_dir))
                .collect()
        };
        let pairs = (0..g.num_relations() as u32)
            .map(|r| {
                let mut p = RankedPairs::default();
                let mut seen = HashSet::new();
                p.pairs = g
                    .pairs(RelationId(r))
                    .iter()
                    .copied()
                    .filter(|&pair| seen.insert(pair))
                    .collect();
                p.ranked = (0..p.pairs.len() as u32).collect();
                let all = &p.pairs;
                p.ranked
                    .sort_by(|&a, &b| cmp_pairs(d, all[a as usize], all[b as usize]));
                p
            })
            .collect();
        let mut multiplicity = HashMap::new();
        for t in g.triples() {
            *multiplicity.entry(*t).or_insert(0) += 1;
        }
        Self {
            config,
            heads,
            tails,
            pairs,
            multiplicity,
            head_dir,
            tail_dir,
        }
    }

    pub fn config(&self) -> &ContextConfig {
        &self.config
    }

    fn exclusion(&self, anchor: EntityId, dir: Direction, q: Option<&Triple>) -> Option<Exclusion> {
        let q = q?;
        let copies = *self.multiplicity.get(q)?;
        let out = matches!(dir, Direction::Out | Direction::Both) && anchor == q.head;
        let inc = matches!(dir, Direction::In | Direction::Both) && anchor == q.tail;
        if !out && !inc {
            return None;
        }
        Some(Exclusion {
            relation: q.relation,
            out_entity: out.then_some(q.tail),
            in_entity: inc.then_some(q.head),
            copies,
        })
    }

    fn entity_context(
        &self,
        nb: &RankedNeighborhood,
        excl: Option<Exclusion>,
        query: Option<&Triple>,
    ) -> Vec<ContextToken> {
        let ContextConfig { mode, n, .. } = self.config;
        let gone = |e: EntityId, r: RelationId| excl.map_or(0, |x| x.removed(e, r));
        match mode {
            ContextMode::Full if excl.is_some() => {
                // first-appearance order shifts once the query edge is gone
                let mut relations = Vec::new();
                let mut entities = Vec::new();
                for (r, e, _) in nb.edges.iter().filter(|(_, _, src)| query != Some(src)) {
                    push_unique(&mut relations, ContextToken::Relation(*r));
                    push_unique(&mut entities, ContextToken::Entity(*e));
                }
                relations.extend(entities);
                relations
            }
            ContextMode::Full => {
                let mut out = Vec::with_capacity(nb.relations.len() + nb.neighbors.len());
                out.extend(nb.relations.iter().map(|&(r, _)| ContextToken::Relation(r)));
                out.extend(nb.neighbors.iter().map(|nbr| ContextToken::Entity(nbr.entity)));
                out
            }
            ContextMode::Sampled => {
                let mut relations: Vec<RelationId> = Vec::new();
                let mut entities: Vec<EntityId> = Vec::with_capacity(n.min(nb.ranked.len()));
                for &i in &nb.ranked {
                    if entities.len() >= n {
                        break;
                    }
                    let nbr = &nb.neighbors[i as usize];
                    let before = relations.len();
                    let mut alive = false;
                    for &(r, c) in &nbr.relations {
                        if c > gone(nbr.entity, r) {
                            alive = true;
                            push_unique(&mut relations, r);
                        }
                    }
                    debug_assert!(alive || relations.len() == before);
                    if alive {
                        entities.push(nbr.entity);
                    }
                }
                let mut out = Vec::with_capacity(relations.len() + entities.len());
                out.extend(relations.into_iter().map(ContextToken::Relation));
                out.extend(entities.into_iter().map(ContextToken::Entity));
                out
            }
        }
    }

    /// Head context of `h`; `exclude` drops every edge that stems from that triple.
    pub fn head_context(&self, h: EntityId, exclude: Option<&Triple>) -> Vec<ContextToken> {
        let excl = self.exclusion(h, self.head_dir, exclude);
        self.entity_context(&self.heads[h.index()], excl, exclude)
    }

    pub fn tail_context(&self, t: EntityId, exclude: Option<&Triple>) -> Vec<ContextToken> {
        let excl = self.exclusion(t, self.tail_dir, exclude);
        self.entity_context(&self.tails[t.index()], excl, exclude)
    }

    pub fn relation_context(&self, r: RelationId, exclude: Option<&Triple>) -> Vec<EntityId> {
        let p = &self.pairs[r.index()];
        let skip = exclude
            .filter(|q| q.relation == r && self.multiplicity.contains_key(q))
            .map(|q| (q.head, q.tail));
        let mut out = Vec::new();
        match self.config.mode {
            ContextMode::Full => {
                out.reserve(2 * p.pairs.len());
                for &(h, t) in &p.pairs {
                    if skip != Some((h, t)) {
                        out.push(h);
                        out.push(t);
                    }
                }
            }
            ContextMode::Sampled => {
                let k = self.config.k;
                out.reserve(2 * k.min(p.pairs.len()));
                for &i in &p.ranked {
                    if out.len() / 2 >= k {
                        break;
                    }
                    let (h, t) = p.pairs[i as usize];
                    if skip != Some((h, t)) {
                        out.push(h);
                        out.push(t);
                    }
                }
            }
        }
        out
    }

    pub fn bundle(&self, query: Query, exclude: Option<&Triple>) -> ContextBundle {
        let ContextConfig { mode, n, k, .. } = self.config;
        let mut bundle = ContextBundle {
            mode,
            n,
            k,
            ..Default::default()
        };
        match query {
            Query::Relation { head, tail } => {
                bundle.head_context = self.head_context(head, exclude);
                bundle.tail_context = self.tail_context(tail, exclude);
            }
            Query::Tail { head, relation } => {
                bundle.head_context = self.head_context(head, exclude);
                bundle.relation_context = self.relation_context(relation, exclude);
            }
        }
        bundle
    }
}
