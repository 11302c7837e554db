//! Per-entity occurrence counts and the deterministic top-n selection every
//! sampler is built on.

use std::io::Write;

use crate::kg::{EntityId, KnowledgeGraph};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DensityMode {
    /// Count head and tail occurrences; a self-loop adds 2.
    #[default]
    Both,
    /// Count tail occurrences only.
    TailOnly,
}

impl std::str::FromStr for DensityMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "both" => Ok(Self::Both),
            "tail_only" | "tail-only" => Ok(Self::TailOnly),
            other => Err(format!("unknown density mode `{other}`")),
        }
    }
}

impl std::fmt::Display for DensityMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Both => "both",
            Self::TailOnly => "tail_only",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DensityIndex {
    counts: Vec<u64>,
}

impl DensityIndex {
    pub fn build(g: &KnowledgeGraph, mode: DensityMode) -> Self {
        let mut counts = vec![0u64; g.num_entities()];
        for t in g.triples() {
            if mode == DensityMode::Both {
                counts[t.head.index()] += 1;
            }
            counts[t.tail.index()] += 1;
        }
        Self { counts }
    }

    pub fn from_counts(counts: Vec<u64>) -> Self {
        Self { counts }
    }

    pub fn get(&self, e: EntityId) -> u64 {
        self.counts[e.index()]
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    /// Orders entities by descending density, ties by ascending id.
    pub fn cmp_entities(&self, a: EntityId, b: EntityId) -> std::cmp::Ordering {
        self.get(b).cmp(&self.get(a)).then(a.cmp(&b))
    }

    /// `entity_label<TAB>density` lines.
    pub fn dump(&self, g: &KnowledgeGraph, out: &mut impl Write) -> std::io::Result<()> {
        for (i, c) in self.counts.iter().enumerate() {
            writeln!(out, "{}\t{}", g.entity_label(EntityId(i as u32)), c)?;
        }
        Ok(())
    }
}

pub fn build_density(g: &KnowledgeGraph) -> DensityIndex {
    DensityIndex::build(g, DensityMode::Both)
}

/// The `min(n, |candidates|)` densest candidates, densest first, ties by
/// ascending id.
pub fn top_n_entities(candidates: &[EntityId], d: &DensityIndex, n: usize) -> Vec<EntityId> {
    let mut sorted = candidates.to_vec();
    sorted.sort_by(|&a, &b| d.cmp_entities(a, b));
    sorted.truncate(n);
    sorted
}
