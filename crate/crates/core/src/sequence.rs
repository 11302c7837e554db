//! Fixed-length token sequences for the encoder.
//!
//! Layouts:
//! - relation query: `CLS h SEP Hc.. SEP t SEP Tc.. SEP`
//! - tail query:     `CLS h SEP Hc.. SEP r SEP Rc.. SEP`
//!
//! When the two contexts do not fit, the last token of the currently longer
//! context is dropped (the first context on ties) until they do. Query tokens
//! and separators always survive.

use crate::context::{ContextBundle, ContextToken};
use crate::error::{Error, Result};
use crate::kg::{EntityId, KnowledgeGraph, RelationId};

pub const PAD: u32 = 0;
pub const CLS: u32 = 1;
pub const SEP: u32 = 2;
const NUM_SPECIAL: u32 = 3;
pub const MIN_MAX_LEN: usize = 7;
const SKELETON_LEN: usize = 7;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TokenVocab {
    pub num_entities: usize,
    pub num_relations: usize,
}

impl TokenVocab {
    pub fn for_graph(g: &KnowledgeGraph) -> Self {
        Self {
            num_entities: g.num_entities(),
            num_relations: g.num_relations(),
        }
    }

    pub fn size(&self) -> usize {
        NUM_SPECIAL as usize + self.num_entities + self.num_relations
    }

    pub fn entity(&self, e: EntityId) -> u32 {
        NUM_SPECIAL + e.0
    }

    pub fn relation(&self, r: RelationId) -> u32 {
        NUM_SPECIAL + self.num_entities as u32 + r.0
    }

    pub fn context(&self, t: ContextToken) -> u32 {
        match t {
            ContextToken::Entity(e) => self.entity(e),
            ContextToken::Relation(r) => self.relation(r),
        }
    }

    /// Human-readable label of a token id.
    pub fn label(&self, id: u32, g: &KnowledgeGraph) -> String {
        match id {
            PAD => "PAD".into(),
            CLS => "CLS".into(),
            SEP => "SEP".into(),
            _ => {
                let i = (id - NUM_SPECIAL) as usize;
                if i < self.num_entities {
                    g.entity_label(EntityId(i as u32)).to_owned()
                } else if i - self.num_entities < self.num_relations {
                    g.relation_label(RelationId((i - self.num_entities) as u32))
                        .to_owned()
                } else {
                    format!("<{id}>")
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SequenceConfig {
    pub max_len: usize,
    pub use_head_context: bool,
    pub use_relation_context: bool,
}

impl Default for SequenceConfig {
    fn default() -> Self {
        Self {
            max_len: 128,
            use_head_context: true,
            use_relation_context: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InputSequence {
    pub token_ids: Vec<u32>,
    pub attention_mask: Vec<u8>,
    pub label: u32,
}

impl InputSequence {
    pub fn len(&self) -> usize {
        self.token_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.token_ids.is_empty()
    }

    pub fn active_len(&self) -> usize {
        self.attention_mask.iter().filter(|&&m| m == 1).count()
    }

    pub fn dump(&self, vocab: &TokenVocab, g: &KnowledgeGraph) -> String {
        self.token_ids
            .iter()
            .map(|&id| vocab.label(id, g))
            .collect::<Vec<_>>()
            .join(" ")
    }
}

fn truncate_pair(a: &mut Vec<u32>, b: &mut Vec<u32>, budget: usize) {
    while a.len() + b.len() > budget {
        if a.len() >= b.len() {
            a.pop();
        } else {
            b.pop();
        }
    }
}

fn assemble(
    first: u32,
    mut first_ctx: Vec<u32>,
    second: u32,
    mut second_ctx: Vec<u32>,
    max_len: usize,
    label: u32,
) -> Result<InputSequence> {
    if max_len < MIN_MAX_LEN {
        return Err(Error::SequenceTooShort(max_len));
    }
    truncate_pair(&mut first_ctx, &mut second_ctx, max_len - SKELETON_LEN);
    let mut ids = Vec::with_capacity(max_len);
    ids.extend([CLS, first, SEP]);
    ids.extend(first_ctx);
    ids.extend([SEP, second, SEP]);
    ids.extend(second_ctx);
    ids.push(SEP);
    let active = ids.len();
    ids.resize(max_len, PAD);
    let mut mask = vec![1u8; active];
    mask.resize(max_len, 0);
    Ok(InputSequence {
        token_ids: ids,
        attention_mask: mask,
        label,
    })
}

/// `(h, ?, t)`: the label is the relation's class index.
pub fn build_relation_query(
    h: EntityId,
    t: EntityId,
    head_context: &[ContextToken],
    tail_context: &[ContextToken],
    vocab: &TokenVocab,
    config: &SequenceConfig,
    label: RelationId,
) -> Result<InputSequence> {
    let hc = if config.use_head_context {
        head_context.iter().map(|&x| vocab.context(x)).collect()
    } else {
        Vec::new()
    };
    let tc = tail_context.iter().map(|&x| vocab.context(x)).collect();
    assemble(
        vocab.entity(h),
        hc,
        vocab.entity(t),
        tc,
        config.max_len,
        label.0,
    )
}

/// `(h, r, ?)`: the label is the tail entity's class index.
pub fn build_tail_query(
    h: EntityId,
    r: RelationId,
    head_context: &[ContextToken],
    relation_context: &[EntityId],
    vocab: &TokenVocab,
    config: &SequenceConfig,
    label: EntityId,
) -> Result<InputSequence> {
    let hc = if config.use_head_context {
        head_context.iter().map(|&x| vocab.context(x)).collect()
    } else {
        Vec::new()
    };
    let rc = if config.use_relation_context {
        relation_context.iter().map(|&e| vocab.entity(e)).collect()
    } else {
        Vec::new()
    };
    assemble(
        vocab.entity(h),
        hc,
        vocab.relation(r),
        rc,
        config.max_len,
        label.0,
    )
}

/// Relation-query sequence from a bundle.
pub fn relation_sequence(
    h: EntityId,
    t: EntityId,
    bundle: &ContextBundle,
    vocab: &TokenVocab,
    config: &SequenceConfig,
    label: RelationId,
) -> Result<InputSequence> {
    build_relation_query(
        h,
        t,
        &bundle.head_context,
        &bundle.tail_context,
        vocab,
        config,
        label,
    )
}

/// Tail-query sequence from a bundle.
pub fn tail_sequence(
    h: EntityId,
    r: RelationId,
    bundle: &ContextBundle,
    vocab: &TokenVocab,
    config: &SequenceConfig,
    label: EntityId,
) -> Result<InputSequence> {
    build_tail_query(
        h,
        r,
        &bundle.head_context,
        &bundle.relation_context,
        vocab,
        config,
        label,
    )
}
