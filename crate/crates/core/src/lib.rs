//! Knowledge-graph completion from density-sampled neighborhood contexts.
//!
//! Relations `(h, ?, t)` and tails `(h, r, ?)` are predicted by a sequence
//! classifier over every class at once, so training needs no negative
//! sampling. Contexts come from the train graph only:
//!
//! - [`kg`]: triple loading, interning, adjacency indexes, splits
//! - [`density`]: per-entity occurrence counts and top-n selection
//! - [`context`]: head/tail/relation contexts, FULL or SAMPLED
//! - [`sequence`]: token layout, truncation and padding
//! - [`model`]: mean-pool or attention encoder with a softmax head
//! - [`optim`], [`train`]: AdamW mini-batch training
//! - [`eval`]: ranking, MRR and Hits@k
//! - [`bench`]: analytical and measured context-construction cost

pub mod bench;
pub mod context;
pub mod density;
pub mod error;
pub mod eval;
pub mod kg;
pub mod model;
pub mod optim;
pub mod sequence;
pub mod train;

pub use error::{Error, Result};
