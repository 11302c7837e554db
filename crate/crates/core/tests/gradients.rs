mod common;

use common::*;
use mucos::model::EncoderKind;
use mucos::train::Task;

fn run(kind: EncoderKind, task: Task) {
    for seed in 0..20 {
        let o = gradient_check(kind, task, seed);
        assert!(o.scalars > 0);
        assert!(
            o.max_rel_err <= 1e-4,
            "{kind:?}/{task} seed {seed}: relative error {:.3e}",
            o.max_rel_err
        );
    }
}

#[test]
fn mean_pool_relation_head() {
    run(EncoderKind::MeanPool, Task::Relation);
}

#[test]
fn mean_pool_tail_head() {
    run(EncoderKind::MeanPool, Task::Tail);
}

#[test]
fn attention_relation_head() {
    run(EncoderKind::Attention, Task::Relation);
}

#[test]
fn attention_tail_head() {
    run(EncoderKind::Attention, Task::Tail);
}
