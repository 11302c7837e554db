//! One PASS/FAIL line per acceptance criterion.

mod common;

use std::time::Instant;

use common::*;
use mucos::bench::{
    analytical_from_stats, analytical_speedup, bench_queries, empirical_bench, parse_decimal,
    ComplexityReport, REFERENCE_AVG_APPEARANCE, REFERENCE_AVG_DENSITY,
};
use mucos::context::{ContextConfig, ContextMode, ContextSampler};
use mucos::density::DensityIndex;
use mucos::eval::{compute_metrics, Evaluator};
use mucos::kg::{generate_synthetic, ratio_to_f64, Split, SyntheticSpec};
use mucos::model::{EncoderKind, EncoderModel};
use mucos::optim::AdamWConfig;
use mucos::train::{train, Subtask, Task, TrainConfig, TrainOptions};
use num_rational::Ratio;

struct Outcome {
    name: &'static str,
    pass: bool,
    detail: String,
}

fn report(name: &'static str, pass: bool, detail: String) -> Outcome {
    println!("[{}] {name}: {detail}", if pass { "PASS" } else { "FAIL" });
    Outcome { name, pass, detail }
}

fn analytical() -> Outcome {
    let start = Instant::now();
    let a = analytical_speedup(
        parse_decimal(REFERENCE_AVG_DENSITY).unwrap(),
        parse_decimal(REFERENCE_AVG_APPEARANCE).unwrap(),
        15,
        10,
    )
    .unwrap();
    let secs = start.elapsed().as_secs_f64();
    let pass = a.cost_full == Ratio::new(701_668, 100)
        && a.cost_sampled == Ratio::from_integer(40)
        && (a.speedup_f64() - 175.42).abs() <= 0.01
        && secs < 1.0;
    report(
        "analytical speedup",
        pass,
        format!(
            "cost_full={:.2} cost_sampled={} speedup={:.4} (175.42±0.01) in {secs:.4}s",
            a.cost_full_f64(),
            a.cost_sampled,
            a.speedup_f64()
        ),
    )
}

fn dataset_statistics() -> Outcome {
    let start = Instant::now();
    let ds = generate_synthetic(SyntheticSpec {
        num_entities: 16_201,
        num_relations: 9,
        num_triples: 63_080,
        seed: 50,
    })
    .unwrap();
    let s = ds.stats().unwrap();
    let r = ComplexityReport::with_reference(analytical_from_stats(&s, 15, 10).unwrap()).unwrap();
    let check = r.reference_check.unwrap();
    let appearance_2dp = (s.avg_appearance * Ratio::from_integer(100)).round();
    let density = ratio_to_f64(&s.avg_density);
    let pass = (s.triples, s.entities, s.relations) == (63_080, 16_201, 9)
        && s.avg_appearance == Ratio::new(63_080, 9)
        && appearance_2dp == Ratio::from_integer(700_889)
        && (density - 3.8936).abs() <= 1e-4
        && check.avg_appearance_agrees
        && !check.avg_density_agrees
        && r.reference.as_ref().unwrap().avg_density == parse_decimal("3.895").unwrap();
    report(
        "dataset statistics",
        pass,
        format!(
            "avg_appearance={} ≈ {:.2}, avg_density={density:.4} (3.8936±0.0001), reference 3.895 flagged={} in {:.2}s",
            s.avg_appearance,
            s.avg_appearance_f64(),
            !check.avg_density_agrees,
            start.elapsed().as_secs_f64()
        ),
    )
}

fn sampling_equivalence() -> Outcome {
    let start = Instant::now();
    let mut out = OracleOutcome::default();
    for seed in 0..50 {
        sampling_oracle(seed, &mut out);
    }
    let leaks: usize = (0..50).map(leakage_violations).sum();
    let secs = start.elapsed().as_secs_f64();
    report(
        "sampling oracle equivalence",
        out.mismatches.is_empty() && leaks == 0 && secs < 60.0,
        format!(
            "{} checks on 50 graphs, n,k in {{1,2,5,inf}}: {} mismatches, {leaks} leaks in {secs:.2}s",
            out.checks,
            out.mismatches.len()
        ),
    )
}

fn gradients() -> Outcome {
    let start = Instant::now();
    let (scalars, worst) = gradient_suite();
    let secs = start.elapsed().as_secs_f64();
    report(
        "gradient correctness",
        worst <= 1e-4 && secs < 120.0,
        format!(
            "{scalars} scalars, 2 encoders x 2 heads x 20 seeds, eps={FD_EPS:e}: max relative error {worst:.2e} (<= 1e-4) in {secs:.2}s"
        ),
    )
}

fn metrics() -> Outcome {
    let bad = metric_oracle(1000);
    let m = compute_metrics(&[1, 2, 4]).unwrap();
    let fixture = m.mrr == 7.0 / 12.0 && m.hits_at(3) == Some(2.0 / 3.0);
    report(
        "metric oracle",
        bad == 0 && fixture,
        format!("{bad} mismatches on 1000 lists; [1,2,4] -> MRR={:.6} Hits@3={:.6}", m.mrr, m.hits_at(3).unwrap()),
    )
}

fn overfit() -> Outcome {
    let ds = g0();
    let config = TrainConfig {
        task: Task::Tail,
        encoder: EncoderKind::MeanPool,
        adamw: AdamWConfig {
            lr: 1e-2,
            ..AdamWConfig::default()
        },
        batch_size: 1,
        epochs: 500,
        select_best: false,
        ..TrainConfig::default()
    };
    let (model, rep) = train(&ds, &config, &TrainOptions::default()).unwrap();
    let d = DensityIndex::build(&ds.graph, config.density_mode);
    let sampler = ContextSampler::new(&ds.graph, &d, config.context);
    let ev = Evaluator::new(&ds, &sampler, &d, &config);
    let m = compute_metrics(&ev.ranks(&model, &ds.splits.train).unwrap()).unwrap();
    let h1 = m.hits_at(1).unwrap();
    let l = &rep.epoch_losses;
    report(
        "overfit smoke test",
        h1 >= 0.95 && l[4] < l[0],
        format!(
            "G0 tail task, 500 epochs, lr 1e-2: train Hits@1={h1:.3} MRR={:.3}, loss epoch1={:.4} epoch5={:.4} final={:.2e}",
            m.mrr,
            l[0],
            l[4],
            l[l.len() - 1]
        ),
    )
}

fn empirical() -> Outcome {
    let (n, k) = (15, 10);
    let mut speedups = Vec::new();
    let mut detail = Vec::new();
    let mut dense_enough = true;
    for triples in [24_000, 48_000] {
        let ds = generate_synthetic(SyntheticSpec {
            num_entities: 1_000,
            num_relations: 4,
            num_triples: triples,
            seed: 7,
        })
        .unwrap();
        let g = &ds.graph;
        let appearance = g.triples().len() as f64 / g.num_relations() as f64;
        dense_enough &= appearance >= 100.0 * (2 * n + k) as f64;
        let d = DensityIndex::build(g, Default::default());
        let queries = bench_queries(g, 200, 1);
        let e = empirical_bench(g, &d, &queries, n, k, 5).unwrap();
        detail.push(format!(
            "train avg_appearance={appearance:.0}: full={:.2}ms sampled={:.3}ms speedup={:.1}x",
            e.full_ns as f64 / 1e6,
            e.sampled_ns as f64 / 1e6,
            e.speedup
        ));
        speedups.push(e.speedup);
    }
    let pass = dense_enough && speedups.iter().all(|&s| s > 1.0) && speedups[1] > speedups[0];
    report("empirical speedup", pass, detail.join("; "))
}

fn smoke() -> Outcome {
    let ds = generate_synthetic(SyntheticSpec {
        num_entities: 200,
        num_relations: 4,
        num_triples: 2_000,
        seed: 3,
    })
    .unwrap();
    let config = TrainConfig {
        task: Task::Tail,
        context: ContextConfig {
            mode: ContextMode::Sampled,
            ..ContextConfig::default()
        },
        adamw: AdamWConfig {
            lr: 1e-2,
            ..AdamWConfig::default()
        },
        epochs: 20,
        ..TrainConfig::default()
    };
    let (trained, _) = train(&ds, &config, &TrainOptions::default()).unwrap();
    let untrained = EncoderModel::new(config.model_config(&ds), config.seed, config.init_scale);
    let d = DensityIndex::build(&ds.graph, config.density_mode);
    let sampler = ContextSampler::new(&ds.graph, &d, config.context);
    let ev = Evaluator::new(&ds, &sampler, &d, &config);
    let before = ev.evaluate(&untrained, Split::Test, Subtask::General).unwrap();
    let after = ev.evaluate(&trained, Split::Test, Subtask::General).unwrap();
    report(
        "held-out smoke check",
        after.mrr() >= 3.0 * before.mrr(),
        format!(
            "200-entity synthetic, tail task, SAMPLED, {} test triples: trained MRR={:.4} untrained MRR={:.4} ratio={:.1}x (>= 3x)",
            after.metrics.n,
            after.mrr(),
            before.mrr(),
            after.mrr() / before.mrr()
        ),
    )
}

fn main() {
    let outcomes = [
        analytical(),
        dataset_statistics(),
        sampling_equivalence(),
        gradients(),
        metrics(),
        overfit(),
        empirical(),
        smoke(),
    ];
    let failed: Vec<_> = outcomes.iter().filter(|o| !o.pass).collect();
    for o in &failed {
        eprintln!("failed: {} ({})", o.name, o.detail);
    }
    println!("{} of {} criteria passed", outcomes.len() - failed.len(), outcomes.len());
    if !failed.is_empty() {
        std::process::exit(1);
    }
}
