//! Context-construction cost: the analytical token-count model and a
//! wall-clock comparison of FULL against SAMPLED construction.
//!
//! The analytical model counts context tokens only:
//! `cost_full = 2·avg_density + avg_appearance`, `cost_sampled = 2n + k`.
//! Both are evaluated in exact rational arithmetic.

use std::fmt;
use std::hint::black_box;
use std::time::{Duration, Instant};

use num_rational::Ratio;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::context::{ContextConfig, ContextMode, ContextSampler, Query};
use crate::density::DensityIndex;
use crate::error::{Error, Result};
use crate::kg::{ratio_to_f64, KnowledgeGraph, StatsReport};

/// Published reference statistics for a drug-target graph.
pub const REFERENCE_AVG_DENSITY: &str = "3.895";
pub const REFERENCE_AVG_APPEARANCE: &str = "7008.89";

pub const MIN_QUERIES: usize = 100;
pub const MIN_REPETITIONS: usize = 3;
const MIN_PASS: Duration = Duration::from_millis(1);

/// Parses a plain decimal such as `7008.89` into an exact ratio.
pub fn parse_decimal(s: &str) -> Result<Ratio<i128>> {
    let bad = || Error::Config(format!("`{s}` is not a decimal number"));
    let s = s.trim().replace(',', "");
    let (neg, body) = match s.strip_prefix('-') {
        Some(rest) => (true, rest.to_owned()),
        None => (false, s.clone()),
    };
    let (int, frac) = body.split_once('.').unwrap_or((&body, ""));
    if int.is_empty() && frac.is_empty() {
        return Err(bad());
    }
    if !int.chars().chain(frac.chars()).all(|c| c.is_ascii_digit()) || frac.len() > 30 {
        return Err(bad());
    }
    let digits = format!("{int}{frac}");
    let numer: i128 = if digits.is_empty() { 0 } else { digits.parse().map_err(|_| bad())? };
    let denom = 10i128.pow(frac.len() as u32);
    let r = Ratio::new(numer, denom);
    Ok(if neg { -r } else { r })
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalyticalCost {
    pub avg_density: Ratio<i128>,
    pub avg_appearance: Ratio<i128>,
    pub n: usize,
    pub k: usize,
    pub cost_full: Ratio<i128>,
    pub cost_sampled: Ratio<i128>,
    pub speedup: Ratio<i128>,
}

impl AnalyticalCost {
    pub fn speedup_f64(&self) -> f64 {
        ratio_to_f64(&self.speedup)
    }

    pub fn cost_full_f64(&self) -> f64 {
        ratio_to_f64(&self.cost_full)
    }
}

pub fn analytical_speedup(
    avg_density: Ratio<i128>,
    avg_appearance: Ratio<i128>,
    n: usize,
    k: usize,
) -> Result<AnalyticalCost> {
    if n == 0 || k == 0 {
        return Err(Error::Bench("n and k must be >= 1".into()));
    }
    let two = Ratio::from_integer(2);
    let cost_full = two * avg_density + avg_appearance;
    let cost_sampled = Ratio::from_integer(2 * n as i128 + k as i128);
    Ok(AnalyticalCost {
        avg_density,
        avg_appearance,
        n,
        k,
        cost_full,
        cost_sampled,
        speedup: cost_full / cost_sampled,
    })
}

pub fn analytical_from_stats(stats: &StatsReport, n: usize, k: usize) -> Result<AnalyticalCost> {
    analytical_speedup(stats.avg_density, stats.avg_appearance, n, k)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalCost {
    pub queries: usize,
    pub repetitions: usize,
    /// passes over the query set per timed repetition
    pub inner_loops: usize,
    pub full_ns: u128,
    pub sampled_ns: u128,
    pub full_tokens: usize,
    pub sampled_tokens: usize,
    pub speedup: f64,
}

/// One pass over all queries; returns the number of context tokens built.
fn construct_all(sampler: &ContextSampler, queries: &[Query]) -> usize {
    let mut tokens = 0;
    for &q in queries {
        let b = black_box(sampler.bundle(q, None));
        tokens += b.head_context.len() + b.tail_context.len() + b.relation_context.len();
    }
    tokens
}

fn timed(sampler: &ContextSampler, queries: &[Query], inner: usize) -> Duration {
    let start = Instant::now();
    for _ in 0..inner {
        black_box(construct_all(sampler, black_box(queries)));
    }
    start.elapsed()
}

fn median(mut xs: Vec<u128>) -> u128 {
    xs.sort_unstable();
    let m = xs.len() / 2;
    if xs.len() % 2 == 1 {
        xs[m]
    } else {
        (xs[m - 1] + xs[m]) / 2
    }
}

/// Median wall-clock of FULL vs SAMPLED construction over the same queries,
/// after one warm-up pass. Single-threaded. When a pass takes under 1 ms the
/// number of passes per repetition is doubled until it does not.
pub fn empirical_bench(
    g: &KnowledgeGraph,
    d: &DensityIndex,
    queries: &[Query],
    n: usize,
    k: usize,
    repetitions: usize,
) -> Result<EmpiricalCost> {
    if queries.len() < MIN_QUERIES {
        return Err(Error::Bench(format!(
            "need at least {MIN_QUERIES} queries, got {}",
            queries.len()
        )));
    }
    if repetitions < MIN_REPETITIONS {
        return Err(Error::Bench(format!(
            "need at least {MIN_REPETITIONS} repetitions, got {repetitions}"
        )));
    }
    let base = ContextConfig {
        n,
        k,
        ..ContextConfig::default()
    };
    let full = ContextSampler::new(
        g,
        d,
        ContextConfig {
            mode: ContextMode::Full,
            ..base
        },
    );
    let sampled = ContextSampler::new(
        g,
        d,
        ContextConfig {
            mode: ContextMode::Sampled,
            ..base
        },
    );

    let full_tokens = construct_all(&full, queries);
    let sampled_tokens = construct_all(&sampled, queries);

    let mut inner = 1usize;
    while timed(&sampled, queries, inner) < MIN_PASS && inner < 1 << 20 {
        inner *= 2;
    }

    let mut full_times = Vec::with_capacity(repetitions);
    let mut sampled_times = Vec::with_capacity(repetitions);
    for _ in 0..repetitions {
        full_times.push(timed(&full, queries, inner).as_nanos());
        sampled_times.push(timed(&sampled, queries, inner).as_nanos());
    }
    let full_ns = median(full_times);
    let sampled_ns = median(sampled_times).max(1);
    Ok(EmpiricalCost {
        queries: queries.len(),
        repetitions,
        inner_loops: inner,
        full_ns,
        sampled_ns,
        full_tokens,
        sampled_tokens,
        speedup: full_ns as f64 / sampled_ns as f64,
    })
}

/// `count` tail queries `(h, r, ?)` drawn from the train triples with a
/// seeded shuffle (with repetition when the graph has fewer triples).
pub fn bench_queries(g: &KnowledgeGraph, count: usize, seed: u64) -> Vec<Query> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx: Vec<usize> = (0..g.triples().len()).collect();
    idx.shuffle(&mut rng);
    idx.iter()
        .cycle()
        .take(if idx.is_empty() { 0 } else { count })
        .map(|&i| {
            let t = g.triples()[i];
            Query::Tail {
                head: t.head,
                relation: t.relation,
            }
        })
        .collect()
}

/// Whether `measured`, rounded half away from zero to as many decimals as
/// `reference` is written with, equals `reference`.
pub fn agrees_at_precision(measured: &Ratio<i128>, reference: &str) -> Result<bool> {
    let decimals = reference.trim().split_once('.').map_or(0, |(_, f)| f.len());
    let scale = Ratio::from_integer(10i128.pow(decimals as u32));
    let want = parse_decimal(reference)? * scale;
    Ok((measured * scale).round() == want)
}

/// Per-statistic agreement between a dataset and the published figures.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReferenceCheck {
    pub avg_density_agrees: bool,
    pub avg_appearance_agrees: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComplexityReport {
    pub analytical: AnalyticalCost,
    /// published statistics evaluated under the same model, for comparison
    pub reference: Option<AnalyticalCost>,
    pub reference_check: Option<ReferenceCheck>,
    pub empirical: Option<EmpiricalCost>,
}

impl ComplexityReport {
    /// Dataset costs alongside the published reference statistics at the
    /// same thresholds.
    pub fn with_reference(analytical: AnalyticalCost) -> Result<Self> {
        let reference = analytical_speedup(
            parse_decimal(REFERENCE_AVG_DENSITY)?,
            parse_decimal(REFERENCE_AVG_APPEARANCE)?,
            analytical.n,
            analytical.k,
        )?;
        let check = ReferenceCheck {
            avg_density_agrees: agrees_at_precision(&analytical.avg_density, REFERENCE_AVG_DENSITY)?,
            avg_appearance_agrees: agrees_at_precision(
                &analytical.avg_appearance,
                REFERENCE_AVG_APPEARANCE,
            )?,
        };
        Ok(Self {
            analytical,
            reference: Some(reference),
            reference_check: Some(check),
            empirical: None,
        })
    }

    /// Key/value lines; wall-clock entries carry a `time.` prefix.
    pub fn to_kv(&self) -> Vec<(String, String)> {
        let a = &self.analytical;
        let mut kv = vec![
            ("avg_density".to_owned(), format!("{:.6}", ratio_to_f64(&a.avg_density))),
            (
                "avg_appearance".to_owned(),
                format!("{:.6}", ratio_to_f64(&a.avg_appearance)),
            ),
            ("n".to_owned(), a.n.to_string()),
            ("k".to_owned(), a.k.to_string()),
            ("cost_full".to_owned(), format!("{:.6}", a.cost_full_f64())),
            ("cost_full_exact".to_owned(), a.cost_full.to_string()),
            ("cost_sampled".to_owned(), a.cost_sampled.to_string()),
            ("speedup".to_owned(), format!("{:.6}", a.speedup_f64())),
            ("speedup_exact".to_owned(), a.speedup.to_string()),
        ];
        if let Some(r) = &self.reference {
            kv.push((
                "reference.avg_density".to_owned(),
                format!("{:.6}", ratio_to_f64(&r.avg_density)),
            ));
            kv.push((
                "reference.avg_appearance".to_owned(),
                format!("{:.6}", ratio_to_f64(&r.avg_appearance)),
            ));
            kv.push(("reference.cost_full".to_owned(), format!("{:.6}", r.cost_full_f64())));
            kv.push(("reference.speedup".to_owned(), format!("{:.6}", r.speedup_f64())));
            let gap = ratio_to_f64(&a.avg_density) - ratio_to_f64(&r.avg_density);
            kv.push(("reference.avg_density_gap".to_owned(), format!("{gap:.6}")));
        }
        if let Some(c) = &self.reference_check {
            kv.push(("reference.avg_density_agrees".to_owned(), c.avg_density_agrees.to_string()));
            kv.push((
                "reference.avg_appearance_agrees".to_owned(),
                c.avg_appearance_agrees.to_string(),
            ));
        }
        if let Some(e) = &self.empirical {
            kv.push(("empirical.queries".to_owned(), e.queries.to_string()));
            kv.push(("empirical.repetitions".to_owned(), e.repetitions.to_string()));
            kv.push(("empirical.full_tokens".to_owned(), e.full_tokens.to_string()));
            kv.push(("empirical.sampled_tokens".to_owned(), e.sampled_tokens.to_string()));
            kv.push(("time.inner_loops".to_owned(), e.inner_loops.to_string()));
            kv.push(("time.full_ns".to_owned(), e.full_ns.to_string()));
            kv.push(("time.sampled_ns".to_owned(), e.sampled_ns.to_string()));
            kv.push(("time.empirical_speedup".to_owned(), format!("{:.3}", e.speedup)));
        }
        kv
    }
}

impl fmt::Display for ComplexityReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let row = |f: &mut fmt::Formatter<'_>, name: &str, a: &AnalyticalCost| {
            writeln!(
                f,
                "{:<10} {:>12.4} {:>14.4} {:>4} {:>4} {:>12.4} {:>8} {:>10.4}",
                name,
                ratio_to_f64(&a.avg_density),
                ratio_to_f64(&a.avg_appearance),
                a.n,
                a.k,
                a.cost_full_f64(),
                a.cost_sampled.to_string(),
                a.speedup_f64()
            )
        };
        writeln!(
            f,
            "{:<10} {:>12} {:>14} {:>4} {:>4} {:>12} {:>8} {:>10}",
            "source", "avg_density", "avg_appearance", "n", "k", "cost_full", "sampled", "speedup"
        )?;
        row(f, "dataset", &self.analytical)?;
        if let Some(r) = &self.reference {
            row(f, "reference", r)?;
        }
        if let Some(c) = &self.reference_check {
            if !c.avg_density_agrees {
                writeln!(f, "note: avg_density differs from the reference {REFERENCE_AVG_DENSITY} at its stated precision")?;
            }
            if !c.avg_appearance_agrees {
                writeln!(f, "note: avg_appearance differs from the reference {REFERENCE_AVG_APPEARANCE} at its stated precision")?;
            }
        }
        if let Some(e) = &self.empirical {
            writeln!(
                f,
                "measured   full {:.3} ms  sampled {:.3} ms  speedup {:.2}x  ({} queries, {} reps x {} passes)",
                e.full_ns as f64 / 1e6,
                e.sampled_ns as f64 / 1e6,
                e.speedup,
                e.queries,
                e.repetitions,
                e.inner_loops
            )?;
        }
        Ok(())
    }
}
