//! Triple storage: label interning, adjacency indexes, dataset splits and
//! a seeded synthetic generator.
//!
//! Vocabularies are built from the union of all splits, in first-appearance
//! order over train, then valid, then test. The adjacency indexes only ever
//! see the train split, so contexts built from them cannot leak evaluation
//! edges.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use num_rational::Ratio;
use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EntityId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RelationId(pub u32);

impl EntityId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl RelationId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Triple {
    pub head: EntityId,
    pub relation: RelationId,
    pub tail: EntityId,
}

impl Triple {
    pub fn new(head: EntityId, relation: RelationId, tail: EntityId) -> Self {
        Self {
            head,
            relation,
            tail,
        }
    }
}

/// Dense bijection between string labels and integer ids.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Vocab {
    labels: Vec<String>,
    ids: HashMap<String, u32>,
}

impl Vocab {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn intern(&mut self, label: &str) -> u32 {
        if let Some(&id) = self.ids.get(label) {
            return id;
        }
        let id = self.labels.len() as u32;
        self.labels.push(label.to_owned());
        self.ids.insert(label.to_owned(), id);
        id
    }

    pub fn get(&self, label: &str) -> Option<u32> {
        self.ids.get(label).copied()
    }

    pub fn label(&self, id: u32) -> &str {
        &self.labels[id as usize]
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }
}

/// The training graph: vocabularies over every split plus adjacency indexes
/// over the train triples.
#[derive(Debug, Clone)]
pub struct KnowledgeGraph {
    entities: Vocab,
    relations: Vocab,
    triples: Vec<Triple>,
    out_index: Vec<Vec<(RelationId, EntityId)>>,
    in_index: Vec<Vec<(RelationId, EntityId)>>,
    by_relation: Vec<Vec<(EntityId, EntityId)>>,
}

impl KnowledgeGraph {
    pub fn new(entities: Vocab, relations: Vocab, triples: Vec<Triple>) -> Result<Self> {
        let mut out_index = vec![Vec::new(); entities.len()];
        let mut in_index = vec![Vec::new(); entities.len()];
        let mut by_relation = vec![Vec::new(); relations.len()];
        for t in &triples {
            if t.head.index() >= entities.len()
                || t.tail.index() >= entities.len()
                || t.relation.index() >= relations.len()
            {
                return Err(Error::Dimension(format!(
                    "triple {t:?} out of range for |E|={} |R|={}",
                    entities.len(),
                    relations.len()
                )));
            }
            out_index[t.head.index()].push((t.relation, t.tail));
            in_index[t.tail.index()].push((t.relation, t.head));
            by_relation[t.relation.index()].push((t.head, t.tail));
        }
        Ok(Self {
            entities,
            relations,
            triples,
            out_index,
            in_index,
            by_relation,
        })
    }

    pub fn entities(&self) -> &Vocab {
        &self.entities
    }

    pub fn relations(&self) -> &Vocab {
        &self.relations
    }

    pub fn num_entities(&self) -> usize {
        self.entities.len()
    }

    pub fn num_relations(&self) -> usize {
        self.relations.len()
    }

    /// Train triples, in file order.
    pub fn triples(&self) -> &[Triple] {
        &self.triples
    }

    /// Outgoing `(relation, tail)` edges of `e`, in triple order.
    pub fn outgoing(&self, e: EntityId) -> &[(RelationId, EntityId)] {
        &self.out_index[e.index()]
    }

    /// Incoming `(relation, head)` edges of `e`, in triple order.
    pub fn incoming(&self, e: EntityId) -> &[(RelationId, EntityId)] {
        &self.in_index[e.index()]
    }

    /// `(head, tail)` pairs connected by `r`, in triple order.
    pub fn pairs(&self, r: RelationId) -> &[(EntityId, EntityId)] {
        &self.by_relation[r.index()]
    }

    pub fn entity(&self, label: &str) -> Result<EntityId> {
        self.entities
            .get(label)
            .map(EntityId)
            .ok_or_else(|| Error::UnknownLabel {
                kind: "entity",
                label: label.to_owned(),
            })
    }

    pub fn relation(&self, label: &str) -> Result<RelationId> {
        self.relations
            .get(label)
            .map(RelationId)
            .ok_or_else(|| Error::UnknownLabel {
                kind: "relation",
                label: label.to_owned(),
            })
    }

    pub fn entity_label(&self, e: EntityId) -> &str {
        self.entities.label(e.0)
    }

    pub fn relation_label(&self, r: RelationId) -> &str {
        self.relations.label(r.0)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DatasetSplits {
    pub train: Vec<Triple>,
    pub valid: Vec<Triple>,
    pub test: Vec<Triple>,
    pub drug_target_relation_ids: BTreeSet<RelationId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl DatasetSplits {
    pub fn get(&self, split: Split) -> &[Triple] {
        match split {
            Split::Train => &self.train,
            Split::Valid => &self.valid,
            Split::Test => &self.test,
        }
    }

    pub fn is_drug_target(&self, t: &Triple) -> bool {
        self.drug_target_relation_ids.contains(&t.relation)
    }

    /// Triples of `split` whose relation is marked as drug-target.
    pub fn drug_target(&self, split: Split) -> Vec<Triple> {
        self.get(split)
            .iter()
            .filter(|t| self.is_drug_target(t))
            .copied()
            .collect()
    }

    pub fn total(&self) -> usize {
        self.train.len() + self.valid.len() + self.test.len()
    }
}

/// A training graph together with its splits.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub graph: KnowledgeGraph,
    pub splits: DatasetSplits,
}

pub type LabeledTriple = [String; 3];

impl Dataset {
    /// Interns labeled splits and indexes the train split.
    pub fn from_labeled(
        train: &[LabeledTriple],
        valid: &[LabeledTriple],
        test: &[LabeledTriple],
    ) -> Result<Self> {
        let mut entities = Vocab::new();
        let mut relations = Vocab::new();
        let mut intern = |rows: &[LabeledTriple]| -> Vec<Triple> {
            rows.iter()
                .map(|[h, r, t]| {
                    let head = EntityId(entities.intern(h));
                    let relation = RelationId(relations.intern(r));
                    let tail = EntityId(entities.intern(t));
                    Triple::new(head, relation, tail)
                })
                .collect()
        };
        let train = intern(train);
        let valid = intern(valid);
        let test = intern(test);
        let graph = KnowledgeGraph::new(entities, relations, train.clone())?;
        Ok(Self {
            graph,
            splits: DatasetSplits {
                train,
                valid,
                test,
                drug_target_relation_ids: BTreeSet::new(),
            },
        })
    }

    /// Marks the given relation labels as drug-target relations.
    pub fn set_drug_target_labels<S: AsRef<str>>(&mut self, labels: &[S]) -> Result<()> {
        let mut ids = BTreeSet::new();
        for label in labels {
            ids.insert(self.graph.relation(label.as_ref())?);
        }
        self.splits.drug_target_relation_ids = ids;
        Ok(())
    }

    pub fn drug_target_labels(&self) -> Vec<&str> {
        self.splits
            .drug_target_relation_ids
            .iter()
            .map(|&r| self.graph.relation_label(r))
            .collect()
    }

    pub fn stats(&self) -> Result<StatsReport> {
        graph_stats(self)
    }

    pub fn export_split(&self, split: Split, out: &mut impl Write) -> std::io::Result<()> {
        for t in self.splits.get(split) {
            writeln!(
                out,
                "{}\t{}\t{}",
                self.graph.entity_label(t.head),
                self.graph.relation_label(t.relation),
                self.graph.entity_label(t.tail)
            )?;
        }
        Ok(())
    }

    /// Writes `train.tsv`, `valid.tsv` and `test.tsv` into `dir`, plus
    /// `drug_target.txt` when relations are marked.
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (name, split) in SPLIT_FILES {
            let path = dir.join(name);
            let mut file =
                std::io::BufWriter::new(File::create(&path).map_err(|e| Error::io(&path, e))?);
            self.export_split(split, &mut file)
                .and_then(|_| file.flush())
                .map_err(|e| Error::io(&path, e))?;
        }
        let marked = dir.join(DRUG_TARGET_FILE);
        if self.splits.drug_target_relation_ids.is_empty() {
            if marked.exists() {
                std::fs::remove_file(&marked).map_err(|e| Error::io(&marked, e))?;
            }
        } else {
            let body: String = self
                .drug_target_labels()
                .iter()
                .map(|l| format!("{l}\n"))
                .collect();
            std::fs::write(&marked, body).map_err(|e| Error::io(&marked, e))?;
        }
        Ok(())
    }

    /// Reads a directory written by [`Dataset::write_dir`]. Missing or empty
    /// valid/test files are treated as empty splits.
    pub fn read_dir(dir: &Path) -> Result<Self> {
        let train = dir.join(SPLIT_FILES[0].0);
        let valid = dir.join(SPLIT_FILES[1].0);
        let test = dir.join(SPLIT_FILES[2].0);
        let optional = |p: &Path| -> Result<Vec<LabeledTriple>> {
            if p.exists() {
                read_labeled(p, '\t', true)
            } else {
                Ok(Vec::new())
            }
        };
        let mut ds = Self::from_labeled(
            &read_labeled(&train, '\t', false)?,
            &optional(&valid)?,
            &optional(&test)?,
        )?;
        let marked = dir.join(DRUG_TARGET_FILE);
        if marked.exists() {
            let text = std::fs::read_to_string(&marked).map_err(|e| Error::io(&marked, e))?;
            let labels: Vec<&str> = text.lines().map(str::trim).filter(|l| !l.is_empty()).collect();
            ds.set_drug_target_labels(&labels)?;
        }
        Ok(ds)
    }

    /// Content hash over the canonical TSV export of all splits.
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        for (name, split) in SPLIT_FILES {
            let mut buf = Vec::new();
            self.export_split(split, &mut buf)
                .expect("writing to a Vec cannot fail");
            hasher.update(name.as_bytes());
            hasher.update([0u8]);
            hasher.update(&buf);
        }
        hex::encode(hasher.finalize())
    }
}

/// Relation labels of the drug-target subtask, one per line.
pub const DRUG_TARGET_FILE: &str = "drug_target.txt";

pub const SPLIT_FILES: [(&str, Split); 3] = [
    ("train.tsv", Split::Train),
    ("valid.tsv", Split::Valid),
    ("test.tsv", Split::Test),
];

fn read_labeled(path: &Path, delimiter: char, allow_empty: bool) -> Result<Vec<LabeledTriple>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rows = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.trim_end_matches(['\r', '\n']);
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(delimiter).collect();
        if fields.len() != 3 {
            return Err(Error::Parse {
                path: path.to_owned(),
                line: i + 1,
                message: format!("expected 3 fields, found {}", fields.len()),
            });
        }
        if let Some(pos) = fields.iter().position(|f| f.is_empty()) {
            return Err(Error::Parse {
                path: path.to_owned(),
                line: i + 1,
                message: format!("field {} is empty", pos + 1),
            });
        }
        rows.push([
            fields[0].to_owned(),
            fields[1].to_owned(),
            fields[2].to_owned(),
        ]);
    }
    if rows.is_empty() && !allow_empty {
        return Err(Error::EmptyFile(path.to_owned()));
    }
    Ok(rows)
}

/// Loads a single triple file as the train split.
pub fn ingest_tsv(path: &Path, delimiter: char) -> Result<Dataset> {
    ingest_split_files(path, None, None, delimiter)
}

/// Loads separate train/valid/test files. Every supplied file must hold at
/// least one triple.
pub fn ingest_split_files(
    train: &Path,
    valid: Option<&Path>,
    test: Option<&Path>,
    delimiter: char,
) -> Result<Dataset> {
    let train = read_labeled(train, delimiter, false)?;
    let valid = match valid {
        Some(p) => read_labeled(p, delimiter, false)?,
        None => Vec::new(),
    };
    let test = match test {
        Some(p) => read_labeled(p, delimiter, false)?,
        None => Vec::new(),
    };
    Dataset::from_labeled(&train, &valid, &test)
}

#[derive(Debug, Clone, PartialEq)]
pub struct StatsReport {
    pub entities: usize,
    pub relations: usize,
    pub triples: usize,
    pub train: usize,
    pub valid: usize,
    pub test: usize,
    pub avg_density: Ratio<i128>,
    pub avg_appearance: Ratio<i128>,
    pub unseen_valid_entities: usize,
    pub unseen_test_entities: usize,
}

pub fn ratio_to_f64(r: &Ratio<i128>) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

impl StatsReport {
    pub fn avg_density_f64(&self) -> f64 {
        ratio_to_f64(&self.avg_density)
    }

    pub fn avg_appearance_f64(&self) -> f64 {
        ratio_to_f64(&self.avg_appearance)
    }

    pub fn to_kv(&self) -> Vec<(String, String)> {
        vec![
            ("entities".into(), self.entities.to_string()),
            ("relations".into(), self.relations.to_string()),
            ("triples".into(), self.triples.to_string()),
            ("train".into(), self.train.to_string()),
            ("valid".into(), self.valid.to_string()),
            ("test".into(), self.test.to_string()),
            ("avg_density".into(), format!("{:.6}", self.avg_density_f64())),
            ("avg_density_exact".into(), self.avg_density.to_string()),
            (
                "avg_appearance".into(),
                format!("{:.6}", self.avg_appearance_f64()),
            ),
            ("avg_appearance_exact".into(), self.avg_appearance.to_string()),
            (
                "unseen_valid_entities".into(),
                self.unseen_valid_entities.to_string(),
            ),
            (
                "unseen_test_entities".into(),
                self.unseen_test_entities.to_string(),
            ),
        ]
    }
}

impl fmt::Display for StatsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, v) in self.to_kv() {
            writeln!(f, "{k}={v}")?;
        }
        Ok(())
    }
}

/// Counts and averages over all splits: `avg_density = |T|/|E|`,
/// `avg_appearance = |T|/|R|`.
pub fn graph_stats(ds: &Dataset) -> Result<StatsReport> {
    let g = &ds.graph;
    let triples = ds.splits.total();
    if triples == 0 || g.num_entities() == 0 || g.num_relations() == 0 {
        return Err(Error::EmptyGraph);
    }
    let mut seen = vec![false; g.num_entities()];
    for t in &ds.splits.train {
        seen[t.head.index()] = true;
        seen[t.tail.index()] = true;
    }
    let unseen = |split: &[Triple]| -> usize {
        split
            .iter()
            .flat_map(|t| [t.head, t.tail])
            .filter(|e| !seen[e.index()])
            .collect::<HashSet<_>>()
            .len()
    };
    Ok(StatsReport {
        entities: g.num_entities(),
        relations: g.num_relations(),
        triples,
        train: ds.splits.train.len(),
        valid: ds.splits.valid.len(),
        test: ds.splits.test.len(),
        avg_density: Ratio::new(triples as i128, g.num_entities() as i128),
        avg_appearance: Ratio::new(triples as i128, g.num_relations() as i128),
        unseen_valid_entities: unseen(&ds.splits.valid),
        unseen_test_entities: unseen(&ds.splits.test),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SyntheticSpec {
    pub num_entities: usize,
    pub num_relations: usize,
    pub num_triples: usize,
    pub seed: u64,
}

/// Share of triples whose tail ignores the cluster structure.
const SYNTHETIC_NOISE: f64 = 0.1;

/// Generates a seeded graph of distinct triples with learnable structure.
///
/// Entities fall into `C = min(|R|, |E|)` clusters (`e mod C`). Relation `r`
/// links heads of cluster `r mod C` to tails of cluster `(r + 1) mod C`, with
/// tails drawn from a Zipf-like law inside the cluster so densities are
/// skewed. The first `|E|` triples give every entity a head occurrence and
/// always land in train. Valid and test each get `floor(5%)` of the triples,
/// taken from the end of the shuffled remainder.
pub fn generate_synthetic(spec: SyntheticSpec) -> Result<Dataset> {
    let SyntheticSpec {
        num_entities: ne,
        num_relations: nr,
        num_triples: nt,
        seed,
    } = spec;
    if ne == 0 || nr == 0 || nt == 0 {
        return Err(Error::Infeasible("counts must be positive".into()));
    }
    if nt < ne {
        return Err(Error::Infeasible(format!(
            "num_triples {nt} < num_entities {ne}"
        )));
    }
    let capacity = (ne as u128) * (ne as u128) * (nr as u128);
    if (nt as u128) > capacity {
        return Err(Error::Infeasible(format!(
            "{nt} distinct triples requested but only {capacity} exist"
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let clusters = nr.min(ne);
    let members: Vec<Vec<usize>> = (0..clusters)
        .map(|c| (c..ne).step_by(clusters).collect())
        .collect();
    let zipf: Vec<WeightedIndex<f64>> = members
        .iter()
        .map(|m| {
            WeightedIndex::new((0..m.len()).map(|i| 1.0 / (i as f64 + 1.0)))
                .expect("clusters are non-empty")
        })
        .collect();
    // relations whose head cluster is c
    let rels_from: Vec<Vec<usize>> = (0..clusters)
        .map(|c| (c..nr).step_by(clusters).collect())
        .collect();

    let mut seen: HashSet<(usize, usize, usize)> = HashSet::with_capacity(nt);
    let mut triples: Vec<(usize, usize, usize)> = Vec::with_capacity(nt);

    let draw_tail = |rng: &mut ChaCha8Rng, r: usize| -> usize {
        if rng.gen_bool(SYNTHETIC_NOISE) {
            rng.gen_range(0..ne)
        } else {
            let c = (r + 1) % clusters;
            members[c][zipf[c].sample(rng)]
        }
    };

    for h in 0..ne {
        let rels = &rels_from[h % clusters];
        let mut placed = false;
        for attempt in 0..64 {
            let r = if attempt < 32 {
                *rels.choose(&mut rng).expect("every cluster has a relation")
            } else {
                rng.gen_range(0..nr)
            };
            let t = if attempt < 32 {
                draw_tail(&mut rng, r)
            } else {
                rng.gen_range(0..ne)
            };
            if seen.insert((h, r, t)) {
                triples.push((h, r, t));
                placed = true;
                break;
            }
        }
        if !placed {
            let (r, t) = (0..nr)
                .flat_map(|r| (0..ne).map(move |t| (r, t)))
                .find(|&(r, t)| !seen.contains(&(h, r, t)))
                .ok_or_else(|| Error::Infeasible(format!("entity {h} has no free slot")))?;
            seen.insert((h, r, t));
            triples.push((h, r, t));
        }
    }

    let mut misses = 0usize;
    while triples.len() < nt {
        let candidate = if misses < 1_000 {
            let r = rng.gen_range(0..nr);
            let h = *members[r % clusters]
                .choose(&mut rng)
                .expect("clusters are non-empty");
            (h, r, draw_tail(&mut rng, r))
        } else {
            (
                rng.gen_range(0..ne),
                rng.gen_range(0..nr),
                rng.gen_range(0..ne),
            )
        };
        if seen.insert(candidate) {
            triples.push(candidate);
            misses = 0;
        } else {
            misses += 1;
            if misses > 1_000_000 {
                return Err(Error::Infeasible(format!(
                    "could not place {nt} distinct triples"
                )));
            }
        }
    }

    triples[ne..].shuffle(&mut rng);
    let held = nt * 5 / 100;
    let label = |&(h, r, t): &(usize, usize, usize)| -> LabeledTriple {
        [format!("e{h}"), format!("r{r}"), format!("e{t}")]
    };
    let labeled: Vec<LabeledTriple> = triples.iter().map(label).collect();
    let (train, rest) = labeled.split_at(nt - 2 * held);
    let (valid, test) = rest.split_at(held);
    Dataset::from_labeled(train, valid, test)
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

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
}
