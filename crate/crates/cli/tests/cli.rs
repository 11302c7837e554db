use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const G0: &str = "A\tr1\tB\nA\tr1\tC\nB\tr2\tC\nC\tr2\tA\nD\tr1\tA\n";

struct Env {
    tmp: TempDir,
}

impl Env {
    fn new() -> Self {
        Self {
            tmp: tempfile::tempdir().unwrap(),
        }
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.tmp.path().join(rel)
    }

    fn runs(&self) -> PathBuf {
        self.path("runs")
    }

    fn mucos(&self, args: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_mucos"))
            .args(args)
            .env("MUCOS_OUT", self.runs())
            .output()
            .unwrap()
    }

    fn ok(&self, args: &[&str]) -> String {
        let out = self.mucos(args);
        assert!(
            out.status.success(),
            "{args:?} failed: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        String::from_utf8(out.stdout).unwrap()
    }

    fn g0(&self) -> String {
        let tsv = self.path("g0.tsv");
        fs::write(&tsv, G0).unwrap();
        let dest = self.path("g0");
        self.ok(&["ingest", tsv.to_str().unwrap(), "--dest", dest.to_str().unwrap()]);
        dest.to_str().unwrap().to_owned()
    }
}

fn value<'a>(stdout: &'a str, key: &str) -> &'a str {
    stdout
        .lines()
        .find_map(|l| l.strip_prefix(&format!("{key}=")))
        .unwrap_or_else(|| panic!("no `{key}=` in:\n{stdout}"))
}

fn without_timestamps(path: &Path) -> String {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with("manifest.time.") && !l.starts_with("time."))
        .map(|l| format!("{l}\n"))
        .collect()
}

#[test]
fn sample_prints_labeled_contexts() {
    let env = Env::new();
    let ds = env.g0();
    let tail = env.ok(&["sample", &ds, "A", "r1", "?", "--n", "1", "--k", "1"]);
    assert_eq!(tail.trim(), "Hc: r1 C | Rc: A C");
    let relation = env.ok(&["sample", &ds, "A ? C", "--n", "1", "--k", "1"]);
    assert_eq!(relation.trim(), "Hc: r1 C | Tc: r1 A");
    let both = env.ok(&["sample", &ds, "A r1 C", "--n", "1", "--k", "1"]);
    assert_eq!(both.trim(), "Hc: r1 C | Tc: r1 A | Rc: A C");
    let full = env.ok(&["sample", &ds, "C ? C", "--mode", "full"]);
    assert_eq!(full.trim(), "Hc: r2 A | Tc: r1 r2 A B");
}

#[test]
fn bench_reproduces_reference_speedup() {
    let env = Env::new();
    let out = env.ok(&["bench", "--n", "15", "--k", "10"]);
    assert_eq!(value(&out, "speedup"), "175.42");
    let report = PathBuf::from(value(&out, "report"));
    let text = fs::read_to_string(report).unwrap();
    assert!(text.contains("cost_full_exact=175417/25"));
    assert!(text.contains("manifest.command=bench"));
}

#[test]
fn bench_flags_reference_mismatch_for_dataset_stats() {
    let env = Env::new();
    let out = env.ok(&["bench", "--avg-density", "3.8936", "--avg-appearance", "7008.89"]);
    assert!(out.contains("avg_density differs from the reference 3.895"));
    assert!(!out.contains("avg_appearance differs"));
}

#[test]
fn bench_measures_synthetic_dataset() {
    let env = Env::new();
    let dest = env.path("syn");
    env.ok(&[
        "synth", "--entities", "300", "--relations", "3", "--triples", "6000", "--dest",
        dest.to_str().unwrap(),
    ]);
    let out = env.ok(&["bench", dest.to_str().unwrap(), "--repetitions", "3", "--queries", "100"]);
    let text = fs::read_to_string(value(&out, "report")).unwrap();
    assert!(text.contains("time.empirical_speedup="));
    assert!(text.contains("reference.avg_density_agrees=false"));
}

#[test]
fn train_then_eval_memorizes_g0() {
    let env = Env::new();
    let ds = env.g0();
    // (A,?,B) and (B,?,C) share one token multiset, so the relation task needs order
    for (task, encoder) in [("relation", "attention"), ("tail", "mean_pool")] {
        let out = env.ok(&[
            "train", &ds, "--task", task, "--set", "lr=0.01", "--set", "epochs=300", "--set",
            "batch_size=1", "--set", &format!("encoder={encoder}"),
        ]);
        let ckpt = value(&out, "checkpoint").to_owned();
        let eval = env.ok(&["eval", &ds, "--checkpoint", &ckpt, "--split", "train"]);
        let text = fs::read_to_string(value(&eval, "report")).unwrap();
        let mrr: f64 = value(&text, "general.MRR").parse().unwrap();
        assert!(mrr >= 0.95, "{task}: training MRR {mrr}");
        assert!(text.contains(&format!("general.task={task}")));
    }
}

#[test]
fn identical_inputs_give_identical_reports() {
    let env = Env::new();
    let ds = env.g0();
    let args = ["train", ds.as_str(), "--seed", "3", "--set", "epochs=5", "--set", "dim=8"];
    let a = env.ok(&args);
    let b = env.ok(&args);
    let (ra, rb) = (value(&a, "report"), value(&b, "report"));
    assert_ne!(ra, rb, "each run gets its own directory");
    assert_eq!(without_timestamps(Path::new(ra)), without_timestamps(Path::new(rb)));
    assert_eq!(
        fs::read(value(&a, "checkpoint")).unwrap(),
        fs::read(value(&b, "checkpoint")).unwrap()
    );
    let dir = Path::new(ra).parent().unwrap();
    assert!(dir.file_name().unwrap().to_str().unwrap().contains("-seed3"));
    assert!(dir.join("manifest.txt").exists());
}

#[test]
fn synth_is_deterministic_and_keeps_marked_relations() {
    let env = Env::new();
    let mk = |name: &str| {
        let dest = env.path(name);
        env.ok(&[
            "synth", "--entities", "40", "--relations", "3", "--triples", "300", "--drug-target",
            "r1", "--seed", "4", "--dest", dest.to_str().unwrap(),
        ]);
        dest
    };
    let (a, b) = (mk("a"), mk("b"));
    for f in ["train.tsv", "valid.tsv", "test.tsv", "drug_target.txt"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let stats = env.ok(&["stats", a.to_str().unwrap()]);
    assert_eq!(value(&stats, "triples"), "300");
    assert_eq!(value(&stats, "valid"), "15");
}

#[test]
fn out_flag_and_env_choose_the_run_base() {
    let env = Env::new();
    env.ok(&["bench"]);
    assert_eq!(fs::read_dir(env.runs()).unwrap().count(), 1);
    let other = env.path("elsewhere");
    env.ok(&["bench", "--out", other.to_str().unwrap()]);
    assert_eq!(fs::read_dir(&other).unwrap().count(), 1);
    assert_eq!(fs::read_dir(env.runs()).unwrap().count(), 1);
}

#[test]
fn failures_map_to_distinct_exit_codes() {
    let env = Env::new();
    let ds = env.g0();
    let code = |args: &[&str]| env.mucos(args).status.code().unwrap();

    assert_eq!(code(&["stats", env.path("missing").to_str().unwrap()]), 3);
    assert_eq!(code(&["train", &ds, "--set", "nonsense=1"]), 2);
    assert_eq!(code(&["train", &ds, "--mode", "partial"]), 2);
    let cfg = env.path("bad.cfg");
    fs::write(&cfg, "lr=0.01\nlearning_rate=3\n").unwrap();
    assert_eq!(code(&["train", &ds, "--config", cfg.to_str().unwrap()]), 2);
    assert_eq!(code(&["train", &ds, "--config", env.path("none.cfg").to_str().unwrap()]), 3);

    let bad = env.path("bad.tsv");
    fs::write(&bad, "A\tr1\tB\nA\tr1\n").unwrap();
    assert_eq!(code(&["ingest", bad.to_str().unwrap()]), 5);

    let out = env.ok(&["train", &ds, "--task", "tail", "--set", "epochs=1"]);
    let ckpt = value(&out, "checkpoint").to_owned();
    assert_eq!(code(&["eval", &ds, "--checkpoint", &ckpt, "--task", "relation"]), 4);
    assert_eq!(code(&["eval", &ds, "--checkpoint", &ckpt, "--split", "train", "--subtask", "drug-target"]), 5);
    let tampered = env.path("tampered.ckpt");
    let text = fs::read_to_string(&ckpt).unwrap().replace("num_classes=4", "num_classes=5");
    fs::write(&tampered, text).unwrap();
    assert_eq!(code(&["eval", &ds, "--checkpoint", tampered.to_str().unwrap()]), 4);
    assert_eq!(code(&["sample", &ds, "A", "r9", "?"]), 5);
}
