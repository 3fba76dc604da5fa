use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use senselab_core::embedding::{save_table, EmbeddingTable, KeyOrder};
use senselab_core::extraction::{conceptnet_instances, generate_queries};
use senselab_core::mapper::{AnchorPair, AnchorSet};
use senselab_core::ontology::{load_wordnet, Ontology, SynsetId};
use senselab_core::probe::{GlossMode, MetricsReport, ProbeDataset, Repr};
use serde_json::{json, Value};
use tempfile::TempDir;

fn senselab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_senselab"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = senselab(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn fixture_wordnet() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/wordnet")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn manifest(p: &Path) -> Value {
    let mut m = p.as_os_str().to_owned();
    m.push(".manifest.json");
    serde_json::from_str(&fs::read_to_string(PathBuf::from(m)).unwrap()).unwrap()
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(senselab(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(senselab(&["evaluate", "--no-such-flag"]).status.code(), Some(2));
    assert_eq!(senselab(&[]).status.code(), Some(2));
    assert_eq!(senselab(&["--help"]).status.code(), Some(0));
}

#[test]
fn validation_errors_exit_1_and_name_the_key() {
    let out = senselab(&["evaluate"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("`probe`"), "{}", stderr(&out));

    let out = senselab(&["knn-eval", "--repr", "whole", "--probe", "/no/such/probe.jsonl"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("`probe`"));

    let out = senselab(&["evaluate", "--backend", "onnx:/tmp"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("`backend`"));

    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, "wordnet = \"x\"\nsubsett = \"core\"\n").unwrap();
    let out = senselab(&["build-probe", "--config", s(&cfg)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("subsett"), "{}", stderr(&out));
}

#[test]
fn build_probe_is_idempotent_and_records_config() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, format!("wordnet = {:?}\nseed = 3\nwordnet_cap = 7\n", fixture_wordnet())).unwrap();
    let a = dir.path().join("a.jsonl");
    let b = dir.path().join("b.jsonl");
    let table = ok(&["build-probe", "--config", s(&cfg), "--wordnet-cap", "4", "--out", s(&a)]);
    assert!(table.contains("Hypernym"));
    ok(&["build-probe", "--config", s(&cfg), "--wordnet-cap", "4", "--out", s(&b)]);
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());

    let ds = ProbeDataset::load(&a).unwrap();
    assert_eq!(ds.instances.iter().filter(|i| i.relation == "Hypernym").count(), 4);
    let m = manifest(&a);
    assert_eq!(m["seed"], 3);
    assert_eq!(m["config"]["wordnet_cap"], 4);
    assert_eq!(m["config"]["subset"], "core");
    assert_eq!(m["command"], "build-probe");
    let outputs = m["outputs"].as_array().unwrap();
    assert_eq!(outputs.len(), 2);
    assert!(outputs.iter().all(|o| o["sha256"].as_str().unwrap().len() == 64));

    // manifests of the two runs differ only in the timestamp and output name
    let mut ma = manifest(&a);
    let mut mb = manifest(&b);
    for m in [&mut ma, &mut mb] {
        m["timestamp"] = Value::Null;
        m["config"]["out"] = Value::Null;
        for o in m["outputs"].as_array_mut().unwrap() {
            o["path"] = Value::Null;
        }
    }
    assert_eq!(ma, mb);
}

fn write_anchors(path: &Path, rank_deficient: bool) {
    let pairs = (0..12)
        .map(|i| {
            let x = i as f64;
            let third = if rank_deficient { 2.0 * x } else { (x * 0.7).sin() };
            AnchorPair {
                key: format!("t{i}"),
                source: vec![x, 1.0, third],
                target: vec![x + 1.0, 2.0 * x],
            }
        })
        .collect();
    AnchorSet::new(3, 2, 0, pairs).unwrap().save(path).unwrap();
}

#[test]
fn singular_anchors_ask_for_a_ridge() {
    let dir = TempDir::new().unwrap();
    let anchors = dir.path().join("a.bin");
    write_anchors(&anchors, true);
    let map = dir.path().join("map.json");
    let out = senselab(&["fit-map", "--anchors", s(&anchors), "--ridge", "0", "--out", s(&map)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("--ridge"), "{}", stderr(&out));
    assert!(!map.exists());

    let info: Value = serde_json::from_str(&ok(&["fit-map", "--anchors", s(&anchors), "--ridge", "0.01", "--out", s(&map)])).unwrap();
    assert_eq!(info["anchor_count"], 12);
    assert_eq!(manifest(&map)["inputs"][0]["path"], s(&anchors));

    write_anchors(&anchors, false);
    let info: Value = serde_json::from_str(&ok(&["fit-map", "--anchors", s(&anchors), "--out", s(&map)])).unwrap();
    assert_eq!(info["ridge_lambda"], 0.0);
}

/// Fixture WordNet, a one-hot sense table over its synsets and a synthetic
/// backend whose mask state for a query is the planted logit vector.
struct Planted {
    dir: TempDir,
    onto: Ontology,
    ids: Vec<SynsetId>,
}

impl Planted {
    fn new() -> Planted {
        let dir = TempDir::new().unwrap();
        let (onto, _) = load_wordnet(&fixture_wordnet(), None).unwrap();
        let ids = onto.full_set();
        let n = ids.len();
        let mut table = EmbeddingTable::new("input", n, KeyOrder::Sorted).unwrap();
        for (i, id) in ids.iter().enumerate() {
            let mut v = vec![0.0; n];
            v[i] = 1.0;
            table.push(id.to_token(), v).unwrap();
        }
        save_table(&table, &dir.path().join("senses.txt")).unwrap();
        // a dog can run .
        let cn = json!({
            "sentence": "a dog can run .",
            "head_span": [2, 5],
            "head_synset": "dog.n.01",
            "tail_span": [10, 13],
            "tail_synset": "run.v.01",
            "relation": "CapableOf"
        });
        fs::write(dir.path().join("cn.jsonl"), format!("{cn}\n")).unwrap();
        Planted { dir, onto, ids }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn backend(&self, planted: &[(String, Vec<f64>)]) -> String {
        let spec = json!({
            "layers": 2,
            "dim": self.ids.len(),
            "vocab": ["a", "can", "is", "of", "type"],
            "embeddings": {"random": {"seed": 1}},
            "hidden": "bag_of_embeddings",
            "planted": planted.iter().map(|(k, v)| (k.clone(), json!(v))).collect::<serde_json::Map<String, Value>>(),
            "mask_fallback": "zero"
        });
        let p = self.path("backend.json");
        fs::write(&p, spec.to_string()).unwrap();
        format!("synthetic:{}", p.display())
    }

    fn index(&self, id: &str) -> usize {
        self.ids.iter().position(|x| x.to_string() == id).unwrap()
    }
}

#[test]
fn calibrate_then_extract_yields_the_planted_triples() {
    let f = Planted::new();
    let probe = f.path("probe.jsonl");
    let wn = fixture_wordnet();
    ok(&["build-probe", "--wordnet", s(&wn), "--conceptnet", s(&f.path("cn.jsonl")), "--out", s(&probe)]);
    let ds = ProbeDataset::load(&probe).unwrap();
    let queries = generate_queries(conceptnet_instances(&ds), &f.onto, Repr::Synset, GlossMode::default()).unwrap();
    assert_eq!(queries.len(), 1);
    assert_eq!(queries[0].head.to_string(), "wolf.n.01");

    // 0.9 of the mass on pack.n.01, the rest spread over the other 15
    let n = f.ids.len();
    let mut logits = vec![0.0; n];
    logits[f.index("pack.n.01")] = (9.0 * (n as f64 - 2.0)).ln();
    logits[f.index("wolf.n.01")] = 30.0;
    let backend = f.backend(&[(queries[0].assertion.clone(), logits)]);

    let common = ["--wordnet", s(&wn), "--probe", s(&probe), "--backend", &backend, "--senses"];
    let senses = f.path("senses.txt");
    let cal = f.path("cal.json");
    let mut args: Vec<&str> = vec!["calibrate"];
    args.extend(common);
    args.extend([s(&senses), "--out", s(&cal)]);
    ok(&args);
    let c: Value = serde_json::from_str(&fs::read_to_string(&cal).unwrap()).unwrap();
    // every gold sees a uniform distribution over the 16 non-head candidates
    assert!((c["threshold"].as_f64().unwrap() - 1.0 / 16.0).abs() < 1e-12);

    let run_extract = |name: &str, jobs: &str| {
        let out = f.path(name);
        let mut args: Vec<&str> = vec!["extract"];
        args.extend(common);
        args.extend([s(&senses), "--calibration", s(&cal), "--jobs", jobs, "--out", s(&out)]);
        let counts = ok(&args);
        (out, counts)
    };
    let (ckg, counts) = run_extract("ckg.jsonl", "1");
    assert_eq!(counts, "relation\ttriples\nCapableOf\t1\nTotal\t1\n");
    let lines: Vec<Value> = fs::read_to_string(&ckg)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), 1);
    assert_eq!(lines[0]["head"], "wolf.n.01");
    assert_eq!(lines[0]["relation"], "CapableOf");
    assert_eq!(lines[0]["tail"], "pack.n.01");
    assert!((lines[0]["score"].as_f64().unwrap() - 0.9).abs() < 1e-12);

    let (again, _) = run_extract("ckg2.jsonl", "3");
    assert_eq!(fs::read(&ckg).unwrap(), fs::read(&again).unwrap());
    assert_eq!(manifest(&ckg)["inputs"].as_array().unwrap().len(), 5);

    let mut args: Vec<&str> = vec!["extract"];
    args.extend(common);
    args.extend([s(&senses), "--out", s(&again)]);
    let out = senselab(&args);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("`threshold`"));
}

#[test]
fn evaluate_writes_a_metrics_table_and_report_renders_it() {
    let f = Planted::new();
    let probe = f.path("probe.jsonl");
    let wn = fixture_wordnet();
    ok(&["build-probe", "--wordnet", s(&wn), "--out", s(&probe)]);
    let backend = f.backend(&[]);
    let senses = f.path("senses.txt");
    let eval = |jobs: &str| {
        ok(&[
            "evaluate", "--wordnet", s(&wn), "--probe", s(&probe), "--backend", &backend, "--senses", s(&senses),
            "--subset", "full", "--repr", "lemma", "--gloss", "avg,pre", "--jobs", jobs,
        ])
    };
    let tsv = eval("1");
    assert_eq!(tsv, eval("4"));
    assert!(tsv.starts_with("group\tinstances\tP@1\tP@3\tP@10\tP@100\tP@1000\tMRR\n"), "{tsv}");
    let report = MetricsReport::from_tsv(&tsv).unwrap();
    assert_eq!(report.all().instances, 16);
    // uniform predictions: P@100 covers every candidate
    assert_eq!(report.all().precision[3], 1.0);

    let file = f.path("eval.tsv");
    fs::write(&file, &tsv).unwrap();
    let table = ok(&["report", s(&file), s(&counts_file(&probe))]);
    assert!(table.contains("MRR"));
    assert!(table.contains("  Hypernym"));
    assert!(table.contains("Core"));

    let knn = ok(&["knn-eval", "--wordnet", s(&wn), "--probe", s(&probe), "--senses", s(&senses), "--subset", "full", "--ks", "1,10"]);
    assert!(knn.starts_with("group\tinstances\tP@1\tP@10\tMRR\n"));
}

fn counts_file(probe: &Path) -> PathBuf {
    let mut s = probe.as_os_str().to_owned();
    s.push(".counts.json");
    PathBuf::from(s)
}

#[test]
fn inject_check_reports_atomic_tokens() {
    let f = Planted::new();
    let backend = f.backend(&[]);
    let v: Value = serde_json::from_str(&ok(&["inject-check", "--backend", &backend, "--senses", s(&f.path("senses.txt"))])).unwrap();
    assert_eq!(v["injected"], 17);
    assert_eq!(v["atomic"], 17);
    assert_eq!(v["vocab"].as_u64().unwrap(), v["base_vocab"].as_u64().unwrap() + 17);
}

#[test]
fn degradation_of_an_identical_table_is_zero() {
    let f = Planted::new();
    let probe = f.path("probe.jsonl");
    let wn = fixture_wordnet();
    ok(&["build-probe", "--wordnet", s(&wn), "--out", s(&probe)]);
    let senses = f.path("senses.txt");
    let out = f.path("deg.tsv");
    ok(&[
        "degradation", "--wordnet", s(&wn), "--probe", s(&probe), "--original", s(&senses), "--mapped", s(&senses),
        "--subset", "full", "--out", s(&out),
    ]);
    let text = fs::read_to_string(&out).unwrap();
    assert!(text.starts_with("metric\toriginal\tmapped\tdelta\n"));
    assert!(text.lines().skip(1).all(|l| l.ends_with("\t0.0")), "{text}");
    assert!(ok(&["report", s(&out)]).contains("MRR"));
}
