use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context};
use log::{info, warn};
use serde::{Deserialize, Serialize};

use senselab_core::embedding::{load_table, save_table, EmbeddingTable};
use senselab_core::extraction::{
    conceptnet_instances, extract_ckg, generate_queries, gold_scores, median, KnownTriples,
};
use senselab_core::lm::{inject_senses, with_pool, EnrichedModel, InputKind, MaskStatePath, MaskedLm};
use senselab_core::mapper::{
    apply_map, degradation_report, fit_linear_map, load_counts, select_anchors, AnchorOptions, AnchorSet, FitOptions,
    LinearMap, Solver,
};
use senselab_core::ontology::{load_wordnet, FrequencyTable, Ontology};
use senselab_core::probe::{
    ablation_grid, build_probe, counts_path, evaluate, knn_evaluate, render_count_rows, AblationGrid, CountRow,
    EvalConfig, GlossMode, MetricsReport, ProbeConfig, ProbeDataset, Repr,
};
use senselab_core::sense::{build_sense_table, load_annotations, Combine, LayerWeightProfile, SenseTableOptions};
use senselab_core::Error;

use crate::backend::BackendSpec;
use crate::config::{invalid, Settings};
use crate::manifest::write_manifests;

/// Collects the inputs a command read and the files it wrote, then emits the
/// primary result and the manifests.
struct Run<'a> {
    command: &'a str,
    cfg: &'a Settings,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
}

impl<'a> Run<'a> {
    fn new(command: &'a str, cfg: &'a Settings) -> Self {
        Run {
            command,
            cfg,
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    fn input(&mut self, p: &Path) -> PathBuf {
        self.inputs.push(p.to_path_buf());
        p.to_path_buf()
    }

    fn opt_input(&mut self, p: Option<PathBuf>) -> Option<PathBuf> {
        p.map(|p| self.input(&p))
    }

    fn wrote(&mut self, p: &Path) {
        self.outputs.push(p.to_path_buf());
    }

    /// Writes `text` to `--out` (with a manifest) or to standard output.
    fn emit(mut self, text: &str) -> anyhow::Result<()> {
        match self.cfg.out.clone() {
            Some(p) => {
                fs::write(&p, text).with_context(|| format!("writing {}", p.display()))?;
                self.wrote(&p);
            }
            None => print!("{text}"),
        }
        self.finish()
    }

    fn finish(self) -> anyhow::Result<()> {
        if !self.outputs.is_empty() {
            write_manifests(self.command, self.cfg, &self.inputs, &self.outputs)?;
        }
        Ok(())
    }
}

pub fn run(command: &str, cfg: &Settings, files: &[PathBuf]) -> anyhow::Result<()> {
    let jobs = cfg.jobs()?;
    cfg.check_inputs(command == "fit-map")?;
    if let Some(b) = &cfg.backend {
        BackendSpec::parse(b)?;
    }
    match command {
        "build-probe" => build_probe_cmd(cfg),
        "build-senses" => build_senses(cfg, jobs),
        "fit-map" => fit_map(cfg),
        "inject-check" => inject_check(cfg),
        "evaluate" => evaluate_cmd(cfg, jobs),
        "knn-eval" => knn_eval(cfg),
        "ablate" => ablate(cfg, jobs),
        "degradation" => degradation(cfg),
        "calibrate" => calibrate(cfg, jobs),
        "extract" => extract(cfg, jobs),
        "report" => report(cfg, files),
        other => bail!("unknown command {other}"),
    }
}

fn ontology(run: &mut Run) -> anyhow::Result<Ontology> {
    let dir = run.cfg.path("wordnet", &run.cfg.wordnet)?;
    let core = run.cfg.opt_path("core_list", &run.cfg.core_list)?;
    run.input(&dir);
    let core = run.opt_input(core);
    let (onto, report) = load_wordnet(&dir, core.as_deref())?;
    info!("wordnet: {} synsets, {} core", report.synsets, onto.core_len());
    if report.unmapped_core > 0 {
        warn!("{} core list entries did not resolve to a synset", report.unmapped_core);
    }
    Ok(onto)
}

fn probe(run: &mut Run) -> anyhow::Result<ProbeDataset> {
    let p = run.cfg.path("probe", &run.cfg.probe)?;
    run.input(&p);
    Ok(ProbeDataset::load(&p)?)
}

fn backend(run: &mut Run) -> anyhow::Result<Arc<dyn MaskedLm>> {
    let spec = BackendSpec::parse(run.cfg.require("backend", &run.cfg.backend)?)?;
    run.input(spec.path());
    spec.open()
}

fn mask_path(cfg: &Settings) -> anyhow::Result<MaskStatePath> {
    match cfg.require("mask_path", &cfg.mask_path)?.as_str() {
        "transformed" => Ok(MaskStatePath::Transformed),
        "raw" => Ok(MaskStatePath::Raw),
        s => Err(invalid("mask_path", format!("`{s}` is not one of transformed, raw"))),
    }
}

/// Loads a sense table and, when `--map` is given, maps it into the input space.
fn sense_table(run: &mut Run, key: &str, value: &Option<PathBuf>) -> anyhow::Result<EmbeddingTable> {
    let p = run.cfg.path(key, value)?;
    run.input(&p);
    let table = load_table(&p)?;
    match run.cfg.opt_path("map", &run.cfg.map)? {
        Some(m) => {
            run.input(&m);
            Ok(apply_map(&LinearMap::load(&m)?, &table)?)
        }
        None => Ok(table),
    }
}

fn model(run: &mut Run, backend: Arc<dyn MaskedLm>, key: &str, value: &Option<PathBuf>) -> anyhow::Result<EnrichedModel> {
    let table = sense_table(run, key, value)?;
    let path = mask_path(run.cfg)?;
    Ok(inject_senses(backend, table)?.with_mask_path(path))
}

fn build_probe_cmd(cfg: &Settings) -> anyhow::Result<()> {
    let mut run = Run::new("build-probe", cfg);
    let out = cfg.out()?;
    let wd = cfg.opt_path("wikidata", &cfg.wikidata)?;
    let cn = cfg.opt_path("conceptnet", &cfg.conceptnet)?;
    let freq_path = cfg.opt_path("frequencies", &cfg.frequencies)?;
    let onto = ontology(&mut run)?;
    let (wd, cn, freq_path) = (run.opt_input(wd), run.opt_input(cn), run.opt_input(freq_path));
    let freq = freq_path.as_deref().map(FrequencyTable::load).transpose()?.unwrap_or_default();
    let cap = *cfg.require("wordnet_cap", &cfg.wordnet_cap)?;
    let pc = ProbeConfig {
        wordnet_cap: (cap > 0).then_some(cap),
        seed: *cfg.require("seed", &cfg.seed)?,
        min_core_instances: *cfg.require("min_core_instances", &cfg.min_core_instances)?,
    };
    let (ds, report) = build_probe(&onto, wd.as_deref(), cn.as_deref(), &freq, &pc)?;
    for (what, n) in [
        ("records naming unknown synsets", report.unknown_synset),
        ("groups whose only gold was the head", report.head_only_gold),
        ("ConceptNet sentences that could not be aligned", report.unaligned),
    ] {
        if n > 0 {
            warn!("skipped {n} {what}");
        }
    }
    for r in &report.dropped_core_relations {
        info!("{r} has too few core instances; removed from Core");
    }
    ds.save(&out)?;
    run.wrote(&out);
    run.wrote(&counts_path(&out));
    print!("{}", ds.render_counts());
    run.finish()
}

fn build_senses(cfg: &Settings, jobs: Option<usize>) -> anyhow::Result<()> {
    let mut run = Run::new("build-senses", cfg);
    let out = cfg.out()?;
    let annotations = cfg.opt_path("annotations", &cfg.annotations)?;
    let profile = cfg.opt_path("profile", &cfg.profile)?;
    let onto = ontology(&mut run)?;
    let backend = backend(&mut run)?;
    let combine_s = cfg.require("combine", &cfg.combine)?;
    let combine = Combine::parse(combine_s)
        .ok_or_else(|| invalid("combine", format!("`{combine_s}` is not one of annot_only, gloss_only, average")))?;
    let occurrences = match run.opt_input(annotations) {
        Some(p) => load_annotations(&p)?,
        None if combine != Combine::GlossOnly => return Err(invalid("annotations", "required unless combine = gloss_only")),
        None => Vec::new(),
    };
    let profile = match run.opt_input(profile) {
        Some(p) => LayerWeightProfile::load(&p)?,
        None => LayerWeightProfile::uniform(backend.num_layers() + 1)?,
    };
    let opts = SenseTableOptions {
        combine,
        annotation_weight: *cfg.require("annotation_weight", &cfg.annotation_weight)?,
        ..SenseTableOptions::default()
    };
    let limit = backend.concurrency_limit();
    let (table, report) = with_pool(limit, jobs, || build_sense_table(&onto, &occurrences, &*backend, &profile, &opts))??;
    save_table(&table, &out)?;
    run.wrote(&out);
    println!("senses\t{}", table.len());
    println!("annotated\t{}", report.annotated);
    println!("gloss_only\t{}", report.gloss_only.len());
    println!("skipped\t{}", report.skipped.len());
    println!("unknown_annotated\t{}", report.unknown_annotated.len());
    run.finish()
}

fn fit_map(cfg: &Settings) -> anyhow::Result<()> {
    let mut run = Run::new("fit-map", cfg);
    let out = cfg.out()?;
    let ridge = *cfg.require("ridge", &cfg.ridge)?;
    let solver_s = cfg.require("solver", &cfg.solver)?;
    let solver: Solver = serde_json::from_value(serde_json::Value::String(solver_s.clone()))
        .map_err(|_| invalid("solver", format!("`{solver_s}` is not one of auto, normal, qr")))?;
    let opts = FitOptions {
        bias: *cfg.require("bias", &cfg.bias)?,
        solver,
    };
    let senses = cfg.opt_path("senses", &cfg.senses)?;
    if senses.is_some() != cfg.mapped.is_some() {
        return Err(invalid(if senses.is_some() { "mapped" } else { "senses" }, "senses and mapped go together"));
    }
    let anchors = match cfg.opt_path("anchors", &cfg.anchors)? {
        Some(p) => {
            run.input(&p);
            AnchorSet::load(&p)?
        }
        None => {
            let corpus_path = cfg.path("corpus", &cfg.corpus).map_err(|_| invalid("anchors", "give --anchors, or --corpus and --counts to select them"))?;
            let counts_path = cfg.path("counts", &cfg.counts)?;
            let profile = cfg.opt_path("profile", &cfg.profile)?;
            let backend = backend(&mut run)?;
            run.input(&corpus_path);
            run.input(&counts_path);
            let corpus: Vec<String> = fs::read_to_string(&corpus_path)?
                .lines()
                .filter(|l| !l.trim().is_empty())
                .map(String::from)
                .collect();
            let profile = match run.opt_input(profile) {
                Some(p) => LayerWeightProfile::load(&p)?,
                None => LayerWeightProfile::uniform(backend.num_layers() + 1)?,
            };
            let aopts = AnchorOptions {
                min_count: *cfg.require("min_count", &cfg.min_count)?,
                allow_underdetermined: ridge > 0.0,
                ..AnchorOptions::default()
            };
            let (anchors, report) = select_anchors(&*backend, &corpus, &load_counts(&counts_path)?, &profile, &aopts)
                .map_err(advise_ridge)?;
            info!("{} qualifying tokens, {} anchors", report.qualifying, anchors.len());
            let saved = sibling(&out, ".anchors.bin");
            anchors.save(&saved)?;
            run.wrote(&saved);
            anchors
        }
    };
    let map = fit_linear_map(&anchors, ridge, opts).map_err(advise_ridge)?;
    map.save(&out)?;
    run.wrote(&out);
    if let (Some(senses), Some(mapped)) = (senses, &cfg.mapped) {
        run.input(&senses);
        save_table(&apply_map(&map, &load_table(&senses)?)?, mapped)?;
        run.wrote(mapped);
    }
    println!("{}", serde_json::to_string_pretty(map.info())?);
    run.finish()
}

fn advise_ridge(e: Error) -> anyhow::Error {
    match e {
        Error::Singular => invalid(
            "ridge",
            "the anchors are rank deficient, so the least-squares map is not unique; rerun with --ridge set to a small positive value such as 1e-3",
        ),
        Error::TooFewAnchors { found, dim } => invalid(
            "ridge",
            format!("only {found} anchors for {dim} source dimensions; lower --min-count or rerun with a positive --ridge"),
        ),
        other => other.into(),
    }
}

fn sibling(p: &Path, suffix: &str) -> PathBuf {
    let mut s = p.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

#[derive(Serialize)]
struct InjectSummary {
    backend: String,
    base_vocab: usize,
    injected: usize,
    vocab: usize,
    input_dim: usize,
    atomic: usize,
}

fn inject_check(cfg: &Settings) -> anyhow::Result<()> {
    let mut run = Run::new("inject-check", cfg);
    let backend = backend(&mut run)?;
    let base = backend.vocab().len();
    let model = model(&mut run, backend, "senses", &cfg.senses)?;
    let senses = model.senses();
    let mut atomic = 0;
    for (i, key) in senses.keys().iter().enumerate() {
        let toks = model.tokenize(key)?;
        match toks.as_slice() {
            [t] if matches!(t.kind, InputKind::Injected(v) if v == senses.row(i)) => atomic += 1,
            _ => warn!("{key} does not tokenize to its injected vector"),
        }
    }
    let summary = InjectSummary {
        backend: model.backend().name().to_string(),
        base_vocab: base,
        injected: senses.len(),
        vocab: model.vocab_size(),
        input_dim: model.backend().input_dim(),
        atomic,
    };
    if atomic != senses.len() {
        bail!("{} of {} sense tokens are not atomic", senses.len() - atomic, senses.len());
    }
    run.emit(&(serde_json::to_string_pretty(&summary)? + "\n"))
}

fn eval_config(cfg: &Settings, jobs: Option<usize>) -> anyhow::Result<EvalConfig> {
    let subset = cfg.subset()?;
    let mut ec = EvalConfig::new(subset, cfg.repr()?, cfg.gloss()?);
    ec.ks = cfg.ks(subset)?;
    ec.jobs = jobs;
    Ok(ec)
}

fn report_errors(report: &MetricsReport) {
    if !report.errors.is_empty() {
        warn!("{} instances had no rankable gold and were excluded", report.errors.len());
    }
}

fn evaluate_cmd(cfg: &Settings, jobs: Option<usize>) -> anyhow::Result<()> {
    let mut run = Run::new("evaluate", cfg);
    let ec = eval_config(cfg, jobs)?;
    let ds = probe(&mut run)?;
    let onto = ontology(&mut run)?;
    let backend = backend(&mut run)?;
    let model = model(&mut run, backend, "senses", &cfg.senses)?;
    let report = evaluate(&model, &ds, &onto, &ec)?;
    report_errors(&report);
    run.emit(&report.to_tsv())
}

fn knn_eval(cfg: &Settings) -> anyhow::Result<()> {
    let mut run = Run::new("knn-eval", cfg);
    let subset = cfg.subset()?;
    let ks = cfg.ks(subset)?;
    let ds = probe(&mut run)?;
    let onto = ontology(&mut run)?;
    let table = sense_table(&mut run, "senses", &cfg.senses)?;
    let report = knn_evaluate(&table, &ds, &onto, subset, &ks)?;
    report_errors(&report);
    run.emit(&report.to_tsv())
}

const ABLATION_HEADER: &str = "repr\tgloss\tMRR";

fn ablation_tsv(grid: &AblationGrid) -> String {
    let mut out = format!("{ABLATION_HEADER}\n");
    for (r, g, mrr) in &grid.cells {
        out.push_str(&format!("{}\t{}\t{:.2}\n", r.as_str(), g.label(), mrr * 100.0));
    }
    out
}

fn parse_ablation(text: &str) -> anyhow::Result<AblationGrid> {
    let cells = text
        .lines()
        .skip(1)
        .filter(|l| !l.is_empty())
        .map(|l| {
            let c: Vec<&str> = l.split('\t').collect();
            match c.as_slice() {
                [r, g, v] => Ok((
                    Repr::parse(r).with_context(|| format!("bad repr `{r}`"))?,
                    GlossMode::parse(g).with_context(|| format!("bad gloss mode `{g}`"))?,
                    v.parse::<f64>()? / 100.0,
                )),
                _ => bail!("expected 3 columns: {l}"),
            }
        })
        .collect::<anyhow::Result<_>>()?;
    Ok(AblationGrid { cells })
}

fn ablate(cfg: &Settings, jobs: Option<usize>) -> anyhow::Result<()> {
    let mut run = Run::new("ablate", cfg);
    let ds = probe(&mut run)?;
    let onto = ontology(&mut run)?;
    let backend = backend(&mut run)?;
    let annotation = model(&mut run, backend.clone(), "senses", &cfg.senses)?;
    let averaged = match &cfg.senses_avg {
        Some(_) => model(&mut run, backend, "senses_avg", &cfg.senses_avg)?,
        None => {
            warn!("no senses_avg given; avg cells use the same table");
            annotation.clone()
        }
    };
    let grid = ablation_grid(&annotation, &averaged, &ds, &onto, jobs)?;
    run.emit(&ablation_tsv(&grid))
}

const DEGRADATION_HEADER: &str = "metric\toriginal\tmapped\tdelta";

fn degradation(cfg: &Settings) -> anyhow::Result<()> {
    let mut run = Run::new("degradation", cfg);
    let subset = cfg.subset()?;
    let original = cfg.path("original", &cfg.original)?;
    let mapped = cfg.path("mapped", &cfg.mapped)?;
    let ds = probe(&mut run)?;
    let onto = ontology(&mut run)?;
    run.input(&original);
    run.input(&mapped);
    let deg = degradation_report(&load_table(&original)?, &load_table(&mapped)?, &ds, &onto, subset)?;
    let mut out = format!("{DEGRADATION_HEADER}\n");
    for (name, a, b, d) in deg.summary() {
        out.push_str(&format!("{name}\t{:.2}\t{:.2}\t{d:.1}\n", a * 100.0, b * 100.0));
    }
    run.emit(&out)
}

#[derive(Debug, Serialize, Deserialize)]
struct Calibration {
    threshold: f64,
    gold_scores: usize,
    repr: String,
    gloss: String,
}

fn calibrate(cfg: &Settings, jobs: Option<usize>) -> anyhow::Result<()> {
    let mut run = Run::new("calibrate", cfg);
    let (repr, gloss) = (cfg.repr()?, cfg.gloss()?);
    let ds = probe(&mut run)?;
    let onto = ontology(&mut run)?;
    let backend = backend(&mut run)?;
    let model = model(&mut run, backend, "senses", &cfg.senses)?;
    let scores = gold_scores(&model, &ds, &onto, repr, gloss, jobs)?;
    let threshold = median(&scores).ok_or_else(|| anyhow::anyhow!("no gold tail received a score; threshold undefined"))?;
    let c = Calibration {
        threshold,
        gold_scores: scores.len(),
        repr: repr.as_str().into(),
        gloss: gloss.label().to_string(),
    };
    run.emit(&(serde_json::to_string_pretty(&c)? + "\n"))
}

fn extract(cfg: &Settings, jobs: Option<usize>) -> anyhow::Result<()> {
    let mut run = Run::new("extract", cfg);
    let out = cfg.out()?;
    let (repr, gloss) = (cfg.repr()?, cfg.gloss()?);
    let threshold = match (cfg.threshold, cfg.opt_path("calibration", &cfg.calibration)?) {
        (Some(t), _) => t,
        (None, Some(p)) => {
            run.input(&p);
            let c: Calibration = serde_json::from_str(&fs::read_to_string(&p)?)
                .map_err(|e| invalid("calibration", format!("{}: {e}", p.display())))?;
            c.threshold
        }
        (None, None) => return Err(invalid("threshold", "give --threshold or --calibration")),
    };
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(invalid("threshold", format!("{threshold} is outside (0, 1]")));
    }
    let ds = probe(&mut run)?;
    let onto = ontology(&mut run)?;
    let backend = backend(&mut run)?;
    let model = model(&mut run, backend, "senses", &cfg.senses)?;
    let queries = generate_queries(conceptnet_instances(&ds), &onto, repr, gloss)?;
    info!("{} co-hyponym queries", queries.len());
    let candidates = model.candidates(onto.full_set().iter())?;
    let mut known = KnownTriples::new();
    known.add_dataset(&ds);
    known.add_wordnet(&onto);
    let ckg = extract_ckg(&model, &queries, &candidates, threshold, &known, jobs)?;
    ckg.save_jsonl(&out)?;
    run.wrote(&out);
    print!("{}", ckg.counts_tsv());
    run.finish()
}

/// Renders saved metric files as aligned text tables.
fn report(cfg: &Settings, files: &[PathBuf]) -> anyhow::Result<()> {
    if files.is_empty() {
        return Err(invalid("files", "report needs at least one input file"));
    }
    let mut run = Run::new("report", cfg);
    let mut out = String::new();
    for f in files {
        if !f.exists() {
            return Err(invalid("files", format!("{} does not exist", f.display())));
        }
        run.input(f);
        let text = fs::read_to_string(f).with_context(|| format!("reading {}", f.display()))?;
        if files.len() > 1 {
            out.push_str(&format!("== {}\n", f.display()));
        }
        out.push_str(&render_file(&text).with_context(|| format!("rendering {}", f.display()))?);
        out.push('\n');
    }
    let out = out.trim_end_matches('\n').to_string() + "\n";
    run.emit(&out)
}

fn render_file(text: &str) -> anyhow::Result<String> {
    let header = text.lines().next().unwrap_or("");
    if header.starts_with("group\tinstances") {
        Ok(MetricsReport::from_tsv(text)?.render_table())
    } else if header == ABLATION_HEADER {
        Ok(parse_ablation(text)?.render_table())
    } else if header == DEGRADATION_HEADER {
        let mut out = format!("{:<10}{:>10}{:>10}{:>10}\n", "", "original", "mapped", "delta");
        for l in text.lines().skip(1).filter(|l| !l.is_empty()) {
            let c: Vec<&str> = l.split('\t').collect();
            if c.len() != 4 {
                bail!("expected 4 columns: {l}");
            }
            out.push_str(&format!("{:<10}{:>10}{:>10}{:>9}%\n", c[0], c[1], c[2], c[3]));
        }
        Ok(out)
    } else if header == "relation\ttriples" {
        let rows: Vec<(&str, &str)> = text.lines().skip(1).filter_map(|l| l.split_once('\t')).collect();
        let width = rows.iter().map(|r| r.0.len()).max().unwrap_or(8) + 2;
        Ok(rows.iter().map(|(r, n)| format!("{r:<width$}{n:>8}\n")).collect())
    } else if header.trim_start().starts_with('[') {
        let rows: Vec<CountRow> = serde_json::from_str(text).context("not a probe counts file")?;
        Ok(render_count_rows(&rows))
    } else {
        bail!("unrecognized file format")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ablation_tsv_round_trips() {
        let grid = AblationGrid {
            cells: Repr::ALL
                .iter()
                .flat_map(|r| GlossMode::ALL.iter().map(move |g| (*r, *g, 0.25)))
                .collect(),
        };
        let back = parse_ablation(&ablation_tsv(&grid)).unwrap();
        assert_eq!(back, grid);
        assert!(render_file(&ablation_tsv(&grid)).unwrap().contains("25.00"));
    }

    #[test]
    fn unknown_report_input_is_an_error() {
        assert!(render_file("what\tis\tthis\n").is_err());
    }
}
