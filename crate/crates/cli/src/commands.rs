use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use log::{info, warn};
use nsdecode::corpus::{load_corpus, Corpus};
use nsdecode::data::{load_manifest, make_splits, write_container, Condition, DatasetManifest};
use nsdecode::eval::{scenario_report, ReportOptions};
use nsdecode::hierarchy::{train_bundle, ClassifierBundle, Scheme};
use nsdecode::preprocess::preprocess_pipeline;
use nsdecode::synth::{generate_dataset, write_dataset};
use nsdecode::warp::{class_runs, export_chunks, profiles_from_runs, topo_map_data, TargetLength, PROFILE_CLASSES};
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::{Cli, Cmd, UsageError};

pub fn run(cli: &Cli) -> anyhow::Result<()> {
    let path = cli.config.as_ref().ok_or_else(|| UsageError("--config is required".into()))?;
    let cfg = ExperimentConfig::load(path)?;
    let threads = if cli.deterministic { Some(1) } else { cli.jobs };
    if let Some(n) = threads {
        if n == 0 {
            return Err(UsageError("--jobs must be at least 1".into()).into());
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("configuring worker pool")?;
    }
    match &cli.cmd {
        Cmd::Synth { out } => synth(&cfg, out.as_deref()),
        Cmd::Preprocess { skip_unchanged } => preprocess(&cfg, *skip_unchanged),
        Cmd::Train { scheme, scenario, fold, condition } => train(&cfg, *scheme, *scenario, fold, *condition),
        Cmd::Decode { bundle, segment } => decode(&cfg, bundle, segment),
        Cmd::Eval { published } => eval(&cfg, *published),
        Cmd::Warp { bundle, condition, length, chunk, svg } => {
            warp(&cfg, bundle.as_deref(), *condition, *length, *chunk, *svg)
        }
    }
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> anyhow::Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn synth(cfg: &ExperimentConfig, out: Option<&Path>) -> anyhow::Result<()> {
    let s = &cfg.synth;
    s.config.validate().map_err(|e| UsageError(e.to_string()))?;
    let dir = match out {
        Some(d) => d.to_path_buf(),
        None => cfg.paths.manifest.parent().map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from(".")),
    };
    let data = generate_dataset(&s.config, s.n_subjects, s.n_sessions, s.n_trials)?;
    let manifest = write_dataset(&data, &dir)?;
    info!(
        "wrote {} recordings and {} segments to {}",
        manifest.recordings.len(),
        manifest.segments.len(),
        dir.display()
    );
    Ok(())
}

fn load(cfg: &ExperimentConfig) -> anyhow::Result<DatasetManifest> {
    cfg.require_manifest()?;
    Ok(load_manifest(&cfg.paths.manifest)?)
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn preprocess(cfg: &ExperimentConfig, skip_unchanged: bool) -> anyhow::Result<()> {
    let manifest = load(cfg)?;
    let dir = cfg.paths.output.join("cleaned");
    fs::create_dir_all(&dir)?;
    let settings = serde_json::to_vec(&cfg.preprocess)?;
    manifest.recordings.par_iter().try_for_each(|entry| -> anyhow::Result<()> {
        let input = fs::read(manifest.resolve(&entry.path))
            .map_err(|_| nsdecode::Error::MissingRecordingFile(manifest.resolve(&entry.path)))?;
        let mut h = Sha256::new();
        h.update(&input);
        h.update(&settings);
        let digest = hex(&h.finalize());
        let out = dir.join(format!("{}.eegr", entry.id));
        let stamp = dir.join(format!("{}.sha256", entry.id));
        if skip_unchanged && out.is_file() && fs::read_to_string(&stamp).is_ok_and(|s| s.trim() == digest) {
            info!("{}: unchanged, skipped", entry.id);
            return Ok(());
        }
        let rec = manifest.load_recording(&entry.id)?;
        let (clean, log) = preprocess_pipeline(&rec, &cfg.preprocess)?;
        write_container(&out, clean.sampling_rate_hz, &clean.channel_names, &clean.samples)?;
        write(&dir.join(format!("{}.stages.json", entry.id)), serde_json::to_string_pretty(&log)?)?;
        write(&stamp, format!("{digest}\n"))?;
        Ok(())
    })
}

fn corpus(cfg: &ExperimentConfig, manifest: &DatasetManifest) -> anyhow::Result<Corpus> {
    let c = load_corpus(manifest, &cfg.corpus_options())?;
    if !c.rejected.is_empty() {
        warn!("{} segments rejected by amplitude threshold", c.rejected.len());
    }
    Ok(c)
}

fn train(
    cfg: &ExperimentConfig,
    scheme: Scheme,
    scenario: nsdecode::data::Scenario,
    fold: &str,
    condition: Condition,
) -> anyhow::Result<()> {
    let manifest = load(cfg)?;
    let corpus = corpus(cfg, &manifest)?;
    let split = make_splits(&manifest.with_condition(condition), scenario, cfg.ratio, cfg.seed)?;
    let f = match fold.parse::<usize>() {
        Ok(i) => split.folds.get(i),
        Err(_) => split.folds.iter().find(|f| f.name == fold),
    }
    .ok_or_else(|| UsageError(format!("no fold {fold} among {} folds", split.folds.len())))?;
    let bundle = train_bundle(&corpus, &f.train, scheme, &cfg.hyper)?;
    let dir = bundle_dir(cfg, condition, scenario, &f.name, scheme);
    bundle.save(&dir)?;
    write(&dir.join("fold.json"), serde_json::to_string_pretty(f)?)?;
    info!("{scheme} bundle for fold {} written to {}", f.name, dir.display());
    Ok(())
}

fn bundle_dir(
    cfg: &ExperimentConfig,
    condition: Condition,
    scenario: nsdecode::data::Scenario,
    fold: &str,
    scheme: Scheme,
) -> PathBuf {
    cfg.paths
        .output
        .join("bundles")
        .join(format!("{condition:?}"))
        .join(scenario.to_string())
        .join(fold.replace(['/', '\\'], "_"))
        .join(scheme.name())
}

fn decode(cfg: &ExperimentConfig, bundle_path: &Path, segments: &[String]) -> anyhow::Result<()> {
    let manifest = load(cfg)?;
    let bundle = ClassifierBundle::load(bundle_path)?;
    let corpus = corpus(cfg, &manifest)?;
    let ids: BTreeSet<String> = if segments.is_empty() {
        corpus.items.keys().cloned().collect()
    } else {
        for s in segments {
            corpus.get(s)?;
        }
        segments.iter().cloned().collect()
    };
    let dir = cfg.paths.output.join("decode").join(bundle.scheme.name());
    let results: Vec<(String, nsdecode::Result<nsdecode::hierarchy::Classification>)> = corpus
        .select(&ids)
        .par_iter()
        .map(|item| (item.segment.id.clone(), bundle.classify(&item.features)))
        .collect();
    let mut summary = String::from("segment_id\treference_phrase\tpredicted_phrase\tlog_likelihood\tunits\n");
    for (id, r) in results {
        let reference = &corpus.get(&id)?.segment.phrase_id;
        match r {
            Ok(c) => {
                let score = c.scores.get(&c.phrase_id).copied().unwrap_or(f64::NAN);
                writeln!(summary, "{id}\t{reference}\t{}\t{score}\t{}", c.phrase_id, c.units.join(" "))?;
                write(&dir.join("paths").join(format!("{id}.tsv")), c.hypothesis.to_columnar())?;
                if let Some(ad) = &c.ad {
                    write(&dir.join("paths").join(format!("{id}.ad.tsv")), ad.to_columnar())?;
                }
            }
            Err(nsdecode::Error::NoSurvivingPath) => {
                writeln!(summary, "{id}\t{reference}\t\t\t")?;
                warn!("{id}: no surviving path");
            }
            Err(e) => return Err(e.into()),
        }
    }
    write(&dir.join("summary.tsv"), summary)
}

fn eval(cfg: &ExperimentConfig, annotate: bool) -> anyhow::Result<()> {
    let manifest = load(cfg)?;
    let corpus = corpus(cfg, &manifest)?;
    let opts = ReportOptions {
        schemes: cfg.schemes.clone(),
        scenarios: cfg.scenarios.clone(),
        conditions: cfg.conditions.clone(),
        ratio: cfg.ratio,
        seed: cfg.seed,
        hyper: cfg.hyper.clone(),
    };
    let report = scenario_report(&manifest, &corpus, &opts)?;
    let dir = cfg.paths.output.join("eval");
    write(&dir.join("report.tsv"), report.to_columnar())?;
    write(&dir.join("report.json"), serde_json::to_string_pretty(&report)?)?;
    let table = report.to_table(annotate);
    write(&dir.join("table.txt"), &table)?;
    print!("{table}");
    if report.has_failures() {
        anyhow::bail!("some report cells failed; see {}", dir.join("report.tsv").display());
    }
    Ok(())
}

fn warp(
    cfg: &ExperimentConfig,
    bundle_path: Option<&Path>,
    condition: Condition,
    length: Option<usize>,
    chunk: usize,
    svg: bool,
) -> anyhow::Result<()> {
    let manifest = load(cfg)?.with_condition(condition);
    let corpus = corpus(cfg, &manifest)?;
    let bundle = match bundle_path {
        Some(p) => ClassifierBundle::load(p)?,
        None => {
            let ids: BTreeSet<String> = corpus.items.keys().cloned().collect();
            train_bundle(&corpus, &ids, Scheme::Hc, &cfg.hyper)?
        }
    };
    if bundle.scheme != Scheme::Hc {
        return Err(nsdecode::Error::SchemeMismatch { expected: "HC".into(), found: bundle.scheme.to_string() }.into());
    }
    let items: Vec<_> = corpus.items.values().collect();
    let target = length.map_or(TargetLength::Auto, TargetLength::Fixed);
    let runs = class_runs(&items, &bundle)?;
    let profiles = profiles_from_runs(&runs, target)?;
    let dir = cfg.paths.output.join("warp");
    write(&dir.join("profiles.tsv"), profiles.to_columnar())?;
    write(&dir.join("warped.json"), serde_json::to_string_pretty(&profiles.warped)?)?;
    write(&dir.join("notes.txt"), profiles.notes.iter().map(|n| format!("{n}\n")).collect::<String>())?;
    for n in &profiles.notes {
        warn!("{n}");
    }
    if svg {
        write(&dir.join("profiles.svg"), profiles.to_svg())?;
    }

    // channel maps, grouped by channel layout
    let mut layouts: BTreeMap<Vec<String>, Vec<&nsdecode::corpus::CorpusItem>> = BTreeMap::new();
    for item in &items {
        let entry = manifest
            .recording_entry(&item.segment.recording_id)
            .ok_or_else(|| nsdecode::Error::MalformedManifest(format!("no recording for {}", item.segment.id)))?;
        layouts.entry(entry.channel_names.clone()).or_default().push(item);
    }
    for (k, (channels, group)) in layouts.iter().enumerate() {
        for class in &PROFILE_CLASSES {
            match topo_map_data(group, &bundle, class, channels) {
                Ok(t) => write(&dir.join(format!("topo-{k}-{class}.tsv")), t.to_columnar())?,
                Err(nsdecode::Error::EmptyClass(c)) => warn!("channel map for {c} skipped: no decoded frames"),
                Err(e) => return Err(e.into()),
            }
        }
    }

    let signals = cleaned_segments(cfg, &manifest, &corpus)?;
    let spec = corpus.frame_spec;
    write(&dir.join("chunks.tsv"), export_chunks(&runs, &signals, spec.hop, spec.window_len, chunk)?)
}

fn cleaned_segments(
    cfg: &ExperimentConfig,
    manifest: &DatasetManifest,
    corpus: &Corpus,
) -> anyhow::Result<BTreeMap<String, ndarray::Array2<f64>>> {
    let per_rec: Vec<Vec<(String, ndarray::Array2<f64>)>> = manifest
        .recordings
        .par_iter()
        .map(|entry| -> anyhow::Result<_> {
            let (rec, _) = preprocess_pipeline(&manifest.load_recording(&entry.id)?, &cfg.preprocess)?;
            Ok(corpus
                .items
                .values()
                .filter(|i| i.segment.recording_id == rec.id)
                .map(|i| (i.segment.id.clone(), rec.slice(&i.segment)))
                .collect())
        })
        .collect::<anyhow::Result<_>>()?;
    Ok(per_rec.into_iter().flatten().collect())
}
