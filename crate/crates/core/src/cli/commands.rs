use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use anyhow::Context;
use log::{info, warn};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::{CliError, CliResult, CommonArgs, DetectArgs, EncodeArgs, EvalArgs, PipelineConfig, SplitArgs, SplitChoice, SynthArgs, TrainArgs};
use crate::capture::macmap::label_for;
use crate::capture::{parse_pcap, split_sessions, write_pcap, MacAddr, MacMap, SessionKey, SplitStats, UnmappedPolicy};
use crate::classify::{
    confusion_of, model_digest, run_experiment1, run_experiment2, verdict_from_posterior, DatasetBundle, Decision,
    ExperimentConfig, OpenSetTask, ThresholdProfile, UNKNOWN_SUFFIX,
};
use crate::dataset::{filter_devices, load_dataset, save_dataset, split, DatasetManifest, LabeledDataset, SplitPolicy};
use crate::fingerprint::{extract_payload, to_image, Deduper, Origin, PayloadFingerprint};
use crate::nn::{predict, EpochStats, MlpModel};
use crate::report::{emit_report, ConfusionMatrix, ExperimentReport, Seeds};
use crate::synth::{self, SynthConfig};

pub const SESSIONS_FILE: &str = "sessions.json";
pub const MODEL_FILE: &str = "model.json";
pub const PROFILE_FILE: &str = "profile.json";
pub const RUN_FILE: &str = "run.json";
pub const SUMMARY_FILE: &str = "summary.json";
pub const VERDICTS_FILE: &str = "verdicts.json";
pub const DETECT_SUMMARY: &str = "detect.json";
const SWEEP_CSV: &str = "threshold_sweep.csv";
const SCHEMA_VERSION: u32 = 1;
const BUILTIN_MAP: &str = "built-in";

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    let text = serde_json::to_string_pretty(value).context("serializing JSON")?;
    fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn read_json<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    if !path.exists() {
        return Err(CliError::usage(format!("{} does not exist", path.display())));
    }
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?)
}

fn require_dir(path: &Path) -> CliResult<()> {
    if path.is_dir() {
        Ok(())
    } else {
        Err(CliError::usage(format!("{} is not a directory", path.display())))
    }
}

fn load_config(common: &CommonArgs) -> CliResult<PipelineConfig> {
    let mut cfg = PipelineConfig::load_or_default(common.config.as_deref())?;
    if let Some(seed) = common.seed {
        cfg.set_seed(seed);
    }
    Ok(cfg)
}

/// Lowercase ASCII name safe for a directory component.
fn slug(label: &str) -> String {
    let mut out = String::new();
    for c in label.chars() {
        if c.is_ascii_alphanumeric() {
            out.push(c.to_ascii_lowercase());
        } else if !out.ends_with('-') {
            out.push('-');
        }
    }
    out.trim_matches('-').to_string()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceSummary {
    pub path: String,
    pub sessions: usize,
    pub stats: SplitStats,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionEntry {
    pub id: String,
    /// Index into `SessionStore::sources`.
    pub source: usize,
    pub key: SessionKey,
    pub initiator_mac: MacAddr,
    pub label: String,
    pub packets: usize,
    pub payload_bytes: usize,
    /// Relative path of the concatenated payload; absent when empty.
    pub payload_file: Option<String>,
    pub pcap_file: Option<String>,
}

/// Index of a `split` output directory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionStore {
    pub schema_version: u32,
    pub mac_map: String,
    pub unmapped_label: String,
    pub sources: Vec<SourceSummary>,
    pub label_counts: BTreeMap<String, usize>,
    pub sessions: Vec<SessionEntry>,
}

pub fn cmd_split(a: &SplitArgs) -> CliResult<()> {
    let mut cfg = load_config(&a.common)?;
    if let Some(m) = &a.mac_map {
        cfg.mac_map = Some(m.clone());
    }
    cfg.collapse_non_iot |= a.collapse_non_iot;
    cfg.validate()?;
    for p in &a.pcaps {
        if !p.is_file() {
            return Err(CliError::usage(format!("capture {} does not exist", p.display())));
        }
    }
    let map = match &cfg.mac_map {
        Some(p) => MacMap::from_json(&fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?)?,
        None => MacMap::iot_trace(),
    };
    let policy = if cfg.collapse_non_iot { UnmappedPolicy::CollapseNonIot } else { UnmappedPolicy::Unmapped };

    let mut store = SessionStore {
        schema_version: SCHEMA_VERSION,
        mac_map: cfg.mac_map.as_ref().map_or_else(|| BUILTIN_MAP.to_string(), |p| p.display().to_string()),
        unmapped_label: policy.label().to_string(),
        sources: Vec::new(),
        label_counts: BTreeMap::new(),
        sessions: Vec::new(),
    };
    for (fi, path) in a.pcaps.iter().enumerate() {
        let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        let packets = parse_pcap(&bytes).with_context(|| format!("parsing {}", path.display()))?;
        let split = split_sessions(&packets);
        info!(
            "{}: {} packets, {} TCP sessions, {} UDP flows dropped",
            path.display(),
            split.stats.total_packets,
            split.sessions.len(),
            split.stats.udp_flows
        );
        for (si, s) in split.sessions.iter().enumerate() {
            let id = format!("{fi:03}-{si:06}");
            let label = label_for(&s.initiator_mac, &map, policy).to_string();
            let payload = extract_payload(s);
            let payload_file = if payload.is_empty() {
                None
            } else {
                let rel = format!("payloads/{id}.bin");
                write_file(&a.out.join(&rel), &payload)?;
                Some(rel)
            };
            let pcap_file = if a.session_pcaps {
                let rel = format!("pcaps/{}/{id}.pcap", slug(&label));
                let frames = s.packets.iter().map(|p| {
                    let raw = &packets[p.capture_order as usize];
                    (raw.timestamp, raw.link_bytes.as_slice())
                });
                write_file(&a.out.join(&rel), &write_pcap(frames))?;
                Some(rel)
            } else {
                None
            };
            *store.label_counts.entry(label.clone()).or_default() += 1;
            store.sessions.push(SessionEntry {
                id,
                source: fi,
                key: s.key,
                initiator_mac: s.initiator_mac,
                label,
                packets: s.packets.len(),
                payload_bytes: payload.len(),
                payload_file,
                pcap_file,
            });
        }
        store.sources.push(SourceSummary {
            path: path.display().to_string(),
            sessions: split.sessions.len(),
            stats: split.stats,
        });
    }
    write_json(&a.out.join(SESSIONS_FILE), &store)
}

fn write_file(path: &Path, data: &[u8]) -> CliResult<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    fs::write(path, data).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

pub fn cmd_encode(a: &EncodeArgs) -> CliResult<()> {
    let mut cfg = load_config(&a.common)?;
    if a.min_sessions.is_some() {
        cfg.min_sessions = a.min_sessions;
    }
    if a.label_order.is_some() {
        cfg.label_order.clone_from(&a.label_order);
    }
    cfg.validate()?;
    require_dir(&a.sessions)?;
    let store: SessionStore = read_json(&a.sessions.join(SESSIONS_FILE))?;

    let dropped_labels: BTreeSet<&String> = a.drop_labels.iter().collect();
    let mut groups: BTreeMap<String, Vec<PayloadFingerprint>> = BTreeMap::new();
    let mut dedupers: BTreeMap<String, Deduper> = BTreeMap::new();
    let mut dropped: BTreeMap<String, usize> = BTreeMap::new();
    for e in &store.sessions {
        if dropped_labels.contains(&e.label) {
            continue;
        }
        let source = store
            .sources
            .get(e.source)
            .ok_or_else(|| CliError::data(format!("session {} names unknown source {}", e.id, e.source)))?;
        let payload = match &e.payload_file {
            Some(rel) => {
                let p = a.sessions.join(rel);
                fs::read(&p).with_context(|| format!("reading {}", p.display()))?
            }
            None => Vec::new(),
        };
        let admitted = !payload.is_empty() && dedupers.entry(e.label.clone()).or_default().admit(&payload);
        if !admitted {
            *dropped.entry(e.label.clone()).or_default() += 1;
            continue;
        }
        let fp = PayloadFingerprint::normalize(&payload)
            .expect("payload is non-empty")
            .with_origin(Origin { file_id: source.path.clone(), key: e.key });
        groups.entry(e.label.clone()).or_default().push(fp);
    }

    let counts: BTreeMap<String, usize> = groups.iter().map(|(k, v)| (k.clone(), v.len())).collect();
    let mut excluded = BTreeMap::new();
    if let Some(min) = cfg.min_sessions {
        let filter = filter_devices(&counts, min);
        for label in filter.excluded.keys() {
            info!("dropping {label:?}: {} sessions is not above {min}", filter.excluded[label]);
        }
        groups.retain(|k, _| filter.retained.contains(k));
        excluded = filter.excluded;
    }
    if groups.is_empty() {
        return Err(CliError::data("no fingerprints left to encode"));
    }
    if let Some(order) = &cfg.label_order {
        if let Some(missing) = groups.keys().find(|k| !order.contains(k)) {
            return Err(CliError::usage(format!("label order does not list {missing:?}")));
        }
    }
    let ds = LabeledDataset::from_groups(groups, cfg.label_order.as_deref())?;
    let mut manifest = DatasetManifest::describe(&ds);
    manifest.source_files = store.sources.iter().map(|s| s.path.clone()).collect();
    manifest.excluded_devices = excluded;
    manifest.dropped_payloads = dropped;
    save_dataset(&a.out, &ds, &manifest)?;
    info!("encoded {} fingerprints in {} classes", ds.len(), ds.class_count());

    if a.images {
        let mut next = vec![0usize; ds.class_count()];
        for (fp, l) in ds.iter() {
            let img = to_image(fp);
            let base = a.out.join("images").join(format!("{l:02}-{}", slug(&ds.label_names()[l])));
            let stem = format!("{:06}", next[l]);
            next[l] += 1;
            write_file(&base.join(format!("{stem}.pgm")), &img.encode_pgm())?;
            if a.png {
                let png = img.encode_png().context("encoding PNG")?;
                write_file(&base.join(format!("{stem}.png")), &png)?;
            }
        }
    }
    Ok(())
}

/// A trained model plus what is needed to reproduce its data split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SavedModel {
    pub schema_version: u32,
    /// Class names of the model outputs, in order.
    pub label_names: Vec<String>,
    pub split: SplitPolicy,
    pub seeds: Seeds,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub excluded_label: Option<String>,
    pub epochs: usize,
    pub experiment: ExperimentConfig,
    pub model: MlpModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct RunManifest {
    schema_version: u32,
    command: String,
    data: String,
    label_names: Vec<String>,
    split_sizes: [usize; 3],
    config: PipelineConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct HoldOutSummary {
    excluded_label: String,
    directory: String,
    threshold: f64,
    epochs: usize,
    accuracy: f64,
    unknown_recall: f64,
    shared_with_training: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct HoldOutTable {
    mean_accuracy: f64,
    runs: Vec<HoldOutSummary>,
}

/// Drop the rows (and class names) listed in `labels`.
fn without_labels(ds: &LabeledDataset, labels: &[String]) -> CliResult<LabeledDataset> {
    let keep: Vec<usize> = (0..ds.class_count()).filter(|&c| !labels.contains(&ds.label_names()[c])).collect();
    let names = keep.iter().map(|&c| ds.label_names()[c].clone()).collect();
    Ok(ds.relabel(names, |l| keep.iter().position(|&c| c == l))?)
}

/// Re-index `ds` onto `names`, dropping rows whose label is not listed.
fn onto_labels(ds: &LabeledDataset, names: &[String]) -> CliResult<(LabeledDataset, usize)> {
    let map: Vec<Option<usize>> = ds.label_names().iter().map(|n| names.iter().position(|m| m == n)).collect();
    for n in names {
        if ds.label_index(n).is_none() {
            warn!("dataset has no class {n:?}");
        }
    }
    let out = ds.relabel(names.to_vec(), |l| map[l])?;
    let skipped = ds.len() - out.len();
    Ok((out, skipped))
}

pub fn cmd_train(a: &TrainArgs) -> CliResult<()> {
    let mut cfg = load_config(&a.common)?;
    if let Some(h) = a.hidden {
        cfg.hidden_width = h;
    }
    if let Some(e) = a.epochs {
        cfg.training.epochs = e;
    }
    if a.selection_epochs.is_some() {
        cfg.selection_epochs = a.selection_epochs;
    }
    if let Some(b) = a.batch_size {
        cfg.training.batch_size = b;
    }
    if let Some(s) = a.threshold_grid_step {
        cfg.threshold_grid_step = s;
    }
    cfg.strict |= a.strict;
    cfg.validate()?;
    require_dir(&a.data)?;

    let (ds, _) = load_dataset(&a.data)?;
    let (tr, va, te) = split(&ds, &cfg.split)?;
    let sizes = [tr.len(), va.len(), te.len()];
    info!("split {} rows into {} / {} / {}", ds.len(), sizes[0], sizes[1], sizes[2]);
    let bundle = DatasetBundle::new(tr, va, te)?;
    let exp = cfg.experiment();
    let seeds = Seeds { split: cfg.split.rng_seed, init: cfg.init.seed, shuffle: cfg.training.shuffle_seed };
    let saved = |label_names: Vec<String>, excluded_label: Option<String>, epochs: usize, model: MlpModel| SavedModel {
        schema_version: SCHEMA_VERSION,
        label_names,
        split: cfg.split,
        seeds,
        excluded_label,
        epochs,
        experiment: exp,
        model,
    };

    match a.exclude.as_deref() {
        None => {
            let out = run_experiment1(&bundle, &exp)?;
            info!("test accuracy {:.4}", out.confusion.trace() as f64 / out.confusion.total().max(1) as f64);
            let report = ExperimentReport::build("identification", out.confusion, out.epochs, seeds, out.history)?;
            write_json(&a.out.join(MODEL_FILE), &saved(bundle.label_names().to_vec(), None, out.epochs, out.model))?;
            emit_report(&report, &a.out, None)?;
        }
        Some(which) => {
            let iot = DatasetBundle::new(
                without_labels(&bundle.train, &cfg.non_iot_labels)?,
                without_labels(&bundle.validation, &cfg.non_iot_labels)?,
                without_labels(&bundle.test, &cfg.non_iot_labels)?,
            )?;
            let all = which == "all";
            let targets: Vec<String> = if all {
                iot.label_names().to_vec()
            } else if iot.train.label_index(which).is_some() {
                vec![which.to_string()]
            } else {
                return Err(CliError::usage(format!("{which:?} is not an IoT class of the dataset")));
            };
            let mut runs = Vec::new();
            for (i, label) in targets.iter().enumerate() {
                let dir_name = if all { format!("{i:02}-{}", slug(label)) } else { String::new() };
                let dir = if all { a.out.join(&dir_name) } else { a.out.clone() };
                let out = run_experiment2(&iot, label, &exp)?;
                let mut report = ExperimentReport::build("unknown-detection", out.confusion, out.profile.epochs, seeds, out.history)?;
                report.excluded_label = Some(label.clone());
                report.threshold = Some(out.profile.threshold);
                let excluded = iot.train.label_index(label).expect("label checked above");
                let unknown_recall = report.per_class[excluded].metrics.recall;
                write_json(
                    &dir.join(MODEL_FILE),
                    &saved(out.profile.known_labels.clone(), Some(label.clone()), out.profile.epochs, out.model),
                )?;
                write_json(&dir.join(PROFILE_FILE), &out.profile)?;
                emit_report(&report, &dir, None)?;
                let mut sweep = String::from("threshold,accuracy\n");
                for g in &out.search.sweep {
                    sweep.push_str(&format!("{},{}\n", g.threshold, g.accuracy));
                }
                write_file(&dir.join(SWEEP_CSV), sweep.as_bytes())?;
                runs.push(HoldOutSummary {
                    excluded_label: label.clone(),
                    directory: dir_name,
                    threshold: out.profile.threshold,
                    epochs: out.profile.epochs,
                    accuracy: report.accuracy,
                    unknown_recall,
                    shared_with_training: out.shared_with_training,
                });
            }
            if all {
                let mean_accuracy = runs.iter().map(|r| r.accuracy).sum::<f64>() / runs.len() as f64;
                info!("mean accuracy over {} held-out classes: {mean_accuracy:.4}", runs.len());
                write_json(&a.out.join(SUMMARY_FILE), &HoldOutTable { mean_accuracy, runs })?;
            }
        }
    }
    let run = RunManifest {
        schema_version: SCHEMA_VERSION,
        command: match &a.exclude {
            None => "train".into(),
            Some(x) => format!("train --exclude {x}"),
        },
        data: a.data.display().to_string(),
        label_names: ds.label_names().to_vec(),
        split_sizes: sizes,
        config: cfg,
    };
    write_json(&a.out.join(RUN_FILE), &run)
}

fn load_model(path: &Path) -> CliResult<SavedModel> {
    let saved: SavedModel = read_json(path)?;
    if saved.model.class_count() != saved.label_names.len() {
        return Err(CliError::data(format!(
            "{}: model has {} outputs but {} label names",
            path.display(),
            saved.model.class_count(),
            saved.label_names.len()
        )));
    }
    Ok(saved)
}

/// The requested part of `ds`, re-split with the model's split policy.
fn select_part(ds: LabeledDataset, saved: &SavedModel, which: SplitChoice) -> CliResult<LabeledDataset> {
    if which == SplitChoice::All {
        return Ok(ds);
    }
    let (tr, va, te) = split(&ds, &saved.split)?;
    Ok(match which {
        SplitChoice::Train => tr,
        SplitChoice::Validation => va,
        _ => te,
    })
}

pub fn cmd_eval(a: &EvalArgs) -> CliResult<()> {
    require_dir(&a.data)?;
    let saved = load_model(&a.model)?;
    let (ds, _) = load_dataset(&a.data)?;
    let part = select_part(ds, &saved, a.split)?;
    let (part, skipped) = onto_labels(&part, &saved.label_names)?;
    if skipped > 0 {
        info!("skipped {skipped} rows whose class the model does not know");
    }
    let cm = confusion_of(&saved.model, &part)?;
    let report = ExperimentReport::build("evaluation", cm, saved.epochs, saved.seeds, Vec::<EpochStats>::new())?;
    info!("accuracy {:.4} over {} rows", report.accuracy, part.len());
    emit_report(&report, &a.out, None)?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct VerdictRecord {
    row: usize,
    actual: String,
    decision: String,
    max_prob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct DetectSummary {
    excluded_label: String,
    threshold: f64,
    rows: usize,
    unknown: usize,
    /// Actual label to decision label to count.
    by_label: BTreeMap<String, BTreeMap<String, usize>>,
}

const UNKNOWN_DECISION: &str = "unknown";

pub fn cmd_detect_unknown(a: &DetectArgs) -> CliResult<()> {
    require_dir(&a.data)?;
    let profile: ThresholdProfile = read_json(&a.profile)?;
    let saved = load_model(&a.model)?;
    if model_digest(&saved.model) != profile.model_ref {
        return Err(CliError::data("threshold profile does not belong to this model"));
    }
    if saved.label_names != profile.known_labels {
        return Err(CliError::data("profile and model disagree on the known labels"));
    }
    if !(profile.threshold > 0.0 && profile.threshold < 1.0) {
        return Err(CliError::data(format!("threshold {} is not inside (0, 1)", profile.threshold)));
    }
    let (ds, _) = load_dataset(&a.data)?;
    let part = select_part(ds, &saved, a.split)?;

    let mut records = Vec::with_capacity(part.len());
    let mut by_label: BTreeMap<String, BTreeMap<String, usize>> = BTreeMap::new();
    let mut decisions = Vec::with_capacity(part.len());
    if !part.is_empty() {
        let p = predict(&saved.model, &part)?;
        for (row, (post, &l)) in p.rows().into_iter().zip(part.labels()).enumerate() {
            let v = verdict_from_posterior(post, profile.threshold);
            let decision = match v.decision {
                Decision::Known(k) => saved.label_names[k].clone(),
                Decision::Unknown => UNKNOWN_DECISION.to_string(),
            };
            let actual = part.label_names()[l].clone();
            *by_label.entry(actual.clone()).or_default().entry(decision.clone()).or_default() += 1;
            records.push(VerdictRecord { row, actual, decision, max_prob: v.max_prob });
            decisions.push(v.decision);
        }
    }
    let unknown = decisions.iter().filter(|d| **d == Decision::Unknown).count();
    info!("{unknown} of {} fingerprints flagged unknown", part.len());
    write_json(&a.out.join(VERDICTS_FILE), &records)?;
    write_json(
        &a.out.join(DETECT_SUMMARY),
        &DetectSummary {
            excluded_label: profile.excluded_label.clone(),
            threshold: profile.threshold,
            rows: part.len(),
            unknown,
            by_label,
        },
    )?;

    // Full-space confusion over the known classes plus the held-out one,
    // when the data carries that label.
    let Some(_) = part.label_index(&profile.excluded_label) else {
        return Ok(());
    };
    let full: Vec<String> = part
        .label_names()
        .iter()
        .filter(|n| **n == profile.excluded_label || profile.known_labels.contains(n))
        .cloned()
        .collect();
    let excluded = full.iter().position(|n| *n == profile.excluded_label).expect("present");
    let known_to_full = profile
        .known_labels
        .iter()
        .map(|k| full.iter().position(|n| n == k).ok_or_else(|| CliError::data(format!("dataset has no class {k:?}"))))
        .collect::<CliResult<Vec<_>>>()?;
    let task = OpenSetTask { excluded, known_to_full };
    let mut cm_names = full.clone();
    cm_names[excluded] = format!("{}{UNKNOWN_SUFFIX}", profile.excluded_label);
    let mut cm = ConfusionMatrix::new(cm_names);
    for (&l, d) in part.labels().iter().zip(&decisions) {
        if let Some(actual) = full.iter().position(|n| *n == part.label_names()[l]) {
            cm.record(actual, task.full_prediction(*d));
        }
    }
    let mut report = ExperimentReport::build("unknown-detection", cm, saved.epochs, saved.seeds, Vec::new())?;
    report.excluded_label = Some(profile.excluded_label.clone());
    report.threshold = Some(profile.threshold);
    emit_report(&report, &a.out, None)?;
    Ok(())
}

pub fn cmd_synth(a: &SynthArgs) -> CliResult<()> {
    if a.devices < 2 || a.devices > 16 {
        return Err(CliError::usage("--devices must be between 2 and 16"));
    }
    if a.files == 0 || a.sessions == 0 {
        return Err(CliError::usage("--files and --sessions must be positive"));
    }
    let cfg = SynthConfig { devices: a.devices, sessions_per_device: a.sessions, files: a.files, seed: a.seed, ..SynthConfig::default() };
    let cap = synth::generate(&cfg);
    for (i, f) in cap.files.iter().enumerate() {
        write_file(&a.out.join(format!("capture-{i:02}.pcap")), f)?;
    }
    let map: BTreeMap<String, String> = cap.profiles.iter().map(|p| (p.mac.to_string(), p.name.clone())).collect();
    write_json(&a.out.join("mac-map.json"), &map)?;
    write_json(&a.out.join("profiles.json"), &cap.profiles)?;
    Ok(())
}
