//! Acceptance criteria, one test each. Every test writes a single
//! `criterion N: PASS|FAIL|SKIP` line to stderr, bypassing output capture so
//! the lines show up in a plain `cargo test` run.

mod common;

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use iotprint::classify::{run_experiment2, verdict_from_posterior, DatasetBundle, Decision, ExperimentConfig, OpenSetTask};
use iotprint::dataset::{read_idx, split, write_idx, IdxHeader, SplitPolicy, IMAGE_MAGIC, LABEL_MAGIC};
use iotprint::nn::{one_hot, predict, InitSpec, MlpModel, TrainingConfig};
use iotprint::report::{all_class_metrics, overall_accuracy, weighted_average, ConfusionMatrix};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

use common::*;

fn verdict(n: u32, title: &str, started: Instant, outcome: Result<String, String>) {
    let secs = started.elapsed().as_secs_f64();
    let line = match &outcome {
        Ok(detail) => format!("criterion {n}: PASS  {title} ({detail}; {secs:.1}s)"),
        Err(why) => format!("criterion {n}: FAIL  {title} ({why}; {secs:.1}s)"),
    };
    let _ = writeln!(std::io::stderr(), "{line}");
    if let Err(why) = outcome {
        panic!("criterion {n} failed: {why}");
    }
}

fn check(cond: bool, why: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(why())
    }
}

fn load_fixture(name: &str) -> Value {
    serde_json::from_str(&std::fs::read_to_string(fixture(name)).unwrap()).unwrap()
}

fn fixture_matrix(names: &Value, counts: &Value) -> ConfusionMatrix {
    ConfusionMatrix::from_counts(serde_json::from_value(names.clone()).unwrap(), serde_json::from_value(counts.clone()).unwrap())
        .unwrap()
}

#[test]
fn criterion_01_published_per_class_metrics() {
    let t0 = Instant::now();
    let run = || -> Result<String, String> {
        let v = load_fixture("unknown_device_tables.json");
        let tables = v["tables"].as_array().unwrap();
        check(tables.len() == 9, || format!("{} tables", tables.len()))?;
        let (mut worst_row, mut worst_avg) = (0.0f64, 0.0f64);
        for t in tables {
            let cm = fixture_matrix(&t["class_names"], &t["counts"]);
            let ms = all_class_metrics(&cm);
            let printed: Vec<[f64; 3]> = serde_json::from_value(t["printed"].clone()).unwrap();
            for (m, p) in ms.iter().zip(&printed) {
                for (got, want) in [m.precision, m.recall, m.f1].into_iter().zip(p) {
                    worst_row = worst_row.max((got - want).abs());
                }
            }
            let w = weighted_average(&cm, &ms).unwrap();
            let expect: [f64; 3] = serde_json::from_value(t["weighted"].clone()).unwrap();
            for (got, want) in [w.precision, w.recall, w.f1].into_iter().zip(expect) {
                worst_avg = worst_avg.max((got - want).abs());
            }
        }
        check(worst_row <= 0.001 + 1e-9, || format!("per-class deviation {worst_row:.4}"))?;
        check(worst_avg <= 0.005, || format!("weighted deviation {worst_avg:.4}"))?;
        Ok(format!("max deviation {worst_row:.4} per class, {worst_avg:.4} weighted"))
    };
    verdict(1, "published per-class metrics recomputed", t0, run());
}

#[test]
fn criterion_02_published_identification_accuracy() {
    let t0 = Instant::now();
    let run = || -> Result<String, String> {
        let v = load_fixture("identification_table.json");
        let acc = overall_accuracy(&fixture_matrix(&v["class_names"], &v["counts"])).unwrap();
        let want = v["reported_accuracy"].as_f64().unwrap();
        check((acc - want).abs() <= 0.0005, || format!("accuracy {acc:.5} vs {want}"))?;
        Ok(format!("accuracy {acc:.5} vs {want}"))
    };
    verdict(2, "identification accuracy recomputed", t0, run());
}

#[test]
fn criterion_03_gradient_check() {
    let t0 = Instant::now();
    let run = || -> Result<String, String> {
        let mut rng = ChaCha8Rng::seed_from_u64(303);
        let mut worst = 0.0f64;
        let mut params = 0;
        let nets = 25;
        for k in 0..nets {
            let depth = rng.random_range(2..=4);
            let mut dims: Vec<usize> = (0..depth).map(|_| rng.random_range(1..=16)).collect();
            dims.push(rng.random_range(2..=16));
            let model = random_model(&dims, 1000 + k);
            let batch = rng.random_range(1..=8);
            let x = kink_free_batch(&model, &mut rng, batch);
            let classes = *dims.last().unwrap();
            let labels: Vec<usize> = (0..batch).map(|_| rng.random_range(0..classes)).collect();
            let (err, n) = gradient_check(&model, &x, &one_hot(&labels, classes), 1e-5);
            worst = worst.max(err);
            params += n;
        }
        check(worst < 1e-4, || format!("max relative error {worst:.2e}"))?;
        Ok(format!("{nets} networks, {params} components, max relative error {worst:.2e}"))
    };
    verdict(3, "analytic gradients match finite differences", t0, run());
}

#[test]
fn criterion_04_softmax_and_loss_invariants() {
    let t0 = Instant::now();
    let run = || -> Result<String, String> {
        let mut rng = ChaCha8Rng::seed_from_u64(404);
        let models: Vec<MlpModel> = (0..100)
            .map(|k| {
                let input = rng.random_range(1..=16);
                let hidden = rng.random_range(1..=16);
                let classes = rng.random_range(2..=16);
                random_model(&[input, hidden, classes], k)
            })
            .collect();
        let mut worst = 0.0f64;
        for i in 0..10_000 {
            let m = &models[i % models.len()];
            let x = Array2::from_shape_simple_fn((1, m.input_dim()), || rng.random_range(-4.0..4.0));
            let p = m.forward(x.view()).unwrap();
            check(p.iter().all(|&v| v >= 0.0), || format!("negative probability in pass {i}"))?;
            worst = worst.max((p.sum() - 1.0).abs());
        }
        check(worst <= 1e-6, || format!("row sum off by {worst:.2e}"))?;
        let mut worst_loss = 0.0f64;
        for classes in 2..=16usize {
            let mut m = MlpModel::new(&[8, 5, classes], InitSpec::default()).unwrap();
            for t in m.parameters_mut() {
                t.fill(0.0);
            }
            let x = Array2::from_shape_simple_fn((4, 8), || rng.random_range(0.0..1.0));
            let labels: Vec<usize> = (0..4).map(|_| rng.random_range(0..classes)).collect();
            let loss = m.loss(x.view(), one_hot(&labels, classes).view()).unwrap();
            worst_loss = worst_loss.max((loss - (classes as f64).ln()).abs());
        }
        check(worst_loss <= 1e-9, || format!("uniform loss off ln C by {worst_loss:.2e}"))?;
        Ok(format!("10000 passes, max row-sum error {worst:.1e}, uniform loss error {worst_loss:.1e}"))
    };
    verdict(4, "softmax rows are distributions, uniform loss is ln C", t0, run());
}

#[test]
fn criterion_05_session_split_oracle() {
    let t0 = Instant::now();
    let run = || -> Result<String, String> {
        use iotprint::capture::{parse_pcap, split_sessions};
        let mut rng = ChaCha8Rng::seed_from_u64(505);
        let mut packets = 0;
        for i in 0..100 {
            let n = rng.random_range(0..=1000);
            let (file, truth) = random_capture(&mut rng, n);
            let split = split_sessions(&parse_pcap(&file).map_err(|e| format!("capture {i}: {e}"))?);
            compare_split(&split, &truth).map_err(|e| format!("capture {i}: {e}"))?;
            packets += n;
        }
        Ok(format!("100 captures, {packets} packets"))
    };
    verdict(5, "session split equals brute-force bucketing", t0, run());
}

#[test]
fn criterion_06_idx_round_trip() {
    let t0 = Instant::now();
    let run = || -> Result<String, String> {
        let dir = tempfile::tempdir().unwrap();
        let (img, lbl) = (dir.path().join("images.idx3"), dir.path().join("labels.idx1"));
        let mut rng = ChaCha8Rng::seed_from_u64(606);
        for i in 0..100 {
            let rows = rng.random_range(1..=300);
            let classes = rng.random_range(1..=10);
            let ds = random_dataset(&mut rng, rows, classes);
            write_idx(&ds, &img, &lbl).map_err(|e| e.to_string())?;
            let back = read_idx(&img, &lbl).map_err(|e| e.to_string())?;
            check(back.labels() == ds.labels() && back.fingerprints() == ds.fingerprints(), || format!("dataset {i} differs"))?;
        }
        let h = IdxHeader::parse(&MNIST_T10K_IMAGES_HEADER).map_err(|e| e.to_string())?;
        check(h == IdxHeader { magic: IMAGE_MAGIC, dims: vec![10_000, 28, 28] }, || format!("image header {h:?}"))?;
        let h = IdxHeader::parse(&MNIST_T10K_LABELS_HEADER).map_err(|e| e.to_string())?;
        check(h == IdxHeader { magic: LABEL_MAGIC, dims: vec![10_000] }, || format!("label header {h:?}"))?;
        let ds = random_dataset(&mut rng, 10_000, 10);
        write_idx(&ds, &img, &lbl).map_err(|e| e.to_string())?;
        check(std::fs::read(&img).unwrap()[..16] == MNIST_T10K_IMAGES_HEADER, || "written image header differs".into())?;
        check(std::fs::read(&lbl).unwrap()[..8] == MNIST_T10K_LABELS_HEADER, || "written label header differs".into())?;
        Ok("100 datasets bit-exact, MNIST headers match".into())
    };
    verdict(6, "IDX round trip and MNIST header layout", t0, run());
}

const HIDDEN: usize = 128;
const EPOCHS: usize = 7;

fn eval_accuracy(root: &Path) -> f64 {
    let report: Value = serde_json::from_slice(&std::fs::read(root.join("eval/report.json")).unwrap()).unwrap();
    report["accuracy"].as_f64().unwrap()
}

#[test]
fn criterion_07_synthetic_identification() {
    let t0 = Instant::now();
    let run = || -> Result<String, String> {
        let dir = tempfile::tempdir().unwrap();
        cli_pipeline(dir.path(), 5, 1200, HIDDEN, EPOCHS);
        let acc = eval_accuracy(dir.path());
        check(acc >= 0.95, || format!("test accuracy {acc:.4}"))?;
        Ok(format!("5 devices x 1200 sessions, test accuracy {acc:.4}"))
    };
    verdict(7, "synthetic capture to evaluation pipeline", t0, run());
}

#[test]
fn criterion_08_synthetic_unknown_device() {
    let t0 = Instant::now();
    let run = || -> Result<String, String> {
        let ds = synthetic_dataset(5, 1200, 7);
        let (tr, va, te) = split(&ds, &SplitPolicy::with_seed(7)).map_err(|e| e.to_string())?;
        let bundle = DatasetBundle::new(tr, va, te).map_err(|e| e.to_string())?;
        let held = bundle.label_names()[2].clone();
        let config = ExperimentConfig {
            hidden_width: HIDDEN,
            init: InitSpec { seed: 7, ..InitSpec::default() },
            training: TrainingConfig { epochs: EPOCHS, shuffle_seed: 7, ..TrainingConfig::default() },
            ..ExperimentConfig::default()
        };
        let out = run_experiment2(&bundle, &held, &config).map_err(|e| e.to_string())?;
        let excluded = bundle.train.label_index(&held).unwrap();
        let task = OpenSetTask::new(bundle.label_names().len(), excluded);

        // exhaustive sweep on the validation split
        let post = predict(&out.model, &bundle.validation).map_err(|e| e.to_string())?;
        let truth = bundle.validation.labels();
        let mut unknown_sets: Vec<Vec<bool>> = Vec::new();
        let mut best = (0.0, -1.0);
        for k in 1..100u32 {
            let t = f64::from(k) / 100.0;
            let decisions: Vec<Decision> = post.rows().into_iter().map(|r| verdict_from_posterior(r, t).decision).collect();
            let correct = decisions.iter().zip(truth).filter(|(d, &y)| task.full_prediction(**d) == y).count();
            let acc = correct as f64 / truth.len() as f64;
            if acc >= best.1 {
                best = (t, acc);
            }
            unknown_sets.push(decisions.iter().map(|d| *d == Decision::Unknown).collect());
        }
        check(out.search.threshold == best.0 && out.search.accuracy == best.1, || {
            format!("threshold {} ({}) vs exhaustive {} ({})", out.search.threshold, out.search.accuracy, best.0, best.1)
        })?;
        let nested = unknown_sets.windows(2).all(|w| w[0].iter().zip(&w[1]).all(|(a, b)| !a || *b));
        check(nested, || "unknown set shrank as the threshold rose".into())?;

        let cm = &out.confusion;
        let ms = all_class_metrics(cm);
        let recall = ms[excluded].recall;
        let (mut f1, mut support) = (0.0, 0u64);
        for (i, m) in ms.iter().enumerate().filter(|(i, _)| *i != excluded) {
            f1 += cm.row_sum(i) as f64 * m.f1;
            support += cm.row_sum(i);
        }
        let f1 = f1 / support as f64;
        check(recall >= 0.8, || format!("unknown recall {recall:.3}"))?;
        check(f1 >= 0.95, || format!("known weighted F1 {f1:.3}"))?;
        Ok(format!("held out {held:?}, threshold {:.2} grid-optimal, unknown recall {recall:.3}, known F1 {f1:.3}", best.0))
    };
    verdict(8, "synthetic held-out device rejection", t0, run());
}

/// Runs only when `IOTPRINT_TRACE_DIR` names a directory of capture files
/// from the public IoT trace collection.
#[test]
fn criterion_09_real_trace_reproduction() {
    let t0 = Instant::now();
    let Some(trace) = std::env::var_os("IOTPRINT_TRACE_DIR") else {
        let _ = writeln!(std::io::stderr(), "criterion 9: SKIP  real-trace reproduction (set IOTPRINT_TRACE_DIR)");
        return;
    };
    let run = || -> Result<String, String> {
        let dir = tempfile::tempdir().unwrap();
        let p = |s: &str| dir.path().join(s).to_str().unwrap().to_string();
        let mut pcaps: Vec<String> = std::fs::read_dir(&trace)
            .map_err(|e| e.to_string())?
            .map(|e| e.unwrap().path())
            .filter(|f| f.extension().is_some_and(|e| e == "pcap"))
            .map(|f| f.to_str().unwrap().to_string())
            .collect();
        pcaps.sort();
        let mut args = vec!["split".to_string(), "--out".into(), p("sessions"), "--collapse-non-iot".into()];
        args.extend(pcaps);
        iotprint_ok(&args.iter().map(String::as_str).collect::<Vec<_>>());
        iotprint_ok(&["encode", "--sessions", &p("sessions"), "--out", &p("data"), "--min-sessions", "1000"]);
        iotprint_ok(&["train", "--data", &p("data"), "--out", &p("model"), "--epochs", "7"]);
        iotprint_ok(&["eval", "--model", &p("model/model.json"), "--data", &p("data"), "--out", &p("eval")]);
        let acc = eval_accuracy(dir.path());
        iotprint_ok(&["train", "--data", &p("data"), "--out", &p("open"), "--exclude", "all", "--epochs", "7"]);
        let summary: Value = serde_json::from_slice(&std::fs::read(dir.path().join("open/summary.json")).unwrap()).unwrap();
        let mean = summary["mean_accuracy"].as_f64().unwrap();
        check(acc >= 0.985, || format!("identification accuracy {acc:.4}"))?;
        check(mean >= 0.985, || format!("mean held-out accuracy {mean:.4}"))?;
        Ok(format!("identification {acc:.4}, held-out mean {mean:.4}"))
    };
    verdict(9, "real-trace reproduction", t0, run());
}

fn output_files(root: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files = Vec::new();
    for sub in ["model", "eval"] {
        let mut names: Vec<_> = std::fs::read_dir(root.join(sub)).unwrap().map(|e| e.unwrap().path()).collect();
        names.sort();
        for f in names.into_iter().filter(|f| f.is_file()) {
            let name = format!("{sub}/{}", f.file_name().unwrap().to_string_lossy());
            // run.json records input paths, which differ between temp dirs
            if name != "model/run.json" {
                files.push((name, std::fs::read(&f).unwrap()));
            }
        }
    }
    files
}

#[test]
fn criterion_10_deterministic_outputs() {
    let t0 = Instant::now();
    let run = || -> Result<String, String> {
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        cli_pipeline(a.path(), 5, 1200, HIDDEN, EPOCHS);
        cli_pipeline(b.path(), 5, 1200, HIDDEN, EPOCHS);
        let (fa, fb) = (output_files(a.path()), output_files(b.path()));
        check(fa.iter().map(|f| &f.0).eq(fb.iter().map(|f| &f.0)), || "different file sets".into())?;
        check(fa.iter().any(|f| f.0 == "model/model.json"), || "no model file".into())?;
        for ((name, x), (_, y)) in fa.iter().zip(&fb) {
            check(x == y, || format!("{name} differs"))?;
        }
        Ok(format!("{} files byte-identical", fa.len()))
    };
    verdict(10, "repeat runs are byte-identical", t0, run());
}
