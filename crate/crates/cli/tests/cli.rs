use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use gamo_cli::plot::{Bounds, GRID};
use gamo_cli::spec::RunSpec;
use gamo_core::data::load_labeled_rows;
use gamo_core::diffcore::Checkpoint;
use gamo_core::gamo::GamoModel;
use gamo_core::Tensor;
use tempfile::TempDir;

const SPEC: &str = r#"
repetitions = 2
seed = 11
variant = "GAMO"
variants = ["CN", "GAMO"]
losses = ["CE"]

[dataset]
source = "toy"
counts = [150, 15]
test_per_class = 40
geometry = { kind = "two_gaussians", separation = 3.0 }

[train]
epochs = 4

[train.arch]
latent_dim = 4
intermediate_dim = 8
hidden = 16
classifier_hidden = [16]
discriminator_hidden = [16]
"#;

fn gamo(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gamo")).args(args).output().expect("binary runs")
}

fn write_spec(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("spec.toml");
    fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read_rows(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r
        .records()
        .map(|rec| rec.unwrap().iter().map(String::from).collect())
        .collect();
    (header, rows)
}

fn col(header: &[String], name: &str) -> usize {
    header.iter().position(|h| h == name).unwrap_or_else(|| panic!("no column {name}"))
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(gamo(&[]).status.code(), Some(1));
    assert_eq!(gamo(&["train"]).status.code(), Some(1));
    assert_eq!(gamo(&["train", "--spec", "x.toml", "--bogus"]).status.code(), Some(1));
    assert_eq!(gamo(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(gamo(&["--help"]).status.code(), Some(0));
}

#[test]
fn spec_errors_exit_two() {
    let dir = TempDir::new().unwrap();
    let out = gamo(&["train", "--spec", s(&dir.path().join("missing.toml")), "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(2));

    let bad = write_spec(dir.path(), &SPEC.replace(r#"variant = "GAMO""#, r#"variant = "GAMMA""#));
    let out = gamo(&["train", "--spec", s(&bad), "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("variant"));

    let bad = write_spec(dir.path(), &SPEC.replace("epochs = 4", "epochs = 4\nbatch_size = 0"));
    assert_eq!(gamo(&["train", "--spec", s(&bad), "--out", s(dir.path())]).status.code(), Some(2));
}

#[test]
fn oracle_passes_and_detects_an_injected_fault() {
    let ok = gamo(&["oracle"]);
    assert_eq!(ok.status.code(), Some(0), "{}", String::from_utf8_lossy(&ok.stdout));
    let stdout = String::from_utf8_lossy(&ok.stdout);
    assert!(stdout.lines().any(|l| l.starts_with("PASS gradient/sigmoid")));
    assert!(!stdout.contains("FAIL"));

    let bad = gamo(&["oracle", "--inject-gradient-fault", "0.05"]);
    assert_eq!(bad.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&bad.stdout).contains("FAIL gradient/sigmoid"));
}

#[test]
fn train_writes_rows_summary_logs_and_identical_bytes() {
    let dir = TempDir::new().unwrap();
    let spec = write_spec(dir.path(), SPEC);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let out = gamo(&["train", "--spec", s(&spec), "--out", s(&a)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let out = gamo(&["train", "--spec", s(&spec), "--out", s(&b), "--jobs", "2"]);
    assert_eq!(out.status.code(), Some(0));

    let csv_a = fs::read(a.join("results.csv")).unwrap();
    assert_eq!(csv_a, fs::read(b.join("results.csv")).unwrap());
    for rep in ["rep-0", "rep-1"] {
        let ck = |root: &Path| fs::read(root.join("GAMO-CE").join(rep).join("model.ckpt")).unwrap();
        assert_eq!(ck(&a), ck(&b));
    }

    let (header, rows) = read_rows(&a.join("results.csv"));
    assert_eq!(rows.len(), 3);
    let (seed, acsa, status) = (col(&header, "seed"), col(&header, "acsa"), col(&header, "status"));
    assert_eq!(rows[0][seed], "11");
    assert_eq!(rows[1][seed], "12");
    assert_eq!(rows[2][seed], "mean");
    assert_eq!(rows[2][status], "ok 2/2");
    let v: Vec<f64> = rows.iter().map(|r| r[acsa].parse().unwrap()).collect();
    assert!((v[2] - (v[0] + v[1]) / 2.0).abs() < 1e-12);
    for r in &rows[..2] {
        let acsa: f64 = r[acsa].parse().unwrap();
        let gm: f64 = r[col(&header, "gm")].parse().unwrap();
        assert!(gm <= acsa + 1e-12);
    }

    let log = fs::read_to_string(a.join("GAMO-CE/rep-0/run.jsonl")).unwrap();
    let epochs: Vec<u64> = log
        .lines()
        .map(|l| serde_json::from_str::<serde_json::Value>(l).unwrap()["epoch"].as_u64().unwrap())
        .collect();
    assert_eq!(epochs, vec![0, 1, 2, 3]);

    // A reloaded checkpoint reproduces the recorded test scores.
    let spec = RunSpec::load(&a.join("spec.toml")).unwrap();
    let (_, test) = spec.data_source().unwrap().realize(11).unwrap();
    let model = GamoModel::from_checkpoint(&Checkpoint::load(a.join("GAMO-CE/rep-0/model.ckpt")).unwrap()).unwrap();
    let pred = model.predict(test.features()).unwrap();
    let c = test.num_classes();
    let recall: Vec<f64> = (0..c)
        .map(|k| {
            let rows = test.class_index(k);
            rows.iter().filter(|&&r| pred[r] == k).count() as f64 / rows.len() as f64
        })
        .collect();
    let expected = recall.iter().sum::<f64>() / c as f64;
    assert!((v[0] - expected).abs() < 1e-12);
}

#[test]
fn seed_and_reps_flags_override_the_spec() {
    let dir = TempDir::new().unwrap();
    let spec = write_spec(dir.path(), SPEC);
    let out = dir.path().join("o");
    let res = gamo(&["train", "--spec", s(&spec), "--out", s(&out), "--seed", "40", "--reps", "3"]);
    assert_eq!(res.status.code(), Some(0));
    let (header, rows) = read_rows(&out.join("results.csv"));
    let seeds: Vec<&str> = rows.iter().map(|r| r[col(&header, "seed")].as_str()).collect();
    assert_eq!(seeds, ["40", "41", "42", "mean"]);
    assert_eq!(gamo(&["train", "--spec", s(&spec), "--out", s(&out), "--reps", "0"]).status.code(), Some(1));
}

#[test]
fn ablation_cells_match_individual_training_runs() {
    let dir = TempDir::new().unwrap();
    let spec = write_spec(dir.path(), SPEC);
    let ab = dir.path().join("ablate");
    let out = gamo(&["ablate", "--spec", s(&spec), "--out", s(&ab)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let table = String::from_utf8_lossy(&out.stdout);
    assert!(table.lines().next().unwrap().contains("CE ACSA"));
    assert!(table.lines().any(|l| l.starts_with("CN ")));

    let (header, rows) = read_rows(&ab.join("ablation.csv"));
    assert_eq!(rows.iter().map(|r| r[0].as_str()).collect::<Vec<_>>(), ["CN", "GAMO"]);

    for (variant, row) in ["CN", "GAMO"].iter().zip(&rows) {
        let tr = dir.path().join(format!("train-{variant}"));
        let spec = write_spec(
            dir.path(),
            &SPEC.replace(r#"variant = "GAMO""#, &format!(r#"variant = "{variant}""#)),
        );
        assert_eq!(gamo(&["train", "--spec", s(&spec), "--out", s(&tr)]).status.code(), Some(0));
        let (th, trows) = read_rows(&tr.join("results.csv"));
        let summary = trows.last().unwrap();
        for (a, t) in [("CE_acsa", "acsa"), ("CE_acsa_std", "acsa_std"), ("CE_gm", "gm"), ("CE_gm_std", "gm_std")] {
            assert_eq!(row[col(&header, a)], summary[col(&th, t)], "{variant} {a}");
        }
        assert_eq!(
            fs::read(ab.join(format!("{variant}-CE/results.csv"))).unwrap(),
            fs::read(tr.join("results.csv")).unwrap()
        );
    }
}

#[test]
fn ablate_rejects_an_empty_variant_list() {
    let dir = TempDir::new().unwrap();
    let spec = write_spec(dir.path(), &SPEC.replace(r#"variants = ["CN", "GAMO"]"#, "variants = []"));
    assert_eq!(gamo(&["ablate", "--spec", s(&spec), "--out", s(dir.path())]).status.code(), Some(2));
}

fn attr(n: &roxmltree::Node, name: &str) -> f64 {
    n.attribute(name).unwrap().parse().unwrap()
}

/// Counter-clockwise hull by the monotone chain.
fn hull(mut pts: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let cross = |o: (f64, f64), a: (f64, f64), b: (f64, f64)| (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0);
    let mut h: Vec<(f64, f64)> = Vec::new();
    for pass in 0..2 {
        let start = h.len();
        let iter: Box<dyn Iterator<Item = &(f64, f64)>> = if pass == 0 { Box::new(pts.iter()) } else { Box::new(pts.iter().rev()) };
        for &p in iter {
            while h.len() >= start + 2 && cross(h[h.len() - 2], h[h.len() - 1], p) <= 0.0 {
                h.pop();
            }
            h.push(p);
        }
        h.pop();
    }
    h
}

fn inside(h: &[(f64, f64)], p: (f64, f64)) -> bool {
    (0..h.len()).all(|i| {
        let (a, b) = (h[i], h[(i + 1) % h.len()]);
        let edge = ((b.0 - a.0).powi(2) + (b.1 - a.1).powi(2)).sqrt();
        (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0) >= -1e-9 * edge.max(1.0)
    })
}

#[test]
fn plots_parse_and_agree_with_the_model() {
    let dir = TempDir::new().unwrap();
    let spec = write_spec(dir.path(), SPEC);
    let run = dir.path().join("run");
    assert_eq!(gamo(&["train", "--spec", s(&spec), "--out", s(&run), "--reps", "1"]).status.code(), Some(0));
    let out = gamo(&["plot", s(&run)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(run.join("plots/GAMO-CE.svg")).unwrap();
    let doc = roxmltree::Document::parse(&text).unwrap();
    let root = doc.root_element();
    assert_eq!(root.tag_name().name(), "svg");
    let bounds = Bounds {
        x0: attr(&root, "data-x0"),
        x1: attr(&root, "data-x1"),
        y0: attr(&root, "data-y0"),
        y1: attr(&root, "data-y1"),
    };

    let model = GamoModel::from_checkpoint(&Checkpoint::load(run.join("GAMO-CE/rep-0/model.ckpt")).unwrap()).unwrap();
    let rects: Vec<_> = doc.descendants().filter(|n| n.has_tag_name("rect") && n.has_attribute("data-class")).collect();
    let covered: f64 = rects.iter().map(|r| attr(r, "data-cols")).sum();
    assert_eq!(covered as usize, GRID * GRID);
    let mut cells = Vec::new();
    let mut expected = Vec::new();
    for r in rects.iter().step_by(7) {
        let (row, c0, n) = (attr(r, "data-row") as usize, attr(r, "data-col") as usize, attr(r, "data-cols") as usize);
        for i in [c0, c0 + n - 1] {
            let (x, y) = bounds.cell_centre(i, row);
            cells.extend([x, y]);
            expected.push(attr(r, "data-class") as usize);
        }
    }
    let pts = Tensor::matrix(expected.len(), 2, cells).unwrap();
    assert_eq!(model.predict(&pts).unwrap(), expected);

    let spec = RunSpec::load(&run.join("spec.toml")).unwrap();
    let (train, _) = spec.data_source().unwrap().realize(11).unwrap();
    let circles = doc.descendants().filter(|n| n.has_tag_name("circle")).count();
    assert_eq!(circles, train.len());

    let minority: Vec<(f64, f64)> = train.class_index(0).iter().map(|&r| (train.features().get(r, 0), train.features().get(r, 1))).collect();
    let h = hull(minority);
    let synthetic: Vec<_> = doc.descendants().filter(|n| n.attribute("data-kind") == Some("synthetic")).collect();
    let (x, labels) = load_labeled_rows(run.join("GAMO-CE/rep-0/synthetic.csv")).unwrap();
    assert_eq!(synthetic.len(), labels.len());
    assert!(!synthetic.is_empty());
    for p in &synthetic {
        assert!(inside(&h, (attr(p, "data-x"), attr(p, "data-y"))));
    }
    for r in 0..x.rows() {
        assert_eq!(labels[r], train.class_labels()[0]);
        assert!(inside(&h, (x.get(r, 0), x.get(r, 1))));
    }
}

#[test]
fn plot_requires_two_dimensional_data() {
    let dir = TempDir::new().unwrap();
    let text = SPEC.replace(
        r#"geometry = { kind = "two_gaussians", separation = 3.0 }"#,
        r#"geometry = { kind = "mixture_clusters", classes = 2, per_class = 1, dim = 3, radius = 3.0, std = 1.0, seed = 1 }"#,
    );
    let spec = write_spec(dir.path(), &text);
    let run = dir.path().join("run");
    let out = gamo(&["train", "--spec", s(&spec), "--out", s(&run), "--reps", "1"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(!run.join("GAMO-CE/rep-0/synthetic.csv").exists());
    assert_eq!(gamo(&["plot", s(&run)]).status.code(), Some(1));
}

#[test]
fn export_balances_classes_and_describes_synthetic_rows() {
    let dir = TempDir::new().unwrap();
    let spec = write_spec(dir.path(), SPEC);
    let out = dir.path().join("export");
    let res = gamo(&["export", "--spec", s(&spec), "--out", s(&out)]);
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));

    let (x, labels) = load_labeled_rows(out.join("balanced.csv")).unwrap();
    let count = |l: i64| labels.iter().filter(|&&v| v == l).count();
    assert_eq!(count(0), count(1));
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("balanced.manifest.json")).unwrap()).unwrap();
    let original = manifest["original_rows"].as_u64().unwrap() as usize;
    assert_eq!(manifest["total_rows"].as_u64().unwrap() as usize, x.rows());
    let ranges = manifest["synthetic"].as_array().unwrap();
    assert_eq!(ranges.len(), 1);
    let (start, end) = (ranges[0]["start"].as_u64().unwrap() as usize, ranges[0]["end"].as_u64().unwrap() as usize);
    assert_eq!((start, end), (original, x.rows()));
    let minority = ranges[0]["label"].as_i64().unwrap();
    assert!(labels[start..end].iter().all(|&l| l == minority));

    // The first rows are the training set itself.
    let spec_v = RunSpec::load(&spec).unwrap();
    let (train, _) = spec_v.data_source().unwrap().realize(11).unwrap();
    assert_eq!(original, train.len());
    assert_eq!(&labels[..original], train.original_labels().as_slice());
    assert_eq!(&x.data()[..original * 2], train.features().data());

    // Exporting from the saved checkpoint gives the same file.
    let again = dir.path().join("again");
    let ck = out.join("model.ckpt");
    let res = gamo(&["export", "--spec", s(&spec), "--out", s(&again), "--checkpoint", s(&ck)]);
    assert_eq!(res.status.code(), Some(0));
    assert_eq!(fs::read(out.join("balanced.csv")).unwrap(), fs::read(again.join("balanced.csv")).unwrap());
}

#[test]
fn export_refuses_a_model_without_a_trained_generator() {
    let dir = TempDir::new().unwrap();
    let spec = write_spec(dir.path(), &SPEC.replace(r#"variant = "GAMO""#, r#"variant = "CN""#));
    let res = gamo(&["export", "--spec", s(&spec), "--out", s(dir.path())]);
    assert_eq!(res.status.code(), Some(2));
    assert!(!dir.path().join("model.ckpt").exists());
    let spec = write_spec(dir.path(), &SPEC.replace("epochs = 4", "epochs = 0"));
    assert_eq!(gamo(&["export", "--spec", s(&spec), "--out", s(dir.path())]).status.code(), Some(2));
}
