//! The `gamo` subcommands.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use gamo_core::baselines::{export_balanced_dataset, train_variant};
use gamo_core::checks::suite::run_all;
use gamo_core::checks::CheckOutcome;
use gamo_core::data::{load_labeled_rows, save_csv, Dataset};
use gamo_core::diffcore::Checkpoint;
use gamo_core::gamo::{GamoModel, LossVariant};
use gamo_core::trainer::evaluate;
use gamo_core::evalor::EvalReport;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::CliError;
use crate::plot::render_svg;
use crate::runner::{
    jobs_for, read_manifest, run_jobs, summarize, write_manifest, write_results_csv, JobResult, MODEL_FILE,
    SYNTHETIC_FILE,
};
use crate::spec::RunSpec;

/// Flags shared by the spec-driven commands.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub reps: Option<usize>,
    pub jobs: Option<usize>,
}

impl Overrides {
    pub fn apply(&self, mut spec: RunSpec) -> Result<(RunSpec, PathBuf, usize), CliError> {
        if let Some(s) = self.seed {
            spec.seed = s;
        }
        if let Some(r) = self.reps {
            if r == 0 {
                return Err(CliError::Usage("--reps must be at least 1".into()));
            }
            spec.repetitions = r;
        }
        let out = self
            .out
            .clone()
            .or_else(|| spec.out.clone())
            .ok_or_else(|| CliError::Usage("no output directory: pass --out or set `out` in the spec".into()))?;
        let jobs = self.jobs.unwrap_or(1);
        if jobs == 0 {
            return Err(CliError::Usage("--jobs must be at least 1".into()));
        }
        spec.out = Some(out.clone());
        Ok((spec, out, jobs))
    }
}

fn class_labels(spec: &RunSpec) -> Result<Vec<i64>, CliError> {
    Ok(spec.data_source()?.realize(spec.seed)?.0.class_labels().to_vec())
}

fn failures(results: &[JobResult]) -> Vec<String> {
    results
        .iter()
        .filter_map(|r| {
            r.outcome
                .as_ref()
                .err()
                .map(|e| format!("{}-{} rep {}: {e}", r.job.variant, r.job.loss, r.job.rep))
        })
        .collect()
}

/// Trains `spec.variant` for every repetition; writes per-repetition
/// artifacts, `results.csv` and the run manifest. Returns the results file.
pub fn cmd_train(spec_path: &Path, o: &Overrides, log: &mut dyn Write) -> Result<PathBuf, CliError> {
    let (spec, out, threads) = o.apply(RunSpec::load(spec_path)?)?;
    fs::create_dir_all(&out)?;
    let jobs = jobs_for(&spec, spec.variant, spec.train.loss);
    let results = run_jobs(&spec, &jobs, &out, threads)?;
    let labels = class_labels(&spec)?;
    let path = out.join("results.csv");
    write_results_csv(&results, &labels, fs::File::create(&path)?)?;
    write_manifest(&out, "train", &spec, &labels, &results)?;
    for r in &results {
        match &r.outcome {
            Ok(rep) => writeln!(log, "{} {} seed {}: ACSA {:.4} GM {:.4}", rep.variant, rep.loss, rep.seed, rep.acsa, rep.gm)?,
            Err(e) => writeln!(log, "{} {} seed {}: failed: {e}", r.job.variant, r.job.loss, r.job.seed)?,
        }
    }
    if let Some(s) = summarize(&results) {
        writeln!(log, "mean ACSA {:.4} ± {:.4}  GM {:.4} ± {:.4}", s.acsa_mean, s.acsa_std, s.gm_mean, s.gm_std)?;
    }
    let failed = failures(&results);
    if !failed.is_empty() {
        return Err(CliError::Check(format!("{} repetition(s) failed:\n{}", failed.len(), failed.join("\n"))));
    }
    Ok(path)
}

/// One row of the comparison table.
#[derive(Clone, Debug, PartialEq)]
pub struct AblationRow {
    pub variant: String,
    /// `(acsa_mean, acsa_std, gm_mean, gm_std)` per loss variant, in the
    /// order of the spec's `losses`.
    pub cells: Vec<(f64, f64, f64, f64)>,
}

/// Runs every `(variant, loss)` pair and writes `ablation.csv`: rows are
/// variants, column groups are losses × {ACSA, GM}.
pub fn cmd_ablate(spec_path: &Path, o: &Overrides, log: &mut dyn Write) -> Result<Vec<AblationRow>, CliError> {
    let (spec, out, threads) = o.apply(RunSpec::load(spec_path)?)?;
    if spec.variants.is_empty() {
        return Err(CliError::Spec("field `variants`: ablate needs at least one variant".into()));
    }
    fs::create_dir_all(&out)?;
    let mut jobs = Vec::new();
    for &v in &spec.variants {
        for &l in &spec.losses {
            jobs.extend(jobs_for(&spec, v, l));
        }
    }
    let results = run_jobs(&spec, &jobs, &out, threads)?;
    let labels = class_labels(&spec)?;
    let mut rows = Vec::new();
    for &v in &spec.variants {
        let mut cells = Vec::new();
        for &l in &spec.losses {
            let group: Vec<JobResult> = results
                .iter()
                .filter(|r| r.job.variant == v && r.job.loss == l)
                .cloned()
                .collect();
            let dir = out.join(format!("{v}-{l}"));
            fs::create_dir_all(&dir)?;
            write_results_csv(&group, &labels, fs::File::create(dir.join("results.csv"))?)?;
            cells.push(summarize(&group).map_or((f64::NAN, f64::NAN, f64::NAN, f64::NAN), |s| {
                (s.acsa_mean, s.acsa_std, s.gm_mean, s.gm_std)
            }));
        }
        rows.push(AblationRow {
            variant: v.to_string(),
            cells,
        });
    }
    write_ablation_csv(&rows, &spec.losses, fs::File::create(out.join("ablation.csv"))?)?;
    write_manifest(&out, "ablate", &spec, &labels, &results)?;
    write!(log, "{}", ablation_table(&rows, &spec.losses))?;
    let failed = failures(&results);
    if !failed.is_empty() {
        return Err(CliError::Check(format!("{} repetition(s) failed:\n{}", failed.len(), failed.join("\n"))));
    }
    Ok(rows)
}

pub fn write_ablation_csv<W: Write>(rows: &[AblationRow], losses: &[LossVariant], w: W) -> Result<(), CliError> {
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["variant".to_string()];
    for l in losses {
        for m in ["acsa", "acsa_std", "gm", "gm_std"] {
            header.push(format!("{l}_{m}"));
        }
    }
    out.write_record(&header)?;
    for r in rows {
        let mut rec = vec![r.variant.clone()];
        for &(a, sa, g, sg) in &r.cells {
            rec.extend([a, sa, g, sg].map(|v| v.to_string()));
        }
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}

/// Plain-text table with `mean±std` cells.
pub fn ablation_table(rows: &[AblationRow], losses: &[LossVariant]) -> String {
    let mut s = format!("{:<12}", "variant");
    for l in losses {
        s += &format!(" {:>13} {:>13}", format!("{l} ACSA"), format!("{l} GM"));
    }
    s.push('\n');
    for r in rows {
        s += &format!("{:<12}", r.variant);
        for &(a, sa, g, sg) in &r.cells {
            s += &format!(" {:>13} {:>13}", format!("{a:.3}±{sa:.3}"), format!("{g:.3}±{sg:.3}"));
        }
        s.push('\n');
    }
    s
}

/// Runs the oracle suite. `fault` deliberately corrupts sigmoid gradients.
pub fn cmd_oracle(seed: u64, fault: Option<f64>, log: &mut dyn Write) -> Result<Vec<CheckOutcome>, CliError> {
    let outcomes = run_all(seed, fault);
    for o in &outcomes {
        writeln!(log, "{o}")?;
    }
    let failed = outcomes.iter().filter(|o| !o.passed).count();
    writeln!(log, "{} checks, {failed} failed", outcomes.len())?;
    if failed > 0 {
        return Err(CliError::Check(format!("{failed} oracle check(s) failed")));
    }
    Ok(outcomes)
}

/// One SVG per job directory of repetition 0. Returns the files written.
pub fn cmd_plot(run_dir: &Path, out: Option<&Path>, log: &mut dyn Write) -> Result<Vec<PathBuf>, CliError> {
    let manifest = read_manifest(run_dir)?;
    let spec = &manifest.spec;
    let source = spec.data_source()?;
    let out = out.map_or_else(|| run_dir.join("plots"), Path::to_path_buf);
    fs::create_dir_all(&out)?;
    let mut written = Vec::new();
    for entry in manifest.jobs.iter().filter(|e| e.job.rep == 0 && e.status == "ok") {
        let (train, _) = source.realize(entry.job.seed)?;
        if train.dim() != 2 {
            return Err(CliError::Usage(format!(
                "plot needs a 2-D dataset; this run's data has {} features",
                train.dim()
            )));
        }
        let dir = run_dir.join(&entry.dir);
        let model = GamoModel::from_checkpoint(&Checkpoint::load(dir.join(MODEL_FILE))?)?;
        let synthetic_path = dir.join(SYNTHETIC_FILE);
        let synthetic = if synthetic_path.is_file() {
            let (features, labels) = load_labeled_rows(&synthetic_path)?;
            Some(Dataset::with_class_order(features, &labels, train.class_labels())?)
        } else {
            None
        };
        let title = format!("{} ({}) seed {}", entry.job.variant, entry.job.loss, entry.job.seed);
        let svg = render_svg(&title, &model, &train, synthetic.as_ref())?;
        let path = out.join(format!("{}-{}.svg", entry.job.variant, entry.job.loss));
        fs::write(&path, svg)?;
        writeln!(log, "wrote {}", path.display())?;
        written.push(path);
    }
    if written.is_empty() {
        return Err(CliError::Usage(format!("{} has no successful repetition to plot", run_dir.display())));
    }
    Ok(written)
}

/// Trains `spec.variant` once (seed `spec.seed`), or loads `checkpoint`, and
/// writes `balanced.csv` plus `balanced.manifest.json`.
pub fn cmd_export(spec_path: &Path, checkpoint: Option<&Path>, o: &Overrides, log: &mut dyn Write) -> Result<PathBuf, CliError> {
    let (spec, out, _) = o.apply(RunSpec::load(spec_path)?)?;
    if checkpoint.is_none() && !spec.variant.is_adversarial() {
        return Err(CliError::Spec(format!(
            "field `variant`: {} leaves no generator to export with; use CG_CN, CG_D_CN, GAMO_NO_D or GAMO",
            spec.variant
        )));
    }
    fs::create_dir_all(&out)?;
    let (train, test) = spec.data_source()?.realize(spec.seed)?;
    let model = match checkpoint {
        Some(p) => GamoModel::from_checkpoint(&Checkpoint::load(p)?)?,
        None => {
            let mut cfg = spec.train.clone();
            cfg.seed = spec.seed;
            let outcome = train_variant(spec.variant, &train, &cfg, &spec.smote)?;
            let report = EvalReport::new(spec.variant.tag(), cfg.loss.tag(), cfg.seed, evaluate(&outcome.model, &test)?)?;
            writeln!(log, "trained {} ({}): test ACSA {:.4} GM {:.4}", spec.variant, cfg.loss, report.acsa, report.gm)?;
            outcome.model.to_checkpoint().save(out.join(MODEL_FILE))?;
            outcome.model
        }
    };
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0xE4_0E7);
    let export = export_balanced_dataset(&model, &train, &mut rng)?;
    let path = out.join("balanced.csv");
    save_csv(&export.data, &path)?;
    fs::write(
        out.join("balanced.manifest.json"),
        serde_json::to_string_pretty(&export.manifest)? + "\n",
    )?;
    writeln!(
        log,
        "wrote {} ({} original rows, {} synthetic)",
        path.display(),
        export.manifest.original_rows,
        export.manifest.total_rows - export.manifest.original_rows
    )?;
    Ok(path)
}
