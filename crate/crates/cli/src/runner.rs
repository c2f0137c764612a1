//! Repetition jobs, their on-disk artifacts and the results CSV.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use gamo_core::baselines::{export_balanced_dataset, train_variant, AblationVariant};
use gamo_core::data::{save_csv, Dataset};
use gamo_core::evalor::EvalReport;
use gamo_core::gamo::LossVariant;
use gamo_core::trainer::{evaluate, write_run_log};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::CliError;
use crate::spec::{DataSource, RunSpec};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Job {
    pub variant: AblationVariant,
    pub loss: LossVariant,
    pub rep: usize,
    pub seed: u64,
}

impl Job {
    /// Directory of this job, relative to the run directory.
    pub fn dir(&self) -> PathBuf {
        PathBuf::from(format!("{}-{}", self.variant, self.loss)).join(format!("rep-{}", self.rep))
    }
}

#[derive(Clone, Debug)]
pub struct JobResult {
    pub job: Job,
    pub outcome: Result<EvalReport, String>,
}

/// Seed offset for the synthetic points written next to a 2-D run.
const SYNTHETIC_STREAM: u64 = 0x5A4D_91E5;

pub const MODEL_FILE: &str = "model.ckpt";
pub const LOG_FILE: &str = "run.jsonl";
pub const SYNTHETIC_FILE: &str = "synthetic.csv";

/// Trains and evaluates one job, writing its checkpoint and run log (and,
/// for 2-D data, its synthetic points) under `out/job.dir()`.
pub fn run_job(spec: &RunSpec, source: &DataSource, job: &Job, out: &Path) -> Result<EvalReport, CliError> {
    let (train, test) = source.realize(job.seed)?;
    let mut cfg = spec.train.clone();
    cfg.seed = job.seed;
    cfg.loss = job.loss;
    let outcome = train_variant(job.variant, &train, &cfg, &spec.smote)?;
    let dir = out.join(job.dir());
    fs::create_dir_all(&dir)?;
    outcome.model.to_checkpoint().save(dir.join(MODEL_FILE))?;
    let mut log = fs::File::create(dir.join(LOG_FILE))?;
    if let Some(pre) = &outcome.pretrained {
        write_run_log(&pre.state.log, &mut log)?;
    }
    write_run_log(&outcome.fit.state.log, &mut log)?;
    log.flush()?;

    if train.dim() == 2 {
        let synthetic = match (&outcome.synthetic, &outcome.model.generator) {
            (Some((x, labels)), _) => Some(Dataset::from_indices(x.clone(), labels.clone(), train.class_labels().to_vec())?),
            (None, Some(_)) => {
                let mut rng = ChaCha8Rng::seed_from_u64(job.seed ^ SYNTHETIC_STREAM);
                let export = export_balanced_dataset(&outcome.model, &outcome.fit.train, &mut rng)?;
                let rows: Vec<usize> = (export.manifest.original_rows..export.manifest.total_rows).collect();
                Some(export.data.subset(&rows)?)
            }
            (None, None) => None,
        };
        if let Some(s) = synthetic {
            save_csv(&s, dir.join(SYNTHETIC_FILE))?;
        }
    }
    let cm = evaluate(&outcome.model, &test)?;
    Ok(EvalReport::new(job.variant.tag(), job.loss.tag(), job.seed, cm)?)
}

/// Runs every job on a pool of `jobs` threads. Results come back in job
/// order whatever the scheduling.
pub fn run_jobs(spec: &RunSpec, jobs: &[Job], out: &Path, threads: usize) -> Result<Vec<JobResult>, CliError> {
    let source = spec.data_source()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| CliError::Usage(format!("--jobs: {e}")))?;
    Ok(pool.install(|| {
        jobs.par_iter()
            .map(|job| JobResult {
                job: job.clone(),
                outcome: run_job(spec, &source, job, out).map_err(|e| e.to_string()),
            })
            .collect()
    }))
}

pub fn jobs_for(spec: &RunSpec, variant: AblationVariant, loss: LossVariant) -> Vec<Job> {
    (0..spec.repetitions)
        .map(|rep| Job {
            variant,
            loss,
            rep,
            seed: spec.seed_for(rep),
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct Summary {
    pub acsa_mean: f64,
    pub acsa_std: f64,
    pub gm_mean: f64,
    pub gm_std: f64,
    pub recall_means: Vec<f64>,
    pub succeeded: usize,
}

/// Mean and sample standard deviation (`n − 1`; zero for a single value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

pub fn summarize(results: &[JobResult]) -> Option<Summary> {
    let ok: Vec<&EvalReport> = results.iter().filter_map(|r| r.outcome.as_ref().ok()).collect();
    let first = ok.first()?;
    let (acsa_mean, acsa_std) = mean_std(&ok.iter().map(|r| r.acsa).collect::<Vec<_>>());
    let (gm_mean, gm_std) = mean_std(&ok.iter().map(|r| r.gm).collect::<Vec<_>>());
    let recall_means = (0..first.recalls.len())
        .map(|k| mean_std(&ok.iter().map(|r| r.recalls[k]).collect::<Vec<_>>()).0)
        .collect();
    Some(Summary {
        acsa_mean,
        acsa_std,
        gm_mean,
        gm_std,
        recall_means,
        succeeded: ok.len(),
    })
}

/// `variant,loss,seed,status,acsa,acsa_std,gm,gm_std,recall_<label>..`: one
/// row per repetition then a `mean` row holding mean and standard deviation
/// over the successful repetitions.
pub fn write_results_csv<W: Write>(results: &[JobResult], class_labels: &[i64], w: W) -> Result<(), CliError> {
    let mut out = csv::Writer::from_writer(w);
    let mut header: Vec<String> = ["variant", "loss", "seed", "status", "acsa", "acsa_std", "gm", "gm_std"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend(class_labels.iter().map(|l| format!("recall_{l}")));
    out.write_record(&header)?;
    let blanks = |n: usize| vec![String::new(); n];
    for r in results {
        let mut row = vec![r.job.variant.to_string(), r.job.loss.to_string(), r.job.seed.to_string()];
        match &r.outcome {
            Ok(rep) => {
                row.extend(["ok".to_string(), rep.acsa.to_string(), String::new(), rep.gm.to_string(), String::new()]);
                row.extend(rep.recalls.iter().map(f64::to_string));
            }
            Err(e) => {
                row.push(format!("failed: {e}"));
                row.extend(blanks(4 + class_labels.len()));
            }
        }
        out.write_record(&row)?;
    }
    if let (Some(s), Some(first)) = (summarize(results), results.first()) {
        let mut row = vec![
            first.job.variant.to_string(),
            first.job.loss.to_string(),
            "mean".to_string(),
            format!("ok {}/{}", s.succeeded, results.len()),
            s.acsa_mean.to_string(),
            s.acsa_std.to_string(),
            s.gm_mean.to_string(),
            s.gm_std.to_string(),
        ];
        row.extend(s.recall_means.iter().map(f64::to_string));
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

/// Index of every job written by `train` or `ablate`, read back by `plot`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub spec: RunSpec,
    pub class_labels: Vec<i64>,
    pub jobs: Vec<JobEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JobEntry {
    pub job: Job,
    pub dir: PathBuf,
    pub status: String,
}

pub const MANIFEST_FILE: &str = "run.json";
pub const SPEC_FILE: &str = "spec.toml";

pub fn write_manifest(out: &Path, command: &str, spec: &RunSpec, class_labels: &[i64], results: &[JobResult]) -> Result<(), CliError> {
    let manifest = RunManifest {
        command: command.to_string(),
        spec: spec.clone(),
        class_labels: class_labels.to_vec(),
        jobs: results
            .iter()
            .map(|r| JobEntry {
                job: r.job.clone(),
                dir: r.job.dir(),
                status: match &r.outcome {
                    Ok(_) => "ok".to_string(),
                    Err(e) => format!("failed: {e}"),
                },
            })
            .collect(),
    };
    fs::write(out.join(MANIFEST_FILE), serde_json::to_string_pretty(&manifest)? + "\n")?;
    let toml = toml::to_string(spec).map_err(|e| CliError::Spec(e.to_string()))?;
    fs::write(out.join(SPEC_FILE), toml)?;
    Ok(())
}

pub fn read_manifest(run_dir: &Path) -> Result<RunManifest, CliError> {
    let path = run_dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    Ok(serde_json::from_str(&text)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use gamo_core::evalor::ConfusionMatrix;

    fn result(seed: u64, hits: [u64; 2]) -> JobResult {
        let cm = ConfusionMatrix::from_counts(vec![vec![hits[0], 10 - hits[0]], vec![10 - hits[1], hits[1]]]).unwrap();
        JobResult {
            job: Job {
                variant: AblationVariant::Gamo,
                loss: LossVariant::CrossEntropy,
                rep: seed as usize,
                seed,
            },
            outcome: Ok(EvalReport::new("GAMO", "CE", seed, cm).unwrap()),
        }
    }

    #[test]
    fn sample_standard_deviation() {
        assert_eq!(mean_std(&[2.0, 4.0]), (3.0, 2f64.sqrt()));
        assert_eq!(mean_std(&[5.0]), (5.0, 0.0));
    }

    #[test]
    fn results_csv_has_rows_and_a_summary() {
        let mut results = vec![result(0, [8, 6]), result(1, [10, 4])];
        results.push(JobResult {
            outcome: Err("diverged".into()),
            ..result(2, [0, 0])
        });
        let mut buf = Vec::new();
        write_results_csv(&results, &[3, 1], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 5);
        assert_eq!(lines[0], "variant,loss,seed,status,acsa,acsa_std,gm,gm_std,recall_3,recall_1");
        assert!(lines[3].starts_with("GAMO,CE,2,failed: diverged,"));
        assert!(lines[4].starts_with("GAMO,CE,mean,ok 2/3,0.7,0,"));
    }
}
