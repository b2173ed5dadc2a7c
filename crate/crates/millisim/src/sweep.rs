//! Experiment grids: cross product of sweep axes and seeds, parallel
//! replications, and the combined summary built from the stored run files.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::config::{Config, ConfigError};
use crate::metrics::{mean_ci, parse_run_csv, run_csv, write_run_csv};
use crate::sim::run_single;

/// One axis of the grid: a key and the values it cycles through.
#[derive(Clone, Debug)]
pub struct SweepAxis {
    pub key: String,
    pub values: Vec<String>,
}

/// Parses `key=v1,v2,v3`.
pub fn parse_axis(spec: &str) -> Result<SweepAxis, String> {
    let (key, values) = spec
        .split_once('=')
        .ok_or_else(|| format!("sweep axis {spec:?} is not key=v1,v2,..."))?;
    let values: Vec<String> = values
        .split(',')
        .map(|v| v.trim().to_string())
        .filter(|v| !v.is_empty())
        .collect();
    if values.is_empty() {
        return Err(format!("sweep axis {spec:?} has no values"));
    }
    Ok(SweepAxis {
        key: key.trim().to_string(),
        values,
    })
}

/// One grid point: the axis assignments applied to the base config.
#[derive(Clone, Debug)]
pub struct SweepPoint {
    pub index: usize,
    pub assignments: Vec<(String, String)>,
}

impl SweepPoint {
    pub fn label(&self) -> String {
        if self.assignments.is_empty() {
            return "base".to_string();
        }
        self.assignments
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect::<Vec<_>>()
            .join(";")
    }
}

pub fn cross_product(axes: &[SweepAxis]) -> Vec<SweepPoint> {
    let mut points = vec![Vec::new()];
    for axis in axes {
        let mut next = Vec::new();
        for partial in &points {
            for value in &axis.values {
                let mut assignments = partial.clone();
                assignments.push((axis.key.clone(), value.clone()));
                next.push(assignments);
            }
        }
        points = next;
    }
    points
        .into_iter()
        .enumerate()
        .map(|(index, assignments)| SweepPoint { index, assignments })
        .collect()
}

pub fn run_id(point: &SweepPoint, policy: &str, seed: u64) -> String {
    format!("p{}_{policy}_s{seed}", point.index)
}

pub struct SweepOutcome {
    pub completed: Vec<PathBuf>,
    pub failures: Vec<String>,
}

/// Executes every (point, seed) replication, writing `run_<id>.csv` files
/// atomically. Replications run in parallel; each owns an isolated engine.
pub fn run_sweep(
    base: &Config,
    axes: &[SweepAxis],
    seeds: &[u64],
    out_dir: &Path,
) -> Result<SweepOutcome, ConfigError> {
    std::fs::create_dir_all(out_dir).map_err(|source| ConfigError::Io {
        path: out_dir.display().to_string(),
        source,
    })?;

    let points = cross_product(axes);
    // Validate the whole grid up front so a config error aborts cleanly
    // before any simulation starts.
    let mut jobs = Vec::new();
    for point in &points {
        for &seed in seeds {
            let mut cfg = base.clone();
            for (k, v) in &point.assignments {
                cfg.set(k, v)?;
            }
            cfg.seed = seed;
            cfg.validate()?;
            let id = run_id(point, cfg.policy.as_str(), seed);
            jobs.push((id, cfg));
        }
    }

    let results: Vec<Result<PathBuf, String>> = jobs
        .par_iter()
        .map(|(id, cfg)| {
            let path = out_dir.join(format!("run_{id}.csv"));
            let outcome = std::panic::catch_unwind(|| run_single(cfg, None));
            match outcome {
                Ok(stats) => {
                    stats
                        .verify_conservation()
                        .map_err(|e| format!("{id}: {e}"))?;
                    write_run_csv(&stats, &path).map_err(|e| format!("{id}: {e}"))?;
                    Ok(path)
                }
                Err(panic) => {
                    let msg = panic
                        .downcast_ref::<String>()
                        .cloned()
                        .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                        .unwrap_or_else(|| "panic".to_string());
                    Err(format!("{id}: {msg}"))
                }
            }
        })
        .collect();

    let mut completed = Vec::new();
    let mut failures = Vec::new();
    for r in results {
        match r {
            Ok(p) => completed.push(p),
            Err(e) => failures.push(e),
        }
    }
    Ok(SweepOutcome {
        completed,
        failures,
    })
}

/// Builds `summary.csv` from stored run files: mean and 95% CI per metric per
/// sweep point, aggregated over seeds. Rebuilding from the same files is
/// byte-identical.
pub fn summarize_runs(run_files: &[PathBuf], failures: &[String]) -> Result<String, String> {
    // (point label, section, name, metric) -> samples across seeds.
    let mut samples: BTreeMap<(String, String, String, String), Vec<f64>> = BTreeMap::new();

    let mut files: Vec<&PathBuf> = run_files.iter().collect();
    files.sort();
    for path in files {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("{}: {e}", path.display()))?;
        let parsed = parse_run_csv(&text).map_err(|e| format!("{}: {e}", path.display()))?;
        let file_name = path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or_default();
        // run_p<idx>_<policy>_s<seed> -> group by everything before the seed.
        let label = match file_name.rfind("_s") {
            Some(cut) => &file_name[..cut],
            None => file_name,
        };
        let label = label.strip_prefix("run_").unwrap_or(label).to_string();
        for ((section, name, metric), value) in &parsed.values {
            let Ok(v) = value.parse::<f64>() else {
                continue; // non-numeric rows (e.g. qci names) are labels
            };
            if v.is_nan() {
                continue;
            }
            samples
                .entry((
                    label.clone(),
                    section.clone(),
                    name.clone(),
                    metric.clone(),
                ))
                .or_default()
                .push(v);
        }
    }

    let mut out = String::new();
    let _ = writeln!(out, "# millisim summary");
    let _ = writeln!(out, "# runs={}", run_files.len());
    for failure in failures {
        let _ = writeln!(out, "# failed={failure}");
    }
    let _ = writeln!(out, "point,section,name,metric,mean,ci95,n");
    for ((label, section, name, metric), values) in &samples {
        let (mean, ci) = mean_ci(values);
        let _ = writeln!(
            out,
            "{label},{section},{name},{metric},{mean},{ci},{}",
            values.len()
        );
    }
    Ok(out)
}

/// Full sweep entry point used by the CLI: run everything, then summarize.
pub fn sweep_and_summarize(
    base: &Config,
    axes: &[SweepAxis],
    seeds: &[u64],
    out_dir: &Path,
) -> Result<SweepOutcome, ConfigError> {
    let outcome = run_sweep(base, axes, seeds, out_dir)?;
    let summary = summarize_runs(&outcome.completed, &outcome.failures)
        .map_err(ConfigError::Invalid)?;
    let path = out_dir.join("summary.csv");
    let tmp = path.with_extension("csv.tmp");
    std::fs::write(&tmp, summary).map_err(|source| ConfigError::Io {
        path: tmp.display().to_string(),
        source,
    })?;
    std::fs::rename(&tmp, &path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(outcome)
}

/// Writes one run's CSV for the `run` subcommand, returning the path.
pub fn write_single_run(
    stats: &crate::metrics::RunStats,
    out_dir: &Path,
    id: &str,
) -> std::io::Result<PathBuf> {
    std::fs::create_dir_all(out_dir)?;
    let path = out_dir.join(format!("run_{id}.csv"));
    let tmp = path.with_extension("csv.tmp");
    std::fs::write(&tmp, run_csv(stats))?;
    std::fs::rename(&tmp, &path)?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn axis_parsing() {
        let axis = parse_axis("embb_rate_mbps=80,100,120").unwrap();
        assert_eq!(axis.key, "embb_rate_mbps");
        assert_eq!(axis.values, ["80", "100", "120"]);
        assert!(parse_axis("no-equals-sign").is_err());
        assert!(parse_axis("key=").is_err());
    }

    #[test]
    fn cross_product_counts() {
        let axes = vec![
            parse_axis("a=1,2,3").unwrap(),
            parse_axis("b=x,y").unwrap(),
        ];
        let points = cross_product(&axes);
        assert_eq!(points.len(), 6);
        assert_eq!(points[0].label(), "a=1;b=x");
        assert_eq!(points[5].label(), "a=3;b=y");
        assert_eq!(cross_product(&[]).len(), 1);
        assert_eq!(cross_product(&[])[0].label(), "base");
    }

    #[test]
    fn small_sweep_end_to_end() {
        let dir = tempfile::tempdir().unwrap();
        let mut base = Config::default();
        base.duration_s = 0.2;
        base.n_embb_ues = 1;
        base.n_urllc_ues = 1;
        base.embb_rate_mbps = 10.0;
        let axes = vec![parse_axis("policy=no_ca,millislice").unwrap()];
        let outcome = sweep_and_summarize(&base, &axes, &[1, 2], dir.path()).unwrap();
        assert_eq!(outcome.completed.len(), 4);
        assert!(outcome.failures.is_empty());
        let summary = std::fs::read_to_string(dir.path().join("summary.csv")).unwrap();
        assert!(summary.contains("point,section,name,metric,mean,ci95,n"));
        // Two policies, grouped separately, n=2 seeds each.
        assert!(summary.contains("p0_no_ca,"));
        assert!(summary.contains("p1_millislice,"));
        for line in summary.lines().filter(|l| l.contains(",qci,")) {
            assert!(line.ends_with(",2"), "bad n in {line}");
        }
    }

    #[test]
    fn summary_rebuild_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let mut base = Config::default();
        base.duration_s = 0.2;
        base.n_embb_ues = 1;
        base.n_urllc_ues = 1;
        base.embb_rate_mbps = 10.0;
        let outcome = run_sweep(&base, &[], &[1, 2], dir.path()).unwrap();
        let a = summarize_runs(&outcome.completed, &[]).unwrap();
        let b = summarize_runs(&outcome.completed, &[]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn invalid_grid_rejected_before_running() {
        let dir = tempfile::tempdir().unwrap();
        let base = Config::default();
        let axes = vec![parse_axis("cc_ratio=0.5,1.5").unwrap()];
        assert!(run_sweep(&base, &axes, &[1], dir.path()).is_err());
        // Nothing ran.
        assert_eq!(
            std::fs::read_dir(dir.path()).unwrap().count(),
            0,
            "grid validation must precede execution"
        );
    }
}
