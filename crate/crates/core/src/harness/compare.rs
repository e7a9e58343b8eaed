use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::config::ExperimentConfig;
use super::experiment::{build_setup, execute, write_atomic, write_outputs, Outcome, RunManifest};
use crate::diagnostics::{format_float, Metric};
use crate::{Error, Result};

/// One algorithm's line in the summary table.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub name: String,
    pub algorithm: String,
    pub status: String,
    pub iterations: usize,
    /// Communication counts at the first row meeting the threshold.
    pub to_threshold: Option<(u64, u64)>,
    pub terminal: Option<f64>,
    pub extra_alpha: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct Comparison {
    pub metric: Metric,
    pub threshold: f64,
    pub rows: Vec<ComparisonRow>,
    pub manifests: Vec<RunManifest>,
    pub long_path: PathBuf,
    pub dat_path: PathBuf,
    pub table_path: PathBuf,
}

/// Configs must describe the same problem, graph, shift and start.
pub fn check_comparable(configs: &[ExperimentConfig]) -> Result<()> {
    let Some(first) = configs.first() else {
        return Err(Error::ComparisonInvalid("nothing to compare".into()));
    };
    for c in &configs[1..] {
        if c.problem != first.problem {
            return Err(Error::ComparisonInvalid(format!(
                "{} and {} use different problems (kind, sizes or data seed)",
                first.output.name, c.output.name
            )));
        }
        if c.graph != first.graph || c.c != first.c {
            return Err(Error::ComparisonInvalid(format!(
                "{} and {} use different graphs or gossip shifts",
                first.output.name, c.output.name
            )));
        }
        if c.init != first.init {
            return Err(Error::ComparisonInvalid(format!("{} and {} start from different points", first.output.name, c.output.name)));
        }
    }
    let mut seen = HashSet::new();
    if let Some(dup) = configs.iter().find(|c| !seen.insert(&c.output.name)) {
        return Err(Error::ComparisonInvalid(format!("two runs are named {:?}; set output.name", dup.output.name)));
    }
    Ok(())
}

/// Runs every config on one shared setup and writes each trace, plus
/// `compare.long.csv`, `compare.dat` and `compare.summary.txt`.
///
/// `target` defaults to the first config's stop metric and threshold.
pub fn compare(configs: &[ExperimentConfig], out_dir: &Path, target: Option<(Metric, f64)>) -> Result<Comparison> {
    check_comparable(configs)?;
    let first = &configs[0];
    let (metric, threshold) = match target.or(first.stop.threshold.map(|t| (first.stop.metric, t))) {
        Some(t) => t,
        None => return Err(Error::Config("compare needs a threshold: set stop.threshold or pass one".into())),
    };
    let mut setup_config = first.clone();
    setup_config.diagnostics.saddle = configs.iter().any(|c| c.diagnostics.saddle) || metric.needs_saddle();
    let started = super::experiment::now_ms();
    let setup = build_setup(&setup_config)?;

    let outcomes = configs.par_iter().map(|c| execute(c, &setup)).collect::<Result<Vec<Outcome>>>()?;
    let manifests = configs
        .iter()
        .zip(&outcomes)
        .map(|(c, o)| write_outputs(c, &setup, o, out_dir, started))
        .collect::<Result<Vec<_>>>()?;

    let rows: Vec<ComparisonRow> = configs
        .iter()
        .zip(&outcomes)
        .map(|(c, o)| ComparisonRow {
            name: c.output.name.clone(),
            algorithm: c.algorithm.name().into(),
            status: o.trace.status.label().into(),
            iterations: o.trace.records.last().map_or(0, |r| r.k),
            to_threshold: o.trace.reached(metric, threshold).map(|r| (r.comm_vector, r.comm_scalar)),
            terminal: o.trace.terminal(metric),
            extra_alpha: o.extra_alpha,
        })
        .collect();

    let long_path = out_dir.join("compare.long.csv");
    write_atomic(&long_path, &long_csv(configs, &outcomes, metric)?)?;
    let dat_path = out_dir.join("compare.dat");
    write_atomic(&dat_path, gnuplot_blocks(configs, &outcomes, metric).as_bytes())?;
    let table_path = out_dir.join("compare.summary.txt");
    write_atomic(&table_path, summary_table(&rows, metric, threshold).as_bytes())?;
    Ok(Comparison { metric, threshold, rows, manifests, long_path, dat_path, table_path })
}

fn long_csv(configs: &[ExperimentConfig], outcomes: &[Outcome], metric: Metric) -> Result<Vec<u8>> {
    let fmt = |e: csv::Error| Error::Format(e.to_string());
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["algorithm", "k", "comm_vector", "comm_scalar", "metric", "value"]).map_err(fmt)?;
    for (c, o) in configs.iter().zip(outcomes) {
        for r in &o.trace.records {
            if let Some(v) = r.metric(metric) {
                w.write_record([
                    c.output.name.clone(),
                    r.k.to_string(),
                    r.comm_vector.to_string(),
                    r.comm_scalar.to_string(),
                    metric.name().to_string(),
                    format_float(v),
                ])
                .map_err(fmt)?;
            }
        }
    }
    w.into_inner().map_err(|e| Error::Format(e.to_string()))
}

/// One block per algorithm, separated by two blank lines (`index` in gnuplot).
fn gnuplot_blocks(configs: &[ExperimentConfig], outcomes: &[Outcome], metric: Metric) -> String {
    let mut out = String::new();
    for (i, (c, o)) in configs.iter().zip(outcomes).enumerate() {
        if i > 0 {
            out.push_str("\n\n");
        }
        let _ = writeln!(out, "# {}", c.output.name);
        let _ = writeln!(out, "# comm_vector comm_scalar {}", metric.name());
        for r in &o.trace.records {
            if let Some(v) = r.metric(metric) {
                let _ = writeln!(out, "{} {} {}", r.comm_vector, r.comm_scalar, format_float(v));
            }
        }
    }
    out
}

/// Plain-text table of communications needed to reach the threshold; runs
/// that never reach it show `budget`.
pub fn summary_table(rows: &[ComparisonRow], metric: Metric, threshold: f64) -> String {
    let header = [
        "algorithm".to_string(),
        "status".into(),
        "iterations".into(),
        format!("comm_vector@{}<={threshold:e}", metric.name()),
        "comm_scalar@threshold".into(),
        "terminal".into(),
        "extra_alpha".into(),
    ];
    let body: Vec<[String; 7]> = rows
        .iter()
        .map(|r| {
            let (vec, scal) = match r.to_threshold {
                Some((v, s)) => (v.to_string(), s.to_string()),
                None => ("budget".into(), "budget".into()),
            };
            [
                r.name.clone(),
                r.status.clone(),
                r.iterations.to_string(),
                vec,
                scal,
                r.terminal.map_or("-".into(), |t| format!("{t:.3e}")),
                r.extra_alpha.map_or("-".into(), |a| format!("{a:.3e}")),
            ]
        })
        .collect();
    let widths: Vec<usize> =
        (0..7).map(|j| body.iter().map(|r| r[j].len()).chain([header[j].len()]).max().unwrap_or(0)).collect();
    let line = |cells: &[String]| {
        let padded: Vec<String> = cells.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
        format!("| {} |\n", padded.join(" | "))
    };
    let mut out = line(&header);
    out.push_str(&line(&widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>()));
    for r in &body {
        out.push_str(&line(r));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(algorithm: &str) -> ExperimentConfig {
        let text = format!(
            "seed = 9
[problem]
kind = \"ridge\"
m = 5
n = 6
d = 3
[graph]
kind = \"erdos_renyi\"
p = 0.9
[algorithm]
{algorithm}
[stop]
max_iter = 4000
threshold = 1e-6
[diagnostics]
every = 50
"
        );
        ExperimentConfig::from_toml(&text).unwrap()
    }

    #[test]
    fn adolf_against_tuned_extra() {
        let dir = tempfile::tempdir().unwrap();
        let configs = [config("kind = \"adolf\""), config("kind = \"extra\"\ngrid = [1e-3, 1e-2, 5e-2, 0.2]")];
        let cmp = compare(&configs, dir.path(), None).unwrap();
        assert_eq!(cmp.rows.len(), 2);
        assert!(cmp.rows.iter().all(|r| r.to_threshold.is_some()), "{:?}", cmp.rows);
        let table = std::fs::read_to_string(&cmp.table_path).unwrap();
        assert!(table.contains("| adolf ") && table.contains("| extra "));
        let long = std::fs::read_to_string(&cmp.long_path).unwrap();
        assert!(long.starts_with("algorithm,k,comm_vector,comm_scalar,metric,value\n"));
        assert!(long.contains("\nadolf,0,0,0,distance_sq,") && long.contains("\nextra,"));
        let dat = std::fs::read_to_string(&cmp.dat_path).unwrap();
        assert_eq!(dat.matches("\n\n\n# ").count(), 1);
        assert!(dir.path().join("adolf.csv").exists() && dir.path().join("extra.manifest.json").exists());
    }

    #[test]
    fn single_config_gives_one_row() {
        let dir = tempfile::tempdir().unwrap();
        let cmp = compare(&[config("kind = \"adolf_local\"")], dir.path(), None).unwrap();
        assert_eq!(cmp.rows.len(), 1);
        let table = std::fs::read_to_string(&cmp.table_path).unwrap();
        assert_eq!(table.lines().count(), 3);
    }

    #[test]
    fn unreached_threshold_reads_budget() {
        let dir = tempfile::tempdir().unwrap();
        let cmp = compare(&[config("kind = \"extra\"\nalpha = 1e-4")], dir.path(), None).unwrap();
        assert_eq!(cmp.rows[0].to_threshold, None);
        assert_eq!(cmp.rows[0].status, "budget");
        assert!(std::fs::read_to_string(&cmp.table_path).unwrap().contains("| budget"));
    }

    #[test]
    fn mismatched_seeds_are_rejected() {
        let a = config("kind = \"adolf\"");
        let mut b = config("kind = \"extra\"\nalpha = 0.01");
        if let crate::harness::ProblemSpec::Ridge { seed, .. } = &mut b.problem {
            *seed += 1;
        }
        let err = check_comparable(&[a.clone(), b]).unwrap_err();
        assert!(matches!(err, Error::ComparisonInvalid(_)));
        assert_eq!(err.exit_code(), 6);
        let err = check_comparable(&[a.clone(), a]).unwrap_err();
        assert!(err.to_string().contains("output.name"));
    }
}
