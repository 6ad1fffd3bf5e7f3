//! Synthetic benchmark grid: cells, result rows and CSV outputs.

use std::fs;
use std::path::Path;
use std::time::Instant;

use anyhow::{Context, Result};
use clusternorm::partition::adjusted_rand_index;
use clusternorm::{generate, train_test_split, MatrixF64, SyntheticConfig, SyntheticTruth, TaskDatasetF64};
use rayon::prelude::*;

use crate::methods::{evaluate, fit_method, metric_name};
use crate::spec::{ExperimentSpec, Method};

/// One (method, n_train, seed, fold) combination.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Cell {
    pub method: Method,
    pub n_train: usize,
    pub seed: u64,
    pub fold: usize,
}

/// Outcome of a benchmark cell. A failed cell keeps its key, a NaN value and
/// the error text.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub cell: Cell,
    pub metric: String,
    pub value: f64,
    pub iterations: usize,
    pub seconds: f64,
    pub error: Option<String>,
}

/// Per-cell extras that do not fit in a result row.
#[derive(Debug, Clone, PartialEq)]
pub struct CellDetail {
    pub partition: Option<(Vec<usize>, f64)>,
    pub sigma: Option<MatrixF64>,
}

#[derive(Debug, Clone)]
pub struct CellOutput {
    pub row: ResultRow,
    pub detail: CellDetail,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of a cell's own random stream.
pub fn cell_seed(cell: &Cell) -> u64 {
    [cell.method as u64, cell.n_train as u64, cell.fold as u64]
        .into_iter()
        .fold(splitmix(cell.seed), |acc, v| splitmix(acc ^ v))
}

pub fn synthetic_config(spec: &ExperimentSpec, seed: u64) -> SyntheticConfig {
    SyntheticConfig {
        d: spec.d,
        clusters: spec.hyper.clusters,
        points_per_task: spec.points_per_task,
        seed,
        ..SyntheticConfig::default()
    }
}

pub fn cells(spec: &ExperimentSpec) -> Vec<Cell> {
    let mut out = Vec::new();
    for &method in &spec.methods {
        for &n_train in &spec.n_train {
            for &seed in &spec.seeds {
                for &fold in &spec.folds {
                    out.push(Cell {
                        method,
                        n_train,
                        seed,
                        fold,
                    });
                }
            }
        }
    }
    out
}

type Generated = (TaskDatasetF64, SyntheticTruth<f64>);

fn run_with_data(spec: &ExperimentSpec, cell: &Cell, generated: &Generated) -> Result<(f64, usize, CellDetail)> {
    let (data, truth) = generated;
    let (train, test) = train_test_split(data, truth, cell.n_train, cell.fold, cell.seed)?;
    let out = fit_method(
        cell.method,
        &train,
        &spec.hyper,
        Some(&truth.partition),
        cell_seed(cell),
    )?;
    let value = evaluate(&out.w, &test, spec.hyper.loss)?;
    let partition = out
        .partition
        .map(|p| (p.assignment().to_vec(), adjusted_rand_index(&p, &truth.partition)));
    let sigma = if cell.method.exports_sigma() { out.sigma } else { None };
    Ok((value, out.iterations, CellDetail { partition, sigma }))
}

fn run_cell_on(spec: &ExperimentSpec, cell: &Cell, generated: &Generated) -> CellOutput {
    let start = Instant::now();
    let result = run_with_data(spec, cell, generated);
    let seconds = if spec.record_time {
        start.elapsed().as_secs_f64()
    } else {
        0.0
    };
    let metric = metric_name(spec.hyper.loss).to_string();
    match result {
        Ok((value, iterations, detail)) => CellOutput {
            row: ResultRow {
                cell: *cell,
                metric,
                value,
                iterations,
                seconds,
                error: None,
            },
            detail,
        },
        Err(e) => CellOutput {
            row: ResultRow {
                cell: *cell,
                metric,
                value: f64::NAN,
                iterations: 0,
                seconds,
                error: Some(format!("{e:#}")),
            },
            detail: CellDetail {
                partition: None,
                sigma: None,
            },
        },
    }
}

/// Runs a single cell in isolation, generating its data from scratch.
pub fn run_cell(spec: &ExperimentSpec, cell: &Cell) -> Result<CellOutput> {
    let generated = generate::<f64>(&synthetic_config(spec, cell.seed))?;
    Ok(run_cell_on(spec, cell, &generated))
}

/// Runs every cell of the experiment. Output is sorted by cell key, so it does not
/// depend on `parallel`.
pub fn run_spec(spec: &ExperimentSpec, parallel: bool) -> Result<Vec<CellOutput>> {
    spec.validate()?;
    let gen = |&seed: &u64| -> Result<(u64, Generated)> {
        Ok((seed, generate::<f64>(&synthetic_config(spec, seed))?))
    };
    let data: Vec<(u64, Generated)> = if parallel {
        spec.seeds.par_iter().map(gen).collect::<Result<_>>()?
    } else {
        spec.seeds.iter().map(gen).collect::<Result<_>>()?
    };
    let lookup = |seed: u64| &data.iter().find(|(s, _)| *s == seed).expect("seed generated").1;
    let all = cells(spec);
    let mut out: Vec<CellOutput> = if parallel {
        all.par_iter()
            .map(|c| run_cell_on(spec, c, lookup(c.seed)))
            .collect()
    } else {
        all.iter().map(|c| run_cell_on(spec, c, lookup(c.seed))).collect()
    };
    out.sort_by_key(|o| o.row.cell);
    Ok(out)
}

/// Mean and sample standard deviation of the successful cells of one
/// (method, n_train) group.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub method: Method,
    pub n_train: usize,
    pub metric: String,
    pub count: usize,
    pub failed: usize,
    pub mean: f64,
    pub std: f64,
}

pub fn summarize(rows: &[ResultRow]) -> Vec<SummaryRow> {
    let mut keys: Vec<(Method, usize)> = rows.iter().map(|r| (r.cell.method, r.cell.n_train)).collect();
    keys.sort();
    keys.dedup();
    keys.into_iter()
        .map(|(method, n_train)| {
            let group: Vec<&ResultRow> = rows
                .iter()
                .filter(|r| r.cell.method == method && r.cell.n_train == n_train)
                .collect();
            let values: Vec<f64> = group.iter().filter(|r| r.error.is_none()).map(|r| r.value).collect();
            let count = values.len();
            let mean = values.iter().sum::<f64>() / count as f64;
            let std = if count > 1 {
                (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (count - 1) as f64).sqrt()
            } else {
                0.0
            };
            SummaryRow {
                method,
                n_train,
                metric: group[0].metric.clone(),
                count,
                failed: group.len() - count,
                mean,
                std,
            }
        })
        .collect()
}

pub const RESULTS_HEADER: [&str; 8] = ["method", "n_train", "seed", "fold", "metric", "value", "iters", "seconds"];

pub fn write_results(rows: &[ResultRow], path: &Path) -> Result<()> {
    let mut wtr = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    wtr.write_record(RESULTS_HEADER)?;
    for r in rows {
        let metric = match &r.error {
            Some(_) => "error".to_string(),
            None => r.metric.clone(),
        };
        wtr.write_record([
            r.cell.method.to_string(),
            r.cell.n_train.to_string(),
            r.cell.seed.to_string(),
            r.cell.fold.to_string(),
            metric,
            r.value.to_string(),
            r.iterations.to_string(),
            r.seconds.to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Reads a results CSV back. Error rows come back with `error` set.
pub fn read_results(path: &Path) -> Result<Vec<ResultRow>> {
    let mut rdr = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    let mut rows = Vec::new();
    for record in rdr.records() {
        let r = record?;
        let failed = &r[4] == "error";
        rows.push(ResultRow {
            cell: Cell {
                method: r[0].parse()?,
                n_train: r[1].parse()?,
                seed: r[2].parse()?,
                fold: r[3].parse()?,
            },
            metric: r[4].to_string(),
            value: r[5].parse()?,
            iterations: r[6].parse()?,
            seconds: r[7].parse()?,
            error: failed.then(|| "recorded failure".to_string()),
        });
    }
    Ok(rows)
}

pub fn write_summary(rows: &[SummaryRow], path: &Path) -> Result<()> {
    let mut wtr = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    wtr.write_record(["method", "n_train", "metric", "count", "failed", "mean", "std"])?;
    for s in rows {
        wtr.write_record([
            s.method.to_string(),
            s.n_train.to_string(),
            s.metric.clone(),
            s.count.to_string(),
            s.failed.to_string(),
            s.mean.to_string(),
            s.std.to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_partitions(outputs: &[CellOutput], path: &Path) -> Result<()> {
    let mut wtr = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    wtr.write_record(["method", "n_train", "seed", "fold", "assignment", "ari"])?;
    for o in outputs {
        if let Some((assignment, ari)) = &o.detail.partition {
            let c = &o.row.cell;
            let labels: Vec<String> = assignment.iter().map(|a| a.to_string()).collect();
            wtr.write_record([
                c.method.to_string(),
                c.n_train.to_string(),
                c.seed.to_string(),
                c.fold.to_string(),
                labels.join(" "),
                ari.to_string(),
            ])?;
        }
    }
    wtr.flush()?;
    Ok(())
}

pub fn sigma_file_name(cell: &Cell) -> String {
    format!("{}_n{}_s{}_f{}.csv", cell.method, cell.n_train, cell.seed, cell.fold)
}

/// Writes results, summary, partitions and per-cell metrics under `dir`.
pub fn write_outputs(outputs: &[CellOutput], spec: &ExperimentSpec, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let rows: Vec<ResultRow> = outputs.iter().map(|o| o.row.clone()).collect();
    write_results(&rows, &dir.join("results.csv"))?;
    write_summary(&summarize(&rows), &dir.join("summary.csv"))?;
    write_partitions(outputs, &dir.join("partitions.csv"))?;
    fs::write(dir.join("spec.txt"), spec.to_text())?;
    let sigma_dir = dir.join("sigma");
    for o in outputs {
        if let Some(sigma) = &o.detail.sigma {
            fs::create_dir_all(&sigma_dir)?;
            clusternorm::io::write_matrix(sigma, sigma_dir.join(sigma_file_name(&o.row.cell)))?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_spec() -> ExperimentSpec {
        ExperimentSpec::parse(
            "methods = frobenius, kmeans_alt\nn_train = 24\nseeds = 1, 2\npoints_per_task = 60\n\
             max_iters = 300\nrecord_time = false\n",
        )
        .unwrap()
    }

    #[test]
    fn cell_seeds_differ_per_coordinate() {
        let base = Cell {
            method: Method::KMeansAlt,
            n_train: 24,
            seed: 3,
            fold: 0,
        };
        let variants = [
            Cell { method: Method::CnInit, ..base },
            Cell { n_train: 48, ..base },
            Cell { seed: 4, ..base },
            Cell { fold: 1, ..base },
        ];
        for v in variants {
            assert_ne!(cell_seed(&v), cell_seed(&base));
        }
        assert_eq!(cell_seed(&base), cell_seed(&base.clone()));
    }

    #[test]
    fn isolated_cell_matches_grid_run() {
        let spec = tiny_spec();
        let all = run_spec(&spec, false).unwrap();
        assert_eq!(all.len(), 4);
        for o in &all {
            assert!(o.row.error.is_none(), "{:?}", o.row.error);
            let alone = run_cell(&spec, &o.row.cell).unwrap();
            assert_eq!(alone.row, o.row);
        }
    }

    #[test]
    fn failed_cells_are_kept() {
        let mut spec = tiny_spec();
        spec.n_train = vec![25];
        let out = run_spec(&spec, false).unwrap();
        assert!(out.iter().all(|o| o.row.error.is_some() && o.row.value.is_nan()));
        let summary = summarize(&out.iter().map(|o| o.row.clone()).collect::<Vec<_>>());
        assert!(summary.iter().all(|s| s.count == 0 && s.failed == 2));
    }

    #[test]
    fn summary_statistics() {
        let row = |seed, value| ResultRow {
            cell: Cell {
                method: Method::Trace,
                n_train: 24,
                seed,
                fold: 0,
            },
            metric: "rmse".into(),
            value,
            iterations: 1,
            seconds: 0.0,
            error: None,
        };
        let s = summarize(&[row(0, 1.0), row(1, 2.0), row(2, 6.0)]);
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].mean, 3.0);
        assert!((s[0].std - 7.0f64.sqrt()).abs() < 1e-15);
    }
}
