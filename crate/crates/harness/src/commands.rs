//! Subcommand implementations, independent of argument parsing.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clusternorm::io::{read_dataset, read_matrix, write_dataset, write_matrix};
use clusternorm::partition::sigma_of_m;
use clusternorm::{
    cluster_norm_sq, generate, objective, reconstruct_sigma_star, MatrixF64, Partition,
    SpectralBox, TaskDatasetF64,
};

use crate::bench::{run_spec, summarize, write_outputs, SummaryRow};
use crate::methods::{fit_method, regularizer};
use crate::spec::{ExperimentSpec, Hyper, Method};

/// Evaluates the squared cluster norm of the matrix stored at `path`.
///
/// The output is a CSV table with columns `quantity,index,value` holding the
/// norm, the dual level, the singular values and the optimal spectrum.
pub fn norm(path: &Path, alpha: f64, beta: f64, gamma: f64) -> Result<String> {
    let a: MatrixF64 = read_matrix(path).with_context(|| format!("reading {}", path.display()))?;
    let bx = SpectralBox::new(alpha, beta, gamma, a.ncols())?;
    let res = cluster_norm_sq(&a, &bx)?;
    let mut out = String::from("quantity,index,value\n");
    writeln!(out, "value,0,{}", res.value)?;
    writeln!(out, "nu,0,{}", res.nu_star)?;
    for (i, s) in res.singular_values.iter().enumerate() {
        writeln!(out, "sigma,{i},{s}")?;
    }
    for (i, l) in res.lambda_star.iter().enumerate() {
        writeln!(out, "lambda,{i},{l}")?;
    }
    Ok(out)
}

/// Box `(alpha, beta, gamma)` implied by the penalty weights and `r`.
pub fn box_from_hyper(hyper: &Hyper, m: usize) -> Result<(f64, f64, f64)> {
    let bx = SpectralBox::from_weights(&hyper.weights()?, hyper.clusters, m)?;
    Ok((bx.alpha(), bx.beta(), bx.gamma()))
}

/// Path of the metadata file that accompanies a model.
pub fn meta_path(model: &Path) -> PathBuf {
    let mut name = model.as_os_str().to_owned();
    name.push(".meta");
    PathBuf::from(name)
}

/// Model metadata, stored as `key = value` lines.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelMeta {
    pub method: Method,
    pub hyper: Hyper,
    pub seed: u64,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    pub partition: Option<Partition>,
}

impl ModelMeta {
    pub fn to_text(&self) -> String {
        let h = &self.hyper;
        let mut out = String::new();
        let mut put = |k: &str, v: String| out.push_str(&format!("{k} = {v}\n"));
        put("method", self.method.to_string());
        put("lambda", h.lambda_for(self.method).to_string());
        put("eps_m", h.eps_m.to_string());
        put("eps_b", h.eps_b.to_string());
        put("eps_w", h.eps_w.to_string());
        put("clusters", h.clusters.to_string());
        put("loss", h.loss.name().to_string());
        put("trace_alpha", h.trace_alpha.to_string());
        put("trace_beta", h.trace_beta.to_string());
        put("seed", self.seed.to_string());
        put("objective", self.objective.to_string());
        put("iterations", self.iterations.to_string());
        put("converged", self.converged.to_string());
        if let Some(p) = &self.partition {
            put("partition", p.to_string());
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut kv = BTreeMap::new();
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("bad metadata line '{line}'"))?;
            kv.insert(k.trim().to_string(), v.trim().to_string());
        }
        let get = |k: &str| kv.get(k).ok_or_else(|| anyhow!("metadata lacks '{k}'"));
        let num = |k: &str| -> Result<f64> { Ok(get(k)?.parse()?) };
        let method: Method = get("method")?.parse()?;
        let hyper = Hyper {
            lambda: num("lambda")?,
            eps_m: num("eps_m")?,
            eps_b: num("eps_b")?,
            eps_w: num("eps_w")?,
            clusters: get("clusters")?.parse()?,
            loss: get("loss")?.parse()?,
            trace_alpha: num("trace_alpha")?,
            trace_beta: num("trace_beta")?,
            ..Hyper::default()
        };
        let partition = match kv.get("partition") {
            Some(p) => Some(parse_partition(p)?),
            None => None,
        };
        Ok(Self {
            method,
            hyper,
            seed: get("seed")?.parse()?,
            objective: num("objective")?,
            iterations: get("iterations")?.parse()?,
            converged: get("converged")?.parse()?,
            partition,
        })
    }
}

/// Parses task labels separated by spaces or commas.
pub fn parse_partition(text: &str) -> Result<Partition> {
    let labels = text
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<usize>().with_context(|| format!("bad label '{s}'")))
        .collect::<Result<Vec<_>>>()?;
    Ok(Partition::from_labels(&labels)?)
}

/// Fits `method` on a dataset CSV and writes `W` to `out` with metadata
/// next to it.
pub fn fit_dataset(
    data_path: &Path,
    method: Method,
    hyper: &Hyper,
    partition: Option<&Partition>,
    seed: u64,
    out: &Path,
) -> Result<ModelMeta> {
    let data: TaskDatasetF64 =
        read_dataset(data_path).with_context(|| format!("reading {}", data_path.display()))?;
    let result = fit_method(method, &data, hyper, partition, seed)?;
    write_matrix(&result.w, out).with_context(|| format!("writing {}", out.display()))?;
    let meta = ModelMeta {
        method,
        hyper: Hyper {
            lambda: hyper.lambda_for(method),
            lambda_overrides: BTreeMap::new(),
            ..hyper.clone()
        },
        seed,
        objective: result.objective,
        iterations: result.iterations,
        converged: result.converged,
        partition: result.partition,
    };
    fs::write(meta_path(out), meta.to_text())?;
    Ok(meta)
}

/// Objective of a saved model on a dataset, recomputed from scratch.
pub fn model_objective(model: &Path, data_path: &Path) -> Result<f64> {
    let (w, meta) = load_model(model)?;
    let data: TaskDatasetF64 = read_dataset(data_path)?;
    let h = &meta.hyper;
    let reg = match (regularizer(meta.method, h)?, &meta.partition) {
        (Some(reg), _) => reg,
        (None, Some(p)) => clusternorm::Regularizer::FixedMetric {
            partition: p.clone(),
            weights: h.weights()?,
        },
        (None, None) => bail!("model metadata names no penalty"),
    };
    let data = if meta.method == Method::Pooling { data.pooled() } else { data };
    let w = if meta.method == Method::Pooling { w.columns(0, 1).into_owned() } else { w };
    Ok(objective(&w, &data, h.loss, &reg, h.lambda)?)
}

pub fn load_model(model: &Path) -> Result<(MatrixF64, ModelMeta)> {
    let w: MatrixF64 = read_matrix(model).with_context(|| format!("reading {}", model.display()))?;
    let meta_file = meta_path(model);
    let text = fs::read_to_string(&meta_file)
        .with_context(|| format!("reading {}", meta_file.display()))?;
    Ok((w, ModelMeta::parse(&text)?))
}

/// Task metric of a saved model: the relaxed `Sigma*` for spectral
/// penalties, `Sigma(M)` for models tied to a partition.
pub fn model_sigma(model: &Path) -> Result<MatrixF64> {
    let (w, meta) = load_model(model)?;
    if let Some(p) = &meta.partition {
        return Ok(sigma_of_m(p, &meta.hyper.weights()?)?);
    }
    let reg = regularizer(meta.method, &meta.hyper)?;
    match reg.map(|r| r.spectral_solution(&w)).transpose()?.flatten() {
        Some(res) => Ok(reconstruct_sigma_star(&res)?),
        None => bail!("a {} model carries no task metric", meta.method),
    }
}

pub fn export_sigma(model: &Path, out: &Path) -> Result<MatrixF64> {
    let sigma = model_sigma(model)?;
    write_matrix(&sigma, out)?;
    Ok(sigma)
}

pub fn export_partition_sigma(partition: &Partition, hyper: &Hyper, out: &Path) -> Result<MatrixF64> {
    let sigma = sigma_of_m(partition, &hyper.weights()?)?;
    write_matrix(&sigma, out)?;
    Ok(sigma)
}

/// Runs the benchmark grid and writes every output file under `out`.
pub fn bench_synthetic(spec: &ExperimentSpec, out: &Path, parallel: bool) -> Result<Vec<SummaryRow>> {
    let outputs = run_spec(spec, parallel)?;
    for o in &outputs {
        if let Some(e) = &o.row.error {
            eprintln!("cell {:?} failed: {e}", o.row.cell);
        }
    }
    write_outputs(&outputs, spec, out)?;
    Ok(summarize(&outputs.iter().map(|o| o.row.clone()).collect::<Vec<_>>()))
}

/// Writes one synthetic dataset plus its generating `W` and partition.
pub fn generate_dataset(spec: &ExperimentSpec, seed: u64, out: &Path) -> Result<Partition> {
    let (data, truth) = generate::<f64>(&crate::bench::synthetic_config(spec, seed))?;
    write_dataset(&data, out)?;
    let mut w_path = out.as_os_str().to_owned();
    w_path.push(".w_true.csv");
    write_matrix(&truth.w_true, PathBuf::from(w_path))?;
    Ok(truth.partition)
}
