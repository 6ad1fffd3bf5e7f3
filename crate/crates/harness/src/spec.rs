//! Experiment definitions: methods, grids and hyperparameters.
//!
//! Experiment files are flat `key = value` text. Lists are comma separated and
//! integer lists accept inclusive ranges such as `0-9`. Lines starting with
//! `#` are comments. `lambda.<method>` overrides `lambda` for one method.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use clusternorm::{Loss, PenaltyWeights};

/// Every method the harness can run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Method {
    Frobenius,
    MtKernel,
    Trace,
    ClusterNorm,
    TrueMetric,
    KMeansAlt,
    Reprojected,
    CnInit,
    Pooling,
}

impl Method {
    pub const ALL: [Method; 9] = [
        Method::Frobenius,
        Method::MtKernel,
        Method::Trace,
        Method::ClusterNorm,
        Method::TrueMetric,
        Method::KMeansAlt,
        Method::Reprojected,
        Method::CnInit,
        Method::Pooling,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Frobenius => "frobenius",
            Method::MtKernel => "mt_kernel",
            Method::Trace => "trace",
            Method::ClusterNorm => "cluster_norm",
            Method::TrueMetric => "true_metric",
            Method::KMeansAlt => "kmeans_alt",
            Method::Reprojected => "reprojected",
            Method::CnInit => "cn_init",
            Method::Pooling => "pooling",
        }
    }

    /// Whether the learned model carries a task metric worth exporting.
    pub fn exports_sigma(self) -> bool {
        matches!(self, Method::ClusterNorm | Method::KMeansAlt)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace('-', "_");
        Method::ALL
            .into_iter()
            .find(|m| m.name() == key)
            .ok_or_else(|| anyhow!("unknown method '{s}'"))
    }
}

/// Hyperparameters shared by every method of an experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct Hyper {
    pub lambda: f64,
    pub lambda_overrides: BTreeMap<Method, f64>,
    pub eps_m: f64,
    pub eps_b: f64,
    pub eps_w: f64,
    pub clusters: usize,
    pub loss: Loss,
    pub trace_alpha: f64,
    pub trace_beta: f64,
    pub max_iters: usize,
    pub grad_tol: f64,
    pub kmeans_restarts: usize,
    pub max_outer_iters: usize,
}

impl Default for Hyper {
    fn default() -> Self {
        Self {
            lambda: 0.03,
            lambda_overrides: BTreeMap::new(),
            eps_m: 0.01,
            eps_b: 0.01,
            eps_w: 1.0,
            clusters: 2,
            loss: Loss::Square,
            trace_alpha: 1e-6,
            trace_beta: 1e6,
            max_iters: 5000,
            grad_tol: 1e-5,
            kmeans_restarts: 3,
            max_outer_iters: 20,
        }
    }
}

impl Hyper {
    pub fn lambda_for(&self, method: Method) -> f64 {
        self.lambda_overrides
            .get(&method)
            .copied()
            .unwrap_or(self.lambda)
    }

    pub fn weights(&self) -> Result<PenaltyWeights<f64>> {
        Ok(PenaltyWeights::new(self.eps_m, self.eps_b, self.eps_w)?)
    }
}

/// A full benchmark description.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub methods: Vec<Method>,
    pub n_train: Vec<usize>,
    pub seeds: Vec<u64>,
    pub folds: Vec<usize>,
    pub hyper: Hyper,
    pub d: usize,
    pub points_per_task: usize,
    /// Record wall-clock seconds per cell; disable for byte-reproducible output.
    pub record_time: bool,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            methods: Method::ALL.to_vec(),
            n_train: vec![24, 48, 96, 192, 384],
            seeds: (0..10).collect(),
            folds: vec![0],
            hyper: Hyper::default(),
            d: 30,
            points_per_task: 2000,
            record_time: true,
        }
    }
}

fn parse_list<T: FromStr>(value: &str) -> Result<Vec<T>>
where
    T::Err: fmt::Display,
{
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<T>().map_err(|e| anyhow!("'{s}': {e}")))
        .collect()
}

fn parse_int_list<T>(value: &str) -> Result<Vec<T>>
where
    T: FromStr + Copy + TryFrom<u64>,
    T::Err: fmt::Display,
{
    let mut out = Vec::new();
    for item in value.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        if let Some((lo, hi)) = item.split_once('-') {
            let lo: u64 = lo.trim().parse().with_context(|| format!("range start '{lo}'"))?;
            let hi: u64 = hi.trim().parse().with_context(|| format!("range end '{hi}'"))?;
            if hi < lo {
                bail!("empty range '{item}'");
            }
            for v in lo..=hi {
                out.push(T::try_from(v).map_err(|_| anyhow!("{v} out of range"))?);
            }
        } else {
            out.push(item.parse::<T>().map_err(|e| anyhow!("'{item}': {e}"))?);
        }
    }
    Ok(out)
}

fn parse_scalar<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: fmt::Display,
{
    value
        .trim()
        .parse::<T>()
        .map_err(|e| anyhow!("{key}: '{value}': {e}"))
}

impl ExperimentSpec {
    pub fn parse(text: &str) -> Result<Self> {
        let mut spec = ExperimentSpec::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("line {}: expected 'key = value'", lineno + 1))?;
            let (key, value) = (key.trim(), value.trim());
            let h = &mut spec.hyper;
            match key {
                "methods" => spec.methods = parse_list(value)?,
                "n_train" => spec.n_train = parse_int_list(value)?,
                "seeds" => spec.seeds = parse_int_list(value)?,
                "folds" => spec.folds = parse_int_list(value)?,
                "lambda" => h.lambda = parse_scalar(key, value)?,
                "eps_m" => h.eps_m = parse_scalar(key, value)?,
                "eps_b" => h.eps_b = parse_scalar(key, value)?,
                "eps_w" => h.eps_w = parse_scalar(key, value)?,
                "clusters" | "r" => h.clusters = parse_scalar(key, value)?,
                "loss" => h.loss = value.parse()?,
                "trace_alpha" => h.trace_alpha = parse_scalar(key, value)?,
                "trace_beta" => h.trace_beta = parse_scalar(key, value)?,
                "max_iters" => h.max_iters = parse_scalar(key, value)?,
                "grad_tol" => h.grad_tol = parse_scalar(key, value)?,
                "kmeans_restarts" => h.kmeans_restarts = parse_scalar(key, value)?,
                "max_outer_iters" => h.max_outer_iters = parse_scalar(key, value)?,
                "d" => spec.d = parse_scalar(key, value)?,
                "points_per_task" => spec.points_per_task = parse_scalar(key, value)?,
                "record_time" => spec.record_time = parse_scalar(key, value)?,
                other => match other.strip_prefix("lambda.") {
                    Some(method) => {
                        let method: Method = method.parse()?;
                        h.lambda_overrides.insert(method, parse_scalar(key, value)?);
                    }
                    None => bail!("line {}: unknown key '{other}'", lineno + 1),
                },
            }
        }
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() || self.n_train.is_empty() || self.seeds.is_empty() {
            bail!("methods, n_train and seeds must be non-empty");
        }
        if self.folds.is_empty() {
            bail!("folds must be non-empty");
        }
        let mut methods = self.methods.clone();
        methods.sort();
        methods.dedup();
        if methods.len() != self.methods.len() {
            bail!("duplicate method in spec");
        }
        self.hyper.weights()?;
        Ok(())
    }

    /// Renders the experiment back to the key-value format.
    pub fn to_text(&self) -> String {
        let join = |v: Vec<String>| v.join(", ");
        let h = &self.hyper;
        let mut out = String::new();
        let mut put = |k: &str, v: String| out.push_str(&format!("{k} = {v}\n"));
        put("methods", join(self.methods.iter().map(|m| m.to_string()).collect()));
        put("n_train", join(self.n_train.iter().map(|v| v.to_string()).collect()));
        put("seeds", join(self.seeds.iter().map(|v| v.to_string()).collect()));
        put("folds", join(self.folds.iter().map(|v| v.to_string()).collect()));
        put("lambda", h.lambda.to_string());
        for (m, v) in &h.lambda_overrides {
            put(&format!("lambda.{m}"), v.to_string());
        }
        put("eps_m", h.eps_m.to_string());
        put("eps_b", h.eps_b.to_string());
        put("eps_w", h.eps_w.to_string());
        put("clusters", h.clusters.to_string());
        put("loss", h.loss.name().to_string());
        put("trace_alpha", h.trace_alpha.to_string());
        put("trace_beta", h.trace_beta.to_string());
        put("max_iters", h.max_iters.to_string());
        put("grad_tol", h.grad_tol.to_string());
        put("kmeans_restarts", h.kmeans_restarts.to_string());
        put("max_outer_iters", h.max_outer_iters.to_string());
        put("d", self.d.to_string());
        put("points_per_task", self.points_per_task.to_string());
        put("record_time", self.record_time.to_string());
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_flat_spec() {
        let spec = ExperimentSpec::parse(
            "# demo\nmethods = frobenius, cluster_norm\nn_train = 24,48\nseeds = 0-2, 7\n\
             lambda = 0.5\nlambda.trace = 2\neps_w = 4 # within\nrecord_time = false\n",
        )
        .unwrap();
        assert_eq!(spec.methods, vec![Method::Frobenius, Method::ClusterNorm]);
        assert_eq!(spec.seeds, vec![0, 1, 2, 7]);
        assert_eq!(spec.hyper.lambda_for(Method::Trace), 2.0);
        assert_eq!(spec.hyper.lambda_for(Method::Frobenius), 0.5);
        assert_eq!(spec.hyper.eps_w, 4.0);
        assert!(!spec.record_time);
        assert_eq!(ExperimentSpec::parse(&spec.to_text()).unwrap(), spec);
    }

    #[test]
    fn rejects_unknown_keys_and_methods() {
        assert!(ExperimentSpec::parse("colour = blue\n").is_err());
        assert!(ExperimentSpec::parse("methods = magic\n").is_err());
        assert!(ExperimentSpec::parse("methods = trace, trace\n").is_err());
        assert!(ExperimentSpec::parse("eps_m = -1\n").is_err());
    }

    #[test]
    fn every_method_name_round_trips() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
    }
}
