use std::collections::HashMap;
use std::path::PathBuf;
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

#[derive(Parser, Debug)]
#[command(name = "ultra", version, about = "Isotropic heat semigroups on ultrametric spaces and their tree walks")]
pub struct Cli {
    #[command(subcommand)]
    pub cmd: Cmd,
    #[command(flatten)]
    pub opts: Opts,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cmd {
    /// Heat kernel p(t,x,y) on all pairs
    Kernel,
    /// Eigenvalues and multiplicities of the Laplacian
    Spectrum,
    /// Green function, or the recurrence verdict
    Green,
    /// Jump kernel J(x,y)
    Jump,
    /// Moments E d(x0,X_t)^γ against quadrature
    Moments,
    /// Ratio band of the kernel against a heat-kernel envelope
    Envelope,
    /// Hitting probabilities, Green function and exit law of a walk
    Walk,
    /// Walk ↔ boundary process correspondence
    Duality,
    /// Energy of harmonic extensions against the Naïm double sum
    Doobnaim,
    /// Monte Carlo sampling of the jump process
    Simulate,
    /// p-adic arithmetic, analytic models and rotation-invariant classes
    Padic,
}

impl Cmd {
    pub fn name(self) -> &'static str {
        match self {
            Cmd::Kernel => "kernel",
            Cmd::Spectrum => "spectrum",
            Cmd::Green => "green",
            Cmd::Jump => "jump",
            Cmd::Moments => "moments",
            Cmd::Envelope => "envelope",
            Cmd::Walk => "walk",
            Cmd::Duality => "duality",
            Cmd::Doobnaim => "doobnaim",
            Cmd::Simulate => "simulate",
            Cmd::Padic => "padic",
        }
    }
}

/// Every flag is also a key of the `--config` JSON object (same name,
/// kebab-case). Values in the config file win over flags.
#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct Opts {
    /// p-adic unit ball: p=2,depth=3[,dim=1]
    #[arg(long, global = true)]
    pub padic: Option<String>,
    /// ℤₚ with σ(r) = exp(−(p/r)^α): p=2,alpha=1,depth=4
    #[arg(long, global = true)]
    pub zp: Option<String>,
    /// Window of ℚₚⁿ around radius 1: p=2,alpha=0.5,depth=6[,n=1]
    #[arg(long, global = true)]
    pub qp: Option<String>,
    /// Tree JSON file, or `random`
    #[arg(long, global = true)]
    pub tree: Option<String>,
    /// Walk JSON file
    #[arg(long, global = true)]
    pub walk: Option<String>,
    /// standard | padic:α[:b] | logpower:α | JSON file
    #[arg(long, global = true)]
    pub sigma: Option<String>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub t: Option<f64>,
    /// lo:hi:n (log-spaced) or a comma list
    #[arg(long, global = true)]
    pub t_grid: Option<String>,
    #[arg(long, global = true)]
    pub gamma: Option<f64>,
    /// Starting point (leaf index, or vertex for walks)
    #[arg(long, global = true)]
    pub x0: Option<usize>,
    #[arg(long, global = true)]
    pub paths: Option<u64>,
    /// doubling | nab:α:β | log:α | exp:α | qp
    #[arg(long, global = true)]
    pub family: Option<String>,
    /// Analytic model JSON, e.g. {"model":"taibleson","p":2,"n":2,"alpha":0.5}
    #[arg(long, global = true)]
    pub model: Option<String>,
    /// Radius for analytic models
    #[arg(long, global = true)]
    pub r: Option<f64>,
    /// p-adic literal, e.g. "p:2 val:-1 digits:101"
    #[arg(long, global = true)]
    pub x: Option<String>,
    #[arg(long, global = true)]
    pub y: Option<String>,
    /// p=2,m0=0,a=1;1/2;1/4;1/8
    #[arg(long, global = true)]
    pub rotation: Option<String>,
    /// Rebuild the walk from its own boundary process
    #[arg(long, global = true)]
    pub roundtrip: bool,
    /// Also run the acceptance checks for the selected model
    #[arg(long, global = true)]
    pub check: bool,
    /// Output file; defaults to $ULTRA_OUT_DIR/<command>.<ext>, else stdout
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

impl Opts {
    pub fn resolve(flags: Opts) -> Result<Opts> {
        let Some(path) = flags.config.clone() else {
            return Ok(flags);
        };
        let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        let file: serde_json::Map<String, serde_json::Value> =
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        let serde_json::Value::Object(mut merged) = serde_json::to_value(&flags)? else { unreachable!() };
        for (k, v) in file {
            merged.insert(k, v);
        }
        let mut out: Opts = serde_json::from_value(serde_json::Value::Object(merged)).context("config keys")?;
        out.config = flags.config;
        Ok(out)
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }
}

/// `k=v,k=v` lists.
pub struct KeyValues {
    what: &'static str,
    map: HashMap<String, String>,
}

impl KeyValues {
    pub fn parse(what: &'static str, s: &str) -> Result<KeyValues> {
        let mut map = HashMap::new();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (k, v) = part.split_once('=').ok_or_else(|| anyhow!("--{what}: expected key=value, got `{part}`"))?;
            map.insert(k.trim().to_string(), v.trim().to_string());
        }
        Ok(KeyValues { what, map })
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<T> {
        self.opt(key)?.ok_or_else(|| anyhow!("--{}: missing `{key}`", self.what))
    }

    pub fn opt<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        self.map
            .get(key)
            .map(|v| v.parse::<T>().map_err(|_| anyhow!("--{}: bad value for `{key}`: {v}", self.what)))
            .transpose()
    }
}

/// `lo:hi:n` gives n log-spaced points, otherwise a comma list.
pub fn parse_grid(s: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() == 3 {
        let lo: f64 = parts[0].trim().parse()?;
        let hi: f64 = parts[1].trim().parse()?;
        let n: usize = parts[2].trim().parse()?;
        if !(lo > 0.0 && hi >= lo && n >= 1) {
            bail!("t-grid needs 0 < lo ≤ hi and n ≥ 1");
        }
        return Ok(log_grid(lo, hi, n));
    }
    let v: Vec<f64> = s.split(',').map(|x| x.trim().parse::<f64>()).collect::<std::result::Result<_, _>>()?;
    if v.is_empty() || v.iter().any(|t| !(*t >= 0.0)) {
        bail!("t-grid values must be non-negative");
    }
    Ok(v)
}

pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n).map(|i| lo * (hi / lo).powf(i as f64 / (n - 1) as f64)).collect()
}
