//! Subcommand options. Every option can come from the command line or from
//! the matching table of a TOML config file; the command line wins.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::Context as _;
use clap::Args;
use serde::Deserialize;

/// Bad input from the user: exit code 2.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

pub fn config_error(msg: impl Into<String>) -> anyhow::Error {
    ConfigError(msg.into()).into()
}

/// Layout of a config file: one optional table per subcommand.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub hull: Option<HullArgs>,
    pub laminate: Option<LaminateArgs>,
    pub build: Option<BuildArgs>,
    pub integrate: Option<IntegrateArgs>,
    pub verify: Option<VerifyArgs>,
    pub rigidity: Option<RigidityArgs>,
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| config_error(format!("cannot read {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| config_error(format!("{}: {e}", path.display())))
    }
}

macro_rules! merge_fields {
    ($t:ty; $($f:ident),*) => {
        impl $t {
            /// Fills options missing on the command line from the file.
            pub fn merged(self, file: Option<Self>) -> Self {
                let Some(file) = file else { return self };
                Self { $($f: self.$f.or(file.$f),)* }
            }
        }
    };
}

#[derive(Args, Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HullArgs {
    /// Energy level r.
    #[arg(long)]
    pub r: Option<f64>,
    /// Grid nodes per axis (default 81).
    #[arg(long)]
    pub res: Option<usize>,
    /// Boundary samples of the convex hull (default 2000).
    #[arg(long)]
    pub boundary_samples: Option<usize>,
    /// Seed for the boundary samples (default 0).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Directory for report.tsv, occupancy.fld1 and slices.tsv.
    #[arg(long)]
    pub out: Option<PathBuf>,
}
merge_fields!(HullArgs; r, res, boundary_samples, seed, out);

#[derive(Args, Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LaminateArgs {
    /// Slice point a,b,c (decomposed on the slice region at level r).
    #[arg(long)]
    pub point: Option<String>,
    /// Planar state v1,v2,u11,u12 (decomposed below level r within eps).
    #[arg(long)]
    pub state: Option<String>,
    #[arg(long)]
    pub r: Option<f64>,
    /// Level tolerance for --state (default 0.05).
    #[arg(long)]
    pub eps: Option<f64>,
    /// Output LAM1 file; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}
merge_fields!(LaminateArgs; point, state, r, eps, out);

#[derive(Args, Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BuildArgs {
    /// LAM1 file to realize.
    #[arg(long)]
    pub laminate: Option<PathBuf>,
    /// Slice point a,b,c; its slice decomposition at level r is realized.
    #[arg(long)]
    pub point: Option<String>,
    #[arg(long)]
    pub r: Option<f64>,
    /// Fraction and deviation tolerance (default 0.05).
    #[arg(long)]
    pub eps: Option<f64>,
    /// Grid points per axis (default 128).
    #[arg(long)]
    pub n: Option<usize>,
    /// Starting periods across the cube (default 4).
    #[arg(long)]
    pub periods: Option<f64>,
    /// Output FLD1 file.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Optional CSV export of the field.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}
merge_fields!(BuildArgs; laminate, point, r, eps, n, periods, out, csv);

#[derive(Args, Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegrateArgs {
    /// Catalog flow: zero, shear2d, cellular2d, beltrami3d (default zero).
    #[arg(long)]
    pub flow: Option<String>,
    /// Flow parameters, e.g. --param amp=0.5 --param k=2.
    #[arg(long = "param", value_parser = parse_kv)]
    #[serde(skip)]
    pub param: Vec<(String, f64)>,
    /// Flow parameters from a config file.
    #[arg(skip)]
    pub params: Option<BTreeMap<String, f64>>,
    /// const:<c> or const:<c>+e0 (default const:1).
    #[arg(long)]
    pub profile: Option<String>,
    /// Number of stages (default 3).
    #[arg(long)]
    pub stages: Option<usize>,
    /// Cells per axis for each stage; the last entry repeats (default 1).
    #[arg(long, value_delimiter = ',')]
    pub cells: Option<Vec<usize>>,
    /// Level tolerance for each stage; halves per stage by default from 0.05.
    #[arg(long, value_delimiter = ',')]
    pub epsilons: Option<Vec<f64>>,
    /// Fraction of the local energy used per stage (default 0.9,0.96,1).
    #[arg(long, value_delimiter = ',')]
    pub levels: Option<Vec<f64>>,
    /// Oscillation periods per laminate depth (default 2,5).
    #[arg(long, value_delimiter = ',')]
    pub periods: Option<Vec<f64>>,
    /// Cutoff ramp relative to the cell width (default 0.3).
    #[arg(long)]
    pub cutoff: Option<f64>,
    /// Reported H^-1 bound (default 0.1).
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Grid points per axis (default 128).
    #[arg(long, short = 'N')]
    #[serde(alias = "N")]
    pub n: Option<usize>,
    /// Tolerances: stop below this defect (default 1e-6).
    #[arg(long)]
    pub tol: Option<f64>,
    /// Minimum defect decrease per stage (default 1e-4).
    #[arg(long)]
    pub floor: Option<f64>,
    /// Required e - |v0|^2 at the start (default 1e-3).
    #[arg(long)]
    pub margin: Option<f64>,
    /// Report TSV file; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Final field as FLD1.
    #[arg(long)]
    pub field: Option<PathBuf>,
}

impl IntegrateArgs {
    pub fn merged(self, file: Option<Self>) -> Self {
        let Some(file) = file else { return self };
        let mut param = file.params.unwrap_or_default().into_iter().collect::<Vec<_>>();
        for (k, v) in self.param {
            param.retain(|(j, _)| *j != k);
            param.push((k, v));
        }
        Self {
            flow: self.flow.or(file.flow),
            param,
            params: None,
            profile: self.profile.or(file.profile),
            stages: self.stages.or(file.stages),
            cells: self.cells.or(file.cells),
            epsilons: self.epsilons.or(file.epsilons),
            levels: self.levels.or(file.levels),
            periods: self.periods.or(file.periods),
            cutoff: self.cutoff.or(file.cutoff),
            sigma: self.sigma.or(file.sigma),
            seed: self.seed.or(file.seed),
            n: self.n.or(file.n),
            tol: self.tol.or(file.tol),
            floor: self.floor.or(file.floor),
            margin: self.margin.or(file.margin),
            out: self.out.or(file.out),
            field: self.field.or(file.field),
        }
    }
}

#[derive(Args, Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyArgs {
    /// FLD1 file to check.
    pub file: Option<PathBuf>,
    /// Bound on both weak residuals (default 1e-8).
    #[arg(long)]
    pub residual_tol: Option<f64>,
    /// Allowed hull gap for iterate fields (default 1e-9).
    #[arg(long)]
    pub gap_tol: Option<f64>,
}
merge_fields!(VerifyArgs; file, residual_tol, gap_tol);

#[derive(Args, Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RigidityArgs {
    /// Random boundary points for the normal-form round trip (default 1000).
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Normal-frame velocity component along the larger axis (default 0.5);
    /// the smaller normal-form eigenvalue is |v|^2 - 1/2.
    #[arg(long)]
    pub v1: Option<f64>,
    /// Normal-frame velocity component along the smaller axis (default 0.3).
    #[arg(long)]
    pub v2: Option<f64>,
    /// Mean pressure (default 0).
    #[arg(long)]
    pub qbar: Option<f64>,
    /// Grid points per axis of the commutativity sweep (default 256).
    #[arg(long)]
    pub n: Option<usize>,
    /// Sweep frequencies (default 4,8,16,32).
    #[arg(long, value_delimiter = ',')]
    pub frequencies: Option<Vec<f64>>,
    /// Divergence-breaking amplitude of the negative control (default 1e-2).
    #[arg(long)]
    pub corruption: Option<f64>,
    /// Directory for the TSV outputs; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}
merge_fields!(RigidityArgs; samples, seed, v1, v2, qbar, n, frequencies, corruption, out);

fn parse_kv(s: &str) -> Result<(String, f64), String> {
    let (k, v) = s.split_once('=').ok_or_else(|| format!("expected key=value, got '{s}'"))?;
    let v: f64 = v.parse().map_err(|_| format!("bad number in '{s}'"))?;
    Ok((k.to_string(), v))
}

/// Parses a comma-separated list of numbers of a fixed length.
pub fn parse_list(s: &str, len: usize, what: &str) -> anyhow::Result<Vec<f64>> {
    let v: Vec<f64> = s
        .split(',')
        .map(|x| x.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| config_error(format!("{what}: expected {len} comma-separated numbers, got '{s}'")))?;
    if v.len() != len {
        return Err(config_error(format!("{what}: expected {len} numbers, got {}", v.len())));
    }
    Ok(v)
}

pub fn write_out(path: &Path, data: &[u8]) -> anyhow::Result<()> {
    if let Some(dir) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    std::fs::write(path, data).with_context(|| format!("writing {}", path.display()))
}
