//! Run configuration: a sectioned TOML file whose keys the command-line flags override.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Bands,
    Simulate,
    Grape,
    Shoot,
    Analytic,
    Landscape,
    Scan,
    Search,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    #[default]
    Json,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub command: Option<Command>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub output: OutputSection,
    pub lattice: LatticeSection,
    pub two_level: TwoLevelSection,
    pub bands: BandsSection,
    pub simulate: SimulateSection,
    pub grape: GrapeSection,
    pub shoot: ShootSection,
    pub analytic: AnalyticSection,
    pub landscape: LandscapeSection,
    pub scan: ScanSection,
    pub search: SearchSection,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: Option<PathBuf>,
    pub format: Option<Format>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LatticeSection {
    pub s: Option<f64>,
    pub q: Option<f64>,
    pub n_max: Option<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TwoLevelSection {
    pub delta: Option<f64>,
    pub u0: Option<f64>,
    /// Clip the control to `|u| ≤ u0` (default true).
    pub bounded: Option<bool>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BandsSection {
    pub bands: Option<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateSection {
    pub model: Option<String>,
    /// `guess`, `bangbang` or a CSV path with columns `t_start, u_1..u_m`.
    pub control: Option<String>,
    pub target: Option<String>,
    pub t_f: Option<f64>,
    pub steps: Option<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GrapeSection {
    pub model: Option<String>,
    pub target: Option<String>,
    pub cost: Option<String>,
    pub t_f: Option<f64>,
    pub steps: Option<usize>,
    pub p0: Option<f64>,
    pub parameterization: Option<String>,
    pub epsilon: Option<f64>,
    pub line_search: Option<bool>,
    pub c1: Option<f64>,
    pub c2: Option<f64>,
    pub max_iter: Option<usize>,
    pub grad_mode: Option<String>,
    pub direction: Option<String>,
    pub cost_tol: Option<f64>,
    pub grad_tol: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ShootSection {
    pub problem: Option<String>,
    pub guess: Option<Vec<f64>>,
    pub p_x: Option<f64>,
    pub steps: Option<usize>,
    pub tol: Option<f64>,
    pub max_iter: Option<usize>,
    pub m: Option<f64>,
    pub alpha: Option<f64>,
    pub t_f: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalyticSection {
    pub kind: Option<String>,
    pub x0: Option<f64>,
    pub p0: Option<f64>,
    pub f0: Option<f64>,
    pub m: Option<f64>,
    pub alpha: Option<f64>,
    pub t_f: Option<f64>,
    pub s: Option<f64>,
    pub el_hz: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LandscapeSection {
    pub theta_points: Option<usize>,
    pub phi_points: Option<usize>,
    pub t_f: Option<f64>,
    pub steps: Option<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScanSection {
    pub parameter: Option<String>,
    pub from: Option<f64>,
    pub to: Option<f64>,
    pub points: Option<usize>,
    pub parameter2: Option<String>,
    pub from2: Option<f64>,
    pub to2: Option<f64>,
    pub points2: Option<usize>,
    /// CSV control; optimized with the `[grape]` settings when absent.
    pub control: Option<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SearchSection {
    pub method: Option<String>,
    pub function: Option<String>,
    pub population: Option<usize>,
    pub iterations: Option<usize>,
    pub starts: Option<usize>,
    pub t0: Option<f64>,
    pub cooling: Option<f64>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_toml(&text).with_context(|| format!("parsing {}", path.display()))
    }

    #[cfg(test)]
    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    /// Fixes the command, rejecting a file written for a different one.
    pub fn set_command(&mut self, command: Command) -> Result<()> {
        match self.command {
            Some(c) if c != command => bail!("config file is for `{c:?}`, not `{command:?}`"),
            _ => self.command = Some(command),
        }
        Ok(())
    }
}

/// `a = b.or(a)`: a flag given on the command line wins over the file.
pub fn merge<T>(slot: &mut Option<T>, flag: Option<T>) {
    if flag.is_some() {
        *slot = flag;
    }
}
