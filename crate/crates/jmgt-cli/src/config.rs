//! Experiment configuration: a TOML file with `medium`, `kernel`, `grid`,
//! `solver`, `analysis` and `output` blocks plus a seed. Every field has a
//! default, so an empty file describes the default critical medium with
//! exponential memory.

use std::path::{Path, PathBuf};

use jmgt::decay_lab::{DecayConfig, RadialProfile};
use jmgt::history_state::{InitialData, MemoryRepr, Profile};
use jmgt::solver::{NonlinearityForm, Scheme, SolverConfig};
use jmgt::spectral::Grid;
use jmgt::{MediumParams, MemoryKernel};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub medium: MediumBlock,
    pub kernel: KernelBlock,
    pub grid: GridBlock,
    pub solver: SolverBlock,
    pub analysis: AnalysisBlock,
    pub output: OutputBlock,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 7,
            medium: MediumBlock::default(),
            kernel: KernelBlock::default(),
            grid: GridBlock::default(),
            solver: SolverBlock::default(),
            analysis: AnalysisBlock::default(),
            output: OutputBlock::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MediumBlock {
    pub tau: f64,
    pub c: f64,
    /// Defaults to the critical value τc².
    pub b: Option<f64>,
    pub k: f64,
    pub alpha: f64,
}

impl Default for MediumBlock {
    fn default() -> Self {
        MediumBlock {
            tau: 1.0,
            c: 1.0,
            b: None,
            k: 0.0,
            alpha: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKindCfg {
    Exponential,
    Csv,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KernelBlock {
    pub kind: KernelKindCfg,
    pub m: f64,
    pub tau_g: f64,
    /// Two-column (r, g) file for `kind = "csv"`, relative to the config file.
    pub path: Option<PathBuf>,
}

impl Default for KernelBlock {
    fn default() -> Self {
        KernelBlock {
            kind: KernelKindCfg::Exponential,
            m: 0.5,
            tau_g: 1.0,
            path: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridBlock {
    /// Spatial dimension.
    pub n: usize,
    #[serde(rename = "N")]
    pub points: usize,
    #[serde(rename = "L")]
    pub length: f64,
}

impl Default for GridBlock {
    fn default() -> Self {
        GridBlock {
            n: 1,
            points: 256,
            length: 40.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MemoryCfg {
    History,
    ReducedZ,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverBlock {
    pub dt: f64,
    pub t_end: f64,
    pub scheme: Scheme,
    pub nonlinearity_form: NonlinearityForm,
    pub snapshot_stride: usize,
    pub memory: MemoryCfg,
    /// Age horizon of the history grid; defaults to 25·τ_g.
    pub r_max: Option<f64>,
    pub dealias: bool,
    /// Initial data; defaults to Gaussian ψ₀, ψ₁ scaled to the box.
    pub initial: Option<InitialData>,
}

impl Default for SolverBlock {
    fn default() -> Self {
        SolverBlock {
            dt: 0.02,
            t_end: 10.0,
            scheme: Scheme::ExactLinear,
            nonlinearity_form: NonlinearityForm::DefF,
            snapshot_stride: 10,
            memory: MemoryCfg::History,
            r_max: None,
            dealias: true,
            initial: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileCfg {
    Gaussian,
    SobolevLimited,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisBlock {
    /// Regularity index of the energy norms.
    pub s: usize,
    pub rho_min: f64,
    pub rho_max: f64,
    pub rho_points: usize,
    pub fit_window: (f64, f64),
    pub fit_samples: usize,
    pub fit_tol: f64,
    /// Dimension of R^n for decay experiments.
    pub decay_n: usize,
    pub decay_j: Vec<usize>,
    pub profile: ProfileCfg,
    /// Exponent of (1+ρ²)^{−β/2} for Sobolev-limited profiles.
    pub beta: f64,
    pub psi2: f64,
    pub w_and_v: bool,
    pub regularity_loss: bool,
    pub s_data: f64,
    /// Derivative orders κ of the residual checks.
    pub kappa: Vec<usize>,
    pub verify_points: usize,
    pub verify_t_end: f64,
    pub appendix: bool,
    pub oracle: bool,
}

impl Default for AnalysisBlock {
    fn default() -> Self {
        let d = DecayConfig::default();
        AnalysisBlock {
            s: 3,
            rho_min: 1e-3,
            rho_max: 1e3,
            rho_points: 61,
            fit_window: d.window,
            fit_samples: d.samples,
            fit_tol: d.tol,
            decay_n: 3,
            decay_j: vec![0, 1],
            profile: ProfileCfg::Gaussian,
            beta: 2.0,
            psi2: 0.0,
            w_and_v: false,
            regularity_loss: false,
            s_data: 0.0,
            kappa: vec![0, 1],
            verify_points: 64,
            verify_t_end: 6.0,
            appendix: true,
            oracle: true,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputBlock {
    /// Defaults to $JMGT_OUTPUT_DIR, then `jmgt-output`.
    pub directory: Option<PathBuf>,
    /// Binary state snapshots at every stored record (simulate).
    pub snapshots: bool,
}

/// Environment variable naming the default output directory.
pub const OUTPUT_ENV: &str = "JMGT_OUTPUT_DIR";

fn usage(e: impl std::fmt::Display) -> CliError {
    CliError::Usage(e.to_string())
}

/// Sets `path = value` inside a TOML table; `value` is parsed as TOML and
/// falls back to a bare string.
fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<(), CliError> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| usage(format!("override `{assignment}` is not key=value")))?;
    let value = match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.to_string()),
    };
    let keys: Vec<&str> = path.trim().split('.').collect();
    let mut cur = table;
    for k in &keys[..keys.len() - 1] {
        cur = cur
            .entry(k.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| usage(format!("`{k}` in `{path}` is not a table")))?;
    }
    cur.insert(keys[keys.len() - 1].to_string(), value);
    Ok(())
}

impl ExperimentConfig {
    /// Reads `path` (if any), applies `key=value` overrides and resolves
    /// relative kernel paths against the config file's directory.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self, CliError> {
        let mut table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| usage(format!("{}: {e}", p.display())))?;
                toml::from_str::<toml::Table>(&text).map_err(|e| usage(format!("{}: {e}", p.display())))?
            }
            None => toml::Table::new(),
        };
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let mut cfg: ExperimentConfig = toml::Value::Table(table).try_into().map_err(usage)?;
        if let (Some(base), Some(kp)) = (path.and_then(Path::parent), cfg.kernel.path.as_ref()) {
            if kp.is_relative() {
                cfg.kernel.path = Some(base.join(kp));
            }
        }
        Ok(cfg)
    }

    pub fn params(&self) -> Result<MediumParams, CliError> {
        let m = &self.medium;
        if m.alpha != 1.0 {
            return Err(usage(format!("alpha is fixed to 1, got {}", m.alpha)));
        }
        Ok(MediumParams::new(m.tau, m.c, m.b.unwrap_or(m.tau * m.c * m.c), m.k)?)
    }

    pub fn kernel(&self) -> Result<MemoryKernel, CliError> {
        let c = self.medium.c;
        match self.kernel.kind {
            KernelKindCfg::Exponential => Ok(MemoryKernel::exponential(self.kernel.m, self.kernel.tau_g, c)?),
            KernelKindCfg::Csv => {
                let p = self
                    .kernel
                    .path
                    .as_ref()
                    .ok_or_else(|| usage("kernel.kind = \"csv\" needs kernel.path"))?;
                let text = std::fs::read_to_string(p).map_err(|e| usage(format!("{}: {e}", p.display())))?;
                MemoryKernel::from_csv_str(&text, c).map_err(|e| usage(format!("{}: {e}", p.display())))
            }
        }
    }

    pub fn grid(&self) -> Result<Grid, CliError> {
        Ok(Grid::new(self.grid.n, self.grid.points, self.grid.length)?)
    }

    pub fn r_max(&self) -> f64 {
        self.solver.r_max.unwrap_or(25.0 * self.kernel.tau_g)
    }

    pub fn memory_repr(&self) -> MemoryRepr {
        match self.solver.memory {
            MemoryCfg::ReducedZ => MemoryRepr::ReducedZ,
            MemoryCfg::History => MemoryRepr::history_for_dt(self.solver.dt, self.r_max()),
        }
    }

    pub fn solver_config(&self, params: &MediumParams) -> Result<SolverConfig, CliError> {
        let s = &self.solver;
        let cfg = SolverConfig {
            dt: s.dt,
            t_end: s.t_end,
            scheme: s.scheme,
            dealias: s.dealias,
            snapshot_stride: s.snapshot_stride,
            nonlinearity_form: s.nonlinearity_form,
            keep_states: false,
        };
        cfg.validate(params)?;
        Ok(cfg)
    }

    pub fn initial_data(&self) -> InitialData {
        let l = self.grid.length;
        self.solver.initial.clone().unwrap_or(InitialData {
            psi0: Profile::Gaussian {
                amplitude: 1.0,
                width: l / 12.0,
                center: None,
            },
            psi1: Profile::Gaussian {
                amplitude: -0.5,
                width: l / 10.0,
                center: None,
            },
            psi2: Profile::Zero,
        })
    }

    pub fn decay_config(&self) -> DecayConfig {
        DecayConfig {
            window: self.analysis.fit_window,
            samples: self.analysis.fit_samples,
            tol: self.analysis.fit_tol,
        }
    }

    pub fn profile(&self) -> RadialProfile {
        let a = &self.analysis;
        let p = match a.profile {
            ProfileCfg::Gaussian => RadialProfile::gaussian(a.decay_n),
            ProfileCfg::SobolevLimited => RadialProfile::sobolev_limited(a.decay_n, a.beta),
        };
        p.with_psi2(a.psi2)
    }

    /// Output directory: config, then $JMGT_OUTPUT_DIR, then `jmgt-output`.
    pub fn output_dir(&self) -> PathBuf {
        self.output
            .directory
            .clone()
            .or_else(|| std::env::var_os(OUTPUT_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("jmgt-output"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_is_the_default() {
        let c = ExperimentConfig::load(None, &[]).unwrap();
        assert_eq!(c.grid.points, 256);
        assert!(c.params().unwrap().is_critical());
    }

    #[test]
    fn overrides_reach_nested_fields() {
        let c = ExperimentConfig::load(
            None,
            &[
                "medium.b=1.5".into(),
                "solver.scheme=etd4".into(),
                "analysis.fit_window=[10.0, 100.0]".into(),
            ],
        )
        .unwrap();
        assert_eq!(c.medium.b, Some(1.5));
        assert_eq!(c.solver.scheme, Scheme::Etd4);
        assert_eq!(c.analysis.fit_window, (10.0, 100.0));
    }

    #[test]
    fn unknown_fields_are_rejected() {
        assert!(matches!(
            ExperimentConfig::load(None, &["medium.speed=2".into()]),
            Err(CliError::Usage(_))
        ));
    }
}
