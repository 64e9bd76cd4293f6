//! Run configuration: a TOML document whose keys are exactly the fields of
//! [`RunConfig`]. Unknown keys are rejected.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use oddpert_core::diagnostics::EnergyOptions;
use oddpert_core::evolve::{EvolutionConfig, GridSpec, InitialDataSpec, InitialKind, System, TargetField};
use oddpert_core::geometry::Background;
use oddpert_core::grid::Grid;
use oddpert_core::harmonics::ModeIndex;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, ExitCode};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SystemName {
    Coupled,
    Rw,
    Generator,
}

impl From<SystemName> for System {
    fn from(s: SystemName) -> Self {
        match s {
            SystemName::Coupled => System::Coupled,
            SystemName::Rw => System::Rw,
            SystemName::Generator => System::Generator,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialKindName {
    MomentarilyStaticBump,
    PureGauge,
    Kerr,
    RwBump,
}

impl From<InitialKindName> for InitialKind {
    fn from(k: InitialKindName) -> Self {
        match k {
            InitialKindName::MomentarilyStaticBump => InitialKind::MomentarilyStaticBump,
            InitialKindName::PureGauge => InitialKind::PureGauge,
            InitialKindName::Kerr => InitialKind::Kerr,
            InitialKindName::RwBump => InitialKind::RwBump,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetName {
    H1,
    H2,
    P,
    Q,
    X,
}

impl From<TargetName> for TargetField {
    fn from(t: TargetName) -> Self {
        match t {
            TargetName::H1 => TargetField::H1,
            TargetName::H2 => TargetField::H2,
            TargetName::P => TargetField::P,
            TargetName::Q => TargetField::Q,
            TargetName::X => TargetField::X,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeSection {
    pub ell: u32,
    pub m: i32,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub rstar_min: f64,
    pub rstar_max: f64,
    pub n_points: usize,
    pub cfl: f64,
}

impl Default for GridSection {
    fn default() -> Self {
        let g = GridSpec::default();
        GridSection { rstar_min: g.rstar_min, rstar_max: g.rstar_max, n_points: g.n_points, cfl: g.cfl }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialDataSection {
    pub kind: InitialKindName,
    pub center: f64,
    pub width: f64,
    pub amplitude: f64,
    pub target_field: TargetName,
}

fn always() -> bool {
    true
}

/// Everything needed to reproduce one evolution.
///
/// Scalar keys come before the sections so that the printed form is valid
/// TOML.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub mass: f64,
    pub system: SystemName,
    pub t_final: f64,
    pub snapshot_stride: usize,
    /// Areal radii of the probes.
    pub probes: Vec<f64>,
    /// Exponents `p` of the weighted energies.
    pub energies: Vec<f64>,
    /// Areal radius range of the energy integrals; the whole grid by default.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub energy_r_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub energy_r_max: Option<f64>,
    pub outputs: PathBuf,
    /// Runs never draw random numbers; the key only documents that.
    #[serde(default = "always")]
    pub deterministic: bool,
    pub mode: ModeSection,
    pub grid: GridSection,
    pub initial_data: InitialDataSection,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::new(ExitCode::Usage, format!("config: {e}")))?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::new(ExitCode::Usage, format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn print(&self) -> String {
        toml::to_string(self).expect("run configuration always serializes")
    }

    fn check(&self) -> Result<(), CliError> {
        let bad = |m: &str| Err(CliError::new(ExitCode::Usage, format!("config: {m}")));
        if !self.deterministic {
            return bad("deterministic must be true");
        }
        if self.snapshot_stride == 0 {
            return bad("snapshot_stride must be positive");
        }
        if !(self.t_final.is_finite() && self.t_final >= 0.0) {
            return bad("t_final must be finite and non-negative");
        }
        if self.energies.iter().any(|p| !p.is_finite()) {
            return bad("energy exponents must be finite");
        }
        if self.energy_r_min.unwrap_or(0.0) >= self.energy_r_max.unwrap_or(f64::INFINITY) {
            return bad("energy_r_min must be below energy_r_max");
        }
        Ok(())
    }

    pub fn background(&self) -> Result<Background, CliError> {
        Background::new(self.mass).map_err(CliError::config)
    }

    pub fn grid(&self) -> Result<Arc<Grid>, CliError> {
        let spec = GridSpec {
            rstar_min: self.grid.rstar_min,
            rstar_max: self.grid.rstar_max,
            n_points: self.grid.n_points,
            cfl: self.grid.cfl,
        };
        Ok(Arc::new(Grid::new(spec, self.background()?).map_err(CliError::config)?))
    }

    /// Energy options for exponent `p`.
    pub fn energy_options(&self, p: f64, degenerate: bool) -> EnergyOptions {
        EnergyOptions {
            p_exponent: p,
            degenerate,
            r_min: self.energy_r_min.unwrap_or(0.0),
            r_max: self.energy_r_max.unwrap_or(f64::INFINITY),
            ..EnergyOptions::default()
        }
    }

    pub fn evolution(&self) -> Result<EvolutionConfig, CliError> {
        let d = &self.initial_data;
        Ok(EvolutionConfig {
            system: self.system.into(),
            mode: ModeIndex::new(self.mode.ell, self.mode.m).map_err(CliError::config)?,
            t_final: self.t_final,
            snapshot_stride: self.snapshot_stride,
            probe_radii: self.probes.clone(),
            initial_data: InitialDataSpec {
                kind: d.kind.into(),
                center: d.center,
                width: d.width,
                amplitude: d.amplitude,
                target: d.target_field.into(),
            },
            causally_clean: false,
            energy: None,
            potential_off: false,
        })
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            mass: 1.0,
            system: SystemName::Coupled,
            t_final: 100.0,
            snapshot_stride: 16,
            probes: vec![10.0, 50.0],
            energies: vec![0.0],
            energy_r_min: None,
            energy_r_max: None,
            outputs: PathBuf::from("out"),
            deterministic: true,
            mode: ModeSection { ell: 2, m: 0 },
            grid: GridSection::default(),
            initial_data: InitialDataSection {
                kind: InitialKindName::MomentarilyStaticBump,
                center: 20.0,
                width: 3.0,
                amplitude: 1.0,
                target_field: TargetName::H1,
            },
        }
    }
}
