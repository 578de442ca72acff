//! Run configuration: a TOML file whose sections mirror the core types.
//! Every field is optional; missing values fall back to the 802.11ac
//! profile used throughout the figures.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use fdwlan_core::simulator::SimConfig;
use fdwlan_core::{
    AnalysisOptions, ApSuccessTerm, GeometryConfig, HiddenNormalization, MacPhyParams, ModelOptions, PayloadMode,
    Regime, RhoSource, SolverSettings, TopologyMode,
};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub scenario: String,
    /// Where to write CSV; stdout when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    pub geometry: GeometrySection,
    pub mac_phy: MacPhyParams,
    pub model: ModelSection,
    pub solver: SolverSettings,
    pub simulation: SimulationSection,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSpec>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            scenario: "default".into(),
            output: None,
            geometry: GeometrySection::default(),
            mac_phy: MacPhyParams::default(),
            model: ModelSection::default(),
            solver: SolverSettings::default(),
            simulation: SimulationSection::default(),
            sweep: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometrySection {
    pub radius: f64,
    pub annuli: usize,
    pub stations: usize,
}

impl Default for GeometrySection {
    fn default() -> Self {
        Self {
            radius: 1.0,
            annuli: 5,
            stations: 20,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub h_normalization: HiddenNormalization,
    pub ap_term: ApSuccessTerm,
    pub rho_source: RhoSource,
    /// RTS length in slots; overrides `rho_source` when set.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rho: Option<u32>,
    pub payload: PayloadMode,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationSection {
    pub horizon: u64,
    pub seed: u64,
    pub topology: TopologyMode,
    pub batches: usize,
    pub replications: usize,
}

impl Default for SimulationSection {
    fn default() -> Self {
        Self {
            horizon: 1_000_000,
            seed: 1,
            topology: TopologyMode::Sampled,
            batches: 10,
            replications: 20,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepVariable {
    #[serde(rename = "n")]
    Stations,
    #[serde(rename = "M", alias = "m")]
    Annuli,
    #[serde(rename = "d")]
    Distance,
}

impl SweepVariable {
    pub fn name(self) -> &'static str {
        match self {
            SweepVariable::Stations => "n",
            SweepVariable::Annuli => "M",
            SweepVariable::Distance => "d",
        }
    }
}

/// Either an explicit list of `values` or an inclusive `start..=stop` range
/// walked in `step` increments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub variable: SweepVariable,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stop: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step: Option<f64>,
}

impl SweepSpec {
    pub fn points(&self) -> Result<Vec<f64>> {
        let points = match (&self.values, self.start, self.stop) {
            (Some(_), Some(_), _) | (Some(_), _, Some(_)) => bail!("sweep: give either `values` or a range, not both"),
            (Some(values), None, None) => values.clone(),
            (None, Some(start), Some(stop)) => {
                let step = self.step.unwrap_or(1.0);
                ensure!(
                    step.is_finite() && step > 0.0,
                    "sweep: step must be positive, got {step}"
                );
                ensure!(stop >= start, "sweep: empty range {start}..={stop}");
                let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
                (0..count).map(|k| start + k as f64 * step).collect()
            }
            _ => bail!("sweep: `values` or both `start` and `stop` are required"),
        };
        ensure!(!points.is_empty(), "sweep: no points");
        for &v in &points {
            ensure!(v.is_finite(), "sweep: non-finite value {v}");
            if self.variable != SweepVariable::Distance {
                ensure!(
                    v >= 1.0 && v.fract() == 0.0,
                    "sweep: {} takes positive integers, got {v}",
                    self.variable.name()
                );
            }
        }
        Ok(points)
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).context("serializing config")
    }

    pub fn geometry(&self) -> Result<GeometryConfig> {
        let g = &self.geometry;
        Ok(GeometryConfig::new(g.radius, g.annuli, g.stations)?)
    }

    pub fn analysis(&self) -> AnalysisOptions {
        AnalysisOptions {
            model: ModelOptions {
                h_normalization: self.model.h_normalization,
                ap_term: self.model.ap_term,
            },
            rho_source: self.model.rho_source,
            rho_override: self.model.rho,
            payload: self.model.payload,
            solver: self.solver,
        }
    }

    pub fn sim_config(&self, regime: Regime) -> Result<SimConfig> {
        let mut cfg = SimConfig::with_options(self.geometry()?, self.mac_phy, regime, &self.analysis());
        let s = &self.simulation;
        cfg.horizon = s.horizon;
        cfg.seed = s.seed;
        cfg.topology = s.topology;
        cfg.batches = s.batches;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.geometry()?;
        self.mac_phy.validate()?;
        self.solver.validate()?;
        if self.model.rho == Some(0) {
            bail!("model.rho must be >= 1");
        }
        self.sim_config(Regime::Fd)?.validate()?;
        ensure!(
            self.simulation.replications >= 2,
            "simulation.replications must be >= 2, got {}",
            self.simulation.replications
        );
        if let Some(sweep) = &self.sweep {
            sweep.points()?;
        }
        Ok(())
    }
}
