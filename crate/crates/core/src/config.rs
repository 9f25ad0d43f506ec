//! Run configuration: TOML on disk, validated into domain types.
//!
//! A single file describes one processing run — the sweep scaling and
//! channel profile shared by every command, plus optional sections for
//! synthetic generation, the detector, and the gain-noise analysis. Keys
//! carry their unit as a suffix; unknown keys are rejected so typos fail
//! loudly instead of silently falling back to defaults.

use std::path::Path;

use serde::Deserialize;

use crate::calibration::ConversionModel;
use crate::error::{Error, Result};
use crate::noise::{NoiseOptions, PolyaParams};
use crate::physics::{ChannelSet, SweepScaling};
use crate::simulator::{SimConfig, SimMode};

/// Top-level configuration file.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(default)]
    pub channels: ChannelsSection,
    pub simulation: Option<SimulationSection>,
    pub detector: Option<DetectorSection>,
    #[serde(default)]
    pub noise_analysis: NoiseSection,
}

/// Sweep-rate scaling of the onset radius.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    /// Onset radius at the reference ramp speed, µm.
    pub r0_ref_um: Option<f64>,
    /// Reference ramp speed, V/cm/µs.
    pub f_prime_ref_v_per_cm_per_us: Option<f64>,
}

impl SweepSection {
    pub fn scaling(&self) -> Result<SweepScaling> {
        let default = SweepScaling::default();
        SweepScaling::new(
            self.r0_ref_um.unwrap_or(default.r0_ref_um()),
            self.f_prime_ref_v_per_cm_per_us
                .unwrap_or(default.f_prime_ref()),
        )
    }
}

/// Which angular channel profile to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChannelProfile {
    /// All nine magnetic-sublevel channels.
    Sublevels,
    /// Only the polar channel.
    Polar,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelsSection {
    pub profile: Option<ChannelProfile>,
}

impl ChannelsSection {
    pub fn channel_set(&self) -> ChannelSet {
        match self.profile.unwrap_or(ChannelProfile::Sublevels) {
            ChannelProfile::Sublevels => ChannelSet::default_sublevels(),
            ChannelProfile::Polar => ChannelSet::polar_only(),
        }
    }
}

/// Synthetic-dataset generation.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSection {
    pub seed: u64,
    pub n_shots: usize,
    pub mode: SimMode,
    /// Ramp speeds cycled over the shots, V/cm/µs.
    pub f_primes_v_per_cm_per_us: Vec<f64>,
    pub eta_mean_cm3: f64,
    #[serde(default)]
    pub eta_sigma_rel: f64,
    pub volume_cm3: f64,
    #[serde(default)]
    pub bbr_fraction: f64,
}

/// Detector response model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DetectorKind {
    Linear,
    Quadratic,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorSection {
    pub kind: DetectorKind,
    /// Linear conversion coefficient, cm⁻³ per V·s.
    pub g0_cm3_per_vs: f64,
    /// Quadratic conversion coefficient, cm⁻³ per (V·s)²; only for the
    /// quadratic kind.
    pub g1_cm3_per_vs2: Option<f64>,
    pub noise: Option<NoiseParamsSection>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseParamsSection {
    /// Gain resolution scale, (nV·s)^(-1/2).
    pub alpha_per_sqrt_nvs: f64,
    /// Excess-noise coefficient, (nV·s)^(-1).
    pub beta_eff_per_nvs: f64,
}

impl DetectorSection {
    pub fn model(&self) -> Result<ConversionModel> {
        match self.kind {
            DetectorKind::Linear => {
                if self.g1_cm3_per_vs2.is_some() {
                    return Err(Error::config(
                        "a linear detector takes no g1_cm3_per_vs2; remove the key \
                         or switch kind to \"quadratic\"",
                    ));
                }
                ConversionModel::linear(self.g0_cm3_per_vs)
            }
            DetectorKind::Quadratic => {
                let g1 = self.g1_cm3_per_vs2.ok_or_else(|| {
                    Error::config("a quadratic detector requires g1_cm3_per_vs2")
                })?;
                ConversionModel::quadratic(self.g0_cm3_per_vs, g1)
            }
        }
    }

    pub fn polya(&self) -> Result<Option<PolyaParams>> {
        self.noise
            .as_ref()
            .map(|n| PolyaParams::new(n.alpha_per_sqrt_nvs, n.beta_eff_per_nvs))
            .transpose()
    }
}

/// Gain-noise analysis knobs; all optional, falling back to
/// [`NoiseOptions::default`].
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSection {
    pub bins_per_ramp: Option<usize>,
    pub trim_fraction: Option<f64>,
    pub max_iterations: Option<usize>,
    /// Known conversion gain of both gates, cm⁻³ per V·s; falls back to
    /// the detector's g0.
    pub gain_cm3_per_vs: Option<f64>,
}

impl RunConfig {
    /// Parses a configuration from TOML text.
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::config(format!("invalid configuration: {e}")))
    }

    /// Reads and parses a configuration file, returning the raw bytes as
    /// well so callers can fingerprint exactly what was loaded.
    pub fn from_path(path: &Path) -> Result<(Self, Vec<u8>)> {
        let bytes = std::fs::read(path).map_err(|e| {
            Error::io(format!("reading configuration {}", path.display()), e)
        })?;
        let text = std::str::from_utf8(&bytes)
            .map_err(|e| Error::config(format!("configuration is not UTF-8: {e}")))?;
        let config = Self::from_toml(text)?;
        Ok((config, bytes))
    }

    pub fn scaling(&self) -> Result<SweepScaling> {
        self.sweep.scaling()
    }

    pub fn channel_set(&self) -> ChannelSet {
        self.channels.channel_set()
    }

    /// Assembles the generator configuration; requires the `[simulation]`
    /// and `[detector]` sections.
    pub fn sim_config(&self) -> Result<SimConfig> {
        let sim = self.simulation.as_ref().ok_or_else(|| {
            Error::config("generation requires a [simulation] section")
        })?;
        let detector = self.detector.as_ref().ok_or_else(|| {
            Error::config("generation requires a [detector] section")
        })?;
        let config = SimConfig {
            seed: sim.seed,
            n_shots: sim.n_shots,
            mode: sim.mode,
            f_primes: sim.f_primes_v_per_cm_per_us.clone(),
            eta_mean_cm3: sim.eta_mean_cm3,
            eta_sigma_rel: sim.eta_sigma_rel,
            volume_cm3: sim.volume_cm3,
            detector: detector.model()?,
            noise: detector.polya()?,
            bbr_fraction: sim.bbr_fraction,
            scaling: self.scaling()?,
            channels: self.channel_set(),
        };
        config.validate()?;
        Ok(config)
    }

    pub fn noise_options(&self) -> NoiseOptions {
        let mut options = NoiseOptions::default();
        if let Some(b) = self.noise_analysis.bins_per_ramp {
            options.bins_per_ramp = b;
        }
        if let Some(t) = self.noise_analysis.trim_fraction {
            options.trim_fraction = t;
        }
        if let Some(m) = self.noise_analysis.max_iterations {
            options.max_iterations = m;
        }
        options
    }

    /// The gain the noise analysis should treat as known.
    pub fn noise_gain(&self) -> Result<f64> {
        if let Some(g) = self.noise_analysis.gain_cm3_per_vs {
            return Ok(g);
        }
        self.detector
            .as_ref()
            .map(|d| d.g0_cm3_per_vs)
            .ok_or_else(|| {
                Error::config(
                    "the gain-noise analysis needs gain_cm3_per_vs in [noise_analysis] \
                     or a [detector] section",
                )
            })
    }
}
