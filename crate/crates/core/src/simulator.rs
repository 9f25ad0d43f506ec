//! Synthetic shot generation.
//!
//! Produces datasets with the same shape as real acquisitions: per shot a
//! ramp speed, a transferred-gate signal and a rest-gate signal, plus a
//! ground-truth sidecar with the density the shot was drawn from. Three
//! fidelity levels are available:
//!
//! * [`SimMode::Analytic`] — signals follow the closed-form expectation
//!   exactly; only density jitter and detector noise fluctuate.
//! * [`SimMode::Erlang`] — atoms are sampled individually, each with a
//!   nearest-neighbour distance from the ideal-gas distribution and an
//!   isotropic orientation; transitions are Bernoulli draws per atom.
//! * [`SimMode::Spatial`] — atoms get explicit positions in a periodic
//!   box and transition against their actual nearest neighbour, with the
//!   orientation read off the real separation vector. Neighbour relations
//!   are shared between atoms here, which the other modes ignore.
//!
//! Every shot derives its randomness from the dataset seed and its own
//! shot id, so outputs are bit-reproducible and independent of generation
//! order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::calibration::ConversionModel;
use crate::dataset::{ShotRecord, TruthRecord};
use crate::error::{Error, Result};
use crate::noise::{sample_polya_signal, PolyaParams};
use crate::physics::{
    expected_transition, p_lz_aggregate, ChannelSet, GasDensity, SweepScaling, SweepSpec,
};

/// How atoms and transitions are realized per shot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SimMode {
    Analytic,
    Erlang,
    Spatial,
}

/// Largest acceptable mean atom number per shot in spatial mode; the pair
/// search is quadratic in the count.
const MAX_SPATIAL_MEAN_ATOMS: f64 = 10_000.0;

/// Hard per-shot cap guarding against extreme draws from the density
/// jitter in spatial mode.
const MAX_SPATIAL_ATOMS: usize = 40_000;

/// Atom count a sampling box is sized for in [`transition_fraction_spatial`]:
/// large enough that the box edge sits far outside the nearest-neighbour
/// scale, small enough to keep the pair search cheap.
const SPATIAL_BOX_TARGET_ATOMS: f64 = 200.0;

/// Full description of a synthetic acquisition.
#[derive(Debug, Clone)]
pub struct SimConfig {
    pub seed: u64,
    pub n_shots: usize,
    pub mode: SimMode,
    /// Ramp speeds cycled over the shots (shot `i` uses entry `i % len`).
    pub f_primes: Vec<f64>,
    /// Mean density of the cloud, cm⁻³.
    pub eta_mean_cm3: f64,
    /// Log-normal density jitter: standard deviation of the log. The mean
    /// is preserved; zero disables the jitter.
    pub eta_sigma_rel: f64,
    /// Cloud volume, cm³.
    pub volume_cm3: f64,
    pub detector: ConversionModel,
    /// Detector gain noise applied to both gates; `None` for clean signals.
    pub noise: Option<PolyaParams>,
    /// Fraction of the total signal redistributed from the rest gate into
    /// the transferred gate by blackbody-driven decay. The total is
    /// conserved.
    pub bbr_fraction: f64,
    pub scaling: SweepScaling,
    pub channels: ChannelSet,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_shots == 0 {
            return Err(Error::config("n_shots must be at least 1"));
        }
        if self.f_primes.is_empty() {
            return Err(Error::config("at least one ramp speed is required"));
        }
        for &f in &self.f_primes {
            if !(f.is_finite() && f > 0.0) {
                return Err(Error::config(format!(
                    "ramp speeds must be positive, got {f}"
                )));
            }
        }
        if !(self.eta_mean_cm3.is_finite() && self.eta_mean_cm3 >= 0.0) {
            return Err(Error::config(format!(
                "mean density must be finite and non-negative, got {} cm^-3",
                self.eta_mean_cm3
            )));
        }
        if !(self.eta_sigma_rel.is_finite() && (0.0..=2.0).contains(&self.eta_sigma_rel)) {
            return Err(Error::config(format!(
                "density jitter must lie in [0, 2], got {}",
                self.eta_sigma_rel
            )));
        }
        if !(self.volume_cm3.is_finite() && self.volume_cm3 > 0.0) {
            return Err(Error::config(format!(
                "volume must be positive, got {} cm^3",
                self.volume_cm3
            )));
        }
        if !(self.bbr_fraction.is_finite() && (0.0..0.5).contains(&self.bbr_fraction)) {
            return Err(Error::config(format!(
                "blackbody redistribution fraction must lie in [0, 0.5), got {}",
                self.bbr_fraction
            )));
        }
        if self.mode == SimMode::Spatial
            && self.eta_mean_cm3 * self.volume_cm3 > MAX_SPATIAL_MEAN_ATOMS
        {
            return Err(Error::config(format!(
                "spatial mode with a mean of {:.0} atoms per shot is intractable; \
                 reduce the volume or density (limit {MAX_SPATIAL_MEAN_ATOMS:.0})",
                self.eta_mean_cm3 * self.volume_cm3
            )));
        }
        Ok(())
    }
}

/// A Monte-Carlo estimate of a transition fraction.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct McEstimate {
    pub fraction: f64,
    pub std_error: f64,
    pub n_samples: usize,
}

/// Estimates the per-atom transition fraction by drawing atoms with
/// ideal-gas nearest-neighbour distances and isotropic orientations.
pub fn transition_fraction_erlang(
    eta: GasDensity,
    sweep: &SweepSpec,
    set: &ChannelSet,
    n_samples: usize,
    seed: u64,
) -> Result<McEstimate> {
    if n_samples == 0 {
        return Err(Error::domain("need at least one sample"));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut successes = 0usize;
    for _ in 0..n_samples {
        let r_um = eta.nn_quantile_um(rng.random::<f64>())?;
        let cos_theta: f64 = 1.0 - 2.0 * rng.random::<f64>();
        let theta = cos_theta.clamp(-1.0, 1.0).acos();
        let p = p_lz_aggregate(sweep, r_um, theta, set)?;
        if rng.random::<f64>() < p {
            successes += 1;
        }
    }
    let fraction = successes as f64 / n_samples as f64;
    Ok(McEstimate {
        fraction,
        std_error: (fraction * (1.0 - fraction) / n_samples as f64).sqrt(),
        n_samples,
    })
}

/// Estimates the per-atom transition fraction from explicit atom positions.
///
/// Periodic boxes sized for [`SPATIAL_BOX_TARGET_ATOMS`] atoms are filled
/// with Poisson-distributed counts until at least `n_samples` atoms have
/// been realized; each atom then transitions against its true nearest
/// neighbour. Neighbour relations are shared — a mutual pair sees one and
/// the same geometry twice — so the quoted standard error carries a factor
/// two over the independent-atom value as a safe bound.
pub fn transition_fraction_spatial(
    eta: GasDensity,
    sweep: &SweepSpec,
    set: &ChannelSet,
    n_samples: usize,
    seed: u64,
) -> Result<McEstimate> {
    if n_samples == 0 {
        return Err(Error::domain("need at least one sample"));
    }
    if eta.value_per_cm3() <= 0.0 {
        return Err(Error::domain(
            "spatial sampling needs a positive density to size its box",
        ));
    }
    let box_um = (SPATIAL_BOX_TARGET_ATOMS / eta.value_per_um3()).cbrt();
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut atoms = 0usize;
    let mut transitioned = 0usize;
    while atoms < n_samples {
        let outcome = simulate_box(SPATIAL_BOX_TARGET_ATOMS, box_um, sweep, set, &mut rng)?;
        atoms += outcome.n_atoms;
        transitioned += outcome.transitioned_atoms;
    }
    let fraction = transitioned as f64 / atoms as f64;
    Ok(McEstimate {
        fraction,
        std_error: (2.0 * fraction * (1.0 - fraction) / atoms as f64).sqrt(),
        n_samples: atoms,
    })
}

struct BoxOutcome {
    n_atoms: usize,
    transitioned_atoms: usize,
}

/// One periodic box: Poisson count, uniform positions, then a Bernoulli
/// transition per atom against its actual nearest neighbour.
fn simulate_box<R: Rng + ?Sized>(
    mean_atoms: f64,
    box_um: f64,
    sweep: &SweepSpec,
    set: &ChannelSet,
    rng: &mut R,
) -> Result<BoxOutcome> {
    let n = sample_poisson(mean_atoms, rng)?;
    if n > MAX_SPATIAL_ATOMS {
        return Err(Error::numerical(format!(
            "spatial draw produced {n} atoms, beyond the tractable limit"
        )));
    }
    if n < 2 {
        return Ok(BoxOutcome {
            n_atoms: n,
            transitioned_atoms: 0,
        });
    }
    let positions: Vec<[f64; 3]> = (0..n)
        .map(|_| {
            [
                rng.random::<f64>() * box_um,
                rng.random::<f64>() * box_um,
                rng.random::<f64>() * box_um,
            ]
        })
        .collect();

    let mut transitioned = 0usize;
    for (r_um, theta) in nearest_neighbours(&positions, box_um) {
        let p = p_lz_aggregate(sweep, r_um, theta, set)?;
        if rng.random::<f64>() < p {
            transitioned += 1;
        }
    }
    Ok(BoxOutcome {
        n_atoms: n,
        transitioned_atoms: transitioned,
    })
}

fn sample_poisson<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> Result<usize> {
    if mean <= 0.0 {
        return Ok(0);
    }
    let dist = Poisson::new(mean)
        .map_err(|e| Error::numerical(format!("poisson setup failed for mean {mean}: {e}")))?;
    Ok(dist.sample(rng) as usize)
}

/// Minimum-image displacement on a periodic cube.
fn min_image(a: &[f64; 3], b: &[f64; 3], box_um: f64) -> [f64; 3] {
    let mut d = [0.0; 3];
    for k in 0..3 {
        let mut x = a[k] - b[k];
        x -= box_um * (x / box_um).round();
        d[k] = x;
    }
    d
}

/// Nearest neighbour of every atom under the minimum-image metric:
/// `(separation, angle to the field axis)` per atom, in atom order. Ties
/// resolve to the lower index, keeping the result deterministic.
fn nearest_neighbours(positions: &[[f64; 3]], box_um: f64) -> Vec<(f64, f64)> {
    let n = positions.len();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut best = (usize::MAX, f64::INFINITY);
        for j in 0..n {
            if j == i {
                continue;
            }
            let d = min_image(&positions[i], &positions[j], box_um);
            let r2 = d[0] * d[0] + d[1] * d[1] + d[2] * d[2];
            if r2 < best.1 {
                best = (j, r2);
            }
        }
        let d = min_image(&positions[i], &positions[best.0], box_um);
        let r = best.1.sqrt();
        let cos_theta = if r > 0.0 {
            (d[2] / r).clamp(-1.0, 1.0)
        } else {
            1.0
        };
        out.push((r, cos_theta.acos()));
    }
    out
}

/// Generates a full synthetic dataset plus its ground-truth sidecar.
///
/// Per shot, draws happen in a fixed order — density jitter, atom
/// realization (mode-dependent), transferred-gate noise, rest-gate noise —
/// on an RNG stream derived from the dataset seed and the shot id.
pub fn generate_dataset(config: &SimConfig) -> Result<(Vec<ShotRecord>, Vec<TruthRecord>)> {
    config.validate()?;
    let mut shots = Vec::with_capacity(config.n_shots);
    let mut truths = Vec::with_capacity(config.n_shots);

    for i in 0..config.n_shots {
        let shot_id = i as u64;
        let mut rng = ChaCha12Rng::seed_from_u64(config.seed);
        rng.set_stream(shot_id);

        let f_prime = config.f_primes[i % config.f_primes.len()];
        let sweep = config.scaling.at(f_prime)?;

        let eta_shot = if config.eta_sigma_rel > 0.0 {
            let z: f64 = StandardNormal.sample(&mut rng);
            let sigma = config.eta_sigma_rel;
            config.eta_mean_cm3 * (sigma * z - 0.5 * sigma * sigma).exp()
        } else {
            config.eta_mean_cm3
        };
        let eta = GasDensity::per_cm3(eta_shot)?;

        // Transferred and total densities for this shot, cm⁻³.
        let (eta_np, eta_tot) = match config.mode {
            SimMode::Analytic => {
                let p = expected_transition(eta, &sweep, &config.channels)?;
                (0.5 * eta_shot * p, eta_shot)
            }
            SimMode::Erlang => {
                let n = sample_poisson(eta_shot * config.volume_cm3, &mut rng)?;
                let mut m = 0usize;
                for _ in 0..n {
                    let r_um = eta.nn_quantile_um(rng.random::<f64>())?;
                    let cos_theta: f64 = 1.0 - 2.0 * rng.random::<f64>();
                    let theta = cos_theta.clamp(-1.0, 1.0).acos();
                    let p = p_lz_aggregate(&sweep, r_um, theta, &config.channels)?;
                    if rng.random::<f64>() < p {
                        m += 1;
                    }
                }
                // Two transitioned atoms make one detected pair.
                (
                    0.5 * m as f64 / config.volume_cm3,
                    n as f64 / config.volume_cm3,
                )
            }
            SimMode::Spatial => {
                let box_um = (config.volume_cm3 * 1e12).cbrt();
                let outcome = simulate_box(
                    eta_shot * config.volume_cm3,
                    box_um,
                    &sweep,
                    &config.channels,
                    &mut rng,
                )?;
                (
                    0.5 * outcome.transitioned_atoms as f64 / config.volume_cm3,
                    outcome.n_atoms as f64 / config.volume_cm3,
                )
            }
        };

        let s_total_clean = config.detector.signal_nvs(eta_tot)?;
        let s_np_clean = config.detector.signal_nvs(eta_np)?;
        let shift = config.bbr_fraction * s_total_clean;
        let s_np_shifted = s_np_clean + shift;
        let s_r_shifted = s_total_clean - s_np_clean - shift;
        if s_r_shifted < 0.0 {
            return Err(Error::numerical(format!(
                "shot {shot_id}: blackbody redistribution exceeds the rest-gate signal"
            )));
        }

        let (s_np, s_r) = match &config.noise {
            Some(params) => (
                sample_polya_signal(params, s_np_shifted, &mut rng)?,
                sample_polya_signal(params, s_r_shifted, &mut rng)?,
            ),
            None => (s_np_shifted, s_r_shifted),
        };

        shots.push(ShotRecord {
            shot_id,
            f_prime,
            s_np_nvs: s_np,
            s_r_nvs: s_r,
        });
        truths.push(TruthRecord {
            shot_id,
            eta_cm3: eta_shot,
            volume_cm3: config.volume_cm3,
        });
    }
    Ok((shots, truths))
}
