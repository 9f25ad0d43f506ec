//! Detector-gain statistics from paired-gate signals.
//!
//! The ion detector integrates two gates per shot — the transferred-state
//! signal `S_np` and the rest `S_R` — and its conversion gain fluctuates
//! shot to shot. Secondary-emission statistics (Polya) plus an optional
//! cloud-volume jitter give the gain a signal-dependent signal-to-noise
//! ratio
//!
//! ```text
//! g/δg = α S / √(β_eff S² + S)
//! ```
//!
//! with `α` in (nV·s)^(-1/2) and `β_eff` in (nV·s)^(-1). This module
//! estimates `α` and `β_eff` from raw shot data: bin the shots along the
//! total signal, translate the within-bin scatter of `S_np` into per-gate
//! gain spreads through the implicit constraint tying both gates to one
//! density, and fit the resulting `(S, g/δg)` points against the curve.
//! Because the translation itself needs `β_eff`, the fit is iterated from
//! a pure-Poisson starting point.

use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::Serialize;

use crate::dataset::ShotRecord;
use crate::error::{Error, Result};
use crate::numerics::leastsq::{least_squares, FitOptions};
use crate::physics::{expected_transition, ChannelSet, GasDensity, SweepScaling};

/// Signal conversion, nV·s → V·s (same constant as the calibration layer,
/// repeated here to keep the module self-contained in formulas).
const NVS_TO_VS: f64 = 1e-9;

/// Parameters of the gain signal-to-noise curve.
///
/// Volume fluctuations enter the curve only through `β_eff = β + α²Γ²`,
/// so the intrinsic detector `β` and the relative volume jitter `Γ` cannot
/// be separated; this struct carries the combination.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PolyaParams {
    /// Gain resolution scale, (nV·s)^(-1/2).
    pub alpha: f64,
    /// Excess-noise coefficient, (nV·s)^(-1).
    pub beta_eff: f64,
}

impl PolyaParams {
    pub fn new(alpha: f64, beta_eff: f64) -> Result<Self> {
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(Error::domain(format!(
                "alpha must be positive, got {alpha}"
            )));
        }
        if !(beta_eff.is_finite() && beta_eff >= 0.0) {
            return Err(Error::domain(format!(
                "beta_eff must be finite and non-negative, got {beta_eff}"
            )));
        }
        Ok(PolyaParams { alpha, beta_eff })
    }

    /// `g/δg` at signal `s_nvs`; zero signal means zero resolution.
    pub fn snr(&self, s_nvs: f64) -> Result<f64> {
        if !(s_nvs.is_finite() && s_nvs >= 0.0) {
            return Err(Error::domain(format!(
                "signal must be finite and non-negative, got {s_nvs} nV·s"
            )));
        }
        if s_nvs == 0.0 {
            return Ok(0.0);
        }
        Ok(self.alpha * s_nvs / (self.beta_eff * s_nvs * s_nvs + s_nvs).sqrt())
    }

    /// Relative gain variance `(δg/g)² = (β_eff + 1/S)/α²` at a positive
    /// signal.
    pub fn relative_variance(&self, s_nvs: f64) -> Result<f64> {
        if !(s_nvs.is_finite() && s_nvs > 0.0) {
            return Err(Error::domain(format!(
                "signal must be positive, got {s_nvs} nV·s"
            )));
        }
        Ok((self.beta_eff + 1.0 / s_nvs) / (self.alpha * self.alpha))
    }

    /// Largest relative volume fluctuation compatible with the fitted
    /// curve: attained when the intrinsic detector excess noise is zero,
    /// `Γ_max = √β_eff / α`.
    pub fn max_volume_fluctuation(&self) -> f64 {
        self.beta_eff.sqrt() / self.alpha
    }
}

/// Draws one observed gate signal around `mean_nvs` with the relative
/// variance the gain statistics dictate at that level. A Gamma surrogate
/// keeps the draw positive and matches mean and variance; zero mean stays
/// zero.
pub fn sample_polya_signal<R: Rng + ?Sized>(
    params: &PolyaParams,
    mean_nvs: f64,
    rng: &mut R,
) -> Result<f64> {
    if !(mean_nvs.is_finite() && mean_nvs >= 0.0) {
        return Err(Error::domain(format!(
            "mean signal must be finite and non-negative, got {mean_nvs} nV·s"
        )));
    }
    if mean_nvs == 0.0 {
        return Ok(0.0);
    }
    let rel_var = params.relative_variance(mean_nvs)?;
    let shape = 1.0 / rel_var;
    let scale = mean_nvs * rel_var;
    let gamma = Gamma::new(shape, scale)
        .map_err(|e| Error::numerical(format!("gamma surrogate setup failed: {e}")))?;
    Ok(gamma.sample(rng))
}

/// Within-bin statistics of the shots falling into one total-signal slice
/// at one ramp speed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SignalBin {
    pub f_prime: f64,
    pub n_shots: usize,
    pub s_np_mean_nvs: f64,
    pub s_r_mean_nvs: f64,
    /// Sample variance of `S_np` within the bin, (nV·s)².
    pub s_np_var_nvs2: f64,
    /// Sample variance of `S_T` within the bin, (nV·s)².
    pub s_total_var_nvs2: f64,
}

impl SignalBin {
    pub fn s_total_mean_nvs(&self) -> f64 {
        self.s_np_mean_nvs + self.s_r_mean_nvs
    }
}

/// Fewest shots a bin may hold and still yield a usable variance.
const MIN_BIN_SHOTS: usize = 3;

/// Groups shots by ramp speed, sorts each group by total signal, drops the
/// lowest and highest `trim_fraction` of each group, and cuts the rest into
/// `bins_per_ramp` equal-population bins. Bins left with fewer than three
/// shots are dropped — their variances would be meaningless.
///
/// Trimming matters: the extreme slices of an unbounded signal distribution
/// are far wider than the interior ones, and the scatter-to-gain translation
/// linearizes the signal relation across each bin. A few percent per tail
/// keeps every bin narrow enough for that to hold.
pub fn bin_dataset(
    shots: &[ShotRecord],
    bins_per_ramp: usize,
    trim_fraction: f64,
) -> Result<Vec<SignalBin>> {
    if bins_per_ramp == 0 {
        return Err(Error::domain("need at least one bin per ramp speed"));
    }
    if !(0.0..0.5).contains(&trim_fraction) {
        return Err(Error::domain(format!(
            "trim fraction must lie in [0, 0.5), got {trim_fraction}"
        )));
    }
    if shots.is_empty() {
        return Err(Error::domain("cannot bin an empty dataset"));
    }

    // Group by exact ramp-speed value, ordered by that value.
    let mut groups: std::collections::BTreeMap<u64, Vec<&ShotRecord>> =
        std::collections::BTreeMap::new();
    for shot in shots {
        groups.entry(shot.f_prime.to_bits()).or_default().push(shot);
    }

    let mut bins = Vec::new();
    for (_, mut group) in groups {
        group.sort_by(|a, b| {
            a.s_total_nvs()
                .total_cmp(&b.s_total_nvs())
                .then_with(|| a.shot_id.cmp(&b.shot_id))
        });
        let cut = (group.len() as f64 * trim_fraction).floor() as usize;
        let group = &group[cut..group.len() - cut];
        let n = group.len();
        let base = n / bins_per_ramp;
        let extra = n % bins_per_ramp;
        let mut start = 0usize;
        for k in 0..bins_per_ramp {
            let len = base + usize::from(k < extra);
            let slice = &group[start..start + len];
            start += len;
            if slice.len() < MIN_BIN_SHOTS {
                continue;
            }
            bins.push(bin_stats(slice));
        }
    }
    Ok(bins)
}

fn bin_stats(shots: &[&ShotRecord]) -> SignalBin {
    let n = shots.len() as f64;
    let mut np_mean = 0.0;
    let mut r_mean = 0.0;
    for s in shots {
        np_mean += s.s_np_nvs;
        r_mean += s.s_r_nvs;
    }
    np_mean /= n;
    r_mean /= n;
    let t_mean = np_mean + r_mean;

    let mut np_var = 0.0;
    let mut t_var = 0.0;
    for s in shots {
        let dn = s.s_np_nvs - np_mean;
        let dt = s.s_total_nvs() - t_mean;
        np_var += dn * dn;
        t_var += dt * dt;
    }
    np_var /= n - 1.0;
    t_var /= n - 1.0;

    SignalBin {
        f_prime: shots[0].f_prime,
        n_shots: shots.len(),
        s_np_mean_nvs: np_mean,
        s_r_mean_nvs: r_mean,
        s_np_var_nvs2: np_var,
        s_total_var_nvs2: t_var,
    }
}

/// Per-gate gain spread extracted from one bin.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct GainSpread {
    pub delta_g_np: f64,
    pub delta_g_r: f64,
    /// `g/δg` of the transferred-state gate, to be plotted at the bin's
    /// mean `S_np`.
    pub snr_np: f64,
    /// `g/δg` of the rest gate, to be plotted at the bin's mean `S_R`.
    pub snr_r: f64,
}

/// Relative step for the finite-difference partials of the constraint.
const PARTIAL_STEP: f64 = 1e-4;

/// Translates the within-bin scatter into per-gate gain spreads.
///
/// The constraint `φ(S_np, S_R, g_np, g_R) = 0` expresses that both gates
/// measure one and the same density. Differentiating it in the
/// `(S_np, S_T)` plane isolates the part of the `S_np` scatter that gain
/// noise must explain, and the gain partials distribute that part between
/// the gates, weighted by the variance ratio the current `β_eff` implies:
///
/// ```text
/// num    = √(φ_Snp² δS_np² − φ_ST² δS_T²)
/// δg_R   = num / √(φ_gR² + φ_gnp² (β_eff + 1/S_np)/(β_eff + 1/S_R))
/// δg_np  = num / √(φ_gR² (β_eff + 1/S_R)/(β_eff + 1/S_np) + φ_gnp²)
/// ```
///
/// The subtraction under the root can turn negative on an unlucky bin;
/// that is reported as a numerical error and the bin should be skipped.
pub fn delta_g(
    bin: &SignalBin,
    gain: f64,
    beta_eff: f64,
    scaling: &SweepScaling,
    set: &ChannelSet,
) -> Result<GainSpread> {
    if !(gain.is_finite() && gain > 0.0) {
        return Err(Error::domain(format!("gain must be positive, got {gain}")));
    }
    if !(beta_eff.is_finite() && beta_eff >= 0.0) {
        return Err(Error::domain(format!(
            "beta_eff must be finite and non-negative, got {beta_eff}"
        )));
    }
    let s_np = bin.s_np_mean_nvs;
    let s_r = bin.s_r_mean_nvs;
    if s_np <= 0.0 || s_r <= 0.0 {
        return Err(Error::numerical(format!(
            "bin means must be positive to resolve gain noise, got \
             S_np = {s_np}, S_R = {s_r}"
        )));
    }

    let phi = |s_np_nvs: f64, s_r_nvs: f64, g_np: f64, g_r: f64| -> Result<f64> {
        let eta_tot = g_r * s_r_nvs * NVS_TO_VS + g_np * s_np_nvs * NVS_TO_VS;
        let eta = GasDensity::per_cm3(eta_tot.max(0.0))?;
        let sweep = scaling.at(bin.f_prime)?;
        let p = expected_transition(eta, &sweep, set)?;
        let transferred = 0.5 * eta_tot * p;
        Ok(s_np_nvs - transferred / g_np / NVS_TO_VS)
    };

    // ∂φ/∂S_np at fixed S_T: move S_np and let S_R compensate.
    let h_np = PARTIAL_STEP * s_np;
    let phi_snp = (phi(s_np + h_np, s_r - h_np, gain, gain)?
        - phi(s_np - h_np, s_r + h_np, gain, gain)?)
        / (2.0 * h_np);
    // ∂φ/∂S_T at fixed S_np: only S_R moves.
    let h_t = PARTIAL_STEP * (s_np + s_r);
    let phi_st =
        (phi(s_np, s_r + h_t, gain, gain)? - phi(s_np, s_r - h_t, gain, gain)?) / (2.0 * h_t);
    // Gain partials.
    let h_g = PARTIAL_STEP * gain;
    let phi_gnp =
        (phi(s_np, s_r, gain + h_g, gain)? - phi(s_np, s_r, gain - h_g, gain)?) / (2.0 * h_g);
    let phi_gr =
        (phi(s_np, s_r, gain, gain + h_g)? - phi(s_np, s_r, gain, gain - h_g)?) / (2.0 * h_g);

    let radicand = phi_snp * phi_snp * bin.s_np_var_nvs2 - phi_st * phi_st * bin.s_total_var_nvs2;
    if radicand <= 0.0 {
        return Err(Error::numerical(format!(
            "bin at S_T = {:.3} nV·s: total-signal scatter exceeds the transferred-gate \
             scatter (radicand {radicand:.3e}); no gain spread can be resolved",
            bin.s_total_mean_nvs()
        )));
    }
    let num = radicand.sqrt();

    let ratio_np_r = (beta_eff + 1.0 / s_np) / (beta_eff + 1.0 / s_r);
    let delta_g_r = num / (phi_gr * phi_gr + phi_gnp * phi_gnp * ratio_np_r).sqrt();
    let delta_g_np = num / (phi_gr * phi_gr / ratio_np_r + phi_gnp * phi_gnp).sqrt();
    if !(delta_g_r.is_finite() && delta_g_np.is_finite()) {
        return Err(Error::numerical(
            "gain-spread translation produced non-finite values",
        ));
    }

    Ok(GainSpread {
        delta_g_np,
        delta_g_r,
        snr_np: gain / delta_g_np,
        snr_r: gain / delta_g_r,
    })
}

/// Which gate a signal-to-noise point belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Gate {
    Np,
    Rest,
}

/// One `(S, g/δg)` point entering the curve fit.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SnrPoint {
    pub gate: Gate,
    pub f_prime: f64,
    pub s_nvs: f64,
    pub snr: f64,
}

/// Knobs for [`iterative_fit`].
#[derive(Debug, Clone)]
pub struct NoiseOptions {
    pub bins_per_ramp: usize,
    /// Fraction of shots to drop at each end of the total-signal range,
    /// see [`bin_dataset`].
    pub trim_fraction: f64,
    /// Cap on outer iterations of the estimate-then-refit loop.
    pub max_iterations: usize,
    /// Outer loop stops when both parameters move by less than this,
    /// relatively.
    pub rel_tol: f64,
    pub fit: FitOptions,
}

impl Default for NoiseOptions {
    fn default() -> Self {
        NoiseOptions {
            bins_per_ramp: 8,
            trim_fraction: 0.05,
            max_iterations: 100,
            rel_tol: 1e-6,
            fit: FitOptions::default(),
        }
    }
}

/// Result of the iterative gain-noise fit.
#[derive(Debug, Clone, Serialize)]
pub struct NoiseFit {
    pub params: PolyaParams,
    pub alpha_sigma: f64,
    pub beta_sigma: f64,
    /// `√β_eff / α`, see [`PolyaParams::max_volume_fluctuation`].
    pub max_volume_fluctuation: f64,
    pub iterations: usize,
    pub converged: bool,
    pub n_bins_used: usize,
    pub n_bins_dropped: usize,
    /// The `(S, g/δg)` points of the final iteration.
    pub points: Vec<SnrPoint>,
}

/// Estimates the gain-noise curve from raw shots.
///
/// Starting from pure Poisson statistics (`β_eff = 0`), each round
/// translates the bin scatter into `(S, g/δg)` points with the current
/// `β_eff`, refits the curve, and repeats until the parameters settle.
/// `gain` is the common linear conversion of both gates, from a prior
/// calibration.
pub fn iterative_fit(
    shots: &[ShotRecord],
    gain: f64,
    scaling: &SweepScaling,
    set: &ChannelSet,
    options: &NoiseOptions,
) -> Result<NoiseFit> {
    let bins = bin_dataset(shots, options.bins_per_ramp, options.trim_fraction)?;
    if bins.is_empty() {
        return Err(Error::numerical(
            "no usable bins: too few shots per ramp speed",
        ));
    }
    let s_max = bins
        .iter()
        .map(|b| b.s_r_mean_nvs.max(b.s_np_mean_nvs))
        .fold(0.0_f64, f64::max);

    let mut beta = 0.0_f64;
    let mut alpha = f64::NAN;
    let mut alpha_sigma = f64::NAN;
    let mut beta_sigma = f64::NAN;
    let mut converged = false;
    let mut iterations = 0;
    let mut points: Vec<SnrPoint> = Vec::new();
    let mut dropped = 0usize;

    for iter in 1..=options.max_iterations {
        iterations = iter;
        points.clear();
        dropped = 0;
        for bin in &bins {
            match delta_g(bin, gain, beta, scaling, set) {
                Ok(spread) => {
                    points.push(SnrPoint {
                        gate: Gate::Np,
                        f_prime: bin.f_prime,
                        s_nvs: bin.s_np_mean_nvs,
                        snr: spread.snr_np,
                    });
                    points.push(SnrPoint {
                        gate: Gate::Rest,
                        f_prime: bin.f_prime,
                        s_nvs: bin.s_r_mean_nvs,
                        snr: spread.snr_r,
                    });
                }
                Err(_) => dropped += 1,
            }
        }
        if points.len() < 4 {
            return Err(Error::numerical(format!(
                "only {} usable signal-to-noise points ({} bins dropped); \
                 cannot fit the gain-noise curve",
                points.len(),
                dropped
            )));
        }

        // α is bounded below by g/δg/√S at every point; the largest such
        // value is a solid starting guess on the first round.
        let alpha_init = if alpha.is_finite() {
            alpha
        } else {
            points
                .iter()
                .map(|p| p.snr / p.s_nvs.sqrt())
                .fold(0.0_f64, f64::max)
        };
        let b_init = beta.max(1e-3).sqrt();

        // β_eff enters as b² so the curve can never turn unphysical.
        let fit = least_squares(
            |p, out| {
                let a = p[0];
                let b = p[1];
                for (i, pt) in points.iter().enumerate() {
                    let s = pt.s_nvs;
                    out[i] = a * s / (b * b * s * s + s).sqrt() - pt.snr;
                }
                Ok(())
            },
            points.len(),
            &[alpha_init, b_init],
            &options.fit,
        )?;
        let alpha_new = fit.params[0];
        let b_new = fit.params[1];
        let beta_new = b_new * b_new;
        if !(alpha_new.is_finite() && alpha_new > 0.0 && beta_new.is_finite()) {
            return Err(Error::numerical(format!(
                "gain-noise curve fit diverged: alpha = {alpha_new}, beta_eff = {beta_new}"
            )));
        }
        alpha_sigma = fit.param_sigma(0);
        beta_sigma = 2.0 * b_new.abs() * fit.param_sigma(1);

        let alpha_change = if alpha.is_finite() {
            (alpha_new - alpha).abs() / alpha_new
        } else {
            f64::INFINITY
        };
        // 1/s_max is the natural floor: below it β_eff has no effect on
        // any fitted point.
        let beta_change = (beta_new - beta).abs() / (beta_new + 1.0 / s_max);
        alpha = alpha_new;
        beta = beta_new;
        if alpha_change.max(beta_change) < options.rel_tol {
            converged = true;
            break;
        }
    }

    let params = PolyaParams::new(alpha, beta)?;
    Ok(NoiseFit {
        max_volume_fluctuation: params.max_volume_fluctuation(),
        params,
        alpha_sigma,
        beta_sigma,
        iterations,
        converged,
        n_bins_used: bins.len() - dropped,
        n_bins_dropped: dropped,
        points,
    })
}

/// RMS per-point scatter, in nV·s, implied by the reduced chi-square of a
/// unit-weighted calibration fit.
pub fn noise_estimate_nvs(reduced_chi_square: f64) -> Result<f64> {
    if !(reduced_chi_square.is_finite() && reduced_chi_square >= 0.0) {
        return Err(Error::domain(format!(
            "reduced chi-square must be finite and non-negative, got {reduced_chi_square}"
        )));
    }
    Ok(reduced_chi_square.sqrt())
}
