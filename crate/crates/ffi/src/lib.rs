//! C ABI for the rydense toolkit.
//!
//! Conventions, uniform across the surface:
//!
//! - Every fallible call returns a [`RydStatus`]; results leave through
//!   output pointers, which are written only on `RYD_STATUS_OK`.
//! - Handles created by `*_new*` functions are opaque and must be released
//!   with the matching `*_free`. `NULL` is never a valid handle, and a
//!   handle must not be used after it is freed.
//! - After a failing call, [`ryd_last_error_message`] returns a
//!   human-readable description. The pointer stays valid until the next
//!   failing call on the same thread.
//! - The library never unwinds across the boundary: an internal panic is
//!   caught and reported as `RYD_STATUS_INTERNAL`.
//!
//! Units match the Rust API: lengths in µm, densities in cm⁻³, signals in
//! nV·s, ramp speeds in V/cm/µs, conversion coefficients in cm⁻³/(V·s)
//! and cm⁻³/(V·s)².

use std::cell::RefCell;
use std::ffi::{c_char, c_double, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use rydense::calibration::{
    fit_conversion, predict_np_signal, CalibrationOptions, CalibrationPoint, ConversionModel,
    ModelKind,
};
use rydense::dataset::ShotRecord;
use rydense::noise::{iterative_fit, NoiseOptions, PolyaParams};
use rydense::numerics::kernel::{k_integral, meijer_g_3003};
use rydense::physics::{
    expected_transition, np_count, p_lz_aggregate, ChannelSet, GasDensity, SweepScaling,
};
use rydense::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RydStatus {
    /// Success; output parameters hold valid results.
    Ok = 0,
    /// A required pointer argument was `NULL`.
    NullArgument = 1,
    /// An input lies outside the physical or mathematical domain.
    Domain = 2,
    /// A numerical procedure failed to reach its target.
    Numerical = 3,
    /// Invalid configuration values.
    Config = 4,
    /// Malformed dataset contents.
    Dataset = 5,
    /// An I/O failure.
    Io = 6,
    /// An internal panic was caught at the boundary.
    Internal = 7,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let stored = CString::new(message.replace('\0', " "))
        .unwrap_or_else(|_| CString::new("unrepresentable error message").unwrap());
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(stored));
}

fn fail(err: Error) -> RydStatus {
    let status = match err {
        Error::Domain(_) => RydStatus::Domain,
        Error::Numerical(_) => RydStatus::Numerical,
        Error::Config(_) => RydStatus::Config,
        Error::Dataset(_) => RydStatus::Dataset,
        Error::Io { .. } => RydStatus::Io,
    };
    set_error(err.to_string());
    status
}

/// Runs a fallible body, translating errors and catching panics.
fn boundary(body: impl FnOnce() -> Result<(), Error>) -> RydStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => RydStatus::Ok,
        Ok(Err(e)) => fail(e),
        Err(payload) => {
            let detail = payload
                .downcast_ref::<&str>()
                .map(|s| (*s).to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".to_string());
            set_error(format!("internal panic: {detail}"));
            RydStatus::Internal
        }
    }
}

macro_rules! require {
    ($ptr:expr) => {
        if $ptr.is_null() {
            set_error(format!("argument `{}` must not be NULL", stringify!($ptr)));
            return RydStatus::NullArgument;
        }
    };
}

/// Message describing the most recent failure on this thread, or `NULL` if
/// none has occurred. Valid until the next failing call on this thread.
#[no_mangle]
pub extern "C" fn ryd_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| {
        slot.borrow()
            .as_ref()
            .map_or(std::ptr::null(), |msg| msg.as_ptr())
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ryd_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Static name of a status code, e.g. `"domain"`.
#[no_mangle]
pub extern "C" fn ryd_status_name(status: RydStatus) -> *const c_char {
    let name: &'static str = match status {
        RydStatus::Ok => "ok\0",
        RydStatus::NullArgument => "null_argument\0",
        RydStatus::Domain => "domain\0",
        RydStatus::Numerical => "numerical\0",
        RydStatus::Config => "config\0",
        RydStatus::Dataset => "dataset\0",
        RydStatus::Io => "io\0",
        RydStatus::Internal => "internal\0",
    };
    name.as_ptr() as *const c_char
}

/// Opaque set of avoided-crossing channels.
pub struct RydChannelSet(ChannelSet);

/// Opaque onset-radius scaling law for a field ramp.
pub struct RydSweep(SweepScaling);

/// Opaque detector conversion between signal and density.
pub struct RydConversion(ConversionModel);

/// Creates the default nine-channel sublevel set (flat `Σ f⁶ = 2/3`).
#[no_mangle]
pub extern "C" fn ryd_channel_set_new_sublevels() -> *mut RydChannelSet {
    Box::into_raw(Box::new(RydChannelSet(ChannelSet::default_sublevels())))
}

/// Creates a set holding only the polar channel (anisotropic).
#[no_mangle]
pub extern "C" fn ryd_channel_set_new_polar() -> *mut RydChannelSet {
    Box::into_raw(Box::new(RydChannelSet(ChannelSet::polar_only())))
}

/// Releases a channel set. `NULL` is ignored.
#[no_mangle]
pub unsafe extern "C" fn ryd_channel_set_free(set: *mut RydChannelSet) {
    if !set.is_null() {
        drop(Box::from_raw(set));
    }
}

/// `Σ f⁶(θ)` of the set at quantisation angle `theta_rad`.
#[no_mangle]
pub unsafe extern "C" fn ryd_channel_set_sum_f6(
    set: *const RydChannelSet,
    theta_rad: c_double,
    out: *mut c_double,
) -> RydStatus {
    require!(set);
    require!(out);
    let set = &(*set).0;
    boundary(|| {
        let value = set.sum_f6(theta_rad);
        unsafe { *out = value };
        Ok(())
    })
}

/// Creates a sweep scaling with onset radius `r0_ref_um` (µm) at reference
/// ramp speed `f_prime_ref` (V/cm/µs). Writes the handle to `out`.
#[no_mangle]
pub unsafe extern "C" fn ryd_sweep_new(
    r0_ref_um: c_double,
    f_prime_ref: c_double,
    out: *mut *mut RydSweep,
) -> RydStatus {
    require!(out);
    boundary(|| {
        let scaling = SweepScaling::new(r0_ref_um, f_prime_ref)?;
        unsafe { *out = Box::into_raw(Box::new(RydSweep(scaling))) };
        Ok(())
    })
}

/// Creates the default sweep scaling (polar effective radius 13.5 µm at
/// 1 V/cm/µs).
#[no_mangle]
pub extern "C" fn ryd_sweep_new_default() -> *mut RydSweep {
    Box::into_raw(Box::new(RydSweep(SweepScaling::default())))
}

/// Releases a sweep scaling. `NULL` is ignored.
#[no_mangle]
pub unsafe extern "C" fn ryd_sweep_free(sweep: *mut RydSweep) {
    if !sweep.is_null() {
        drop(Box::from_raw(sweep));
    }
}

/// Onset radius in µm at ramp speed `f_prime` (V/cm/µs).
#[no_mangle]
pub unsafe extern "C" fn ryd_sweep_r0_um(
    sweep: *const RydSweep,
    f_prime: c_double,
    out: *mut c_double,
) -> RydStatus {
    require!(sweep);
    require!(out);
    let sweep = &(*sweep).0;
    boundary(|| {
        let r0 = sweep.r0_um(f_prime)?;
        unsafe { *out = r0 };
        Ok(())
    })
}

/// Aggregate pair-transition probability at separation `r_um` and angle
/// `theta_rad` for a sweep at `f_prime`.
#[no_mangle]
pub unsafe extern "C" fn ryd_transition_probability(
    sweep: *const RydSweep,
    f_prime: c_double,
    r_um: c_double,
    theta_rad: c_double,
    set: *const RydChannelSet,
    out: *mut c_double,
) -> RydStatus {
    require!(sweep);
    require!(set);
    require!(out);
    let sweep = &(*sweep).0;
    let set = &(*set).0;
    boundary(|| {
        let p = p_lz_aggregate(&sweep.at(f_prime)?, r_um, theta_rad, set)?;
        unsafe { *out = p };
        Ok(())
    })
}

/// Expected per-atom transition fraction at gas density `eta_cm3` (cm⁻³).
#[no_mangle]
pub unsafe extern "C" fn ryd_expected_transition(
    sweep: *const RydSweep,
    f_prime: c_double,
    eta_cm3: c_double,
    set: *const RydChannelSet,
    out: *mut c_double,
) -> RydStatus {
    require!(sweep);
    require!(set);
    require!(out);
    let sweep = &(*sweep).0;
    let set = &(*set).0;
    boundary(|| {
        let eta = GasDensity::per_cm3(eta_cm3)?;
        let p = expected_transition(eta, &sweep.at(f_prime)?, set)?;
        unsafe { *out = p };
        Ok(())
    })
}

/// Expected number of transferred pairs in a cloud of `volume_cm3`.
#[no_mangle]
pub unsafe extern "C" fn ryd_np_count(
    sweep: *const RydSweep,
    f_prime: c_double,
    eta_cm3: c_double,
    volume_cm3: c_double,
    set: *const RydChannelSet,
    out: *mut c_double,
) -> RydStatus {
    require!(sweep);
    require!(set);
    require!(out);
    let sweep = &(*sweep).0;
    let set = &(*set).0;
    boundary(|| {
        let eta = GasDensity::per_cm3(eta_cm3)?;
        let n = np_count(eta, volume_cm3, &sweep.at(f_prime)?, set)?;
        unsafe { *out = n };
        Ok(())
    })
}

/// Nearest-neighbour survival kernel `K(w) = ∫₀^∞ exp(-t - w t⁻²) dt`.
#[no_mangle]
pub unsafe extern "C" fn ryd_k_integral(w: c_double, out: *mut c_double) -> RydStatus {
    require!(out);
    boundary(|| {
        let k = k_integral(w)?;
        unsafe { *out = k };
        Ok(())
    })
}

/// Meijer-G value `G^{3,0}_{0,3}(z | -; 0, 1/2, 1) = √π · K(4z)`.
#[no_mangle]
pub unsafe extern "C" fn ryd_meijer_g_3003(z: c_double, out: *mut c_double) -> RydStatus {
    require!(out);
    boundary(|| {
        let g = meijer_g_3003(z)?;
        unsafe { *out = g };
        Ok(())
    })
}

/// Creates a linear conversion `η = g0 · S`. Writes the handle to `out`.
#[no_mangle]
pub unsafe extern "C" fn ryd_conversion_new_linear(
    g0_cm3_per_vs: c_double,
    out: *mut *mut RydConversion,
) -> RydStatus {
    require!(out);
    boundary(|| {
        let model = ConversionModel::linear(g0_cm3_per_vs)?;
        unsafe { *out = Box::into_raw(Box::new(RydConversion(model))) };
        Ok(())
    })
}

/// Creates a quadratic conversion `η = g0 · S + g1 · S²`. Writes the handle
/// to `out`.
#[no_mangle]
pub unsafe extern "C" fn ryd_conversion_new_quadratic(
    g0_cm3_per_vs: c_double,
    g1_cm3_per_vs2: c_double,
    out: *mut *mut RydConversion,
) -> RydStatus {
    require!(out);
    boundary(|| {
        let model = ConversionModel::quadratic(g0_cm3_per_vs, g1_cm3_per_vs2)?;
        unsafe { *out = Box::into_raw(Box::new(RydConversion(model))) };
        Ok(())
    })
}

/// Releases a conversion. `NULL` is ignored.
#[no_mangle]
pub unsafe extern "C" fn ryd_conversion_free(conversion: *mut RydConversion) {
    if !conversion.is_null() {
        drop(Box::from_raw(conversion));
    }
}

/// Density in cm⁻³ for a total signal in nV·s.
#[no_mangle]
pub unsafe extern "C" fn ryd_conversion_density(
    conversion: *const RydConversion,
    signal_nvs: c_double,
    out: *mut c_double,
) -> RydStatus {
    require!(conversion);
    require!(out);
    let model = &(*conversion).0;
    boundary(|| {
        let eta = model.density_per_cm3(signal_nvs)?;
        unsafe { *out = eta };
        Ok(())
    })
}

/// Signal in nV·s that a density in cm⁻³ produces (inverse conversion).
#[no_mangle]
pub unsafe extern "C" fn ryd_conversion_signal(
    conversion: *const RydConversion,
    eta_cm3: c_double,
    out: *mut c_double,
) -> RydStatus {
    require!(conversion);
    require!(out);
    let model = &(*conversion).0;
    boundary(|| {
        let s = model.signal_nvs(eta_cm3)?;
        unsafe { *out = s };
        Ok(())
    })
}

/// Predicted transferred-state signal (nV·s) for a measured total signal.
#[no_mangle]
pub unsafe extern "C" fn ryd_predict_np_signal(
    conversion: *const RydConversion,
    s_total_nvs: c_double,
    sweep: *const RydSweep,
    f_prime: c_double,
    set: *const RydChannelSet,
    out: *mut c_double,
) -> RydStatus {
    require!(conversion);
    require!(sweep);
    require!(set);
    require!(out);
    let model = &(*conversion).0;
    let sweep = &(*sweep).0;
    let set = &(*set).0;
    boundary(|| {
        let s = predict_np_signal(model, s_total_nvs, sweep, f_prime, set)?;
        unsafe { *out = s };
        Ok(())
    })
}

/// Signal-to-noise ratio `g/δg = αS/√(β_eff S² + S)` of a gated signal in
/// nV·s under the Polya gain-noise model.
#[no_mangle]
pub unsafe extern "C" fn ryd_polya_snr(
    alpha_per_sqrt_nvs: c_double,
    beta_eff_per_nvs: c_double,
    s_nvs: c_double,
    out: *mut c_double,
) -> RydStatus {
    require!(out);
    boundary(|| {
        let params = PolyaParams::new(alpha_per_sqrt_nvs, beta_eff_per_nvs)?;
        let snr = params.snr(s_nvs)?;
        unsafe { *out = snr };
        Ok(())
    })
}

/// Relative signal variance `(β_eff + 1/S)/α²` at a signal in nV·s.
#[no_mangle]
pub unsafe extern "C" fn ryd_polya_relative_variance(
    alpha_per_sqrt_nvs: c_double,
    beta_eff_per_nvs: c_double,
    s_nvs: c_double,
    out: *mut c_double,
) -> RydStatus {
    require!(out);
    boundary(|| {
        let params = PolyaParams::new(alpha_per_sqrt_nvs, beta_eff_per_nvs)?;
        let v = params.relative_variance(s_nvs)?;
        unsafe { *out = v };
        Ok(())
    })
}

/// Upper bound `√β_eff / α` on the shot-to-shot relative volume
/// fluctuation compatible with the noise figures.
#[no_mangle]
pub unsafe extern "C" fn ryd_polya_max_volume_fluctuation(
    alpha_per_sqrt_nvs: c_double,
    beta_eff_per_nvs: c_double,
    out: *mut c_double,
) -> RydStatus {
    require!(out);
    boundary(|| {
        let params = PolyaParams::new(alpha_per_sqrt_nvs, beta_eff_per_nvs)?;
        unsafe { *out = params.max_volume_fluctuation() };
        Ok(())
    })
}

/// Conversion-fit result. For a linear fit `g1` and `g1_sigma` are zero.
#[repr(C)]
pub struct RydConversionFit {
    pub g0_cm3_per_vs: c_double,
    pub g1_cm3_per_vs2: c_double,
    pub g0_sigma: c_double,
    pub g1_sigma: c_double,
    pub rss: c_double,
    pub reduced_chi_square: c_double,
    pub n_points: usize,
    pub iterations: usize,
    pub converged: bool,
}

/// Fits a conversion model to parallel arrays of per-shot total and
/// transferred signals (nV·s) and ramp speeds (V/cm/µs).
///
/// `quadratic` selects the model shape; `init_g0` seeds the minimiser
/// (pass a rough order-of-magnitude value, e.g. `1e15`).
#[no_mangle]
pub unsafe extern "C" fn ryd_fit_conversion(
    s_total_nvs: *const c_double,
    s_np_nvs: *const c_double,
    f_prime: *const c_double,
    n_points: usize,
    quadratic: bool,
    init_g0: c_double,
    sweep: *const RydSweep,
    set: *const RydChannelSet,
    out: *mut RydConversionFit,
) -> RydStatus {
    require!(s_total_nvs);
    require!(s_np_nvs);
    require!(f_prime);
    require!(sweep);
    require!(set);
    require!(out);
    let s_total = std::slice::from_raw_parts(s_total_nvs, n_points);
    let s_np = std::slice::from_raw_parts(s_np_nvs, n_points);
    let ramps = std::slice::from_raw_parts(f_prime, n_points);
    let sweep = &(*sweep).0;
    let set = &(*set).0;
    boundary(|| {
        let points: Vec<CalibrationPoint> = (0..n_points)
            .map(|i| CalibrationPoint {
                s_total_nvs: s_total[i],
                s_np_nvs: s_np[i],
                f_prime: ramps[i],
            })
            .collect();
        let kind = if quadratic {
            ModelKind::Quadratic
        } else {
            ModelKind::Linear
        };
        let options = CalibrationOptions {
            init_g0,
            ..CalibrationOptions::default()
        };
        let fit = fit_conversion(&points, kind, sweep, set, &options)?;
        let result = RydConversionFit {
            g0_cm3_per_vs: fit.model.g0(),
            g1_cm3_per_vs2: fit.model.g1().unwrap_or(0.0),
            g0_sigma: fit.param_sigmas[0],
            g1_sigma: fit.param_sigmas.get(1).copied().unwrap_or(0.0),
            rss: fit.rss,
            reduced_chi_square: fit.reduced_chi_square,
            n_points: fit.n_points,
            iterations: fit.iterations,
            converged: fit.converged,
        };
        unsafe { *out = result };
        Ok(())
    })
}

/// Gain-noise fit result.
#[repr(C)]
pub struct RydNoiseFit {
    /// Fitted α in (nV·s)^(-1/2) and its 1-sigma uncertainty.
    pub alpha_per_sqrt_nvs: c_double,
    pub alpha_sigma: c_double,
    /// Fitted β_eff in (nV·s)^(-1) and its 1-sigma uncertainty.
    pub beta_eff_per_nvs: c_double,
    pub beta_sigma: c_double,
    /// Upper bound on the shot-to-shot relative volume fluctuation.
    pub max_volume_fluctuation: c_double,
    pub n_bins_used: usize,
    pub n_bins_dropped: usize,
    pub iterations: usize,
    pub converged: bool,
}

/// Fits the Polya gain-noise parameters from parallel per-shot arrays of
/// ramp speeds (V/cm/µs) and the two gated signals (nV·s), given the
/// detector gain in cm⁻³/(V·s).
///
/// `bins_per_ramp == 0` selects the default binning.
#[no_mangle]
pub unsafe extern "C" fn ryd_fit_noise(
    f_prime: *const c_double,
    s_np_nvs: *const c_double,
    s_r_nvs: *const c_double,
    n_shots: usize,
    gain_cm3_per_vs: c_double,
    bins_per_ramp: usize,
    sweep: *const RydSweep,
    set: *const RydChannelSet,
    out: *mut RydNoiseFit,
) -> RydStatus {
    require!(f_prime);
    require!(s_np_nvs);
    require!(s_r_nvs);
    require!(sweep);
    require!(set);
    require!(out);
    let ramps = std::slice::from_raw_parts(f_prime, n_shots);
    let s_np = std::slice::from_raw_parts(s_np_nvs, n_shots);
    let s_r = std::slice::from_raw_parts(s_r_nvs, n_shots);
    let sweep = &(*sweep).0;
    let set = &(*set).0;
    boundary(|| {
        let shots: Vec<ShotRecord> = (0..n_shots)
            .map(|i| ShotRecord {
                shot_id: i as u64,
                f_prime: ramps[i],
                s_np_nvs: s_np[i],
                s_r_nvs: s_r[i],
            })
            .collect();
        let mut options = NoiseOptions::default();
        if bins_per_ramp > 0 {
            options.bins_per_ramp = bins_per_ramp;
        }
        let fit = iterative_fit(&shots, gain_cm3_per_vs, sweep, set, &options)?;
        let result = RydNoiseFit {
            alpha_per_sqrt_nvs: fit.params.alpha,
            alpha_sigma: fit.alpha_sigma,
            beta_eff_per_nvs: fit.params.beta_eff,
            beta_sigma: fit.beta_sigma,
            max_volume_fluctuation: fit.max_volume_fluctuation,
            n_bins_used: fit.n_bins_used,
            n_bins_dropped: fit.n_bins_dropped,
            iterations: fit.iterations,
            converged: fit.converged,
        };
        unsafe { *out = result };
        Ok(())
    })
}
