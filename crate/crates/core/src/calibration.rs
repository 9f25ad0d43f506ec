//! Signal-to-density calibration of a charge-integrating detector.
//!
//! The detector reports a time-integrated signal `S` in nV·s per gate. A
//! conversion model `g(S)` maps that signal to a gas density; its inverse
//! `h(η)` predicts the signal a given density produces. Because the
//! expected pair-transition fraction depends only on density and ramp
//! speed, the transferred-state signal measured in the same shot pins the
//! conversion absolutely:
//!
//! ```text
//! S_np = h( ½ · g(S_T) · ⟨P⟩(g(S_T), F') )
//! ```
//!
//! Fitting that relation over a set of shots yields the conversion
//! coefficients without any external density reference. A nested-model
//! F-test decides whether the data support a quadratic (saturating)
//! detector response over a linear one.

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, FisherSnedecor};

use crate::error::{Error, Result};
use crate::numerics::leastsq::{least_squares, FitOptions, LeastSquaresFit};
use crate::physics::{expected_transition, ChannelSet, GasDensity, SweepScaling};

/// Signal conversion, nV·s → V·s.
pub const SIGNAL_NVS_TO_VS: f64 = 1e-9;

/// Detector conversion model. Coefficients are in V·s units: `g0` in
/// cm⁻³/(V·s) and `g1` in cm⁻³/(V·s)²; the API accepts signals in nV·s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ConversionModel {
    Linear { g0: f64 },
    Quadratic { g0: f64, g1: f64 },
}

/// Which conversion model shape to fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Linear,
    Quadratic,
}

impl ConversionModel {
    pub fn linear(g0: f64) -> Result<Self> {
        validate_g0(g0)?;
        Ok(ConversionModel::Linear { g0 })
    }

    pub fn quadratic(g0: f64, g1: f64) -> Result<Self> {
        validate_g0(g0)?;
        if !g1.is_finite() {
            return Err(Error::domain(format!(
                "quadratic coefficient must be finite, got {g1}"
            )));
        }
        Ok(ConversionModel::Quadratic { g0, g1 })
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            ConversionModel::Linear { .. } => ModelKind::Linear,
            ConversionModel::Quadratic { .. } => ModelKind::Quadratic,
        }
    }

    pub fn g0(&self) -> f64 {
        match *self {
            ConversionModel::Linear { g0 } => g0,
            ConversionModel::Quadratic { g0, .. } => g0,
        }
    }

    pub fn g1(&self) -> Option<f64> {
        match *self {
            ConversionModel::Linear { .. } => None,
            ConversionModel::Quadratic { g1, .. } => Some(g1),
        }
    }

    pub fn n_params(&self) -> usize {
        match self {
            ConversionModel::Linear { .. } => 1,
            ConversionModel::Quadratic { .. } => 2,
        }
    }

    /// `g(S)`: density in cm⁻³ inferred from a signal in nV·s.
    pub fn density_per_cm3(&self, signal_nvs: f64) -> Result<f64> {
        if !(signal_nvs.is_finite() && signal_nvs >= 0.0) {
            return Err(Error::domain(format!(
                "signal must be finite and non-negative, got {signal_nvs} nV·s"
            )));
        }
        let s = signal_nvs * SIGNAL_NVS_TO_VS;
        Ok(match *self {
            ConversionModel::Linear { g0 } => g0 * s,
            ConversionModel::Quadratic { g0, g1 } => {
                // A saturating response (g1 < 0) stops being invertible at
                // its turning point; signals beyond it are out of domain.
                if g1 < 0.0 && s > -g0 / (2.0 * g1) {
                    return Err(Error::domain(format!(
                        "signal {signal_nvs} nV·s lies beyond the turning point of a \
                         saturating conversion"
                    )));
                }
                g0 * s + g1 * s * s
            }
        })
    }

    /// `h(η) = g⁻¹(η)`: signal in nV·s that corresponds to a density in
    /// cm⁻³.
    ///
    /// For the quadratic model the positive root of the quadratic formula
    /// is used, switching to its series expansion where the formula would
    /// cancel catastrophically.
    pub fn signal_nvs(&self, eta_per_cm3: f64) -> Result<f64> {
        if !(eta_per_cm3.is_finite() && eta_per_cm3 >= 0.0) {
            return Err(Error::domain(format!(
                "density must be finite and non-negative, got {eta_per_cm3} cm^-3"
            )));
        }
        let s_vs = match *self {
            ConversionModel::Linear { g0 } => eta_per_cm3 / g0,
            ConversionModel::Quadratic { g0, g1 } => {
                let u = g1 * eta_per_cm3 / (g0 * g0);
                if u.abs() < 1e-8 {
                    // g1-small limit: S = η/g0 · (1 - u + 2u² - ...)
                    eta_per_cm3 / g0 * (1.0 - u + 2.0 * u * u)
                } else {
                    let disc = g0 * g0 + 4.0 * g1 * eta_per_cm3;
                    if disc < 0.0 {
                        return Err(Error::numerical(format!(
                            "density {eta_per_cm3} cm^-3 is outside the range of the \
                             quadratic conversion (negative discriminant)"
                        )));
                    }
                    (-g0 + disc.sqrt()) / (2.0 * g1)
                }
            }
        };
        Ok(s_vs / SIGNAL_NVS_TO_VS)
    }
}

fn validate_g0(g0: f64) -> Result<()> {
    if !(g0.is_finite() && g0 > 0.0) {
        return Err(Error::domain(format!(
            "linear conversion coefficient must be positive, got {g0}"
        )));
    }
    Ok(())
}

/// Predicted transferred-state signal for a measured total signal, both in
/// nV·s: converts the total signal to a density, applies the expected
/// transition fraction at that density, and maps the transferred density
/// back through the detector.
pub fn predict_np_signal(
    model: &ConversionModel,
    s_total_nvs: f64,
    scaling: &SweepScaling,
    f_prime: f64,
    set: &ChannelSet,
) -> Result<f64> {
    let eta_tot = GasDensity::per_cm3(model.density_per_cm3(s_total_nvs)?)?;
    let sweep = scaling.at(f_prime)?;
    let p = expected_transition(eta_tot, &sweep, set)?;
    model.signal_nvs(0.5 * eta_tot.value_per_cm3() * p)
}

/// One shot reduced to what the calibration consumes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationPoint {
    /// Total signal `S_T = S_np + S_R` in nV·s.
    pub s_total_nvs: f64,
    /// Transferred-state signal in nV·s.
    pub s_np_nvs: f64,
    /// Ramp speed of this shot in V/cm/µs.
    pub f_prime: f64,
}

/// Residual weighting for the calibration fit.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum Weighting {
    /// All points weighted equally.
    #[default]
    Uniform,
    /// Per-point multipliers applied to the residuals (1/σ convention).
    PerPoint(Vec<f64>),
}

/// Knobs for [`fit_conversion`].
#[derive(Debug, Clone)]
pub struct CalibrationOptions {
    /// Starting value for `g0` in cm⁻³/(V·s).
    pub init_g0: f64,
    /// Starting value for `g1` in cm⁻³/(V·s)²; ignored for linear fits.
    pub init_g1: f64,
    pub weighting: Weighting,
    pub fit: FitOptions,
}

impl Default for CalibrationOptions {
    fn default() -> Self {
        CalibrationOptions {
            init_g0: 1e15,
            init_g1: 0.0,
            weighting: Weighting::Uniform,
            fit: FitOptions::default(),
        }
    }
}

/// Outcome of a conversion fit: the model with back-scaled uncertainties
/// plus the raw minimiser diagnostics.
#[derive(Debug, Clone, Serialize)]
pub struct CalibrationFit {
    pub model: ConversionModel,
    /// 1-sigma uncertainties of the model coefficients, same order as the
    /// covariance.
    pub param_sigmas: Vec<f64>,
    /// Coefficient covariance in physical units.
    pub covariance: Vec<Vec<f64>>,
    pub rss: f64,
    pub reduced_chi_square: f64,
    pub n_points: usize,
    pub converged: bool,
    pub iterations: usize,
}

/// Fits a conversion model to measured (total, transferred) signal pairs.
///
/// Internally the coefficients are rescaled so both fit parameters are
/// order one — `g0` and `g1` differ by many decades in physical units and
/// would otherwise produce a hopelessly ill-conditioned normal matrix.
pub fn fit_conversion(
    points: &[CalibrationPoint],
    kind: ModelKind,
    scaling: &SweepScaling,
    set: &ChannelSet,
    options: &CalibrationOptions,
) -> Result<CalibrationFit> {
    if points.is_empty() {
        return Err(Error::domain("calibration needs at least one point"));
    }
    let weights: Vec<f64> = match &options.weighting {
        Weighting::Uniform => vec![1.0; points.len()],
        Weighting::PerPoint(w) => {
            if w.len() != points.len() {
                return Err(Error::domain(format!(
                    "{} weights for {} points",
                    w.len(),
                    points.len()
                )));
            }
            if let Some(bad) = w.iter().find(|x| !(x.is_finite() && **x >= 0.0)) {
                return Err(Error::domain(format!("invalid weight {bad}")));
            }
            w.clone()
        }
    };
    validate_g0(options.init_g0)?;

    let s_max_vs = points
        .iter()
        .map(|p| p.s_total_nvs)
        .fold(0.0_f64, f64::max)
        * SIGNAL_NVS_TO_VS;
    if s_max_vs <= 0.0 {
        return Err(Error::domain(
            "calibration needs at least one point with a positive total signal",
        ));
    }

    // Dimensionless parameters: p0 = g0/scale0, p1 = g1/scale1 with scale1
    // chosen so a quadratic correction of order one at the largest signal
    // maps to p1 of order one.
    let scale0 = options.init_g0;
    let scale1 = scale0 / s_max_vs;
    let init = match kind {
        ModelKind::Linear => vec![1.0],
        ModelKind::Quadratic => vec![1.0, options.init_g1 / scale1],
    };

    let model_at = |p: &[f64]| -> Result<ConversionModel> {
        match kind {
            ModelKind::Linear => ConversionModel::linear(p[0] * scale0),
            ModelKind::Quadratic => ConversionModel::quadratic(p[0] * scale0, p[1] * scale1),
        }
    };

    let residual = |p: &[f64], out: &mut [f64]| -> Result<()> {
        let model = model_at(p)?;
        for (i, pt) in points.iter().enumerate() {
            let predicted =
                predict_np_signal(&model, pt.s_total_nvs, scaling, pt.f_prime, set)?;
            out[i] = (predicted - pt.s_np_nvs) * weights[i];
        }
        Ok(())
    };

    let fit = least_squares(residual, points.len(), &init, &options.fit)?;
    let model = model_at(&fit.params)?;
    finish_fit(fit, model, &[scale0, scale1])
}

/// Back-scales a fit over dimensionless parameters into physical units.
fn finish_fit(
    fit: LeastSquaresFit,
    model: ConversionModel,
    scales: &[f64],
) -> Result<CalibrationFit> {
    let n = fit.n_params;
    let mut covariance = vec![vec![0.0; n]; n];
    let mut param_sigmas = vec![0.0; n];
    for i in 0..n {
        for j in 0..n {
            covariance[i][j] = fit.covariance[i][j] * scales[i] * scales[j];
        }
        param_sigmas[i] = covariance[i][i].max(0.0).sqrt();
    }
    Ok(CalibrationFit {
        model,
        param_sigmas,
        covariance,
        rss: fit.rss,
        reduced_chi_square: fit.reduced_chi_square,
        n_points: fit.n_points,
        converged: fit.converged,
        iterations: fit.iterations,
    })
}

/// Nested-model comparison between a linear and a quadratic conversion fit
/// of the same data.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct FTest {
    /// `(rss_lin - rss_quad) / (rss_quad / (n - 2))`, clamped at zero.
    pub f_statistic: f64,
    /// Right-tail probability of that statistic under F(1, n-2).
    pub p_value: f64,
    /// p-value below which the quadratic model is preferred.
    pub threshold_p: f64,
    pub prefers_quadratic: bool,
}

/// Decides whether the quadratic term is statistically justified at the
/// given confidence level (e.g. `0.99`).
pub fn f_test(linear: &CalibrationFit, quadratic: &CalibrationFit, confidence: f64) -> Result<FTest> {
    if linear.model.n_params() != 1 || quadratic.model.n_params() != 2 {
        return Err(Error::domain(
            "model comparison expects a linear fit and a quadratic fit",
        ));
    }
    if linear.n_points != quadratic.n_points {
        return Err(Error::domain(format!(
            "fits cover different data: {} vs {} points",
            linear.n_points, quadratic.n_points
        )));
    }
    if !(0.0..1.0).contains(&confidence) {
        return Err(Error::domain(format!(
            "confidence level must lie in (0, 1), got {confidence}"
        )));
    }
    let n = quadratic.n_points;
    if n <= 2 {
        return Err(Error::domain(
            "model comparison needs more points than quadratic parameters",
        ));
    }
    let dof = (n - 2) as f64;
    let threshold_p = 1.0 - confidence;

    let (f_statistic, p_value) = if quadratic.rss <= 0.0 {
        // Perfect quadratic fit: the statistic diverges.
        (f64::INFINITY, 0.0)
    } else {
        let f = ((linear.rss - quadratic.rss) / (quadratic.rss / dof)).max(0.0);
        let dist = FisherSnedecor::new(1.0, dof)
            .map_err(|e| Error::numerical(format!("F distribution setup failed: {e}")))?;
        (f, 1.0 - dist.cdf(f))
    };

    Ok(FTest {
        f_statistic,
        p_value,
        threshold_p,
        prefers_quadratic: p_value < threshold_p,
    })
}

/// Statistical floor of a transition-fraction measurement with `n_atoms`
/// atoms: at most `n/2` pairs contribute, and a Bernoulli fraction over
/// `m` trials is known to no better than `½/√m`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct FiniteSampleBound {
    /// Worst-case absolute standard error of the fraction.
    pub absolute: f64,
    /// `absolute` divided by the expected fraction; infinite at zero.
    pub relative: f64,
}

pub fn finite_sample_uncertainty(n_atoms: f64, expected_fraction: f64) -> Result<FiniteSampleBound> {
    if !(n_atoms.is_finite() && n_atoms > 0.0) {
        return Err(Error::domain(format!(
            "atom number must be positive, got {n_atoms}"
        )));
    }
    if !(expected_fraction.is_finite() && (0.0..=1.0).contains(&expected_fraction)) {
        return Err(Error::domain(format!(
            "expected fraction must lie in [0, 1], got {expected_fraction}"
        )));
    }
    let absolute = 0.5 / (n_atoms / 2.0).sqrt();
    let relative = if expected_fraction > 0.0 {
        absolute / expected_fraction
    } else {
        f64::INFINITY
    };
    Ok(FiniteSampleBound { absolute, relative })
}
