//! Pair-transition physics of a frozen Rydberg gas swept through a
//! Stark-tuned resonance.
//!
//! A pair of atoms separated by `r` undergoes an adiabatic transition with
//! probability
//!
//! ```text
//! P(r, θ) = 1 - exp[-(r / (r₀ f(θ)))⁻⁶]
//! ```
//!
//! where `r₀` depends on the field-ramp speed and `f(θ)` encodes the angular
//! shape of the dipole-dipole coupling for one magnetic-sublevel channel.
//! Several channels cross during one sweep; their passage exponents add, so
//! the aggregate probability uses `Σ f⁶(θ)`. Averaging over the
//! nearest-neighbour distance distribution of an ideal gas gives the
//! expected transition fraction as a function of density — the quantity the
//! rest of the crate calibrates detectors against.
//!
//! Distances are in µm; densities at the API surface are per cm³.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::numerics::kernel::k_integral;
use crate::numerics::quad::{adaptive_gk15, QuadOptions};

/// Number density conversion, cm⁻³ → µm⁻³.
pub const DENSITY_CM3_TO_UM3: f64 = 1e-12;

/// Onset radius in µm of the reference sweep (1 V/cm/µs), chosen so the
/// polar channel's effective radius `r₀ · f(0)^(1/3)` comes out at 13.5 µm.
pub const DEFAULT_R0_REF_UM: f64 = 15.453_642_274_469_980;

/// Ramp speed (V/cm/µs) the default onset radius refers to.
pub const DEFAULT_F_PRIME_REF: f64 = 1.0;

/// One avoided-crossing channel: a label plus the angular profile `f³(θ)`.
///
/// The cube (rather than `f` itself) is stored because the physics only
/// ever consumes `f⁶ = (f³)²` and the sublevel decomposition is naturally
/// expressed at that power; profiles may be negative.
#[derive(Clone)]
pub struct CrossingChannel {
    label: String,
    f_cubed: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
}

impl CrossingChannel {
    pub fn new<F>(label: impl Into<String>, f_cubed: F) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        CrossingChannel {
            label: label.into(),
            f_cubed: Arc::new(f_cubed),
        }
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// Angular profile `f³(θ)`.
    pub fn f_cubed(&self, theta_rad: f64) -> f64 {
        (self.f_cubed)(theta_rad)
    }

    /// `f⁶(θ)`, the quantity that enters passage exponents.
    pub fn f_sixth(&self, theta_rad: f64) -> f64 {
        let f3 = self.f_cubed(theta_rad);
        f3 * f3
    }
}

impl fmt::Debug for CrossingChannel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CrossingChannel")
            .field("label", &self.label)
            .finish_non_exhaustive()
    }
}

/// Grid used to probe whether `Σ f⁶(θ)` is angle-independent.
const ISOTROPY_GRID: usize = 200;

/// The set of channels crossed during one sweep.
///
/// On construction the angular sum `Σ f⁶(θ)` is probed on a 200-point grid;
/// if it is flat to 1e-12 the set is marked isotropic and ensemble averages
/// take a closed-form path. A custom profile that varies only between grid
/// points would evade the probe, but physical channel shapes are smooth.
#[derive(Debug, Clone)]
pub struct ChannelSet {
    channels: Vec<CrossingChannel>,
    isotropic_sum: Option<f64>,
}

impl ChannelSet {
    pub fn new(channels: Vec<CrossingChannel>) -> Result<Self> {
        if channels.is_empty() {
            return Err(Error::domain("channel set must contain at least one channel"));
        }
        let mut set = ChannelSet {
            channels,
            isotropic_sum: None,
        };
        set.isotropic_sum = set.detect_isotropy();
        Ok(set)
    }

    /// Wraps a single channel.
    pub fn single(channel: CrossingChannel) -> Self {
        ChannelSet::new(vec![channel]).expect("one channel is non-empty")
    }

    /// Only the polar channel, the one whose onset radius anchors the
    /// sweep-rate scaling. Useful for studying a single angular profile in
    /// isolation.
    pub fn polar_only() -> Self {
        ChannelSet::single(CrossingChannel::new("(0,0)", |theta: f64| {
            let c = theta.cos();
            c * c - 1.0 / 3.0
        }))
    }

    /// The nine magnetic-sublevel channels of the dipole-dipole pair
    /// resonance, labelled by the (m₁, m₂) change of the two atoms. Their
    /// angular sum is `Σ f⁶ = 2/3` at every angle.
    pub fn default_sublevels() -> Self {
        let mut channels = Vec::with_capacity(9);
        channels.push(CrossingChannel::new("(0,0)", |theta: f64| {
            let c = theta.cos();
            c * c - 1.0 / 3.0
        }));
        for label in ["(0,+1)", "(0,-1)", "(+1,0)", "(-1,0)"] {
            channels.push(CrossingChannel::new(label, |theta: f64| {
                theta.sin() * theta.cos() * std::f64::consts::FRAC_1_SQRT_2
            }));
        }
        for label in ["(+1,-1)", "(-1,+1)"] {
            channels.push(CrossingChannel::new(label, |theta: f64| {
                let c = theta.cos();
                -(c * c - 1.0 / 3.0) / 2.0
            }));
        }
        for label in ["(+1,+1)", "(-1,-1)"] {
            channels.push(CrossingChannel::new(label, |theta: f64| {
                let s = theta.sin();
                s * s / 2.0
            }));
        }
        ChannelSet::new(channels).expect("default channel set is non-empty")
    }

    pub fn channels(&self) -> &[CrossingChannel] {
        &self.channels
    }

    /// Looks a channel up by its label.
    pub fn channel(&self, label: &str) -> Option<&CrossingChannel> {
        self.channels.iter().find(|c| c.label() == label)
    }

    /// `Σ f⁶(θ)` over all channels, accumulated in channel order.
    pub fn sum_f6(&self, theta_rad: f64) -> f64 {
        let mut acc = 0.0;
        for c in &self.channels {
            acc += c.f_sixth(theta_rad);
        }
        acc
    }

    /// The flat value of `Σ f⁶` when the set is isotropic, else `None`.
    pub fn isotropic_sum_f6(&self) -> Option<f64> {
        self.isotropic_sum
    }

    fn detect_isotropy(&self) -> Option<f64> {
        let mut min = f64::INFINITY;
        let mut max = f64::NEG_INFINITY;
        let mut mean = 0.0;
        for i in 0..ISOTROPY_GRID {
            let theta = PI * i as f64 / (ISOTROPY_GRID - 1) as f64;
            let s = self.sum_f6(theta);
            if !s.is_finite() {
                return None;
            }
            min = min.min(s);
            max = max.max(s);
            mean += s;
        }
        mean /= ISOTROPY_GRID as f64;
        if max - min <= 1e-12 * max.abs().max(1.0) {
            Some(mean)
        } else {
            None
        }
    }
}

impl Default for ChannelSet {
    fn default() -> Self {
        ChannelSet::default_sublevels()
    }
}

/// How the onset radius scales with field-ramp speed:
/// `r₀(F') = r0_ref · (f_prime_ref / F')^(1/6)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepScaling {
    r0_ref_um: f64,
    f_prime_ref: f64,
}

impl SweepScaling {
    pub fn new(r0_ref_um: f64, f_prime_ref: f64) -> Result<Self> {
        if !(r0_ref_um.is_finite() && r0_ref_um > 0.0) {
            return Err(Error::domain(format!(
                "reference onset radius must be positive, got {r0_ref_um} um"
            )));
        }
        if !(f_prime_ref.is_finite() && f_prime_ref > 0.0) {
            return Err(Error::domain(format!(
                "reference ramp speed must be positive, got {f_prime_ref} V/cm/us"
            )));
        }
        Ok(SweepScaling {
            r0_ref_um,
            f_prime_ref,
        })
    }

    pub fn r0_ref_um(&self) -> f64 {
        self.r0_ref_um
    }

    pub fn f_prime_ref(&self) -> f64 {
        self.f_prime_ref
    }

    /// Onset radius at ramp speed `f_prime` (V/cm/µs).
    pub fn r0_um(&self, f_prime: f64) -> Result<f64> {
        if !(f_prime.is_finite() && f_prime > 0.0) {
            return Err(Error::domain(format!(
                "ramp speed must be positive, got {f_prime} V/cm/us"
            )));
        }
        Ok(self.r0_ref_um * (self.f_prime_ref / f_prime).powf(1.0 / 6.0))
    }

    /// Fixes a ramp speed, yielding a fully specified sweep.
    pub fn at(&self, f_prime: f64) -> Result<SweepSpec> {
        Ok(SweepSpec {
            f_prime,
            r0_um: self.r0_um(f_prime)?,
            scaling: *self,
        })
    }
}

impl Default for SweepScaling {
    fn default() -> Self {
        SweepScaling {
            r0_ref_um: DEFAULT_R0_REF_UM,
            f_prime_ref: DEFAULT_F_PRIME_REF,
        }
    }
}

/// One sweep at a definite ramp speed, with its onset radius precomputed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepSpec {
    f_prime: f64,
    r0_um: f64,
    scaling: SweepScaling,
}

impl SweepSpec {
    /// Ramp speed in V/cm/µs.
    pub fn f_prime(&self) -> f64 {
        self.f_prime
    }

    /// Onset radius in µm at this ramp speed.
    pub fn r0_um(&self) -> f64 {
        self.r0_um
    }

    pub fn scaling(&self) -> SweepScaling {
        self.scaling
    }
}

/// Gas density with validated construction; stored per cm³.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct GasDensity(f64);

impl GasDensity {
    pub fn per_cm3(value: f64) -> Result<Self> {
        if !(value.is_finite() && value >= 0.0) {
            return Err(Error::domain(format!(
                "density must be finite and non-negative, got {value} cm^-3"
            )));
        }
        Ok(GasDensity(value))
    }

    pub fn value_per_cm3(&self) -> f64 {
        self.0
    }

    pub fn value_per_um3(&self) -> f64 {
        self.0 * DENSITY_CM3_TO_UM3
    }

    /// Wigner-Seitz radius `a = (3 / 4πη)^(1/3)` in µm; infinite at zero
    /// density.
    pub fn wigner_seitz_um(&self) -> f64 {
        let eta = self.value_per_um3();
        if eta == 0.0 {
            f64::INFINITY
        } else {
            (3.0 / (4.0 * PI * eta)).cbrt()
        }
    }

    /// Quantile of the nearest-neighbour distance: the `q`-quantile is
    /// `a · (-ln(1-q))^(1/3)`.
    pub fn nn_quantile_um(&self, q: f64) -> Result<f64> {
        if !(0.0..1.0).contains(&q) {
            return Err(Error::domain(format!(
                "quantile must lie in [0, 1), got {q}"
            )));
        }
        Ok(self.wigner_seitz_um() * (-(1.0 - q).ln()).cbrt())
    }

    /// Median nearest-neighbour distance `a · (ln 2)^(1/3)` in µm.
    pub fn median_nn_um(&self) -> f64 {
        self.wigner_seitz_um() * std::f64::consts::LN_2.cbrt()
    }
}

/// Single-channel adiabatic passage probability at separation `r_um` and
/// quantisation angle `theta_rad`.
///
/// Zero separation saturates to 1 (unless the channel is closed at that
/// angle), large separation decays to 0, and a vanishing profile gives
/// exactly 0.
pub fn p_lz_single(
    sweep: &SweepSpec,
    r_um: f64,
    theta_rad: f64,
    channel: &CrossingChannel,
) -> Result<f64> {
    p_from_f6(sweep, r_um, theta_rad, channel.f_sixth(theta_rad))
}

/// Aggregate passage probability over all channels of a set: the exponents
/// add, so `P = 1 - exp[-(r₀/r)⁶ Σ f⁶(θ)]`.
pub fn p_lz_aggregate(
    sweep: &SweepSpec,
    r_um: f64,
    theta_rad: f64,
    set: &ChannelSet,
) -> Result<f64> {
    p_from_f6(sweep, r_um, theta_rad, set.sum_f6(theta_rad))
}

fn p_from_f6(sweep: &SweepSpec, r_um: f64, theta_rad: f64, f6: f64) -> Result<f64> {
    if !(r_um.is_finite() && r_um >= 0.0) {
        return Err(Error::domain(format!(
            "separation must be finite and non-negative, got {r_um} um"
        )));
    }
    if !theta_rad.is_finite() {
        return Err(Error::domain(format!(
            "angle must be finite, got {theta_rad} rad"
        )));
    }
    if !f6.is_finite() || f6 < 0.0 {
        return Err(Error::numerical(format!(
            "channel profile produced invalid f^6 = {f6} at theta = {theta_rad}"
        )));
    }
    if f6 == 0.0 {
        return Ok(0.0);
    }
    if r_um == 0.0 {
        return Ok(1.0);
    }
    let q = sweep.r0_um() / r_um;
    let exponent = q.powi(6) * f6;
    Ok(-(-exponent).exp_m1())
}

/// Nearest-neighbour distance density of an ideal gas,
/// `p(r) = 4πη r² exp(-(4π/3) η r³)` with `η` in µm⁻³ and `r` in µm.
pub fn erlang_nn_pdf(eta: GasDensity, r_um: f64) -> Result<f64> {
    if !(r_um.is_finite() && r_um >= 0.0) {
        return Err(Error::domain(format!(
            "separation must be finite and non-negative, got {r_um} um"
        )));
    }
    let n = eta.value_per_um3();
    let r2 = r_um * r_um;
    Ok(4.0 * PI * n * r2 * (-(4.0 * PI / 3.0) * n * r2 * r_um).exp())
}

/// Expected transition probability of a randomly chosen atom: the passage
/// probability averaged over the nearest-neighbour distance and, for
/// anisotropic channel sets, over the orientation.
///
/// With `w(θ) = (r₀/a)⁶ Σ f⁶(θ)` the average is
/// `⟨P⟩ = 1 - ½ ∫₀^π sin θ · K(w(θ)) dθ`, which collapses to
/// `1 - K((r₀/a)⁶ Σf⁶)` when the sum is flat. Accurate to better than 1e-9
/// relative.
pub fn expected_transition(eta: GasDensity, sweep: &SweepSpec, set: &ChannelSet) -> Result<f64> {
    if eta.value_per_cm3() == 0.0 {
        return Ok(0.0);
    }
    let a_um = eta.wigner_seitz_um();
    let w_base = (sweep.r0_um() / a_um).powi(6);
    if let Some(s6) = set.isotropic_sum_f6() {
        return Ok(1.0 - k_integral(w_base * s6)?);
    }

    let opts = QuadOptions {
        rel_tol: 1e-10,
        ..QuadOptions::default()
    };
    let survival = adaptive_gk15(
        |theta: f64| {
            let w = w_base * set.sum_f6(theta);
            match k_integral(w) {
                Ok(k) => theta.sin() * k,
                Err(_) => f64::NAN,
            }
        },
        0.0,
        PI,
        &opts,
    )?;
    if !survival.value.is_finite() {
        return Err(Error::numerical(
            "channel profile produced non-finite values during orientation average",
        ));
    }
    Ok(1.0 - 0.5 * survival.value)
}

/// Same ensemble average as [`expected_transition`], computed by direct
/// two-dimensional quadrature over scaled separation and angle, without the
/// one-dimensional kernel. Slower; used to cross-check the closed form.
pub fn expected_transition_direct(
    eta: GasDensity,
    sweep: &SweepSpec,
    set: &ChannelSet,
) -> Result<f64> {
    if eta.value_per_cm3() == 0.0 {
        return Ok(0.0);
    }
    let a_um = eta.wigner_seitz_um();
    let w_base = (sweep.r0_um() / a_um).powi(6);

    let inner_opts = QuadOptions {
        rel_tol: 1e-11,
        ..QuadOptions::default()
    };
    let outer_opts = QuadOptions {
        rel_tol: 1e-9,
        ..QuadOptions::default()
    };

    // In u = r/a the distance density is 3u² exp(-u³) and the passage
    // exponent is w(θ) u⁻⁶.
    let survival_at = |w: f64| -> Result<f64> {
        if 1.5 * (2.0 * w).cbrt() >= 745.0 {
            return Ok(0.0);
        }
        let u_min = if w > 0.0 { (w / 745.0).powf(1.0 / 6.0) } else { 0.0 };
        let u_max = (1.5 * (2.0 * w).cbrt() + 45.0).cbrt();
        let j = adaptive_gk15(
            |u: f64| {
                let u2 = u * u;
                let u3 = u2 * u;
                let barrier = if w == 0.0 { 0.0 } else { w / (u3 * u3) };
                3.0 * u2 * (-u3 - barrier).exp()
            },
            u_min,
            u_max,
            &inner_opts,
        )?;
        Ok(j.value)
    };

    let outer = adaptive_gk15(
        |theta: f64| {
            let w = w_base * set.sum_f6(theta);
            match survival_at(w) {
                Ok(j) => theta.sin() * j,
                Err(_) => f64::NAN,
            }
        },
        0.0,
        PI,
        &outer_opts,
    )?;
    if !outer.value.is_finite() {
        return Err(Error::numerical(
            "direct ensemble average encountered non-finite values",
        ));
    }
    Ok(1.0 - 0.5 * outer.value)
}

/// Expected number of transferred pairs in a cloud of volume `volume_cm3`:
/// each transition involves two atoms, so `n = ½ η V ⟨P⟩`.
pub fn np_count(
    eta: GasDensity,
    volume_cm3: f64,
    sweep: &SweepSpec,
    set: &ChannelSet,
) -> Result<f64> {
    if !(volume_cm3.is_finite() && volume_cm3 > 0.0) {
        return Err(Error::domain(format!(
            "volume must be positive, got {volume_cm3} cm^3"
        )));
    }
    let p = expected_transition(eta, sweep, set)?;
    Ok(0.5 * eta.value_per_cm3() * volume_cm3 * p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn default_sweep() -> SweepSpec {
        SweepScaling::default().at(1.0).unwrap()
    }

    /// Density whose Wigner-Seitz radius equals the given length.
    fn density_with_ws_um(a_um: f64) -> GasDensity {
        let eta_um3 = 3.0 / (4.0 * PI * a_um.powi(3));
        GasDensity::per_cm3(eta_um3 / DENSITY_CM3_TO_UM3).unwrap()
    }

    #[test]
    fn default_sum_rule_is_two_thirds_everywhere() {
        let set = ChannelSet::default_sublevels();
        for i in 0..200 {
            let theta = PI * i as f64 / 199.0;
            let s = set.sum_f6(theta);
            assert!(
                (s - 2.0 / 3.0).abs() < 1e-12,
                "sum f^6 at theta={theta}: {s}"
            );
        }
        let s6 = set.isotropic_sum_f6().expect("default set is isotropic");
        assert_relative_eq!(s6, 2.0 / 3.0, epsilon = 1e-13);
    }

    #[test]
    fn default_set_has_nine_distinct_channels() {
        let set = ChannelSet::default_sublevels();
        assert_eq!(set.channels().len(), 9);
        let mut labels: Vec<&str> = set.channels().iter().map(|c| c.label()).collect();
        labels.sort_unstable();
        labels.dedup();
        assert_eq!(labels.len(), 9);
        assert!(set.channel("(0,0)").is_some());
        assert!(set.channel("(9,9)").is_none());
    }

    #[test]
    fn channel_profiles_are_bounded_and_mirror_symmetric() {
        let set = ChannelSet::default_sublevels();
        for c in set.channels() {
            for i in 0..=100 {
                let theta = PI * i as f64 / 100.0;
                let f3 = c.f_cubed(theta);
                assert!(f3.abs() <= 1.0, "{} at {theta}: {f3}", c.label());
                // Only |f³| is physical; the signed profiles of the tilt
                // channels flip under θ → π-θ.
                let mirrored = c.f_cubed(PI - theta);
                assert_relative_eq!(f3.abs(), mirrored.abs(), epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn polar_channel_closes_at_magic_angle() {
        let set = ChannelSet::default_sublevels();
        let polar = set.channel("(0,0)").unwrap();
        let magic = (1.0 / 3.0_f64).sqrt().acos();
        assert!(polar.f_cubed(magic).abs() < 1e-15);
        let sweep = default_sweep();
        for r in [0.5, 5.0, 20.0] {
            let p = p_lz_single(&sweep, r, magic, polar).unwrap();
            assert_eq!(p, 0.0, "channel closed at the magic angle");
        }
    }

    #[test]
    fn default_scaling_anchors_polar_effective_radius() {
        // At 1 V/cm/µs the polar channel's forward effective radius
        // r₀ · f(0) must equal 13.5 µm.
        let set = ChannelSet::default_sublevels();
        let polar = set.channel("(0,0)").unwrap();
        let sweep = default_sweep();
        let f0 = polar.f_cubed(0.0).cbrt();
        assert_relative_eq!(sweep.r0_um() * f0, 13.5, max_relative = 1e-12);
        assert_relative_eq!(
            DEFAULT_R0_REF_UM,
            13.5 * 1.5_f64.cbrt(),
            max_relative = 1e-15
        );
    }

    #[test]
    fn onset_radius_follows_sixth_root_scaling() {
        let scaling = SweepScaling::default();
        let r1 = scaling.r0_um(1.0).unwrap();
        assert_relative_eq!(r1, scaling.r0_ref_um(), max_relative = 1e-15);
        for f in [0.37, 1.0, 2.0, 6.5] {
            let r = scaling.r0_um(f).unwrap();
            assert_relative_eq!(r, r1 * f.powf(-1.0 / 6.0), max_relative = 1e-13);
        }
        // Doubling the ramp speed shrinks the radius by 2^(-1/6).
        let ratio = scaling.r0_um(2.0).unwrap() / r1;
        assert_relative_eq!(ratio, 2.0_f64.powf(-1.0 / 6.0), max_relative = 1e-13);
    }

    #[test]
    fn sweep_construction_rejects_bad_inputs() {
        assert!(SweepScaling::new(-1.0, 1.0).is_err());
        assert!(SweepScaling::new(10.0, 0.0).is_err());
        assert!(SweepScaling::default().at(0.0).is_err());
        assert!(SweepScaling::default().at(f64::NAN).is_err());
        assert!(GasDensity::per_cm3(-1e6).is_err());
        assert!(GasDensity::per_cm3(f64::INFINITY).is_err());
    }

    #[test]
    fn passage_probability_limits() {
        let set = ChannelSet::default_sublevels();
        let polar = set.channel("(0,0)").unwrap().clone();
        let sweep = default_sweep();

        // Contact limit saturates.
        assert_eq!(p_lz_single(&sweep, 0.0, 0.2, &polar).unwrap(), 1.0);
        assert_eq!(p_lz_aggregate(&sweep, 0.0, 0.2, &set).unwrap(), 1.0);
        // Far apart: vanishes.
        assert!(p_lz_aggregate(&sweep, 3e4, 0.2, &set).unwrap() < 1e-18);
        // Negative separation is rejected.
        assert!(p_lz_aggregate(&sweep, -1.0, 0.2, &set).is_err());

        // At the effective radius the probability is 1 - 1/e.
        let f0 = polar.f_cubed(0.0);
        let r_eff = sweep.r0_um() * f0.cbrt();
        let p = p_lz_single(&sweep, r_eff, 0.0, &polar).unwrap();
        assert_relative_eq!(p, 1.0 - (-1.0_f64).exp(), max_relative = 1e-12);
    }

    #[test]
    fn aggregate_characteristic_radius_is_angle_free() {
        // For the default set Σf⁶ = 2/3, so at r = r₀ (2/3)^(1/6) the
        // aggregate exponent is exactly 1 at any angle.
        let set = ChannelSet::default_sublevels();
        let sweep = default_sweep();
        let r = sweep.r0_um() * (2.0 / 3.0_f64).powf(1.0 / 6.0);
        for theta in [0.0, 0.4, 1.1, PI / 2.0, 2.3, PI] {
            let p = p_lz_aggregate(&sweep, r, theta, &set).unwrap();
            assert_relative_eq!(p, 1.0 - (-1.0_f64).exp(), max_relative = 1e-12);
        }
    }

    #[test]
    fn aggregate_of_one_channel_matches_single() {
        let set = ChannelSet::default_sublevels();
        let polar = set.channel("(0,0)").unwrap().clone();
        let single = ChannelSet::single(polar.clone());
        let sweep = default_sweep();
        for (r, theta) in [(3.0, 0.3), (9.0, 1.2), (16.0, 2.8)] {
            let a = p_lz_single(&sweep, r, theta, &polar).unwrap();
            let b = p_lz_aggregate(&sweep, r, theta, &single).unwrap();
            assert_relative_eq!(a, b, epsilon = 1e-15);
        }
    }

    #[test]
    fn nn_distance_density_normalises_and_peaks_correctly() {
        let eta = GasDensity::per_cm3(5e7).unwrap();
        let a = eta.wigner_seitz_um();

        let norm = adaptive_gk15(
            |r| erlang_nn_pdf(eta, r).unwrap(),
            0.0,
            8.0 * a,
            &QuadOptions::default(),
        )
        .unwrap();
        assert_relative_eq!(norm.value, 1.0, max_relative = 1e-9);

        // CDF at the closed-form median is one half.
        let median = eta.median_nn_um();
        assert_relative_eq!(median, eta.nn_quantile_um(0.5).unwrap(), epsilon = 1e-15);
        let half = adaptive_gk15(
            |r| erlang_nn_pdf(eta, r).unwrap(),
            0.0,
            median,
            &QuadOptions::default(),
        )
        .unwrap();
        assert_relative_eq!(half.value, 0.5, max_relative = 1e-9);

        // Mode at a (2/3)^(1/3).
        let mode = a * (2.0 / 3.0_f64).cbrt();
        let at_mode = erlang_nn_pdf(eta, mode).unwrap();
        assert!(at_mode > erlang_nn_pdf(eta, mode * 0.99).unwrap());
        assert!(at_mode > erlang_nn_pdf(eta, mode * 1.01).unwrap());

        assert_eq!(erlang_nn_pdf(eta, 0.0).unwrap(), 0.0);
        assert!(erlang_nn_pdf(eta, -2.0).is_err());
    }

    #[test]
    fn ensemble_average_closed_form_anchor() {
        // When the Wigner-Seitz radius equals the onset radius the expected
        // fraction is 1 - K(2/3); reference value from 50-digit quadrature.
        let sweep = default_sweep();
        let eta = density_with_ws_um(sweep.r0_um());
        let set = ChannelSet::default_sublevels();
        let p = expected_transition(eta, &sweep, &set).unwrap();
        assert_relative_eq!(p, 0.644844939057814130129894894931, max_relative = 1e-9);
    }

    #[test]
    fn ensemble_average_vanishes_with_density() {
        let sweep = default_sweep();
        let set = ChannelSet::default_sublevels();
        let zero = GasDensity::per_cm3(0.0).unwrap();
        assert_eq!(expected_transition(zero, &sweep, &set).unwrap(), 0.0);
        let dilute = GasDensity::per_cm3(1.0).unwrap();
        assert!(expected_transition(dilute, &sweep, &set).unwrap() < 1e-6);
    }

    #[test]
    fn ensemble_average_monotone_in_density_and_ramp() {
        let sweep = default_sweep();
        let set = ChannelSet::default_sublevels();
        let densities = [1e6, 1e7, 1e8, 1e9, 1e10];
        let mut last = 0.0;
        for d in densities {
            let p =
                expected_transition(GasDensity::per_cm3(d).unwrap(), &sweep, &set).unwrap();
            assert!(p > last, "not increasing at {d}: {p} <= {last}");
            // Saturates so hard at the top density that it rounds to 1.0.
            assert!(p <= 1.0);
            last = p;
        }

        // Faster ramps are less adiabatic.
        let eta = GasDensity::per_cm3(5e8).unwrap();
        let scaling = SweepScaling::default();
        let mut last = 1.0;
        for f in [0.3, 1.0, 3.0, 9.0] {
            let p = expected_transition(eta, &scaling.at(f).unwrap(), &set).unwrap();
            assert!(p < last, "not decreasing at {f}");
            last = p;
        }
    }

    #[test]
    fn ensemble_average_invariant_under_scale_collapse() {
        // Stretch all lengths by λ and dilute the gas by λ³: nothing
        // observable changes.
        let set = ChannelSet::default_sublevels();
        let eta = GasDensity::per_cm3(2e8).unwrap();
        let base = expected_transition(eta, &default_sweep(), &set).unwrap();
        for lambda in [0.5, 2.0, 3.7] {
            let scaled_sweep = SweepScaling::new(DEFAULT_R0_REF_UM * lambda, 1.0)
                .unwrap()
                .at(1.0)
                .unwrap();
            let scaled_eta =
                GasDensity::per_cm3(eta.value_per_cm3() / lambda.powi(3)).unwrap();
            let p = expected_transition(scaled_eta, &scaled_sweep, &set).unwrap();
            assert_relative_eq!(p, base, max_relative = 1e-12);
        }
    }

    #[test]
    fn direct_quadrature_agrees_with_closed_form() {
        let set = ChannelSet::default_sublevels();
        let scaling = SweepScaling::default();
        for (eta_cm3, f_prime) in [(3e7, 0.6), (4e8, 1.0), (2e9, 4.4)] {
            let eta = GasDensity::per_cm3(eta_cm3).unwrap();
            let sweep = scaling.at(f_prime).unwrap();
            let closed = expected_transition(eta, &sweep, &set).unwrap();
            let direct = expected_transition_direct(eta, &sweep, &set).unwrap();
            assert_relative_eq!(closed, direct, max_relative = 1e-8);
        }
    }

    #[test]
    fn anisotropic_set_uses_orientation_average() {
        // A lone polar channel is anisotropic: the flat-sum fast path must
        // be off and both computation routes must still agree.
        let set = ChannelSet::default_sublevels();
        let single = ChannelSet::single(set.channel("(0,0)").unwrap().clone());
        assert!(single.isotropic_sum_f6().is_none());

        let eta = GasDensity::per_cm3(6e8).unwrap();
        let sweep = default_sweep();
        let averaged = expected_transition(eta, &sweep, &single).unwrap();
        let direct = expected_transition_direct(eta, &sweep, &single).unwrap();
        assert_relative_eq!(averaged, direct, max_relative = 1e-8);

        // Fewer open channels means fewer transitions than the full set.
        let full = expected_transition(eta, &sweep, &set).unwrap();
        assert!(averaged < full);
    }

    #[test]
    fn pair_count_is_half_density_volume_probability() {
        let eta = GasDensity::per_cm3(3e8).unwrap();
        let sweep = default_sweep();
        let set = ChannelSet::default_sublevels();
        let volume = 2.5e-5; // cm³
        let n = np_count(eta, volume, &sweep, &set).unwrap();
        let p = expected_transition(eta, &sweep, &set).unwrap();
        assert_relative_eq!(n, 0.5 * eta.value_per_cm3() * volume * p, epsilon = 1e-12);
        assert!(np_count(eta, 0.0, &sweep, &set).is_err());
        assert!(np_count(eta, -1.0, &sweep, &set).is_err());
    }

    proptest! {
        #[test]
        fn passage_probability_is_a_probability(
            r in 0.0..120.0f64,
            theta in 0.0..PI,
            f_prime in 0.05..40.0f64,
        ) {
            let set = ChannelSet::default_sublevels();
            let sweep = SweepScaling::default().at(f_prime).unwrap();
            let p = p_lz_aggregate(&sweep, r, theta, &set).unwrap();
            prop_assert!((0.0..=1.0).contains(&p));
        }

        #[test]
        fn passage_probability_decreases_with_separation(
            r in 0.1..80.0f64,
            delta in 0.1..40.0f64,
            theta in 0.0..PI,
        ) {
            let set = ChannelSet::default_sublevels();
            let sweep = SweepScaling::default().at(1.0).unwrap();
            let near = p_lz_aggregate(&sweep, r, theta, &set).unwrap();
            let far = p_lz_aggregate(&sweep, r + delta, theta, &set).unwrap();
            prop_assert!(far <= near + 1e-15);
        }

        #[test]
        fn ensemble_average_stays_in_unit_interval(
            log_eta in 5.0..11.0f64,
            f_prime in 0.1..10.0f64,
        ) {
            let set = ChannelSet::default_sublevels();
            let sweep = SweepScaling::default().at(f_prime).unwrap();
            let eta = GasDensity::per_cm3(10f64.powf(log_eta)).unwrap();
            let p = expected_transition(eta, &sweep, &set).unwrap();
            prop_assert!((0.0..=1.0).contains(&p));
        }
    }
}
