//! Exercises the C surface from Rust: handle lifecycles, value agreement
//! with the underlying library, error reporting, and the generated header.

use std::ffi::CStr;
use std::path::Path;
use std::process::Command;
use std::ptr;

use approx::assert_relative_eq;

use rydense_ffi::*;

fn cstr<'a>(p: *const std::ffi::c_char) -> &'a str {
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_str().unwrap()
}

#[test]
fn version_and_status_names_are_static_strings() {
    assert_eq!(cstr(ryd_version()), env!("CARGO_PKG_VERSION"));
    assert_eq!(cstr(ryd_status_name(RydStatus::Ok)), "ok");
    assert_eq!(cstr(ryd_status_name(RydStatus::Domain)), "domain");
    assert_eq!(cstr(ryd_status_name(RydStatus::Internal)), "internal");
}

#[test]
fn expected_transition_matches_the_rust_api() {
    let set = ryd_channel_set_new_sublevels();
    let sweep = ryd_sweep_new_default();
    let mut p_c = f64::NAN;
    let status =
        unsafe { ryd_expected_transition(sweep, 1.0, 4.0e7, set, &mut p_c) };
    assert_eq!(status, RydStatus::Ok);

    let p_rust = rydense::physics::expected_transition(
        rydense::physics::GasDensity::per_cm3(4.0e7).unwrap(),
        &rydense::physics::SweepScaling::default().at(1.0).unwrap(),
        &rydense::physics::ChannelSet::default_sublevels(),
    )
    .unwrap();
    assert_eq!(p_c.to_bits(), p_rust.to_bits());

    // Aggregate probability and pair count work through the same handles.
    let mut p_pair = f64::NAN;
    assert_eq!(
        unsafe { ryd_transition_probability(sweep, 1.0, 10.0, 0.3, set, &mut p_pair) },
        RydStatus::Ok
    );
    assert!((0.0..=1.0).contains(&p_pair));

    let mut n = f64::NAN;
    assert_eq!(
        unsafe { ryd_np_count(sweep, 1.0, 4.0e7, 2.0e-6, set, &mut n) },
        RydStatus::Ok
    );
    assert_relative_eq!(n, 0.5 * 4.0e7 * 2.0e-6 * p_c, max_relative = 1e-12);

    unsafe {
        ryd_sweep_free(sweep);
        ryd_channel_set_free(set);
    }
}

#[test]
fn kernel_and_meijer_values() {
    let mut k = f64::NAN;
    assert_eq!(unsafe { ryd_k_integral(0.0, &mut k) }, RydStatus::Ok);
    assert_eq!(k, 1.0);

    let mut g = f64::NAN;
    assert_eq!(unsafe { ryd_meijer_g_3003(0.0, &mut g) }, RydStatus::Ok);
    assert_relative_eq!(g, std::f64::consts::PI.sqrt(), max_relative = 1e-15);
}

#[test]
fn sum_rule_through_the_abi() {
    let set = ryd_channel_set_new_sublevels();
    let mut s = f64::NAN;
    for theta in [0.0, 0.7, 1.9, 3.1] {
        assert_eq!(
            unsafe { ryd_channel_set_sum_f6(set, theta, &mut s) },
            RydStatus::Ok
        );
        assert_relative_eq!(s, 2.0 / 3.0, epsilon = 1e-12);
    }
    let polar = ryd_channel_set_new_polar();
    assert_eq!(
        unsafe { ryd_channel_set_sum_f6(polar, 0.0, &mut s) },
        RydStatus::Ok
    );
    assert_relative_eq!(s, (2.0 / 3.0_f64).powi(2), epsilon = 1e-12);
    unsafe {
        ryd_channel_set_free(polar);
        ryd_channel_set_free(set);
    }
}

#[test]
fn conversion_round_trip_and_prediction() {
    let mut conv: *mut RydConversion = ptr::null_mut();
    assert_eq!(
        unsafe { ryd_conversion_new_linear(4.15e15, &mut conv) },
        RydStatus::Ok
    );
    let mut eta = f64::NAN;
    assert_eq!(
        unsafe { ryd_conversion_density(conv, 10.0, &mut eta) },
        RydStatus::Ok
    );
    assert_relative_eq!(eta, 4.15e7, max_relative = 1e-12);
    let mut s = f64::NAN;
    assert_eq!(
        unsafe { ryd_conversion_signal(conv, eta, &mut s) },
        RydStatus::Ok
    );
    assert_relative_eq!(s, 10.0, max_relative = 1e-12);

    let set = ryd_channel_set_new_sublevels();
    let sweep = ryd_sweep_new_default();
    let mut s_np = f64::NAN;
    assert_eq!(
        unsafe { ryd_predict_np_signal(conv, 10.0, sweep, 1.0, set, &mut s_np) },
        RydStatus::Ok
    );
    assert!(s_np > 0.0 && s_np < 10.0);
    unsafe {
        ryd_sweep_free(sweep);
        ryd_channel_set_free(set);
        ryd_conversion_free(conv);
    }
}

#[test]
fn error_paths_set_status_and_message() {
    let set = ryd_channel_set_new_sublevels();
    let sweep = ryd_sweep_new_default();
    let mut out = f64::NAN;

    // Negative density is a domain error with a readable message.
    let status = unsafe { ryd_expected_transition(sweep, 1.0, -1.0e7, set, &mut out) };
    assert_eq!(status, RydStatus::Domain);
    let message = cstr(ryd_last_error_message());
    assert!(message.contains("density"), "message: {message}");
    assert!(out.is_nan(), "output must stay untouched on failure");

    // NULL pointers are caught before anything is dereferenced.
    let status = unsafe {
        ryd_expected_transition(ptr::null(), 1.0, 1.0e7, set, &mut out)
    };
    assert_eq!(status, RydStatus::NullArgument);
    assert!(cstr(ryd_last_error_message()).contains("NULL"));

    // Invalid handle construction reports and writes nothing.
    let mut bad: *mut RydSweep = ptr::null_mut();
    let status = unsafe { ryd_sweep_new(-3.0, 1.0, &mut bad) };
    assert_eq!(status, RydStatus::Domain);
    assert!(bad.is_null());

    let mut conv: *mut RydConversion = ptr::null_mut();
    assert_eq!(
        unsafe { ryd_conversion_new_linear(0.0, &mut conv) },
        RydStatus::Domain
    );
    assert!(conv.is_null());

    unsafe {
        ryd_sweep_free(sweep);
        ryd_channel_set_free(set);
    }
}

#[test]
fn noise_curve_values() {
    let mut snr = f64::NAN;
    assert_eq!(
        unsafe { ryd_polya_snr(6.4, 0.072, 10.0, &mut snr) },
        RydStatus::Ok
    );
    assert_relative_eq!(
        snr,
        6.4 * 10.0 / (0.072_f64 * 100.0 + 10.0).sqrt(),
        max_relative = 1e-12
    );

    let mut v = f64::NAN;
    assert_eq!(
        unsafe { ryd_polya_relative_variance(6.4, 0.072, 10.0, &mut v) },
        RydStatus::Ok
    );
    assert_relative_eq!(v, (0.072 + 0.1) / (6.4 * 6.4), max_relative = 1e-12);

    let mut bound = f64::NAN;
    assert_eq!(
        unsafe { ryd_polya_max_volume_fluctuation(6.4, 0.072, &mut bound) },
        RydStatus::Ok
    );
    assert_relative_eq!(bound, 0.072_f64.sqrt() / 6.4, max_relative = 1e-12);

    // Invalid parameters are rejected.
    assert_eq!(
        unsafe { ryd_polya_snr(-1.0, 0.072, 10.0, &mut snr) },
        RydStatus::Domain
    );
}

#[test]
fn conversion_fit_recovers_noiseless_coefficient() {
    let set = ryd_channel_set_new_sublevels();
    let sweep = ryd_sweep_new_default();
    let truth = rydense::calibration::ConversionModel::linear(4.15e15).unwrap();
    let scaling = rydense::physics::SweepScaling::default();
    let channels = rydense::physics::ChannelSet::default_sublevels();

    let s_total: Vec<f64> = (1..=12).map(|i| 2.0 * i as f64).collect();
    let s_np: Vec<f64> = s_total
        .iter()
        .map(|&s| {
            rydense::calibration::predict_np_signal(&truth, s, &scaling, 1.0, &channels).unwrap()
        })
        .collect();
    let ramps = vec![1.0; s_total.len()];

    let mut fit = std::mem::MaybeUninit::<RydConversionFit>::uninit();
    let status = unsafe {
        ryd_fit_conversion(
            s_total.as_ptr(),
            s_np.as_ptr(),
            ramps.as_ptr(),
            s_total.len(),
            false,
            2.5e15,
            sweep,
            set,
            fit.as_mut_ptr(),
        )
    };
    assert_eq!(status, RydStatus::Ok);
    let fit = unsafe { fit.assume_init() };
    assert!(fit.converged);
    assert_eq!(fit.n_points, 12);
    assert_relative_eq!(fit.g0_cm3_per_vs, 4.15e15, max_relative = 1e-6);
    assert_eq!(fit.g1_cm3_per_vs2, 0.0);

    unsafe {
        ryd_sweep_free(sweep);
        ryd_channel_set_free(set);
    }
}

#[test]
fn noise_fit_recovers_generator_through_the_abi() {
    use rydense::noise::PolyaParams;
    use rydense::simulator::{generate_dataset, SimConfig, SimMode};

    let config = SimConfig {
        seed: 9,
        n_shots: 50_000,
        mode: SimMode::Analytic,
        f_primes: vec![1.0],
        eta_mean_cm3: 2.5e8,
        eta_sigma_rel: 1.0,
        volume_cm3: 2.0e-6,
        detector: rydense::calibration::ConversionModel::linear(4.15e15).unwrap(),
        noise: Some(PolyaParams::new(6.4, 0.072).unwrap()),
        bbr_fraction: 0.0,
        scaling: rydense::physics::SweepScaling::default(),
        channels: rydense::physics::ChannelSet::default_sublevels(),
    };
    let (shots, _) = generate_dataset(&config).unwrap();
    let ramps: Vec<f64> = shots.iter().map(|s| s.f_prime).collect();
    let s_np: Vec<f64> = shots.iter().map(|s| s.s_np_nvs).collect();
    let s_r: Vec<f64> = shots.iter().map(|s| s.s_r_nvs).collect();

    let set = ryd_channel_set_new_sublevels();
    let sweep = ryd_sweep_new_default();
    let mut fit = std::mem::MaybeUninit::<RydNoiseFit>::uninit();
    let status = unsafe {
        ryd_fit_noise(
            ramps.as_ptr(),
            s_np.as_ptr(),
            s_r.as_ptr(),
            shots.len(),
            4.15e15,
            16,
            sweep,
            set,
            fit.as_mut_ptr(),
        )
    };
    assert_eq!(status, RydStatus::Ok);
    let fit = unsafe { fit.assume_init() };
    assert!(fit.converged);
    assert_relative_eq!(fit.alpha_per_sqrt_nvs, 6.4, max_relative = 0.10);
    assert_relative_eq!(fit.beta_eff_per_nvs, 0.072, max_relative = 0.25);
    assert!((0.03..0.05).contains(&fit.max_volume_fluctuation));

    unsafe {
        ryd_sweep_free(sweep);
        ryd_channel_set_free(set);
    }
}

/// The build script must have produced a C header that declares the full
/// surface and — when a C compiler is around — parses cleanly.
#[test]
fn generated_header_is_complete_and_compiles() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/rydense.h");
    let text = std::fs::read_to_string(&header).expect("header generated at build time");
    for symbol in [
        "RYD_STATUS_OK",
        "typedef struct RydChannelSet RydChannelSet",
        "ryd_expected_transition",
        "ryd_fit_conversion",
        "ryd_fit_noise",
        "ryd_last_error_message",
    ] {
        assert!(text.contains(symbol), "header lacks {symbol}");
    }

    let dir = tempfile::tempdir().unwrap();
    let main_c = dir.path().join("smoke.c");
    std::fs::write(
        &main_c,
        "#include \"rydense.h\"\nint main(void) { return RYD_STATUS_OK; }\n",
    )
    .unwrap();
    match Command::new("cc")
        .arg("-fsyntax-only")
        .arg("-I")
        .arg(header.parent().unwrap())
        .arg(&main_c)
        .output()
    {
        Ok(out) => assert!(
            out.status.success(),
            "header failed to parse: {}",
            String::from_utf8_lossy(&out.stderr)
        ),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            eprintln!("no C compiler found; skipping syntax check");
        }
        Err(e) => panic!("could not run C compiler: {e}"),
    }
}
