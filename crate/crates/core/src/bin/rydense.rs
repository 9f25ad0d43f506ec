//! Command-line front end: synthetic generation, conversion fitting,
//! gain-noise analysis, lookup tables, and unit conversions.
//!
//! Exit codes: 0 on success, 2 for configuration problems, 3 for I/O
//! failures, 4 for numerical or data-validity failures.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use rydense::calibration::{
    f_test, fit_conversion, CalibrationFit, CalibrationOptions, ConversionModel, FTest, ModelKind,
    Weighting,
};
use rydense::config::RunConfig;
use rydense::dataset::{read_dataset, write_dataset, write_truth};
use rydense::error::{Error, Result};
use rydense::noise::{iterative_fit, noise_estimate_nvs, NoiseFit};
use rydense::physics::{expected_transition, ChannelSet, GasDensity, SweepScaling};
use rydense::report::Manifest;
use rydense::simulator::{generate_dataset, SimMode};

#[derive(Parser)]
#[command(
    name = "rydense",
    version,
    about = "Density measurement toolkit for cold Rydberg gases"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic shot dataset from a run configuration.
    Simulate {
        /// Run configuration (TOML) with [simulation] and [detector].
        #[arg(long)]
        config: PathBuf,
        /// Destination CSV for the shot records.
        #[arg(long)]
        output: PathBuf,
        /// Optional destination CSV for the ground-truth sidecar.
        #[arg(long)]
        truth: Option<PathBuf>,
        /// Optional JSON manifest destination (stdout otherwise).
        #[arg(long)]
        report: Option<PathBuf>,
        /// Override the seed from the configuration.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the shot count from the configuration.
        #[arg(long)]
        n_shots: Option<usize>,
    },
    /// Fit the signal-to-density conversion from a shot dataset.
    Fit {
        /// Shot dataset CSV.
        #[arg(long)]
        data: PathBuf,
        /// Optional run configuration for sweep scaling, channels, starting
        /// coefficients, and noise-curve point weighting.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Conversion model to fit, or automatic selection.
        #[arg(long, value_enum, default_value_t = FitModelArg::Auto)]
        model: FitModelArg,
        /// Confidence level for automatic model selection.
        #[arg(long, default_value_t = 0.99)]
        confidence: f64,
        /// Optional JSON manifest destination (stdout otherwise).
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Estimate detector gain noise from the shot-to-shot scatter.
    Noise {
        /// Shot dataset CSV.
        #[arg(long)]
        data: PathBuf,
        /// Run configuration carrying the known gain and analysis knobs.
        #[arg(long)]
        config: PathBuf,
        /// Optional JSON manifest destination (stdout otherwise).
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Tabulate onset radii and expected transition fractions.
    Table {
        /// Optional run configuration for sweep scaling and channels.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Densities to tabulate, cm⁻³ (repeatable).
        #[arg(long = "eta-cm3", value_name = "CM3", required = true)]
        etas: Vec<f64>,
        /// Lowest ramp speed, V/cm/µs.
        #[arg(long, default_value_t = 0.6)]
        f_prime_min: f64,
        /// Highest ramp speed, V/cm/µs.
        #[arg(long, default_value_t = 7.8)]
        f_prime_max: f64,
        /// Number of ramp speeds.
        #[arg(long, default_value_t = 10)]
        steps: usize,
        /// Destination CSV (stdout otherwise).
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Convert between integrated signals and densities.
    Convert {
        /// Run configuration with a [detector] section.
        #[arg(long)]
        config: PathBuf,
        /// Convert this total signal (nV·s) to a density (cm⁻³).
        #[arg(long, conflicts_with_all = ["density_cm3", "np_from_total_nvs"])]
        signal_nvs: Option<f64>,
        /// Convert this density (cm⁻³) to a signal (nV·s).
        #[arg(long, conflicts_with = "np_from_total_nvs")]
        density_cm3: Option<f64>,
        /// Predict the transferred-gate signal from this total signal
        /// (nV·s) at the given ramp speed.
        #[arg(long, requires = "f_prime")]
        np_from_total_nvs: Option<f64>,
        /// Ramp speed for the transferred-signal prediction, V/cm/µs.
        #[arg(long)]
        f_prime: Option<f64>,
        /// Optional JSON manifest destination (stdout otherwise).
        #[arg(long)]
        report: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FitModelArg {
    Linear,
    Quadratic,
    /// Fit both models and keep the quadratic one only when the data
    /// demand it.
    Auto,
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli.command) {
        eprintln!("error: {e}");
        let mut source = std::error::Error::source(&e);
        while let Some(s) = source {
            eprintln!("  caused by: {s}");
            source = s.source();
        }
        std::process::exit(exit_code(&e));
    }
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) => 2,
        Error::Io { .. } => 3,
        _ => 4,
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Simulate {
            config,
            output,
            truth,
            report,
            seed,
            n_shots,
        } => simulate(&config, &output, truth.as_deref(), report.as_deref(), seed, n_shots),
        Command::Fit {
            data,
            config,
            model,
            confidence,
            report,
        } => fit(&data, config.as_deref(), model, confidence, report.as_deref()),
        Command::Noise {
            data,
            config,
            report,
        } => noise(&data, &config, report.as_deref()),
        Command::Table {
            config,
            etas,
            f_prime_min,
            f_prime_max,
            steps,
            output,
        } => table(
            config.as_deref(),
            &etas,
            f_prime_min,
            f_prime_max,
            steps,
            output.as_deref(),
        ),
        Command::Convert {
            config,
            signal_nvs,
            density_cm3,
            np_from_total_nvs,
            f_prime,
            report,
        } => convert(
            &config,
            signal_nvs,
            density_cm3,
            np_from_total_nvs,
            f_prime,
            report.as_deref(),
        ),
    }
}

fn emit<T: Serialize>(manifest: &Manifest<T>, report: Option<&Path>) -> Result<()> {
    match report {
        Some(path) => manifest.write_to(path),
        None => {
            println!("{}", manifest.to_json_pretty()?);
            Ok(())
        }
    }
}

#[derive(Serialize)]
struct SimulateResult {
    seed: u64,
    n_shots: usize,
    mode: SimMode,
    n_ramp_speeds: usize,
    output: String,
    truth: Option<String>,
}

fn simulate(
    config_path: &Path,
    output: &Path,
    truth: Option<&Path>,
    report: Option<&Path>,
    seed: Option<u64>,
    n_shots: Option<usize>,
) -> Result<()> {
    let (mut config, config_bytes) = RunConfig::from_path(config_path)?;
    if let Some(section) = config.simulation.as_mut() {
        if let Some(seed) = seed {
            section.seed = seed;
        }
        if let Some(n) = n_shots {
            section.n_shots = n;
        }
    }
    let sim = config.sim_config()?;
    let (shots, truths) = generate_dataset(&sim)?;
    write_dataset(output, &shots)?;
    if let Some(truth_path) = truth {
        write_truth(truth_path, &truths)?;
    }
    let manifest = Manifest::new(
        "simulate",
        Some(&config_bytes),
        SimulateResult {
            seed: sim.seed,
            n_shots: shots.len(),
            mode: sim.mode,
            n_ramp_speeds: sim.f_primes.len(),
            output: output.display().to_string(),
            truth: truth.map(|p| p.display().to_string()),
        },
    );
    emit(&manifest, report)
}

#[derive(Serialize)]
struct FitResult {
    selected: CalibrationFit,
    linear: Option<CalibrationFit>,
    quadratic: Option<CalibrationFit>,
    f_test: Option<FTest>,
    /// RMS per-point scatter implied by the selected fit, nV·s.
    residual_noise_nvs: f64,
}

fn fit(
    data: &Path,
    config_path: Option<&Path>,
    model: FitModelArg,
    confidence: f64,
    report: Option<&Path>,
) -> Result<()> {
    let loaded = config_path.map(RunConfig::from_path).transpose()?;
    let (config, config_bytes) = match &loaded {
        Some((c, b)) => (c.clone(), Some(b.as_slice())),
        None => (RunConfig::default(), None),
    };
    let scaling = config.scaling()?;
    let set = config.channel_set();

    let shots = read_dataset(data)?;
    let points: Vec<_> = shots.iter().map(|s| s.calibration_point()).collect();

    let mut options = CalibrationOptions::default();
    if let Some(detector) = &config.detector {
        options.init_g0 = detector.g0_cm3_per_vs;
        // Detection noise grows with signal, so an unweighted fit lets the
        // large-signal points dominate and miscalibrates both the quoted
        // parameter uncertainties and the model-selection test. When the
        // configuration declares the detector noise curve, weight each point
        // by its inverse predicted standard deviation. The floor keeps
        // near-zero readings, where the noise model itself bottoms out, from
        // acquiring unbounded weight.
        if let Some(polya) = detector.polya()? {
            let weights = points
                .iter()
                .map(|p| {
                    let s = p.s_np_nvs.max(0.05);
                    Ok(polya.snr(s)? / s)
                })
                .collect::<Result<Vec<f64>>>()?;
            options.weighting = Weighting::PerPoint(weights);
        }
    }

    let (selected, linear, quadratic, test) = match model {
        FitModelArg::Linear => {
            let fit = fit_conversion(&points, ModelKind::Linear, &scaling, &set, &options)?;
            (fit, None, None, None)
        }
        FitModelArg::Quadratic => {
            let fit = fit_conversion(&points, ModelKind::Quadratic, &scaling, &set, &options)?;
            (fit, None, None, None)
        }
        FitModelArg::Auto => {
            let lin = fit_conversion(&points, ModelKind::Linear, &scaling, &set, &options)?;
            let quad = fit_conversion(&points, ModelKind::Quadratic, &scaling, &set, &options)?;
            let test = f_test(&lin, &quad, confidence)?;
            let selected = if test.prefers_quadratic {
                quad.clone()
            } else {
                lin.clone()
            };
            (selected, Some(lin), Some(quad), Some(test))
        }
    };
    let residual_noise_nvs = noise_estimate_nvs(selected.reduced_chi_square)?;

    let manifest = Manifest::new(
        "fit",
        config_bytes,
        FitResult {
            selected,
            linear,
            quadratic,
            f_test: test,
            residual_noise_nvs,
        },
    );
    emit(&manifest, report)
}

#[derive(Serialize)]
struct NoiseResult {
    gain_cm3_per_vs: f64,
    fit: NoiseFit,
}

fn noise(data: &Path, config_path: &Path, report: Option<&Path>) -> Result<()> {
    let (config, config_bytes) = RunConfig::from_path(config_path)?;
    let scaling = config.scaling()?;
    let set = config.channel_set();
    let gain = config.noise_gain()?;
    let options = config.noise_options();

    let shots = read_dataset(data)?;
    let fit = iterative_fit(&shots, gain, &scaling, &set, &options)?;

    let manifest = Manifest::new(
        "noise",
        Some(&config_bytes),
        NoiseResult {
            gain_cm3_per_vs: gain,
            fit,
        },
    );
    emit(&manifest, report)
}

fn table(
    config_path: Option<&Path>,
    etas: &[f64],
    f_prime_min: f64,
    f_prime_max: f64,
    steps: usize,
    output: Option<&Path>,
) -> Result<()> {
    if steps < 1 {
        return Err(Error::config("need at least one ramp-speed step"));
    }
    if !(f_prime_min.is_finite() && f_prime_max.is_finite() && f_prime_min > 0.0) {
        return Err(Error::config(format!(
            "ramp-speed range must be positive, got [{f_prime_min}, {f_prime_max}]"
        )));
    }
    if f_prime_max < f_prime_min {
        return Err(Error::config(format!(
            "ramp-speed range is inverted: [{f_prime_min}, {f_prime_max}]"
        )));
    }
    let (scaling, set) = match config_path {
        Some(path) => {
            let (config, _) = RunConfig::from_path(path)?;
            (config.scaling()?, config.channel_set())
        }
        None => (SweepScaling::default(), ChannelSet::default_sublevels()),
    };

    let mut writer: Box<dyn std::io::Write> = match output {
        Some(path) => Box::new(std::fs::File::create(path).map_err(|e| {
            Error::io(format!("creating table {}", path.display()), e)
        })?),
        None => Box::new(std::io::stdout()),
    };
    writeln!(
        writer,
        "f_prime_V_per_cm_per_us,r0_um,eta_cm3,transition_fraction"
    )
    .map_err(|e| Error::io("writing table", e))?;
    for k in 0..steps {
        let f_prime = if steps == 1 {
            f_prime_min
        } else {
            f_prime_min + (f_prime_max - f_prime_min) * k as f64 / (steps - 1) as f64
        };
        let sweep = scaling.at(f_prime)?;
        for &eta_cm3 in etas {
            let eta = GasDensity::per_cm3(eta_cm3)?;
            let p = expected_transition(eta, &sweep, &set)?;
            writeln!(writer, "{f_prime},{},{eta_cm3},{p}", sweep.r0_um())
                .map_err(|e| Error::io("writing table", e))?;
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct ConvertResult {
    direction: &'static str,
    detector: ConversionModel,
    input: f64,
    output: f64,
}

fn convert(
    config_path: &Path,
    signal_nvs: Option<f64>,
    density_cm3: Option<f64>,
    np_from_total_nvs: Option<f64>,
    f_prime: Option<f64>,
    report: Option<&Path>,
) -> Result<()> {
    let (config, config_bytes) = RunConfig::from_path(config_path)?;
    let detector = config
        .detector
        .as_ref()
        .ok_or_else(|| Error::config("conversion requires a [detector] section"))?
        .model()?;

    let (direction, input, output) = if let Some(s) = signal_nvs {
        ("signal_to_density", s, detector.density_per_cm3(s)?)
    } else if let Some(eta) = density_cm3 {
        ("density_to_signal", eta, detector.signal_nvs(eta)?)
    } else if let Some(s_total) = np_from_total_nvs {
        let f_prime = f_prime.expect("clap enforces --f-prime");
        let predicted = rydense::calibration::predict_np_signal(
            &detector,
            s_total,
            &config.scaling()?,
            f_prime,
            &config.channel_set(),
        )?;
        ("total_to_transferred", s_total, predicted)
    } else {
        return Err(Error::config(
            "specify one of --signal-nvs, --density-cm3, or --np-from-total-nvs",
        ));
    };

    let manifest = Manifest::new(
        "convert",
        Some(&config_bytes),
        ConvertResult {
            direction,
            detector,
            input,
            output,
        },
    );
    emit(&manifest, report)
}
