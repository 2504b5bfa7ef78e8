//! `vclab` — command-line front door to the vortex-crystal laboratory.
//!
//! Subcommands: `crystal` (build + describe), `stability` (spectral
//! certificate), `integrate` (point-vortex trajectories), `blob`
//! (regularized particle experiments), `perturb` (forced-perturbation
//! experiment around a crystal).
//!
//! Exit codes: 0 success/stable/confined · 2 usage or invalid parameters ·
//! 3 unstable · 4 degenerate · 5 collapse · 6 confinement/deviation exit.

use clap::{Args, Parser, Subcommand, ValueEnum};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use vclab::crystal::{build_crystal_with_gamma, central_gamma_closed, CrystalSpec};
use vclab::dynamics::{
    integrate, run_perturbed_crystal, CollapseThreshold, Horizon, IntegrateOptions, PerturbConfig,
    Trajectory, VortexConfiguration, PERTURBATION_BOUND_CONSTANT,
};
use vclab::eulerblob::{
    cfl_bound, confinement_time, evolve, make_initial_blobs, run_from_manifest, ConfinementResult,
    DiagnosticsSeries, EvolveOptions, ProbeSettings, RunManifest,
};
use vclab::stability::{restricted_spectrum, Classification};
use vclab::{PhaseVector, Vec2, TWO_PI};

const EXIT_USAGE: u8 = 2;
const EXIT_UNSTABLE: u8 = 3;
const EXIT_DEGENERATE: u8 = 4;
const EXIT_COLLAPSE: u8 = 5;
const EXIT_EXITED: u8 = 6;

/// Fraction of the step-size ceiling used when `--dt` is not given to
/// `blob`: deterministic headroom below the guard.
const AUTO_DT_SAFETY: f64 = 0.95;

#[derive(Parser)]
#[command(
    name = "vclab",
    version,
    about = "Numerical laboratory for polygonal point-vortex crystals",
    propagate_version = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a polygonal crystal and print its JSON description.
    Crystal(CrystalArgs),
    /// Spectral stability certificate for a (possibly detuned) crystal.
    Stability(StabilityArgs),
    /// Integrate the point-vortex system and write a trajectory CSV.
    Integrate(IntegrateArgs),
    /// Evolve the blob discretization; write diagnostics CSV and manifest.
    Blob(BlobArgs),
    /// Forced-perturbation experiment around a crystal.
    Perturb(PerturbArgs),
}

#[derive(Args)]
struct CrystalArgs {
    /// Crystal order (total vortex count; N ≥ 4).
    #[arg(long, default_value_t = 5)]
    n: u32,
    /// Override the central intensity (default: the tuned value).
    #[arg(long, allow_hyphen_values = true)]
    gamma: Option<f64>,
    /// Additionally report 2π-rescaled quantities.
    #[arg(long)]
    paper_units: bool,
    /// Also write the JSON to this path.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct StabilityArgs {
    /// Crystal order (N ≥ 4).
    #[arg(long, default_value_t = 5)]
    n: u32,
    /// Override the central intensity (default: the tuned value).
    #[arg(long, allow_hyphen_values = true)]
    gamma: Option<f64>,
    /// Additionally report 2π-rescaled quantities.
    #[arg(long)]
    paper_units: bool,
    /// Also write the JSON to this path.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Preset {
    /// The N-crystal (supports --rotating-frame).
    Crystal,
    /// Two unit vortices at (±1/2, 0): rigid co-rotation, period 2π².
    Pair,
    /// Self-similarly collapsing triangle with intensities (2, 2, −1).
    Collapse,
}

#[derive(Args)]
struct IntegrateArgs {
    /// Initial condition.
    #[arg(long, value_enum, default_value_t = Preset::Crystal)]
    preset: Preset,
    /// Crystal order (crystal preset only).
    #[arg(long, default_value_t = 5)]
    n: u32,
    /// Override the central intensity (crystal preset only).
    #[arg(long, allow_hyphen_values = true)]
    gamma: Option<f64>,
    /// Time step.
    #[arg(long, default_value_t = 1e-3)]
    dt: f64,
    /// Integration horizon.
    #[arg(long, default_value_t = 10.0)]
    t_final: f64,
    /// Integrate in the frame co-rotating with the crystal.
    #[arg(long)]
    rotating_frame: bool,
    /// Record every this many steps.
    #[arg(long, default_value_t = 10)]
    sample_every: usize,
    /// Abort when the min pairwise distance falls below this absolute value
    /// (default: 1e-6 relative to the initial minimum distance).
    #[arg(long)]
    collapse_abs: Option<f64>,
    /// Trajectory CSV path.
    #[arg(long, default_value = "trajectory.csv")]
    csv_out: PathBuf,
    /// Print the run summary as JSON.
    #[arg(long)]
    json: bool,
    /// Additionally report 2π-rescaled quantities.
    #[arg(long)]
    paper_units: bool,
}

#[derive(Args)]
struct BlobArgs {
    /// Crystal order (N ≥ 4).
    #[arg(long, default_value_t = 5)]
    n: u32,
    /// Override the central intensity (default: the tuned value).
    #[arg(long, allow_hyphen_values = true)]
    gamma: Option<f64>,
    /// Blob radius ε.
    #[arg(long, default_value_t = 0.05)]
    epsilon: f64,
    /// Particles per blob.
    #[arg(long, default_value_t = 400)]
    particles: usize,
    /// Confinement exponent(s) β ∈ (0, 1/2); repeatable.
    #[arg(long = "beta", default_values_t = vec![0.45])]
    betas: Vec<f64>,
    /// Simulation horizon.
    #[arg(long, default_value_t = 20.0)]
    horizon: f64,
    /// Seed for the particle placement (and probe, if enabled).
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Time step (default: 0.95 × the step-size ceiling of the initial
    /// field, computed deterministically and echoed in the manifest).
    #[arg(long)]
    dt: Option<f64>,
    /// Record diagnostics every this many steps.
    #[arg(long, default_value_t = 100)]
    sample_every: usize,
    /// Record the exterior Lipschitz probe each sample (64 antipodal
    /// pairs at radius 1e-4 around each blob center).
    #[arg(long)]
    probe: bool,
    /// Re-run exactly the experiment this manifest describes (all other
    /// experiment flags are ignored).
    #[arg(long)]
    from_manifest: Option<PathBuf>,
    /// Diagnostics CSV path.
    #[arg(long, default_value = "diagnostics.csv")]
    csv_out: PathBuf,
    /// Manifest JSON path (not rewritten for --from-manifest runs).
    #[arg(long, default_value = "manifest.json")]
    manifest_out: PathBuf,
    /// Print the run summary as JSON.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct PerturbArgs {
    /// Crystal order (N ≥ 4).
    #[arg(long, default_value_t = 5)]
    n: u32,
    /// Override the central intensity (default: the tuned value).
    #[arg(long, allow_hyphen_values = true)]
    gamma: Option<f64>,
    /// Perturbation size ε ∈ (0, 1): initial offset and forcing bound.
    #[arg(long, default_value_t = 0.05)]
    epsilon: f64,
    /// Horizon exponent α (horizon = min(ε^{−α}, cap)).
    #[arg(long, default_value_t = 0.2)]
    alpha: f64,
    /// Deviation exponent β (0 < α < β/2 < 1/4).
    #[arg(long, default_value_t = 0.45)]
    beta: f64,
    /// Forcing/offset seed.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Fixed horizon override (default: min(ε^{−α}, 1e4)).
    #[arg(long)]
    horizon: Option<f64>,
    /// Time step.
    #[arg(long, default_value_t = 1e-3)]
    dt: f64,
    /// Record the deviation every this many steps.
    #[arg(long, default_value_t = 10)]
    sample_every: usize,
    /// Also write the report JSON to this path.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Print the report as JSON.
    #[arg(long)]
    json: bool,
}

fn main() -> ExitCode {
    init_thread_pool();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Crystal(args) => cmd_crystal(&args),
        Command::Stability(args) => cmd_stability(&args),
        Command::Integrate(args) => cmd_integrate(&args),
        Command::Blob(args) => cmd_blob(&args),
        Command::Perturb(args) => cmd_perturb(&args),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(failure) => {
            eprintln!("error: {}", failure.message);
            ExitCode::from(failure.code)
        }
    }
}

/// `VCLAB_THREADS` caps the worker count (default: machine parallelism).
fn init_thread_pool() {
    if let Ok(raw) = std::env::var("VCLAB_THREADS") {
        if let Ok(n) = raw.trim().parse::<usize>() {
            if n >= 1 {
                // Ignore failure (the pool can only be set once).
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
        }
    }
}

struct Failure {
    code: u8,
    message: String,
}

impl From<vclab::Error> for Failure {
    fn from(e: vclab::Error) -> Failure {
        let code = match &e {
            vclab::Error::Collapse { .. } => EXIT_COLLAPSE,
            vclab::Error::NumericalBlowup { .. } => EXIT_COLLAPSE,
            vclab::Error::Io { .. } => 1,
            _ => EXIT_USAGE,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

type CmdResult = Result<u8, Failure>;

fn write_artifact(path: &Path, contents: &str) -> Result<(), Failure> {
    std::fs::write(path, contents).map_err(|e| Failure {
        code: 1,
        message: format!("cannot write {}: {e}", path.display()),
    })
}

fn read_artifact(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure {
        code: 1,
        message: format!("cannot read {}: {e}", path.display()),
    })
}

fn build_spec(n: u32, gamma: Option<f64>) -> Result<CrystalSpec, Failure> {
    let spec = match gamma {
        Some(g) => build_crystal_with_gamma(n, g)?,
        None => build_crystal_with_gamma(n, central_gamma_closed(n)?)?,
    };
    Ok(spec)
}

/// Writes a line to stdout, ignoring a closed pipe (e.g. `vclab … | head`).
fn emit(line: std::fmt::Arguments<'_>) {
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{line}");
}

macro_rules! say {
    ($($arg:tt)*) => { emit(format_args!($($arg)*)) };
}

fn print_json(value: &serde_json::Value) {
    say!("{}", serde_json::to_string_pretty(value).expect("serializable"));
}

// ---------------------------------------------------------------------------
// crystal

fn cmd_crystal(args: &CrystalArgs) -> CmdResult {
    let spec = build_spec(args.n, args.gamma)?;
    let mut json = spec.to_json();
    if args.paper_units {
        let obj = json.as_object_mut().expect("crystal JSON is an object");
        obj.insert(
            "max_strain_norm_paper_units".into(),
            serde_json::json!(spec.max_strain_norm() * TWO_PI),
        );
    }
    print_json(&json);
    if let Some(path) = &args.out {
        write_artifact(path, &serde_json::to_string_pretty(&json).expect("serializable"))?;
    }
    Ok(0)
}

// ---------------------------------------------------------------------------
// stability

fn cmd_stability(args: &StabilityArgs) -> CmdResult {
    let spec = build_spec(args.n, args.gamma)?;
    let report = restricted_spectrum(&spec)?;
    let mut json = report.to_json();
    {
        let obj = json.as_object_mut().expect("stability JSON is an object");
        obj.insert(
            "nu_paper_units".into(),
            serde_json::json!(report.nu_physical * TWO_PI),
        );
        if args.paper_units {
            let scaled: Vec<[f64; 2]> = report
                .spectrum
                .iter()
                .map(|&[re, im]| [re * TWO_PI, im * TWO_PI])
                .collect();
            obj.insert("spectrum_paper_units".into(), serde_json::json!(scaled));
            obj.insert(
                "max_real_part_paper_units".into(),
                serde_json::json!(report.max_real_part * TWO_PI),
            );
        }
    }
    print_json(&json);
    if let Some(path) = &args.out {
        write_artifact(path, &serde_json::to_string_pretty(&json).expect("serializable"))?;
    }
    Ok(match report.classification {
        Classification::Stable => 0,
        Classification::Unstable => EXIT_UNSTABLE,
        Classification::Degenerate => EXIT_DEGENERATE,
    })
}

// ---------------------------------------------------------------------------
// integrate

/// The (2, 2, −1) triangle with vanishing intensity-product sum and
/// vanishing harmonic moment (2·l₁₂² = l₁₃² + l₂₃²): self-similar finite-time
/// collapse. The chirality is the collapsing one (its mirror image expands).
fn collapse_triangle() -> VortexConfiguration {
    let y = 1.4375f64.sqrt();
    let z = PhaseVector::new(vec![
        Vec2::new(0.0, 0.0),
        Vec2::new(0.25, y),
        Vec2::new(1.0, 0.0),
    ]);
    VortexConfiguration::new(z, vec![2.0, 2.0, -1.0]).expect("valid triangle")
}

fn cmd_integrate(args: &IntegrateArgs) -> CmdResult {
    let (config, frame, label): (VortexConfiguration, Option<f64>, String) = match args.preset {
        Preset::Crystal => {
            let spec = build_spec(args.n, args.gamma)?;
            let frame = args.rotating_frame.then(|| spec.nu_physical());
            let label = format!("crystal n={} gamma_center={}", spec.n(), spec.gamma_center());
            (spec.configuration(), frame, label)
        }
        Preset::Pair => {
            if args.rotating_frame {
                return Err(Failure {
                    code: EXIT_USAGE,
                    message: "--rotating-frame applies to the crystal preset only".into(),
                });
            }
            let z = PhaseVector::new(vec![Vec2::new(-0.5, 0.0), Vec2::new(0.5, 0.0)]);
            (
                VortexConfiguration::new(z, vec![1.0, 1.0])?,
                None,
                "pair".into(),
            )
        }
        Preset::Collapse => {
            if args.rotating_frame {
                return Err(Failure {
                    code: EXIT_USAGE,
                    message: "--rotating-frame applies to the crystal preset only".into(),
                });
            }
            (collapse_triangle(), None, "collapse".into())
        }
    };

    let mut opts = IntegrateOptions::new(args.dt, args.t_final).sampling(args.sample_every);
    if let Some(nu) = frame {
        opts = opts.rotating(nu);
    }
    if let Some(d) = args.collapse_abs {
        opts = opts.collapse(CollapseThreshold::Absolute(d));
    }

    let traj = integrate(&config, &opts)?;
    write_artifact(&args.csv_out, &traj.to_csv())?;

    let summary = integrate_summary(&traj, &label, frame, args);
    if args.json {
        print_json(&summary);
    } else {
        say!(
            "{label}: integrated to t = {} ({} samples) -> {}",
            traj.final_time(),
            traj.times.len(),
            args.csv_out.display()
        );
        say!(
            "  drifts: H {:.3e}  P {:.3e}  L {:.3e}   min distance {:.6}",
            summary["h_drift"].as_f64().unwrap_or(f64::NAN),
            summary["linear_impulse_drift"].as_f64().unwrap_or(f64::NAN),
            summary["angular_impulse_drift"].as_f64().unwrap_or(f64::NAN),
            summary["min_distance"].as_f64().unwrap_or(f64::NAN),
        );
        say!(
            "  max deviation from initial positions: {:.3e}",
            summary["max_deviation_from_initial"].as_f64().unwrap_or(f64::NAN)
        );
    }
    Ok(0)
}

fn integrate_summary(
    traj: &Trajectory,
    label: &str,
    frame: Option<f64>,
    args: &IntegrateArgs,
) -> serde_json::Value {
    let first = traj.conserved.first().expect("trajectory has samples");
    let h0 = first.hamiltonian;
    let p0 = first.linear_impulse;
    let l0 = first.angular_impulse;
    let mut h_drift = 0.0f64;
    let mut p_drift = 0.0f64;
    let mut l_drift = 0.0f64;
    let mut dmin = f64::INFINITY;
    for s in &traj.conserved {
        h_drift = h_drift.max((s.hamiltonian - h0).abs());
        p_drift = p_drift.max((s.linear_impulse - p0).norm());
        l_drift = l_drift.max((s.angular_impulse - l0).abs());
        dmin = dmin.min(s.min_distance);
    }
    let z0 = &traj.states[0];
    let max_dev = traj
        .states
        .iter()
        .map(|z| z.sub(z0).block_max_norm())
        .fold(0.0f64, f64::max);

    let mut summary = serde_json::json!({
        "preset": label,
        "dt": args.dt,
        "t_final": args.t_final,
        "rotating_frame": frame.is_some(),
        "frame_velocity": frame,
        "n_samples": traj.times.len(),
        "final_time": traj.final_time(),
        "h_drift": h_drift,
        "linear_impulse_drift": p_drift,
        "angular_impulse_drift": l_drift,
        "min_distance": dmin,
        "max_deviation_from_initial": max_dev,
        "csv_path": args.csv_out.display().to_string(),
    });
    if args.paper_units {
        let obj = summary.as_object_mut().expect("summary is an object");
        obj.insert(
            "frame_velocity_paper_units".into(),
            serde_json::json!(frame.map(|nu| nu * TWO_PI)),
        );
    }
    summary
}

// ---------------------------------------------------------------------------
// blob

fn cmd_blob(args: &BlobArgs) -> CmdResult {
    let (manifest, spec, series) = if let Some(path) = &args.from_manifest {
        let manifest: RunManifest =
            serde_json::from_str(&read_artifact(path)?).map_err(|e| Failure {
                code: EXIT_USAGE,
                message: format!("invalid manifest {}: {e}", path.display()),
            })?;
        let (spec, series, _) = run_from_manifest(&manifest)?;
        (manifest, spec, series)
    } else {
        let spec = build_spec(args.n, args.gamma)?;
        let field = make_initial_blobs(&spec, args.epsilon, args.particles, args.seed)?;
        let dt = match args.dt {
            Some(dt) => dt,
            None => AUTO_DT_SAFETY * cfl_bound(&field)?,
        };
        let probe = args.probe.then_some(ProbeSettings {
            n_samples: 64,
            radius: 1e-4,
            seed: args.seed,
        });
        let manifest = RunManifest {
            n: spec.n(),
            gamma_center: spec.gamma_center(),
            epsilon: args.epsilon,
            delta: field.delta(),
            dt,
            particles_per_blob: args.particles,
            seed: args.seed,
            betas: args.betas.clone(),
            horizon: args.horizon,
            sample_every: args.sample_every,
            probe,
        };
        let mut opts = EvolveOptions::new(dt, args.horizon).sampling(args.sample_every);
        opts.probe = manifest.probe.clone();
        let (series, _) = evolve(&field, &spec, &opts)?;
        write_artifact(
            &args.manifest_out,
            &serde_json::to_string_pretty(&manifest).expect("serializable"),
        )?;
        (manifest, spec, series)
    };

    write_artifact(&args.csv_out, &series.to_csv())?;

    let verdicts: Vec<ConfinementResult> = manifest
        .betas
        .iter()
        .map(|&beta| confinement_time(&series, manifest.epsilon, beta))
        .collect::<Result<_, _>>()?;
    let all_confined = verdicts.iter().all(ConfinementResult::confined);

    if args.json {
        print_json(&blob_summary(&manifest, &spec, &series, &verdicts, args));
    } else {
        say!(
            "blob n={} gamma_center={} epsilon={} particles={} dt={:.6e} -> {}",
            manifest.n,
            manifest.gamma_center,
            manifest.epsilon,
            manifest.particles_per_blob,
            manifest.dt,
            args.csv_out.display()
        );
        for v in &verdicts {
            if let Some(i) = v.exited_blob {
                say!(
                    "  beta {:.2}: EXITED (blob {} left its eps^beta disk at t = {:.6})",
                    v.beta, i, v.tau_estimate
                );
            } else {
                say!(
                    "  beta {:.2}: confined through t = {:.6}",
                    v.beta, v.tau_estimate
                );
            }
        }
    }
    Ok(if all_confined { 0 } else { EXIT_EXITED })
}

fn blob_summary(
    manifest: &RunManifest,
    spec: &CrystalSpec,
    series: &DiagnosticsSeries,
    verdicts: &[ConfinementResult],
    args: &BlobArgs,
) -> serde_json::Value {
    serde_json::json!({
        "manifest": manifest,
        "nu_physical": spec.nu_physical(),
        "final_time": series.final_time(),
        "final_max_center_dev": series.max_center_dev.last(),
        "confinement": verdicts,
        "csv_path": args.csv_out.display().to_string(),
    })
}

// ---------------------------------------------------------------------------
// perturb

fn cmd_perturb(args: &PerturbArgs) -> CmdResult {
    let spec = build_spec(args.n, args.gamma)?;
    let mut config = PerturbConfig::new(args.epsilon, args.alpha, args.beta, args.seed);
    if let Some(t) = args.horizon {
        config = config.with_horizon(Horizon::Fixed(t));
    }
    config.dt = args.dt;
    config.sample_every = args.sample_every;

    let report = run_perturbed_crystal(&spec, &config)?;
    let within = report.within_bound();
    let escaped = report.first_exceedance.is_some();

    let mut json = serde_json::to_value(&report).expect("serializable");
    {
        let obj = json.as_object_mut().expect("report is an object");
        obj.insert(
            "bound_constant".into(),
            serde_json::json!(PERTURBATION_BOUND_CONSTANT),
        );
        obj.insert("within_bound".into(), serde_json::json!(within));
        obj.insert("n".into(), serde_json::json!(spec.n()));
        obj.insert("gamma_center".into(), serde_json::json!(spec.gamma_center()));
    }
    if args.json {
        print_json(&json);
    } else {
        say!(
            "perturb n={} gamma_center={} epsilon={} alpha={} beta={} horizon={:.4}",
            spec.n(),
            spec.gamma_center(),
            report.epsilon,
            report.alpha,
            report.beta,
            report.horizon
        );
        say!(
            "  sup deviation {:.6e} vs bound {:.6e} ({})",
            report.sup_deviation,
            report.deviation_bound,
            if within { "within" } else { "EXCEEDED" }
        );
        match report.first_exceedance {
            Some(t) => say!("  deviation first exceeded eps^beta at t = {t:.6}"),
            None => say!("  deviation never exceeded eps^beta"),
        }
    }
    if let Some(path) = &args.out {
        write_artifact(path, &serde_json::to_string_pretty(&json).expect("serializable"))?;
    }
    Ok(if within && !escaped { 0 } else { EXIT_EXITED })
}
