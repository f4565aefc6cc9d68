//! Command implementations behind the `asa` binary.
//!
//! Every run writes one [`RunManifest`] (to `<out>/manifest.json` unless
//! `--manifest` says otherwise), including failed runs. Exit codes: 0 on
//! success, 1 on runtime or domain errors, 2 on usage errors.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::Context;
use asa_core::focusing::{corrected_delays, geometric_plan, synthesize_excitation};
use asa_core::gridio::{read_grid, write_grid};
use asa_core::pam::reconstruct_rf;
use asa_core::phantom::{analytic_source_plane, make_phantom, round_trip_rf};
use asa_core::propagator::{march_heterogeneous, propagate_homogeneous_volume};
use asa_core::spectral::forward_spectrum;
use asa_core::{
    ArrayGeometry, AsaError, Complex64, Direction, FocusTarget, MarchConfig, MediumMap, PamConfig,
    PhantomKind, PhantomSpec, PlaneShape, RfRecording, WindowSpec,
};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

pub const DEFAULT_PAM_TAPER: f64 = 0.25;
pub const DEFAULT_EXCITATION_TAPER: f64 = 0.1;

#[derive(Debug, Parser)]
#[command(name = "asa", version, about = "Heterogeneous angular spectrum propagation, focusing and PAM")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

/// Flags shared by every command. All quantities are SI.
#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Sound-speed map (grid file, `[z, x]` or `[z, x, y]`).
    #[arg(long, global = true)]
    pub medium: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "asa-out")]
    pub out: PathBuf,
    /// Axial step in metres.
    #[arg(long, global = true, default_value_t = 50e-6)]
    pub dz: f64,
    /// Axial extent in metres.
    #[arg(long, global = true, default_value_t = 90e-3)]
    pub zmax: f64,
    #[arg(long, global = true, default_value_t = 4)]
    pub pad_factor: usize,
    /// Tukey fraction (default 0.25 for pam, 0.1 for excitations).
    #[arg(long, global = true)]
    pub taper_r: Option<f64>,
    /// Worker threads for per-frequency work (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Manifest path (default `<out>/manifest.json`).
    #[arg(long, global = true)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// March a complex source plane through a medium (or free space).
    Propagate(PropagateArgs),
    /// Compute transmit delays and amplitudes for a focal target.
    Focus(FocusArgs),
    /// Passive acoustic mapping of recorded RF data.
    Pam(PamArgs),
    /// Generate a synthetic sound-speed phantom, optionally with RF data.
    Phantom(PhantomArgs),
    /// Time uncorrected against corrected PAM reconstruction.
    Bench(BenchArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Propagate(_) => "propagate",
            Command::Focus(_) => "focus",
            Command::Pam(_) => "pam",
            Command::Phantom(_) => "phantom",
            Command::Bench(_) => "bench",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Homogeneous,
    Heterogeneous,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DirectionArg {
    Forward,
    Backward,
}

impl From<DirectionArg> for Direction {
    fn from(d: DirectionArg) -> Self {
        match d {
            DirectionArg::Forward => Direction::Forward,
            DirectionArg::Backward => Direction::Backward,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct PropagateArgs {
    /// Complex source plane at z = 0 (`[x]` or `[x, y]` grid).
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub frequency: f64,
    #[arg(long, value_enum, default_value_t = Mode::Homogeneous)]
    pub mode: Mode,
    #[arg(long, value_enum, default_value_t = DirectionArg::Forward)]
    pub direction: DirectionArg,
    /// Reference speed when no medium is given.
    #[arg(long, default_value_t = 1500.0)]
    pub c0: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Corrected,
    Geometric,
}

#[derive(Debug, Clone, Args)]
pub struct FocusArgs {
    /// Lateral target position.
    #[arg(long, default_value_t = 0.0)]
    pub x0: f64,
    /// Target depth.
    #[arg(long)]
    pub depth: f64,
    /// Virtual-source full width at half maximum.
    #[arg(long, default_value_t = 1.5e-3)]
    pub fwhm: f64,
    #[arg(long)]
    pub frequency: f64,
    #[arg(long, default_value_t = 50e-3)]
    pub aperture: f64,
    /// Element pitch (default: medium lateral spacing, else 200 um).
    #[arg(long)]
    pub pitch: Option<f64>,
    #[arg(long, value_enum, default_value_t = MethodArg::Corrected)]
    pub method: MethodArg,
    /// Reference speed when no medium is given.
    #[arg(long, default_value_t = 1500.0)]
    pub c0: f64,
    /// Also write per-element excitation series.
    #[arg(long)]
    pub excitation: bool,
    #[arg(long, default_value_t = 40)]
    pub cycles: u32,
    /// Excitation amplitude in pascals.
    #[arg(long, default_value_t = 1e5)]
    pub amplitude: f64,
    /// Excitation sample interval (default: 1 / (20 f)).
    #[arg(long)]
    pub dt: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct PamArgs {
    /// RF recording (grid `[channels, samples]` or `[nx, ny, samples]`).
    #[arg(long)]
    pub input: PathBuf,
    /// Comma-separated analysis frequencies.
    #[arg(long, value_delimiter = ',', required = true)]
    pub frequencies: Vec<f64>,
    /// Use the heterogeneous marching scheme (needs `--medium`).
    #[arg(long)]
    pub corrected: bool,
    /// Reference speed when no medium is given.
    #[arg(long, default_value_t = 1500.0)]
    pub c0: f64,
    /// Number of peaks to report per frequency.
    #[arg(long, default_value_t = 1)]
    pub peaks: usize,
    /// Shallowest depth kept in the map.
    #[arg(long, default_value_t = 0.0)]
    pub zmin: f64,
    /// Known source position `x,z` (or `x,y,z`) to score peaks against.
    #[arg(long, value_delimiter = ',')]
    pub truth: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KindArg {
    Uniform,
    Layered,
    GaussianBump,
    RandomSlabs,
}

#[derive(Debug, Clone, Args)]
pub struct PhantomArgs {
    /// Phantom description as JSON; replaces the shape flags.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = KindArg::Uniform)]
    pub kind: KindArg,
    #[arg(long, default_value_t = 1500.0)]
    pub base_speed: f64,
    /// Fractional speed contrast.
    #[arg(long, default_value_t = 0.05)]
    pub contrast: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Layer start (layered).
    #[arg(long, default_value_t = 10e-3)]
    pub z_start: f64,
    /// Layer thickness (layered).
    #[arg(long, default_value_t = 10e-3)]
    pub thickness: f64,
    /// Bump centre depth (gaussian-bump).
    #[arg(long, default_value_t = 30e-3)]
    pub center_z: f64,
    /// Bump centre lateral position (gaussian-bump).
    #[arg(long, default_value_t = 0.0)]
    pub center_x: f64,
    /// Bump width (gaussian-bump).
    #[arg(long, default_value_t = 5e-3)]
    pub sigma: f64,
    /// Slab count (random-slabs).
    #[arg(long, default_value_t = 4)]
    pub count: usize,
    /// Slab depth band (random-slabs).
    #[arg(long, default_value_t = 3e-3)]
    pub z_min: f64,
    #[arg(long, default_value_t = 18e-3)]
    pub z_max: f64,
    /// Grid dimensions `nz,nx[,ny]`.
    #[arg(long, value_delimiter = ',', default_values_t = [451usize, 640])]
    pub dims: Vec<usize>,
    /// Isotropic grid spacing.
    #[arg(long, default_value_t = 2e-4)]
    pub spacing: f64,
    /// Also record RF at z = 0 from a point source at `x,z`.
    #[arg(long, value_delimiter = ',')]
    pub rf_source: Option<Vec<f64>>,
    #[arg(long, default_value_t = 1e6)]
    pub frequency: f64,
    #[arg(long, default_value_t = 50e-3)]
    pub aperture: f64,
    /// RF record length.
    #[arg(long, default_value_t = 80e-6)]
    pub t_len: f64,
    /// RF sample interval.
    #[arg(long, default_value_t = 40e-9)]
    pub dt: f64,
}

#[derive(Debug, Clone, Args)]
pub struct BenchArgs {
    /// Comma-separated aperture widths in metres.
    #[arg(long, value_delimiter = ',')]
    pub sizes: Vec<f64>,
    #[arg(long, default_value_t = 10)]
    pub reps: usize,
    #[arg(long, default_value_t = 1e6)]
    pub frequency: f64,
    #[arg(long, default_value_t = 2e-4)]
    pub pitch: f64,
    /// Seed of the slab phantom used when no medium is given.
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Run(anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Run(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(msg) => write!(f, "usage: {msg}"),
            CliError::Run(e) => write!(f, "{e:#}"),
        }
    }
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        CliError::Run(e)
    }
}

impl From<AsaError> for CliError {
    fn from(e: AsaError) -> Self {
        CliError::Run(e.into())
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

/// Record of one run. Two runs with the same flags and inputs produce the
/// same manifest apart from `timings`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub parameters: Value,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    /// Wall-clock seconds per stage.
    pub timings: BTreeMap<String, f64>,
    pub results: Value,
    pub error: Option<String>,
}

impl RunManifest {
    pub fn new(command: &str) -> Self {
        Self {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            parameters: Value::Null,
            inputs: Vec::new(),
            outputs: Vec::new(),
            timings: BTreeMap::new(),
            results: Value::Null,
            error: None,
        }
    }

    fn time<T>(&mut self, stage: &str, f: impl FnOnce() -> T) -> T {
        let t0 = Instant::now();
        let out = f();
        self.timings.insert(stage.to_string(), t0.elapsed().as_secs_f64());
        out
    }

    fn input(&mut self, path: &Path) {
        self.inputs.push(path.display().to_string());
    }

    fn output(&mut self, path: &Path) {
        self.outputs.push(path.display().to_string());
    }
}

fn color_enabled() -> bool {
    std::env::var_os("ASA_NO_COLOR").is_none()
}

fn paint(text: &str, code: &str) -> String {
    if color_enabled() {
        format!("\x1b[{code}m{text}\x1b[0m")
    } else {
        text.to_string()
    }
}

pub fn manifest_path(common: &Common) -> PathBuf {
    common
        .manifest
        .clone()
        .unwrap_or_else(|| common.out.join("manifest.json"))
}

/// Parse `args` (including the program name) and run. Returns the exit code.
pub fn execute<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => run_cli(&cli),
        Err(e) => {
            let _ = e.print();
            e.exit_code()
        }
    }
}

/// Run a parsed command line, writing the manifest whatever the outcome.
pub fn run_cli(cli: &Cli) -> i32 {
    let mut manifest = RunManifest::new(cli.command.name());
    let result = with_threads(cli.common.threads, || dispatch(cli, &mut manifest));
    if let Err(e) = &result {
        manifest.error = Some(e.to_string());
    }
    let path = manifest_path(&cli.common);
    let written = write_json(&path, &manifest);
    match (result, written) {
        (Ok(()), Ok(())) => {
            eprintln!("{} {} -> {}", paint("ok", "32"), manifest.command, path.display());
            0
        }
        (Ok(()), Err(e)) => {
            eprintln!("{}: writing manifest: {e:#}", paint("error", "31"));
            1
        }
        (Err(e), written) => {
            eprintln!("{}: {e}", paint("error", "31"));
            if let Err(w) = written {
                eprintln!("{}: writing manifest: {w:#}", paint("error", "31"));
            }
            e.exit_code()
        }
    }
}

fn with_threads(threads: Option<usize>, f: impl FnOnce() -> CliResult<()> + Send) -> CliResult<()> {
    match threads {
        None => f(),
        Some(0) => Err(usage("--threads must be >= 1")),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .context("building thread pool")?;
            pool.install(f)
        }
    }
}

fn dispatch(cli: &Cli, manifest: &mut RunManifest) -> CliResult<()> {
    let c = &cli.common;
    if c.dz.is_nan() || c.dz <= 0.0 || !c.dz.is_finite() {
        return Err(usage("--dz must be positive"));
    }
    if c.zmax.is_nan() || c.zmax <= 0.0 || !c.zmax.is_finite() {
        return Err(usage("--zmax must be positive"));
    }
    if c.pad_factor == 0 {
        return Err(usage("--pad-factor must be >= 1"));
    }
    if let Some(r) = c.taper_r {
        if !(0.0..=1.0).contains(&r) {
            return Err(usage("--taper-r must lie in [0, 1]"));
        }
    }
    fs::create_dir_all(&c.out).with_context(|| format!("creating {}", c.out.display()))?;
    match &cli.command {
        Command::Propagate(a) => cmd_propagate(c, a, manifest),
        Command::Focus(a) => cmd_focus(c, a, manifest),
        Command::Pam(a) => cmd_pam(c, a, manifest),
        Command::Phantom(a) => cmd_phantom(c, a, manifest),
        Command::Bench(a) => cmd_bench(c, a, manifest),
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

fn load_grid(path: &Path, manifest: &mut RunManifest) -> CliResult<asa_core::Grid> {
    manifest.input(path);
    Ok(read_grid(path).with_context(|| format!("reading {}", path.display()))?)
}

fn load_medium(common: &Common, manifest: &mut RunManifest) -> CliResult<Option<MediumMap>> {
    match &common.medium {
        None => Ok(None),
        Some(path) => {
            let grid = load_grid(path, manifest)?;
            Ok(Some(MediumMap::new(grid)?))
        }
    }
}

fn taper_or(common: &Common, default: f64) -> CliResult<WindowSpec> {
    Ok(WindowSpec::tukey(common.taper_r.unwrap_or(default))?)
}

fn positive(name: &str, v: f64) -> CliResult<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(usage(format!("{name} must be positive, got {v}")))
    }
}

pub fn cmd_propagate(common: &Common, args: &PropagateArgs, manifest: &mut RunManifest) -> CliResult<()> {
    positive("--frequency", args.frequency)?;
    if args.mode == Mode::Heterogeneous && common.medium.is_none() {
        return Err(usage("heterogeneous mode needs --medium"));
    }
    let medium = load_medium(common, manifest)?;
    let source = load_grid(&args.input, manifest)?;
    let c0 = medium.as_ref().map_or(args.c0, |m| m.c0());
    positive("--c0", c0)?;

    let (shape, pitch, origin) = match source.ndim() {
        1 => (PlaneShape::line(source.dims()[0]), [source.spacing()[0], 0.0], [source.origin()[0], 0.0]),
        2 => (
            PlaneShape {
                nx: source.dims()[0],
                ny: source.dims()[1],
            },
            [source.spacing()[0], source.spacing()[1]],
            [source.origin()[0], source.origin()[1]],
        ),
        n => return Err(AsaError::Shape(format!("source plane must have 1 or 2 axes, got {n}")).into()),
    };
    let omega = 2.0 * PI * args.frequency;
    let plane: Vec<Complex64> = source.to_complex128();
    let spectrum = forward_spectrum(&plane, shape, pitch, origin, omega, 0.0, c0)?;
    let mut cfg = MarchConfig::new(common.dz, 0.0, common.zmax, args.direction.into()).with_pad_factor(common.pad_factor);
    if let Some(r) = common.taper_r {
        cfg.taper = Some(WindowSpec::tukey(r)?);
    }
    manifest.parameters = json!({
        "mode": args.mode,
        "direction": Direction::from(args.direction),
        "frequency_hz": args.frequency,
        "c0": c0,
        "dz": common.dz,
        "zmax": common.zmax,
        "pad_factor": common.pad_factor,
        "taper_r": cfg.taper.map(|t| t.r),
        "threads": common.threads,
    });

    let volume = manifest.time("march", || match (args.mode, medium.as_ref()) {
        (Mode::Heterogeneous, Some(m)) => march_heterogeneous(&spectrum, m, &cfg),
        _ => propagate_homogeneous_volume(&spectrum, &cfg),
    })?;
    let path = common.out.join("field.asag");
    manifest.time("write", || write_grid(&volume.grid, &path))?;
    manifest.output(&path);
    manifest.results = json!({
        "stations": volume.stations(),
        "dims": volume.grid.dims(),
    });
    Ok(())
}

fn check_target_in_medium(m: &MediumMap, target: &FocusTarget) -> CliResult<()> {
    let (z0, z1) = m.axial_range();
    let half = 0.5 * m.axial_spacing();
    let g = m.grid();
    let nx = g.dims()[1];
    let (x0, x1) = (g.coordinate(1, 0), g.coordinate(1, nx - 1));
    if target.d < z0 - half || target.d > z1 + half || target.x0 < x0 || target.x0 > x1 {
        return Err(AsaError::Domain(format!(
            "target ({}, {}) lies outside the medium",
            target.x0, target.d
        ))
        .into());
    }
    Ok(())
}

pub fn cmd_focus(common: &Common, args: &FocusArgs, manifest: &mut RunManifest) -> CliResult<()> {
    positive("--frequency", args.frequency)?;
    positive("--aperture", args.aperture)?;
    if args.method == MethodArg::Corrected && common.medium.is_none() {
        return Err(usage("corrected focusing needs --medium"));
    }
    let medium = load_medium(common, manifest)?;
    let target = FocusTarget::new(args.x0, args.depth, args.fwhm)?;
    if let Some(m) = &medium {
        check_target_in_medium(m, &target)?;
    }
    let pitch = args
        .pitch
        .or_else(|| medium.as_ref().map(|m| m.grid().spacing()[1]))
        .unwrap_or(2e-4);
    positive("--pitch", pitch)?;
    let geometry = ArrayGeometry::with_aperture(args.aperture, pitch, 0.0)?;
    let omega = 2.0 * PI * args.frequency;
    let c0 = medium.as_ref().map_or(args.c0, |m| m.c0());
    let cfg = MarchConfig::new(common.dz, 0.0, common.zmax, Direction::Forward).with_pad_factor(common.pad_factor);
    manifest.parameters = json!({
        "method": match args.method { MethodArg::Corrected => "corrected", MethodArg::Geometric => "geometric" },
        "x0": args.x0,
        "depth": args.depth,
        "fwhm": args.fwhm,
        "frequency_hz": args.frequency,
        "aperture": args.aperture,
        "pitch": pitch,
        "elements": geometry.len(),
        "c0": c0,
        "dz": common.dz,
        "pad_factor": common.pad_factor,
        "threads": common.threads,
    });

    let plan = manifest.time("plan", || match (args.method, medium.as_ref()) {
        (MethodArg::Corrected, Some(m)) => corrected_delays(&target, m, omega, &geometry, &cfg),
        _ => geometric_plan(&target, &geometry, c0, omega),
    })?;
    let plan_path = common.out.join("plan.json");
    fs::write(&plan_path, plan.to_json()? + "\n").with_context(|| format!("writing {}", plan_path.display()))?;
    manifest.output(&plan_path);

    if args.excitation {
        let dt = args.dt.unwrap_or(1.0 / (20.0 * args.frequency));
        positive("--dt", dt)?;
        let taper = taper_or(common, DEFAULT_EXCITATION_TAPER)?;
        let set = manifest.time("excitation", || {
            synthesize_excitation(&plan, args.frequency, args.cycles, args.amplitude, dt, taper)
        })?;
        let path = common.out.join("excitation.asag");
        write_grid(&set.to_grid(&geometry)?, &path)?;
        manifest.output(&path);
        manifest.parameters["excitation"] = json!({
            "cycles": args.cycles,
            "amplitude_pa": args.amplitude,
            "dt": dt,
            "taper_r": taper.r,
        });
    }

    let center = geometry
        .element_positions
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
        .map_or(0, |(i, _)| i);
    manifest.results = json!({
        "method": plan.method,
        "center_raw_delay_s": plan.raw_delays[center],
        "max_delay_s": plan.delays.iter().cloned().fold(0.0, f64::max),
    });
    Ok(())
}

pub fn cmd_pam(common: &Common, args: &PamArgs, manifest: &mut RunManifest) -> CliResult<()> {
    if args.frequencies.is_empty() {
        return Err(usage("--frequencies needs at least one value"));
    }
    if args.corrected && common.medium.is_none() {
        return Err(usage("corrected PAM needs --medium"));
    }
    if args.peaks == 0 {
        return Err(usage("--peaks must be >= 1"));
    }
    if let Some(t) = &args.truth {
        if t.len() != 2 && t.len() != 3 {
            return Err(usage("--truth takes x,z or x,y,z"));
        }
    }
    let medium = load_medium(common, manifest)?;
    let rf = RfRecording::from_grid(&load_grid(&args.input, manifest)?)?;
    let c0 = medium.as_ref().map_or(args.c0, |m| m.c0());
    let mut cfg = PamConfig::new(args.frequencies.clone(), args.corrected, common.dz, common.zmax);
    cfg.z_range[0] = args.zmin;
    cfg.march.pad_factor = common.pad_factor;
    cfg.taper = taper_or(common, DEFAULT_PAM_TAPER)?;
    manifest.parameters = json!({
        "frequencies_hz": args.frequencies,
        "corrected": args.corrected,
        "c0": c0,
        "dz": common.dz,
        "z_range": cfg.z_range,
        "pad_factor": common.pad_factor,
        "taper_r": cfg.taper.r,
        "peaks": args.peaks,
        "truth": args.truth,
        "threads": common.threads,
    });

    let results = manifest.time("reconstruct", || reconstruct_rf(&rf, medium.as_ref(), c0, &cfg, args.peaks))?;
    let mut summary = Vec::with_capacity(results.len());
    for (i, r) in results.iter().enumerate() {
        let grid_path = common.out.join(format!("pam_{i}.asag"));
        write_grid(&r.intensity, &grid_path)?;
        manifest.output(&grid_path);
        let peaks_path = common.out.join(format!("peaks_{i}.json"));
        fs::write(&peaks_path, r.peaks_json()? + "\n").with_context(|| format!("writing {}", peaks_path.display()))?;
        manifest.output(&peaks_path);

        let error = args.truth.as_ref().and_then(|t| {
            r.peaks.first().map(|p| {
                let (tx, ty, tz) = match t.as_slice() {
                    [x, z] => (*x, 0.0, *z),
                    [x, y, z] => (*x, *y, *z),
                    _ => unreachable!(),
                };
                ((p.x - tx).powi(2) + (p.y.unwrap_or(0.0) - ty).powi(2) + (p.z - tz).powi(2)).sqrt()
            })
        });
        summary.push(json!({
            "frequency_hz": r.frequency,
            "bin_frequency_hz": r.bin_frequency,
            "peaks": r.peaks,
            "error_m": error,
        }));
    }
    manifest.results = Value::Array(summary);
    Ok(())
}

fn phantom_spec(args: &PhantomArgs) -> CliResult<PhantomSpec> {
    let spec = match args.kind {
        KindArg::Uniform => PhantomSpec::uniform(args.base_speed),
        KindArg::Layered => PhantomSpec::layered(args.base_speed, args.contrast, args.z_start, args.thickness),
        KindArg::GaussianBump => {
            PhantomSpec::gaussian_bump(args.base_speed, args.contrast, args.center_z, args.center_x, args.sigma)
        }
        KindArg::RandomSlabs => {
            let mut s = PhantomSpec::random_slabs(
                args.base_speed,
                args.contrast,
                args.z_min,
                args.z_max,
                args.count,
                args.seed,
            );
            if let PhantomKind::RandomSlabs { z_min, z_max, .. } = &mut s.kind {
                *z_min = args.z_min;
                *z_max = args.z_max;
            }
            s
        }
    };
    Ok(spec)
}

pub fn cmd_phantom(common: &Common, args: &PhantomArgs, manifest: &mut RunManifest) -> CliResult<()> {
    if args.dims.len() < 2 || args.dims.len() > 3 {
        return Err(usage("--dims takes nz,nx or nz,nx,ny"));
    }
    positive("--spacing", args.spacing)?;
    let spec = match &args.spec {
        Some(path) => {
            manifest.input(path);
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            PhantomSpec::from_json(&text)?
        }
        None => phantom_spec(args)?,
    };
    spec.validate()?;
    let spacing = vec![args.spacing; args.dims.len()];
    let medium = manifest.time("phantom", || make_phantom(&spec, &args.dims, &spacing))?;
    let medium_path = common.out.join("medium.asag");
    write_grid(medium.grid(), &medium_path)?;
    manifest.output(&medium_path);
    let spec_path = common.out.join("phantom.json");
    fs::write(&spec_path, spec.to_json()? + "\n").with_context(|| format!("writing {}", spec_path.display()))?;
    manifest.output(&spec_path);
    manifest.parameters = json!({
        "phantom": serde_json::from_str::<Value>(&spec.to_json()?).map_err(anyhow::Error::from)?,
        "dims": args.dims,
        "spacing": args.spacing,
    });
    let mut results = json!({
        "c0": medium.c0(),
        "min_speed": medium.min_speed(),
        "max_speed": medium.max_speed(),
    });

    if let Some(src) = &args.rf_source {
        if src.len() != 2 {
            return Err(usage("--rf-source takes x,z"));
        }
        if args.dims.len() != 2 {
            return Err(usage("--rf-source needs a 2-D phantom"));
        }
        positive("--frequency", args.frequency)?;
        let geometry = ArrayGeometry::with_aperture(args.aperture, args.spacing, 0.0)?;
        let cfg = MarchConfig::new(common.dz, 0.0, common.zmax, Direction::Forward).with_pad_factor(common.pad_factor);
        let rf = manifest.time("rf", || {
            round_trip_rf([src[0], src[1]], 0.5e-3, args.frequency, &medium, &geometry, &cfg, args.t_len, args.dt)
        })?;
        let rf_path = common.out.join("rf.asag");
        write_grid(&rf.to_grid(), &rf_path)?;
        manifest.output(&rf_path);
        manifest.parameters["rf"] = json!({
            "source": src,
            "frequency_hz": args.frequency,
            "aperture": args.aperture,
            "t_len": args.t_len,
            "dt": args.dt,
            "dz": common.dz,
        });
        results["rf_channels"] = json!(rf.channels);
    }
    manifest.results = results;
    Ok(())
}

/// Settings of a PAM timing run.
#[derive(Debug, Clone, Serialize)]
pub struct BenchParams {
    pub sizes: Vec<f64>,
    pub reps: usize,
    pub frequency: f64,
    pub pitch: f64,
    pub dz: f64,
    pub zmax: f64,
    pub pad_factor: usize,
    pub taper_r: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub aperture: f64,
    pub corrected: bool,
    pub reps: usize,
    pub median_s: f64,
    pub stddev_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
    /// Corrected over uncorrected median time, one entry per size.
    pub ratios: Vec<f64>,
}

fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn stddev(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

/// Time uncorrected and corrected single-frequency reconstructions of the
/// same RF recording, alternating the two per repetition after one warm-up.
/// Without a medium, a random slab phantom spanning `zmax` is used.
pub fn run_bench(p: &BenchParams, medium: Option<&MediumMap>) -> asa_core::Result<BenchReport> {
    if p.sizes.is_empty() || p.reps == 0 {
        return Err(AsaError::InvalidConfig("bench needs sizes and reps >= 1".into()));
    }
    let mut rows = Vec::new();
    let mut ratios = Vec::new();
    for &size in &p.sizes {
        let geometry = ArrayGeometry::with_aperture(size, p.pitch, 0.0)?;
        let owned;
        let m = match medium {
            Some(m) => m,
            None => {
                let nz = (p.zmax / p.pitch).round() as usize + 1;
                let nx = geometry.len() + 2 * (geometry.len() / 4) + 1;
                let spec = PhantomSpec::random_slabs(1500.0, 0.05, 3e-3, 18e-3, 4, p.seed);
                owned = make_phantom(&spec, &[nz, nx], &[p.pitch, p.pitch])?;
                &owned
            }
        };
        let rf = analytic_source_plane([0.0, 0.5 * p.zmax], p.frequency, m.c0(), &geometry, 80e-6, 40e-9)?;
        let config = |corrected| {
            let mut c = PamConfig::new(vec![p.frequency], corrected, p.dz, p.zmax);
            c.march.pad_factor = p.pad_factor;
            c.taper.r = p.taper_r;
            c
        };
        let (unc, cor) = (config(false), config(true));
        reconstruct_rf(&rf, Some(m), m.c0(), &unc, 1)?;
        reconstruct_rf(&rf, Some(m), m.c0(), &cor, 1)?;
        let mut times = [Vec::with_capacity(p.reps), Vec::with_capacity(p.reps)];
        for _ in 0..p.reps {
            for (slot, cfg) in [&unc, &cor].into_iter().enumerate() {
                let t0 = Instant::now();
                reconstruct_rf(&rf, Some(m), m.c0(), cfg, 1)?;
                times[slot].push(t0.elapsed().as_secs_f64());
            }
        }
        for (slot, corrected) in [false, true].into_iter().enumerate() {
            rows.push(BenchRow {
                aperture: size,
                corrected,
                reps: p.reps,
                median_s: median(&times[slot]),
                stddev_s: stddev(&times[slot]),
            });
        }
        ratios.push(median(&times[1]) / median(&times[0]));
    }
    Ok(BenchReport { rows, ratios })
}

pub fn format_bench(report: &BenchReport) -> String {
    let mut s = format!(
        "{:>12}  {:<11}  {:>4}  {:>10}  {:>10}\n",
        "aperture_mm", "mode", "reps", "median_ms", "stddev_ms"
    );
    for r in &report.rows {
        s += &format!(
            "{:>12.1}  {:<11}  {:>4}  {:>10.2}  {:>10.2}\n",
            r.aperture * 1e3,
            if r.corrected { "corrected" } else { "uncorrected" },
            r.reps,
            r.median_s * 1e3,
            r.stddev_s * 1e3
        );
    }
    for (r, ratio) in report.rows.iter().step_by(2).zip(&report.ratios) {
        s += &format!("ratio corrected/uncorrected at {:.1} mm: {:.2}x\n", r.aperture * 1e3, ratio);
    }
    s
}

pub fn cmd_bench(common: &Common, args: &BenchArgs, manifest: &mut RunManifest) -> CliResult<()> {
    if args.sizes.is_empty() {
        return Err(usage("--sizes needs at least one aperture"));
    }
    if args.reps == 0 {
        return Err(usage("--reps must be >= 1"));
    }
    for &s in &args.sizes {
        positive("--sizes entry", s)?;
    }
    positive("--frequency", args.frequency)?;
    positive("--pitch", args.pitch)?;
    let medium = load_medium(common, manifest)?;
    let params = BenchParams {
        sizes: args.sizes.clone(),
        reps: args.reps,
        frequency: args.frequency,
        pitch: args.pitch,
        dz: common.dz,
        zmax: common.zmax,
        pad_factor: common.pad_factor,
        taper_r: common.taper_r.unwrap_or(DEFAULT_PAM_TAPER),
        seed: args.seed,
    };
    manifest.parameters = serde_json::to_value(&params).map_err(anyhow::Error::from)?;
    let report = manifest.time("bench", || run_bench(&params, medium.as_ref()))?;
    print!("{}", format_bench(&report));
    manifest.results = serde_json::to_value(&report).map_err(anyhow::Error::from)?;
    Ok(())
}
