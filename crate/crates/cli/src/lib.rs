//! `gpuperf` command line: predictions, validation reports, calibration fits,
//! tile sweeps and fusion comparisons over the analytical models.

pub mod manifest;

use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use gpuperf::calibration::{split_benchmarks, CalibrationSet};
use gpuperf::case::{GemmDims, KernelCase, TileDims, WorkloadClass};
use gpuperf::cdna::{self, CdnaParams, TileCandidate};
use gpuperf::measured::{ingest_measured, MeasuredRecord};
use gpuperf::precision::Precision;
use gpuperf::profile::{
    resolve_profile, shipped_profile_text, HardwareProfile, ProfileSource, Vendor,
};
use gpuperf::validation::{fit_calibration, validate, FitOptions, ProfileSet, ValidationReport};
use gpuperf::workload::{
    aggregate, parse_segments, predict_case, route_case, PredictionContext, SegmentFile,
};
use gpuperf::{ModelError, PredictionBreakdown};

use manifest::{sha256_hex, ProfileRecord, RunManifest};

/// Overrides the per-copy launch overhead τ_memcpy (seconds).
pub const ENV_MEMCPY: &str = "ANALYTICAL_T_MEMCPY_LAUNCH_S";
/// Overrides the host synchronization cost τ_sync (seconds).
pub const ENV_SYNC: &str = "ANALYTICAL_T_SYNC_S";

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 1;
pub const EXIT_INTERNAL: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "gpuperf",
    version,
    about = "Analytical GPU kernel and application time predictions"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Predict one kernel (--gemm, --case, or --flops/--bytes) or segment files.
    Predict(PredictArgs),
    /// Compare predictions of segment files with measured kernel sums.
    Validate(ValidateArgs),
    /// Fit per-benchmark multipliers on a training set and score them on a holdout.
    Calibrate(CalibrateArgs),
    /// Model vs. naive roofline, side by side.
    Compare(CompareArgs),
    /// Rank GEMM tile shapes with the occupancy/tile model.
    SweepTiles(SweepArgs),
    /// Fused vs. separately launched kernels.
    Fuse(FuseArgs),
    /// Check that the files recorded in a run manifest are unchanged.
    VerifyManifest { path: PathBuf },
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Shipped profile name (b200, mi300a, h200, mi250x) or profile JSON path. Repeatable.
    #[arg(long = "profile")]
    pub profiles: Vec<String>,
    /// Calibration set JSON.
    #[arg(long)]
    pub calibration: Option<PathBuf>,
    /// Directory for CSV/JSON outputs and the run manifest.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Segment files or directories of them.
    #[arg(long, num_args = 1..)]
    pub segments: Vec<PathBuf>,
    /// Kernel case JSON.
    #[arg(long)]
    pub case: Option<PathBuf>,
    /// GEMM size: `N` for a square problem or `MxNxK`.
    #[arg(long)]
    pub gemm: Option<String>,
    /// Tile `bMxbNxbK`.
    #[arg(long)]
    pub tile: Option<String>,
    /// Workload class: memory_bound, compute_bound, balanced or stencil.
    #[arg(long)]
    pub class: Option<String>,
    /// Total floating-point operations.
    #[arg(long)]
    pub flops: Option<f64>,
    /// Total DRAM traffic in bytes.
    #[arg(long)]
    pub bytes: Option<f64>,
    /// fp64, fp32, tf32, fp16, fp8 or fp4; defaults to the profile precision.
    #[arg(long)]
    pub precision: Option<String>,
    /// Fraction of I/O overlapped with compute (stage model).
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Matrix-core utilization (CDNA model).
    #[arg(long)]
    pub utilization: Option<f64>,
    /// Kernels running concurrently on the device.
    #[arg(long)]
    pub concurrent: Option<u32>,
    /// Devices sharing the workload.
    #[arg(long)]
    pub devices: Option<u32>,
    /// Override the number of K-steps.
    #[arg(long)]
    pub k_tiles: Option<u64>,
    /// TMA multicast participants.
    #[arg(long)]
    pub participants: Option<u32>,
    /// Pair CTAs across two SMs (stage model).
    #[arg(long)]
    pub use_2sm: bool,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long, required = true, num_args = 1..)]
    pub segments: Vec<PathBuf>,
    #[arg(long)]
    pub measured: PathBuf,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long, required = true, num_args = 1..)]
    pub segments: Vec<PathBuf>,
    #[arg(long)]
    pub measured: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long, num_args = 1..)]
    pub train: Vec<PathBuf>,
    #[arg(long, num_args = 1..)]
    pub holdout: Vec<PathBuf>,
    /// Segment files to split by --holdout-fraction/--seed instead of --train/--holdout.
    #[arg(long, num_args = 1..)]
    pub segments: Vec<PathBuf>,
    #[arg(long)]
    pub holdout_fraction: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub measured: PathBuf,
    /// Emit the set even if the holdout MAE gets worse.
    #[arg(long)]
    pub allow_worse: bool,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub gemm: String,
    /// Comma-separated `bMxbN` candidates.
    #[arg(long, default_value = "8x8,16x16")]
    pub tiles: String,
    #[arg(long)]
    pub precision: Option<String>,
}

#[derive(Debug, Args)]
pub struct FuseArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Kernel case JSON; give at least two.
    #[arg(long = "case", required = true, num_args = 1..)]
    pub cases: Vec<PathBuf>,
    /// Per-fusion overhead in seconds.
    #[arg(long, default_value_t = 0.0)]
    pub tau_fusion: f64,
}

/// Parses `args` (including the program name), runs the command and returns the
/// exit status. `env` supplies environment variables.
pub fn run<I, S>(
    args: I,
    env: &dyn Fn(&str) -> Option<String>,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<String>,
{
    let args: Vec<String> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() {
                err.write_all(text.as_bytes())
            } else {
                out.write_all(text.as_bytes())
            };
            return code;
        }
    };
    let recorded: Vec<String> = args.iter().skip(1).cloned().collect();
    match dispatch(cli.command, &recorded, env, out) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e:#}");
            exit_code(&e)
        }
    }
}

/// 2 for internal invariant violations, 1 for everything else.
pub fn exit_code(e: &anyhow::Error) -> i32 {
    let internal = e
        .chain()
        .filter_map(|c| c.downcast_ref::<ModelError>())
        .any(ModelError::is_internal);
    if internal {
        EXIT_INTERNAL
    } else {
        EXIT_INPUT
    }
}

fn dispatch(
    command: Command,
    args: &[String],
    env: &dyn Fn(&str) -> Option<String>,
    out: &mut dyn Write,
) -> Result<i32> {
    match command {
        Command::Predict(a) => cmd_predict(a, args, env, out),
        Command::Validate(a) => cmd_validate(a, args, env, out),
        Command::Calibrate(a) => cmd_calibrate(a, args, env, out),
        Command::Compare(a) => cmd_compare(a, args, env, out),
        Command::SweepTiles(a) => cmd_sweep(a, args, env, out),
        Command::Fuse(a) => cmd_fuse(a, args, env, out),
        Command::VerifyManifest { path } => {
            let m = RunManifest::load(&path)?;
            let changed = m.verify();
            if changed.is_empty() {
                writeln!(out, "manifest {}: all recorded files match", path.display())?;
                Ok(EXIT_OK)
            } else {
                for c in &changed {
                    writeln!(out, "changed or missing: {}", c.display())?;
                }
                Ok(EXIT_INPUT)
            }
        }
    }
}

/// Profiles, calibration and environment overrides shared by every command.
struct Session {
    manifest: RunManifest,
    profiles: ProfileSet,
    calibration: CalibrationSet,
    env_overrides: Vec<(&'static str, f64)>,
    out_dir: Option<PathBuf>,
}

impl Session {
    fn new(
        command: &str,
        args: &[String],
        common: &CommonArgs,
        env: &dyn Fn(&str) -> Option<String>,
    ) -> Result<Self> {
        let mut manifest = RunManifest::new(command, args);
        let mut env_overrides = Vec::new();
        for var in [ENV_MEMCPY, ENV_SYNC] {
            if let Some(raw) = env(var) {
                let v: f64 = raw
                    .trim()
                    .parse()
                    .map_err(|_| anyhow!("{var}={raw:?} is not a number of seconds"))?;
                if !(v.is_finite() && v >= 0.0) {
                    bail!("{var}={raw:?} must be a non-negative number of seconds");
                }
                manifest.env_overrides.insert(var.to_string(), raw);
                env_overrides.push((var, v));
            }
        }
        let calibration = match &common.calibration {
            Some(p) => {
                manifest.add_input("calibration", p)?;
                CalibrationSet::load(p)?
            }
            None => CalibrationSet::default(),
        };
        if let Some(dir) = &common.out {
            std::fs::create_dir_all(dir)
                .with_context(|| format!("creating output directory {}", dir.display()))?;
        }
        let mut s = Session {
            manifest,
            profiles: ProfileSet::new(),
            calibration,
            env_overrides,
            out_dir: common.out.clone(),
        };
        for p in &common.profiles {
            s.add_profile(p)?;
        }
        Ok(s)
    }

    fn add_profile(&mut self, name_or_path: &str) -> Result<String> {
        let (profile, source) = resolve_profile(name_or_path)?;
        let name = profile.name().to_string();
        if self.profiles.contains_key(&name) {
            return Ok(name);
        }
        let (source, hash) = match source {
            ProfileSource::Shipped(n) => (
                "shipped".to_string(),
                sha256_hex(shipped_profile_text(&n).unwrap_or_default().as_bytes()),
            ),
            ProfileSource::File(p) => (p.display().to_string(), manifest::hash_file(&p)?),
        };
        self.manifest.profiles.push(ProfileRecord {
            name: name.clone(),
            source,
            sha256: hash,
        });
        // Environment overrides win over calibration τ values.
        for (var, v) in &self.env_overrides {
            let cal = self.calibration.platform_mut(&name);
            match *var {
                ENV_MEMCPY => cal.tau_memcpy_s = Some(*v),
                _ => cal.tau_sync_s = Some(*v),
            }
        }
        self.profiles.insert(name.clone(), profile);
        Ok(name)
    }

    /// The single profile of a one-profile command.
    fn only_profile(&self) -> Result<&HardwareProfile> {
        match self.profiles.len() {
            1 => Ok(self.profiles.values().next().expect("one profile")),
            0 => bail!("--profile is required"),
            _ => bail!("this command takes exactly one --profile"),
        }
    }

    fn context(&self, profile: &HardwareProfile) -> PredictionContext {
        PredictionContext::new(profile, &self.calibration)
    }

    fn load_segments(&mut self, role: &str, paths: &[PathBuf]) -> Result<Vec<SegmentFile>> {
        let mut files = Vec::new();
        for p in expand_paths(paths)? {
            self.manifest.add_input(role, &p)?;
            files.push(parse_segments(&p)?);
        }
        Ok(files)
    }

    /// Adds shipped profiles for platforms not given with --profile.
    fn ensure_profiles_for(&mut self, files: &[SegmentFile]) -> Result<()> {
        for f in files {
            if !self.profiles.contains_key(&f.platform) {
                self.add_profile(&f.platform).with_context(|| {
                    format!(
                        "{}: platform {:?} has no --profile and no shipped profile",
                        f.benchmark, f.platform
                    )
                })?;
            }
        }
        Ok(())
    }

    fn load_measured(&mut self, path: &Path) -> Result<Vec<MeasuredRecord>> {
        self.manifest.add_input("measured", path)?;
        Ok(ingest_measured(path)?)
    }

    fn write_output(&mut self, name: &str, contents: &str) -> Result<Option<PathBuf>> {
        let Some(dir) = &self.out_dir else {
            return Ok(None);
        };
        let path = dir.join(name);
        std::fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
        self.manifest.add_output(name, &path)?;
        Ok(Some(path))
    }

    fn finish(self, out: &mut dyn Write) -> Result<()> {
        if let Some(dir) = &self.out_dir {
            let path = self.manifest.write(dir)?;
            writeln!(out, "manifest: {}", path.display())?;
        }
        for (k, v) in &self.manifest.env_overrides {
            writeln!(out, "env override in effect: {k}={v}")?;
        }
        Ok(())
    }
}

/// Files as given; directories contribute their `*.json` files in name order.
fn expand_paths(paths: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut entries: Vec<PathBuf> = std::fs::read_dir(p)
                .with_context(|| format!("listing {}", p.display()))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|e| e.extension().is_some_and(|x| x == "json"))
                .collect();
            entries.sort();
            out.extend(entries);
        } else {
            out.push(p.clone());
        }
    }
    Ok(out)
}

pub fn parse_gemm(text: &str) -> Result<GemmDims> {
    let parts: Vec<&str> = text.split(['x', 'X']).collect();
    let nums: Vec<u64> = parts
        .iter()
        .map(|p| p.trim().parse::<u64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| anyhow!("--gemm {text:?}: expected N or MxNxK"))?;
    match nums.as_slice() {
        [n] if *n > 0 => Ok(GemmDims::square(*n)),
        [m, n, k] if *m > 0 && *n > 0 && *k > 0 => Ok(GemmDims {
            m: *m,
            n: *n,
            k: *k,
        }),
        _ => bail!("--gemm {text:?}: expected N or MxNxK with positive sizes"),
    }
}

fn parse_precision(text: &Option<String>) -> Result<Option<Precision>> {
    text.as_deref()
        .map(str::parse)
        .transpose()
        .map_err(Into::into)
}

/// Human-readable duration with a unit suited to its magnitude.
pub fn format_time(seconds: f64) -> String {
    let a = seconds.abs();
    if a == 0.0 {
        "0 s".to_string()
    } else if a >= 1.0 {
        format!("{seconds:.4} s")
    } else if a >= 1e-3 {
        format!("{:.4} ms", seconds * 1e3)
    } else if a >= 1e-6 {
        format!("{:.4} µs", seconds * 1e6)
    } else {
        format!("{:.4} ns", seconds * 1e9)
    }
}

pub const BREAKDOWN_CSV_HEADER: &str = "model_path,total_s,t_compute_s,t_memory_or_io_s,t_sync_s,t_launch_s,t_writeback_s,t_overhead_s,t_interference_s,t_memcpy_s";

fn breakdown_csv(b: &PredictionBreakdown) -> String {
    let mut s = format!("{BREAKDOWN_CSV_HEADER}\n{},{}", b.model_path, b.total_s);
    for (_, v) in b.terms() {
        let _ = write!(s, ",{v}");
    }
    s.push('\n');
    s
}

fn breakdown_table(b: &PredictionBreakdown) -> String {
    let mut s = String::new();
    let composition = match b.composition {
        gpuperf::Composition::Sum => "sum of terms",
        gpuperf::Composition::MaxPlusSync => "max(compute, memory/io) + sync + rest",
        gpuperf::Composition::MaxOfStages => "max(compute, memory/io, sync) + rest",
    };
    let _ = writeln!(s, "model path: {} ({composition})", b.model_path);
    for (name, v) in b.terms() {
        let _ = writeln!(s, "  {name:<14} {:>16}", format_time(v));
    }
    let _ = writeln!(
        s,
        "  {:<14} {:>16}   ({} s)",
        "total",
        format_time(b.total_s),
        b.total_s
    );
    for d in &b.diagnostics {
        let _ = writeln!(s, "  note: {d}");
    }
    s
}

fn build_case(a: &PredictArgs, profile: &HardwareProfile) -> Result<KernelCase> {
    let precision = parse_precision(&a.precision)?;
    let mut case = if let Some(path) = &a.case {
        let text =
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut c: KernelCase = serde_json::from_str(&text).map_err(|e| {
            anyhow!(
                "{}:{}:{}: malformed case: {e}",
                path.display(),
                e.line(),
                e.column()
            )
        })?;
        if let Some(p) = precision {
            c.precision = Some(p);
        }
        c
    } else if let Some(g) = &a.gemm {
        let dims = parse_gemm(g)?;
        let tile = a.tile.as_deref().map(str::parse::<TileDims>).transpose()?;
        let p = precision.unwrap_or(profile.tunables.default_precision);
        KernelCase::gemm(dims, tile, p)
    } else if a.flops.is_some() || a.bytes.is_some() {
        let class = match &a.class {
            Some(c) => c.parse()?,
            None => WorkloadClass::MemoryBound,
        };
        let mut c = KernelCase::new(class, a.flops.unwrap_or(0.0), a.bytes.unwrap_or(0.0));
        c.precision = precision;
        c
    } else {
        bail!("predict needs --segments, --case, --gemm, or --flops/--bytes");
    };
    if a.case.is_some() {
        if let Some(t) = &a.tile {
            case.tile = Some(t.parse()?);
        }
    }
    if let Some(v) = a.alpha {
        case.overlap_alpha = Some(v);
    }
    if let Some(v) = a.utilization {
        case.mfma_utilization = Some(v);
    }
    if let Some(v) = a.concurrent {
        case.n_concurrent = v;
    }
    if let Some(v) = a.devices {
        case.n_devices = v;
    }
    if let Some(v) = a.k_tiles {
        case.k_tiles = Some(v);
    }
    if let Some(v) = a.participants {
        case.tma_participants = v;
    }
    if a.use_2sm {
        case.use_2sm = true;
    }
    case.validate()?;
    Ok(case)
}

const SEGMENT_CSV_HEADER: &str =
    "benchmark,platform,segment,model_path,n_exec,shape_factor,case_factor,subtotal_s,roofline_s";

fn cmd_predict(
    a: PredictArgs,
    args: &[String],
    env: &dyn Fn(&str) -> Option<String>,
    out: &mut dyn Write,
) -> Result<i32> {
    let mut s = Session::new("predict", args, &a.common, env)?;
    if !a.segments.is_empty() {
        if a.case.is_some() || a.gemm.is_some() {
            bail!("--segments cannot be combined with --case or --gemm");
        }
        let files = s.load_segments("segments", &a.segments)?;
        let forced = if s.profiles.is_empty() {
            None
        } else {
            Some(s.only_profile()?.clone())
        };
        if forced.is_none() {
            s.ensure_profiles_for(&files)?;
        }
        let mut csv = String::from(SEGMENT_CSV_HEADER);
        csv.push('\n');
        for f in &files {
            let profile = forced
                .clone()
                .unwrap_or_else(|| s.profiles[&f.platform].clone());
            let app = aggregate(f, &s.context(&profile))?;
            writeln!(out, "{} on {}", f.benchmark, profile.name())?;
            for seg in &app.segments {
                writeln!(
                    out,
                    "  {:<24} {:<20} n_exec {:>8}  {:>16}",
                    seg.name,
                    seg.route.path.as_str(),
                    seg.n_exec,
                    format_time(seg.subtotal.total_s)
                )?;
                let _ = writeln!(
                    csv,
                    "{},{},{},{},{},{},{},{},{}",
                    f.benchmark,
                    profile.name(),
                    seg.name,
                    seg.route.path,
                    seg.n_exec,
                    seg.shape_factor,
                    seg.case_factor,
                    seg.subtotal.total_s,
                    seg.roofline_s
                );
            }
            write!(out, "{}", breakdown_table(&app.breakdown))?;
            let _ = writeln!(
                csv,
                "{},{},TOTAL,composite,,,,{},{}",
                f.benchmark,
                profile.name(),
                app.total_s(),
                app.roofline_s
            );
        }
        s.write_output("predict.csv", &csv)?;
    } else {
        let profile = s.only_profile()?.clone();
        if let Some(p) = &a.case {
            s.manifest.add_input("case", p)?;
        }
        let case = build_case(&a, &profile)?;
        let ctx = s.context(&profile);
        let b = predict_case(&case, &ctx)?;
        writeln!(
            out,
            "profile: {}   precision: {}   path: {}",
            profile.name(),
            case.precision_or_default(&profile),
            route_case(&case, &profile)
        )?;
        write!(out, "{}", breakdown_table(&b))?;
        s.write_output("predict.csv", &breakdown_csv(&b))?;
    }
    s.finish(out)?;
    Ok(EXIT_OK)
}

fn report_outputs(
    s: &mut Session,
    report: &ValidationReport,
    csv_name: &str,
    out: &mut dyn Write,
) -> Result<()> {
    write!(out, "{}", report.to_table())?;
    let csv = report.to_csv_string();
    s.write_output(csv_name, &csv)?;
    Ok(())
}

fn cmd_validate(
    a: ValidateArgs,
    args: &[String],
    env: &dyn Fn(&str) -> Option<String>,
    out: &mut dyn Write,
) -> Result<i32> {
    let mut s = Session::new("validate", args, &a.common, env)?;
    let files = s.load_segments("segments", &a.segments)?;
    s.ensure_profiles_for(&files)?;
    let measured = s.load_measured(&a.measured)?;
    let report = validate(&files, &measured, &s.profiles, &s.calibration)?;
    report_outputs(&mut s, &report, "validation.csv", out)?;
    s.finish(out)?;
    Ok(EXIT_OK)
}

fn cmd_compare(
    a: CompareArgs,
    args: &[String],
    env: &dyn Fn(&str) -> Option<String>,
    out: &mut dyn Write,
) -> Result<i32> {
    let mut s = Session::new("compare", args, &a.common, env)?;
    let files = s.load_segments("segments", &a.segments)?;
    s.ensure_profiles_for(&files)?;
    let measured = match &a.measured {
        Some(p) => s.load_measured(p)?,
        None => Vec::new(),
    };
    let report = validate(&files, &measured, &s.profiles, &s.calibration)?;
    writeln!(
        out,
        "model vs. naive roofline (datasheet peaks, no calibration)"
    )?;
    report_outputs(&mut s, &report, "compare.csv", out)?;
    s.finish(out)?;
    Ok(EXIT_OK)
}

fn cmd_calibrate(
    a: CalibrateArgs,
    args: &[String],
    env: &dyn Fn(&str) -> Option<String>,
    out: &mut dyn Write,
) -> Result<i32> {
    let mut s = Session::new("calibrate", args, &a.common, env)?;
    let measured = s.load_measured(&a.measured)?;
    let (train, holdout, options) = if !a.segments.is_empty() {
        if !a.train.is_empty() || !a.holdout.is_empty() {
            bail!("use either --segments with --holdout-fraction or --train/--holdout");
        }
        let fraction = a
            .holdout_fraction
            .ok_or_else(|| anyhow!("--segments needs --holdout-fraction"))?;
        let files = s.load_segments("segments", &a.segments)?;
        let names: Vec<String> = files.iter().map(|f| f.benchmark.clone()).collect();
        let (_, hold) = split_benchmarks(&names, fraction, a.seed)?;
        let (h, t): (Vec<SegmentFile>, Vec<SegmentFile>) =
            files.into_iter().partition(|f| hold.contains(&f.benchmark));
        let options = FitOptions {
            allow_worse: a.allow_worse,
            holdout_fraction: Some(fraction),
            seed: Some(a.seed),
        };
        (t, h, options)
    } else {
        if a.train.is_empty() {
            bail!("calibrate needs --train (and optionally --holdout) or --segments with --holdout-fraction");
        }
        let t = s.load_segments("train", &a.train)?;
        let h = s.load_segments("holdout", &a.holdout)?;
        let options = FitOptions {
            allow_worse: a.allow_worse,
            ..Default::default()
        };
        (t, h, options)
    };
    s.ensure_profiles_for(&train)?;
    s.ensure_profiles_for(&holdout)?;
    let fit = fit_calibration(
        &train,
        &holdout,
        &measured,
        &s.profiles,
        &s.calibration,
        options,
    )
    .map_err(|e| {
        let refused = matches!(e, ModelError::CalibrationRefused { .. });
        let e = anyhow::Error::new(e);
        if refused {
            e.context("no calibration written; rerun with --allow-worse to emit it anyway")
        } else {
            e
        }
    })?;
    for (k, f) in &fit.multipliers {
        writeln!(out, "m_case {k:<32} {f}")?;
    }
    writeln!(
        out,
        "train MAE {:.4}% -> {:.4}%",
        fit.train_mae_before_pct, fit.train_mae_after_pct
    )?;
    match (fit.holdout_mae_before_pct, fit.holdout_mae_after_pct) {
        (Some(b), Some(a)) => writeln!(out, "holdout MAE {b:.4}% -> {a:.4}%")?,
        _ => writeln!(
            out,
            "holdout: none with measured times; set marked unvalidated"
        )?,
    }
    let json = fit.set.to_json_string() + "\n";
    if s.write_output("calibration.json", &json)?.is_none() {
        write!(out, "{json}")?;
    }
    s.finish(out)?;
    Ok(EXIT_OK)
}

fn cmd_sweep(
    a: SweepArgs,
    args: &[String],
    env: &dyn Fn(&str) -> Option<String>,
    out: &mut dyn Write,
) -> Result<i32> {
    let mut s = Session::new("sweep-tiles", args, &a.common, env)?;
    let profile = s.only_profile()?.clone();
    if profile.vendor() != Vendor::Amd {
        bail!(
            "sweep-tiles uses the CDNA occupancy/tile model; profile {} is not a CDNA device",
            profile.name()
        );
    }
    let ctx = s.context(&profile);
    let gemm = parse_gemm(&a.gemm)?;
    let precision = parse_precision(&a.precision)?.unwrap_or(profile.tunables.default_precision);
    let mut candidates = Vec::new();
    for t in a.tiles.split(',').map(str::trim).filter(|t| !t.is_empty()) {
        let tile: TileDims = t.parse()?;
        let mut c = TileCandidate::for_gemm(&gemm, tile.b_m, tile.b_n, precision, &ctx.profile)?;
        c.factor = ctx.calibration.tile_factor(&c.label);
        candidates.push(c);
    }
    let sel = cdna::select_tile(&candidates, &ctx.profile, &ctx.cdna)?;
    let mut csv = String::from("tile,w_eff,n_ctas,factor,total_s,selected\n");
    writeln!(
        out,
        "{} GEMM {}x{}x{} {precision}",
        profile.name(),
        gemm.m,
        gemm.n,
        gemm.k
    )?;
    writeln!(
        out,
        "  {:<8} {:>6} {:>10} {:>16}",
        "tile", "W_eff", "CTAs", "time"
    )?;
    for (i, (c, (_, t))) in candidates.iter().zip(&sel.times).enumerate() {
        let mark = if i == sel.best_index {
            "  <- fastest"
        } else {
            ""
        };
        writeln!(
            out,
            "  {:<8} {:>6} {:>10} {:>16}{mark}",
            c.label,
            c.w_eff,
            c.n_ctas,
            format_time(*t)
        )?;
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{}",
            c.label,
            c.w_eff,
            c.n_ctas,
            c.factor,
            t,
            i == sel.best_index
        );
    }
    s.write_output("sweep.csv", &csv)?;
    s.finish(out)?;
    Ok(EXIT_OK)
}

fn cmd_fuse(
    a: FuseArgs,
    args: &[String],
    env: &dyn Fn(&str) -> Option<String>,
    out: &mut dyn Write,
) -> Result<i32> {
    let mut s = Session::new("fuse", args, &a.common, env)?;
    let profile = s.only_profile()?.clone();
    if profile.vendor() != Vendor::Amd {
        bail!(
            "fuse uses the CDNA kernel model; profile {} is not a CDNA device",
            profile.name()
        );
    }
    let mut kernels = Vec::new();
    for p in &a.cases {
        s.manifest.add_input("case", p)?;
        let text =
            std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
        let c: KernelCase = serde_json::from_str(&text).map_err(|e| {
            anyhow!(
                "{}:{}:{}: malformed case: {e}",
                p.display(),
                e.line(),
                e.column()
            )
        })?;
        kernels.push(c);
    }
    let ctx = s.context(&profile);
    let params: &CdnaParams = &ctx.cdna;
    let unfused = cdna::unfused_time(&kernels, &ctx.profile, params)?;
    let fused = cdna::fused_time(&kernels, a.tau_fusion, &ctx.profile, params)?;
    writeln!(
        out,
        "unfused ({} launches): {}",
        kernels.len(),
        format_time(unfused.total_s)
    )?;
    writeln!(out, "fused   (1 launch):   {}", format_time(fused.total_s))?;
    writeln!(
        out,
        "saving: {}",
        format_time(unfused.total_s - fused.total_s)
    )?;
    let csv = format!(
        "variant,total_s,t_launch_s,t_overhead_s\nunfused,{},{},{}\nfused,{},{},{}\n",
        unfused.total_s,
        unfused.t_launch_s,
        unfused.t_overhead_s,
        fused.total_s,
        fused.t_launch_s,
        fused.t_overhead_s
    );
    s.write_output("fuse.csv", &csv)?;
    s.finish(out)?;
    Ok(EXIT_OK)
}
