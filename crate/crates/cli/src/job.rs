//! Command-line jobs and their dispatch.
//!
//! Every command prints `key=value` lines on standard output. Solving
//! commands also write a CSV convergence report, by default next to the
//! output with the extension replaced by `.csv`.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use tvreg::flow::{endpoint_error, estimate_flow};
use tvreg::restore::{blind_deconvolve_am, normalized_cross_correlation, psnr, tv_deconvolve};
use tvreg::{
    BlindParams, Error, FlowParams, FlowVariant, FramePair, InitialGuess, Kernel, RestoreParams, ScalarField,
    SmoothingAlpha, SolveReport, SolverConfig, TvVariant,
};

use crate::error::{CliError, CliResult};
use crate::flo::{read_flo, write_flo, FLO_MAGIC};
use crate::kernel_file::{builtin_kernel, load_kernel, write_kernel};
use crate::pgm::{read_pgm, write_pgm};
use crate::report::write_report;
use crate::synth::synth;

pub const DEFAULT_DENOISE_LAMBDA: f64 = 0.05;
pub const DEFAULT_BLIND_LAMBDA: f64 = 0.03;
pub const DEFAULT_BLIND_LAMBDA_H: f64 = 0.2;
pub const DEFAULT_FLOW_LAMBDA: f64 = 0.001;
pub const DEFAULT_FLOW_EPS: f64 = 0.01;
pub const DEFAULT_ALPHA: f64 = 1e-3;

#[derive(Parser, Debug, Clone)]
#[command(name = "tvreg", version, about = "Total-variation image restoration and optical flow")]
pub struct JobSpec {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug, Clone)]
pub enum Command {
    /// TV denoising of a PGM image.
    Denoise(RestoreArgs),
    /// TV deconvolution with a known kernel.
    Deconv(DeconvArgs),
    /// Blind deconvolution by alternating minimization.
    Blind(BlindArgs),
    /// Two-frame optical flow.
    Flow(FlowArgs),
    /// PSNR between two PGM images or endpoint error between two .flo files.
    Metrics(MetricsArgs),
    /// Writes a synthetic fixture.
    Synth(SynthArgs),
}

#[derive(Args, Debug, Clone)]
pub struct SolverArgs {
    /// Outer iteration cap.
    #[arg(long = "max-iter", default_value_t = 50)]
    pub max_iter: usize,
    /// Outer step-norm tolerance; defaults to 1e-4·sqrt(pixels).
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long = "cg-tol", default_value_t = 1e-8)]
    pub cg_tol: f64,
    #[arg(long = "cg-max-iter", default_value_t = 500)]
    pub cg_max_iter: usize,
}

impl SolverArgs {
    fn config(&self, width: usize, height: usize) -> CliResult<SolverConfig<f64>> {
        let tol = self.tol.unwrap_or_else(|| SolverConfig::<f64>::for_grid(width, height).tol_outer);
        Ok(SolverConfig::new(tol, self.max_iter, self.cg_tol, self.cg_max_iter)?)
    }
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum RestoreVariant {
    Fro,
    L1,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitArg {
    Observation,
    Mean,
}

#[derive(Args, Debug, Clone)]
pub struct RestoreArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long, default_value_t = DEFAULT_DENOISE_LAMBDA)]
    pub lambda: f64,
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    pub alpha: f64,
    #[arg(long, value_enum, default_value_t = RestoreVariant::Fro)]
    pub variant: RestoreVariant,
    #[arg(long, value_enum, default_value_t = InitArg::Observation)]
    pub init: InitArg,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Ground truth for PSNR.
    #[arg(long = "ref")]
    pub reference: Option<PathBuf>,
    /// CSV report path.
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[arg(long, default_value_t = 255)]
    pub maxval: u32,
}

#[derive(Args, Debug, Clone)]
pub struct DeconvArgs {
    #[command(flatten)]
    pub restore: RestoreArgs,
    /// Built-in kernel name (delta, motion3, diag3, box3, box5) or text file.
    #[arg(long)]
    pub kernel: String,
}

#[derive(Args, Debug, Clone)]
pub struct BlindArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    /// Where to write the estimated kernel as text.
    #[arg(long = "kernel-output")]
    pub kernel_output: Option<PathBuf>,
    /// TV weight on the image.
    #[arg(long, default_value_t = DEFAULT_BLIND_LAMBDA)]
    pub lambda: f64,
    /// TV weight on the kernel.
    #[arg(long = "lambda-h", default_value_t = DEFAULT_BLIND_LAMBDA_H)]
    pub lambda_h: f64,
    #[arg(long = "kernel-size", default_value_t = 3)]
    pub kernel_size: usize,
    #[arg(long = "inner-iter", default_value_t = 5)]
    pub inner_iter: usize,
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    pub alpha: f64,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[arg(long = "ref")]
    pub reference: Option<PathBuf>,
    /// True kernel (name or file) for correlation reporting.
    #[arg(long = "ref-kernel")]
    pub reference_kernel: Option<String>,
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[arg(long, default_value_t = 255)]
    pub maxval: u32,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlowVariantArg {
    An,
    Tv,
}

#[derive(Args, Debug, Clone)]
pub struct FlowArgs {
    #[arg(long)]
    pub frame1: PathBuf,
    #[arg(long)]
    pub frame2: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long, default_value_t = DEFAULT_FLOW_LAMBDA)]
    pub lambda: f64,
    #[arg(long, default_value_t = DEFAULT_FLOW_EPS)]
    pub eps: f64,
    #[arg(long, value_enum, default_value_t = FlowVariantArg::An)]
    pub variant: FlowVariantArg,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Ground-truth .flo for endpoint error.
    #[arg(long = "ref")]
    pub reference: Option<PathBuf>,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct MetricsArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long = "ref")]
    pub reference: PathBuf,
    /// Peak value for PSNR.
    #[arg(long, default_value_t = 1.0)]
    pub peak: f64,
}

#[derive(Args, Debug, Clone)]
pub struct SynthArgs {
    /// One of step32, piecewise64, ramp-shift, split-motion.
    #[arg(long)]
    pub fixture: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long = "output-dir", default_value = ".")]
    pub output_dir: PathBuf,
    /// Noise standard deviation; 0.05 for images and 0 for flow frames by default.
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long, default_value_t = 255)]
    pub maxval: u32,
}

/// Default report location: the output path with a `.csv` extension.
pub fn report_path(output: &Path, explicit: Option<&Path>) -> PathBuf {
    match explicit {
        Some(p) => p.to_path_buf(),
        None if output.extension().is_some_and(|e| e == "csv") => output.with_extension("report.csv"),
        None => output.with_extension("csv"),
    }
}

fn require_inputs(paths: &[&Path]) -> CliResult<()> {
    for p in paths {
        if !p.is_file() {
            return Err(CliError::Usage(format!("input file {} does not exist", p.display())));
        }
    }
    Ok(())
}

fn refuse_overwrite(inputs: &[&Path], outputs: &[&Path]) -> CliResult<()> {
    for o in outputs {
        let target = o.canonicalize().ok();
        for i in inputs {
            if target.is_some() && i.canonicalize().ok() == target {
                return Err(CliError::Usage(format!("output {} would overwrite an input", o.display())));
            }
        }
    }
    Ok(())
}

fn require_kernel_source(spec: &str) -> CliResult<()> {
    if builtin_kernel(spec).is_some() {
        Ok(())
    } else {
        require_inputs(&[Path::new(spec)])
    }
}

fn alpha(a: f64) -> CliResult<SmoothingAlpha<f64>> {
    Ok(SmoothingAlpha::new(a)?)
}

struct Emitter<'a> {
    out: &'a mut dyn Write,
}

impl Emitter<'_> {
    fn kv(&mut self, key: &str, value: impl std::fmt::Display) -> CliResult<()> {
        writeln!(self.out, "{key}={value}").map_err(|e| CliError::io(Path::new("<stdout>"), e))
    }

    fn report(&mut self, r: &SolveReport) -> CliResult<()> {
        self.kv("objective", r.final_objective())?;
        self.kv("outer_iterations", r.outer_iterations)?;
        self.kv("converged", r.converged)?;
        self.kv("cg_iterations", r.cg_iterations_total)?;
        self.kv("monotone", r.monotone_descent())
    }
}

/// Runs the solver, flushing the partial report when it fails.
fn solve_with_report<T>(report_file: &Path, run: impl FnOnce() -> tvreg::Result<(T, SolveReport)>) -> CliResult<(T, SolveReport)> {
    match run() {
        Ok((value, report)) => {
            write_report(report_file, &report)?;
            Ok((value, report))
        }
        Err(e) => {
            if let Error::OuterFailure { report, .. } = &e {
                write_report(report_file, report)?;
            }
            Err(e.into())
        }
    }
}

fn psnr_lines(em: &mut Emitter, f: &ScalarField, g: &ScalarField, reference: Option<&Path>) -> CliResult<()> {
    if let Some(path) = reference {
        let truth = read_pgm(path)?;
        em.kv("psnr_db", psnr(f, &truth, 1.0)?)?;
        em.kv("input_psnr_db", psnr(g, &truth, 1.0)?)?;
    }
    Ok(())
}

fn restore(args: &RestoreArgs, kernel: Option<&str>, em: &mut Emitter) -> CliResult<()> {
    let mut inputs = vec![args.input.as_path()];
    inputs.extend(args.reference.as_deref());
    require_inputs(&inputs)?;
    if let Some(k) = kernel {
        require_kernel_source(k)?;
    }
    let report_file = report_path(&args.output, args.report.as_deref());
    refuse_overwrite(&inputs, &[&args.output, &report_file])?;
    let h = match kernel {
        Some(k) => load_kernel(k)?,
        None => Kernel::delta(),
    };
    let g = read_pgm(&args.input)?;
    if let Some(r) = &args.reference {
        g.check_shape(&read_pgm(r)?)?;
    }
    let params = RestoreParams {
        lambda: args.lambda,
        alpha: alpha(args.alpha)?,
        variant: match args.variant {
            RestoreVariant::Fro => TvVariant::Fro,
            RestoreVariant::L1 => TvVariant::AnisoL1,
        },
        solver: args.solver.config(g.width(), g.height())?.with_init(match args.init {
            InitArg::Observation => InitialGuess::Observation,
            InitArg::Mean => InitialGuess::Mean,
        }),
    };
    if !(params.lambda >= 0.0) || !params.lambda.is_finite() {
        return Err(CliError::Usage(format!("--lambda must be finite and nonnegative, got {}", params.lambda)));
    }
    let start = Instant::now();
    let (f, report) = solve_with_report(&report_file, || tv_deconvolve(&g, &h, &params))?;
    let elapsed = start.elapsed().as_secs_f64();
    write_pgm(&args.output, &f, args.maxval)?;
    em.report(&report)?;
    psnr_lines(em, &f, &g, args.reference.as_deref())?;
    em.kv("report", report_file.display())?;
    em.kv("wall_time_s", elapsed)
}

fn blind(args: &BlindArgs, em: &mut Emitter) -> CliResult<()> {
    let mut inputs = vec![args.input.as_path()];
    inputs.extend(args.reference.as_deref());
    require_inputs(&inputs)?;
    if let Some(k) = &args.reference_kernel {
        require_kernel_source(k)?;
    }
    let report_file = report_path(&args.output, args.report.as_deref());
    let mut outputs = vec![args.output.as_path(), report_file.as_path()];
    outputs.extend(args.kernel_output.as_deref());
    refuse_overwrite(&inputs, &outputs)?;
    let g = read_pgm(&args.input)?;
    let true_kernel = args.reference_kernel.as_deref().map(load_kernel).transpose()?;
    let mut params = BlindParams::new(args.lambda, args.lambda_h, args.kernel_size, g.width(), g.height());
    params.alpha = alpha(args.alpha)?;
    params.solver = args.solver.config(g.width(), g.height())?;
    params.inner_iterations = args.inner_iter;
    let start = Instant::now();
    let ((f, k), report) = solve_with_report(&report_file, || {
        blind_deconvolve_am(&g, &params).map(|(f, k, r)| ((f, k), r))
    })?;
    let elapsed = start.elapsed().as_secs_f64();
    write_pgm(&args.output, &f, args.maxval)?;
    if let Some(path) = &args.kernel_output {
        write_kernel(path, &k)?;
    }
    em.report(&report)?;
    psnr_lines(em, &f, &g, args.reference.as_deref())?;
    if let Some(t) = &true_kernel {
        if t.width() == k.width() && t.height() == k.height() {
            em.kv("kernel_ncc", normalized_cross_correlation(k.weights(), t.weights())?)?;
        } else {
            return Err(CliError::Usage("--ref-kernel size differs from --kernel-size".into()));
        }
    }
    em.kv("kernel_sum", k.sum())?;
    em.kv("report", report_file.display())?;
    em.kv("wall_time_s", elapsed)
}

fn flow(args: &FlowArgs, em: &mut Emitter) -> CliResult<()> {
    let mut inputs = vec![args.frame1.as_path(), args.frame2.as_path()];
    inputs.extend(args.reference.as_deref());
    require_inputs(&inputs)?;
    let report_file = report_path(&args.output, args.report.as_deref());
    refuse_overwrite(&inputs, &[&args.output, &report_file])?;
    let pair = FramePair::new(read_pgm(&args.frame1)?, read_pgm(&args.frame2)?)?;
    let truth = args.reference.as_deref().map(read_flo).transpose()?;
    let variant = match args.variant {
        FlowVariantArg::An => FlowVariant::An,
        FlowVariantArg::Tv => FlowVariant::Tv,
    };
    let mut params = FlowParams::new(args.lambda, args.eps, variant, pair.width(), pair.height());
    params.solver = args.solver.config(pair.width(), pair.height())?;
    let start = Instant::now();
    let (w, report) = solve_with_report(&report_file, || estimate_flow(&pair, &params))?;
    let elapsed = start.elapsed().as_secs_f64();
    write_flo(&args.output, &w)?;
    em.report(&report)?;
    if let Some(gt) = &truth {
        let (mean, max) = endpoint_error(&w, gt)?;
        em.kv("mean_epe", mean)?;
        em.kv("max_epe", max)?;
    }
    em.kv("report", report_file.display())?;
    em.kv("wall_time_s", elapsed)
}

fn is_flo(path: &Path) -> CliResult<bool> {
    use std::io::Read;
    let mut head = [0u8; 4];
    let mut file = std::fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    let n = file.read(&mut head).map_err(|e| CliError::io(path, e))?;
    Ok(n == 4 && head == FLO_MAGIC)
}

fn metrics(args: &MetricsArgs, em: &mut Emitter) -> CliResult<()> {
    require_inputs(&[&args.input, &args.reference])?;
    let start = Instant::now();
    match (is_flo(&args.input)?, is_flo(&args.reference)?) {
        (true, true) => {
            let (mean, max) = endpoint_error(&read_flo(&args.input)?, &read_flo(&args.reference)?)?;
            em.kv("mean_epe", mean)?;
            em.kv("max_epe", max)?;
        }
        (false, false) => {
            let f = read_pgm(&args.input)?;
            let r = read_pgm(&args.reference)?;
            em.kv("psnr_db", psnr(&f, &r, args.peak)?)?;
        }
        _ => return Err(CliError::Usage("metrics needs two images or two flow files".into())),
    }
    em.kv("wall_time_s", start.elapsed().as_secs_f64())
}

/// Executes a parsed job, writing `key=value` lines to `out`.
pub fn run(job: &JobSpec, out: &mut dyn Write) -> CliResult<()> {
    let mut em = Emitter { out };
    match &job.command {
        Command::Denoise(a) => restore(a, None, &mut em),
        Command::Deconv(a) => restore(&a.restore, Some(&a.kernel), &mut em),
        Command::Blind(a) => blind(a, &mut em),
        Command::Flow(a) => flow(a, &mut em),
        Command::Metrics(a) => metrics(a, &mut em),
        Command::Synth(a) => {
            let start = Instant::now();
            for p in synth(&a.fixture, a.seed, &a.output_dir, a.sigma, a.maxval)? {
                em.kv("wrote", p.display())?;
            }
            em.kv("wall_time_s", start.elapsed().as_secs_f64())
        }
    }
}

/// Parses `args` (program name first), runs the job and returns the exit status.
pub fn main_with_args<I, S>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let job = match JobSpec::try_parse_from(args) {
        Ok(job) => job,
        Err(e) => {
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{}", e.render());
                    0
                }
                _ => {
                    let _ = write!(err, "{}", e.render());
                    1
                }
            };
        }
    };
    match run(&job, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}
