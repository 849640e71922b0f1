//! Command implementations behind the `fragscan` binary.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use anyhow::{bail, ensure, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use fragscan_core::cost::{speedup_report, CostMode};
use fragscan_core::io::{encode_class_map, encode_pgm, encode_posteriors, read_pgm};
use fragscan_core::par::with_threads;
use fragscan_core::{
    compare_outputs, init_weights, parse_net, random_image, scan_fragment, scan_naive, DenseOutput, NetSpec, PlaneSet,
    Scalar, WeightSet,
};

#[derive(Debug, Parser)]
#[command(name = "fragscan", version, about = "Dense CNN scanning with max-pooling fragments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Classify every pixel with the fragment engine and write the class map.
    Segment(SegmentArgs),
    /// Run both engines and compare their posteriors.
    Verify(VerifyArgs),
    /// Print the analytical FLOPS comparison.
    Flops(FlopsArgs),
    /// Time both engines on synthetic images.
    Bench(BenchArgs),
    /// Write deterministic weights for a net.
    InitWeights(InitWeightsArgs),
    /// Write a synthetic 8-bit PGM slice.
    GenImage(GenImageArgs),
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// Net description file.
    #[arg(long)]
    pub net: PathBuf,
    /// FSW1 weights file.
    #[arg(long)]
    pub weights: PathBuf,
}

#[derive(Debug, Args)]
pub struct SegmentArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Input PGM.
    #[arg(long)]
    pub image: PathBuf,
    /// Mirror-pad so the output has the input's size.
    #[arg(long)]
    pub pad: bool,
    /// Class map PGM; written to stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Raw FSP1 posterior dump.
    #[arg(long)]
    pub posteriors: Option<PathBuf>,
    /// Worker threads; all cores when absent.
    #[arg(long, value_parser = clap::value_parser!(u16).range(1..))]
    pub threads: Option<u16>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub image: PathBuf,
    #[arg(long)]
    pub pad: bool,
    /// Largest accepted absolute posterior difference.
    #[arg(long, default_value_t = 1e-5, value_parser = parse_tolerance)]
    pub tol: f64,
    /// Compute in 64-bit floats.
    #[arg(long)]
    pub f64: bool,
    #[arg(long, value_parser = clap::value_parser!(u16).range(1..))]
    pub threads: Option<u16>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum FlopsMode {
    /// Equal-size fragments with the side halved at each pooling layer.
    Paper,
    /// True fragment sizes, matching the engine's operation count.
    Exact,
}

#[derive(Debug, Args)]
pub struct FlopsArgs {
    #[arg(long)]
    pub net: PathBuf,
    /// Image side `s`.
    #[arg(long)]
    pub size: usize,
    #[arg(long, value_enum, default_value_t = FlopsMode::Paper)]
    pub mode: FlopsMode,
    /// Also write the report as CSV; `-` prints it to stdout.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Exact mode only: count the mirror-padded scan.
    #[arg(long)]
    pub pad: bool,
    /// Add rows for max-pooling comparisons.
    #[arg(long)]
    pub with_pool: bool,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Image sides to time; repeat or separate with commas.
    #[arg(long, value_delimiter = ',', required_unless_present = "image")]
    pub size: Vec<usize>,
    /// Time this PGM instead of synthetic images.
    #[arg(long, conflicts_with = "size")]
    pub image: Option<PathBuf>,
    /// Timed runs per engine and size, after one discarded warm-up.
    #[arg(long, default_value_t = 5, value_parser = clap::value_parser!(u16).range(5..))]
    pub runs: u16,
    #[arg(long, value_parser = clap::value_parser!(u16).range(1..))]
    pub threads: Option<u16>,
    /// Only time the fragment engine.
    #[arg(long)]
    pub skip_naive: bool,
    /// FSP1 dump of the last fragment-engine run; needs a single image.
    #[arg(long)]
    pub posteriors: Option<PathBuf>,
    /// Seed for the synthetic images.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct InitWeightsArgs {
    #[arg(long)]
    pub net: PathBuf,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct GenImageArgs {
    #[arg(long)]
    pub width: usize,
    #[arg(long)]
    pub height: usize,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

fn parse_tolerance(s: &str) -> std::result::Result<f64, String> {
    match s.parse::<f64>() {
        Ok(t) if t >= 0.0 && t.is_finite() => Ok(t),
        Ok(_) => Err("tolerance must be finite and non-negative".into()),
        Err(e) => Err(e.to_string()),
    }
}

/// How a successful command ended.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Ok,
    /// `verify` found the engines further apart than the tolerance.
    Disagree,
}

impl Status {
    pub fn exit_code(self) -> u8 {
        match self {
            Status::Ok => 0,
            Status::Disagree => 1,
        }
    }
}

/// Exit code for operational failures.
pub const EXIT_ERROR: u8 = 2;

pub fn run(cli: &Cli, out: &mut dyn Write) -> Result<Status> {
    match &cli.command {
        Command::Segment(args) => segment(args, out),
        Command::Verify(args) => verify(args, out),
        Command::Flops(args) => flops(args, out),
        Command::Bench(args) => bench(args, out),
        Command::InitWeights(args) => init(args, out),
        Command::GenImage(args) => gen_image(args, out),
    }
}

pub fn load_net(path: &Path) -> Result<NetSpec> {
    let text = fs::read_to_string(path).with_context(|| format!("reading net {}", path.display()))?;
    parse_net(&text).with_context(|| format!("parsing net {}", path.display()))
}

pub fn load_weights<T: Scalar>(net: &NetSpec, path: &Path) -> Result<WeightSet<T>> {
    let bytes = fs::read(path).with_context(|| format!("reading weights {}", path.display()))?;
    let weights = WeightSet::<f32>::from_bytes(net, &bytes).with_context(|| format!("decoding {}", path.display()))?;
    Ok(weights.cast())
}

fn load_image<T: Scalar>(path: &Path) -> Result<PlaneSet<T>> {
    read_pgm(path).with_context(|| format!("reading image {}", path.display()))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn threads(n: Option<u16>) -> usize {
    n.map_or(0, usize::from)
}

fn timed<R>(f: impl FnOnce() -> R) -> (R, Duration) {
    let start = Instant::now();
    let r = f();
    (r, start.elapsed())
}

fn segment(args: &SegmentArgs, out: &mut dyn Write) -> Result<Status> {
    let net = load_net(&args.model.net)?;
    let weights = load_weights::<f32>(&net, &args.model.weights)?;
    let image = load_image::<f32>(&args.image)?;
    let output = with_threads(threads(args.threads), || {
        scan_fragment(&net, &weights, &image, args.pad)
    })?;
    let map = encode_class_map(&output);
    match &args.out {
        Some(path) => {
            write_file(path, &map)?;
            writeln!(
                out,
                "wrote {}x{} class map to {}",
                output.width(),
                output.height(),
                path.display()
            )?;
        }
        None => out.write_all(&map)?,
    }
    if let Some(path) = &args.posteriors {
        write_file(path, &encode_posteriors(&output))?;
    }
    Ok(Status::Ok)
}

fn verify_in<T: Scalar>(args: &VerifyArgs, net: &NetSpec, out: &mut dyn Write) -> Result<Status> {
    let weights = load_weights::<T>(net, &args.model.weights)?;
    let image = load_image::<T>(&args.image)?;
    let (fast, fast_time) =
        timed(|| with_threads(threads(args.threads), || scan_fragment(net, &weights, &image, args.pad)));
    let fast = fast?;
    let (slow, slow_time) =
        timed(|| with_threads(threads(args.threads), || scan_naive(net, &weights, &image, args.pad)));
    let slow = slow?;
    let cmp = compare_outputs(&fast, &slow, args.tol);
    let class_mismatches = fast
        .classes()
        .iter()
        .zip(slow.classes())
        .filter(|(a, b)| a != b)
        .count();
    writeln!(out, "output: {}x{}x{}", fast.width(), fast.height(), fast.class_count())?;
    writeln!(out, "max_abs_diff: {:e}", cmp.max_abs_diff)?;
    writeln!(out, "class_mismatches: {class_mismatches}")?;
    writeln!(out, "naive: {:.3} s", slow_time.as_secs_f64())?;
    writeln!(out, "fragment: {:.3} s", fast_time.as_secs_f64())?;
    if cmp.equal {
        writeln!(out, "engines agree within {:e}", args.tol)?;
        Ok(Status::Ok)
    } else {
        writeln!(out, "engines disagree: {cmp}")?;
        Ok(Status::Disagree)
    }
}

fn verify(args: &VerifyArgs, out: &mut dyn Write) -> Result<Status> {
    let net = load_net(&args.model.net)?;
    if args.f64 {
        verify_in::<f64>(args, &net, out)
    } else {
        verify_in::<f32>(args, &net, out)
    }
}

fn flops(args: &FlopsArgs, out: &mut dyn Write) -> Result<Status> {
    let net = load_net(&args.net)?;
    let mode = match args.mode {
        FlopsMode::Paper => {
            ensure!(!args.pad, "--pad only applies to --mode exact");
            CostMode::PaperApprox
        }
        FlopsMode::Exact => CostMode::Exact { pad: args.pad },
    };
    let report = speedup_report(&net, args.size, mode, args.with_pool)?;
    out.write_all(report.render_text().as_bytes())?;
    match &args.csv {
        Some(path) if path.as_os_str() == "-" => out.write_all(report.render_csv().as_bytes())?,
        Some(path) => write_file(path, report.render_csv().as_bytes())?,
        None => {}
    }
    Ok(Status::Ok)
}

/// Median of the samples; the mean of the middle two for even counts.
pub fn median(samples: &mut [Duration]) -> Duration {
    assert!(!samples.is_empty(), "median of no samples");
    samples.sort_unstable();
    let mid = samples.len() / 2;
    if samples.len() % 2 == 1 {
        samples[mid]
    } else {
        (samples[mid - 1] + samples[mid]) / 2
    }
}

fn median_time<R>(runs: usize, mut f: impl FnMut() -> Result<R>) -> Result<(R, Duration)> {
    f()?;
    let mut samples = Vec::with_capacity(runs);
    let mut last = None;
    for _ in 0..runs {
        let (r, t) = timed(&mut f);
        last = Some(r?);
        samples.push(t);
    }
    Ok((last.expect("at least one run"), median(&mut samples)))
}

fn bench(args: &BenchArgs, out: &mut dyn Write) -> Result<Status> {
    let net = load_net(&args.model.net)?;
    let weights = load_weights::<f32>(&net, &args.model.weights)?;
    let images: Vec<PlaneSet<f32>> = match &args.image {
        Some(path) => vec![load_image(path)?],
        None => args
            .size
            .iter()
            .map(|&s| random_image(net.input_channels(), s, s, args.seed))
            .collect::<fragscan_core::Result<_>>()?,
    };
    if args.posteriors.is_some() && images.len() != 1 {
        bail!("--posteriors needs exactly one image size");
    }
    let runs = usize::from(args.runs);
    writeln!(
        out,
        "median of {runs} runs, threads: {}",
        args.threads.map_or("all".into(), |t| t.to_string())
    )?;
    let mut last_output: Option<DenseOutput<f32>> = None;
    for image in &images {
        let (output, fast) = with_threads(threads(args.threads), || {
            median_time(runs, || Ok(scan_fragment(&net, &weights, image, false)?))
        })?;
        let size = format!("{}x{}", image.width(), image.height());
        if args.skip_naive {
            writeln!(out, "{size}: fragment {:.3} ms", fast.as_secs_f64() * 1e3)?;
        } else {
            let (_, slow) = with_threads(threads(args.threads), || {
                median_time(runs, || Ok(scan_naive(&net, &weights, image, false)?))
            })?;
            writeln!(
                out,
                "{size}: naive {:.3} ms, fragment {:.3} ms, speedup {:.1}x",
                slow.as_secs_f64() * 1e3,
                fast.as_secs_f64() * 1e3,
                slow.as_secs_f64() / fast.as_secs_f64()
            )?;
        }
        last_output = Some(output);
    }
    if let (Some(path), Some(output)) = (&args.posteriors, &last_output) {
        write_file(path, &encode_posteriors(output))?;
    }
    Ok(Status::Ok)
}

fn init(args: &InitWeightsArgs, out: &mut dyn Write) -> Result<Status> {
    let net = load_net(&args.net)?;
    let weights = init_weights::<f32>(&net, args.seed);
    write_file(&args.out, &weights.to_bytes())?;
    writeln!(out, "wrote {} values to {}", weights.value_count(), args.out.display())?;
    Ok(Status::Ok)
}

fn gen_image(args: &GenImageArgs, out: &mut dyn Write) -> Result<Status> {
    ensure!(args.width > 0 && args.height > 0, "image sides must be positive");
    let image = random_image::<f32>(1, args.width, args.height, args.seed)?;
    write_file(&args.out, &encode_pgm(&image.planes()[0]))?;
    writeln!(
        out,
        "wrote {}x{} image to {}",
        args.width,
        args.height,
        args.out.display()
    )?;
    Ok(Status::Ok)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_of_odd_and_even_counts() {
        let ms = Duration::from_millis;
        assert_eq!(median(&mut [ms(5), ms(1), ms(3)]), ms(3));
        assert_eq!(median(&mut [ms(4), ms(1), ms(2), ms(8)]), ms(3));
    }

    #[test]
    fn tolerance_must_be_non_negative() {
        assert_eq!(parse_tolerance("0"), Ok(0.0));
        assert_eq!(parse_tolerance("1e-5"), Ok(1e-5));
        assert!(parse_tolerance("-1e-5").is_err());
        assert!(parse_tolerance("nan").is_err());
        assert!(parse_tolerance("x").is_err());
    }

    #[test]
    fn exit_codes_are_distinct() {
        assert_eq!(Status::Ok.exit_code(), 0);
        assert_eq!(Status::Disagree.exit_code(), 1);
        assert_eq!(EXIT_ERROR, 2);
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
