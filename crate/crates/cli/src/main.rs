use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use qwsnm::io::{read_image, read_png, write_float, write_png};
use qwsnm::{
    default_deblur_config, default_denoise_config, evaluate, restore, BlurKind, BlurOperator, DegradationModel,
    PureQImage, SolverConfig,
};

#[derive(Parser)]
#[command(name = "qwsnm", version, about = "Quaternion weighted Schatten p-norm color image restoration")]
struct Cli {
    /// Worker threads; outputs are identical for any count.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Blur a clean image and add Gaussian noise.
    Degrade(DegradeArgs),
    /// Remove Gaussian noise.
    Denoise(DenoiseArgs),
    /// Remove blur and noise.
    Deblur(DeblurArgs),
    /// Degrade and restore a set of clean images, reporting PSNR/SSIM as CSV.
    Bench(BenchArgs),
}

#[derive(Args)]
struct DegradeArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// identity, uniform:S, gaussian:S:STD or motion:LEN:ANGLE.
    #[arg(long, default_value = "identity")]
    kernel: String,
    /// Noise standard deviation on the [0, 255] scale.
    #[arg(long)]
    sigma: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also write the unquantized result as a float image.
    #[arg(long)]
    save_float: Option<PathBuf>,
}

/// Overrides applied after the defaults and the `--config` file.
#[derive(Args, Default)]
struct SolverArgs {
    /// `key = value` file; keys as printed in bench headers.
    #[arg(long)]
    config: Option<PathBuf>,
    /// wsnm or wnnm.
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    beta0: Option<f64>,
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long)]
    gst_iters: Option<usize>,
    #[arg(long)]
    patch_size: Option<usize>,
    #[arg(long)]
    group_size: Option<usize>,
    #[arg(long)]
    window: Option<usize>,
    #[arg(long)]
    stride: Option<usize>,
    #[arg(long)]
    c: Option<f64>,
    #[arg(long)]
    eps: Option<f64>,
    /// Scale the weight constant by the square root of the group size.
    #[arg(long)]
    weight_sqrt_m: bool,
    /// Estimate clean singular values for the weights with this noise level.
    #[arg(long)]
    noise_compensation: Option<f64>,
    /// Early-stop threshold on the relative change of X, or `none`.
    #[arg(long)]
    tol: Option<String>,
    /// Internal intensity divisor.
    #[arg(long)]
    intensity_scale: Option<f64>,
}

#[derive(Args)]
struct OutputArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Clean reference; enables PSNR/SSIM reporting and the trace PSNR column.
    #[arg(long)]
    clean: Option<PathBuf>,
    /// Write the per-iteration convergence trace as CSV.
    #[arg(long)]
    trace: Option<PathBuf>,
    #[arg(long)]
    save_float: Option<PathBuf>,
    /// Leave the seconds column empty so the trace depends only on inputs.
    #[arg(long)]
    no_timing: bool,
}

#[derive(Args)]
struct DenoiseArgs {
    #[command(flatten)]
    io: OutputArgs,
    /// Noise level; selects the default schedule.
    #[arg(long)]
    sigma: f64,
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    solver: SolverArgs,
}

#[derive(Args)]
struct DeblurArgs {
    #[command(flatten)]
    io: OutputArgs,
    #[arg(long)]
    kernel: String,
    /// Noise level, recorded only.
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    solver: SolverArgs,
}

#[derive(Args)]
struct BenchArgs {
    /// Clean images.
    #[arg(long, required = true, num_args = 1..)]
    clean: Vec<PathBuf>,
    #[arg(long, default_value = "identity")]
    kernel: String,
    #[arg(long)]
    sigma: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output file; stdout if omitted.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Comma-separated powers to run in turn, e.g. 0.5,0.75,1.
    #[arg(long, value_delimiter = ',')]
    sweep_p: Vec<f64>,
    #[arg(long)]
    no_timing: bool,
    #[command(flatten)]
    solver: SolverArgs,
}

fn apply_config_text(cfg: &mut SolverConfig, text: &str) -> Result<()> {
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').with_context(|| format!("line {}: expected `key = value`", n + 1))?;
        cfg.set(k, v).with_context(|| format!("line {}", n + 1))?;
    }
    Ok(())
}

impl SolverArgs {
    fn apply(&self, cfg: &mut SolverConfig) -> Result<()> {
        if let Some(path) = &self.config {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            apply_config_text(cfg, &text).with_context(|| format!("in {}", path.display()))?;
        }
        let flags = [
            ("mode", self.mode.clone()),
            ("p", self.p.map(|v| v.to_string())),
            ("lambda", self.lambda.map(|v| v.to_string())),
            ("beta0", self.beta0.map(|v| v.to_string())),
            ("mu", self.mu.map(|v| v.to_string())),
            ("iters", self.iters.map(|v| v.to_string())),
            ("gst_iters", self.gst_iters.map(|v| v.to_string())),
            ("patch_size", self.patch_size.map(|v| v.to_string())),
            ("group_size", self.group_size.map(|v| v.to_string())),
            ("window", self.window.map(|v| v.to_string())),
            ("stride", self.stride.map(|v| v.to_string())),
            ("c", self.c.map(|v| v.to_string())),
            ("eps", self.eps.map(|v| v.to_string())),
            ("weight_sqrt_m", self.weight_sqrt_m.then(|| "true".to_string())),
            ("noise_compensation", self.noise_compensation.map(|v| v.to_string())),
            ("tol", self.tol.clone()),
            ("intensity_scale", self.intensity_scale.map(|v| v.to_string())),
        ];
        for (k, v) in flags {
            if let Some(v) = v {
                cfg.set(k, &v).with_context(|| format!("--{}", k.replace('_', "-")))?;
            }
        }
        cfg.validate()?;
        Ok(())
    }
}

fn base_config(kernel: &str, sigma: f64) -> Result<SolverConfig> {
    Ok(match BlurKind::from_spec(kernel)? {
        None => default_denoise_config(sigma)?,
        Some(kind) => default_deblur_config(kind),
    })
}

fn save(img: &PureQImage, out: &Path, float: Option<&Path>) -> Result<()> {
    write_png(out, img).with_context(|| format!("writing {}", out.display()))?;
    if let Some(f) = float {
        write_float(f, img).with_context(|| format!("writing {}", f.display()))?;
    }
    Ok(())
}

fn degrade(a: &DegradeArgs) -> Result<()> {
    let clean = read_image(&a.input).with_context(|| format!("reading {}", a.input.display()))?;
    let model = DegradationModel::new(a.kernel.parse()?, a.sigma, a.seed)?;
    let y = model.apply(&clean)?;
    save(&y, &a.out, a.save_float.as_deref())?;
    let r = evaluate(&clean, &y)?;
    println!("degraded: PSNR {:.4} dB, SSIM {:.4}", r.psnr, r.ssim);
    Ok(())
}

fn run_restore(io: &OutputArgs, blur: BlurOperator, cfg: &SolverConfig) -> Result<()> {
    let y = read_image(&io.input).with_context(|| format!("reading {}", io.input.display()))?;
    let clean = match &io.clean {
        Some(p) => Some(read_image(p).with_context(|| format!("reading {}", p.display()))?),
        None => None,
    };
    for (k, v) in cfg.describe() {
        log::info!("{k} = {v}");
    }
    let model = DegradationModel::new(blur, 0.0, cfg.seed)?;
    let start = Instant::now();
    let (x, trace) = restore(&y, &model, cfg, clean.as_ref())?;
    let secs = start.elapsed().as_secs_f64();
    save(&x, &io.out, io.save_float.as_deref())?;
    if let Some(path) = &io.trace {
        let f = fs::File::create(path).with_context(|| format!("writing {}", path.display()))?;
        trace.write_csv(io::BufWriter::new(f), !io.no_timing)?;
    }
    println!("{} iterations in {secs:.2} s", trace.len());
    if let Some(c) = &clean {
        let (a, b) = (evaluate(c, &y)?, evaluate(c, &x)?);
        println!("input:    PSNR {:.4} dB, SSIM {:.4}", a.psnr, a.ssim);
        println!("restored: PSNR {:.4} dB, SSIM {:.4}", b.psnr, b.ssim);
    }
    Ok(())
}

fn denoise(a: &DenoiseArgs) -> Result<()> {
    let mut cfg = default_denoise_config(a.sigma)?;
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    a.solver.apply(&mut cfg)?;
    run_restore(&a.io, BlurOperator::Identity, &cfg)
}

fn deblur(a: &DeblurArgs) -> Result<()> {
    let kind = BlurKind::from_spec(&a.kernel)?
        .context("deblur needs a blur kernel; use `denoise` for pure noise")?;
    let blur: BlurOperator = a.kernel.parse()?;
    let mut cfg = default_deblur_config(kind);
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(s) = a.sigma {
        log::info!("noise level = {s}");
    }
    a.solver.apply(&mut cfg)?;
    run_restore(&a.io, blur, &cfg)
}

struct BenchRow {
    image: String,
    scenario: String,
    values: [f64; 4],
    seconds: f64,
}

fn bench_rows(a: &BenchArgs, cfg: &SolverConfig) -> Result<Vec<BenchRow>> {
    let model = DegradationModel::new(a.kernel.parse()?, a.sigma, a.seed)?;
    let powers = if a.sweep_p.is_empty() { vec![cfg.p] } else { a.sweep_p.clone() };
    let images = a
        .clean
        .iter()
        .map(|p| Ok((p, read_png(p).with_context(|| format!("reading {}", p.display()))?)))
        .collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::new();
    for &p in &powers {
        let run_cfg = SolverConfig { p, ..cfg.clone() };
        run_cfg.validate()?;
        let scenario = format!("{}/sigma={}/{}/p={}", a.kernel, a.sigma, run_cfg.mode, p);
        let mut group = Vec::new();
        for (path, clean) in &images {
            let y = model.apply(clean)?;
            let start = Instant::now();
            let (x, _) = restore(&y, &model, &run_cfg, None)?;
            let seconds = start.elapsed().as_secs_f64();
            let (before, after) = (evaluate(clean, &y)?, evaluate(clean, &x)?);
            let image = path.file_name().map_or_else(|| path.display().to_string(), |f| f.to_string_lossy().into());
            log::info!("{image} {scenario}: {:.4} -> {:.4} dB", before.psnr, after.psnr);
            group.push(BenchRow {
                image,
                scenario: scenario.clone(),
                values: [before.psnr, before.ssim, after.psnr, after.ssim],
                seconds,
            });
        }
        let n = group.len() as f64;
        let mut mean = [0.0; 4];
        for r in &group {
            for (m, v) in mean.iter_mut().zip(r.values) {
                *m += v / n;
            }
        }
        let seconds = group.iter().map(|r| r.seconds).sum::<f64>() / n;
        rows.extend(group);
        rows.push(BenchRow {
            image: "Average".into(),
            scenario,
            values: mean,
            seconds,
        });
    }
    Ok(rows)
}

fn write_bench(out: &mut dyn Write, a: &BenchArgs, cfg: &SolverConfig, rows: &[BenchRow]) -> Result<()> {
    writeln!(out, "# kernel = {}", a.kernel)?;
    writeln!(out, "# sigma = {}", a.sigma)?;
    writeln!(out, "# noise_seed = {}", a.seed)?;
    for (k, v) in cfg.describe() {
        writeln!(out, "# {k} = {v}")?;
    }
    writeln!(out, "image,scenario,psnr_in,ssim_in,psnr_out,ssim_out,seconds")?;
    for r in rows {
        let [pi, si, po, so] = r.values;
        let secs = if a.no_timing { String::new() } else { format!("{:.3}", r.seconds) };
        writeln!(out, "{},{},{pi:.4},{si:.4},{po:.4},{so:.4},{secs}", r.image, r.scenario)?;
    }
    Ok(())
}

fn bench(a: &BenchArgs) -> Result<()> {
    let mut cfg = base_config(&a.kernel, a.sigma)?;
    a.solver.apply(&mut cfg)?;
    let rows = bench_rows(a, &cfg)?;
    match &a.csv {
        Some(path) => {
            let f = fs::File::create(path).with_context(|| format!("writing {}", path.display()))?;
            let mut w = io::BufWriter::new(f);
            write_bench(&mut w, a, &cfg, &rows)?;
            w.flush()?;
        }
        None => write_bench(&mut io::stdout().lock(), a, &cfg, &rows)?,
    }
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    match &cli.command {
        Command::Degrade(a) => degrade(a),
        Command::Denoise(a) => denoise(a),
        Command::Deblur(a) => deblur(a),
        Command::Bench(a) => bench(a),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_text_overrides_defaults() {
        let mut cfg = default_denoise_config(25.0).unwrap();
        apply_config_text(&mut cfg, "# comment\n\nmode = wnnm\n beta0=0.75 \npatch_size = 6\n").unwrap();
        assert_eq!(cfg.mode.to_string(), "wnnm");
        assert_eq!(cfg.beta0, 0.75);
        assert_eq!((cfg.patch.patch_size, cfg.patch.stride), (6, 3));
        assert!(apply_config_text(&mut cfg, "beta0 0.5").is_err());
        assert!(apply_config_text(&mut cfg, "gamma = 1").is_err());
    }

    #[test]
    fn flags_override_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg.txt");
        fs::write(&path, "lambda = 3\nmu = 1.2\n").unwrap();
        let args = SolverArgs {
            config: Some(path),
            lambda: Some(7.0),
            tol: Some("none".into()),
            ..Default::default()
        };
        let mut cfg = default_deblur_config(BlurKind::Gaussian);
        args.apply(&mut cfg).unwrap();
        assert_eq!((cfg.lambda, cfg.mu, cfg.tol), (7.0, 1.2, None));
        let bad = SolverArgs { mu: Some(0.9), ..Default::default() };
        assert!(bad.apply(&mut cfg).is_err());
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
