//! Command-line front end. `main.rs` only forwards to [`main_with_args`].

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::mdc::ComplexSample;
use crate::oracle::{fft_radix2, probe_signal, random_signal, recover_output_order, unscramble};
use crate::processor::{run_with, sigma3_table, Mode, PlanConfig, RunOptions, RunOutput};
use crate::{Error, Result};

pub const EXIT_OK: i32 = 0;
pub const EXIT_MISMATCH: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_INVARIANT: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "hyfft", version, about = "Cycle-level simulator of a hybrid MDC FFT processor")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate one or more transforms and write the spectrum.
    Run(RunArgs),
    /// Simulate and check against the reference FFT and the planned output order.
    Verify(VerifyArgs),
    /// Print the stage permutation tables for every residue of n mod k.
    Tables(TableArgs),
}

#[derive(Debug, Args)]
pub struct SimArgs {
    /// Transform length N (a power of two).
    #[arg(long = "n")]
    pub len: u64,
    /// Maximum MDC radix exponent.
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    #[arg(long, default_value = "pipeline")]
    pub mode: Mode,
    #[arg(long, default_value_t = 1)]
    pub parallelism: usize,
    /// Use a seeded random input instead of --input.
    #[arg(long, conflicts_with = "input")]
    pub random: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Input samples: `.csv` holds `re,im` lines, anything else little-endian f64 pairs.
    /// Several consecutive transforms may be given.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Allow memory mode for 2^k < N <= 2^2k.
    #[arg(long)]
    pub extended_range: bool,
    /// JSON run report.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// NDJSON memory access trace.
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub sim: SimArgs,
    /// Spectrum output, same formats as --input. Natural frequency order unless --raw.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Keep the hardware output order.
    #[arg(long)]
    pub raw: bool,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub sim: SimArgs,
    /// Largest accepted absolute error.
    #[arg(long, default_value_t = 1e-9)]
    pub tolerance: f64,
}

#[derive(Debug, Args)]
pub struct TableArgs {
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    #[arg(long, default_value_t = 1)]
    pub parallelism: usize,
    #[arg(long, default_value_t = 1)]
    pub stage: usize,
}

/// Exit code for an error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Numeric { .. } | Error::OrderMismatch(_) | Error::NeedsNewProbe(_) => EXIT_MISMATCH,
        Error::Domain(_) | Error::ModeUnsupported { .. } | Error::Config(_) | Error::SearchFailure { .. } => {
            EXIT_CONFIG
        }
        Error::Io(_) => EXIT_IO,
        Error::Conflict { .. } | Error::Internal(_) => EXIT_INVARIANT,
    }
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    let mut stdout = std::io::stdout().lock();
    match execute(&cli, &mut stdout) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("hyfft: {e}");
            exit_code(&e)
        }
    }
}

/// Runs a parsed command, writing the human-readable summary to `out`.
pub fn execute(cli: &Cli, out: &mut dyn Write) -> Result<()> {
    match &cli.command {
        Command::Run(a) => cmd_run(a, out),
        Command::Verify(a) => cmd_verify(a, out),
        Command::Tables(a) => cmd_tables(a, out),
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Io(format!("{}: {e}", path.display()))
}

fn is_csv(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

/// Reads samples from a CSV (`re,im` per line) or raw little-endian f64 file.
pub fn read_samples(path: &Path) -> Result<Vec<ComplexSample>> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    if is_csv(path) {
        let mut out = Vec::new();
        for (no, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| io_err(path, e))?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = || io_err(path, format!("line {}: expected `re,im`", no + 1));
            let (re, im) = line.split_once(',').ok_or_else(bad)?;
            let re: f64 = re.trim().parse().map_err(|_| bad())?;
            let im: f64 = im.trim().parse().map_err(|_| bad())?;
            out.push(ComplexSample::new(re, im));
        }
        Ok(out)
    } else {
        let mut bytes = Vec::new();
        BufReader::new(file).read_to_end(&mut bytes).map_err(|e| io_err(path, e))?;
        if bytes.len() % 16 != 0 {
            return Err(io_err(path, "length is not a multiple of 16 bytes"));
        }
        Ok(bytes
            .chunks_exact(16)
            .map(|c| {
                let re = f64::from_le_bytes(c[..8].try_into().unwrap());
                let im = f64::from_le_bytes(c[8..].try_into().unwrap());
                ComplexSample::new(re, im)
            })
            .collect())
    }
}

/// Writes samples in the format selected by the extension of `path`.
pub fn write_samples(path: &Path, samples: &[ComplexSample]) -> Result<()> {
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    let res = if is_csv(path) {
        samples.iter().try_for_each(|s| writeln!(w, "{:e},{:e}", s.re, s.im))
    } else {
        samples.iter().try_for_each(|s| {
            w.write_all(&s.re.to_le_bytes())?;
            w.write_all(&s.im.to_le_bytes())
        })
    };
    res.and_then(|_| w.flush()).map_err(|e| io_err(path, e))
}

fn config_of(a: &SimArgs) -> Result<PlanConfig> {
    let cfg = PlanConfig::new(a.len, a.k, a.parallelism, a.mode).with_extended_range(a.extended_range);
    cfg.validate()?;
    Ok(cfg)
}

fn inputs_of(a: &SimArgs, cfg: &PlanConfig) -> Result<Vec<Vec<ComplexSample>>> {
    let len = cfg.len as usize;
    match &a.input {
        Some(path) => {
            let samples = read_samples(path)?;
            if samples.is_empty() || samples.len() % len != 0 {
                return Err(Error::Config(format!(
                    "{}: {} samples is not a positive multiple of N = {len}",
                    path.display(),
                    samples.len()
                )));
            }
            Ok(samples.chunks(len).map(<[_]>::to_vec).collect())
        }
        None if a.random => Ok(vec![random_signal(len, a.seed)]),
        None => Err(Error::Config("either --input or --random is required".into())),
    }
}

fn simulate(a: &SimArgs) -> Result<(PlanConfig, Vec<Vec<ComplexSample>>, RunOutput)> {
    let cfg = config_of(a)?;
    let inputs = inputs_of(a, &cfg)?;
    let opts = RunOptions {
        trace: a.trace.is_some(),
        ..Default::default()
    };
    let result = run_with(&cfg, &inputs, &opts)?;
    if let (Some(path), Some(trace)) = (&a.trace, &result.trace) {
        let file = File::create(path).map_err(|e| io_err(path, e))?;
        let mut w = BufWriter::new(file);
        trace
            .write_ndjson(&mut w)
            .and_then(|_| w.flush())
            .map_err(|e| io_err(path, e))?;
    }
    if let Some(path) = &a.report {
        let json = serde_json::to_string_pretty(&result.report).map_err(|e| Error::Internal(e.to_string()))?;
        std::fs::write(path, json + "\n").map_err(|e| io_err(path, e))?;
    }
    Ok((cfg, inputs, result))
}

fn summary(out: &mut dyn Write, r: &RunOutput) -> Result<()> {
    let rep = &r.report;
    let text = format!(
        "N = 2^{} mode {} P = {} radices {:?}\niterations {} cycles model {} observed {} conflicts {}\nutilization {:.4} max |error| {:.3e}\n",
        rep.n,
        rep.mode,
        rep.parallelism,
        rep.radices,
        rep.iterations,
        rep.cycles_model,
        rep.cycles_observed,
        rep.conflicts,
        rep.utilization,
        rep.max_abs_error
    );
    out.write_all(text.as_bytes()).map_err(|e| Error::Io(e.to_string()))
}

fn cmd_run(a: &RunArgs, out: &mut dyn Write) -> Result<()> {
    let (_, _, result) = simulate(&a.sim)?;
    summary(out, &result)?;
    if let Some(path) = &a.output {
        let mut all = Vec::new();
        for raw in &result.outputs {
            if a.raw {
                all.extend_from_slice(raw);
            } else {
                all.extend(unscramble(raw, &result.plan.output_permutation)?);
            }
        }
        write_samples(path, &all)?;
    }
    Ok(())
}

fn cmd_verify(a: &VerifyArgs, out: &mut dyn Write) -> Result<()> {
    if a.tolerance.is_nan() || a.tolerance < 0.0 {
        return Err(Error::Config(format!("tolerance {} must be non-negative", a.tolerance)));
    }
    let (cfg, inputs, result) = simulate(&a.sim)?;
    summary(out, &result)?;
    if result.report.conflicts > 0 {
        return Err(Error::Internal(format!("{} bank conflicts", result.report.conflicts)));
    }
    if result.report.max_abs_error > a.tolerance {
        let mut worst = (0usize, 0.0f64);
        for (raw, x) in result.outputs.iter().zip(&inputs) {
            let natural = unscramble(raw, &result.plan.output_permutation)?;
            for (i, (y, r)) in natural.iter().zip(fft_radix2(x)?).enumerate() {
                let e = (y - r).norm();
                if e > worst.1 {
                    worst = (i, e);
                }
            }
        }
        return Err(Error::Numeric {
            index: worst.0,
            error: worst.1.max(result.report.max_abs_error),
            tolerance: a.tolerance,
        });
    }
    let probe = probe_signal(cfg.len as usize, a.sim.seed);
    let probed = run_with(&cfg, std::slice::from_ref(&probe), &RunOptions::default())?;
    let found = recover_output_order(&probed.outputs[0], &fft_radix2(&probe)?)?;
    if found != result.plan.output_permutation {
        return Err(Error::OrderMismatch(format!(
            "probe gives {found:?}, plan gives {:?}",
            result.plan.output_permutation
        )));
    }
    writeln!(out, "PASS: error within {:e}, output order {:?}", a.tolerance, found.map())
        .map_err(|e| Error::Io(e.to_string()))
}

fn cmd_tables(a: &TableArgs, out: &mut dyn Write) -> Result<()> {
    let rows = sigma3_table(a.k, a.parallelism, a.stage)?;
    let mut text = format!("k = {} P = {} stage {}\n", a.k, a.parallelism, a.stage);
    for (residue, n, steps) in rows {
        let list: Vec<String> = steps.iter().map(ToString::to_string).collect();
        let body = if list.is_empty() { "-".to_string() } else { list.join(" ") };
        text.push_str(&format!("n mod {} = {residue} (n = {n}): {body}\n", a.k));
    }
    out.write_all(text.as_bytes()).map_err(|e| Error::Io(e.to_string()))
}
