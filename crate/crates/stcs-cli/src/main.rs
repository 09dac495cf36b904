//! Command-line pipeline around the stcs library: generate measurement
//! matrices, synthesize ground-truth frames, compress, recover, benchmark.
//!
//! Exit codes: 0 success, 2 validation/usage error, 3 numerical failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use stcs::{
    compression_ratio, dct_dictionary, effective_matrix, generate, make_sparse_binary, solve,
    solve_per_channel, somp, AConstraint, ActiveBlocks, BlockPartition, GeneratorSpec,
    MeasurementMatrix, MultichannelFrame, Report, Result, SolverOptions, SompOptions, StcsError,
};

#[derive(Parser)]
#[command(
    name = "stcs",
    version,
    about = "Compressed sensing for multichannel correlated signals",
    propagate_version = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a sparse binary measurement matrix (column weight 2) and
    /// save it as JSON.
    GenMatrix(GenMatrixArgs),
    /// Draw a synthetic block-sparse multichannel frame with known
    /// correlation structure, plus a JSON truth record.
    Synth(SynthArgs),
    /// Compress a frame CSV: Y = Phi X.
    Compress(CompressArgs),
    /// Recover a frame from compressed measurements.
    Recover(RecoverArgs),
    /// Run seeded recovery benchmarks over a compression-ratio sweep.
    Bench(BenchArgs),
}

#[derive(Args)]
struct GenMatrixArgs {
    /// Number of measurement rows.
    #[arg(long)]
    n: usize,
    /// Signal length (columns).
    #[arg(long)]
    m: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    /// Signal length (samples per channel).
    #[arg(long)]
    m: usize,
    #[arg(long, default_value_t = 4)]
    channels: usize,
    /// Block size of the partition; the last block absorbs any remainder.
    #[arg(long, default_value_t = 25)]
    block: usize,
    /// Number of active blocks.
    #[arg(long)]
    active: usize,
    /// AR(1) coefficient of the intra-block correlation.
    #[arg(long, default_value_t = 0.9)]
    temporal_corr: f64,
    /// AR(1) coefficient of the cross-channel correlation.
    #[arg(long, default_value_t = 0.9)]
    spatial_corr: f64,
    #[arg(long, default_value_t = 0.5)]
    gamma_low: f64,
    #[arg(long, default_value_t = 2.0)]
    gamma_high: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Output CSV for the frame.
    #[arg(long)]
    out: PathBuf,
    /// Output JSON for the truth record (default: <out>.truth.json).
    #[arg(long)]
    truth_out: Option<PathBuf>,
}

#[derive(Args)]
struct CompressArgs {
    /// Measurement matrix JSON from gen-matrix.
    #[arg(long)]
    matrix: PathBuf,
    /// Frame CSV to compress.
    #[arg(long)]
    input: PathBuf,
    /// Output CSV for the measurements.
    #[arg(long)]
    out: PathBuf,
    /// Mark the measurements as destined for dictionary-domain recovery.
    #[arg(long)]
    dict: bool,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum Algo {
    /// Joint recovery of all channels with the learned channel coupling.
    Stsbl,
    /// The same solver run on each channel independently.
    StsblPerChannel,
    /// Simultaneous orthogonal matching pursuit.
    Somp,
}

impl Algo {
    fn name(self) -> &'static str {
        match self {
            Algo::Stsbl => "stsbl",
            Algo::StsblPerChannel => "stsbl-per-channel",
            Algo::Somp => "somp",
        }
    }
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum DictMode {
    /// Follow the `dict` hint in the measurement CSV header.
    Auto,
    On,
    Off,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum AMode {
    ToeplitzAr1,
    Free,
}

#[derive(Args)]
struct RecoverArgs {
    /// Measurement matrix JSON from gen-matrix.
    #[arg(long)]
    matrix: PathBuf,
    /// Compressed measurements CSV.
    #[arg(long)]
    input: PathBuf,
    /// Output CSV for the recovered frame.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum)]
    algo: Algo,
    /// Block size of the partition; the last block absorbs any remainder.
    #[arg(long, default_value_t = 25)]
    block: usize,
    /// Recover in the DCT dictionary domain and synthesize back.
    #[arg(long, value_enum, default_value_t = DictMode::Auto)]
    dict: DictMode,
    #[arg(long, default_value_t = 40)]
    max_iterations: usize,
    #[arg(long, default_value_t = 1e-8)]
    tolerance: f64,
    #[arg(long, default_value_t = 1e-10)]
    lambda: f64,
    #[arg(long, default_value_t = 1e-4)]
    prune_gamma: f64,
    /// Intra-block matrix regularization.
    #[arg(long, value_enum, default_value_t = AMode::ToeplitzAr1)]
    a_mode: AMode,
    #[arg(long, default_value_t = 1e-6)]
    b_ridge: f64,
    /// SOMP atom budget (default: half the measurement count).
    #[arg(long)]
    max_atoms: Option<usize>,
    /// SOMP relative residual stopping threshold.
    #[arg(long, default_value_t = 1e-6)]
    residual_tol: f64,
    /// Ground-truth frame CSV; when given the report includes NMSE and
    /// per-channel Pearson correlations.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Report JSON path (default: <out>.report.json).
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// Benchmark configuration JSON.
    #[arg(long)]
    config: PathBuf,
    /// Output CSV table (default: bench_results.csv).
    #[arg(long, default_value = "bench_results.csv")]
    out: PathBuf,
}

#[derive(Serialize)]
struct TruthRecord {
    m: usize,
    channels: usize,
    block_sizes: Vec<usize>,
    active: Vec<usize>,
    gamma: Vec<f64>,
    temporal_corr: f64,
    spatial_corr: f64,
    gamma_low: f64,
    gamma_high: f64,
    seed: u64,
    rng: &'static str,
}

fn default_trials() -> usize {
    5
}
fn default_corr() -> f64 {
    0.9
}
fn default_gamma_low() -> f64 {
    0.5
}
fn default_gamma_high() -> f64 {
    2.0
}
fn default_seed() -> u64 {
    1
}
fn default_max_iterations() -> usize {
    40
}
fn default_operator() -> String {
    "sparse-binary".into()
}

#[derive(Deserialize)]
struct BenchConfig {
    m: usize,
    l: usize,
    block: usize,
    /// Compression ratios to sweep, in percent.
    crs: Vec<f64>,
    #[serde(default = "default_trials")]
    trials: usize,
    algorithms: Vec<String>,
    active_blocks: usize,
    #[serde(default = "default_corr")]
    temporal_corr: f64,
    #[serde(default = "default_corr")]
    spatial_corr: f64,
    #[serde(default = "default_gamma_low")]
    gamma_low: f64,
    #[serde(default = "default_gamma_high")]
    gamma_high: f64,
    #[serde(default = "default_seed")]
    seed: u64,
    #[serde(default = "default_max_iterations")]
    max_iterations: usize,
    /// "sparse-binary" (column-weight-2 ensemble) or "gaussian" (dense,
    /// always full row rank — useful at low compression ratios where
    /// sparse binary matrices lose rank).
    #[serde(default = "default_operator")]
    operator: String,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { 3u8 } else { 2u8 })
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::GenMatrix(args) => cmd_gen_matrix(args),
        Command::Synth(args) => cmd_synth(args),
        Command::Compress(args) => cmd_compress(args),
        Command::Recover(args) => cmd_recover(args),
        Command::Bench(args) => cmd_bench(args),
    }
}

fn cmd_gen_matrix(args: GenMatrixArgs) -> Result<()> {
    let phi = make_sparse_binary(args.n, args.m, args.seed)?;
    phi.save_json(&args.out)?;
    let cr = compression_ratio(args.m, args.n)?;
    println!(
        "wrote {}: {} rows x {} columns (weight 2, seed {}), compression ratio {:.1}%",
        args.out.display(),
        args.n,
        args.m,
        args.seed,
        cr
    );
    Ok(())
}

fn cmd_synth(args: SynthArgs) -> Result<()> {
    let partition = BlockPartition::uniform(args.m, args.block)?;
    let spec = GeneratorSpec {
        partition: partition.clone(),
        n_channels: args.channels,
        active_blocks: ActiveBlocks::Count(args.active),
        temporal_corr: args.temporal_corr,
        spatial_corr: args.spatial_corr,
        gamma_range: (args.gamma_low, args.gamma_high),
        seed: args.seed,
    };
    let (x, truth) = generate(&spec)?;
    x.write_csv(&args.out, &[("seed", args.seed.to_string())])?;
    let truth_path = args
        .truth_out
        .unwrap_or_else(|| derived_path(&args.out, "truth.json"));
    let record = TruthRecord {
        m: args.m,
        channels: args.channels,
        block_sizes: partition.sizes().to_vec(),
        active: truth.active.clone(),
        gamma: truth.gamma.clone(),
        temporal_corr: args.temporal_corr,
        spatial_corr: args.spatial_corr,
        gamma_low: args.gamma_low,
        gamma_high: args.gamma_high,
        seed: args.seed,
        rng: "chacha8",
    };
    std::fs::write(&truth_path, serde_json::to_string_pretty(&record)?)?;
    println!(
        "wrote {} ({}x{}, {} active of {} blocks) and {}",
        args.out.display(),
        args.m,
        args.channels,
        truth.active.len(),
        partition.n_blocks(),
        truth_path.display()
    );
    Ok(())
}

fn cmd_compress(args: CompressArgs) -> Result<()> {
    let phi = MeasurementMatrix::load_json(&args.matrix)?;
    let (x, _) = MultichannelFrame::read_csv(&args.input)?;
    if x.n_samples() != phi.n_cols() {
        return Err(StcsError::DimensionMismatch(format!(
            "matrix {} is {}x{} but frame {} has {} samples",
            args.matrix.display(),
            phi.n_rows(),
            phi.n_cols(),
            args.input.display(),
            x.n_samples()
        )));
    }
    let y = phi.compress(&x)?;
    y.write_csv(
        &args.out,
        &[
            ("source_m", phi.n_cols().to_string()),
            ("matrix_seed", phi.seed().to_string()),
            ("dict", if args.dict { "1" } else { "0" }.to_string()),
        ],
    )?;
    let cr = compression_ratio(phi.n_cols(), phi.n_rows())?;
    println!(
        "compressed {} samples to {} measurements per channel ({} channels, CR {:.1}%) -> {}",
        phi.n_cols(),
        phi.n_rows(),
        y.n_channels(),
        cr,
        args.out.display()
    );
    Ok(())
}

fn cmd_recover(args: RecoverArgs) -> Result<()> {
    let phi = MeasurementMatrix::load_json(&args.matrix)?;
    let (y, header) = MultichannelFrame::read_csv(&args.input)?;
    if y.n_samples() != phi.n_rows() {
        return Err(StcsError::DimensionMismatch(format!(
            "matrix {} has {} rows but measurements {} have {} samples",
            args.matrix.display(),
            phi.n_rows(),
            args.input.display(),
            y.n_samples()
        )));
    }
    let dict_on = match args.dict {
        DictMode::On => true,
        DictMode::Off => false,
        DictMode::Auto => header.get("dict").map(String::as_str) == Some("1"),
    };
    let dictionary = if dict_on {
        Some(dct_dictionary(phi.n_cols())?)
    } else {
        None
    };
    let a_eff = match &dictionary {
        Some(d) => effective_matrix(&phi, d)?,
        None => phi.densify(),
    };
    let partition = BlockPartition::uniform(phi.n_cols(), args.block)?;
    let opts = SolverOptions {
        max_iterations: args.max_iterations,
        tolerance: args.tolerance,
        lambda: args.lambda,
        prune_gamma: args.prune_gamma,
        constrain_a: match args.a_mode {
            AMode::ToeplitzAr1 => AConstraint::ToeplitzAr1,
            AMode::Free => AConstraint::Free,
        },
        b_ridge: args.b_ridge,
    };

    let t0 = Instant::now();
    let (coeffs, iterations) = match args.algo {
        Algo::Stsbl => {
            let r = solve(&y, &a_eff, &partition, &opts)?;
            (r.x_hat, r.iterations)
        }
        Algo::StsblPerChannel => {
            let r = solve_per_channel(&y, &a_eff, &partition, &opts)?;
            (r.x_hat, r.iterations)
        }
        Algo::Somp => {
            let somp_opts = SompOptions {
                max_atoms: args
                    .max_atoms
                    .unwrap_or_else(|| SompOptions::for_measurements(phi.n_rows()).max_atoms),
                residual_tol: args.residual_tol,
            };
            let r = somp(&y, &a_eff, &somp_opts)?;
            if r.rank_deficient {
                eprintln!("warning: selected columns became rank deficient; stopped early");
            }
            (r.x_hat, r.support.len())
        }
    };
    let runtime_seconds = t0.elapsed().as_secs_f64();

    let x_hat = match &dictionary {
        Some(d) => d.synthesize(&coeffs)?,
        None => coeffs,
    };
    x_hat.write_csv(
        &args.out,
        &[
            ("algorithm", args.algo.name().to_string()),
            ("matrix_seed", phi.seed().to_string()),
            ("dict", if dict_on { "1" } else { "0" }.to_string()),
        ],
    )?;

    let mut report = Report {
        algorithm: args.algo.name().to_string(),
        seed: phi.seed(),
        nmse: None,
        pearson_per_channel: Vec::new(),
        pearson_mean: None,
        compression_ratio_pct: compression_ratio(phi.n_cols(), phi.n_rows())?,
        runtime_seconds,
        iterations,
    };
    if let Some(truth_path) = &args.truth {
        let (x_true, _) = MultichannelFrame::read_csv(truth_path)?;
        report.score_against(&x_hat, &x_true)?;
    }
    let report_path = args
        .report
        .unwrap_or_else(|| derived_path(&args.out, "report.json"));
    std::fs::write(&report_path, serde_json::to_string_pretty(&report)?)?;

    let score = match report.nmse {
        Some(v) => format!(", NMSE {v:.3e}"),
        None => String::new(),
    };
    println!(
        "recovered {}x{} frame with {} in {:.2}s ({} iterations{}) -> {} (report {})",
        x_hat.n_samples(),
        x_hat.n_channels(),
        args.algo.name(),
        runtime_seconds,
        iterations,
        score,
        args.out.display(),
        report_path.display()
    );
    Ok(())
}

struct TrialOutcome {
    algorithm: String,
    cr: f64,
    n: usize,
    runtime: f64,
    nmse: Option<f64>,
    error: Option<String>,
}

fn bench_trial(
    config: &BenchConfig,
    partition: &BlockPartition,
    cr: f64,
    n: usize,
    signal_seed: u64,
    matrix_seed: u64,
) -> Vec<TrialOutcome> {
    let outcome = |algorithm: &str, runtime, nmse, error| TrialOutcome {
        algorithm: algorithm.to_string(),
        cr,
        n,
        runtime,
        nmse,
        error,
    };
    let spec = GeneratorSpec {
        partition: partition.clone(),
        n_channels: config.l,
        active_blocks: ActiveBlocks::Count(config.active_blocks),
        temporal_corr: config.temporal_corr,
        spatial_corr: config.spatial_corr,
        gamma_range: (config.gamma_low, config.gamma_high),
        seed: signal_seed,
    };
    let setup = (|| -> Result<(MultichannelFrame, nalgebra::DMatrix<f64>, MultichannelFrame)> {
        let (x, _) = generate(&spec)?;
        let a_eff = match config.operator.as_str() {
            "sparse-binary" => make_sparse_binary(n, config.m, matrix_seed)?.densify(),
            "gaussian" => {
                use rand::{Rng, SeedableRng};
                let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(matrix_seed);
                nalgebra::DMatrix::from_fn(n, config.m, |_, _| rng.gen_range(-1.0..1.0))
            }
            other => {
                return Err(StcsError::InvalidValue(format!(
                    "unknown operator '{other}' (expected sparse-binary or gaussian)"
                )))
            }
        };
        let y = MultichannelFrame::new(&a_eff * x.values())?;
        Ok((x, a_eff, y))
    })();
    let (x, a_eff, y) = match setup {
        Ok(v) => v,
        Err(e) => {
            return config
                .algorithms
                .iter()
                .map(|a| outcome(a, 0.0, None, Some(e.to_string())))
                .collect()
        }
    };
    let opts = SolverOptions {
        max_iterations: config.max_iterations,
        ..SolverOptions::default()
    };
    config
        .algorithms
        .iter()
        .map(|algorithm| {
            let t0 = Instant::now();
            let recovered = match algorithm.as_str() {
                "stsbl" => solve(&y, &a_eff, partition, &opts).map(|r| r.x_hat),
                "stsbl-per-channel" => {
                    solve_per_channel(&y, &a_eff, partition, &opts).map(|r| r.x_hat)
                }
                "somp" => somp(&y, &a_eff, &SompOptions::for_measurements(n)).map(|r| r.x_hat),
                other => Err(StcsError::InvalidValue(format!(
                    "unknown algorithm '{other}'"
                ))),
            };
            let runtime = t0.elapsed().as_secs_f64();
            match recovered.and_then(|x_hat| stcs::nmse(&x_hat, &x)) {
                Ok(v) => outcome(algorithm, runtime, Some(v), None),
                Err(e) => outcome(algorithm, runtime, None, Some(e.to_string())),
            }
        })
        .collect()
}

fn cmd_bench(args: BenchArgs) -> Result<()> {
    let config: BenchConfig = serde_json::from_str(&std::fs::read_to_string(&args.config)?)?;
    if config.crs.is_empty() || config.algorithms.is_empty() || config.trials == 0 {
        return Err(StcsError::InvalidValue(
            "bench config needs at least one compression ratio, one algorithm, one trial".into(),
        ));
    }
    for algorithm in &config.algorithms {
        if !["stsbl", "stsbl-per-channel", "somp"].contains(&algorithm.as_str()) {
            return Err(StcsError::InvalidValue(format!(
                "unknown algorithm '{algorithm}'"
            )));
        }
    }
    let partition = BlockPartition::uniform(config.m, config.block)?;
    let mut tasks = Vec::new();
    for (ci, &cr) in config.crs.iter().enumerate() {
        if !(0.0..100.0).contains(&cr) {
            return Err(StcsError::InvalidValue(format!(
                "compression ratio {cr} outside [0, 100)"
            )));
        }
        let n = ((config.m as f64) * (1.0 - cr / 100.0)).round() as usize;
        if n == 0 {
            return Err(StcsError::InvalidValue(format!(
                "compression ratio {cr} leaves no measurements at m = {}",
                config.m
            )));
        }
        for trial in 0..config.trials {
            let signal_seed = config
                .seed
                .wrapping_mul(1_000_000)
                .wrapping_add((ci * config.trials + trial) as u64);
            tasks.push((cr, n, signal_seed, signal_seed.wrapping_add(500_000)));
        }
    }

    let threads = match std::env::var("STCS_THREADS") {
        Ok(v) => v.parse::<usize>().map_err(|_| {
            StcsError::InvalidValue(format!(
                "STCS_THREADS must be a positive integer, got '{v}'"
            ))
        })?,
        Err(_) => 0, // rayon default
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| StcsError::InvalidValue(format!("thread pool: {e}")))?;
    use rayon::prelude::*;
    let outcomes: Vec<TrialOutcome> = pool.install(|| {
        tasks
            .par_iter()
            .flat_map(|&(cr, n, signal_seed, matrix_seed)| {
                bench_trial(&config, &partition, cr, n, signal_seed, matrix_seed)
            })
            .collect()
    });

    for o in outcomes.iter().filter(|o| o.error.is_some()) {
        eprintln!(
            "trial failed ({}, CR {:.1}%): {}",
            o.algorithm,
            o.cr,
            o.error.as_deref().unwrap_or("")
        );
    }

    let mut table =
        String::from("algorithm,cr_pct,n,trials,failures,mean_runtime_seconds,mean_nmse\n");
    for algorithm in &config.algorithms {
        for &cr in &config.crs {
            let group: Vec<&TrialOutcome> = outcomes
                .iter()
                .filter(|o| &o.algorithm == algorithm && o.cr == cr)
                .collect();
            let n = group.first().map_or(0, |o| o.n);
            let ok: Vec<&&TrialOutcome> = group.iter().filter(|o| o.error.is_none()).collect();
            let failures = group.len() - ok.len();
            let (runtime, nmse) = if ok.is_empty() {
                (String::new(), String::new())
            } else {
                let mean_rt = ok.iter().map(|o| o.runtime).sum::<f64>() / ok.len() as f64;
                let mean_nmse = ok.iter().filter_map(|o| o.nmse).sum::<f64>() / ok.len() as f64;
                (format!("{mean_rt:.6}"), format!("{mean_nmse:.6e}"))
            };
            table.push_str(&format!(
                "{algorithm},{cr},{n},{},{failures},{runtime},{nmse}\n",
                group.len()
            ));
        }
    }
    std::fs::write(&args.out, &table)?;
    print!("{table}");
    println!("wrote {}", args.out.display());
    Ok(())
}

/// "x.csv" -> "x.<suffix>" next to the original.
fn derived_path(base: &Path, suffix: &str) -> PathBuf {
    base.with_extension(suffix)
}
