use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use strength_init::data::{load_standard, DataSplits, DatasetKind};
use strength_init::experiment::{
    load_population, plot_export, render_report, resolve_data_dir, run_manifest, run_population,
    ExperimentManifest, ReportFormat, DATA_ENV,
};
use strength_init::matrix_io::{load_csv, save_csv, ConvTensor};
use strength_init::mlp::MlpArch;
use strength_init::rewiring::{loglog_slope, rewire_cost_probe};
use strength_init::stats::{compare, DEFAULT_ALPHA};
use strength_init::strength::{max_strength_scaling, sweep_to_csv, SweepConfig};
use strength_init::train::{split_stream, RewireMode, TrainConfig};
use strength_init::{
    conv_to_2d, init, load_matrix, pa_rewire, pa_rewire_conv, save_matrix, strength_stats,
    variance_search, Error, InitMethod, InitSpec, PassMode, Result, RngStream, SearchMode, Side,
    StreamPurpose, WeightMatrix,
};

#[derive(Parser)]
#[command(
    name = "strength-init",
    version,
    about = "Strength analysis and PA rewiring of initial weights"
)]
struct Cli {
    /// Worker threads for repetitions and sweeps (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Copy)]
struct StreamArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0)]
    layer: u32,
    #[arg(long, default_value_t = 0)]
    rep: u32,
}

#[derive(Subcommand)]
enum Command {
    /// Sample an initial weight matrix.
    Init {
        #[arg(long)]
        method: InitMethod,
        #[arg(long)]
        rows: usize,
        #[arg(long)]
        cols: usize,
        #[arg(long, default_value_t = 1.0)]
        gain: f64,
        /// Keep the best of --candidates samples by input-strength variance.
        #[arg(long, value_parser = parse_search)]
        search: Option<SearchMode>,
        #[arg(long, default_value_t = 50)]
        candidates: usize,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        stream: StreamArgs,
    },
    /// Preferential-attachment rewiring of a stored matrix.
    Rewire {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "bidirectional")]
        passes: PassMode,
        /// Treat the payload as a w,h,z,o convolution kernel.
        #[arg(long, value_parser = parse_conv)]
        conv: Option<[usize; 4]>,
        #[command(flatten)]
        stream: StreamArgs,
    },
    /// Strength statistics of a stored matrix.
    Analyze {
        #[arg(long = "in", required_unless_present = "sweep")]
        input: Option<PathBuf>,
        #[arg(long, default_value = "input")]
        side: Side,
        #[arg(long)]
        json: bool,
        /// Emit the max-strength scaling table instead.
        #[arg(long)]
        sweep: bool,
        #[command(flatten)]
        sweep_args: SweepArgs,
        #[command(flatten)]
        stream: StreamArgs,
    },
    /// Train MLP repetitions and write per-run metrics.
    Train {
        #[arg(long, value_parser = parse_arch)]
        arch: MlpArch,
        #[arg(long, default_value = "mnist")]
        dataset: DatasetKind,
        #[arg(long, env = DATA_ENV)]
        data_dir: Option<PathBuf>,
        #[arg(long)]
        init: InitMethod,
        #[arg(long, default_value = "none")]
        rewire: RewireMode,
        #[arg(long, default_value_t = 1)]
        reps: u32,
        #[arg(long, default_value_t = 100)]
        epochs: usize,
        #[arg(long, default_value_t = 128)]
        batch_size: usize,
        #[arg(long, default_value_t = 0.01)]
        lr: f64,
        #[arg(long, default_value_t = 0.9)]
        momentum: f64,
        #[arg(long)]
        no_grad_log: bool,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        stream: StreamArgs,
    },
    /// Compare two run populations.
    Compare {
        #[arg(long)]
        baseline: PathBuf,
        #[arg(long)]
        treatment: PathBuf,
        #[arg(long, default_value_t = DEFAULT_ALPHA)]
        alpha: f64,
        #[arg(long, default_value = "md")]
        format: ReportFormat,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        stream: StreamArgs,
    },
    /// Max |strength| against layer size.
    Sweep {
        #[command(flatten)]
        sweep_args: SweepArgs,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        stream: StreamArgs,
    },
    /// Time bidirectional rewiring against layer size.
    Cost {
        #[arg(long, value_delimiter = ',', default_value = "256,512,1024,2048,4096")]
        sizes: Vec<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        stream: StreamArgs,
    },
    /// Execute an experiment manifest.
    Run {
        manifest: PathBuf,
        #[arg(long, env = DATA_ENV)]
        data_dir: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        stream: StreamArgs,
    },
    /// Mean/std curve CSVs for a run directory.
    Export {
        runs: PathBuf,
        #[command(flatten)]
        stream: StreamArgs,
    },
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long, default_value = "kaiming-uniform")]
    method: InitMethod,
    #[arg(long, value_delimiter = ',', default_value = "64,256,1024,4096")]
    sizes: Vec<usize>,
    #[arg(long, default_value_t = 100)]
    trials: usize,
    /// Skip the rewired columns.
    #[arg(long)]
    no_rewire: bool,
}

fn parse_search(s: &str) -> std::result::Result<SearchMode, String> {
    match s {
        "min" => Ok(SearchMode::Min),
        "max" => Ok(SearchMode::Max),
        _ => Err(format!("expected min or max, got {s:?}")),
    }
}

fn parse_conv(s: &str) -> std::result::Result<[usize; 4], String> {
    let dims: Vec<usize> = s
        .split(',')
        .map(|p| p.trim().parse::<usize>().map_err(|e| e.to_string()))
        .collect::<std::result::Result<_, _>>()?;
    dims.try_into()
        .map_err(|_| "expected four comma-separated sizes w,h,z,o".to_string())
}

fn parse_arch(s: &str) -> std::result::Result<MlpArch, String> {
    MlpArch::parse(s).map_err(|e| e.to_string())
}

fn is_csv(path: &Path) -> bool {
    path.extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

fn read_matrix(path: &Path) -> Result<WeightMatrix> {
    if is_csv(path) {
        load_csv(path)
    } else {
        load_matrix(path)
    }
}

fn write_matrix(m: &WeightMatrix, path: &Path) -> Result<()> {
    if is_csv(path) {
        save_csv(m, path)
    } else {
        save_matrix(m, path)
    }
}

fn emit(text: &str, out: Option<&Path>) -> Result<()> {
    match out {
        Some(path) => fs::write(path, text).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        }),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .and_then(|_| stdout.flush())
                .map_err(|e| Error::Io {
                    path: PathBuf::from("<stdout>"),
                    source: e,
                })
        }
    }
}

fn sweep_csv(args: &SweepArgs, stream: StreamArgs) -> Result<String> {
    let rows = max_strength_scaling(&SweepConfig {
        method: args.method,
        sizes: args.sizes.clone(),
        trials: args.trials,
        global_seed: stream.seed,
        rewire: !args.no_rewire,
    })?;
    Ok(sweep_to_csv(&rows))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Init {
            method,
            rows,
            cols,
            gain,
            search,
            candidates,
            out,
            stream,
        } => {
            let spec = InitSpec::new(method, rows, cols).with_gain(gain);
            let mut rng = RngStream::new(
                StreamPurpose::Weights,
                stream.seed,
                stream.layer,
                stream.rep,
            );
            let m = match search {
                Some(mode) => variance_search(&spec, candidates, mode, &mut rng)?,
                None => init(&spec, &mut rng)?,
            };
            write_matrix(&m, &out)
        }
        Command::Rewire {
            input,
            out,
            passes,
            conv,
            stream,
        } => {
            let m = read_matrix(&input)?;
            let mut rng =
                RngStream::new(StreamPurpose::Rewire, stream.seed, stream.layer, stream.rep);
            let rewired = match conv {
                Some([w, h, z, o]) => {
                    let t = ConvTensor::new(w, h, z, o, m.into_data())?;
                    conv_to_2d(&pa_rewire_conv(&t, passes, &mut rng)?)
                }
                None => pa_rewire(&m, passes, &mut rng)?,
            };
            write_matrix(&rewired, &out)
        }
        Command::Analyze {
            input,
            side,
            json,
            sweep,
            sweep_args,
            stream,
        } => {
            if sweep {
                return emit(&sweep_csv(&sweep_args, stream)?, None);
            }
            let path = input.expect("clap enforces --in without --sweep");
            let stats = strength_stats(&read_matrix(&path)?, side);
            if json {
                emit(&(serde_json::to_string_pretty(&stats)? + "\n"), None)
            } else {
                emit(
                    &format!(
                        "side: {side}\nn: {}\nmean: {:e}\nvariance: {:e}\nfourth central moment: {:e}\nmax |s|: {:e}\nskewness: {:.6}\nexcess kurtosis: {:.6}\n",
                        stats.n,
                        stats.mean,
                        stats.variance,
                        stats.fourth_central_moment,
                        stats.max_abs,
                        stats.skewness,
                        stats.excess_kurtosis
                    ),
                    None,
                )
            }
        }
        Command::Train {
            arch,
            dataset,
            data_dir,
            init,
            rewire,
            reps,
            epochs,
            batch_size,
            lr,
            momentum,
            no_grad_log,
            out,
            stream,
        } => {
            if reps == 0 {
                return Err(Error::InvalidArgument("--reps must be positive".into()));
            }
            let cfg = TrainConfig {
                arch,
                epochs,
                batch_size,
                lr0: lr,
                momentum,
                global_seed: stream.seed,
                repetition: stream.rep,
                init,
                rewire,
                log_gradients: !no_grad_log,
            };
            cfg.validate()?;
            let root = resolve_data_dir(data_dir.as_deref());
            let (full, test) = load_standard(&root, dataset)?;
            let data = DataSplits::from_train_test(&full, test, &mut split_stream(stream.seed))?;
            let summary = run_population(&cfg, reps, &data, &out, cli.jobs)?;
            for run in &summary.runs {
                log::info!(
                    "rep {}: epoch-1 acc {:.2}, test acc {:.2}, converged at {}",
                    run.repetition,
                    run.epoch1_train_acc,
                    run.test_acc,
                    run.convergence_epoch
                );
            }
            Ok(())
        }
        Command::Compare {
            baseline,
            treatment,
            alpha,
            format,
            out,
            stream: _,
        } => {
            let b = load_population(&baseline)?;
            let t = load_population(&treatment)?;
            let label = |dir: &Path| {
                dir.file_name().map_or_else(
                    || dir.display().to_string(),
                    |n| n.to_string_lossy().into_owned(),
                )
            };
            let report = compare(&label(&baseline), &b, &label(&treatment), &t, alpha)?;
            for w in &report.warnings {
                log::warn!("{w}");
            }
            emit(&render_report(&report, format)?, out.as_deref())
        }
        Command::Sweep {
            sweep_args,
            out,
            stream,
        } => emit(&sweep_csv(&sweep_args, stream)?, out.as_deref()),
        Command::Cost { sizes, out, stream } => {
            let rows = rewire_cost_probe(&sizes, stream.seed)?;
            let mut csv = String::from("n,seconds\n");
            for r in &rows {
                csv.push_str(&format!("{},{:?}\n", r.n, r.seconds));
            }
            emit(&csv, out.as_deref())?;
            if let Some(slope) = loglog_slope(&rows) {
                eprintln!("log-log slope: {slope:.3}");
            }
            Ok(())
        }
        Command::Run {
            manifest,
            data_dir,
            out,
            stream: _,
        } => {
            let mut m = ExperimentManifest::load(&manifest)?;
            if data_dir.is_some() {
                m.data_dir = data_dir;
            }
            if let Some(out) = out {
                m.output_dir = out;
            }
            let outcome = run_manifest(&m, cli.jobs)?;
            if let Some(report) = outcome.comparison {
                emit(&report.to_markdown(), None)?;
            }
            Ok(())
        }
        Command::Export { runs, stream: _ } => {
            let export = plot_export(&runs)?;
            println!("{}", export.curves.display());
            if let Some(g) = export.gradient_flow {
                println!("{}", g.display());
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if cli.jobs > 0 {
        // Sweeps use the global pool; ignore the error if it already exists.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.jobs)
            .build_global();
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
