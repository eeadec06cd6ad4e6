use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use taskgp::domain::DemonstrationSet;
use taskgp::evaluate::evaluate_r2;
use taskgp::gp::{FitControls, ModelFile};
use taskgp::hyperopt::{Method, OptControl};
use taskgp::kernels::{Composition, KernelSpec, RealKernel};
use taskgp::modulation::{Modulator, ViaPoint, ViaPointSet};
use taskgp::pipeline::{align_stage, fit_stage, query_grid, run_pipeline, AlignConfig, FitConfig, PipelineConfig};
use taskgp::replication::{bench_csv, bench_replication};
use taskgp::synthetic::{gen_synthetic, Generator, SyntheticSpec};
use taskgp::Error;

#[derive(Parser)]
#[command(name = "taskgp", version, about = "Learn task-parameterized GP policies from demonstrations")]
struct Cli {
    /// Seed for every randomized step.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (all cores by default).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Use the replication-compressed likelihood; `--compressed=false` for dense.
    #[arg(long, global = true, num_args = 0..=1, default_missing_value = "true", require_equals = true)]
    compressed: Option<bool>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Align demonstrations in time and resample them onto a shared grid.
    Align {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long, default_value_t = taskgp::preprocess::DEFAULT_GRID)]
        grid: usize,
        /// Reference demonstration id (median length by default).
        #[arg(long)]
        reference: Option<String>,
        /// Rescale the aligned set to this duration.
        #[arg(long)]
        duration: Option<f64>,
        /// Write the warping paths as CSV.
        #[arg(long)]
        emit_paths: Option<PathBuf>,
    },
    /// Generate a synthetic demonstration set.
    GenSynthetic {
        #[arg(long)]
        generator: Generator,
        /// Samples per dim, e.g. `8,3,3` for mixed3 or `50` for damped.
        #[arg(long, value_delimiter = ',')]
        grid: Vec<usize>,
        #[arg(long, default_value_t = 1)]
        replicates: usize,
        /// Noise variance.
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        #[arg(long)]
        output: PathBuf,
    },
    /// Fit one heteroscedastic GP per output and write a model file.
    Fit(FitArgs),
    /// Predict on a query grid.
    Predict {
        #[arg(long)]
        model: PathBuf,
        /// Grid spec such as `t=0:1:100,s=3,u=lin`.
        #[arg(long)]
        grid: String,
        #[arg(long)]
        output: PathBuf,
        /// Keep the full predictive covariance (only its diagonal is written).
        #[arg(long)]
        full_cov: bool,
    },
    /// Condition a policy on via-points.
    Modulate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        grid: String,
        /// `t=..,<dim>=..,<output>=..,strength=..`; repeat for more points.
        #[arg(long = "via", required = true)]
        via: Vec<String>,
        #[arg(long)]
        output: PathBuf,
        /// Fuse per-timestamp variances instead of full covariances.
        #[arg(long)]
        diag: bool,
    },
    /// R² of a model on a test demonstration set.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        test: PathBuf,
        /// Write the report as JSON as well as printing it.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Time dense against compressed inference on replicated data.
    Bench {
        #[arg(long, default_value_t = 50)]
        n: usize,
        #[arg(long, value_delimiter = ',', default_value = "1,3,5,9")]
        a: Vec<usize>,
        #[arg(long, default_value_t = 20)]
        repeats: usize,
        #[arg(long, default_value_t = 0.05)]
        noise: f64,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Run align, fit, predict and evaluate from a JSON config.
    Pipeline {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Args)]
struct FitArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    #[arg(long, default_value = "product")]
    composition: Composition,
    #[arg(long, default_value = "se")]
    kernel: RealKernel,
    #[arg(long, default_value_t = 8)]
    starts: usize,
    #[arg(long, default_value_t = 500)]
    max_evals: usize,
    #[arg(long, default_value = "nelder-mead")]
    method: Method,
    /// Noise-model iterations; 0 fits a constant noise.
    #[arg(long, default_value_t = 10)]
    max_iter: usize,
    /// Write the optimizer starts as CSV.
    #[arg(long)]
    trace: Option<PathBuf>,
}

enum Failure {
    Usage(String),
    Core(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

fn usage(e: Error) -> Failure {
    Failure::Usage(e.to_string())
}

fn write(path: &Path, contents: &str) -> Result<(), Failure> {
    std::fs::write(path, contents).map_err(|source| {
        Failure::Core(Error::Io {
            path: path.display().to_string(),
            source,
        })
    })
}

fn load_policy(path: &Path) -> Result<taskgp::gp::Policy, Failure> {
    Ok(ModelFile::read(path)?.into_policy()?)
}

fn run(cli: Cli) -> Result<(), Failure> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Usage(e.to_string()))?;
    }
    let seed = cli.seed.unwrap_or(0);
    let compressed = cli.compressed.unwrap_or(true);
    match cli.command {
        Command::Align {
            input,
            output,
            grid,
            reference,
            duration,
            emit_paths,
        } => {
            let set = DemonstrationSet::read(&input)?;
            let cfg = AlignConfig {
                grid,
                reference,
                duration,
            };
            let (aligned, result) = align_stage(&set, &cfg)?;
            aligned.write(&output)?;
            if let Some(p) = emit_paths {
                write(&p, &result.paths_csv())?;
            }
        }
        Command::GenSynthetic {
            generator,
            grid,
            replicates,
            noise,
            output,
        } => {
            let spec = SyntheticSpec {
                generator,
                grid,
                replicates,
                noise,
                seed,
            };
            gen_synthetic(&spec).map_err(usage)?.write(&output)?;
        }
        Command::Fit(a) => {
            let set = DemonstrationSet::read(&a.input)?;
            let cfg = FitConfig {
                composition: a.composition,
                real_kernel: a.kernel,
                controls: FitControls {
                    opt: OptControl {
                        n_starts: a.starts,
                        max_evals: a.max_evals,
                        seed,
                        method: a.method,
                        ..OptControl::default()
                    },
                    max_iter: a.max_iter,
                    compressed,
                    ..FitControls::default()
                },
            };
            let policy = fit_stage(&set, &cfg)?;
            ModelFile::from_policy(&policy).write(&a.output)?;
            if let Some(p) = a.trace {
                let mut csv = String::from("output,start,best,evals\n");
                for (o, m) in policy.models.iter().enumerate() {
                    for t in &m.diagnostics.trace {
                        csv.push_str(&format!("{o},{},{},{}\n", t.start, t.best, t.evals));
                    }
                }
                write(&p, &csv)?;
            }
            for (o, m) in policy.models.iter().enumerate() {
                println!(
                    "output {o}: log L = {:.6}, noise iterations = {}",
                    m.log_marginal_likelihood(),
                    m.diagnostics.iterations
                );
            }
        }
        Command::Predict {
            model,
            grid,
            output,
            full_cov,
        } => {
            let policy = load_policy(&model)?;
            let query = query_grid(&policy.schema, &grid).map_err(usage)?;
            let pred = policy.predict(&query, full_cov)?;
            write(&output, &pred.to_csv(&policy.schema))?;
        }
        Command::Modulate {
            model,
            grid,
            via,
            output,
            diag,
        } => {
            let policy = load_policy(&model)?;
            let query = query_grid(&policy.schema, &grid).map_err(usage)?;
            let points = via
                .iter()
                .map(|v| ViaPoint::parse(&policy.schema, v))
                .collect::<Result<Vec<_>, _>>()
                .map_err(usage)?;
            let set = ViaPointSet::new(&policy.schema, policy.models.len(), points).map_err(usage)?;
            let modulated = Modulator::new(&policy, &query, !diag)?.modulate(&set)?;
            write(&output, &modulated.to_csv(&policy.schema))?;
        }
        Command::Evaluate { model, test, output } => {
            let policy = load_policy(&model)?;
            let test = DemonstrationSet::read(&test)?;
            let (pts, ys) = test.samples();
            let report = evaluate_r2(&policy, &pts, &ys)?;
            let json = serde_json::to_string_pretty(&report).map_err(Error::from)? + "\n";
            print!("{json}");
            if let Some(p) = output {
                write(&p, &json)?;
            }
        }
        Command::Bench {
            n,
            a,
            repeats,
            noise,
            output,
        } => {
            let schema = taskgp::domain::TaskSchema::time_only(0.0, 1.0);
            let kernel = KernelSpec::default_for(&schema, Composition::Product, RealKernel::Se);
            let rows = bench_replication(n, &a, &kernel, noise, repeats, seed)?;
            let csv = bench_csv(&rows);
            match output {
                Some(p) => write(&p, &csv)?,
                None => print!("{csv}"),
            }
        }
        Command::Pipeline { config } => {
            let mut cfg = PipelineConfig::read(&config).map_err(|e| e.in_stage("config"))?;
            if let Some(s) = cli.seed {
                cfg.fit.controls.opt.seed = s;
            }
            if let Some(c) = cli.compressed {
                cfg.fit.controls.compressed = c;
            }
            let report = run_pipeline(&cfg)?;
            println!("pooled R² = {:.6}", report.r2.pooled);
            for t in &report.likelihood_timing {
                println!(
                    "likelihood: dense {:.3} ms, compressed {:.3} ms, speedup {:.2}x",
                    t.dense_ms, t.compressed_ms, t.speedup
                );
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Core(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { 4 } else { 3 })
        }
    }
}
