use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rndedt_cli::report::{render_anova, render_correlations, render_results};
use rndedt_cli::{
    anova_exit_code, cmd_anova, cmd_correlate, cmd_dump_embeddings, cmd_metrics, cmd_report, cmd_sweep_rnd_depth,
    cmd_train, dump_study, run_study, train_exit_code, write_report, CliError, CliResult, Column, Format,
    RunManifest, ScoreAnchors, DEFAULT_REPETITIONS, RESULTS_FILE,
};
use rndedt_core::io::{read_results, write_results};

#[derive(Parser)]
#[command(name = "rndedt", version, about = "Train toy RND decision transformers and analyse their embeddings")]
struct Cli {
    /// Study manifest (TOML).
    #[arg(long, global = true)]
    manifest: Option<PathBuf>,
    /// Output root; overrides the manifest's output_dir.
    #[arg(long, global = true, env = "RNDEDT_OUT")]
    out: Option<PathBuf>,
    /// Global seed added to every cell seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Parallel cells; 0 uses every core.
    #[arg(long, global = true, default_value_t = 0)]
    workers: usize,
    #[arg(long, global = true, value_enum, default_value_t = Format::Md)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train every manifest cell: one checkpoint and one loss log each.
    Train,
    /// Roll checkpoints out and write one embedding dump per episode.
    DumpEmbeddings {
        /// A single checkpoint; without it every trained cell is dumped.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Manifest environment to roll the checkpoint out in.
        #[arg(long)]
        environment: Option<String>,
        #[arg(long, default_value_t = DEFAULT_REPETITIONS)]
        repetitions: usize,
    },
    /// Compute embedding metrics for every dump group into a results table.
    Metrics {
        #[arg(long)]
        dumps: Option<PathBuf>,
        #[arg(long)]
        results: Option<PathBuf>,
    },
    /// Strongest metric-performance correlation per environment.
    Correlate {
        #[arg(long)]
        results: Option<PathBuf>,
    },
    /// One-way ANOVA of a column grouped by model, per environment.
    Anova {
        #[arg(long)]
        results: Option<PathBuf>,
        /// performance, cov_trace, l2_norm_mean or cosine_sim_mean.
        #[arg(long, default_value = "cov_trace")]
        metric: String,
    },
    /// Per-environment tables, best performer, correlation and cumulative score.
    Report {
        /// Directory holding results.csv.
        #[arg(long)]
        study: Option<PathBuf>,
        /// Results table to report on instead of a study directory.
        #[arg(long, conflicts_with = "study")]
        results: Option<PathBuf>,
        #[arg(long)]
        title: Option<String>,
    },
    /// Train, dump, measure and report in one go.
    Run,
    /// Rerun the RND cells at each sweep depth and compare cumulative scores.
    SweepRndDepth,
}

struct Ctx {
    manifest: Option<RunManifest>,
    out: PathBuf,
    workers: usize,
    format: Format,
}

impl Ctx {
    fn manifest(&self) -> CliResult<&RunManifest> {
        self.manifest.as_ref().ok_or_else(|| CliError::Invalid("this command needs --manifest".into()))
    }

    fn results_path(&self, flag: Option<PathBuf>) -> PathBuf {
        flag.unwrap_or_else(|| self.out.join(RESULTS_FILE))
    }
}

fn read_table(path: &Path) -> CliResult<Vec<rndedt_core::RunRecord>> {
    read_results(path).map_err(|e| CliError::context(path.display().to_string(), e))
}

fn run(cli: Cli) -> CliResult<i32> {
    let manifest = match &cli.manifest {
        Some(p) => Some(RunManifest::load(p)?.with_global_seed(cli.seed)),
        None => None,
    };
    let out = match &manifest {
        Some(m) => m.output_root(cli.out.as_deref()),
        None => cli.out.clone().unwrap_or_else(|| PathBuf::from("rndedt-out")),
    };
    let ctx = Ctx { manifest, out, workers: cli.workers, format: cli.format };
    match cli.command {
        Command::Train => {
            let summary = cmd_train(ctx.manifest()?, &ctx.out, ctx.workers)?;
            print!("{}", summary.to_csv());
            for f in summary.failures() {
                eprintln!("cell {} failed after {} steps", f.cell.id(), f.steps_completed);
            }
            Ok(train_exit_code(&summary))
        }
        Command::DumpEmbeddings { checkpoint, environment, repetitions } => {
            let m = ctx.manifest()?;
            let written = match checkpoint {
                Some(ckpt) => {
                    let env = match environment {
                        Some(name) => m.environment(&name)?,
                        None if m.environments.len() == 1 => &m.environments[0],
                        None => return Err(CliError::Invalid("--environment is required with several environments".into())),
                    };
                    let spec = env.spec()?;
                    let anchors = ScoreAnchors::for_environment(m, &spec)?;
                    let stem = ckpt.file_stem().and_then(|s| s.to_str()).unwrap_or("checkpoint").to_string();
                    cmd_dump_embeddings(
                        &ckpt,
                        &spec,
                        anchors,
                        repetitions,
                        m.evaluation.max_steps,
                        &ctx.out.join("dumps"),
                        &stem,
                    )?
                }
                None => {
                    let (written, missing) = dump_study(m, &m.cells()?, &ctx.out, repetitions, ctx.workers)?;
                    for c in &missing {
                        eprintln!("no checkpoint for cell {}; skipped", c.id());
                    }
                    written
                }
            };
            if written.is_empty() {
                return Err(CliError::Invalid(format!(
                    "nothing to dump; no checkpoints under {}",
                    ctx.out.join("checkpoints").display()
                )));
            }
            for p in &written {
                println!("{}", p.display());
            }
            Ok(0)
        }
        Command::Metrics { dumps, results } => {
            let rows = cmd_metrics(&dumps.unwrap_or_else(|| ctx.out.join("dumps")))?;
            let path = ctx.results_path(results);
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir).map_err(|e| CliError::Invalid(format!("{}: {e}", dir.display())))?;
            }
            write_results(&rows, &path).map_err(|e| CliError::context(path.display().to_string(), e))?;
            print!("{}", render_results(&rows, ctx.format));
            Ok(0)
        }
        Command::Correlate { results } => {
            let rows = read_table(&ctx.results_path(results))?;
            print!("{}", render_correlations(&cmd_correlate(&rows)?, ctx.format));
            Ok(0)
        }
        Command::Anova { results, metric } => {
            let column: Column = metric.parse()?;
            let rows = read_table(&ctx.results_path(results))?;
            let a = cmd_anova(&rows, column);
            print!("{}", render_anova(&a, &column.to_string(), ctx.format));
            for e in a.iter().filter_map(|x| x.outcome.as_ref().err().map(|err| (&x.environment, err))) {
                eprintln!("environment '{}': {}", e.0, e.1);
            }
            Ok(anova_exit_code(&a))
        }
        Command::Report { study, results, title } => {
            let (path, dir) = match (results, study) {
                (Some(r), _) => (r, ctx.out.clone()),
                (None, s) => {
                    let dir = s.unwrap_or_else(|| ctx.out.clone());
                    (dir.join(RESULTS_FILE), dir)
                }
            };
            let rows = read_table(&path)?;
            let title = title
                .or_else(|| ctx.manifest.as_ref().map(|m| m.study.clone()))
                .unwrap_or_else(|| "Embedding report".into());
            let report = cmd_report(&title, &rows);
            write_report(&report, &dir)?;
            print!("{}", report.render(ctx.format));
            Ok(0)
        }
        Command::Run => {
            let study = run_study(ctx.manifest()?, &ctx.out, ctx.workers)?;
            print!("{}", study.report.render(ctx.format));
            Ok(study.exit_code())
        }
        Command::SweepRndDepth => {
            let sweep = cmd_sweep_rnd_depth(ctx.manifest()?, &ctx.out.join("sweep"), ctx.workers)?;
            let text = match ctx.format {
                Format::Md => sweep.markdown(),
                Format::Table => sweep.table(),
            };
            print!("{text}");
            Ok(sweep.exit_code())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
