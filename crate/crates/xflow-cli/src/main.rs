use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use xflow_cli::run::RunOverrides;
use xflow_cli::{cmd_importance, cmd_run, cmd_synth, init_thread_pool};
use xflow_core::workflow::WorkflowKind;

#[derive(Parser)]
#[command(
    name = "xflow",
    about = "Cross-network evaluation of flow-based intrusion detectors",
    version
)]
struct Cli {
    /// Only log errors.
    #[arg(long, global = true)]
    quiet: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full pipeline from a JSON config.
    Run {
        /// Path to the run configuration.
        #[arg(long)]
        config: PathBuf,
        /// Output directory (overrides the config).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Master seed (overrides the config).
        #[arg(long)]
        seed: Option<u64>,
        /// Workflow repetitions (overrides the config).
        #[arg(long)]
        repetitions: Option<u32>,
        /// Workflow kind (overrides the config's workflow mode).
        #[arg(long, value_enum)]
        workflow: Option<WorkflowArg>,
        /// Omit timestamps and timings so identical runs produce
        /// byte-identical reports.
        #[arg(long)]
        stable_report: bool,
    },
    /// Generate a synthetic corpus from a manifest.
    Synth {
        /// Path to the corpus manifest.
        #[arg(long)]
        manifest: PathBuf,
        /// Output directory for the CSVs and manifest copy.
        #[arg(long, default_value = "corpus")]
        out: PathBuf,
    },
    /// Summarize feature importances of persisted detector models.
    Importance {
        /// Serialized detector model files.
        #[arg(required = true)]
        models: Vec<PathBuf>,
        /// Output CSV path.
        #[arg(long, default_value = "importances.csv")]
        out: PathBuf,
        /// Features listed per detector in the agreement summary.
        #[arg(long, default_value_t = 6)]
        top_k: usize,
    },
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum WorkflowArg {
    Baseline,
    Generalization,
    Extension,
    Surrogation,
}

impl From<WorkflowArg> for WorkflowKind {
    fn from(value: WorkflowArg) -> Self {
        match value {
            WorkflowArg::Baseline => WorkflowKind::Baseline,
            WorkflowArg::Generalization => WorkflowKind::Generalization,
            WorkflowArg::Extension => WorkflowKind::Extension,
            WorkflowArg::Surrogation => WorkflowKind::Surrogation,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(
        env_logger::Env::default()
            .default_filter_or(if cli.quiet { "error" } else { "info" }),
    )
    .init();
    init_thread_pool();

    let result = match cli.command {
        Command::Run {
            config,
            out,
            seed,
            repetitions,
            workflow,
            stable_report,
        } => cmd_run(
            &config,
            &RunOverrides {
                out_dir: out,
                seed,
                repetitions,
                workflow: workflow.map(WorkflowKind::from),
                stable_report,
            },
        ),
        Command::Synth { manifest, out } => cmd_synth(&manifest, &out),
        Command::Importance { models, out, top_k } => cmd_importance(&models, &out, top_k),
    };

    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
