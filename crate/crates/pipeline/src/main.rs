use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ptycho_core::epie::ScanOrder;
use ptycho_pipeline::commands::{cmd_epie, cmd_metrics, cmd_simulate, cmd_stitch, overlap_table, print_overlap_table};
use ptycho_pipeline::config::{load_json, EpfConfig, InitSource, SimulateConfig, StitchSettings, SweepConfig};
use ptycho_pipeline::sweep::cmd_sweep;
use ptycho_pipeline::{PipelineError, Result};

#[derive(Parser)]
#[command(name = "ptycho", version, about = "Simulate, stitch, reconstruct and score ptychography datasets")]
struct Cli {
    /// JSON config for the subcommand
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overrides the config seed
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for independent sweep jobs
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Exit with status 4 if ePIE stops without converging
    #[arg(long, global = true)]
    require_converged: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a dataset directory
    Simulate,
    /// Reconstruct a dataset, optionally warm-started
    Epie {
        dataset: PathBuf,
        /// Prediction directory (stitched or patches)
        #[arg(long)]
        init: Option<PathBuf>,
    },
    /// ePIE warm-started from a prediction directory
    Epf {
        dataset: PathBuf,
        #[arg(long)]
        init: PathBuf,
    },
    /// Feather patch predictions into one canvas
    Stitch { predictions: PathBuf },
    /// Score a reconstruction or stitched prediction
    Metrics { recon: PathBuf, dataset: PathBuf },
    /// Offset x method x seed sweep
    Sweep,
    /// Print the offset-to-overlap table for the configured probe
    Overlap {
        #[arg(long, value_delimiter = ',', default_values_t = [20, 30, 40, 50, 60])]
        offsets: Vec<usize>,
    },
}

fn require_out(cli: &Cli) -> Result<&Path> {
    cli.out
        .as_deref()
        .ok_or_else(|| PipelineError::InvalidConfig("--out is required".into()))
}

fn epie_config(cli: &Cli, init: Option<&Path>, warm: bool) -> Result<EpfConfig> {
    let mut cfg: EpfConfig = load_json(cli.config.as_deref())?;
    let raw: serde_json::Value = load_json(cli.config.as_deref())?;
    let explicit = raw.get("init_source").is_some();
    if warm || (init.is_some() && !explicit) {
        cfg.init_source = InitSource::StitchedPrediction;
    }
    if let (Some(seed), ScanOrder::Shuffled(_)) = (cli.seed, cfg.epie.scan_order) {
        cfg.epie.scan_order = ScanOrder::Shuffled(seed);
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<()> {
    let config = cli.config.as_deref();
    match &cli.command {
        Command::Simulate => {
            let mut cfg: SimulateConfig = load_json(config)?;
            if let Some(seed) = cli.seed {
                cfg.seed = seed;
            }
            let m = cmd_simulate(&cfg, require_out(cli)?)?;
            if let Some(p) = m.overlap_percent {
                println!("overlap {p:.1}%");
            }
        }
        Command::Epie { dataset, init } => run_epie(cli, dataset, init.as_deref(), false)?,
        Command::Epf { dataset, init } => run_epie(cli, dataset, Some(init), true)?,
        Command::Stitch { predictions } => {
            let settings: StitchSettings = load_json(config)?;
            cmd_stitch(predictions, &settings, require_out(cli)?)?;
        }
        Command::Metrics { recon, dataset } => {
            let out = cli.out.as_deref().unwrap_or(recon);
            let report = cmd_metrics(recon, dataset, out)?;
            println!("{}", serde_json::to_string(&report).expect("serializes"));
        }
        Command::Sweep => {
            let mut cfg: SweepConfig = load_json(config)?;
            if let Some(seed) = cli.seed {
                cfg.seeds = vec![seed];
            }
            let records = cmd_sweep(&cfg, require_out(cli)?)?;
            println!("{} runs", records.len());
        }
        Command::Overlap { offsets } => {
            let cfg: SimulateConfig = load_json(config)?;
            let rows = overlap_table(&cfg.probe, offsets)?;
            print_overlap_table(&rows, std::io::stdout()).map_err(|e| PipelineError::io("stdout", e))?;
        }
    }
    Ok(())
}

fn run_epie(cli: &Cli, dataset: &Path, init: Option<&Path>, warm: bool) -> Result<()> {
    let cfg = epie_config(cli, init, warm)?;
    let summary = cmd_epie(dataset, &cfg, init, require_out(cli)?)?;
    println!(
        "iterations {} converged {} final_sse {:e}",
        summary.iterations, summary.converged, summary.final_sse
    );
    if cli.require_converged && !summary.converged {
        return Err(PipelineError::NotConverged(summary.iterations));
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
