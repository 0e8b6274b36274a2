use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use factor_views::calibrate::{calibrate, MonthlyPanel, MONTH};
use factor_views::harness::{
    bridge_demo, filter_demo, run_experiment, write_bridge_demo, write_report, ExperimentConfig, Sweep, Table, DEFAULT_RHO_SWEEP, DEFAULT_TAU_SWEEP,
};
use factor_views::Error;

#[derive(Parser)]
#[command(name = "factor-views", version, about = "Portfolio experiments for factor models with expert views")]
struct Cli {
    /// Experiment configuration (JSON); defaults apply when absent.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Monte Carlo paths.
    #[arg(long, global = true)]
    paths: Option<usize>,
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a model to a monthly CSV of prices and dividend yields.
    Calibrate {
        csv: PathBuf,
        #[arg(short, long, default_value = "model.json")]
        output: PathBuf,
    },
    /// Run the configured experiment and write every table.
    Simulate,
    /// Mean and std of terminal log-return per strategy over the γ list.
    Frontier,
    /// Certainty-equivalent rates and their differences against the no-views strategy.
    Cer,
    /// Expected total absolute change in holdings.
    Turnover,
    /// Repeat the experiment over view noise or shock correlation.
    Sweep {
        #[arg(long, value_enum)]
        axis: Axis,
        /// Sweep points; the standard grid for the axis when absent.
        #[arg(long, value_delimiter = ',')]
        values: Option<Vec<f64>>,
    },
    /// Simulated mean-reverting bridge against its exact moments.
    BridgeDemo,
    /// One drift-filter trajectory on the configured model.
    FilterDemo {
        #[arg(long, default_value_t = 10.0)]
        years: f64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Axis {
    Tau,
    Rho,
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, Error> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::from_path(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(n) = cli.paths {
        cfg.n_paths = n;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn experiment(cli: &Cli, cfg: &ExperimentConfig, tables: &[Table]) -> Result<(), Error> {
    let report = run_experiment(cfg)?;
    for name in write_report(&cli.out_dir, cfg, &report, tables)? {
        println!("wrote {}", cli.out_dir.join(name).display());
    }
    Ok(())
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>, Error> {
    fs::create_dir_all(dir)?;
    let path = dir.join(name);
    println!("wrote {}", path.display());
    Ok(BufWriter::new(File::create(path)?))
}

fn run(cli: &Cli) -> Result<(), Error> {
    match &cli.command {
        Command::Calibrate { csv, output } => {
            let panel = MonthlyPanel::from_path(csv, MONTH)?;
            let cal = calibrate(&panel)?;
            println!("{}", cal.report);
            fs::write(output, cal.model.to_json())?;
            println!("wrote {}", output.display());
        }
        Command::Simulate => {
            let cfg = load_config(cli)?;
            let mut tables = vec![Table::Summary, Table::Cer, Table::Deltas, Table::Turnover];
            if cfg.gammas.len() >= 3 {
                tables.push(Table::Frontier);
            }
            experiment(cli, &cfg, &tables)?;
        }
        Command::Frontier => {
            let cfg = load_config(cli)?;
            if cfg.gammas.len() < 3 {
                return Err(Error::Config("`gammas`: a frontier needs at least three risk aversions".into()));
            }
            experiment(cli, &cfg, &[Table::Frontier])?;
        }
        Command::Cer => experiment(cli, &load_config(cli)?, &[Table::Cer, Table::Deltas])?,
        Command::Turnover => experiment(cli, &load_config(cli)?, &[Table::Turnover])?,
        Command::Sweep { axis, values } => {
            let mut cfg = load_config(cli)?;
            cfg.sweep = match axis {
                Axis::Tau => Sweep::Tau(values.clone().unwrap_or_else(|| DEFAULT_TAU_SWEEP.to_vec())),
                Axis::Rho => Sweep::Rho(values.clone().unwrap_or_else(|| DEFAULT_RHO_SWEEP.to_vec())),
            };
            cfg.validate()?;
            experiment(cli, &cfg, &[Table::Summary, Table::Deltas])?;
        }
        Command::BridgeDemo => {
            let rows = bridge_demo(cli.paths.unwrap_or(2000), cli.seed.unwrap_or(2024))?;
            write_bridge_demo(&rows, create(&cli.out_dir, "bridge_demo.csv")?)?;
        }
        Command::FilterDemo { years } => {
            let cfg = load_config(cli)?;
            let demo = filter_demo(&cfg.load_model()?, *years, cfg.seed)?;
            demo.write_csv(create(&cli.out_dir, "filter_demo.csv")?)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() { 2 } else { 3 })
        }
    }
}
