use std::fs::File;
use std::io::{self, Write};
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::Parser;

use stencil_dmp::bench::{run_benchmark, scaling_report, write_csv, RunConfig, Scaling};
use stencil_dmp::compiler::Mode;
use stencil_dmp::kernels::KernelKind;
use stencil_dmp::runtime::TransportKind;
use stencil_dmp::sparse::{parse_point, parse_points};

/// Distributed finite-difference benchmark driver.
#[derive(Debug, Parser)]
#[command(name = "stencil-dmp", version)]
struct Cli {
    /// diffusion | acoustic | elastic | tti
    #[arg(long, default_value = "acoustic")]
    kernel: String,
    /// Grid shape, e.g. 64,64,64
    #[arg(long, value_delimiter = ',')]
    shape: Option<Vec<usize>>,
    /// Space discretization order
    #[arg(long, default_value_t = 8)]
    so: usize,
    /// Number of time steps
    #[arg(long, default_value_t = 20)]
    tn: usize,
    #[arg(long, default_value_t = 1)]
    ranks: usize,
    /// Process grid, e.g. 2,2,1
    #[arg(long, value_delimiter = ',')]
    topology: Option<Vec<usize>>,
    /// basic | diagonal | full
    #[arg(long, env = "STENCIL_DMP_MODE", default_value = "diagonal")]
    mode: String,
    /// inproc | socket
    #[arg(long, default_value = "inproc")]
    transport: String,
    #[arg(long, default_value_t = 32)]
    tile: usize,
    /// Compare against a single-rank run
    #[arg(long)]
    check: bool,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Write the report here instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,
    /// JSON instead of CSV
    #[arg(long)]
    json: bool,
    /// Source position, e.g. 320.0,320.0,320.0
    #[arg(long)]
    src: Option<String>,
    /// Receiver coordinates, one point per line
    #[arg(long)]
    rec_file: Option<PathBuf>,
    /// Print the lowered schedule and exit
    #[arg(long)]
    dump_plan: bool,
    /// Disable HaloSpot optimization
    #[arg(long)]
    no_opt: bool,
    /// Time step override
    #[arg(long)]
    dt: Option<f64>,
    /// Run a strong or weak scaling series over --series rank counts
    #[arg(long)]
    scaling: Option<String>,
    #[arg(long, value_delimiter = ',', default_value = "1,2,4")]
    series: Vec<usize>,
}

fn config(cli: &Cli) -> Result<RunConfig> {
    let kernel: KernelKind = cli.kernel.parse()?;
    let shape = cli.shape.clone().unwrap_or_else(|| RunConfig::default_shape(kernel));
    let mut cfg = RunConfig::new(kernel, &shape);
    cfg.so = cli.so;
    cfg.steps = cli.tn;
    cfg.ranks = cli.ranks;
    cfg.topology = cli.topology.clone();
    cfg.mode = cli.mode.parse::<Mode>()?;
    cfg.transport = cli.transport.parse::<TransportKind>().map_err(anyhow::Error::msg)?;
    cfg.tile = cli.tile;
    cfg.check = cli.check;
    cfg.seed = cli.seed;
    cfg.optimize = !cli.no_opt;
    cfg.dt = cli.dt;
    if let Some(s) = &cli.src {
        cfg.source = Some(parse_point(s)?);
    }
    if let Some(path) = &cli.rec_file {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        cfg.receivers = Some(parse_points(&text, shape.len())?);
    }
    Ok(cfg)
}

fn emit<T: serde::Serialize>(rows: &[T], json: bool, out: &mut dyn Write) -> Result<()> {
    if json {
        serde_json::to_writer_pretty(&mut *out, rows)?;
        writeln!(out)?;
    } else {
        write_csv(rows, &mut *out)?;
    }
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let cfg = config(&cli)?;
    if cli.dump_plan {
        let (_, plan) = cfg.prepare()?;
        print!("{plan}");
        return Ok(());
    }
    let mut sink: Box<dyn Write> = match &cli.out {
        Some(p) => Box::new(File::create(p).with_context(|| format!("creating {}", p.display()))?),
        None => Box::new(io::stdout().lock()),
    };
    match cli.scaling.as_deref() {
        Some(s) => {
            let scaling: Scaling = s.parse()?;
            if cli.series.is_empty() {
                bail!("--series needs at least one rank count");
            }
            let rows = scaling_report(scaling, &cfg, &cli.series)?;
            emit(&rows, cli.json, &mut sink)?;
        }
        None => {
            let m = run_benchmark(&cfg)?;
            if cli.json {
                emit(&[m], true, &mut sink)?;
            } else {
                emit(&[m.csv_record()], false, &mut sink)?;
            }
        }
    }
    sink.flush()?;
    Ok(())
}
