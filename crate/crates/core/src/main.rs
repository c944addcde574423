use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::{error, info};
use rand::SeedableRng;

use ris_isac::channel::{lin_to_db, ChannelSet};
use ris_isac::error::Result;
use ris_isac::expcli::{self, ExperimentConfig, ResultTable};
use ris_isac::{driver, feasinit};

#[derive(Parser)]
#[command(name = "ris-isac", version, about = "Radar-SINR maximization for active-RIS aided ISAC")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment configuration (TOML). The built-in reference deployment is
    /// used when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seeds to run, overriding the configuration.
    #[arg(long = "seed", value_delimiter = ',')]
    seeds: Vec<u64>,
    /// Output path.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads, overriding the configuration.
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured mode over every seed (sweep, if any, included).
    Run(Common),
    /// Run a configuration that must contain a `[sweep]` section.
    Sweep(Common),
    /// Optimize one seed and export the transmit beampattern from the RIS.
    Beampattern {
        #[command(flatten)]
        common: Common,
        /// Angular grid step in degrees.
        #[arg(long, default_value_t = 1.0)]
        grid_deg: f64,
    },
    /// Check initial feasibility of every seed without optimizing.
    Feascheck(Common),
    /// Print the built-in default configuration.
    DefaultConfig,
}

fn load(common: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(p) => expcli::load_config(p)?,
        None => ExperimentConfig::default(),
    };
    if !common.seeds.is_empty() {
        cfg.seeds = common.seeds.clone();
    }
    if let Some(w) = common.workers {
        cfg.workers = w;
    }
    if let Some(out) = &common.out {
        cfg.output = out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn print_summary(table: &ResultTable) {
    println!("{:>12} {:>14} {:>5} {:>9} {:>9} {:>9} {:>9}", "value", "mode", "ok", "mean_dB", "p10_dB", "p50_dB", "p90_dB");
    for s in table.summarize() {
        println!(
            "{:>12} {:>14} {:>5} {:>9.2} {:>9.2} {:>9.2} {:>9.2}",
            s.sweep_value, s.mode.name(), s.succeeded, s.mean_db, s.p10_db, s.p50_db, s.p90_db
        );
    }
}

fn run(cfg: &ExperimentConfig) -> Result<bool> {
    let table = expcli::run_experiment(cfg)?;
    expcli::persist_results(&table.rows(), &cfg.output)?;
    info!("wrote {}", cfg.output.display());
    for row in table.rows().iter().filter(|r| !r.ok()) {
        error!("seed {} ({} {}): {}", row.seed, row.mode.name(), row.sweep_value, row.status);
    }
    print_summary(&table);
    Ok(table.all_ok())
}

fn beampattern(cfg: &ExperimentConfig, grid_deg: f64, out: &Path) -> Result<bool> {
    let seed = cfg.seeds[0];
    let point = expcli::run_point(cfg, None, cfg.mode, seed);
    let Some(trace) = point.trace.as_ref().filter(|_| point.row.ok()) else {
        error!("seed {seed}: {}", point.row.status);
        return Ok(false);
    };
    let (scen, users) = cfg.point_scenario(None, cfg.mode)?;
    let chan = ChannelSet::from_seed(&scen, seed)?.with_users(&users);
    let rows = expcli::export_beampattern(&trace.state, &chan, grid_deg, out)?;
    let peak = rows.iter().max_by(|a, b| a.power.total_cmp(&b.power)).map(|r| r.theta_deg).unwrap_or(f64::NAN);
    println!(
        "radar SINR {:.2} dB; peak at {peak:.1} deg (target at {:.1} deg); sidelobe level {:.2} dB; wrote {}",
        point.row.radar_sinr_db,
        chan.theta3.to_degrees(),
        expcli::sidelobe_level_db(&rows),
        out.display()
    );
    Ok(true)
}

fn feascheck(cfg: &ExperimentConfig) -> Result<bool> {
    let (scen, users) = cfg.point_scenario(None, cfg.mode)?;
    let mut all_ok = true;
    for &seed in &cfg.seeds {
        let chan = ChannelSet::from_seed(&scen, seed)?.with_users(&users);
        let certificate = match feasinit::search_lemma2_rho(&chan, &scen) {
            Ok(r) if r.feasible() => format!("certified (rho {:.3e})", r.rho),
            Ok(_) => "not certified".to_string(),
            Err(e) => format!("not certified ({e})"),
        };
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(expcli::driver_seed(seed));
        let v0 = driver::random_v(&chan, &scen, &mut rng);
        match driver::initialize(&chan, &scen, &v0) {
            Ok((state, source)) => {
                let m = ris_isac::sigmodel::metrics(&state, &chan, &scen)?;
                println!(
                    "seed {seed}: feasible via {source:?}; radar {:.2} dB, BS {:.3} W, RIS {:.3e} W; certificate {certificate}",
                    lin_to_db(m.radar_sinr),
                    m.bs_power,
                    m.ris_power
                );
            }
            Err(e) => {
                all_ok = false;
                println!("seed {seed}: infeasible ({e}); certificate {certificate}");
            }
        }
    }
    Ok(all_ok)
}

fn dispatch(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Run(common) => run(&load(&common)?),
        Command::Sweep(common) => {
            let cfg = load(&common)?;
            if cfg.sweep.is_none() {
                return Err(ris_isac::error::Error::Config {
                    field: "sweep".into(),
                    message: "the sweep command needs a [sweep] section".into(),
                });
            }
            run(&cfg)
        }
        Command::Beampattern { common, grid_deg } => {
            let out = common.out.clone().unwrap_or_else(|| PathBuf::from("beampattern.csv"));
            let cfg = load(&Common { out: None, ..common })?;
            beampattern(&cfg, grid_deg, &out)
        }
        Command::Feascheck(common) => feascheck(&load(&common)?),
        Command::DefaultConfig => {
            print!("{}", expcli::DEFAULT_CONFIG);
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match dispatch(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            error!("{e}");
            ExitCode::from(2)
        }
    }
}
