use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use lattice_kepler::config::{parse_config, print_config, ScenarioConfig};
use lattice_kepler::experiments::{continuum_sweep, preset, run_scenario, PRESETS};
use lattice_kepler::output::{fmt_num, write_density, write_metadata, write_series};
use lattice_kepler::{selftest, Error, Result};

#[derive(Parser)]
#[command(name = "lattice-kepler", version, about = "Wave packets and semiclassical orbits on a lattice around a Coulomb source")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write its series, density snapshots and metadata.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// List the built-in scenarios or print one as a configuration file.
    Preset {
        #[arg(long, conflicts_with = "show")]
        list: bool,
        #[arg(long, value_name = "NAME")]
        show: Option<String>,
    },
    /// Repeat a scenario on successively finer lattices at fixed continuum mass.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Strictly decreasing lattice-constant factors, e.g. `1,0.5,0.25`.
        #[arg(long, value_delimiter = ',', required = true)]
        scales: Vec<f64>,
    },
    /// Run the built-in oracle checks.
    Selftest,
}

fn load(path: &Path) -> Result<ScenarioConfig> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config(&text)
}

fn run(config: &Path, out: &Path) -> Result<()> {
    let cfg = load(config)?;
    std::fs::create_dir_all(out).map_err(|source| Error::Io {
        path: out.to_path_buf(),
        source,
    })?;
    let bundle = run_scenario(&cfg)?;
    let stem = out.join(&cfg.name);
    let with_ext = |ext: &str| stem.with_extension(ext);
    write_series(&bundle, &with_ext("csv"))?;
    write_metadata(&bundle, &with_ext("meta.ini"))?;
    if cfg.lattice.dims >= 2 {
        if let Some(psi) = &bundle.initial_grid {
            write_density(psi, &with_ext("initial.density"))?;
        }
        if let Some(psi) = &bundle.final_grid {
            write_density(psi, &with_ext("final.density"))?;
        }
    }
    println!("{}: {} samples written to {}", cfg.name, bundle.sample_count(), out.display());
    if let Some(traj) = &bundle.trajectory {
        println!("  max relative energy drift {:e}, {} apsides", traj.max_energy_drift, bundle.apsides.len());
    }
    if let Some(log) = &bundle.propagation {
        println!("  max norm drift {:e}", log.max_norm_drift());
    }
    if let Some(alpha) = bundle.alpha {
        println!("  alpha = {alpha}");
    }
    Ok(())
}

fn show_presets(list: bool, show: Option<String>) -> Result<()> {
    match show {
        Some(name) => print!("{}", print_config(&preset(&name)?)),
        None if list => {
            let width = PRESETS.iter().map(|(name, _)| name.len()).max().unwrap_or(0);
            for (name, description) in PRESETS {
                println!("{name:width$}  {description}");
            }
        }
        None => return Err(Error::InvalidParameter("use --list or --show NAME".into())),
    }
    Ok(())
}

fn sweep(config: &Path, scales: &[f64]) -> Result<()> {
    let cfg = load(config)?;
    let rows = continuum_sweep(&cfg, scales)?;
    println!("scale,spacing,sites,value");
    for row in rows {
        println!("{},{},{},{}", fmt_num(row.scale), fmt_num(row.spacing), row.sites, fmt_num(row.value));
    }
    Ok(())
}

fn run_selftest() -> bool {
    let checks = selftest::run_all();
    for c in &checks {
        println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    checks.iter().all(|c| c.passed)
}

fn exit_code(result: Result<()>) -> u8 {
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_numerical() {
                3
            } else {
                2
            }
        }
    }
}

fn execute(command: Command) -> u8 {
    match command {
        Command::Run { config, out } => exit_code(run(&config, &out)),
        Command::Preset { list, show } => exit_code(show_presets(list, show)),
        Command::Sweep { config, scales } => exit_code(sweep(&config, &scales)),
        Command::Selftest => {
            if run_selftest() {
                0
            } else {
                3
            }
        }
    }
}

fn main() -> ExitCode {
    ExitCode::from(execute(Cli::parse().command))
}
