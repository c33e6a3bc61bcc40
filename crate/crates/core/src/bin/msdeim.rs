use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use msdeim::harness::experiment::{obtain_space, Workspace};
use msdeim::harness::{run_experiment, write_results, ExperimentConfig};
use msdeim::integrator::SolverMode;
use msdeim::msbasis::save_basis_cache;
use msdeim::rom::write_snapshot_archive;
use msdeim::{Error, Result};

#[derive(Parser)]
#[command(name = "msdeim", version, about = "Multiscale SPDE solver with online DEIM")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the multiscale basis and write it to `<out>/basis.bin`.
    BuildBasis(Common),
    /// Run the offline phase and write the snapshot archives.
    OfflineRom(Common),
    /// Run an experiment and write CSV/JSON results.
    Run(Common),
    /// Summarise the results in an output directory.
    Report {
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Comma separated solver modes.
    #[arg(long, value_delimiter = ',')]
    mode: Option<Vec<SolverMode>>,
    #[arg(long)]
    trajectories: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    workers: Option<usize>,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::load(&self.config)?;
        if let Some(m) = &self.mode {
            cfg.run.modes = m.clone();
        }
        if let Some(n) = self.trajectories {
            cfg.run.trajectories = n;
        }
        if let Some(s) = self.seed {
            cfg.run.seed = s;
        }
        if let Some(o) = &self.out {
            cfg.run.out = o.clone();
        }
        if let Some(w) = self.workers {
            cfg.run.workers = w;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn build_basis(cfg: &ExperimentConfig) -> Result<()> {
    let mesh = cfg.mesh()?;
    let kappa = cfg.permeability()?;
    let (space, secs) = obtain_space(cfg, &mesh, &kappa)?;
    std::fs::create_dir_all(&cfg.run.out)?;
    let path = cfg.run.out.join("basis.bin");
    save_basis_cache(&space, &path)?;
    println!(
        "basis: {} columns, lambda {:.6e}, contrast {:.3e}, {secs:.2}s -> {}",
        space.basis.ncols(),
        space.lambda,
        kappa.contrast(),
        path.display()
    );
    Ok(())
}

fn offline_rom(cfg: &ExperimentConfig) -> Result<()> {
    let mut cfg = cfg.clone();
    if !cfg.needs_offline() {
        cfg.run.modes.push(SolverMode::MsDeimOffline);
    }
    let ws = Workspace::prepare(&cfg)?;
    let (model, secs) = ws.offline()?;
    std::fs::create_dir_all(&cfg.run.out)?;
    let drift = cfg.run.out.join("drift_snapshots.bin");
    write_snapshot_archive(&drift, &model.drift_snapshots)?;
    let diffusion = cfg.run.out.join("diffusion_snapshots.bin");
    write_snapshot_archive(&diffusion, &model.diffusion_snapshots)?;
    println!(
        "offline: {} trajectories, drift rank {} (cond {:.3e}), diffusion rank {}, {secs:.2}s",
        cfg.deim.offline_trajectories,
        model.drift.rank(),
        model.drift.condition(),
        model.diffusion.as_ref().map_or(0, |g| g.rank()),
    );
    Ok(())
}

fn run(cfg: &ExperimentConfig) -> Result<()> {
    let res = run_experiment(cfg)?;
    write_results(&res, &cfg.run.out)?;
    for f in &res.failures {
        eprintln!("trajectory {} ({}) failed: {}", f.id, f.mode, f.message);
    }
    let last = cfg.time.steps;
    for mode in &cfg.run.modes {
        if let Some(mean) = res.mean_l2_at(*mode, last) {
            let t = &res.timing.modes[mode.name()];
            println!(
                "{:<16} mean final rel L2 {mean:.6e}  stepping {:.3}s  online {:.3}s",
                mode.name(),
                t.stepping,
                t.online_update
            );
        }
    }
    println!("results in {}", cfg.run.out.display());
    Ok(())
}

fn report(out: &Path) -> Result<()> {
    let text = std::fs::read_to_string(out.join("summary.csv"))?;
    let mut acc: BTreeMap<String, (usize, f64, f64, f64)> = BTreeMap::new();
    for line in text.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() < 5 {
            return Err(Error::Format(format!("bad summary line {line:?}")));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|e| Error::Format(format!("{s:?}: {e}")));
        let e = acc.entry(f[0].to_string()).or_default();
        e.0 += 1;
        e.1 += num(f[2])?;
        e.2 += num(f[3])?;
        e.3 += num(f[4])?;
    }
    println!("{:<16} {:>6} {:>14} {:>14} {:>14}", "mode", "n", "rel_l2", "rel_energy", "deviation");
    for (mode, (n, l2, en, dev)) in acc {
        let k = n as f64;
        println!("{mode:<16} {n:>6} {:>14.6e} {:>14.6e} {:>14.6e}", l2 / k, en / k, dev / k);
    }
    if let Ok(t) = std::fs::read_to_string(out.join("timing.json")) {
        println!("{t}");
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::BuildBasis(c) => c.load().and_then(|cfg| build_basis(&cfg)),
        Command::OfflineRom(c) => c.load().and_then(|cfg| offline_rom(&cfg)),
        Command::Run(c) => c.load().and_then(|cfg| run(&cfg)),
        Command::Report { out } => report(out),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
