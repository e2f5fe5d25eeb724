use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use annihilation::analysis::{
    convergence_study, default_suite, negative_control, run_suite, CheckReport, SuiteEntry,
};
use annihilation::continuum::run_continuum;
use annihilation::dynamics::run;
use annihilation::kernels::{default_sample_grid, validate_assumptions};
use annihilation::measures::{
    from_state, pair_distance_upper, write_distance_matrix_csv, write_measures_csv,
};
use annihilation::scenario::Scenario;

/// Annihilating signed particles on the line: simulation, continuum solver
/// and checks.
#[derive(Parser, Debug)]
#[command(name = "annihilate", version)]
struct Cli {
    /// Worker threads for independent runs (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Scenario file (TOML).
    #[arg(long)]
    scenario: PathBuf,
    /// Output directory; defaults to the scenario's `out` entry or `out/<name>`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate the particle system and write trajectory, events and measures.
    Run {
        #[command(flatten)]
        common: Common,
        /// Particle count for block initial data (default: the scenario's).
        #[arg(long)]
        n: Option<usize>,
    },
    /// Particle-number convergence study.
    Converge {
        #[command(flatten)]
        common: Common,
    },
    /// Finite-volume solution of the continuum system.
    Continuum {
        #[command(flatten)]
        common: Common,
    },
    /// Run the checks on a scenario, or on the built-in suite when no
    /// scenario is given.
    Check {
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Parse a scenario and audit its kernels.
    Validate {
        #[arg(long)]
        scenario: PathBuf,
    },
}

#[derive(Serialize)]
struct Manifest<'a> {
    program: &'static str,
    version: &'static str,
    command: &'a str,
    scenario: &'a Scenario,
}

fn load(path: &Path, seed: Option<u64>) -> Result<Scenario> {
    let mut sc = Scenario::load(path)?;
    if let Some(s) = seed {
        sc.seed = s;
    }
    Ok(sc)
}

fn out_dir(explicit: Option<PathBuf>, sc: Option<&Scenario>) -> Result<PathBuf> {
    let dir = explicit
        .or_else(|| sc.and_then(|s| s.out.clone()).map(PathBuf::from))
        .unwrap_or_else(|| {
            Path::new("out").join(sc.map_or_else(|| "checks".to_string(), |s| s.name.clone()))
        });
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    let path = dir.join(name);
    let f = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<()> {
    let mut w = create(dir, name)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn write_manifest(dir: &Path, command: &str, sc: &Scenario) -> Result<()> {
    write_json(
        dir,
        "manifest.json",
        &Manifest {
            program: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command,
            scenario: sc,
        },
    )
}

fn cmd_run(common: Common, n: Option<usize>) -> Result<()> {
    let sc = load(&common.scenario, common.seed)?;
    let dir = out_dir(common.out, Some(&sc))?;
    let pair = sc.kernel_pair()?;
    let init = sc.initial_state(n.unwrap_or_else(|| sc.default_n()))?;
    let traj = run(&init, &pair, &sc.sim)?;
    log::info!(
        "{}: n = {}, {} accepted and {} rejected steps, {} collisions",
        sc.name,
        init.n(),
        traj.accepted_steps,
        traj.rejected_steps,
        traj.events.len()
    );

    let mut w = create(&dir, "trajectory.csv")?;
    traj.write_csv(&mut w)?;
    w.flush()?;
    let mut w = create(&dir, "events.json")?;
    traj.write_events_json(&mut w)?;
    writeln!(w)?;
    w.flush()?;

    let last = from_state(&traj.last().state);
    let mut w = create(&dir, "measures.csv")?;
    write_measures_csv(
        &mut w,
        &[
            ("mu_plus", &last.pair.mu_plus),
            ("mu_minus", &last.pair.mu_minus),
            ("kappa_plus", &last.kappa_plus),
            ("kappa_minus", &last.kappa_minus),
        ],
    )?;
    w.flush()?;

    let grid: Vec<_> = traj.samples.iter().filter(|s| s.event.is_none()).collect();
    let times: Vec<f64> = grid.iter().map(|s| s.t()).collect();
    let pairs: Vec<_> = grid.iter().map(|s| from_state(&s.state).pair).collect();
    let mut d = vec![vec![0.0; pairs.len()]; pairs.len()];
    for i in 0..pairs.len() {
        for j in i + 1..pairs.len() {
            let v = pair_distance_upper(&pairs[i], &pairs[j])?;
            d[i][j] = v;
            d[j][i] = v;
        }
    }
    let mut w = create(&dir, "distances.csv")?;
    write_distance_matrix_csv(&mut w, &times, &d)?;
    w.flush()?;

    write_manifest(&dir, "run", &sc)?;
    println!(
        "{}: {} samples, {} collisions, E from {} to {}; output in {}",
        sc.name,
        traj.samples.len(),
        traj.events.len(),
        traj.samples[0].energy,
        traj.last().energy,
        dir.display()
    );
    Ok(())
}

fn cmd_converge(common: Common) -> Result<()> {
    let sc = load(&common.scenario, common.seed)?;
    let dir = out_dir(common.out, Some(&sc))?;
    let table = convergence_study(&sc, &sc.converge.n_list, sc.converge.reference)?;
    let mut w = create(&dir, "convergence.csv")?;
    table.write_csv(&mut w)?;
    w.flush()?;
    write_manifest(&dir, "converge", &sc)?;
    for r in &table.rows {
        println!(
            "n = {:5}  sup distance {:.6e}  ratio {}",
            r.n,
            r.sup_distance,
            r.ratio.map_or("-".into(), |q| format!("{q:.4}"))
        );
    }
    Ok(())
}

fn cmd_continuum(common: Common) -> Result<()> {
    let sc = load(&common.scenario, common.seed)?;
    let dir = out_dir(common.out, Some(&sc))?;
    let pair = sc.kernel_pair()?;
    let init = sc.initial_density(None)?;
    let every = sc.continuum.snapshot_every;
    let mut times = Vec::new();
    let mut k = 1usize;
    loop {
        let t = (k as f64 * every).min(sc.sim.t_end);
        times.push(t);
        if t >= sc.sim.t_end {
            break;
        }
        k += 1;
    }
    let snaps = run_continuum(&init, &pair, &times, sc.continuum.cfl)?;
    let mut summary = csv_writer(create(&dir, "continuum_summary.csv")?);
    summary.write_record(["t", "mass_plus", "mass_minus", "kappa_mass", "file"])?;
    for (k, d) in std::iter::once(&init).chain(&snaps).enumerate() {
        let name = format!("continuum_{k:04}.csv");
        let mut w = create(&dir, &name)?;
        d.write_csv(&mut w)?;
        w.flush()?;
        summary.write_record([
            d.t.to_string(),
            d.mass(annihilation::continuum::Species::Plus).to_string(),
            d.mass(annihilation::continuum::Species::Minus).to_string(),
            d.kappa_mass().to_string(),
            name,
        ])?;
    }
    summary.flush()?;
    write_manifest(&dir, "continuum", &sc)?;
    let last = snaps.last().unwrap_or(&init);
    println!(
        "{}: {} cells, |kappa| from {} to {}; output in {}",
        sc.name,
        init.grid.cells,
        init.kappa_mass(),
        last.kappa_mass(),
        dir.display()
    );
    Ok(())
}

fn csv_writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::Writer::from_writer(w)
}

fn cmd_check(scenario: Option<PathBuf>, out: Option<PathBuf>, seed: Option<u64>) -> Result<bool> {
    let (entries, sc) = match scenario {
        Some(path) => {
            let sc = load(&path, seed)?;
            (
                vec![SuiteEntry {
                    scenario: sc.clone(),
                    negative_control: None,
                }],
                Some(sc),
            )
        }
        None => {
            let mut e = default_suite();
            e.push(negative_control());
            if let Some(s) = seed {
                e.iter_mut().for_each(|x| x.scenario.seed = s);
            }
            (e, None)
        }
    };
    let dir = out_dir(out, sc.as_ref())?;
    let reports: Vec<CheckReport> = run_suite(&entries)?;
    write_json(&dir, "checks.json", &reports)?;
    let mut ok = true;
    for r in &reports {
        let status = match (r.pass, r.negative_control) {
            (true, false) => "pass",
            (false, false) => "FAIL",
            (false, true) => "pass (control failed as intended)",
            (true, true) => "WARN (control did not fail)",
        };
        if !r.pass && !r.negative_control {
            ok = false;
        }
        if r.pass && r.negative_control {
            log::warn!("negative control {} passed {}", r.context.scenario, r.name);
        }
        println!(
            "{:<28} {:<22} measured {:>12.4e}  bound {:>12.4e}  {status}",
            r.context.scenario, r.name, r.measured, r.bound
        );
    }
    if let Some(sc) = &sc {
        write_manifest(&dir, "check", sc)?;
    }
    Ok(ok)
}

fn cmd_validate(path: PathBuf) -> Result<bool> {
    let sc = Scenario::load(&path)?;
    let pair = sc.kernel_pair()?;
    let report = validate_assumptions(&pair, &default_sample_grid());
    println!("{}: V = {}, W = {}", sc.name, sc.kernels.v, sc.kernels.w);
    println!(
        "  sup|r V'| = {}, sup|r W'| = {}, W(0) = {}",
        pair.bound_r_v_prime, pair.bound_r_w_prime, pair.w_at_zero
    );
    for c in &report.clauses {
        println!(
            "  {:<28} {}  {}",
            c.name,
            if c.pass { "ok  " } else { "FAIL" },
            c.detail
        );
    }
    let init = sc.initial_state(sc.default_n())?;
    println!("  initial data: n = {}, {} positive", init.n(), init.b0.iter().filter(|&&b| b > 0).count());
    Ok(report.all_pass())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter("ANNIHILATE_LOG"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    if let Some(j) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(j).build_global() {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    }
    let result = match cli.command {
        Command::Run { common, n } => cmd_run(common, n).map(|_| true),
        Command::Converge { common } => cmd_converge(common).map(|_| true),
        Command::Continuum { common } => cmd_continuum(common).map(|_| true),
        Command::Check { scenario, out, seed } => cmd_check(scenario, out, seed),
        Command::Validate { scenario } => cmd_validate(scenario),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
