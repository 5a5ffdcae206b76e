use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use phasetrack::em::MapOracleConfig;
use phasetrack::harness::{
    complexity_report, emit_results, map_ekfs_agreement, run_monte_carlo, AgreementConfig, CodeConfig,
    ComplexityMode, ComplexityParams, PointResult, Scenario, ScenarioConfig,
};

#[derive(Parser)]
#[command(name = "phasetrack", version, about = "Joint phase-noise tracking and detection for coded MIMO links")]
struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true, env = "PHASETRACK_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Monte-Carlo BER/FER simulation.
    Simulate(SimulateArgs),
    /// Operation counts of the MAP estimator and the smoother.
    Complexity(ComplexityArgs),
    /// Compare the smoother with the grid-search MAP estimator on short frames.
    OracleCheck(OracleArgs),
}

#[derive(clap::Args)]
struct SimulateArgs {
    /// TOML file with any subset of the run parameters; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output stem; writes `<stem>.csv` and `<stem>.manifest.json`.
    #[arg(long, default_value = "results/run")]
    out: PathBuf,
    #[arg(long, value_delimiter = ',')]
    scenarios: Option<Vec<Scenario>>,
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    ebn0: Option<Vec<f64>>,
    #[arg(long)]
    phn_var: Option<f64>,
    #[arg(long)]
    em_iters: Option<usize>,
    #[arg(long)]
    pilot_spacing: Option<usize>,
    #[arg(long)]
    outer_iters: Option<usize>,
    #[arg(long)]
    inner_iters: Option<usize>,
    /// Decoder iterations per detector pass.
    #[arg(long)]
    decoder_iters: Option<usize>,
    #[arg(long)]
    modulation_order: Option<usize>,
    #[arg(long)]
    num_tx: Option<usize>,
    #[arg(long)]
    num_rx: Option<usize>,
    #[arg(long)]
    rician_factor_db: Option<f64>,
    #[arg(long)]
    block_len: Option<usize>,
    /// Parity-check matrix in alist format; replaces the generated code.
    #[arg(long)]
    alist: Option<PathBuf>,
    #[arg(long)]
    frames: Option<usize>,
    #[arg(long)]
    min_errors: Option<usize>,
    #[arg(long)]
    max_frames: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Print the resolved configuration as TOML and exit.
    #[arg(long)]
    dump_config: bool,
}

impl SimulateArgs {
    fn resolve(&self) -> Result<ScenarioConfig> {
        let mut cfg = match &self.config {
            Some(p) => ScenarioConfig::from_file(p).with_context(|| format!("reading {}", p.display()))?,
            None => ScenarioConfig::default(),
        };
        macro_rules! set {
            ($field:ident => $($target:tt)+) => {
                if let Some(v) = self.$field.clone() {
                    cfg.$($target)+ = v;
                }
            };
        }
        set!(scenarios => scenarios);
        set!(ebn0 => ebn0_grid_db);
        set!(phn_var => phn_var);
        set!(em_iters => em_iters);
        set!(pilot_spacing => pilot_spacing);
        set!(outer_iters => detector.outer_iters);
        set!(inner_iters => detector.inner_iters);
        set!(decoder_iters => detector.decoder_iters);
        set!(modulation_order => modulation_order);
        set!(num_tx => num_tx);
        set!(num_rx => num_rx);
        set!(rician_factor_db => rician_factor_db);
        set!(min_errors => min_errors);
        set!(batch_size => batch_size);
        set!(seed => base_seed);
        if let Some(n) = self.frames {
            cfg.frames_per_point = n;
            cfg.max_frames = cfg.max_frames.max(n);
        }
        set!(max_frames => max_frames);
        if let Some(n) = self.block_len {
            match &mut cfg.code {
                CodeConfig::Regular { block_len, .. } => *block_len = n,
                CodeConfig::Alist { .. } => bail!("--block-len conflicts with an alist code"),
            }
        }
        if let Some(p) = &self.alist {
            cfg.code = CodeConfig::Alist { path: p.clone() };
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Printed,
    Tabulated,
}

#[derive(clap::Args)]
struct ComplexityArgs {
    #[arg(long, value_enum, default_value = "printed")]
    mode: ModeArg,
    /// Square array sizes to evaluate.
    #[arg(long, value_delimiter = ',', default_values_t = [2usize, 4, 8])]
    antennas: Vec<usize>,
    #[arg(long)]
    frame_len: Option<f64>,
    #[arg(long)]
    grid_step: Option<f64>,
    #[arg(long)]
    json: bool,
}

#[derive(clap::Args)]
struct OracleArgs {
    #[arg(long, default_value_t = 100)]
    trials: usize,
    #[arg(long, default_value_t = 25.0)]
    ebn0: f64,
    #[arg(long, default_value_t = 5e-5)]
    phn_var: f64,
    #[arg(long, default_value_t = 8)]
    frame_len: usize,
    #[arg(long, default_value_t = 1e-2)]
    grid_step: f64,
    #[arg(long, default_value_t = 4)]
    ap_cycles: usize,
    #[arg(long, default_value_t = 0.05)]
    tolerance: f64,
    #[arg(long, default_value_t = 7)]
    seed: u64,
}

fn simulate(args: &SimulateArgs) -> Result<()> {
    let cfg = args.resolve()?;
    if args.dump_config {
        print!("{}", toml::to_string(&cfg)?);
        return Ok(());
    }
    let mut done: Vec<PointResult> = Vec::new();
    let mut flush_err = None;
    run_monte_carlo(&cfg, |p| {
        let s = p.final_stats();
        eprintln!(
            "{:<12} {:>6.2} dB  ber {:.3e}  fer {:.3e}  frames {}",
            p.scenario.name(),
            p.ebn0_db,
            s.ber,
            s.fer,
            s.frames_counted
        );
        done.push(p.clone());
        // Rewrite after every point so an interrupted run keeps what it has.
        if let Err(e) = emit_results(&done, &cfg, &args.out) {
            flush_err.get_or_insert(e);
        }
    })?;
    if let Some(e) = flush_err {
        return Err(e).context("writing results");
    }
    println!("{}", args.out.with_extension("csv").display());
    Ok(())
}

fn complexity(args: &ComplexityArgs) -> Result<()> {
    let mut reports = Vec::new();
    for &n in &args.antennas {
        let mut p = ComplexityParams::reference(n);
        p.mode = match args.mode {
            ModeArg::Printed => ComplexityMode::Printed,
            ModeArg::Tabulated => ComplexityMode::Tabulated,
        };
        if let Some(v) = args.frame_len {
            p.frame_len = v;
        }
        if let Some(v) = args.grid_step {
            p.grid_step = v;
        }
        reports.push(complexity_report(&p)?);
    }
    if args.json {
        println!("{}", serde_json::to_string_pretty(&reports)?);
        return Ok(());
    }
    println!("{:>7} {:>12} {:>12} {:>12}", "system", "C_MAP", "C_EKFS", "ratio");
    for r in &reports {
        let label = format!("{}x{}", r.params.num_tx, r.params.num_rx);
        println!("{label:>7} {:>12.3e} {:>12.3e} {:>12.3e}", r.c_map, r.c_ekfs, r.c_map / r.c_ekfs);
    }
    Ok(())
}

fn oracle_check(args: &OracleArgs) -> Result<()> {
    let cfg = AgreementConfig {
        trials: args.trials,
        ebn0_db: args.ebn0,
        phn_var: args.phn_var,
        frame_len: args.frame_len,
        tolerance: args.tolerance,
        seed: args.seed,
        oracle: MapOracleConfig { grid_step: args.grid_step, ap_cycles: args.ap_cycles },
        ..Default::default()
    };
    let rep = map_ekfs_agreement(&cfg)?;
    let worst = rep.max_deviation.iter().copied().fold(0.0, f64::max);
    println!(
        "{}/{} trials within {} rad ({:.1}%), worst deviation {:.4} rad",
        rep.agreeing,
        rep.trials,
        args.tolerance,
        100.0 * rep.fraction(),
        worst
    );
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    match &cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Complexity(a) => complexity(a),
        Command::OracleCheck(a) => oracle_check(a),
    }
}
