//! `singtest`: simulation, calibration and power studies for Poisson
//! processes with cusp or jump intensities.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use singular_lrt::analytic::{cusp_npt, jump_npt, pyke_quantile, pyke_tail, PflugLaw};
use singular_lrt::calibrate::{
    calibrate, compare_table, CalibrationConfig, ThresholdTable, REFERENCE_EPS,
};
use singular_lrt::config::{Config, Family};
use singular_lrt::io::{self, Header};
use singular_lrt::likelihood::{build_field, default_u_max, Prior};
use singular_lrt::limits::{
    cusp_limit, jump_limit, jump_twosided, LimitClass, LimitTrajectory,
};
use singular_lrt::models::IntensityModel;
use singular_lrt::power::{default_grid, finite_n_convergence, limit_power, LimitPowerConfig};
use singular_lrt::rng::{derive_seed, Purpose};
use singular_lrt::simulate::sample_dataset;
use singular_lrt::testing::{FiniteNConfig, PowerStudy, TestKind, TestSpec, ThresholdSet};

const EXIT_USAGE: u8 = 64;
const EXIT_CHECK_FAILED: u8 = 2;

#[derive(Parser, Debug)]
#[command(name = "singtest", version, about = "Tests for Poisson processes with cusp or jump intensities")]
struct Cli {
    /// Root seed; every random stream is derived from it.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// TOML config with the model and run defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, env = "SINGTEST_OUT_DIR", default_value = ".")]
    out_dir: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Draw a dataset of n paths.
    Simulate(SimulateArgs),
    /// Dump the log-likelihood-ratio field of a dataset.
    Field(FieldArgs),
    /// Calibrate thresholds on the limit process.
    Calibrate(CalibrateArgs),
    /// Recompute the published threshold tables and diff them.
    Tables(TablesArgs),
    /// Power curves in the limit experiment and at finite n.
    Power(PowerArgs),
    /// Sample limit trajectories.
    Limits(LimitsArgs),
    /// Closed-form laws.
    Analytic {
        #[command(subcommand)]
        what: AnalyticCommand,
    },
}

#[derive(Args, Debug, Clone)]
struct ModelArgs {
    /// Model family; overrides the config file.
    #[arg(long, value_parser = parse_family)]
    model: Option<Family>,
}

fn parse_family(s: &str) -> std::result::Result<Family, String> {
    Family::parse(s).map_err(|e| e.to_string())
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Parameter value (default: θ₁).
    #[arg(long)]
    theta: Option<f64>,
    #[arg(long)]
    n: Option<usize>,
    /// Output file name inside the output directory.
    #[arg(long, default_value = "dataset.csv")]
    out: String,
}

#[derive(Args, Debug)]
struct FieldArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Read the dataset instead of simulating one.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    theta: Option<f64>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    du: Option<f64>,
    #[arg(long)]
    u_max: Option<f64>,
    #[arg(long, default_value = "field.csv")]
    out: String,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum ClassArg {
    Cusp,
    Jump,
}

#[derive(Args, Debug, Clone)]
struct ClassArgs {
    #[arg(long, value_enum, default_value = "cusp")]
    class: ClassArg,
    /// H for the cusp class (default 0.9), ρ for the jump class (default 3).
    #[arg(long)]
    param: Option<f64>,
}

impl ClassArgs {
    fn limit_class(&self) -> LimitClass {
        match self.class {
            ClassArg::Cusp => LimitClass::Cusp {
                hurst: self.param.unwrap_or(0.9),
            },
            ClassArg::Jump => LimitClass::Jump {
                rho: self.param.unwrap_or(3.0),
            },
        }
    }
}

#[derive(Args, Debug)]
struct CalibrateArgs {
    #[command(flatten)]
    class: ClassArgs,
    #[arg(long, value_delimiter = ',')]
    eps: Option<Vec<f64>>,
    #[arg(long = "M", alias = "m")]
    m: Option<usize>,
    #[arg(long)]
    u_max: Option<f64>,
    #[arg(long)]
    du: Option<f64>,
    /// Closed-form N-PT constants to store for these u*.
    #[arg(long, value_delimiter = ',')]
    npt: Vec<f64>,
    #[arg(long)]
    out: Option<String>,
}

#[derive(Args, Debug)]
struct TablesArgs {
    /// Table 1 (cusp, H = 0.9) or 2 (jump, ρ = 3).
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
    which: u8,
    #[arg(long = "M", alias = "m", default_value_t = 100_000)]
    m: usize,
    /// Exit with status 2 if any cell is outside its tolerance.
    #[arg(long)]
    check: bool,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum Figure {
    Fig3,
    Fig4,
    Fig6,
    Fig7,
}

#[derive(Args, Debug)]
struct PowerArgs {
    #[command(flatten)]
    class: ClassArgs,
    #[arg(long, default_value_t = 0.05)]
    eps: f64,
    /// Replicates per u*.
    #[arg(long = "M", alias = "m")]
    m: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    u_star: Option<Vec<f64>>,
    /// Threshold file from `calibrate`; without it thresholds are calibrated here.
    #[arg(long)]
    thresholds: Option<PathBuf>,
    #[arg(long, default_value_t = 100_000)]
    calibration_m: usize,
    /// Also run finite-sample studies at these n (model from --model/--config).
    #[arg(long, value_delimiter = ',')]
    n_list: Vec<usize>,
    #[command(flatten)]
    model: ModelArgs,
    /// Grid step of finite-sample fields.
    #[arg(long, default_value_t = 0.02)]
    du: f64,
    /// Write the data of one figure analogue (limit curves: fig4 cusp, fig7 jump;
    /// finite n against limit: fig3 cusp, fig6 jump).
    #[arg(long, value_enum)]
    emit_plot_data: Option<Figure>,
}

#[derive(Args, Debug)]
struct LimitsArgs {
    #[command(flatten)]
    class: ClassArgs,
    #[arg(long, default_value_t = 0.0)]
    u_star: f64,
    #[arg(long, default_value_t = 20.0)]
    u_max: f64,
    #[arg(long, default_value_t = 0.005)]
    du: f64,
    #[arg(long, default_value_t = 5)]
    count: usize,
    /// Jump class: the two-sided process started at −u*.
    #[arg(long)]
    two_sided: bool,
    #[arg(long, default_value = "trajectories.csv")]
    out: String,
}

#[derive(Subcommand, Debug)]
enum AnalyticCommand {
    /// P{sup[Π(t) − t] ≥ x} for a rate-γ Poisson process, or its ε-quantile.
    Pyke {
        #[arg(long)]
        gamma: f64,
        #[arg(long, required_unless_present = "eps")]
        x: Option<f64>,
        #[arg(long)]
        eps: Option<f64>,
    },
    /// Law of argmax[Π(t) − t]: P(t̂ ≤ z), or the upper ε-quantile.
    Pflug {
        #[arg(long)]
        gamma: f64,
        #[arg(long, required_unless_present = "eps")]
        z: Option<f64>,
        #[arg(long)]
        eps: Option<f64>,
    },
    /// Neyman-Pearson constants and limit power at u*.
    Npt {
        #[command(flatten)]
        class: ClassArgs,
        #[arg(long)]
        eps: f64,
        #[arg(long)]
        u_star: f64,
    },
}

/// Shared state derived from the global flags.
struct Ctx {
    seed: u64,
    config: Option<(PathBuf, Config)>,
    out_dir: PathBuf,
    argv: String,
}

impl Ctx {
    fn header(&self, format: &str) -> Header {
        let mut h = Header::new(format).with("command", &self.argv).with("seed", self.seed);
        if let Some((p, _)) = &self.config {
            h.push("config", p.display());
            if let Ok(text) = fs::read_to_string(p) {
                h.push("config_text", text.lines().map(str::trim).collect::<Vec<_>>().join("; "));
            }
        }
        h
    }

    fn run(&self) -> singular_lrt::config::RunConfig {
        self.config.as_ref().map(|c| c.1.run.clone()).unwrap_or_default()
    }

    fn model(&self, args: &ModelArgs) -> Result<IntensityModel> {
        let cfg = match (&self.config, args.model) {
            (Some((_, c)), None) => c.clone(),
            (Some((_, c)), Some(f)) if c.family == f => c.clone(),
            (_, Some(f)) => Config::for_family(f),
            (None, None) => bail!("no model: pass --model or --config"),
        };
        Ok(cfg.model()?)
    }

    fn create(&self, name: &str) -> Result<(PathBuf, BufWriter<File>)> {
        fs::create_dir_all(&self.out_dir).with_context(|| format!("creating {}", self.out_dir.display()))?;
        let path = self.out_dir.join(name);
        let f = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        Ok((path, BufWriter::new(f)))
    }
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(cli, argv[1..].join(" ")) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli, argv: String) -> Result<u8> {
    if let Some(t) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .context("configuring the worker pool")?;
    }
    let config = match &cli.config {
        Some(p) => Some((p.clone(), Config::load(p).with_context(|| format!("reading {}", p.display()))?)),
        None => None,
    };
    let seed = cli
        .seed
        .or_else(|| config.as_ref().and_then(|c| c.1.run.seed))
        .unwrap_or(1);
    let ctx = Ctx {
        seed,
        config,
        out_dir: cli.out_dir,
        argv,
    };
    match cli.command {
        Command::Simulate(a) => simulate_cmd(&ctx, a),
        Command::Field(a) => field_cmd(&ctx, a),
        Command::Calibrate(a) => calibrate_cmd(&ctx, a),
        Command::Tables(a) => tables_cmd(&ctx, a),
        Command::Power(a) => power_cmd(&ctx, a),
        Command::Limits(a) => limits_cmd(&ctx, a),
        Command::Analytic { what } => analytic_cmd(what),
    }
}

fn simulate_cmd(ctx: &Ctx, a: SimulateArgs) -> Result<u8> {
    let model = ctx.model(&a.model)?;
    let theta = a.theta.unwrap_or(model.theta1());
    let n = a.n.or(ctx.run().n).unwrap_or(1);
    let data = sample_dataset(&model, theta, n, ctx.seed)?;
    let (path, mut w) = ctx.create(&a.out)?;
    io::write_dataset(&mut w, &data, &model, ctx.header(io::DATASET_FORMAT))?;
    w.flush()?;
    println!("{} events in {} paths -> {}", data.total_events(), n, path.display());
    Ok(0)
}

fn field_cmd(ctx: &Ctx, a: FieldArgs) -> Result<u8> {
    let model = ctx.model(&a.model)?;
    let data = match &a.data {
        Some(p) => {
            let f = File::open(p).with_context(|| format!("opening {}", p.display()))?;
            io::read_dataset(&mut BufReader::new(f), &model)?
        }
        None => {
            let n = a.n.or(ctx.run().n).unwrap_or(100);
            sample_dataset(&model, a.theta.unwrap_or(model.theta1()), n, ctx.seed)?
        }
    };
    let scale = model.localization_scale(data.n)?;
    let u_max = a.u_max.unwrap_or_else(|| default_u_max(&model, &scale));
    let du = a.du.or(ctx.run().du).unwrap_or(0.005);
    let field = build_field(&model, &data, &scale, u_max, du)?;
    let (path, mut w) = ctx.create(&a.out)?;
    io::write_field(
        &mut w,
        &field,
        ctx.header("field/1").with("model", model.describe()).with("n", data.n).with("theta", data.theta),
    )?;
    w.flush()?;
    let est = singular_lrt::likelihood::mle(&field);
    println!(
        "{} nodes, u_hat = {}, ln sup Z = {} -> {}",
        field.nodes().len(),
        est.u_hat,
        est.ln_sup,
        path.display()
    );
    Ok(0)
}

fn class_tag(c: LimitClass) -> String {
    match c {
        LimitClass::Cusp { hurst } => format!("cusp_H{hurst}"),
        LimitClass::Jump { rho } => format!("jump_rho{rho}"),
    }
}

fn write_table(ctx: &Ctx, table: &ThresholdTable, name: &str) -> Result<PathBuf> {
    let (path, mut w) = ctx.create(name)?;
    io::write_thresholds(&mut w, table, ctx.header(io::THRESHOLD_FORMAT))?;
    w.flush()?;
    Ok(path)
}

fn calibrate_cmd(ctx: &Ctx, a: CalibrateArgs) -> Result<u8> {
    let class = a.class.limit_class();
    let run = ctx.run();
    let eps = a.eps.or(run.eps).unwrap_or_else(|| REFERENCE_EPS.to_vec());
    let mut cfg = CalibrationConfig::for_class(class, a.m.or(run.m).unwrap_or(100_000), ctx.seed);
    if let Some(u) = a.u_max {
        cfg.u_max = u;
    }
    if let Some(du) = a.du.or(run.du) {
        cfg.du = du;
    }
    let mut table = calibrate(class, &eps, &cfg)?;
    for set in &mut table.sets {
        for &u in &a.npt {
            set.add_npt(u)?;
        }
    }
    let name = a.out.unwrap_or_else(|| format!("thresholds_{}.csv", class_tag(class)));
    let path = write_table(ctx, &table, &name)?;
    print!("{}", compare_table(&table));
    println!("thresholds -> {}", path.display());
    Ok(0)
}

fn tables_cmd(ctx: &Ctx, a: TablesArgs) -> Result<u8> {
    let class = match a.which {
        1 => LimitClass::Cusp { hurst: 0.9 },
        _ => LimitClass::Jump { rho: 3.0 },
    };
    let cfg = CalibrationConfig::for_class(class, a.m, ctx.seed);
    let table = calibrate(class, &REFERENCE_EPS, &cfg)?;
    let path = write_table(ctx, &table, &format!("table{}.csv", a.which))?;
    let report = compare_table(&table);
    print!("{report}");
    println!("thresholds -> {}", path.display());
    if a.check && !report.all_within() {
        return Ok(EXIT_CHECK_FAILED);
    }
    Ok(0)
}

fn load_or_calibrate(ctx: &Ctx, class: LimitClass, eps: f64, a: &PowerArgs) -> Result<Vec<ThresholdSet>> {
    if let Some(p) = &a.thresholds {
        let f = File::open(p).with_context(|| format!("opening {}", p.display()))?;
        let sets = io::read_thresholds(&mut BufReader::new(f))?;
        if let Some(s) = sets.first() {
            if s.class != class {
                bail!("{} holds thresholds for {}, not {class}", p.display(), s.class);
            }
        }
        return Ok(sets);
    }
    let cal_seed = derive_seed(ctx.seed, Purpose::Calibration, 1);
    let cfg = CalibrationConfig::for_class(class, a.calibration_m, cal_seed);
    log::info!("calibrating {class} with M = {}", a.calibration_m);
    Ok(calibrate(class, &[eps], &cfg)?.sets)
}

fn write_study(w: &mut dyn Write, study: &PowerStudy, eps: f64) -> Result<()> {
    for s in 0..study.specs.len() {
        if !matches!(study.specs[s].kind, TestKind::NeymanPearson { .. }) {
            io::write_power_rows(w, &study.curve(s), None)?;
        }
    }
    if let Some(c) = study.npt_curve(eps) {
        io::write_power_rows(w, &c, Some("NPT"))?;
    }
    Ok(())
}

fn power_cmd(ctx: &Ctx, a: PowerArgs) -> Result<u8> {
    let class = a.class.limit_class();
    let eps = a.eps;
    let finite_fig = matches!(a.emit_plot_data, Some(Figure::Fig3 | Figure::Fig6));
    match (a.emit_plot_data, class) {
        (Some(Figure::Fig3 | Figure::Fig4), LimitClass::Jump { .. }) | (Some(Figure::Fig6 | Figure::Fig7), LimitClass::Cusp { .. }) => {
            bail!("the requested figure belongs to the other model class")
        }
        _ => {}
    }
    let grid = a.u_star.clone().unwrap_or_else(|| default_grid(class));
    let mut sets = load_or_calibrate(ctx, class, eps, &a)?;
    let mut specs = TestSpec::standard(eps)?;
    let npt_possible = !matches!(class, LimitClass::Jump { rho } if rho < 1.0);
    if npt_possible {
        let set = sets
            .iter_mut()
            .find(|s| (s.eps - eps).abs() < 1e-12)
            .with_context(|| format!("no thresholds at eps = {eps}"))?;
        for &u in grid.iter().filter(|&&u| u > 0.0) {
            set.add_npt(u)?;
            specs.push(TestSpec::new(TestKind::NeymanPearson { u_star: u }, eps)?);
        }
    }
    let replicates = a.m.or(ctx.run().replicates).unwrap_or(if finite_fig || !a.n_list.is_empty() {
        1000
    } else {
        100_000
    });
    let limit_cfg = LimitPowerConfig::for_class(class, replicates, ctx.seed);
    let name = match a.emit_plot_data {
        Some(f) => format!("{}.csv", format!("{f:?}").to_lowercase()),
        None => format!("power_{}_eps{eps}.csv", class_tag(class)),
    };
    let (path, mut w) = ctx.create(&name)?;
    let mut header = ctx.header("power/1").with("class", class).with("eps", eps);
    if let Some(p) = &a.thresholds {
        header.push("thresholds", p.display());
    } else {
        header.push("calibration_m", a.calibration_m);
    }
    if a.n_list.is_empty() {
        io::write_power_header(&mut w, header)?;
        let study = limit_power(class, &specs, &sets, &grid, &limit_cfg)?;
        write_study(&mut w, &study, eps)?;
    } else {
        let model = ctx.model(&a.model)?;
        if LimitClass::of_model(&model).model_class() != class.model_class() {
            bail!("--model is a {} model but --class is {class}", model.class());
        }
        let finite = FiniteNConfig {
            n: 0,
            replicates,
            seed: ctx.seed,
            u_max: None,
            du: a.du,
            prior: Prior::Uniform,
        };
        let table = finite_n_convergence(&specs, &sets, &model, &grid, &a.n_list, &finite, &limit_cfg)?;
        io::write_power_header(&mut w, header.with("model", model.describe()))?;
        for st in &table.finite {
            write_study(&mut w, st, eps)?;
        }
        write_study(&mut w, &table.limit, eps)?;
        for (i, n) in table.n_list.iter().enumerate() {
            let gaps = &table.max_gaps()[i];
            for (s, g) in gaps.iter().enumerate().take(4) {
                println!("n = {n}: max |finite - limit| for {} = {g:.4}", specs[s].kind);
            }
        }
    }
    w.flush()?;
    println!("power curves -> {}", path.display());
    Ok(0)
}

fn limits_cmd(ctx: &Ctx, a: LimitsArgs) -> Result<u8> {
    let class = a.class.limit_class();
    let trajectories = (0..a.count as u64)
        .map(|i| {
            let seed = derive_seed(ctx.seed, Purpose::Power, 1000 + i);
            match class {
                LimitClass::Cusp { hurst } => {
                    if a.two_sided {
                        bail!("--two-sided applies to the jump class only");
                    }
                    Ok(cusp_limit(hurst, a.u_star, a.u_max, a.du, seed)?)
                }
                LimitClass::Jump { rho } if a.two_sided => Ok(jump_twosided(rho, a.u_star, a.u_max, seed)?),
                LimitClass::Jump { rho } => Ok(jump_limit(rho, a.u_star, a.u_max, seed)?),
            }
        })
        .collect::<Result<Vec<LimitTrajectory>>>()?;
    let (path, mut w) = ctx.create(&a.out)?;
    io::write_trajectories(
        &mut w,
        &trajectories,
        ctx.header("trajectories/1")
            .with("class", class)
            .with("kind", trajectories.first().map(|t| t.kind().to_string()).unwrap_or_default()),
    )?;
    w.flush()?;
    println!("{} trajectories -> {}", trajectories.len(), path.display());
    Ok(0)
}

fn analytic_cmd(what: AnalyticCommand) -> Result<u8> {
    match what {
        AnalyticCommand::Pyke { gamma, x, eps } => {
            if let Some(x) = x {
                println!("{}", pyke_tail(gamma, x)?);
            } else if let Some(eps) = eps {
                let q = pyke_quantile(gamma, eps)?;
                println!("{}", q.x);
                if q.saturated {
                    eprintln!("note: eps >= gamma, every x > 0 has a smaller tail");
                }
            }
        }
        AnalyticCommand::Pflug { gamma, z, eps } => {
            let law = PflugLaw::new(gamma)?;
            if let Some(z) = z {
                println!("{}", law.cdf(z));
            } else if let Some(eps) = eps {
                println!("{}", law.upper_quantile(eps)?);
            }
        }
        AnalyticCommand::Npt { class, eps, u_star } => match class.limit_class() {
            LimitClass::Cusp { hurst } => {
                let r = cusp_npt(eps, u_star, hurst)?;
                println!("z_eps = {}\nln d_eps = {}\npower = {}", r.z_eps, r.ln_d_eps, r.limit_power);
            }
            LimitClass::Jump { rho } => {
                let r = jump_npt(eps, u_star, rho)?;
                println!(
                    "D_eps = {}\nq_eps = {}\nln d_eps = {}\npower = {}",
                    r.d_count, r.q_eps, r.ln_d_eps, r.limit_power
                );
            }
        },
    }
    Ok(0)
}
