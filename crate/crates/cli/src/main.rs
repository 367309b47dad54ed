use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use paramstab::bounds::{main_coefficients, LipschitzData};
use paramstab::config::ModelConfig;
use paramstab::harness::{certify, sweep, SweepReport, Verdict};
use paramstab::models::Parameter;
use paramstab::suite::{run_suite, SuiteOptions};
use paramstab::{format_sci, NormKind, StabilityError};

mod svg;

use svg::{Chart, Series};

/// Benchmark configuration shipped with the repository.
const FIG3_CONFIG: &str = include_str!("../../../configs/fig3.json");

#[derive(Parser)]
#[command(
    name = "paramstab",
    version,
    about = "Parameter-perturbation bounds for second-order ODEs"
)]
struct Cli {
    /// Model configuration (JSON); defaults to the shipped benchmark.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    steps: Option<usize>,
    /// `sup` or `euclid`.
    #[arg(long, global = true)]
    norm: Option<NormKind>,
    /// Also write SVG charts.
    #[arg(long, global = true)]
    plot: bool,
    /// Logarithmic chart axes.
    #[arg(long, global = true)]
    log_log: bool,
    /// Print the fully resolved configuration and exit.
    #[arg(long, global = true)]
    dump_config: bool,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate one member of the family and write its trajectory CSV.
    Integrate {
        /// Parameter value; defaults to the nominal one.
        #[arg(long)]
        lambda: Option<f64>,
    },
    /// Print the bound coefficients c1, c2, c3 at time t.
    Bounds {
        #[arg(long = "L")]
        l: f64,
        #[arg(long = "Lp")]
        lp: f64,
        #[arg(long = "T")]
        horizon: f64,
        #[arg(long)]
        t: f64,
        #[arg(long, default_value_t = 0.0)]
        dx0: f64,
        #[arg(long, default_value_t = 0.0)]
        dv0: f64,
        #[arg(long, default_value_t = 0.0)]
        dlam: f64,
        /// Write the coefficients on a grid over [0, T] to this CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long, default_value_t = 101)]
        points: usize,
    },
    /// Sweep the configured parameter values and certify the bounds.
    Sweep,
    /// Run the property suite.
    Verify {
        /// Random linear families in the soundness check.
        #[arg(long, default_value_t = 100)]
        families: usize,
    },
    /// Sweep the benchmark with fixed and with shifted initial positions.
    #[command(name = "reproduce-fig3")]
    ReproduceFig3,
}

fn write_atomic(path: &Path, contents: &str) -> anyhow::Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)
        .with_context(|| format!("writing into {}", dir.display()))?;
    tmp.write_all(contents.as_bytes())?;
    tmp.persist(path)
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn load_config(cli: &Cli) -> anyhow::Result<ModelConfig> {
    let text = match &cli.config {
        Some(path) => fs::read_to_string(path)
            .map_err(|e| StabilityError::Config(format!("{}: {e}", path.display())))?,
        None => FIG3_CONFIG.to_string(),
    };
    let mut cfg = ModelConfig::from_json(&text)?;
    if let Some(seed) = cli.seed {
        cfg.seed = Some(seed);
    }
    if let Some(steps) = cli.steps {
        cfg.steps = Some(steps);
    }
    if let Some(norm) = cli.norm {
        cfg.norm = Some(norm);
    }
    Ok(cfg.resolve()?)
}

/// The same configuration with initial positions shifted by `λ - λ̄` in
/// every component.
fn with_shifted_initial(cfg: &ModelConfig) -> anyhow::Result<ModelConfig> {
    let mut shifted = cfg.clone();
    shifted.perturb_initial = Some(true);
    if let Some(p) = shifted.perturbation.as_mut() {
        p.x0 = None;
    }
    Ok(shifted.resolve()?)
}

fn run_sweep(cfg: &ModelConfig) -> anyhow::Result<SweepReport> {
    let family = cfg.build_family()?;
    Ok(sweep(&family, &cfg.lambdas()?, &cfg.sweep_options()?)?)
}

fn sweep_chart(report: &SweepReport, title: &str, log_log: bool) -> Chart {
    let observed = report
        .rows
        .iter()
        .any(|r| r.values.as_ref().is_some_and(|v| v.dev_z.is_some()));
    let pick = |dev: bool| -> Vec<(f64, f64)> {
        report
            .rows
            .iter()
            .filter_map(|r| {
                let v = r.values.as_ref()?;
                let y = match (observed, dev) {
                    (true, true) => v.dev_z?,
                    (true, false) => v.bound_z?,
                    (false, true) => v.dev_x,
                    (false, false) => v.bound_x,
                };
                Some((r.lambda.values()[0], y))
            })
            .collect()
    };
    let (dev, bound) = if observed {
        ("dev_z", "bound_z")
    } else {
        ("dev_x", "bound_x")
    };
    Chart {
        title: title.to_string(),
        x_label: "λ".into(),
        y_label: "deviation (sup over grid)".into(),
        log_log,
        series: vec![
            Series {
                label: dev.into(),
                color: "steelblue",
                points: pick(true),
            },
            Series {
                label: bound.into(),
                color: "firebrick",
                points: pick(false),
            },
        ],
    }
}

fn verdict_code(verdict: &Verdict) -> u8 {
    match verdict {
        Verdict::Pass => 0,
        Verdict::RowFailed { code, .. } if code == "NONFINITE_STATE" => 3,
        _ => 1,
    }
}

fn emit_sweep(
    cli: &Cli,
    cfg: &ModelConfig,
    stem: &str,
    title: &str,
    plot: bool,
) -> anyhow::Result<u8> {
    let report = run_sweep(cfg)?;
    let csv_path = cli.out.join(format!("{stem}.csv"));
    write_atomic(&csv_path, &report.to_csv())?;
    write_atomic(&cli.out.join(format!("{stem}.json")), &report.to_json())?;
    if plot {
        let chart = sweep_chart(&report, title, cli.log_log);
        write_atomic(&cli.out.join(format!("{stem}.svg")), &chart.render())?;
    }
    let verdict = certify(&report);
    println!("{stem}: {verdict}");
    if report.meta.lipschitz_breach {
        println!("{stem}: sampled Lipschitz constants exceed the declared ones");
    }
    println!("{stem}: wrote {}", csv_path.display());
    Ok(verdict_code(&verdict))
}

fn run(cli: &Cli) -> anyhow::Result<u8> {
    if cli.dump_config {
        println!("{}", load_config(cli)?.to_json());
        return Ok(0);
    }
    let Some(command) = &cli.command else {
        bail!(StabilityError::Config(
            "no command given; see --help".into()
        ));
    };
    match command {
        Command::Bounds {
            l,
            lp,
            horizon,
            t,
            dx0,
            dv0,
            dlam,
            csv,
            points,
        } => {
            let coeffs = main_coefficients(LipschitzData::new(*l, *lp)?, *horizon)?;
            if !(0.0..=*horizon).contains(t) {
                bail!(StabilityError::InvalidInput(format!(
                    "t = {t} outside [0, {horizon}]"
                )));
            }
            let (c1, c2, c3) = coeffs.triple(*t);
            println!("c1 = {}", format_sci(c1));
            println!("c2 = {}", format_sci(c2));
            println!("c3 = {}", format_sci(c3));
            println!(
                "bound_x = {}",
                format_sci(coeffs.total(*t, *dx0, *dv0, *dlam))
            );
            println!(
                "bound_v = {}",
                format_sci(coeffs.velocity(*t, *dx0, *dv0, *dlam))
            );
            if let Some(path) = csv {
                if *points < 2 {
                    bail!(StabilityError::InvalidInput(
                        "--points must be at least 2".into()
                    ));
                }
                let mut out = String::from("t,c1,c2,c3\n");
                for i in 0..*points {
                    let s = horizon * i as f64 / (*points - 1) as f64;
                    let (a, b, c) = coeffs.triple(s);
                    out.push_str(&[s, a, b, c].map(format_sci).join(","));
                    out.push('\n');
                }
                write_atomic(path, &out)?;
            }
            Ok(0)
        }
        Command::Integrate { lambda } => {
            let cfg = load_config(cli)?;
            let family = cfg.build_family()?;
            let lam = match lambda {
                Some(v) => Parameter::new(vec![*v])?,
                None => family.lambda_bar().clone(),
            };
            let opts = cfg.sweep_options()?;
            let traj = paramstab::suite::trajectory_at(&family, &lam, opts.steps, opts.norm)?;
            let path = cli.out.join("trajectory.csv");
            write_atomic(&path, &traj.to_csv_string())?;
            println!("err_est = {}", format_sci(traj.err_est()));
            println!("wrote {}", path.display());
            Ok(0)
        }
        Command::Sweep => {
            let cfg = load_config(cli)?;
            emit_sweep(
                cli,
                &cfg,
                "sweep",
                "Deviation and bound against λ",
                cli.plot,
            )
        }
        Command::ReproduceFig3 => {
            let cfg = load_config(cli)?;
            let fixed = emit_sweep(
                cli,
                &cfg,
                "fig3_unperturbed",
                "Observation deviation, initial data fixed",
                true,
            )?;
            let shifted = emit_sweep(
                cli,
                &with_shifted_initial(&cfg)?,
                "fig3_perturbed",
                "Observation deviation, x0 = (1+λ, 1+λ)",
                true,
            )?;
            Ok(fixed.max(shifted))
        }
        Command::Verify { families } => {
            let cfg = load_config(cli)?;
            let options = cfg.sweep_options()?;
            let model = serde_json::to_value(cfg.model)?;
            let model = model.as_str().unwrap_or("model");
            let mut extra = Vec::new();
            for (suffix, c) in [
                ("", cfg.clone()),
                ("-shifted-initial", with_shifted_initial(&cfg)?),
            ] {
                extra.push((
                    format!("certify-{model}{suffix}"),
                    c.build_family()?,
                    c.lambdas()?,
                    options,
                ));
            }
            let outcomes = run_suite(&SuiteOptions {
                seed: options.seed,
                families: *families,
                steps: options.steps,
                extra,
                ..SuiteOptions::default()
            });
            for o in &outcomes {
                println!("{o}");
            }
            Ok(if outcomes.iter().all(|o| o.passed) {
                0
            } else {
                1
            })
        }
    }
}

fn error_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<StabilityError>() {
        Some(StabilityError::NonFiniteState { .. }) => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(error_code(&e))
        }
    }
}
