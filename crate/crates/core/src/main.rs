use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use towermdc::config::{self, BodeKind, ConfigError, PsiChoice, RunConfig};
use towermdc::freqdom::{bode_sweep, rga, BodeTarget};
use towermdc::io::{self, RgaRow};
use towermdc::sigproc::{default_segment_len, stddev_metrics, welch_psd, Window};
use towermdc::simulate::{
    initial_state, residual_1p_amplitude, run_simulation, SimulationTrace, TraceRow,
};

#[derive(Parser)]
#[command(
    name = "towermdc",
    version,
    about = "MDC tower load control: simulation and frequency-domain analysis"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// Config file, or the name of a bundled preset.
    #[arg(long)]
    config: String,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Run a closed-loop simulation and write the trace.
    Sim {
        #[command(flatten)]
        common: Common,
        /// Treat divergence as the expected outcome.
        #[arg(long)]
        expect_divergence: bool,
    },
    /// Bode tables for the configured targets.
    Bode {
        #[command(flatten)]
        common: Common,
    },
    /// Steady-state RGA over a rotor-speed grid.
    Rga {
        #[command(flatten)]
        common: Common,
    },
    /// Phase-offset and gain scheduling tables.
    Tables {
        #[command(flatten)]
        common: Common,
    },
    /// Welch PSD of trace signals.
    Psd {
        #[command(flatten)]
        common: Common,
    },
}

enum Failure {
    Config(String),
    Runtime(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.to_string())
    }
}

fn runtime(e: impl std::fmt::Display) -> Failure {
    Failure::Runtime(e.to_string())
}

/// Four significant figures.
fn sig4(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let mag = x.abs().log10().floor() as i32;
    if !(-3..4).contains(&mag) {
        format!("{x:.3e}")
    } else {
        format!("{:.*}", (3 - mag).max(0) as usize, x)
    }
}

fn prepare_out(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(|e| runtime(format!("cannot create {}: {e}", dir.display())))
}

fn simulate(cfg: &RunConfig) -> Result<SimulationTrace, Failure> {
    let scenario = cfg.wind_scenario()?;
    let dt = cfg.scenario_config()?.dt;
    let mut controllers = cfg.controller_set()?;
    let init = initial_state(&cfg.turbine, scenario.initial_wind()).map_err(runtime)?;
    run_simulation(&cfg.turbine, &mut controllers, &scenario, dt, init).map_err(runtime)
}

fn cmd_sim(cfg: &RunConfig, out: &Path, expect_divergence: bool) -> Result<(), Failure> {
    prepare_out(out)?;
    let trace = simulate(cfg)?;
    let path = out.join("trace.csv");
    io::write_trace_csv(&path, &trace).map_err(runtime)?;
    println!("trace      {} ({} rows)", path.display(), trace.rows.len());
    println!("diverged   {}", trace.diverged);
    if let Some(t) = trace.diverged_at {
        println!("diverged_at {} s", sig4(t));
    }

    if !trace.diverged {
        let end = trace.duration();
        let window = cfg.analysis.window.unwrap_or(((end - 100.0).max(0.0), end));
        match residual_1p_amplitude(&trace, window) {
            Ok(r) => {
                println!("window     [{}, {}] s", sig4(window.0), sig4(window.1));
                println!("xdot_1p    {} m/s", sig4(r.xdot));
                println!("dtg_1p     {} N m", sig4(r.dtg));
            }
            Err(e) => println!("residual   unavailable: {e}"),
        }
        let p = &cfg.turbine;
        if cfg.analysis.skip_s < end {
            let m = stddev_metrics(&trace, cfg.analysis.skip_s, p.g_box, p.gen_efficiency);
            println!("sigma_xdot {} m/s", sig4(m.sigma_xdot));
            println!("sigma_dtg  {} N m", sig4(m.sigma_dtg_total));
            println!("sigma_P    {} W", sig4(m.sigma_power));
        }
    }

    match (trace.diverged, expect_divergence) {
        (true, false) => Err(Failure::Runtime(format!(
            "simulation diverged at t = {} s",
            sig4(trace.diverged_at.unwrap_or(f64::NAN))
        ))),
        (false, true) => Err(Failure::Runtime(
            "divergence was expected but the run stayed bounded".into(),
        )),
        _ => Ok(()),
    }
}

fn psi_for(cfg: &RunConfig, omega_r: f64) -> Result<f64, Failure> {
    match cfg.analysis.psi_off {
        PsiChoice::Fixed(p) => Ok(p),
        PsiChoice::Optimal => Ok(-cfg.g_prime().freq_response(omega_r).map_err(runtime)?.arg()),
    }
}

fn cmd_bode(cfg: &RunConfig, out: &Path) -> Result<(), Failure> {
    prepare_out(out)?;
    let g = cfg.g_prime();
    let grid = &cfg.analysis.omega_grid;
    let need_spec = || {
        cfg.controller
            .mdc
            .ok_or_else(|| Failure::Config("this Bode target needs controller.mdc".into()))
    };
    for &kind in &cfg.analysis.bode_targets {
        let targets: Vec<(String, BodeTarget)> = match kind {
            BodeKind::Plant => vec![("bode_plant".into(), BodeTarget::Plant(g.clone()))],
            _ => cfg
                .analysis
                .omega_r
                .iter()
                .map(|&w| {
                    let psi_off = psi_for(cfg, w)?;
                    let t = match kind {
                        BodeKind::DemodPlant => BodeTarget::DemodPlant {
                            plant: g.clone(),
                            omega_r: w,
                            psi_off,
                        },
                        BodeKind::ModulatedController => BodeTarget::ModulatedController {
                            spec: need_spec()?,
                            omega_r: w,
                            psi_off,
                        },
                        _ => BodeTarget::Loop {
                            plant: g.clone(),
                            spec: need_spec()?,
                            omega_r: w,
                            psi_off,
                        },
                    };
                    Ok((format!("bode_{}_wr{w}", kind.name()), t))
                })
                .collect::<Result<_, Failure>>()?,
        };
        for (name, target) in targets {
            let table = bode_sweep(&target, grid).map_err(|e| Failure::Config(e.to_string()))?;
            let path = out.join(format!("{name}.csv"));
            io::write_bode_csv(&path, &table).map_err(runtime)?;
            let mags = table.magnitudes(0);
            let (i, peak) = mags
                .iter()
                .enumerate()
                .filter(|(_, m)| m.is_finite())
                .fold((0, f64::MIN), |b, (i, &m)| if m > b.1 { (i, m) } else { b });
            println!(
                "{}  peak {} dB at {} rad/s",
                path.display(),
                sig4(peak),
                sig4(table.rows[i].omega)
            );
        }
    }
    Ok(())
}

fn cmd_rga(cfg: &RunConfig, out: &Path) -> Result<(), Failure> {
    prepare_out(out)?;
    let g = cfg.g_prime();
    let mut rows = Vec::with_capacity(cfg.analysis.rga_grid.len());
    for &w in &cfg.analysis.rga_grid {
        let plain = rga(&g, w, 0.0);
        let offset = g
            .freq_response(w)
            .ok()
            .and_then(|z| rga(&g, w, -z.arg()).ok());
        rows.push(match (plain, offset) {
            (Ok(a), Some(b)) => RgaRow {
                omega_r: w,
                lambda11_abs_no_offset: a.lambda11_abs,
                lambda12_abs_no_offset: a.lambda12_abs,
                lambda11_abs_offset: b.lambda11_abs,
                lambda12_abs_offset: b.lambda12_abs,
                undefined: 0,
            },
            _ => RgaRow {
                omega_r: w,
                lambda11_abs_no_offset: f64::NAN,
                lambda12_abs_no_offset: f64::NAN,
                lambda11_abs_offset: f64::NAN,
                lambda12_abs_offset: f64::NAN,
                undefined: 1,
            },
        });
    }
    let path = out.join("rga.csv");
    io::write_rga_csv(&path, &rows).map_err(runtime)?;
    let undefined = rows.iter().filter(|r| r.undefined == 1).count();
    println!(
        "{}  {} rows, {} undefined",
        path.display(),
        rows.len(),
        undefined
    );
    Ok(())
}

fn cmd_tables(cfg: &RunConfig, out: &Path) -> Result<(), Failure> {
    prepare_out(out)?;
    let tables = cfg.tables()?;
    let path = out.join("tables.csv");
    io::write_tables_csv(&path, &tables).map_err(runtime)?;
    let (i, gmin) = tables
        .gamma
        .iter()
        .enumerate()
        .fold((0, f64::MAX), |b, (i, &g)| if g < b.1 { (i, g) } else { b });
    println!(
        "{}  {} rows, min gamma {} at {} rad/s",
        path.display(),
        tables.omega_r.len(),
        sig4(gmin),
        sig4(tables.omega_r[i])
    );
    Ok(())
}

fn signal(name: &str) -> Option<fn(&TraceRow, &RunConfig) -> f64> {
    Some(match name {
        "xdot" => |r, _| r.xdot,
        "dtg" => |r, _| r.dtg,
        "dtg_total" => |r, _| r.dtg + r.dtg_damp,
        "omega_r" => |r, _| r.omega_r,
        "power" => |r, c| c.turbine.gen_efficiency * r.omega_r * c.turbine.g_box * r.tg_total(),
        _ => return None,
    })
}

fn cmd_psd(cfg: &RunConfig, out: &Path) -> Result<(), Failure> {
    prepare_out(out)?;
    let trace = match &cfg.analysis.psd_input {
        Some(p) => io::read_trace_csv(p).map_err(|e| Failure::Config(e.to_string()))?,
        None => simulate(cfg)?,
    };
    let rows: Vec<&TraceRow> = trace
        .rows
        .iter()
        .filter(|r| r.t >= cfg.analysis.skip_s)
        .collect();
    for name in &cfg.analysis.psd_signals {
        let f =
            signal(name).ok_or_else(|| Failure::Config(format!("unknown PSD signal `{name}`")))?;
        let series: Vec<f64> = rows.iter().map(|r| f(r, cfg)).collect();
        let seg = cfg
            .analysis
            .psd_segment_len
            .unwrap_or_else(|| default_segment_len(series.len()));
        let psd = welch_psd(
            &series,
            trace.dt,
            seg,
            cfg.analysis.psd_overlap,
            Window::Hann,
        )
        .map_err(runtime)?;
        let path = out.join(format!("psd_{name}.csv"));
        io::write_psd_csv(&path, &psd).map_err(runtime)?;
        let (_, w_peak) = psd.peak();
        println!(
            "{}  peak at {} rad/s, variance {}",
            path.display(),
            sig4(w_peak),
            sig4(psd.integral())
        );
    }
    Ok(())
}

type Handler = dyn Fn(&RunConfig, &Path) -> Result<(), Failure>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let (common, run): (&Common, &Handler) = match &cli.command {
        Command::Sim {
            common,
            expect_divergence,
        } => {
            let e = *expect_divergence;
            (common, &move |c, o| cmd_sim(c, o, e))
        }
        Command::Bode { common } => (common, &cmd_bode),
        Command::Rga { common } => (common, &cmd_rga),
        Command::Tables { common } => (common, &cmd_tables),
        Command::Psd { common } => (common, &cmd_psd),
    };
    let result = config::load(&common.config)
        .map_err(Failure::from)
        .and_then(|cfg| run(&cfg, &common.out));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("config error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
