use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use eselect::gbs::make_clouds;
use eselect::io::{load_dataset, read_csv};
use eselect::screening::{sis_screen, ScreenMode};
use eselect::simbench::{run_scenario, Scenario, TauScale, BUILTIN_SCENARIOS};
use eselect::tuning::{grid_seed, mixed_grid, tune_select_deltas, TuningResult, LINEAR_GRID};
use eselect::{fit, select, DepthKind, EValueReport, Family, GbsConfig, ResampleForm};

mod failure;

use failure::{Failure, Outcome};

#[derive(Parser, Debug)]
#[command(
    name = "eselect",
    version,
    about = "Best-subset feature selection from bootstrap e-values"
)]
struct Cli {
    /// Worker threads (default: all cores). Output does not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Select features of a CSV dataset.
    Select(SelectArgs),
    /// Run a simulation scenario and print the aggregate table.
    Simulate(SimulateArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum FamilyArg {
    Ols,
    Lmm,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum DepthArg {
    Mahalanobis,
    Projection,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum TauScaleArg {
    None,
    LognSqrtlogp,
}

impl From<TauScaleArg> for TauScale {
    fn from(a: TauScaleArg) -> Self {
        match a {
            TauScaleArg::None => TauScale::None,
            TauScaleArg::LognSqrtlogp => TauScale::LognSqrtlogp,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Args, Debug)]
struct SelectArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    response: String,
    /// Integer column identifying groups (required for lmm).
    #[arg(long)]
    group_col: Option<String>,
    /// Comma-separated columns entering the random design next to the intercept.
    #[arg(long, value_delimiter = ',')]
    random_cols: Vec<String>,
    #[arg(long, value_enum, default_value = "ols")]
    family: FamilyArg,
    #[arg(long, value_enum, default_value = "mahalanobis")]
    depth: DepthArg,
    #[arg(long, default_value_t = eselect::depth::DEFAULT_N_DIRS)]
    ndirs: usize,
    /// Single resampling scale; skips GBIC tuning.
    #[arg(long, conflicts_with = "tau_grid")]
    tau: Option<f64>,
    /// Comma-separated grid tuned by GBIC.
    #[arg(long, value_delimiter = ',')]
    tau_grid: Option<Vec<f64>>,
    /// Multiplier for --tau / --tau-grid.
    #[arg(long, value_enum)]
    tau_scale: Option<TauScaleArg>,
    #[arg(long, conflicts_with = "delta_grid")]
    delta: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    delta_grid: Option<Vec<f64>>,
    #[arg(long = "R", default_value_t = eselect::gbs::DEFAULT_R)]
    r: usize,
    #[arg(long = "R1", default_value_t = eselect::gbs::DEFAULT_R)]
    r1: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// auto, off or d=<int>.
    #[arg(long, default_value = "auto")]
    screen: String,
    /// Use the H^{-1} one-step map instead of H^{-1/2}/a_n.
    #[arg(long)]
    sandwich: bool,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Directory receiving the bootstrap clouds as CSV.
    #[arg(long)]
    dump_clouds: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// One of linear-s1, linear-s2, linear-s3, highdim, mixed-s1, mixed-s2.
    #[arg(required_unless_present = "config", conflicts_with = "config")]
    scenario: Option<String>,
    /// TOML scenario file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_delimiter = ',')]
    delta_grid: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    tau_grid: Option<Vec<f64>>,
    #[arg(long, value_enum)]
    tau_scale: Option<TauScaleArg>,
    #[arg(long = "R")]
    r: Option<usize>,
    #[arg(long = "R1")]
    r1: Option<usize>,
    #[arg(long, value_enum)]
    depth: Option<DepthArg>,
    #[arg(long, default_value_t = eselect::depth::DEFAULT_N_DIRS)]
    ndirs: usize,
    #[arg(long)]
    screen: Option<String>,
    #[arg(long)]
    sandwich: bool,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn depth_kind(arg: DepthArg, ndirs: usize) -> DepthKind {
    match arg {
        DepthArg::Mahalanobis => DepthKind::Mahalanobis,
        DepthArg::Projection => DepthKind::Projection { n_dirs: ndirs },
    }
}

fn form(sandwich: bool) -> ResampleForm {
    if sandwich {
        ResampleForm::Sandwich
    } else {
        ResampleForm::Printed
    }
}

fn emit(out: Option<&Path>, body: &[u8]) -> Outcome<()> {
    match out {
        Some(p) => std::fs::write(p, body).map_err(|e| Failure::output(format!("{}: {e}", p.display()))),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(body)
                .and_then(|_| stdout.flush())
                .map_err(|e| Failure::output(e.to_string()))
        }
    }
}

fn report_json(report: &EValueReport, names: &[String], seed: u64) -> Value {
    let features: Vec<Value> = names
        .iter()
        .enumerate()
        .map(|(j, name)| {
            json!({
                "name": name,
                "evalue": report.dropone_evalues[j],
                "selected": report.selected.contains(&j),
            })
        })
        .collect();
    json!({
        "tau_n": report.tau_n,
        "delta": report.delta,
        "full_evalue": report.full_evalue,
        "features": features,
        "selected": report.selected.iter().map(|&j| &names[j]).collect::<Vec<_>>(),
        "seed": seed,
    })
}

fn tuning_json(res: &TuningResult, names: &[String]) -> Value {
    let best = res.best_point();
    let grid: Vec<Value> = res
        .grid
        .iter()
        .map(|g| {
            json!({
                "tau_n": g.tau_n,
                "seed": g.seed,
                "gbic": g.gbic,
                "selected": g.selected.iter().map(|&j| &names[j]).collect::<Vec<_>>(),
            })
        })
        .collect();
    let mut out = report_json(&best.report, names, best.seed);
    out["gbic"] = json!(best.gbic);
    out["refit"] = json!(best.refit);
    out["grid"] = Value::Array(grid);
    out
}

fn dump_cloud(dir: &Path, tag: &str, fit: &eselect::FittedModel, cfg: &GbsConfig) -> Outcome<()> {
    std::fs::create_dir_all(dir).map_err(|e| Failure::output(format!("{}: {e}", dir.display())))?;
    let (t, t1) = make_clouds(fit, cfg)?;
    for (cloud, name) in [(t, "T"), (t1, "T1")] {
        let path = dir.join(format!("{tag}_{name}.csv"));
        let file = File::create(&path).map_err(|e| Failure::output(format!("{}: {e}", path.display())))?;
        cloud.write_csv(BufWriter::new(file))?;
    }
    Ok(())
}

fn cmd_select(a: SelectArgs) -> Outcome<()> {
    let file = File::open(&a.data).map_err(|e| Failure::input(format!("{}: {e}", a.data.display())))?;
    let table = read_csv(file)?;
    let random_cols: Vec<String> = a.random_cols.iter().filter(|c| !c.is_empty()).cloned().collect();
    if matches!(a.family, FamilyArg::Lmm) && a.group_col.is_none() {
        return Err(Failure::input("--family lmm needs --group-col".into()));
    }
    if matches!(a.family, FamilyArg::Ols) && !random_cols.is_empty() {
        return Err(Failure::input("--random-cols applies to --family lmm only".into()));
    }
    let group_col = match a.family {
        FamilyArg::Lmm => a.group_col.as_deref(),
        FamilyArg::Ols => None,
    };
    let loaded = load_dataset(&table, &a.response, group_col, &random_cols)?;
    let data = loaded.data;
    let (n, p) = (data.n(), data.p());
    let all_names = data.feature_names().to_vec();

    let screen: ScreenMode = a.screen.parse()?;
    let kept: Vec<usize> = match screen.target(n, p) {
        Some(d) => sis_screen(&data, d.min(p)),
        None => (0..p).collect(),
    };
    let screened = kept.len() < p;
    let work = if screened { data.select_features(&kept) } else { data };
    let names = work.feature_names().to_vec();

    let family = match loaded.random_design {
        Some(random_design) => Family::Lmm { random_design },
        None => Family::Ols,
    };
    let full = fit(&work, &family)?;

    let depth = depth_kind(a.depth, a.ndirs);
    let deltas = match (a.delta, a.delta_grid) {
        (Some(d), _) => vec![d],
        (None, Some(g)) => g,
        (None, None) => vec![0.0],
    };
    if let Some(d) = deltas.iter().find(|d| !(**d > -1.0 && d.is_finite())) {
        return Err(Failure::input(format!("delta must exceed -1, got {d}")));
    }
    let is_lmm = matches!(family, Family::Lmm { .. });
    let tau_scale: TauScale = match (a.tau_scale, a.tau, &a.tau_grid) {
        (Some(s), _, _) => s.into(),
        (None, None, None) if !is_lmm => TauScale::LognSqrtlogp,
        _ => TauScale::None,
    };
    // the multiplier uses the dimension before screening
    let factor = tau_scale.factor(n, p);
    let template = GbsConfig {
        tau_n: 1.0,
        r: a.r,
        r1: a.r1,
        seed: a.seed,
        form: form(a.sandwich),
    };

    let (tau_grid, results): (Vec<f64>, Vec<Value>) = if let Some(tau) = a.tau {
        let cfg = GbsConfig {
            tau_n: tau * factor,
            ..template.clone()
        };
        let report = select(&full.fitted, &cfg, deltas[0], &depth)?;
        if let Some(dir) = &a.dump_clouds {
            dump_cloud(dir, "tau0", &full.fitted, &cfg)?;
        }
        let results = deltas
            .iter()
            .map(|&d| report_json(&report.with_delta(d), &names, cfg.seed))
            .collect();
        (vec![cfg.tau_n], results)
    } else {
        let base = a
            .tau_grid
            .clone()
            .unwrap_or_else(|| if is_lmm { mixed_grid() } else { LINEAR_GRID.to_vec() });
        let grid: Vec<f64> = base.iter().map(|t| t * factor).collect();
        let tuned = tune_select_deltas(&work, &full, &grid, &deltas, &template, &depth)?;
        if let Some(dir) = &a.dump_clouds {
            for (k, &tau_n) in grid.iter().enumerate() {
                let cfg = GbsConfig {
                    tau_n,
                    seed: grid_seed(a.seed, k),
                    ..template.clone()
                };
                dump_cloud(dir, &format!("tau{k}"), &full.fitted, &cfg)?;
            }
        }
        (grid, tuned.iter().map(|r| tuning_json(r, &names)).collect())
    };

    let screening = json!({
        "mode": a.screen,
        "applied": screened,
        "n": n,
        "p": p,
        "kept": kept.len(),
        "default_size": eselect::screening::default_screen_size(n, p),
        "features": kept.iter().map(|&j| &all_names[j]).collect::<Vec<_>>(),
    });
    let mut config = json!({
        "data": a.data.display().to_string(),
        "response": a.response,
        "family": family.name(),
        "depth": depth,
        "tau_grid": tau_grid,
        "tau_scale": tau_scale,
        "tau_scale_factor": factor,
        "tuned": a.tau.is_none(),
        "deltas": deltas,
        "R": a.r,
        "R1": a.r1,
        "seed": a.seed,
        "form": template.form,
        "screen": a.screen,
    });
    if let Some(g) = group_col {
        config["group_col"] = json!(g);
        config["random_cols"] = json!(random_cols);
    }
    if let Some(m) = full.mixed() {
        config["lmm"] = json!({
            "iterations": m.diagnostics.iterations,
            "converged": m.diagnostics.converged,
            "psd_projected": m.diagnostics.psd_projected,
            "sigma2_hat": m.sigma2_hat,
        });
    }
    let out = json!({
        "schema": 1,
        "command": "select",
        "config": config,
        "screening": screening,
        "results": results,
    });
    let mut body = serde_json::to_vec_pretty(&out).expect("json values serialize");
    body.push(b'\n');
    emit(a.out.as_deref(), &body)
}

fn cmd_simulate(a: SimulateArgs) -> Outcome<()> {
    let mut scenario = match (&a.scenario, &a.config) {
        (_, Some(path)) => Scenario::from_path(path)?,
        (Some(name), None) => Scenario::builtin(name).ok_or_else(|| {
            Failure::input(format!(
                "unknown scenario {name:?}; expected one of {}",
                BUILTIN_SCENARIOS.join(", ")
            ))
        })?,
        (None, None) => unreachable!("clap requires a scenario or --config"),
    };
    if let Some(r) = a.reps {
        scenario.reps = r;
    }
    if let Some(s) = a.seed {
        scenario.seed = s;
    }
    let m = &mut scenario.method;
    if let Some(g) = a.delta_grid {
        m.deltas = g;
    }
    if let Some(g) = a.tau_grid {
        m.tau_grid = g;
    }
    if let Some(s) = a.tau_scale {
        m.tau_scale = s.into();
    }
    if let Some(r) = a.r {
        m.r = r;
    }
    if let Some(r) = a.r1 {
        m.r1 = r;
    }
    if let Some(d) = a.depth {
        m.depth = depth_kind(d, a.ndirs);
    }
    if let Some(s) = &a.screen {
        m.screen = s.parse()?;
    }
    if a.sandwich {
        m.form = ResampleForm::Sandwich;
    }
    if let Some(d) = m.deltas.iter().find(|d| !(**d > -1.0 && d.is_finite())) {
        return Err(Failure::input(format!("delta must exceed -1, got {d}")));
    }
    let report = run_scenario(&scenario)?;
    let body = match a.format {
        Format::Csv => {
            let mut buf = Vec::new();
            report.write_csv(&mut buf)?;
            buf
        }
        Format::Json => {
            let mut b = serde_json::to_vec_pretty(&report).expect("report serializes");
            b.push(b'\n');
            b
        }
    };
    emit(a.out.as_deref(), &body)
}

fn run(cli: Cli) -> Outcome<()> {
    let pool = {
        let mut b = rayon::ThreadPoolBuilder::new();
        if let Some(t) = cli.threads {
            if t == 0 {
                return Err(Failure::input("--threads must be at least 1".into()));
            }
            b = b.num_threads(t);
        }
        b.build().map_err(|e| Failure::output(e.to_string()))?
    };
    pool.install(|| match cli.command {
        Command::Select(a) => cmd_select(a),
        Command::Simulate(a) => cmd_simulate(a),
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
