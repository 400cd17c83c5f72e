mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ipad::data::{self, Dataset, ResponseColumn};
use ipad::forecast::{self, ForecastOptions, Method, SeriesPanel};
use ipad::inference::{SelectionResult, StatisticKind};
use ipad::pipeline::{self, ForestParams, IpadOptions};
use ipad::simlab::{self, Design, DesignSpec};
use ipad::{IpadError, SeedSpec};
use serde::Serialize;

use config::{Common, FileConfig, ForecastArgs, SelectArgs, SimulateArgs};

#[derive(Parser)]
#[command(name = "ipad", version, about = "Knockoff variable selection for factor-driven designs")]
struct Cli {
    /// TOML config file; command-line flags override its values
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Monte Carlo study of FDR and power on a synthetic design
    Simulate(SimulateArgs),
    /// Select variables on a user data set
    Select(SelectArgs),
    /// Rolling one-step-ahead forecast comparison on a panel
    Forecast(ForecastArgs),
}

/// Validation problems exit with 2, failures while computing with 1.
enum Failure {
    Validation(String),
    Runtime(String),
}

impl From<IpadError> for Failure {
    fn from(e: IpadError) -> Self {
        use IpadError::*;
        match e {
            Io { .. } | Csv(_) | RaggedRow { .. } | NonNumeric { .. } | MissingColumn(_)
            | ZeroNormColumn { .. } | DimensionMismatch { .. } | NonFinite(_)
            | InvalidArgument(_) => Failure::Validation(e.to_string()),
            RankDeficient { .. } | NotConverged { .. } | SvdFailure => {
                Failure::Runtime(e.to_string())
            }
        }
    }
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure::Validation(msg.into())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}

fn read_config(path: &Path) -> Result<FileConfig, Failure> {
    let text = fs::read_to_string(path)
        .map_err(|e| invalid(format!("cannot read {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| invalid(format!("config {}: {e}", path.display())))
}

/// Resolved settings of one invocation, echoed to `config.toml` in the same
/// layout the config file uses.
struct Resolved {
    seed: u64,
    threads: usize,
    out: PathBuf,
}

impl Resolved {
    fn echo(&self, section: FileConfig) -> FileConfig {
        FileConfig {
            master_seed: Some(self.seed),
            parallelism: Some(self.threads),
            output_dir: Some(self.out.clone()),
            ..section
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let file = match &cli.config {
        Some(p) => read_config(p)?,
        None => FileConfig::default(),
    };
    let common = cli.common.overlay(Some(file.common()));
    let threads = match common.parallelism {
        Some(0) => return Err(invalid("parallelism must be at least 1")),
        Some(t) => t,
        None => std::thread::available_parallelism().map_or(1, |n| n.get()),
    };
    let out = common
        .output_dir
        .or_else(|| std::env::var_os("IPAD_OUTPUT_DIR").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("ipad-out"));
    let res = Resolved {
        seed: common.master_seed.unwrap_or(0),
        threads,
        out,
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Failure::Runtime(e.to_string()))?;

    match cli.command {
        Command::Simulate(a) => simulate(a.overlay(file.simulate), &res, &pool),
        Command::Select(a) => select(a.overlay(file.select), &res, &pool),
        Command::Forecast(a) => run_forecast(a.overlay(file.forecast), &res, &pool),
    }
}

fn prepare_output(res: &Resolved, echo: &FileConfig) -> Result<(), Failure> {
    let io = |e: std::io::Error| Failure::Runtime(format!("{}: {e}", res.out.display()));
    fs::create_dir_all(&res.out).map_err(io)?;
    let text = toml::to_string(echo).map_err(|e| Failure::Runtime(e.to_string()))?;
    fs::write(res.out.join("config.toml"), text).map_err(io)
}

fn positive(name: &str, v: usize) -> Result<usize, Failure> {
    if v == 0 {
        Err(invalid(format!("{name} must be positive")))
    } else {
        Ok(v)
    }
}

fn simulate(a: SimulateArgs, res: &Resolved, pool: &rayon::ThreadPool) -> Result<(), Failure> {
    let design = Design::parse(a.design.as_deref().unwrap_or("1"))?;
    let real_x = match (design, &a.x) {
        (Design::RealX, Some(path)) => {
            let table = data::read_numeric_table(path, true)?;
            let cols: Vec<usize> = (0..table.ncols()).collect();
            Some(table.matrix(&cols))
        }
        (Design::RealX, None) => return Err(invalid("design real_x needs --x <csv>")),
        (_, Some(_)) => return Err(invalid("--x is only used with design real_x")),
        (_, None) => None,
    };
    let (n, p) = match &real_x {
        Some(x) => {
            for (flag, given, actual) in [("n", a.n, x.nrows()), ("p", a.p, x.ncols())] {
                if given.is_some_and(|g| g != actual) {
                    return Err(invalid(format!(
                        "--{flag} {} disagrees with the design matrix ({actual})",
                        given.unwrap()
                    )));
                }
            }
            (x.nrows(), x.ncols())
        }
        None => (a.n.unwrap_or(500), a.p.unwrap_or(500)),
    };
    let base = DesignSpec::new(design, n, p, a.s.unwrap_or(25));
    let spec = DesignSpec {
        amplitude: a.amplitude.unwrap_or(base.amplitude),
        c: a.c.unwrap_or(base.c),
        r: a.r.unwrap_or(base.r),
        theta: a.theta.unwrap_or(base.theta),
        rho: a.rho.unwrap_or(base.rho),
        nu_df: a.nu.unwrap_or(base.nu_df),
        q: a.q.unwrap_or(base.q),
        reps: positive("reps", a.reps.unwrap_or(base.reps))?,
        seed: SeedSpec::new(res.seed, 0),
        oracle_knockoffs: a.oracle.unwrap_or(false),
        r_max: a.r_max.unwrap_or(base.r_max),
        forest: ForestParams {
            n_trees: positive("n_trees", a.n_trees.unwrap_or(base.forest.n_trees))?,
            ..base.forest
        },
        ..base
    };
    spec.validate()?;

    let echo = res.echo(FileConfig {
        simulate: Some(SimulateArgs {
            design: Some(design.label().to_string()),
            n: Some(n),
            p: Some(p),
            s: Some(spec.s),
            amplitude: Some(spec.amplitude),
            c: Some(spec.c),
            r: Some(spec.r),
            theta: Some(spec.theta),
            rho: Some(spec.rho),
            nu: Some(spec.nu_df),
            q: Some(spec.q),
            reps: Some(spec.reps),
            r_max: Some(spec.r_max),
            oracle: Some(spec.oracle_knockoffs),
            n_trees: Some(spec.forest.n_trees),
            x: a.x.clone(),
        }),
        ..FileConfig::default()
    });
    prepare_output(res, &echo)?;
    let report = pool.install(|| simlab::run_monte_carlo(&spec, real_x.as_ref()))?;
    report.write(&res.out)?;
    if report.reps_completed == 0 {
        return Err(Failure::Runtime(format!(
            "all {} replications failed; see report.json",
            report.reps_failed
        )));
    }
    println!("{}", simlab::SimulationReport::CSV_HEADER);
    println!("{}", report.csv_row());
    Ok(())
}

fn parse_statistic(s: &str) -> Result<StatisticKind, Failure> {
    match s.trim().to_ascii_lowercase().as_str() {
        "lcd" => Ok(StatisticKind::Lcd),
        "mda_diff" | "mda" => Ok(StatisticKind::MdaDiff),
        other => Err(invalid(format!("unknown statistic '{other}' (expected lcd or mda_diff)"))),
    }
}

fn statistic_name(k: StatisticKind) -> &'static str {
    match k {
        StatisticKind::Lcd => "lcd",
        StatisticKind::MdaDiff => "mda_diff",
    }
}

#[derive(Serialize)]
struct SelectOutput<'a> {
    n: usize,
    p: usize,
    columns: &'a [String],
    r_hat: usize,
    sigma2_hat: f64,
    /// One entry per knockoff draw.
    selections: Vec<&'a SelectionResult>,
}

fn select(a: SelectArgs, res: &Resolved, pool: &rayon::ThreadPool) -> Result<(), Failure> {
    let x_path = a.x.clone().ok_or_else(|| invalid("select needs --x <csv>"))?;
    let y_path = a.y.clone().ok_or_else(|| invalid("select needs --y <csv>"))?;
    let header = a.header.unwrap_or(true);
    let xt = data::read_numeric_table(&x_path, header)?;
    let yt = data::read_numeric_table(&y_path, header)?;
    if yt.ncols() != 1 {
        return Err(invalid(format!(
            "{} must hold exactly one numeric column, found {}",
            y_path.display(),
            yt.ncols()
        )));
    }
    let cols: Vec<usize> = (0..xt.ncols()).collect();
    let raw = Dataset::new(xt.matrix(&cols), yt.column(0), xt.names.clone(), yt.names[0].clone())?;
    let (n, p) = (raw.n(), raw.p());
    if n < 4 || p < 2 {
        return Err(invalid(format!("select needs at least 4 rows and 2 columns, got {n} x {p}")));
    }
    let cap = (n.min(p) / 2).max(1);
    let r_max = a.r_max.unwrap_or(cap.min(8));
    if r_max == 0 || r_max > cap {
        return Err(invalid(format!("r_max must lie in 1..={cap} for a {n} x {p} design")));
    }
    let statistic = parse_statistic(a.statistic.as_deref().unwrap_or("lcd"))?;
    let opts = IpadOptions {
        q: a.q.unwrap_or(0.2),
        r_max,
        statistic,
        ..IpadOptions::default()
    };
    opts.validate()?;
    let draws = positive("draws", a.draws.unwrap_or(1))?;
    let plus = a.plus.unwrap_or(false);

    let echo = res.echo(FileConfig {
        select: Some(SelectArgs {
            x: Some(x_path),
            y: Some(y_path),
            header: Some(header),
            q: Some(opts.q),
            plus: Some(plus),
            statistic: Some(statistic_name(statistic).to_string()),
            draws: Some(draws),
            r_max: Some(r_max),
        }),
        ..FileConfig::default()
    });
    let (d, _) = data::standardize(&raw)?;
    prepare_output(res, &echo)?;
    let run = pool.install(|| pipeline::ipad(&d.x, &d.y, &opts, draws, SeedSpec::new(res.seed, 0)))?;

    let out = SelectOutput {
        n,
        p,
        columns: &raw.column_names,
        r_hat: run.r_hat,
        sigma2_hat: run.sigma2_hat,
        selections: run
            .draws
            .iter()
            .map(|o| if plus { &o.knockoff_plus } else { &o.knockoff })
            .collect(),
    };
    let json = serde_json::to_string_pretty(&out).map_err(|e| Failure::Runtime(e.to_string()))?;
    let write = |name: &str, body: String| {
        let path = res.out.join(name);
        fs::write(&path, body).map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))
    };
    write("selection.json", json + "\n")?;
    if draws > 1 {
        let freq = run.selection_frequency(p, plus);
        let mut csv = String::from("column,name,frequency\n");
        for (j, f) in freq.iter().enumerate() {
            csv.push_str(&format!("{},{},{f}\n", j + 1, raw.column_names[j]));
        }
        write("selection_frequency.csv", csv)?;
    }
    let first = out.selections[0];
    let names: Vec<&str> = first.selected.iter().map(|&j| raw.column_names[j].as_str()).collect();
    println!("selected {} of {p}: {}", names.len(), names.join(","));
    Ok(())
}

fn run_forecast(a: ForecastArgs, res: &Resolved, pool: &rayon::ThreadPool) -> Result<(), Failure> {
    let path = a.panel.clone().ok_or_else(|| invalid("forecast needs --panel <csv>"))?;
    let target = match a.target.as_deref() {
        None => ResponseColumn::Index(usize::MAX),
        Some(t) => match t.parse::<usize>() {
            Ok(i) => ResponseColumn::Index(i),
            Err(_) => ResponseColumn::Name(t.to_string()),
        },
    };
    let panel = match target {
        // First series, whether or not a date column precedes it.
        ResponseColumn::Index(usize::MAX) => {
            let table = data::read_numeric_table(&path, true)?;
            SeriesPanel::load(&path, table.names[0].as_str())?
        }
        t => SeriesPanel::load(&path, t)?,
    };
    let methods = match a.methods.as_deref() {
        Some(m) => Method::parse_list(m)?,
        None => ForecastOptions::default().methods,
    };
    let opts = ForecastOptions {
        window: a.window.unwrap_or(120),
        methods,
        draws: a.draws.unwrap_or(100),
        q: a.q.unwrap_or(0.2),
        plus: a.plus.unwrap_or(false),
        r_max: a.r_max.unwrap_or(forecast::MAX_FACTORS),
        seed: SeedSpec::new(res.seed, 0),
    };
    opts.validate()?;
    if panel.len() <= opts.window {
        return Err(invalid(format!(
            "panel has {} rows; a window of {} leaves nothing to forecast",
            panel.len(),
            opts.window
        )));
    }
    if panel.p() == 0 {
        return Err(invalid("panel needs at least one predictor series"));
    }

    let echo = res.echo(FileConfig {
        forecast: Some(ForecastArgs {
            panel: Some(path),
            target: Some(panel.target_name.clone()),
            window: Some(opts.window),
            methods: Some(opts.methods.iter().map(|m| m.name()).collect::<Vec<_>>().join(",")),
            draws: Some(opts.draws),
            q: Some(opts.q),
            plus: Some(opts.plus),
            r_max: Some(opts.r_max),
        }),
        ..FileConfig::default()
    });
    prepare_output(res, &echo)?;
    let report = pool.install(|| forecast::roll(&panel, &opts))?;
    report.write(&res.out)?;
    println!("method,rmse");
    for m in &report.methods {
        println!("{},{:.6}", m.method.name(), m.rmse);
    }
    Ok(())
}
