//! `netcrf`: simulate network-treatment data, fit the linear and causal
//! reduced-form estimators, and rerun the Monte Carlo tables.
//!
//! Exit codes: 0 success, 2 usage error, 3 data error, 4 numerical failure.

mod config;

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;
use netcrf::io::{read_frame_csv, read_observed_frame, write_effect_table_csv, write_frame_csv};
use netcrf::montecarlo::TableOverrides;
use netcrf::{
    build_design, build_geometric_network, degree_stats, generate_positions, replicate_table, simulate_frame,
    DegreeSummary, ModelSpec, SampleFrame, TableId,
};

use config::RunConfig;

#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Data(String),
    Numerical(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Data(_) => 3,
            Failure::Numerical(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Data(m) | Failure::Numerical(m) => m,
        }
    }
}

impl From<netcrf::Error> for Failure {
    fn from(e: netcrf::Error) -> Self {
        if e.is_usage() {
            Failure::Usage(e.to_string())
        } else if e.is_numerical() {
            Failure::Numerical(e.to_string())
        } else {
            Failure::Data(e.to_string())
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Data(format!("I/O error: {e}"))
    }
}

type CliResult<T = ()> = Result<T, Failure>;

#[derive(Parser)]
#[command(name = "netcrf", version, about = "Direct, network and interaction effects under randomized treatment on a network")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct Shared {
    /// JSON run configuration; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (created if missing).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a network and outcomes; writes frame.csv.
    Simulate {
        #[command(flatten)]
        shared: Shared,
        /// Scenario: i, ii, iii or iv.
        #[arg(long)]
        scenario: Option<String>,
        #[arg(long)]
        n_units: Option<usize>,
        #[arg(long)]
        radius: Option<f64>,
        /// Also write network.json.
        #[arg(long)]
        write_network: bool,
    },
    /// Fit one or more model specs to a frame or to node/edge files.
    Fit {
        #[command(flatten)]
        shared: Shared,
        /// Frame CSV with columns id,y,d,t,f.
        #[arg(long, conflicts_with_all = ["nodes", "edges"])]
        frame: Option<PathBuf>,
        /// Node CSV with columns id,y,d.
        #[arg(long, requires = "edges")]
        nodes: Option<PathBuf>,
        /// Edge CSV with columns src,dst.
        #[arg(long, requires = "nodes")]
        edges: Option<PathBuf>,
        /// Model spec, e.g. `tr` or `crf2:J=2,t_order=1`; repeatable.
        #[arg(long = "spec")]
        specs: Vec<String>,
    },
    /// Rerun a Monte Carlo table and compare with the reference values.
    Replicate {
        #[command(flatten)]
        shared: Shared,
        /// table1 or table2.
        table: Option<String>,
        #[arg(long)]
        reps: Option<usize>,
        #[arg(long)]
        radius: Option<f64>,
        #[arg(long)]
        n_units: Option<usize>,
    },
    /// Friend-count summary of a geometric network draw.
    DegreeStats {
        #[command(flatten)]
        shared: Shared,
        #[arg(long)]
        n_units: Option<usize>,
        #[arg(long)]
        radius: Option<f64>,
        /// Find the radius giving this mean friend count among units with friends.
        #[arg(long)]
        calibrate_mean_degree: Option<f64>,
    },
}

const DEFAULT_N_UNITS: usize = 2000;
const DEFAULT_SEED: u64 = 1;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}

fn load(shared: &Shared) -> CliResult<RunConfig> {
    let mut cfg = RunConfig::load(shared.config.as_deref())?;
    if shared.seed.is_some() {
        cfg.seed = shared.seed;
    }
    if shared.out.is_some() {
        cfg.out = shared.out.clone();
    }
    Ok(cfg)
}

fn override_opt<T>(slot: &mut Option<T>, flag: Option<T>) {
    if flag.is_some() {
        *slot = flag;
    }
}

fn run(command: Command) -> CliResult {
    match command {
        Command::Simulate {
            shared,
            scenario,
            n_units,
            radius,
            write_network,
        } => {
            let mut cfg = load(&shared)?;
            if let Some(s) = scenario {
                cfg.scenario = Some(s.parse()?);
            }
            override_opt(&mut cfg.n_units, n_units);
            override_opt(&mut cfg.radius, radius);
            if write_network {
                cfg.write_network = Some(true);
            }
            cmd_simulate(&cfg)
        }
        Command::Fit {
            shared,
            frame,
            nodes,
            edges,
            specs,
        } => {
            let mut cfg = load(&shared)?;
            if frame.is_some() {
                cfg.frame = frame;
                cfg.nodes = None;
                cfg.edges = None;
            }
            if nodes.is_some() {
                cfg.frame = None;
                cfg.nodes = nodes;
                cfg.edges = edges;
            }
            if !specs.is_empty() {
                cfg.specs = Some(specs.iter().map(|s| s.parse()).collect::<Result<_, _>>()?);
            }
            cmd_fit(&cfg)
        }
        Command::Replicate {
            shared,
            table,
            reps,
            radius,
            n_units,
        } => {
            let mut cfg = load(&shared)?;
            override_opt(&mut cfg.table, table);
            override_opt(&mut cfg.reps, reps);
            override_opt(&mut cfg.radius, radius);
            override_opt(&mut cfg.n_units, n_units);
            cmd_replicate(&cfg)
        }
        Command::DegreeStats {
            shared,
            n_units,
            radius,
            calibrate_mean_degree,
        } => {
            let mut cfg = load(&shared)?;
            override_opt(&mut cfg.n_units, n_units);
            override_opt(&mut cfg.radius, radius);
            override_opt(&mut cfg.calibrate_mean_degree, calibrate_mean_degree);
            cmd_degree_stats(&cfg)
        }
    }
}

/// Creates the output directory and opens `name` inside it for writing.
fn create_output(dir: &Path, name: &str) -> CliResult<(PathBuf, BufWriter<File>)> {
    fs::create_dir_all(dir).map_err(|e| Failure::Data(format!("cannot create {}: {e}", dir.display())))?;
    let path = dir.join(name);
    let file = File::create(&path).map_err(|e| Failure::Data(format!("cannot write {}: {e}", path.display())))?;
    Ok((path, BufWriter::new(file)))
}

fn print_degree_summary(s: &DegreeSummary) {
    println!(
        "units {}  with friends {} ({:.1}%)  mean F {:.3}  sd F {:.3}  max F {}",
        s.n,
        s.retained,
        100.0 * s.retained_fraction,
        s.mean_f,
        s.sd_f,
        s.max_f
    );
    if let (Some(m), Some(sd)) = (s.mean_t, s.sd_t) {
        println!("mean T {m:.3}  sd T {sd:.3}");
    }
}

fn cmd_simulate(cfg: &RunConfig) -> CliResult {
    let mut cfg = cfg.clone();
    cfg.seed.get_or_insert(DEFAULT_SEED);
    cfg.n_units.get_or_insert(DEFAULT_N_UNITS);
    cfg.radius.get_or_insert(netcrf::graph::DEFAULT_RADIUS);
    cfg.scenario.get_or_insert(netcrf::Scenario::I);
    let params = cfg.dgp_params();
    params.validate()?;
    let (seed, n, radius) = (cfg.seed.unwrap(), cfg.n_units.unwrap(), cfg.radius.unwrap());

    let dir = cfg.out_dir();
    let (frame_path, mut frame_out) = create_output(&dir, "frame.csv")?;
    let network_out = if cfg.write_network == Some(true) {
        Some(create_output(&dir, "network.json")?)
    } else {
        None
    };

    let positions = generate_positions(n, netcrf::rng::child_seed(seed, netcrf::rng::Stream::Positions))?;
    let network = build_geometric_network(&positions, radius)?;
    let sim = simulate_frame(&network, &params, seed, false)?;
    let summary = degree_stats(&network, Some(&sim.treatment))?;

    let comments = vec![
        format!("config {}", cfg.to_json_line()),
        format!("params {}", serde_json::to_string(&params).expect("params serialize")),
        format!("generator {}", netcrf::rng::GENERATOR),
    ];
    write_frame_csv(&sim.frame, &mut frame_out, &comments)?;
    frame_out.flush()?;
    info!("wrote {}", frame_path.display());

    if let Some((path, mut w)) = network_out {
        let mut doc: serde_json::Value = serde_json::from_str(&network.to_json()?).expect("network json");
        doc["config"] = cfg.to_value();
        serde_json::to_writer(&mut w, &doc).map_err(|e| Failure::Data(e.to_string()))?;
        w.flush()?;
        info!("wrote {}", path.display());
    }

    print_degree_summary(&summary);
    println!("wrote {} rows to {}", sim.frame.n_selected(), frame_path.display());
    Ok(())
}

/// File-name friendly form of a spec string.
fn spec_tag(spec: &ModelSpec) -> String {
    spec.to_string()
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
        .collect()
}

fn load_frame(cfg: &RunConfig) -> CliResult<SampleFrame> {
    let read = |p: &PathBuf| {
        fs::read_to_string(p).map_err(|e| Failure::Data(format!("cannot read {}: {e}", p.display())))
    };
    match (&cfg.frame, &cfg.nodes, &cfg.edges) {
        (Some(frame), _, _) => Ok(read_frame_csv(read(frame)?.as_bytes())?),
        (None, Some(nodes), Some(edges)) => Ok(read_observed_frame(&read(nodes)?, &read(edges)?)?),
        _ => Err(Failure::Usage("fit needs --frame, or both --nodes and --edges".into())),
    }
}

fn cmd_fit(cfg: &RunConfig) -> CliResult {
    let specs = cfg
        .specs
        .clone()
        .filter(|s| !s.is_empty())
        .ok_or_else(|| Failure::Usage("fit needs at least one --spec".into()))?;
    for spec in &specs {
        spec.validate()?;
    }
    let frame = load_frame(cfg)?;
    let dir = cfg.out_dir();

    for spec in &specs {
        let sub;
        let data = match spec {
            ModelSpec::Crf1Short { f } => {
                sub = frame.filter_f(*f);
                if sub.is_empty() {
                    return Err(Failure::Data(format!("no units with F = {f}")));
                }
                &sub
            }
            _ => &frame,
        };
        let x = build_design(data, spec)?;
        let fitted = netcrf::fit(&x, &data.y(), spec.default_rank_policy())?;
        let table = netcrf::effects::recover_effect_table_for_frame(&fitted, spec, data);

        let tag = spec_tag(spec);
        let (fit_path, mut w) = create_output(&dir, &format!("fit_{tag}.json"))?;
        let mut doc = fitted.to_json();
        doc["spec"] = serde_json::Value::String(spec.to_string());
        doc["model"] = serde_json::Value::String(spec.display_name().to_string());
        doc["aggregates"] = serde_json::to_value(&table.aggregates).expect("aggregates serialize");
        doc["config"] = cfg.to_value();
        serde_json::to_writer_pretty(&mut w, &doc).map_err(|e| Failure::Data(e.to_string()))?;
        w.flush()?;

        let (eff_path, mut w) = create_output(&dir, &format!("effects_{tag}.csv"))?;
        let comments = vec![format!("spec {spec}"), format!("config {}", cfg.to_json_line())];
        write_effect_table_csv(&table, &mut w, &comments)?;
        w.flush()?;

        println!("{} ({spec}): n = {}, rank = {}", spec.display_name(), fitted.n, fitted.rank);
        if !fitted.dropped_columns.is_empty() {
            println!("  dropped: {}", fitted.dropped_columns.join(", "));
        }
        if let Some(a) = &table.aggregates {
            let show = |v: Option<f64>| v.map(|v| format!("{v:.4}")).unwrap_or_else(|| "n/a".into());
            println!(
                "  direct {}  network {}  interaction {}",
                show(a.direct),
                show(a.network),
                show(a.interaction)
            );
        }
        println!("  wrote {} and {}", fit_path.display(), eff_path.display());
    }
    Ok(())
}

fn cmd_replicate(cfg: &RunConfig) -> CliResult {
    let table: TableId = cfg
        .table
        .as_deref()
        .ok_or_else(|| Failure::Usage("replicate needs a table id (table1 or table2)".into()))?
        .parse()?;
    let overrides = TableOverrides {
        repetitions: cfg.reps,
        master_seed: cfg.seed,
        radius: cfg.radius,
        n_units: cfg.n_units,
    };
    let dir = cfg.out_dir();
    let (csv_path, mut csv_out) = create_output(&dir, &format!("{table}.csv"))?;
    let (txt_path, mut txt_out) = create_output(&dir, &format!("{table}.txt"))?;

    let report = replicate_table(table, &overrides)?;
    let config_line = format!("# config {}\n", cfg.to_json_line());
    csv_out.write_all(config_line.as_bytes())?;
    csv_out.write_all(report.to_csv().as_bytes())?;
    csv_out.flush()?;
    let text = report.to_text();
    txt_out.write_all(config_line.as_bytes())?;
    txt_out.write_all(text.as_bytes())?;
    txt_out.flush()?;

    print!("{text}");
    println!("wrote {} and {}", csv_path.display(), txt_path.display());
    Ok(())
}

fn cmd_degree_stats(cfg: &RunConfig) -> CliResult {
    let seed = cfg.seed.unwrap_or(DEFAULT_SEED);
    let n = cfg.n_units.unwrap_or(DEFAULT_N_UNITS);
    let positions = generate_positions(n, netcrf::rng::child_seed(seed, netcrf::rng::Stream::Positions))?;
    let radius = match cfg.calibrate_mean_degree {
        Some(target) => {
            let r = netcrf::graph::calibrate_radius(&positions, target)?;
            println!("calibrated radius {r:.6} for mean F {target}");
            r
        }
        None => cfg.radius.unwrap_or(netcrf::graph::DEFAULT_RADIUS),
    };
    let network = build_geometric_network(&positions, radius)?;
    let summary = degree_stats(&network, None)?;
    println!("radius {radius}");
    print_degree_summary(&summary);

    if let Some(dir) = &cfg.out {
        let (path, mut w) = create_output(dir, "degree_stats.json")?;
        let doc = serde_json::json!({ "radius": radius, "summary": summary, "config": cfg.to_value() });
        serde_json::to_writer_pretty(&mut w, &doc).map_err(|e| Failure::Data(e.to_string()))?;
        w.flush()?;
        println!("wrote {}", path.display());
    }
    Ok(())
}
