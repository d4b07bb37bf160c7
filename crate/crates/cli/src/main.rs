use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{anyhow, Context as _};
use clap::{Args, Parser, Subcommand, ValueEnum};
use ncbf_core::boundprop::HyperCube;
use ncbf_core::certify::{verify, Status, VerifyConfig};
use ncbf_core::controller::{lqr_nominal, simulate, Fallback, QpPolicy};
use ncbf_core::dynamics::{builtin, parse, parse_state_expr, SafetyProblem};
use ncbf_core::enumerate::build_atlas;
use ncbf_core::network::{builtin_network, load_network, ReluNetwork};
use ncbf_core::plot::{render_svg, PlotOptions, Slice};
use ncbf_core::report::{to_pretty_string, verification_report};

const EXIT_USAGE: u8 = 64;
const EXIT_INTERNAL: u8 = 70;

#[derive(Parser)]
#[command(name = "ncbf", version, about = "Exact safety verification of ReLU neural control barrier functions")]
struct Cli {
    /// Worker threads (default: logical cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Verify that the network is a valid barrier function for the system.
    Verify(VerifyArgs),
    /// Enumerate boundary activation patterns and their intersections.
    Enumerate(EnumerateArgs),
    /// Simulate the barrier-filtered closed loop.
    Simulate(SimulateArgs),
    /// Draw the zero-level set of the network.
    Plot(PlotArgs),
}

#[derive(Args)]
struct VerifyArgs {
    /// Builtin system name or problem file.
    #[arg(long)]
    system: String,
    /// Builtin network name or JSON weights file.
    #[arg(long)]
    net: String,
    /// Grid cells per axis for the boundary search.
    #[arg(long, default_value_t = 16)]
    grid: usize,
    /// Write the JSON report here instead of standard output.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Margin for strict inequalities (default: 1e-7).
    #[arg(long)]
    strict_eps: Option<f64>,
    /// Branch-and-bound node budget per check.
    #[arg(long)]
    max_nodes: Option<usize>,
    /// Also draw the boundary and any counterexample.
    #[arg(long)]
    plot: Option<PathBuf>,
    /// Pin a coordinate for plotting, e.g. `psi=-0.5`.
    #[arg(long, value_name = "DIM=VAL")]
    slice: Vec<String>,
}

#[derive(Args)]
struct EnumerateArgs {
    /// Builtin network name or JSON weights file.
    #[arg(long)]
    net: String,
    /// System whose state box bounds the search (default: [-2, 2]^n).
    #[arg(long)]
    system: Option<String>,
    /// Grid cells per axis for the boundary search.
    #[arg(long, default_value_t = 16)]
    grid: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum FallbackArg {
    Hold,
    Zero,
}

#[derive(Args)]
struct SimulateArgs {
    /// Builtin system name or problem file.
    #[arg(long)]
    system: String,
    /// Builtin network name or JSON weights file.
    #[arg(long)]
    net: String,
    /// Initial state, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    x0: Vec<f64>,
    /// Integration step.
    #[arg(long, default_value_t = 0.01)]
    dt: f64,
    /// Simulated time.
    #[arg(long, default_value_t = 5.0)]
    horizon: f64,
    /// Class-K gain of `α(b) = κ·b`.
    #[arg(long, default_value_t = 1.0)]
    kappa: f64,
    /// Nominal input expressions separated by `;` (default: zero).
    #[arg(long, allow_hyphen_values = true)]
    nominal: Option<String>,
    /// Use LQR-to-origin with unit weights as the nominal input.
    #[arg(long, conflicts_with = "nominal")]
    lqr: bool,
    /// Input used when no pattern admits a feasible input.
    #[arg(long, value_enum, default_value = "hold")]
    fallback: FallbackArg,
    /// Trajectory CSV path (default: standard output).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also draw the trajectory over the zero-level set.
    #[arg(long)]
    plot: Option<PathBuf>,
    /// Pin a coordinate for plotting, e.g. `psi=-0.5`.
    #[arg(long, value_name = "DIM=VAL")]
    slice: Vec<String>,
}

#[derive(Args)]
struct PlotArgs {
    /// Builtin network name or JSON weights file.
    #[arg(long)]
    net: String,
    /// System for the state box and unsafe-set shading.
    #[arg(long)]
    system: Option<String>,
    /// Pin a coordinate, e.g. `psi=-0.5`.
    #[arg(long, value_name = "DIM=VAL")]
    slice: Vec<String>,
    /// Cells per axis.
    #[arg(long, default_value_t = 200)]
    grid: usize,
    /// Skip the ±0.05 level sets.
    #[arg(long)]
    no_band: bool,
    /// SVG path (default: standard output).
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Failure classes mapped to exit codes.
enum Failure {
    Usage(anyhow::Error),
    Internal(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Internal(e)
    }
}

fn usage(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Usage(e.into())
}

/// Core errors caused by the inputs rather than by the tool.
fn classify(e: ncbf_core::Error) -> Failure {
    use ncbf_core::Error as E;
    match e {
        E::DimensionMismatch { .. }
        | E::InvalidNetwork(_)
        | E::MalformedNetwork(_)
        | E::Syntax { .. }
        | E::UnknownIdentifier { .. }
        | E::InvalidProblem(_)
        | E::UnknownBuiltin(_)
        | E::Precondition(_) => Failure::Usage(e.into()),
        other => Failure::Internal(other.into()),
    }
}

fn load_system(name: &str) -> Result<SafetyProblem, Failure> {
    let path = Path::new(name);
    if path.is_file() {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading {}", path.display()))
            .map_err(usage)?;
        return parse(&text).map_err(classify);
    }
    builtin(name).map_err(|_| usage(anyhow!("system `{name}` is neither a readable file nor a builtin")))
}

fn load_net(name: &str) -> Result<ReluNetwork, Failure> {
    let path = Path::new(name);
    if path.is_file() {
        let bytes = std::fs::read(path)
            .with_context(|| format!("reading {}", path.display()))
            .map_err(usage)?;
        return load_network(&bytes).map_err(classify);
    }
    builtin_network(name).map_err(|_| usage(anyhow!("network `{name}` is neither a readable file nor a builtin")))
}

fn write_out(path: Option<&Path>, text: &str) -> Result<(), Failure> {
    match path {
        Some(p) => std::fs::write(p, text)
            .with_context(|| format!("writing {}", p.display()))
            .map_err(usage),
        None => match std::io::stdout().lock().write_all(text.as_bytes()) {
            Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(usage(anyhow!("writing standard output: {e}"))),
            _ => Ok(()),
        },
    }
}

fn parse_slices(specs: &[String], prob: Option<&SafetyProblem>, n: usize) -> Result<Vec<(usize, f64)>, Failure> {
    specs
        .iter()
        .map(|s| {
            let (name, val) = s
                .split_once('=')
                .ok_or_else(|| usage(anyhow!("slice `{s}` is not of the form dim=val")))?;
            let val: f64 = val
                .trim()
                .parse()
                .map_err(|_| usage(anyhow!("slice value `{val}` is not a number")))?;
            let name = name.trim();
            let k = prob
                .and_then(|p| p.state_index(name))
                .or_else(|| name.strip_prefix('x').and_then(|r| r.parse::<usize>().ok()).map(|k| k.wrapping_sub(1)))
                .or_else(|| name.parse::<usize>().ok().map(|k| k.wrapping_sub(1)))
                .filter(|&k| k < n)
                .ok_or_else(|| usage(anyhow!("unknown slice dimension `{name}`")))?;
            Ok((k, val))
        })
        .collect()
}

fn default_bounds(prob: Option<&SafetyProblem>, n: usize) -> Vec<(f64, f64)> {
    prob.map(|p| p.state_box.clone()).unwrap_or_else(|| vec![(-2.0, 2.0); n])
}

fn cmd_verify(a: &VerifyArgs) -> Result<ExitCode, Failure> {
    let prob = load_system(&a.system)?;
    let net = load_net(&a.net)?;
    if a.grid == 0 {
        return Err(usage(anyhow!("--grid must be positive")));
    }
    let mut cfg = VerifyConfig::default();
    cfg.enumeration.grid = a.grid;
    if let Some(eps) = a.strict_eps {
        if !(eps > 0.0) {
            return Err(usage(anyhow!("--strict-eps must be positive")));
        }
        cfg.certify.strict_eps = eps;
    }
    if let Some(k) = a.max_nodes {
        cfg.certify.limits.max_nodes = k;
    }
    let res = verify(&prob, &net, &cfg).map_err(classify)?;
    let report = verification_report(&prob, &net, &cfg, &res);
    eprintln!(
        "status {}  |S| = {}  |V| = {}  t_e = {:.3}s  t_v = {:.3}s",
        res.status.as_str(),
        res.atlas.patterns.len(),
        res.atlas.intersections.len(),
        res.timings.enumerate_s,
        res.timings.verify_s
    );
    if let Some((_, cx)) = &res.counterexample {
        eprintln!("counterexample ({}) at {:?}", cx.condition.as_str(), cx.x);
        for m in &cx.members {
            eprintln!("  {}: {}", m.pattern, m.system);
        }
    }
    write_out(a.report.as_deref(), &to_pretty_string(&report))?;
    if let Some(path) = &a.plot {
        let slice = Slice::new(&prob.state_box, &parse_slices(&a.slice, Some(&prob), prob.n)?).map_err(classify)?;
        let points: Vec<Vec<f64>> = res.counterexample.iter().map(|(_, cx)| cx.x.clone()).collect();
        let svg = render_svg(&net, Some(&prob), &slice, Some(&points).filter(|p| !p.is_empty()).map(|p| p.as_slice()), &PlotOptions::default())
            .map_err(classify)?;
        write_out(Some(path), &svg)?;
    }
    Ok(ExitCode::from(match res.status {
        Status::Safe => 0,
        Status::Unsafe => 1,
        Status::Inconclusive => 2,
    }))
}

fn cmd_enumerate(a: &EnumerateArgs) -> Result<ExitCode, Failure> {
    let net = load_net(&a.net)?;
    let prob = a.system.as_deref().map(load_system).transpose()?;
    if a.grid == 0 {
        return Err(usage(anyhow!("--grid must be positive")));
    }
    let bounds = default_bounds(prob.as_ref(), net.input_dim());
    if bounds.len() != net.input_dim() {
        return Err(usage(anyhow!(
            "system has {} states but the network takes {} inputs",
            bounds.len(),
            net.input_dim()
        )));
    }
    let cube = HyperCube::new(bounds.iter().map(|b| b.0).collect(), bounds.iter().map(|b| b.1).collect()).map_err(classify)?;
    let mut cfg = VerifyConfig::default().enumeration;
    cfg.grid = a.grid;
    let start = Instant::now();
    let atlas = build_atlas(&net, &cube, &cfg).map_err(classify)?;
    let t_e = start.elapsed().as_secs_f64();
    let mut text = format!(
        "patterns {}\nintersections {}\nboundary_cells {}\ncomplete {}\n",
        atlas.patterns.len(),
        atlas.intersections.len(),
        atlas.boundary_cells,
        atlas.is_complete()
    );
    for p in &atlas.patterns {
        text += &format!("S {} witness {:?}\n", p.pattern, p.witness);
    }
    for t in &atlas.intersections {
        let members: Vec<String> = t.patterns().iter().map(ToString::to_string).collect();
        let shared: Vec<String> = t.shared.iter().map(ToString::to_string).collect();
        text += &format!("V [{}] shared [{}] witness {:?}\n", members.join(" "), shared.join(" "), t.witness);
    }
    write_out(None, &text)?;
    eprintln!("t_e = {t_e:.3}s");
    Ok(ExitCode::SUCCESS)
}

fn cmd_simulate(a: &SimulateArgs) -> Result<ExitCode, Failure> {
    let prob = load_system(&a.system)?;
    let net = load_net(&a.net)?;
    if a.x0.len() != prob.n {
        return Err(usage(anyhow!("--x0 needs {} values, got {}", prob.n, a.x0.len())));
    }
    let nominal = if a.lqr {
        lqr_nominal(&prob).map_err(classify)?
    } else if let Some(text) = &a.nominal {
        text.split(';')
            .map(|e| parse_state_expr(e, &prob))
            .collect::<Result<Vec<_>, _>>()
            .map_err(classify)?
    } else {
        vec![ncbf_core::dynamics::Expr::c(0.0); prob.m]
    };
    let fallback = match a.fallback {
        FallbackArg::Hold => Fallback::HoldNominal,
        FallbackArg::Zero => Fallback::Zero,
    };
    let slice = match &a.plot {
        Some(_) => Some(Slice::new(&prob.state_box, &parse_slices(&a.slice, Some(&prob), prob.n)?).map_err(classify)?),
        None => None,
    };
    let policy = QpPolicy::new(net, prob, nominal, a.kappa).map_err(classify)?.with_fallback(fallback);
    let traj = simulate(&policy, &a.x0, a.dt, a.horizon).map_err(classify)?;
    write_out(a.out.as_deref(), &traj.to_csv(&policy.prob))?;
    let flags = traj.infeasible.iter().filter(|&&f| f).count();
    eprintln!(
        "steps {}  infeasible {}  min b {:.6}  truncated {}",
        traj.len(),
        flags,
        traj.min_b(),
        traj.truncated
    );
    if let (Some(path), Some(slice)) = (&a.plot, slice) {
        let svg = render_svg(&policy.net, Some(&policy.prob), &slice, Some(&traj.states), &PlotOptions::default())
            .map_err(classify)?;
        write_out(Some(path), &svg)?;
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_plot(a: &PlotArgs) -> Result<ExitCode, Failure> {
    let net = load_net(&a.net)?;
    let prob = a.system.as_deref().map(load_system).transpose()?;
    let bounds = default_bounds(prob.as_ref(), net.input_dim());
    let slice = Slice::new(&bounds, &parse_slices(&a.slice, prob.as_ref(), bounds.len())?).map_err(classify)?;
    let opts = PlotOptions {
        resolution: a.grid,
        band: (!a.no_band).then_some(0.05),
        ..PlotOptions::default()
    };
    let svg = render_svg(&net, prob.as_ref(), &slice, None, &opts).map_err(classify)?;
    write_out(a.out.as_deref(), &svg)?;
    Ok(ExitCode::SUCCESS)
}

fn run(cli: &Cli) -> Result<ExitCode, Failure> {
    if let Some(k) = cli.threads {
        if k == 0 {
            return Err(usage(anyhow!("--threads must be positive")));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build_global()
            .context("starting the worker pool")?;
    }
    match &cli.command {
        Command::Verify(a) => cmd_verify(a),
        Command::Enumerate(a) => cmd_enumerate(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Plot(a) => cmd_plot(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(code) => code,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Failure::Internal(e)) => {
            eprintln!("internal error: {e:#}");
            ExitCode::from(EXIT_INTERNAL)
        }
    }
}
