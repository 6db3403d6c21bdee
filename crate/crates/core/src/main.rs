use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use clap::{Args, Parser, Subcommand, ValueEnum};

use leotrace::replay::realtime::{start_relay, RelayConfig, DEFAULT_HEADER_BYTES};
use leotrace::replay::{open_pair, StartMode};
use leotrace::scenario::Scenario;
use leotrace::workflow::{self, WorkflowError};

#[derive(Parser)]
#[command(name = "leotrace", version, about = "LEO constellation simulation, trace generation and trace-driven replay")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Clone)]
struct Common {
    /// Scenario JSON file.
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Built-in scenario used when no file is given.
    #[arg(long, conflicts_with = "scenario", default_value = "default")]
    preset: String,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Overrides the flow, simulation and loss seeds.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Copy, Clone, ValueEnum)]
enum Mode {
    Immediate,
    Trigger,
}

#[derive(Args)]
struct ReplayArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    fwd_trace: PathBuf,
    #[arg(long)]
    ret_trace: Option<PathBuf>,
    #[arg(long, value_enum)]
    mode: Option<Mode>,
    #[arg(long, allow_negative_numbers = true)]
    delay_offset_us: Option<i64>,
    /// Relay real UDP datagrams in wall-clock time instead of the virtual replay.
    #[arg(long)]
    realtime: bool,
    #[arg(long, default_value = "127.0.0.1:5000")]
    listen_a: SocketAddr,
    #[arg(long, default_value = "127.0.0.1:5001")]
    listen_b: SocketAddr,
    /// Destination of forward traffic; learned from B's first datagram if unset.
    #[arg(long)]
    peer_b: Option<SocketAddr>,
    /// Relay run time; defaults to the scenario duration.
    #[arg(long)]
    duration_s: Option<f64>,
}

#[derive(Subcommand)]
enum FlowsCmd {
    /// Writes the seeded background flow set.
    Gen(Common),
}

#[derive(Subcommand)]
enum Cmd {
    /// Writes the forwarding-state diff timeline.
    GenState(Common),
    /// Full simulation with the scenario workload.
    Simulate(Common),
    /// Background run with trace packets; writes forward and return trace files.
    GenTraces(Common),
    /// Replays a workload over trace files.
    Replay(ReplayArgs),
    /// Simulation against replay comparison with threshold checks.
    Validate(Common),
    Flows {
        #[command(subcommand)]
        cmd: FlowsCmd,
    },
    /// Prints a built-in scenario as JSON.
    Scenario {
        #[arg(long, default_value = "default")]
        preset: String,
        #[arg(long)]
        list: bool,
    },
}

fn load(c: &Common) -> Result<Scenario, WorkflowError> {
    let mut sc = match &c.scenario {
        Some(p) => Scenario::load(p)?,
        None => Scenario::preset(&c.preset)
            .ok_or_else(|| WorkflowError::Config(format!("unknown preset `{}`", c.preset)))?,
    };
    if let Some(s) = c.seed {
        sc.seeds.flows = s;
        sc.seeds.sim = s;
        sc.seeds.loss = s;
    }
    sc.validate()?;
    std::fs::create_dir_all(&c.out).map_err(|e| WorkflowError::Runtime(format!("{}: {e}", c.out.display())))?;
    Ok(sc)
}

fn replay(a: &ReplayArgs) -> Result<Vec<PathBuf>, WorkflowError> {
    let mut sc = load(&a.common)?;
    let ret_path = a
        .ret_trace
        .as_ref()
        .ok_or_else(|| WorkflowError::Config("a return trace (--ret-trace) is required".into()))?;
    if let Some(m) = a.mode {
        sc.replay.start_mode = match m {
            Mode::Immediate => StartMode::Immediate,
            Mode::Trigger => StartMode::FirstPacketTrigger,
        };
    }
    let fwd = workflow::read_trace(&a.fwd_trace)?;
    let ret = workflow::read_trace(ret_path)?;
    let (cf, cr) = workflow::channel_configs(&sc, fwd, ret, a.delay_offset_us, None);
    if !a.realtime {
        return workflow::cmd_replay(&sc, cf, cr, &a.common.out);
    }
    let pair = open_pair(cf, cr, 0.0)?;
    let cfg = RelayConfig {
        listen_a: a.listen_a,
        listen_b: a.listen_b,
        peer_b: a.peer_b,
        peer_a: None,
        header_bytes: DEFAULT_HEADER_BYTES,
    };
    let h = start_relay(pair, cfg)?;
    eprintln!("relay: side A on {}, side B on {}", h.addr_a(), h.addr_b());
    let duration = Duration::from_secs_f64(a.duration_s.unwrap_or(sc.duration_s).max(0.0));
    let deadline = Instant::now() + duration;
    while Instant::now() < deadline && !h.failed() {
        std::thread::sleep(Duration::from_millis(20).min(deadline.saturating_duration_since(Instant::now())));
    }
    let stats = h.stop().map_err(|e| WorkflowError::Runtime(e.to_string()))?;
    let p = a.common.out.join("relay_stats.json");
    let text = serde_json::to_string_pretty(&stats).expect("stats serialize");
    std::fs::write(&p, text).map_err(|e| WorkflowError::Runtime(format!("{}: {e}", p.display())))?;
    Ok(vec![p])
}

fn run(cli: Cli) -> Result<Vec<PathBuf>, WorkflowError> {
    let with = |c: &Common, f: fn(&Scenario, &Path) -> Result<Vec<PathBuf>, WorkflowError>| {
        let sc = load(c)?;
        f(&sc, &c.out)
    };
    match &cli.cmd {
        Cmd::GenState(c) => with(c, workflow::cmd_gen_state),
        Cmd::Simulate(c) => with(c, workflow::cmd_simulate),
        Cmd::GenTraces(c) => with(c, workflow::cmd_gen_traces),
        Cmd::Validate(c) => with(c, workflow::cmd_validate),
        Cmd::Flows { cmd: FlowsCmd::Gen(c) } => with(c, workflow::cmd_flows_gen),
        Cmd::Replay(a) => replay(a),
        Cmd::Scenario { preset, list } => {
            if *list {
                println!("{}", Scenario::PRESETS.join("\n"));
                return Ok(Vec::new());
            }
            let sc = Scenario::preset(preset)
                .ok_or_else(|| WorkflowError::Config(format!("unknown preset `{preset}`")))?;
            println!("{}", sc.to_json());
            Ok(Vec::new())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("leotrace: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
