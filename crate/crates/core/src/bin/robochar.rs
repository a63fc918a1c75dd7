use std::io::{BufRead, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{ArgGroup, Parser, Subcommand, ValueEnum};
use robochar::action::ActionSpace;
use robochar::appraisal::HumanInput;
use robochar::engine::{AgentConfig, Session, TurnResult};
use robochar::llm::BackendKind;
use robochar::scenario::{load_script, run_matrix};
use robochar::server::{self, BackendOverride, ServerOptions};

#[derive(Parser)]
#[command(
    name = "robochar",
    version,
    about = "Run, chat with and serve robot characters"
)]
struct Cli {
    /// Seed for the completion backend (overrides config files).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Completion backend (overrides config files).
    #[arg(long, global = true, value_enum)]
    backend: Option<Backend>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Backend {
    Mock,
    Http,
}

#[derive(Subcommand)]
enum Command {
    /// Replay a script against one or more configs and write a comparison report.
    RunScenario {
        #[arg(long)]
        script: PathBuf,
        #[arg(long = "config", required = true, num_args = 1..)]
        configs: Vec<PathBuf>,
        /// Report path (JSON). Transcripts are written next to it.
        #[arg(long)]
        out: PathBuf,
    },
    /// Interactive session on stdin. Type an utterance, optionally followed by
    /// `|| cue; cue`. Commands: /end-day, /memory, /state, /quit.
    Chat {
        #[arg(long)]
        config: PathBuf,
        /// Print the full TurnResult document instead of the trace summary.
        #[arg(long)]
        json: bool,
    },
    /// Start the HTTP API.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        /// Directory for event logs and snapshots.
        #[arg(long)]
        data: PathBuf,
        /// Events between session snapshots.
        #[arg(long, default_value_t = 8)]
        snapshot_every: u64,
    },
    /// Schema-check a config, script or action space document.
    #[command(group(ArgGroup::new("doc").required(true).args(["config", "script", "space"])))]
    Validate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        script: Option<PathBuf>,
        #[arg(long)]
        space: Option<PathBuf>,
    },
}

impl Cli {
    fn overrides(&self) -> BackendOverride {
        BackendOverride {
            kind: self.backend.map(|b| match b {
                Backend::Mock => BackendKind::Mock,
                Backend::Http => BackendKind::Http,
            }),
            seed: self.seed,
        }
    }
}

fn read(path: &Path) -> Result<String, String> {
    std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))
}

fn load_config(path: &Path, overrides: BackendOverride) -> Result<AgentConfig, String> {
    let mut config =
        AgentConfig::from_json(&read(path)?).map_err(|e| format!("{}: {e}", path.display()))?;
    overrides.apply(&mut config.backend);
    if config.name.is_empty() {
        config.name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
    }
    Ok(config)
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::from_default_env())
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::RunScenario {
            script,
            configs,
            out,
        } => run_scenario(script, configs, out, cli.overrides()),
        Command::Chat { config, json } => chat(config, *json, cli.overrides()),
        Command::Serve {
            port,
            host,
            data,
            snapshot_every,
        } => serve(host, *port, data, *snapshot_every, cli.overrides()),
        Command::Validate {
            config,
            script,
            space,
        } => validate(config, script, space),
    };
    match result {
        Ok(code) => code,
        Err(message) => {
            eprintln!("error: {message}");
            ExitCode::from(2)
        }
    }
}

fn run_scenario(
    script: &Path,
    configs: &[PathBuf],
    out: &Path,
    overrides: BackendOverride,
) -> Result<ExitCode, String> {
    let script = load_script(script).map_err(|e| format!("{}: {e}", script.display()))?;
    let configs = configs
        .iter()
        .map(|p| load_config(p, overrides))
        .collect::<Result<Vec<_>, _>>()?;
    let report = run_matrix(&script, &configs);
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| format!("{}: {e}", parent.display()))?;
    }
    std::fs::write(out, report.to_json()).map_err(|e| format!("{}: {e}", out.display()))?;
    let stem = out
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "report".into());
    for (config, transcript) in configs.iter().zip(&report.transcripts) {
        if let Some(t) = transcript {
            let path = out.with_file_name(format!("{stem}.{}.transcript.json", config.name));
            std::fs::write(&path, t.to_json()).map_err(|e| format!("{}: {e}", path.display()))?;
        }
    }
    print!("{}", report.render_table());
    println!("report written to {}", out.display());
    Ok(if report.all_passed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

fn print_turn(result: &TurnResult, json: bool) {
    if json {
        println!(
            "{}",
            serde_json::to_string_pretty(result).expect("turn serializes")
        );
        return;
    }
    for stage in &result.trace {
        let hash = stage
            .prompt_hash
            .as_deref()
            .map(|h| &h[..12])
            .unwrap_or("-");
        println!(
            "  {:<15} {:<12} {}",
            format!("{:?}", stage.stage),
            hash,
            stage.note
        );
    }
    let a = &result.appraisal;
    println!(
        "  appraisal: relevance={:.2} valence={:+.2} impact={:.2} intent={}",
        a.relevance, a.valence, a.impact, a.inferred_intent
    );
    println!("  emotion:   {}", result.emotion.summary());
    println!("  action:    {}", result.selection.call_text());
    println!("robot> {}", result.selection.utterance);
}

fn chat(config: &Path, json: bool, overrides: BackendOverride) -> Result<ExitCode, String> {
    let config = load_config(config, overrides)?;
    let mut session = Session::new(config).map_err(|e| e.to_string())?;
    let stdin = std::io::stdin();
    let mut out = std::io::stdout();
    println!("{}", session.persona_text());
    loop {
        print!("[day {}] you> ", session.clock().day);
        out.flush().map_err(|e| e.to_string())?;
        let mut line = String::new();
        if stdin
            .lock()
            .read_line(&mut line)
            .map_err(|e| e.to_string())?
            == 0
        {
            break;
        }
        let line = line.trim();
        match line {
            "" => continue,
            "/quit" | "/exit" => break,
            "/end-day" => match session.end_day() {
                Ok(report) => {
                    println!(
                        "day {} closed, {} new memories",
                        report.day,
                        report.memories.len()
                    );
                    for m in &report.memories {
                        println!("  {} ({:.2}) {}", m.id, m.confidence, m.statement);
                    }
                }
                Err(e) => println!("error: {e}"),
            },
            "/memory" => println!(
                "{}",
                serde_json::to_string_pretty(session.store()).expect("store serializes")
            ),
            "/state" => println!("{:?} {}", session.clock(), session.emotion().summary()),
            _ => {
                let (utterance, cues) = match line.split_once("||") {
                    Some((u, c)) => (
                        u.trim(),
                        c.split(';')
                            .map(str::trim)
                            .filter(|c| !c.is_empty())
                            .collect(),
                    ),
                    None => (line, Vec::new()),
                };
                let input = HumanInput::new(utterance, &cues, session.clock().day);
                match session.step(input) {
                    Ok(result) => print_turn(&result, json),
                    Err(e) => println!("error: {e}"),
                }
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn serve(
    host: &str,
    port: u16,
    data: &Path,
    snapshot_every: u64,
    overrides: BackendOverride,
) -> Result<ExitCode, String> {
    let addr: SocketAddr = format!("{host}:{port}")
        .parse()
        .map_err(|e| format!("bad address: {e}"))?;
    let opts = ServerOptions {
        overrides,
        snapshot_every,
        ..ServerOptions::default()
    }
    .with_data_dir(data);
    let runtime = tokio::runtime::Runtime::new().map_err(|e| e.to_string())?;
    runtime
        .block_on(server::serve(addr, opts))
        .map_err(|e| e.to_string())?;
    Ok(ExitCode::SUCCESS)
}

fn validate(
    config: &Option<PathBuf>,
    script: &Option<PathBuf>,
    space: &Option<PathBuf>,
) -> Result<ExitCode, String> {
    if let Some(p) = config {
        let c = AgentConfig::from_json(&read(p)?).map_err(|e| format!("{}: {e}", p.display()))?;
        println!("ok: config `{}` (space {})", c.name, c.space_id);
    }
    if let Some(p) = script {
        let s = load_script(p).map_err(|e| format!("{}: {e}", p.display()))?;
        println!("ok: script `{}` with {} turns", s.id, s.turns.len());
    }
    if let Some(p) = space {
        let s = ActionSpace::from_json(&read(p)?).map_err(|e| format!("{}: {e}", p.display()))?;
        println!("ok: space `{}` with {} actions", s.id, s.actions.len());
    }
    Ok(ExitCode::SUCCESS)
}
