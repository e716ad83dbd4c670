use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use homegoal::chain::{Chain, ChainConfig, ChainMode};
use homegoal::eval::{
    availability, build_report, export_report, load_commands, load_commands_from, run_matrix, CategoryTypeMap,
    CommandRecord, CritiqueSet, EvalHome, GoalCategory, MatrixOptions, ALL_HOMES,
};
use homegoal::home::{digest_hex, load_template_dir, HomeTemplate, Lexicon};
use homegoal::llm::{Gateway, GatewayConfig, RemoteBackend, RemoteConfig, ScriptedFixture};
use homegoal::plan::GoalType;
use homegoal::prompt::{PromptContext, PromptKind, PromptSet, PromptStyle};
use homegoal::service::{home_by_id, router, Service, ServiceConfig};

#[derive(Debug, Parser)]
#[command(name = "homegoal", version, about = "Goal-oriented smart-home planning with language models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Evaluation runs.
    Eval {
        #[command(subcommand)]
        command: EvalCommand,
    },
    /// Write every rendered prompt for audit.
    PromptDump(PromptDumpArgs),
    /// Run the HTTP and event-stream service.
    Serve(ServeArgs),
}

#[derive(Debug, Subcommand)]
enum EvalCommand {
    /// Run homes × commands through one chain mode and write reports.
    Run(EvalRunArgs),
}

#[derive(Debug, Clone, Args)]
struct BackendArgs {
    /// `scripted` or `remote`.
    #[arg(long, default_value = "scripted")]
    backend: String,
    /// Fixture file or directory for the scripted backend.
    #[arg(long)]
    fixtures: Option<PathBuf>,
    /// Endpoint config for the remote backend; the key comes from LLM_API_KEY.
    #[arg(long)]
    llm_config: Option<PathBuf>,
    /// Prompt template directory replacing the shipped set.
    #[arg(long)]
    prompts: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvalRunArgs {
    /// Comma-separated home ids (h1, h2, h3, studio) or template directories.
    #[arg(long, default_value = "h1,h2,h3")]
    homes: String,
    #[arg(long, default_value = "full_split")]
    mode: String,
    #[command(flatten)]
    backend: BackendArgs,
    /// Reports go to `<dir>/<run-id>/`.
    #[arg(long, default_value = "reports")]
    report_out: PathBuf,
    /// Command dataset (JSON or CSV); the shipped 40 commands by default.
    #[arg(long)]
    commands: Option<PathBuf>,
    /// Critique fixtures driving the feedback step.
    #[arg(long)]
    critiques: Option<PathBuf>,
    /// Replaces the derived run id.
    #[arg(long)]
    run_id: Option<String>,
    #[arg(long, default_value_t = 8)]
    concurrency: usize,
    /// Baseline prompt style: zero_shot_instruction or few_shot_completion.
    #[arg(long, default_value = "zero_shot_instruction")]
    baseline_style: String,
    /// Give planning every sensor instead of a filtered set.
    #[arg(long)]
    skip_sensor_filter: bool,
}

#[derive(Debug, Args)]
struct PromptDumpArgs {
    #[arg(long, default_value = "h1,h2,h3")]
    homes: String,
    /// Restrict to one command; every dataset command by default.
    #[arg(long)]
    command: Option<String>,
    #[arg(long, default_value = "prompt-dump")]
    out: PathBuf,
    #[arg(long)]
    prompts: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ServeArgs {
    #[arg(long, default_value_t = 8080)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    bind: String,
    /// Home for sessions created without one.
    #[arg(long, default_value = "h3")]
    home: String,
    #[command(flatten)]
    backend: BackendArgs,
    #[arg(long, default_value = "full_split")]
    mode: String,
    /// Where `GET /reports/{run-id}` looks.
    #[arg(long, default_value = "reports")]
    reports: PathBuf,
    /// Execute plans without waiting for review.
    #[arg(long)]
    auto_accept: bool,
    #[arg(long, default_value_t = 1800)]
    idle_timeout_secs: u64,
    /// Static console bundle served at `/`.
    #[arg(long)]
    static_dir: Option<PathBuf>,
}

type CliResult<T> = Result<T, String>;

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "warn".into()))
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    let runtime = tokio::runtime::Runtime::new().expect("tokio runtime");
    let result = match cli.command {
        Command::Eval { command: EvalCommand::Run(args) } => runtime.block_on(eval_run(args)),
        Command::PromptDump(args) => prompt_dump(args),
        Command::Serve(args) => runtime.block_on(serve(args)),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(message) => {
            eprintln!("error: {message}");
            ExitCode::FAILURE
        }
    }
}

fn default_fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join("llm")
}

/// The gateway plus a digest of whatever determines its replies.
fn gateway(args: &BackendArgs) -> CliResult<(Gateway, String)> {
    match args.backend.as_str() {
        "scripted" => {
            let path = args.fixtures.clone().unwrap_or_else(default_fixtures);
            let fixture = ScriptedFixture::load(&path).map_err(|e| e.to_string())?;
            let digest = digest_hex(serde_json::to_string(&fixture).expect("fixture serializes").as_bytes());
            Ok((Gateway::scripted(fixture), digest))
        }
        "remote" => {
            let path = args.llm_config.as_ref().ok_or("--llm-config is required for the remote backend")?;
            let remote = RemoteConfig::load(path).map_err(|e| e.to_string())?;
            let config = GatewayConfig {
                timeout: Duration::from_secs(remote.timeout_secs),
                rates: remote.rates.clone(),
                tokenizer: remote.tokenizer.clone(),
                ..GatewayConfig::default()
            };
            let digest = digest_hex(format!("{}|{}", remote.url, remote.model).as_bytes());
            let backend = RemoteBackend::new(remote).map_err(|e| e.to_string())?;
            Ok((Gateway::new(Arc::new(backend), config).map_err(|e| e.to_string())?, digest))
        }
        other => Err(format!("unknown backend {other:?}; expected scripted or remote")),
    }
}

fn prompt_set(dir: Option<&Path>) -> CliResult<PromptSet> {
    match dir {
        Some(dir) => PromptSet::from_dir(dir).map_err(|e| e.to_string()),
        None => Ok(PromptSet::builtin().clone()),
    }
}

fn resolve_homes(list: &str) -> CliResult<Vec<EvalHome>> {
    list.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|entry| {
            let template = match home_by_id(entry) {
                Some(t) => t,
                None => {
                    let dir = Path::new(entry);
                    let name = dir.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
                    load_template_dir(dir).map_err(|e| format!("home {entry}: {e}"))?.with_label(name)
                }
            };
            let id = template.label().unwrap_or(entry).to_string();
            Ok(EvalHome::new(id, template))
        })
        .collect()
}

fn commands(path: Option<&Path>) -> CliResult<Vec<CommandRecord>> {
    match path {
        Some(p) => load_commands_from(p),
        None => load_commands(),
    }
    .map_err(|e| e.to_string())
}

fn chain(args: &BackendArgs, config: ChainConfig) -> CliResult<(Chain, String)> {
    let (gateway, digest) = gateway(args)?;
    let prompts = prompt_set(args.prompts.as_deref())?;
    Ok((Chain::new(Arc::new(gateway), config).with_prompts(prompts), digest))
}

async fn eval_run(args: EvalRunArgs) -> CliResult<()> {
    let mode: ChainMode = args.mode.parse().map_err(|e: homegoal::chain::ChainError| e.to_string())?;
    let baseline_style: PromptStyle = args.baseline_style.parse().map_err(|e: homegoal::prompt::PromptError| e.to_string())?;
    let config = ChainConfig { mode, baseline_style, skip_sensor_filter: args.skip_sensor_filter, ..Default::default() };
    let (chain, backend_digest) = chain(&args.backend, config)?;
    let homes = resolve_homes(&args.homes)?;
    if homes.is_empty() {
        return Err("no homes given".into());
    }
    let records = commands(args.commands.as_deref())?;
    let critiques = args.critiques.as_deref().map(CritiqueSet::load).transpose().map_err(|e| e.to_string())?;

    let run_id = args.run_id.clone().unwrap_or_else(|| {
        let homes: Vec<String> = homes.iter().map(|h| format!("{}={}", h.id, h.template.digest())).collect();
        let basis = json!({
            "homes": homes,
            "mode": mode,
            "baseline_style": baseline_style,
            "skip_sensor_filter": args.skip_sensor_filter,
            "backend": args.backend.backend,
            "backend_digest": backend_digest,
            "commands": records,
            "critiques": critiques,
        });
        format!("run-{}", &digest_hex(basis.to_string().as_bytes())[..12])
    });
    let options = MatrixOptions {
        run_id: run_id.clone(),
        critiques,
        lexicon: Lexicon::builtin(),
        concurrency: args.concurrency,
    };
    let results = run_matrix(&chain, &homes, &records, &options).await;
    let map = CategoryTypeMap::builtin();
    let report =
        build_report(&run_id, &args.backend.backend, &homes, &results, &options.lexicon, &map).map_err(|e| e.to_string())?;
    let out = args.report_out.join(&run_id);
    let files = export_report(&out, &report, &homes, &results).map_err(|e| e.to_string())?;

    println!("run_id={run_id}");
    println!("mode={} cells={} out={}", mode, results.len(), out.display());
    let available = availability(&homes, &options.lexicon, &map).map_err(|e| e.to_string())?;
    for home in homes.iter().map(|h| h.id.as_str()).chain([ALL_HOMES]) {
        let Some(matrix) = report.targeting_for(home) else { continue };
        let cells: Vec<String> = GoalCategory::ALL
            .iter()
            .map(|&c| format!("{}={:.2}", c.as_str(), matrix.row(c).proportion))
            .collect();
        println!("targeting {home}: {}", cells.join(" "));
    }
    for cell in &report.relevance.cells {
        let available = available.get(&(cell.home.clone(), cell.category)).copied().unwrap_or(false);
        println!(
            "relevance {} {}: tp={} fp={} tn={} fn={} available={}",
            cell.home, cell.category, cell.true_positive, cell.false_positive, cell.true_negative, cell.false_negative,
            available
        );
    }
    println!(
        "usage: input_tokens={} output_tokens={} cost={:.4}",
        report.usage.total.input_tokens, report.usage.total.output_tokens, report.usage.total.cost
    );
    println!("wrote {} files", files.len());
    Ok(())
}

fn sample_context(kind: PromptKind, clarifications: &[String]) -> PromptContext {
    let mut context = PromptContext::with_clarifications(clarifications);
    context.persistent = matches!(
        kind,
        PromptKind::FilterSensors | PromptKind::PlanPersistent | PromptKind::FilterPlanPersistent
    );
    if kind == PromptKind::FeedbackRevise {
        context.prior_plan = Some(r#"{"explanation": "the plan under review"}"#.into());
        context.critique = Some("the critique from the user".into());
    }
    context
}

/// One file per (home, prompt kind, style), every command in dataset order.
fn prompt_dump(args: PromptDumpArgs) -> CliResult<()> {
    let prompts = prompt_set(args.prompts.as_deref())?;
    let homes = resolve_homes(&args.homes)?;
    let records = commands(None)?;
    let selected: Vec<(String, GoalType)> = match &args.command {
        Some(c) => vec![(c.clone(), GoalType::Immediate)],
        None => records.iter().map(|r| (r.command.clone(), r.goal_type)).collect(),
    };
    let mut manifest = Vec::new();
    for home in &homes {
        let dir = args.out.join(&home.id);
        std::fs::create_dir_all(&dir).map_err(|e| format!("{}: {e}", dir.display()))?;
        for kind in PromptKind::ALL {
            let styles: &[PromptStyle] = if kind.is_baseline() {
                &[PromptStyle::ZeroShotInstruction, PromptStyle::FewShotCompletion]
            } else {
                &[PromptStyle::ZeroShotInstruction]
            };
            for &style in styles {
                let mut text = String::new();
                for (command, _) in &selected {
                    let rendered = render(&prompts, kind, style, &home.template, command)?;
                    text.push_str(&format!("=== {command} [{}] ===\n{}\n\n", rendered.digest(), rendered.text));
                    manifest.push(json!({
                        "home": home.id,
                        "kind": kind,
                        "style": style,
                        "command": command,
                        "digest": rendered.digest(),
                    }));
                }
                let name = if kind.is_baseline() {
                    format!("{}.{}.txt", kind.as_str(), style.as_str())
                } else {
                    format!("{}.txt", kind.as_str())
                };
                let path = dir.join(name);
                std::fs::write(&path, text).map_err(|e| format!("{}: {e}", path.display()))?;
            }
        }
    }
    let manifest_path = args.out.join("manifest.json");
    let body = serde_json::to_string_pretty(&json!({"prompt_version": prompts.version, "prompts": manifest}))
        .expect("manifest serializes");
    std::fs::write(&manifest_path, body + "\n").map_err(|e| format!("{}: {e}", manifest_path.display()))?;
    println!("wrote {} prompts to {}", manifest.len(), args.out.display());
    Ok(())
}

fn render(
    prompts: &PromptSet,
    kind: PromptKind,
    style: PromptStyle,
    template: &HomeTemplate,
    command: &str,
) -> CliResult<homegoal::prompt::RenderedPrompt> {
    let rendered = if kind.is_baseline() {
        prompts.render_baseline(kind, template, command, style)
    } else {
        prompts.render_chain_step(kind, template, command, &sample_context(kind, &[]))
    };
    rendered.map_err(|e| format!("{} for {command:?}: {e}", kind.as_str()))
}

async fn serve(args: ServeArgs) -> CliResult<()> {
    let mode: ChainMode = args.mode.parse().map_err(|e: homegoal::chain::ChainError| e.to_string())?;
    if home_by_id(&args.home).is_none() {
        return Err(format!("unknown home {:?}", args.home));
    }
    let (chain, _) = chain(&args.backend, ChainConfig { mode, ..Default::default() })?;
    let config = ServiceConfig {
        idle_timeout: Duration::from_secs(args.idle_timeout_secs),
        auto_accept: args.auto_accept,
        reports_dir: args.reports.clone(),
        default_home: args.home.clone(),
        static_dir: args.static_dir.clone(),
    };
    let service = Service::new(Arc::new(chain), config);
    let reaper = service.clone();
    tokio::spawn(async move {
        let period = (reaper.config.idle_timeout / 2).clamp(Duration::from_secs(1), Duration::from_secs(30));
        let mut tick = tokio::time::interval(period);
        loop {
            tick.tick().await;
            reaper.reap();
        }
    });
    let addr = format!("{}:{}", args.bind, args.port);
    let listener = tokio::net::TcpListener::bind(&addr).await.map_err(|e| format!("{addr}: {e}"))?;
    println!("listening on http://{}", listener.local_addr().map_err(|e| e.to_string())?);
    axum::serve(listener, router(service))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(|e| e.to_string())
}
