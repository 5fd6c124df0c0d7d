use std::fs;
use std::net::SocketAddr;
use std::path::Path;
use std::sync::Arc;

use coach_core::app;
use coach_core::config::AppConfig;
use coach_core::ensemble::explain;
use coach_core::evaluation::experiment::{
    load_runs, retrieval_from_runs, save_runs, write_context_log,
};
use coach_core::evaluation::human::config_ids;
use coach_core::evaluation::report::{render_experiment, render_retrieval, render_semantic};
use coach_core::evaluation::{
    aggregate_human, evaluate_retrieval, load_human_scores, load_judgments, load_questions,
    rank_questions, run_experiment, score_runs, ExperimentReport, ModelConfig, Question,
};
use coach_core::generation::PersonaConfig;
use coach_core::{Execution, Retriever};
use serde::Serialize;

use crate::{
    AskArgs, Cli, CliError, Command, EvalResponsesArgs, EvalRetrievalArgs, ExperimentArgs,
    ReportArgs, ServeArgs,
};

type CliResult<T = ()> = Result<T, CliError>;

const RUNS_FILE: &str = "runs.json";
const REPORT_FILE: &str = "report.json";
const CONTEXTS_FILE: &str = "contexts.csv";

struct Ctx {
    cfg: AppConfig,
    json: bool,
    exec: Execution,
}

impl Ctx {
    fn print<T: Serialize>(&self, value: &T, text: impl FnOnce() -> String) -> CliResult {
        if self.json {
            println!("{}", to_json(value)?);
        } else {
            print!("{}", text());
        }
        Ok(())
    }

    fn retriever(&self) -> CliResult<Option<Retriever>> {
        Ok(app::load_index(&self.cfg)?.map(|r| r.with_execution(self.exec)))
    }

    fn require_retriever(&self) -> CliResult<Retriever> {
        self.retriever()?.ok_or_else(|| {
            CliError::Data(format!(
                "no index under {}; run `essence-coach index` first",
                self.cfg.index_dir().display()
            ))
        })
    }
}

fn to_json<T: Serialize>(value: &T) -> CliResult<String> {
    serde_json::to_string_pretty(value).map_err(|e| CliError::Data(e.to_string()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult {
    fs::write(path, to_json(value)?)
        .map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<T> {
    let raw = fs::read_to_string(path)
        .map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&raw)
        .map_err(|e| CliError::Data(format!("cannot parse {}: {e}", path.display())))
}

fn load_config(cli: &Cli) -> CliResult<AppConfig> {
    let mut cfg = match &cli.config {
        Some(path) => AppConfig::load(path)?,
        None => AppConfig::default(),
    };
    if let Some(m) = &cli.manifest {
        cfg.manifest = Some(m.clone());
    }
    if let Some(d) = &cli.data_dir {
        cfg.data_dir = d.clone();
    }
    if let Some(k) = cli.k_each {
        cfg.ensemble.k_each = k;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn run(cli: Cli) -> CliResult {
    let ctx = Ctx {
        cfg: load_config(&cli)?,
        json: cli.json,
        exec: if cli.sequential {
            Execution::Sequential
        } else {
            Execution::default()
        },
    };
    match cli.command {
        Command::Ingest => ingest(&ctx),
        Command::Index => index(&ctx),
        Command::Retrieve { query } => retrieve(&ctx, &query),
        Command::Ask(args) => ask(&ctx, args),
        Command::Serve(args) => serve(&ctx, args),
        Command::EvalRetrieval(args) => eval_retrieval(&ctx, args),
        Command::Experiment(args) => experiment(&ctx, args),
        Command::EvalResponses(args) => eval_responses(&ctx, args),
        Command::Report(args) => report(&ctx, args),
    }
}

#[derive(Serialize)]
struct IngestSummary {
    chunks: usize,
    documents: usize,
    index_dir: String,
}

fn ingest(ctx: &Ctx) -> CliResult {
    let chunks = app::ingest(&ctx.cfg)?;
    let summary = IngestSummary {
        chunks: chunks.len(),
        documents: chunks
            .iter()
            .map(|c| &c.doc_id)
            .collect::<std::collections::HashSet<_>>()
            .len(),
        index_dir: ctx.cfg.index_dir().display().to_string(),
    };
    ctx.print(&summary, || {
        format!(
            "{} chunks from {} documents written to {}\n",
            summary.chunks, summary.documents, summary.index_dir
        )
    })
}

fn index(ctx: &Ctx) -> CliResult {
    let chunks = app::ingest(&ctx.cfg)?;
    let r = app::build_index(&ctx.cfg, chunks)?;
    let summary = IngestSummary {
        chunks: r.chunks().len(),
        documents: r
            .chunks()
            .iter()
            .map(|c| &c.doc_id)
            .collect::<std::collections::HashSet<_>>()
            .len(),
        index_dir: ctx.cfg.index_dir().display().to_string(),
    };
    ctx.print(&summary, || {
        format!(
            "indexed {} chunks from {} documents into {}\n",
            summary.chunks, summary.documents, summary.index_dir
        )
    })
}

fn retrieve(ctx: &Ctx, query: &str) -> CliResult {
    let r = ctx.require_retriever()?;
    let contexts = r.retrieve(query)?;
    ctx.print(&contexts, || explain(&contexts))
}

#[derive(Serialize)]
struct AskReply<'a> {
    session_id: &'a str,
    reply: &'a str,
    contexts: Vec<&'a str>,
    latency_ms: Option<u64>,
}

fn ask(ctx: &Ctx, args: AskArgs) -> CliResult {
    let rag = !args.no_rag;
    let retriever = if rag {
        ctx.retriever()?.map(Arc::new)
    } else {
        None
    };
    let engine = app::build_engine(&ctx.cfg, retriever)?;
    let session_id = match args.session {
        Some(id) => {
            let mut s = engine.get_session(&id)?;
            if s.rag_enabled != rag {
                s = engine.update_session(&id, None, Some(rag))?;
            }
            s.session_id
        }
        None => {
            let persona = PersonaConfig {
                role: args.role.map(Into::into),
                event: args.event.map(Into::into),
                word_limit: None,
            };
            engine
                .create_session(persona, rag, args.provider)?
                .session_id
        }
    };
    let turn = engine.post_message(&session_id, &args.question)?;
    let reply = AskReply {
        session_id: &session_id,
        reply: &turn.text,
        contexts: turn
            .contexts_used
            .iter()
            .map(|c| c.chunk_id.as_str())
            .collect(),
        latency_ms: turn.latency_ms,
    };
    ctx.print(&reply, || {
        let mut out = format!("{}\n", turn.text.trim_end());
        if !reply.contexts.is_empty() {
            out.push_str(&format!("\ncontexts: {}\n", reply.contexts.join(", ")));
        }
        out.push_str(&format!("session: {session_id}\n"));
        out
    })
}

fn serve(ctx: &Ctx, args: ServeArgs) -> CliResult {
    let host = args.host.unwrap_or_else(|| ctx.cfg.server.host.clone());
    let port = args.port.unwrap_or(ctx.cfg.server.port);
    let addr: SocketAddr = format!("{host}:{port}")
        .parse()
        .map_err(|e| CliError::Usage(format!("bad listen address {host}:{port}: {e}")))?;

    let retriever = ctx.retriever()?;
    if retriever.is_none() {
        log::warn!("no index found; RAG sessions will get 503 until `essence-coach index` is run");
    }
    let engine = Arc::new(app::build_engine(&ctx.cfg, retriever.map(Arc::new))?);

    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| CliError::Data(format!("cannot start runtime: {e}")))?;
    runtime
        .block_on(coach_server::serve(
            engine,
            addr,
            |a| eprintln!("listening on http://{a}"),
            coach_server::ctrl_c(),
        ))
        .map_err(|e| CliError::Data(format!("server error: {e}")))
}

fn questions(path: &Path) -> CliResult<Vec<Question>> {
    Ok(load_questions(path)?)
}

fn eval_retrieval(ctx: &Ctx, args: EvalRetrievalArgs) -> CliResult {
    let qs = questions(&args.questions)?;
    let judgments = load_judgments(&args.judgments)?;
    let report = match &args.runs {
        Some(path) => {
            let runs = load_runs(path)?;
            retrieval_from_runs(&runs, &qs, &judgments, args.k)?
                .ok_or_else(|| CliError::Data(format!("{} has no RAG run", path.display())))?
        }
        None => {
            let r = ctx.require_retriever()?;
            let ranked = rank_questions(&r, &qs, ctx.exec)?;
            evaluate_retrieval(&qs, &ranked, &judgments, args.k)?
        }
    };
    if let Some(out) = &args.out {
        write_json(out, &report)?;
    }
    ctx.print(&report, || render_retrieval(&report))
}

/// Parses `ID=PROVIDER:rag` or `ID=PROVIDER:base`.
fn parse_model(spec: &str) -> CliResult<ModelConfig> {
    let bad = || {
        CliError::Usage(format!(
            "bad --model {spec:?}; expected ID=PROVIDER:rag or ID=PROVIDER:base"
        ))
    };
    let (id, rest) = spec.split_once('=').ok_or_else(bad)?;
    let (provider, mode) = rest.rsplit_once(':').ok_or_else(bad)?;
    let rag = match mode {
        "rag" => true,
        "base" => false,
        _ => return Err(bad()),
    };
    if id.is_empty() || provider.is_empty() {
        return Err(bad());
    }
    Ok(ModelConfig::new(id, Some(provider.to_string()), rag))
}

fn default_models(cfg: &AppConfig) -> Vec<ModelConfig> {
    cfg.effective_providers()
        .iter()
        .flat_map(|p| {
            [
                ModelConfig::new(
                    format!("{}-rag", p.provider_id),
                    Some(p.provider_id.clone()),
                    true,
                ),
                ModelConfig::new(
                    format!("{}-base", p.provider_id),
                    Some(p.provider_id.clone()),
                    false,
                ),
            ]
        })
        .collect()
}

fn experiment(ctx: &Ctx, args: ExperimentArgs) -> CliResult {
    let qs = questions(&args.questions)?;
    let models = if args.models.is_empty() {
        default_models(&ctx.cfg)
    } else {
        args.models
            .iter()
            .map(|m| parse_model(m))
            .collect::<CliResult<Vec<_>>>()?
    };
    let judgments = args.judgments.as_deref().map(load_judgments).transpose()?;
    let retriever = if models.iter().any(|m| m.rag_enabled) {
        Some(Arc::new(ctx.require_retriever()?))
    } else {
        ctx.retriever()?.map(Arc::new)
    };
    let engine = app::build_engine(&ctx.cfg, retriever)?;
    let token_embedder = ctx.cfg.embedding.build()?;

    let out = run_experiment(
        &engine,
        &qs,
        &models,
        token_embedder.as_ref(),
        judgments.as_deref(),
        args.k,
        ctx.exec,
    )?;

    fs::create_dir_all(&args.out)
        .map_err(|e| CliError::Data(format!("cannot create {}: {e}", args.out.display())))?;
    save_runs(args.out.join(RUNS_FILE), &out.runs)?;
    write_context_log(args.out.join(CONTEXTS_FILE), &out.runs)?;
    write_json(&args.out.join(REPORT_FILE), &out.report)?;

    let failures: usize = out
        .runs
        .iter()
        .map(|r| r.answers.iter().filter(|a| a.error.is_some()).count())
        .sum();
    if failures > 0 {
        eprintln!(
            "warning: {failures} answers failed; see {}",
            args.out.join(RUNS_FILE).display()
        );
    }
    ctx.print(&out.report, || render_experiment(&out.report))
}

fn eval_responses(ctx: &Ctx, args: EvalResponsesArgs) -> CliResult {
    let qs = questions(&args.questions)?;
    let mut runs = load_runs(&args.runs)?;
    let embedder = ctx.cfg.embedding.build()?;
    let semantic = score_runs(&mut runs, &qs, embedder.as_ref(), ctx.exec)?;
    if let Some(out) = &args.out {
        write_json(out, &semantic)?;
    }
    ctx.print(&semantic, || render_semantic(&semantic))
}

fn report(ctx: &Ctx, args: ReportArgs) -> CliResult {
    let qs = questions(&args.questions)?;
    let mut report: ExperimentReport = read_json(&args.dir.join(REPORT_FILE))?;
    if let Some(j) = &args.judgments {
        let runs = load_runs(args.dir.join(RUNS_FILE))?;
        report.retrieval = retrieval_from_runs(&runs, &qs, &load_judgments(j)?, args.k)?;
    }
    if let Some(h) = &args.human {
        let scores = load_human_scores(h)?;
        report.human = Some(aggregate_human(&scores, &qs, &config_ids(&scores))?);
    }
    ctx.print(&report, || render_experiment(&report))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn model_specs() {
        let m = parse_model("gpt-rag=openai:rag").unwrap();
        assert_eq!(m.config_id, "gpt-rag");
        assert_eq!(m.provider_id.as_deref(), Some("openai"));
        assert!(m.rag_enabled);
        assert!(!parse_model("x=local:host:base").unwrap().rag_enabled);
        for bad in ["x", "x=p", "=p:rag", "x=:rag", "x=p:maybe"] {
            assert!(matches!(parse_model(bad), Err(CliError::Usage(_))), "{bad}");
        }
    }

    #[test]
    fn default_models_pair_each_provider() {
        let ids: Vec<String> = default_models(&AppConfig::default())
            .into_iter()
            .map(|m| m.config_id)
            .collect();
        assert_eq!(ids, ["mock-rag", "mock-base"]);
    }
}
