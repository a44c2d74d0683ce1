//! The `vca` operator tool.
//!
//! `chat` runs a survey in the terminal against an embedded service, or
//! against a gateway with `--remote`. The other subcommands read or populate
//! the same event store.

use std::collections::BTreeSet;
use std::io::{BufRead, IsTerminal, Write};
use std::path::PathBuf;
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use chrono::{Duration, NaiveDate};
use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use crate::analytics::{write_csv, FLUID_SUMMARY_HEADER, SLEEP_SUMMARY_HEADER};
use crate::config::Config;
use crate::engine::{Phase, Utterance};
use crate::flow::FlowCatalog;
use crate::scheduler::due_nudges;
use crate::service::{Service, ServiceConfig, Turn};
use crate::simulate::{simulate, CohortSpec};
use crate::store::{EventKind, EventStore, ExportFilter, ExportFormat, SyncMode};
use crate::time::Timestamp;

#[derive(Debug, Parser)]
#[command(name = "vca", version, about = "Conversational health surveys: chat, simulate, export, schedule, summarize, serve")]
pub struct Cli {
    /// Configuration file (TOML). VCA_<KEY> environment variables override it.
    #[arg(long, global = true, env = "VCA_CONFIG")]
    pub config: Option<PathBuf>,
    /// Event log path; overrides `store_path`.
    #[arg(long, global = true)]
    pub store: Option<PathBuf>,
    /// Seed for the cohort generator and for account salts and tokens.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Answer timeout; overrides `timeout_ms`.
    #[arg(long, global = true)]
    pub timeout_ms: Option<i64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Take a survey in the terminal. An empty line after the timeout counts as silence.
    Chat(ChatArgs),
    /// Populate an empty store with a seeded cohort.
    Simulate(SimulateArgs),
    /// Write the event log as CSV or JSON lines.
    Export(ExportArgs),
    /// List scheduled survey times.
    Schedule(ScheduleArgs),
    /// Fluid or sleep summaries, or cohort plot data.
    Summary(SummaryArgs),
    /// Run the HTTP gateway.
    Serve(ServeArgs),
    /// Enroll a participant and print their API token.
    Enroll(EnrollArgs),
    /// Link a participant's account (begin and confirm in one step).
    Link(LinkArgs),
}

#[derive(Debug, Args)]
pub struct ChatArgs {
    /// Flow id, e.g. fluidmonitor or sleepy.
    pub flow: String,
    #[arg(long)]
    pub user: String,
    /// Gateway base URL; the embedded engine is used when absent.
    #[arg(long)]
    pub remote: Option<String>,
    /// API token for --remote.
    #[arg(long, env = "VCA_TOKEN")]
    pub token: Option<String>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, default_value_t = 3)]
    pub users: i64,
    #[arg(long, default_value_t = 19)]
    pub days: i64,
    #[arg(long, default_value = "2018-06-01")]
    pub start: NaiveDate,
    #[arg(long, default_value = "America/New_York")]
    pub timezone: String,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[arg(long, default_value = "csv")]
    pub format: String,
    /// Comma separated user ids.
    #[arg(long)]
    pub users: Option<String>,
    /// Epoch ms, RFC 3339 or YYYY-MM-DD (UTC).
    #[arg(long)]
    pub from: Option<String>,
    /// Inclusive when a date.
    #[arg(long)]
    pub to: Option<String>,
    /// Comma separated event kinds, e.g. ANSWER_COMMITTED.
    #[arg(long)]
    pub kinds: Option<String>,
    #[arg(long)]
    pub flow: Option<String>,
    #[arg(long)]
    pub question: Option<String>,
    /// Output file; stdout when absent.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ScheduleArgs {
    /// All enrolled users when absent.
    #[arg(long)]
    pub user: Option<String>,
    /// First local date; today when absent.
    #[arg(long)]
    pub date: Option<NaiveDate>,
    #[arg(long, default_value_t = 1)]
    pub days: u32,
}

#[derive(Debug, Args)]
pub struct SummaryArgs {
    #[arg(long)]
    pub user: Option<String>,
    /// Single day; same as --from D --to D.
    #[arg(long, conflicts_with_all = ["from", "to"])]
    pub date: Option<NaiveDate>,
    #[arg(long)]
    pub from: Option<NaiveDate>,
    #[arg(long)]
    pub to: Option<NaiveDate>,
    /// Sleep-diary rows instead of fluid totals.
    #[arg(long)]
    pub sleep: bool,
    /// Cohort daily mean/min/max points (`local_date,mean_ml,min_ml,max_ml,n`).
    #[arg(long, conflicts_with = "sleep")]
    pub plot_data: bool,
    /// Comma separated users for --plot-data; everyone when absent.
    #[arg(long, requires = "plot_data")]
    pub users: Option<String>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Overrides `bind`.
    #[arg(long)]
    pub bind: Option<String>,
}

#[derive(Debug, Args)]
pub struct EnrollArgs {
    pub user: String,
    #[arg(long)]
    pub password: String,
    #[arg(long)]
    pub name: Option<String>,
    #[arg(long)]
    pub timezone: Option<String>,
}

#[derive(Debug, Args)]
pub struct LinkArgs {
    pub user: String,
    #[arg(long)]
    pub password: String,
}

impl Cli {
    fn load_config(&self) -> Result<Config> {
        let mut cfg = Config::load(self.config.as_deref())?;
        if let Some(p) = &self.store {
            cfg.store_path = p.clone();
        }
        if let Some(t) = self.timeout_ms {
            cfg.timeout_ms = t;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn open(&self, cfg: &Config, sync: SyncMode) -> Result<Service> {
        open_service(cfg, self.seed, sync)
    }
}

fn open_service(cfg: &Config, seed: Option<u64>, sync: SyncMode) -> Result<Service> {
    let store =
        EventStore::open_with(&cfg.store_path, sync).with_context(|| format!("opening {}", cfg.store_path.display()))?;
    let scfg = ServiceConfig { seed, ..ServiceConfig::from_config(cfg) };
    Ok(Service::new(Arc::new(store), FlowCatalog::builtin(), scfg)?)
}

fn list(s: Option<&str>) -> Option<BTreeSet<String>> {
    let set: BTreeSet<String> = s?.split(',').map(str::trim).filter(|s| !s.is_empty()).map(str::to_string).collect();
    (!set.is_empty()).then_some(set)
}

/// Parses arguments from the process and runs. Returns the exit code.
pub fn main() -> i32 {
    let cli = Cli::parse();
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_env("VCA_LOG").unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("warn")),
        )
        .with_writer(std::io::stderr)
        .init();
    let stdin = std::io::stdin();
    let interactive = stdin.is_terminal();
    match run(cli, &mut stdin.lock(), &mut std::io::stdout().lock(), interactive) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            2
        }
    }
}

pub fn run(cli: Cli, input: &mut dyn BufRead, out: &mut dyn Write, interactive: bool) -> Result<i32> {
    let cfg = cli.load_config()?;
    match &cli.command {
        Command::Chat(a) => match &a.remote {
            Some(url) => {
                let token = a.token.clone().ok_or_else(|| anyhow!("--remote needs --token or VCA_TOKEN"))?;
                let mut backend = Remote::new(url, &token, &a.user, &a.flow)?;
                chat(&mut backend, input, out, interactive, cfg.timeout_ms)
            }
            None => {
                let service = cli.open(&cfg, SyncMode::EveryAppend)?;
                let mut backend = Embedded { service: &service, user: a.user.clone(), flow: a.flow.clone(), session: None };
                chat(&mut backend, input, out, interactive, cfg.timeout_ms)
            }
        },
        Command::Simulate(a) => {
            let users = u32::try_from(a.users).ok().filter(|n| *n > 0).ok_or_else(|| anyhow!("--users must be positive"))?;
            let days = u32::try_from(a.days).ok().filter(|n| *n > 0).ok_or_else(|| anyhow!("--days must be positive"))?;
            let seed = cli.seed.unwrap_or(42);
            let service = open_service(&cfg, Some(seed), SyncMode::OnDemand)?;
            let spec = CohortSpec { users, days, seed, start: a.start, timezone: a.timezone.clone() };
            let report = simulate(&service, &spec)?;
            writeln!(out, "{}", serde_json::to_string_pretty(&report)?)?;
            Ok(0)
        }
        Command::Export(a) => {
            let format: ExportFormat = a.format.parse()?;
            let mut filter = ExportFilter::all();
            filter.users = list(a.users.as_deref());
            filter.flows = list(a.flow.as_deref());
            filter.questions = list(a.question.as_deref());
            if let Some(kinds) = list(a.kinds.as_deref()) {
                filter.kinds = Some(kinds.iter().map(|k| k.parse::<EventKind>()).collect::<Result<_, _>>()?);
            }
            let bound = |s: &Option<String>, end| -> Result<Option<Timestamp>> {
                s.as_deref()
                    .map(|v| Timestamp::parse_bound(v, end).ok_or_else(|| anyhow!("bad time `{v}`")))
                    .transpose()
            };
            filter.from = bound(&a.from, false)?;
            filter.to = bound(&a.to, true)?;
            let service = cli.open(&cfg, SyncMode::EveryAppend)?;
            let bytes = service.export(&filter, format)?;
            match &a.out {
                Some(p) => std::fs::write(p, bytes).with_context(|| format!("writing {}", p.display()))?,
                None => out.write_all(&bytes)?,
            }
            Ok(0)
        }
        Command::Schedule(a) => {
            let service = cli.open(&cfg, SyncMode::EveryAppend)?;
            let profiles = match &a.user {
                Some(u) => vec![service.profile(u)?],
                None => service.profiles(),
            };
            writeln!(out, "user_id,flow_id,local_date,local_time,fire_at_utc")?;
            for p in profiles {
                let tz = p.tz();
                let first = a.date.unwrap_or_else(|| Timestamp::now().local_date(tz));
                let t0 = Timestamp::start_of_local_day(first, tz);
                let t1 = Timestamp::start_of_local_day(first + Duration::days(i64::from(a.days.max(1))), tz);
                for n in due_nudges(&service.schedules_for(&p)?, t0, t1) {
                    writeln!(out, "{},{},{},{},{}", n.user_id, n.flow_id, n.local_date, n.local_time, n.fire_at)?;
                }
            }
            Ok(0)
        }
        Command::Summary(a) => summary(&cli, &cfg, a, out),
        Command::Serve(a) => {
            let mut cfg = cfg.clone();
            if let Some(b) = &a.bind {
                cfg.bind = b.clone();
            }
            tokio::runtime::Runtime::new()?.block_on(crate::gateway::serve(&cfg))?;
            Ok(0)
        }
        Command::Enroll(a) => {
            let service = cli.open(&cfg, SyncMode::EveryAppend)?;
            let now = Timestamp::now();
            let profile = service.enroll(&a.user, a.name.as_deref().unwrap_or(&a.user), &a.password, a.timezone.as_deref(), now)?;
            let token = service.issue_api_token(&profile.user_id, now)?;
            writeln!(out, "{token}")?;
            Ok(0)
        }
        Command::Link(a) => {
            let service = cli.open(&cfg, SyncMode::EveryAppend)?;
            let now = Timestamp::now();
            let token = service.begin_link(&a.user, now)?;
            let profile = service.confirm_link(&token.token, &a.password, now)?;
            writeln!(out, "{} {:?}", profile.user_id, profile.link_status)?;
            Ok(0)
        }
    }
}

fn summary(cli: &Cli, cfg: &Config, a: &SummaryArgs, out: &mut dyn Write) -> Result<i32> {
    let service = cli.open(cfg, SyncMode::EveryAppend)?;
    let (from, to) = match (a.date, a.from, a.to) {
        (Some(d), _, _) => (Some(d), Some(d)),
        (None, f, t) => (f, t),
    };
    if a.plot_data {
        let ledger = service.ledger()?;
        let dates: BTreeSet<NaiveDate> = ledger.totals().map(|(_, d, _)| d).collect();
        let (Some(lo), Some(hi)) = (from.or(dates.first().copied()), to.or(dates.last().copied())) else {
            writeln!(out, "local_date,mean_ml,min_ml,max_ml,n")?;
            return Ok(0);
        };
        let users = list(a.users.as_deref());
        let points = ledger.mean_daily_consumption(users.as_ref(), lo, hi);
        write_csv(
            out,
            ["local_date", "mean_ml", "min_ml", "max_ml", "n"],
            points.iter().map(|p| {
                [p.local_date.to_string(), format!("{:.1}", p.mean_ml), p.min_ml.to_string(), p.max_ml.to_string(), p.n.to_string()]
            }),
        )?;
        return Ok(0);
    }
    let profiles = match &a.user {
        Some(u) => vec![service.profile(u)?],
        None => service.profiles(),
    };
    let range = |tz| {
        let today = Timestamp::now().local_date(tz);
        let f = from.unwrap_or(today);
        (f, to.unwrap_or(f.max(today)))
    };
    if from.zip(to).is_some_and(|(f, t)| f > t) {
        bail!("--from is after --to");
    }
    if a.sleep {
        let mut rows = Vec::new();
        for p in &profiles {
            let (f, t) = range(p.tz());
            rows.extend(service.sleep_summary(&p.user_id, f, t)?.iter().map(|r| r.csv_row()));
        }
        write_csv(out, SLEEP_SUMMARY_HEADER, rows)?;
    } else {
        let mut rows = Vec::new();
        for p in &profiles {
            let (f, t) = range(p.tz());
            rows.extend(service.fluid_summary(&p.user_id, f, t)?.iter().map(|r| r.csv_row()));
        }
        write_csv(out, FLUID_SUMMARY_HEADER, rows)?;
    }
    Ok(0)
}

// ---- chat

/// What the terminal needs from one exchange.
struct Exchange {
    say: String,
    status: Phase,
    deadline: Option<Timestamp>,
    progress: Option<String>,
}

trait ChatBackend {
    fn start(&mut self) -> Result<Exchange>;
    fn say(&mut self, text: &str, deadline: Option<Timestamp>) -> Result<Exchange>;
    fn silence(&mut self) -> Result<Exchange>;
    /// Final status and number of recorded answers.
    fn finish(&mut self) -> Result<(Phase, usize)>;
}

struct Embedded<'a> {
    service: &'a Service,
    user: String,
    flow: String,
    session: Option<String>,
}

impl Embedded<'_> {
    fn id(&self) -> Result<&str> {
        self.session.as_deref().ok_or_else(|| anyhow!("no session"))
    }
}

fn exchange(t: &Turn) -> Exchange {
    Exchange {
        say: t.reply.say.clone(),
        status: t.state.phase,
        deadline: t.state.deadline,
        progress: t.progress.as_ref().map(|p| p.message.clone()),
    }
}

impl ChatBackend for Embedded<'_> {
    fn start(&mut self) -> Result<Exchange> {
        let t = self.service.start_session(&self.user, &self.flow, Timestamp::now())?;
        self.session = Some(t.session_id.clone());
        Ok(exchange(&t))
    }

    fn say(&mut self, text: &str, deadline: Option<Timestamp>) -> Result<Exchange> {
        // Silence is only ever an empty line, so time spent typing never
        // expires the question.
        let now = Timestamp::now();
        let at = deadline.map_or(now, |d| now.min(d));
        let u = Utterance { text: text.to_string(), client_ts: Some(now.millis()), request_id: None };
        Ok(exchange(&self.service.utterance(self.id()?, &u, at)?))
    }

    fn silence(&mut self) -> Result<Exchange> {
        Ok(exchange(&self.service.timeout(self.id()?, Timestamp::now(), true)?))
    }

    fn finish(&mut self) -> Result<(Phase, usize)> {
        let s = self.service.session(self.id()?)?;
        Ok((s.phase, s.answers.len()))
    }
}

struct Remote {
    http: reqwest::blocking::Client,
    base: String,
    token: String,
    user: String,
    flow: String,
    session: Option<String>,
}

impl Remote {
    fn new(base: &str, token: &str, user: &str, flow: &str) -> Result<Self> {
        Ok(Remote {
            http: reqwest::blocking::Client::builder().build()?,
            base: base.trim_end_matches('/').to_string(),
            token: token.to_string(),
            user: user.to_string(),
            flow: flow.to_string(),
            session: None,
        })
    }

    fn call(&self, method: reqwest::Method, path: &str, body: Option<Value>) -> Result<Value> {
        let mut req = self.http.request(method, format!("{}{}", self.base, path)).bearer_auth(&self.token);
        if let Some(b) = body {
            req = req.json(&b);
        }
        let resp = req.send()?;
        let status = resp.status();
        let v: Value = resp.json().unwrap_or(Value::Null);
        if !status.is_success() {
            bail!("{status}: {}", v["message"].as_str().unwrap_or("request failed"));
        }
        Ok(v)
    }

    fn id(&self) -> Result<&str> {
        self.session.as_deref().ok_or_else(|| anyhow!("no session"))
    }
}

fn remote_exchange(v: &Value) -> Result<Exchange> {
    let status: Phase = serde_json::from_value(v["session_status"].clone()).context("reply without session_status")?;
    Ok(Exchange {
        say: v["say"].as_str().unwrap_or_default().to_string(),
        status,
        deadline: None,
        progress: v["progress"]["message"].as_str().map(str::to_string),
    })
}

impl ChatBackend for Remote {
    fn start(&mut self) -> Result<Exchange> {
        let v = self.call(reqwest::Method::POST, "/v1/sessions", Some(json!({"user": self.user, "flow": self.flow})))?;
        self.session = v["session_id"].as_str().map(str::to_string);
        remote_exchange(&v)
    }

    fn say(&mut self, text: &str, _: Option<Timestamp>) -> Result<Exchange> {
        let body = json!({
            "text": text,
            "client_ts": Timestamp::now().millis(),
            "request_id": uuid::Uuid::new_v4().to_string(),
        });
        remote_exchange(&self.call(reqwest::Method::POST, &format!("/v1/sessions/{}/utterances", self.id()?), Some(body))?)
    }

    fn silence(&mut self) -> Result<Exchange> {
        remote_exchange(&self.call(reqwest::Method::POST, &format!("/v1/sessions/{}/timeout", self.id()?), Some(json!({})))?)
    }

    fn finish(&mut self) -> Result<(Phase, usize)> {
        let v = self.call(reqwest::Method::GET, &format!("/v1/sessions/{}", self.id()?), None)?;
        let phase = serde_json::from_value(v["phase"].clone())?;
        Ok((phase, v["answers"].as_object().map_or(0, |a| a.len())))
    }
}

fn chat(backend: &mut dyn ChatBackend, input: &mut dyn BufRead, out: &mut dyn Write, interactive: bool, timeout_ms: i64) -> Result<i32> {
    let mut ex = backend.start()?;
    let mut asked = std::time::Instant::now();
    writeln!(out, "{}", ex.say)?;
    let mut line = String::new();
    while !ex.status.is_terminal() {
        out.flush()?;
        line.clear();
        if input.read_line(&mut line)? == 0 {
            writeln!(out, "(input closed; the session stays open)")?;
            break;
        }
        let text = line.trim();
        if text.is_empty() {
            let waited = asked.elapsed().as_millis() as i64;
            if interactive && waited < timeout_ms {
                writeln!(out, "(press Enter on an empty line after {} s of silence to skip the wait)", (timeout_ms - waited + 999) / 1000)?;
                continue;
            }
            ex = backend.silence()?;
        } else {
            ex = backend.say(text, ex.deadline)?;
        }
        asked = std::time::Instant::now();
        if let Some(p) = &ex.progress {
            writeln!(out, "({p})")?;
        }
        writeln!(out, "{}", ex.say)?;
    }
    let (status, answers) = backend.finish()?;
    writeln!(out, "status: {}", status.as_str())?;
    writeln!(out, "answers: {answers}")?;
    Ok(if status == Phase::Abandoned { 1 } else { 0 })
}
