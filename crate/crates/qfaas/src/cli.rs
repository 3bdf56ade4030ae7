//! The `qfaas` command line: runs the server and talks to the gateway.
//!
//! Exit codes: 0 on success, 1 when the server or network reports an
//! error, 2 for usage errors.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::config::Config;

pub const DEFAULT_SERVER: &str = "http://127.0.0.1:8080";

#[derive(Debug, Parser)]
#[command(name = "qfaas", version, about = "Quantum function-as-a-service platform")]
pub struct Cli {
    /// Gateway base URL [env: QFAAS_SERVER]
    #[arg(long, global = true)]
    pub server: Option<String>,
    /// Bearer token [env: QFAAS_TOKEN]
    #[arg(long, global = true)]
    pub token: Option<String>,
    #[arg(long, short, global = true, value_enum, default_value_t = Output::Table)]
    pub output: Output,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Output {
    Table,
    Json,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the platform server
    Serve(ServeArgs),
    /// Check a token against the server and save it locally
    Login,
    /// Deploy and manage functions
    #[command(subcommand)]
    Function(FunctionCmd),
    /// Invoke a deployed function
    Invoke(InvokeArgs),
    /// Inspect jobs
    #[command(subcommand)]
    Job(JobCmd),
    /// Inspect backends
    #[command(subcommand)]
    Backend(BackendCmd),
    /// Register provider credentials
    #[command(subcommand)]
    Provider(ProviderCmd),
    /// Manage users (administrators)
    #[command(subcommand)]
    User(UserCmd),
    /// Platform monitoring
    #[command(subcommand)]
    System(SystemCmd),
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// TOML configuration file
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub addr: Option<String>,
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
}

#[derive(Debug, Args, Default)]
pub struct FunctionArgs {
    /// File holding the circuit template
    #[arg(long, short)]
    pub file: Option<PathBuf>,
    /// qiskit, cirq, qsharp or braket
    #[arg(long)]
    pub dialect: Option<String>,
    /// STATIC, BUILTIN_QRNG, BUILTIN_DJ, BUILTIN_SHOR or PARAMETRIC
    #[arg(long)]
    pub kind: Option<String>,
    /// Declared parameter (repeatable)
    #[arg(long = "param")]
    pub params: Vec<String>,
    #[arg(long)]
    pub pre: Option<String>,
    #[arg(long)]
    pub post: Option<String>,
    #[arg(long)]
    pub replicas: Option<u32>,
}

#[derive(Debug, Subcommand)]
pub enum FunctionCmd {
    Create {
        name: String,
        #[command(flatten)]
        args: FunctionArgs,
    },
    Update {
        name: String,
        #[command(flatten)]
        args: FunctionArgs,
    },
    Delete {
        name: String,
    },
    List,
    Get {
        name: String,
    },
    Scale {
        name: String,
        replicas: u32,
    },
    Logs {
        name: String,
    },
}

#[derive(Debug, Args)]
pub struct InvokeArgs {
    pub name: String,
    #[arg(long, allow_hyphen_values = true)]
    pub input: Option<i64>,
    #[arg(long)]
    pub provider: Option<String>,
    #[arg(long)]
    pub shots: Option<u64>,
    /// Wait for the result instead of returning the job id
    #[arg(long)]
    pub wait: bool,
    #[arg(long)]
    pub autoselect: bool,
    /// Backend type filter for autoselect (repeatable)
    #[arg(long = "type")]
    pub types: Vec<String>,
    #[arg(long)]
    pub backend: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Raw JSON request body; `-` reads standard input. Other flags are ignored.
    #[arg(long)]
    pub body: Option<String>,
}

#[derive(Debug, Subcommand)]
pub enum JobCmd {
    Get {
        id: String,
    },
    List {
        #[arg(long)]
        status: Option<String>,
        #[arg(long)]
        function: Option<String>,
    },
    Delete {
        id: String,
    },
}

#[derive(Debug, Subcommand)]
pub enum BackendCmd {
    List,
    Cost {
        name: String,
        #[arg(long, default_value_t = 1)]
        tasks: u64,
        #[arg(long, default_value_t = 1000)]
        shots: u64,
    },
}

#[derive(Debug, Subcommand)]
pub enum ProviderCmd {
    List,
    /// Store the caller's credential for a provider
    Credential {
        provider: String,
        credential: String,
    },
}

#[derive(Debug, Subcommand)]
pub enum UserCmd {
    List,
    Create {
        username: String,
        #[arg(long)]
        role: String,
    },
    Delete {
        id: String,
    },
    Me,
}

#[derive(Debug, Subcommand)]
pub enum SystemCmd {
    Status,
}

/// Saved connection settings.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CliConfig {
    pub server: Option<String>,
    pub token: Option<String>,
}

impl CliConfig {
    pub fn path(env: &dyn Fn(&str) -> Option<String>) -> Option<PathBuf> {
        if let Some(p) = env("QFAAS_CLI_CONFIG") {
            return Some(p.into());
        }
        env("HOME").map(|h| Path::new(&h).join(".config/qfaas/cli.json"))
    }

    pub fn load(path: &Path) -> CliConfig {
        fs::read(path)
            .ok()
            .and_then(|b| serde_json::from_slice(&b).ok())
            .unwrap_or_default()
    }

    /// Writes the file readable by the owner only.
    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        let mut opts = fs::OpenOptions::new();
        opts.write(true).create(true).truncate(true);
        #[cfg(unix)]
        {
            use std::os::unix::fs::OpenOptionsExt;
            opts.mode(0o600);
        }
        let mut f = opts.open(path)?;
        f.write_all(&serde_json::to_vec_pretty(self).expect("config serializes"))?;
        #[cfg(unix)]
        {
            use std::os::unix::fs::PermissionsExt;
            f.set_permissions(fs::Permissions::from_mode(0o600))?;
        }
        Ok(())
    }
}

/// Where output goes.
pub struct Console<'a> {
    pub out: &'a mut dyn Write,
    pub err: &'a mut dyn Write,
    pub color: bool,
}

struct Failure(i32, String);

type Step = std::result::Result<(), Failure>;

fn io_fail(e: impl std::fmt::Display) -> Failure {
    Failure(1, e.to_string())
}

struct Client {
    base: String,
    token: Option<String>,
    http: reqwest::blocking::Client,
}

impl Client {
    fn call(&self, method: reqwest::Method, path: &str, body: Option<&Value>) -> std::result::Result<Value, Failure> {
        let url = format!("{}{}", self.base.trim_end_matches('/'), path);
        let mut req = self.http.request(method, &url);
        if let Some(t) = &self.token {
            req = req.bearer_auth(t);
        }
        if let Some(b) = body {
            req = req.json(b);
        }
        let resp = req
            .send()
            .map_err(|e| Failure(1, format!("cannot reach {}: {e}", self.base)))?;
        let status = resp.status();
        let text = resp.text().map_err(io_fail)?;
        let value: Value = if text.trim().is_empty() {
            Value::Null
        } else {
            serde_json::from_str(&text).unwrap_or(Value::String(text))
        };
        if status.is_success() {
            Ok(value)
        } else {
            let code = value["code"].as_str().unwrap_or("HttpError");
            let message = value["message"].as_str().unwrap_or_else(|| status.canonical_reason().unwrap_or(""));
            Err(Failure(1, format!("{code} ({}): {message}", status.as_u16())))
        }
    }

    fn get(&self, path: &str) -> std::result::Result<Value, Failure> {
        self.call(reqwest::Method::GET, path, None)
    }
}

fn paint(color: bool, s: &str) -> String {
    if !color {
        return s.to_owned();
    }
    let code = match s {
        "DONE" | "DEPLOYED" | "true" => "32",
        "ERROR" | "FAILED" | "false" => "31",
        "QUEUED" | "RUNNING" | "BUILDING" | "DELETING" => "33",
        _ => return s.to_owned(),
    };
    format!("\x1b[{code}m{s}\x1b[0m")
}

fn cell(v: &Value) -> String {
    match v {
        Value::Null => "-".into(),
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

/// Left-aligned columns; `status_cols` are coloured.
fn table(out: &mut dyn Write, color: bool, headers: &[&str], rows: &[Vec<String>], status_cols: &[usize]) -> std::io::Result<()> {
    let mut widths: Vec<usize> = headers.iter().map(|h| h.len()).collect();
    for row in rows {
        for (i, c) in row.iter().enumerate() {
            widths[i] = widths[i].max(c.chars().count());
        }
    }
    let line = |cells: Vec<String>| -> String {
        cells
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let pad = " ".repeat(widths[i].saturating_sub(c.chars().count()));
                let text = if status_cols.contains(&i) { paint(color, c) } else { c.clone() };
                format!("{text}{pad}")
            })
            .collect::<Vec<_>>()
            .join("  ")
            .trim_end()
            .to_owned()
    };
    writeln!(out, "{}", line(headers.iter().map(|h| h.to_string()).collect()))?;
    for row in rows {
        writeln!(out, "{}", line(row.clone()))?;
    }
    Ok(())
}

fn rows(items: &Value, keys: &[&str]) -> Vec<Vec<String>> {
    items
        .as_array()
        .map(|a| a.iter().map(|it| keys.iter().map(|k| cell(&it[*k])).collect()).collect())
        .unwrap_or_default()
}

fn fields(out: &mut dyn Write, color: bool, v: &Value, keys: &[&str]) -> std::io::Result<()> {
    let w = keys.iter().map(|k| k.len()).max().unwrap_or(0);
    for k in keys {
        let c = cell(&v[*k]);
        writeln!(out, "{k:<w$}  {}", paint(color, &c))?;
    }
    Ok(())
}

fn read_source(path: &Path) -> std::result::Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure(2, format!("cannot read {}: {e}", path.display())))
}

fn function_body(name: Option<&str>, a: &FunctionArgs) -> std::result::Result<Value, Failure> {
    let mut body = serde_json::Map::new();
    if let Some(n) = name {
        body.insert("name".into(), json!(n));
    }
    if let Some(f) = &a.file {
        body.insert("source".into(), json!(read_source(f)?));
    }
    let mut put = |k: &str, v: &Option<String>| {
        if let Some(v) = v {
            body.insert(k.into(), json!(v));
        }
    };
    put("dialectTag", &a.dialect);
    put("kind", &a.kind.as_ref().map(|k| k.to_ascii_uppercase()));
    put("preProcessor", &a.pre);
    put("postProcessor", &a.post);
    if !a.params.is_empty() {
        body.insert("declaredParams".into(), json!(a.params));
    }
    if let Some(r) = a.replicas {
        body.insert("replicas".into(), json!(r));
    }
    Ok(Value::Object(body))
}

fn invoke_body(a: &InvokeArgs, stdin: &mut dyn FnMut() -> std::io::Result<String>) -> std::result::Result<Value, Failure> {
    if let Some(b) = &a.body {
        let text = if b == "-" {
            stdin().map_err(|e| Failure(2, e.to_string()))?
        } else if let Some(path) = b.strip_prefix('@') {
            read_source(Path::new(path))?
        } else {
            b.clone()
        };
        return serde_json::from_str(&text).map_err(|e| Failure(2, format!("--body is not valid JSON: {e}")));
    }
    let mut info = serde_json::Map::new();
    info.insert("autoselect".into(), json!(a.autoselect));
    if !a.types.is_empty() {
        info.insert("type".into(), json!(a.types));
    }
    if let Some(b) = &a.backend {
        info.insert("backendName".into(), json!(b));
    }
    let mut body = json!({
        "input": a.input.unwrap_or(0),
        "provider": a.provider.clone().unwrap_or_else(|| "internal".into()),
        "shots": a.shots.unwrap_or(crate::invoke::DEFAULT_SHOTS),
        "waitForResult": a.wait,
        "backendInfo": info,
    });
    if let Some(s) = a.seed {
        body["seed"] = json!(s);
    }
    Ok(body)
}

fn encode(s: &str) -> String {
    let mut out = String::new();
    for b in s.bytes() {
        if b.is_ascii_alphanumeric() || b"-_.~".contains(&b) {
            out.push(b as char);
        } else {
            out.push_str(&format!("%{b:02X}"));
        }
    }
    out
}

fn serve(args: &ServeArgs, env: &dyn Fn(&str) -> Option<String>, con: &mut Console) -> Step {
    let mut config = match &args.config {
        Some(p) => Config::from_file(p).map_err(|e| Failure(2, e.to_string()))?,
        None => Config::default(),
    };
    config.apply_env(env);
    if let Some(a) = &args.addr {
        config.addr = a.clone();
    }
    if let Some(d) = &args.data_dir {
        config.data_dir = d.clone();
    }
    config.validate().map_err(|e| Failure(2, e.to_string()))?;
    let rt = tokio::runtime::Runtime::new().map_err(io_fail)?;
    rt.block_on(async {
        let platform = crate::platform::Platform::start(config.clone()).map_err(io_fail)?;
        if let Some(t) = &platform.bootstrap_token {
            writeln!(con.err, "created administrator `admin` with token {t}").map_err(io_fail)?;
        }
        let listener = tokio::net::TcpListener::bind(&config.addr)
            .await
            .map_err(|e| Failure(1, format!("cannot listen on {}: {e}", config.addr)))?;
        let addr = listener.local_addr().map_err(io_fail)?;
        writeln!(con.err, "listening on http://{addr}").map_err(io_fail)?;
        tracing::info!(%addr, data = %config.data_dir.display(), "gateway started");
        let shutdown = async {
            let _ = tokio::signal::ctrl_c().await;
        };
        crate::gateway::serve(platform, listener, shutdown).await.map_err(io_fail)
    })
}

/// Runs the command line with `args` (including the program name).
pub fn run(args: &[String], env: &dyn Fn(&str) -> Option<String>, con: &mut Console) -> i32 {
    run_with_stdin(args, env, con, &mut || std::io::read_to_string(std::io::stdin()))
}

pub fn run_with_stdin(
    args: &[String],
    env: &dyn Fn(&str) -> Option<String>,
    con: &mut Console,
    stdin: &mut dyn FnMut() -> std::io::Result<String>,
) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let text = if con.color { e.render().ansi().to_string() } else { e.render().to_string() };
            let sink = if e.use_stderr() { &mut con.err } else { &mut con.out };
            let _ = write!(sink, "{text}");
            return code;
        }
    };
    match dispatch(&cli, env, con, stdin) {
        Ok(()) => 0,
        Err(Failure(code, msg)) => {
            let _ = writeln!(con.err, "error: {msg}");
            code
        }
    }
}

fn dispatch(
    cli: &Cli,
    env: &dyn Fn(&str) -> Option<String>,
    con: &mut Console,
    stdin: &mut dyn FnMut() -> std::io::Result<String>,
) -> Step {
    if let Command::Serve(a) = &cli.command {
        return serve(a, env, con);
    }
    let cfg_path = CliConfig::path(env);
    let saved = cfg_path.as_deref().map(CliConfig::load).unwrap_or_default();
    let base = cli
        .server
        .clone()
        .or_else(|| env("QFAAS_SERVER"))
        .or(saved.server.clone())
        .unwrap_or_else(|| DEFAULT_SERVER.into());
    let token = cli.token.clone().or_else(|| env("QFAAS_TOKEN")).or(saved.token.clone());
    let client = Client {
        base: base.clone(),
        token: token.clone(),
        http: reqwest::blocking::Client::builder()
            .timeout(None)
            .build()
            .map_err(io_fail)?,
    };
    let json_out = cli.output == Output::Json;
    let color = con.color;
    let out = &mut *con.out;
    let print_json = |out: &mut dyn Write, v: &Value| -> Step {
        if v.is_null() {
            return Ok(());
        }
        writeln!(out, "{}", serde_json::to_string_pretty(v).expect("value serializes")).map_err(io_fail)
    };
    use reqwest::Method;

    let (value, render): (Value, Box<dyn Fn(&mut dyn Write, &Value) -> std::io::Result<()>>) = match &cli.command {
        Command::Serve(_) => unreachable!(),
        Command::Login => {
            if token.is_none() {
                return Err(Failure(2, "login needs --token or QFAAS_TOKEN".into()));
            }
            let me = client.get("/api/users/me")?;
            let path = cfg_path.ok_or_else(|| Failure(2, "set HOME or QFAAS_CLI_CONFIG".into()))?;
            CliConfig {
                server: Some(base.clone()),
                token,
            }
            .save(&path)
            .map_err(io_fail)?;
            (
                me,
                Box::new(move |o, v| writeln!(o, "logged in to {base} as {} ({})", cell(&v["username"]), cell(&v["role"]))),
            )
        }
        Command::Function(cmd) => match cmd {
            FunctionCmd::Create { name, args } => {
                if args.file.is_none() || args.dialect.is_none() {
                    return Err(Failure(2, "function create needs --file and --dialect".into()));
                }
                let body = function_body(Some(name), args)?;
                (client.call(Method::POST, "/api/functions", Some(&body))?, Box::new(render_function(color)))
            }
            FunctionCmd::Update { name, args } => {
                let body = function_body(None, args)?;
                let path = format!("/api/functions/{}", encode(name));
                (client.call(Method::PUT, &path, Some(&body))?, Box::new(render_function(color)))
            }
            FunctionCmd::Delete { name } => {
                client.call(Method::DELETE, &format!("/api/functions/{}", encode(name)), None)?;
                let n = name.clone();
                (Value::Null, Box::new(move |o, _| writeln!(o, "deleted function {n}")))
            }
            FunctionCmd::List => (
                client.get("/api/functions?limit=1000")?,
                Box::new(move |o, v| {
                    let r = rows(&v["items"], &["name", "version", "status", "replicas", "dialect_tag", "endpoint"]);
                    table(o, color, &["NAME", "VERSION", "STATUS", "REPLICAS", "DIALECT", "ENDPOINT"], &r, &[2])
                }),
            ),
            FunctionCmd::Get { name } => (
                client.get(&format!("/api/functions/{}", encode(name)))?,
                Box::new(render_function(color)),
            ),
            FunctionCmd::Scale { name, replicas } => (
                client.call(
                    Method::PUT,
                    &format!("/api/functions/{}/scale", encode(name)),
                    Some(&json!({ "replicas": replicas })),
                )?,
                Box::new(render_function(color)),
            ),
            FunctionCmd::Logs { name } => (
                client.get(&format!("/api/functions/{}/logs", encode(name)))?,
                Box::new(move |o, v| {
                    let r = rows(&v["items"], &["time", "stage", "level", "message"]);
                    table(o, color, &["TIME", "STAGE", "LEVEL", "MESSAGE"], &r, &[])
                }),
            ),
        },
        Command::Invoke(a) => {
            let body = invoke_body(a, stdin)?;
            let path = format!("/function/{}", encode(&a.name));
            (
                client.call(Method::POST, &path, Some(&body))?,
                Box::new(move |o, v| {
                    if v.get("result").is_some() {
                        let info = &v["detail"]["provider_info"];
                        writeln!(o, "result   {}", cell(&v["result"]))?;
                        writeln!(o, "backend  {}", cell(&v["backend_device"]))?;
                        writeln!(o, "job      {} {}", cell(&info["job_id"]), paint(color, &cell(&info["job_status"])))?;
                        writeln!(o, "run time {}s", cell(&info["total_run_time"]))
                    } else {
                        writeln!(o, "job      {}", cell(&v["job_id"]))?;
                        writeln!(o, "backend  {}", cell(&v["backend_device"]))?;
                        if let Some(s) = v.get("job_status") {
                            writeln!(o, "status   {}", paint(color, &cell(s)))?;
                        }
                        Ok(())
                    }
                }),
            )
        }
        Command::Job(cmd) => match cmd {
            JobCmd::Get { id } => (
                client.get(&format!("/api/jobs/{}", encode(id)))?,
                Box::new(move |o, v| {
                    fields(
                        o,
                        color,
                        v,
                        &[
                            "job_id", "status", "function", "function_version", "backend", "shots", "num_qubits",
                            "submit_time", "running_start_time", "completion_time", "total_run_time",
                            "estimated_cost", "result",
                        ],
                    )?;
                    if let Some(e) = v["error"].as_object() {
                        writeln!(o, "error  {}: {}", cell(&e["code"]), cell(&e["message"]))?;
                    }
                    Ok(())
                }),
            ),
            JobCmd::List { status, function } => {
                let mut q = vec!["limit=1000".to_owned()];
                if let Some(s) = status {
                    q.push(format!("status={}", encode(s)));
                }
                if let Some(f) = function {
                    q.push(format!("function={}", encode(f)));
                }
                (
                    client.get(&format!("/api/jobs?{}", q.join("&")))?,
                    Box::new(move |o, v| {
                        let r = rows(&v["items"], &["job_id", "function", "backend", "status", "submit_time"]);
                        table(o, color, &["JOB_ID", "FUNCTION", "BACKEND", "STATUS", "SUBMITTED"], &r, &[3])
                    }),
                )
            }
            JobCmd::Delete { id } => {
                client.call(Method::DELETE, &format!("/api/jobs/{}", encode(id)), None)?;
                let id = id.clone();
                (Value::Null, Box::new(move |o, _| writeln!(o, "deleted job {id}")))
            }
        },
        Command::Backend(cmd) => match cmd {
            BackendCmd::List => (
                client.get("/api/backends")?,
                Box::new(move |o, v| {
                    let r = rows(&v["items"], &["name", "provider", "type", "qubits", "operational", "queue_length"]);
                    table(o, color, &["NAME", "PROVIDER", "TYPE", "QUBITS", "OPERATIONAL", "QUEUE"], &r, &[4])
                }),
            ),
            BackendCmd::Cost { name, tasks, shots } => (
                client.get(&format!("/api/backends/{}/cost?tasks={tasks}&shots={shots}", encode(name)))?,
                Box::new(move |o, v| {
                    writeln!(o, "{} {} ({} tasks, {} shots on {})", cell(&v["cost_cents"]), cell(&v["currency"]), cell(&v["tasks"]), cell(&v["shots"]), cell(&v["backend"]))
                }),
            ),
        },
        Command::Provider(cmd) => match cmd {
            ProviderCmd::List => (
                client.get("/api/providers")?,
                Box::new(move |o, v| {
                    let r = rows(&v["items"], &["name", "kind", "credential_registered"]);
                    table(o, color, &["NAME", "KIND", "CREDENTIAL"], &r, &[2])
                }),
            ),
            ProviderCmd::Credential { provider, credential } => (
                client.call(
                    Method::PUT,
                    &format!("/api/providers/{}/credential", encode(provider)),
                    Some(&json!({ "credential": credential })),
                )?,
                Box::new(move |o, v| writeln!(o, "stored {} credential {}", cell(&v["provider"]), cell(&v["credential"]))),
            ),
        },
        Command::User(cmd) => match cmd {
            UserCmd::List => (
                client.get("/api/users?limit=1000")?,
                Box::new(move |o, v| {
                    let r = rows(&v["items"], &["id", "username", "role", "created_at"]);
                    table(o, color, &["ID", "USERNAME", "ROLE", "CREATED"], &r, &[])
                }),
            ),
            UserCmd::Create { username, role } => (
                client.call(Method::POST, "/api/users", Some(&json!({"username": username, "role": role})))?,
                Box::new(move |o, v| {
                    writeln!(o, "created {} ({})", cell(&v["user"]["username"]), cell(&v["user"]["id"]))?;
                    writeln!(o, "token {}", cell(&v["token"]))
                }),
            ),
            UserCmd::Delete { id } => {
                client.call(Method::DELETE, &format!("/api/users/{}", encode(id)), None)?;
                let id = id.clone();
                (Value::Null, Box::new(move |o, _| writeln!(o, "deleted user {id}")))
            }
            UserCmd::Me => (
                client.get("/api/users/me")?,
                Box::new(move |o, v| fields(o, color, v, &["id", "username", "role", "created_at"])),
            ),
        },
        Command::System(SystemCmd::Status) => (
            client.get("/api/system/status")?,
            Box::new(move |o, v| {
                writeln!(o, "uptime       {:.0}s", v["uptime_seconds"].as_f64().unwrap_or(0.0))?;
                writeln!(o, "users        {}", cell(&v["users"]))?;
                let j = &v["jobs"];
                writeln!(
                    o,
                    "jobs         {} total, {} queued, {} running, {} done, {} error",
                    cell(&j["total"]), cell(&j["queued"]), cell(&j["running"]), cell(&j["done"]), cell(&j["error"])
                )?;
                writeln!(
                    o,
                    "invocations  {} total, {} failed",
                    cell(&v["invocations"]["total"]),
                    cell(&v["invocations"]["failed"])
                )?;
                writeln!(o)?;
                let r = rows(
                    &v["functions"],
                    &["name", "version", "status", "replicas_desired", "replicas_warm", "invocations", "failures"],
                );
                table(o, color, &["FUNCTION", "VERSION", "STATUS", "DESIRED", "WARM", "INVOKED", "FAILED"], &r, &[2])?;
                writeln!(o)?;
                let r = rows(&v["backends"], &["name", "provider", "operational", "queue_length"]);
                table(o, color, &["BACKEND", "PROVIDER", "OPERATIONAL", "QUEUE"], &r, &[2])
            }),
        ),
    };
    if json_out {
        print_json(out, &value)
    } else {
        render(out, &value).map_err(io_fail)
    }
}

fn render_function(color: bool) -> impl Fn(&mut dyn Write, &Value) -> std::io::Result<()> {
    move |o, v| {
        fields(
            o,
            color,
            v,
            &[
                "name", "status", "version", "commit", "replicas", "dialect_tag", "kind", "pre_processor",
                "post_processor", "image_digest", "endpoint", "author", "updated_at",
            ],
        )?;
        if let Some(e) = v.get("last_error").filter(|e| !e.is_null()) {
            writeln!(o, "last_error     {e}")?;
        }
        Ok(())
    }
}
