//! Command-line surface: one binary, one subcommand per component.
//!
//! Exit codes are uniform: 0 success, 1 usage or configuration error,
//! 2 domain failure (verification mismatch, archive error, job failure).

use std::io::{self, BufRead, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};

use clap::{Args, Parser, Subcommand};

use crate::acquire::{
    self, AcquisitionConfig, AcquisitionRequest, DeviceProvider, FakeDeviceProvider,
    ImagerAdapter, MockImager,
};
use crate::archive::{archive_run, ArchivePolicy, FolderAction};
use crate::model::{
    init_queue_layout, now_utc_seconds, parse_utc, QueueLayout, ServerConfig, QUEUE_SUBDIRS,
};
use crate::queue::{self, enqueue, JobDraft};
use crate::runner::RunnerRegistry;
use crate::sim::{compare, metrics, render_table, simulate, Scenario};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DOMAIN: i32 = 2;

#[derive(Parser)]
#[command(
    name = "evidenceflow",
    about = "Forensic acquisition, queue serving, archiving, and throughput simulation",
    version
)]
struct Cli {
    /// Configuration file; EVIDENCEFLOW_CONFIG is the fallback.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Guide one acquisition from device selection to enqueued preparations.
    Acquire(AcquireArgs),
    /// Run a queue server against the configured queue root.
    Serve(ServeArgs),
    /// Write one job file into a queue.
    Submit(SubmitArgs),
    /// Show per-folder job counts and the oldest queued job's age.
    Status(StatusArgs),
    /// Source-lock maintenance.
    Lock(LockArgs),
    /// Move jobs from locked/ back into queue/ for a retry.
    Requeue(StatusArgs),
    /// Archive cases closed longer than the configured threshold.
    Archive(ArchiveArgs),
    /// Run the throughput simulator on a scenario file.
    Simulate(SimulateArgs),
}

#[derive(Args)]
struct AcquireArgs {
    /// Device to image; omits the connect-a-device wizard step.
    #[arg(long)]
    device_id: Option<String>,
    /// Output location name from the configuration.
    #[arg(long)]
    dest: Option<String>,
    #[arg(long)]
    case: Option<String>,
    /// Evidence name (folder name under the case).
    #[arg(long)]
    name: Option<String>,
    #[arg(long)]
    investigator: Option<String>,
    /// Preparation tools, comma separated; may repeat.
    #[arg(long, value_delimiter = ',')]
    prep: Vec<String>,
    /// Skip the final confirmation prompt.
    #[arg(long)]
    yes: bool,
}

#[derive(Args)]
struct ServeArgs {
    /// Drain the queue, then exit instead of polling forever.
    #[arg(long)]
    once: bool,
}

#[derive(Args)]
struct SubmitArgs {
    #[arg(long)]
    queue_root: PathBuf,
    #[arg(long)]
    tool: String,
    #[arg(long)]
    source: PathBuf,
    /// Lock location; defaults to the source's parent directory.
    #[arg(long)]
    source_root: Option<PathBuf>,
    #[arg(long)]
    output: PathBuf,
    #[arg(long)]
    case: String,
    #[arg(long)]
    name: String,
    #[arg(long, default_value = "cli")]
    requested_by: String,
    /// Extra runner parameters as key=value; may repeat.
    #[arg(long)]
    param: Vec<String>,
}

#[derive(Args)]
struct StatusArgs {
    #[arg(long)]
    queue_root: PathBuf,
}

#[derive(Args)]
struct LockArgs {
    #[command(subcommand)]
    command: LockCommand,
}

#[derive(Subcommand)]
enum LockCommand {
    /// Remove a stale source lock. Never done automatically.
    Break {
        #[arg(long)]
        source: PathBuf,
        /// Skip the confirmation prompt.
        #[arg(long)]
        yes: bool,
    },
}

#[derive(Args)]
struct ArchiveArgs {
    /// Print the report without cleaning or moving anything.
    #[arg(long)]
    dry_run: bool,
    /// Evaluate eligibility at this instant (YYYYMMDDThhmmssZ) instead of
    /// the wall clock.
    #[arg(long)]
    now: Option<String>,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    scenario: PathBuf,
    /// Second scenario; prints the savings of it over the first.
    #[arg(long)]
    compare: Option<PathBuf>,
    /// Print the per-device start/stop table.
    #[arg(long)]
    render_table: bool,
}

static STOP: AtomicBool = AtomicBool::new(false);

extern "C" fn request_stop(_sig: libc::c_int) {
    STOP.store(true, Ordering::SeqCst);
}

fn install_signal_handlers() {
    unsafe {
        libc::signal(libc::SIGINT, request_stop as *const () as libc::sighandler_t);
        libc::signal(libc::SIGTERM, request_stop as *const () as libc::sighandler_t);
    }
}

pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match cli.command {
        Command::Acquire(args) => cmd_acquire(cli.config.as_deref(), args),
        Command::Serve(args) => cmd_serve(cli.config.as_deref(), args),
        Command::Submit(args) => cmd_submit(args),
        Command::Status(args) => cmd_status(args),
        Command::Lock(args) => cmd_lock(args),
        Command::Requeue(args) => cmd_requeue(args),
        Command::Archive(args) => cmd_archive(cli.config.as_deref(), args),
        Command::Simulate(args) => cmd_simulate(args),
    }
}

fn config_path(flag: Option<&Path>) -> Result<PathBuf, String> {
    if let Some(p) = flag {
        return Ok(p.to_path_buf());
    }
    std::env::var_os("EVIDENCEFLOW_CONFIG")
        .map(PathBuf::from)
        .ok_or_else(|| "no configuration: pass --config or set EVIDENCEFLOW_CONFIG".to_string())
}

fn fail_usage(message: impl std::fmt::Display) -> i32 {
    eprintln!("error: {message}");
    EXIT_USAGE
}

fn prompt(label: &str) -> io::Result<String> {
    print!("{label}: ");
    io::stdout().flush()?;
    let mut line = String::new();
    io::stdin().lock().read_line(&mut line)?;
    Ok(line.trim().to_string())
}

fn require(value: Option<String>, label: &str) -> Result<String, String> {
    match value {
        Some(v) if !v.is_empty() => Ok(v),
        _ => {
            let answered = prompt(label).map_err(|e| e.to_string())?;
            if answered.is_empty() {
                Err(format!("{label} is required"))
            } else {
                Ok(answered)
            }
        }
    }
}

fn cmd_acquire(config_flag: Option<&Path>, args: AcquireArgs) -> i32 {
    let path = match config_path(config_flag) {
        Ok(p) => p,
        Err(e) => return fail_usage(e),
    };
    let config = match AcquisitionConfig::from_file(&path) {
        Ok(c) => c,
        Err(e) => return fail_usage(e),
    };

    let provider: Box<dyn DeviceProvider> = match config.device_provider.as_str() {
        "fake" => {
            let Some(list) = config.device_list.clone() else {
                return fail_usage("device_provider=fake needs device_list in the configuration");
            };
            Box::new(FakeDeviceProvider::new(list))
        }
        other => return fail_usage(format!("unknown device_provider {other:?}")),
    };
    let imager: Box<dyn ImagerAdapter> = match config.imager.as_str() {
        "mock" => Box::new(MockImager::default()),
        other => return fail_usage(format!("unknown imager {other:?}")),
    };

    let device = match select_device(provider.as_ref(), args.device_id.as_deref()) {
        Ok(d) => d,
        Err(e) => return fail_usage(e),
    };

    let destination = match args.dest {
        Some(d) => d,
        None => {
            println!("output locations:");
            for loc in &config.locations {
                println!("  {}", loc.name);
            }
            match require(None, "destination") {
                Ok(d) => d,
                Err(e) => return fail_usage(e),
            }
        }
    };
    let case_id = match require(args.case, "case id") {
        Ok(v) => v,
        Err(e) => return fail_usage(e),
    };
    let evidence_name = match require(args.name, "evidence name") {
        Ok(v) => v,
        Err(e) => return fail_usage(e),
    };
    let investigator = match require(args.investigator, "investigator credential") {
        Ok(v) => v,
        Err(e) => return fail_usage(e),
    };
    let preparations = if args.prep.is_empty() && !args.yes {
        match prompt("preparations (comma separated, empty for none)") {
            Ok(line) if !line.is_empty() => {
                line.split(',').map(|s| s.trim().to_string()).collect()
            }
            Ok(_) => Vec::new(),
            Err(e) => return fail_usage(e),
        }
    } else {
        args.prep
    };

    let request = AcquisitionRequest {
        device,
        destination,
        case_id,
        evidence_name,
        investigator,
        preparations,
    };
    if let Err(e) = request.validate(&config) {
        return fail_usage(e);
    }
    if !args.yes {
        let answer = match prompt(&format!(
            "image {} into {} as {}/{}? [y/N]",
            request.device.device_id, request.destination, request.case_id, request.evidence_name
        )) {
            Ok(a) => a,
            Err(e) => return fail_usage(e),
        };
        if !answer.eq_ignore_ascii_case("y") {
            println!("aborted");
            return EXIT_OK;
        }
    }

    match acquire::run_acquisition(&request, &config, imager.as_ref()) {
        Ok(report) => {
            print!("{}", report.render(&request));
            if report.succeeded() {
                EXIT_OK
            } else {
                EXIT_DOMAIN
            }
        }
        Err(e) => fail_usage(e),
    }
}

fn select_device(
    provider: &dyn DeviceProvider,
    device_id: Option<&str>,
) -> Result<acquire::Device, String> {
    if let Some(id) = device_id {
        let snapshot = provider.snapshot().map_err(|e| e.to_string())?;
        return snapshot
            .into_iter()
            .find(|d| d.device_id == id)
            .ok_or_else(|| format!("device {id:?} not connected"));
    }
    // only devices connected after this point are offered, so a disk that
    // was already attached cannot be picked by mistake
    let before = provider.snapshot().map_err(|e| e.to_string())?;
    prompt("connect the device, then press enter").map_err(|e| e.to_string())?;
    let after = provider.snapshot().map_err(|e| e.to_string())?;
    let fresh = acquire::new_devices(&before, &after);
    match fresh.len() {
        0 => Err("no newly connected device found".to_string()),
        1 => Ok(fresh.into_iter().next().unwrap()),
        _ => {
            println!("newly connected devices:");
            for d in &fresh {
                println!("  {}  {} ({} bytes)", d.device_id, d.description, d.size_bytes);
            }
            let chosen = prompt("device id").map_err(|e| e.to_string())?;
            fresh
                .into_iter()
                .find(|d| d.device_id == chosen)
                .ok_or_else(|| format!("device {chosen:?} is not in the list"))
        }
    }
}

fn cmd_serve(config_flag: Option<&Path>, args: ServeArgs) -> i32 {
    let path = match config_path(config_flag) {
        Ok(p) => p,
        Err(e) => return fail_usage(e),
    };
    let config = match ServerConfig::from_file(&path) {
        Ok(c) => c,
        Err(e) => return fail_usage(e),
    };
    install_signal_handlers();
    let registry = RunnerRegistry::builtin();
    match queue::serve(&config, &registry, &STOP, args.once) {
        Ok(stats) => {
            println!("processed={} recovered={}", stats.processed, stats.recovered);
            EXIT_OK
        }
        Err(e) => fail_usage(e),
    }
}

fn cmd_submit(args: SubmitArgs) -> i32 {
    let layout = QueueLayout::new(&args.queue_root);
    if !layout.is_initialized() {
        return fail_usage(format!(
            "{} is not an initialized queue root",
            args.queue_root.display()
        ));
    }
    let mut params = Vec::new();
    for raw in &args.param {
        let Some((k, v)) = raw.split_once('=') else {
            return fail_usage(format!("--param {raw:?} is not key=value"));
        };
        params.push((k.to_string(), v.to_string()));
    }
    let source_root = args
        .source_root
        .clone()
        .or_else(|| args.source.parent().map(Path::to_path_buf))
        .unwrap_or_else(|| args.source.clone());
    let draft = JobDraft {
        tool: args.tool,
        source: args.source,
        source_root,
        output: args.output,
        case_id: args.case,
        evidence_name: args.name,
        requested_by: args.requested_by,
        params,
    };
    match enqueue(&layout, draft) {
        Ok(job) => {
            println!("job_id={} seq={}", job.job_id, job.seq);
            EXIT_OK
        }
        Err(e) => fail_usage(e),
    }
}

fn cmd_status(args: StatusArgs) -> i32 {
    let layout = QueueLayout::new(&args.queue_root);
    if !layout.is_initialized() {
        return fail_usage(format!(
            "{} is not an initialized queue root",
            args.queue_root.display()
        ));
    }
    let mut oldest: Option<(String, chrono::DateTime<chrono::Utc>)> = None;
    for sub in QUEUE_SUBDIRS {
        let dir = layout.root.join(sub);
        let mut names: Vec<String> = match std::fs::read_dir(&dir) {
            Ok(entries) => entries
                .filter_map(|e| e.ok())
                .map(|e| e.file_name().to_string_lossy().into_owned())
                .filter(|n| n.ends_with(".job"))
                .collect(),
            Err(e) => return fail_usage(format!("cannot read {}: {e}", dir.display())),
        };
        names.sort();
        println!("{sub}: {}", names.len());
        if sub == "queue" {
            if let Some(first) = names.first() {
                if let Some(ts) = first.split('_').next().and_then(parse_utc) {
                    oldest = Some((first.clone(), ts));
                }
            }
        }
    }
    if let Some((name, ts)) = oldest {
        let age = now_utc_seconds() - ts;
        println!("oldest queued: {name} (age {} s)", age.num_seconds().max(0));
    }
    EXIT_OK
}

fn cmd_lock(args: LockArgs) -> i32 {
    match args.command {
        LockCommand::Break { source, yes } => {
            if !yes {
                let answer = match prompt(&format!(
                    "break the lock at {}? this must only be done for a dead holder [y/N]",
                    source.display()
                )) {
                    Ok(a) => a,
                    Err(e) => return fail_usage(e),
                };
                if !answer.eq_ignore_ascii_case("y") {
                    println!("aborted");
                    return EXIT_OK;
                }
            }
            match queue::break_lock(&source) {
                Ok(Some((holder, job_id))) => {
                    println!("broke lock held by {holder} for job {job_id}");
                    EXIT_OK
                }
                Ok(None) => {
                    println!("no lock at {}", source.display());
                    EXIT_OK
                }
                Err(e) => fail_usage(e),
            }
        }
    }
}

fn cmd_requeue(args: StatusArgs) -> i32 {
    match init_queue_layout(&args.queue_root) {
        Ok(layout) => match queue::requeue_locked(&layout) {
            Ok(count) => {
                println!("requeued {count} jobs from locked/");
                EXIT_OK
            }
            Err(e) => fail_usage(e),
        },
        Err(e) => fail_usage(e),
    }
}

fn cmd_archive(config_flag: Option<&Path>, args: ArchiveArgs) -> i32 {
    let path = match config_path(config_flag) {
        Ok(p) => p,
        Err(e) => return fail_usage(e),
    };
    let policy = match ArchivePolicy::from_file(&path) {
        Ok(p) => p,
        Err(e) => return fail_usage(e),
    };
    let now = match &args.now {
        Some(raw) => match parse_utc(raw) {
            Some(t) => t,
            None => return fail_usage(format!("--now {raw:?} is not YYYYMMDDThhmmssZ")),
        },
        None => now_utc_seconds(),
    };
    match archive_run(&policy, now, args.dry_run) {
        Ok(report) => {
            print!("{}", report.render());
            if report.folders.iter().any(|f| f.action == FolderAction::Error) {
                EXIT_DOMAIN
            } else {
                EXIT_OK
            }
        }
        Err(e) => fail_usage(e),
    }
}

fn cmd_simulate(args: SimulateArgs) -> i32 {
    let scenario = match Scenario::from_file(&args.scenario) {
        Ok(s) => s,
        Err(e) => return fail_usage(e),
    };
    let timeline = simulate(&scenario);
    let m = metrics(&timeline, &scenario.calendar);
    if args.render_table {
        print!("{}", render_table(&scenario, &timeline));
    }
    println!("metrics:");
    println!("makespan_hours={:.1}", m.makespan_hours);
    if let Some(raw) = m.first_result_raw_hours {
        println!("first_result_raw_hours={:.1}", raw);
    }
    if let Some(available) = m.first_result_available {
        println!("first_result_available={available}");
    }
    if let Some(other_path) = &args.compare {
        let other = match Scenario::from_file(other_path) {
            Ok(s) => s,
            Err(e) => return fail_usage(e),
        };
        let other_metrics = metrics(&simulate(&other), &other.calendar);
        let savings = compare(&m, &other_metrics);
        println!("savings:");
        println!("first_result_saving_pct={:.1}", savings.first_result_tenths());
        println!("makespan_saving_pct={:.1}", savings.makespan_tenths());
        println!("first_result_saving_rounded={}", savings.first_result_rounded());
        println!("makespan_saving_rounded={}", savings.makespan_rounded());
    }
    EXIT_OK
}
