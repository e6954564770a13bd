//! The perpetual queue server: poll the queue folder, claim the oldest job by
//! atomic rename, lock the source, dispatch to a runner and finalize into
//! succeeded/, failed/ or locked/.
//!
//! Correctness under concurrent servers relies only on same-filesystem rename
//! and exclusive-create lock files; there is no shared memory and no network.

use std::fs::{self, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::time::Duration;

use chrono::{DateTime, Utc};
use thiserror::Error;
use uuid::Uuid;

use crate::kv;
use crate::model::{
    self, format_utc, init_queue_layout, job_filename, now_utc_seconds, parse_job_file,
    parse_utc, JobSpec, LockPolicy, QueueFolder, QueueLayout, ServerConfig, SourceLock,
    LOCK_FILE_NAME, SEQ_FILE_NAME,
};
use crate::runner::{CaptureTarget, Runner, RunnerRegistry, RunnerSettings, Verdict};

#[derive(Debug, Error)]
pub enum QueueError {
    #[error("queue layout at {0} is not initialized")]
    NotInitialized(PathBuf),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error(transparent)]
    Layout(#[from] model::LayoutError),
    #[error("could not obtain sequence counter at {0} (lock contention)")]
    SeqContention(PathBuf),
}

fn io_err(path: impl Into<PathBuf>) -> impl FnOnce(io::Error) -> QueueError {
    let path = path.into();
    move |source| QueueError::Io { path, source }
}

/// One transition log line: `ts level server_id job_id event`.
pub fn log_event(server_id: &str, job_id: &str, event: &str) {
    eprintln!(
        "{} INFO {} {} {}",
        format_utc(now_utc_seconds()),
        server_id,
        job_id,
        event
    );
}

// ---------------------------------------------------------------------------
// Enqueue

/// Job fields supplied by the submitter; id, timestamp and sequence number
/// are assigned at enqueue time.
#[derive(Debug, Clone)]
pub struct JobDraft {
    pub tool: String,
    pub source: PathBuf,
    pub source_root: PathBuf,
    pub output: PathBuf,
    pub case_id: String,
    pub evidence_name: String,
    pub requested_by: String,
    pub params: Vec<(String, String)>,
}

/// Monotonic per-queue sequence counter persisted in `.seq` under the queue
/// root, guarded by an exclusive-create lock file. Timestamps alone collide
/// at one-second resolution.
fn next_seq(queue_root: &Path) -> Result<u64, QueueError> {
    let seq_path = queue_root.join(SEQ_FILE_NAME);
    let lock_path = queue_root.join(".seq.lock");
    let mut attempts = 0;
    let _guard = loop {
        match OpenOptions::new().write(true).create_new(true).open(&lock_path) {
            Ok(f) => break f,
            Err(e) if e.kind() == io::ErrorKind::AlreadyExists => {
                attempts += 1;
                if attempts > 200 {
                    return Err(QueueError::SeqContention(lock_path));
                }
                std::thread::sleep(Duration::from_millis(5));
            }
            Err(e) => return Err(io_err(&lock_path)(e)),
        }
    };
    let result = (|| {
        let current: u64 = match fs::read_to_string(&seq_path) {
            Ok(text) => text.trim().parse().unwrap_or(0),
            Err(e) if e.kind() == io::ErrorKind::NotFound => 0,
            Err(e) => return Err(io_err(&seq_path)(e)),
        };
        let next = current + 1;
        let tmp = queue_root.join(".seq.tmp");
        fs::write(&tmp, format!("{next}\n")).map_err(io_err(&tmp))?;
        fs::rename(&tmp, &seq_path).map_err(io_err(&seq_path))?;
        Ok(next)
    })();
    let _ = fs::remove_file(&lock_path);
    result
}

/// Write one job file into queue/. The file becomes visible only complete:
/// written under a temporary name, then renamed in.
pub fn enqueue(layout: &QueueLayout, draft: JobDraft) -> Result<JobSpec, QueueError> {
    if !layout.is_initialized() {
        return Err(QueueError::NotInitialized(layout.root.clone()));
    }
    let seq = next_seq(&layout.root)?;
    let job = JobSpec {
        job_id: Uuid::new_v4().simple().to_string(),
        tool: draft.tool,
        source: draft.source,
        source_root: draft.source_root,
        output: draft.output,
        case_id: draft.case_id,
        evidence_name: draft.evidence_name,
        requested_by: draft.requested_by,
        created_utc: now_utc_seconds(),
        seq,
        params: draft.params,
    };
    let name = job_filename(&job);
    let tmp = layout.queue_dir().join(format!(".tmp-{name}"));
    fs::write(&tmp, model::render_job_file(&job)).map_err(io_err(&tmp))?;
    let dest = layout.queue_dir().join(&name);
    fs::rename(&tmp, &dest).map_err(io_err(&dest))?;
    Ok(job)
}

// ---------------------------------------------------------------------------
// Claiming

#[derive(Debug, Clone)]
pub struct ClaimedJob {
    pub job: JobSpec,
    /// Current path of the job file, inside processing/.
    pub file_path: PathBuf,
    pub claimed_utc: DateTime<Utc>,
}

fn list_job_files(dir: &Path) -> Result<Vec<String>, QueueError> {
    let mut names = Vec::new();
    for entry in fs::read_dir(dir).map_err(io_err(dir))? {
        let entry = entry.map_err(io_err(dir))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if name.ends_with(".job") && !name.starts_with('.') {
            names.push(name);
        }
    }
    names.sort();
    Ok(names)
}

/// Claim the lexicographically-first job file by renaming it into
/// processing/. Exactly one of any set of concurrent claimants wins a given
/// file; losers silently move on to the next. A file that fails to parse is
/// finalized as Failed here and the scan continues.
pub fn claim_next(
    layout: &QueueLayout,
    server_id: &str,
) -> Result<Option<ClaimedJob>, QueueError> {
    if !layout.is_initialized() {
        return Err(QueueError::NotInitialized(layout.root.clone()));
    }
    loop {
        let names = list_job_files(&layout.queue_dir())?;
        if names.is_empty() {
            return Ok(None);
        }
        let mut claimed_path = None;
        for name in names {
            let from = layout.queue_dir().join(&name);
            let to = layout.processing_dir().join(&name);
            // The holder sidecar is the claim ticket: exclusive-create
            // before the rename, so a job file visible in processing/
            // without one is a crash artifact, never a live claim (see
            // recover_orphans), and no two servers race the same rename.
            let holder = layout.processing_dir().join(format!("{name}.holder"));
            match OpenOptions::new().write(true).create_new(true).open(&holder) {
                Ok(mut f) => {
                    f.write_all(format!("holder={server_id}\n").as_bytes())
                        .map_err(io_err(&holder))?;
                }
                Err(e) if e.kind() == io::ErrorKind::AlreadyExists => {
                    // Another claimant holds the ticket. If its job file is
                    // neither claimed nor gone after a generous window, the
                    // claimant died mid-claim; clear the stale ticket.
                    let stale = !to.exists()
                        && from.exists()
                        && fs::metadata(&holder)
                            .and_then(|m| m.modified())
                            .ok()
                            .and_then(|t| t.elapsed().ok())
                            .is_some_and(|age| age.as_secs() >= 30);
                    if stale {
                        let _ = fs::remove_file(&holder);
                    }
                    continue;
                }
                Err(e) => return Err(io_err(&holder)(e)),
            }
            match fs::rename(&from, &to) {
                Ok(()) => {
                    claimed_path = Some(to);
                    break;
                }
                // The file left queue/ some other way (operator action);
                // drop the ticket and try the next file.
                Err(e) if e.kind() == io::ErrorKind::NotFound => {
                    let _ = fs::remove_file(&holder);
                    continue;
                }
                Err(e) => {
                    let _ = fs::remove_file(&holder);
                    return Err(io_err(&from)(e));
                }
            }
        }
        let Some(path) = claimed_path else {
            // Every candidate vanished under us; rescan.
            continue;
        };
        let text = fs::read_to_string(&path).map_err(io_err(&path))?;
        match parse_job_file(&text) {
            Ok(job) => {
                log_event(server_id, &job.job_id, "claimed");
                return Ok(Some(ClaimedJob {
                    job,
                    file_path: path,
                    claimed_utc: now_utc_seconds(),
                }));
            }
            Err(parse_err) => {
                // Routing malformed files to failed/ keeps the conservation
                // invariant and surfaces the problem.
                let now = now_utc_seconds();
                let outcome = JobOutcome {
                    kind: OutcomeKind::Failed,
                    detail: format!("unparseable job file: {parse_err}"),
                    started_utc: now,
                    finished_utc: now,
                };
                finalize_path(layout, &path, &outcome)?;
                log_event(server_id, "-", "malformed job file moved to failed");
                continue;
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Source locks

#[derive(Debug, Error)]
pub enum LockError {
    #[error("source already locked by {holder} (job {job_id})")]
    AlreadyLocked {
        holder: String,
        job_id: String,
        acquired_utc: Option<DateTime<Utc>>,
    },
    #[error("lock at {path} is held by {actual_holder}, not {expected_holder}")]
    HolderMismatch {
        path: PathBuf,
        expected_holder: String,
        actual_holder: String,
    },
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

fn read_lock_file(path: &Path) -> Option<(String, String, Option<DateTime<Utc>>)> {
    let text = fs::read_to_string(path).ok()?;
    let pairs = kv::parse(&text, false).ok()?;
    let get = |k: &str| {
        pairs
            .iter()
            .find(|(_, key, _)| key == k)
            .map(|(_, _, v)| v.clone())
    };
    Some((
        get("holder").unwrap_or_else(|| "unknown".into()),
        get("job_id").unwrap_or_else(|| "unknown".into()),
        get("acquired_utc").and_then(|v| parse_utc(&v)),
    ))
}

/// Write the predefined lock file at the source location with
/// exclusive-create semantics.
pub fn acquire_lock(
    source_root: &Path,
    server_id: &str,
    job_id: &str,
) -> Result<SourceLock, LockError> {
    let path = source_root.join(LOCK_FILE_NAME);
    let acquired_utc = now_utc_seconds();
    match OpenOptions::new().write(true).create_new(true).open(&path) {
        Ok(mut f) => {
            let body = kv::render([
                ("holder", server_id),
                ("job_id", job_id),
                ("acquired_utc", format_utc(acquired_utc).as_str()),
            ]);
            f.write_all(body.as_bytes()).map_err(|source| LockError::Io {
                path: path.clone(),
                source,
            })?;
            Ok(SourceLock {
                path,
                holder: server_id.to_string(),
                job_id: job_id.to_string(),
                acquired_utc,
            })
        }
        Err(e) if e.kind() == io::ErrorKind::AlreadyExists => {
            let (holder, job_id, acquired_utc) = read_lock_file(&path)
                .unwrap_or(("unknown".into(), "unknown".into(), None));
            Err(LockError::AlreadyLocked {
                holder,
                job_id,
                acquired_utc,
            })
        }
        Err(source) => Err(LockError::Io { path, source }),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReleaseOutcome {
    Released,
    /// The file was already gone; a warning, not an error.
    AlreadyGone,
}

/// Remove a held lock. Never deletes another server's lock file.
pub fn release_lock(lock: &SourceLock) -> Result<ReleaseOutcome, LockError> {
    match read_lock_file(&lock.path) {
        None => Ok(ReleaseOutcome::AlreadyGone),
        Some((holder, _, _)) if holder != lock.holder => Err(LockError::HolderMismatch {
            path: lock.path.clone(),
            expected_holder: lock.holder.clone(),
            actual_holder: holder,
        }),
        Some(_) => match fs::remove_file(&lock.path) {
            Ok(()) => Ok(ReleaseOutcome::Released),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(ReleaseOutcome::AlreadyGone),
            Err(source) => Err(LockError::Io {
                path: lock.path.clone(),
                source,
            }),
        },
    }
}

/// Operator-driven stale-lock removal (`lock break`). Returns the removed
/// lock's holder info, or None when the source was not locked.
pub fn break_lock(source_root: &Path) -> Result<Option<(String, String)>, LockError> {
    let path = source_root.join(LOCK_FILE_NAME);
    match read_lock_file(&path) {
        None => Ok(None),
        Some((holder, job_id, _)) => {
            fs::remove_file(&path).map_err(|source| LockError::Io {
                path: path.clone(),
                source,
            })?;
            Ok(Some((holder, job_id)))
        }
    }
}

// ---------------------------------------------------------------------------
// Execution and finalization

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutcomeKind {
    Succeeded,
    Failed,
    Locked,
}

impl OutcomeKind {
    pub fn terminal_folder(self) -> QueueFolder {
        match self {
            OutcomeKind::Succeeded => QueueFolder::Succeeded,
            OutcomeKind::Failed => QueueFolder::Failed,
            OutcomeKind::Locked => QueueFolder::Locked,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            OutcomeKind::Succeeded => "succeeded",
            OutcomeKind::Failed => "failed",
            OutcomeKind::Locked => "locked",
        }
    }
}

#[derive(Debug, Clone)]
pub struct JobOutcome {
    pub kind: OutcomeKind,
    pub detail: String,
    pub started_utc: DateTime<Utc>,
    pub finished_utc: DateTime<Utc>,
}

/// Run one claimed job. With the exclusive policy the source is locked
/// first; an existing foreign lock yields a Locked outcome without invoking
/// the tool. Any lock taken here is released on every path.
pub fn execute_claimed(
    claimed: &ClaimedJob,
    runner: &dyn Runner,
    config: &ServerConfig,
) -> JobOutcome {
    let started_utc = now_utc_seconds();
    let settings = RunnerSettings::new(config.runner_settings.clone());
    let outcome = |kind: OutcomeKind, detail: String| JobOutcome {
        kind,
        detail,
        started_utc,
        finished_utc: now_utc_seconds(),
    };

    let lock = if config.lock_policy == LockPolicy::Exclusive {
        match acquire_lock(&claimed.job.source_root, &config.server_id, &claimed.job.job_id) {
            Ok(lock) => {
                log_event(&config.server_id, &claimed.job.job_id, "source locked");
                Some(lock)
            }
            Err(LockError::AlreadyLocked { holder, job_id, .. }) => {
                return outcome(
                    OutcomeKind::Locked,
                    format!("source locked by {holder} (job {job_id})"),
                );
            }
            Err(e) => {
                return outcome(OutcomeKind::Failed, format!("cannot lock source: {e}"));
            }
        }
    } else {
        None
    };

    let capture = CaptureTarget {
        stdout_path: sidecar_path(&claimed.file_path, "stdout"),
        stderr_path: sidecar_path(&claimed.file_path, "stderr"),
    };
    let verdict = runner
        .plan(&claimed.job, &settings)
        .and_then(|plan| runner.execute(&plan, &capture))
        .map(|record| runner.check_result(&claimed.job, &record, &settings));

    if let Some(lock) = lock {
        match release_lock(&lock) {
            Ok(_) => log_event(&config.server_id, &claimed.job.job_id, "source unlocked"),
            Err(e) => log_event(
                &config.server_id,
                &claimed.job.job_id,
                &format!("lock release failed: {e}"),
            ),
        }
    }

    match verdict {
        Ok(Verdict::Succeeded) => outcome(OutcomeKind::Succeeded, "ok".into()),
        Ok(Verdict::Failed(detail)) => outcome(OutcomeKind::Failed, detail),
        Err(e) => outcome(OutcomeKind::Failed, format!("runner error: {e}")),
    }
}

fn sidecar_path(job_path: &Path, ext: &str) -> PathBuf {
    let name = job_path.file_name().unwrap_or_default().to_string_lossy();
    job_path.with_file_name(format!("{name}.{ext}"))
}

fn rename_with_retry(from: &Path, to: &Path) -> io::Result<()> {
    match fs::rename(from, to) {
        Ok(()) => Ok(()),
        Err(_) => {
            std::thread::sleep(Duration::from_millis(20));
            fs::rename(from, to)
        }
    }
}

/// Move a job file from processing/ into the folder matching the outcome and
/// write the `<jobfile>.result` sidecar; capture sidecars follow the job file.
pub fn finalize_path(
    layout: &QueueLayout,
    file_path: &Path,
    outcome: &JobOutcome,
) -> Result<PathBuf, QueueError> {
    let name = file_path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let terminal_dir = layout.dir(outcome.kind.terminal_folder());
    let dest = terminal_dir.join(&name);
    rename_with_retry(file_path, &dest).map_err(io_err(file_path))?;

    for ext in ["stdout", "stderr"] {
        let side = sidecar_path(file_path, ext);
        if side.exists() {
            let side_dest = terminal_dir.join(format!("{name}.{ext}"));
            let _ = rename_with_retry(&side, &side_dest);
        }
    }
    // the claim ticket is spent once the job leaves processing/
    let _ = fs::remove_file(sidecar_path(file_path, "holder"));

    let detail = outcome.detail.replace('\n', " ").replace('\r', " ");
    let result_body = kv::render([
        ("kind", outcome.kind.as_str()),
        ("detail", detail.as_str()),
        ("started_utc", format_utc(outcome.started_utc).as_str()),
        ("finished_utc", format_utc(outcome.finished_utc).as_str()),
    ]);
    let result_path = terminal_dir.join(format!("{name}.result"));
    fs::write(&result_path, result_body).map_err(io_err(&result_path))?;
    Ok(dest)
}

pub fn finalize(
    layout: &QueueLayout,
    claimed: &ClaimedJob,
    outcome: &JobOutcome,
) -> Result<PathBuf, QueueError> {
    finalize_path(layout, &claimed.file_path, outcome)
}

// ---------------------------------------------------------------------------
// Requeue and recovery

fn move_back_to_queue(layout: &QueueLayout, from_dir: &Path) -> Result<usize, QueueError> {
    let mut count = 0;
    for name in list_job_files(from_dir)? {
        let from = from_dir.join(&name);
        let to = layout.queue_dir().join(&name);
        match fs::rename(&from, &to) {
            Ok(()) => {
                count += 1;
                // Stale sidecars from the previous attempt are dropped; the
                // next run writes fresh ones.
                for ext in ["result", "stdout", "stderr"] {
                    let _ = fs::remove_file(from_dir.join(format!("{name}.{ext}")));
                }
            }
            Err(e) if e.kind() == io::ErrorKind::NotFound => continue,
            Err(e) => return Err(io_err(&from)(e)),
        }
    }
    Ok(count)
}

/// Move every job in locked/ back to queue/. Filenames are preserved, hence
/// original FIFO position.
pub fn requeue_locked(layout: &QueueLayout) -> Result<usize, QueueError> {
    move_back_to_queue(layout, &layout.dir(QueueFolder::Locked))
}

/// Startup crash recovery: jobs stranded in processing/ go back to queue/.
///
/// A job file is only an orphan if its claim ticket is missing (claimant
/// crashed mid-claim) or names this server (our own previous incarnation).
/// Files claimed by other server ids are left alone; those servers may be
/// alive and mid-job on the shared queue.
pub fn recover_orphans(layout: &QueueLayout, server_id: &str) -> Result<usize, QueueError> {
    let processing = layout.processing_dir();
    let mut count = 0;
    for name in list_job_files(&processing)? {
        let holder_path = processing.join(format!("{name}.holder"));
        let holder = fs::read_to_string(&holder_path)
            .ok()
            .and_then(|text| {
                kv::parse(&text, false).ok().and_then(|pairs| {
                    pairs
                        .into_iter()
                        .find(|(_, k, _)| k == "holder")
                        .map(|(_, _, v)| v)
                })
            });
        if let Some(h) = &holder {
            if h != server_id {
                continue;
            }
        }
        let from = processing.join(&name);
        let to = layout.queue_dir().join(&name);
        match fs::rename(&from, &to) {
            Ok(()) => {
                count += 1;
                for ext in ["holder", "result", "stdout", "stderr"] {
                    let _ = fs::remove_file(processing.join(format!("{name}.{ext}")));
                }
            }
            Err(e) if e.kind() == io::ErrorKind::NotFound => continue,
            Err(e) => return Err(io_err(&from)(e)),
        }
    }
    if count > 0 {
        log_event(server_id, "-", &format!("recovered {count} orphaned jobs"));
    }
    Ok(count)
}

// ---------------------------------------------------------------------------
// The serve loop

#[derive(Debug, Default, Clone, Copy)]
pub struct ServeStats {
    pub processed: usize,
    pub recovered: usize,
}

#[derive(Debug, Error)]
pub enum ServeError {
    #[error(transparent)]
    Queue(#[from] QueueError),
    #[error(transparent)]
    UnknownRunner(#[from] crate::runner::UnknownRunner),
}

/// Run the server loop: recover orphans once, then claim/execute/finalize
/// until the stop flag is raised (observed between jobs and during the idle
/// sleep). With `once`, drain the queue and return instead of sleeping.
pub fn serve(
    config: &ServerConfig,
    registry: &RunnerRegistry,
    stop: &AtomicBool,
    once: bool,
) -> Result<ServeStats, ServeError> {
    // Config problems surface before any job is consumed.
    let runner = registry.resolve(&config.runner)?;
    let layout = init_queue_layout(&config.queue_root).map_err(QueueError::from)?;

    let mut stats = ServeStats::default();
    stats.recovered = recover_orphans(&layout, &config.server_id)?;
    log_event(&config.server_id, "-", "server started");

    loop {
        if stop.load(Ordering::SeqCst) {
            break;
        }
        match claim_next(&layout, &config.server_id)? {
            Some(claimed) => {
                let outcome = execute_claimed(&claimed, runner.as_ref(), config);
                finalize(&layout, &claimed, &outcome)?;
                log_event(
                    &config.server_id,
                    &claimed.job.job_id,
                    &format!("finalized: {}", outcome.kind.as_str()),
                );
                stats.processed += 1;
            }
            None => {
                if once {
                    break;
                }
                // Sleep in short slices so a stop request is honored within
                // one poll interval.
                let mut remaining = config.poll_interval;
                let slice = Duration::from_millis(50);
                while remaining > Duration::ZERO && !stop.load(Ordering::SeqCst) {
                    let step = remaining.min(slice);
                    std::thread::sleep(step);
                    remaining = remaining.saturating_sub(step);
                }
            }
        }
    }
    log_event(&config.server_id, "-", "server stopped");
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::init_queue_layout;
    use std::collections::BTreeSet;

    fn test_config(root: &Path, extra: &[(&str, &str)]) -> ServerConfig {
        let mut settings: Vec<(String, String)> = extra
            .iter()
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect();
        settings.push(("create".into(), "report.txt".into()));
        ServerConfig {
            server_id: "srv-test".into(),
            queue_root: root.to_path_buf(),
            poll_interval: Duration::from_millis(50),
            runner: "mock".into(),
            runner_settings: settings,
            lock_policy: LockPolicy::Exclusive,
        }
    }

    fn draft(dir: &Path, n: usize) -> JobDraft {
        let source_root = dir.join(format!("src{n}"));
        fs::create_dir_all(&source_root).unwrap();
        JobDraft {
            tool: "mock".into(),
            source: source_root.join("img.raw"),
            source_root,
            output: dir.join(format!("out{n}")),
            case_id: "c1".into(),
            evidence_name: format!("e{n}"),
            requested_by: "inv".into(),
            params: vec![],
        }
    }

    #[test]
    fn claim_is_fifo_and_empty_returns_none() {
        let dir = tempfile::tempdir().unwrap();
        let layout = init_queue_layout(&dir.path().join("q")).unwrap();
        assert!(claim_next(&layout, "s").unwrap().is_none());
        let mut ids = Vec::new();
        for n in 0..3 {
            ids.push(enqueue(&layout, draft(dir.path(), n)).unwrap().job_id);
        }
        let first = claim_next(&layout, "s").unwrap().unwrap();
        assert_eq!(first.job.job_id, ids[0]);
        assert!(first.file_path.starts_with(layout.processing_dir()));
    }

    #[test]
    fn malformed_job_goes_to_failed() {
        let dir = tempfile::tempdir().unwrap();
        let layout = init_queue_layout(&dir.path().join("q")).unwrap();
        fs::write(layout.queue_dir().join("aaa_bad.job"), "not a job\n").unwrap();
        assert!(claim_next(&layout, "s").unwrap().is_none());
        assert!(layout.dir(QueueFolder::Failed).join("aaa_bad.job").exists());
        let result = fs::read_to_string(
            layout.dir(QueueFolder::Failed).join("aaa_bad.job.result"),
        )
        .unwrap();
        assert!(result.contains("kind=failed"));
        assert!(result.contains("unparseable"));
    }

    #[test]
    fn lock_acquire_release_cycle() {
        let dir = tempfile::tempdir().unwrap();
        let lock = acquire_lock(dir.path(), "A", "j1").unwrap();
        assert!(dir.path().join(LOCK_FILE_NAME).exists());
        match acquire_lock(dir.path(), "B", "j2") {
            Err(LockError::AlreadyLocked { holder, .. }) => assert_eq!(holder, "A"),
            other => panic!("expected AlreadyLocked, got {other:?}"),
        }
        assert_eq!(release_lock(&lock).unwrap(), ReleaseOutcome::Released);
        assert!(!dir.path().join(LOCK_FILE_NAME).exists());
        // release twice: warning, not error
        assert_eq!(release_lock(&lock).unwrap(), ReleaseOutcome::AlreadyGone);
        // re-acquire after release succeeds
        acquire_lock(dir.path(), "A", "j3").unwrap();
    }

    #[test]
    fn release_refuses_foreign_lock() {
        let dir = tempfile::tempdir().unwrap();
        let theirs = acquire_lock(dir.path(), "B", "j1").unwrap();
        let mine = SourceLock {
            holder: "A".into(),
            ..theirs.clone()
        };
        assert!(matches!(
            release_lock(&mine),
            Err(LockError::HolderMismatch { .. })
        ));
        assert!(dir.path().join(LOCK_FILE_NAME).exists());
    }

    #[test]
    fn locked_source_yields_locked_outcome_without_execution() {
        let dir = tempfile::tempdir().unwrap();
        let layout = init_queue_layout(&dir.path().join("q")).unwrap();
        let d = draft(dir.path(), 0);
        let source_root = d.source_root.clone();
        enqueue(&layout, d).unwrap();
        acquire_lock(&source_root, "other-server", "their-job").unwrap();

        let exec_log = dir.path().join("exec.log");
        let config = test_config(
            &dir.path().join("q"),
            &[("exec_log", exec_log.to_str().unwrap())],
        );
        let claimed = claim_next(&layout, &config.server_id).unwrap().unwrap();
        let outcome = execute_claimed(&claimed, &crate::runner::MockRunner, &config);
        assert_eq!(outcome.kind, OutcomeKind::Locked);
        assert!(outcome.detail.contains("other-server"));
        assert!(!exec_log.exists(), "tool must not run on a locked source");
        // the foreign lock is untouched
        assert!(source_root.join(LOCK_FILE_NAME).exists());
        finalize(&layout, &claimed, &outcome).unwrap();
        assert!(layout.dir(QueueFolder::Locked).join(job_filename(&claimed.job)).exists());
    }

    #[test]
    fn requeue_locked_preserves_fifo_position() {
        let dir = tempfile::tempdir().unwrap();
        let layout = init_queue_layout(&dir.path().join("q")).unwrap();
        let mut names = Vec::new();
        for n in 0..3 {
            let job = enqueue(&layout, draft(dir.path(), n)).unwrap();
            names.push(job_filename(&job));
        }
        // Move the first two to locked/ by hand.
        for name in &names[..2] {
            fs::rename(
                layout.queue_dir().join(name),
                layout.dir(QueueFolder::Locked).join(name),
            )
            .unwrap();
        }
        assert_eq!(requeue_locked(&layout).unwrap(), 2);
        assert_eq!(requeue_locked(&layout).unwrap(), 0);
        let queued = list_job_files(&layout.queue_dir()).unwrap();
        assert_eq!(queued, names, "requeued jobs keep their FIFO position");
    }

    #[test]
    fn recover_orphans_restores_queue() {
        let dir = tempfile::tempdir().unwrap();
        let layout = init_queue_layout(&dir.path().join("q")).unwrap();
        let job = enqueue(&layout, draft(dir.path(), 0)).unwrap();
        let name = job_filename(&job);
        fs::rename(
            layout.queue_dir().join(&name),
            layout.processing_dir().join(&name),
        )
        .unwrap();
        assert_eq!(recover_orphans(&layout, "s").unwrap(), 1);
        assert!(layout.queue_dir().join(&name).exists());
        assert_eq!(recover_orphans(&layout, "s").unwrap(), 0);
    }

    #[test]
    fn serve_once_drains_queue() {
        let dir = tempfile::tempdir().unwrap();
        let config = test_config(&dir.path().join("q"), &[]);
        let layout = init_queue_layout(&config.queue_root).unwrap();
        let mut ids = BTreeSet::new();
        for n in 0..3 {
            ids.insert(enqueue(&layout, draft(dir.path(), n)).unwrap().job_id);
        }
        let stop = AtomicBool::new(false);
        let stats = serve(&config, &RunnerRegistry::builtin(), &stop, true).unwrap();
        assert_eq!(stats.processed, 3);
        assert!(list_job_files(&layout.queue_dir()).unwrap().is_empty());
        assert_eq!(
            list_job_files(&layout.dir(QueueFolder::Succeeded)).unwrap().len(),
            3
        );
        // lock hygiene: no lock files remain
        for n in 0..3 {
            assert!(!dir.path().join(format!("src{n}")).join(LOCK_FILE_NAME).exists());
        }
    }

    #[test]
    fn serve_rejects_unknown_runner_before_claiming() {
        let dir = tempfile::tempdir().unwrap();
        let mut config = test_config(&dir.path().join("q"), &[]);
        let layout = init_queue_layout(&config.queue_root).unwrap();
        enqueue(&layout, draft(dir.path(), 0)).unwrap();
        config.runner = "no_such".into();
        let stop = AtomicBool::new(false);
        assert!(matches!(
            serve(&config, &RunnerRegistry::builtin(), &stop, true),
            Err(ServeError::UnknownRunner(_))
        ));
        assert_eq!(list_job_files(&layout.queue_dir()).unwrap().len(), 1);
    }

    #[test]
    fn failed_runner_yields_failed_folder() {
        let dir = tempfile::tempdir().unwrap();
        let mut config = test_config(&dir.path().join("q"), &[]);
        config.runner_settings.push(("behavior".into(), "fail".into()));
        let layout = init_queue_layout(&config.queue_root).unwrap();
        enqueue(&layout, draft(dir.path(), 0)).unwrap();
        let stop = AtomicBool::new(false);
        serve(&config, &RunnerRegistry::builtin(), &stop, true).unwrap();
        assert_eq!(
            list_job_files(&layout.dir(QueueFolder::Failed)).unwrap().len(),
            1
        );
    }
}
