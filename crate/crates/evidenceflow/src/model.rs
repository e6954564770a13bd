//! Shared domain types: the job-file format, the queue directory layout,
//! server configuration and case registry records.
//!
//! The on-disk job file is the wire format between every component, so both
//! rendering and parsing are bit-exact: fixed key order, `\n` line endings,
//! `version=1` first.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::time::Duration;

use chrono::{DateTime, NaiveDateTime, TimeZone, Utc};
use thiserror::Error;

use crate::kv;

pub const JOB_FILE_VERSION: &str = "1";
pub const LOCK_FILE_NAME: &str = ".evidence.lock";
pub const SEQ_FILE_NAME: &str = ".seq";

const TIMESTAMP_FMT: &str = "%Y%m%dT%H%M%SZ";

/// Compact UTC timestamp used in job files and filenames: `YYYYMMDDThhmmssZ`.
pub fn format_utc(t: DateTime<Utc>) -> String {
    t.format(TIMESTAMP_FMT).to_string()
}

pub fn parse_utc(s: &str) -> Option<DateTime<Utc>> {
    NaiveDateTime::parse_from_str(s, TIMESTAMP_FMT)
        .ok()
        .map(|n| Utc.from_utc_datetime(&n))
}

/// Current time truncated to whole seconds (job timestamps carry second
/// precision only).
pub fn now_utc_seconds() -> DateTime<Utc> {
    let now = Utc::now();
    Utc.timestamp_opt(now.timestamp(), 0).unwrap()
}

/// One unit of work: a tool to run against a source image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JobSpec {
    pub job_id: String,
    pub tool: String,
    pub source: PathBuf,
    pub source_root: PathBuf,
    pub output: PathBuf,
    pub case_id: String,
    pub evidence_name: String,
    pub requested_by: String,
    pub created_utc: DateTime<Utc>,
    pub seq: u64,
    /// Ordered key/value pairs passed through to the runner.
    pub params: Vec<(String, String)>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum JobSpecError {
    #[error("job_id must be a non-empty filename-safe token, got {0:?}")]
    BadJobId(String),
    #[error("tool must be a non-empty token, got {0:?}")]
    BadTool(String),
    #[error("{0} must be non-empty")]
    EmptyField(&'static str),
    #[error("{0} must not contain newlines")]
    NewlineInField(String),
    #[error("param key {0:?} is invalid (empty, or contains '=' or newline)")]
    BadParamKey(String),
}

fn token_ok(s: &str) -> bool {
    !s.is_empty()
        && s.chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
}

impl JobSpec {
    pub fn validate(&self) -> Result<(), JobSpecError> {
        if !token_ok(&self.job_id) {
            return Err(JobSpecError::BadJobId(self.job_id.clone()));
        }
        if !token_ok(&self.tool) {
            return Err(JobSpecError::BadTool(self.tool.clone()));
        }
        if self.source.as_os_str().is_empty() {
            return Err(JobSpecError::EmptyField("source"));
        }
        if self.output.as_os_str().is_empty() {
            return Err(JobSpecError::EmptyField("output"));
        }
        for (name, val) in self.text_fields() {
            if val.contains('\n') || val.contains('\r') {
                return Err(JobSpecError::NewlineInField(name.to_string()));
            }
        }
        for (k, v) in &self.params {
            if k.is_empty() || k.contains('=') || k.contains('\n') || k.contains('\r') {
                return Err(JobSpecError::BadParamKey(k.clone()));
            }
            if v.contains('\n') || v.contains('\r') {
                return Err(JobSpecError::NewlineInField(format!("param.{k}")));
            }
        }
        Ok(())
    }

    fn text_fields(&self) -> Vec<(&'static str, String)> {
        vec![
            ("source", self.source.display().to_string()),
            ("source_root", self.source_root.display().to_string()),
            ("output", self.output.display().to_string()),
            ("case_id", self.case_id.clone()),
            ("evidence_name", self.evidence_name.clone()),
            ("requested_by", self.requested_by.clone()),
        ]
    }

    /// Template lookup used by runners: `{source}`, `{output}`, `{case_id}`,
    /// `{evidence_name}`, `{job_id}`, `{source_root}` and `{param.<k>}`.
    pub fn placeholder_value(&self, name: &str) -> Option<String> {
        match name {
            "job_id" => Some(self.job_id.clone()),
            "tool" => Some(self.tool.clone()),
            "source" => Some(self.source.display().to_string()),
            "source_root" => Some(self.source_root.display().to_string()),
            "output" => Some(self.output.display().to_string()),
            "case_id" => Some(self.case_id.clone()),
            "evidence_name" => Some(self.evidence_name.clone()),
            "requested_by" => Some(self.requested_by.clone()),
            _ => name.strip_prefix("param.").and_then(|k| {
                self.params
                    .iter()
                    .find(|(pk, _)| pk == k)
                    .map(|(_, v)| v.clone())
            }),
        }
    }
}

/// Deterministic serialization: fixed key order, `param.<k>` lines last.
pub fn render_job_file(job: &JobSpec) -> String {
    let created = format_utc(job.created_utc);
    let seq = job.seq.to_string();
    let source = job.source.display().to_string();
    let source_root = job.source_root.display().to_string();
    let output = job.output.display().to_string();
    let mut pairs: Vec<(&str, &str)> = vec![
        ("version", JOB_FILE_VERSION),
        ("job_id", &job.job_id),
        ("tool", &job.tool),
        ("source", &source),
        ("source_root", &source_root),
        ("output", &output),
        ("case_id", &job.case_id),
        ("evidence_name", &job.evidence_name),
        ("requested_by", &job.requested_by),
        ("created_utc", &created),
        ("seq", &seq),
    ];
    let param_keys: Vec<String> = job.params.iter().map(|(k, _)| format!("param.{k}")).collect();
    for (i, (_, v)) in job.params.iter().enumerate() {
        pairs.push((&param_keys[i], v));
    }
    kv::render(pairs)
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum JobParseError {
    #[error("unsupported job file version {0:?}")]
    BadVersion(String),
    #[error("missing mandatory key {0:?}")]
    MissingKey(&'static str),
    #[error("malformed line {0}")]
    MalformedLine(usize),
    #[error("invalid job spec: {0}")]
    Invalid(#[from] JobSpecError),
}

pub fn parse_job_file(text: &str) -> Result<JobSpec, JobParseError> {
    let lines = kv::parse(text, false).map_err(|e| match e {
        kv::KvError::MalformedLine(n) | kv::KvError::EmptyKey(n) => {
            JobParseError::MalformedLine(n)
        }
    })?;

    // Version gate comes first so a future format is rejected before any
    // missing-key noise.
    match lines.first() {
        Some((_, k, v)) if k == "version" => {
            if v != JOB_FILE_VERSION {
                return Err(JobParseError::BadVersion(v.clone()));
            }
        }
        Some((_, _, _)) | None => {
            return Err(JobParseError::MissingKey("version"));
        }
    }

    let mut fields: BTreeMap<&str, (usize, String)> = BTreeMap::new();
    let mut params: Vec<(String, String)> = Vec::new();
    for (line_no, key, value) in lines.iter().skip(1) {
        if let Some(pk) = key.strip_prefix("param.") {
            params.push((pk.to_string(), value.clone()));
            continue;
        }
        const MANDATORY: [&str; 10] = [
            "job_id",
            "tool",
            "source",
            "source_root",
            "output",
            "case_id",
            "evidence_name",
            "requested_by",
            "created_utc",
            "seq",
        ];
        match MANDATORY.iter().find(|&&m| m == key) {
            Some(&k) => {
                if fields.insert(k, (*line_no, value.clone())).is_some() {
                    return Err(JobParseError::MalformedLine(*line_no));
                }
            }
            None => return Err(JobParseError::MalformedLine(*line_no)),
        }
    }

    let take = |name: &'static str,
                fields: &BTreeMap<&str, (usize, String)>|
     -> Result<(usize, String), JobParseError> {
        fields
            .get(name)
            .cloned()
            .ok_or(JobParseError::MissingKey(name))
    };

    let (created_line, created_raw) = take("created_utc", &fields)?;
    let created_utc =
        parse_utc(&created_raw).ok_or(JobParseError::MalformedLine(created_line))?;
    let (seq_line, seq_raw) = take("seq", &fields)?;
    let seq: u64 = seq_raw
        .parse()
        .map_err(|_| JobParseError::MalformedLine(seq_line))?;

    let job = JobSpec {
        job_id: take("job_id", &fields)?.1,
        tool: take("tool", &fields)?.1,
        source: PathBuf::from(take("source", &fields)?.1),
        source_root: PathBuf::from(take("source_root", &fields)?.1),
        output: PathBuf::from(take("output", &fields)?.1),
        case_id: take("case_id", &fields)?.1,
        evidence_name: take("evidence_name", &fields)?.1,
        requested_by: take("requested_by", &fields)?.1,
        created_utc,
        seq,
        params,
    };
    job.validate()?;
    Ok(job)
}

/// Filename encodes FIFO order: lexicographic filename order equals
/// `(created_utc, seq)` order.
pub fn job_filename(job: &JobSpec) -> String {
    format!(
        "{}_{:08}_{}.job",
        format_utc(job.created_utc),
        job.seq,
        job.job_id
    )
}

/// The five-folder state machine rooted at a queue directory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QueueLayout {
    pub root: PathBuf,
}

pub const QUEUE_SUBDIRS: [&str; 5] = ["queue", "processing", "succeeded", "failed", "locked"];

/// Terminal and transient folders a job file can live in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QueueFolder {
    Queue,
    Processing,
    Succeeded,
    Failed,
    Locked,
}

impl QueueFolder {
    pub fn dir_name(self) -> &'static str {
        match self {
            QueueFolder::Queue => "queue",
            QueueFolder::Processing => "processing",
            QueueFolder::Succeeded => "succeeded",
            QueueFolder::Failed => "failed",
            QueueFolder::Locked => "locked",
        }
    }
}

impl QueueLayout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        QueueLayout { root: root.into() }
    }

    pub fn dir(&self, folder: QueueFolder) -> PathBuf {
        self.root.join(folder.dir_name())
    }

    pub fn queue_dir(&self) -> PathBuf {
        self.dir(QueueFolder::Queue)
    }

    pub fn processing_dir(&self) -> PathBuf {
        self.dir(QueueFolder::Processing)
    }

    pub fn is_initialized(&self) -> bool {
        QUEUE_SUBDIRS.iter().all(|d| self.root.join(d).is_dir())
    }
}

#[derive(Debug, Error)]
pub enum LayoutError {
    #[error("cannot initialize queue layout at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

/// Create the five subdirectories. Idempotent; tolerates concurrent callers.
pub fn init_queue_layout(root: &Path) -> Result<QueueLayout, LayoutError> {
    for sub in QUEUE_SUBDIRS {
        let dir = root.join(sub);
        fs::create_dir_all(&dir).map_err(|source| LayoutError::Io {
            path: dir.clone(),
            source,
        })?;
    }
    Ok(QueueLayout::new(root))
}

/// Lock policy of a queue server. Some sites run several tools on one
/// source concurrently, so the policy is configurable; exclusive is the
/// default.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LockPolicy {
    Exclusive,
    Shared,
}

impl fmt::Display for LockPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LockPolicy::Exclusive => write!(f, "exclusive"),
            LockPolicy::Shared => write!(f, "shared"),
        }
    }
}

pub const DEFAULT_POLL_INTERVAL: Duration = Duration::from_secs(5);

/// Queue server configuration, loaded from a `key=value` file.
#[derive(Debug, Clone)]
pub struct ServerConfig {
    pub server_id: String,
    pub queue_root: PathBuf,
    pub poll_interval: Duration,
    pub runner: String,
    /// Keys under `runner.` in the config file, order preserved.
    pub runner_settings: Vec<(String, String)>,
    pub lock_policy: LockPolicy,
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("config line {0}: {1}")]
    Line(usize, String),
    #[error("config missing mandatory key {0:?}")]
    Missing(&'static str),
}

impl ServerConfig {
    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_str(&text)
    }

    pub fn from_str(text: &str) -> Result<Self, ConfigError> {
        let lines = kv::parse(text, true).map_err(|e| match e {
            kv::KvError::MalformedLine(n) => ConfigError::Line(n, "not a key=value pair".into()),
            kv::KvError::EmptyKey(n) => ConfigError::Line(n, "empty key".into()),
        })?;
        let mut server_id = None;
        let mut queue_root = None;
        let mut poll_interval = DEFAULT_POLL_INTERVAL;
        let mut runner = None;
        let mut runner_settings = Vec::new();
        let mut lock_policy = LockPolicy::Exclusive;
        for (line_no, key, value) in lines {
            match key.as_str() {
                "server_id" => server_id = Some(value),
                "queue_root" => queue_root = Some(PathBuf::from(value)),
                "poll_interval" => {
                    let secs: f64 = value.parse().map_err(|_| {
                        ConfigError::Line(line_no, format!("bad poll_interval {value:?}"))
                    })?;
                    if secs <= 0.0 {
                        return Err(ConfigError::Line(
                            line_no,
                            "poll_interval must be > 0".into(),
                        ));
                    }
                    poll_interval = Duration::from_secs_f64(secs);
                }
                "runner" => runner = Some(value),
                "lock_policy" => {
                    lock_policy = match value.as_str() {
                        "exclusive" => LockPolicy::Exclusive,
                        "shared" => LockPolicy::Shared,
                        other => {
                            return Err(ConfigError::Line(
                                line_no,
                                format!("lock_policy must be exclusive or shared, got {other:?}"),
                            ))
                        }
                    }
                }
                _ => {
                    if let Some(setting) = key.strip_prefix("runner.") {
                        runner_settings.push((setting.to_string(), value));
                    } else {
                        return Err(ConfigError::Line(line_no, format!("unknown key {key:?}")));
                    }
                }
            }
        }
        Ok(ServerConfig {
            server_id: server_id.ok_or(ConfigError::Missing("server_id"))?,
            queue_root: queue_root.ok_or(ConfigError::Missing("queue_root"))?,
            poll_interval,
            runner: runner.ok_or(ConfigError::Missing("runner"))?,
            runner_settings,
            lock_policy,
        })
    }
}

/// A held source lock: the `.evidence.lock` file written at the evidence
/// source location. At most one exists per source root.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceLock {
    pub path: PathBuf,
    pub holder: String,
    pub job_id: String,
    pub acquired_utc: DateTime<Utc>,
}

/// Case registry row driving archive eligibility.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CaseRecord {
    pub case_id: String,
    pub status: CaseStatus,
    pub status_date_utc: DateTime<Utc>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CaseStatus {
    Open,
    Closed,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_job() -> JobSpec {
        JobSpec {
            job_id: "ab12".into(),
            tool: "bulk_extractor".into(),
            source: "/srv/evidence/c1/hdd1/image/hdd1.raw".into(),
            source_root: "/srv/evidence/c1/hdd1".into(),
            output: "/srv/evidence/c1/hdd1/prep/bulk_extractor".into(),
            case_id: "c1".into(),
            evidence_name: "hdd1".into(),
            requested_by: "inv-7".into(),
            created_utc: Utc.with_ymd_and_hms(2014, 7, 2, 0, 40, 0).unwrap(),
            seq: 3,
            params: vec![],
        }
    }

    #[test]
    fn render_zero_params_is_eleven_lines() {
        let text = render_job_file(&sample_job());
        assert_eq!(text.lines().count(), 11);
        assert!(text.starts_with("version=1\n"));
        assert!(text.ends_with('\n'));
    }

    #[test]
    fn render_is_deterministic() {
        let j = sample_job();
        assert_eq!(render_job_file(&j), render_job_file(&j));
    }

    #[test]
    fn roundtrip_with_params() {
        let mut j = sample_job();
        j.params = vec![
            ("depth".into(), "3".into()),
            ("mode".into(), "fast=yes".into()),
        ];
        let parsed = parse_job_file(&render_job_file(&j)).unwrap();
        assert_eq!(parsed, j);
    }

    #[test]
    fn missing_source_is_missing_key() {
        let text = render_job_file(&sample_job());
        let without: String = text
            .lines()
            .filter(|l| !l.starts_with("source="))
            .map(|l| format!("{l}\n"))
            .collect();
        assert_eq!(
            parse_job_file(&without),
            Err(JobParseError::MissingKey("source"))
        );
    }

    #[test]
    fn version_two_rejected() {
        let text = render_job_file(&sample_job()).replace("version=1", "version=2");
        assert_eq!(
            parse_job_file(&text),
            Err(JobParseError::BadVersion("2".into()))
        );
    }

    #[test]
    fn filename_matches_format() {
        assert_eq!(
            job_filename(&sample_job()),
            "20140702T004000Z_00000003_ab12.job"
        );
    }

    #[test]
    fn filename_zero_padding_sorts_numerically() {
        let mut names: Vec<String> = [1u64, 2, 10]
            .iter()
            .map(|&seq| {
                let mut j = sample_job();
                j.seq = seq;
                job_filename(&j)
            })
            .collect();
        let want = names.clone();
        names.sort();
        assert_eq!(names, want);
    }

    #[test]
    fn init_layout_idempotent() {
        let dir = tempfile::tempdir().unwrap();
        let layout = init_queue_layout(dir.path()).unwrap();
        assert!(layout.is_initialized());
        let again = init_queue_layout(dir.path()).unwrap();
        assert_eq!(layout, again);
    }

    #[cfg(unix)]
    #[test]
    fn init_layout_readonly_root_errors() {
        use std::os::unix::fs::PermissionsExt;
        // Permission bits do not constrain root.
        if unsafe { libc::geteuid() } == 0 {
            return;
        }
        let dir = tempfile::tempdir().unwrap();
        let ro = dir.path().join("ro");
        fs::create_dir(&ro).unwrap();
        fs::set_permissions(&ro, fs::Permissions::from_mode(0o555)).unwrap();
        let err = init_queue_layout(&ro).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("ro"), "error should name the path: {msg}");
        fs::set_permissions(&ro, fs::Permissions::from_mode(0o755)).unwrap();
    }

    #[test]
    fn server_config_parses_runner_settings() {
        let cfg = ServerConfig::from_str(
            "server_id = srv1\nqueue_root = /q\nrunner = mock\n\
             poll_interval = 1\nlock_policy = shared\nrunner.behavior = succeed\n",
        )
        .unwrap();
        assert_eq!(cfg.server_id, "srv1");
        assert_eq!(cfg.lock_policy, LockPolicy::Shared);
        assert_eq!(
            cfg.runner_settings,
            vec![("behavior".to_string(), "succeed".to_string())]
        );
    }

    #[test]
    fn server_config_rejects_zero_poll() {
        assert!(ServerConfig::from_str(
            "server_id=s\nqueue_root=/q\nrunner=mock\npoll_interval=0\n"
        )
        .is_err());
    }
}
