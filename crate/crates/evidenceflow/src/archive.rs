//! Case archiver: snapshot the case registry, scan the source directories,
//! and move cases closed longer than the threshold into the archive after
//! cleaning. One-shot by design; an external scheduler provides the period.

use std::fs::{self, OpenOptions};
use std::io;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use regex::Regex;
use thiserror::Error;

use crate::acquire::digest_files;
use crate::kv;
use crate::model::{format_utc, now_utc_seconds, parse_utc, CaseRecord, CaseStatus};

pub const REGISTRY_HEADER: &str = "case_id\tstatus\tstatus_date_utc";
pub const RUN_LOCK_NAME: &str = ".archive.lock";

#[derive(Debug, Clone)]
pub struct ArchivePolicy {
    pub threshold_days: u64,
    pub archive_root: PathBuf,
    pub source_roots: Vec<PathBuf>,
    /// Patterns removed inside an eligible case folder before the move,
    /// relative to the case folder.
    pub clean_globs: Vec<String>,
    pub case_id_pattern: Regex,
    pub registry_path: PathBuf,
}

pub const DEFAULT_CLEAN_GLOBS: [&str; 2] = ["prep/*/tmp/**", "**/*.cache"];

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{0}")]
    Syntax(#[from] kv::KvError),
    #[error("line {line}: unknown key {key:?}")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: {message}")]
    Invalid { line: usize, message: String },
    #[error("{0} is required")]
    Missing(&'static str),
    #[error("archive_root {} must not be inside source_root {}", archive.display(), root.display())]
    ArchiveInsideSource { archive: PathBuf, root: PathBuf },
}

impl ArchivePolicy {
    pub fn from_file(path: &Path) -> Result<Self, PolicyError> {
        let text = fs::read_to_string(path).map_err(|source| PolicyError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_str(&text)
    }

    pub fn from_str(text: &str) -> Result<Self, PolicyError> {
        let mut threshold_days = 30;
        let mut archive_root = None;
        let mut source_roots = Vec::new();
        let mut clean_globs = Vec::new();
        let mut case_id_pattern = None;
        let mut registry_path = None;
        for (line, key, value) in kv::parse(text, true)? {
            match key.as_str() {
                "threshold_days" => {
                    threshold_days = value.parse().map_err(|_| PolicyError::Invalid {
                        line,
                        message: format!("threshold_days must be a non-negative integer, got {value:?}"),
                    })?;
                }
                "archive_root" => archive_root = Some(PathBuf::from(value)),
                "source_root" => source_roots.push(PathBuf::from(value)),
                "clean_glob" => clean_globs.push(value),
                "case_id_pattern" => {
                    case_id_pattern =
                        Some(Regex::new(&value).map_err(|e| PolicyError::Invalid {
                            line,
                            message: format!("bad case_id_pattern: {e}"),
                        })?)
                }
                "registry" => registry_path = Some(PathBuf::from(value)),
                _ => return Err(PolicyError::UnknownKey { line, key }),
            }
        }
        let archive_root = archive_root.ok_or(PolicyError::Missing("archive_root"))?;
        if source_roots.is_empty() {
            return Err(PolicyError::Missing("source_root"));
        }
        if clean_globs.is_empty() {
            clean_globs = DEFAULT_CLEAN_GLOBS.iter().map(|s| s.to_string()).collect();
        }
        for source in &source_roots {
            if archive_root.starts_with(source) {
                return Err(PolicyError::ArchiveInsideSource {
                    archive: archive_root,
                    root: source.clone(),
                });
            }
        }
        Ok(ArchivePolicy {
            threshold_days,
            archive_root,
            source_roots,
            clean_globs,
            case_id_pattern: case_id_pattern
                .unwrap_or_else(|| Regex::new("^[A-Za-z0-9][A-Za-z0-9_-]*$").unwrap()),
            registry_path: registry_path.ok_or(PolicyError::Missing("registry"))?,
        })
    }
}

/// Immutable copy of the registry; edits to the file after the snapshot are
/// invisible to the run that took it.
#[derive(Debug, Clone)]
pub struct RegistrySnapshot {
    pub records: std::collections::BTreeMap<String, CaseRecord>,
    pub snapshot_utc: DateTime<Utc>,
}

#[derive(Debug, Error)]
pub enum RegistryError {
    #[error("cannot read registry {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("registry header must be {REGISTRY_HEADER:?}")]
    BadHeader,
    #[error("line {0}: expected 3 tab-separated fields")]
    Malformed(usize),
    #[error("line {line}: unknown status {status:?}")]
    BadStatus { line: usize, status: String },
    #[error("line {line}: bad date {date:?}")]
    BadDate { line: usize, date: String },
    #[error("line {line}: duplicate case {case_id:?}")]
    DuplicateCase { line: usize, case_id: String },
}

pub fn snapshot_registry(registry_path: &Path) -> Result<RegistrySnapshot, RegistryError> {
    let text = fs::read_to_string(registry_path).map_err(|source| RegistryError::Read {
        path: registry_path.to_path_buf(),
        source,
    })?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header == REGISTRY_HEADER => {}
        _ => return Err(RegistryError::BadHeader),
    }
    let mut records = std::collections::BTreeMap::new();
    for (idx, raw) in lines {
        let line = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = raw.split('\t').collect();
        let [case_id, status, date] = fields[..] else {
            return Err(RegistryError::Malformed(line));
        };
        let status = match status {
            "open" => CaseStatus::Open,
            "closed" => CaseStatus::Closed,
            other => {
                return Err(RegistryError::BadStatus {
                    line,
                    status: other.to_string(),
                })
            }
        };
        let status_date_utc = parse_utc(date).ok_or_else(|| RegistryError::BadDate {
            line,
            date: date.to_string(),
        })?;
        let record = CaseRecord {
            case_id: case_id.to_string(),
            status,
            status_date_utc,
        };
        if records.insert(case_id.to_string(), record).is_some() {
            return Err(RegistryError::DuplicateCase {
                line,
                case_id: case_id.to_string(),
            });
        }
    }
    Ok(RegistrySnapshot {
        records,
        snapshot_utc: now_utc_seconds(),
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Eligibility {
    Eligible,
    NotEligible(String),
}

/// Eligible iff the case is in the snapshot, closed, and has been closed
/// strictly longer than the threshold.
pub fn eligibility(
    case_id: &str,
    snapshot: &RegistrySnapshot,
    policy: &ArchivePolicy,
    now: DateTime<Utc>,
) -> Eligibility {
    let Some(record) = snapshot.records.get(case_id) else {
        return Eligibility::NotEligible("not in registry".to_string());
    };
    if record.status != CaseStatus::Closed {
        return Eligibility::NotEligible("case is open".to_string());
    }
    let closed_secs = (now - record.status_date_utc).num_seconds();
    let threshold_secs = policy.threshold_days as i64 * 86_400;
    if closed_secs > threshold_secs {
        Eligibility::Eligible
    } else {
        Eligibility::NotEligible(format!(
            "closed {closed_secs} s, needs more than {threshold_secs} s"
        ))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FolderAction {
    Archived,
    WouldArchive,
    Skipped,
    Error,
}

impl FolderAction {
    pub fn as_str(&self) -> &'static str {
        match self {
            FolderAction::Archived => "archived",
            FolderAction::WouldArchive => "would-archive",
            FolderAction::Skipped => "skipped",
            FolderAction::Error => "error",
        }
    }
}

#[derive(Debug, Clone)]
pub struct FolderReport {
    pub folder: PathBuf,
    pub action: FolderAction,
    pub reason: String,
    /// Files matched by clean_globs and removed (or slated for removal in a
    /// dry run).
    pub cleaned: Vec<PathBuf>,
    /// Job files found under the case folder; archiving proceeds, but the
    /// operator should know a queue may still reference this case.
    pub job_file_warnings: Vec<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct ArchiveReport {
    pub run_utc: DateTime<Utc>,
    pub dry_run: bool,
    pub folders: Vec<FolderReport>,
}

impl ArchiveReport {
    pub fn archived(&self) -> usize {
        self.folders
            .iter()
            .filter(|f| f.action == FolderAction::Archived)
            .count()
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        let mut push = |k: &str, v: &str| {
            out.push_str(k);
            out.push('=');
            out.push_str(v);
            out.push('\n');
        };
        push("report", "archive");
        push("run_utc", &format_utc(self.run_utc));
        push("dry_run", if self.dry_run { "true" } else { "false" });
        for (i, folder) in self.folders.iter().enumerate() {
            let prefix = format!("folder.{}", i + 1);
            push(&format!("{prefix}.path"), &folder.folder.to_string_lossy());
            push(&format!("{prefix}.action"), folder.action.as_str());
            push(&format!("{prefix}.reason"), &folder.reason);
            for cleaned in &folder.cleaned {
                push(&format!("{prefix}.cleaned"), &cleaned.to_string_lossy());
            }
            for warning in &folder.job_file_warnings {
                push(
                    &format!("{prefix}.warning.job_file"),
                    &warning.to_string_lossy(),
                );
            }
        }
        out
    }
}

#[derive(Debug, Error)]
pub enum ArchiveError {
    #[error("another archive run holds {0}")]
    RunLockHeld(PathBuf),
    #[error("{0}")]
    Registry(#[from] RegistryError),
    #[error("io error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

fn io_at(path: &Path) -> impl Fn(io::Error) -> ArchiveError + '_ {
    move |source| ArchiveError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Files under `case_dir` matching any clean glob, deepest first so files
/// sort before their parent directories are removed.
fn clean_matches(case_dir: &Path, globs: &[String]) -> Result<Vec<PathBuf>, ArchiveError> {
    let mut matches: Vec<PathBuf> = Vec::new();
    for pattern in globs {
        // `a/**` means the directory a's whole contents; the glob crate
        // only descends with `**` when something follows it, so match the
        // directory itself and remove it recursively
        let pattern = pattern.strip_suffix("/**").unwrap_or(pattern);
        let full = case_dir.join(pattern);
        let entries = glob::glob(&full.to_string_lossy())
            .map_err(|e| io_at(case_dir)(io::Error::new(io::ErrorKind::InvalidInput, e)))?;
        for entry in entries {
            let path = entry.map_err(|e| io_at(case_dir)(e.into()))?;
            if !matches.contains(&path) {
                matches.push(path);
            }
        }
    }
    matches.sort_by_key(|p| std::cmp::Reverse(p.components().count()));
    Ok(matches)
}

fn find_job_files(case_dir: &Path) -> Vec<PathBuf> {
    walkdir::WalkDir::new(case_dir)
        .sort_by_file_name()
        .into_iter()
        .filter_map(|e| e.ok())
        .filter(|e| e.file_type().is_file())
        .map(|e| e.into_path())
        .filter(|p| p.extension().is_some_and(|x| x == "job"))
        .collect()
}

/// Move a case folder into the archive: rename when the volumes allow it,
/// otherwise copy, verify every file by digest, and only then delete the
/// source.
fn move_case(source: &Path, dest: &Path) -> Result<(), ArchiveError> {
    match fs::rename(source, dest) {
        Ok(()) => return Ok(()),
        Err(e) if e.raw_os_error() == Some(libc::EXDEV) => {}
        Err(e) => return Err(io_at(source)(e)),
    }
    copy_tree_verified(source, dest)?;
    fs::remove_dir_all(source).map_err(io_at(source))
}

fn copy_tree_verified(source: &Path, dest: &Path) -> Result<(), ArchiveError> {
    fs::create_dir_all(dest).map_err(io_at(dest))?;
    for entry in fs::read_dir(source).map_err(io_at(source))? {
        let entry = entry.map_err(io_at(source))?;
        let from = entry.path();
        let to = dest.join(entry.file_name());
        let kind = entry.file_type().map_err(io_at(&from))?;
        if kind.is_dir() {
            copy_tree_verified(&from, &to)?;
        } else {
            fs::copy(&from, &to).map_err(io_at(&from))?;
            let original = digest_files(&[&from]).map_err(io_at(&from))?;
            let copied = digest_files(&[&to]).map_err(io_at(&to))?;
            if original != copied {
                return Err(io_at(&to)(io::Error::new(
                    io::ErrorKind::InvalidData,
                    "copy digest mismatch",
                )));
            }
        }
    }
    Ok(())
}

struct RunLock {
    path: PathBuf,
}

impl RunLock {
    fn acquire(archive_root: &Path) -> Result<Self, ArchiveError> {
        let path = archive_root.join(RUN_LOCK_NAME);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(_) => Ok(RunLock { path }),
            Err(e) if e.kind() == io::ErrorKind::AlreadyExists => {
                Err(ArchiveError::RunLockHeld(path))
            }
            Err(e) => Err(io_at(&path)(e)),
        }
    }
}

impl Drop for RunLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

pub fn archive_run(
    policy: &ArchivePolicy,
    now: DateTime<Utc>,
    dry_run: bool,
) -> Result<ArchiveReport, ArchiveError> {
    fs::create_dir_all(&policy.archive_root).map_err(io_at(&policy.archive_root))?;
    let _lock = RunLock::acquire(&policy.archive_root)?;
    let snapshot = snapshot_registry(&policy.registry_path)?;

    let mut folders = Vec::new();
    for source_root in &policy.source_roots {
        let mut children: Vec<PathBuf> = fs::read_dir(source_root)
            .map_err(io_at(source_root))?
            .filter_map(|e| e.ok())
            .filter(|e| e.file_type().map(|t| t.is_dir()).unwrap_or(false))
            .map(|e| e.path())
            .collect();
        children.sort();
        for folder in children {
            folders.push(process_folder(&folder, policy, &snapshot, now, dry_run));
        }
    }
    Ok(ArchiveReport {
        run_utc: now_utc_seconds(),
        dry_run,
        folders,
    })
}

fn process_folder(
    folder: &Path,
    policy: &ArchivePolicy,
    snapshot: &RegistrySnapshot,
    now: DateTime<Utc>,
    dry_run: bool,
) -> FolderReport {
    let mut report = FolderReport {
        folder: folder.to_path_buf(),
        action: FolderAction::Skipped,
        reason: String::new(),
        cleaned: Vec::new(),
        job_file_warnings: Vec::new(),
    };
    let name = folder
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    if !policy.case_id_pattern.is_match(&name) {
        report.reason = "not a case folder".to_string();
        return report;
    }
    match eligibility(&name, snapshot, policy, now) {
        Eligibility::NotEligible(reason) => {
            report.reason = reason;
            return report;
        }
        Eligibility::Eligible => {}
    }
    report.job_file_warnings = find_job_files(folder);

    let dest = policy.archive_root.join(&name);
    if dest.exists() {
        report.action = FolderAction::Error;
        report.reason = format!("archive collision: {} already exists", dest.display());
        return report;
    }

    let matches = match clean_matches(folder, &policy.clean_globs) {
        Ok(m) => m,
        Err(e) => {
            report.action = FolderAction::Error;
            report.reason = format!("clean scan failed: {e}");
            return report;
        }
    };
    if dry_run {
        report.action = FolderAction::WouldArchive;
        report.reason = format!("closed more than {} days", policy.threshold_days);
        report.cleaned = matches;
        return report;
    }
    for path in &matches {
        let removed = if path.is_dir() {
            fs::remove_dir_all(path)
        } else {
            fs::remove_file(path)
        };
        if let Err(e) = removed {
            report.action = FolderAction::Error;
            report.reason = format!("partially cleaned, aborted: cannot remove {}: {e}", path.display());
            report.cleaned.clone_from(&matches);
            return report;
        }
    }
    report.cleaned = matches;
    if let Err(e) = move_case(folder, &dest) {
        report.action = FolderAction::Error;
        report.reason = format!("move failed: {e}");
        return report;
    }
    report.action = FolderAction::Archived;
    report.reason = format!("closed more than {} days", policy.threshold_days);
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::Duration;

    fn write_registry(path: &Path, rows: &[(&str, &str, DateTime<Utc>)]) {
        let mut text = format!("{REGISTRY_HEADER}\n");
        for (id, status, date) in rows {
            text.push_str(&format!("{id}\t{status}\t{}\n", format_utc(*date)));
        }
        fs::write(path, text).unwrap();
    }

    fn policy(dir: &Path) -> ArchivePolicy {
        ArchivePolicy::from_str(&format!(
            "archive_root = {a}\nsource_root = {s}\nregistry = {r}\nclean_glob = prep/*/tmp/**\nclean_glob = **/*.cache\n",
            a = dir.join("archive").display(),
            s = dir.join("cases").display(),
            r = dir.join("registry.tsv").display(),
        ))
        .unwrap()
    }

    #[test]
    fn registry_roundtrip_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let reg = dir.path().join("registry.tsv");
        let now = now_utc_seconds();
        write_registry(&reg, &[("c1", "closed", now), ("c2", "open", now), ("c3", "closed", now)]);
        let snap = snapshot_registry(&reg).unwrap();
        assert_eq!(snap.records.len(), 3);
        assert_eq!(snap.records["c2"].status, CaseStatus::Open);

        write_registry(&reg, &[("c1", "closed", now), ("c1", "open", now)]);
        assert!(matches!(
            snapshot_registry(&reg).unwrap_err(),
            RegistryError::DuplicateCase { line: 3, .. }
        ));

        fs::write(&reg, format!("{REGISTRY_HEADER}\nc1\tclosed\tyesterday\n")).unwrap();
        assert!(matches!(
            snapshot_registry(&reg).unwrap_err(),
            RegistryError::BadDate { line: 2, .. }
        ));

        fs::write(&reg, "case\tstate\twhen\n").unwrap();
        assert!(matches!(snapshot_registry(&reg).unwrap_err(), RegistryError::BadHeader));
    }

    #[test]
    fn eligibility_is_strict() {
        let dir = tempfile::tempdir().unwrap();
        let p = policy(dir.path());
        let now = now_utc_seconds();
        let reg = dir.path().join("registry.tsv");
        write_registry(
            &reg,
            &[
                ("old", "closed", now - Duration::days(31)),
                ("edge", "closed", now - Duration::days(30)),
                ("fresh", "open", now - Duration::days(90)),
            ],
        );
        let snap = snapshot_registry(&reg).unwrap();
        assert_eq!(eligibility("old", &snap, &p, now), Eligibility::Eligible);
        assert!(matches!(eligibility("edge", &snap, &p, now), Eligibility::NotEligible(_)));
        assert!(matches!(eligibility("fresh", &snap, &p, now), Eligibility::NotEligible(_)));
        assert_eq!(
            eligibility("ghost", &snap, &p, now),
            Eligibility::NotEligible("not in registry".to_string())
        );
        // one second past the strict boundary flips it
        assert_eq!(
            eligibility("edge", &snap, &p, now + Duration::seconds(1)),
            Eligibility::Eligible
        );
    }

    fn seed_case(root: &Path, name: &str) {
        let case = root.join(name);
        fs::create_dir_all(case.join("image")).unwrap();
        fs::create_dir_all(case.join("prep/ief/tmp")).unwrap();
        fs::write(case.join("image/disk.raw"), name).unwrap();
        fs::write(case.join("prep/ief/report.html"), "findings").unwrap();
        fs::write(case.join("prep/ief/tmp/scratch.bin"), "junk").unwrap();
        fs::write(case.join("prep/ief/index.cache"), "cache").unwrap();
    }

    fn tree_files(root: &Path) -> Vec<String> {
        walkdir::WalkDir::new(root)
            .sort_by_file_name()
            .into_iter()
            .filter_map(|e| e.ok())
            .filter(|e| e.file_type().is_file())
            .map(|e| {
                e.path()
                    .strip_prefix(root)
                    .unwrap()
                    .to_string_lossy()
                    .into_owned()
            })
            .collect()
    }

    #[test]
    fn run_moves_only_eligible_and_cleans() {
        let dir = tempfile::tempdir().unwrap();
        let p = policy(dir.path());
        let cases = dir.path().join("cases");
        seed_case(&cases, "old");
        seed_case(&cases, "fresh");
        fs::create_dir_all(cases.join("not a case!")).unwrap();
        let now = now_utc_seconds();
        write_registry(
            &p.registry_path,
            &[
                ("old", "closed", now - Duration::days(31)),
                ("fresh", "open", now),
            ],
        );

        let report = archive_run(&p, now, false).unwrap();
        assert_eq!(report.archived(), 1);
        assert!(!cases.join("old").exists());
        assert!(cases.join("fresh").exists());
        assert!(cases.join("not a case!").exists());

        let archived = tree_files(&p.archive_root.join("old"));
        assert_eq!(archived, vec!["image/disk.raw", "prep/ief/report.html"]);

        let skipped: Vec<_> = report
            .folders
            .iter()
            .filter(|f| f.action == FolderAction::Skipped)
            .collect();
        assert_eq!(skipped.len(), 2);
        assert!(skipped.iter().any(|f| f.reason == "not a case folder"));

        // immediately rerunning moves nothing
        let again = archive_run(&p, now, false).unwrap();
        assert_eq!(again.archived(), 0);
    }

    #[test]
    fn dry_run_touches_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let p = policy(dir.path());
        let cases = dir.path().join("cases");
        seed_case(&cases, "old");
        let now = now_utc_seconds();
        write_registry(&p.registry_path, &[("old", "closed", now - Duration::days(40))]);
        let before = tree_files(&cases);
        let report = archive_run(&p, now, true).unwrap();
        assert_eq!(report.folders[0].action, FolderAction::WouldArchive);
        assert_eq!(report.folders[0].cleaned.len(), 2);
        assert_eq!(tree_files(&cases), before);
        assert!(!p.archive_root.join("old").exists());
    }

    #[test]
    fn collision_skips_with_error_and_source_untouched() {
        let dir = tempfile::tempdir().unwrap();
        let p = policy(dir.path());
        let cases = dir.path().join("cases");
        seed_case(&cases, "old");
        fs::create_dir_all(p.archive_root.join("old")).unwrap();
        let now = now_utc_seconds();
        write_registry(&p.registry_path, &[("old", "closed", now - Duration::days(40))]);
        let report = archive_run(&p, now, false).unwrap();
        assert_eq!(report.folders[0].action, FolderAction::Error);
        assert!(cases.join("old/image/disk.raw").exists());
    }

    #[test]
    fn job_files_surface_as_warnings() {
        let dir = tempfile::tempdir().unwrap();
        let p = policy(dir.path());
        let cases = dir.path().join("cases");
        seed_case(&cases, "old");
        fs::write(cases.join("old/prep/ief/pending.job"), "version=1\n").unwrap();
        let now = now_utc_seconds();
        write_registry(&p.registry_path, &[("old", "closed", now - Duration::days(40))]);
        let report = archive_run(&p, now, true).unwrap();
        assert_eq!(report.folders[0].job_file_warnings.len(), 1);
        assert!(report.render().contains("warning.job_file"));
    }

    #[test]
    fn run_lock_blocks_concurrent_runs() {
        let dir = tempfile::tempdir().unwrap();
        let p = policy(dir.path());
        fs::create_dir_all(&p.archive_root).unwrap();
        fs::create_dir_all(dir.path().join("cases")).unwrap();
        write_registry(&p.registry_path, &[]);
        fs::write(p.archive_root.join(RUN_LOCK_NAME), "").unwrap();
        assert!(matches!(
            archive_run(&p, now_utc_seconds(), false).unwrap_err(),
            ArchiveError::RunLockHeld(_)
        ));
        fs::remove_file(p.archive_root.join(RUN_LOCK_NAME)).unwrap();
        archive_run(&p, now_utc_seconds(), false).unwrap();
        // the lock is released afterwards
        assert!(!p.archive_root.join(RUN_LOCK_NAME).exists());
    }

    #[test]
    fn policy_rejects_archive_inside_source() {
        let err = ArchivePolicy::from_str(
            "archive_root = /data/cases/archive\nsource_root = /data/cases\nregistry = /data/reg.tsv\n",
        )
        .unwrap_err();
        assert!(matches!(err, PolicyError::ArchiveInsideSource { .. }));
    }
}
