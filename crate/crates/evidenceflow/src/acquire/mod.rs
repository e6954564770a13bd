//! Acquisition pipeline: guide one acquisition from device selection
//! through verified replication, then hand the preparation jobs straight to
//! the queue servers so no time is lost between acquiring and preparation.
//!
//! The pipeline never has fewer than one verified copy of the evidence: the
//! staging copy is deleted only after both replicas verify, and any
//! verification mismatch stops forward progress with everything left in
//! place for the operator.

pub mod config;
pub mod device;
pub mod imager;

use std::fs::{self, File, OpenOptions};
use std::io::{self, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::model::{format_utc, init_queue_layout, now_utc_seconds};
use crate::queue::{enqueue, JobDraft};

pub use config::{AcquisitionConfig, ConfigError, OutputLocation, ReplicaKind};
pub use device::{new_devices, Device, DeviceProvider, FakeDeviceProvider};
pub use imager::{Acquired, ImagerAdapter, MockImager};

pub const DIGEST_ALGORITHM: &str = "sha256";
pub const REPORT_FILE_NAME: &str = "acquisition_report.txt";
pub const MANIFEST_FILE_NAME: &str = "manifest.txt";

/// Streaming SHA-256 over the given files in order; constant memory.
pub fn digest_files<P: AsRef<Path>>(files: &[P]) -> io::Result<String> {
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 64 * 1024];
    for file in files {
        let mut f = File::open(file)?;
        loop {
            let n = f.read(&mut buf)?;
            if n == 0 {
                break;
            }
            hasher.update(&buf[..n]);
        }
    }
    Ok(hex::encode(hasher.finalize()))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DigestCheck {
    Match,
    Mismatch { actual: String },
}

pub fn verify_digest<P: AsRef<Path>>(files: &[P], expected: &str) -> io::Result<DigestCheck> {
    let actual = digest_files(files)?;
    if actual.eq_ignore_ascii_case(expected) {
        Ok(DigestCheck::Match)
    } else {
        Ok(DigestCheck::Mismatch { actual })
    }
}

/// Evidence folder layout under one destination root:
/// `<root>/<case_id>/<evidence_name>/{image,prep/<tool>,logs}`.
#[derive(Debug, Clone)]
pub struct EvidenceLayout {
    pub evidence_root: PathBuf,
}

impl EvidenceLayout {
    pub fn new(destination_root: &Path, case_id: &str, evidence_name: &str) -> Self {
        EvidenceLayout {
            evidence_root: destination_root.join(case_id).join(evidence_name),
        }
    }

    pub fn image_dir(&self) -> PathBuf {
        self.evidence_root.join("image")
    }

    pub fn prep_dir(&self, tool: &str) -> PathBuf {
        self.evidence_root.join("prep").join(tool)
    }

    pub fn logs_dir(&self) -> PathBuf {
        self.evidence_root.join("logs")
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.image_dir().join(MANIFEST_FILE_NAME)
    }

    fn create(&self, tools: &[String]) -> io::Result<()> {
        fs::create_dir_all(self.image_dir())?;
        fs::create_dir_all(self.logs_dir())?;
        for tool in tools {
            fs::create_dir_all(self.prep_dir(tool))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct AcquisitionRequest {
    pub device: Device,
    /// Name of one configured output location.
    pub destination: String,
    pub case_id: String,
    pub evidence_name: String,
    /// Investigator credential, recorded as an identifier only.
    pub investigator: String,
    /// Tools to enqueue preparation jobs for, in selection order.
    pub preparations: Vec<String>,
}

#[derive(Debug, Error)]
pub enum AcquireError {
    #[error("unknown destination {0:?}")]
    UnknownDestination(String),
    #[error("{field} {value:?} is not filesystem-safe")]
    UnsafeName { field: &'static str, value: String },
    #[error("no queue configured for tool {0:?}")]
    NoQueueForTool(String),
    #[error("evidence already exists at {0}")]
    EvidenceExists(PathBuf),
}

fn filesystem_safe(value: &str) -> bool {
    !value.is_empty()
        && value != "."
        && value != ".."
        && value
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
}

impl AcquisitionRequest {
    pub fn validate(&self, config: &AcquisitionConfig) -> Result<(), AcquireError> {
        if config.location(&self.destination).is_none() {
            return Err(AcquireError::UnknownDestination(self.destination.clone()));
        }
        for (field, value) in [
            ("case_id", &self.case_id),
            ("evidence_name", &self.evidence_name),
        ] {
            if !filesystem_safe(value) {
                return Err(AcquireError::UnsafeName {
                    field,
                    value: value.clone(),
                });
            }
        }
        for tool in &self.preparations {
            if config.queue_root(tool).is_none() {
                return Err(AcquireError::NoQueueForTool(tool.clone()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct StepRecord {
    pub number: usize,
    pub name: &'static str,
    pub ok: bool,
    pub detail: String,
    pub time_utc: DateTime<Utc>,
}

#[derive(Debug, Clone)]
pub struct AcquisitionReport {
    pub steps: Vec<StepRecord>,
    /// Step number that failed, if any; everything after it never ran.
    pub failed_step: Option<usize>,
    /// (tool, job_id) per enqueued preparation job.
    pub jobs: Vec<(String, String)>,
    pub staging_dir: PathBuf,
    pub staging_digest: Option<String>,
    pub report_path: Option<PathBuf>,
}

impl AcquisitionReport {
    pub fn succeeded(&self) -> bool {
        self.failed_step.is_none()
    }

    pub fn render(&self, request: &AcquisitionRequest) -> String {
        let mut out = String::new();
        let mut push = |k: &str, v: &str| {
            out.push_str(k);
            out.push('=');
            out.push_str(v);
            out.push('\n');
        };
        push("report", "acquisition");
        push("device_id", &request.device.device_id);
        push("destination", &request.destination);
        push("case_id", &request.case_id);
        push("evidence_name", &request.evidence_name);
        push("investigator", &request.investigator);
        push("digest_algorithm", DIGEST_ALGORITHM);
        if let Some(d) = &self.staging_digest {
            push("staging_digest", d);
        }
        for step in &self.steps {
            let prefix = format!("step.{}", step.number);
            push(&format!("{prefix}.name"), step.name);
            push(
                &format!("{prefix}.status"),
                if step.ok { "ok" } else { "failed" },
            );
            push(&format!("{prefix}.time_utc"), &format_utc(step.time_utc));
            if !step.detail.is_empty() {
                push(&format!("{prefix}.detail"), &step.detail);
            }
        }
        for (i, (tool, job_id)) in self.jobs.iter().enumerate() {
            push(&format!("job.{}.tool", i + 1), tool);
            push(&format!("job.{}.id", i + 1), job_id);
        }
        push(
            "result",
            if self.succeeded() { "success" } else { "failed" },
        );
        out
    }
}

fn flip_byte_in(path: &Path) -> io::Result<()> {
    let len = fs::metadata(path)?.len();
    let mut f = OpenOptions::new().read(true).write(true).open(path)?;
    let pos = len / 2;
    f.seek(SeekFrom::Start(pos))?;
    let mut byte = [0u8; 1];
    let read = f.read(&mut byte)?;
    if read == 0 {
        return Ok(()); // empty file: nothing to corrupt
    }
    byte[0] ^= 0xff;
    f.seek(SeekFrom::Start(pos))?;
    f.write_all(&byte)
}

fn copy_images(
    files: &[PathBuf],
    dest_dir: &Path,
) -> io::Result<Vec<PathBuf>> {
    let mut copied = Vec::new();
    for file in files {
        let name = file
            .file_name()
            .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, "image without name"))?;
        let dest = dest_dir.join(name);
        fs::copy(file, &dest)?;
        copied.push(dest);
    }
    Ok(copied)
}

fn write_manifest(layout: &EvidenceLayout, files: &[PathBuf], digest: &str) -> io::Result<()> {
    let mut text = format!("algorithm={DIGEST_ALGORITHM}\ndigest={digest}\n");
    for file in files {
        let name = file.file_name().unwrap_or_default().to_string_lossy();
        text.push_str(&format!("file={name}\n"));
    }
    fs::write(layout.manifest_path(), text)
}

/// Run one acquisition end to end. Precondition failures (bad request,
/// missing queue) return `Err`; once the pipeline starts, step failures are
/// reported in the returned `AcquisitionReport` with `failed_step` set and
/// the staging copy left untouched.
pub fn run_acquisition(
    request: &AcquisitionRequest,
    config: &AcquisitionConfig,
    imager: &dyn ImagerAdapter,
) -> Result<AcquisitionReport, AcquireError> {
    request.validate(config)?;
    let location = config.location(&request.destination).unwrap();
    let fileserver =
        EvidenceLayout::new(&location.fileserver_path, &request.case_id, &request.evidence_name);
    let backup =
        EvidenceLayout::new(&location.backup_path, &request.case_id, &request.evidence_name);
    if fileserver.evidence_root.exists() {
        return Err(AcquireError::EvidenceExists(fileserver.evidence_root.clone()));
    }

    let staging_dir = config
        .staging_dir
        .join(&request.case_id)
        .join(&request.evidence_name);

    let mut report = AcquisitionReport {
        steps: Vec::new(),
        failed_step: None,
        jobs: Vec::new(),
        staging_dir: staging_dir.clone(),
        staging_digest: None,
        report_path: None,
    };

    // every closure returns Ok(detail) or Err(detail); the first Err stops
    // the pipeline, so step k+1 never begins unless step k succeeded
    let step = |report: &mut AcquisitionReport,
                    name: &'static str,
                    body: &mut dyn FnMut(&mut AcquisitionReport) -> Result<String, String>|
     -> bool {
        if report.failed_step.is_some() {
            return false;
        }
        let number = report.steps.len() + 1;
        let outcome = body(report);
        let (ok, detail) = match outcome {
            Ok(d) => (true, d),
            Err(d) => (false, d),
        };
        report.steps.push(StepRecord {
            number,
            name,
            ok,
            detail,
            time_utc: now_utc_seconds(),
        });
        if !ok {
            report.failed_step = Some(number);
        }
        ok
    };

    let tools = request.preparations.clone();
    step(&mut report, "create_layout", &mut |_| {
        fileserver.create(&tools).map_err(|e| e.to_string())?;
        backup.create(&tools).map_err(|e| e.to_string())?;
        fs::create_dir_all(&staging_dir).map_err(|e| e.to_string())?;
        Ok(format!(
            "fileserver={} backup={}",
            fileserver.evidence_root.display(),
            backup.evidence_root.display()
        ))
    });

    let mut acquired: Option<Acquired> = None;
    step(&mut report, "acquire_image", &mut |_| {
        let a = imager
            .acquire(&request.device, &staging_dir)
            .map_err(|e| e.to_string())?;
        let detail = format!(
            "files={} stated_digest={}",
            a.image_files.len(),
            a.stated_digest
        );
        acquired = Some(a);
        Ok(detail)
    });

    step(&mut report, "verify_staging", &mut |report| {
        let a = acquired.as_ref().expect("acquire step ran");
        match verify_digest(&a.image_files, &a.stated_digest).map_err(|e| e.to_string())? {
            DigestCheck::Match => {
                report.staging_digest = Some(a.stated_digest.clone());
                Ok(format!("digest={}", a.stated_digest))
            }
            DigestCheck::Mismatch { actual } => Err(format!(
                "staging digest {actual} does not match imager's stated digest {}",
                a.stated_digest
            )),
        }
    });

    let mut fileserver_files: Vec<PathBuf> = Vec::new();
    let mut backup_files: Vec<PathBuf> = Vec::new();
    step(&mut report, "replicate", &mut |report| {
        let a = acquired.as_ref().expect("acquire step ran");
        let digest = report.staging_digest.as_deref().expect("staging verified");
        fileserver_files =
            copy_images(&a.image_files, &fileserver.image_dir()).map_err(|e| e.to_string())?;
        backup_files =
            copy_images(&a.image_files, &backup.image_dir()).map_err(|e| e.to_string())?;
        write_manifest(&fileserver, &fileserver_files, digest).map_err(|e| e.to_string())?;
        write_manifest(&backup, &backup_files, digest).map_err(|e| e.to_string())?;
        if let Some(kind) = config.fault_flip_replica {
            let victim = match kind {
                ReplicaKind::Fileserver => &fileserver_files,
                ReplicaKind::Backup => &backup_files,
            };
            if let Some(first) = victim.first() {
                flip_byte_in(first).map_err(|e| e.to_string())?;
            }
        }
        Ok("fileserver and backup copies written".to_string())
    });

    step(&mut report, "verify_replicas", &mut |report| {
        let digest = report.staging_digest.clone().expect("staging verified");
        for (label, files) in [("fileserver", &fileserver_files), ("backup", &backup_files)] {
            match verify_digest(files, &digest).map_err(|e| e.to_string())? {
                DigestCheck::Match => {}
                DigestCheck::Mismatch { actual } => {
                    return Err(format!(
                        "{label} replica digest {actual} does not match {digest}; replica left in place for operator action"
                    ))
                }
            }
        }
        Ok("both replicas verified".to_string())
    });

    step(&mut report, "delete_staging", &mut |_| {
        fs::remove_dir_all(&staging_dir).map_err(|e| e.to_string())?;
        Ok(format!("removed {}", staging_dir.display()))
    });

    step(&mut report, "enqueue_preparations", &mut |report| {
        let digest = report.staging_digest.clone().expect("staging verified");
        // jobs reference the fileserver replica; the backup exists for
        // failure recovery only
        let source = if fileserver_files.len() == 1 {
            fileserver_files[0].clone()
        } else {
            fileserver.image_dir()
        };
        for tool in &tools {
            let root = config.queue_root(tool).expect("validated");
            let layout = init_queue_layout(root).map_err(|e| e.to_string())?;
            let job = enqueue(
                &layout,
                JobDraft {
                    tool: tool.clone(),
                    source: source.clone(),
                    source_root: fileserver.evidence_root.clone(),
                    output: fileserver.prep_dir(tool),
                    case_id: request.case_id.clone(),
                    evidence_name: request.evidence_name.clone(),
                    requested_by: request.investigator.clone(),
                    params: vec![("digest".to_string(), digest.clone())],
                },
            )
            .map_err(|e| e.to_string())?;
            report.jobs.push((tool.clone(), job.job_id));
        }
        Ok(format!("{} jobs enqueued", tools.len()))
    });

    // the report lands next to the evidence whenever step 1 got far enough
    // to create the logs folder
    let report_path = fileserver.logs_dir().join(REPORT_FILE_NAME);
    if fileserver.logs_dir().is_dir()
        && fs::write(&report_path, report.render(request)).is_ok()
    {
        report.report_path = Some(report_path);
    }
    Ok(report)
}
