//! Acquisition configuration, stored on the file server as `key=value`
//! lines. Validation problems are fatal and carry the offending line.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::kv;

/// One selectable output destination; both paths are mandatory because every
/// acquisition is replicated to the file server and the backup server.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutputLocation {
    pub name: String,
    pub fileserver_path: PathBuf,
    pub backup_path: PathBuf,
}

/// Which replica a fault-injection knob corrupts (test harness support; the
/// verification pass stays real either way).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReplicaKind {
    Fileserver,
    Backup,
}

impl ReplicaKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ReplicaKind::Fileserver => "fileserver",
            ReplicaKind::Backup => "backup",
        }
    }
}

#[derive(Debug, Clone)]
pub struct AcquisitionConfig {
    pub locations: Vec<OutputLocation>,
    /// Imager adapter selection; `mock` is the only built-in.
    pub imager: String,
    /// Device provider selection; `fake` is the only built-in.
    pub device_provider: String,
    /// Device list file consumed by the fake provider.
    pub device_list: Option<PathBuf>,
    /// Local staging area the imager writes into before replication.
    pub staging_dir: PathBuf,
    /// tool name -> queue root receiving that tool's preparation jobs.
    pub queues: Vec<(String, PathBuf)>,
    /// Corrupt this replica right after its copy lands (tests only).
    pub fault_flip_replica: Option<ReplicaKind>,
}

#[derive(Debug, Error)]
pub enum ConfigError {
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
    #[error("line {line}: duplicate key {key:?}")]
    DuplicateKey { line: usize, key: String },
    #[error("line {line}: {message}")]
    Invalid { line: usize, message: String },
    #[error("location {name:?} is missing {missing}")]
    IncompleteLocation { name: String, missing: &'static str },
    #[error("no output locations configured")]
    NoLocations,
    #[error("staging_dir is required")]
    NoStagingDir,
}

impl AcquisitionConfig {
    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_str(&text)
    }

    pub fn from_str(text: &str) -> Result<Self, ConfigError> {
        // name -> (fileserver line+path, backup line+path), keyed in first-seen order
        let mut loc_order: Vec<String> = Vec::new();
        let mut fileserver: BTreeMap<String, PathBuf> = BTreeMap::new();
        let mut backup: BTreeMap<String, PathBuf> = BTreeMap::new();
        let mut imager = None;
        let mut device_provider = None;
        let mut device_list = None;
        let mut staging_dir = None;
        let mut queues: Vec<(String, PathBuf)> = Vec::new();
        let mut fault_flip = None;

        for (line, key, value) in kv::parse(text, true)? {
            let dup = |key: &str| ConfigError::DuplicateKey {
                line,
                key: key.to_string(),
            };
            if let Some(rest) = key.strip_prefix("location.") {
                let Some((name, field)) = rest.rsplit_once('.') else {
                    return Err(ConfigError::Invalid {
                        line,
                        message: format!("expected location.<name>.<field>, got {key:?}"),
                    });
                };
                if !loc_order.iter().any(|n| n == name) {
                    loc_order.push(name.to_string());
                }
                let slot = match field {
                    "fileserver_path" => &mut fileserver,
                    "backup_path" => &mut backup,
                    other => {
                        return Err(ConfigError::Invalid {
                            line,
                            message: format!("unknown location field {other:?}"),
                        })
                    }
                };
                if slot.insert(name.to_string(), PathBuf::from(value)).is_some() {
                    return Err(dup(&key));
                }
            } else if let Some(tool) = key.strip_prefix("queue.") {
                if queues.iter().any(|(t, _)| t == tool) {
                    return Err(dup(&key));
                }
                queues.push((tool.to_string(), PathBuf::from(value)));
            } else {
                match key.as_str() {
                    "imager" => {
                        if imager.replace(value).is_some() {
                            return Err(dup("imager"));
                        }
                    }
                    "device_provider" => {
                        if device_provider.replace(value).is_some() {
                            return Err(dup("device_provider"));
                        }
                    }
                    "device_list" => {
                        if device_list.replace(PathBuf::from(value)).is_some() {
                            return Err(dup("device_list"));
                        }
                    }
                    "staging_dir" => {
                        if staging_dir.replace(PathBuf::from(value)).is_some() {
                            return Err(dup("staging_dir"));
                        }
                    }
                    "fault.flip_replica" => {
                        let kind = match value.as_str() {
                            "fileserver" => ReplicaKind::Fileserver,
                            "backup" => ReplicaKind::Backup,
                            other => {
                                return Err(ConfigError::Invalid {
                                    line,
                                    message: format!(
                                        "fault.flip_replica must be fileserver or backup, got {other:?}"
                                    ),
                                })
                            }
                        };
                        if fault_flip.replace(kind).is_some() {
                            return Err(dup("fault.flip_replica"));
                        }
                    }
                    _ => return Err(ConfigError::UnknownKey { line, key }),
                }
            }
        }

        let mut locations = Vec::new();
        for name in loc_order {
            let fileserver_path = fileserver.remove(&name).ok_or_else(|| {
                ConfigError::IncompleteLocation {
                    name: name.clone(),
                    missing: "fileserver_path",
                }
            })?;
            let backup_path = backup.remove(&name).ok_or_else(|| {
                ConfigError::IncompleteLocation {
                    name: name.clone(),
                    missing: "backup_path",
                }
            })?;
            locations.push(OutputLocation {
                name,
                fileserver_path,
                backup_path,
            });
        }
        if locations.is_empty() {
            return Err(ConfigError::NoLocations);
        }

        Ok(AcquisitionConfig {
            locations,
            imager: imager.unwrap_or_else(|| "mock".to_string()),
            device_provider: device_provider.unwrap_or_else(|| "fake".to_string()),
            device_list,
            staging_dir: staging_dir.ok_or(ConfigError::NoStagingDir)?,
            queues,
            fault_flip_replica: fault_flip,
        })
    }

    pub fn location(&self, name: &str) -> Option<&OutputLocation> {
        self.locations.iter().find(|l| l.name == name)
    }

    pub fn queue_root(&self, tool: &str) -> Option<&Path> {
        self.queues
            .iter()
            .find(|(t, _)| t == tool)
            .map(|(_, p)| p.as_path())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const GOOD: &str = "\
staging_dir = /tmp/staging
location.main.fileserver_path = /srv/evidence
location.main.backup_path = /srv/backup
location.annex.fileserver_path = /annex/evidence
location.annex.backup_path = /annex/backup
queue.ief = /queues/ief
queue.bulk_extractor = /queues/be
";

    #[test]
    fn two_locations_both_selectable() {
        let cfg = AcquisitionConfig::from_str(GOOD).unwrap();
        assert_eq!(cfg.locations.len(), 2);
        assert!(cfg.location("main").is_some());
        assert!(cfg.location("annex").is_some());
        assert_eq!(cfg.imager, "mock");
        assert_eq!(cfg.queue_root("ief").unwrap(), Path::new("/queues/ief"));
    }

    #[test]
    fn duplicate_location_key_is_fatal_with_line() {
        let text = format!("{GOOD}location.main.backup_path = /elsewhere\n");
        let err = AcquisitionConfig::from_str(&text).unwrap_err();
        match err {
            ConfigError::DuplicateKey { line, key } => {
                assert_eq!(line, 8);
                assert_eq!(key, "location.main.backup_path");
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn missing_backup_path_is_fatal() {
        let text = "staging_dir = /tmp/s\nlocation.main.fileserver_path = /srv/e\n";
        let err = AcquisitionConfig::from_str(text).unwrap_err();
        assert!(matches!(
            err,
            ConfigError::IncompleteLocation { missing: "backup_path", .. }
        ));
    }

    #[test]
    fn unknown_key_reports_line() {
        let text = "staging_dir = /tmp/s\nmystery = 1\n";
        let err = AcquisitionConfig::from_str(text).unwrap_err();
        assert!(matches!(err, ConfigError::UnknownKey { line: 2, .. }));
    }

    #[test]
    fn fault_knob_parses() {
        let text = format!("{GOOD}fault.flip_replica = backup\n");
        let cfg = AcquisitionConfig::from_str(&text).unwrap();
        assert_eq!(cfg.fault_flip_replica, Some(ReplicaKind::Backup));
    }
}
