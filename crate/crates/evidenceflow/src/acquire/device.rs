//! Device enumeration: a provider trait plus the fake provider used in
//! tests and demos. Only devices connected after the "before" snapshot are
//! offered to the user, so the wrong disk cannot be picked by habit.

use std::fs;
use std::io;
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Device {
    pub device_id: String,
    pub description: String,
    pub size_bytes: u64,
}

pub trait DeviceProvider {
    fn name(&self) -> &str;
    /// Current set of connected devices, in provider order.
    fn snapshot(&self) -> io::Result<Vec<Device>>;
}

/// Devices present in `after` but not in `before`, by device_id, keeping
/// provider order.
pub fn new_devices(before: &[Device], after: &[Device]) -> Vec<Device> {
    after
        .iter()
        .filter(|d| !before.iter().any(|b| b.device_id == d.device_id))
        .cloned()
        .collect()
}

#[derive(Debug, Error)]
pub enum DeviceListError {
    #[error("cannot read device list {path}: {source}")]
    Read {
        path: std::path::PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("line {0}: expected device_id<TAB>description<TAB>size_bytes")]
    Malformed(usize),
    #[error("line {line}: bad size {size:?}")]
    BadSize { line: usize, size: String },
    #[error("line {line}: duplicate device_id {id:?}")]
    Duplicate { line: usize, id: String },
}

/// File-backed provider: one device per line, tab separated. Re-reads the
/// file on every snapshot so a test can "connect" a device by appending a
/// line between snapshots.
pub struct FakeDeviceProvider {
    path: std::path::PathBuf,
}

impl FakeDeviceProvider {
    pub fn new(path: impl Into<std::path::PathBuf>) -> Self {
        FakeDeviceProvider { path: path.into() }
    }

    fn parse(text: &str) -> Result<Vec<Device>, DeviceListError> {
        let mut out: Vec<Device> = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let mut fields = trimmed.splitn(3, '\t');
            let (Some(id), Some(desc), Some(size)) =
                (fields.next(), fields.next(), fields.next())
            else {
                return Err(DeviceListError::Malformed(line));
            };
            let size_bytes = size.trim().parse().map_err(|_| DeviceListError::BadSize {
                line,
                size: size.to_string(),
            })?;
            if out.iter().any(|d| d.device_id == id) {
                return Err(DeviceListError::Duplicate {
                    line,
                    id: id.to_string(),
                });
            }
            out.push(Device {
                device_id: id.to_string(),
                description: desc.to_string(),
                size_bytes,
            });
        }
        Ok(out)
    }

    pub fn load(path: &Path) -> Result<Vec<Device>, DeviceListError> {
        let text = fs::read_to_string(path).map_err(|source| DeviceListError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text)
    }
}

impl DeviceProvider for FakeDeviceProvider {
    fn name(&self) -> &str {
        "fake"
    }

    fn snapshot(&self) -> io::Result<Vec<Device>> {
        Self::load(&self.path).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))
    }
}
