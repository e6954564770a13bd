//! Imager adapters. Real imagers are external command-line tools; the
//! pipeline only needs the produced files and the digest the imager states
//! for the acquired stream. The mock imager stands in for tests and demos.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use super::device::Device;

#[derive(Debug, Clone)]
pub struct Acquired {
    /// Produced image files in digest order.
    pub image_files: Vec<PathBuf>,
    /// Hex digest the imager claims for the acquired stream (SHA-256).
    pub stated_digest: String,
}

pub trait ImagerAdapter {
    fn name(&self) -> &str;
    fn acquire(&self, device: &Device, dest_dir: &Path) -> io::Result<Acquired>;
}

/// Writes a single raw image whose bytes are derived from the device
/// description, repeated up to size_bytes (capped so tests stay fast), and
/// states the true digest of what it wrote. With `bad_digest` it lies about
/// the digest, which the verification step must catch.
pub struct MockImager {
    pub bad_digest: bool,
    /// Upper bound on the emitted image size.
    pub max_bytes: u64,
}

impl Default for MockImager {
    fn default() -> Self {
        MockImager {
            bad_digest: false,
            max_bytes: 1 << 20,
        }
    }
}

impl ImagerAdapter for MockImager {
    fn name(&self) -> &str {
        "mock"
    }

    fn acquire(&self, device: &Device, dest_dir: &Path) -> io::Result<Acquired> {
        let path = dest_dir.join(format!("{}.raw", device.device_id));
        let mut hasher = Sha256::new();
        let mut out = BufWriter::new(File::create(&path)?);
        let pattern = format!("{}|{}\n", device.device_id, device.description);
        let mut remaining = device.size_bytes.min(self.max_bytes);
        while remaining > 0 {
            let chunk = &pattern.as_bytes()[..pattern.len().min(remaining as usize)];
            out.write_all(chunk)?;
            hasher.update(chunk);
            remaining -= chunk.len() as u64;
        }
        out.flush()?;
        let mut stated_digest = hex::encode(hasher.finalize());
        if self.bad_digest {
            // flip the first nibble so the digest is well-formed but wrong
            let first = stated_digest.remove(0);
            let flipped = if first == '0' { '1' } else { '0' };
            stated_digest.insert(0, flipped);
        }
        Ok(Acquired {
            image_files: vec![path],
            stated_digest,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::acquire::digest_files;

    fn dev(size: u64) -> Device {
        Device {
            device_id: "sdz".to_string(),
            description: "test disk".to_string(),
            size_bytes: size,
        }
    }

    #[test]
    fn stated_digest_matches_written_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let acq = MockImager::default().acquire(&dev(10_000), dir.path()).unwrap();
        assert_eq!(acq.image_files.len(), 1);
        let recomputed = digest_files(&acq.image_files).unwrap();
        assert_eq!(recomputed, acq.stated_digest);
        assert_eq!(
            std::fs::metadata(&acq.image_files[0]).unwrap().len(),
            10_000
        );
    }

    #[test]
    fn bad_digest_mode_disagrees_with_content() {
        let dir = tempfile::tempdir().unwrap();
        let imager = MockImager {
            bad_digest: true,
            ..MockImager::default()
        };
        let acq = imager.acquire(&dev(500), dir.path()).unwrap();
        let recomputed = digest_files(&acq.image_files).unwrap();
        assert_ne!(recomputed, acq.stated_digest);
    }

    #[test]
    fn zero_byte_device_yields_empty_file_digest() {
        let dir = tempfile::tempdir().unwrap();
        let acq = MockImager::default().acquire(&dev(0), dir.path()).unwrap();
        assert_eq!(
            acq.stated_digest,
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
    }
}
