//! Downloader for the four standard digit-dataset files, with checksum
//! verification of the decompressed payloads.

use std::io::Read;
use std::path::Path;

use flate2::read::GzDecoder;
use sha2::{Digest, Sha256};

use crate::HarnessError;

pub const DEFAULT_BASE_URL: &str = "https://ossci-datasets.s3.amazonaws.com/mnist/";

pub struct MnistFile {
    pub name: &'static str,
    /// sha256 of the decompressed IDX payload — stable across gzip
    /// re-compressions by different mirrors.
    pub decompressed_sha256: &'static str,
}

pub const MNIST_FILES: [MnistFile; 4] = [
    MnistFile {
        name: "train-images-idx3-ubyte.gz",
        decompressed_sha256: "ba891046e6505d7aadcbbe25680a0738ad16aec93bde7f9b65e87a2fc25776db",
    },
    MnistFile {
        name: "train-labels-idx1-ubyte.gz",
        decompressed_sha256: "65a50cbbf4e906d70832878ad85ccda5333a97f0f4c3dd2ef09a8a9eef7101c5",
    },
    MnistFile {
        name: "t10k-images-idx3-ubyte.gz",
        decompressed_sha256: "0fa7898d509279e482958e8ce81c8e77db3f2f8254e26661ceb7762c4d494ce7",
    },
    MnistFile {
        name: "t10k-labels-idx1-ubyte.gz",
        decompressed_sha256: "ff7bcfd416de33731a308c3f266cc351222c34898ecbeaf847f06e48f7ec33f2",
    },
];

fn payload_digest(gz_bytes: &[u8]) -> Result<String, std::io::Error> {
    let mut decoded = Vec::new();
    GzDecoder::new(gz_bytes).read_to_end(&mut decoded)?;
    let mut hasher = Sha256::new();
    hasher.update(&decoded);
    Ok(format!("{:x}", hasher.finalize()))
}

/// Checks one on-disk file against its expected payload digest.
pub fn verify_file(path: &Path, expected: &str) -> Result<(), HarnessError> {
    let io_err = |source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    };
    let bytes = std::fs::read(path).map_err(io_err)?;
    let digest = if bytes.starts_with(&[0x1f, 0x8b]) {
        payload_digest(&bytes).map_err(io_err)?
    } else {
        let mut hasher = Sha256::new();
        hasher.update(&bytes);
        format!("{:x}", hasher.finalize())
    };
    if digest != expected {
        return Err(HarnessError::ChecksumMismatch {
            file: path.display().to_string(),
            expected: expected.to_string(),
            actual: digest,
        });
    }
    Ok(())
}

/// Downloads any of the four files missing from `out_dir` and verifies every
/// checksum. Files already present and intact are left alone.
pub fn fetch_mnist(out_dir: &Path, base_url: &str) -> Result<(), HarnessError> {
    std::fs::create_dir_all(out_dir).map_err(|source| HarnessError::Io {
        path: out_dir.to_path_buf(),
        source,
    })?;
    for file in &MNIST_FILES {
        let target = out_dir.join(file.name);
        if target.is_file() && verify_file(&target, file.decompressed_sha256).is_ok() {
            eprintln!("{} already present, checksum ok", file.name);
            continue;
        }
        let url = format!("{}{}", base_url, file.name);
        eprintln!("downloading {url}");
        let bytes = download(&url)?;
        std::fs::write(&target, &bytes).map_err(|source| HarnessError::Io {
            path: target.clone(),
            source,
        })?;
        verify_file(&target, file.decompressed_sha256)?;
        eprintln!("{} ok ({} bytes)", file.name, bytes.len());
    }
    Ok(())
}

fn download(url: &str) -> Result<Vec<u8>, HarnessError> {
    let fetch_err = |message: String| HarnessError::Fetch {
        url: url.to_string(),
        message,
    };
    let mut response = ureq::get(url)
        .call()
        .map_err(|e| fetch_err(e.to_string()))?;
    let mut bytes = Vec::new();
    response
        .body_mut()
        .as_reader()
        .read_to_end(&mut bytes)
        .map_err(|e| fetch_err(e.to_string()))?;
    Ok(bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use flate2::write::GzEncoder;
    use flate2::Compression;
    use std::io::Write;

    #[test]
    fn verify_accepts_matching_payload_and_rejects_others() {
        let dir = tempfile::tempdir().unwrap();
        let payload = b"idx payload bytes";
        let mut hasher = Sha256::new();
        hasher.update(payload);
        let expected = format!("{:x}", hasher.finalize());

        // gzipped form verifies against the payload digest
        let mut enc = GzEncoder::new(Vec::new(), Compression::default());
        enc.write_all(payload).unwrap();
        let gz = enc.finish().unwrap();
        let gz_path = dir.path().join("f.gz");
        std::fs::write(&gz_path, &gz).unwrap();
        verify_file(&gz_path, &expected).unwrap();

        // plain form verifies directly
        let plain_path = dir.path().join("f");
        std::fs::write(&plain_path, payload).unwrap();
        verify_file(&plain_path, &expected).unwrap();

        // corruption is caught
        std::fs::write(&plain_path, b"tampered").unwrap();
        assert!(matches!(
            verify_file(&plain_path, &expected).unwrap_err(),
            HarnessError::ChecksumMismatch { .. }
        ));
    }
}
