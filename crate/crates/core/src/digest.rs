//! SHA-256 helpers used for bundle, report and fixture digests.

use std::io;

use sha2::{Digest, Sha256};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// `io::Write` sink that feeds a running SHA-256.
#[derive(Default)]
pub struct HashWriter {
    hasher: Sha256,
    written: u64,
}

impl HashWriter {
    pub fn new() -> Self {
        HashWriter::default()
    }

    pub fn bytes_written(&self) -> u64 {
        self.written
    }

    pub fn finish_hex(self) -> String {
        hex::encode(self.hasher.finalize())
    }
}

impl io::Write for HashWriter {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        self.hasher.update(buf);
        self.written += buf.len() as u64;
        Ok(buf.len())
    }

    fn flush(&mut self) -> io::Result<()> {
        Ok(())
    }
}

/// Stable 64-bit mixer (splitmix64 finalizer) used for partition hashing.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
