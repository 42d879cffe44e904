// SPDX-License-Identifier: Apache-2.0

//! SHA-256 content digests rendered as lowercase hex.

use sha2::{Digest, Sha256};

pub fn sha256_hex(bytes: impl AsRef<[u8]>) -> String {
    hex::encode(Sha256::digest(bytes.as_ref()))
}

/// Incremental digest over a sequence of byte strings, each terminated by `\n`.
#[derive(Default)]
pub struct LineDigest(Sha256);

impl LineDigest {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn line(&mut self, bytes: impl AsRef<[u8]>) {
        self.0.update(bytes.as_ref());
        self.0.update(b"\n");
    }

    pub fn finish(self) -> String {
        hex::encode(self.0.finalize())
    }
}
