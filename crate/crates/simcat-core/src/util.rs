use ndarray::ArrayView1;
use sha2::{Digest, Sha256};

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    let out = h.finalize();
    let mut s = String::with_capacity(64);
    for b in out {
        s.push_str(&format!("{b:02x}"));
    }
    s
}

/// Checksum of a parameter vector: little-endian f64 bytes in order.
pub fn sha256_f64(xs: &ArrayView1<f64>) -> String {
    let mut bytes = Vec::with_capacity(xs.len() * 8);
    for &v in xs.iter() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    sha256_hex(&bytes)
}
