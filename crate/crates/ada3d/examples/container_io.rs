//! The binary tensor container: named entries, f64/f32 storage, payload
//! checksums, content fingerprints, and typed failures on corrupt input.
//!
//! Run with `cargo run --example container_io`.

use ada3d::container::{self, tensor_fingerprint, DType};
use ada3d::Tensor;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let weights = Tensor::uniform(&[4, 3, 3], -1.0, 1.0, &mut rng);
    let bias = Tensor::uniform(&[4], -0.1, 0.1, &mut rng);
    let entries = vec![("conv.w".to_string(), &weights), ("conv.b".to_string(), &bias)];

    // Write and read back through a file.
    let dir = tempfile::tempdir()?;
    let path = dir.path().join("weights.atns");
    container::write_tensors(&path, &entries, DType::F64)?;
    println!("wrote {} bytes", std::fs::metadata(&path)?.len());

    for (name, tensor) in container::read_tensors(&path)? {
        println!(
            "  entry {name:<8} {:?}  fingerprint {:016x}",
            tensor.shape(),
            tensor_fingerprint(&tensor)
        );
    }

    // f32 storage halves the payload at reduced precision.
    let bytes64 = container::to_bytes(&entries, DType::F64)?;
    let bytes32 = container::to_bytes(&entries, DType::F32)?;
    println!("payload: {} bytes as f64, {} bytes as f32", bytes64.len(), bytes32.len());
    let widened = container::from_bytes(&bytes32)?;
    let worst = widened[0]
        .1
        .data()
        .iter()
        .zip(weights.data())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max);
    println!("f32 roundtrip error ≤ {worst:.2e}");

    // Every corruption fails closed with a typed error.
    println!();
    println!("corruptions and their typed errors:");
    let mut flipped = bytes64.clone();
    flipped[20] ^= 0x01;
    println!("  payload bit flip → {}", container::from_bytes(&flipped).unwrap_err());
    let mut bad_magic = bytes64.clone();
    bad_magic[0] = b'X';
    println!("  wrong magic      → {}", container::from_bytes(&bad_magic).unwrap_err());
    let truncated = &bytes64[..bytes64.len() / 2];
    println!("  truncation       → {}", container::from_bytes(truncated).unwrap_err());
    Ok(())
}
