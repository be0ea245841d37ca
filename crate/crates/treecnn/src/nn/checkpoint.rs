//! Binary weight checkpoints. One file per network:
//!
//! ```text
//! magic   8 bytes  b"TCNNCKPT"
//! version u32 LE   (currently 1)
//! hash    32 bytes SHA-256 of the spec's canonical JSON text
//! count   u64 LE   total f32 values that follow
//! data    raw little-endian f32, per layer in spec order
//!         (conv: kernel, bias; fc: weight, bias;
//!          batch-norm: gamma, beta, running mean, running variance)
//! ```

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use rand::SeedableRng;
use sha2::{Digest, Sha256};

use super::network::Network;
use super::NetworkSpec;
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"TCNNCKPT";
const VERSION: u32 = 1;

/// SHA-256 of the spec's canonical JSON; the identity a checkpoint is bound to.
pub fn spec_hash(spec: &NetworkSpec) -> [u8; 32] {
    let json = serde_json::to_string(spec).expect("spec serialization cannot fail");
    let mut hasher = Sha256::new();
    hasher.update(json.as_bytes());
    hasher.finalize().into()
}

pub fn save_checkpoint(net: &Network, path: &Path) -> Result<()> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&spec_hash(net.spec()));
    let count: u64 = net
        .params
        .iter()
        .map(|p| p.tensors().iter().map(|t| t.len() as u64).sum::<u64>())
        .sum();
    out.extend_from_slice(&count.to_le_bytes());
    for params in &net.params {
        for tensor in params.tensors() {
            for v in tensor.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    let mut file = fs::File::create(path)?;
    file.write_all(&out)?;
    Ok(())
}

/// Load weights saved for exactly this architecture into a fresh network.
pub fn load_checkpoint(spec: &NetworkSpec, path: &Path) -> Result<Network> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    let fail = |reason: &str| Error::Checkpoint(format!("{}: {reason}", path.display()));

    if bytes.len() < 8 + 4 + 32 + 8 {
        return Err(fail("file too short"));
    }
    if &bytes[..8] != MAGIC {
        return Err(fail("bad magic"));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != VERSION {
        return Err(fail(&format!("unsupported version {version}")));
    }
    if bytes[12..44] != spec_hash(spec) {
        return Err(fail("spec hash mismatch: weights belong to a different architecture"));
    }
    let count = u64::from_le_bytes(bytes[44..52].try_into().unwrap()) as usize;
    let payload = &bytes[52..];
    if payload.len() != count * 4 {
        return Err(fail("truncated weight payload"));
    }

    // Zero-seeded scaffold; every value is overwritten below.
    let mut zero = rand_chacha::ChaCha8Rng::from_seed([0; 32]);
    let mut net = Network::new(spec.clone(), &mut zero)?;
    let mut offset = 0usize;
    for params in net.params.iter_mut() {
        for tensor in params.tensors_mut() {
            for v in tensor.data_mut() {
                if offset + 4 > payload.len() {
                    return Err(Error::Checkpoint(format!(
                        "{}: weight payload shorter than spec requires",
                        path.display()
                    )));
                }
                *v = f32::from_le_bytes(payload[offset..offset + 4].try_into().unwrap());
                offset += 4;
            }
        }
    }
    if offset != payload.len() {
        return Err(fail("weight payload longer than spec requires"));
    }
    Ok(net)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{DataShape, LayerSpec, Mode, TrainingSchedule, TrainingSet};
    use crate::rng::substream;
    use crate::tensor::Tensor;

    fn small_spec(outputs: usize) -> NetworkSpec {
        NetworkSpec::new(
            DataShape::Image {
                channels: 1,
                height: 4,
                width: 4,
            },
            vec![
                LayerSpec::Conv {
                    block: "CONV-1".into(),
                    in_channels: 1,
                    out_channels: 2,
                    kernel: 3,
                    stride: 1,
                    padding: Default::default(),
                },
                LayerSpec::BatchNorm,
                LayerSpec::Relu,
                LayerSpec::FullyConnected {
                    block: "FC".into(),
                    in_features: 32,
                    out_features: outputs,
                },
            ],
        )
        .unwrap()
    }

    #[test]
    fn checkpoint_round_trips_bit_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.bin");
        let spec = small_spec(3);
        let mut rng = substream(11, "init");
        let mut net = Network::new(spec.clone(), &mut rng).unwrap();
        // Perturb running stats so they are exercised by the round trip.
        let data = TrainingSet {
            images: vec![
                Tensor::filled(&[1, 4, 4], 0.5),
                Tensor::filled(&[1, 4, 4], -0.25),
            ],
            labels: vec![0, 2],
        };
        let mut schedule = TrainingSchedule::desk_scale(2, 5);
        schedule.batch_size = 2;
        crate::nn::train_network(&mut net, &data, &schedule).unwrap();
        assert_eq!(net.mode(), Mode::Eval);

        save_checkpoint(&net, &path).unwrap();
        let restored = load_checkpoint(&spec, &path).unwrap();
        assert_eq!(restored.weights_checksum(), net.weights_checksum());
    }

    #[test]
    fn checkpoint_rejects_wrong_spec() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.bin");
        let mut rng = substream(11, "init");
        let net = Network::new(small_spec(3), &mut rng).unwrap();
        save_checkpoint(&net, &path).unwrap();
        let err = load_checkpoint(&small_spec(4), &path);
        assert!(matches!(err, Err(Error::Checkpoint(_))));
    }

    #[test]
    fn checkpoint_rejects_bad_magic() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.bin");
        std::fs::write(&path, b"NOTHINGS________________________________________________").unwrap();
        assert!(matches!(
            load_checkpoint(&small_spec(3), &path),
            Err(Error::Checkpoint(_))
        ));
    }
}
