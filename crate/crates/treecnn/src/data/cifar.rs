//! CIFAR binary ingestion. Both variants store fixed-size records with the
//! pixel payload as 3072 bytes (3 channels x 32 x 32, channel-major):
//! CIFAR-10 records are `label + pixels`, CIFAR-100 records are
//! `coarse_label + fine_label + pixels` (the fine label is used).

use std::fs;
use std::path::Path;

use super::{DatasetSplit, ImageRecord, SplitTag};
use crate::error::{Error, Result};
use crate::tensor::Tensor;
use crate::tree::ClassLabel;

pub const CIFAR_PIXELS: usize = 3 * 32 * 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CifarVariant {
    Cifar10,
    Cifar100,
}

impl CifarVariant {
    fn label_bytes(&self) -> usize {
        match self {
            CifarVariant::Cifar10 => 1,
            CifarVariant::Cifar100 => 2,
        }
    }

    fn class_count(&self) -> u32 {
        match self {
            CifarVariant::Cifar10 => 10,
            CifarVariant::Cifar100 => 100,
        }
    }

    pub fn record_bytes(&self) -> usize {
        self.label_bytes() + CIFAR_PIXELS
    }
}

/// Parse one CIFAR binary file into records.
pub fn load_cifar(path: &Path, variant: CifarVariant, tag: SplitTag) -> Result<DatasetSplit> {
    let bytes = fs::read(path)?;
    let record_bytes = variant.record_bytes();
    if bytes.is_empty() {
        return Err(Error::data(path, "empty file"));
    }
    if bytes.len() % record_bytes != 0 {
        return Err(Error::data(
            path,
            format!(
                "{} bytes is not a whole number of {record_bytes}-byte records",
                bytes.len()
            ),
        ));
    }
    let mut records = Vec::with_capacity(bytes.len() / record_bytes);
    for (index, chunk) in bytes.chunks_exact(record_bytes).enumerate() {
        // CIFAR-100 carries (coarse, fine); the fine label is authoritative.
        let label = chunk[variant.label_bytes() - 1] as u32;
        if label >= variant.class_count() {
            return Err(Error::data(
                path,
                format!("record {index}: label {label} out of range"),
            ));
        }
        let pixels: Vec<f32> = chunk[variant.label_bytes()..]
            .iter()
            .map(|&b| b as f32)
            .collect();
        records.push(ImageRecord {
            pixels: Tensor::from_vec(&[3, 32, 32], pixels)?,
            class: ClassLabel(label),
        });
    }
    DatasetSplit::new(records, tag)
}

/// Concatenate several CIFAR binary files (e.g. the five train batches).
pub fn load_cifar_files(
    paths: &[impl AsRef<Path>],
    variant: CifarVariant,
    tag: SplitTag,
) -> Result<DatasetSplit> {
    let mut records = Vec::new();
    for path in paths {
        records.extend(load_cifar(path.as_ref(), variant, tag)?.records().to_vec());
    }
    DatasetSplit::new(records, tag)
}

/// Re-serialize a split in CIFAR binary layout. Pixel values must still be
/// raw bytes (loading then saving is byte-preserving). CIFAR-100 coarse
/// labels are not retained by the loader and are written as 0.
pub fn save_cifar(split: &DatasetSplit, path: &Path, variant: CifarVariant) -> Result<()> {
    let mut bytes = Vec::with_capacity(split.len() * variant.record_bytes());
    for record in split.records() {
        if variant == CifarVariant::Cifar100 {
            bytes.push(0);
        }
        let label = record.class.0;
        if label >= variant.class_count() {
            return Err(Error::data(
                path,
                format!("label {label} out of range for this variant"),
            ));
        }
        bytes.push(label as u8);
        if record.pixels.len() != CIFAR_PIXELS {
            return Err(Error::data(path, "records are not 3x32x32"));
        }
        for &v in record.pixels.data() {
            if !(0.0..=255.0).contains(&v) || v.fract() != 0.0 {
                return Err(Error::data(path, "pixels are no longer raw bytes"));
            }
            bytes.push(v as u8);
        }
    }
    fs::write(path, bytes)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture_bytes() -> Vec<u8> {
        // Two records with recognizable pixel ramps.
        let mut bytes = Vec::new();
        bytes.push(3u8);
        bytes.extend((0..CIFAR_PIXELS).map(|i| (i % 251) as u8));
        bytes.push(7u8);
        bytes.extend((0..CIFAR_PIXELS).map(|i| (i % 13) as u8));
        bytes
    }

    #[test]
    fn loads_exactly_the_records_present() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("batch.bin");
        std::fs::write(&path, fixture_bytes()).unwrap();
        let split = load_cifar(&path, CifarVariant::Cifar10, SplitTag::Train).unwrap();
        assert_eq!(split.len(), 2);
        assert_eq!(split.records()[0].class, ClassLabel(3));
        assert_eq!(split.records()[1].class, ClassLabel(7));
        assert_eq!(split.records()[0].pixels.at(&[0, 0, 5]), 5.0);
    }

    #[test]
    fn empty_file_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.bin");
        std::fs::write(&path, []).unwrap();
        assert!(load_cifar(&path, CifarVariant::Cifar10, SplitTag::Train).is_err());
    }

    #[test]
    fn truncated_file_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("short.bin");
        let mut bytes = fixture_bytes();
        bytes.pop();
        std::fs::write(&path, bytes).unwrap();
        assert!(load_cifar(&path, CifarVariant::Cifar10, SplitTag::Train).is_err());
    }

    #[test]
    fn out_of_range_label_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.bin");
        let mut bytes = fixture_bytes();
        bytes[0] = 10;
        std::fs::write(&path, bytes).unwrap();
        assert!(load_cifar(&path, CifarVariant::Cifar10, SplitTag::Train).is_err());
    }

    #[test]
    fn round_trip_is_byte_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("batch.bin");
        let original = fixture_bytes();
        std::fs::write(&path, &original).unwrap();
        let split = load_cifar(&path, CifarVariant::Cifar10, SplitTag::Train).unwrap();
        let out = dir.path().join("again.bin");
        save_cifar(&split, &out, CifarVariant::Cifar10).unwrap();
        assert_eq!(std::fs::read(&out).unwrap(), original);
    }

    #[test]
    fn cifar100_uses_the_fine_label() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c100.bin");
        let mut bytes = vec![5u8, 42u8];
        bytes.extend(std::iter::repeat_n(9u8, CIFAR_PIXELS));
        std::fs::write(&path, bytes).unwrap();
        let split = load_cifar(&path, CifarVariant::Cifar100, SplitTag::Test).unwrap();
        assert_eq!(split.records()[0].class, ClassLabel(42));
    }
}
