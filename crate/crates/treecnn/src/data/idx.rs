//! IDX file format (big-endian header, as used by the classic 28x28 digit
//! sets): magic `[0, 0, dtype, ndims]` followed by one u32 extent per
//! dimension, then the raw payload. Only the u8 dtype (0x08) is supported.

use std::fs;
use std::path::Path;

use super::{DatasetSplit, ImageRecord, SplitTag};
use crate::error::{Error, Result};
use crate::tensor::Tensor;
use crate::tree::ClassLabel;

const DTYPE_U8: u8 = 0x08;

/// A raw IDX array: extents plus the u8 payload.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxArray {
    pub dims: Vec<usize>,
    pub data: Vec<u8>,
}

pub fn read_idx(path: &Path) -> Result<IdxArray> {
    let bytes = fs::read(path)?;
    if bytes.len() < 4 {
        return Err(Error::data(path, "missing magic"));
    }
    if bytes[0] != 0 || bytes[1] != 0 {
        return Err(Error::data(path, "bad magic"));
    }
    if bytes[2] != DTYPE_U8 {
        return Err(Error::data(
            path,
            format!("unsupported dtype 0x{:02x}", bytes[2]),
        ));
    }
    let ndims = bytes[3] as usize;
    let header = 4 + 4 * ndims;
    if bytes.len() < header {
        return Err(Error::data(path, "truncated dimension header"));
    }
    let dims: Vec<usize> = (0..ndims)
        .map(|i| {
            u32::from_be_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap()) as usize
        })
        .collect();
    let expected: usize = dims.iter().product();
    let data = bytes[header..].to_vec();
    if data.len() != expected {
        return Err(Error::data(
            path,
            format!("payload has {} bytes, dims imply {expected}", data.len()),
        ));
    }
    Ok(IdxArray { dims, data })
}

pub fn write_idx(array: &IdxArray, path: &Path) -> Result<()> {
    let mut bytes = vec![0u8, 0, DTYPE_U8, array.dims.len() as u8];
    for &dim in &array.dims {
        bytes.extend_from_slice(&(dim as u32).to_be_bytes());
    }
    bytes.extend_from_slice(&array.data);
    fs::write(path, bytes)?;
    Ok(())
}

/// Load an images/labels IDX pair into a split. The images file must be
/// 3-dimensional `[N, H, W]` (grayscale; records become `[1, H, W]`), the
/// labels file 1-dimensional `[N]`.
pub fn load_idx(images_path: &Path, labels_path: &Path, tag: SplitTag) -> Result<DatasetSplit> {
    let images = read_idx(images_path)?;
    let labels = read_idx(labels_path)?;
    if images.dims.len() != 3 {
        return Err(Error::data(images_path, "images file must be [N, H, W]"));
    }
    if labels.dims.len() != 1 {
        return Err(Error::data(labels_path, "labels file must be [N]"));
    }
    let (n, h, w) = (images.dims[0], images.dims[1], images.dims[2]);
    if labels.dims[0] != n {
        return Err(Error::data(
            labels_path,
            format!("{} labels for {n} images", labels.dims[0]),
        ));
    }
    let mut records = Vec::with_capacity(n);
    for i in 0..n {
        let pixels: Vec<f32> = images.data[i * h * w..(i + 1) * h * w]
            .iter()
            .map(|&b| b as f32)
            .collect();
        records.push(ImageRecord {
            pixels: Tensor::from_vec(&[1, h, w], pixels)?,
            class: ClassLabel(labels.data[i] as u32),
        });
    }
    DatasetSplit::new(records, tag)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_only_file_gives_an_empty_split() {
        let dir = tempfile::tempdir().unwrap();
        let images = dir.path().join("i.idx3");
        let labels = dir.path().join("l.idx1");
        write_idx(
            &IdxArray {
                dims: vec![0, 4, 4],
                data: vec![],
            },
            &images,
        )
        .unwrap();
        write_idx(
            &IdxArray {
                dims: vec![0],
                data: vec![],
            },
            &labels,
        )
        .unwrap();
        let split = load_idx(&images, &labels, SplitTag::Train).unwrap();
        assert!(split.is_empty());
    }

    #[test]
    fn one_image_fixture_round_trips_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let images = dir.path().join("i.idx3");
        let labels = dir.path().join("l.idx1");
        let pixel_bytes: Vec<u8> = (0..16).map(|v| v * 16).collect();
        let image_array = IdxArray {
            dims: vec![1, 4, 4],
            data: pixel_bytes.clone(),
        };
        write_idx(&image_array, &images).unwrap();
        write_idx(
            &IdxArray {
                dims: vec![1],
                data: vec![3],
            },
            &labels,
        )
        .unwrap();

        let split = load_idx(&images, &labels, SplitTag::Test).unwrap();
        assert_eq!(split.records()[0].class, ClassLabel(3));
        assert_eq!(split.records()[0].pixels.at(&[0, 1, 1]), 80.0);

        // Reading back the written file reproduces the array bit-for-bit.
        assert_eq!(read_idx(&images).unwrap(), image_array);
    }

    #[test]
    fn wrong_magic_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.idx");
        std::fs::write(&path, [1u8, 2, 3, 4, 5]).unwrap();
        assert!(read_idx(&path).is_err());
    }

    #[test]
    fn truncated_payload_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("short.idx");
        let mut bytes = vec![0u8, 0, DTYPE_U8, 1];
        bytes.extend_from_slice(&5u32.to_be_bytes());
        bytes.extend_from_slice(&[1, 2, 3]);
        std::fs::write(&path, bytes).unwrap();
        assert!(read_idx(&path).is_err());
    }
}
