//! Dataset ingestion, preprocessing, augmentation, and the incremental class
//! schedule machinery.

mod augment;
mod cifar;
mod idx;
mod preprocess;
mod schedule;
mod synth;

pub use augment::augment_flip;
pub use cifar::{load_cifar, load_cifar_files, save_cifar, CifarVariant};
pub use idx::{load_idx, read_idx, write_idx, IdxArray};
pub use preprocess::{fit_zca, gcn_image, Preprocessor, ZcaTransform};
pub use schedule::{cifar100_class_names, paper_cifar100_schedule, ClassSchedule};
pub use synth::{synth_class_names, synth_dataset, SynthConfig};

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::tensor::Tensor;
use crate::tree::ClassLabel;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitTag {
    Train,
    Test,
}

/// One labeled image. Pixels are `[C, H, W]` f32; loaders keep raw byte
/// values (0..=255) until preprocessing rescales them.
#[derive(Debug, Clone)]
pub struct ImageRecord {
    pub pixels: Tensor,
    pub class: ClassLabel,
}

/// An immutable collection of records with a per-class index for sampling.
#[derive(Debug, Clone)]
pub struct DatasetSplit {
    records: Vec<ImageRecord>,
    tag: SplitTag,
    by_class: BTreeMap<ClassLabel, Vec<usize>>,
}

impl DatasetSplit {
    pub fn new(records: Vec<ImageRecord>, tag: SplitTag) -> Result<Self> {
        if let Some(first) = records.first() {
            for record in &records {
                if record.pixels.shape() != first.pixels.shape() {
                    return Err(Error::ShapeMismatch {
                        layer: "dataset".into(),
                        expected: format!("{:?}", first.pixels.shape()),
                        got: format!("{:?}", record.pixels.shape()),
                    });
                }
            }
        }
        let mut by_class: BTreeMap<ClassLabel, Vec<usize>> = BTreeMap::new();
        for (i, record) in records.iter().enumerate() {
            by_class.entry(record.class).or_default().push(i);
        }
        Ok(DatasetSplit {
            records,
            tag,
            by_class,
        })
    }

    pub fn tag(&self) -> SplitTag {
        self.tag
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[ImageRecord] {
        &self.records
    }

    pub fn image_shape(&self) -> Option<&[usize]> {
        self.records.first().map(|r| r.pixels.shape())
    }

    pub fn classes(&self) -> impl Iterator<Item = ClassLabel> + '_ {
        self.by_class.keys().copied()
    }

    pub fn class_count(&self, class: ClassLabel) -> usize {
        self.by_class.get(&class).map_or(0, Vec::len)
    }

    /// Record indices of one class, in file order.
    pub fn indices_of(&self, class: ClassLabel) -> &[usize] {
        self.by_class.get(&class).map_or(&[], Vec::as_slice)
    }

    /// New split containing only the given classes (record order preserved).
    pub fn filter_classes(&self, keep: &[ClassLabel]) -> DatasetSplit {
        let records = self
            .records
            .iter()
            .filter(|r| keep.contains(&r.class))
            .cloned()
            .collect();
        DatasetSplit::new(records, self.tag).expect("filtered split keeps shapes")
    }

    pub(crate) fn map_pixels(&mut self, f: impl Fn(&mut Tensor)) {
        for record in &mut self.records {
            f(&mut record.pixels);
        }
    }
}

/// Cumulative data through stage `t` of the schedule, plus the data of the
/// classes newly introduced at stage `t`.
pub fn stage_slices(
    split: &DatasetSplit,
    schedule: &ClassSchedule,
    stage: usize,
) -> Result<(DatasetSplit, DatasetSplit)> {
    let groups = schedule.groups();
    if stage >= groups.len() {
        return Err(Error::Config(format!(
            "stage {stage} out of range; schedule has {} groups",
            groups.len()
        )));
    }
    let cumulative: Vec<ClassLabel> = groups[..=stage].iter().flatten().copied().collect();
    let new: Vec<ClassLabel> = groups[stage].clone();
    Ok((split.filter_classes(&cumulative), split.filter_classes(&new)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(class: u32, value: f32) -> ImageRecord {
        ImageRecord {
            pixels: Tensor::filled(&[1, 2, 2], value),
            class: ClassLabel(class),
        }
    }

    fn split() -> DatasetSplit {
        DatasetSplit::new(
            vec![record(0, 1.0), record(1, 2.0), record(0, 3.0), record(2, 4.0)],
            SplitTag::Train,
        )
        .unwrap()
    }

    #[test]
    fn class_index_tracks_records() {
        let s = split();
        assert_eq!(s.class_count(ClassLabel(0)), 2);
        assert_eq!(s.indices_of(ClassLabel(0)), &[0, 2]);
        assert_eq!(s.classes().count(), 3);
    }

    #[test]
    fn filtering_keeps_only_requested_classes() {
        let s = split().filter_classes(&[ClassLabel(0)]);
        assert_eq!(s.len(), 2);
        assert!(s.records().iter().all(|r| r.class == ClassLabel(0)));
    }

    #[test]
    fn stage_slices_are_cumulative() {
        let s = split();
        let schedule = ClassSchedule::new(vec![
            vec![ClassLabel(0)],
            vec![ClassLabel(1)],
            vec![ClassLabel(2)],
        ])
        .unwrap();
        let (cumulative, new) = stage_slices(&s, &schedule, 0).unwrap();
        assert_eq!(cumulative.len(), 2);
        assert_eq!(new.len(), 2);
        let (cumulative, new) = stage_slices(&s, &schedule, 1).unwrap();
        assert_eq!(cumulative.len(), 3);
        assert_eq!(new.len(), 1);
        let (cumulative, _) = stage_slices(&s, &schedule, 2).unwrap();
        assert_eq!(cumulative.len(), s.len());
        assert!(stage_slices(&s, &schedule, 3).is_err());
    }
}
