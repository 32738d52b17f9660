//! Dataset ingestion, mask rasterization, splitting and the synthetic
//! window-frame defect generator.

mod coco;
mod raster;
mod split;
mod synth;

use std::collections::{BTreeMap, HashSet};

pub use coco::{load_coco, load_dataset_dir, save_dataset_dir, ANNOTATIONS_FILE};
pub use raster::{rasterize, rasterize_classes, row_run_polygons};
pub use split::{split, SplitCounts};
pub use synth::{generate_synthetic, DefectRates, SynthSpec};

use crate::error::{Error, Result};
use crate::image::ImageBuffer;
use crate::mask::{ClassId, MaskSet};

#[derive(Debug, Clone, PartialEq)]
pub struct DataItem {
    pub id: String,
    pub image: ImageBuffer,
    pub masks: MaskSet,
}

/// Images with their ground truth. Ids are unique and every mask set
/// matches its image's dimensions.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    items: Vec<DataItem>,
    /// Category name as written in the source -> class.
    classes: BTreeMap<String, ClassId>,
}

impl Dataset {
    pub fn new(items: Vec<DataItem>, classes: BTreeMap<String, ClassId>) -> Result<Self> {
        let mut seen = HashSet::new();
        for item in &items {
            if !seen.insert(item.id.as_str()) {
                return Err(Error::InvalidParameter(format!("duplicate image id {:?}", item.id)));
            }
            if item.masks.width() != item.image.width() || item.masks.height() != item.image.height() {
                return Err(Error::DimensionMismatch {
                    expected: item.image.dims_string(),
                    actual: format!("{}x{}", item.masks.width(), item.masks.height()),
                });
            }
        }
        Ok(Self { items, classes })
    }

    /// Class table using each class's slug as its category name.
    pub fn default_classes() -> BTreeMap<String, ClassId> {
        ClassId::ALL.iter().map(|c| (c.slug().to_string(), *c)).collect()
    }

    pub fn items(&self) -> &[DataItem] {
        &self.items
    }

    pub fn into_items(self) -> Vec<DataItem> {
        self.items
    }

    pub fn classes(&self) -> &BTreeMap<String, ClassId> {
        &self.classes
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&DataItem> {
        self.items.iter().find(|i| i.id == id)
    }
}
