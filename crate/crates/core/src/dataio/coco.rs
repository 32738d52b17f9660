//! The polygon subset of the COCO annotation format.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::raster::{rasterize_classes, row_run_polygons};
use super::{DataItem, Dataset};
use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::image::ImageBuffer;
use crate::mask::ClassId;

pub const ANNOTATIONS_FILE: &str = "annotations.json";

#[derive(Debug, Serialize, Deserialize)]
struct CocoFile {
    images: Vec<CocoImage>,
    annotations: Vec<CocoAnnotation>,
    categories: Vec<CocoCategory>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CocoImage {
    id: u64,
    file_name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    width: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    height: Option<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CocoAnnotation {
    #[serde(default)]
    id: u64,
    image_id: u64,
    category_id: u64,
    segmentation: Value,
}

#[derive(Debug, Serialize, Deserialize)]
struct CocoCategory {
    id: u64,
    name: String,
}

fn parse_polygons(seg: &Value, ann_id: u64) -> Result<Vec<Vec<Point>>> {
    let parse_err = |m: &str| Error::Parse(format!("annotation {ann_id}: {m}"));
    let rings = match seg {
        Value::Array(rings) => rings,
        Value::Object(_) => return Err(parse_err("RLE segmentation is not supported, use polygons")),
        _ => return Err(parse_err("segmentation must be a list of polygons")),
    };
    rings
        .iter()
        .map(|ring| {
            let coords: Vec<f64> = ring
                .as_array()
                .ok_or_else(|| parse_err("polygon must be a flat list of coordinates"))?
                .iter()
                .map(|v| v.as_f64().ok_or_else(|| parse_err("non-numeric coordinate")))
                .collect::<Result<_>>()?;
            if coords.len() % 2 != 0 {
                return Err(parse_err("odd number of polygon coordinates"));
            }
            Ok(coords.chunks_exact(2).map(|c| [c[0], c[1]]).collect())
        })
        .collect()
}

/// Reads a COCO annotation file and the PNG images it references.
///
/// Image ids are the file stems. Every category must name one of the four
/// classes (case- and punctuation-insensitive); anything else is rejected
/// even if no annotation uses it.
pub fn load_coco(annotation_file: impl AsRef<Path>, image_dir: impl AsRef<Path>) -> Result<Dataset> {
    let annotation_file = annotation_file.as_ref();
    let image_dir = image_dir.as_ref();
    let text = std::fs::read_to_string(annotation_file).map_err(|e| Error::io(annotation_file, e))?;
    let coco: CocoFile = serde_json::from_str(&text).map_err(|e| Error::Parse(e.to_string()))?;

    let mut classes = BTreeMap::new();
    let mut by_category = HashMap::new();
    for cat in &coco.categories {
        let class = ClassId::from_name(&cat.name).ok_or_else(|| Error::UnknownCategory(cat.name.clone()))?;
        classes.insert(cat.name.clone(), class);
        by_category.insert(cat.id, class);
    }

    let mut shapes: HashMap<u64, Vec<(ClassId, Vec<Vec<Point>>)>> = HashMap::new();
    for ann in &coco.annotations {
        let class = *by_category
            .get(&ann.category_id)
            .ok_or_else(|| Error::Parse(format!("annotation {} references unknown category id {}", ann.id, ann.category_id)))?;
        if !coco.images.iter().any(|i| i.id == ann.image_id) {
            return Err(Error::Parse(format!("annotation {} references unknown image id {}", ann.id, ann.image_id)));
        }
        shapes.entry(ann.image_id).or_default().push((class, parse_polygons(&ann.segmentation, ann.id)?));
    }

    let items = coco
        .images
        .par_iter()
        .map(|img| {
            let path = image_dir.join(&img.file_name);
            if !path.is_file() {
                return Err(Error::MissingImageFile(path));
            }
            let image = ImageBuffer::load_png(&path)?;
            if img.width.is_some_and(|w| w != image.width()) || img.height.is_some_and(|h| h != image.height()) {
                return Err(Error::DimensionMismatch {
                    expected: format!("{}x{}", img.width.unwrap_or(image.width()), img.height.unwrap_or(image.height())),
                    actual: image.dims_string(),
                });
            }
            let masks = rasterize_classes(shapes.get(&img.id).map_or(&[][..], Vec::as_slice), image.width(), image.height())?;
            let id = Path::new(&img.file_name).file_stem().map_or_else(|| img.file_name.clone(), |s| s.to_string_lossy().into_owned());
            Ok(DataItem { id, image, masks })
        })
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(items, classes)
}

/// `load_coco(dir/annotations.json, dir/images)`.
pub fn load_dataset_dir(dir: impl AsRef<Path>) -> Result<Dataset> {
    let dir = dir.as_ref();
    load_coco(dir.join(ANNOTATIONS_FILE), dir.join("images"))
}

/// Writes `images/<id>.png`, `masks/<class>/<id>.png` and an
/// `annotations.json` whose row-run polygons rasterize back to the masks.
pub fn save_dataset_dir(dataset: &Dataset, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    let mkdir = |p: &Path| std::fs::create_dir_all(p).map_err(|e| Error::io(p, e));
    mkdir(&dir.join("images"))?;
    for class in ClassId::ALL {
        mkdir(&dir.join("masks").join(class.slug()))?;
    }
    dataset.items().par_iter().try_for_each(|item| -> Result<()> {
        item.image.save_png(dir.join("images").join(format!("{}.png", item.id)))?;
        for class in ClassId::ALL {
            item.masks.plane(class).save_png(dir.join("masks").join(class.slug()).join(format!("{}.png", item.id)))?;
        }
        Ok(())
    })?;

    let mut coco = CocoFile {
        images: Vec::new(),
        annotations: Vec::new(),
        categories: ClassId::ALL.iter().map(|c| CocoCategory { id: c.code() as u64 + 1, name: c.slug().into() }).collect(),
    };
    for (k, item) in dataset.items().iter().enumerate() {
        let image_id = k as u64 + 1;
        coco.images.push(CocoImage {
            id: image_id,
            file_name: format!("{}.png", item.id),
            width: Some(item.image.width()),
            height: Some(item.image.height()),
        });
        for class in ClassId::ALL {
            let polygons = row_run_polygons(item.masks.plane(class));
            if polygons.is_empty() {
                continue;
            }
            let flat: Vec<Value> =
                polygons.iter().map(|p| p.iter().flatten().map(|&v| Value::from(v as u64)).collect()).collect();
            coco.annotations.push(CocoAnnotation {
                id: coco.annotations.len() as u64 + 1,
                image_id,
                category_id: class.code() as u64 + 1,
                segmentation: Value::Array(flat),
            });
        }
    }
    let path = dir.join(ANNOTATIONS_FILE);
    std::fs::write(&path, serde_json::to_vec(&coco)?).map_err(|e| Error::io(&path, e))
}
