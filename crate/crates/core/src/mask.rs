//! Defect classes and per-class binary masks.

use std::fmt;
use std::path::Path;

use image::GrayImage;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Annotated object classes. Codes are stable and used in checkpoints and
/// label maps (label = code + 1, label 0 is background).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassId {
    WindowFrame = 0,
    Dent = 1,
    Bend = 2,
    Scratch = 3,
}

impl ClassId {
    pub const ALL: [ClassId; 4] = [ClassId::WindowFrame, ClassId::Dent, ClassId::Bend, ClassId::Scratch];

    /// Highest priority first: a pixel claimed by several classes keeps the
    /// first one in this list.
    pub const PRIORITY: [ClassId; 4] = [ClassId::Scratch, ClassId::Dent, ClassId::Bend, ClassId::WindowFrame];

    pub fn code(self) -> usize {
        self as usize
    }

    pub fn from_code(code: usize) -> Option<Self> {
        Self::ALL.get(code).copied()
    }

    /// Directory / category name.
    pub fn slug(self) -> &'static str {
        match self {
            ClassId::WindowFrame => "window_frame",
            ClassId::Dent => "dent",
            ClassId::Bend => "bend",
            ClassId::Scratch => "scratch",
        }
    }

    /// Short key used in report tables.
    pub fn key(self) -> &'static str {
        match self {
            ClassId::WindowFrame => "wframe",
            other => other.slug(),
        }
    }

    /// Case- and punctuation-insensitive category lookup
    /// ("Window Frame", "window_frame", "wframe", "Dent", ...).
    pub fn from_name(name: &str) -> Option<Self> {
        let norm: String = name.chars().filter(|c| c.is_alphanumeric()).flat_map(char::to_lowercase).collect();
        match norm.as_str() {
            "windowframe" | "wframe" | "frame" => Some(ClassId::WindowFrame),
            "dent" | "dents" => Some(ClassId::Dent),
            "bend" | "bends" => Some(ClassId::Bend),
            "scratch" | "scratches" => Some(ClassId::Scratch),
            _ => None,
        }
    }
}

impl fmt::Display for ClassId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.slug())
    }
}

/// A `width x height` grid of booleans, row-major.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BinaryPlane {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl BinaryPlane {
    pub fn empty(width: usize, height: usize) -> Self {
        Self { width, height, bits: vec![false; width * height] }
    }

    pub fn from_bits(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != width * height {
            return Err(Error::DimensionMismatch {
                expected: format!("{} entries", width * height),
                actual: format!("{}", bits.len()),
            });
        }
        Ok(Self { width, height, bits })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut bits = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                bits.push(f(x, y));
            }
        }
        Self { width, height, bits }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: bool) {
        self.bits[y * self.width + x] = value;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|b| *b)
    }

    pub fn union_with(&mut self, other: &BinaryPlane) {
        for (a, b) in self.bits.iter_mut().zip(&other.bits) {
            *a |= *b;
        }
    }

    pub fn load_png(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if !path.exists() {
            return Err(Error::MissingImageFile(path.to_path_buf()));
        }
        let gray = image::open(path)?.to_luma8();
        let bits = gray.as_raw().iter().map(|&v| v > 127).collect();
        Self::from_bits(gray.width() as usize, gray.height() as usize, bits)
    }

    /// Single-channel PNG, 255 for set pixels and 0 elsewhere.
    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let raw = self.bits.iter().map(|&b| if b { 255u8 } else { 0 }).collect();
        let gray = GrayImage::from_raw(self.width as u32, self.height as u32, raw).expect("length invariant");
        gray.save(path.as_ref())?;
        Ok(())
    }
}

/// One binary plane per [`ClassId`], all the same size.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MaskSet {
    width: usize,
    height: usize,
    planes: [BinaryPlane; 4],
}

impl MaskSet {
    pub fn empty(width: usize, height: usize) -> Self {
        Self { width, height, planes: std::array::from_fn(|_| BinaryPlane::empty(width, height)) }
    }

    pub fn from_planes(planes: [BinaryPlane; 4]) -> Result<Self> {
        let (width, height) = (planes[0].width, planes[0].height);
        if let Some(p) = planes.iter().find(|p| p.width != width || p.height != height) {
            return Err(Error::DimensionMismatch {
                expected: format!("{width}x{height}"),
                actual: format!("{}x{}", p.width, p.height),
            });
        }
        Ok(Self { width, height, planes })
    }

    /// Builds masks from a label map (0 = background, `code + 1` = class).
    pub fn from_labels(width: usize, height: usize, labels: &[u8]) -> Result<Self> {
        if labels.len() != width * height {
            return Err(Error::DimensionMismatch {
                expected: format!("{} labels", width * height),
                actual: labels.len().to_string(),
            });
        }
        let mut set = Self::empty(width, height);
        for (i, &l) in labels.iter().enumerate() {
            if l > 0 {
                let class = ClassId::from_code(l as usize - 1)
                    .ok_or_else(|| Error::InvalidParameter(format!("label {l} has no class")))?;
                set.planes[class.code()].bits[i] = true;
            }
        }
        Ok(set)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn plane(&self, class: ClassId) -> &BinaryPlane {
        &self.planes[class.code()]
    }

    pub fn plane_mut(&mut self, class: ClassId) -> &mut BinaryPlane {
        &mut self.planes[class.code()]
    }

    /// Per-pixel label: 0 for background, otherwise the highest-priority
    /// class code + 1.
    pub fn labels(&self) -> Vec<u8> {
        (0..self.width * self.height)
            .map(|i| {
                ClassId::PRIORITY
                    .iter()
                    .find(|c| self.planes[c.code()].bits[i])
                    .map_or(0, |c| c.code() as u8 + 1)
            })
            .collect()
    }

    /// Clears lower-priority claims so the planes become pairwise disjoint.
    pub fn resolve_priority(&mut self) {
        let labels = self.labels();
        for class in ClassId::ALL {
            let want = class.code() as u8 + 1;
            for (bit, &l) in self.planes[class.code()].bits.iter_mut().zip(&labels) {
                *bit = l == want;
            }
        }
    }

    pub fn is_disjoint(&self) -> bool {
        (0..self.width * self.height).all(|i| self.planes.iter().filter(|p| p.bits[i]).count() <= 1)
    }

    /// Resamples with nearest-neighbour lookup (pixel centres).
    pub fn resize_nearest(&self, out_w: usize, out_h: usize) -> Self {
        if out_w == self.width && out_h == self.height {
            return self.clone();
        }
        let planes = std::array::from_fn(|k| {
            let src = &self.planes[k];
            BinaryPlane::from_fn(out_w, out_h, |x, y| {
                let sx = ((x as f64 + 0.5) * self.width as f64 / out_w as f64) as usize;
                let sy = ((y as f64 + 0.5) * self.height as f64 / out_h as f64) as usize;
                src.get(sx.min(self.width - 1), sy.min(self.height - 1))
            })
        });
        Self { width: out_w, height: out_h, planes }
    }
}
