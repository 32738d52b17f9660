//! Content-addressed store of preprocessed images.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::image::ImageBuffer;
use crate::strategy::{apply_strategy, Strategy};

/// `sha256` over a domain tag, the image id, the strategy's canonical
/// encoding (stages and parameters) and the image samples, each
/// length-prefixed. The id is included because an external shadow-removal
/// backend looks images up by id.
pub fn cache_key(image: &ImageBuffer, image_id: &str, strategy: &Strategy) -> String {
    let mut h = Sha256::new();
    h.update(b"framescope-preprocess-v1");
    for part in [image_id.as_bytes(), &strategy.canonical_encoding(), &image.sample_bytes()] {
        h.update((part.len() as u64).to_le_bytes());
        h.update(part);
    }
    hex::encode(h.finalize())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CacheStats {
    pub hits: usize,
    pub misses: usize,
}

/// Preprocessing memo on disk. With no directory it just computes.
///
/// Entries are written to a temporary file and renamed into place, so
/// concurrent workers never observe partial files; an unreadable entry is
/// recomputed and overwritten.
#[derive(Debug, Default)]
pub struct PreprocessCache {
    dir: Option<PathBuf>,
    hits: AtomicUsize,
    misses: AtomicUsize,
}

impl PreprocessCache {
    pub fn new(dir: Option<PathBuf>) -> Self {
        Self { dir, ..Default::default() }
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    pub fn stats(&self) -> CacheStats {
        CacheStats { hits: self.hits.load(Ordering::Relaxed), misses: self.misses.load(Ordering::Relaxed) }
    }

    fn entry_path(dir: &Path, key: &str) -> PathBuf {
        dir.join(&key[..2]).join(format!("{key}.f64"))
    }

    pub fn get_or_compute(&self, image: &ImageBuffer, image_id: &str, strategy: &Strategy) -> Result<ImageBuffer> {
        if strategy.is_baseline() {
            return Ok(image.clone());
        }
        let Some(dir) = &self.dir else {
            self.misses.fetch_add(1, Ordering::Relaxed);
            return apply_strategy(strategy, image, image_id);
        };
        let key = cache_key(image, image_id, strategy);
        let path = Self::entry_path(dir, &key);
        if let Ok(bytes) = std::fs::read(&path) {
            if let Ok(img) = ImageBuffer::from_sample_bytes(&bytes) {
                self.hits.fetch_add(1, Ordering::Relaxed);
                return Ok(img);
            }
        }
        self.misses.fetch_add(1, Ordering::Relaxed);
        let out = apply_strategy(strategy, image, image_id)?;
        let parent = path.parent().expect("entry has a parent");
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        let tmp = parent.join(format!(".{key}.{}.{:?}.tmp", std::process::id(), std::thread::current().id()));
        std::fs::write(&tmp, out.sample_bytes()).map_err(|e| Error::io(&tmp, e))?;
        std::fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))?;
        Ok(out)
    }
}
