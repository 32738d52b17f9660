use crate::image::ImageBuffer;

/// Channels-last feature map, `data[(y * w + x) * c + ch]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub h: usize,
    pub w: usize,
    pub c: usize,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(h: usize, w: usize, c: usize) -> Self {
        Self { h, w, c, data: vec![0.0; h * w * c] }
    }

    /// Network input: every RGB channel standardized over the image to
    /// zero mean and unit variance (variance floored at 1e-4, so flat
    /// channels stay near zero instead of blowing up).
    pub fn from_image(image: &ImageBuffer) -> Self {
        let n = image.pixel_count() as f64;
        let mut data = image.data().to_vec();
        for c in 0..3 {
            let mean = data.iter().skip(c).step_by(3).sum::<f64>() / n;
            let var = data.iter().skip(c).step_by(3).map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            let inv = 1.0 / var.max(1e-4).sqrt();
            data.iter_mut().skip(c).step_by(3).for_each(|v| *v = (*v - mean) * inv);
        }
        Self { h: image.height(), w: image.width(), c: 3, data }
    }

    pub fn pixels(&self) -> usize {
        self.h * self.w
    }

    #[inline]
    pub fn at(&self, y: usize, x: usize) -> &[f64] {
        let i = (y * self.w + x) * self.c;
        &self.data[i..i + self.c]
    }

    pub fn same_shape(&self, other: &Tensor) -> bool {
        self.h == other.h && self.w == other.w && self.c == other.c
    }
}
