//! Forward and backward kernels. Convolutions are "same" padded, stride 1,
//! lowered to GEMM through an im2col buffer.

use super::tensor::Tensor;

/// Shape of one convolution; weights are stored `[(ky * k + kx) * cin + ci][co]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvShape {
    pub k: usize,
    pub cin: usize,
    pub cout: usize,
}

impl ConvShape {
    pub fn weight_len(&self) -> usize {
        self.k * self.k * self.cin * self.cout
    }

    pub fn fan_in(&self) -> usize {
        self.k * self.k * self.cin
    }
}

/// `C[m x n] = A[m x k] * B[k x n]` with arbitrary strides, overwriting C.
#[allow(clippy::too_many_arguments)]
fn gemm(m: usize, k: usize, n: usize, a: &[f64], rsa: usize, csa: usize, b: &[f64], rsb: usize, csb: usize, c: &mut [f64]) {
    debug_assert!(c.len() >= m * n);
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        c[..m * n].fill(0.0);
        return;
    }
    debug_assert!(a.len() > (m - 1) * rsa + (k - 1) * csa);
    debug_assert!(b.len() > (k - 1) * rsb + (n - 1) * csb);
    // SAFETY: the index bounds of A, B and C are checked above for every
    // (row, col) the kernel touches; C is row-major with stride n.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            0.0,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

fn im2col(x: &Tensor, k: usize) -> Vec<f64> {
    let r = (k / 2) as isize;
    let cols = k * k * x.c;
    let mut col = vec![0.0; x.pixels() * cols];
    for y in 0..x.h {
        for xx in 0..x.w {
            let row = &mut col[(y * x.w + xx) * cols..][..cols];
            for ky in 0..k {
                let iy = y as isize + ky as isize - r;
                if iy < 0 || iy >= x.h as isize {
                    continue;
                }
                for kx in 0..k {
                    let ix = xx as isize + kx as isize - r;
                    if ix < 0 || ix >= x.w as isize {
                        continue;
                    }
                    row[(ky * k + kx) * x.c..][..x.c].copy_from_slice(x.at(iy as usize, ix as usize));
                }
            }
        }
    }
    col
}

fn col2im(col: &[f64], h: usize, w: usize, c: usize, k: usize) -> Tensor {
    let r = (k / 2) as isize;
    let cols = k * k * c;
    let mut out = Tensor::zeros(h, w, c);
    for y in 0..h {
        for xx in 0..w {
            let row = &col[(y * w + xx) * cols..][..cols];
            for ky in 0..k {
                let iy = y as isize + ky as isize - r;
                if iy < 0 || iy >= h as isize {
                    continue;
                }
                for kx in 0..k {
                    let ix = xx as isize + kx as isize - r;
                    if ix < 0 || ix >= w as isize {
                        continue;
                    }
                    let dst = &mut out.data[(iy as usize * w + ix as usize) * c..][..c];
                    for (d, s) in dst.iter_mut().zip(&row[(ky * k + kx) * c..][..c]) {
                        *d += s;
                    }
                }
            }
        }
    }
    out
}

pub fn conv_forward(x: &Tensor, shape: ConvShape, weight: &[f64], bias: &[f64]) -> Tensor {
    assert_eq!(x.c, shape.cin, "conv input channels");
    let mut y = Tensor::zeros(x.h, x.w, shape.cout);
    let p = x.pixels();
    let kk = shape.fan_in();
    if shape.k == 1 {
        gemm(p, kk, shape.cout, &x.data, kk, 1, weight, shape.cout, 1, &mut y.data);
    } else {
        let col = im2col(x, shape.k);
        gemm(p, kk, shape.cout, &col, kk, 1, weight, shape.cout, 1, &mut y.data);
    }
    for px in y.data.chunks_exact_mut(shape.cout) {
        for (v, b) in px.iter_mut().zip(bias) {
            *v += b;
        }
    }
    y
}

/// Returns `dx` and accumulates into `dweight` / `dbias`.
pub fn conv_backward(
    x: &Tensor,
    shape: ConvShape,
    weight: &[f64],
    dy: &Tensor,
    dweight: &mut [f64],
    dbias: &mut [f64],
    need_dx: bool,
) -> Option<Tensor> {
    let p = x.pixels();
    let kk = shape.fan_in();
    let n = shape.cout;
    let col_owned;
    let col: &[f64] = if shape.k == 1 {
        &x.data
    } else {
        col_owned = im2col(x, shape.k);
        &col_owned
    };

    // dW = col^T * dy
    let mut dw = vec![0.0; kk * n];
    gemm(kk, p, n, col, 1, kk, &dy.data, n, 1, &mut dw);
    for (acc, v) in dweight.iter_mut().zip(&dw) {
        *acc += v;
    }
    for px in dy.data.chunks_exact(n) {
        for (acc, v) in dbias.iter_mut().zip(px) {
            *acc += v;
        }
    }
    if !need_dx {
        return None;
    }
    // dcol = dy * W^T
    let mut dcol = vec![0.0; p * kk];
    gemm(p, n, kk, &dy.data, n, 1, weight, 1, n, &mut dcol);
    if shape.k == 1 {
        Some(Tensor { h: x.h, w: x.w, c: x.c, data: dcol })
    } else {
        Some(col2im(&dcol, x.h, x.w, x.c, shape.k))
    }
}

pub fn relu(x: &Tensor) -> Tensor {
    Tensor { data: x.data.iter().map(|v| v.max(0.0)).collect(), ..*x }
}

/// Gradient through ReLU; the derivative at exactly 0 is taken as 0.
pub fn relu_backward(pre: &Tensor, dy: &Tensor) -> Tensor {
    let data = pre.data.iter().zip(&dy.data).map(|(p, d)| if *p > 0.0 { *d } else { 0.0 }).collect();
    Tensor { data, ..*dy }
}

pub fn add(a: &Tensor, b: &Tensor) -> Tensor {
    debug_assert!(a.same_shape(b));
    Tensor { data: a.data.iter().zip(&b.data).map(|(x, y)| x + y).collect(), ..*a }
}

pub fn add_assign(a: &mut Tensor, b: &Tensor) {
    debug_assert!(a.same_shape(b));
    a.data.iter_mut().zip(&b.data).for_each(|(x, y)| *x += y);
}

/// 2x2 average pooling; input sides must be even.
pub fn avg_pool2(x: &Tensor) -> Tensor {
    let (h, w) = (x.h / 2, x.w / 2);
    let mut out = Tensor::zeros(h, w, x.c);
    for y in 0..h {
        for xx in 0..w {
            let dst = &mut out.data[(y * w + xx) * x.c..][..x.c];
            for (dy, dx) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                for (d, s) in dst.iter_mut().zip(x.at(2 * y + dy, 2 * xx + dx)) {
                    *d += 0.25 * s;
                }
            }
        }
    }
    out
}

pub fn avg_pool2_backward(dy: &Tensor) -> Tensor {
    let (h, w) = (dy.h * 2, dy.w * 2);
    let mut dx = Tensor::zeros(h, w, dy.c);
    for y in 0..h {
        for x in 0..w {
            let src = dy.at(y / 2, x / 2);
            for (d, s) in dx.data[(y * w + x) * dy.c..][..dy.c].iter_mut().zip(src) {
                *d = 0.25 * s;
            }
        }
    }
    dx
}

/// Nearest-neighbour 2x upsampling.
pub fn upsample2(x: &Tensor) -> Tensor {
    let (h, w) = (x.h * 2, x.w * 2);
    let mut out = Tensor::zeros(h, w, x.c);
    for y in 0..h {
        for xx in 0..w {
            out.data[(y * w + xx) * x.c..][..x.c].copy_from_slice(x.at(y / 2, xx / 2));
        }
    }
    out
}

pub fn upsample2_backward(dy: &Tensor) -> Tensor {
    let (h, w) = (dy.h / 2, dy.w / 2);
    let mut dx = Tensor::zeros(h, w, dy.c);
    for y in 0..dy.h {
        for x in 0..dy.w {
            let dst = &mut dx.data[((y / 2) * w + x / 2) * dy.c..][..dy.c];
            for (d, s) in dst.iter_mut().zip(dy.at(y, x)) {
                *d += s;
            }
        }
    }
    dx
}

/// Channel concatenation `[a | b]`.
pub fn concat(a: &Tensor, b: &Tensor) -> Tensor {
    assert!(a.h == b.h && a.w == b.w, "concat spatial mismatch");
    let c = a.c + b.c;
    let mut data = Vec::with_capacity(a.pixels() * c);
    for (pa, pb) in a.data.chunks_exact(a.c).zip(b.data.chunks_exact(b.c)) {
        data.extend_from_slice(pa);
        data.extend_from_slice(pb);
    }
    Tensor { h: a.h, w: a.w, c, data }
}

/// Splits a gradient of `[a | b]` back into its parts.
pub fn split(d: &Tensor, ca: usize) -> (Tensor, Tensor) {
    let cb = d.c - ca;
    let mut a = Tensor::zeros(d.h, d.w, ca);
    let mut b = Tensor::zeros(d.h, d.w, cb);
    for (i, px) in d.data.chunks_exact(d.c).enumerate() {
        a.data[i * ca..][..ca].copy_from_slice(&px[..ca]);
        b.data[i * cb..][..cb].copy_from_slice(&px[ca..]);
    }
    (a, b)
}
