//! Frame-major dense algebra and its transposes.

#[derive(Clone, Debug, PartialEq)]
pub(crate) struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), rows * cols);
        Mat { rows, cols, data }
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn add_assign(&mut self, other: &Mat) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (y, x) in y.iter_mut().zip(x) {
        *y += a * x;
    }
}

/// `x W^T + b` with `W` stored `out x x.cols`.
pub(crate) fn dense(x: &Mat, w: &[f64], b: Option<&[f64]>, out: usize) -> Mat {
    debug_assert_eq!(w.len(), out * x.cols);
    let mut y = Mat::zeros(x.rows, out);
    for r in 0..x.rows {
        let xr = x.row(r);
        let yr = y.row_mut(r);
        for (o, v) in yr.iter_mut().enumerate() {
            *v = dot(&w[o * x.cols..(o + 1) * x.cols], xr) + b.map_or(0.0, |b| b[o]);
        }
    }
    y
}

/// Accumulates the weight gradient of [`dense`] and returns the input
/// gradient when asked.
pub(crate) fn dense_back(x: &Mat, w: &[f64], dy: &Mat, gw: &mut [f64], want_dx: bool) -> Option<Mat> {
    let (out, inp) = (dy.cols, x.cols);
    for r in 0..x.rows {
        let xr = x.row(r);
        for (o, &d) in dy.row(r).iter().enumerate() {
            if d != 0.0 {
                axpy(&mut gw[o * inp..(o + 1) * inp], d, xr);
            }
        }
    }
    want_dx.then(|| {
        let mut dx = Mat::zeros(x.rows, inp);
        for r in 0..x.rows {
            let dxr = &mut dx.data[r * inp..(r + 1) * inp];
            for (o, &d) in dy.row(r).iter().enumerate() {
                if d != 0.0 {
                    axpy(dxr, d, &w[o * inp..(o + 1) * inp]);
                }
            }
        }
        debug_assert_eq!(out * inp, w.len());
        dx
    })
}

pub(crate) fn bias_back(dy: &Mat, gb: &mut [f64]) {
    for r in 0..dy.rows {
        for (g, d) in gb.iter_mut().zip(dy.row(r)) {
            *g += d;
        }
    }
}

/// Three-tap dilated convolution along frames, zero padded to keep the
/// length. `w` holds the taps for offsets `-d, 0, +d`, each `C x C`.
pub(crate) fn conv3(u: &Mat, w: &[f64], b: &[f64], d: usize) -> Mat {
    let c = u.cols;
    let mut y = Mat::zeros(u.rows, c);
    for r in 0..u.rows {
        let yr = &mut y.data[r * c..(r + 1) * c];
        yr.copy_from_slice(b);
        for k in 0..3 {
            let Some(src) = (r + k * d).checked_sub(d).filter(|s| *s < u.rows) else {
                continue;
            };
            let ur = u.row(src);
            let wk = &w[k * c * c..(k + 1) * c * c];
            for (o, v) in yr.iter_mut().enumerate() {
                *v += dot(&wk[o * c..(o + 1) * c], ur);
            }
        }
    }
    y
}

pub(crate) fn conv3_back(u: &Mat, w: &[f64], dy: &Mat, d: usize, gw: &mut [f64]) -> Mat {
    let c = u.cols;
    let mut du = Mat::zeros(u.rows, c);
    for r in 0..u.rows {
        let dyr = dy.row(r);
        for k in 0..3 {
            let Some(src) = (r + k * d).checked_sub(d).filter(|s| *s < u.rows) else {
                continue;
            };
            let ur = &u.data[src * c..(src + 1) * c];
            let wk = &w[k * c * c..(k + 1) * c * c];
            let gk = &mut gw[k * c * c..(k + 1) * c * c];
            let dur = &mut du.data[src * c..(src + 1) * c];
            for (o, &g) in dyr.iter().enumerate() {
                if g != 0.0 {
                    axpy(&mut gk[o * c..(o + 1) * c], g, ur);
                    axpy(dur, g, &wk[o * c..(o + 1) * c]);
                }
            }
        }
    }
    du
}

/// Cuts `x` into `frames` frames of `window` samples every `stride`.
pub(crate) fn frame(x: &[f64], window: usize, stride: usize, frames: usize) -> Mat {
    let mut m = Mat::zeros(frames, window);
    for f in 0..frames {
        m.row_mut(f).copy_from_slice(&x[f * stride..f * stride + window]);
    }
    m
}

/// Overlap-add of frames into `len` samples; the transpose of [`frame`].
pub(crate) fn overlap_add(y: &Mat, stride: usize, len: usize) -> Vec<f64> {
    let mut out = vec![0.0; len];
    for f in 0..y.rows {
        for (o, v) in out[f * stride..f * stride + y.cols].iter_mut().zip(y.row(f)) {
            *o += v;
        }
    }
    out
}
