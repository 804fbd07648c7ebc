//! Fixed sinusoidal encodings for patch position, acquisition time and
//! spectral group, and their composition into full token encodings.
//!
//! All values are computed in `f64`; the model converts to its working dtype.

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};

/// Default frequency base of the sinusoidal encodings.
pub const DEFAULT_BASE: f64 = 10000.0;

/// Dense row-major `f64` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        ensure!(
            data.len() == rows * cols,
            "matrix data has {} values, expected {rows}x{cols}",
            data.len()
        );
        Ok(Self { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }
}

/// Acquisition time. Only year, month and hour are representable; finer
/// components carry no useful signal for satellite imagery.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Timestamp {
    pub year: i32,
    /// Zero-indexed month, 0..=11.
    pub month: u8,
    /// Hour of day, 0..=23. Composites without a time of day use 0.
    pub hour: u8,
}

impl Timestamp {
    pub fn new(year: i32, month: u8, hour: u8) -> Result<Self> {
        ensure!(month <= 11, "month {month} outside 0..=11");
        ensure!(hour <= 23, "hour {hour} outside 0..=23");
        Ok(Self { year, month, hour })
    }

    /// A date-only timestamp (hour 0).
    pub fn date(year: i32, month: u8) -> Result<Self> {
        Self::new(year, month, 0)
    }
}

/// Which non-spatial component occupies the tail of each token encoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtraKind {
    None,
    Temporal,
    Group,
}

/// Split of the `total_dim` encoding into spatial (x then y halves) and an
/// extra temporal or group component.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EncodingLayout {
    pub total_dim: usize,
    pub spatial_dims: usize,
    pub extra_dims: usize,
    pub kind: ExtraKind,
    pub base: f64,
}

impl EncodingLayout {
    pub fn new(spatial_dims: usize, extra_dims: usize, kind: ExtraKind) -> Result<Self> {
        let layout = Self {
            total_dim: spatial_dims + extra_dims,
            spatial_dims,
            extra_dims,
            kind,
            base: DEFAULT_BASE,
        };
        layout.validate()?;
        Ok(layout)
    }

    /// Purely spatial layout over the whole width.
    pub fn spatial(total_dim: usize) -> Result<Self> {
        Self::new(total_dim, 0, ExtraKind::None)
    }

    /// 62.5% spatial / 37.5% temporal (640 + 384 at width 1024).
    pub fn temporal(total_dim: usize) -> Result<Self> {
        let extra = split_extra(total_dim, 3.0 / 8.0, 6)?;
        Self::new(total_dim - extra, extra, ExtraKind::Temporal)
    }

    /// 75% spatial / 25% group (768 + 256 at width 1024).
    pub fn group(total_dim: usize) -> Result<Self> {
        let extra = split_extra(total_dim, 1.0 / 4.0, 2)?;
        Self::new(total_dim - extra, extra, ExtraKind::Group)
    }

    pub fn for_kind(total_dim: usize, kind: ExtraKind) -> Result<Self> {
        match kind {
            ExtraKind::None => Self::spatial(total_dim),
            ExtraKind::Temporal => Self::temporal(total_dim),
            ExtraKind::Group => Self::group(total_dim),
        }
    }

    pub fn with_base(mut self, base: f64) -> Result<Self> {
        self.base = base;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(
            self.spatial_dims + self.extra_dims == self.total_dim,
            "layout parts {} + {} do not sum to {}",
            self.spatial_dims,
            self.extra_dims,
            self.total_dim
        );
        ensure!(
            self.spatial_dims > 0 && self.spatial_dims % 4 == 0,
            "spatial dims {} must be a positive multiple of 4",
            self.spatial_dims
        );
        ensure!(self.base > 1.0, "encoding base must exceed 1, got {}", self.base);
        match self.kind {
            ExtraKind::None => ensure!(self.extra_dims == 0, "spatial-only layout has extra dims"),
            ExtraKind::Temporal => ensure!(
                self.extra_dims > 0 && self.extra_dims % 6 == 0,
                "temporal dims {} must be a positive multiple of 6",
                self.extra_dims
            ),
            ExtraKind::Group => ensure!(
                self.extra_dims > 0 && self.extra_dims % 2 == 0,
                "group dims {} must be a positive even number",
                self.extra_dims
            ),
        }
        Ok(())
    }
}

/// Largest multiple of `step` not above `ratio * total` that leaves a
/// spatial remainder divisible by 4.
fn split_extra(total: usize, ratio: f64, step: usize) -> Result<usize> {
    let target = (total as f64 * ratio).floor() as usize;
    let mut extra = target - target % step;
    while extra > 0 {
        let spatial = total - extra;
        if spatial > 0 && spatial % 4 == 0 {
            return Ok(extra);
        }
        extra -= step;
    }
    Err(Error::invalid(format!(
        "width {total} cannot be split into spatial and extra encodings"
    )))
}

fn check_dim(dim: usize, base: f64) -> Result<()> {
    ensure!(dim >= 2, "encoding dim must be at least 2, got {dim}");
    ensure!(dim % 2 == 0, "encoding dim must be even, got {dim}");
    ensure!(base > 1.0, "encoding base must exceed 1, got {base}");
    Ok(())
}

fn write_sincos(position: f64, base: f64, out: &mut [f64]) {
    let dim = out.len() as f64;
    for (i, pair) in out.chunks_exact_mut(2).enumerate() {
        let angle = position / base.powf(2.0 * i as f64 / dim);
        pair[0] = angle.sin();
        pair[1] = angle.cos();
    }
}

/// Interleaved sine/cosine encoding of a (possibly fractional) position.
pub fn sincos_encode(position: f64, dim: usize, base: f64) -> Result<Vec<f64>> {
    check_dim(dim, base)?;
    let mut out = vec![0.0; dim];
    write_sincos(position, base, &mut out);
    Ok(out)
}

/// Encodings for every patch of a `grid_h x grid_w` grid. Row `iy * grid_w + ix`
/// holds the x encoding followed by the y encoding.
pub fn spatial_encode_2d(grid_h: usize, grid_w: usize, spatial_dims: usize, base: f64) -> Result<Matrix> {
    ensure!(
        spatial_dims > 0 && spatial_dims % 4 == 0,
        "spatial dims {spatial_dims} must be a positive multiple of 4"
    );
    check_dim(spatial_dims / 2, base)?;
    ensure!(grid_h > 0 && grid_w > 0, "empty patch grid {grid_h}x{grid_w}");
    let half = spatial_dims / 2;
    let mut m = Matrix::zeros(grid_h * grid_w, spatial_dims);
    for iy in 0..grid_h {
        for ix in 0..grid_w {
            let row = m.row_mut(iy * grid_w + ix);
            let (x, y) = row.split_at_mut(half);
            write_sincos(ix as f64, base, x);
            write_sincos(iy as f64, base, y);
        }
    }
    Ok(m)
}

/// Year offset, month and hour encodings, each a third of `extra_dims`.
pub fn temporal_encode(t: &Timestamp, min_year: i32, extra_dims: usize, base: f64) -> Result<Vec<f64>> {
    ensure!(
        extra_dims > 0 && extra_dims % 6 == 0,
        "temporal dims {extra_dims} must be a positive multiple of 6"
    );
    ensure!(
        t.year >= min_year,
        "year {} precedes the dataset minimum year {min_year}",
        t.year
    );
    check_dim(extra_dims / 3, base)?;
    let part = extra_dims / 3;
    let mut out = vec![0.0; extra_dims];
    let positions = [(t.year - min_year) as f64, t.month as f64, t.hour as f64];
    for (chunk, k) in out.chunks_exact_mut(part).zip(positions) {
        write_sincos(k, base, chunk);
    }
    Ok(out)
}

pub fn group_encode(group_index: i64, extra_dims: usize, base: f64) -> Result<Vec<f64>> {
    ensure!(group_index >= 0, "negative group index {group_index}");
    sincos_encode(group_index as f64, extra_dims, base)
}

/// Full encoding of one token: spatial part followed by the extra part.
pub fn compose_encoding(spatial_row: &[f64], extra_row: &[f64], layout: &EncodingLayout) -> Result<Vec<f64>> {
    ensure!(
        spatial_row.len() == layout.spatial_dims,
        "spatial encoding has length {}, layout expects {}",
        spatial_row.len(),
        layout.spatial_dims
    );
    ensure!(
        extra_row.len() == layout.extra_dims,
        "extra encoding has length {}, layout expects {}",
        extra_row.len(),
        layout.extra_dims
    );
    let mut out = Vec::with_capacity(layout.total_dim);
    out.extend_from_slice(spatial_row);
    out.extend_from_slice(extra_row);
    Ok(out)
}

/// Bilinearly resample per-dimension encoding surfaces from one patch grid
/// to another. Corner patches map onto corner patches. Resampling onto the
/// same grid returns the input unchanged.
pub fn interpolate_spatial_encoding(enc: &Matrix, from: (usize, usize), to: (usize, usize)) -> Result<Matrix> {
    let (h1, w1) = from;
    let (h2, w2) = to;
    ensure!(h2 > 0 && w2 > 0, "target grid {h2}x{w2} must be non-empty");
    ensure!(
        h1 > 0 && w1 > 0 && enc.rows() == h1 * w1,
        "encoding has {} rows, not a {h1}x{w1} grid",
        enc.rows()
    );
    if from == to {
        return Ok(enc.clone());
    }
    let axis = |n_src: usize, n_dst: usize, i: usize| -> (usize, usize, f64) {
        if n_src == 1 || n_dst == 1 {
            return (0, 0, 0.0);
        }
        let pos = i as f64 * (n_src - 1) as f64 / (n_dst - 1) as f64;
        let lo = (pos.floor() as usize).min(n_src - 1);
        let hi = (lo + 1).min(n_src - 1);
        (lo, hi, pos - lo as f64)
    };
    let cols = enc.cols();
    let mut out = Matrix::zeros(h2 * w2, cols);
    for y in 0..h2 {
        let (y0, y1, fy) = axis(h1, h2, y);
        for x in 0..w2 {
            let (x0, x1, fx) = axis(w1, w2, x);
            let r00 = enc.row(y0 * w1 + x0);
            let r01 = enc.row(y0 * w1 + x1);
            let r10 = enc.row(y1 * w1 + x0);
            let r11 = enc.row(y1 * w1 + x1);
            let dst = out.row_mut(y * w2 + x);
            for c in 0..cols {
                let top = r00[c] * (1.0 - fx) + r01[c] * fx;
                let bottom = r10[c] * (1.0 - fx) + r11[c] * fx;
                dst[c] = top * (1.0 - fy) + bottom * fy;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    // Independent evaluation of Encode(k, j): sin for even j, cos for odd j,
    // frequency exponent uses the even index of the pair.
    fn reference(k: f64, dim: usize, n: f64) -> Vec<f64> {
        (0..dim)
            .map(|j| {
                let even = (j - j % 2) as f64;
                let angle = k / n.powf(even / dim as f64);
                if j % 2 == 0 {
                    angle.sin()
                } else {
                    angle.cos()
                }
            })
            .collect()
    }

    fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn zero_position_alternates() {
        let v = sincos_encode(0.0, 6, DEFAULT_BASE).unwrap();
        assert_eq!(v, vec![0.0, 1.0, 0.0, 1.0, 0.0, 1.0]);
    }

    #[test]
    fn unit_position_dim4() {
        let v = sincos_encode(1.0, 4, DEFAULT_BASE).unwrap();
        let expected = [1f64.sin(), 1f64.cos(), 0.01f64.sin(), 0.01f64.cos()];
        assert!(max_abs_diff(&v, &expected) < 1e-15);
    }

    #[test]
    fn matches_reference_loop() {
        let v = sincos_encode(5.0, 8, DEFAULT_BASE).unwrap();
        assert!(max_abs_diff(&v, &reference(5.0, 8, DEFAULT_BASE)) < 1e-12);
        let g = group_encode(2, 256, DEFAULT_BASE).unwrap();
        assert!(max_abs_diff(&g, &reference(2.0, 256, DEFAULT_BASE)) < 1e-12);
    }

    #[test]
    fn rejects_bad_dims() {
        assert!(sincos_encode(1.0, 5, DEFAULT_BASE).is_err());
        assert!(sincos_encode(1.0, 0, DEFAULT_BASE).is_err());
        assert!(spatial_encode_2d(2, 2, 6, DEFAULT_BASE).is_err());
        assert!(group_encode(-1, 8, DEFAULT_BASE).is_err());
    }

    #[test]
    fn spatial_grid_layout() {
        let one = spatial_encode_2d(1, 1, 8, DEFAULT_BASE).unwrap();
        assert_eq!(one.row(0), &[0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0]);

        let m = spatial_encode_2d(2, 2, 8, DEFAULT_BASE).unwrap();
        // (ix=1, iy=0) is row 1, (ix=0, iy=1) is row 2.
        let a = m.row(1);
        let b = m.row(2);
        assert_eq!(&a[..4], &b[4..]);
        assert_eq!(&a[4..], &b[..4]);

        let big = spatial_encode_2d(12, 12, 640, DEFAULT_BASE).unwrap();
        assert_eq!(big.shape(), (144, 640));
    }

    #[test]
    fn temporal_components() {
        let t0 = Timestamp::new(2002, 0, 0).unwrap();
        let v = temporal_encode(&t0, 2002, 12, DEFAULT_BASE).unwrap();
        assert_eq!(v, vec![0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0]);

        let t = Timestamp::new(2014, 2, 15).unwrap();
        let v = temporal_encode(&t, 2002, 384, DEFAULT_BASE).unwrap();
        let mut expected = sincos_encode(12.0, 128, DEFAULT_BASE).unwrap();
        expected.extend(sincos_encode(2.0, 128, DEFAULT_BASE).unwrap());
        expected.extend(sincos_encode(15.0, 128, DEFAULT_BASE).unwrap());
        assert_eq!(v, expected);

        let t2 = Timestamp::new(2014, 2, 3).unwrap();
        let w = temporal_encode(&t2, 2002, 384, DEFAULT_BASE).unwrap();
        assert_eq!(v[..256], w[..256]);
        assert_ne!(v[256..], w[256..]);

        assert!(temporal_encode(&t, 2015, 384, DEFAULT_BASE).is_err());
        assert!(temporal_encode(&t, 2002, 16, DEFAULT_BASE).is_err());
    }

    #[test]
    fn timestamp_ranges() {
        assert!(Timestamp::new(2020, 12, 0).is_err());
        assert!(Timestamp::new(2020, 0, 24).is_err());
    }

    #[test]
    fn group_indices_distinct() {
        let zero = group_encode(0, 256, DEFAULT_BASE).unwrap();
        assert!(zero.chunks(2).all(|p| p == [0.0, 1.0]));
        let a = group_encode(1, 256, DEFAULT_BASE).unwrap();
        let b = group_encode(2, 256, DEFAULT_BASE).unwrap();
        let dist: f64 = a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        assert!(dist > 0.0);
    }

    #[test]
    fn published_layout_splits() {
        let t = EncodingLayout::temporal(1024).unwrap();
        assert_eq!((t.spatial_dims, t.extra_dims), (640, 384));
        let g = EncodingLayout::group(1024).unwrap();
        assert_eq!((g.spatial_dims, g.extra_dims), (768, 256));

        let s = vec![0.0; 640];
        let e = vec![0.0; 384];
        assert_eq!(compose_encoding(&s, &e, &t).unwrap().len(), 1024);
        let s = vec![0.0; 768];
        let e = vec![0.0; 256];
        assert_eq!(compose_encoding(&s, &e, &g).unwrap().len(), 1024);
        assert!(compose_encoding(&s, &e[..10], &g).is_err());

        let plain = EncodingLayout::spatial(64).unwrap();
        let row: Vec<f64> = (0..64).map(|i| i as f64).collect();
        assert_eq!(compose_encoding(&row, &[], &plain).unwrap(), row);
    }

    #[test]
    fn desk_scale_splits() {
        for d in [32usize, 64, 128, 256, 384, 512] {
            for kind in [ExtraKind::None, ExtraKind::Temporal, ExtraKind::Group] {
                let l = EncodingLayout::for_kind(d, kind).unwrap();
                assert_eq!(l.total_dim, d);
                l.validate().unwrap();
            }
        }
        let t = EncodingLayout::temporal(128).unwrap();
        assert_eq!((t.spatial_dims, t.extra_dims), (80, 48));
        let g = EncodingLayout::group(64).unwrap();
        assert_eq!((g.spatial_dims, g.extra_dims), (48, 16));
    }

    #[test]
    fn interpolation_cases() {
        let m = spatial_encode_2d(14, 14, 16, DEFAULT_BASE).unwrap();
        assert_eq!(interpolate_spatial_encoding(&m, (14, 14), (14, 14)).unwrap(), m);
        let up = interpolate_spatial_encoding(&m, (14, 14), (25, 25)).unwrap();
        assert_eq!(up.shape(), (625, 16));
        assert!(interpolate_spatial_encoding(&m, (14, 14), (0, 0)).is_err());

        let small = spatial_encode_2d(2, 2, 8, DEFAULT_BASE).unwrap();
        let mid = interpolate_spatial_encoding(&small, (2, 2), (3, 3)).unwrap();
        for c in 0..8 {
            for x in 0..3 {
                let above = mid.row(x)[c];
                let below = mid.row(6 + x)[c];
                assert!((mid.row(3 + x)[c] - 0.5 * (above + below)).abs() < 1e-12);
            }
            // Corners are preserved.
            assert_eq!(mid.row(0)[c], small.row(0)[c]);
            assert_eq!(mid.row(8)[c], small.row(3)[c]);
        }
    }

    #[test]
    fn values_bounded_and_injective() {
        let encs: Vec<Vec<f64>> = (0..=1000)
            .map(|k| sincos_encode(k as f64, 4, DEFAULT_BASE).unwrap())
            .collect();
        for e in &encs {
            assert!(e.iter().all(|v| (-1.0..=1.0).contains(v)));
        }
        for i in 0..encs.len() {
            for j in (i + 1)..encs.len() {
                assert!(max_abs_diff(&encs[i], &encs[j]) > 1e-6, "k={i} and k={j} collide");
            }
        }
    }
}
