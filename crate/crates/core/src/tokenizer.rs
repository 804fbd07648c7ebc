//! Images, temporal stacks and band groups to patch sequences and embedded
//! tokens, plus the inverse for reconstructions.
//!
//! Patch rows are flattened channel-major: channel, then patch row, then
//! patch column. Patches are ordered row-major over the patch grid.

use candle_core::Tensor;
use serde::{Deserialize, Serialize};

use crate::encodings::{
    compose_encoding, group_encode, spatial_encode_2d, temporal_encode, EncodingLayout, ExtraKind, Matrix,
    Timestamp,
};
use crate::error::{ensure, Error, Result};
use crate::nn::{Linear, ParamStore};
use crate::rng::Rng;

/// A `C x H x W` raster with one label per band.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralImage {
    channels: usize,
    height: usize,
    width: usize,
    pixels: Vec<f32>,
    band_ids: Vec<String>,
}

impl SpectralImage {
    pub fn new(height: usize, width: usize, pixels: Vec<f32>, band_ids: Vec<String>) -> Result<Self> {
        let channels = band_ids.len();
        ensure!(channels > 0, "image needs at least one band");
        ensure!(height > 0 && width > 0, "image size {height}x{width} is empty");
        ensure!(
            pixels.len() == channels * height * width,
            "pixel buffer has {} values, expected {channels}x{height}x{width}",
            pixels.len()
        );
        Ok(Self {
            channels,
            height,
            width,
            pixels,
            band_ids,
        })
    }

    pub fn zeros(height: usize, width: usize, band_ids: Vec<String>) -> Result<Self> {
        let n = band_ids.len() * height * width;
        Self::new(height, width, vec![0.0; n], band_ids)
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn pixels(&self) -> &[f32] {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut [f32] {
        &mut self.pixels
    }

    pub fn into_pixels(self) -> Vec<f32> {
        self.pixels
    }

    pub fn band_ids(&self) -> &[String] {
        &self.band_ids
    }

    pub fn band_index(&self, id: &str) -> Option<usize> {
        self.band_ids.iter().position(|b| b == id)
    }

    pub fn band(&self, c: usize) -> &[f32] {
        let n = self.height * self.width;
        &self.pixels[c * n..(c + 1) * n]
    }

    pub fn band_mut(&mut self, c: usize) -> &mut [f32] {
        let n = self.height * self.width;
        &mut self.pixels[c * n..(c + 1) * n]
    }

    pub fn get(&self, c: usize, y: usize, x: usize) -> f32 {
        self.pixels[(c * self.height + y) * self.width + x]
    }

    /// New image holding the named bands in the given order.
    pub fn select(&self, bands: &[String]) -> Result<SpectralImage> {
        let mut pixels = Vec::with_capacity(bands.len() * self.height * self.width);
        for b in bands {
            let c = self
                .band_index(b)
                .ok_or_else(|| Error::invalid(format!("band {b} not present in image")))?;
            pixels.extend_from_slice(self.band(c));
        }
        SpectralImage::new(self.height, self.width, pixels, bands.to_vec())
    }
}

/// Co-located frames with their acquisition times.
#[derive(Debug, Clone, PartialEq)]
pub struct TemporalSample {
    pub frames: Vec<SpectralImage>,
    pub timestamps: Vec<Timestamp>,
    pub label: Option<usize>,
}

impl TemporalSample {
    pub fn new(frames: Vec<SpectralImage>, timestamps: Vec<Timestamp>, label: Option<usize>) -> Result<Self> {
        ensure!(!frames.is_empty(), "temporal sample needs at least one frame");
        ensure!(
            frames.len() == timestamps.len(),
            "{} frames but {} timestamps",
            frames.len(),
            timestamps.len()
        );
        let first = &frames[0];
        for f in &frames[1..] {
            ensure!(
                f.channels() == first.channels() && f.height() == first.height() && f.width() == first.width(),
                "frames of a temporal sample must share C, H and W"
            );
        }
        Ok(Self {
            frames,
            timestamps,
            label,
        })
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

/// Disjoint ordered band groups, each embedded by its own projection.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BandGroupSpec {
    pub groups: Vec<Vec<String>>,
}

impl BandGroupSpec {
    pub fn new(groups: Vec<Vec<String>>) -> Result<Self> {
        let spec = Self { groups };
        spec.validate()?;
        Ok(spec)
    }

    pub fn from_strs(groups: &[&[&str]]) -> Result<Self> {
        Self::new(
            groups
                .iter()
                .map(|g| g.iter().map(|s| s.to_string()).collect())
                .collect(),
        )
    }

    /// One group containing every band.
    pub fn single(bands: &[String]) -> Result<Self> {
        Self::new(vec![bands.to_vec()])
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(!self.groups.is_empty(), "band group spec has no groups");
        let mut seen = std::collections::HashSet::new();
        for g in &self.groups {
            ensure!(!g.is_empty(), "band group spec contains an empty group");
            for b in g {
                ensure!(seen.insert(b.as_str()), "band {b} appears in more than one group");
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.groups.iter().map(Vec::len).collect()
    }

    /// All bands, group by group.
    pub fn bands(&self) -> Vec<String> {
        self.groups.iter().flatten().cloned().collect()
    }
}

/// Row-major `f32` patch matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Patches {
    rows: usize,
    cols: usize,
    data: Vec<f32>,
}

impl Patches {
    pub fn new(rows: usize, cols: usize, data: Vec<f32>) -> Result<Self> {
        ensure!(
            data.len() == rows * cols,
            "patch matrix has {} values, expected {rows}x{cols}",
            data.len()
        );
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
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

    pub fn row(&self, r: usize) -> &[f32] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f32] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f32> {
        self.data
    }
}

fn check_divisible(h: usize, w: usize, p: usize) -> Result<()> {
    ensure!(p > 0, "patch size must be positive");
    ensure!(
        h % p == 0 && w % p == 0,
        "image {h}x{w} is not divisible by patch size {p}"
    );
    Ok(())
}

/// Split an image into `(H/P)(W/P)` non-overlapping patches of width `P*P*C`.
pub fn patchify(image: &SpectralImage, p: usize) -> Result<Patches> {
    let (c, h, w) = (image.channels(), image.height(), image.width());
    check_divisible(h, w, p)?;
    let (gh, gw) = (h / p, w / p);
    let width = p * p * c;
    let mut out = Patches::zeros(gh * gw, width);
    for gy in 0..gh {
        for gx in 0..gw {
            let row = out.row_mut(gy * gw + gx);
            let mut k = 0;
            for ch in 0..c {
                let band = image.band(ch);
                for py in 0..p {
                    let src = (gy * p + py) * w + gx * p;
                    row[k..k + p].copy_from_slice(&band[src..src + p]);
                    k += p;
                }
            }
        }
    }
    Ok(out)
}

/// Exact inverse of [`patchify`], returning `C x H x W` pixels.
pub fn unpatchify(patches: &Patches, h: usize, w: usize, p: usize, c: usize) -> Result<Vec<f32>> {
    check_divisible(h, w, p)?;
    let (gh, gw) = (h / p, w / p);
    ensure!(
        patches.rows() == gh * gw && patches.cols() == p * p * c,
        "patch matrix {:?} does not match {c}x{h}x{w} with patch size {p}",
        patches.shape()
    );
    let mut pixels = vec![0.0f32; c * h * w];
    for gy in 0..gh {
        for gx in 0..gw {
            let row = patches.row(gy * gw + gx);
            let mut k = 0;
            for ch in 0..c {
                for py in 0..p {
                    let dst = (ch * h + gy * p + py) * w + gx * p;
                    pixels[dst..dst + p].copy_from_slice(&row[k..k + p]);
                    k += p;
                }
            }
        }
    }
    Ok(pixels)
}

/// Patchify every frame and group `frames_per_token` consecutive frames into
/// one token. Rows are ordered by frame group, then row-major spatially; each
/// row concatenates the member frames' patch rows in frame order.
pub fn patchify_temporal(sample: &TemporalSample, p: usize, frames_per_token: usize) -> Result<Patches> {
    let t = sample.len();
    ensure!(frames_per_token > 0, "frames per token must be positive");
    ensure!(
        t % frames_per_token == 0,
        "frames per token {frames_per_token} does not divide sequence length {t}"
    );
    let per_frame = sample
        .frames
        .iter()
        .map(|f| patchify(f, p))
        .collect::<Result<Vec<_>>>()?;
    let l = per_frame[0].rows();
    let w = per_frame[0].cols();
    let cubes = t / frames_per_token;
    let mut out = Patches::zeros(cubes * l, frames_per_token * w);
    for cube in 0..cubes {
        for s in 0..l {
            let row = out.row_mut(cube * l + s);
            for f in 0..frames_per_token {
                row[f * w..(f + 1) * w].copy_from_slice(per_frame[cube * frames_per_token + f].row(s));
            }
        }
    }
    Ok(out)
}

/// Slice an image into one sub-image per band group, channels in group order.
pub fn slice_groups(image: &SpectralImage, spec: &BandGroupSpec) -> Result<Vec<SpectralImage>> {
    spec.validate()?;
    spec.groups.iter().map(|g| image.select(g)).collect()
}

/// Which projection embeds a row set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmbeddingId {
    Shared,
    Group(usize),
}

/// Patch projections to the model width: one shared projection, or one per
/// band group with group-specific input widths.
#[derive(Debug, Clone)]
pub struct PatchEmbedding {
    projections: Vec<Linear>,
    shared: bool,
}

impl PatchEmbedding {
    pub fn shared(store: &mut ParamStore, name: &str, in_width: usize, dim: usize, rng: &mut Rng) -> Result<Self> {
        Ok(Self {
            projections: vec![Linear::new(store, &format!("{name}.0"), in_width, dim, rng)?],
            shared: true,
        })
    }

    pub fn grouped(store: &mut ParamStore, name: &str, in_widths: &[usize], dim: usize, rng: &mut Rng) -> Result<Self> {
        ensure!(!in_widths.is_empty(), "grouped embedding needs at least one group");
        let projections = in_widths
            .iter()
            .enumerate()
            .map(|(j, &w)| Linear::new(store, &format!("{name}.{j}"), w, dim, rng))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            projections,
            shared: false,
        })
    }

    pub fn is_shared(&self) -> bool {
        self.shared
    }

    pub fn in_widths(&self) -> Vec<usize> {
        self.projections.iter().map(Linear::in_dim).collect()
    }

    fn projection(&self, id: EmbeddingId) -> Result<&Linear> {
        match (id, self.shared) {
            (EmbeddingId::Shared, true) => Ok(&self.projections[0]),
            (EmbeddingId::Group(j), false) => self
                .projections
                .get(j)
                .ok_or_else(|| Error::invalid(format!("no embedding for group {j}"))),
            (EmbeddingId::Shared, false) => Err(Error::invalid("grouped embedding has no shared projection")),
            (EmbeddingId::Group(_), true) => Err(Error::invalid("shared embedding has no group projections")),
        }
    }

    /// Affine map of patch rows `[.., width]` to tokens `[.., D]`.
    pub fn embed(&self, rows: &Tensor, id: EmbeddingId) -> Result<Tensor> {
        self.projection(id)?.forward(rows)
    }
}

/// Where a token came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TokenPos {
    pub ix: usize,
    pub iy: usize,
    /// Frame (or frame group) index for temporal input, group index for
    /// grouped spectral input, 0 otherwise.
    pub axis: usize,
}

/// The non-spatial context of a token sequence.
#[derive(Debug, Clone, PartialEq)]
pub enum AxisInfo {
    /// One axis slice, spatial encoding only.
    Single,
    /// One slice per timestamp.
    Frames { timestamps: Vec<Timestamp>, min_year: i32 },
    /// One slice per band group.
    Groups(usize),
}

impl AxisInfo {
    pub fn axes(&self) -> usize {
        match self {
            AxisInfo::Single => 1,
            AxisInfo::Frames { timestamps, .. } => timestamps.len(),
            AxisInfo::Groups(g) => *g,
        }
    }
}

/// Token positions in sequence order: axis-major, then row-major spatial.
pub fn token_positions(grid: (usize, usize), axes: usize) -> Vec<TokenPos> {
    let (gh, gw) = grid;
    let mut out = Vec::with_capacity(axes * gh * gw);
    for axis in 0..axes {
        for iy in 0..gh {
            for ix in 0..gw {
                out.push(TokenPos { ix, iy, axis });
            }
        }
    }
    out
}

/// Composed encodings for every token of a sequence over `grid`.
/// `spatial` may be supplied to reuse (or interpolate) a spatial table.
pub fn token_encodings(
    grid: (usize, usize),
    info: &AxisInfo,
    layout: &EncodingLayout,
    spatial: Option<&Matrix>,
) -> Result<Matrix> {
    layout.validate()?;
    let owned;
    let spatial = match spatial {
        Some(s) => s,
        None => {
            owned = spatial_encode_2d(grid.0, grid.1, layout.spatial_dims, layout.base)?;
            &owned
        }
    };
    let l = grid.0 * grid.1;
    ensure!(
        spatial.rows() == l && spatial.cols() == layout.spatial_dims,
        "spatial table {:?} does not match grid {grid:?}",
        spatial.shape()
    );
    let extras: Vec<Vec<f64>> = match (info, layout.kind) {
        (AxisInfo::Single, ExtraKind::None) => vec![Vec::new()],
        (AxisInfo::Frames { timestamps, min_year }, ExtraKind::Temporal) => timestamps
            .iter()
            .map(|t| temporal_encode(t, *min_year, layout.extra_dims, layout.base))
            .collect::<Result<_>>()?,
        (AxisInfo::Groups(g), ExtraKind::Group) => (0..*g)
            .map(|j| group_encode(j as i64, layout.extra_dims, layout.base))
            .collect::<Result<_>>()?,
        (info, kind) => {
            return Err(Error::invalid(format!(
                "axis info {info:?} is incompatible with {kind:?} encoding layout"
            )))
        }
    };
    let mut out = Matrix::zeros(extras.len() * l, layout.total_dim);
    for (a, extra) in extras.iter().enumerate() {
        for s in 0..l {
            let row = compose_encoding(spatial.row(s), extra, layout)?;
            out.row_mut(a * l + s).copy_from_slice(&row);
        }
    }
    Ok(out)
}

/// Embedded tokens with their encodings and provenance, batched along the
/// leading dimension.
#[derive(Debug, Clone)]
pub struct TokenBatch {
    /// `[B, N, D]`
    pub tokens: Tensor,
    /// `[B, N, D]`
    pub encoding: Tensor,
    /// Per sample, per token.
    pub positions: Vec<Vec<TokenPos>>,
}

impl TokenBatch {
    pub fn batch_size(&self) -> usize {
        self.positions.len()
    }

    pub fn num_tokens(&self) -> usize {
        self.positions.first().map_or(0, Vec::len)
    }

    /// Tokens with their encodings added.
    pub fn encoded(&self) -> Result<Tensor> {
        Ok((&self.tokens + &self.encoding)?)
    }
}

/// Attach composed encodings to embedded rows `[B, N, D]`. One [`AxisInfo`]
/// per sample; all must describe the same token count.
pub fn build_token_batch(
    embedded: Tensor,
    grid: (usize, usize),
    layout: &EncodingLayout,
    infos: &[AxisInfo],
    spatial: Option<&Matrix>,
) -> Result<TokenBatch> {
    let (b, n, d) = embedded.dims3()?;
    ensure!(infos.len() == b, "{} axis descriptions for a batch of {b}", infos.len());
    ensure!(d == layout.total_dim, "token width {d} differs from encoding width {}", layout.total_dim);
    let mut enc = Vec::with_capacity(b * n * d);
    let mut positions = Vec::with_capacity(b);
    for info in infos {
        let m = token_encodings(grid, info, layout, spatial)?;
        ensure!(
            m.rows() == n,
            "{} tokens supplied but the grid and axes describe {}",
            n,
            m.rows()
        );
        enc.extend(m.into_vec());
        positions.push(token_positions(grid, info.axes()));
    }
    let encoding = Tensor::from_vec(enc, (b, n, d), embedded.device())?.to_dtype(embedded.dtype())?;
    Ok(TokenBatch {
        tokens: embedded,
        encoding,
        positions,
    })
}
