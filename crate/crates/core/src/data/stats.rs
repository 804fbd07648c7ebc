use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tokenizer::SpectralImage;

/// Per-band mean and population standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandStats {
    pub bands: Vec<String>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl BandStats {
    pub fn new(bands: Vec<String>, mean: Vec<f64>, std: Vec<f64>) -> Result<Self> {
        if bands.len() != mean.len() || bands.len() != std.len() {
            return Err(Error::invalid("band stats vectors differ in length"));
        }
        Ok(Self { bands, mean, std })
    }

    /// Table values for the named Sentinel-2 bands.
    pub fn sentinel2(bands: &[String]) -> Result<Self> {
        use super::bands::{SENTINEL2_BANDS, SENTINEL2_MEAN, SENTINEL2_STD};
        let mut mean = Vec::new();
        let mut std = Vec::new();
        for b in bands {
            let i = SENTINEL2_BANDS
                .iter()
                .position(|s| s == b)
                .ok_or_else(|| Error::invalid(format!("{b} is not a Sentinel-2 band")))?;
            mean.push(SENTINEL2_MEAN[i]);
            std.push(SENTINEL2_STD[i]);
        }
        Self::new(bands.to_vec(), mean, std)
    }

    pub fn index(&self, band: &str) -> Option<usize> {
        self.bands.iter().position(|b| b == band)
    }

    /// Bands whose standard deviation is zero; they are left untouched by
    /// [`normalize`].
    pub fn degenerate(&self) -> Vec<&str> {
        self.bands
            .iter()
            .zip(&self.std)
            .filter(|(_, s)| **s <= 0.0)
            .map(|(b, _)| b.as_str())
            .collect()
    }

    fn lookup(&self, image: &SpectralImage) -> Result<Vec<(f64, f64)>> {
        image
            .band_ids()
            .iter()
            .map(|b| {
                let i = self
                    .index(b)
                    .ok_or_else(|| Error::invalid(format!("no statistics for band {b}")))?;
                Ok((self.mean[i], self.std[i]))
            })
            .collect()
    }
}

/// Per-band `(x - mean) / std`.
pub fn normalize(image: &SpectralImage, stats: &BandStats) -> Result<SpectralImage> {
    let params = stats.lookup(image)?;
    let mut out = image.clone();
    for (c, (mean, std)) in params.into_iter().enumerate() {
        if std <= 0.0 {
            continue;
        }
        for v in out.band_mut(c) {
            *v = ((*v as f64 - mean) / std) as f32;
        }
    }
    Ok(out)
}

pub fn denormalize(image: &SpectralImage, stats: &BandStats) -> Result<SpectralImage> {
    let params = stats.lookup(image)?;
    let mut out = image.clone();
    for (c, (mean, std)) in params.into_iter().enumerate() {
        if std <= 0.0 {
            continue;
        }
        for v in out.band_mut(c) {
            *v = (*v as f64 * std + mean) as f32;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    count: u64,
    mean: f64,
    m2: f64,
}

impl Moments {
    // Chan et al. pairwise combination of a new chunk into the running total.
    fn merge_chunk(&mut self, values: &[f32]) {
        if values.is_empty() {
            return;
        }
        let n = values.len() as f64;
        let mean = values.iter().map(|&v| v as f64).sum::<f64>() / n;
        let m2: f64 = values.iter().map(|&v| (v as f64 - mean).powi(2)).sum();
        let total = self.count as f64 + n;
        let delta = mean - self.mean;
        self.mean += delta * n / total;
        self.m2 += m2 + delta * delta * self.count as f64 * n / total;
        self.count += values.len() as u64;
    }
}

/// Single-pass streaming statistics over images. Bands are reported in
/// order of first appearance.
pub fn compute_band_stats<I>(images: I) -> Result<BandStats>
where
    I: IntoIterator,
    I::Item: std::borrow::Borrow<SpectralImage>,
{
    let mut bands: Vec<String> = Vec::new();
    let mut moments: Vec<Moments> = Vec::new();
    for img in images {
        let img: &SpectralImage = std::borrow::Borrow::borrow(&img);
        for (c, b) in img.band_ids().iter().enumerate() {
            let i = match bands.iter().position(|x| x == b) {
                Some(i) => i,
                None => {
                    bands.push(b.clone());
                    moments.push(Moments::default());
                    bands.len() - 1
                }
            };
            moments[i].merge_chunk(img.band(c));
        }
    }
    if bands.is_empty() {
        return Err(Error::invalid("cannot compute band statistics of an empty dataset"));
    }
    for (b, m) in bands.iter().zip(&moments) {
        if m.count < 2 {
            return Err(Error::invalid(format!("band {b} has fewer than two pixels")));
        }
    }
    let mean = moments.iter().map(|m| m.mean).collect();
    let std: Vec<f64> = moments.iter().map(|m| (m.m2 / m.count as f64).max(0.0).sqrt()).collect();
    let stats = BandStats::new(bands, mean, std)?;
    for b in stats.degenerate() {
        log::warn!("band {b} is constant; it will be excluded from normalization");
    }
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn img(bands: &[&str], px: Vec<f32>, h: usize, w: usize) -> SpectralImage {
        SpectralImage::new(h, w, px, bands.iter().map(|s| s.to_string()).collect()).unwrap()
    }

    #[test]
    fn published_b2_row() {
        let stats = BandStats::sentinel2(&["B2".to_string()]).unwrap();
        let x = img(&["B2"], vec![1184.382, 1184.382 + 650.284], 1, 2);
        let n = normalize(&x, &stats).unwrap();
        assert!(n.band(0)[0].abs() < 1e-6);
        assert!((n.band(0)[1] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn identity_stats() {
        let stats = BandStats::new(vec!["S0".into()], vec![0.0], vec![1.0]).unwrap();
        let x = img(&["S0"], vec![3.5, -2.0], 1, 2);
        assert_eq!(normalize(&x, &stats).unwrap(), x);
        let missing = BandStats::new(vec!["S1".into()], vec![0.0], vec![1.0]).unwrap();
        assert!(normalize(&x, &missing).is_err());
    }

    #[test]
    fn two_pixel_population_std() {
        let stats = compute_band_stats([img(&["S0"], vec![0.0, 2.0], 1, 2)]).unwrap();
        assert_eq!(stats.mean, vec![1.0]);
        assert_eq!(stats.std, vec![1.0]);
    }

    #[test]
    fn constant_band_is_degenerate() {
        let x = img(&["S0", "S1"], vec![5.0, 5.0, 1.0, 3.0], 1, 2);
        let stats = compute_band_stats([&x]).unwrap();
        assert_eq!(stats.degenerate(), vec!["S0"]);
        let n = normalize(&x, &stats).unwrap();
        assert_eq!(n.band(0), x.band(0));
        assert_eq!(n.band(1), &[-1.0, 1.0]);
    }

    #[test]
    fn empty_rejected() {
        assert!(compute_band_stats(Vec::<SpectralImage>::new()).is_err());
        assert!(compute_band_stats([img(&["S0"], vec![1.0], 1, 1)]).is_err());
    }

    #[test]
    fn round_trip() {
        let stats = BandStats::sentinel2(&["B4".to_string(), "B8".to_string()]).unwrap();
        let x = img(&["B4", "B8"], vec![100.0, 2000.0, 4000.0, 7.5], 1, 2);
        let back = denormalize(&normalize(&x, &stats).unwrap(), &stats).unwrap();
        // Error measured in normalized units (pixels are stored as f32).
        for c in 0..2 {
            let std = stats.std[c];
            for (a, b) in back.band(c).iter().zip(x.band(c)) {
                assert!(((a - b) as f64 / std).abs() < 1e-6);
            }
        }
    }
}
