use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tokenizer::{BandGroupSpec, SpectralImage};

/// Sentinel-2 band labels in acquisition order.
pub const SENTINEL2_BANDS: [&str; 13] = [
    "B1", "B2", "B3", "B4", "B5", "B6", "B7", "B8", "B8A", "B9", "B10", "B11", "B12",
];

/// The 60 m bands dropped by the default policy.
pub const LOW_RESOLUTION_BANDS: [&str; 3] = ["B1", "B9", "B10"];

/// Per-band mean and standard deviation of the fMoW-Sentinel training set,
/// in reflectance units, in [`SENTINEL2_BANDS`] order.
pub const SENTINEL2_MEAN: [f64; 13] = [
    1370.192, 1184.382, 1120.771, 1136.260, 1263.739, 1645.403, 1846.870, 1762.595, 1972.624, 582.726, 14.771,
    1732.164, 1247.919,
];
pub const SENTINEL2_STD: [f64; 13] = [
    633.152, 650.284, 965.231, 948.982, 1108.067, 1258.364, 1233.149, 1364.387, 3545.66, 472.380, 14.311,
    1310.370, 1087.602,
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BandPolicy {
    /// Drop B1, B9 and B10 (whichever are present), keep the rest in order.
    Default,
    KeepAll,
    /// B4, B3, B2 for display.
    Rgb,
    Explicit(Vec<String>),
}

impl BandPolicy {
    /// The bands this policy keeps from `available`, in output order.
    pub fn resolve(&self, available: &[String]) -> Result<Vec<String>> {
        let require = |names: Vec<String>| -> Result<Vec<String>> {
            for n in &names {
                if !available.contains(n) {
                    return Err(Error::invalid(format!("unknown band {n}")));
                }
            }
            Ok(names)
        };
        match self {
            BandPolicy::Default => Ok(available
                .iter()
                .filter(|b| !LOW_RESOLUTION_BANDS.contains(&b.as_str()))
                .cloned()
                .collect()),
            BandPolicy::KeepAll => Ok(available.to_vec()),
            BandPolicy::Rgb => require(vec!["B4".into(), "B3".into(), "B2".into()]),
            BandPolicy::Explicit(names) => require(names.clone()),
        }
    }
}

pub fn select_bands(image: &SpectralImage, policy: &BandPolicy) -> Result<SpectralImage> {
    let keep = policy.resolve(image.band_ids())?;
    image.select(&keep)
}

/// RGB+NIR, red edge, SWIR.
pub fn default_groups() -> BandGroupSpec {
    BandGroupSpec::from_strs(&[
        &["B2", "B3", "B4", "B8"],
        &["B5", "B6", "B7", "B8A"],
        &["B11", "B12"],
    ])
    .expect("static groups are valid")
}

/// Bands of the default 10-band selection in output order; synthetic band
/// `S{i}` stands in for entry `i`.
pub const SYNTHETIC_ANALOGS: [&str; 10] = ["B2", "B3", "B4", "B5", "B6", "B7", "B8", "B8A", "B11", "B12"];

/// Groups over synthetic `S0..S{C-1}` bands. With ten bands this mirrors
/// [`default_groups`] through [`SYNTHETIC_ANALOGS`]; otherwise the bands are
/// split into (up to) three contiguous groups.
pub fn synthetic_groups(channels: usize) -> Result<BandGroupSpec> {
    let name = |i: usize| format!("S{i}");
    if channels == 10 {
        let groups = default_groups()
            .groups
            .iter()
            .map(|g| {
                g.iter()
                    .map(|b| name(SYNTHETIC_ANALOGS.iter().position(|a| a == b).unwrap()))
                    .collect()
            })
            .collect();
        return BandGroupSpec::new(groups);
    }
    if channels == 0 {
        return Err(Error::invalid("no bands to group"));
    }
    let g = channels.min(3);
    let base = channels / g;
    let extra = channels % g;
    let mut groups = Vec::with_capacity(g);
    let mut next = 0;
    for j in 0..g {
        let len = base + usize::from(j < extra);
        groups.push((next..next + len).map(name).collect());
        next += len;
    }
    BandGroupSpec::new(groups)
}
