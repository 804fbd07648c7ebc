//! Band metadata, normalization, augmentation, the on-disk dataset format and
//! the synthetic dataset generator.

pub mod augment;
pub mod bands;
pub mod dataset;
pub mod stats;
pub mod synthetic;

pub use augment::{crop_resize, hflip, random_resized_crop, random_window, resize, CropWindow};
pub use bands::{default_groups, select_bands, synthetic_groups, BandPolicy, SENTINEL2_BANDS};
pub use dataset::{Dataset, DatasetManifest, DatasetWriter, SampleRecord, MANIFEST_VERSION};
pub use stats::{compute_band_stats, denormalize, normalize, BandStats};
pub use synthetic::{generate_synthetic, SyntheticConfig};
