//! Sinusoidal position, time and band-group encodings.

use satmae::encodings::{
    compose_encoding, group_encode, interpolate_spatial_encoding, sincos_encode, spatial_encode_2d, temporal_encode,
    EncodingLayout, Timestamp, DEFAULT_BASE,
};

fn main() -> anyhow::Result<()> {
    let v = sincos_encode(3.0, 8, DEFAULT_BASE)?;
    println!("position 3, width 8: {v:.4?}");

    for (name, layout) in [
        ("temporal", EncodingLayout::temporal(1024)?),
        ("group", EncodingLayout::group(1024)?),
        ("temporal, width 128", EncodingLayout::temporal(128)?),
    ] {
        println!("{name}: {} spatial + {} extra", layout.spatial_dims, layout.extra_dims);
    }

    let layout = EncodingLayout::temporal(128)?;
    let grid = spatial_encode_2d(4, 4, layout.spatial_dims, layout.base)?;
    let when = Timestamp::new(2017, 5, 10)?;
    let time = temporal_encode(&when, 2015, layout.extra_dims, layout.base)?;
    let token = compose_encoding(grid.row(5), &time, &layout)?;
    println!("token (1, 1) at {when:?}: {} values, first four {:.4?}", token.len(), &token[..4]);

    let group = group_encode(2, 32, DEFAULT_BASE)?;
    println!("group 2: first four {:.4?}", &group[..4]);

    let finer = interpolate_spatial_encoding(&grid, (4, 4), (6, 6))?;
    println!("4x4 grid resampled to 6x6: {:?}", finer.shape());
    Ok(())
}
