//! The three masking strategies over a multi-slice token grid.

use satmae::masking::{sample_mask, MaskStrategy};

fn main() -> anyhow::Result<()> {
    let (l, axes) = (16, 3);
    for strategy in MaskStrategy::ALL {
        let plan = sample_mask(l, axes, 0.75, strategy, 42)?;
        println!("{} ({} of {} masked)", strategy.name(), plan.num_masked(), plan.len());
        for a in 0..axes {
            let row: String = plan.mask[a * l..(a + 1) * l].iter().map(|&m| if m { '#' } else { '.' }).collect();
            println!("  slice {a}: {row}");
        }
    }
    Ok(())
}
