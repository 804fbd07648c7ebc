//! Linear warmup followed by a half-cycle cosine decay.

use std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LrSchedule {
    pub peak: f64,
    pub floor: f64,
    pub warmup_steps: usize,
    pub total_steps: usize,
}

impl LrSchedule {
    pub fn new(peak: f64, floor: f64, warmup_steps: usize, total_steps: usize) -> Self {
        let warmup_steps = warmup_steps.min(total_steps);
        Self {
            peak,
            floor: floor.min(peak),
            warmup_steps,
            total_steps,
        }
    }

    /// Learning rate at optimizer step `step` (0-based). Step 0 is 0 when
    /// there is warmup; the last step (`total_steps - 1`) is the floor.
    pub fn lr(&self, step: usize) -> f64 {
        if step < self.warmup_steps {
            return self.peak * step as f64 / self.warmup_steps as f64;
        }
        let span = self.total_steps.saturating_sub(1).saturating_sub(self.warmup_steps);
        if span == 0 {
            return if step + 1 >= self.total_steps { self.floor } else { self.peak };
        }
        let t = ((step - self.warmup_steps) as f64 / span as f64).min(1.0);
        self.floor + (self.peak - self.floor) * 0.5 * (1.0 + (PI * t).cos())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoints_and_shape() {
        let s = LrSchedule::new(1e-3, 1e-5, 10, 100);
        assert_eq!(s.lr(0), 0.0);
        assert!((s.lr(10) - 1e-3).abs() < 1e-18);
        assert!((s.lr(99) - 1e-5).abs() < 1e-18);
        let lrs: Vec<f64> = (0..100).map(|i| s.lr(i)).collect();
        assert!(lrs[..=10].windows(2).all(|w| w[1] >= w[0]));
        assert!(lrs[10..].windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn no_warmup() {
        let s = LrSchedule::new(2.0, 0.0, 0, 3);
        assert_eq!(s.lr(0), 2.0);
        assert_eq!(s.lr(2), 0.0);
    }
}
