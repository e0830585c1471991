//! Shared fixtures for the criterion benchmarks.

use anchor_emo_core::{AnchorLayout, AnchorSpec, RectBox, ShiftCount};

/// Deterministic grid of square faces spread over `plane` with sides cycling through `sides`.
pub fn face_grid(plane: f64, sides: &[f64], n: usize) -> Vec<RectBox> {
    (0..n)
        .map(|i| {
            let side = sides[i % sides.len()];
            // golden-ratio stepping keeps positions well spread without an RNG
            let fx = (i as f64 * 0.618_033_988_75).fract();
            let fy = (i as f64 * 0.754_877_666_25).fract();
            RectBox::new(fx * (plane - side), fy * (plane - side), side, side).unwrap()
        })
        .collect()
}

pub fn final_design_layout(plane: f64) -> AnchorLayout {
    let spec = AnchorSpec::wider_face_baseline()
        .with_divisor(2)
        .unwrap()
        .with_shift(16.0, ShiftCount::Three)
        .unwrap();
    AnchorLayout::build(&spec, plane, plane).unwrap()
}
