use anchor_emo_core::emo::{emo_closed_form, emo_monte_carlo_square};
use anchor_emo_core::EmoQuery;

// 4096^2-cell midpoint rule from tools/emo_golden.py; EMO depends on s/l only.
const GOLDEN: [(f64, f64); 8] = [
    (1.0, 0.408600866124647),
    (0.5, 0.6289836688106247),
    (0.25, 0.7872490514897149),
    (0.125, 0.8851086718926725),
    (0.0625, 0.9401411848450854),
    (0.03125, 0.969425618493714),
    (0.015625, 0.984545893066334),
    (0.0078125, 0.9922304766110003),
];

#[test]
fn closed_form_matches_golden_table() {
    for l in [16.0, 32.0, 64.0, 128.0, 256.0, 512.0] {
        for s in [4.0, 8.0, 16.0] {
            let ratio = s / l;
            let (_, want) = GOLDEN.iter().find(|(r, _)| *r == ratio).unwrap();
            let got = emo_closed_form(&EmoQuery::new(l, s)).unwrap().value;
            assert!((got - want).abs() < 1e-7, "l={l} s={s}: {got} vs {want}");
        }
    }
}

#[test]
fn scale_invariance() {
    let a = emo_closed_form(&EmoQuery::new(16.0, 8.0)).unwrap().value;
    let b = emo_closed_form(&EmoQuery::new(160.0, 80.0)).unwrap().value;
    assert!((a - b).abs() < 1e-12);
}

#[test]
fn monte_carlo_agrees_on_hardest_cell() {
    let q = EmoQuery::new(16.0, 16.0).with_samples(200_000, 11);
    let mc = emo_monte_carlo_square(&q).unwrap();
    let z = (mc.value - GOLDEN[0].1) / mc.std_error;
    assert!(z.abs() < 3.5, "z = {z}");
}
