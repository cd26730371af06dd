use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use faceflow::descriptors::{
    describe, hof_descriptor, hoof_descriptor, lmp_descriptor, raw_flow_vector, temporal_aggregate, DescriptorKind,
    DescriptorOptions, GridSpec,
};
use faceflow::FlowField;

const GRID_KINDS: [DescriptorKind; 3] = [DescriptorKind::Hof, DescriptorKind::Hoof, DescriptorKind::Lmp];

fn opts() -> DescriptorOptions {
    DescriptorOptions::default()
}

/// Random field in polar form, so that the rotated copy shares every
/// magnitude up to rounding.
fn polar_flow(seed: u64, rotate_deg: f64) -> FlowField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    FlowField::from_fn(50, 50, |_, _| {
        let m: f64 = rng.random_range(0.0..2.5);
        let a: f64 = rng.random_range(0.0..360.0f64) + rotate_deg;
        let (s, c) = a.to_radians().sin_cos();
        [(m * c) as f32, (m * s) as f32]
    })
}

#[test]
fn raw_examples() {
    let z = raw_flow_vector(&FlowField::zeros(50, 50)).unwrap();
    assert_eq!(z.values, vec![0.0; 7500]);
    let mut v = vec![[0.0f32; 2]; 2500];
    v[0] = [1.0, 0.0];
    let one = raw_flow_vector(&FlowField::new(50, 50, v).unwrap()).unwrap();
    let nonzero: Vec<usize> = (0..7500).filter(|&i| one.values[i] != 0.0).collect();
    assert_eq!(nonzero, vec![0, 5000]);
}

#[test]
fn uniform_rightward_flow_fills_bin_zero() {
    let d = hof_descriptor(&FlowField::uniform(50, 50, 1.0, 0.0), GridSpec::default(), opts()).unwrap();
    for c in 0..25 {
        assert_eq!(d.cell(c)[0], 100.0);
        assert_eq!(d.cell(c)[1..].iter().sum::<f64>(), 0.0);
    }
}

#[test]
fn zero_flow_gives_zero_histograms() {
    for kind in GRID_KINDS {
        assert_eq!(describe(&FlowField::zeros(50, 50), kind, opts()).unwrap().values, vec![0.0; 300]);
    }
}

#[test]
fn coherent_flow_lmp_equals_hoof() {
    let f = FlowField::uniform(50, 50, 0.7, -0.4);
    let a = lmp_descriptor(&f, GridSpec::default(), opts()).unwrap();
    let b = hoof_descriptor(&f, GridSpec::default(), opts()).unwrap();
    assert_eq!(a.values, b.values);
}

#[test]
fn aggregation_of_tim10_descriptors_equals_manual_sum() {
    let parts: Vec<_> = (0..9)
        .map(|s| describe(&polar_flow(500 + s, 0.0), DescriptorKind::Hof, opts()).unwrap())
        .collect();
    let total = temporal_aggregate(&parts).unwrap();
    for i in 0..300 {
        let mut manual = 0.0;
        for p in &parts {
            manual += p.values[i];
        }
        assert_eq!(total.values[i], manual);
    }
    assert_eq!(temporal_aggregate(&parts[..1]).unwrap(), parts[0]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn rotation_by_multiples_of_30_shifts_bins(seed in any::<u64>(), k in 1usize..12) {
        let a = polar_flow(seed, 0.0);
        let b = polar_flow(seed, 30.0 * k as f64);
        for kind in GRID_KINDS {
            let da = describe(&a, kind, opts()).unwrap();
            let db = describe(&b, kind, opts()).unwrap();
            for c in 0..25 {
                for bin in 0..12 {
                    let (x, y) = (da.cell(c)[bin], db.cell(c)[(bin + k) % 12]);
                    prop_assert!((x - y).abs() <= 1e-5 * x.abs().max(1.0), "{} cell {} bin {}: {} vs {}", kind, c, bin, x, y);
                }
            }
        }
    }

    #[test]
    fn motion_in_one_cell_stays_in_that_cell(seed in any::<u64>(), cell in 0usize..25) {
        let full = polar_flow(seed, 0.0);
        let (cx, cy) = (cell % 5, cell / 5);
        let local = FlowField::from_fn(50, 50, |x, y| if x / 10 == cx && y / 10 == cy { full.get(x, y) } else { [0.0, 0.0] });
        for kind in GRID_KINDS {
            let d = describe(&local, kind, opts()).unwrap();
            for other in (0..25).filter(|&o| o != cell) {
                prop_assert!(d.cell(other).iter().all(|&v| v == 0.0));
            }
        }
    }

    #[test]
    fn normalized_descriptors_ignore_scale(seed in any::<u64>(), s in 1.0f32..8.0) {
        let f = polar_flow(seed, 0.0).map(|[u, v]| if u.hypot(v) < 0.1 { [0.0, 0.0] } else { [u, v] });
        let g = f.map(|[u, v]| [u * s, v * s]);
        for kind in [DescriptorKind::Hoof, DescriptorKind::Lmp] {
            let a = describe(&f, kind, opts()).unwrap();
            let b = describe(&g, kind, opts()).unwrap();
            for (x, y) in a.values.iter().zip(&b.values) {
                prop_assert!((x - y).abs() < 1e-6);
            }
        }
        let a = describe(&f, DescriptorKind::Hof, opts()).unwrap();
        let b = describe(&g, DescriptorKind::Hof, opts()).unwrap();
        for (x, y) in a.values.iter().zip(&b.values) {
            prop_assert!((x * s as f64 - y).abs() <= 1e-5 * y.abs().max(1.0));
        }
    }

    #[test]
    fn hoof_cells_with_motion_sum_to_one(seed in any::<u64>()) {
        let d = describe(&polar_flow(seed, 0.0), DescriptorKind::Hoof, opts()).unwrap();
        for c in 0..25 {
            let s: f64 = d.cell(c).iter().sum();
            prop_assert!(s == 0.0 || (s - 1.0).abs() < 1e-9);
        }
    }
}
