//! Flow descriptors: the raw polar vector and three 5×5-grid, 12-direction
//! histograms (HOF, HOOF and an LMP-style coherence-filtered variant).

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{flow_to_polar, FlowField};
use crate::preprocess::{Expression, STANDARD_SIDE};

pub const GRID_SIDE: usize = 5;
pub const DIRECTION_BINS: usize = 12;
pub const GRID_LEN: usize = GRID_SIDE * GRID_SIDE * DIRECTION_BINS;
pub const RAW_LEN: usize = STANDARD_SIDE * STANDARD_SIDE * 3;
/// Pixels slower than this (px/frame) do not vote.
pub const TAU_MAG: f64 = 0.1;
/// Fraction of moving neighbors that must agree for a pixel to survive the
/// LMP coherence filter.
pub const RHO_COH: f64 = 0.5;
/// Angular tolerance (degrees) of the coherence filter.
pub const DELTA_THETA_COH: f64 = 30.0;

/// Equal-division tiling of a raster into `rows × cols` cells; remainder
/// pixels belong to the last row and column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSpec {
    pub rows: usize,
    pub cols: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            rows: GRID_SIDE,
            cols: GRID_SIDE,
        }
    }
}

impl GridSpec {
    pub fn cell_count(&self) -> usize {
        self.rows * self.cols
    }

    fn check(&self, width: usize, height: usize) -> Result<()> {
        if self.rows == 0 || self.cols == 0 {
            return Err(Error::invalid("grid must have at least one cell"));
        }
        if width < self.cols || height < self.rows {
            return Err(Error::invalid(format!(
                "{width}x{height} flow cannot be tiled by a {}x{} grid",
                self.rows, self.cols
            )));
        }
        Ok(())
    }

    /// Row-major cell index of pixel `(x, y)`.
    pub fn cell_of(&self, x: usize, y: usize, width: usize, height: usize) -> usize {
        let (cw, ch) = (width / self.cols, height / self.rows);
        let c = (x / cw).min(self.cols - 1);
        let r = (y / ch).min(self.rows - 1);
        r * self.cols + c
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DescriptorKind {
    Raw,
    Hof,
    Hoof,
    Lmp,
}

impl DescriptorKind {
    pub const ALL: [DescriptorKind; 4] = [
        DescriptorKind::Raw,
        DescriptorKind::Hof,
        DescriptorKind::Hoof,
        DescriptorKind::Lmp,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DescriptorKind::Raw => "raw",
            DescriptorKind::Hof => "hof",
            DescriptorKind::Hoof => "hoof",
            DescriptorKind::Lmp => "lmp",
        }
    }

    pub fn len(self) -> usize {
        match self {
            DescriptorKind::Raw => RAW_LEN,
            _ => GRID_LEN,
        }
    }
}

impl fmt::Display for DescriptorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DescriptorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        DescriptorKind::ALL
            .into_iter()
            .find(|d| d.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown descriptor {s:?}")))
    }
}

/// Histogram voting options.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DescriptorOptions {
    /// Each moving pixel adds 1 instead of its magnitude.
    pub count_votes: bool,
    /// HOOF only: mirror leftward vectors and bin the half circle
    /// `[−90°, 90°)` into 12 bins of 15°.
    pub hoof_fold: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub kind: DescriptorKind,
    pub values: Vec<f64>,
}

impl FeatureVector {
    pub fn new(kind: DescriptorKind, values: Vec<f64>) -> Result<Self> {
        if values.len() != kind.len() {
            return Err(Error::invalid(format!(
                "{kind} vector needs {} values, got {}",
                kind.len(),
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("{kind} vector has non-finite values")));
        }
        Ok(Self { kind, values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// The 12 bins of grid cell `cell`.
    pub fn cell(&self, cell: usize) -> &[f64] {
        &self.values[cell * DIRECTION_BINS..(cell + 1) * DIRECTION_BINS]
    }
}

/// Polar planes concatenated as `cos, sin, magnitude`, each row-major.
pub fn raw_flow_vector(flow: &FlowField) -> Result<FeatureVector> {
    if flow.dims() != (STANDARD_SIDE, STANDARD_SIDE) {
        return Err(Error::invalid(format!(
            "raw vectorization needs a {STANDARD_SIDE}x{STANDARD_SIDE} flow, got {:?}",
            flow.dims()
        )));
    }
    let p = flow_to_polar(flow);
    let values = p
        .cos
        .iter()
        .chain(&p.sin)
        .chain(&p.magnitude)
        .map(|&v| v as f64)
        .collect();
    FeatureVector::new(DescriptorKind::Raw, values)
}

/// Direction in degrees, `[0, 360)`, measured from +x towards +y.
fn direction_degrees(u: f64, v: f64) -> f64 {
    let d = v.atan2(u).to_degrees();
    if d < 0.0 {
        (d + 360.0) % 360.0
    } else {
        d
    }
}

fn full_circle_bin(deg: f64) -> usize {
    ((deg / 30.0).floor() as usize).min(DIRECTION_BINS - 1)
}

/// Half-circle bin after mirroring `u < 0` vectors through the origin.
fn folded_bin(u: f64, v: f64) -> usize {
    let (u, v) = if u < 0.0 { (-u, -v) } else { (u, v) };
    let mut d = v.atan2(u).to_degrees();
    if d >= 90.0 {
        d -= 180.0;
    }
    (((d + 90.0) / 15.0).floor() as usize).min(DIRECTION_BINS - 1)
}

struct Votes {
    magnitude: Vec<f64>,
    degrees: Vec<f64>,
}

fn votes(flow: &FlowField) -> Votes {
    let (magnitude, degrees) = flow
        .vectors()
        .iter()
        .map(|&[u, v]| {
            let (u, v) = (u as f64, v as f64);
            (u.hypot(v), direction_degrees(u, v))
        })
        .unzip();
    Votes { magnitude, degrees }
}

fn histogram(
    flow: &FlowField,
    grid: GridSpec,
    options: DescriptorOptions,
    fold: bool,
    mut keep: impl FnMut(usize) -> bool,
) -> Result<Vec<f64>> {
    let (w, h) = flow.dims();
    grid.check(w, h)?;
    let mut out = vec![0.0; grid.cell_count() * DIRECTION_BINS];
    for (k, &[u, v]) in flow.vectors().iter().enumerate() {
        let (u, v) = (u as f64, v as f64);
        let m = u.hypot(v);
        if m < TAU_MAG || !keep(k) {
            continue;
        }
        let bin = if fold {
            folded_bin(u, v)
        } else {
            full_circle_bin(direction_degrees(u, v))
        };
        let cell = grid.cell_of(k % w, k / w, w, h);
        out[cell * DIRECTION_BINS + bin] += if options.count_votes { 1.0 } else { m };
    }
    Ok(out)
}

fn l1_normalize_cells(values: &mut [f64]) {
    for cell in values.chunks_mut(DIRECTION_BINS) {
        let s: f64 = cell.iter().sum();
        if s > 0.0 {
            cell.iter_mut().for_each(|v| *v /= s);
        }
    }
}

fn grid_vector(kind: DescriptorKind, grid: GridSpec, values: Vec<f64>) -> Result<FeatureVector> {
    if grid == GridSpec::default() {
        FeatureVector::new(kind, values)
    } else {
        // non-standard grids keep their own length
        Ok(FeatureVector { kind, values })
    }
}

pub fn hof_descriptor(flow: &FlowField, grid: GridSpec, options: DescriptorOptions) -> Result<FeatureVector> {
    let values = histogram(flow, grid, options, false, |_| true)?;
    grid_vector(DescriptorKind::Hof, grid, values)
}

pub fn hoof_descriptor(flow: &FlowField, grid: GridSpec, options: DescriptorOptions) -> Result<FeatureVector> {
    let mut values = histogram(flow, grid, options, options.hoof_fold, |_| true)?;
    l1_normalize_cells(&mut values);
    grid_vector(DescriptorKind::Hoof, grid, values)
}

fn angular_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).abs() % 360.0;
    d.min(360.0 - d)
}

/// Pixels that move (magnitude ≥ `TAU_MAG`) together with at least
/// `RHO_COH` of their in-bounds 8-neighbors, a neighbor agreeing when it
/// moves and points within `DELTA_THETA_COH` degrees.
pub fn coherence_mask(flow: &FlowField) -> Vec<bool> {
    let (w, h) = flow.dims();
    let Votes { magnitude, degrees } = votes(flow);
    (0..w * h)
        .map(|k| {
            if magnitude[k] < TAU_MAG {
                return false;
            }
            let (x, y) = ((k % w) as isize, (k / w) as isize);
            let (mut total, mut agree) = (0usize, 0usize);
            for dy in -1..=1isize {
                for dx in -1..=1isize {
                    if dx == 0 && dy == 0 {
                        continue;
                    }
                    let (nx, ny) = (x + dx, y + dy);
                    if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                        continue;
                    }
                    total += 1;
                    let j = ny as usize * w + nx as usize;
                    if magnitude[j] >= TAU_MAG && angular_distance(degrees[j], degrees[k]) <= DELTA_THETA_COH {
                        agree += 1;
                    }
                }
            }
            total > 0 && agree as f64 >= RHO_COH * total as f64
        })
        .collect()
}

pub fn lmp_descriptor(flow: &FlowField, grid: GridSpec, options: DescriptorOptions) -> Result<FeatureVector> {
    let mask = coherence_mask(flow);
    let mut values = histogram(flow, grid, options, false, |k| mask[k])?;
    l1_normalize_cells(&mut values);
    grid_vector(DescriptorKind::Lmp, grid, values)
}

/// Computes any descriptor on the default grid.
pub fn describe(flow: &FlowField, kind: DescriptorKind, options: DescriptorOptions) -> Result<FeatureVector> {
    let grid = GridSpec::default();
    match kind {
        DescriptorKind::Raw => raw_flow_vector(flow),
        DescriptorKind::Hof => hof_descriptor(flow, grid, options),
        DescriptorKind::Hoof => hoof_descriptor(flow, grid, options),
        DescriptorKind::Lmp => lmp_descriptor(flow, grid, options),
    }
}

/// Element-wise sum of per-pair descriptors.
pub fn temporal_aggregate(descriptors: &[FeatureVector]) -> Result<FeatureVector> {
    let first = descriptors
        .first()
        .ok_or_else(|| Error::invalid("temporal aggregation of zero descriptors"))?;
    let mut values = first.values.clone();
    for d in &descriptors[1..] {
        if d.kind != first.kind || d.values.len() != values.len() {
            return Err(Error::invalid(format!(
                "cannot aggregate {} with {}",
                first.kind, d.kind
            )));
        }
        values.iter_mut().zip(&d.values).for_each(|(a, b)| *a += b);
    }
    Ok(FeatureVector {
        kind: first.kind,
        values,
    })
}

/// A labelled feature vector of one sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRow {
    pub sequence_id: String,
    pub label: Expression,
    pub features: FeatureVector,
}

/// Writes rows as `sequence_id,label,kind,v0,...,vN` with a header line.
pub fn write_feature_csv(mut out: impl Write, rows: &[FeatureRow]) -> std::io::Result<()> {
    let n = rows.first().map_or(0, |r| r.features.len());
    write!(out, "sequence_id,label,kind")?;
    for i in 0..n {
        write!(out, ",v{i}")?;
    }
    writeln!(out)?;
    for r in rows {
        write!(out, "{},{},{}", r.sequence_id, r.label, r.features.kind)?;
        for v in &r.features.values {
            write!(out, ",{v}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn opts() -> DescriptorOptions {
        DescriptorOptions::default()
    }

    fn random_flow(seed: u64) -> FlowField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        FlowField::from_fn(50, 50, |_, _| [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)])
    }

    fn rotate(flow: &FlowField, degrees: f64) -> FlowField {
        let (s, c) = degrees.to_radians().sin_cos();
        flow.map(|[u, v]| {
            let (u, v) = (u as f64, v as f64);
            [(c * u - s * v) as f32, (s * u + c * v) as f32]
        })
    }

    /// Straight per-pixel recomputation of HOF on the default grid.
    fn brute_hof(flow: &FlowField) -> Vec<f64> {
        let mut out = vec![0.0; 300];
        for y in 0..50 {
            for x in 0..50 {
                let [u, v] = flow.get(x, y);
                let (u, v) = (u as f64, v as f64);
                let m = (u * u + v * v).sqrt();
                if m < 0.1 {
                    continue;
                }
                let mut a = v.atan2(u).to_degrees();
                if a < 0.0 {
                    a += 360.0;
                }
                let bin = ((a / 30.0) as usize) % 12;
                out[((y / 10) * 5 + x / 10) * 12 + bin] += m;
            }
        }
        out
    }

    #[test]
    fn raw_vector_examples() {
        assert!(raw_flow_vector(&FlowField::zeros(50, 50)).unwrap().values.iter().all(|&v| v == 0.0));
        let r = raw_flow_vector(&FlowField::uniform(50, 50, 3.0, 4.0)).unwrap();
        assert_eq!(r.len(), 7500);
        assert!(r.values[..2500].iter().all(|&v| (v - 0.6).abs() < 1e-6));
        assert!(r.values[2500..5000].iter().all(|&v| (v - 0.8).abs() < 1e-6));
        assert!(r.values[5000..].iter().all(|&v| (v - 5.0).abs() < 1e-6));
        let one = FlowField::from_fn(50, 50, |x, y| if x == 0 && y == 0 { [1.0, 0.0] } else { [0.0, 0.0] });
        let r = raw_flow_vector(&one).unwrap();
        let nonzero: Vec<usize> = (0..7500).filter(|&i| r.values[i] != 0.0).collect();
        assert_eq!(nonzero, vec![0, 5000]);
        assert_eq!(r.values[0], 1.0);
        assert_eq!(r.values[5000], 1.0);
        assert!(raw_flow_vector(&FlowField::zeros(49, 50)).is_err());
    }

    #[test]
    fn hof_examples() {
        let z = hof_descriptor(&FlowField::zeros(50, 50), GridSpec::default(), opts()).unwrap();
        assert_eq!(z.values, vec![0.0; 300]);
        let u = hof_descriptor(&FlowField::uniform(50, 50, 1.0, 0.0), GridSpec::default(), opts()).unwrap();
        for c in 0..25 {
            assert_eq!(u.cell(c)[0], 100.0);
            assert!(u.cell(c)[1..].iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn hof_matches_brute_force() {
        for seed in 0..5 {
            let f = random_flow(seed);
            let d = hof_descriptor(&f, GridSpec::default(), opts()).unwrap();
            for (a, b) in d.values.iter().zip(brute_hof(&f)) {
                assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn rotation_by_30_shifts_bins() {
        for seed in 0..5 {
            let f = random_flow(100 + seed);
            let r = rotate(&f, 30.0);
            for kind in [DescriptorKind::Hof, DescriptorKind::Hoof, DescriptorKind::Lmp] {
                let a = describe(&f, kind, opts()).unwrap();
                let b = describe(&r, kind, opts()).unwrap();
                for c in 0..25 {
                    for k in 0..12 {
                        let (x, y) = (a.cell(c)[k], b.cell(c)[(k + 1) % 12]);
                        assert!((x - y).abs() <= 1e-4 * x.abs().max(1.0), "{kind} seed {seed} cell {c} bin {k}: {x} vs {y}");
                    }
                }
            }
        }
    }

    #[test]
    fn hoof_normalizes_and_is_scale_invariant() {
        let f = random_flow(3).map(|[u, v]| if u.hypot(v) < 0.1 { [0.0, 0.0] } else { [u, v] });
        let d = hoof_descriptor(&f, GridSpec::default(), opts()).unwrap();
        for c in 0..25 {
            assert!((d.cell(c).iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
        let doubled = hoof_descriptor(&f.map(|[u, v]| [2.0 * u, 2.0 * v]), GridSpec::default(), opts()).unwrap();
        for (a, b) in d.values.iter().zip(&doubled.values) {
            assert!((a - b).abs() < 1e-9);
        }
        let z = hoof_descriptor(&FlowField::zeros(50, 50), GridSpec::default(), opts()).unwrap();
        assert_eq!(z.values, vec![0.0; 300]);
    }

    #[test]
    fn folded_hoof_mirrors_left_motion() {
        let o = DescriptorOptions {
            hoof_fold: true,
            ..opts()
        };
        let right = hoof_descriptor(&FlowField::uniform(50, 50, 1.0, 0.2), GridSpec::default(), o).unwrap();
        let left = hoof_descriptor(&FlowField::uniform(50, 50, -1.0, -0.2), GridSpec::default(), o).unwrap();
        assert_eq!(right.values, left.values);
        // angle ~11.3° lands in bin (11.3 + 90) / 15 = 6
        assert_eq!(right.cell(0)[6], 1.0);
    }

    #[test]
    fn count_mode_counts_pixels() {
        let o = DescriptorOptions {
            count_votes: true,
            ..opts()
        };
        let d = hof_descriptor(&FlowField::uniform(50, 50, 0.0, 3.0), GridSpec::default(), o).unwrap();
        // 90° is the start of bin 3
        assert!((0..25).all(|c| d.cell(c)[3] == 100.0));
    }

    #[test]
    fn lmp_on_coherent_flow_equals_hoof() {
        let f = FlowField::uniform(50, 50, 0.7, -0.4);
        let a = lmp_descriptor(&f, GridSpec::default(), opts()).unwrap();
        let b = hoof_descriptor(&f, GridSpec::default(), opts()).unwrap();
        assert_eq!(a.values, b.values);
        assert_eq!(lmp_descriptor(&FlowField::zeros(50, 50), GridSpec::default(), opts()).unwrap().values, vec![0.0; 300]);
    }

    #[test]
    fn lmp_filters_salt_and_pepper() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let f = FlowField::from_fn(50, 50, |_, _| {
            let a: f32 = rng.random_range(0.0..std::f32::consts::TAU);
            [a.cos(), a.sin()]
        });
        let kept = coherence_mask(&f).iter().filter(|&&b| b).count();
        assert!(kept as f64 <= 0.1 * 2500.0, "kept {kept}");
    }

    #[test]
    fn translation_locality() {
        let f = random_flow(9);
        let only = FlowField::from_fn(50, 50, |x, y| if (20..30).contains(&x) && (10..20).contains(&y) { f.get(x, y) } else { [0.0, 0.0] });
        for kind in [DescriptorKind::Hof, DescriptorKind::Hoof, DescriptorKind::Lmp] {
            let d = describe(&only, kind, opts()).unwrap();
            for c in (0..25).filter(|&c| c != 7) {
                assert!(d.cell(c).iter().all(|&v| v == 0.0), "{kind} cell {c}");
            }
        }
    }

    #[test]
    fn grid_remainder_goes_to_last_cells() {
        let g = GridSpec::default();
        assert_eq!(g.cell_of(52, 0, 53, 50), 4);
        assert_eq!(g.cell_of(9, 0, 53, 50), 0);
        assert_eq!(g.cell_of(10, 49, 53, 50), 21);
        let d = hof_descriptor(&FlowField::uniform(53, 51, 1.0, 0.0), g, opts()).unwrap();
        assert_eq!(d.cell(24)[0], 13.0 * 11.0);
        assert!(hof_descriptor(&FlowField::zeros(4, 50), g, opts()).is_err());
    }

    #[test]
    fn aggregation() {
        let a = describe(&random_flow(1), DescriptorKind::Hof, opts()).unwrap();
        assert_eq!(temporal_aggregate(std::slice::from_ref(&a)).unwrap(), a);
        let two = temporal_aggregate(&[a.clone(), a.clone()]).unwrap();
        assert!(two.values.iter().zip(&a.values).all(|(x, y)| *x == 2.0 * y));
        let b = describe(&random_flow(1), DescriptorKind::Hoof, opts()).unwrap();
        assert!(temporal_aggregate(&[a, b]).is_err());
        assert!(temporal_aggregate(&[]).is_err());
    }

    #[test]
    fn csv_layout() {
        let row = FeatureRow {
            sequence_id: "S1".into(),
            label: Expression::Fear,
            features: describe(&FlowField::zeros(50, 50), DescriptorKind::Hof, opts()).unwrap(),
        };
        let mut buf = Vec::new();
        write_feature_csv(&mut buf, &[row]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert!(lines[0].starts_with("sequence_id,label,kind,v0,v1"));
        assert!(lines[1].starts_with("S1,fear,hof,0,0"));
        assert_eq!(lines[1].split(',').count(), 303);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn lengths_and_finiteness(seed in any::<u64>(), scale in 0.0f32..20.0) {
            let f = random_flow(seed).map(|[u, v]| [u * scale, v * scale]);
            for kind in DescriptorKind::ALL {
                let d = describe(&f, kind, opts()).unwrap();
                prop_assert_eq!(d.len(), kind.len());
                prop_assert!(d.values.iter().all(|v| v.is_finite() && *v >= 0.0 || kind == DescriptorKind::Raw));
            }
        }

        #[test]
        fn hof_scales_linearly(seed in any::<u64>()) {
            let f = random_flow(seed).map(|[u, v]| if u.hypot(v) < 0.1 { [0.0, 0.0] } else { [u, v] });
            let a = describe(&f, DescriptorKind::Hof, opts()).unwrap();
            let b = describe(&f.map(|[u, v]| [2.0 * u, 2.0 * v]), DescriptorKind::Hof, opts()).unwrap();
            for (x, y) in a.values.iter().zip(&b.values) {
                prop_assert!((2.0 * x - y).abs() <= 1e-6 * y.abs().max(1.0));
            }
        }
    }
}
