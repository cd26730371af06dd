//! FlowFields-style correspondence search: PatchMatch propagation and
//! random search over a small hierarchy, a forward-backward consistency
//! check, and nearest-inlier hole filling.
//!
//! Offsets are integral. The matching cost is the sum of absolute
//! differences over a square patch; among equal costs the shorter offset
//! wins, so textureless regions settle on zero motion.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::FlowField;
use crate::image::{build_pyramid, effective_levels, GrayImage};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PatchMatchParams {
    pub patch_radius: usize,
    pub propagation_iterations: usize,
    /// Initial random-search radius in pixels; `None` uses the image's
    /// shorter side at each level.
    pub random_search_radius: Option<usize>,
    pub search_decay: f64,
    pub fb_consistency_threshold: f64,
    pub hierarchy_levels: usize,
    pub rng_seed: u64,
}

impl Default for PatchMatchParams {
    fn default() -> Self {
        Self {
            patch_radius: 4,
            propagation_iterations: 3,
            random_search_radius: None,
            search_decay: 0.5,
            fb_consistency_threshold: 1.0,
            hierarchy_levels: 2,
            rng_seed: 0x5eed,
        }
    }
}

impl PatchMatchParams {
    pub fn validate(&self) -> Result<()> {
        if self.patch_radius == 0 {
            return Err(Error::invalid("patch_radius must be >= 1"));
        }
        if self.propagation_iterations == 0 || self.hierarchy_levels == 0 {
            return Err(Error::invalid("iterations and hierarchy levels must be >= 1"));
        }
        if !(self.fb_consistency_threshold > 0.0) {
            return Err(Error::invalid("fb_consistency_threshold must be positive"));
        }
        if !(self.search_decay > 0.0 && self.search_decay < 1.0) {
            return Err(Error::invalid("search_decay must lie in (0, 1)"));
        }
        Ok(())
    }
}

type Offset = [i32; 2];

struct Matcher<'a> {
    reference: &'a [f32],
    target: &'a [f32],
    w: usize,
    h: usize,
    radius: isize,
}

impl Matcher<'_> {
    #[inline]
    fn valid(&self, x: usize, y: usize, d: Offset) -> bool {
        let tx = x as i64 + d[0] as i64;
        let ty = y as i64 + d[1] as i64;
        tx >= 0 && ty >= 0 && tx < self.w as i64 && ty < self.h as i64
    }

    fn cost(&self, x: usize, y: usize, d: Offset) -> f64 {
        let (w, h) = (self.w as isize, self.h as isize);
        let r = self.radius;
        let mut acc = 0.0f64;
        for dy in -r..=r {
            let ry = (y as isize + dy).clamp(0, h - 1) as usize;
            let ty = (y as isize + d[1] as isize + dy).clamp(0, h - 1) as usize;
            for dx in -r..=r {
                let rx = (x as isize + dx).clamp(0, w - 1) as usize;
                let tx = (x as isize + d[0] as isize + dx).clamp(0, w - 1) as usize;
                acc += (self.reference[ry * self.w + rx] - self.target[ty * self.w + tx]).abs() as f64;
            }
        }
        acc
    }
}

#[inline]
fn norm2(d: Offset) -> i64 {
    d[0] as i64 * d[0] as i64 + d[1] as i64 * d[1] as i64
}

struct Best {
    offset: Offset,
    cost: f64,
}

impl Best {
    fn consider(&mut self, m: &Matcher, x: usize, y: usize, d: Offset) {
        if d == self.offset || !m.valid(x, y, d) {
            return;
        }
        let c = m.cost(x, y, d);
        if c < self.cost || (c == self.cost && norm2(d) < norm2(self.offset)) {
            self.offset = d;
            self.cost = c;
        }
    }
}

/// Nearest-neighbor field from `reference` into `target` on one level.
fn search_level(
    m: &Matcher,
    init: Option<&[Offset]>,
    iterations: usize,
    search_radius: usize,
    decay: f64,
    rng: &mut ChaCha8Rng,
) -> Vec<Offset> {
    let (w, h) = (m.w, m.h);
    let sr = search_radius as i32;
    let mut field: Vec<Offset> = Vec::with_capacity(w * h);
    let mut costs: Vec<f64> = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let mut best = Best {
                offset: [0, 0],
                cost: m.cost(x, y, [0, 0]),
            };
            let random = [rng.random_range(-sr..=sr), rng.random_range(-sr..=sr)];
            best.consider(m, x, y, random);
            if let Some(init) = init {
                best.consider(m, x, y, init[y * w + x]);
            }
            field.push(best.offset);
            costs.push(best.cost);
        }
    }

    for iter in 0..iterations {
        let forward = iter % 2 == 0;
        for k in 0..w * h {
            let k = if forward { k } else { w * h - 1 - k };
            let (x, y) = (k % w, k / w);
            let mut best = Best {
                offset: field[k],
                cost: costs[k],
            };
            if forward {
                if x > 0 {
                    best.consider(m, x, y, field[k - 1]);
                }
                if y > 0 {
                    best.consider(m, x, y, field[k - w]);
                }
            } else {
                if x + 1 < w {
                    best.consider(m, x, y, field[k + 1]);
                }
                if y + 1 < h {
                    best.consider(m, x, y, field[k + w]);
                }
            }
            let mut r = search_radius as f64;
            while r >= 1.0 {
                let ri = r as i32;
                let cand = [
                    best.offset[0] + rng.random_range(-ri..=ri),
                    best.offset[1] + rng.random_range(-ri..=ri),
                ];
                best.consider(m, x, y, cand);
                r *= decay;
            }
            field[k] = best.offset;
            costs[k] = best.cost;
        }
    }
    field
}

/// Coarse-to-fine nearest-neighbor field over `levels` pyramid levels.
fn hierarchical_nnf(
    reference: &GrayImage,
    target: &GrayImage,
    params: &PatchMatchParams,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Offset>> {
    let (w, h) = reference.dims();
    let min_patch = 2 * params.patch_radius + 1;
    let mut levels = if w >= 4 && h >= 4 {
        effective_levels(w, h, params.hierarchy_levels, 0.5)
    } else {
        1
    };
    let (ref_pyr, tgt_pyr) = if levels > 1 {
        (
            build_pyramid(reference, levels, 0.5)?.levels().to_vec(),
            build_pyramid(target, levels, 0.5)?.levels().to_vec(),
        )
    } else {
        (vec![reference.clone()], vec![target.clone()])
    };
    levels = ref_pyr
        .iter()
        .take_while(|l| l.width().min(l.height()) > min_patch)
        .count()
        .max(1);

    let mut field: Option<(Vec<Offset>, usize, usize)> = None;
    for level in (0..levels).rev() {
        let (lw, lh) = ref_pyr[level].dims();
        let init = field.take().map(|(coarse, cw, ch)| {
            let mut up = Vec::with_capacity(lw * lh);
            for y in 0..lh {
                for x in 0..lw {
                    let cx = (x / 2).min(cw - 1);
                    let cy = (y / 2).min(ch - 1);
                    let d = coarse[cy * cw + cx];
                    up.push([d[0] * 2, d[1] * 2]);
                }
            }
            up
        });
        let matcher = Matcher {
            reference: ref_pyr[level].data(),
            target: tgt_pyr[level].data(),
            w: lw,
            h: lh,
            radius: params.patch_radius as isize,
        };
        let radius = params
            .random_search_radius
            .map(|r| (r >> level).max(1))
            .unwrap_or_else(|| lw.min(lh));
        let nnf = search_level(
            &matcher,
            init.as_deref(),
            params.propagation_iterations,
            radius,
            params.search_decay,
            rng,
        );
        field = Some((nnf, lw, lh));
    }
    Ok(field.unwrap().0)
}

/// Marks pixels whose forward offset is confirmed by the backward field.
fn consistency_mask(forward: &[Offset], backward: &[Offset], w: usize, h: usize, threshold: f64) -> Vec<bool> {
    let t2 = threshold * threshold;
    (0..w * h)
        .map(|k| {
            let (x, y) = ((k % w) as i64, (k / w) as i64);
            let d = forward[k];
            let (tx, ty) = (x + d[0] as i64, y + d[1] as i64);
            if tx < 0 || ty < 0 || tx >= w as i64 || ty >= h as i64 {
                return false;
            }
            let b = backward[ty as usize * w + tx as usize];
            let (ex, ey) = ((d[0] + b[0]) as f64, (d[1] + b[1]) as f64);
            ex * ex + ey * ey <= t2
        })
        .collect()
}

/// Fills rejected pixels from the nearest accepted one (8-connected
/// breadth-first order, seeds visited in scan order). Without any accepted
/// pixel the result is all zeros.
fn fill_from_inliers(field: &[Offset], keep: &[bool], w: usize, h: usize) -> Vec<Offset> {
    let mut out: Vec<Option<Offset>> = field
        .iter()
        .zip(keep)
        .map(|(d, &k)| if k { Some(*d) } else { None })
        .collect();
    let mut queue: VecDeque<usize> = (0..w * h).filter(|&k| keep[k]).collect();
    if queue.is_empty() {
        return vec![[0, 0]; w * h];
    }
    while let Some(k) = queue.pop_front() {
        let value = out[k];
        let (x, y) = ((k % w) as isize, (k / w) as isize);
        for dy in -1..=1 {
            for dx in -1..=1 {
                let (nx, ny) = (x + dx, y + dy);
                if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                    continue;
                }
                let n = ny as usize * w + nx as usize;
                if out[n].is_none() {
                    out[n] = value;
                    queue.push_back(n);
                }
            }
        }
    }
    out.into_iter().map(|d| d.unwrap_or([0, 0])).collect()
}

/// Outcome of a full PatchMatch run, including the inlier mask.
#[derive(Debug, Clone)]
pub struct PatchMatchResult {
    pub flow: FlowField,
    pub inliers: Vec<bool>,
}

impl PatchMatchResult {
    pub fn inlier_fraction(&self) -> f64 {
        self.inliers.iter().filter(|&&b| b).count() as f64 / self.inliers.len() as f64
    }
}

/// Dense flow with `next(x) ≈ prev(x + F(x))`. Deterministic in `rng_seed`.
pub fn patchmatch_flow(prev: &GrayImage, next: &GrayImage, params: &PatchMatchParams) -> Result<FlowField> {
    patchmatch_flow_detailed(prev, next, params).map(|r| r.flow)
}

pub fn patchmatch_flow_detailed(
    prev: &GrayImage,
    next: &GrayImage,
    params: &PatchMatchParams,
) -> Result<PatchMatchResult> {
    params.validate()?;
    if prev.dims() != next.dims() {
        return Err(Error::invalid(format!(
            "frame sizes differ: {:?} vs {:?}",
            prev.dims(),
            next.dims()
        )));
    }
    let (w, h) = prev.dims();
    let patch = 2 * params.patch_radius + 1;
    if w.min(h) <= patch {
        return Err(Error::invalid(format!(
            "image {w}x{h} too small for a {patch}x{patch} patch"
        )));
    }
    let mut forward_rng = ChaCha8Rng::seed_from_u64(params.rng_seed);
    let mut backward_rng = ChaCha8Rng::seed_from_u64(params.rng_seed);
    backward_rng.set_stream(1);

    let forward = hierarchical_nnf(next, prev, params, &mut forward_rng)?;
    let backward = hierarchical_nnf(prev, next, params, &mut backward_rng)?;
    let inliers = consistency_mask(&forward, &backward, w, h, params.fb_consistency_threshold);
    let filled = fill_from_inliers(&forward, &inliers, w, h);
    let flow = FlowField::from_fn(w, h, |x, y| {
        let d = filled[y * w + x];
        [d[0] as f32, d[1] as f32]
    });
    Ok(PatchMatchResult { flow, inliers })
}
