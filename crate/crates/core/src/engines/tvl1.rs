//! TV-L1 optical flow solved by the duality-based alternating scheme:
//! a pointwise thresholding step on the data term followed by a projected
//! dual ascent for the total-variation term, inside a coarse-to-fine warping
//! loop.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{warp_plane, FlowField};
use crate::image::{build_pyramid, effective_levels, GrayImage};

/// Intensities are processed on a 0..255 scale, the range the default
/// `lambda` is calibrated for.
const INTENSITY_SCALE: f32 = 255.0;
const GRAD_EPS: f32 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TvL1Params {
    pub lambda: f64,
    pub theta: f64,
    pub tau: f64,
    pub warps_per_level: usize,
    pub inner_iterations: usize,
    pub pyramid_levels: usize,
    pub pyramid_scale: f64,
    pub stop_epsilon: f64,
}

impl Default for TvL1Params {
    fn default() -> Self {
        Self {
            lambda: 0.15,
            theta: 0.3,
            tau: 0.25,
            warps_per_level: 5,
            inner_iterations: 30,
            pyramid_levels: 3,
            pyramid_scale: 0.5,
            stop_epsilon: 1e-3,
        }
    }
}

impl TvL1Params {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lambda", self.lambda),
            ("theta", self.theta),
            ("tau", self.tau),
            ("stop_epsilon", self.stop_epsilon),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("{name} must be positive")));
            }
        }
        if self.tau > 0.25 {
            return Err(Error::invalid("tau above 0.25 makes the dual ascent unstable"));
        }
        if self.warps_per_level == 0 || self.inner_iterations == 0 || self.pyramid_levels == 0 {
            return Err(Error::invalid("warp, iteration and level counts must be >= 1"));
        }
        if !(self.pyramid_scale > 0.0 && self.pyramid_scale < 1.0) {
            return Err(Error::invalid("pyramid_scale must lie in (0, 1)"));
        }
        Ok(())
    }
}

/// Central differences with one-sided differences at the border.
fn centered_gradient(data: &[f32], w: usize, h: usize) -> (Vec<f32>, Vec<f32>) {
    let mut gx = vec![0.0; w * h];
    let mut gy = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            gx[i] = if w == 1 {
                0.0
            } else if x == 0 {
                data[i + 1] - data[i]
            } else if x == w - 1 {
                data[i] - data[i - 1]
            } else {
                0.5 * (data[i + 1] - data[i - 1])
            };
            gy[i] = if h == 1 {
                0.0
            } else if y == 0 {
                data[i + w] - data[i]
            } else if y == h - 1 {
                data[i] - data[i - w]
            } else {
                0.5 * (data[i + w] - data[i - w])
            };
        }
    }
    (gx, gy)
}

/// Forward differences, zero on the last column/row (Neumann boundary).
fn forward_gradient(data: &[f32], w: usize, h: usize, gx: &mut [f32], gy: &mut [f32]) {
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            gx[i] = if x + 1 < w { data[i + 1] - data[i] } else { 0.0 };
            gy[i] = if y + 1 < h { data[i + w] - data[i] } else { 0.0 };
        }
    }
}

/// Backward-difference divergence, the negative adjoint of [`forward_gradient`].
fn divergence(px: &[f32], py: &[f32], w: usize, h: usize, out: &mut [f32]) {
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let dx = if x == 0 {
                px[i]
            } else if x + 1 == w {
                -px[i - 1]
            } else {
                px[i] - px[i - 1]
            };
            let dy = if y == 0 {
                py[i]
            } else if y + 1 == h {
                -py[i - w]
            } else {
                py[i] - py[i - w]
            };
            out[i] = dx + dy;
        }
    }
}

/// Discrete TV-L1 energy `Σ |∇u₁| + |∇u₂| + λ |I₁(x + u) − I₀(x)|` on the
/// 0..255 intensity scale, normalized per pixel.
pub fn tvl1_energy(prev: &GrayImage, next: &GrayImage, flow: &FlowField, lambda: f64) -> Result<f64> {
    if prev.dims() != next.dims() || prev.dims() != flow.dims() {
        return Err(Error::invalid("energy: frame and flow sizes differ"));
    }
    let (w, h) = prev.dims();
    Ok(energy_scaled(
        &scaled(next),
        &scaled(prev),
        flow,
        w,
        h,
        lambda,
    ))
}

fn energy_scaled(i0: &[f32], i1: &[f32], flow: &FlowField, w: usize, h: usize, lambda: f64) -> f64 {
    let (u1, u2) = flow.planes();
    let warped = warp_plane(i1, w, h, flow);
    let (mut gx, mut gy) = (vec![0.0; w * h], vec![0.0; w * h]);
    let mut tv = 0.0f64;
    for u in [&u1, &u2] {
        forward_gradient(u, w, h, &mut gx, &mut gy);
        tv += gx
            .iter()
            .zip(&gy)
            .map(|(a, b)| ((a * a + b * b) as f64).sqrt())
            .sum::<f64>();
    }
    let data: f64 = warped.iter().zip(i0).map(|(a, b)| (a - b).abs() as f64).sum();
    (tv + lambda * data) / (w * h) as f64
}

fn scaled(img: &GrayImage) -> Vec<f32> {
    img.data().iter().map(|v| v * INTENSITY_SCALE).collect()
}

/// Result of a traced run.
#[derive(Debug, Clone)]
pub struct TvL1Trace {
    pub flow: FlowField,
    /// Energy after every accepted outer warp of the finest level.
    pub finest_level_energies: Vec<f64>,
    /// Inner iterations actually run, per (level, warp), coarse levels first.
    pub iterations: Vec<usize>,
}

/// Dense flow with `next(x) ≈ prev(x + F(x))`. An outer warp that raises
/// the discrete energy is undone and ends its pyramid level.
pub fn tvl1_flow(prev: &GrayImage, next: &GrayImage, params: &TvL1Params) -> Result<FlowField> {
    tvl1_flow_traced(prev, next, params).map(|t| t.flow)
}

pub fn tvl1_flow_traced(prev: &GrayImage, next: &GrayImage, params: &TvL1Params) -> Result<TvL1Trace> {
    params.validate()?;
    if prev.dims() != next.dims() {
        return Err(Error::invalid(format!(
            "frame sizes differ: {:?} vs {:?}",
            prev.dims(),
            next.dims()
        )));
    }
    let (w, h) = prev.dims();
    let levels = if w >= 4 && h >= 4 {
        effective_levels(w, h, params.pyramid_levels, params.pyramid_scale)
    } else {
        1
    };
    let (ref_pyr, tgt_pyr) = if levels > 1 {
        (
            build_pyramid(next, levels, params.pyramid_scale)?.levels().to_vec(),
            build_pyramid(prev, levels, params.pyramid_scale)?.levels().to_vec(),
        )
    } else {
        (vec![next.clone()], vec![prev.clone()])
    };

    let factor = (1.0 / params.pyramid_scale) as f32;
    let mut trace = TvL1Trace {
        flow: FlowField::zeros(w, h),
        finest_level_energies: Vec::new(),
        iterations: Vec::new(),
    };
    let mut flow: Option<FlowField> = None;
    for level in (0..levels).rev() {
        let (lw, lh) = ref_pyr[level].dims();
        let init = match flow.take() {
            None => FlowField::zeros(lw, lh),
            Some(coarse) => coarse.rescale(lw, lh, factor),
        };
        let i0 = scaled(&ref_pyr[level]);
        let i1 = scaled(&tgt_pyr[level]);
        let energies = if level == 0 {
            Some(&mut trace.finest_level_energies)
        } else {
            None
        };
        flow = Some(solve_level(&i0, &i1, lw, lh, init, params, energies, &mut trace.iterations));
    }
    trace.flow = flow.expect("at least one level");
    Ok(trace)
}

#[allow(clippy::too_many_arguments)]
fn solve_level(
    i0: &[f32],
    i1: &[f32],
    w: usize,
    h: usize,
    init: FlowField,
    params: &TvL1Params,
    mut energies: Option<&mut Vec<f64>>,
    iterations: &mut Vec<usize>,
) -> FlowField {
    let n = w * h;
    let (mut u1, mut u2) = init.planes();
    let (i1x, i1y) = centered_gradient(i1, w, h);
    let lt = (params.lambda * params.theta) as f32;
    let theta = params.theta as f32;
    let taut = (params.tau / params.theta) as f32;
    let eps = params.stop_epsilon as f32;

    let mut p11 = vec![0.0f32; n];
    let mut p12 = vec![0.0f32; n];
    let mut p21 = vec![0.0f32; n];
    let mut p22 = vec![0.0f32; n];
    let mut div1 = vec![0.0f32; n];
    let mut div2 = vec![0.0f32; n];
    let mut gx = vec![0.0f32; n];
    let mut gy = vec![0.0f32; n];
    let mut v1 = vec![0.0f32; n];
    let mut v2 = vec![0.0f32; n];

    let mut accepted = energy_scaled(i0, i1, &init, w, h, params.lambda);
    for _ in 0..params.warps_per_level {
        let current = FlowField::from_planes(w, h, &u1, &u2);
        let i1w = warp_plane(i1, w, h, &current);
        let i1wx = warp_plane(&i1x, w, h, &current);
        let i1wy = warp_plane(&i1y, w, h, &current);
        let grad: Vec<f32> = i1wx.iter().zip(&i1wy).map(|(a, b)| a * a + b * b).collect();
        let rho_c: Vec<f32> = (0..n)
            .map(|i| i1w[i] - i1wx[i] * u1[i] - i1wy[i] * u2[i] - i0[i])
            .collect();

        let mut done = 0;
        for _ in 0..params.inner_iterations {
            done += 1;
            // thresholding step on the auxiliary field v
            for i in 0..n {
                let rho = rho_c[i] + i1wx[i] * u1[i] + i1wy[i] * u2[i];
                let (d1, d2) = if rho < -lt * grad[i] {
                    (lt * i1wx[i], lt * i1wy[i])
                } else if rho > lt * grad[i] {
                    (-lt * i1wx[i], -lt * i1wy[i])
                } else if grad[i] > GRAD_EPS {
                    let s = -rho / grad[i];
                    (s * i1wx[i], s * i1wy[i])
                } else {
                    (0.0, 0.0)
                };
                v1[i] = u1[i] + d1;
                v2[i] = u2[i] + d2;
            }
            divergence(&p11, &p12, w, h, &mut div1);
            divergence(&p21, &p22, w, h, &mut div2);
            let mut max_update = 0.0f32;
            for i in 0..n {
                let new1 = v1[i] + theta * div1[i];
                let new2 = v2[i] + theta * div2[i];
                max_update = max_update
                    .max((new1 - u1[i]).abs())
                    .max((new2 - u2[i]).abs());
                u1[i] = new1;
                u2[i] = new2;
            }
            // dual ascent with reprojection onto the unit ball
            forward_gradient(&u1, w, h, &mut gx, &mut gy);
            for i in 0..n {
                let g = 1.0 + taut * (gx[i] * gx[i] + gy[i] * gy[i]).sqrt();
                p11[i] = (p11[i] + taut * gx[i]) / g;
                p12[i] = (p12[i] + taut * gy[i]) / g;
            }
            forward_gradient(&u2, w, h, &mut gx, &mut gy);
            for i in 0..n {
                let g = 1.0 + taut * (gx[i] * gx[i] + gy[i] * gy[i]).sqrt();
                p21[i] = (p21[i] + taut * gx[i]) / g;
                p22[i] = (p22[i] + taut * gy[i]) / g;
            }
            if max_update < eps {
                break;
            }
        }
        iterations.push(done);
        let candidate = FlowField::from_planes(w, h, &u1, &u2);
        let e = energy_scaled(i0, i1, &candidate, w, h, params.lambda);
        if e > accepted {
            return current;
        }
        accepted = e;
        if let Some(trace) = energies.as_deref_mut() {
            trace.push(e);
        }
    }
    FlowField::from_planes(w, h, &u1, &u2)
}
