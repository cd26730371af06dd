//! Two-frame motion estimation by polynomial expansion.
//!
//! Each neighborhood is approximated by `f(x) ≈ xᵀAx + bᵀx + c`, fitted by
//! Gaussian-weighted least squares. A translation `d` between frames changes
//! the linear coefficient by `-2Ad`, which gives a closed-form displacement
//! once the constraints are pooled over a window.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::FlowField;
use crate::image::{build_pyramid, effective_levels, sample_bilinear, GrayImage};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FarnebackParams {
    pub pyramid_levels: usize,
    pub pyramid_scale: f64,
    pub window_size: usize,
    pub iterations_per_level: usize,
    pub poly_n: usize,
    pub poly_sigma: f64,
}

impl Default for FarnebackParams {
    fn default() -> Self {
        Self {
            pyramid_levels: 3,
            pyramid_scale: 0.5,
            window_size: 15,
            iterations_per_level: 3,
            poly_n: 5,
            poly_sigma: 1.1,
        }
    }
}

impl FarnebackParams {
    pub fn validate(&self) -> Result<()> {
        let odd3 = |n: usize| n >= 3 && n % 2 == 1;
        if !odd3(self.window_size) {
            return Err(Error::invalid("window_size must be odd and >= 3"));
        }
        if !odd3(self.poly_n) {
            return Err(Error::invalid("poly_n must be odd and >= 3"));
        }
        if self.iterations_per_level == 0 || self.pyramid_levels == 0 {
            return Err(Error::invalid("iterations and pyramid levels must be >= 1"));
        }
        if !(self.pyramid_scale > 0.0 && self.pyramid_scale < 1.0) {
            return Err(Error::invalid("pyramid_scale must lie in (0, 1)"));
        }
        if !(self.poly_sigma > 0.0) {
            return Err(Error::invalid("poly_sigma must be positive"));
        }
        Ok(())
    }
}

/// Per-pixel quadratic model: linear terms `bx, by` and the symmetric
/// matrix entries `axx, ayy, axy`.
struct PolyCoeffs {
    bx: Vec<f32>,
    by: Vec<f32>,
    axx: Vec<f32>,
    ayy: Vec<f32>,
    axy: Vec<f32>,
}

/// Solves `m · x = rhs` for a small dense system by Gauss-Jordan elimination
/// with partial pivoting.
fn solve_dense<const N: usize>(mut m: [[f64; N]; N], mut rhs: [f64; N]) -> Option<[f64; N]> {
    for col in 0..N {
        let pivot = (col..N).max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs()))?;
        if m[pivot][col].abs() < 1e-300 {
            return None;
        }
        m.swap(col, pivot);
        rhs.swap(col, pivot);
        for row in 0..N {
            if row != col {
                let f = m[row][col] / m[col][col];
                for k in col..N {
                    m[row][k] -= f * m[col][k];
                }
                rhs[row] -= f * rhs[col];
            }
        }
    }
    let mut out = [0.0; N];
    for i in 0..N {
        out[i] = rhs[i] / m[i][i];
    }
    Some(out)
}

/// Correlation kernels that map a neighborhood to the least-squares
/// coefficients of the basis `{1, x, y, x², y², xy}`; the constant term is
/// dropped. Row `j` of the result holds the kernel of coefficient `j + 1`.
fn expansion_kernels(poly_n: usize, sigma: f64) -> Vec<[f64; 5]> {
    let r = (poly_n / 2) as isize;
    let offsets: Vec<(f64, f64)> = (-r..=r)
        .flat_map(|y| (-r..=r).map(move |x| (x as f64, y as f64)))
        .collect();
    let basis = |x: f64, y: f64| [1.0, x, y, x * x, y * y, x * y];
    let weight = |x: f64, y: f64| (-(x * x + y * y) / (2.0 * sigma * sigma)).exp();
    let mut gram = [[0.0f64; 6]; 6];
    for &(x, y) in &offsets {
        let (phi, g) = (basis(x, y), weight(x, y));
        for i in 0..6 {
            for j in 0..6 {
                gram[i][j] += g * phi[i] * phi[j];
            }
        }
    }
    // Column c of gram⁻¹, obtained one unit vector at a time.
    let mut inv = [[0.0f64; 6]; 6];
    for c in 0..6 {
        let mut e = [0.0; 6];
        e[c] = 1.0;
        let col = solve_dense(gram, e).expect("polynomial basis Gram matrix is non-singular");
        for r in 0..6 {
            inv[r][c] = col[r];
        }
    }
    offsets
        .iter()
        .map(|&(x, y)| {
            let (phi, g) = (basis(x, y), weight(x, y));
            let mut k = [0.0; 5];
            for (j, kj) in k.iter_mut().enumerate() {
                *kj = (0..6).map(|i| inv[j + 1][i] * g * phi[i]).sum();
            }
            k
        })
        .collect()
}

fn poly_expand(img: &GrayImage, kernels: &[[f64; 5]], poly_n: usize) -> PolyCoeffs {
    let (w, h) = img.dims();
    let r = (poly_n / 2) as isize;
    let n = w * h;
    let mut c = PolyCoeffs {
        bx: vec![0.0; n],
        by: vec![0.0; n],
        axx: vec![0.0; n],
        ayy: vec![0.0; n],
        axy: vec![0.0; n],
    };
    let data = img.data();
    for y in 0..h as isize {
        for x in 0..w as isize {
            let mut acc = [0.0f64; 5];
            let mut k = 0;
            for dy in -r..=r {
                let sy = (y + dy).clamp(0, h as isize - 1) as usize;
                for dx in -r..=r {
                    let sx = (x + dx).clamp(0, w as isize - 1) as usize;
                    let f = data[sy * w + sx] as f64;
                    for j in 0..5 {
                        acc[j] += kernels[k][j] * f;
                    }
                    k += 1;
                }
            }
            let i = y as usize * w + x as usize;
            c.bx[i] = acc[0] as f32;
            c.by[i] = acc[1] as f32;
            c.axx[i] = acc[2] as f32;
            c.ayy[i] = acc[3] as f32;
            // basis term xy carries 2·A₁₂
            c.axy[i] = (acc[4] * 0.5) as f32;
        }
    }
    c
}

/// Separable box sum over a `size × size` window with clamped borders.
fn box_filter(data: &[f64], w: usize, h: usize, size: usize) -> Vec<f64> {
    let r = (size / 2) as isize;
    let mut tmp = vec![0.0; data.len()];
    for y in 0..h {
        for x in 0..w as isize {
            let mut acc = 0.0;
            for d in -r..=r {
                acc += data[y * w + (x + d).clamp(0, w as isize - 1) as usize];
            }
            tmp[y * w + x as usize] = acc;
        }
    }
    let mut out = vec![0.0; data.len()];
    for y in 0..h as isize {
        for x in 0..w {
            let mut acc = 0.0;
            for d in -r..=r {
                acc += tmp[(y + d).clamp(0, h as isize - 1) as usize * w + x];
            }
            out[y as usize * w + x] = acc;
        }
    }
    out
}

/// One displacement update at a single pyramid level.
fn update_flow(
    reference: &PolyCoeffs,
    target: &PolyCoeffs,
    flow: &FlowField,
    w: usize,
    h: usize,
    window: usize,
) -> FlowField {
    let n = w * h;
    // G = AᵀA (gxx, gxy, gyy) and h = AᵀΔb (hx, hy), per pixel.
    let mut planes = vec![vec![0.0f64; n]; 5];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let [du, dv] = flow.get(x, y);
            let (sx, sy) = (x as f32 + du, y as f32 + dv);
            let inside = sx >= 0.0 && sy >= 0.0 && sx <= (w - 1) as f32 && sy <= (h - 1) as f32;
            if !inside {
                continue;
            }
            let s = |p: &Vec<f32>| sample_bilinear(p, w, h, sx, sy) as f64;
            let axx = 0.5 * (reference.axx[i] as f64 + s(&target.axx));
            let ayy = 0.5 * (reference.ayy[i] as f64 + s(&target.ayy));
            let axy = 0.5 * (reference.axy[i] as f64 + s(&target.axy));
            let (du, dv) = (du as f64, dv as f64);
            let dbx = -0.5 * (s(&target.bx) - reference.bx[i] as f64) + axx * du + axy * dv;
            let dby = -0.5 * (s(&target.by) - reference.by[i] as f64) + axy * du + ayy * dv;
            planes[0][i] = axx * axx + axy * axy;
            planes[1][i] = axx * axy + axy * ayy;
            planes[2][i] = axy * axy + ayy * ayy;
            planes[3][i] = axx * dbx + axy * dby;
            planes[4][i] = axy * dbx + ayy * dby;
        }
    }
    let pooled: Vec<Vec<f64>> = planes.iter().map(|p| box_filter(p, w, h, window)).collect();
    FlowField::from_fn(w, h, |x, y| {
        let i = y * w + x;
        let (gxx, gxy, gyy, hx, hy) = (
            pooled[0][i],
            pooled[1][i],
            pooled[2][i],
            pooled[3][i],
            pooled[4][i],
        );
        let det = gxx * gyy - gxy * gxy;
        let trace = gxx + gyy;
        if !(det > 1e-9 * trace * trace) || trace <= 1e-30 {
            // aperture-degenerate neighborhood: keep the current estimate
            return flow.get(x, y);
        }
        [
            ((gyy * hx - gxy * hy) / det) as f32,
            ((gxx * hy - gxy * hx) / det) as f32,
        ]
    })
}

/// Dense flow with `next(x) ≈ prev(x + F(x))`.
pub fn farneback_flow(prev: &GrayImage, next: &GrayImage, params: &FarnebackParams) -> Result<FlowField> {
    params.validate()?;
    if prev.dims() != next.dims() {
        return Err(Error::invalid(format!(
            "frame sizes differ: {:?} vs {:?}",
            prev.dims(),
            next.dims()
        )));
    }
    let (w, h) = prev.dims();
    if w < params.poly_n || h < params.poly_n {
        return Err(Error::invalid(format!(
            "image {w}x{h} smaller than poly_n {}",
            params.poly_n
        )));
    }
    let levels = effective_levels(w, h, params.pyramid_levels, params.pyramid_scale);
    let (ref_pyr, tgt_pyr) = if levels > 1 {
        (
            build_pyramid(next, levels, params.pyramid_scale)?.levels().to_vec(),
            build_pyramid(prev, levels, params.pyramid_scale)?.levels().to_vec(),
        )
    } else {
        (vec![next.clone()], vec![prev.clone()])
    };
    // only levels on which the expansion neighborhood still fits
    let usable = ref_pyr
        .iter()
        .take_while(|l| l.width() >= params.poly_n && l.height() >= params.poly_n)
        .count();

    let kernels = expansion_kernels(params.poly_n, params.poly_sigma);
    let factor = (1.0 / params.pyramid_scale) as f32;
    let mut flow: Option<FlowField> = None;
    for level in (0..usable).rev() {
        let (lw, lh) = ref_pyr[level].dims();
        let mut current = match flow.take() {
            None => FlowField::zeros(lw, lh),
            Some(coarse) => coarse.rescale(lw, lh, factor),
        };
        let reference = poly_expand(&ref_pyr[level], &kernels, params.poly_n);
        let target = poly_expand(&tgt_pyr[level], &kernels, params.poly_n);
        for _ in 0..params.iterations_per_level {
            current = update_flow(&reference, &target, &current, lw, lh, params.window_size);
        }
        flow = Some(current);
    }
    Ok(flow.expect("at least level 0 is usable"))
}
