//! Truncated geometric mechanisms on linear and planar alphabets.

use crate::alphabet::PlanarGrid;
use crate::error::{Error, Result};

use super::{check_eps, Channel, DenseChannel, Mechanism};

/// Stop expanding the planar normalizer once a ring adds less than this
/// fraction of the running total.
const RING_CUTOFF: f64 = 1e-14;
/// Largest ring radius (in cells) the planar kernel tables may use.
const MAX_RADIUS: usize = 4096;

/// Truncated geometric mechanism on `{0, …, k−1}`:
/// `P(z|x) = c_z e^{−ε|z−x|}` with boundary factor 1 and interior factor
/// `1 − e^{−ε}`, both over `1 + e^{−ε}`.
pub fn geometric_linear(k: usize, eps: f64) -> Result<Channel> {
    if k < 2 {
        return Err(Error::InvalidParameter(format!("linear geometric needs k >= 2, got {k}")));
    }
    check_eps(eps)?;
    let decay = (-eps).exp();
    let boundary = 1.0 / (1.0 + decay);
    let interior = (1.0 - decay) / (1.0 + decay);
    let mut data = Vec::with_capacity(k * k);
    for x in 0..k {
        for z in 0..k {
            let c = if z == 0 || z == k - 1 { boundary } else { interior };
            data.push(c * (-eps * x.abs_diff(z) as f64).exp());
        }
    }
    Ok(DenseChannel::new(k, k, data, Mechanism::GeometricLinear { eps })?.into())
}

/// `Σ_{(i,j) ∈ ℤ²} e^{−β√(i²+j²)}` by square rings, together with the radius
/// of the last ring visited.
pub fn planar_normalizer(beta: f64) -> Result<(f64, usize)> {
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::InvalidParameter(format!("planar decay must be positive, got {beta}")));
    }
    let kernel = |a: usize, b: usize| (-beta * (a as f64).hypot(b as f64)).exp();
    let mut total = 1.0;
    let mut r = 0usize;
    loop {
        r += 1;
        if r > MAX_RADIUS {
            return Err(Error::TooLarge(format!(
                "planar geometric with decay {beta} per cell needs more than {MAX_RADIUS} rings"
            )));
        }
        let mut ring = 4.0 * kernel(r, 0) + 4.0 * kernel(r, r);
        for t in 1..r {
            ring += 8.0 * kernel(r, t);
        }
        total += ring;
        if ring < RING_CUTOFF * total {
            return Ok((total, r));
        }
    }
}

/// Sums of the planar kernel over half-lines and quadrants.
///
/// `tail[t][q] = Σ_{u=q}^{W} K(t, u)` for `t ∈ [0, W]`, `q < m`, where
/// `K(a, b) = e^{−β√(a²+b²)}` and `W` is the truncation radius.
struct KernelTails {
    beta: f64,
    m: usize,
    tail: Vec<f64>,
    corner: Vec<f64>,
}

impl KernelTails {
    fn new(beta: f64, m: usize, radius: usize) -> Self {
        let w = radius + m;
        let mut tail = vec![0.0; (w + 1) * m];
        for t in 0..=w {
            let mut acc = 0.0;
            for u in (0..=w).rev() {
                acc += (-beta * (t as f64).hypot(u as f64)).exp();
                if u < m {
                    tail[t * m + u] = acc;
                }
            }
        }
        // corner[p][q] = Σ_{t ≥ p} tail[t][q]
        let mut corner = vec![0.0; m * m];
        for q in 0..m {
            let mut acc = 0.0;
            for t in (0..=w).rev() {
                acc += tail[t * m + q];
                if t < m {
                    corner[t * m + q] = acc;
                }
            }
        }
        Self { beta, m, tail, corner }
    }

    fn point(&self, a: usize, b: usize) -> f64 {
        (-self.beta * (a as f64).hypot(b as f64)).exp()
    }

    /// `Σ_{t ≥ p} K(t, d)`
    fn ray(&self, p: usize, d: usize) -> f64 {
        self.tail[d * self.m + p]
    }

    /// `Σ_{t ≥ p, u ≥ q} K(t, u)`
    fn quadrant(&self, p: usize, q: usize) -> f64 {
        self.corner[p * self.m + q]
    }

    /// Kernel mass over the product of two offset sets.
    fn mass(&self, a: Span, b: Span, total: f64) -> f64 {
        use Span::*;
        match (a, b) {
            (Point(a), Point(b)) => self.point(a, b),
            (Point(a), Tail(q)) | (Tail(q), Point(a)) => self.ray(q, a),
            (Tail(p), Tail(q)) => self.quadrant(p, q),
            (Full, Point(b)) | (Point(b), Full) => 2.0 * self.ray(0, b) - self.point(0, b),
            (Full, Tail(q)) | (Tail(q), Full) => 2.0 * self.quadrant(0, q) - self.ray(q, 0),
            (Full, Full) => total,
        }
    }
}

/// Set of absolute offsets along one axis, folded by symmetry of the kernel.
#[derive(Clone, Copy)]
enum Span {
    Point(usize),
    /// offsets `≥ p` (or by reflection `≤ −p`)
    Tail(usize),
    Full,
}

/// Offsets along one axis from secret coordinate `x` to the infinite-grid
/// points remapped onto output coordinate `z`, for an axis of `len` cells.
fn span(z: usize, x: usize, len: usize) -> Span {
    if len == 1 {
        Span::Full
    } else if z == 0 {
        Span::Tail(x)
    } else if z == len - 1 {
        Span::Tail(len - 1 - x)
    } else {
        Span::Point(z.abs_diff(x))
    }
}

/// Truncated planar geometric mechanism on a finite grid.
///
/// Each row is `P(z|x) = λ Σ_w e^{−ε·dist(x, w)}` over the infinite-grid
/// points `w` whose nearest cell in the grid is `z`. On a rectangular grid the
/// nearest cell is the coordinate-wise clamp of `w`, so ties cannot occur.
/// `ε` is per unit of `cell_size` (km for the geographic grids).
pub fn geometric_planar(grid: &PlanarGrid, eps: f64) -> Result<Channel> {
    check_eps(eps)?;
    let beta = eps * grid.cell_size();
    let (total, radius) = planar_normalizer(beta)?;
    let lambda = 1.0 / total;
    let (cols, rows) = (grid.cols(), grid.rows());
    let tails = KernelTails::new(beta, cols.max(rows), radius);
    let k = grid.size();
    let mut data = Vec::with_capacity(k * k);
    for x in 0..k {
        let (xc, xr) = grid.coords(x);
        let start = data.len();
        for z in 0..k {
            let (zc, zr) = grid.coords(z);
            let m = tails.mass(span(zc, xc, cols), span(zr, xr, rows), total);
            data.push(lambda * m);
        }
        // absorb the truncated tail (< 1e-13 relative) so rows are stochastic
        let s: f64 = data[start..].iter().sum();
        data[start..].iter_mut().for_each(|p| *p /= s);
    }
    Ok(DenseChannel::new(k, k, data, Mechanism::GeometricPlanar { eps })?.into())
}
