//! Nonuniform Catmull-Rom splines: interpolation weights, tensor-product
//! lookup, integration and inverse-CDF sampling of tabulated densities.
//!
//! Node derivatives are central differences `(f[i+1] - f[i-1]) / (x[i+1] - x[i-1])`
//! in the interior and one-sided on the first and last segment. Integration
//! and sampling treat negative lobes of the interpolant as zero.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid1D {
    nodes: Vec<f64>,
}

impl Grid1D {
    pub fn new(nodes: Vec<f64>) -> Result<Self> {
        if nodes.len() < 2 {
            return Err(Error::InvalidInput(format!(
                "grid needs at least 2 nodes, got {}",
                nodes.len()
            )));
        }
        if nodes.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput("grid nodes must be finite".into()));
        }
        if nodes.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidInput(
                "grid nodes must be strictly increasing".into(),
            ));
        }
        Ok(Self { nodes })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn first(&self) -> f64 {
        self.nodes[0]
    }

    pub fn last(&self) -> f64 {
        self.nodes[self.nodes.len() - 1]
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.first() && x <= self.last()
    }

    /// Index `i` of the segment `[x_i, x_{i+1}]` holding `x`, clamped to the
    /// valid segment range.
    pub fn segment(&self, x: f64) -> usize {
        let n = self.nodes.len();
        let i = self.nodes.partition_point(|v| *v <= x);
        i.saturating_sub(1).min(n - 2)
    }

    fn check(&self, axis: &'static str, x: f64) -> Result<()> {
        if self.contains(x) {
            Ok(())
        } else {
            Err(Error::OutOfDomain {
                axis,
                value: x,
                lo: self.first(),
                hi: self.last(),
            })
        }
    }
}

/// Four weights for nodes `offset .. offset + 4`. Entries whose node index
/// falls outside the grid are always zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplineWeights {
    pub offset: isize,
    pub w: [f64; 4],
}

impl SplineWeights {
    /// `(node index, weight)` pairs for the nodes inside the grid.
    pub fn terms(&self, len: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        (0..4).filter_map(move |k| {
            let idx = self.offset + k as isize;
            (idx >= 0 && (idx as usize) < len).then(|| (idx as usize, self.w[k]))
        })
    }

    pub fn apply<T: Copy + Into<f64>>(&self, values: &[T]) -> f64 {
        self.terms(values.len())
            .map(|(i, w)| w * values[i].into())
            .sum()
    }
}

pub fn cr_weights(grid: &Grid1D, x: f64) -> Result<SplineWeights> {
    grid.check("x", x)?;
    Ok(weights_unchecked(grid, x))
}

fn weights_unchecked(grid: &Grid1D, x: f64) -> SplineWeights {
    let nodes = &grid.nodes;
    let n = nodes.len();
    let idx = grid.segment(x);
    let (x0, x1) = (nodes[idx], nodes[idx + 1]);
    let width = x1 - x0;
    let t = (x - x0) / width;
    let t2 = t * t;
    let t3 = t2 * t;
    let mut w = [0.0; 4];
    w[1] = 2.0 * t3 - 3.0 * t2 + 1.0;
    w[2] = -2.0 * t3 + 3.0 * t2;
    if idx > 0 {
        let w0 = (t3 - 2.0 * t2 + t) * width / (x1 - nodes[idx - 1]);
        w[0] = -w0;
        w[2] += w0;
    } else {
        let w0 = t3 - 2.0 * t2 + t;
        w[1] -= w0;
        w[2] += w0;
    }
    if idx + 2 < n {
        let w3 = (t3 - t2) * width / (nodes[idx + 2] - x0);
        w[1] -= w3;
        w[3] = w3;
    } else {
        let w3 = t3 - t2;
        w[1] -= w3;
        w[2] += w3;
    }
    SplineWeights {
        offset: idx as isize - 1,
        w,
    }
}

/// Interpolant value at `x`.
pub fn eval_1d<T: Copy + Into<f64>>(grid: &Grid1D, values: &[T], x: f64) -> Result<f64> {
    check_len(grid, values.len())?;
    Ok(cr_weights(grid, x)?.apply(values))
}

fn check_len(grid: &Grid1D, len: usize) -> Result<()> {
    if len != grid.len() {
        return Err(Error::DimensionMismatch(format!(
            "{len} values for a grid of {} nodes",
            grid.len()
        )));
    }
    Ok(())
}

/// Tensor-product interpolation of a row-major `(n0, n1, n2)` array.
///
/// The first axis is collapsed first, then the second, then the third.
pub fn interp_3d<T: Copy + Into<f64>>(
    values: &[T],
    grids: [&Grid1D; 3],
    x: [f64; 3],
) -> Result<f64> {
    let [g0, g1, g2] = grids;
    let (n1, n2) = (g1.len(), g2.len());
    if values.len() != g0.len() * n1 * n2 {
        return Err(Error::DimensionMismatch(format!(
            "{} values for a {}x{}x{} grid",
            values.len(),
            g0.len(),
            n1,
            n2
        )));
    }
    g0.check("x0", x[0])?;
    g1.check("x1", x[1])?;
    g2.check("x2", x[2])?;
    let w0 = weights_unchecked(g0, x[0]);
    let w1 = weights_unchecked(g1, x[1]);
    let w2 = weights_unchecked(g2, x[2]);
    let mut out = 0.0;
    for (k, wk) in w2.terms(n2) {
        let mut col = 0.0;
        for (j, wj) in w1.terms(n1) {
            let mut acc = 0.0;
            for (i, wi) in w0.terms(g0.len()) {
                acc += wi * values[(i * n1 + j) * n2 + k].into();
            }
            col += wj * acc;
        }
        out += wk * col;
    }
    Ok(out)
}

/// Cubic of one spline segment in the local parameter `t ∈ [0, 1]`,
/// together with the sign changes needed to clamp it at zero.
#[derive(Debug, Clone, Copy)]
struct SegmentCubic {
    x0: f64,
    width: f64,
    // p(t) = ((a t + b) t + c) t + d
    a: f64,
    b: f64,
    c: f64,
    d: f64,
    breaks: [f64; 5],
    n_breaks: usize,
}

impl SegmentCubic {
    fn new(nodes: &[f64], f: &[f64], i: usize) -> Self {
        let n = nodes.len();
        let (x0, x1) = (nodes[i], nodes[i + 1]);
        let (f0, f1) = (f[i], f[i + 1]);
        let width = x1 - x0;
        let d0 = if i > 0 {
            width * (f1 - f[i - 1]) / (x1 - nodes[i - 1])
        } else {
            f1 - f0
        };
        let d1 = if i + 2 < n {
            width * (f[i + 2] - f0) / (nodes[i + 2] - x0)
        } else {
            f1 - f0
        };
        let mut s = Self {
            x0,
            width,
            a: 2.0 * f0 + d0 - 2.0 * f1 + d1,
            b: -3.0 * f0 - 2.0 * d0 + 3.0 * f1 - d1,
            c: d0,
            d: f0,
            breaks: [0.0; 5],
            n_breaks: 0,
        };
        s.find_breaks();
        s
    }

    fn p(&self, t: f64) -> f64 {
        ((self.a * t + self.b) * t + self.c) * t + self.d
    }

    fn antiderivative(&self, t: f64) -> f64 {
        (((0.25 * self.a * t + self.b / 3.0) * t + 0.5 * self.c) * t + self.d) * t
    }

    /// Splits `[0, 1]` at the roots of `p` so that `p` has constant sign on
    /// every piece.
    fn find_breaks(&mut self) {
        // Bernstein control points bound the cubic on [0, 1].
        let (p0, p3) = (self.d, self.d + self.c + self.b + self.a);
        let (p1, p2) = (
            self.d + self.c / 3.0,
            p3 - (3.0 * self.a + 2.0 * self.b + self.c) / 3.0,
        );
        if p0 > 0.0 && p1 > 0.0 && p2 > 0.0 && p3 > 0.0 {
            self.breaks[..2].copy_from_slice(&[0.0, 1.0]);
            self.n_breaks = 2;
            return;
        }
        let mut crit = [0.0f64; 4];
        let mut nc = 0;
        crit[nc] = 0.0;
        nc += 1;
        // p'(t) = 3a t² + 2b t + c
        let (qa, qb, qc) = (3.0 * self.a, 2.0 * self.b, self.c);
        let mut stationary = [f64::NAN; 2];
        if qa != 0.0 {
            let disc = qb * qb - 4.0 * qa * qc;
            if disc > 0.0 {
                let sq = disc.sqrt();
                let q = -0.5 * (qb + qb.signum() * sq);
                stationary = [q / qa, if q != 0.0 { qc / q } else { f64::NAN }];
            }
        } else if qb != 0.0 {
            stationary[0] = -qc / qb;
        }
        stationary.sort_by(|x, y| x.partial_cmp(y).unwrap_or(std::cmp::Ordering::Greater));
        for s in stationary {
            if s > 0.0 && s < 1.0 {
                crit[nc] = s;
                nc += 1;
            }
        }
        crit[nc] = 1.0;
        nc += 1;

        self.breaks[0] = 0.0;
        self.n_breaks = 1;
        for k in 0..nc - 1 {
            let (lo, hi) = (crit[k], crit[k + 1]);
            let (plo, phi) = (self.p(lo), self.p(hi));
            if (plo < 0.0 && phi > 0.0) || (plo > 0.0 && phi < 0.0) {
                self.breaks[self.n_breaks] = self.bisect_root(lo, hi, plo < 0.0);
                self.n_breaks += 1;
            }
        }
        self.breaks[self.n_breaks] = 1.0;
        self.n_breaks += 1;
    }

    /// Root of `p` bracketed by `[lo, hi]`, by Newton steps that fall back
    /// to bisection when they leave the bracket.
    fn bisect_root(&self, mut lo: f64, mut hi: f64, rising: bool) -> f64 {
        let mut t = 0.5 * (lo + hi);
        for _ in 0..100 {
            let v = self.p(t);
            if v == 0.0 {
                return t;
            }
            if (v < 0.0) == rising {
                lo = t;
            } else {
                hi = t;
            }
            let dp = (3.0 * self.a * t + 2.0 * self.b) * t + self.c;
            let newton = t - v / dp;
            let next = if newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
            if next == t || hi - lo <= 4.0 * f64::EPSILON {
                break;
            }
            t = next;
        }
        t
    }

    /// `∫_0^t max(p, 0) dt'` in units of `t`.
    fn clamped_integral(&self, t: f64) -> f64 {
        let mut sum = 0.0;
        for k in 0..self.n_breaks - 1 {
            let lo = self.breaks[k];
            if lo >= t {
                break;
            }
            let hi = self.breaks[k + 1].min(t);
            if self.p(0.5 * (self.breaks[k] + self.breaks[k + 1])) > 0.0 {
                sum += self.antiderivative(hi) - self.antiderivative(lo);
            }
        }
        sum.max(0.0)
    }

    fn mass(&self) -> f64 {
        self.clamped_integral(1.0) * self.width
    }
}

fn weighted_values(values: &[f64], weight: Option<&[f64]>) -> Vec<f64> {
    match weight {
        Some(w) => values.iter().zip(w).map(|(v, w)| v * w).collect(),
        None => values.to_vec(),
    }
}

/// Running integral of the (zero-clamped) interpolant of `values × weight`,
/// one entry per node starting at 0, plus the total.
pub fn integrate_1d(
    grid: &Grid1D,
    values: &[f64],
    weight: Option<&[f64]>,
) -> Result<(Vec<f64>, f64)> {
    check_len(grid, values.len())?;
    if let Some(w) = weight {
        check_len(grid, w.len())?;
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("values must be finite".into()));
    }
    let f = weighted_values(values, weight);
    let mut cum = Vec::with_capacity(f.len());
    let mut total = 0.0;
    cum.push(0.0);
    for i in 0..grid.len() - 1 {
        total += SegmentCubic::new(&grid.nodes, &f, i).mass();
        cum.push(total);
    }
    Ok((cum, total))
}

/// Density `max(interpolant, 0) / total` at `x`.
pub fn pdf_1d(grid: &Grid1D, values: &[f64], total: f64, x: f64) -> Result<f64> {
    if !(total > 0.0) {
        return Err(Error::ZeroMass);
    }
    Ok(eval_1d(grid, values, x)?.max(0.0) / total)
}

/// Spline CDF at `x`, consistent with [`integrate_1d`] and [`sample_1d`].
pub fn cdf_1d(grid: &Grid1D, values: &[f64], cumulative: &[f64], x: f64) -> Result<f64> {
    check_len(grid, values.len())?;
    check_len(grid, cumulative.len())?;
    let total = cumulative[cumulative.len() - 1];
    if !(total > 0.0) {
        return Err(Error::ZeroMass);
    }
    if x <= grid.first() {
        return Ok(0.0);
    }
    if x >= grid.last() {
        return Ok(1.0);
    }
    let i = grid.segment(x);
    let seg = SegmentCubic::new(&grid.nodes, values, i);
    let part = seg.clamped_integral((x - seg.x0) / seg.width) * seg.width;
    Ok(((cumulative[i] + part) / total).min(1.0))
}

/// Inverts the spline CDF at `u`; returns `(x, pdf)`.
///
/// `values` must be the same (already weighted) node values `cumulative` was
/// computed from.
pub fn sample_1d(grid: &Grid1D, values: &[f64], cumulative: &[f64], u: f64) -> Result<(f64, f64)> {
    check_len(grid, values.len())?;
    check_len(grid, cumulative.len())?;
    let total = cumulative[cumulative.len() - 1];
    if !(total > 0.0) {
        return Err(Error::ZeroMass);
    }
    if !(0.0..=1.0).contains(&u) {
        return Err(Error::InvalidInput(format!("u = {u} outside [0, 1]")));
    }
    let pdf_at = |x: f64| pdf_1d(grid, values, total, x);
    if u == 0.0 {
        return Ok((grid.first(), pdf_at(grid.first())?));
    }
    if u == 1.0 {
        return Ok((grid.last(), pdf_at(grid.last())?));
    }
    let target = u * total;
    let n = grid.len();
    let i = cumulative
        .partition_point(|c| *c <= target)
        .saturating_sub(1)
        .min(n - 2);
    let seg = SegmentCubic::new(&grid.nodes, values, i);
    let seg_mass = seg.mass();
    if !(seg_mass > 0.0) {
        return Ok((seg.x0, pdf_at(seg.x0)?));
    }
    // Solve F(t) = goal in units of the local parameter.
    let goal = ((target - cumulative[i]) / seg.width).clamp(0.0, seg_mass / seg.width);
    let t = invert_segment(&seg, goal)?;
    let x = (seg.x0 + t * seg.width).clamp(grid.nodes[i], grid.nodes[i + 1]);
    Ok((x, pdf_at(x)?))
}

fn invert_segment(seg: &SegmentCubic, goal: f64) -> Result<f64> {
    const MAX_ITERATIONS: usize = 100;
    let scale = seg.clamped_integral(1.0);
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    let mut t = if scale > 0.0 { goal / scale } else { 0.5 };
    for _ in 0..MAX_ITERATIONS {
        let err = seg.clamped_integral(t) - goal;
        if err.abs() <= 1e-14 * scale {
            return Ok(t);
        }
        if err > 0.0 {
            hi = t;
        } else {
            lo = t;
        }
        if hi - lo <= 2.0 * f64::EPSILON {
            return Ok(t);
        }
        let dens = seg.p(t).max(0.0);
        let step = t - err / dens;
        t = if dens > 0.0 && step > lo && step < hi {
            step
        } else {
            0.5 * (lo + hi)
        };
    }
    Err(Error::IterationLimit {
        iterations: MAX_ITERATIONS,
    })
}
