//! One-particle densities: regular grids over a box, weighted sample clouds,
//! analytic densities, and time-indexed curves of them.

use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use crate::error::{input, Error, Result};
use crate::phase::PhasePoint;
use crate::rng::GaussianProduct;

/// Mass tolerance for normalized densities.
pub const MASS_TOL: f64 = 1e-8;

/// A density that can be evaluated pointwise on `R^dim`.
pub trait Evaluable: Sync {
    fn dim(&self) -> usize;
    fn eval(&self, x: &[f64]) -> f64;
}

impl<T: Evaluable + ?Sized> Evaluable for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn eval(&self, x: &[f64]) -> f64 {
        (**self).eval(x)
    }
}

/// Closure-backed evaluable.
pub struct FnDensity<F> {
    pub dim: usize,
    pub f: F,
}

impl<F: Fn(&[f64]) -> f64 + Sync> Evaluable for FnDensity<F> {
    fn dim(&self) -> usize {
        self.dim
    }
    fn eval(&self, x: &[f64]) -> f64 {
        (self.f)(x)
    }
}

impl Evaluable for GaussianProduct {
    fn dim(&self) -> usize {
        self.mean.len()
    }
    fn eval(&self, x: &[f64]) -> f64 {
        self.density(x)
    }
}

/// Cell-centred values on a regular lattice over `[lo, hi]`, row-major with
/// the last axis fastest.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

impl Grid {
    pub fn zeros(lo: Vec<f64>, hi: Vec<f64>, shape: Vec<usize>) -> Result<Self> {
        if lo.len() != hi.len() || lo.len() != shape.len() || lo.is_empty() {
            return input("grid box and shape must have equal, nonzero dimension");
        }
        if lo.iter().zip(&hi).any(|(a, b)| !(a < b) || !a.is_finite() || !b.is_finite()) {
            return input("grid box must satisfy lo < hi");
        }
        if shape.iter().any(|&s| s == 0) {
            return input("grid shape entries must be positive");
        }
        let cells = shape.iter().product();
        Ok(Self {
            lo,
            hi,
            shape,
            values: vec![0.0; cells],
        })
    }

    pub fn cube(dim: usize, lo: f64, hi: f64, n: usize) -> Result<Self> {
        Self::zeros(vec![lo; dim], vec![hi; dim], vec![n; dim])
    }

    /// Samples `f` at the cell centres.
    pub fn sample(lo: Vec<f64>, hi: Vec<f64>, shape: Vec<usize>, f: &dyn Evaluable) -> Result<Self> {
        let mut g = Self::zeros(lo, hi, shape)?;
        if f.dim() != g.dim() {
            return input("density dimension differs from grid dimension");
        }
        g.fill_with(|x| f.eval(x));
        Ok(g)
    }

    /// Same layout, new values.
    pub fn like(&self, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), self.values.len());
        Self {
            lo: self.lo.clone(),
            hi: self.hi.clone(),
            shape: self.shape.clone(),
            values,
        }
    }

    pub fn fill_with(&mut self, mut f: impl FnMut(&[f64]) -> f64) {
        let mut x = vec![0.0; self.dim()];
        for i in 0..self.values.len() {
            self.center(i, &mut x);
            self.values[i] = f(&x);
        }
    }

    pub fn dim(&self) -> usize {
        self.shape.len()
    }

    pub fn cells(&self) -> usize {
        self.values.len()
    }

    pub fn width(&self, axis: usize) -> f64 {
        (self.hi[axis] - self.lo[axis]) / self.shape[axis] as f64
    }

    pub fn cell_volume(&self) -> f64 {
        (0..self.dim()).map(|a| self.width(a)).product()
    }

    /// Euclidean diameter of one cell.
    pub fn cell_diameter(&self) -> f64 {
        (0..self.dim()).map(|a| self.width(a) * self.width(a)).sum::<f64>().sqrt()
    }

    pub fn same_layout(&self, other: &Self) -> bool {
        self.shape == other.shape && self.lo == other.lo && self.hi == other.hi
    }

    pub fn unravel(&self, mut flat: usize, out: &mut [usize]) {
        for a in (0..self.dim()).rev() {
            out[a] = flat % self.shape[a];
            flat /= self.shape[a];
        }
    }

    pub fn ravel(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.shape).fold(0, |acc, (&i, &s)| acc * s + i)
    }

    /// Stride of `axis` in the flat layout.
    pub fn stride(&self, axis: usize) -> usize {
        self.shape[axis + 1..].iter().product()
    }

    pub fn center(&self, flat: usize, out: &mut [f64]) {
        let mut rem = flat;
        for a in (0..self.dim()).rev() {
            let i = rem % self.shape[a];
            rem /= self.shape[a];
            out[a] = self.lo[a] + (i as f64 + 0.5) * self.width(a);
        }
    }

    pub fn axis_centers(&self, axis: usize) -> Vec<f64> {
        let h = self.width(axis);
        (0..self.shape[axis]).map(|i| self.lo[axis] + (i as f64 + 0.5) * h).collect()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter().zip(self.lo.iter().zip(&self.hi)).all(|(&v, (&a, &b))| v >= a && v <= b)
    }

    /// Riemann-sum mass.
    pub fn mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.cell_volume()
    }

    /// Scales to unit mass and returns the defect `1 - mass` before scaling.
    pub fn normalize(&mut self) -> Result<f64> {
        let m = self.mass();
        if !(m > 0.0 && m.is_finite()) {
            return Err(Error::Degenerate("grid has no positive mass"));
        }
        let inv = 1.0 / m;
        self.values.iter_mut().for_each(|v| *v *= inv);
        Ok(1.0 - m)
    }

    pub fn check_density(&self) -> Result<()> {
        if self.values.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return input("density values must be finite and nonnegative");
        }
        if (self.mass() - 1.0).abs() > MASS_TOL {
            return input("density must have unit mass");
        }
        Ok(())
    }

    /// Multilinear interpolation between cell centres; zero outside the box,
    /// constant extension within the outer half-cells.
    pub fn interpolate(&self, x: &[f64]) -> f64 {
        let d = self.dim();
        if !self.contains(x) {
            return 0.0;
        }
        let mut base = [0usize; 8];
        let mut frac = [0.0f64; 8];
        let mut two_sided = [false; 8];
        assert!(d <= 8, "interpolation supports at most 8 axes");
        for a in 0..d {
            let u = (x[a] - self.lo[a]) / self.width(a) - 0.5;
            let n = self.shape[a];
            if u <= 0.0 {
                base[a] = 0;
                frac[a] = 0.0;
            } else if u >= (n - 1) as f64 {
                base[a] = n - 1;
                frac[a] = 0.0;
            } else {
                let i = u.floor() as usize;
                base[a] = i;
                frac[a] = u - i as f64;
            }
            two_sided[a] = frac[a] > 0.0;
        }
        let mut acc = 0.0;
        for corner in 0..(1usize << d) {
            let mut w = 1.0;
            let mut flat = 0usize;
            let mut skip = false;
            for a in 0..d {
                let up = corner >> (d - 1 - a) & 1 == 1;
                if up && !two_sided[a] {
                    skip = true;
                    break;
                }
                let i = base[a] + usize::from(up);
                w *= if up { frac[a] } else { 1.0 - frac[a] };
                flat = flat * self.shape[a] + i;
            }
            if !skip && w != 0.0 {
                acc += w * self.values[flat];
            }
        }
        acc
    }

    /// Marginal over the axes listed in `keep`, as a grid on those axes.
    pub fn marginal(&self, keep: &[usize]) -> Result<Grid> {
        if keep.is_empty() || keep.iter().any(|&a| a >= self.dim()) {
            return input("marginal axes out of range");
        }
        let mut out = Grid::zeros(
            keep.iter().map(|&a| self.lo[a]).collect(),
            keep.iter().map(|&a| self.hi[a]).collect(),
            keep.iter().map(|&a| self.shape[a]).collect(),
        )?;
        let dropped: f64 = (0..self.dim())
            .filter(|a| !keep.contains(a))
            .map(|a| self.width(a))
            .product();
        let mut idx = vec![0usize; self.dim()];
        let mut sub = vec![0usize; keep.len()];
        for (flat, &v) in self.values.iter().enumerate() {
            self.unravel(flat, &mut idx);
            for (s, &a) in sub.iter_mut().zip(keep) {
                *s = idx[a];
            }
            let o = out.ravel(&sub);
            out.values[o] += v * dropped;
        }
        Ok(out)
    }
}

impl Evaluable for Grid {
    fn dim(&self) -> usize {
        self.shape.len()
    }
    fn eval(&self, x: &[f64]) -> f64 {
        self.interpolate(x)
    }
}

/// Weighted sample points in `R^dim`, stored flat.
#[derive(Clone, Debug, PartialEq)]
pub struct Cloud {
    pub dim: usize,
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Cloud {
    pub fn new(dim: usize, points: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if dim == 0 || points.len() != dim * weights.len() {
            return input("cloud points and weights disagree in length");
        }
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return input("cloud weights must be finite and nonnegative");
        }
        Ok(Self { dim, points, weights })
    }

    /// Equal weights `1 / M`.
    pub fn uniform(dim: usize, points: Vec<f64>) -> Result<Self> {
        let m = points.len() / dim.max(1);
        Self::new(dim, points, vec![1.0 / m as f64; m])
    }

    pub fn from_phase_points<const D: usize>(pts: &[PhasePoint<D>]) -> Self {
        let mut flat = vec![0.0; pts.len() * 2 * D];
        for (p, c) in pts.iter().zip(flat.chunks_exact_mut(2 * D)) {
            p.write_coords(c);
        }
        let m = pts.len();
        Self {
            dim: 2 * D,
            points: flat,
            weights: vec![1.0 / m as f64; m],
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn normalize(&mut self) -> Result<f64> {
        let m = self.mass();
        if !(m > 0.0) {
            return Err(Error::Degenerate("cloud has no positive weight"));
        }
        self.weights.iter_mut().for_each(|w| *w /= m);
        Ok(1.0 - m)
    }
}

/// A one-particle density as a grid or as a weighted cloud.
#[derive(Clone, Debug, PartialEq)]
pub enum DensityRep {
    Grid(Grid),
    Cloud(Cloud),
}

impl DensityRep {
    pub fn tag(&self) -> &'static str {
        match self {
            DensityRep::Grid(_) => "grid",
            DensityRep::Cloud(_) => "cloud",
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            DensityRep::Grid(g) => g.dim(),
            DensityRep::Cloud(c) => c.dim,
        }
    }

    pub fn mass(&self) -> f64 {
        match self {
            DensityRep::Grid(g) => g.mass(),
            DensityRep::Cloud(c) => c.mass(),
        }
    }

    pub fn as_grid(&self) -> Option<&Grid> {
        match self {
            DensityRep::Grid(g) => Some(g),
            DensityRep::Cloud(_) => None,
        }
    }

    pub fn as_cloud(&self) -> Option<&Cloud> {
        match self {
            DensityRep::Cloud(c) => Some(c),
            DensityRep::Grid(_) => None,
        }
    }

    /// Point masses: cloud atoms, or grid cell centres carrying cell mass.
    pub fn atoms(&self) -> (Vec<f64>, Vec<f64>) {
        match self {
            DensityRep::Cloud(c) => (c.points.clone(), c.weights.clone()),
            DensityRep::Grid(g) => {
                let d = g.dim();
                let vol = g.cell_volume();
                let mut pts = Vec::new();
                let mut w = Vec::new();
                let mut x = vec![0.0; d];
                for (i, &v) in g.values.iter().enumerate() {
                    if v != 0.0 {
                        g.center(i, &mut x);
                        pts.extend_from_slice(&x);
                        w.push(v * vol);
                    }
                }
                (pts, w)
            }
        }
    }
}

/// A curve `t -> f_t` given by slices at increasing times.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeDensity {
    pub times: Vec<f64>,
    pub slices: Vec<DensityRep>,
}

impl TimeDensity {
    pub fn new(times: Vec<f64>, slices: Vec<DensityRep>) -> Result<Self> {
        if times.is_empty() || times.len() != slices.len() {
            return input("time density needs one slice per time stamp");
        }
        if times.windows(2).any(|w| !(w[0] < w[1])) {
            return input("time stamps must be strictly increasing");
        }
        let d = slices[0].dim();
        if slices.iter().any(|s| s.dim() != d) {
            return input("all slices must share one dimension");
        }
        Ok(Self { times, slices })
    }

    /// The same density at `t_start` and `t_end`.
    pub fn stationary(f: DensityRep, t_start: f64, t_end: f64) -> Result<Self> {
        if !(t_start < t_end) {
            return input("stationary curve needs t_start < t_end");
        }
        Self::new(vec![t_start, t_end], vec![f.clone(), f])
    }

    pub fn start(&self) -> f64 {
        self.times[0]
    }

    pub fn end(&self) -> f64 {
        *self.times.last().expect("nonempty")
    }

    pub fn covers(&self, t: f64) -> bool {
        let tol = 1e-12 * (1.0 + self.end().abs());
        t >= self.start() - tol && t <= self.end() + tol
    }

    pub fn check_range(&self, t: f64) -> Result<()> {
        if self.covers(t) {
            Ok(())
        } else {
            Err(Error::Range {
                t,
                start: self.start(),
                end: self.end(),
            })
        }
    }

    /// Interpolation weights: `f_t = (1 - w) f_i + w f_{i+1}`, returned as `(i, w)`.
    pub fn bracket(&self, t: f64) -> Result<(usize, f64)> {
        self.check_range(t)?;
        let n = self.times.len();
        if n == 1 || t <= self.times[0] {
            return Ok((0, 0.0));
        }
        if t >= self.times[n - 1] {
            return Ok((n - 1, 0.0));
        }
        let i = self.times.partition_point(|&s| s <= t) - 1;
        let w = (t - self.times[i]) / (self.times[i + 1] - self.times[i]);
        Ok((i, w))
    }

    /// Linearly interpolated grid slice (grid curves only).
    pub fn grid_at(&self, t: f64) -> Result<Grid> {
        let (i, w) = self.bracket(t)?;
        let a = self.slices[i]
            .as_grid()
            .ok_or_else(|| Error::Input("grid slice expected".to_string()))?;
        if w == 0.0 {
            return Ok(a.clone());
        }
        let b = self.slices[i + 1]
            .as_grid()
            .ok_or_else(|| Error::Input("grid slice expected".to_string()))?;
        Ok(a.like(a.values.iter().zip(&b.values).map(|(x, y)| (1.0 - w) * x + w * y).collect()))
    }
}

/// Product Gaussian evaluable with free-transport evolution in closed form:
/// `f_t(q, p) = f_0(q - t p, p)`.
#[derive(Clone, Debug)]
pub struct FreeTransported<F> {
    pub f0: F,
    pub t: f64,
}

impl<F: Evaluable> Evaluable for FreeTransported<F> {
    fn dim(&self) -> usize {
        self.f0.dim()
    }
    fn eval(&self, x: &[f64]) -> f64 {
        let d = x.len() / 2;
        let mut y = [0.0f64; 16];
        let y = &mut y[..x.len()];
        for i in 0..d {
            y[i] = x[i] - self.t * x[d + i];
            y[d + i] = x[d + i];
        }
        self.f0.eval(y)
    }
}
