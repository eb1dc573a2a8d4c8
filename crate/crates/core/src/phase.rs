//! Phase-space points and N-particle configurations.
//!
//! A [`PhasePoint<D>`] is a pair `(q, p)` of position and momentum in `R^D`.
//! The physical case is `D = 3` (six-dimensional phase space); `D = 1` gives
//! the reduced 1+1 phase space used by the grid-based solvers. The same type
//! doubles as a tangent vector, i.e. the value of a vector field.

use alloc::vec::Vec;
use core::ops::{Add, AddAssign, Index, IndexMut, Mul, Neg, Sub, SubAssign};


#[allow(unused_imports)]
use num_traits::Float;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhasePoint<const D: usize = 3> {
    pub q: [f64; D],
    pub p: [f64; D],
}

impl<const D: usize> Default for PhasePoint<D> {
    fn default() -> Self {
        Self::zero()
    }
}

impl<const D: usize> PhasePoint<D> {
    /// Number of scalar coordinates, `2 D`.
    pub const DIM: usize = 2 * D;

    pub const fn new(q: [f64; D], p: [f64; D]) -> Self {
        Self { q, p }
    }

    pub const fn zero() -> Self {
        Self {
            q: [0.0; D],
            p: [0.0; D],
        }
    }

    /// Builds a point from `2 D` coordinates laid out as `(q, p)`.
    pub fn from_coords(c: &[f64]) -> Self {
        debug_assert_eq!(c.len(), 2 * D);
        let mut x = Self::zero();
        x.q.copy_from_slice(&c[..D]);
        x.p.copy_from_slice(&c[D..2 * D]);
        x
    }

    pub fn write_coords(&self, out: &mut [f64]) {
        out[..D].copy_from_slice(&self.q);
        out[D..2 * D].copy_from_slice(&self.p);
    }

    pub fn coords(&self) -> impl Iterator<Item = f64> + '_ {
        self.q.iter().chain(self.p.iter()).copied()
    }

    /// Coordinate `i` in the `(q, p)` layout.
    pub fn coord(&self, i: usize) -> f64 {
        if i < D {
            self.q[i]
        } else {
            self.p[i - D]
        }
    }

    pub fn coord_mut(&mut self, i: usize) -> &mut f64 {
        if i < D {
            &mut self.q[i]
        } else {
            &mut self.p[i - D]
        }
    }

    pub fn norm_sq(&self) -> f64 {
        self.coords().map(|c| c * c).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.coords().all(f64::is_finite)
    }

    /// `self + a * v`.
    pub fn axpy(&self, a: f64, v: &Self) -> Self {
        let mut out = *self;
        for i in 0..D {
            out.q[i] += a * v.q[i];
            out.p[i] += a * v.p[i];
        }
        out
    }

    pub fn distance(&self, other: &Self) -> f64 {
        (*self - *other).norm()
    }
}

impl<const D: usize> Add for PhasePoint<D> {
    type Output = Self;
    fn add(mut self, rhs: Self) -> Self {
        self += rhs;
        self
    }
}

impl<const D: usize> AddAssign for PhasePoint<D> {
    fn add_assign(&mut self, rhs: Self) {
        for i in 0..D {
            self.q[i] += rhs.q[i];
            self.p[i] += rhs.p[i];
        }
    }
}

impl<const D: usize> Sub for PhasePoint<D> {
    type Output = Self;
    fn sub(mut self, rhs: Self) -> Self {
        self -= rhs;
        self
    }
}

impl<const D: usize> SubAssign for PhasePoint<D> {
    fn sub_assign(&mut self, rhs: Self) {
        for i in 0..D {
            self.q[i] -= rhs.q[i];
            self.p[i] -= rhs.p[i];
        }
    }
}

impl<const D: usize> Mul<f64> for PhasePoint<D> {
    type Output = Self;
    fn mul(mut self, a: f64) -> Self {
        for i in 0..D {
            self.q[i] *= a;
            self.p[i] *= a;
        }
        self
    }
}

impl<const D: usize> Neg for PhasePoint<D> {
    type Output = Self;
    fn neg(self) -> Self {
        self * -1.0
    }
}

/// Ordered N-tuple of phase points; the microscopic state `X in R^{2DN}`.
///
/// The same type is used for values of the N-particle vector field.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct Configuration<const D: usize = 3> {
    points: Vec<PhasePoint<D>>,
}

impl<const D: usize> Configuration<D> {
    pub fn new(points: Vec<PhasePoint<D>>) -> Self {
        Self { points }
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            points: alloc::vec![PhasePoint::zero(); n],
        }
    }

    /// Builds a configuration from `2 D N` coordinates, particle by particle.
    pub fn from_flat(coords: &[f64]) -> Self {
        debug_assert_eq!(coords.len() % (2 * D), 0);
        Self {
            points: coords.chunks_exact(2 * D).map(PhasePoint::from_coords).collect(),
        }
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = alloc::vec![0.0; self.points.len() * 2 * D];
        for (x, chunk) in self.points.iter().zip(out.chunks_exact_mut(2 * D)) {
            x.write_coords(chunk);
        }
        out
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[PhasePoint<D>] {
        &self.points
    }

    pub fn points_mut(&mut self) -> &mut [PhasePoint<D>] {
        &mut self.points
    }

    pub fn into_points(self) -> Vec<PhasePoint<D>> {
        self.points
    }

    pub fn iter(&self) -> core::slice::Iter<'_, PhasePoint<D>> {
        self.points.iter()
    }

    /// Euclidean norm of the concatenated `2 D N` vector.
    pub fn norm(&self) -> f64 {
        self.points.iter().map(PhasePoint::norm_sq).sum::<f64>().sqrt()
    }

    pub fn distance(&self, other: &Self) -> f64 {
        debug_assert_eq!(self.len(), other.len());
        self.points
            .iter()
            .zip(&other.points)
            .map(|(a, b)| (*a - *b).norm_sq())
            .sum::<f64>()
            .sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.points.iter().all(PhasePoint::is_finite)
    }

    /// `self + a * v`, particle by particle.
    pub fn axpy(&self, a: f64, v: &Self) -> Self {
        debug_assert_eq!(self.len(), v.len());
        Self {
            points: self
                .points
                .iter()
                .zip(&v.points)
                .map(|(x, dx)| x.axpy(a, dx))
                .collect(),
        }
    }

    /// Returns the configuration `Y` with `Y[i] = X[perm[i]]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        debug_assert_eq!(perm.len(), self.len());
        Self {
            points: perm.iter().map(|&j| self.points[j]).collect(),
        }
    }
}

impl<const D: usize> Index<usize> for Configuration<D> {
    type Output = PhasePoint<D>;
    fn index(&self, i: usize) -> &PhasePoint<D> {
        &self.points[i]
    }
}

impl<const D: usize> IndexMut<usize> for Configuration<D> {
    fn index_mut(&mut self, i: usize) -> &mut PhasePoint<D> {
        &mut self.points[i]
    }
}

impl<const D: usize> From<Vec<PhasePoint<D>>> for Configuration<D> {
    fn from(points: Vec<PhasePoint<D>>) -> Self {
        Self { points }
    }
}

impl<'a, const D: usize> IntoIterator for &'a Configuration<D> {
    type Item = &'a PhasePoint<D>;
    type IntoIter = core::slice::Iter<'a, PhasePoint<D>>;
    fn into_iter(self) -> Self::IntoIter {
        self.points.iter()
    }
}
