//! Sawtooth shears on the unit torus, their compositions and derivative cocycles.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::real::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParamError {
    #[error("alpha must be a positive finite number, got {0}")]
    NonPositive(f64),
    #[error("alpha = {0} is below the hyperbolic threshold {1}")]
    NotHyperbolic(f64, f64),
}

/// Amplitude of the two shears.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MapParams<T> {
    pub alpha: T,
}

impl<T: Real> MapParams<T> {
    pub fn new(alpha: T) -> Result<Self, ParamError> {
        if !(alpha > T::zero()) || !alpha.is_finite() {
            return Err(ParamError::NonPositive(alpha.f64()));
        }
        Ok(Self { alpha })
    }

    pub fn require_hyperbolic(&self) -> Result<(), ParamError> {
        self.require_at_least(T::c(4.0))
    }

    pub fn require_at_least(&self, min: T) -> Result<(), ParamError> {
        if self.alpha < min {
            Err(ParamError::NotHyperbolic(self.alpha.f64(), min.f64()))
        } else {
            Ok(())
        }
    }
}

/// Reduce into `[0, 1)`. Values that round up to 1 are sent to 0.
#[inline]
pub fn wrap<T: Real>(v: T) -> T {
    let r = v - v.floor();
    if r >= T::one() || r < T::zero() {
        T::zero()
    } else {
        r
    }
}

/// Signed distance on the circle, in `[-1/2, 1/2)`.
#[inline]
pub fn circle_delta<T: Real>(a: T, b: T) -> T {
    let d = a - b;
    d - (d + T::half()).floor()
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TorusPoint<T> {
    pub x: T,
    pub y: T,
}

impl<T: Real> TorusPoint<T> {
    pub fn new(x: T, y: T) -> Self {
        Self { x: wrap(x), y: wrap(y) }
    }

    /// Distance in the flat torus metric.
    pub fn dist(&self, other: &Self) -> T {
        circle_delta(self.x, other.x).hypot(circle_delta(self.y, other.y))
    }
}

#[inline]
fn sawtooth<T: Real>(v: T) -> T {
    (v - T::half()).abs()
}

/// Sign convention at the kinks: +1 only strictly above one half.
#[inline]
pub fn kink_sign<T: Real>(v: T) -> i8 {
    if v > T::half() {
        1
    } else {
        -1
    }
}

pub fn shear1<T: Real>(z: TorusPoint<T>, p: &MapParams<T>) -> TorusPoint<T> {
    TorusPoint { x: z.x, y: wrap(z.y + p.alpha * sawtooth(z.x)) }
}

pub fn shear2<T: Real>(z: TorusPoint<T>, p: &MapParams<T>) -> TorusPoint<T> {
    TorusPoint { x: wrap(z.x + p.alpha * sawtooth(z.y)), y: z.y }
}

pub fn shear1_inv<T: Real>(z: TorusPoint<T>, p: &MapParams<T>) -> TorusPoint<T> {
    TorusPoint { x: z.x, y: wrap(z.y - p.alpha * sawtooth(z.x)) }
}

pub fn shear2_inv<T: Real>(z: TorusPoint<T>, p: &MapParams<T>) -> TorusPoint<T> {
    TorusPoint { x: wrap(z.x - p.alpha * sawtooth(z.y)), y: z.y }
}

pub fn forward_map<T: Real>(z: TorusPoint<T>, p: &MapParams<T>) -> TorusPoint<T> {
    shear2(shear1(z, p), p)
}

pub fn inverse_map<T: Real>(z: TorusPoint<T>, p: &MapParams<T>) -> TorusPoint<T> {
    shear1_inv(shear2_inv(z, p), p)
}

pub fn iterate<T: Real>(mut z: TorusPoint<T>, n: usize, dir: Direction, p: &MapParams<T>) -> TorusPoint<T> {
    for _ in 0..n {
        z = match dir {
            Direction::Forward => forward_map(z, p),
            Direction::Backward => inverse_map(z, p),
        };
    }
    z
}

/// Transport `z` from time `s` to time `t` along the time-periodic sawtooth flow.
///
/// Works in either time direction, so `flow_map(t, s, ..)` is the inverse of
/// `flow_map(s, t, ..)`.
pub fn flow_map<T: Real>(s: T, t: T, z: TorusPoint<T>, p: &MapParams<T>) -> TorusPoint<T> {
    let two = T::c(2.0);
    let mut now = s;
    let mut z = z;
    if t >= s {
        while now < t {
            let k = (now * two).floor();
            let end = ((k + T::one()) / two).min(t);
            z = shear_for(z, k, end - now, p);
            now = end;
        }
    } else {
        while now > t {
            let k = (now * two).ceil() - T::one();
            let start = (k / two).max(t);
            z = shear_for(z, k, start - now, p);
            now = start;
        }
    }
    z
}

// Shear active during half-period `k`, run for signed duration `d`.
fn shear_for<T: Real>(z: TorusPoint<T>, k: T, d: T, p: &MapParams<T>) -> TorusPoint<T> {
    let amount = T::c(2.0) * p.alpha * d;
    let even = (k / T::c(2.0)).floor() * T::c(2.0) == k;
    if even {
        TorusPoint { x: z.x, y: wrap(z.y + amount * sawtooth(z.x)) }
    } else {
        TorusPoint { x: wrap(z.x + amount * sawtooth(z.y)), y: z.y }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    Forward,
    Backward,
}

/// Affine piece of `T` (forward) or `T^{-1}` (backward) containing a point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BranchId {
    pub index: u8,
    pub direction: Direction,
}

impl BranchId {
    /// Kink signs `(s1, s2)` of the forward piece: `s1` from `x`, `s2` from the
    /// first-shear image `y`.
    pub fn signs(&self) -> (i8, i8) {
        let s1 = if self.index % 2 == 1 { -1 } else { 1 };
        let s2 = if self.index <= 2 { -1 } else { 1 };
        (s1, s2)
    }

    fn from_signs(s1: i8, s2: i8, direction: Direction) -> Self {
        let mut index = if s1 < 0 { 1 } else { 2 };
        if s2 > 0 {
            index += 2;
        }
        Self { index, direction }
    }
}

pub fn branch_id<T: Real>(z: TorusPoint<T>, p: &MapParams<T>, dir: Direction) -> BranchId {
    match dir {
        Direction::Forward => {
            let s1 = kink_sign(z.x);
            let y1 = wrap(z.y + p.alpha * sawtooth(z.x));
            BranchId::from_signs(s1, kink_sign(y1), dir)
        }
        Direction::Backward => {
            let x1 = wrap(z.x - p.alpha * sawtooth(z.y));
            BranchId::from_signs(kink_sign(x1), kink_sign(z.y), dir)
        }
    }
}

/// Distance from the nearest kink line crossed while applying one step at `z`.
pub fn singular_distance<T: Real>(z: TorusPoint<T>, p: &MapParams<T>, dir: Direction) -> T {
    let kink = |v: T| {
        let a = circle_delta(v, T::zero()).abs();
        let b = (v - T::half()).abs();
        a.min(b)
    };
    match dir {
        Direction::Forward => kink(z.x).min(kink(wrap(z.y + p.alpha * sawtooth(z.x)))),
        Direction::Backward => kink(z.y).min(kink(wrap(z.x - p.alpha * sawtooth(z.y)))),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mat2<T> {
    pub m: [[T; 2]; 2],
}

impl<T: Real> Mat2<T> {
    pub fn identity() -> Self {
        Self { m: [[T::one(), T::zero()], [T::zero(), T::one()]] }
    }

    pub fn new(a: T, b: T, c: T, d: T) -> Self {
        Self { m: [[a, b], [c, d]] }
    }

    pub fn det(&self) -> T {
        self.m[0][0] * self.m[1][1] - self.m[0][1] * self.m[1][0]
    }

    pub fn trace(&self) -> T {
        self.m[0][0] + self.m[1][1]
    }

    pub fn mul(&self, o: &Self) -> Self {
        let a = &self.m;
        let b = &o.m;
        Self {
            m: [
                [a[0][0] * b[0][0] + a[0][1] * b[1][0], a[0][0] * b[0][1] + a[0][1] * b[1][1]],
                [a[1][0] * b[0][0] + a[1][1] * b[1][0], a[1][0] * b[0][1] + a[1][1] * b[1][1]],
            ],
        }
    }

    pub fn apply(&self, v: [T; 2]) -> [T; 2] {
        [self.m[0][0] * v[0] + self.m[0][1] * v[1], self.m[1][0] * v[0] + self.m[1][1] * v[1]]
    }

    pub fn inverse(&self) -> Self {
        let d = self.det();
        Self::new(self.m[1][1] / d, -self.m[0][1] / d, -self.m[1][0] / d, self.m[0][0] / d)
    }

    pub fn max_abs_diff(&self, o: &Self) -> T {
        let mut r = T::zero();
        for i in 0..2 {
            for j in 0..2 {
                r = r.max((self.m[i][j] - o.m[i][j]).abs());
            }
        }
        r
    }

    pub fn norm_max(&self) -> T {
        self.max_abs_diff(&Self::new(T::zero(), T::zero(), T::zero(), T::zero()))
    }

    /// Eigenvalues when real, ordered by decreasing modulus.
    pub fn real_eigenvalues(&self) -> Option<(T, T)> {
        let tr = self.trace();
        let disc = tr * tr - T::c(4.0) * self.det();
        if disc < T::zero() {
            return None;
        }
        let r = disc.sqrt();
        let big = if tr >= T::zero() { (tr + r) / T::c(2.0) } else { (tr - r) / T::c(2.0) };
        let small = self.det() / big;
        Some((big, small))
    }

    /// Eigenvector for a real eigenvalue `lambda`.
    pub fn eigenvector(&self, lambda: T) -> [T; 2] {
        let [[a, b], [c, d]] = self.m;
        let v = if b.abs() + (a - lambda).abs() >= c.abs() + (d - lambda).abs() {
            [b, lambda - a]
        } else {
            [lambda - d, c]
        };
        let n = v[0].hypot(v[1]);
        [v[0] / n, v[1] / n]
    }
}

/// Affine branch `z -> linear z + offset (mod 1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BranchMatrix<T> {
    pub linear: Mat2<T>,
    pub offset: [T; 2],
}

impl<T: Real> BranchMatrix<T> {
    pub fn apply(&self, z: TorusPoint<T>) -> TorusPoint<T> {
        let v = self.linear.apply([z.x, z.y]);
        TorusPoint::new(v[0] + self.offset[0], v[1] + self.offset[1])
    }
}

/// Chain-rule derivative of the affine piece `id`. The offset is the one valid on
/// the strip with no wrap in the intermediate coordinate; use [`local_branch`] for
/// the offset at a given point when `alpha` is not an integer.
pub fn branch_matrix<T: Real>(id: BranchId, p: &MapParams<T>) -> BranchMatrix<T> {
    let (s1, s2) = id.signs();
    let a = p.alpha;
    let s1 = T::c(s1 as f64);
    let s2 = T::c(s2 as f64);
    let h = T::half();
    let fwd = BranchMatrix {
        linear: Mat2::new(T::one() + s1 * s2 * a * a, s2 * a, s1 * a, T::one()),
        offset: [wrap(-s1 * s2 * a * a * h - s2 * a * h), wrap(-s1 * a * h)],
    };
    match id.direction {
        Direction::Forward => fwd,
        Direction::Backward => {
            let inv = fwd.linear.inverse_exact();
            let o = inv.apply(fwd.offset);
            BranchMatrix { linear: inv, offset: [wrap(-o[0]), wrap(-o[1])] }
        }
    }
}

/// Affine piece through `z`, with the offset matching the map at `z`.
pub fn local_branch<T: Real>(z: TorusPoint<T>, p: &MapParams<T>, dir: Direction) -> BranchMatrix<T> {
    let linear = branch_matrix(branch_id(z, p, dir), p).linear;
    let image = iterate(z, 1, dir, p);
    let v = linear.apply([z.x, z.y]);
    BranchMatrix { linear, offset: [wrap(image.x - v[0]), wrap(image.y - v[1])] }
}

impl<T: Real> Mat2<T> {
    // Determinant-one inverse without division.
    fn inverse_exact(&self) -> Self {
        Self::new(self.m[1][1], -self.m[0][1], -self.m[1][0], self.m[0][0])
    }
}

/// Matrices printed in the source derivation, two of which fail to preserve area.
/// Kept only so tests can document the discrepancy.
pub fn printed_matrix_list<T: Real>(alpha: T) -> [Mat2<T>; 4] {
    let one = T::one();
    let a2 = alpha * alpha;
    [
        Mat2::new(one + a2, alpha, alpha, one),
        Mat2::new(one + a2, alpha, -alpha, one),
        Mat2::new(one - a2, alpha, alpha, one),
        Mat2::new(one - a2, -alpha, alpha, one),
    ]
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cocycle<T> {
    pub matrix: Mat2<T>,
    pub word: Vec<u8>,
    /// Some orbit point was within `1e-12` of a kink line.
    pub flagged: bool,
}

/// Product `DT^{±n}(z)` along the orbit, with the branch itinerary.
pub fn derivative_cocycle<T: Real>(z: TorusPoint<T>, n: usize, dir: Direction, p: &MapParams<T>) -> Cocycle<T> {
    let tol = T::c(1e-12);
    let mut m = Mat2::identity();
    let mut word = Vec::with_capacity(n);
    let mut flagged = false;
    let mut cur = z;
    for _ in 0..n {
        if singular_distance(cur, p, dir) < tol {
            flagged = true;
        }
        let id = branch_id(cur, p, dir);
        word.push(id.index);
        m = branch_matrix(id, p).linear.mul(&m);
        cur = iterate(cur, 1, dir, p);
    }
    Cocycle { matrix: m, word, flagged }
}

/// Product `A_{w_{n-1}} ... A_{w_0}` for an explicit word.
pub fn word_product<T: Real>(word: &[u8], dir: Direction, p: &MapParams<T>) -> Mat2<T> {
    word.iter().fold(Mat2::identity(), |acc, &index| {
        branch_matrix(BranchId { index, direction: dir }, p).linear.mul(&acc)
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConeKind {
    Stable,
    Unstable,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConeSpec<T> {
    pub kind: ConeKind,
    pub aperture: T,
}

impl<T: Real> ConeSpec<T> {
    pub fn standard(kind: ConeKind, p: &MapParams<T>) -> Self {
        Self { kind, aperture: T::c(4.0) / p.alpha.sqrt() }
    }

    pub fn narrow(kind: ConeKind, p: &MapParams<T>) -> Self {
        Self { kind, aperture: T::c(4.0) / p.alpha }
    }

    pub fn contains(&self, v: [T; 2]) -> bool {
        match self.kind {
            ConeKind::Stable => v[0].abs() <= self.aperture * v[1].abs(),
            ConeKind::Unstable => v[1].abs() <= self.aperture * v[0].abs(),
        }
    }

    /// Unit vector inside the cone at fractional opening `u` in `[-1, 1]`.
    pub fn vector(&self, u: T) -> [T; 2] {
        let (a, b) = match self.kind {
            ConeKind::Stable => (u * self.aperture, T::one()),
            ConeKind::Unstable => (T::one(), u * self.aperture),
        };
        let n = a.hypot(b);
        [a / n, b / n]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BranchSpectrum<T> {
    pub branch: u8,
    pub lambda_u: T,
    pub lambda_s: T,
    /// `tan` of the angle between `e_u` and the x-axis.
    pub tan_unstable: T,
    /// `tan` of the angle between `e_s` and the y-axis.
    pub tan_stable: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConeFailure<T> {
    pub z: TorusPoint<T>,
    pub v: [T; 2],
    pub direction: Direction,
    pub expansion: T,
    pub in_cone: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HyperbolicityReport<T> {
    pub branches: Vec<BranchSpectrum<T>>,
    pub min_forward_expansion: T,
    pub max_forward_expansion: T,
    pub min_backward_expansion: T,
    pub max_backward_expansion: T,
    pub failures: Vec<ConeFailure<T>>,
}

impl<T: Real> HyperbolicityReport<T> {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

pub fn branch_spectra<T: Real>(p: &MapParams<T>) -> Vec<BranchSpectrum<T>> {
    (1..=4u8)
        .map(|index| {
            let a = branch_matrix(BranchId { index, direction: Direction::Forward }, p).linear;
            let (lu, ls) = a.real_eigenvalues().unwrap_or((T::nan(), T::nan()));
            let eu = a.eigenvector(lu);
            let es = a.eigenvector(ls);
            BranchSpectrum {
                branch: index,
                lambda_u: lu,
                lambda_s: ls,
                tan_unstable: (eu[1] / eu[0]).abs(),
                tan_stable: (es[0] / es[1]).abs(),
            }
        })
        .collect()
}

/// Sample points and cone vectors; check `DT C_u ⊆ C_u`, `DT^{-1} C_s ⊆ C_s`
/// and expansion by at least `alpha^2 / 2`.
pub fn cone_invariance_check<T: Real>(p: &MapParams<T>, samples: usize, seed: u64) -> HyperbolicityReport<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cu = ConeSpec::standard(ConeKind::Unstable, p);
    let cs = ConeSpec::standard(ConeKind::Stable, p);
    let floor = p.alpha * p.alpha / T::c(2.0);
    let mut rep = HyperbolicityReport {
        branches: branch_spectra(p),
        min_forward_expansion: T::infinity(),
        max_forward_expansion: T::zero(),
        min_backward_expansion: T::infinity(),
        max_backward_expansion: T::zero(),
        failures: Vec::new(),
    };
    for i in 0..samples {
        let z = TorusPoint::new(T::c(rng.gen::<f64>()), T::c(rng.gen::<f64>()));
        // Alternate cone edges with interior directions.
        let u = match i % 4 {
            0 => T::one(),
            1 => -T::one(),
            _ => T::c(rng.gen_range(-1.0..=1.0)),
        };
        for (dir, cone) in [(Direction::Forward, cu), (Direction::Backward, cs)] {
            let v = cone.vector(u);
            let m = branch_matrix(branch_id(z, p, dir), p).linear;
            let w = m.apply(v);
            let e = w[0].hypot(w[1]);
            let inside = cone.contains(w);
            match dir {
                Direction::Forward => {
                    rep.min_forward_expansion = rep.min_forward_expansion.min(e);
                    rep.max_forward_expansion = rep.max_forward_expansion.max(e);
                }
                Direction::Backward => {
                    rep.min_backward_expansion = rep.min_backward_expansion.min(e);
                    rep.max_backward_expansion = rep.max_backward_expansion.max(e);
                }
            }
            if !inside || e < floor {
                rep.failures.push(ConeFailure { z, v, direction: dir, expansion: e, in_cone: inside });
            }
        }
    }
    rep
}
