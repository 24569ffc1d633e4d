//! Scalar fields: exactly evaluable closures, sampled grids and their spectra.

use std::sync::{Arc, OnceLock};

use num_complex::Complex;
use rayon::prelude::*;
use rustfft::FftPlanner;
use thiserror::Error;

use crate::real::Real;
use crate::torus::{flow_map, forward_map, inverse_map, MapParams, TorusPoint};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FieldError {
    #[error("grid size {0} must be a power of two and at least 8")]
    BadGrid(usize),
    #[error("cutoff {cutoff} must satisfy 1 <= N < M/2 = {half}")]
    Cutoff { cutoff: f64, half: usize },
    #[error("grid sizes differ: {0} vs {1}")]
    Mismatch(usize, usize),
}

/// One Fourier term `Re(amp * e^{2 pi i k.z})`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mode<T> {
    pub k: [i64; 2],
    pub amp: Complex<T>,
}

/// Point transformation applied before the inner closure is evaluated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Transform<T> {
    Inverse,
    Forward,
    /// Transport from time `from` to time `to`.
    Flow { from: T, to: T },
}

#[derive(Debug)]
enum Node<T> {
    Constant(T),
    Fourier(Vec<Mode<T>>),
    Composed { inner: ScalarClosure<T>, steps: Vec<Transform<T>>, params: MapParams<T> },
    Sum(Vec<(T, ScalarClosure<T>)>),
}

/// Scalar field evaluated exactly at any point: a Fourier base, point
/// transformations and linear combinations. Clones share structure.
#[derive(Debug, Clone)]
pub struct ScalarClosure<T>(Arc<Node<T>>);

impl<T: Real> ScalarClosure<T> {
    pub fn constant(c: T) -> Self {
        Self(Arc::new(Node::Constant(c)))
    }

    pub fn zero() -> Self {
        Self::constant(T::zero())
    }

    pub fn fourier(modes: Vec<Mode<T>>) -> Self {
        Self(Arc::new(Node::Fourier(modes)))
    }

    /// `amplitude * sin(2 pi k y)`.
    pub fn sine_y(amplitude: T, k: i64) -> Self {
        Self::fourier(vec![Mode { k: [0, k], amp: Complex::new(T::zero(), -amplitude) }])
    }

    /// `amplitude * sin(2 pi k x)`.
    pub fn sine_x(amplitude: T, k: i64) -> Self {
        Self::fourier(vec![Mode { k: [k, 0], amp: Complex::new(T::zero(), -amplitude) }])
    }

    /// `sqrt(2) sin(2 pi y)`, unit L² norm and mean zero.
    pub fn unit_sine_y() -> Self {
        Self::sine_y(T::SQRT_2(), 1)
    }

    pub fn compose(&self, steps: Vec<Transform<T>>, params: MapParams<T>) -> Self {
        if steps.is_empty() {
            return self.clone();
        }
        Self(Arc::new(Node::Composed { inner: self.clone(), steps, params }))
    }

    /// `f ∘ T^{-n}`.
    pub fn pullback(&self, n: usize, params: &MapParams<T>) -> Self {
        self.compose(vec![Transform::Inverse; n], *params)
    }

    pub fn sum(terms: Vec<(T, ScalarClosure<T>)>) -> Self {
        Self(Arc::new(Node::Sum(terms)))
    }

    pub fn add(&self, other: &Self) -> Self {
        Self::sum(vec![(T::one(), self.clone()), (T::one(), other.clone())])
    }

    pub fn scale(&self, c: T) -> Self {
        Self::sum(vec![(c, self.clone())])
    }

    pub fn eval(&self, z: TorusPoint<T>) -> T {
        match &*self.0 {
            Node::Constant(c) => *c,
            Node::Fourier(modes) => {
                let two_pi = T::PI() + T::PI();
                modes
                    .iter()
                    .map(|m| {
                        let ph = two_pi * (T::c(m.k[0] as f64) * z.x + T::c(m.k[1] as f64) * z.y);
                        m.amp.re * ph.cos() - m.amp.im * ph.sin()
                    })
                    .sum()
            }
            Node::Composed { inner, steps, params } => {
                let mut w = z;
                for s in steps {
                    w = match *s {
                        Transform::Inverse => inverse_map(w, params),
                        Transform::Forward => forward_map(w, params),
                        Transform::Flow { from, to } => flow_map(from, to, w, params),
                    };
                }
                inner.eval(w)
            }
            Node::Sum(terms) => terms.iter().map(|(c, f)| *c * f.eval(z)).sum(),
        }
    }

    /// Largest total number of map steps on any evaluation path.
    pub fn depth(&self) -> usize {
        match &*self.0 {
            Node::Constant(_) | Node::Fourier(_) => 0,
            Node::Composed { inner, steps, .. } => steps.len() + inner.depth(),
            Node::Sum(terms) => terms.iter().map(|(_, f)| f.depth()).max().unwrap_or(0),
        }
    }

    /// Number of `T^{-1}` steps on the deepest path when every transformation is
    /// an inverse step; `None` if any forward step or flow appears.
    pub fn inverse_depth(&self) -> Option<usize> {
        match &*self.0 {
            Node::Constant(_) | Node::Fourier(_) => Some(0),
            Node::Composed { inner, steps, .. } => {
                if steps.iter().all(|s| *s == Transform::Inverse) {
                    inner.inverse_depth().map(|d| d + steps.len())
                } else {
                    None
                }
            }
            Node::Sum(terms) => terms.iter().try_fold(0, |acc, (_, f)| f.inverse_depth().map(|d| acc.max(d))),
        }
    }

    /// Largest base wavenumber (sup norm) appearing anywhere.
    pub fn base_frequency(&self) -> i64 {
        match &*self.0 {
            Node::Constant(_) => 0,
            Node::Fourier(m) => m.iter().map(|m| m.k[0].abs().max(m.k[1].abs())).max().unwrap_or(0),
            Node::Composed { inner, .. } => inner.base_frequency(),
            Node::Sum(terms) => terms.iter().map(|(_, f)| f.base_frequency()).max().unwrap_or(0),
        }
    }

    /// The map parameters of the outermost composition, if any.
    pub fn params(&self) -> Option<MapParams<T>> {
        match &*self.0 {
            Node::Composed { params, .. } => Some(*params),
            Node::Sum(terms) => terms.iter().find_map(|(_, f)| f.params()),
            _ => None,
        }
    }

    /// Gradient scale estimate `max(1, k_base) * alpha^(2 depth)`.
    pub fn gradient_scale(&self) -> f64 {
        let k = self.base_frequency().max(1) as f64;
        match self.params() {
            Some(p) => k * p.alpha.f64().powi(2 * self.depth() as i32),
            None => k,
        }
    }
}

/// `M x M` samples at `(i/M, j/M)`, stored row-major in `i` (the x index).
#[derive(Debug, Clone, PartialEq)]
pub struct GridField<T> {
    pub m: usize,
    pub values: Vec<T>,
    /// Set when the sampled closure oscillates faster than the grid resolves.
    pub aliased: bool,
}

pub fn check_grid(m: usize) -> Result<(), FieldError> {
    if m < 8 || !m.is_power_of_two() {
        Err(FieldError::BadGrid(m))
    } else {
        Ok(())
    }
}

/// Aliasing rule: flagged when the gradient scale exceeds `M/4`.
pub fn alias_flag(scale: f64, m: usize) -> bool {
    scale > m as f64 / 4.0
}

pub fn sample<T: Real>(f: &ScalarClosure<T>, m: usize) -> Result<GridField<T>, FieldError> {
    check_grid(m)?;
    let inv = T::one() / T::c(m as f64);
    let mut values = vec![T::zero(); m * m];
    values.par_chunks_mut(m).enumerate().for_each(|(i, row)| {
        let x = T::c(i as f64) * inv;
        for (j, v) in row.iter_mut().enumerate() {
            *v = f.eval(TorusPoint { x, y: T::c(j as f64) * inv });
        }
    });
    Ok(GridField { m, values, aliased: alias_flag(f.gradient_scale(), m) })
}

impl<T: Real> GridField<T> {
    pub fn from_fn(m: usize, f: impl Fn(TorusPoint<T>) -> T + Sync) -> Result<Self, FieldError> {
        check_grid(m)?;
        let inv = T::one() / T::c(m as f64);
        let mut values = vec![T::zero(); m * m];
        values.par_chunks_mut(m).enumerate().for_each(|(i, row)| {
            for (j, v) in row.iter_mut().enumerate() {
                *v = f(TorusPoint { x: T::c(i as f64) * inv, y: T::c(j as f64) * inv });
            }
        });
        Ok(Self { m, values, aliased: false })
    }

    pub fn mean(&self) -> T {
        let s: T = self.values.iter().copied().sum();
        s / T::c((self.m * self.m) as f64)
    }

    pub fn at(&self, i: usize, j: usize) -> T {
        self.values[(i % self.m) * self.m + (j % self.m)]
    }

    /// Grid value when `z` sits on a node, periodic bicubic interpolation otherwise.
    pub fn value_at(&self, z: TorusPoint<T>) -> T {
        let mf = T::c(self.m as f64);
        let gx = z.x * mf;
        let gy = z.y * mf;
        let (ix, iy) = (gx.round(), gy.round());
        let snap = T::c(1e-9);
        if (gx - ix).abs() < snap && (gy - iy).abs() < snap {
            return self.at(ix.to_usize().unwrap_or(0), iy.to_usize().unwrap_or(0));
        }
        let (fx, fy) = (gx.floor(), gy.floor());
        let (tx, ty) = (gx - fx, gy - fy);
        let i0 = fx.to_i64().unwrap_or(0);
        let j0 = fy.to_i64().unwrap_or(0);
        let m = self.m as i64;
        let wx = catmull_rom(tx);
        let wy = catmull_rom(ty);
        let mut acc = T::zero();
        for (a, wa) in wx.iter().enumerate() {
            let i = (i0 - 1 + a as i64).rem_euclid(m) as usize;
            for (b, wb) in wy.iter().enumerate() {
                let j = (j0 - 1 + b as i64).rem_euclid(m) as usize;
                acc = acc + *wa * *wb * self.values[i * self.m + j];
            }
        }
        acc
    }

    pub fn map_points(&self, f: impl Fn(T, TorusPoint<T>) -> T + Sync) -> Self {
        let inv = T::one() / T::c(self.m as f64);
        let m = self.m;
        let mut values = self.values.clone();
        values.par_chunks_mut(m).enumerate().for_each(|(i, row)| {
            for (j, v) in row.iter_mut().enumerate() {
                *v = f(*v, TorusPoint { x: T::c(i as f64) * inv, y: T::c(j as f64) * inv });
            }
        });
        Self { m, values, aliased: self.aliased }
    }
}

fn catmull_rom<T: Real>(t: T) -> [T; 4] {
    let h = T::half();
    let t2 = t * t;
    let t3 = t2 * t;
    [
        h * (-t3 + T::c(2.0) * t2 - t),
        h * (T::c(3.0) * t3 - T::c(5.0) * t2 + T::c(2.0)),
        h * (-T::c(3.0) * t3 + T::c(4.0) * t2 + t),
        h * (t3 - t2),
    ]
}

pub fn inner_product<T: Real>(a: &GridField<T>, b: &GridField<T>) -> Result<T, FieldError> {
    if a.m != b.m {
        return Err(FieldError::Mismatch(a.m, b.m));
    }
    let s: T = a.values.par_iter().zip(b.values.par_iter()).map(|(x, y)| *x * *y).sum();
    Ok(s / T::c((a.m * a.m) as f64))
}

/// Unitary-normalized Fourier coefficients `(1/M²) Σ g e^{-2 pi i k.z}`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralField<T> {
    pub m: usize,
    pub coeffs: Vec<Complex<T>>,
    pub aliased: bool,
}

/// Signed wavenumber of FFT index `i`.
#[inline]
pub fn wavenumber(i: usize, m: usize) -> i64 {
    if i < m / 2 {
        i as i64
    } else {
        i as i64 - m as i64
    }
}

fn fft2<T: Real>(data: &mut [Complex<T>], m: usize, inverse: bool) {
    let mut planner = FftPlanner::<T>::new();
    let fft = if inverse { planner.plan_fft_inverse(m) } else { planner.plan_fft_forward(m) };
    data.par_chunks_mut(m).for_each(|row| fft.process(row));
    transpose(data, m);
    data.par_chunks_mut(m).for_each(|row| fft.process(row));
    transpose(data, m);
}

fn transpose<T: Copy>(data: &mut [T], m: usize) {
    const B: usize = 32;
    for bi in (0..m).step_by(B) {
        for bj in (bi..m).step_by(B) {
            for i in bi..(bi + B).min(m) {
                let start = if bi == bj { i + 1 } else { bj };
                for j in start..(bj + B).min(m) {
                    data.swap(i * m + j, j * m + i);
                }
            }
        }
    }
}

pub fn to_spectrum<T: Real>(g: &GridField<T>) -> SpectralField<T> {
    let m = g.m;
    let mut data: Vec<Complex<T>> = g.values.iter().map(|v| Complex::new(*v, T::zero())).collect();
    fft2(&mut data, m, false);
    let norm = T::one() / T::c((m * m) as f64);
    data.par_iter_mut().for_each(|c| *c = *c * norm);
    SpectralField { m, coeffs: data, aliased: g.aliased }
}

pub fn to_grid<T: Real>(s: &SpectralField<T>) -> GridField<T> {
    let mut data = s.coeffs.clone();
    fft2(&mut data, s.m, true);
    GridField { m: s.m, values: data.into_iter().map(|c| c.re).collect(), aliased: s.aliased }
}

impl<T: Real> SpectralField<T> {
    pub fn coeff(&self, kx: i64, ky: i64) -> Complex<T> {
        let m = self.m as i64;
        self.coeffs[(kx.rem_euclid(m) * m + ky.rem_euclid(m)) as usize]
    }

    /// Multiply each coefficient by `w(kx, ky)`.
    pub fn multiply(&self, w: impl Fn(i64, i64) -> T + Sync) -> Self {
        let m = self.m;
        let mut coeffs = self.coeffs.clone();
        coeffs.par_chunks_mut(m).enumerate().for_each(|(i, row)| {
            let kx = wavenumber(i, m);
            for (j, c) in row.iter_mut().enumerate() {
                *c = *c * w(kx, wavenumber(j, m));
            }
        });
        Self { m, coeffs, aliased: self.aliased }
    }

    pub fn l2_norm_sq(&self) -> T {
        self.coeffs.par_iter().map(|c| c.norm_sqr()).sum()
    }

    /// `Re Σ a(k) conj(b(k))`, the L² pairing of the underlying real fields.
    pub fn inner(&self, other: &Self) -> Result<T, FieldError> {
        if self.m != other.m {
            return Err(FieldError::Mismatch(self.m, other.m));
        }
        Ok(self.coeffs.par_iter().zip(other.coeffs.par_iter()).map(|(a, b)| (a * b.conj()).re).sum())
    }

    /// Largest deviation from `c(-k) = conj(c(k))`.
    pub fn symmetry_defect(&self) -> T {
        let m = self.m as i64;
        let mut worst = T::zero();
        for i in 0..m {
            for j in 0..m {
                let a = self.coeffs[(i * m + j) as usize];
                let b = self.coeffs[(((m - i) % m) * m + (m - j) % m) as usize];
                worst = worst.max((a - b.conj()).norm());
            }
        }
        worst
    }
}

fn check_cutoff(n: f64, m: usize) -> Result<(), FieldError> {
    if !(n >= 1.0) || n >= (m / 2) as f64 {
        Err(FieldError::Cutoff { cutoff: n, half: m / 2 })
    } else {
        Ok(())
    }
}

/// Sharp projection onto `|k| <= N` (Euclidean norm).
pub fn project_sharp<T: Real>(s: &SpectralField<T>, n: T) -> Result<SpectralField<T>, FieldError> {
    check_cutoff(n.f64(), s.m)?;
    let n2 = n * n;
    Ok(s.multiply(|kx, ky| if T::c((kx * kx + ky * ky) as f64) <= n2 { T::one() } else { T::zero() }))
}

/// Mollifier `φ_N`, the tensor bump rescaled to frequency `N`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelSpec<T> {
    pub n: T,
}

impl<T: Real> KernelSpec<T> {
    pub fn new(n: T) -> Self {
        Self { n }
    }

    /// Fourier multiplier `φ̂(k/N)`.
    pub fn multiplier(&self, kx: i64, ky: i64) -> T {
        let n = self.n.f64();
        T::c(bump_hat(kx as f64 / n) * bump_hat(ky as f64 / n))
    }
}

pub fn project_mollified<T: Real>(s: &SpectralField<T>, ker: &KernelSpec<T>) -> SpectralField<T> {
    s.multiply(|kx, ky| ker.multiplier(kx, ky))
}

/// Unnormalized bump `exp(-1/(1-t²))` on `(-1, 1)`.
pub fn raw_bump(t: f64) -> f64 {
    if t.abs() < 1.0 {
        (-1.0 / (1.0 - t * t)).exp()
    } else {
        0.0
    }
}

const BUMP_NODES: usize = 2048;
const HAT_STEP: f64 = 1.0 / 512.0;
const HAT_MAX: f64 = 128.0;

/// Normalizing constant making the 1-D bump integrate to one.
pub fn bump_constant() -> f64 {
    static C: OnceLock<f64> = OnceLock::new();
    *C.get_or_init(|| {
        let h = 2.0 / BUMP_NODES as f64;
        let s: f64 = (1..BUMP_NODES).map(|i| raw_bump(-1.0 + i as f64 * h)).sum();
        1.0 / (s * h)
    })
}

/// Unit-mass 1-D bump.
pub fn bump(t: f64) -> f64 {
    bump_constant() * raw_bump(t)
}

/// Direct quadrature of `∫ bump(t) cos(2 pi ξ t) dt`. The integrand vanishes with all
/// derivatives at `±1`, so the trapezoid rule converges faster than any power.
pub fn bump_hat_direct(xi: f64) -> f64 {
    let h = 1.0 / BUMP_NODES as f64;
    let tau = 2.0 * std::f64::consts::PI * xi;
    let half: f64 = (1..BUMP_NODES).map(|i| {
        let t = i as f64 * h;
        raw_bump(t) * (tau * t).cos()
    }).sum();
    bump_constant() * h * (raw_bump(0.0) + 2.0 * half)
}

fn hat_table() -> &'static [f64] {
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let n = (HAT_MAX / HAT_STEP) as usize + 4;
        (0..n).into_par_iter().map(|i| bump_hat_direct(i as f64 * HAT_STEP)).collect()
    })
}

/// Cached `φ̂(ξ)` of the 1-D bump, 4-point Lagrange interpolation. Zero beyond
/// `|ξ| = 128`, where the transform is below `1e-14`.
pub fn bump_hat(xi: f64) -> f64 {
    let x = xi.abs();
    if x >= HAT_MAX {
        return 0.0;
    }
    let t = hat_table();
    let u = x / HAT_STEP;
    let i = (u.floor() as usize).max(1);
    let s = u - i as f64;
    let (a, b, c, d) = (t[i - 1], t[i], t[i + 1], t[i + 2]);
    let w0 = -s * (s - 1.0) * (s - 2.0) / 6.0;
    let w1 = (s + 1.0) * (s - 1.0) * (s - 2.0) / 2.0;
    let w2 = -(s + 1.0) * s * (s - 2.0) / 2.0;
    let w3 = (s + 1.0) * s * (s - 1.0) / 6.0;
    w0 * a + w1 * b + w2 * c + w3 * d
}

/// `(Σ (1+|k|²)^s |ĝ(k)|²)^{1/2}`.
pub fn sobolev_norm<T: Real>(s: &SpectralField<T>, order: T) -> T {
    let m = s.m;
    let total: T = s
        .coeffs
        .par_chunks(m)
        .enumerate()
        .map(|(i, row)| {
            let kx = wavenumber(i, m);
            row.iter()
                .enumerate()
                .map(|(j, c)| {
                    let ky = wavenumber(j, m);
                    let w = T::c((1 + kx * kx + ky * ky) as f64).powf(order);
                    w * c.norm_sqr()
                })
                .sum::<T>()
        })
        .sum();
    total.sqrt()
}

/// `‖Π_{≤N} s‖²` for each cutoff, in input order.
pub fn cumulative_mass<T: Real>(s: &SpectralField<T>, cutoffs: &[T]) -> Result<Vec<(T, T)>, FieldError> {
    for n in cutoffs {
        check_cutoff(n.f64(), s.m)?;
    }
    let max_n = cutoffs.iter().fold(0.0f64, |a, n| a.max(n.f64()));
    let max_r2 = (max_n * max_n).floor() as usize;
    let kmax = max_n.floor() as i64;
    // Shell masses by integer |k|², summed in fixed order.
    let mut shells = vec![T::zero(); max_r2 + 1];
    for kx in -kmax..=kmax {
        for ky in -kmax..=kmax {
            let r2 = (kx * kx + ky * ky) as usize;
            if r2 <= max_r2 {
                shells[r2] = shells[r2] + s.coeff(kx, ky).norm_sqr();
            }
        }
    }
    let mut prefix = Vec::with_capacity(shells.len());
    let mut acc = T::zero();
    for v in shells {
        acc = acc + v;
        prefix.push(acc);
    }
    Ok(cutoffs
        .iter()
        .map(|n| {
            let r2 = (n.f64() * n.f64() + 1e-9).floor() as usize;
            (*n, prefix[r2.min(prefix.len() - 1)])
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::torus::MapParams;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_field(m: usize, seed: u64) -> GridField<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        GridField { m, values: (0..m * m).map(|_| rng.gen::<f64>() - 0.5).collect(), aliased: false }
    }

    #[test]
    fn pullback_at_fixed_point() {
        let p = MapParams::new(8.0).unwrap();
        let f = ScalarClosure::unit_sine_y().pullback(1, &p);
        let v = f.eval(TorusPoint::new(0.25, 0.25));
        assert!((v - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn sample_constant_and_mean() {
        let g = sample(&ScalarClosure::constant(1.0), 16).unwrap();
        assert!(g.values.iter().all(|v| *v == 1.0));
        let s = sample(&ScalarClosure::<f64>::unit_sine_y(), 64).unwrap();
        assert!(s.mean().abs() < 1e-12);
        assert!(sample(&ScalarClosure::<f64>::zero(), 12).is_err());
    }

    #[test]
    fn single_mode_recovered() {
        let amp = Complex::new(0.3, -0.7);
        let f = ScalarClosure::fourier(vec![Mode { k: [3, -5], amp }]);
        let s = to_spectrum(&sample(&f, 32).unwrap());
        // Re(a e^{i θ}) has coefficient a/2 at k and conj(a)/2 at -k.
        assert!((s.coeff(3, -5) - amp * 0.5).norm() < 1e-10);
        assert!((s.coeff(-3, 5) - amp.conj() * 0.5).norm() < 1e-10);
        let others: f64 = s.l2_norm_sq() - 2.0 * (amp * 0.5).norm_sqr();
        assert!(others.abs() < 1e-12);
    }

    #[test]
    fn parseval_and_symmetry() {
        let g = random_field(32, 1);
        let s = to_spectrum(&g);
        let lhs = s.l2_norm_sq();
        let rhs: f64 = g.values.iter().map(|v| v * v).sum::<f64>() / (32.0 * 32.0);
        assert!((lhs - rhs).abs() < 1e-10);
        assert!(s.symmetry_defect() < 1e-12);
        assert!((s.coeff(0, 0).re - g.mean()).abs() < 1e-12);
        let back = to_grid(&s);
        for (a, b) in back.values.iter().zip(g.values.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn sharp_projection() {
        let f = ScalarClosure::<f64>::sine_y(1.0, 5);
        let s = to_spectrum(&sample(&f, 32).unwrap());
        let keep = project_sharp(&s, 5.0).unwrap();
        assert!((keep.l2_norm_sq() - s.l2_norm_sq()).abs() < 1e-14);
        assert!(project_sharp(&s, 4.0).unwrap().l2_norm_sq() < 1e-20);
        assert!(project_sharp(&s, 16.0).is_err());
        let g = to_spectrum(&random_field(32, 2));
        let once = project_sharp(&g, 6.0).unwrap();
        let twice = project_sharp(&once, 6.0).unwrap();
        assert_eq!(once, twice);
        assert!(once.l2_norm_sq() <= g.l2_norm_sq());
    }

    #[test]
    fn kernel_properties() {
        assert!((bump_hat(0.0) - 1.0).abs() < 1e-10);
        let h = 1e-3;
        let mass: f64 = (1..2000).map(|i| bump(-1.0 + i as f64 * h)).sum::<f64>() * h;
        assert!((mass - 1.0).abs() < 1e-10);
        for xi in [0.013, 0.5, 1.7, 3.3, 9.9, 31.4, 77.7] {
            assert!((bump_hat(xi) - bump_hat_direct(xi)).abs() < 1e-8);
            assert!(bump_hat(xi).abs() <= 1.0);
            assert_eq!(bump_hat(xi), bump_hat(-xi));
        }
        let c = to_spectrum(&sample(&ScalarClosure::constant(2.5f64), 16).unwrap());
        let p = project_mollified(&c, &KernelSpec::new(4.0));
        assert!((p.coeff(0, 0).re - 2.5).abs() < 1e-12);
    }

    #[test]
    fn sobolev_single_mode() {
        let f = ScalarClosure::<f64>::sine_y(2f64.sqrt(), 3);
        let s = to_spectrum(&sample(&f, 32).unwrap());
        let h1 = sobolev_norm(&s, -1.0);
        assert!((h1 - (1.0f64 / 10.0).sqrt()).abs() < 1e-12);
        assert!((sobolev_norm(&s, 0.0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cumulative_mass_steps() {
        let f = ScalarClosure::<f64>::sine_y(2f64.sqrt(), 5);
        let s = to_spectrum(&sample(&f, 32).unwrap());
        let c = cumulative_mass(&s, &[1.0, 4.0, 4.99, 5.0, 15.0]).unwrap();
        let v: Vec<f64> = c.iter().map(|x| x.1).collect();
        assert!(v[0] < 1e-20 && v[1] < 1e-20 && v[2] < 1e-20);
        assert!((v[3] - 1.0).abs() < 1e-12 && (v[4] - 1.0).abs() < 1e-12);
        let g = to_spectrum(&random_field(32, 3));
        let top = cumulative_mass(&g, &[15.0]).unwrap()[0].1;
        let outside: f64 = project_sharp(&g, 15.0).unwrap().l2_norm_sq();
        assert!((top - outside).abs() < 1e-12);
    }

    #[test]
    fn inner_products() {
        let a = sample(&ScalarClosure::<f64>::unit_sine_y(), 32).unwrap();
        assert!((inner_product(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        let b = sample(&ScalarClosure::<f64>::sine_x(1.0, 2), 32).unwrap();
        assert!(inner_product(&a, &b).unwrap().abs() < 1e-12);
        let c = sample(&ScalarClosure::<f64>::unit_sine_y(), 16).unwrap();
        assert!(inner_product(&a, &c).is_err());
    }

    #[test]
    fn change_of_variables() {
        let p = MapParams::new(4.0).unwrap();
        let f = ScalarClosure::<f64>::unit_sine_y();
        let g = ScalarClosure::<f64>::sine_x(2f64.sqrt(), 1).add(&ScalarClosure::sine_y(1.0, 2));
        let a = sample(&f.pullback(1, &p), 1024).unwrap();
        let b = sample(&g, 1024).unwrap();
        let c = sample(&f, 1024).unwrap();
        let d = sample(&g.compose(vec![Transform::Forward], p), 1024).unwrap();
        let lhs = inner_product(&a, &b).unwrap();
        let rhs = inner_product(&c, &d).unwrap();
        assert!((lhs - rhs).abs() < 1e-3);
    }

    #[test]
    fn grid_lookup_and_interpolation() {
        let f = ScalarClosure::<f64>::sine_x(1.0, 1).add(&ScalarClosure::sine_y(0.5, 1));
        let g = sample(&f, 128).unwrap();
        let z = TorusPoint::new(5.0 / 128.0, 17.0 / 128.0);
        assert!((g.value_at(z) - f.eval(z)).abs() < 1e-14);
        let w = TorusPoint::new(0.3137, 0.777);
        assert!((g.value_at(w) - f.eval(w)).abs() < 1e-5);
    }

    #[test]
    fn alias_flag_from_depth() {
        let p = MapParams::new(8.0).unwrap();
        let f = ScalarClosure::<f64>::unit_sine_y();
        assert!(!sample(&f.pullback(1, &p), 256).unwrap().aliased);
        assert!(sample(&f.pullback(2, &p), 256).unwrap().aliased);
    }

    proptest::proptest! {
        #[test]
        fn mollifier_is_contraction(seed in 0u64..1000, n in 1.0f64..12.0) {
            let g = to_spectrum(&random_field(16, seed));
            let p = project_mollified(&g, &KernelSpec::new(n));
            proptest::prop_assert!(p.l2_norm_sq() <= g.l2_norm_sq() + 1e-15);
        }

        #[test]
        fn mass_nondecreasing(seed in 0u64..1000) {
            let g = to_spectrum(&random_field(32, seed));
            let cuts: Vec<f64> = (1..16).map(|n| n as f64).collect();
            let c = cumulative_mass(&g, &cuts).unwrap();
            for w in c.windows(2) {
                proptest::prop_assert!(w[1].1 >= w[0].1);
            }
        }
    }

    #[test]
    fn transpose_roundtrip() {
        let mut v: Vec<usize> = (0..64 * 64).collect();
        transpose(&mut v, 64);
        assert_eq!(v[1], 64);
        transpose(&mut v, 64);
        assert!(v.iter().enumerate().all(|(i, x)| i == *x));
    }
}
