//! Dictionary estimators for the weak stable, strong stable and strong unstable norms,
//! and the decay of the weak norm along `f∘T^{-n}`.
//!
//! Every estimate is a maximum over a finite seeded dictionary, so it is a lower bound
//! for the corresponding supremum.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::diagnostics::DecayFit;
use crate::fields::{sample, FieldError, ScalarClosure};
use crate::geometry::{smooth_pieces, SegmentClass, TorusSegment};
use crate::quad::rule_on;
use crate::real::Real;
use crate::torus::{ConeKind, ConeSpec, Direction, MapParams, TorusPoint};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NormError {
    #[error("invalid norm parameters: {0}")]
    Params(String),
    #[error("segment length must be positive, got {0}")]
    EmptySegment(f64),
    #[error("field must have mean zero, mean is {0}")]
    NotMeanZero(f64),
    #[error(transparent)]
    Field(#[from] FieldError),
}

/// Exponents `(p, β)` of the strong stable and unstable norms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormParams {
    pub p: f64,
    pub beta: f64,
}

impl Default for NormParams {
    fn default() -> Self {
        Self { p: 0.25, beta: 0.5 }
    }
}

impl NormParams {
    pub fn new(p: f64, beta: f64) -> Result<Self, NormError> {
        if !(beta > 0.0 && beta <= 1.0) {
            return Err(NormError::Params(format!("beta must lie in (0, 1], got {beta}")));
        }
        if !(p > 0.0 && p <= 1.0 - beta + 1e-15) {
            return Err(NormError::Params(format!("p must lie in (0, 1 - beta] = (0, {}], got {p}", 1.0 - beta)));
        }
        Ok(Self { p, beta })
    }

    /// Rate exponent `q = min(2β, p)/6`.
    pub fn q(&self) -> f64 {
        (2.0 * self.beta).min(self.p) / 6.0
    }
}

/// Shape of a test function in the normalized arclength `u = s/|W| ∈ [0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Shape {
    Constant,
    /// `2u - 1`.
    Ramp,
    /// `sin(2πku + phase)`.
    Sine { k: u32, phase: f64 },
}

impl Shape {
    fn eval(&self, u: f64) -> f64 {
        match *self {
            Shape::Constant => 1.0,
            Shape::Ramp => 2.0 * u - 1.0,
            Shape::Sine { k, phase } => (2.0 * PI * k as f64 * u + phase).sin(),
        }
    }

    // Lipschitz constant in u.
    fn lip_u(&self) -> f64 {
        match *self {
            Shape::Constant => 0.0,
            Shape::Ramp => 2.0,
            Shape::Sine { k, .. } => 2.0 * PI * k as f64,
        }
    }
}

/// The eight shapes attached to every curve.
pub const SHAPES: [Shape; 8] = [
    Shape::Constant,
    Shape::Ramp,
    Shape::Sine { k: 1, phase: 0.0 },
    Shape::Sine { k: 1, phase: PI / 2.0 },
    Shape::Sine { k: 2, phase: 0.0 },
    Shape::Sine { k: 2, phase: PI / 2.0 },
    Shape::Sine { k: 3, phase: 0.0 },
    Shape::Sine { k: 3, phase: PI / 2.0 },
];

/// `scale · shape(s/len)` on a curve of length `len`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TestFunction {
    pub shape: Shape,
    pub scale: f64,
    pub len: f64,
}

impl TestFunction {
    pub fn eval(&self, s: f64) -> f64 {
        self.scale * self.shape.eval(s / self.len)
    }

    pub fn sup(&self) -> f64 {
        self.scale.abs()
    }

    pub fn lipschitz(&self) -> f64 {
        self.scale.abs() * self.shape.lip_u() / self.len
    }

    /// Upper bound for the `γ`-Hölder seminorm from the sup and Lipschitz bounds.
    pub fn holder_bound(&self, gamma: f64) -> f64 {
        let lip = self.lipschitz();
        if lip == 0.0 {
            return 0.0;
        }
        if gamma >= 1.0 {
            return lip;
        }
        let osc = 2.0 * self.sup();
        let d = osc / lip;
        if d <= self.len {
            lip.powf(gamma) * osc.powf(1.0 - gamma)
        } else {
            lip * self.len.powf(1.0 - gamma)
        }
    }

    /// `|φ|_{C¹}` test class member: `sup + Lip = 1`.
    pub fn weak(shape: Shape, len: f64) -> Self {
        let unit = TestFunction { shape, scale: 1.0, len };
        TestFunction { shape, scale: 1.0 / (1.0 + unit.lipschitz()), len }
    }

    /// `|φ|_{C^β} = |W|^{-p}` test class member.
    pub fn strong(shape: Shape, len: f64, np: &NormParams) -> Self {
        let unit = TestFunction { shape, scale: 1.0, len };
        TestFunction { shape, scale: len.powf(-np.p) / (1.0 + unit.holder_bound(np.beta)), len }
    }

    /// Sampled `sup + [φ]_γ` over `pairs` random point pairs.
    pub fn sampled_norm(&self, gamma: f64, pairs: usize, rng: &mut impl Rng) -> f64 {
        let mut sup: f64 = 0.0;
        let mut semi: f64 = 0.0;
        for _ in 0..pairs {
            let a = rng.gen::<f64>() * self.len;
            let b = rng.gen::<f64>() * self.len;
            let (fa, fb) = (self.eval(a), self.eval(b));
            sup = sup.max(fa.abs()).max(fb.abs());
            let d = (a - b).abs();
            if d > 1e-300 {
                semi = semi.max((fa - fb).abs() / d.powf(gamma));
            }
        }
        sup + semi
    }
}

/// Quadrature controls for curve integrals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadOptions {
    pub nodes: usize,
    /// Largest number of singularity-split panels before falling back to bisection.
    pub panel_guard: usize,
    /// Evaluation budget of the adaptive fallback.
    pub max_evals: usize,
    pub tol: f64,
}

impl Default for QuadOptions {
    fn default() -> Self {
        Self { nodes: 16, panel_guard: 10_000, max_evals: 1 << 16, tol: 1e-10 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineIntegral {
    pub value: f64,
    /// Node-doubling difference (panel mode) or summed bisection defects (fallback).
    pub error_est: f64,
    pub panels: usize,
    pub fallback: bool,
}

/// Arclength breakpoints on `w` where some `T^{-k}`, `k ≤ n`, stops being affine, with
/// each piece further split so its image under `T^{-n}` is at most `max_image` long.
/// `None` once more than `guard` panels would be needed.
pub fn orbit_panels<T: Real>(
    w: &TorusSegment<T>,
    n: usize,
    p: &MapParams<T>,
    max_image: f64,
    guard: usize,
) -> Option<Vec<(f64, f64)>> {
    let mut out = Vec::new();
    // (start on w, d(t on w)/d(arclength on seg), seg, depth)
    let mut stack = vec![(0.0, 1.0, *w, 0usize)];
    while let Some((t0, scale, seg, depth)) = stack.pop() {
        if depth == n {
            let parts = (seg.length.f64() / max_image).ceil().max(1.0) as usize;
            if out.len() + parts > guard {
                return None;
            }
            let h = seg.length.f64() * scale / parts as f64;
            out.extend((0..parts).map(|i| (t0 + i as f64 * h, t0 + (i + 1) as f64 * h)));
            continue;
        }
        let pieces = smooth_pieces(&seg, p, Direction::Backward);
        if out.len() + stack.len() + pieces.len() > guard {
            return None;
        }
        for (a, _, mp) in pieces.into_iter().rev() {
            stack.push((t0 + a.f64() * scale, scale / mp.stretch.f64(), mp.image, depth + 1));
        }
    }
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    Some(out)
}

struct Panel {
    a: f64,
    b: f64,
    vals: Vec<f64>,
    err: f64,
    order: usize,
}

impl PartialEq for Panel {
    fn eq(&self, o: &Self) -> bool {
        self.cmp(o) == Ordering::Equal
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Panel {
    fn cmp(&self, o: &Self) -> Ordering {
        self.err.total_cmp(&o.err).then(o.order.cmp(&self.order))
    }
}

fn gl_panel(g: &dyn Fn(f64) -> f64, tests: &[&dyn Fn(f64) -> f64], a: f64, b: f64, nodes: usize) -> Vec<f64> {
    let mut acc = vec![0.0; tests.len()];
    for (t, wt) in rule_on(a, b, nodes) {
        let fv = g(t) * wt;
        for (s, phi) in acc.iter_mut().zip(tests) {
            *s += fv * phi(t);
        }
    }
    acc
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// `∫_W f φ dm_W` for several tests at once; `g` is `f` along arclength.
fn integrate_tests<T: Real>(
    g: &dyn Fn(f64) -> f64,
    w: &TorusSegment<T>,
    orbit: Option<(usize, &MapParams<T>, i64)>,
    tests: &[&dyn Fn(f64) -> f64],
    opts: &QuadOptions,
) -> Vec<LineIntegral> {
    let len = w.length.f64();
    let q = opts.nodes;
    let panels = match orbit {
        Some((n, p, k)) => orbit_panels(w, n, p, 0.5 / k.max(1) as f64, opts.panel_guard),
        None => Some(vec![(0.0, len)]),
    };
    if let Some(panels) = panels {
        let mut val = vec![0.0; tests.len()];
        let mut err = vec![0.0; tests.len()];
        for &(a, b) in &panels {
            if b - a <= 0.0 {
                continue;
            }
            let lo = gl_panel(g, tests, a, b, q);
            let hi = gl_panel(g, tests, a, b, 2 * q);
            for i in 0..tests.len() {
                val[i] += hi[i];
                err[i] += (hi[i] - lo[i]).abs();
            }
        }
        return val
            .into_iter()
            .zip(err)
            .map(|(value, error_est)| LineIntegral { value, error_est, panels: panels.len(), fallback: false })
            .collect();
    }
    // Global adaptive bisection on the largest defect.
    let make = |a: f64, b: f64, order: usize| {
        let whole = gl_panel(g, tests, a, b, q);
        let m = 0.5 * (a + b);
        let l = gl_panel(g, tests, a, m, q);
        let r = gl_panel(g, tests, m, b, q);
        let halves: Vec<f64> = l.iter().zip(&r).map(|(x, y)| x + y).collect();
        Panel { a, b, err: max_diff(&whole, &halves), vals: halves, order }
    };
    let mut heap = BinaryHeap::new();
    heap.push(make(0.0, len, 0));
    let mut evals = 3 * q;
    let mut order = 1;
    let mut total_err = heap.peek().map(|p| p.err).unwrap_or(0.0);
    while evals + 6 * q <= opts.max_evals && total_err > opts.tol {
        let top = heap.pop().expect("non-empty");
        let m = 0.5 * (top.a + top.b);
        if m <= top.a || m >= top.b {
            heap.push(top);
            break;
        }
        let l = make(top.a, m, order);
        let r = make(m, top.b, order + 1);
        order += 2;
        evals += 6 * q;
        total_err += l.err + r.err - top.err;
        heap.push(l);
        heap.push(r);
    }
    let panels: Vec<Panel> = heap.into_vec();
    let errsum: f64 = panels.iter().map(|p| p.err).sum();
    (0..tests.len())
        .map(|i| LineIntegral {
            value: panels.iter().map(|p| p.vals[i]).sum(),
            error_est: errsum,
            panels: panels.len(),
            fallback: true,
        })
        .collect()
}

fn orbit_of<T: Real>(f: &ScalarClosure<T>) -> Option<(usize, MapParams<T>)> {
    match (f.inverse_depth(), f.params()) {
        (Some(n), Some(p)) if n > 0 => Some((n, p)),
        _ => None,
    }
}

fn integrals_on<T: Real>(
    f: &ScalarClosure<T>,
    w: &TorusSegment<T>,
    tests: &[&dyn Fn(f64) -> f64],
    opts: &QuadOptions,
) -> Vec<LineIntegral> {
    let g = |t: f64| f.eval(w.point_at(T::c(t))).f64();
    let orbit = orbit_of(f);
    integrate_tests(&g, w, orbit.as_ref().map(|(n, p)| (*n, p, f.base_frequency())), tests, opts)
}

/// `∫_W f φ dm_W` with `φ` given along arclength. Panels split at every crossing of the
/// singular sets of `T^{-1}, …, T^{-n}` when `f` is `g∘T^{-n}`.
pub fn line_integral<T: Real>(
    f: &ScalarClosure<T>,
    w: &TorusSegment<T>,
    test: impl Fn(f64) -> f64,
    opts: &QuadOptions,
) -> Result<LineIntegral, NormError> {
    if !(w.length > T::zero()) {
        return Err(NormError::EmptySegment(w.length.f64()));
    }
    Ok(integrals_on(f, w, &[&test], opts)[0])
}

/// Admissible curves with the attached test shapes.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveDictionary<T> {
    pub curves: Vec<TorusSegment<T>>,
    pub vertical: usize,
    pub seed: u64,
    pub params: MapParams<T>,
}

fn curve_rng(seed: u64, i: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ (i as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

fn random_stable<T: Real>(rng: &mut ChaCha8Rng, p: &MapParams<T>) -> TorusSegment<T> {
    let cone = ConeSpec::standard(ConeKind::Stable, p);
    let anchor = TorusPoint::new(T::c(rng.gen::<f64>()), T::c(rng.gen::<f64>()));
    let dir = cone.vector(T::c(rng.gen_range(-1.0..=1.0)));
    let len = 2.0 * (1.0 - rng.gen::<f64>());
    TorusSegment::new(anchor, dir, T::c(len))
}

impl<T: Real> CurveDictionary<T> {
    /// `vertical` unit vertical lines at stratified `x` plus `random` stable-cone
    /// segments with lengths in `(0, 2]`. Random curve `i` depends only on `(seed, i)`.
    pub fn new(p: &MapParams<T>, vertical: usize, random: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut curves: Vec<TorusSegment<T>> = (0..vertical)
            .map(|i| {
                let x = (i as f64 + rng.gen::<f64>()) / vertical as f64;
                let y = rng.gen::<f64>();
                TorusSegment::new(TorusPoint::new(T::c(x), T::c(y)), [T::zero(), T::one()], T::one())
            })
            .collect();
        curves.extend((0..random).map(|i| random_stable(&mut curve_rng(seed, i), p)));
        Self { curves, vertical, seed, params: *p }
    }

    pub fn default_for(p: &MapParams<T>, seed: u64) -> Self {
        Self::new(p, 64, 64, seed)
    }

    /// Same dictionary with `extra` further random curves appended.
    pub fn extended(&self, extra: usize) -> Self {
        let have = self.curves.len() - self.vertical;
        let mut out = self.clone();
        out.curves.extend((have..have + extra).map(|i| random_stable(&mut curve_rng(self.seed, i), &self.params)));
        out
    }

    pub fn len(&self) -> usize {
        self.curves.len()
    }

    pub fn is_empty(&self) -> bool {
        self.curves.is_empty()
    }

    pub fn size(&self) -> usize {
        self.curves.len() * SHAPES.len()
    }

    pub fn weak_tests(&self, i: usize) -> Vec<TestFunction> {
        let len = self.curves[i].length.f64();
        SHAPES.iter().map(|s| TestFunction::weak(*s, len)).collect()
    }

    pub fn strong_tests(&self, i: usize, np: &NormParams) -> Vec<TestFunction> {
        let len = self.curves[i].length.f64();
        SHAPES.iter().map(|s| TestFunction::strong(*s, len, np)).collect()
    }

    pub fn all_tangent(&self) -> bool {
        self.curves.iter().all(|c| c.classify(&self.params) == SegmentClass::Stable && c.length.f64() <= 2.0)
    }

    /// Sampled check of every test normalization over `pairs` point pairs.
    pub fn verify_normalization(&self, np: &NormParams, pairs: usize) -> bool {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ 0x5555);
        (0..self.len()).all(|i| {
            let len = self.curves[i].length.f64();
            let weak = self.weak_tests(i).iter().all(|t| t.sampled_norm(1.0, pairs, &mut rng) <= 1.0 + 1e-8);
            let strong = self
                .strong_tests(i, np)
                .iter()
                .all(|t| t.sampled_norm(np.beta, pairs, &mut rng) <= len.powf(-np.p) + 1e-8);
            weak && strong
        })
    }

    /// For curves with `|W| ≤ 1` every weak test scale is at most the strong one.
    pub fn nested(&self, np: &NormParams) -> bool {
        (0..self.len()).filter(|&i| self.curves[i].length.f64() <= 1.0).all(|i| {
            self.weak_tests(i).iter().zip(self.strong_tests(i, np)).all(|(w, s)| w.scale <= s.scale + 1e-15)
        })
    }
}

/// Maximum over a dictionary, with where it was attained.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormEstimate {
    pub value: f64,
    pub argmax: Option<usize>,
    pub dict_size: usize,
    pub seed: u64,
    /// Largest quadrature error estimate over the dictionary.
    pub max_error: f64,
    pub fallback: bool,
}

fn dictionary_max<T: Real>(
    f: &ScalarClosure<T>,
    dict: &CurveDictionary<T>,
    tests_for: impl Fn(usize) -> Vec<TestFunction> + Sync,
    opts: &QuadOptions,
) -> NormEstimate {
    let per_curve: Vec<(f64, f64, bool)> = (0..dict.len())
        .into_par_iter()
        .map(|i| {
            let tests = tests_for(i);
            let fns: Vec<Box<dyn Fn(f64) -> f64 + '_>> =
                tests.iter().map(|t| Box::new(move |s: f64| t.eval(s)) as Box<dyn Fn(f64) -> f64>).collect();
            let refs: Vec<&dyn Fn(f64) -> f64> = fns.iter().map(|b| b.as_ref()).collect();
            let r = integrals_on(f, &dict.curves[i], &refs, opts);
            let best = r.iter().map(|l| l.value.abs()).fold(0.0, f64::max);
            let err = r.iter().map(|l| l.error_est).fold(0.0, f64::max);
            (best, err, r.iter().any(|l| l.fallback))
        })
        .collect();
    let mut est = NormEstimate { value: 0.0, argmax: None, dict_size: dict.size(), seed: dict.seed, max_error: 0.0, fallback: false };
    for (i, (v, e, fb)) in per_curve.into_iter().enumerate() {
        if est.argmax.is_none() || v > est.value {
            est.value = v;
            est.argmax = Some(i);
        }
        est.max_error = est.max_error.max(e);
        est.fallback |= fb;
    }
    est
}

/// Lower bound for `|f|_w`.
pub fn weak_norm_estimate<T: Real>(f: &ScalarClosure<T>, dict: &CurveDictionary<T>, opts: &QuadOptions) -> NormEstimate {
    dictionary_max(f, dict, |i| dict.weak_tests(i), opts)
}

/// Lower bound for `‖f‖_s`.
pub fn strong_stable_estimate<T: Real>(
    f: &ScalarClosure<T>,
    dict: &CurveDictionary<T>,
    np: &NormParams,
    opts: &QuadOptions,
) -> NormEstimate {
    dictionary_max(f, dict, |i| dict.strong_tests(i, np), opts)
}

/// Parallel equal-length pairs `(W, W + h)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PairDictionary<T> {
    pub pairs: Vec<(TorusSegment<T>, [T; 2])>,
    pub seed: u64,
}

impl<T: Real> PairDictionary<T> {
    /// `count` pairs with `|h|` log-uniform in `[α^{-2}, α^{-1}]`. The first half are
    /// vertical with horizontal shifts.
    pub fn new(p: &MapParams<T>, count: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = p.alpha.f64();
        let (lo, hi) = ((a * a).recip().ln(), a.recip().ln());
        let pairs = (0..count)
            .map(|i| {
                let d = rng.gen_range(lo..=hi).exp().min(1.0 / a);
                if i < count / 2 {
                    let anchor = TorusPoint::new(T::c(rng.gen::<f64>()), T::c(rng.gen::<f64>()));
                    let w = TorusSegment::new(anchor, [T::zero(), T::one()], T::one());
                    (w, [T::c(d), T::zero()])
                } else {
                    let w = random_stable(&mut rng, p);
                    let th = rng.gen::<f64>() * 2.0 * PI;
                    (w, [T::c(d * th.cos()), T::c(d * th.sin())])
                }
            })
            .collect();
        Self { pairs, seed }
    }

    pub fn from_pairs(pairs: Vec<(TorusSegment<T>, [T; 2])>) -> Self {
        Self { pairs, seed: 0 }
    }

    pub fn default_for(p: &MapParams<T>, seed: u64) -> Self {
        Self::new(p, 128, seed)
    }

    pub fn shifted(w: &TorusSegment<T>, h: [T; 2]) -> TorusSegment<T> {
        TorusSegment { anchor: TorusPoint::new(w.anchor.x + h[0], w.anchor.y + h[1]), dir: w.dir, length: w.length }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnstableEstimate {
    pub value: f64,
    pub argmax: Option<usize>,
    pub argmax_separation: f64,
    pub dict_size: usize,
    pub seed: u64,
}

/// Lower bound for `‖f‖_u`: `max d^{-p} |∫_{W₁} f − ∫_{W₂} f|` with `d = |h|`.
pub fn unstable_norm_estimate<T: Real>(
    f: &ScalarClosure<T>,
    pairs: &PairDictionary<T>,
    np: &NormParams,
    opts: &QuadOptions,
) -> UnstableEstimate {
    let one = |_: f64| 1.0;
    let vals: Vec<(f64, f64)> = pairs
        .pairs
        .par_iter()
        .map(|(w, h)| {
            let w2 = PairDictionary::shifted(w, *h);
            let a = integrals_on(f, w, &[&one], opts)[0].value;
            let b = integrals_on(f, &w2, &[&one], opts)[0].value;
            let d = h[0].f64().hypot(h[1].f64());
            (d.powf(-np.p) * (a - b).abs(), d)
        })
        .collect();
    let mut est = UnstableEstimate { value: 0.0, argmax: None, argmax_separation: f64::NAN, dict_size: vals.len(), seed: pairs.seed };
    for (i, (v, d)) in vals.into_iter().enumerate() {
        if est.argmax.is_none() || v > est.value {
            est.value = v;
            est.argmax = Some(i);
            est.argmax_separation = d;
        }
    }
    est
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransferDecay {
    pub estimates: Vec<NormEstimate>,
    pub fit: DecayFit,
}

/// Weak-norm estimates of `f∘T^{-n}` for `n = 0..=n_max` with a geometric fit.
pub fn transfer_decay_series<T: Real>(
    f: &ScalarClosure<T>,
    n_max: usize,
    dict: &CurveDictionary<T>,
    p: &MapParams<T>,
    opts: &QuadOptions,
) -> Result<TransferDecay, NormError> {
    let mean = sample(f, 64)?.mean().f64();
    if mean.abs() > 1e-10 {
        return Err(NormError::NotMeanZero(mean));
    }
    let estimates: Vec<NormEstimate> =
        (0..=n_max).map(|n| weak_norm_estimate(&f.pullback(n, p), dict, opts)).collect();
    let fit = DecayFit::from_samples(estimates.iter().enumerate().map(|(n, e)| (n, e.value)).collect());
    Ok(TransferDecay { estimates, fit })
}
