//! Forced evolution: the discrete iteration, partial sums, effective forcing and the
//! continuous-time solution.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::fields::{
    sample, sobolev_norm, to_grid, to_spectrum, FieldError, GridField, ScalarClosure, SpectralField, Transform,
};
use crate::quad::{half_period_rule, integrate, rule_on};
use crate::real::Real;
use crate::torus::{inverse_map, MapParams, TorusPoint};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvolutionError {
    #[error("quadrature did not converge: estimated error {0:e}")]
    Quadrature(f64),
    #[error("invalid forcing: {0}")]
    Forcing(String),
    #[error("kappa must be nonnegative, got {0}")]
    Kappa(f64),
    #[error(transparent)]
    Field(#[from] FieldError),
}

/// Time profile of a separable forcing.
#[derive(Clone)]
pub enum TimeProfile {
    /// `mass * 4 * bump(4t - 3)`: supported on `(1/2, 1)`, symmetric about `3/4`.
    Bump { mass: f64 },
    Custom(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl fmt::Debug for TimeProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TimeProfile::Bump { mass } => write!(f, "Bump {{ mass: {mass} }}"),
            TimeProfile::Custom(_) => write!(f, "Custom"),
        }
    }
}

impl TimeProfile {
    /// Value at time `t`, taken periodically.
    pub fn eval(&self, t: f64) -> f64 {
        let t = t - t.floor();
        match self {
            TimeProfile::Bump { mass } => mass * 4.0 * crate::fields::bump(4.0 * t - 3.0),
            TimeProfile::Custom(f) => f(t),
        }
    }

    pub fn integral(&self) -> f64 {
        match self {
            TimeProfile::Bump { mass } => *mass,
            TimeProfile::Custom(f) => integrate(|t| f(t), &rule_on(0.5, 1.0, 128)),
        }
    }

    /// `∫ η(t) (t - 1/2) dt`.
    pub fn first_moment(&self) -> f64 {
        integrate(|t| self.eval(t) * (t - 0.5), &rule_on(0.5, 1.0, 128))
    }
}

#[derive(Clone)]
pub enum ForcingSpec<T> {
    /// Added once per period, after transport.
    Pulsed(ScalarClosure<T>),
    /// `F_t(x, y) = η(t) h(y)`.
    Separable { eta: TimeProfile, h: ScalarClosure<T> },
    General(Arc<dyn Fn(T) -> ScalarClosure<T> + Send + Sync>),
}

impl<T: Real> fmt::Debug for ForcingSpec<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ForcingSpec::Pulsed(_) => write!(f, "Pulsed"),
            ForcingSpec::Separable { eta, .. } => write!(f, "Separable {{ eta: {eta:?} }}"),
            ForcingSpec::General(_) => write!(f, "General"),
        }
    }
}

impl<T: Real> ForcingSpec<T> {
    /// Bump in time, `sqrt(2) sin(2 pi y)` in space.
    pub fn default_separable() -> Self {
        ForcingSpec::Separable { eta: TimeProfile::Bump { mass: 1.0 }, h: ScalarClosure::unit_sine_y() }
    }

    /// Forcing field at time `s`. Pulsed forcing has no continuous part.
    pub fn at(&self, s: T) -> ScalarClosure<T> {
        match self {
            ForcingSpec::Pulsed(_) => ScalarClosure::zero(),
            ForcingSpec::Separable { eta, h } => h.scale(T::c(eta.eval(s.f64()))),
            ForcingSpec::General(f) => f(s),
        }
    }

    /// Checks mean zero, unit `L²(𝕋)` norm of `h` and the support of `η`.
    pub fn validate(&self) -> Result<(), EvolutionError> {
        if let ForcingSpec::Separable { eta, h } = self {
            let n = 4096;
            let vals: Vec<f64> = (0..n)
                .map(|j| h.eval(TorusPoint { x: T::zero(), y: T::c(j as f64 / n as f64) }).f64())
                .collect();
            let mean = vals.iter().sum::<f64>() / n as f64;
            let norm = (vals.iter().map(|v| v * v).sum::<f64>() / n as f64).sqrt();
            if mean.abs() > 1e-10 {
                return Err(EvolutionError::Forcing(format!("h has mean {mean:e}")));
            }
            if (norm - 1.0).abs() > 1e-10 {
                return Err(EvolutionError::Forcing(format!("h has L2 norm {norm}")));
            }
            for i in 0..=200 {
                let t = i as f64 / 200.0;
                let v = eta.eval(t.min(1.0 - 1e-15));
                if v < 0.0 || (t <= 0.5 && v != 0.0) {
                    return Err(EvolutionError::Forcing(format!("eta({t}) = {v} outside (1/2, 1) or negative")));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvolutionConfig<T> {
    pub alpha: T,
    pub n_steps: usize,
    pub kappa: T,
    pub m: usize,
}

/// `ρ ∘ T^{-1} + f`.
pub fn discrete_step<T: Real>(rho: &ScalarClosure<T>, f: &ScalarClosure<T>, p: &MapParams<T>) -> ScalarClosure<T> {
    rho.pullback(1, p).add(f)
}

/// `Σ_{k=0}^{n} f ∘ T^{-k}`, nested so evaluation costs `O(n)` per point.
pub fn partial_sum_rho<T: Real>(f: &ScalarClosure<T>, n: usize, p: &MapParams<T>) -> ScalarClosure<T> {
    let mut rho = f.clone();
    for _ in 0..n {
        rho = discrete_step(&rho, f, p);
    }
    rho
}

/// Heat multiplier `exp(-4 pi² κ |k|²)` applied in Fourier space.
pub fn pulsed_diffusion_step<T: Real>(rho: &GridField<T>, kappa: T) -> Result<GridField<T>, EvolutionError> {
    if kappa < T::zero() {
        return Err(EvolutionError::Kappa(kappa.f64()));
    }
    if kappa == T::zero() {
        return Ok(rho.clone());
    }
    let s = to_spectrum(rho);
    Ok(to_grid(&diffuse_spectrum(&s, kappa)))
}

fn diffuse_spectrum<T: Real>(s: &SpectralField<T>, kappa: T) -> SpectralField<T> {
    let c = T::c(4.0) * T::PI() * T::PI() * kappa;
    s.multiply(|kx, ky| (-c * T::c((kx * kx + ky * ky) as f64)).exp())
}

/// One step of the diffusive iteration on grid state: transport by bicubic
/// interpolation, heat multiplier, then the forcing.
pub fn grid_step<T: Real>(
    rho: &GridField<T>,
    f: &GridField<T>,
    p: &MapParams<T>,
    kappa: T,
) -> Result<GridField<T>, EvolutionError> {
    if rho.m != f.m {
        return Err(FieldError::Mismatch(rho.m, f.m).into());
    }
    let moved = rho.map_points(|_, z| rho.value_at(inverse_map(z, p)));
    let mut out = pulsed_diffusion_step(&moved, kappa)?;
    for (o, v) in out.values.iter_mut().zip(f.values.iter()) {
        *o = *o + *v;
    }
    out.aliased = rho.aliased || f.aliased;
    Ok(out)
}

/// Effective forcing and its quadrature error estimate (node doubling).
#[derive(Debug, Clone)]
pub struct EffectiveForcing<T> {
    pub field: ScalarClosure<T>,
    pub error_estimate: f64,
}

/// `f_α = ∫₀¹ F_s ∘ φ_{1,s} ds`.
pub fn effective_forcing<T: Real>(
    forcing: &ForcingSpec<T>,
    p: &MapParams<T>,
    quad_points: usize,
) -> Result<EffectiveForcing<T>, EvolutionError> {
    match forcing {
        ForcingSpec::Pulsed(f) => Ok(EffectiveForcing { field: f.clone(), error_estimate: 0.0 }),
        ForcingSpec::Separable { eta, h } => {
            Ok(EffectiveForcing { field: h.scale(T::c(eta.integral())), error_estimate: 0.0 })
        }
        ForcingSpec::General(_) => {
            let build = |n: usize| time_integral(forcing, T::zero(), T::one(), T::one(), n, p);
            let coarse = build(quad_points);
            let fine = build(2 * quad_points);
            let err = max_difference(&coarse, &fine, 64, 17);
            if !(err < 1e-6) {
                return Err(EvolutionError::Quadrature(err));
            }
            Ok(EffectiveForcing { field: fine, error_estimate: err })
        }
    }
}

/// `∫_a^b F_s ∘ φ_{t,s} ds` as a quadrature-weighted closure.
fn time_integral<T: Real>(
    forcing: &ForcingSpec<T>,
    a: T,
    b: T,
    t: T,
    nodes: usize,
    p: &MapParams<T>,
) -> ScalarClosure<T> {
    let rule = half_period_rule(a.f64(), b.f64(), nodes);
    let terms = rule
        .into_iter()
        .filter_map(|(s, w)| {
            let s = T::c(s);
            let fs = forcing.at(s);
            if let ForcingSpec::Separable { eta, .. } = forcing {
                if eta.eval(s.f64()) == 0.0 {
                    return None;
                }
            }
            Some((T::c(w), fs.compose(vec![Transform::Flow { from: t, to: s }], *p)))
        })
        .collect::<Vec<_>>();
    if terms.is_empty() {
        ScalarClosure::zero()
    } else {
        ScalarClosure::sum(terms)
    }
}

/// Largest pointwise difference at seeded random points.
pub fn max_difference<T: Real>(a: &ScalarClosure<T>, b: &ScalarClosure<T>, points: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..points)
        .map(|_| {
            let z = TorusPoint::new(T::c(rng.gen()), T::c(rng.gen()));
            (a.eval(z) - b.eval(z)).abs().f64()
        })
        .fold(0.0, f64::max)
}

/// Reduced form of the solution at time `t = n + τ`:
/// `ρ₀∘T^{-n}∘φ_{τ,0} + ∫₀^τ F_s∘φ_{τ,s} ds + Σ_{k<n} f_α∘T^{-k}∘φ_{τ,0}`.
pub fn continuous_solution<T: Real>(
    rho0: &ScalarClosure<T>,
    forcing: &ForcingSpec<T>,
    t: T,
    p: &MapParams<T>,
    quad_points: usize,
) -> Result<ScalarClosure<T>, EvolutionError> {
    if t < T::zero() {
        return Err(EvolutionError::Forcing(format!("negative time {}", t)));
    }
    let n = t.floor().to_usize().unwrap_or(0);
    let tau = t - t.floor();
    let back = |f: &ScalarClosure<T>, k: usize| {
        let mut steps = Vec::with_capacity(k + 1);
        if tau > T::zero() {
            steps.push(Transform::Flow { from: tau, to: T::zero() });
        }
        steps.extend(std::iter::repeat(Transform::Inverse).take(k));
        f.compose(steps, *p)
    };
    let f_eff = effective_forcing(forcing, p, quad_points)?.field;
    let mut terms = vec![(T::one(), back(rho0, n))];
    if n > 0 {
        // Σ_{k<n} f_α∘T^{-k} shares structure as a nested partial sum.
        terms.push((T::one(), back(&partial_sum_rho(&f_eff, n - 1, p), 0)));
    }
    if tau > T::zero() {
        terms.push((T::one(), time_integral(forcing, T::zero(), tau, tau, quad_points, p)));
    }
    Ok(ScalarClosure::sum(terms))
}

/// Direct form `ρ₀∘φ_{t,0} + ∫₀^t F_s∘φ_{t,s} ds`, integrated over every half-period
/// panel. An independent route to [`continuous_solution`].
pub fn duhamel_solution<T: Real>(
    rho0: &ScalarClosure<T>,
    forcing: &ForcingSpec<T>,
    t: T,
    p: &MapParams<T>,
    quad_points: usize,
) -> ScalarClosure<T> {
    let transported = rho0.compose(vec![Transform::Flow { from: t, to: T::zero() }], *p);
    let mut terms = vec![(T::one(), transported)];
    terms.push((T::one(), time_integral(forcing, T::zero(), t, t, quad_points, p)));
    if let ForcingSpec::Pulsed(f) = forcing {
        // Delta kicks at s = 1, 2, ..., floor(t).
        let n = t.floor().to_usize().unwrap_or(0);
        for k in 1..=n {
            terms.push((T::one(), f.compose(vec![Transform::Flow { from: t, to: T::c(k as f64) }], *p)));
        }
    }
    ScalarClosure::sum(terms)
}

/// One row of an evolution report.
#[derive(Debug, Clone, PartialEq)]
pub struct EvolutionRow {
    pub n: usize,
    pub l2_mass: f64,
    pub h_minus1: f64,
    pub h_minus3: f64,
    pub aliased: bool,
}

/// Norms of `ρ_n` for `n = 0..=n_steps`. With `kappa > 0` the state is kept on the grid.
pub fn evolution_report<T: Real>(
    f: &ScalarClosure<T>,
    cfg: &EvolutionConfig<T>,
) -> Result<Vec<EvolutionRow>, EvolutionError> {
    let p = MapParams { alpha: cfg.alpha };
    if cfg.kappa < T::zero() {
        return Err(EvolutionError::Kappa(cfg.kappa.f64()));
    }
    let row = |n: usize, g: &GridField<T>| {
        let s = to_spectrum(g);
        EvolutionRow {
            n,
            l2_mass: s.l2_norm_sq().f64(),
            h_minus1: sobolev_norm(&s, -T::one()).f64(),
            h_minus3: sobolev_norm(&s, -T::c(3.0)).f64(),
            aliased: g.aliased,
        }
    };
    let mut rows = Vec::with_capacity(cfg.n_steps + 1);
    if cfg.kappa > T::zero() {
        let fg = sample(f, cfg.m)?;
        let mut state = fg.clone();
        rows.push(row(0, &state));
        for n in 1..=cfg.n_steps {
            state = grid_step(&state, &fg, &p, cfg.kappa)?;
            state.aliased = state.aliased || crate::fields::alias_flag(
                f.base_frequency().max(1) as f64 * p.alpha.f64().powi(2 * n as i32),
                cfg.m,
            );
            rows.push(row(n, &state));
        }
    } else {
        let mut rho = f.clone();
        for n in 0..=cfg.n_steps {
            if n > 0 {
                rho = discrete_step(&rho, f, &p);
            }
            rows.push(row(n, &sample(&rho, cfg.m)?));
        }
    }
    Ok(rows)
}
