//! Gauss–Legendre rules.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

type Rule = Arc<(Vec<f64>, Vec<f64>)>;

/// Nodes and weights on `[-1, 1]`, cached per `n`.
pub fn gauss_legendre(n: usize) -> Rule {
    static CACHE: OnceLock<Mutex<HashMap<usize, Rule>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(r) = cache.lock().unwrap().get(&n) {
        return r.clone();
    }
    let r = Arc::new(newton_rule(n));
    cache.lock().unwrap().insert(n, r.clone());
    r
}

// Newton iteration on `P_n`.
fn newton_rule(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..(n + 1) / 2 {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

/// Rule mapped to `[a, b]`.
pub fn rule_on(a: f64, b: f64, n: usize) -> Vec<(f64, f64)> {
    let rule = gauss_legendre(n);
    let (x, w) = (&rule.0, &rule.1);
    let (c, h) = ((a + b) / 2.0, (b - a) / 2.0);
    x.iter().zip(w.iter()).map(|(x, w)| (c + h * x, h * w)).collect()
}

/// Panels of `[a, b]` cut at every multiple of one half, `n` nodes each.
pub fn half_period_rule(a: f64, b: f64, n: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    let mut lo = a;
    while lo < b {
        let hi = ((lo * 2.0).floor() + 1.0) / 2.0;
        let hi = hi.min(b);
        if hi - lo > 1e-15 {
            out.extend(rule_on(lo, hi, n));
        }
        lo = hi;
    }
    out
}

pub fn integrate(f: impl Fn(f64) -> f64, rule: &[(f64, f64)]) -> f64 {
    rule.iter().map(|(x, w)| w * f(*x)).sum()
}
