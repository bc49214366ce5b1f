//! Dynamics on the edge-of-stability manifold `β = 0`, where the two-variable
//! map reduces to a cubic map of `Δf` alone, plus bifurcation scans and
//! periodic-orbit finding for both the reduced and the full map.

use std::io::{self, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fixed_points::Mat2;
use crate::scalar::Scalar;
use crate::signal::{detect_period_in_tail, Period};
use crate::uv::{step_function_space, FunctionState, UvHyper};

/// `Δf + ηkΔf(ηkΔf − 2)(Δf + y)` with `k = ‖x‖/√n_eff`.
#[inline]
pub fn manifold_map<T: Scalar>(df: T, h: &UvHyper<T>) -> T {
    let a = h.eta * h.k();
    df + a * df * (a * df - T::lit(2.0)) * (df + h.y)
}

/// Derivative of [`manifold_map`] in `Δf`.
#[inline]
pub fn manifold_derivative<T: Scalar>(df: T, h: &UvHyper<T>) -> T {
    let a = h.eta * h.k();
    let two = T::lit(2.0);
    T::one() + a * a * (T::lit(3.0) * df * df + two * h.y * df) - two * a * (two * df + h.y)
}

/// λ on the manifold: `2‖x‖(Δf + y)/√n_eff`.
#[inline]
pub fn manifold_lambda<T: Scalar>(df: T, h: &UvHyper<T>) -> T {
    T::lit(2.0) * h.k() * (df + h.y)
}

/// Loss on the manifold as a function of λ, `½(λ√n_eff/(2‖x‖) − y)²`.
///
/// Equal to `(y²/2)(η_c λ/2 − 1)²` for `y ≠ 0` and finite at `y = 0`.
pub fn manifold_loss<T: Scalar>(lam: T, h: &UvHyper<T>) -> T {
    let r = lam / (T::lit(2.0) * h.k()) - h.y;
    T::lit(0.5) * r * r
}

/// Learning rates at which the manifold map first admits a 2-cycle (`η₁ = η_c`)
/// and at which that cycle loses stability (`η₂`).
pub fn period2_onset<T: Scalar>(h: &UvHyper<T>) -> Result<(T, T)> {
    if !(h.y > T::zero()) {
        return Err(Error::invalid("y", format!("must be positive, got {}", h.y)));
    }
    let eta1 = T::one() / (h.k() * h.y);
    let eta2 = (T::lit(32.0).sqrt() - T::lit(2.0)) / T::lit(2.0) * eta1;
    Ok((eta1, eta2))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MapKind {
    Manifold,
    Full,
}

impl std::str::FromStr for MapKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "manifold" => Ok(MapKind::Manifold),
            "full" => Ok(MapKind::Full),
            other => Err(Error::invalid("map", format!("expected `manifold` or `full`, got `{other}`"))),
        }
    }
}

/// Analytic Jacobian of the one-step function-space map.
pub fn jacobian<T: Scalar>(s: FunctionState<T>, h: &UvHyper<T>) -> Mat2<T> {
    let FunctionState { delta_f: df, lam } = s;
    let (eta, k2, y) = (h.eta, h.k2(), h.y);
    let (two, three, four) = (T::lit(2.0), T::lit(3.0), T::lit(4.0));
    let e2k2 = eta * eta * k2;
    Mat2([
        [T::one() - eta * lam + e2k2 * (three * df * df + two * y * df), -eta * df],
        [
            two * e2k2 * lam * df - four * eta * k2 * (two * df + y),
            T::one() + e2k2 * df * df,
        ],
    ])
}

const NEWTON_ITERS: usize = 200;
const RESIDUAL_TOL: f64 = 1e-10;
const DIVISOR_SEPARATION: f64 = 1e-8;

fn proper_divisors(p: usize) -> impl Iterator<Item = usize> {
    (1..p).filter(move |d| p % d == 0)
}

fn manifold_power<T: Scalar>(x: T, h: &UvHyper<T>, p: usize) -> (T, T) {
    // value and derivative of M^p at x
    let (mut v, mut d) = (x, T::one());
    for _ in 0..p {
        d = d * manifold_derivative(v, h);
        v = manifold_map(v, h);
    }
    (v, d)
}

fn full_power<T: Scalar>(s: FunctionState<T>, h: &UvHyper<T>, p: usize) -> (FunctionState<T>, Mat2<T>) {
    let (mut v, mut j) = (s, Mat2::identity());
    for _ in 0..p {
        j = jacobian(v, h).mul(&j);
        v = step_function_space(v, h);
    }
    (v, j)
}

fn newton_1d<T: Scalar>(x0: T, h: &UvHyper<T>, p: usize) -> Option<T> {
    let g = |x: T| manifold_power(x, h, p).0 - x;
    let mut x = x0;
    let mut r = g(x);
    for _ in 0..NEWTON_ITERS {
        if !r.is_finite() {
            return None;
        }
        if r.abs() <= T::lit(RESIDUAL_TOL * 1e-3) {
            break;
        }
        let (v, d) = manifold_power(x, h, p);
        let dg = d - T::one();
        if dg == T::zero() || !dg.is_finite() {
            return None;
        }
        let step = (v - x) / dg;
        let mut t = T::one();
        let mut accepted = false;
        for _ in 0..40 {
            let cand = x - t * step;
            let rc = g(cand);
            if rc.is_finite() && rc.abs() < r.abs() {
                x = cand;
                r = rc;
                accepted = true;
                break;
            }
            t = t * T::lit(0.5);
        }
        if !accepted {
            break;
        }
    }
    r.is_finite().then_some(x)
}

fn bisect_1d<T: Scalar>(mut a: T, mut b: T, h: &UvHyper<T>, p: usize) -> T {
    let g = |x: T| manifold_power(x, h, p).0 - x;
    let mut ga = g(a);
    for _ in 0..200 {
        let m = T::lit(0.5) * (a + b);
        let gm = g(m);
        if gm == T::zero() {
            return m;
        }
        if (gm < T::zero()) == (ga < T::zero()) {
            a = m;
            ga = gm;
        } else {
            b = m;
        }
    }
    T::lit(0.5) * (a + b)
}

fn solve2<T: Scalar>(m: &Mat2<T>, r: [T; 2]) -> Option<[T; 2]> {
    let det = m.det();
    if det == T::zero() || !det.is_finite() {
        return None;
    }
    let [[a, b], [c, d]] = m.0;
    Some([(d * r[0] - b * r[1]) / det, (a * r[1] - c * r[0]) / det])
}

fn newton_2d<T: Scalar>(s0: FunctionState<T>, h: &UvHyper<T>, p: usize) -> Option<FunctionState<T>> {
    let resid = |s: FunctionState<T>| {
        let v = full_power(s, h, p).0;
        [v.delta_f - s.delta_f, v.lam - s.lam]
    };
    let norm = |r: [T; 2]| r[0].abs().max(r[1].abs());
    let mut s = s0;
    let mut r = resid(s);
    for _ in 0..NEWTON_ITERS {
        if !norm(r).is_finite() {
            return None;
        }
        if norm(r) <= T::lit(RESIDUAL_TOL * 1e-3) {
            break;
        }
        let (_, j) = full_power(s, h, p);
        let mut g = j.0;
        g[0][0] = g[0][0] - T::one();
        g[1][1] = g[1][1] - T::one();
        let step = solve2(&Mat2(g), r)?;
        let mut t = T::one();
        let mut accepted = false;
        for _ in 0..40 {
            let cand = FunctionState::new(s.delta_f - t * step[0], s.lam - t * step[1]);
            let rc = resid(cand);
            if norm(rc).is_finite() && norm(rc) < norm(r) {
                s = cand;
                r = rc;
                accepted = true;
                break;
            }
            t = t * T::lit(0.5);
        }
        if !accepted {
            break;
        }
    }
    norm(r).is_finite().then_some(s)
}

fn state_dist<T: Scalar>(a: FunctionState<T>, b: FunctionState<T>) -> T {
    (a.delta_f - b.delta_f).abs().max((a.lam - b.lam).abs())
}

/// Solves `M^period(x) = x` from each guess and returns the distinct orbits of
/// minimal period `period`, each starting at its smallest-`Δf` point.
///
/// For [`MapKind::Manifold`] only `delta_f` of each guess is used and orbit
/// points carry λ from [`manifold_lambda`]. Consecutive manifold guesses that
/// bracket a sign change of `M^period(x) − x` are also bisected.
pub fn find_period_orbit<T: Scalar>(
    kind: MapKind,
    h: &UvHyper<T>,
    period: usize,
    guesses: &[FunctionState<T>],
) -> Result<Vec<Vec<FunctionState<T>>>> {
    if period == 0 {
        return Err(Error::invalid("period", "must be >= 1"));
    }
    let tol = T::lit(RESIDUAL_TOL);
    let sep = T::lit(DIVISOR_SEPARATION);
    let mut roots: Vec<FunctionState<T>> = Vec::new();
    match kind {
        MapKind::Manifold => {
            let g = |x: T| manifold_power(x, h, period).0 - x;
            let mut cands: Vec<T> = guesses.iter().filter_map(|s| newton_1d(s.delta_f, h, period)).collect();
            for w in guesses.windows(2) {
                let (a, b) = (w[0].delta_f, w[1].delta_f);
                let (ga, gb) = (g(a), g(b));
                if ga.is_finite() && gb.is_finite() && (ga < T::zero()) != (gb < T::zero()) {
                    let x = bisect_1d(a, b, h, period);
                    cands.push(newton_1d(x, h, period).unwrap_or(x));
                }
            }
            for x in cands {
                if !(g(x).abs() <= tol) {
                    continue;
                }
                let lower = proper_divisors(period).any(|d| (manifold_power(x, h, d).0 - x).abs() <= sep);
                if !lower {
                    roots.push(FunctionState::new(x, manifold_lambda(x, h)));
                }
            }
        }
        MapKind::Full => {
            for s in guesses.iter().filter_map(|&s| newton_2d(s, h, period)) {
                if !(state_dist(full_power(s, h, period).0, s) <= tol) {
                    continue;
                }
                let lower = proper_divisors(period).any(|d| state_dist(full_power(s, h, d).0, s) <= sep);
                if !lower {
                    roots.push(s);
                }
            }
        }
    }

    let advance = |s: FunctionState<T>| match kind {
        MapKind::Manifold => {
            let x = manifold_map(s.delta_f, h);
            FunctionState::new(x, manifold_lambda(x, h))
        }
        MapKind::Full => step_function_space(s, h),
    };
    let mut orbits: Vec<Vec<FunctionState<T>>> = Vec::new();
    for root in roots {
        if orbits.iter().flatten().any(|&q| state_dist(q, root) <= sep) {
            continue;
        }
        let mut orbit = Vec::with_capacity(period);
        let mut s = root;
        for _ in 0..period {
            orbit.push(s);
            s = advance(s);
        }
        let start = (0..period)
            .min_by(|&i, &j| orbit[i].delta_f.partial_cmp(&orbit[j].delta_f).unwrap())
            .unwrap_or(0);
        orbit.rotate_left(start);
        orbits.push(orbit);
    }
    if orbits.is_empty() {
        Err(Error::OrbitNotFound { period })
    } else {
        Ok(orbits)
    }
}

/// Starting point of a bifurcation scan. A scalar is a `Δf` on the manifold;
/// a full state is projected to its `Δf` for the manifold map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BifurcationInit<T> {
    Scalar(T),
    State(FunctionState<T>),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BifurcationConfig<T> {
    pub kind: MapKind,
    pub eta_range: (T, T),
    pub eta_count: usize,
    pub init: BifurcationInit<T>,
    pub transient: usize,
    pub record: usize,
    pub bin_tol: T,
    pub threshold: T,
    pub max_period: usize,
}

impl<T: Scalar> BifurcationConfig<T> {
    /// Defaults for the reference hypers `(‖x‖, n_eff, y) = (1, 1, 2)`: the
    /// full map starts at `(−2, 1)`, just above the origin fixed point.
    pub fn new(kind: MapKind, eta_range: (T, T), eta_count: usize) -> Self {
        let init = match kind {
            MapKind::Manifold => BifurcationInit::Scalar(T::lit(-0.1)),
            MapKind::Full => BifurcationInit::State(FunctionState::new(T::lit(-2.0), T::one())),
        };
        Self {
            kind,
            eta_range,
            eta_count,
            init,
            transient: 50_000,
            record: 1_000,
            bin_tol: T::lit(1e-6),
            threshold: T::lit(crate::DEFAULT_DIVERGENCE_THRESHOLD),
            max_period: 32,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.transient < 1 || self.record < 1 {
            return Err(Error::invalid("transient/record", "must both be >= 1"));
        }
        if self.eta_count < 2 {
            return Err(Error::invalid("eta_count", "must be >= 2"));
        }
        if !(self.eta_range.0 > T::zero() && self.eta_range.1 > self.eta_range.0) {
            return Err(Error::invalid("eta_range", "need 0 < lo < hi"));
        }
        if !(self.bin_tol > T::zero()) {
            return Err(Error::invalid("bin_tol", "must be positive"));
        }
        Ok(())
    }

    pub fn etas(&self) -> Vec<T> {
        let (lo, hi) = self.eta_range;
        let last = T::lit((self.eta_count - 1) as f64);
        (0..self.eta_count)
            .map(|i| lo + (hi - lo) * T::lit(i as f64) / last)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BifurcationSample<T> {
    pub eta: T,
    /// Raw recorded λ values; empty when diverged.
    pub values: Vec<T>,
    /// Sorted values with neighbours closer than `bin_tol` merged.
    pub distinct: Vec<T>,
    pub diverged: bool,
    /// `None` when diverged.
    pub period: Option<Period>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BifurcationDiagram<T> {
    pub kind: MapKind,
    pub samples: Vec<BifurcationSample<T>>,
}

impl<T: Scalar> BifurcationDiagram<T> {
    pub fn etas(&self) -> Vec<T> {
        self.samples.iter().map(|s| s.eta).collect()
    }

    /// Smallest sampled η whose orbit diverged.
    pub fn first_divergence(&self) -> Option<T> {
        self.samples.iter().find(|s| s.diverged).map(|s| s.eta)
    }

    /// Long-form `eta,lambda_value` rows of the raw recorded values.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "eta,lambda_value")?;
        for s in &self.samples {
            for v in &s.values {
                writeln!(out, "{},{v}", s.eta)?;
            }
        }
        Ok(())
    }

    /// Per-η `{eta, period, diverged, distinct}`; `period` is an integer,
    /// `"aperiodic"`, or null for diverged samples.
    pub fn summary_json(&self) -> serde_json::Value {
        let rows: Vec<_> = self
            .samples
            .iter()
            .map(|s| {
                let period = match s.period {
                    Some(Period::Periodic(p)) => serde_json::json!(p),
                    Some(Period::Aperiodic) => serde_json::json!("aperiodic"),
                    None => serde_json::Value::Null,
                };
                serde_json::json!({
                    "eta": s.eta.as_f64(),
                    "period": period,
                    "diverged": s.diverged,
                    "distinct": s.distinct.len(),
                })
            })
            .collect();
        serde_json::json!({ "map": self.kind, "samples": rows })
    }
}

/// Sorts and merges values whose gap to the previous kept value is ≤ `tol`.
pub fn dedup_values<T: Scalar>(values: &[T], tol: T) -> Vec<T> {
    let mut v: Vec<T> = values.iter().copied().filter(|x| x.is_finite()).collect();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut out: Vec<T> = Vec::new();
    for x in v {
        match out.last() {
            Some(&last) if x - last <= tol => {}
            _ => out.push(x),
        }
    }
    out
}

fn run_sample<T: Scalar>(cfg: &BifurcationConfig<T>, h: &UvHyper<T>) -> BifurcationSample<T> {
    let thr = cfg.threshold;
    let total = cfg.transient + cfg.record;
    let mut values = Vec::with_capacity(cfg.record);
    let mut diverged = false;
    match cfg.kind {
        MapKind::Manifold => {
            let mut x = match cfg.init {
                BifurcationInit::Scalar(x) => x,
                BifurcationInit::State(s) => s.delta_f,
            };
            for t in 0..total {
                x = manifold_map(x, h);
                if !x.is_finite() || x.abs() > thr {
                    diverged = true;
                    break;
                }
                if t >= cfg.transient {
                    values.push(manifold_lambda(x, h));
                }
            }
        }
        MapKind::Full => {
            let mut s = match cfg.init {
                BifurcationInit::Scalar(x) => FunctionState::new(x, manifold_lambda(x, h)),
                BifurcationInit::State(s) => s,
            };
            for t in 0..total {
                s = step_function_space(s, h);
                if s.exceeds(thr) {
                    diverged = true;
                    break;
                }
                if t >= cfg.transient {
                    values.push(s.lam);
                }
            }
        }
    }
    if diverged {
        return BifurcationSample {
            eta: h.eta,
            values: Vec::new(),
            distinct: Vec::new(),
            diverged,
            period: None,
        };
    }
    let distinct = dedup_values(&values, cfg.bin_tol);
    let period = detect_period_in_tail(&values, cfg.max_period, cfg.bin_tol, values.len());
    BifurcationSample {
        eta: h.eta,
        values,
        distinct,
        diverged,
        period: Some(period),
    }
}

/// Sweeps η over `cfg.eta_range`, holding the other hypers of `template` fixed.
pub fn bifurcation<T: Scalar>(template: &UvHyper<T>, cfg: &BifurcationConfig<T>) -> Result<BifurcationDiagram<T>> {
    cfg.validate()?;
    template.with_eta(cfg.eta_range.0).validate()?;
    let samples = cfg
        .etas()
        .into_par_iter()
        .map(|eta| run_sample(cfg, &template.with_eta(eta)))
        .collect();
    Ok(BifurcationDiagram { kind: cfg.kind, samples })
}
