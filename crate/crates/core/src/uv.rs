//! The UV model: exact parameter-space gradient descent and the closed
//! two-variable map it induces on `(Δf, λ)`.

use std::io::{self, Write};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Map parameters. `n_eff = n^{1-p}` may be any positive real.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UvHyper<T> {
    pub eta: T,
    pub x_norm: T,
    pub n_eff: T,
    pub y: T,
}

impl<T: Scalar> UvHyper<T> {
    pub fn new(eta: T, x_norm: T, n_eff: T, y: T) -> Result<Self> {
        let h = Self {
            eta,
            x_norm,
            n_eff,
            y,
        };
        h.validate()?;
        Ok(h)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta > T::zero()) || !self.eta.is_finite() {
            return Err(Error::invalid("eta", format!("must be > 0, got {}", self.eta)));
        }
        if !(self.x_norm > T::zero()) || !self.x_norm.is_finite() {
            return Err(Error::invalid("x_norm", format!("must be > 0, got {}", self.x_norm)));
        }
        if !(self.n_eff > T::zero()) || !self.n_eff.is_finite() {
            return Err(Error::invalid("n_eff", format!("must be > 0, got {}", self.n_eff)));
        }
        if !self.y.is_finite() {
            return Err(Error::invalid("y", "must be finite"));
        }
        Ok(())
    }

    pub fn with_eta(self, eta: T) -> Self {
        Self { eta, ..self }
    }

    /// `k = ‖x‖ / √n_eff`, the only way `‖x‖` and `n_eff` enter the map.
    #[inline]
    pub fn k(&self) -> T {
        self.x_norm / self.n_eff.sqrt()
    }

    /// `k² = ‖x‖² / n_eff`.
    #[inline]
    pub fn k2(&self) -> T {
        self.x_norm * self.x_norm / self.n_eff
    }
}

/// A point in function space: residual and Hessian trace.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FunctionState<T> {
    pub delta_f: T,
    pub lam: T,
}

impl<T: Scalar> FunctionState<T> {
    pub fn new(delta_f: T, lam: T) -> Self {
        Self { delta_f, lam }
    }

    pub fn loss(&self) -> T {
        T::lit(0.5) * self.delta_f * self.delta_f
    }

    pub fn is_finite(&self) -> bool {
        self.delta_f.is_finite() && self.lam.is_finite()
    }

    /// True once the state is non-finite or `max(|Δf|, |λ|)` exceeds `threshold`.
    pub fn exceeds(&self, threshold: T) -> bool {
        !self.is_finite() || self.delta_f.abs() > threshold || self.lam.abs() > threshold
    }
}

/// One gradient-descent step expressed in function space.
///
/// The λ update uses `Δf·(ηλΔf − 4(Δf + y))`, which is the printed update
/// multiplied through by `Δf`, so the zero-loss line needs no special case.
#[inline]
pub fn step_function_space<T: Scalar>(s: FunctionState<T>, h: &UvHyper<T>) -> FunctionState<T> {
    let FunctionState { delta_f: df, lam } = s;
    let eta = h.eta;
    let k2 = h.k2();
    let four = T::lit(4.0);
    let next_df = df * (T::one() - eta * lam + eta * eta * k2 * df * (df + h.y));
    let next_lam = lam + eta * k2 * df * (eta * lam * df - four * (df + h.y));
    FunctionState::new(next_df, next_lam)
}

/// Two applications of [`step_function_space`].
#[inline]
pub fn step_two<T: Scalar>(s: FunctionState<T>, h: &UvHyper<T>) -> FunctionState<T> {
    step_function_space(step_function_space(s, h), h)
}

/// `β = √n_eff/(2‖x‖)·λ − (Δf + y)`: signed distance from the EoS manifold.
/// One step multiplies it by `(1 + η‖x‖Δf/√n_eff)²`.
#[inline]
pub fn beta<T: Scalar>(s: FunctionState<T>, h: &UvHyper<T>) -> T {
    s.lam / (T::lit(2.0) * h.k()) - (s.delta_f + h.y)
}

/// States with `2‖x‖|Δf + y|/√n_eff > λ` cannot be produced by any real weights.
#[inline]
pub fn is_forbidden<T: Scalar>(s: FunctionState<T>, h: &UvHyper<T>) -> bool {
    T::lit(2.0) * h.k() * (s.delta_f + h.y).abs() > s.lam
}

/// Concrete weights of the UV model `f(x) = vᵀUx / √(n^{1-p})`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UvParams<T> {
    /// `n × d_in`, row-major.
    pub u: Vec<T>,
    pub v: Vec<T>,
    pub n: usize,
    pub d_in: usize,
    pub p: T,
    pub sigma_w2: T,
}

impl<T: Scalar> UvParams<T> {
    pub fn new(u: Vec<T>, v: Vec<T>, n: usize, d_in: usize, p: T, sigma_w2: T) -> Result<Self> {
        if n == 0 || d_in == 0 {
            return Err(Error::DimensionMismatch(format!("n = {n}, d_in = {d_in} must be >= 1")));
        }
        if u.len() != n * d_in || v.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "U has {} entries (want {}), v has {} (want {n})",
                u.len(),
                n * d_in,
                v.len()
            )));
        }
        Ok(Self {
            u,
            v,
            n,
            d_in,
            p,
            sigma_w2,
        })
    }

    pub fn n_eff(&self) -> T {
        T::lit(self.n as f64).powf(T::one() - self.p)
    }

    fn check_input(&self, x: &[T]) -> Result<()> {
        if x.len() != self.d_in {
            return Err(Error::DimensionMismatch(format!(
                "input has dimension {}, weights expect {}",
                x.len(),
                self.d_in
            )));
        }
        Ok(())
    }

    /// Pre-activations `h = Ux`.
    fn hidden(&self, x: &[T]) -> Vec<T> {
        self.u
            .chunks_exact(self.d_in)
            .map(|row| row.iter().zip(x).fold(T::zero(), |acc, (&a, &b)| acc + a * b))
            .collect()
    }

    /// Hyper-parameters of the function-space map these weights live under.
    pub fn hyper(&self, x: &[T], y: T, eta: T) -> Result<UvHyper<T>> {
        self.check_input(x)?;
        UvHyper::new(eta, norm(x), self.n_eff(), y)
    }
}

fn norm<T: Scalar>(x: &[T]) -> T {
    x.iter().fold(T::zero(), |acc, &a| acc + a * a).sqrt()
}

/// Residual and Hessian trace of concrete weights on `(x, y)`.
pub fn observe<T: Scalar>(w: &UvParams<T>, x: &[T], y: T) -> Result<FunctionState<T>> {
    w.check_input(x)?;
    let n_eff = w.n_eff();
    let h = w.hidden(x);
    let f = w.v.iter().zip(&h).fold(T::zero(), |acc, (&a, &b)| acc + a * b) / n_eff.sqrt();
    let h_sq = h.iter().fold(T::zero(), |acc, &a| acc + a * a);
    let v_sq = w.v.iter().fold(T::zero(), |acc, &a| acc + a * a);
    let x_sq = x.iter().fold(T::zero(), |acc, &a| acc + a * a);
    Ok(FunctionState::new(f - y, (h_sq + v_sq * x_sq) / n_eff))
}

/// One simultaneous GD step on `(U, v)`: both layers use the residual of the
/// pre-update weights.
pub fn step_parameter_space<T: Scalar>(
    w: &UvParams<T>,
    x: &[T],
    y: T,
    eta: T,
) -> Result<UvParams<T>> {
    w.check_input(x)?;
    let scale = w.n_eff().sqrt();
    let h = w.hidden(x);
    let f = w.v.iter().zip(&h).fold(T::zero(), |acc, (&a, &b)| acc + a * b) / scale;
    let g = eta * (f - y) / scale;

    let mut next = w.clone();
    for (i, row) in next.u.chunks_exact_mut(w.d_in).enumerate() {
        let vi = w.v[i];
        for (uij, &xj) in row.iter_mut().zip(x) {
            *uij = *uij - g * vi * xj;
        }
    }
    for (vi, &hi) in next.v.iter_mut().zip(&h) {
        *vi = *vi - g * hi;
    }
    Ok(next)
}

/// Draws `U` and `v` with iid `N(0, σ_w²/n^p)` entries.
///
/// Normals come from `rand_distr::StandardNormal` (ziggurat on the generator's
/// uniform bits), drawn as `f64` and converted, `U` row-major first then `v`.
/// Deterministic for a given generator state.
pub fn sample_init<T: Scalar, R: Rng + ?Sized>(
    rng: &mut R,
    n: usize,
    p: T,
    sigma_w2: T,
    d_in: usize,
) -> Result<UvParams<T>> {
    if n == 0 || d_in == 0 {
        return Err(Error::DimensionMismatch(format!("n = {n}, d_in = {d_in} must be >= 1")));
    }
    if !(sigma_w2 >= T::zero()) {
        return Err(Error::invalid("sigma_w2", format!("must be >= 0, got {sigma_w2}")));
    }
    let std = (sigma_w2.as_f64() / (n as f64).powf(p.as_f64())).sqrt();
    let mut draw = |len: usize| -> Vec<T> {
        (0..len)
            .map(|_| T::lit(std * rng.sample::<f64, _>(StandardNormal)))
            .collect()
    };
    let u = draw(n * d_in);
    let v = draw(n);
    UvParams::new(u, v, n, d_in, p, sigma_w2)
}

/// Closed-form initialization moments of `(Δf₀, λ₀)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitMoments<T> {
    pub mean_df: T,
    pub var_df: T,
    pub mean_lam: T,
    pub var_lam: T,
}

/// `Δf₀ ~ (−y, σ_w⁴‖x‖²/n^p)`, `λ₀ ~ (2σ_w²‖x‖², 4σ_w⁴‖x‖⁴/n)`.
pub fn init_moments<T: Scalar>(n: usize, p: T, sigma_w2: T, x_norm: T, y: T) -> InitMoments<T> {
    let n = T::lit(n as f64);
    let s4 = sigma_w2 * sigma_w2;
    let x2 = x_norm * x_norm;
    InitMoments {
        mean_df: -y,
        var_df: s4 * x2 / n.powf(p),
        mean_lam: T::lit(2.0) * sigma_w2 * x2,
        var_lam: T::lit(4.0) * s4 * x2 * x2 / n,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Termination {
    Completed,
    /// The state recorded at `step` crossed the divergence threshold.
    Diverged { step: usize },
}

/// Iterated map: `states[0]` is the initial state, `states[t]` the state after
/// `t` steps.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<T> {
    pub states: Vec<FunctionState<T>>,
    pub betas: Vec<T>,
    pub losses: Vec<T>,
    pub terminated: Termination,
}

impl<T: Scalar> Trajectory<T> {
    pub fn diverged(&self) -> bool {
        matches!(self.terminated, Termination::Diverged { .. })
    }

    pub fn last(&self) -> FunctionState<T> {
        *self.states.last().expect("trajectory holds the initial state")
    }

    /// Writes `t,delta_f,lambda,beta,loss`, one row per recorded state.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "t,delta_f,lambda,beta,loss")?;
        for (t, ((s, b), l)) in self.states.iter().zip(&self.betas).zip(&self.losses).enumerate() {
            writeln!(out, "{t},{},{},{b},{l}", s.delta_f, s.lam)?;
        }
        Ok(())
    }
}

/// Iterates the function-space map for up to `steps` steps, stopping at the
/// first state with a non-finite coordinate or `max(|Δf|, |λ|) > threshold`.
pub fn simulate<T: Scalar>(
    s0: FunctionState<T>,
    h: &UvHyper<T>,
    steps: usize,
    threshold: T,
) -> Trajectory<T> {
    let mut states = Vec::with_capacity(steps + 1);
    let mut betas = Vec::with_capacity(steps + 1);
    let mut losses = Vec::with_capacity(steps + 1);
    let mut record = |s: FunctionState<T>| {
        states.push(s);
        betas.push(beta(s, h));
        losses.push(s.loss());
    };

    record(s0);
    let mut terminated = if s0.exceeds(threshold) {
        Termination::Diverged { step: 0 }
    } else {
        Termination::Completed
    };
    let mut s = s0;
    if terminated == Termination::Completed {
        for t in 1..=steps {
            s = step_function_space(s, h);
            record(s);
            if s.exceeds(threshold) {
                terminated = Termination::Diverged { step: t };
                break;
            }
        }
    }
    Trajectory {
        states,
        betas,
        losses,
        terminated,
    }
}
