//! Closed-form fixed points of the function-space map, their linear stability,
//! and the critical learning rates.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::uv::{step_function_space, FunctionState, UvHyper};

/// Tolerance on `| |μ| − 1 |` below which an eigenvalue is called marginal.
pub const MARGINAL_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FixedPointKind {
    /// A point `(0, λ)` of the zero-loss line.
    #[serde(rename = "I")]
    ZeroLossLine,
    /// `(−y, 0)`, the image of zero weights.
    #[serde(rename = "II")]
    Origin,
    /// The function-space-only point with `Δf < 0`.
    #[serde(rename = "III")]
    NegativeBranch,
    /// The function-space-only point with `Δf > 0`.
    #[serde(rename = "IV")]
    PositiveBranch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stability {
    Stable,
    Unstable,
    Saddle,
    Marginal,
}

impl Stability {
    /// Classifies by eigenvalue moduli.
    pub fn from_moduli<T: Scalar>(moduli: &[T]) -> Self {
        let tol = T::lit(MARGINAL_TOL);
        if moduli.iter().any(|&m| (m - T::one()).abs() <= tol) {
            return Stability::Marginal;
        }
        let inside = moduli.iter().filter(|&&m| m < T::one()).count();
        match inside {
            n if n == moduli.len() => Stability::Stable,
            0 => Stability::Unstable,
            _ => Stability::Saddle,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedPointReport<T> {
    pub kind: FixedPointKind,
    pub location: FunctionState<T>,
    pub eigenvalues: [T; 2],
    /// Unit eigenvectors, first nonzero component positive.
    pub eigenvectors: [[T; 2]; 2],
    pub stability: Stability,
    /// Indices into `eigenvalues` that decided `stability`. On the zero-loss
    /// line the eigenvalue 1 along the line is excluded.
    pub classified_by: Vec<usize>,
    /// Set on `II` when `y = 0`, where it sits on the zero-loss line.
    pub merged_with_line: bool,
    /// Set when `η ≥ η_upper`, outside the regime the textbook labels describe.
    pub beyond_upper_rate: bool,
}

impl<T: Scalar> FixedPointReport<T> {
    /// Row of the JSON report: `{kind, delta_f, lambda, eig, eigvec, stability}`.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "kind": self.kind,
            "delta_f": self.location.delta_f.as_f64(),
            "lambda": self.location.lam.as_f64(),
            "eig": self.eigenvalues.iter().map(|v| v.as_f64()).collect::<Vec<_>>(),
            "eigvec": self.eigenvectors.iter()
                .map(|u| u.iter().map(|c| c.as_f64()).collect::<Vec<_>>())
                .collect::<Vec<_>>(),
            "stability": self.stability,
            "classified_by": self.classified_by,
            "merged_with_line": self.merged_with_line,
            "beyond_upper_rate": self.beyond_upper_rate,
        })
    }
}

/// JSON array over a set of reports.
pub fn reports_to_json<T: Scalar>(reports: &[FixedPointReport<T>]) -> serde_json::Value {
    serde_json::Value::Array(reports.iter().map(|r| r.to_json()).collect())
}

/// Smallest λ on the zero-loss line reachable from real weights: `2‖x‖y/√n_eff`.
pub fn line_lambda_min<T: Scalar>(h: &UvHyper<T>) -> T {
    T::lit(2.0) * h.k() * h.y.abs()
}

fn unit<T: Scalar>(u: [T; 2]) -> [T; 2] {
    let n = (u[0] * u[0] + u[1] * u[1]).sqrt();
    let mut out = [u[0] / n, u[1] / n];
    let first = if out[0] != T::zero() { out[0] } else { out[1] };
    if first < T::zero() {
        out = [-out[0], -out[1]];
    }
    out
}

/// Fixed line point `(0, line_lambda)` and points II–IV with Jacobian eigenpairs.
pub fn fixed_points<T: Scalar>(h: &UvHyper<T>, line_lambda: T) -> Result<Vec<FixedPointReport<T>>> {
    h.validate()?;
    let lam_min = line_lambda_min(h);
    if !(line_lambda >= lam_min) {
        return Err(Error::BelowLineExistence {
            min: lam_min.as_f64(),
            got: line_lambda.as_f64(),
        });
    }
    let one = T::one();
    let two = T::lit(2.0);
    let four = T::lit(4.0);
    let (eta, y, k) = (h.eta, h.y, h.k());
    let eky = eta * k * y;
    let upper = eky >= two;
    let half_over_k = one / (two * k);
    // eigenvector slope n_eff/(η‖x‖²y) diverges at y = 0; the direction tends to (1, 0)
    let along = |slope_num: T| -> [T; 2] {
        if y == T::zero() {
            [one, T::zero()]
        } else {
            unit([slope_num / (k * k * y), one])
        }
    };

    let report = |kind, location, eigenvalues: [T; 2], eigenvectors, classified_by: Vec<usize>| {
        let moduli: Vec<T> = classified_by.iter().map(|&i| eigenvalues[i].abs()).collect();
        FixedPointReport {
            kind,
            location,
            eigenvalues,
            eigenvectors,
            stability: Stability::from_moduli(&moduli),
            classified_by,
            merged_with_line: false,
            beyond_upper_rate: upper,
        }
    };

    let mut out = Vec::with_capacity(4);
    out.push(report(
        FixedPointKind::ZeroLossLine,
        FunctionState::new(T::zero(), line_lambda),
        [one, one - eta * line_lambda],
        [[T::zero(), one], along(line_lambda / four)],
        vec![1],
    ));

    let mut origin = report(
        FixedPointKind::Origin,
        FunctionState::new(-y, T::zero()),
        [(one - eky).powi(2), (one + eky).powi(2)],
        [unit([-half_over_k, one]), unit([half_over_k, one])],
        vec![0, 1],
    );
    origin.merged_with_line = y == T::zero();
    out.push(origin);

    let df_branch = two / (k * eta);
    let lam_shift = two * k * y;
    out.push(report(
        FixedPointKind::NegativeBranch,
        FunctionState::new(-df_branch, four / eta - lam_shift),
        [T::lit(9.0), T::lit(5.0) - two * eky],
        [along(one / eta), unit([-half_over_k, one])],
        vec![0, 1],
    ));
    out.push(report(
        FixedPointKind::PositiveBranch,
        FunctionState::new(df_branch, four / eta + lam_shift),
        [T::lit(9.0), T::lit(5.0) + two * eky],
        [along(one / eta), unit([half_over_k, one])],
        vec![0, 1],
    ));
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticalRates<T> {
    /// EoS onset `√n_eff/(‖x‖y)`; `None` when `y = 0`.
    pub eta_c: Option<T>,
    /// `2·eta_c`, beyond which every non-fixed initialization diverges.
    pub eta_upper: Option<T>,
    /// `4/λ₀`, only for `y = 0`.
    pub eta_max_y0: Option<T>,
}

pub fn critical_rates<T: Scalar>(
    x_norm: T,
    n_eff: T,
    y: T,
    lambda0_for_y0: Option<T>,
) -> Result<CriticalRates<T>> {
    if !(x_norm > T::zero()) {
        return Err(Error::invalid("x_norm", "must be > 0"));
    }
    if !(n_eff > T::zero()) {
        return Err(Error::invalid("n_eff", "must be > 0"));
    }
    if y < T::zero() {
        return Err(Error::invalid("y", "negative targets are not analyzed; flip the sign"));
    }
    if y == T::zero() {
        let lam0 = lambda0_for_y0
            .ok_or_else(|| Error::invalid("lambda0", "required when y = 0"))?;
        if !(lam0 > T::zero()) {
            return Err(Error::invalid("lambda0", "must be > 0"));
        }
        return Ok(CriticalRates {
            eta_c: None,
            eta_upper: None,
            eta_max_y0: Some(T::lit(4.0) / lam0),
        });
    }
    let eta_c = n_eff.sqrt() / (x_norm * y);
    Ok(CriticalRates {
        eta_c: Some(eta_c),
        eta_upper: Some(T::lit(2.0) * eta_c),
        eta_max_y0: None,
    })
}

/// Row-major 2×2 matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mat2<T>(pub [[T; 2]; 2]);

impl<T: Scalar> Mat2<T> {
    pub fn identity() -> Self {
        Mat2([[T::one(), T::zero()], [T::zero(), T::one()]])
    }

    pub fn mul_vec(&self, u: [T; 2]) -> [T; 2] {
        let m = &self.0;
        [m[0][0] * u[0] + m[0][1] * u[1], m[1][0] * u[0] + m[1][1] * u[1]]
    }

    pub fn mul(&self, other: &Self) -> Self {
        let (a, b) = (&self.0, &other.0);
        let mut out = [[T::zero(); 2]; 2];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell = a[i][0] * b[0][j] + a[i][1] * b[1][j];
            }
        }
        Mat2(out)
    }

    pub fn trace(&self) -> T {
        self.0[0][0] + self.0[1][1]
    }

    pub fn det(&self) -> T {
        self.0[0][0] * self.0[1][1] - self.0[0][1] * self.0[1][0]
    }
}

/// Central-difference Jacobian of the one-step map. The step in each
/// coordinate is `rel_step · max(1, |coordinate|)`.
pub fn jacobian_numeric<T: Scalar>(s: FunctionState<T>, h: &UvHyper<T>, rel_step: T) -> Result<Mat2<T>> {
    if !(rel_step > T::zero() && rel_step <= T::lit(1e-3)) {
        return Err(Error::invalid("rel_step", format!("must lie in (0, 1e-3], got {rel_step}")));
    }
    let two = T::lit(2.0);
    let hx = rel_step * s.delta_f.abs().max(T::one());
    let hl = rel_step * s.lam.abs().max(T::one());
    let plus_x = step_function_space(FunctionState::new(s.delta_f + hx, s.lam), h);
    let minus_x = step_function_space(FunctionState::new(s.delta_f - hx, s.lam), h);
    let plus_l = step_function_space(FunctionState::new(s.delta_f, s.lam + hl), h);
    let minus_l = step_function_space(FunctionState::new(s.delta_f, s.lam - hl), h);
    Ok(Mat2([
        [
            (plus_x.delta_f - minus_x.delta_f) / (two * hx),
            (plus_l.delta_f - minus_l.delta_f) / (two * hl),
        ],
        [
            (plus_x.lam - minus_x.lam) / (two * hx),
            (plus_l.lam - minus_l.lam) / (two * hl),
        ],
    ]))
}

/// Eigen-decomposition of a 2×2 matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Eig2<T> {
    /// Real parts, larger first.
    pub re: [T; 2],
    pub im: [T; 2],
    pub moduli: [T; 2],
    pub complex: bool,
    /// Unit eigenvectors paired with `re` (real spectrum only).
    pub vectors: Option<[[T; 2]; 2]>,
}

impl<T: Scalar> Eig2<T> {
    pub fn stability(&self) -> Stability {
        Stability::from_moduli(&self.moduli)
    }
}

pub fn eig2<T: Scalar>(m: &Mat2<T>) -> Eig2<T> {
    let half = T::lit(0.5);
    let mid = half * m.trace();
    let disc = mid * mid - m.det();
    if disc < T::zero() {
        let im = (-disc).sqrt();
        let modulus = (mid * mid + im * im).sqrt();
        return Eig2 {
            re: [mid, mid],
            im: [im, -im],
            moduli: [modulus, modulus],
            complex: true,
            vectors: None,
        };
    }
    let root = disc.sqrt();
    // larger-magnitude root first to avoid cancellation, the other from the determinant
    let big = if mid >= T::zero() { mid + root } else { mid - root };
    let small = if big != T::zero() { m.det() / big } else { T::zero() };
    let (l1, l2) = if big >= small { (big, small) } else { (small, big) };

    let [[a, b], [c, d]] = m.0;
    let scale = a.abs().max(b.abs()).max(c.abs()).max(d.abs()).max(T::one());
    let tiny = T::epsilon() * T::lit(64.0) * scale;
    let vector = |mu: T, fallback: [T; 2]| -> [T; 2] {
        let r1 = [b, mu - a];
        let r2 = [mu - d, c];
        let n1 = r1[0].abs() + r1[1].abs();
        let n2 = r2[0].abs() + r2[1].abs();
        let pick = if n1 >= n2 { (r1, n1) } else { (r2, n2) };
        if pick.1 <= tiny {
            fallback
        } else {
            unit(pick.0)
        }
    };
    let e0 = [T::one(), T::zero()];
    let e1 = [T::zero(), T::one()];
    let mut v1 = vector(l1, e0);
    let mut v2 = vector(l2, e1);
    // a scalar multiple of the identity has every direction as eigenvector
    if (l1 - l2).abs() <= tiny && v1 == v2 {
        v1 = e0;
        v2 = e1;
    }
    Eig2 {
        re: [l1, l2],
        im: [T::zero(), T::zero()],
        moduli: [l1.abs(), l2.abs()],
        complex: false,
        vectors: Some([v1, v2]),
    }
}
