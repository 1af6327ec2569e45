//! Gaussian oracles for the posterior dynamics of a free or harmonic particle
//! measured through `L_k = λ_k Q`.
//!
//! The closed moment equations used here are derived in
//! `docs/moment_equations.md`.

use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::noise::NoisePath;
use crate::quantum_grid::{Moments, Potential, SystemParams};
use crate::{Error, Result};

/// Mean position and velocity with the symmetric covariances of `(Q, P)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GaussianPosterior {
    pub q: f64,
    pub v: f64,
    pub vqq: f64,
    pub vqp: f64,
    pub vpp: f64,
}

impl GaussianPosterior {
    pub fn from_moments(m: &Moments, mass: f64) -> Self {
        GaussianPosterior {
            q: m.q,
            v: m.p / mass,
            vqq: m.vqq,
            vqp: m.vqp,
            vpp: m.vpp,
        }
    }

    /// Minimum-uncertainty packet of position spread `width`.
    pub fn coherent(q: f64, v: f64, width: f64, hbar: f64) -> Self {
        GaussianPosterior {
            q,
            v,
            vqq: width * width,
            vqp: 0.0,
            vpp: hbar * hbar / (4.0 * width * width),
        }
    }

    pub fn determinant(&self) -> f64 {
        self.vqq * self.vpp - self.vqp * self.vqp
    }

    pub fn check(&self, hbar: f64) -> Result<()> {
        let floor = 0.25 * hbar * hbar * (1.0 - 1e-6);
        if !(self.vqq >= 0.0 && self.vpp >= 0.0 && self.determinant() >= floor) {
            return Err(Error::numerical(format!(
                "covariance ({}, {}, {}) violates positivity or the uncertainty floor",
                self.vqq, self.vqp, self.vpp
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Default)]
pub enum Forcing {
    #[default]
    Zero,
    Constant(f64),
    Function(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl Forcing {
    pub fn eval(&self, t: f64) -> f64 {
        match self {
            Forcing::Zero => 0.0,
            Forcing::Constant(g) => *g,
            Forcing::Function(f) => f(t),
        }
    }
}

impl fmt::Debug for Forcing {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Forcing::Zero => write!(f, "Zero"),
            Forcing::Constant(g) => write!(f, "Constant({g})"),
            Forcing::Function(_) => write!(f, "Function(..)"),
        }
    }
}

#[derive(Debug, Clone)]
enum Branch {
    Closed { a: f64, b: f64 },
    Numeric { h: f64, z: Vec<f64>, zp: Vec<f64> },
}

/// Solution of `z'' + 2κ z' + 2κ² z = −g(t)`.
#[derive(Debug, Clone)]
pub struct DeviationSolution {
    pub kappa: f64,
    pub z0: f64,
    pub zp0: f64,
    pub forcing: Forcing,
    branch: Branch,
}

/// Default horizon of the numerical branch, in units of `1/κ`.
pub const DEFAULT_HORIZON: f64 = 40.0;

pub fn solve_deviation(kappa: f64, z0: f64, zp0: f64, forcing: Forcing) -> Result<DeviationSolution> {
    solve_deviation_on(kappa, z0, zp0, forcing, DEFAULT_HORIZON / kappa)
}

pub fn solve_deviation_on(
    kappa: f64,
    z0: f64,
    zp0: f64,
    forcing: Forcing,
    horizon: f64,
) -> Result<DeviationSolution> {
    if !(kappa > 0.0 && kappa.is_finite()) {
        return Err(Error::invalid(format!("kappa must be positive, got {kappa}")));
    }
    if !(z0.is_finite() && zp0.is_finite() && horizon > 0.0) {
        return Err(Error::invalid("initial data must be finite and the horizon positive"));
    }
    let branch = match forcing {
        Forcing::Zero => Branch::Closed {
            a: z0,
            b: z0 + zp0 / kappa,
        },
        _ => {
            let h = 2.5e-3 / kappa;
            let steps = (horizon / h).ceil() as usize;
            let mut z = Vec::with_capacity(steps + 1);
            let mut zp = Vec::with_capacity(steps + 1);
            let (mut y, mut yp) = (z0, zp0);
            z.push(y);
            zp.push(yp);
            let acc = |t: f64, y: f64, yp: f64| -forcing.eval(t) - 2.0 * kappa * yp - 2.0 * kappa * kappa * y;
            for s in 0..steps {
                let t = s as f64 * h;
                let (k1, l1) = (yp, acc(t, y, yp));
                let (k2, l2) = (yp + 0.5 * h * l1, acc(t + 0.5 * h, y + 0.5 * h * k1, yp + 0.5 * h * l1));
                let (k3, l3) = (yp + 0.5 * h * l2, acc(t + 0.5 * h, y + 0.5 * h * k2, yp + 0.5 * h * l2));
                let (k4, l4) = (yp + h * l3, acc(t + h, y + h * k3, yp + h * l3));
                y += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
                yp += h / 6.0 * (l1 + 2.0 * l2 + 2.0 * l3 + l4);
                z.push(y);
                zp.push(yp);
            }
            Branch::Numeric { h, z, zp }
        }
    };
    Ok(DeviationSolution {
        kappa,
        z0,
        zp0,
        forcing,
        branch,
    })
}

impl DeviationSolution {
    pub fn is_closed_form(&self) -> bool {
        matches!(self.branch, Branch::Closed { .. })
    }

    /// Largest time covered by the solution.
    pub fn horizon(&self) -> f64 {
        match &self.branch {
            Branch::Closed { .. } => f64::INFINITY,
            Branch::Numeric { h, z, .. } => h * (z.len() - 1) as f64,
        }
    }

    fn closed(&self, a: f64, b: f64, t: f64) -> (f64, f64, f64) {
        let k = self.kappa;
        let e = (-k * t).exp();
        let (s, c) = (k * t).sin_cos();
        let z = e * (a * c + b * s);
        let zp = k * e * ((b - a) * c - (a + b) * s);
        let zpp = 2.0 * k * k * e * (a * s - b * c);
        (z, zp, zpp)
    }

    /// `(z, z')` at `t`; the numerical branch interpolates with cubic Hermite
    /// polynomials between nodes.
    pub fn eval(&self, t: f64) -> Result<(f64, f64)> {
        if !(t >= 0.0 && t <= self.horizon() * (1.0 + 1e-12)) {
            return Err(Error::invalid(format!("t = {t} outside [0, {}]", self.horizon())));
        }
        match &self.branch {
            Branch::Closed { a, b } => {
                let (z, zp, _) = self.closed(*a, *b, t);
                Ok((z, zp))
            }
            Branch::Numeric { h, z, zp } => {
                let last = z.len() - 1;
                let i = ((t / h).floor() as usize).min(last.saturating_sub(1));
                let s = (t - i as f64 * h) / h;
                let (z0, z1, m0, m1) = (z[i], z[i + 1], zp[i] * h, zp[i + 1] * h);
                let (s2, s3) = (s * s, s * s * s);
                let val = (2.0 * s3 - 3.0 * s2 + 1.0) * z0
                    + (s3 - 2.0 * s2 + s) * m0
                    + (-2.0 * s3 + 3.0 * s2) * z1
                    + (s3 - s2) * m1;
                let der = ((6.0 * s2 - 6.0 * s) * z0
                    + (3.0 * s2 - 4.0 * s + 1.0) * m0
                    + (-6.0 * s2 + 6.0 * s) * z1
                    + (3.0 * s2 - 2.0 * s) * m1)
                    / h;
                Ok((val, der))
            }
        }
    }

    pub fn z(&self, t: f64) -> Result<f64> {
        self.eval(t).map(|v| v.0)
    }

    /// Nodes of the numerical branch, `(t, z, z')`.
    pub fn nodes(&self) -> Option<Vec<(f64, f64, f64)>> {
        match &self.branch {
            Branch::Closed { .. } => None,
            Branch::Numeric { h, z, zp } => Some(
                z.iter()
                    .zip(zp)
                    .enumerate()
                    .map(|(i, (a, b))| (i as f64 * h, *a, *b))
                    .collect(),
            ),
        }
    }

    /// `|z'' + 2κ z' + 2κ² z + g|` at `t`. On the numerical branch `z''` is a
    /// five-point difference of the computed `z'` at the nearest interior node.
    pub fn residual(&self, t: f64) -> Result<f64> {
        let k = self.kappa;
        match &self.branch {
            Branch::Closed { a, b } => {
                let (z, zp, zpp) = self.closed(*a, *b, t);
                Ok((zpp + 2.0 * k * zp + 2.0 * k * k * z + self.forcing.eval(t)).abs())
            }
            Branch::Numeric { h, z, zp } => {
                let last = z.len() - 1;
                if last < 4 {
                    return Err(Error::invalid("numerical branch too short for a residual"));
                }
                let i = ((t / h).round() as usize).clamp(2, last - 2);
                let zpp = (zp[i - 2] - 8.0 * zp[i - 1] + 8.0 * zp[i + 1] - zp[i + 2]) / (12.0 * h);
                let tn = i as f64 * h;
                Ok((zpp + 2.0 * k * zp[i] + 2.0 * k * k * z[i] + self.forcing.eval(tn)).abs())
            }
        }
    }
}

/// `q(t) = ut + e^{−κt}(q cos κt + (q + (v0 − u)/κ) sin κt) − q`.
pub fn explicit_mean(u: f64, q: f64, v0: f64, kappa: f64, t: f64) -> f64 {
    let (s, c) = (kappa * t).sin_cos();
    u * t + (-kappa * t).exp() * (q * c + (q + (v0 - u) / kappa) * s) - q
}

fn omega_sq(params: &SystemParams) -> Result<f64> {
    match params.potential {
        Potential::Free => Ok(0.0),
        Potential::Quadratic { omega } => Ok(omega * omega),
        Potential::Linear { .. } => Err(Error::invalid(
            "the Gaussian filter supports only free and quadratic potentials",
        )),
    }
}

/// Right-hand side of the deterministic covariance flow.
pub fn covariance_rhs(params: &SystemParams, c: [f64; 3]) -> Result<[f64; 3]> {
    let w2 = omega_sq(params)?;
    Ok(cov_rhs(params.hbar, params.m, params.lambda_eff().powi(2), w2, c))
}

fn cov_rhs(hbar: f64, m: f64, l2: f64, w2: f64, [qq, qp, pp]: [f64; 3]) -> [f64; 3] {
    [
        2.0 * qp / m - 4.0 * l2 * qq * qq,
        pp / m - m * w2 * qq - 4.0 * l2 * qq * qp,
        hbar * hbar * l2 - 2.0 * m * w2 * qp - 4.0 * l2 * qp * qp,
    ]
}

fn cov_rk4(hbar: f64, m: f64, l2: f64, w2: f64, c: [f64; 3], dt: f64) -> [f64; 3] {
    let f = |c: [f64; 3]| cov_rhs(hbar, m, l2, w2, c);
    let add = |a: [f64; 3], b: [f64; 3], s: f64| [a[0] + s * b[0], a[1] + s * b[1], a[2] + s * b[2]];
    let k1 = f(c);
    let k2 = f(add(c, k1, 0.5 * dt));
    let k3 = f(add(c, k2, 0.5 * dt));
    let k4 = f(add(c, k3, dt));
    [
        c[0] + dt / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
        c[1] + dt / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
        c[2] + dt / 6.0 * (k1[2] + 2.0 * k2[2] + 2.0 * k3[2] + k4[2]),
    ]
}

/// Covariances after flowing for time `t` with RK4 step `dt`, sampled at
/// every step (including `t = 0`).
pub fn flow_covariance(params: &SystemParams, init: [f64; 3], t: f64, dt: f64) -> Result<Vec<[f64; 3]>> {
    params.validate()?;
    let w2 = omega_sq(params)?;
    if !(dt > 0.0 && t >= 0.0) {
        return Err(Error::invalid("need dt > 0 and t >= 0"));
    }
    let l2 = params.lambda_eff().powi(2);
    let steps = (t / dt).round() as usize;
    let mut out = Vec::with_capacity(steps + 1);
    let mut c = init;
    out.push(c);
    for _ in 0..steps {
        c = cov_rk4(params.hbar, params.m, l2, w2, c, dt);
        out.push(c);
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct GaussianTrajectory {
    pub times: Vec<f64>,
    pub states: Vec<GaussianPosterior>,
    /// Output increments `[step][channel]`.
    pub dy: Vec<f64>,
    /// Innovation increments `[step][channel]`.
    pub dwt: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Drive {
    Innovation,
    Output,
}

fn run_filter(params: &SystemParams, init: &GaussianPosterior, path: &NoisePath, drive: Drive) -> Result<GaussianTrajectory> {
    params.validate()?;
    let w2 = omega_sq(params)?;
    if path.d != params.channels() {
        return Err(Error::invalid(format!(
            "noise path has {} channels, system has {}",
            path.d,
            params.channels()
        )));
    }
    init.check(params.hbar)?;
    let (hbar, m, dt) = (params.hbar, params.m, path.dt);
    let lambda = &params.lambda;
    let l2 = params.lambda_eff().powi(2);
    let mut st = *init;
    let mut out = GaussianTrajectory {
        times: (0..=path.n_steps).map(|s| s as f64 * dt).collect(),
        states: Vec::with_capacity(path.n_steps + 1),
        dy: Vec::with_capacity(path.n_steps * path.d),
        dwt: Vec::with_capacity(path.n_steps * path.d),
    };
    out.states.push(st);
    for s in 0..path.n_steps {
        let inc = path.step(s);
        let (mut gq, mut gv) = (0.0, 0.0);
        for (k, &l) in lambda.iter().enumerate() {
            let x_hat = 2.0 * l * st.q;
            let (dy, dwt) = match drive {
                Drive::Innovation => (x_hat * dt + inc[k], inc[k]),
                Drive::Output => (inc[k], inc[k] - x_hat * dt),
            };
            out.dy.push(dy);
            out.dwt.push(dwt);
            gq += 2.0 * l * st.vqq * dwt;
            gv += 2.0 * l * st.vqp / m * dwt;
        }
        let c = cov_rk4(hbar, m, l2, w2, [st.vqq, st.vqp, st.vpp], dt);
        st = GaussianPosterior {
            q: st.q + st.v * dt + gq,
            v: st.v - w2 * st.q * dt + gv,
            vqq: c[0],
            vqp: c[1],
            vpp: c[2],
        };
        if !(st.q.is_finite() && st.v.is_finite()) {
            return Err(Error::numerical("Gaussian filter mean diverged"));
        }
        st.check(hbar)?;
        out.states.push(st);
    }
    Ok(out)
}

/// Gaussian posterior driven by innovation increments.
pub fn integrate_gaussian_filter(params: &SystemParams, init: &GaussianPosterior, path: &NoisePath) -> Result<GaussianTrajectory> {
    run_filter(params, init, path, Drive::Innovation)
}

/// Gaussian posterior driven by an output record `dY`; the innovation is
/// formed from the filter's own mean.
pub fn filter_output(params: &SystemParams, init: &GaussianPosterior, output: &NoisePath) -> Result<GaussianTrajectory> {
    run_filter(params, init, output, Drive::Output)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RiccatiStationary {
    pub vqq: f64,
    pub vqp: f64,
    pub vpp: f64,
    pub kappa: f64,
    /// `2λ(ħ/m)^{1/2}`, carried alongside for comparison only.
    pub two_lambda_sqrt_hbar_over_m: f64,
}

/// Stationary point of the free-particle covariance flow.
pub fn riccati_stationary(params: &SystemParams) -> Result<RiccatiStationary> {
    params.validate()?;
    if params.potential != Potential::Free {
        return Err(Error::invalid("stationary covariances are provided for the free particle only"));
    }
    let l = params.lambda_eff();
    if l == 0.0 {
        return Err(Error::degenerate(
            "without measurement the free covariance spreads forever; no stationary point",
        ));
    }
    let (hbar, m) = (params.hbar, params.m);
    let r = (hbar / m).sqrt();
    Ok(RiccatiStationary {
        vqq: r / (2.0 * l),
        vqp: hbar / 2.0,
        vpp: l * hbar * (hbar * m).sqrt(),
        kappa: params.kappa(),
        two_lambda_sqrt_hbar_over_m: 2.0 * l * r,
    })
}
