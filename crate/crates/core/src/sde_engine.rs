//! Integrators for the linear decoherence equation and the normalized
//! posterior (state-diffusion) equation with measured operator `Q`.
//!
//! The coupling is `L_k = λ_k Q` for every channel. Per step the record holds
//! the output increment `dY`, the driving increment `dw`, the innovation
//! `dw̃` and the predicted signal `x̂_k = 2 λ_k q̂`, with `q̂` taken from the
//! normalized pre-step state.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::linalg::Cayley;
use crate::noise::NoisePath;
use crate::quantum_grid::{OperatorSet, SystemParams, WaveFunction};
use crate::{CMatrix, Error, Result, C64};

const NORM_FLOOR: f64 = 1e-12;
const NORM_CEIL: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    /// Plain Euler–Maruyama on the Itô form.
    #[default]
    EulerMaruyama,
    /// Cayley step for `H`, then the exact diagonal measurement factor.
    SplitExponential,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct IntegratorOptions {
    pub scheme: Scheme,
    /// Store every `stride`-th state; `None` keeps only the endpoints.
    pub store_stride: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Equation {
    Linear,
    Posterior,
}

#[derive(Debug, Clone)]
pub struct TrajectoryRecord {
    pub equation: Equation,
    pub d: usize,
    pub dt: f64,
    pub seed: u64,
    pub trajectory_index: u64,
    /// `n_steps + 1` grid times.
    pub times: Vec<f64>,
    pub state_steps: Vec<usize>,
    pub states: Vec<WaveFunction>,
    pub norms_sq: Vec<f64>,
    pub q_mean: Vec<f64>,
    pub p_mean: Vec<f64>,
    pub q_dispersion: Vec<f64>,
    /// Per-step `[step][channel]` increments.
    pub dy: Vec<f64>,
    pub dw: Vec<f64>,
    pub dwt: Vec<f64>,
    pub x_hat: Vec<f64>,
}

impl TrajectoryRecord {
    pub fn n_steps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn final_state(&self) -> &WaveFunction {
        self.states.last().expect("endpoints are always stored")
    }

    pub fn state_at(&self, t: f64) -> Option<&WaveFunction> {
        let tol = 1e-9 * t.abs().max(1.0);
        self.state_steps
            .iter()
            .position(|s| (self.times[*s] - t).abs() <= tol)
            .map(|i| &self.states[i])
    }

    pub fn innovation_path(&self) -> NoisePath {
        self.as_path(self.dwt.clone())
    }

    pub fn output_path(&self) -> NoisePath {
        self.as_path(self.dy.clone())
    }

    fn as_path(&self, increments: Vec<f64>) -> NoisePath {
        NoisePath {
            seed: self.seed,
            trajectory_index: self.trajectory_index,
            dt: self.dt,
            n_steps: self.n_steps(),
            d: self.d,
            increments,
        }
    }
}

/// Per-step moments of the normalized state and the raw norm².
struct StepMoments {
    norm_sq: f64,
    q: f64,
    p: f64,
    vqq: f64,
}

struct Workspace<'a> {
    ops: &'a OperatorSet,
    x: &'a [f64],
    dx: f64,
    buf: Vec<C64>,
    scratch: Vec<C64>,
    cayley: Option<Cayley>,
}

impl Workspace<'_> {
    fn moments(&mut self, psi: &[C64]) -> Result<StepMoments> {
        let (mut s0, mut s1, mut s2) = (0.0, 0.0, 0.0);
        for (a, x) in psi.iter().zip(self.x) {
            let w = a.norm_sqr();
            s0 += w;
            s1 += w * x;
            s2 += w * x * x;
        }
        let norm_sq = s0 * self.dx;
        if !norm_sq.is_finite() || !(NORM_FLOOR..=NORM_CEIL).contains(&norm_sq) {
            return Err(Error::numerical(format!(
                "norm² = {norm_sq:e} left [{NORM_FLOOR:e}, {NORM_CEIL:e}]; reduce dt"
            )));
        }
        let q = s1 / s0;
        let vqq = (s2 / s0 - q * q).max(0.0);
        self.ops.p.matvec_into(psi, &mut self.buf);
        let pp: C64 = psi.iter().zip(&self.buf).map(|(a, b)| a.conj() * b).sum();
        Ok(StepMoments {
            norm_sq,
            q,
            p: pp.re / s0,
            vqq,
        })
    }
}

fn check_inputs(psi0: &WaveFunction, ops: &OperatorSet, params: &SystemParams, path: &NoisePath) -> Result<()> {
    params.validate()?;
    if psi0.grid != ops.grid {
        return Err(Error::invalid("initial state and operators live on different grids"));
    }
    if path.d != params.channels() {
        return Err(Error::invalid(format!(
            "noise path has {} channels, system has {}",
            path.d,
            params.channels()
        )));
    }
    if path.increments.len() != path.n_steps * path.d {
        return Err(Error::invalid("noise path length is inconsistent"));
    }
    let n2 = psi0.norm_sq();
    if !((n2 - 1.0).abs() <= 1e-6) {
        return Err(Error::invalid(format!("initial state must be normalized (norm² = {n2})")));
    }
    Ok(())
}

/// What the supplied increments are.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Input {
    Wiener,
    Innovation,
    Output,
}

fn integrate(
    input: Input,
    psi0: &WaveFunction,
    ops: &OperatorSet,
    params: &SystemParams,
    path: &NoisePath,
    opts: IntegratorOptions,
) -> Result<TrajectoryRecord> {
    check_inputs(psi0, ops, params, path)?;
    let equation = match input {
        Input::Wiener => Equation::Linear,
        _ => Equation::Posterior,
    };
    let n = ops.n();
    let (d, dt, steps) = (path.d, path.dt, path.n_steps);
    let lambda = &params.lambda;
    let lambda_sq: f64 = lambda.iter().map(|l| l * l).sum();
    let stride = opts.store_stride.unwrap_or(steps).max(1);
    let mut ws = Workspace {
        ops,
        x: &ops.q,
        dx: ops.grid.dx(),
        buf: vec![C64::new(0.0, 0.0); n],
        scratch: vec![C64::new(0.0, 0.0); n],
        cayley: match opts.scheme {
            Scheme::SplitExponential => Some(Cayley::new(&ops.h, dt / params.hbar)),
            Scheme::EulerMaruyama => None,
        },
    };
    let mi = C64::new(0.0, -dt / params.hbar);

    let mut rec = TrajectoryRecord {
        equation,
        d,
        dt,
        seed: path.seed,
        trajectory_index: path.trajectory_index,
        times: (0..=steps).map(|s| s as f64 * dt).collect(),
        state_steps: vec![0],
        states: vec![psi0.clone()],
        norms_sq: Vec::with_capacity(steps + 1),
        q_mean: Vec::with_capacity(steps + 1),
        p_mean: Vec::with_capacity(steps + 1),
        q_dispersion: Vec::with_capacity(steps + 1),
        dy: Vec::with_capacity(steps * d),
        dw: Vec::with_capacity(steps * d),
        dwt: Vec::with_capacity(steps * d),
        x_hat: Vec::with_capacity(steps * d),
    };
    let mut psi = psi0.amplitudes.clone();
    let mut m = ws.moments(&psi)?;
    let push = |rec: &mut TrajectoryRecord, m: &StepMoments| {
        rec.norms_sq.push(m.norm_sq);
        rec.q_mean.push(m.q);
        rec.p_mean.push(m.p);
        rec.q_dispersion.push(m.vqq);
    };
    push(&mut rec, &m);

    for s in 0..steps {
        let inc = path.step(s);
        let mut drive = 0.0;
        for k in 0..d {
            let x_hat = 2.0 * lambda[k] * m.q;
            let (dy, dw, dwt) = match input {
                Input::Wiener => (inc[k], inc[k], inc[k] - x_hat * dt),
                Input::Innovation => (x_hat * dt + inc[k], inc[k], inc[k]),
                Input::Output => (inc[k], inc[k], inc[k] - x_hat * dt),
            };
            rec.x_hat.push(x_hat);
            rec.dy.push(dy);
            rec.dw.push(dw);
            rec.dwt.push(dwt);
            drive += lambda[k] * if input == Input::Wiener { dw } else { dwt };
        }
        // Linear: multiplier x; posterior: x − q̂.
        let shift = match equation {
            Equation::Linear => 0.0,
            Equation::Posterior => m.q,
        };
        match &ws.cayley {
            None => {
                ops.h.matvec_into(&psi, &mut ws.buf);
                for i in 0..n {
                    let xt = ws.x[i] - shift;
                    let a = psi[i];
                    psi[i] = a + mi * ws.buf[i] + a * (drive * xt - 0.5 * lambda_sq * xt * xt * dt);
                }
            }
            Some(c) => {
                c.apply(&mut psi, &mut ws.scratch);
                for i in 0..n {
                    let xt = ws.x[i] - shift;
                    psi[i] *= (drive * xt - lambda_sq * xt * xt * dt).exp();
                }
            }
        }
        m = ws.moments(&psi)?;
        if equation == Equation::Posterior {
            let r = 1.0 / m.norm_sq.sqrt();
            psi.iter_mut().for_each(|a| *a *= r);
            m.norm_sq = crate::linalg::vec_norm_sq(&psi) * ws.dx;
        }
        push(&mut rec, &m);
        if (s + 1) % stride == 0 || s + 1 == steps {
            rec.state_steps.push(s + 1);
            rec.states.push(WaveFunction {
                amplitudes: psi.clone(),
                grid: ops.grid,
            });
        }
    }
    if rec.dy.iter().chain(&rec.dwt).any(|v| !v.is_finite()) {
        return Err(Error::numerical("non-finite increments in the record"));
    }
    Ok(rec)
}

/// Unnormalized linear decoherence equation driven by `path`, which is
/// identified with the output record `dY`.
pub fn integrate_linear(
    psi0: &WaveFunction,
    ops: &OperatorSet,
    params: &SystemParams,
    path: &NoisePath,
    opts: IntegratorOptions,
) -> Result<TrajectoryRecord> {
    integrate(Input::Wiener, psi0, ops, params, path, opts)
}

/// Normalized posterior equation driven by the innovation increments `path`.
pub fn integrate_posterior(
    psi0: &WaveFunction,
    ops: &OperatorSet,
    params: &SystemParams,
    path: &NoisePath,
    opts: IntegratorOptions,
) -> Result<TrajectoryRecord> {
    integrate(Input::Innovation, psi0, ops, params, path, opts)
}

/// Normalized posterior equation driven by an output record `dY`; the
/// innovation `dY − x̂ dt` is formed from the filter's own estimate.
pub fn filter_output(
    psi0: &WaveFunction,
    ops: &OperatorSet,
    params: &SystemParams,
    output: &NoisePath,
    opts: IntegratorOptions,
) -> Result<TrajectoryRecord> {
    integrate(Input::Output, psi0, ops, params, output, opts)
}

/// Deterministic RK4 reference for `iħ ψ' = H ψ`.
pub fn schrodinger_rk4(psi0: &WaveFunction, ops: &OperatorSet, t: f64, dt: f64) -> Result<WaveFunction> {
    if !(dt > 0.0 && t >= 0.0) {
        return Err(Error::invalid("need dt > 0 and t >= 0"));
    }
    let steps = (t / dt).round() as usize;
    let f = C64::new(0.0, -1.0 / ops.hbar);
    let rhs = |v: &[C64]| -> Vec<C64> { ops.h.matvec(v).into_iter().map(|z| z * f).collect() };
    let axpy = |a: &[C64], b: &[C64], s: f64| -> Vec<C64> { a.iter().zip(b).map(|(x, y)| x + y * s).collect() };
    let mut psi = psi0.amplitudes.clone();
    for _ in 0..steps {
        let k1 = rhs(&psi);
        let k2 = rhs(&axpy(&psi, &k1, dt / 2.0));
        let k3 = rhs(&axpy(&psi, &k2, dt / 2.0));
        let k4 = rhs(&axpy(&psi, &k3, dt));
        for i in 0..psi.len() {
            psi[i] += (k1[i] + k2[i] * 2.0 + k3[i] * 2.0 + k4[i]) * (dt / 6.0);
        }
    }
    WaveFunction::new(psi, psi0.grid)
}

#[derive(Debug, Clone)]
pub struct EnsembleDensity {
    pub t: f64,
    /// `mean ψ ψ† dx` over the ensemble.
    pub rho: CMatrix,
    pub trace: f64,
}

/// Measure-mean density matrices of linear (unnormalized) trajectories.
///
/// Summation runs in trajectory order, so the result does not depend on how
/// the trajectories were produced.
pub fn ensemble_density(trajectories: &[TrajectoryRecord], sample_times: &[f64]) -> Result<Vec<EnsembleDensity>> {
    let first = trajectories
        .first()
        .ok_or_else(|| Error::invalid("ensemble is empty"))?;
    let grid = first.states[0].grid;
    if trajectories.iter().any(|t| t.states[0].grid != grid || t.dt != first.dt) {
        return Err(Error::invalid("trajectories do not share grid and dt"));
    }
    let n = grid.n;
    let dx = grid.dx();
    let count = trajectories.len() as f64;
    let mut out = Vec::with_capacity(sample_times.len());
    for &t in sample_times {
        let mut rho = CMatrix::zeros(n, n);
        for (idx, tr) in trajectories.iter().enumerate() {
            let psi = tr.state_at(t).ok_or_else(|| {
                Error::invalid(format!("trajectory {idx} has no stored state at t = {t}"))
            })?;
            let a = &psi.amplitudes;
            for j in 0..n {
                let cj = a[j].conj() * dx;
                let mut col = rho.column_mut(j);
                for i in 0..n {
                    col[i] += a[i] * cj;
                }
            }
        }
        rho /= C64::new(count, 0.0);
        let rho = crate::linalg::hermitian_part(&rho);
        let trace = rho.trace().re;
        out.push(EnsembleDensity { t, rho, trace });
    }
    Ok(out)
}

/// Runs `count` independent jobs in parallel, returning results in index order.
pub fn run_ensemble<T, F>(count: usize, job: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync,
{
    (0..count as u64).into_par_iter().map(&job).collect()
}
