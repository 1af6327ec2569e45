//! Repeated-interaction (collision) realization of the boundary model.
//!
//! Each step a fresh probe in its vacuum level meets the system, the pair
//! evolves by a step unitary on `system ⊗ probe` and the probe is measured.
//! Joint indices are probe-major: `a * n + s` for probe level `a`.
//!
//! Two step generators are supported:
//!
//! * diffusive, `U = exp(M)` with `M = −(i/ħ)H⊗I dt + (L⊗σ⁺ − L†⊗σ⁻)√dt`;
//! * jump, built from a one-channel boundary generator. With
//!   `(K, L)` from the boundary-to-stochastic map, the click operator is the
//!   compensated `C = L + √ν I` and the no-click branch `K_C = K + √ν L + ν/2`
//!   (the same Lindblad generator). The step unitary is the dilation
//!   `[[V √(I − B†B), −V B†], [B, √(I − BB†)]]` with `B†B = I − e^{−dt C†C}`,
//!   `B = C g(C†C)`, and `V` the Cayley propagator of the Hermitian part of
//!   `K_C`; the excited column is then rotated by the scattering block `S`.
//!   The no-click weight over a step is thus exactly exponential.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::ito_algebra::{BoundaryGenerator, StochasticGenerator};
use crate::linalg::{
    anti_hermitian_part, as_diagonal, dense_matvec, diagonal_matrix, hermitian_part, hermitian_function, identity, spectral_norm,
    vec_norm_sq, Banded, Cayley,
};
use crate::noise::{sample_noise_path, UniformStream};
use crate::quantum_grid::{gaussian_packet, build_operators, GridSpec, OperatorSet, SystemParams, WaveFunction};
use crate::sde_engine::{filter_output, integrate_posterior, IntegratorOptions, Scheme};
use crate::{CMatrix, Error, Result, C64};

const GENERATOR_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MeasurementBasis {
    /// Vacuum (outcome 0) versus one excitation (outcome 1).
    #[default]
    Number,
    /// Eigenbasis of `|0⟩⟨1| + |1⟩⟨0|`; outcomes `+1` and `−1`.
    Quadrature,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeSpec {
    /// Probe dimension, `d + 1`.
    pub levels: usize,
    pub phi: Vec<C64>,
    pub nu: f64,
    pub basis: MeasurementBasis,
}

impl ProbeSpec {
    pub fn diffusive(basis: MeasurementBasis) -> Self {
        ProbeSpec {
            levels: 2,
            phi: vec![C64::new(1.0, 0.0)],
            nu: 1.0,
            basis,
        }
    }

    pub fn jump(nu: f64, basis: MeasurementBasis) -> Self {
        ProbeSpec {
            levels: 2,
            phi: vec![C64::new(0.0, 1.0)],
            nu,
            basis,
        }
    }

    pub fn validate(&self, jump: bool) -> Result<()> {
        if self.levels != 2 || self.phi.len() != 1 {
            return Err(Error::invalid("only one channel (two-level probes) is supported"));
        }
        if !(self.nu > 0.0 && self.nu.is_finite()) {
            return Err(Error::invalid(format!("nu must be positive, got {}", self.nu)));
        }
        let norm = vec_norm_sq(&self.phi).sqrt();
        if jump && !((norm - 1.0).abs() <= 1e-12) {
            return Err(Error::invalid(format!("probe amplitude must be a unit vector, norm is {norm}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub enum StepGenerator {
    /// `S = I` generator; only `K` and `L` enter.
    Diffusive { generator: StochasticGenerator, hbar: f64 },
    Jump(BoundaryGenerator),
}

/// Boundary generator of the jump model whose central limit is position
/// measurement with coupling `λ`: `G = exp(−iλQ/√ν)`, `G_+ = 0 = G^-`,
/// `E = H − ħ√ν λ Q` and `G^-_+ = −(i/ħ)E`. Use with `φ = i`.
pub fn jump_generator_for(ops: &OperatorSet, params: &SystemParams, nu: f64) -> Result<BoundaryGenerator> {
    if params.channels() != 1 {
        return Err(Error::invalid("the jump model is implemented for one channel"));
    }
    if !(nu > 0.0 && nu.is_finite()) {
        return Err(Error::invalid(format!("nu must be positive, got {nu}")));
    }
    let lambda = params.lambda[0];
    let hbar = params.hbar;
    let sq = nu.sqrt();
    let g: Vec<C64> = ops.q.iter().map(|x| C64::from_polar(1.0, -lambda * x / sq)).collect();
    let mut e = ops.h_dense();
    for (i, x) in ops.q.iter().enumerate() {
        e[(i, i)] -= C64::new(hbar * sq * lambda * x, 0.0);
    }
    let g_pm = e.map(|v| v * C64::new(0.0, -1.0 / hbar));
    let n = ops.n();
    BoundaryGenerator::new(
        vec![diagonal_matrix(&g)],
        vec![CMatrix::zeros(n, n)],
        vec![CMatrix::zeros(n, n)],
        g_pm,
        nu,
        e,
        hbar,
    )
}

/// Diffusive generator with `L = λQ` for a one-channel system.
pub fn diffusive_generator_for(ops: &OperatorSet, params: &SystemParams) -> Result<StepGenerator> {
    if params.channels() != 1 {
        return Err(Error::invalid("the repeated-interaction model is implemented for one channel"));
    }
    let l = ops.q_dense().scale(params.lambda[0]);
    Ok(StepGenerator::Diffusive {
        generator: StochasticGenerator::diffusive(&ops.h_dense(), &[l], params.hbar)?,
        hbar: params.hbar,
    })
}

#[derive(Debug, Clone)]
pub struct StepUnitary {
    /// `2n × 2n`, probe-major.
    pub u: CMatrix,
    pub n: usize,
    /// Norm of the Hermitian part discarded before exponentiation.
    pub skew_defect: f64,
}

impl StepUnitary {
    pub fn block(&self, a: usize, b: usize) -> CMatrix {
        let n = self.n;
        self.u.view((a * n, b * n), (n, n)).into_owned()
    }

    pub fn unitarity_defect(&self) -> f64 {
        spectral_norm(&(self.u.adjoint() * &self.u - identity(2 * self.n)))
    }
}

struct JumpParts {
    hc: CMatrix,
    c: CMatrix,
    s: CMatrix,
    hbar: f64,
}

fn jump_parts(g: &BoundaryGenerator, probe: &ProbeSpec) -> Result<JumpParts> {
    probe.validate(true)?;
    if g.d() != 1 {
        return Err(Error::invalid("the jump model is implemented for one channel"));
    }
    if (probe.nu - g.nu()).abs() > 1e-12 * g.nu() {
        return Err(Error::invalid("probe intensity differs from the generator's nu"));
    }
    let n = g.n();
    let r = g.pseudo_unitarity_residual();
    if !r.is_pseudo_unitary(GENERATOR_TOL) {
        return Err(Error::invalid(format!("generator is not pseudo-unitary: {r:?}")));
    }
    let s = g.g_to_s(&probe.phi)?;
    let res = s.normalization_residual();
    if res > GENERATOR_TOL * (1.0 + g.nu()) {
        return Err(Error::invalid(format!("normalization residual {res:e} too large")));
    }
    let sq = g.nu().sqrt();
    let l = s.l(0).clone();
    let k_c = s.k() + l.scale(sq) + identity(n).scale(0.5 * g.nu());
    let c = l + identity(n).scale(sq);
    // K_C = (i/ħ) H_C + ½ C†C.
    let hc = anti_hermitian_part(&k_c).map(|v| v * C64::new(0.0, -g.hbar()));
    Ok(JumpParts {
        hc: hermitian_part(&hc),
        c,
        s: s.s(0, 0).clone(),
        hbar: g.hbar(),
    })
}

fn dense_cayley(a: &CMatrix) -> Result<CMatrix> {
    let n = a.nrows();
    let half = a.map(|v| v * C64::new(0.0, 0.5));
    let lhs = identity(n) + &half;
    let rhs = identity(n) - half;
    lhs.lu()
        .solve(&rhs)
        .ok_or_else(|| Error::numerical("Cayley system is singular"))
}

/// `√((1 − e^{−dt s}) / s)`: click amplitude per unit of `C` such that the
/// no-click weight over one step is exactly `e^{−dt s}`.
fn click_gain(s: f64, dt: f64) -> f64 {
    if s * dt < 1e-12 {
        dt.sqrt()
    } else {
        (-(-dt * s).exp_m1() / s).sqrt()
    }
}

pub fn build_step_unitary(gen: &StepGenerator, dt: f64, probe: &ProbeSpec) -> Result<StepUnitary> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::invalid(format!("dt must be positive, got {dt}")));
    }
    match gen {
        StepGenerator::Diffusive { generator, hbar } => {
            probe.validate(false)?;
            if generator.d() != 1 {
                return Err(Error::invalid("the diffusive step is implemented for one channel"));
            }
            let n = generator.n();
            let res = generator.normalization_residual();
            if res > GENERATOR_TOL {
                return Err(Error::invalid(format!("normalization residual {res:e} too large")));
            }
            let s_dev = spectral_norm(&(generator.s(0, 0) - identity(n)));
            if s_dev > GENERATOR_TOL {
                return Err(Error::invalid("diffusive steps need S = I"));
            }
            let k = generator.k();
            let h = anti_hermitian_part(&k).map(|v| v * C64::new(0.0, -hbar));
            let l = generator.l(0);
            let sq = dt.sqrt();
            let mut m = CMatrix::zeros(2 * n, 2 * n);
            let a = h.map(|v| v * C64::new(0.0, -dt / hbar));
            m.view_mut((0, 0), (n, n)).copy_from(&a);
            m.view_mut((n, n), (n, n)).copy_from(&a);
            // σ⁺ = |1⟩⟨0| places L in block (1, 0).
            m.view_mut((n, 0), (n, n)).copy_from(&l.scale(sq));
            m.view_mut((0, n), (n, n)).copy_from(&(-l.adjoint()).scale(sq));
            let raw_defect = spectral_norm(&(l.adjoint() * l)) * 0.5 * dt;
            let skew = anti_hermitian_part(&m);
            let residual = spectral_norm(&hermitian_part(&m));
            if residual > GENERATOR_TOL {
                return Err(Error::invalid(format!(
                    "step generator has a Hermitian part {residual:e} beyond the discarded term"
                )));
            }
            Ok(StepUnitary {
                u: skew.exp(),
                n,
                skew_defect: raw_defect,
            })
        }
        StepGenerator::Jump(g) => {
            let parts = jump_parts(g, probe)?;
            let n = g.n();
            let ctc = hermitian_part(&(parts.c.adjoint() * &parts.c));
            let cct = hermitian_part(&(&parts.c * parts.c.adjoint()));
            let b = &parts.c * hermitian_function(&ctc, |s| click_gain(s.max(0.0), dt));
            let v = dense_cayley(&parts.hc.scale(dt / parts.hbar))?;
            let top = hermitian_function(&ctc, |s| (-0.5 * dt * s.max(0.0)).exp());
            let bottom = hermitian_function(&cct, |s| (-0.5 * dt * s.max(0.0)).exp());
            let mut u = CMatrix::zeros(2 * n, 2 * n);
            u.view_mut((0, 0), (n, n)).copy_from(&(&v * top));
            // Scattering enters through the excited column only.
            u.view_mut((0, n), (n, n)).copy_from(&(-(&v * b.adjoint()) * &parts.s));
            // Free evolution runs on both branches: U = diag(V, V) · dilation.
            u.view_mut((n, 0), (n, n)).copy_from(&(&v * &b));
            u.view_mut((n, n), (n, n)).copy_from(&(&v * bottom * &parts.s));
            Ok(StepUnitary { u, n, skew_defect: 0.0 })
        }
    }
}

/// Per-step measurement operators for a vacuum probe.
#[derive(Debug, Clone)]
pub enum StepKernel {
    Dense {
        outcomes: Vec<i32>,
        kraus: Vec<CMatrix>,
    },
    /// Diagonal click operator and banded no-click Hamiltonian, number basis:
    /// `M_0 = V D_0`, `M_1 = V diag(b)`.
    Diagonal {
        cayley: Cayley,
        d0: Vec<f64>,
        b: Vec<C64>,
    },
}

impl StepKernel {
    pub fn new(gen: &StepGenerator, dt: f64, probe: &ProbeSpec) -> Result<Self> {
        if let (StepGenerator::Jump(g), MeasurementBasis::Number) = (gen, probe.basis) {
            if !(dt > 0.0 && dt.is_finite()) {
                return Err(Error::invalid(format!("dt must be positive, got {dt}")));
            }
            let parts = jump_parts(g, probe)?;
            let n = g.n();
            if let (Some(c), Some(hc)) = (as_diagonal(&parts.c), Banded::from_dense(&parts.hc, (n / 8).max(2))) {
                let b: Vec<C64> = c.iter().map(|v| v * click_gain(v.norm_sqr(), dt)).collect();
                let d0 = c.iter().map(|v| (-0.5 * dt * v.norm_sqr()).exp()).collect();
                return Ok(StepKernel::Diagonal {
                    cayley: Cayley::new(&hc, dt / parts.hbar),
                    d0,
                    b,
                });
            }
        }
        let u = build_step_unitary(gen, dt, probe)?;
        let (m0, m1) = (u.block(0, 0), u.block(1, 0));
        Ok(match probe.basis {
            MeasurementBasis::Number => StepKernel::Dense {
                outcomes: vec![0, 1],
                kraus: vec![m0, m1],
            },
            MeasurementBasis::Quadrature => {
                let r = std::f64::consts::FRAC_1_SQRT_2;
                StepKernel::Dense {
                    outcomes: vec![1, -1],
                    kraus: vec![(&m0 + &m1).scale(r), (m0 - m1).scale(r)],
                }
            }
        })
    }

    pub fn outcomes(&self) -> Vec<i32> {
        match self {
            StepKernel::Dense { outcomes, .. } => outcomes.clone(),
            StepKernel::Diagonal { .. } => vec![0, 1],
        }
    }

    pub fn n(&self) -> usize {
        match self {
            StepKernel::Dense { kraus, .. } => kraus[0].nrows(),
            StepKernel::Diagonal { d0, .. } => d0.len(),
        }
    }

    /// Measurement operators as dense matrices, in outcome order.
    pub fn kraus(&self) -> Vec<CMatrix> {
        match self {
            StepKernel::Dense { kraus, .. } => kraus.clone(),
            StepKernel::Diagonal { cayley, d0, b } => {
                let d: Vec<C64> = d0.iter().map(|v| C64::new(*v, 0.0)).collect();
                let v = cayley.to_dense();
                vec![&v * diagonal_matrix(&d), v * diagonal_matrix(b)]
            }
        }
    }

    /// `Σ_a M_a† M_a − I`, spectral norm.
    pub fn completeness_defect(&self) -> f64 {
        let k = self.kraus();
        let mut s = -identity(self.n());
        for m in &k {
            s += m.adjoint() * m;
        }
        spectral_norm(&s)
    }

    /// Outcome-averaged map `ρ ↦ Σ_a M_a ρ M_a†`.
    pub fn unconditioned(&self, rho: &CMatrix) -> CMatrix {
        let mut out = CMatrix::zeros(rho.nrows(), rho.ncols());
        for m in self.kraus() {
            out += &m * rho * m.adjoint();
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOptions {
    pub seed: u64,
    pub trajectory_index: u64,
    /// Store every `stride`-th state; `None` keeps only the endpoints.
    pub store_stride: Option<usize>,
    /// Record `q̂` and its dispersion every this many steps.
    pub moment_stride: usize,
    pub keep_probabilities: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            seed: 0,
            trajectory_index: 0,
            store_stride: None,
            moment_stride: 1,
            keep_probabilities: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EventTrajectory {
    pub dt: f64,
    pub outcomes: Vec<i32>,
    /// Steps at which moments were recorded (always includes 0 and the last).
    pub moment_steps: Vec<usize>,
    pub q_mean: Vec<f64>,
    pub dispersion: Vec<f64>,
    pub state_steps: Vec<usize>,
    pub states: Vec<WaveFunction>,
    pub outcome_counts: BTreeMap<i32, usize>,
    /// Born probabilities `[step][outcome]`, when requested.
    pub probabilities: Vec<f64>,
}

impl EventTrajectory {
    pub fn times(&self) -> Vec<f64> {
        self.moment_steps.iter().map(|s| *s as f64 * self.dt).collect()
    }
}

fn position_moments(psi: &[C64], grid: &GridSpec) -> (f64, f64) {
    let (mut s0, mut s1, mut s2) = (0.0, 0.0, 0.0);
    for (i, a) in psi.iter().enumerate() {
        let w = a.norm_sqr();
        let x = grid.x(i);
        s0 += w;
        s1 += w * x;
        s2 += w * x * x;
    }
    let q = s1 / s0;
    (q, (s2 / s0 - q * q).max(0.0))
}

/// Samples one conditioned trajectory of `n_steps` collisions.
pub fn run_with_kernel(psi0: &WaveFunction, kernel: &StepKernel, n_steps: usize, dt: f64, opts: RunOptions) -> Result<EventTrajectory> {
    let n = psi0.grid.n;
    if kernel.n() != n {
        return Err(Error::invalid("kernel and state dimensions differ"));
    }
    let n2 = psi0.norm_sq();
    if !((n2 - 1.0).abs() <= 1e-6) {
        return Err(Error::invalid(format!("initial state must be normalized (norm² = {n2})")));
    }
    let dx = psi0.grid.dx();
    let outcomes = kernel.outcomes();
    let mut rng = UniformStream::new(opts.seed, opts.trajectory_index);
    let mstride = opts.moment_stride.max(1);
    let sstride = opts.store_stride.unwrap_or(n_steps).max(1);
    let mut psi = psi0.amplitudes.clone();
    let (q, v) = position_moments(&psi, &psi0.grid);
    let mut tr = EventTrajectory {
        dt,
        outcomes: Vec::with_capacity(n_steps),
        moment_steps: vec![0],
        q_mean: vec![q],
        dispersion: vec![v],
        state_steps: vec![0],
        states: vec![psi0.clone()],
        outcome_counts: outcomes.iter().map(|o| (*o, 0)).collect(),
        probabilities: Vec::new(),
    };
    let mut candidates: Vec<Vec<C64>> = vec![vec![C64::new(0.0, 0.0); n]; outcomes.len()];
    let mut scratch = vec![C64::new(0.0, 0.0); n];
    let mut probs = vec![0.0; outcomes.len()];
    for s in 0..n_steps {
        match kernel {
            StepKernel::Dense { kraus, .. } => {
                for (a, m) in kraus.iter().enumerate() {
                    candidates[a] = dense_matvec(m, &psi);
                    probs[a] = vec_norm_sq(&candidates[a]) * dx;
                }
            }
            StepKernel::Diagonal { d0, b, .. } => {
                for i in 0..n {
                    candidates[0][i] = psi[i] * d0[i];
                    candidates[1][i] = psi[i] * b[i];
                }
                probs[0] = vec_norm_sq(&candidates[0]) * dx;
                probs[1] = vec_norm_sq(&candidates[1]) * dx;
            }
        }
        let total: f64 = probs.iter().sum();
        if probs.iter().all(|p| *p < 1e-300) {
            return Err(Error::numerical("all outcome probabilities underflowed"));
        }
        if !((total - 1.0).abs() <= 1e-12) {
            return Err(Error::numerical(format!(
                "outcome probabilities sum to {total} at step {s}"
            )));
        }
        if opts.keep_probabilities {
            tr.probabilities.extend_from_slice(&probs);
        }
        let u = rng.next_f64() * total;
        let mut acc = 0.0;
        let mut pick = probs.len() - 1;
        for (a, p) in probs.iter().enumerate() {
            acc += p;
            if u < acc {
                pick = a;
                break;
            }
        }
        std::mem::swap(&mut psi, &mut candidates[pick]);
        if let StepKernel::Diagonal { cayley, .. } = kernel {
            cayley.apply(&mut psi, &mut scratch);
        }
        let r = 1.0 / (vec_norm_sq(&psi) * dx).sqrt();
        psi.iter_mut().for_each(|a| *a *= r);
        let o = outcomes[pick];
        tr.outcomes.push(o);
        *tr.outcome_counts.get_mut(&o).expect("known outcome") += 1;
        if (s + 1) % mstride == 0 || s + 1 == n_steps {
            let (q, v) = position_moments(&psi, &psi0.grid);
            tr.moment_steps.push(s + 1);
            tr.q_mean.push(q);
            tr.dispersion.push(v);
        }
        if (s + 1) % sstride == 0 || s + 1 == n_steps {
            tr.state_steps.push(s + 1);
            tr.states.push(WaveFunction { amplitudes: psi.clone(), grid: psi0.grid });
        }
    }
    Ok(tr)
}

pub fn run_repeated_interactions(
    psi0: &WaveFunction,
    gen: &StepGenerator,
    probe: &ProbeSpec,
    n_steps: usize,
    dt: f64,
    opts: RunOptions,
) -> Result<EventTrajectory> {
    let kernel = StepKernel::new(gen, dt, probe)?;
    run_with_kernel(psi0, &kernel, n_steps, dt, opts)
}

#[derive(Debug, Clone, Serialize)]
pub struct DiffusionLimitConfig {
    pub grid: GridSpec,
    pub params: SystemParams,
    pub q0: f64,
    pub p0: f64,
    pub width: f64,
    pub nus: Vec<f64>,
    /// Jump step is `dt_factor / ν`.
    pub dt_factor: f64,
    pub horizon: f64,
    /// Step of the diffusion filters; also the aggregation window.
    pub diffusion_dt: f64,
    pub trajectories: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct NuComparison {
    pub nu: f64,
    pub dt: f64,
    /// RMS over time of the difference of ensemble-mean `q̂` curves, jump
    /// ensemble versus the diffusion filter fed with the aggregated jump record.
    pub mean_rms: f64,
    /// RMS over time of the diffusion filter's ensemble-mean `q̂` curve.
    pub diffusion_mean_magnitude: f64,
    /// `mean_rms / diffusion_mean_magnitude`.
    pub mean_rel: f64,
    /// Same for the ensemble-mean dispersion curves.
    pub dispersion_rms: f64,
    /// Relative difference of ensemble-mean dispersion at the horizon.
    pub dispersion_rel_err_end: f64,
    /// RMS of the pathwise `q̂` differences under the shared record.
    pub pathwise_mean_rms: f64,
    /// The same curve distances against an independent diffusion ensemble.
    pub independent_mean_rms: f64,
    pub independent_dispersion_rms: f64,
    pub independent_dispersion_rel_err_end: f64,
    pub clicks_per_unit_time: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct DiffusionLimitReport {
    pub kappa: f64,
    pub horizon: f64,
    pub trajectories: usize,
    pub diffusion_dt: f64,
    pub per_nu: Vec<NuComparison>,
    pub mean_distance_decreasing: bool,
    pub dispersion_distance_decreasing: bool,
}

struct JumpSummary {
    q: Vec<f64>,
    v: Vec<f64>,
    dy: Vec<f64>,
    clicks: usize,
}

fn rms_diff(a: &[f64], b: &[f64]) -> f64 {
    let s: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    (s / a.len() as f64).sqrt()
}

fn ensemble_mean(rows: &[Vec<f64>]) -> Vec<f64> {
    let mut m = vec![0.0; rows[0].len()];
    for r in rows {
        for (a, b) in m.iter_mut().zip(r) {
            *a += b;
        }
    }
    let c = rows.len() as f64;
    m.iter_mut().for_each(|a| *a /= c);
    m
}

fn decreasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] < w[0])
}

/// Compares jump-model ensembles at increasing `ν` with state diffusion.
pub fn diffusion_limit_compare(cfg: &DiffusionLimitConfig) -> Result<DiffusionLimitReport> {
    cfg.params.validate()?;
    if cfg.params.channels() != 1 {
        return Err(Error::invalid("the diffusion-limit comparison uses one channel"));
    }
    if cfg.trajectories == 0 || cfg.nus.is_empty() {
        return Err(Error::invalid("need at least one trajectory and one nu"));
    }
    let big = cfg.diffusion_dt;
    let windows = (cfg.horizon / big).round() as usize;
    if windows == 0 || ((windows as f64) * big - cfg.horizon).abs() > 1e-9 * cfg.horizon {
        return Err(Error::invalid("horizon must be a multiple of diffusion_dt"));
    }
    let ops = build_operators(&cfg.grid, &cfg.params)?;
    let psi0 = gaussian_packet(&cfg.grid, cfg.q0, cfg.p0, cfg.width, cfg.params.hbar)?;
    let opts = IntegratorOptions {
        scheme: Scheme::SplitExponential,
        store_stride: None,
    };

    // Independent diffusion ensemble.
    let indep = crate::sde_engine::run_ensemble(cfg.trajectories, |i| {
        let path = sample_noise_path(cfg.seed ^ 0x00d1_ff00, i, big, windows, 1)?;
        let r = integrate_posterior(&psi0, &ops, &cfg.params, &path, opts)?;
        Ok((r.q_mean, r.q_dispersion))
    })?;
    let (iq, iv): (Vec<_>, Vec<_>) = indep.into_iter().unzip();
    let (iq, iv) = (ensemble_mean(&iq), ensemble_mean(&iv));

    let mut per_nu = Vec::new();
    for &nu in &cfg.nus {
        let dt = cfg.dt_factor / nu;
        let factor = (big / dt).round() as usize;
        if factor == 0 || ((factor as f64) * dt - big).abs() > 1e-9 * big {
            return Err(Error::invalid(format!("diffusion_dt is not a multiple of the jump step {dt}")));
        }
        let gen = StepGenerator::Jump(jump_generator_for(&ops, &cfg.params, nu)?);
        let probe = ProbeSpec::jump(nu, MeasurementBasis::Number);
        let kernel = StepKernel::new(&gen, dt, &probe)?;
        // Linearized click statistics at x = 0: p0 per step, slope √ν e^{−ν dt} dt.
        let p0 = -(-nu * dt).exp_m1();
        let scale = nu.sqrt() * (-nu * dt).exp();
        let summaries = crate::sde_engine::run_ensemble(cfg.trajectories, |i| {
            let run = RunOptions {
                seed: cfg.seed,
                trajectory_index: i,
                store_stride: None,
                moment_stride: factor,
                keep_probabilities: false,
            };
            let tr = run_with_kernel(&psi0, &kernel, windows * factor, dt, run)?;
            let dy = tr
                .outcomes
                .chunks(factor)
                .map(|c| (c.iter().filter(|o| **o == 1).count() as f64 - factor as f64 * p0) / scale)
                .collect();
            let clicks = tr.outcome_counts.get(&1).copied().unwrap_or(0);
            Ok(JumpSummary {
                q: tr.q_mean,
                v: tr.dispersion,
                dy,
                clicks,
            })
        })?;
        let coupled = crate::sde_engine::run_ensemble(cfg.trajectories, |i| {
            let s = &summaries[i as usize];
            let path = crate::noise::NoisePath::from_increments(big, 1, s.dy.clone())?;
            let r = filter_output(&psi0, &ops, &cfg.params, &path, opts)?;
            Ok((r.q_mean, r.q_dispersion))
        })?;
        let jq: Vec<Vec<f64>> = summaries.iter().map(|s| s.q.clone()).collect();
        let jv: Vec<Vec<f64>> = summaries.iter().map(|s| s.v.clone()).collect();
        let (cq, cv): (Vec<_>, Vec<_>) = coupled.into_iter().unzip();
        let path_rms = {
            let s: f64 = jq.iter().zip(&cq).map(|(a, b)| rms_diff(a, b).powi(2)).sum();
            (s / cfg.trajectories as f64).sqrt()
        };
        let (mjq, mjv) = (ensemble_mean(&jq), ensemble_mean(&jv));
        let (mcq, mcv) = (ensemble_mean(&cq), ensemble_mean(&cv));
        let end = windows;
        let clicks: usize = summaries.iter().map(|s| s.clicks).sum();
        let mean_rms = rms_diff(&mjq, &mcq);
        let magnitude = (mcq.iter().map(|x| x * x).sum::<f64>() / mcq.len() as f64).sqrt();
        per_nu.push(NuComparison {
            nu,
            dt,
            mean_rms,
            diffusion_mean_magnitude: magnitude,
            mean_rel: mean_rms / magnitude,
            dispersion_rms: rms_diff(&mjv, &mcv),
            dispersion_rel_err_end: (mjv[end] - mcv[end]).abs() / mcv[end],
            pathwise_mean_rms: path_rms,
            independent_mean_rms: rms_diff(&mjq, &iq),
            independent_dispersion_rms: rms_diff(&mjv, &iv),
            independent_dispersion_rel_err_end: (mjv[end] - iv[end]).abs() / iv[end],
            clicks_per_unit_time: clicks as f64 / (cfg.trajectories as f64 * cfg.horizon),
        });
    }
    let means: Vec<f64> = per_nu.iter().map(|c| c.mean_rms).collect();
    let disps: Vec<f64> = per_nu.iter().map(|c| c.dispersion_rms).collect();
    Ok(DiffusionLimitReport {
        kappa: cfg.params.kappa(),
        horizon: cfg.horizon,
        trajectories: cfg.trajectories,
        diffusion_dt: big,
        mean_distance_decreasing: decreasing(&means),
        dispersion_distance_decreasing: decreasing(&disps),
        per_nu,
    })
}
