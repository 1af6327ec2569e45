//! One particle on a uniform, cell-centred 1-D grid.

use serde::{Deserialize, Serialize};

use crate::linalg::{diagonal_matrix, Banded};
use crate::{CMatrix, Error, Result, C64};

/// Uniform grid with `n` cells on `[x_min, x_max]`; points sit at cell centres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub n: usize,
    pub x_min: f64,
    pub x_max: f64,
}

impl GridSpec {
    pub fn new(n: usize, x_min: f64, x_max: f64) -> Result<Self> {
        let g = GridSpec { n, x_min, x_max };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 8 {
            return Err(Error::invalid(format!("grid needs n >= 8 points, got {}", self.n)));
        }
        if !(self.x_min.is_finite() && self.x_max.is_finite() && self.x_max > self.x_min) {
            return Err(Error::invalid(format!(
                "grid bounds must satisfy x_min < x_max, got [{}, {}]",
                self.x_min, self.x_max
            )));
        }
        Ok(())
    }

    pub fn dx(&self) -> f64 {
        (self.x_max - self.x_min) / self.n as f64
    }

    pub fn x(&self, i: usize) -> f64 {
        self.x_min + (i as f64 + 0.5) * self.dx()
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.x(i)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum Potential {
    #[default]
    Free,
    /// `φ(x) = a x`.
    Linear { a: f64 },
    /// `φ(x) = m ω² x² / 2`.
    Quadratic { omega: f64 },
}

impl Potential {
    pub fn eval(&self, x: f64, m: f64) -> f64 {
        match *self {
            Potential::Free => 0.0,
            Potential::Linear { a } => a * x,
            Potential::Quadratic { omega } => 0.5 * m * omega * omega * x * x,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    pub hbar: f64,
    pub m: f64,
    /// Coupling per measurement channel.
    pub lambda: Vec<f64>,
    pub potential: Potential,
}

impl SystemParams {
    pub fn new(hbar: f64, m: f64, lambda: Vec<f64>, potential: Potential) -> Result<Self> {
        let p = SystemParams {
            hbar,
            m,
            lambda,
            potential,
        };
        p.validate()?;
        Ok(p)
    }

    /// Reference configuration: ħ = m = 1, one channel with λ = 0.5, free particle.
    pub fn reference() -> Self {
        SystemParams {
            hbar: 1.0,
            m: 1.0,
            lambda: vec![0.5],
            potential: Potential::Free,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.hbar > 0.0 && self.hbar.is_finite()) {
            return Err(Error::invalid(format!("hbar must be positive, got {}", self.hbar)));
        }
        if !(self.m > 0.0 && self.m.is_finite()) {
            return Err(Error::invalid(format!("mass must be positive, got {}", self.m)));
        }
        if self.lambda.is_empty() {
            return Err(Error::invalid("at least one measurement channel is required"));
        }
        if let Some(l) = self.lambda.iter().find(|l| !(**l >= 0.0 && l.is_finite())) {
            return Err(Error::invalid(format!("coupling must be nonnegative, got {l}")));
        }
        match self.potential {
            Potential::Linear { a } if !a.is_finite() => Err(Error::invalid("non-finite potential slope")),
            Potential::Quadratic { omega } if !(omega.is_finite() && omega >= 0.0) => {
                Err(Error::invalid(format!("omega must be nonnegative, got {omega}")))
            }
            _ => Ok(()),
        }
    }

    pub fn channels(&self) -> usize {
        self.lambda.len()
    }

    /// `sqrt(Σ λ_k²)`.
    pub fn lambda_eff(&self) -> f64 {
        self.lambda.iter().map(|l| l * l).sum::<f64>().sqrt()
    }

    /// Error intensity root `1 / (2 λ_k)`.
    pub fn sigma_e(&self, k: usize) -> f64 {
        1.0 / (2.0 * self.lambda[k])
    }

    /// Perturbation intensity root `λ_k ħ`.
    pub fn sigma_f(&self, k: usize) -> f64 {
        self.lambda[k] * self.hbar
    }

    /// Collapse rate `λ (ħ/m)^{1/2}`.
    pub fn kappa(&self) -> f64 {
        self.lambda_eff() * (self.hbar / self.m).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WaveFunction {
    pub amplitudes: Vec<C64>,
    pub grid: GridSpec,
}

impl WaveFunction {
    pub fn new(amplitudes: Vec<C64>, grid: GridSpec) -> Result<Self> {
        if amplitudes.len() != grid.n {
            return Err(Error::invalid(format!(
                "{} amplitudes for a grid of {} points",
                amplitudes.len(),
                grid.n
            )));
        }
        if amplitudes.iter().any(|a| !a.is_finite()) {
            return Err(Error::numerical("wave function has non-finite amplitudes"));
        }
        Ok(WaveFunction { amplitudes, grid })
    }

    pub fn norm_sq(&self) -> f64 {
        crate::linalg::vec_norm_sq(&self.amplitudes) * self.grid.dx()
    }

    pub fn normalized(&self) -> Result<WaveFunction> {
        let n = self.norm_sq();
        if !(n > 0.0 && n.is_finite()) {
            return Err(Error::numerical(format!("cannot normalize a state with norm² {n}")));
        }
        let s = 1.0 / n.sqrt();
        Ok(WaveFunction {
            amplitudes: self.amplitudes.iter().map(|a| a * s).collect(),
            grid: self.grid,
        })
    }

    pub fn scaled(&self, c: C64) -> WaveFunction {
        WaveFunction {
            amplitudes: self.amplitudes.iter().map(|a| a * c).collect(),
            grid: self.grid,
        }
    }

    /// Weighted inner product `Σ conj(a_i) b_i dx`.
    pub fn inner(&self, other: &[C64]) -> C64 {
        let s: C64 = self.amplitudes.iter().zip(other).map(|(a, b)| a.conj() * b).sum();
        s * self.grid.dx()
    }

    /// Density matrix `ψ ψ† dx`, whose trace is the norm².
    pub fn density(&self) -> CMatrix {
        let n = self.grid.n;
        let dx = self.grid.dx();
        CMatrix::from_fn(n, n, |i, j| self.amplitudes[i] * self.amplitudes[j].conj() * dx)
    }

    pub fn distance(&self, other: &WaveFunction) -> f64 {
        let s: f64 = self
            .amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum();
        (s * self.grid.dx()).sqrt()
    }
}

/// Normalized Gaussian packet of position spread `width` and mean momentum `p0`.
pub fn gaussian_packet(grid: &GridSpec, q0: f64, p0: f64, width: f64, hbar: f64) -> Result<WaveFunction> {
    grid.validate()?;
    if !(width > 0.0 && width.is_finite() && q0.is_finite() && p0.is_finite() && hbar > 0.0) {
        return Err(Error::invalid("packet needs finite q0, p0 and positive width, hbar"));
    }
    if q0 - 5.0 * width < grid.x_min || q0 + 5.0 * width > grid.x_max {
        return Err(Error::degenerate(format!(
            "packet at {q0} with width {width} does not fit in [{}, {}]",
            grid.x_min, grid.x_max
        )));
    }
    let amps = (0..grid.n)
        .map(|i| {
            let x = grid.x(i);
            let r = x - q0;
            C64::from_polar((-r * r / (4.0 * width * width)).exp(), p0 * x / hbar)
        })
        .collect();
    WaveFunction::new(amps, *grid)?.normalized()
}

/// Position, momentum and Hamiltonian on a grid.
#[derive(Debug, Clone)]
pub struct OperatorSet {
    pub grid: GridSpec,
    pub hbar: f64,
    pub m: f64,
    pub q: Vec<f64>,
    pub p: Banded,
    pub h: Banded,
}

pub fn build_operators(grid: &GridSpec, params: &SystemParams) -> Result<OperatorSet> {
    grid.validate()?;
    params.validate()?;
    let n = grid.n;
    let c = C64::new(0.0, -params.hbar / (2.0 * grid.dx()));
    let mut p = Banded::zeros(n, 1);
    for i in 0..n - 1 {
        p.set(i, i + 1, c);
        p.set(i + 1, i, c.conj());
    }
    let q = grid.points();
    let mut h = p.mul(&p).scale(C64::new(1.0 / (2.0 * params.m), 0.0));
    let phi: Vec<C64> = q
        .iter()
        .map(|x| C64::new(params.potential.eval(*x, params.m), 0.0))
        .collect();
    h.add_diagonal(&phi);
    if !p.is_exactly_hermitian() || !h.is_exactly_hermitian() {
        return Err(Error::numerical("operator construction lost exact Hermiticity"));
    }
    Ok(OperatorSet {
        grid: *grid,
        hbar: params.hbar,
        m: params.m,
        q,
        p,
        h,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Observable {
    Identity,
    Position,
    Momentum,
    Hamiltonian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExpectationMode {
    /// Requires norm² within 1e-6 of one.
    Normalized,
    /// Raw quadratic form of an arbitrary state.
    Raw,
}

/// First and second moments of position and momentum of a normalized state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Moments {
    pub q: f64,
    pub p: f64,
    pub vqq: f64,
    pub vqp: f64,
    pub vpp: f64,
}

impl OperatorSet {
    pub fn n(&self) -> usize {
        self.grid.n
    }

    pub fn q_dense(&self) -> CMatrix {
        let d: Vec<C64> = self.q.iter().map(|x| C64::new(*x, 0.0)).collect();
        diagonal_matrix(&d)
    }

    pub fn p_dense(&self) -> CMatrix {
        self.p.to_dense()
    }

    pub fn h_dense(&self) -> CMatrix {
        self.h.to_dense()
    }

    pub fn apply(&self, obs: Observable, psi: &[C64]) -> Vec<C64> {
        match obs {
            Observable::Identity => psi.to_vec(),
            Observable::Position => psi.iter().zip(&self.q).map(|(a, x)| a * x).collect(),
            Observable::Momentum => self.p.matvec(psi),
            Observable::Hamiltonian => self.h.matvec(psi),
        }
    }

    fn bound(&self, obs: Observable) -> f64 {
        let row_sum = |b: &Banded| {
            (0..b.n())
                .map(|i| (i.saturating_sub(2)..(i + 3).min(b.n())).map(|j| b.get(i, j).norm()).sum::<f64>())
                .fold(0.0, f64::max)
        };
        match obs {
            Observable::Identity => 1.0,
            Observable::Position => self.q.iter().fold(0.0, |a, x| a.max(x.abs())),
            Observable::Momentum => row_sum(&self.p),
            Observable::Hamiltonian => row_sum(&self.h),
        }
    }

    fn check_state(&self, psi: &WaveFunction, mode: ExpectationMode) -> Result<f64> {
        if psi.grid != self.grid {
            return Err(Error::invalid("state and operators live on different grids"));
        }
        if psi.amplitudes.iter().any(|a| !a.is_finite()) {
            return Err(Error::numerical("wave function has non-finite amplitudes"));
        }
        let n2 = psi.norm_sq();
        if mode == ExpectationMode::Normalized && (n2 - 1.0).abs() > 1e-6 {
            return Err(Error::invalid(format!("state is not normalized (norm² = {n2})")));
        }
        Ok(n2)
    }

    pub fn expectation(&self, obs: Observable, psi: &WaveFunction, mode: ExpectationMode) -> Result<f64> {
        let n2 = self.check_state(psi, mode)?;
        let v = psi.inner(&self.apply(obs, &psi.amplitudes));
        if !v.is_finite() {
            return Err(Error::numerical("expectation is not finite"));
        }
        if v.im.abs() > 1e-10 * self.bound(obs) * n2.max(f64::MIN_POSITIVE) {
            return Err(Error::numerical(format!(
                "expectation has imaginary part {:e}; operator is not Hermitian",
                v.im
            )));
        }
        Ok(v.re)
    }

    /// `⟨A²⟩ − ⟨A⟩²`, clamped at zero.
    pub fn dispersion(&self, obs: Observable, psi: &WaveFunction) -> Result<f64> {
        let mean = self.expectation(obs, psi, ExpectationMode::Normalized)?;
        let a_psi = self.apply(obs, &psi.amplitudes);
        let second = crate::linalg::vec_norm_sq(&a_psi) * self.grid.dx();
        if !second.is_finite() {
            return Err(Error::numerical("second moment is not finite"));
        }
        Ok((second - mean * mean).max(0.0))
    }

    /// Moments of the normalized version of `psi`.
    pub fn moments(&self, psi: &WaveFunction) -> Result<Moments> {
        let n2 = self.check_state(psi, ExpectationMode::Raw)?;
        if !(n2 > 0.0) {
            return Err(Error::numerical("state has zero norm"));
        }
        let qpsi = self.apply(Observable::Position, &psi.amplitudes);
        let ppsi = self.p.matvec(&psi.amplitudes);
        let q = psi.inner(&qpsi).re / n2;
        let p = psi.inner(&ppsi).re / n2;
        let dx = self.grid.dx();
        let qq = crate::linalg::vec_norm_sq(&qpsi) * dx / n2;
        let pp = crate::linalg::vec_norm_sq(&ppsi) * dx / n2;
        let qp: C64 = qpsi.iter().zip(&ppsi).map(|(a, b)| a.conj() * b).sum();
        let qp = qp.re * dx / n2;
        Ok(Moments {
            q,
            p,
            vqq: (qq - q * q).max(0.0),
            vqp: qp - q * p,
            vpp: (pp - p * p).max(0.0),
        })
    }
}
