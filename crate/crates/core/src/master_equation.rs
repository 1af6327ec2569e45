//! Deterministic Lindblad evolution `ρ' = −Kρ − ρK† + Σ_j L_j ρ L_j†`.

use crate::ito_algebra::StochasticGenerator;
use crate::linalg::{hermitian_eigenvalues, hermitian_part, spectral_norm, Banded};
use crate::quantum_grid::{OperatorSet, SystemParams, WaveFunction};
use crate::{CMatrix, Error, Result, C64};

const NORMALIZATION_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    pub rho: CMatrix,
}

impl DensityMatrix {
    pub fn new(rho: CMatrix) -> Result<Self> {
        if rho.nrows() != rho.ncols() || rho.is_empty() {
            return Err(Error::invalid("density matrix must be square and nonempty"));
        }
        if rho.iter().any(|v| !v.is_finite()) {
            return Err(Error::numerical("density matrix has non-finite entries"));
        }
        Ok(DensityMatrix { rho })
    }

    /// `ψ ψ† dx`; unit trace for a normalized state.
    pub fn from_pure(psi: &WaveFunction) -> Self {
        DensityMatrix { rho: psi.density() }
    }

    pub fn n(&self) -> usize {
        self.rho.nrows()
    }

    pub fn trace(&self) -> f64 {
        self.rho.trace().re
    }

    pub fn purity(&self) -> f64 {
        // tr(ρ²) = Σ_ij ρ_ij ρ_ji = Σ |ρ_ij|² for Hermitian ρ.
        self.rho.iter().map(|v| v.norm_sqr()).sum()
    }

    pub fn hermiticity_defect(&self) -> f64 {
        (&self.rho - self.rho.adjoint()).iter().fold(0.0, |a, v| a.max(v.norm()))
    }

    pub fn min_eigenvalue(&self) -> f64 {
        hermitian_eigenvalues(&self.rho)[0]
    }

    /// `tr(ρ f(x)) / tr ρ` for a diagonal observable sampled at `x`.
    pub fn diagonal_mean(&self, x: &[f64]) -> f64 {
        let s: f64 = x.iter().enumerate().map(|(i, xi)| self.rho[(i, i)].re * xi).sum();
        s / self.trace()
    }

    pub fn position_mean(&self, ops: &OperatorSet) -> f64 {
        self.diagonal_mean(&ops.q)
    }

    pub fn position_dispersion(&self, ops: &OperatorSet) -> f64 {
        let q = self.position_mean(ops);
        let sq: Vec<f64> = ops.q.iter().map(|x| (x - q) * (x - q)).collect();
        self.diagonal_mean(&sq).max(0.0)
    }
}

#[derive(Debug, Clone)]
enum Operator {
    Banded(Banded),
    Dense(CMatrix),
}

impl Operator {
    fn new(m: &CMatrix) -> Self {
        match Banded::from_dense(m, (m.nrows() / 8).max(2)) {
            Some(b) => Operator::Banded(b),
            None => Operator::Dense(m.clone()),
        }
    }

    fn mul(&self, m: &CMatrix) -> CMatrix {
        match self {
            Operator::Dense(a) => a * m,
            Operator::Banded(b) => {
                let n = b.n();
                let h = b.half_bandwidth();
                let mut out = CMatrix::zeros(n, m.ncols());
                for j in 0..m.ncols() {
                    let col = m.column(j);
                    let mut oc = out.column_mut(j);
                    for i in 0..n {
                        let lo = i.saturating_sub(h);
                        let hi = (i + h + 1).min(n);
                        let mut acc = C64::new(0.0, 0.0);
                        for k in lo..hi {
                            acc += b.get(i, k) * col[k];
                        }
                        oc[i] = acc;
                    }
                }
                out
            }
        }
    }
}

/// Validated pair `(K, {L_j})` with `K + K† = Σ L_j† L_j`.
#[derive(Debug, Clone)]
pub struct LindbladGenerator {
    k: CMatrix,
    ls: Vec<CMatrix>,
    k_op: Operator,
    l_ops: Vec<Operator>,
    residual: f64,
}

pub fn normalization_residual(k: &CMatrix, ls: &[CMatrix]) -> f64 {
    let mut r = k + k.adjoint();
    for l in ls {
        r -= l.adjoint() * l;
    }
    spectral_norm(&r)
}

impl LindbladGenerator {
    pub fn new(k: CMatrix, ls: Vec<CMatrix>) -> Result<Self> {
        let n = k.nrows();
        if k.ncols() != n || ls.iter().any(|l| l.shape() != (n, n)) {
            return Err(Error::invalid("K and L_j must be square of equal size"));
        }
        let residual = normalization_residual(&k, &ls);
        if !(residual <= NORMALIZATION_TOL) {
            return Err(Error::invalid(format!(
                "normalization residual ‖K + K† − Σ L†L‖ = {residual:e} exceeds {NORMALIZATION_TOL:e}"
            )));
        }
        let k_op = Operator::new(&k);
        let l_ops = ls.iter().map(Operator::new).collect();
        Ok(LindbladGenerator {
            k,
            ls,
            k_op,
            l_ops,
            residual,
        })
    }

    /// `K = (i/ħ)H + ½ Σ λ_k² Q²`, `L_k = λ_k Q`.
    pub fn position_measurement(ops: &OperatorSet, params: &SystemParams) -> Result<Self> {
        let q = ops.q_dense();
        let mut k = ops.h_dense().map(|v| v * C64::new(0.0, 1.0 / params.hbar));
        let mut ls = Vec::new();
        for &l in &params.lambda {
            let lq = q.scale(l);
            k += (lq.adjoint() * &lq).scale(0.5);
            ls.push(lq);
        }
        LindbladGenerator::new(k, ls)
    }

    pub fn from_stochastic(g: &StochasticGenerator) -> Result<Self> {
        let ls = (0..g.d()).map(|j| g.l(j).clone()).collect();
        LindbladGenerator::new(g.k(), ls)
    }

    pub fn k(&self) -> &CMatrix {
        &self.k
    }

    pub fn ls(&self) -> &[CMatrix] {
        &self.ls
    }

    pub fn residual(&self) -> f64 {
        self.residual
    }

    fn rhs(&self, rho: &CMatrix) -> CMatrix {
        // ρK† = (K ρ†)† and L ρ L† = L (L ρ†)†.
        let kr = self.k_op.mul(rho);
        let krd = self.k_op.mul(&rho.adjoint());
        let mut out = -kr - krd.adjoint();
        for l in &self.l_ops {
            let lrd = l.mul(&rho.adjoint());
            out += l.mul(&lrd.adjoint());
        }
        out
    }
}

/// `dρ/dt` for a validated generator.
pub fn lindblad_rhs(rho: &DensityMatrix, gen: &LindbladGenerator) -> Result<DensityMatrix> {
    if rho.n() != gen.k.nrows() {
        return Err(Error::invalid("density matrix and generator sizes differ"));
    }
    DensityMatrix::new(gen.rhs(&rho.rho))
}

#[derive(Debug, Clone)]
pub struct LindbladTrajectory {
    pub times: Vec<f64>,
    pub states: Vec<DensityMatrix>,
}

/// RK4 with Hermitian symmetrization after every step. States are sampled
/// every `stride` steps and at the end.
pub fn integrate_lindblad(
    rho0: &DensityMatrix,
    gen: &LindbladGenerator,
    t_end: f64,
    dt: f64,
    stride: usize,
) -> Result<LindbladTrajectory> {
    if rho0.n() != gen.k.nrows() {
        return Err(Error::invalid("density matrix and generator sizes differ"));
    }
    if !(dt > 0.0 && t_end >= 0.0 && t_end.is_finite()) {
        return Err(Error::invalid("need dt > 0 and a finite T >= 0"));
    }
    let tr0 = rho0.trace();
    if (tr0 - 1.0).abs() > 1e-8 {
        return Err(Error::invalid(format!("initial trace {tr0} is not 1")));
    }
    if rho0.hermiticity_defect() > 1e-10 {
        return Err(Error::invalid("initial density matrix is not Hermitian"));
    }
    let min_eig = rho0.min_eigenvalue();
    if min_eig < -1e-8 {
        return Err(Error::invalid(format!("initial density matrix has eigenvalue {min_eig:e}")));
    }
    let steps = (t_end / dt).round() as usize;
    let h = if steps > 0 { t_end / steps as f64 } else { 0.0 };
    let stride = stride.max(1);
    let mut rho = rho0.rho.clone();
    let mut out = LindbladTrajectory {
        times: vec![0.0],
        states: vec![rho0.clone()],
    };
    for s in 0..steps {
        let k1 = gen.rhs(&rho);
        let k2 = gen.rhs(&(&rho + &k1 * C64::new(0.5 * h, 0.0)));
        let k3 = gen.rhs(&(&rho + &k2 * C64::new(0.5 * h, 0.0)));
        let k4 = gen.rhs(&(&rho + &k3 * C64::new(h, 0.0)));
        rho += (k1 + k2 * C64::new(2.0, 0.0) + k3 * C64::new(2.0, 0.0) + k4) * C64::new(h / 6.0, 0.0);
        rho = hermitian_part(&rho);
        let tr = rho.trace().re;
        if !tr.is_finite() || (tr - tr0).abs() > 1e-6 {
            return Err(Error::numerical(format!(
                "trace drifted to {tr} at step {}; use a smaller dt",
                s + 1
            )));
        }
        if (s + 1) % stride == 0 || s + 1 == steps {
            let dm = DensityMatrix { rho: rho.clone() };
            let me = dm.min_eigenvalue();
            if me < -1e-8 {
                return Err(Error::numerical(format!(
                    "density matrix lost positivity (eigenvalue {me:e}); use a smaller dt"
                )));
            }
            out.times.push((s + 1) as f64 * h);
            out.states.push(dm);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{diagonal_matrix, identity};

    fn two_level() -> (CMatrix, CMatrix) {
        let h = CMatrix::from_row_slice(
            2,
            2,
            &[C64::new(1.0, 0.0), C64::new(0.2, -0.3), C64::new(0.2, 0.3), C64::new(-0.5, 0.0)],
        );
        let l = diagonal_matrix(&[C64::new(0.7, 0.0), C64::new(-0.4, 0.0)]);
        (h, l)
    }

    #[test]
    fn rejects_unnormalized_generator() {
        let (h, l) = two_level();
        let k = h.map(|v| v * C64::i());
        assert!(matches!(LindbladGenerator::new(k, vec![l]), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn eigenstates_of_l_are_stationary() {
        let (_, l) = two_level();
        let k = (l.adjoint() * &l).scale(0.5);
        let gen = LindbladGenerator::new(k, vec![l]).unwrap();
        let mut rho = CMatrix::zeros(2, 2);
        rho[(0, 0)] = C64::new(1.0, 0.0);
        let d = lindblad_rhs(&DensityMatrix::new(rho).unwrap(), &gen).unwrap();
        assert!(d.rho.norm() < 1e-15);
    }

    #[test]
    fn unitary_evolution_keeps_spectrum() {
        let (h, _) = two_level();
        let gen = LindbladGenerator::new(h.map(|v| v * C64::i()), vec![]).unwrap();
        let rho0 = DensityMatrix::new(diagonal_matrix(&[C64::new(0.8, 0.0), C64::new(0.2, 0.0)])).unwrap();
        let traj = integrate_lindblad(&rho0, &gen, 2.0, 1e-3, 100).unwrap();
        for st in &traj.states {
            let ev = hermitian_eigenvalues(&st.rho);
            assert!((ev[0] - 0.2).abs() < 1e-8 && (ev[1] - 0.8).abs() < 1e-8);
            assert!((st.purity() - 0.68).abs() < 1e-8);
        }
        let same = integrate_lindblad(&rho0, &gen, 0.0, 1e-3, 1).unwrap();
        assert_eq!(same.states.len(), 1);
        assert_eq!(same.states[0], rho0);
    }

    #[test]
    fn rejects_invalid_initial_state() {
        let gen = LindbladGenerator::new(CMatrix::zeros(2, 2), vec![]).unwrap();
        let bad = DensityMatrix::new(identity(2)).unwrap();
        assert!(integrate_lindblad(&bad, &gen, 1.0, 0.1, 1).is_err());
        let neg = DensityMatrix::new(diagonal_matrix(&[C64::new(1.5, 0.0), C64::new(-0.5, 0.0)])).unwrap();
        assert!(integrate_lindblad(&neg, &gen, 1.0, 0.1, 1).is_err());
    }
}
