//! Quantum Itô differential algebra over the index order `(−, 1..d, +)`.
//!
//! Coefficients of an [`ItoMatrix`] are exact complex rationals, so table
//! identities hold bit for bit. Operator-valued generators use dense
//! floating-point blocks.

use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;
use num_complex::Complex;
use num_rational::BigRational;
use num_traits::{Signed, Zero};
use serde::Serialize;

use crate::linalg::{identity, is_exactly_hermitian, spectral_norm};
use crate::{CMatrix, Error, Result, C64};

/// Complex number with exact rational parts.
pub type Exact = Complex<BigRational>;

pub fn exact_int(re: i64, im: i64) -> Exact {
    Complex::new(
        BigRational::from_integer(BigInt::from(re)),
        BigRational::from_integer(BigInt::from(im)),
    )
}

pub fn exact_ratio(num: i64, den: i64) -> Exact {
    Complex::new(
        BigRational::new(BigInt::from(num), BigInt::from(den)),
        BigRational::zero(),
    )
}

/// Exact binary expansion of a finite float.
pub fn exact_from_f64(x: f64) -> Result<Exact> {
    BigRational::from_float(x)
        .map(|r| Complex::new(r, BigRational::zero()))
        .ok_or_else(|| Error::invalid(format!("{x} is not a finite number")))
}

pub fn format_exact(z: &Exact) -> String {
    match (z.re.is_zero(), z.im.is_zero()) {
        (_, true) => z.re.to_string(),
        (true, false) => format!("{}i", z.im),
        (false, false) => {
            let sign = if z.im.is_negative() { '-' } else { '+' };
            format!("{}{}{}i", z.re, sign, z.im.abs())
        }
    }
}

/// Position in the ordered index set `(−, 1..d, +)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Index {
    Minus,
    /// Channel number, 1-based.
    Channel(usize),
    Plus,
}

impl Index {
    pub fn position(self, d: usize) -> usize {
        match self {
            Index::Minus => 0,
            Index::Channel(k) => k,
            Index::Plus => d + 1,
        }
    }

    pub fn from_position(pos: usize, d: usize) -> Self {
        match pos {
            0 => Index::Minus,
            p if p == d + 1 => Index::Plus,
            p => Index::Channel(p),
        }
    }

    /// Minkowski reflection swapping `−` and `+`.
    pub fn reflect(self) -> Self {
        match self {
            Index::Minus => Index::Plus,
            Index::Plus => Index::Minus,
            c => c,
        }
    }

    fn check(self, d: usize) -> Result<()> {
        match self {
            Index::Channel(k) if k == 0 || k > d => Err(Error::invalid(format!(
                "channel index {k} outside 1..={d}"
            ))),
            _ => Ok(()),
        }
    }
}

impl fmt::Display for Index {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Index::Minus => write!(f, "-"),
            Index::Plus => write!(f, "+"),
            Index::Channel(k) => write!(f, "{k}"),
        }
    }
}

/// Triangular matrix representative of a quantum Itô differential.
///
/// Rows are lower indices, columns upper indices; row `+` and column `−`
/// are identically zero.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ItoMatrix {
    d: usize,
    entries: Vec<Exact>,
}

impl ItoMatrix {
    pub fn zero(d: usize) -> Self {
        let dim = d + 2;
        ItoMatrix {
            d,
            entries: vec![exact_int(0, 0); dim * dim],
        }
    }

    /// Builds a matrix from row-major entries, enforcing the triangular shape.
    pub fn from_entries(d: usize, entries: Vec<Exact>) -> Result<Self> {
        let dim = d + 2;
        if entries.len() != dim * dim {
            return Err(Error::invalid(format!(
                "expected {} entries for d = {d}, got {}",
                dim * dim,
                entries.len()
            )));
        }
        let m = ItoMatrix { d, entries };
        for i in 0..dim {
            for j in 0..dim {
                if (i == dim - 1 || j == 0) && !m.entry(i, j).is_zero() {
                    return Err(Error::invalid(format!(
                        "entry ({}, {}) must vanish",
                        Index::from_position(i, d),
                        Index::from_position(j, d)
                    )));
                }
            }
        }
        Ok(m)
    }

    pub fn from_integers(d: usize, rows: &[&[i64]]) -> Result<Self> {
        let entries = rows
            .iter()
            .flat_map(|r| r.iter().map(|v| exact_int(*v, 0)))
            .collect();
        ItoMatrix::from_entries(d, entries)
    }

    /// The differential `dA^upper_lower`.
    pub fn elementary(d: usize, lower: Index, upper: Index) -> Result<Self> {
        lower.check(d)?;
        upper.check(d)?;
        if lower == Index::Plus || upper == Index::Minus {
            return Err(Error::invalid(format!(
                "dA^{upper}_{lower} is not an admissible differential"
            )));
        }
        let mut m = ItoMatrix::zero(d);
        let dim = d + 2;
        m.entries[lower.position(d) * dim + upper.position(d)] = exact_int(1, 0);
        Ok(m)
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn dim(&self) -> usize {
        self.d + 2
    }

    pub fn entry(&self, row: usize, col: usize) -> &Exact {
        &self.entries[row * self.dim() + col]
    }

    pub fn get(&self, row: Index, col: Index) -> &Exact {
        self.entry(row.position(self.d), col.position(self.d))
    }

    pub fn entries(&self) -> &[Exact] {
        &self.entries
    }

    pub fn is_zero(&self) -> bool {
        self.entries.iter().all(|e| e.is_zero())
    }

    fn same_shape(&self, other: &ItoMatrix) -> Result<()> {
        if self.d != other.d {
            return Err(Error::invalid(format!(
                "dimension mismatch: {} vs {}",
                self.dim(),
                other.dim()
            )));
        }
        Ok(())
    }

    pub fn mul(&self, other: &ItoMatrix) -> Result<ItoMatrix> {
        self.same_shape(other)?;
        let dim = self.dim();
        let mut out = ItoMatrix::zero(self.d);
        for i in 0..dim {
            for k in 0..dim {
                let a = self.entry(i, k);
                if a.is_zero() {
                    continue;
                }
                for j in 0..dim {
                    let b = other.entry(k, j);
                    if !b.is_zero() {
                        out.entries[i * dim + j] += a * b;
                    }
                }
            }
        }
        Ok(out)
    }

    pub fn add(&self, other: &ItoMatrix) -> Result<ItoMatrix> {
        self.same_shape(other)?;
        let entries = self
            .entries
            .iter()
            .zip(&other.entries)
            .map(|(a, b)| a + b)
            .collect();
        Ok(ItoMatrix { d: self.d, entries })
    }

    pub fn sub(&self, other: &ItoMatrix) -> Result<ItoMatrix> {
        self.same_shape(other)?;
        let entries = self
            .entries
            .iter()
            .zip(&other.entries)
            .map(|(a, b)| a - b)
            .collect();
        Ok(ItoMatrix { d: self.d, entries })
    }

    pub fn scale(&self, s: &Exact) -> ItoMatrix {
        ItoMatrix {
            d: self.d,
            entries: self.entries.iter().map(|a| a * s).collect(),
        }
    }

    /// Minkowski involution `J a† J`.
    pub fn star(&self) -> ItoMatrix {
        let dim = self.dim();
        let flip = |p: usize| Index::from_position(p, self.d).reflect().position(self.d);
        let mut out = ItoMatrix::zero(self.d);
        for i in 0..dim {
            for j in 0..dim {
                out.entries[i * dim + j] = self.entry(flip(j), flip(i)).conj();
            }
        }
        out
    }

    pub fn to_complex(&self) -> CMatrix {
        let dim = self.dim();
        CMatrix::from_fn(dim, dim, |i, j| {
            let e = self.entry(i, j);
            C64::new(ratio_to_f64(&e.re), ratio_to_f64(&e.im))
        })
    }

    pub fn to_strings(&self) -> Vec<Vec<String>> {
        let dim = self.dim();
        (0..dim)
            .map(|i| (0..dim).map(|j| format_exact(self.entry(i, j))).collect())
            .collect()
    }
}

fn ratio_to_f64(r: &BigRational) -> f64 {
    use num_traits::ToPrimitive;
    r.to_f64().unwrap_or(f64::NAN)
}

impl fmt::Display for ItoMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rows = self.to_strings();
        let w = rows.iter().flatten().map(|s| s.len()).max().unwrap_or(1);
        for (i, row) in rows.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "[")?;
            for (j, s) in row.iter().enumerate() {
                if j > 0 {
                    write!(f, " ")?;
                }
                write!(f, "{s:>w$}")?;
            }
            write!(f, "]")?;
        }
        Ok(())
    }
}

/// The six named differentials for a single degree of freedom.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum BasisKind {
    Time,
    Wiener,
    Poisson,
    Annihilate,
    Create,
    Count,
}

impl BasisKind {
    pub const ALL: [BasisKind; 6] = [
        BasisKind::Time,
        BasisKind::Wiener,
        BasisKind::Poisson,
        BasisKind::Annihilate,
        BasisKind::Create,
        BasisKind::Count,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BasisKind::Time => "time",
            BasisKind::Wiener => "wiener",
            BasisKind::Poisson => "poisson",
            BasisKind::Annihilate => "annihilate",
            BasisKind::Create => "create",
            BasisKind::Count => "count",
        }
    }
}

impl fmt::Display for BasisKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BasisKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        BasisKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown basis differential '{s}'")))
    }
}

pub fn basis_differential(kind: BasisKind, d: usize) -> Result<ItoMatrix> {
    if d != 1 {
        return Err(Error::invalid(format!(
            "named basis differentials are defined for d = 1, got d = {d}"
        )));
    }
    let rows: [[i64; 3]; 3] = match kind {
        BasisKind::Time => [[0, 0, 1], [0, 0, 0], [0, 0, 0]],
        BasisKind::Wiener => [[0, 1, 0], [0, 0, 1], [0, 0, 0]],
        BasisKind::Poisson => [[0, 1, 0], [0, 1, 1], [0, 0, 0]],
        BasisKind::Annihilate => [[0, 1, 0], [0, 0, 0], [0, 0, 0]],
        BasisKind::Create => [[0, 0, 0], [0, 0, 1], [0, 0, 0]],
        BasisKind::Count => [[0, 0, 0], [0, 1, 0], [0, 0, 0]],
    };
    let refs: Vec<&[i64]> = rows.iter().map(|r| r.as_slice()).collect();
    ItoMatrix::from_integers(1, &refs)
}

/// Coefficient of `dA^ν_μ` in the product `dA^κ_μ dA^ν_ι`, i.e. `δ^κ_ι`.
pub fn general_product_coefficient(
    d: usize,
    mu: Index,
    kappa: Index,
    iota: Index,
    nu: Index,
) -> Result<u8> {
    for (name, idx, forbidden) in [
        ("mu", mu, Index::Plus),
        ("iota", iota, Index::Plus),
        ("kappa", kappa, Index::Minus),
        ("nu", nu, Index::Minus),
    ] {
        idx.check(d)?;
        if idx == forbidden {
            return Err(Error::invalid(format!("{name} = {idx} is not admissible")));
        }
    }
    Ok(u8::from(kappa == iota))
}

/// Operator-valued coefficients `α^ι_κ`, `ι ∈ (−, 1..d)`, `κ ∈ (1..d, +)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientArray {
    d: usize,
    n: usize,
    blocks: Vec<CMatrix>,
}

impl CoefficientArray {
    pub fn zeros(d: usize, n: usize) -> Self {
        CoefficientArray {
            d,
            n,
            blocks: vec![CMatrix::zeros(n, n); (d + 1) * (d + 1)],
        }
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn n(&self) -> usize {
        self.n
    }

    fn slot(&self, iota: Index, kappa: Index) -> Result<usize> {
        iota.check(self.d)?;
        kappa.check(self.d)?;
        if iota == Index::Plus || kappa == Index::Minus {
            return Err(Error::invalid(format!(
                "coefficient ({iota}, {kappa}) is outside the array"
            )));
        }
        Ok(iota.position(self.d) * (self.d + 1) + kappa.position(self.d) - 1)
    }

    pub fn get(&self, iota: Index, kappa: Index) -> Result<&CMatrix> {
        Ok(&self.blocks[self.slot(iota, kappa)?])
    }

    pub fn set(&mut self, iota: Index, kappa: Index, op: CMatrix) -> Result<()> {
        if op.shape() != (self.n, self.n) {
            return Err(Error::invalid(format!(
                "operator shape {:?} does not match system dimension {}",
                op.shape(),
                self.n
            )));
        }
        let s = self.slot(iota, kappa)?;
        self.blocks[s] = op;
        Ok(())
    }

    pub fn with(mut self, iota: Index, kappa: Index, op: CMatrix) -> Result<Self> {
        self.set(iota, kappa, op)?;
        Ok(self)
    }

    /// Quantum Itô involution `β^{★ι}_κ = (β^{−κ}_{−ι})†`.
    pub fn star(&self) -> CoefficientArray {
        let mut out = CoefficientArray::zeros(self.d, self.n);
        for r in 0..=self.d {
            for c in 1..=self.d + 1 {
                let iota = Index::from_position(r, self.d);
                let kappa = Index::from_position(c, self.d);
                let src = self.slot(kappa.reflect(), iota.reflect()).unwrap();
                let dst = out.slot(iota, kappa).unwrap();
                out.blocks[dst] = self.blocks[src].adjoint();
            }
        }
        out
    }

    pub fn max_norm(&self) -> f64 {
        self.blocks.iter().map(spectral_norm).fold(0.0, f64::max)
    }
}

/// Coefficients of the Itô correction `dψ dφ†`: `c^ι_κ = Σ_j α^ι_j β^{★j}_κ`.
pub fn ito_correction(alpha: &CoefficientArray, beta: &CoefficientArray) -> Result<CoefficientArray> {
    if alpha.d != beta.d || alpha.n != beta.n {
        return Err(Error::invalid(format!(
            "shape mismatch: (d = {}, n = {}) vs (d = {}, n = {})",
            alpha.d, alpha.n, beta.d, beta.n
        )));
    }
    let d = alpha.d;
    let bs = beta.star();
    let mut out = CoefficientArray::zeros(d, alpha.n);
    for r in 0..=d {
        for c in 1..=d + 1 {
            let iota = Index::from_position(r, d);
            let kappa = Index::from_position(c, d);
            let mut acc = CMatrix::zeros(alpha.n, alpha.n);
            for j in 1..=d {
                acc += alpha.get(iota, Index::Channel(j))? * bs.get(Index::Channel(j), kappa)?;
            }
            out.set(iota, kappa, acc)?;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EpsilonNoiseReport {
    pub epsilon: Exact,
    /// `b = d⁺ + d_− + ε d`.
    pub differential: ItoMatrix,
    /// `b² − d_t`.
    pub lhs: ItoMatrix,
    /// `ε b`.
    pub rhs: ItoMatrix,
    pub holds: bool,
}

pub fn epsilon_noise_square(epsilon: f64) -> Result<EpsilonNoiseReport> {
    if !(epsilon >= 0.0) {
        return Err(Error::invalid(format!(
            "epsilon must be a nonnegative number, got {epsilon}"
        )));
    }
    let eps = exact_from_f64(epsilon)?;
    let b = basis_differential(BasisKind::Create, 1)?
        .add(&basis_differential(BasisKind::Annihilate, 1)?)?
        .add(&basis_differential(BasisKind::Count, 1)?.scale(&eps))?;
    let lhs = b.mul(&b)?.sub(&basis_differential(BasisKind::Time, 1)?)?;
    let rhs = b.scale(&eps);
    let holds = lhs == rhs;
    Ok(EpsilonNoiseReport {
        epsilon: eps,
        differential: b,
        lhs,
        rhs,
        holds,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ProductEntry {
    pub left: BasisKind,
    pub right: BasisKind,
    pub entries: Vec<Vec<String>>,
    /// Basis element (or "0") equal to the product, when there is one.
    pub equals: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ProductTableReport {
    pub basis: Vec<BasisKind>,
    pub products: Vec<ProductEntry>,
}

pub fn product_table() -> ProductTableReport {
    let mats: Vec<_> = BasisKind::ALL
        .iter()
        .map(|k| basis_differential(*k, 1).expect("d = 1"))
        .collect();
    let mut products = Vec::new();
    for (a, ma) in BasisKind::ALL.iter().zip(&mats) {
        for (b, mb) in BasisKind::ALL.iter().zip(&mats) {
            let p = ma.mul(mb).expect("same shape");
            let equals = if p.is_zero() {
                Some("0".to_string())
            } else {
                BasisKind::ALL
                    .iter()
                    .zip(&mats)
                    .find(|(_, m)| **m == p)
                    .map(|(k, _)| k.name().to_string())
            };
            products.push(ProductEntry {
                left: *a,
                right: *b,
                entries: p.to_strings(),
                equals,
            });
        }
    }
    ProductTableReport {
        basis: BasisKind::ALL.to_vec(),
        products,
    }
}

impl ProductTableReport {
    pub fn to_text(&self) -> String {
        let w = self.basis.iter().map(|k| k.name().len()).max().unwrap_or(0);
        let mut out = String::new();
        for p in &self.products {
            let rows: Vec<String> = p.entries.iter().map(|r| r.join(" ")).collect();
            let eq = p.equals.as_deref().unwrap_or("-");
            out.push_str(&format!(
                "{:<w$} * {:<w$} = [{}]  {}\n",
                p.left.name(),
                p.right.name(),
                rows.join("; "),
                eq
            ));
        }
        out
    }
}

fn check_op(name: &str, op: &CMatrix, n: usize) -> Result<()> {
    if op.shape() != (n, n) {
        return Err(Error::invalid(format!(
            "{name} has shape {:?}, expected ({n}, {n})",
            op.shape()
        )));
    }
    if op.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid(format!("{name} has non-finite entries")));
    }
    Ok(())
}

/// Block generator `(G, G_+, G^-, G^-_+)` of the boundary interaction.
#[derive(Debug, Clone)]
pub struct BoundaryGenerator {
    d: usize,
    n: usize,
    /// `G^i_k` at `i * d + k` (0-based).
    g: Vec<CMatrix>,
    g_plus: Vec<CMatrix>,
    g_minus: Vec<CMatrix>,
    g_pm: CMatrix,
    nu: f64,
    e: CMatrix,
    hbar: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PseudoUnitarityResidual {
    /// `‖G^- + ν G_+† G‖`.
    pub r1: f64,
    /// `‖G^-_+ + (ν/2) G_+† G_+ + (i/ħ) E‖`.
    pub r2: f64,
    /// `‖G† G − I‖`.
    pub r3: f64,
    /// `‖G^- − ν G_+† G‖`, the opposite sign convention for `G^-`.
    pub r1_positive_sign: f64,
}

impl PseudoUnitarityResidual {
    pub fn is_pseudo_unitary(&self, tol: f64) -> bool {
        self.r1 <= tol && self.r2 <= tol && self.r3 <= tol
    }
}

impl BoundaryGenerator {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        g: Vec<CMatrix>,
        g_plus: Vec<CMatrix>,
        g_minus: Vec<CMatrix>,
        g_pm: CMatrix,
        nu: f64,
        e: CMatrix,
        hbar: f64,
    ) -> Result<Self> {
        let d = g_plus.len();
        if d == 0 {
            return Err(Error::invalid("at least one channel is required"));
        }
        if g.len() != d * d || g_minus.len() != d {
            return Err(Error::invalid(format!(
                "block counts inconsistent with d = {d}: G has {}, G^- has {}",
                g.len(),
                g_minus.len()
            )));
        }
        if !(nu > 0.0 && nu.is_finite()) {
            return Err(Error::invalid(format!("nu must be positive, got {nu}")));
        }
        if !(hbar > 0.0 && hbar.is_finite()) {
            return Err(Error::invalid(format!("hbar must be positive, got {hbar}")));
        }
        let n = e.nrows();
        check_op("E", &e, n)?;
        check_op("G^-_+", &g_pm, n)?;
        for op in &g {
            check_op("G", op, n)?;
        }
        for op in g_plus.iter().chain(&g_minus) {
            check_op("G_+ / G^-", op, n)?;
        }
        if !is_exactly_hermitian(&e) {
            return Err(Error::invalid("E must be exactly Hermitian"));
        }
        Ok(BoundaryGenerator {
            d,
            n,
            g,
            g_plus,
            g_minus,
            g_pm,
            nu,
            e,
            hbar,
        })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn hbar(&self) -> f64 {
        self.hbar
    }

    pub fn energy(&self) -> &CMatrix {
        &self.e
    }

    /// `G^i_k`, 0-based channels.
    pub fn g(&self, i: usize, k: usize) -> &CMatrix {
        &self.g[i * self.d + k]
    }

    pub fn g_plus(&self, i: usize) -> &CMatrix {
        &self.g_plus[i]
    }

    pub fn g_minus(&self, k: usize) -> &CMatrix {
        &self.g_minus[k]
    }

    pub fn g_pm(&self) -> &CMatrix {
        &self.g_pm
    }

    fn g_block(&self) -> CMatrix {
        let (d, n) = (self.d, self.n);
        let mut m = CMatrix::zeros(d * n, d * n);
        for i in 0..d {
            for k in 0..d {
                m.view_mut((i * n, k * n), (n, n)).copy_from(self.g(i, k));
            }
        }
        m
    }

    pub fn pseudo_unitarity_residual(&self) -> PseudoUnitarityResidual {
        let (d, n, nu) = (self.d, self.n, self.nu);
        let mut row_neg = CMatrix::zeros(n, d * n);
        let mut row_pos = CMatrix::zeros(n, d * n);
        for k in 0..d {
            let mut gg = CMatrix::zeros(n, n);
            for i in 0..d {
                gg += self.g_plus(i).adjoint() * self.g(i, k);
            }
            let gg = gg.scale(nu);
            row_neg
                .view_mut((0, k * n), (n, n))
                .copy_from(&(self.g_minus(k) + &gg));
            row_pos
                .view_mut((0, k * n), (n, n))
                .copy_from(&(self.g_minus(k) - &gg));
        }
        let mut second = self.g_pm.clone() + self.e.map(|v| v * C64::new(0.0, 1.0 / self.hbar));
        for i in 0..d {
            second += (self.g_plus(i).adjoint() * self.g_plus(i)).scale(0.5 * nu);
        }
        let gb = self.g_block();
        let third = gb.adjoint() * &gb - identity(d * n);
        PseudoUnitarityResidual {
            r1: spectral_norm(&row_neg),
            r2: spectral_norm(&second),
            r3: spectral_norm(&third),
            r1_positive_sign: spectral_norm(&row_pos),
        }
    }

    /// Block transformation induced by the probe amplitude `φ^k` (unit
    /// vector), with `φ_k = ν conj(φ^k)`.
    pub fn g_to_s(&self, phi: &[C64]) -> Result<StochasticGenerator> {
        let (d, n, nu) = (self.d, self.n, self.nu);
        if phi.len() != d {
            return Err(Error::invalid(format!(
                "phi has {} components, expected {d}",
                phi.len()
            )));
        }
        let norm: f64 = phi.iter().map(|p| p.norm_sqr()).sum::<f64>().sqrt();
        if !((norm - 1.0).abs() <= 1e-12) {
            return Err(Error::invalid(format!(
                "phi must be a unit vector, norm is {norm}"
            )));
        }
        let id = identity(n);
        let lower: Vec<C64> = phi.iter().map(|p| p.conj() * nu).collect();
        let sq = nu.sqrt();
        let mut s_plus = Vec::with_capacity(d);
        for i in 0..d {
            let mut acc = self.g_plus(i) - id.scale(1.0) * phi[i];
            for k in 0..d {
                acc += self.g(i, k) * phi[k];
            }
            s_plus.push(acc.scale(sq));
        }
        let mut s_minus = Vec::with_capacity(d);
        for k in 0..d {
            let mut acc = self.g_minus(k) - &id * lower[k];
            for i in 0..d {
                acc += self.g(i, k) * lower[i];
            }
            s_minus.push(acc.scale(1.0 / sq));
        }
        let mut s_pm = self.g_pm.clone();
        for i in 0..d {
            s_pm += self.g_plus(i) * lower[i];
            s_pm += self.g_minus(i) * phi[i];
            for k in 0..d {
                let mut gik = self.g(i, k).clone();
                if i == k {
                    gik -= &id;
                }
                s_pm += gik * (lower[i] * phi[k]);
            }
        }
        Ok(StochasticGenerator {
            d,
            n,
            s: self.g.clone(),
            s_plus,
            s_minus,
            s_pm,
        })
    }
}

/// Generator blocks `(S, S_+, S^-, S^-_+)` of a decoherence equation.
#[derive(Debug, Clone)]
pub struct StochasticGenerator {
    d: usize,
    n: usize,
    s: Vec<CMatrix>,
    s_plus: Vec<CMatrix>,
    s_minus: Vec<CMatrix>,
    s_pm: CMatrix,
}

impl StochasticGenerator {
    pub fn new(
        s: Vec<CMatrix>,
        s_plus: Vec<CMatrix>,
        s_minus: Vec<CMatrix>,
        s_pm: CMatrix,
    ) -> Result<Self> {
        let d = s_plus.len();
        let n = s_pm.nrows();
        if d == 0 || s.len() != d * d || s_minus.len() != d {
            return Err(Error::invalid("inconsistent block counts"));
        }
        check_op("S^-_+", &s_pm, n)?;
        for op in s.iter().chain(&s_plus).chain(&s_minus) {
            check_op("S", op, n)?;
        }
        Ok(StochasticGenerator {
            d,
            n,
            s,
            s_plus,
            s_minus,
            s_pm,
        })
    }

    /// Diffusive generator with `S = I`, `L^j` and Hamiltonian `H`.
    pub fn diffusive(h: &CMatrix, l: &[CMatrix], hbar: f64) -> Result<Self> {
        let n = h.nrows();
        let d = l.len();
        let mut s = vec![CMatrix::zeros(n, n); d * d];
        for j in 0..d {
            s[j * d + j] = identity(n);
        }
        let mut k = h.map(|v| v * C64::new(0.0, 1.0 / hbar));
        for lj in l {
            k += (lj.adjoint() * lj).scale(0.5);
        }
        let s_minus = l.iter().map(|lj| -lj.adjoint()).collect();
        StochasticGenerator::new(s, l.to_vec(), s_minus, -k)
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn s(&self, i: usize, k: usize) -> &CMatrix {
        &self.s[i * self.d + k]
    }

    pub fn s_plus(&self, i: usize) -> &CMatrix {
        &self.s_plus[i]
    }

    pub fn s_minus(&self, k: usize) -> &CMatrix {
        &self.s_minus[k]
    }

    pub fn s_pm(&self) -> &CMatrix {
        &self.s_pm
    }

    /// `L^j = S^j_+`.
    pub fn l(&self, j: usize) -> &CMatrix {
        &self.s_plus[j]
    }

    /// `K = −S^-_+`.
    pub fn k(&self) -> CMatrix {
        -self.s_pm.clone()
    }

    /// `K_j = −S^-_j`.
    pub fn k_j(&self, j: usize) -> CMatrix {
        -self.s_minus[j].clone()
    }

    /// `‖K + K† − Σ_j L^j† L^j‖`.
    pub fn normalization_residual(&self) -> f64 {
        let k = self.k();
        let mut r = &k + k.adjoint();
        for l in &self.s_plus {
            r -= l.adjoint() * l;
        }
        spectral_norm(&r)
    }
}
