//! Groupoid backends and the invariant-derivative calculus on them.
//!
//! Two backends are provided: the pair groupoid `ℝⁿ × ℝⁿ` and matrix Lie
//! groups given by a basis of their algebra. Iterated left/right invariant
//! derivatives are evaluated exactly with hyper-dual jets: each derivative
//! pushes the current arrow along its invariant field on its own nilpotent
//! seed, so the mixed coefficient of the composite is the iterated derivative.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use thiserror::Error;

use crate::jets::{self, Jet3, JetError, SmoothFn, VectorFn};
use crate::linalg::{SpectralSplit, Tensor3};

#[derive(Debug, Error)]
pub enum GroupoidError {
    #[error("arrows are not composable: source {from:?} differs from target {to:?}")]
    NonComposable { from: Vec<f64>, to: Vec<f64> },
    #[error("singular matrix encountered in {0}")]
    Singular(&'static str),
    #[error("derivative pattern of length {0}; supported lengths are 1, 2 and 3")]
    PatternLength(usize),
    #[error("commutator of basis elements {i} and {j} leaves the basis span (residual {residual:e})")]
    OutsideSpan { i: usize, j: usize, residual: f64 },
    #[error("algebra basis is empty or linearly dependent")]
    DependentBasis,
    #[error("contrast function takes {got} coordinates but arrows have {expected}")]
    ArrowDimension { expected: usize, got: usize },
    #[error(transparent)]
    Jet(#[from] JetError),
}

pub type Result<T> = std::result::Result<T, GroupoidError>;

/// Which family of invariant vector fields a derivative uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Left,
    Right,
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Side::Left => "L",
            Side::Right => "R",
        })
    }
}

/// An element of the algebroid fibre over a base point.
#[derive(Debug, Clone, PartialEq)]
pub struct AlgebroidVector {
    pub base: Vec<f64>,
    pub components: Vec<f64>,
}

type SectionClosure = dyn Fn(&[Jet3]) -> jets::Result<Vec<Jet3>> + Send + Sync;

/// A smooth section of the algebroid: base coordinates to frame components.
#[derive(Clone)]
pub struct Section {
    base_dim: usize,
    rank: usize,
    f: Arc<SectionClosure>,
}

impl fmt::Debug for Section {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Section")
            .field("base_dim", &self.base_dim)
            .field("rank", &self.rank)
            .finish_non_exhaustive()
    }
}

impl Section {
    pub fn from_fn(
        base_dim: usize,
        rank: usize,
        f: impl Fn(&[Jet3]) -> jets::Result<Vec<Jet3>> + Send + Sync + 'static,
    ) -> Self {
        Self { base_dim, rank, f: Arc::new(f) }
    }

    pub fn constant(base_dim: usize, components: Vec<f64>) -> Self {
        let rank = components.len();
        Self::from_fn(base_dim, rank, move |_| {
            Ok(components.iter().map(|&c| Jet3::constant(c)).collect())
        })
    }

    /// The `j`-th frame section.
    pub fn frame(base_dim: usize, rank: usize, j: usize) -> Self {
        let mut v = vec![0.0; rank];
        v[j] = 1.0;
        Self::constant(base_dim, v)
    }

    /// All frame sections.
    pub fn frames(base_dim: usize, rank: usize) -> Vec<Section> {
        (0..rank).map(|j| Self::frame(base_dim, rank, j)).collect()
    }

    /// `f·X` for a base function `f`.
    pub fn scaled(&self, f: Arc<dyn SmoothFn>) -> Section {
        let inner = self.clone();
        Section::from_fn(self.base_dim, self.rank, move |m| {
            let s = f.eval(m)?;
            Ok(inner.eval(m)?.into_iter().map(|c| c * s).collect())
        })
    }

    pub fn base_dim(&self) -> usize {
        self.base_dim
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn eval(&self, m: &[Jet3]) -> jets::Result<Vec<Jet3>> {
        jets::check_dim(self.base_dim, m.len())?;
        let out = (self.f)(m)?;
        jets::check_dim(self.rank, out.len())?;
        Ok(out)
    }

    pub fn at(&self, m: &[f64]) -> jets::Result<AlgebroidVector> {
        Ok(AlgebroidVector { base: m.to_vec(), components: VectorFn::eval_f64(self, m)? })
    }

    /// Component jacobian, `rank × base_dim`.
    pub fn jacobian(&self, m: &[f64]) -> jets::Result<DMatrix<f64>> {
        if self.base_dim == 0 {
            return Ok(DMatrix::zeros(self.rank, 0));
        }
        jets::jacobian(self, m)
    }
}

impl VectorFn for Section {
    fn arity(&self) -> usize {
        self.base_dim
    }
    fn out_dim(&self) -> usize {
        self.rank
    }
    fn eval(&self, x: &[Jet3]) -> jets::Result<Vec<Jet3>> {
        Section::eval(self, x)
    }
}

/// A Lie groupoid backend with a global chart on its arrows.
pub trait Groupoid: Send + Sync + fmt::Debug {
    fn name(&self) -> String;
    /// Dimension of the base `M`.
    fn base_dim(&self) -> usize;
    /// Rank of the algebroid.
    fn rank(&self) -> usize;
    /// Number of arrow coordinates.
    fn arrow_dim(&self) -> usize;
    fn unit(&self, m: &[Jet3]) -> Vec<Jet3>;
    fn compose(&self, g1: &[f64], g2: &[f64]) -> Result<Vec<f64>>;
    fn inverse(&self, g: &[Jet3]) -> Result<Vec<Jet3>>;
    /// Invariant vector field extending `x`, evaluated at arrow `g`.
    fn invariant_field(&self, side: Side, x: &Section, g: &[Jet3]) -> Result<Vec<Jet3>>;
    /// Anchor as a `base_dim × rank` matrix.
    fn anchor_matrix(&self) -> DMatrix<f64>;
    /// `c[(i, j, k)]`: component `k` of the bracket of frame sections `i, j`.
    fn structure_constants(&self) -> Option<&Tensor3>;

    /// Whether this is a pair groupoid (anchor = identity, no structure constants).
    fn is_pair(&self) -> bool {
        false
    }

    fn unit_f64(&self, m: &[f64]) -> Vec<f64> {
        let m: Vec<Jet3> = m.iter().map(|&v| Jet3::constant(v)).collect();
        self.unit(&m).iter().map(Jet3::value).collect()
    }

    fn inverse_f64(&self, g: &[f64]) -> Result<Vec<f64>> {
        let g: Vec<Jet3> = g.iter().map(|&v| Jet3::constant(v)).collect();
        Ok(self.inverse(&g)?.iter().map(Jet3::value).collect())
    }
}

/// Tangent vector `α(X)`.
pub fn anchor(backend: &dyn Groupoid, x: &AlgebroidVector) -> Vec<f64> {
    let a = backend.anchor_matrix();
    (0..a.nrows())
        .map(|i| (0..a.ncols()).map(|j| a[(i, j)] * x.components[j]).sum())
        .collect()
}

/// `c(x, y)` from the structure constants, or zero.
pub fn algebraic_bracket(backend: &dyn Groupoid, x: &[f64], y: &[f64]) -> Vec<f64> {
    let d = backend.rank();
    let mut out = vec![0.0; d];
    if let Some(c) = backend.structure_constants() {
        for i in 0..d {
            for j in 0..d {
                let w = x[i] * y[j];
                if w != 0.0 {
                    for (k, o) in out.iter_mut().enumerate() {
                        *o += c[(i, j, k)] * w;
                    }
                }
            }
        }
    }
    out
}

/// Algebroid bracket `[X, Y](m) = J_Y α(X) − J_X α(Y) + c(X, Y)`.
pub fn bracket(backend: &dyn Groupoid, x: &Section, y: &Section, m: &[f64]) -> Result<AlgebroidVector> {
    let xv = VectorFn::eval_f64(x, m)?;
    let yv = VectorFn::eval_f64(y, m)?;
    let ax = nalgebra::DVector::from_vec(anchor(backend, &AlgebroidVector { base: m.to_vec(), components: xv.clone() }));
    let ay = nalgebra::DVector::from_vec(anchor(backend, &AlgebroidVector { base: m.to_vec(), components: yv.clone() }));
    let jx = x.jacobian(m)?;
    let jy = y.jacobian(m)?;
    let lie = jy * ax - jx * ay;
    let alg = algebraic_bracket(backend, &xv, &yv);
    Ok(AlgebroidVector {
        base: m.to_vec(),
        components: lie.iter().zip(alg).map(|(a, b)| a + b).collect(),
    })
}

/// The pair groupoid `ℝⁿ × ℝⁿ` with arrows `(ζ, ξ)`, target `ζ`, source `ξ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PairGroupoid {
    dim: usize,
}

impl PairGroupoid {
    pub fn new(dim: usize) -> Self {
        assert!(dim >= 1, "pair groupoid needs a base of dimension at least 1");
        Self { dim }
    }

    pub fn arrow(m1: &[f64], m2: &[f64]) -> Vec<f64> {
        m1.iter().chain(m2).copied().collect()
    }
}

impl Groupoid for PairGroupoid {
    fn name(&self) -> String {
        format!("pair(R^{})", self.dim)
    }
    fn base_dim(&self) -> usize {
        self.dim
    }
    fn rank(&self) -> usize {
        self.dim
    }
    fn arrow_dim(&self) -> usize {
        2 * self.dim
    }

    fn unit(&self, m: &[Jet3]) -> Vec<Jet3> {
        m.iter().chain(m).copied().collect()
    }

    fn compose(&self, g1: &[f64], g2: &[f64]) -> Result<Vec<f64>> {
        let n = self.dim;
        let (source, target) = (&g1[n..], &g2[..n]);
        if source.iter().zip(target).any(|(a, b)| (a - b).abs() > 1e-12) {
            return Err(GroupoidError::NonComposable { from: source.to_vec(), to: target.to_vec() });
        }
        Ok(Self::arrow(&g1[..n], &g2[n..]))
    }

    fn inverse(&self, g: &[Jet3]) -> Result<Vec<Jet3>> {
        jets::check_dim(2 * self.dim, g.len())?;
        Ok(g[self.dim..].iter().chain(&g[..self.dim]).copied().collect())
    }

    fn invariant_field(&self, side: Side, x: &Section, g: &[Jet3]) -> Result<Vec<Jet3>> {
        let n = self.dim;
        let mut v = vec![Jet3::default(); 2 * n];
        match side {
            Side::Left => v[n..].copy_from_slice(&x.eval(&g[n..])?),
            Side::Right => {
                for (slot, c) in v[..n].iter_mut().zip(x.eval(&g[..n])?) {
                    *slot = -c;
                }
            }
        }
        Ok(v)
    }

    fn anchor_matrix(&self) -> DMatrix<f64> {
        DMatrix::identity(self.dim, self.dim)
    }

    fn structure_constants(&self) -> Option<&Tensor3> {
        None
    }

    fn is_pair(&self) -> bool {
        true
    }
}

/// A real matrix Lie group given by a basis of its algebra. Arrows are the
/// row-major matrix entries.
#[derive(Debug, Clone)]
pub struct MatrixLieGroup {
    name: String,
    size: usize,
    basis: Vec<DMatrix<f64>>,
    structure: Tensor3,
}

impl MatrixLieGroup {
    pub fn new(name: impl Into<String>, basis: Vec<DMatrix<f64>>) -> Result<Self> {
        let d = basis.len();
        let size = basis.first().ok_or(GroupoidError::DependentBasis)?.nrows();
        let flat = DMatrix::from_fn(size * size, d, |r, a| basis[a][(r / size, r % size)]);
        let split = SpectralSplit::new(&(flat.transpose() * &flat), 1e-12);
        if split.null_count > 0 {
            return Err(GroupoidError::DependentBasis);
        }
        let gram_inv = split.pseudo_inverse();
        let mut structure = Tensor3::zeros(d);
        for i in 0..d {
            for j in 0..d {
                let comm = &basis[i] * &basis[j] - &basis[j] * &basis[i];
                let v = DMatrix::from_fn(size * size, 1, |r, _| comm[(r / size, r % size)]);
                let coef = &gram_inv * flat.transpose() * &v;
                let residual = crate::linalg::max_abs(&(&flat * &coef - &v));
                if residual > 1e-8 {
                    return Err(GroupoidError::OutsideSpan { i, j, residual });
                }
                for k in 0..d {
                    structure[(i, j, k)] = coef[k];
                }
            }
        }
        Ok(Self { name: name.into(), size, basis, structure })
    }

    /// `SO(n)` with basis `E_ab − E_ba`, `a < b`.
    pub fn special_orthogonal(n: usize) -> Self {
        let mut basis = Vec::new();
        for a in 0..n {
            for b in a + 1..n {
                let mut m = DMatrix::zeros(n, n);
                m[(a, b)] = 1.0;
                m[(b, a)] = -1.0;
                basis.push(m);
            }
        }
        Self::new(format!("SO({n})"), basis).expect("so(n) basis is closed")
    }

    /// `SO(3)` with the cross-product basis, `[e₁, e₂] = e₃` cyclically.
    pub fn so3() -> Self {
        let gen = |a: usize| {
            DMatrix::from_fn(3, 3, |r, c| {
                let (b, cc) = ((a + 1) % 3, (a + 2) % 3);
                if r == cc && c == b {
                    1.0
                } else if r == b && c == cc {
                    -1.0
                } else {
                    0.0
                }
            })
        };
        Self::new("SO(3)", (0..3).map(gen).collect()).expect("so(3) basis is closed")
    }

    /// `U(k)`, realified with interleaved `(Re, Im)` coordinates.
    pub fn unitary(k: usize) -> Self {
        let mut basis = Vec::new();
        for a in 0..k {
            for b in a..k {
                let mut re = DMatrix::zeros(k, k);
                let mut im = DMatrix::zeros(k, k);
                if a == b {
                    im[(a, a)] = 1.0;
                    basis.push(realify(&re, &im));
                } else {
                    re[(a, b)] = 1.0;
                    re[(b, a)] = -1.0;
                    basis.push(realify(&re, &DMatrix::zeros(k, k)));
                    im[(a, b)] = 1.0;
                    im[(b, a)] = 1.0;
                    basis.push(realify(&DMatrix::zeros(k, k), &im));
                }
            }
        }
        Self::new(format!("U({k})"), basis).expect("u(k) basis is closed")
    }

    /// `SU(2)` with basis `iσ_x, iσ_y, iσ_z`, realified.
    pub fn su2() -> Self {
        let z = DMatrix::zeros(2, 2);
        let sx = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let sy_re = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]);
        let sz = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        // iσ_y = [[0,1],[-1,0]] is real.
        let basis = vec![realify(&z, &sx), realify(&sy_re, &z), realify(&z, &sz)];
        Self::new("SU(2)", basis).expect("su(2) basis is closed")
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn basis(&self) -> &[DMatrix<f64>] {
        &self.basis
    }

    /// `Σ x_a E_a`.
    pub fn algebra_element(&self, x: &[f64]) -> DMatrix<f64> {
        self.basis
            .iter()
            .zip(x)
            .fold(DMatrix::zeros(self.size, self.size), |acc, (e, &c)| acc + e * c)
    }

    /// `exp(Σ x_a E_a)` (Padé scaling-and-squaring).
    pub fn exp(&self, x: &[f64]) -> DMatrix<f64> {
        self.algebra_element(x).exp()
    }

    pub fn to_arrow(&self, g: &DMatrix<f64>) -> Vec<f64> {
        (0..self.size * self.size).map(|r| g[(r / self.size, r % self.size)]).collect()
    }

    pub fn from_arrow(&self, g: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.size, self.size, g)
    }

    fn jet_matrix_mul(&self, a: &[Jet3], b: &DMatrix<f64>, left: bool) -> Vec<Jet3> {
        let n = self.size;
        let mut out = vec![Jet3::default(); n * n];
        for r in 0..n {
            for c in 0..n {
                let mut s = Jet3::default();
                for k in 0..n {
                    if left {
                        // a · b
                        let w = b[(k, c)];
                        if w != 0.0 {
                            s += a[r * n + k] * w;
                        }
                    } else {
                        // b · a
                        let w = b[(r, k)];
                        if w != 0.0 {
                            s += a[k * n + c] * w;
                        }
                    }
                }
                out[r * n + c] = s;
            }
        }
        out
    }
}

/// Real `2k × 2k` form of `re + i·im` with interleaved coordinates.
pub fn realify(re: &DMatrix<f64>, im: &DMatrix<f64>) -> DMatrix<f64> {
    let k = re.nrows();
    let mut out = DMatrix::zeros(2 * k, 2 * k);
    for r in 0..k {
        for c in 0..k {
            let (a, b) = (re[(r, c)], im[(r, c)]);
            out[(2 * r, 2 * c)] = a;
            out[(2 * r, 2 * c + 1)] = -b;
            out[(2 * r + 1, 2 * c)] = b;
            out[(2 * r + 1, 2 * c + 1)] = a;
        }
    }
    out
}

/// Gauss–Jordan inverse of a row-major jet matrix, pivoting on values.
fn jet_inverse(a: &[Jet3], n: usize) -> Result<Vec<Jet3>> {
    let mut m = a.to_vec();
    let mut inv = vec![Jet3::default(); n * n];
    for i in 0..n {
        inv[i * n + i] = Jet3::constant(1.0);
    }
    let scale = a.iter().fold(0.0f64, |s, v| s.max(v.value().abs()));
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&x, &y| m[x * n + col].value().abs().total_cmp(&m[y * n + col].value().abs()))
            .expect("non-empty range");
        if m[pivot * n + col].value().abs() <= 1e-14 * scale.max(f64::MIN_POSITIVE) {
            return Err(GroupoidError::Singular("matrix inverse"));
        }
        if pivot != col {
            for c in 0..n {
                m.swap(pivot * n + c, col * n + c);
                inv.swap(pivot * n + c, col * n + c);
            }
        }
        let p = m[col * n + col].recip()?;
        for c in 0..n {
            m[col * n + c] *= p;
            inv[col * n + c] *= p;
        }
        for r in 0..n {
            if r == col {
                continue;
            }
            let f = m[r * n + col];
            for c in 0..n {
                let (mv, iv) = (m[col * n + c], inv[col * n + c]);
                m[r * n + c] -= f * mv;
                inv[r * n + c] -= f * iv;
            }
        }
    }
    Ok(inv)
}

impl Groupoid for MatrixLieGroup {
    fn name(&self) -> String {
        self.name.clone()
    }
    fn base_dim(&self) -> usize {
        0
    }
    fn rank(&self) -> usize {
        self.basis.len()
    }
    fn arrow_dim(&self) -> usize {
        self.size * self.size
    }

    fn unit(&self, _m: &[Jet3]) -> Vec<Jet3> {
        let n = self.size;
        (0..n * n)
            .map(|r| Jet3::constant(if r / n == r % n { 1.0 } else { 0.0 }))
            .collect()
    }

    fn compose(&self, g1: &[f64], g2: &[f64]) -> Result<Vec<f64>> {
        Ok(self.to_arrow(&(self.from_arrow(g1) * self.from_arrow(g2))))
    }

    fn inverse(&self, g: &[Jet3]) -> Result<Vec<Jet3>> {
        jets::check_dim(self.arrow_dim(), g.len())?;
        jet_inverse(g, self.size)
    }

    fn invariant_field(&self, side: Side, x: &Section, g: &[Jet3]) -> Result<Vec<Jet3>> {
        let comps = x.eval(&[])?;
        let n = self.size;
        // Sections over a point are constant; only their values enter.
        let xm = self.algebra_element(&comps.iter().map(Jet3::value).collect::<Vec<_>>());
        let nonconst = comps.iter().any(|c| c.coeffs()[1..].iter().any(|&v| v != 0.0));
        if nonconst {
            let mut out = vec![Jet3::default(); n * n];
            for (a, c) in comps.iter().enumerate() {
                let term = self.jet_matrix_mul(g, &self.basis[a], side == Side::Left);
                for (o, t) in out.iter_mut().zip(term) {
                    *o += t * *c;
                }
            }
            return Ok(out);
        }
        Ok(self.jet_matrix_mul(g, &xm, side == Side::Left))
    }

    fn anchor_matrix(&self) -> DMatrix<f64> {
        DMatrix::zeros(0, self.basis.len())
    }

    fn structure_constants(&self) -> Option<&Tensor3> {
        Some(&self.structure)
    }
}

/// A scalar function on arrows, expected to vanish to first order on units.
#[derive(Clone)]
pub struct ContrastFunction {
    backend: Arc<dyn Groupoid>,
    f: Arc<dyn SmoothFn>,
    dual: bool,
}

impl fmt::Debug for ContrastFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ContrastFunction")
            .field("backend", &self.backend.name())
            .field("dual", &self.dual)
            .finish_non_exhaustive()
    }
}

impl ContrastFunction {
    pub fn new(backend: Arc<dyn Groupoid>, f: Arc<dyn SmoothFn>) -> Result<Self> {
        if f.arity() != backend.arrow_dim() {
            return Err(GroupoidError::ArrowDimension {
                expected: backend.arrow_dim(),
                got: f.arity(),
            });
        }
        Ok(Self { backend, f, dual: false })
    }

    pub fn backend(&self) -> &dyn Groupoid {
        self.backend.as_ref()
    }

    pub fn backend_arc(&self) -> Arc<dyn Groupoid> {
        self.backend.clone()
    }

    pub fn is_dual(&self) -> bool {
        self.dual
    }

    pub fn base_dim(&self) -> usize {
        self.backend.base_dim()
    }

    pub fn rank(&self) -> usize {
        self.backend.rank()
    }

    /// `F* = F ∘ inverse`.
    pub fn dual(&self) -> Self {
        Self { backend: self.backend.clone(), f: self.f.clone(), dual: !self.dual }
    }

    pub fn eval_arrow(&self, g: &[Jet3]) -> Result<Jet3> {
        if self.dual {
            let inv = self.backend.inverse(g)?;
            Ok(self.f.eval(&inv)?)
        } else {
            Ok(self.f.eval(g)?)
        }
    }

    pub fn value(&self, g: &[f64]) -> Result<f64> {
        let g: Vec<Jet3> = g.iter().map(|&v| Jet3::constant(v)).collect();
        Ok(self.eval_arrow(&g)?.value())
    }

    pub fn frames(&self) -> Vec<Section> {
        Section::frames(self.base_dim(), self.rank())
    }
}

impl SmoothFn for ContrastFunction {
    fn arity(&self) -> usize {
        self.backend.arrow_dim()
    }
    fn eval(&self, x: &[Jet3]) -> jets::Result<Jet3> {
        self.eval_arrow(x).map_err(|e| match e {
            GroupoidError::Jet(j) => j,
            _ => JetError::Domain { op: "inverse", value: f64::NAN },
        })
    }
}

pub fn dual_contrast(f: &ContrastFunction) -> ContrastFunction {
    f.dual()
}

/// Push the unit over `base` along the invariant fields of `pattern`, the
/// `i`-th on seed `i`, and evaluate `F`. The base may carry further seeds.
pub(crate) fn invariant_jet(
    f: &ContrastFunction,
    base: &[Jet3],
    pattern: &[(&Section, Side)],
) -> Result<Jet3> {
    if pattern.is_empty() || pattern.len() > jets::SEEDS {
        return Err(GroupoidError::PatternLength(pattern.len()));
    }
    let backend = f.backend();
    let mut q = backend.unit(base);
    for (seed, (x, side)) in pattern.iter().enumerate() {
        let v = backend.invariant_field(*side, x, &q)?;
        for (qi, vi) in q.iter_mut().zip(v) {
            *qi += vi.times_seed(seed);
        }
    }
    let out = f.eval_arrow(&q)?;
    if !out.is_finite() {
        return Err(JetError::NonFinite { op: "output" }.into());
    }
    Ok(out)
}

/// Iterated invariant derivative `X₁X₂…F` at the unit over `m`, the first
/// pattern entry being the outermost operator.
pub fn lrz_derivative(f: &ContrastFunction, m: &[f64], pattern: &[(&Section, Side)]) -> Result<f64> {
    let base: Vec<Jet3> = m.iter().map(|&v| Jet3::constant(v)).collect();
    let mask = (1usize << pattern.len().min(jets::SEEDS)) - 1;
    Ok(invariant_jet(f, &base, pattern)?.coeff(mask))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContrastReport {
    pub samples: usize,
    pub tol: f64,
    pub max_value: f64,
    pub max_value_at: Option<Vec<f64>>,
    pub max_gradient: f64,
    pub max_gradient_at: Option<Vec<f64>>,
}

impl ContrastReport {
    pub fn passed(&self) -> bool {
        self.max_value <= self.tol && self.max_gradient <= self.tol
    }
}

/// Check `F|_M = 0` and `dF|_M = 0` at the given unit points. The
/// differential is probed along all left and right invariant frame fields,
/// which together span the arrow tangent space at units.
pub fn check_contrast(f: &ContrastFunction, points: &[Vec<f64>], tol: f64) -> Result<ContrastReport> {
    let frames = f.frames();
    let mut report = ContrastReport {
        samples: points.len(),
        tol,
        max_value: 0.0,
        max_value_at: None,
        max_gradient: 0.0,
        max_gradient_at: None,
    };
    for m in points {
        let value = f.value(&f.backend().unit_f64(m))?.abs();
        let mut sq = 0.0;
        for x in &frames {
            for side in [Side::Left, Side::Right] {
                sq += lrz_derivative(f, m, &[(x, side)])?.powi(2);
            }
        }
        let grad = sq.sqrt();
        if value >= report.max_value {
            report.max_value = value;
            report.max_value_at = Some(m.clone());
        }
        if grad >= report.max_gradient {
            report.max_gradient = grad;
            report.max_gradient_at = Some(m.clone());
        }
    }
    Ok(report)
}
