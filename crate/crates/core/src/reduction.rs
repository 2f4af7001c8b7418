//! Degenerate metrics: kernel detection, the Koszul and Lie-derivative
//! conditions, transversal structures, transport along leaves and reduction
//! to a quotient chart.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::groupoid::{lrz_derivative, ContrastFunction, GroupoidError, PairGroupoid, Section, Side};
use crate::jets::{self, FnScalar, Jet3, JetError, VectorFn};
use crate::linalg::{SpectralSplit, Tensor3};
use crate::sampling::Domain;
use crate::tensors::{self, TensorError};

pub const DEFAULT_RANK_TOL: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum ReductionError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("Koszul condition violated: residual {residual:e} exceeds {tol:e}")]
    NotKoszul { residual: f64, tol: f64 },
    #[error("kernel rank changed from {expected} to {found} at {at:?}")]
    RankChange { expected: usize, found: usize, at: Vec<f64> },
    #[error("path left the domain at {at:?}")]
    DomainExit { at: Vec<f64> },
    #[error("operation requires a pair groupoid backend")]
    NotPair,
    #[error("kernel direction {index} out of range for a kernel of rank {rank}")]
    KernelIndex { index: usize, rank: usize },
    #[error("quotient chart mismatch: {0}")]
    Chart(String),
    #[error("reduction preconditions failed: {0}")]
    Failed(Box<ReductionFailure>),
}

impl From<GroupoidError> for ReductionError {
    fn from(e: GroupoidError) -> Self {
        ReductionError::Tensor(e.into())
    }
}

impl From<JetError> for ReductionError {
    fn from(e: JetError) -> Self {
        ReductionError::Tensor(e.into())
    }
}

pub type Result<T> = std::result::Result<T, ReductionError>;

/// Spectral splitting of the metric at a point into kernel and complement.
#[derive(Debug, Clone)]
pub struct KernelFrame {
    pub base: Vec<f64>,
    /// Dimension of the kernel.
    pub rank: usize,
    /// Orthonormal kernel basis, `d × rank`.
    pub kernel: DMatrix<f64>,
    /// Orthonormal complement basis, `d × (d − rank)`.
    pub complement: DMatrix<f64>,
    pub metric: DMatrix<f64>,
    pub pseudo_inverse: DMatrix<f64>,
    pub eigenvalues: Vec<f64>,
    pub threshold: f64,
    pub indeterminate: bool,
}

impl KernelFrame {
    pub fn dim(&self) -> usize {
        self.metric.nrows()
    }

    pub fn metric_rank(&self) -> usize {
        self.dim() - self.rank
    }

    /// Ratio of extreme eigenvalue magnitudes on the complement.
    pub fn condition(&self) -> f64 {
        let kept = &self.eigenvalues[self.rank..];
        match (kept.first(), kept.last()) {
            (Some(lo), Some(hi)) => hi.abs() / lo.abs(),
            _ => f64::INFINITY,
        }
    }

    pub fn projector(&self) -> DMatrix<f64> {
        &self.kernel * self.kernel.transpose()
    }

    pub fn kernel_sections(&self, base_dim: usize) -> Vec<Section> {
        columns_as_sections(&self.kernel, base_dim)
    }

    pub fn complement_sections(&self, base_dim: usize) -> Vec<Section> {
        columns_as_sections(&self.complement, base_dim)
    }
}

fn columns_as_sections(m: &DMatrix<f64>, base_dim: usize) -> Vec<Section> {
    m.column_iter()
        .map(|c| Section::constant(base_dim, c.iter().copied().collect()))
        .collect()
}

pub fn kernel_at(f: &ContrastFunction, m: &[f64], rank_tol: f64) -> Result<KernelFrame> {
    let g = tensors::metric(f, m)?;
    let split = SpectralSplit::new(&g, rank_tol);
    Ok(KernelFrame {
        base: m.to_vec(),
        rank: split.null_count,
        kernel: split.null_basis(),
        complement: split.range_basis(),
        pseudo_inverse: split.pseudo_inverse(),
        metric: g,
        eigenvalues: split.eigenvalues.clone(),
        threshold: split.threshold,
        indeterminate: split.indeterminate,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankReport {
    /// Metric rank shared by all points, if any.
    pub rank: Option<usize>,
    pub ranks: Vec<usize>,
    /// Points whose rank differs from the most common one.
    pub violations: Vec<(Vec<f64>, usize)>,
    /// Points with an eigenvalue within a factor 10 of the threshold.
    pub indeterminate: Vec<Vec<f64>>,
}

pub fn check_constant_rank(f: &ContrastFunction, points: &[Vec<f64>], rank_tol: f64) -> Result<RankReport> {
    let frames: Vec<KernelFrame> = points.iter().map(|p| kernel_at(f, p, rank_tol)).collect::<Result<_>>()?;
    let ranks: Vec<usize> = frames.iter().map(KernelFrame::metric_rank).collect();
    let d = f.rank();
    let mut counts = vec![0usize; d + 1];
    for &r in &ranks {
        counts[r] += 1;
    }
    // Most common rank; ties go to the lower rank.
    let mode = (0..=d).max_by(|a, b| counts[*a].cmp(&counts[*b]).then(b.cmp(a))).unwrap_or(0);
    let violations: Vec<(Vec<f64>, usize)> = points
        .iter()
        .zip(&ranks)
        .filter(|(_, &r)| r != mode)
        .map(|(p, &r)| (p.clone(), r))
        .collect();
    let indeterminate = frames.iter().filter(|k| k.indeterminate).map(|k| k.base.clone()).collect();
    Ok(RankReport {
        rank: if violations.is_empty() && !points.is_empty() { Some(mode) } else { None },
        ranks,
        violations,
        indeterminate,
    })
}

/// `max |X^L Y^L Z^R F|` and the same for `F*`, over full-frame `X, Y` and
/// kernel `Z`.
pub fn koszul_residual(f: &ContrastFunction, m: &[f64], frame: &KernelFrame) -> Result<f64> {
    let fr = f.frames();
    let ker = frame.kernel_sections(f.base_dim());
    let dual = f.dual();
    let mut worst: f64 = 0.0;
    for x in &fr {
        for y in &fr {
            for z in &ker {
                let pattern = [(x, Side::Left), (y, Side::Left), (z, Side::Right)];
                worst = worst
                    .max(lrz_derivative(f, m, &pattern)?.abs())
                    .max(lrz_derivative(&dual, m, &pattern)?.abs());
            }
        }
    }
    Ok(worst)
}

/// Value and frame jacobian (`d × base_dim`) of a section at a point.
#[derive(Debug, Clone)]
struct SectionData {
    value: DVector<f64>,
    jacobian: DMatrix<f64>,
}

fn data_bracket(f: &ContrastFunction, a: &SectionData, b: &SectionData) -> DVector<f64> {
    let anchor = f.backend().anchor_matrix();
    let lie = &b.jacobian * (&anchor * &a.value) - &a.jacobian * (&anchor * &b.value);
    let alg = crate::groupoid::algebraic_bracket(f.backend(), a.value.as_slice(), b.value.as_slice());
    lie + DVector::from_vec(alg)
}

/// Derivatives `∂_i P` of the kernel projector along each base direction,
/// from `dP = −(g⁺ dg P + P dg g⁺)`.
fn projector_derivatives(f: &ContrastFunction, frame: &KernelFrame) -> Result<Vec<DMatrix<f64>>> {
    let n = f.base_dim();
    if n == 0 {
        return Ok(Vec::new());
    }
    if !f.backend().is_pair() {
        return Err(ReductionError::NotPair);
    }
    let dg = tensors::metric_derivatives(f, &frame.base)?;
    let p = frame.projector();
    let gp = &frame.pseudo_inverse;
    Ok(dg.iter().map(|d| -(gp * d * &p + &p * d * gp)).collect())
}

/// Smooth kernel section `U(x) = P(x) u` at the frame's base point.
fn kernel_section_data(frame: &KernelFrame, dp: &[DMatrix<f64>], u: &DVector<f64>) -> SectionData {
    let d = frame.dim();
    let mut jacobian = DMatrix::zeros(d, dp.len());
    for (i, dpi) in dp.iter().enumerate() {
        jacobian.set_column(i, &(dpi * u));
    }
    SectionData { value: frame.projector() * u, jacobian }
}

/// `max |(L_U g)(e_j, e_k)|` over kernel sections `U = P(x) u` through the
/// kernel basis and constant frame sections `e_j, e_k`.
pub fn lie_derivative_residual(f: &ContrastFunction, m: &[f64], frame: &KernelFrame) -> Result<f64> {
    if frame.rank == 0 {
        return Ok(0.0);
    }
    let d = f.rank();
    let dg = tensors::metric_derivatives(f, m)?;
    let dp = projector_derivatives(f, frame)?;
    let g = &frame.metric;
    let mut worst: f64 = 0.0;
    for u in frame.kernel.column_iter() {
        let u = kernel_section_data(frame, &dp, &u.into_owned());
        let along_u = dg.iter().zip(u.value.iter()).fold(DMatrix::zeros(d, d), |acc, (m, &c)| acc + m * c);
        // Column j holds [U, e_j].
        let mut br = DMatrix::zeros(d, d);
        for j in 0..d {
            let e = SectionData { value: DVector::from_fn(d, |i, _| if i == j { 1.0 } else { 0.0 }), jacobian: DMatrix::zeros(d, u.jacobian.ncols()) };
            br.set_column(j, &data_bracket(f, &u, &e));
        }
        let gb = g * &br;
        let lie = along_u - &gb - gb.transpose();
        worst = worst.max(crate::linalg::max_abs(&lie));
    }
    Ok(worst)
}

/// Largest complement component of brackets of smooth kernel sections.
pub fn kernel_closure_residual(f: &ContrastFunction, m: &[f64], rank_tol: f64) -> Result<f64> {
    let frame = kernel_at(f, m, rank_tol)?;
    if frame.rank < 2 {
        return Ok(0.0);
    }
    let dp = projector_derivatives(f, &frame)?;
    let fields: Vec<SectionData> = frame
        .kernel
        .column_iter()
        .map(|u| kernel_section_data(&frame, &dp, &u.into_owned()))
        .collect();
    let mut worst: f64 = 0.0;
    for a in 0..fields.len() {
        for b in a + 1..fields.len() {
            let v = data_bracket(f, &fields[a], &fields[b]);
            worst = worst.max((frame.complement.transpose() * v).norm());
        }
    }
    Ok(worst)
}

#[derive(Debug, Clone)]
pub struct TransversalMetric {
    pub matrix: DMatrix<f64>,
    pub condition: f64,
    /// Condition number above `1e8`.
    pub ill_conditioned: bool,
}

pub fn transversal_metric(frame: &KernelFrame) -> TransversalMetric {
    let c = &frame.complement;
    let matrix = c.transpose() * &frame.metric * c;
    let condition = if matrix.nrows() == 0 { 1.0 } else { SpectralSplit::new(&matrix, 0.0).condition() };
    TransversalMetric { matrix, condition, ill_conditioned: condition > 1e8 }
}

fn require_koszul(f: &ContrastFunction, m: &[f64], frame: &KernelFrame, tol: f64) -> Result<()> {
    let residual = koszul_residual(f, m, frame)?;
    if residual > tol {
        return Err(ReductionError::NotKoszul { residual, tol });
    }
    Ok(())
}

/// Lowered symbols of the connections of `F` and `F*` on complement
/// directions. Refused when the Koszul condition fails.
pub fn transversal_connections(
    f: &ContrastFunction,
    m: &[f64],
    frame: &KernelFrame,
    tol: f64,
) -> Result<(Tensor3, Tensor3)> {
    require_koszul(f, m, frame, tol)?;
    let (g, gs) = tensors::christoffel_pair(f, m)?;
    Ok((g.restrict(&frame.complement), gs.restrict(&frame.complement)))
}

fn solve_transversal(frame: &KernelFrame, rhs: DVector<f64>) -> Result<DVector<f64>> {
    let tm = transversal_metric(frame);
    tm.matrix
        .lu()
        .solve(&rhs)
        .ok_or(ReductionError::Tensor(TensorError::SingularMetric { condition: tm.condition }))
}

/// `D_X Y` in complement coordinates from `g^[F](D_X Y, Z) = X^L Y^L Z^R F`.
pub fn koszul_derivative(
    f: &ContrastFunction,
    m: &[f64],
    frame: &KernelFrame,
    x: &Section,
    y: &Section,
    tol: f64,
) -> Result<DVector<f64>> {
    require_koszul(f, m, frame, tol)?;
    let comp = frame.complement_sections(f.base_dim());
    let rhs = comp
        .iter()
        .map(|z| lrz_derivative(f, m, &[(x, Side::Left), (y, Side::Left), (z, Side::Right)]))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    solve_transversal(frame, DVector::from_vec(rhs))
}

/// `D_X Y` in complement coordinates from the six-term Koszul formula.
pub fn koszul_derivative_formula(
    f: &ContrastFunction,
    m: &[f64],
    frame: &KernelFrame,
    x: &Section,
    y: &Section,
    tol: f64,
) -> Result<DVector<f64>> {
    require_koszul(f, m, frame, tol)?;
    let comp = frame.complement_sections(f.base_dim());
    let rhs = comp
        .iter()
        .map(|z| Ok(0.5 * tensors::koszul_form(f, m, x, y, z)?))
        .collect::<Result<Vec<_>>>()?;
    solve_transversal(frame, DVector::from_vec(rhs))
}

#[derive(Debug, Clone)]
pub struct LeafTransport {
    pub start: Vec<f64>,
    pub end: Vec<f64>,
    /// Fundamental matrix of the linear part in the full frame.
    pub fundamental: DMatrix<f64>,
    /// Induced map from complement coordinates at `start` to those at `end`.
    pub map: DMatrix<f64>,
    /// `max |Mᵀ g^[F](end) M − g^[F](start)|`.
    pub invariance_residual: f64,
}

struct TransportRhs<'a> {
    f: &'a ContrastFunction,
    u: DVector<f64>,
    rank: usize,
    rank_tol: f64,
    domain: Option<&'a Domain>,
}

impl TransportRhs<'_> {
    fn eval(&self, x: &[f64], y: &DMatrix<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
        if let Some(dom) = self.domain {
            if !dom.contains(x) {
                return Err(ReductionError::DomainExit { at: x.to_vec() });
            }
        }
        let frame = kernel_at(self.f, x, self.rank_tol)?;
        if frame.rank != self.rank {
            return Err(ReductionError::RankChange { expected: self.rank, found: frame.rank, at: x.to_vec() });
        }
        let dp = projector_derivatives(self.f, &frame)?;
        let u = kernel_section_data(&frame, &dp, &self.u);
        let d = self.f.rank();
        // a[(k, i)] = [e_i, U]^k = ∂_i U^k on the pair groupoid.
        let a = u.jacobian.clone();
        debug_assert_eq!(a.shape(), (d, d));
        Ok((u.value, a * y))
    }
}

/// Transport complement classes along the flow of `U(x) = P(x) u` for
/// `time`, with fixed-step RK4.
pub fn leaf_transport_along(
    f: &ContrastFunction,
    domain: Option<&Domain>,
    m0: &[f64],
    u: &[f64],
    time: f64,
    steps: usize,
    rank_tol: f64,
) -> Result<LeafTransport> {
    if !f.backend().is_pair() {
        return Err(ReductionError::NotPair);
    }
    let d = f.rank();
    let start_frame = kernel_at(f, m0, rank_tol)?;
    let rhs = TransportRhs { f, u: DVector::from_column_slice(u), rank: start_frame.rank, rank_tol, domain };
    let steps = steps.max(1);
    let h = time / steps as f64;
    let mut x = DVector::from_column_slice(m0);
    let mut y = DMatrix::<f64>::identity(d, d);
    for _ in 0..steps {
        let (k1x, k1y) = rhs.eval(x.as_slice(), &y)?;
        let x2 = &x + &k1x * (h / 2.0);
        let (k2x, k2y) = rhs.eval(x2.as_slice(), &(&y + &k1y * (h / 2.0)))?;
        let x3 = &x + &k2x * (h / 2.0);
        let (k3x, k3y) = rhs.eval(x3.as_slice(), &(&y + &k2y * (h / 2.0)))?;
        let x4 = &x + &k3x * h;
        let (k4x, k4y) = rhs.eval(x4.as_slice(), &(&y + &k3y * h))?;
        x += (k1x + k2x * 2.0 + k3x * 2.0 + k4x) * (h / 6.0);
        y += (k1y + k2y * 2.0 + k3y * 2.0 + k4y) * (h / 6.0);
    }
    let end: Vec<f64> = x.iter().copied().collect();
    if let Some(dom) = domain {
        if !dom.contains(&end) {
            return Err(ReductionError::DomainExit { at: end });
        }
    }
    let end_frame = kernel_at(f, &end, rank_tol)?;
    if end_frame.rank != start_frame.rank {
        return Err(ReductionError::RankChange { expected: start_frame.rank, found: end_frame.rank, at: end });
    }
    let map = end_frame.complement.transpose() * &y * &start_frame.complement;
    let g0 = transversal_metric(&start_frame).matrix;
    let g1 = transversal_metric(&end_frame).matrix;
    let invariance_residual = crate::linalg::max_abs(&(map.transpose() * g1 * &map - g0));
    Ok(LeafTransport { start: m0.to_vec(), end, fundamental: y, map, invariance_residual })
}

/// [`leaf_transport_along`] the kernel basis vector `index` at `m0`.
pub fn leaf_transport(
    f: &ContrastFunction,
    domain: Option<&Domain>,
    m0: &[f64],
    index: usize,
    time: f64,
    steps: usize,
    rank_tol: f64,
) -> Result<LeafTransport> {
    let frame = kernel_at(f, m0, rank_tol)?;
    if index >= frame.rank {
        return Err(ReductionError::KernelIndex { index, rank: frame.rank });
    }
    let u: Vec<f64> = frame.kernel.column(index).iter().copied().collect();
    leaf_transport_along(f, domain, m0, &u, time, steps, rank_tol)
}

/// A chart on the leaf space: projection, a section of it, and jet-evaluable
/// generators of the fibres (vector fields on the base tangent to leaves).
#[derive(Clone)]
pub struct QuotientChart {
    pub name: String,
    pub quotient_dim: usize,
    pub projection: Arc<dyn VectorFn>,
    pub section: Arc<dyn VectorFn>,
    pub fiber_generators: Vec<Section>,
    pub quotient_domain: Domain,
}

impl fmt::Debug for QuotientChart {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("QuotientChart")
            .field("name", &self.name)
            .field("quotient_dim", &self.quotient_dim)
            .field("generators", &self.fiber_generators.len())
            .finish_non_exhaustive()
    }
}

impl QuotientChart {
    /// `max |π(σ(m₀)) − m₀|` over the given quotient points.
    pub fn section_defect(&self, points: &[Vec<f64>]) -> Result<f64> {
        let mut worst: f64 = 0.0;
        for p in points {
            let back = self.projection.eval_f64(&self.section.eval_f64(p)?)?;
            for (a, b) in back.iter().zip(p) {
                worst = worst.max((a - b).abs());
            }
        }
        Ok(worst)
    }

    /// Section moved along the fibres by the flow of `Σ w_g G_g` for `time`.
    pub fn shifted_section(&self, weights: Vec<f64>, time: f64, steps: usize) -> Arc<dyn VectorFn> {
        let section = self.section.clone();
        let gens = self.fiber_generators.clone();
        let out_dim = section.out_dim();
        Arc::new(jets::FnVector::new(self.quotient_dim, out_dim, move |a| {
            let p = section.eval(a)?;
            flow_jets(&gens, &weights, p, time, steps)
        }))
    }
}

fn flow_jets(gens: &[Section], weights: &[f64], mut x: Vec<Jet3>, time: f64, steps: usize) -> jets::Result<Vec<Jet3>> {
    let field = |p: &[Jet3]| -> jets::Result<Vec<Jet3>> {
        let mut v = vec![Jet3::default(); p.len()];
        for (g, &w) in gens.iter().zip(weights) {
            if w != 0.0 {
                for (o, c) in v.iter_mut().zip(g.eval(p)?) {
                    *o += c * w;
                }
            }
        }
        Ok(v)
    };
    let h = time / steps as f64;
    let axpy = |x: &[Jet3], k: &[Jet3], s: f64| -> Vec<Jet3> { x.iter().zip(k).map(|(a, b)| *a + *b * s).collect() };
    for _ in 0..steps {
        let k1 = field(&x)?;
        let k2 = field(&axpy(&x, &k1, h / 2.0))?;
        let k3 = field(&axpy(&x, &k2, h / 2.0))?;
        let k4 = field(&axpy(&x, &k3, h))?;
        for i in 0..x.len() {
            x[i] += (k1[i] + k2[i] * 2.0 + k3[i] * 2.0 + k4[i]) * (h / 6.0);
        }
    }
    Ok(x)
}

/// `F₀(a, b) = F(σ(a), σ(b))` on the pair groupoid of the quotient chart.
pub fn pulled_back(f: &ContrastFunction, section: Arc<dyn VectorFn>, quotient_dim: usize) -> Result<ContrastFunction> {
    if !f.backend().is_pair() {
        return Err(ReductionError::NotPair);
    }
    if section.out_dim() != f.base_dim() || section.arity() != quotient_dim {
        return Err(ReductionError::Chart(format!(
            "section maps R^{} to R^{}, expected R^{} to R^{}",
            section.arity(),
            section.out_dim(),
            quotient_dim,
            f.base_dim()
        )));
    }
    let inner = f.clone();
    let n0 = quotient_dim;
    let pulled = FnScalar::new(2 * n0, move |x| {
        let mut arrow = section.eval(&x[..n0])?;
        arrow.extend(section.eval(&x[n0..])?);
        inner.eval_arrow(&arrow).map_err(|e| match e {
            GroupoidError::Jet(j) => j,
            _ => JetError::Domain { op: "pull-back", value: f64::NAN },
        })
    });
    let out = ContrastFunction::new(Arc::new(PairGroupoid::new(n0)), Arc::new(pulled))?;
    // F₀ built from F* must be the dual of F₀ built from F.
    Ok(out)
}

#[derive(Debug, Clone, Copy)]
pub struct ReduceOptions {
    pub tol: f64,
    /// Tolerance for the RK4 leaf-transport invariance check.
    pub transport_tol: f64,
    pub rank_tol: f64,
    pub fiber_checks: usize,
    pub steps_per_unit: usize,
}

impl Default for ReduceOptions {
    fn default() -> Self {
        Self { tol: 1e-8, transport_tol: 1e-6, rank_tol: DEFAULT_RANK_TOL, fiber_checks: 3, steps_per_unit: 100 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FailureReason {
    /// The kernel rank does not match the chart's fibre dimension.
    RankMismatch,
    NotKoszul,
    /// Reduced data depends on the representative, or transport does not
    /// preserve the transversal metric.
    NonFoliated,
}

impl fmt::Display for FailureReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FailureReason::RankMismatch => "rank-mismatch",
            FailureReason::NotKoszul => "not-koszul",
            FailureReason::NonFoliated => "non-foliated",
        })
    }
}

/// Diagnostics gathered along a fibre.
#[derive(Debug, Clone)]
pub struct FiberDiagnostics {
    pub kernel_rank: usize,
    pub koszul_residual: f64,
    pub lie_residual: f64,
    pub representative_residual: f64,
    pub transport_residual: f64,
    pub fiber_points: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct ReductionFailure {
    pub reasons: Vec<FailureReason>,
    pub diagnostics: FiberDiagnostics,
}

impl fmt::Display for ReductionFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let reasons: Vec<String> = self.reasons.iter().map(|r| r.to_string()).collect();
        write!(
            f,
            "{} (koszul {:e}, lie {:e}, representative {:e}, transport {:e})",
            reasons.join(", "),
            self.diagnostics.koszul_residual,
            self.diagnostics.lie_residual,
            self.diagnostics.representative_residual,
            self.diagnostics.transport_residual
        )
    }
}

/// Reduced structure at one quotient point.
#[derive(Debug, Clone)]
pub struct ReducedStructure {
    pub point: Vec<f64>,
    pub representative: Vec<f64>,
    pub metric: DMatrix<f64>,
    pub gamma: Tensor3,
    pub gamma_dual: Tensor3,
    pub condition: f64,
    pub diagnostics: FiberDiagnostics,
}

fn fiber_weights(k: usize, ngen: usize) -> (Vec<f64>, f64) {
    let weights = (0..ngen).map(|g| if g == k % ngen { 1.0 } else { 0.5 }).collect();
    let time = 0.4 * (k + 1) as f64 * if k.is_multiple_of(2) { 1.0 } else { -1.0 };
    (weights, time)
}

fn reduced_data(f0: &ContrastFunction, p: &[f64]) -> Result<(DMatrix<f64>, Tensor3, Tensor3)> {
    let g = tensors::metric(f0, p)?;
    let (a, b) = tensors::christoffel_pair(f0, p)?;
    Ok((g, a, b))
}

/// Reduce `F` to the quotient chart at `m0`, checking the Koszul condition
/// and representative independence along the fibre.
pub fn reduce(f: &ContrastFunction, chart: &QuotientChart, m0: &[f64], opts: &ReduceOptions) -> Result<ReducedStructure> {
    let rep = chart.section.eval_f64(m0)?;
    let frame = kernel_at(f, &rep, opts.rank_tol)?;
    let expected_kernel = f.rank() - chart.quotient_dim;

    let mut fiber_points = vec![rep.clone()];
    let mut koszul = koszul_residual(f, &rep, &frame)?;
    let mut lie = lie_derivative_residual(f, &rep, &frame)?;
    let mut kernel_ok = frame.rank == expected_kernel;

    let f0 = pulled_back(f, chart.section.clone(), chart.quotient_dim)?;
    let (metric, gamma, gamma_dual) = reduced_data(&f0, m0)?;

    let mut representative: f64 = 0.0;
    let mut transport: f64 = 0.0;
    let ngen = chart.fiber_generators.len().max(1);
    for k in 0..opts.fiber_checks {
        let (weights, time) = fiber_weights(k, ngen);
        let steps = ((time.abs() * opts.steps_per_unit as f64).ceil() as usize).max(1);
        let shifted = chart.shifted_section(weights, time, steps);
        let p = shifted.eval_f64(m0)?;
        let fk = kernel_at(f, &p, opts.rank_tol)?;
        kernel_ok &= fk.rank == expected_kernel;
        koszul = koszul.max(koszul_residual(f, &p, &fk)?);
        lie = lie.max(lie_derivative_residual(f, &p, &fk)?);
        let fk0 = pulled_back(f, shifted, chart.quotient_dim)?;
        let (g, a, b) = reduced_data(&fk0, m0)?;
        representative = representative
            .max(crate::linalg::max_abs(&(g - &metric)))
            .max(a.max_abs_diff(&gamma))
            .max(b.max_abs_diff(&gamma_dual));
        fiber_points.push(p);
        if frame.rank > 0 && kernel_ok {
            let idx = k % frame.rank;
            let lt = leaf_transport(f, None, &rep, idx, time, steps, opts.rank_tol)?;
            transport = transport.max(lt.invariance_residual);
        }
    }

    let diagnostics = FiberDiagnostics {
        kernel_rank: frame.rank,
        koszul_residual: koszul,
        lie_residual: lie,
        representative_residual: representative,
        transport_residual: transport,
        fiber_points,
    };
    let mut reasons = Vec::new();
    if !kernel_ok {
        reasons.push(FailureReason::RankMismatch);
    }
    if koszul > opts.tol {
        reasons.push(FailureReason::NotKoszul);
    }
    if representative > opts.tol || transport > opts.transport_tol {
        reasons.push(FailureReason::NonFoliated);
    }
    if !reasons.is_empty() {
        return Err(ReductionError::Failed(Box::new(ReductionFailure { reasons, diagnostics })));
    }
    let condition = SpectralSplit::new(&metric, 0.0).condition();
    Ok(ReducedStructure {
        point: m0.to_vec(),
        representative: rep,
        metric,
        gamma,
        gamma_dual,
        condition,
        diagnostics,
    })
}
