//! P1 finite element operators on a [`Mesh`].
//!
//! The bilinear form is
//!
//! ```text
//! a(u, v) = ∫ (D ∇u)·∇v + (q·∇u) v dx + ∫_{Robin} α₀ u v ds + c₀ ∫ u v dx
//! ```
//!
//! where the last term is the Gårding shift moved from the drift into the
//! operator. Coefficients are constant per element (sampled at the centroid),
//! so all element matrices have closed forms.

use std::fmt;
use std::sync::Arc;

use crate::linalg::{CsrMatrix, LinearSolver, Method, SolverOptions, TripletBuilder};
use crate::mesh::{BoundaryKind, Mesh, NodeTag};
use crate::{Error, Point, Result};

pub type Tensor2 = [[f64; 2]; 2];
pub type Vector2 = [f64; 2];

pub const IDENTITY: Tensor2 = [[1.0, 0.0], [0.0, 1.0]];

/// Diffusion tensor `D`, constant or one tensor per element.
#[derive(Debug, Clone, PartialEq)]
pub enum DiffusionTensor {
    Constant(Tensor2),
    PerElement(Vec<Tensor2>),
}

impl DiffusionTensor {
    pub fn isotropic(d: f64) -> Self {
        DiffusionTensor::Constant([[d, 0.0], [0.0, d]])
    }

    pub fn on_element(&self, e: usize) -> Tensor2 {
        match self {
            DiffusionTensor::Constant(d) => *d,
            DiffusionTensor::PerElement(ds) => ds[e],
        }
    }
}

/// Smallest eigenvalue of the symmetric part of `d`.
pub fn min_symmetric_eigenvalue(d: &Tensor2) -> f64 {
    let a = d[0][0];
    let c = d[1][1];
    let b = 0.5 * (d[0][1] + d[1][0]);
    0.5 * (a + c) - (0.25 * (a - c) * (a - c) + b * b).sqrt()
}

/// Advection velocity `q`.
#[derive(Clone)]
pub enum Velocity {
    Zero,
    Constant(Vector2),
    PerElement(Vec<Vector2>),
    /// Sampled at element centroids.
    Field(Arc<dyn Fn(Point) -> Vector2 + Send + Sync>),
}

impl fmt::Debug for Velocity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Velocity::Zero => write!(f, "Zero"),
            Velocity::Constant(q) => f.debug_tuple("Constant").field(q).finish(),
            Velocity::PerElement(qs) => write!(f, "PerElement({} elements)", qs.len()),
            Velocity::Field(_) => write!(f, "Field(..)"),
        }
    }
}

impl Velocity {
    pub fn on_element(&self, mesh: &Mesh, e: usize) -> Vector2 {
        match self {
            Velocity::Zero => [0.0, 0.0],
            Velocity::Constant(q) => *q,
            Velocity::PerElement(qs) => qs[e],
            Velocity::Field(f) => f(mesh.centroid(e)),
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Velocity::Zero)
    }
}

type DriftFn = dyn Fn(Point, f64) -> f64 + Send + Sync;

/// Drift `f(x, u)` of the Nemytskii operator `F(v)(x) = f(x, v(x))`.
#[derive(Clone)]
pub struct Drift(Option<Arc<DriftFn>>);

impl fmt::Debug for Drift {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(if self.0.is_some() { "Drift(..)" } else { "Drift(zero)" })
    }
}

impl Drift {
    pub fn zero() -> Self {
        Drift(None)
    }

    pub fn new(f: impl Fn(Point, f64) -> f64 + Send + Sync + 'static) -> Self {
        Drift(Some(Arc::new(f)))
    }

    /// `f(x, u) = -|u - center|`.
    pub fn negative_abs(center: f64) -> Self {
        Drift::new(move |_, u| -(u - center).abs())
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_none()
    }

    pub fn eval(&self, x: Point, u: f64) -> f64 {
        self.0.as_ref().map_or(0.0, |f| f(x, u))
    }
}

type DiffusionFn = dyn Fn(Point, f64) -> f64 + Send + Sync;
type AmplitudeFn = dyn Fn(f64) -> f64 + Send + Sync;

/// How the Wiener increment enters the equation.
#[derive(Clone)]
pub enum NoiseTerm {
    None,
    /// `(B(v)w)(x) = b(x, v(x)) w(x)`.
    Multiplicative(Arc<DiffusionFn>),
    /// `B = φ(t)`, independent of the state.
    Additive(Arc<AmplitudeFn>),
}

impl fmt::Debug for NoiseTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NoiseTerm::None => "None",
            NoiseTerm::Multiplicative(_) => "Multiplicative(..)",
            NoiseTerm::Additive(_) => "Additive(..)",
        })
    }
}

impl NoiseTerm {
    /// `b(x, u) = slope * u`.
    pub fn linear_multiplicative(slope: f64) -> Self {
        NoiseTerm::Multiplicative(Arc::new(move |_, u| slope * u))
    }

    pub fn multiplicative(b: impl Fn(Point, f64) -> f64 + Send + Sync + 'static) -> Self {
        NoiseTerm::Multiplicative(Arc::new(b))
    }

    /// `φ(t) = amplitude`.
    pub fn constant_additive(amplitude: f64) -> Self {
        NoiseTerm::Additive(Arc::new(move |_| amplitude))
    }

    pub fn additive(phi: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        NoiseTerm::Additive(Arc::new(phi))
    }

    pub fn is_none(&self) -> bool {
        matches!(self, NoiseTerm::None)
    }
}

/// Scalar function on the domain, used for boundary and initial data.
#[derive(Clone)]
pub struct ScalarField(Arc<dyn Fn(Point) -> f64 + Send + Sync>);

impl fmt::Debug for ScalarField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("ScalarField(..)")
    }
}

impl ScalarField {
    pub fn new(f: impl Fn(Point) -> f64 + Send + Sync + 'static) -> Self {
        ScalarField(Arc::new(f))
    }

    pub fn constant(c: f64) -> Self {
        ScalarField::new(move |_| c)
    }

    pub fn eval(&self, x: Point) -> f64 {
        (self.0)(x)
    }
}

/// Coefficients and nonlinearities of the SPDE.
#[derive(Debug, Clone)]
pub struct ProblemSpec {
    pub diffusion: DiffusionTensor,
    pub velocity: Velocity,
    pub drift: Drift,
    pub noise: NoiseTerm,
    /// Data `g_D` on Dirichlet-tagged nodes.
    pub dirichlet_data: ScalarField,
    /// Robin coefficient `α₀` on Robin-tagged edges.
    pub robin_alpha: f64,
    /// Gårding shift `c₀`; `None` uses [`default_garding_shift`].
    pub shift: Option<f64>,
    /// Streamline artificial diffusion on elements with cell Péclet number > 1.
    pub upwind: bool,
}

impl Default for ProblemSpec {
    /// Heat equation: `D = I`, no advection, drift or noise, zero boundary data.
    fn default() -> Self {
        Self {
            diffusion: DiffusionTensor::Constant(IDENTITY),
            velocity: Velocity::Zero,
            drift: Drift::zero(),
            noise: NoiseTerm::None,
            dirichlet_data: ScalarField::constant(0.0),
            robin_alpha: 0.0,
            shift: None,
            upwind: false,
        }
    }
}

impl ProblemSpec {
    /// Uniform ellipticity constant `c₁` over the mesh.
    pub fn ellipticity(&self, mesh: &Mesh) -> Result<f64> {
        let c1 = (0..mesh.num_elements())
            .map(|e| min_symmetric_eigenvalue(&self.diffusion.on_element(e)))
            .fold(f64::INFINITY, f64::min);
        if !(c1 > 0.0 && c1.is_finite()) {
            return Err(Error::invalid(format!("diffusion tensor is not uniformly elliptic (c1 = {c1})")));
        }
        Ok(c1)
    }

    pub fn validate(&self, mesh: &Mesh) -> Result<()> {
        if let DiffusionTensor::PerElement(ds) = &self.diffusion {
            if ds.len() != mesh.num_elements() {
                return Err(Error::DimensionMismatch { expected: mesh.num_elements(), got: ds.len() });
            }
        }
        if let Velocity::PerElement(qs) = &self.velocity {
            if qs.len() != mesh.num_elements() {
                return Err(Error::DimensionMismatch { expected: mesh.num_elements(), got: qs.len() });
            }
        }
        if !self.robin_alpha.is_finite() {
            return Err(Error::invalid("robin_alpha must be finite"));
        }
        if let Some(c0) = self.shift {
            if !(c0 >= 0.0 && c0.is_finite()) {
                return Err(Error::invalid(format!("shift must be finite and nonnegative, got {c0}")));
            }
        }
        self.ellipticity(mesh).map(|_| ())
    }
}

/// `c₀ = max_T |q_T|² / (2 c₁)`: with it, Young's inequality turns the
/// advection term into at most half the diffusion plus `c₀ ||v||²`.
pub fn default_garding_shift(mesh: &Mesh, spec: &ProblemSpec) -> Result<f64> {
    let c1 = spec.ellipticity(mesh)?;
    if spec.velocity.is_zero() {
        return Ok(0.0);
    }
    let q2 = (0..mesh.num_elements())
        .map(|e| {
            let q = spec.velocity.on_element(mesh, e);
            q[0] * q[0] + q[1] * q[1]
        })
        .fold(0.0, f64::max);
    Ok(q2 / (2.0 * c1))
}

/// Area and barycentric gradients of a triangle.
pub fn p1_gradients(v: &[Point; 3]) -> (f64, [Vector2; 3]) {
    let area = crate::mesh::triangle_signed_area(v);
    let two_a = 2.0 * area;
    let mut g = [[0.0; 2]; 3];
    for i in 0..3 {
        let j = (i + 1) % 3;
        let k = (i + 2) % 3;
        g[i] = [(v[j][1] - v[k][1]) / two_a, (v[k][0] - v[j][0]) / two_a];
    }
    (area, g)
}

pub fn local_mass(v: &[Point; 3]) -> [[f64; 3]; 3] {
    let area = crate::mesh::triangle_signed_area(v);
    let mut m = [[area / 12.0; 3]; 3];
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = area / 6.0;
    }
    m
}

/// `K_ij = ∫ (D ∇φ_j)·∇φ_i`.
pub fn local_stiffness(v: &[Point; 3], d: &Tensor2) -> [[f64; 3]; 3] {
    let (area, g) = p1_gradients(v);
    let mut k = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            let dg = [d[0][0] * g[j][0] + d[0][1] * g[j][1], d[1][0] * g[j][0] + d[1][1] * g[j][1]];
            k[i][j] = area * (dg[0] * g[i][0] + dg[1] * g[i][1]);
        }
    }
    k
}

/// `C_ij = ∫ (q·∇φ_j) φ_i = (q·∇φ_j) |T| / 3`.
pub fn local_advection(v: &[Point; 3], q: Vector2) -> [[f64; 3]; 3] {
    let (area, g) = p1_gradients(v);
    let mut c = [[0.0; 3]; 3];
    for row in c.iter_mut() {
        for (j, cij) in row.iter_mut().enumerate() {
            *cij = (q[0] * g[j][0] + q[1] * g[j][1]) * area / 3.0;
        }
    }
    c
}

/// `δ ∫ (q·∇φ_j)(q·∇φ_i)`.
pub fn local_streamline_diffusion(v: &[Point; 3], q: Vector2, delta: f64) -> [[f64; 3]; 3] {
    let (area, g) = p1_gradients(v);
    let qg: Vec<f64> = g.iter().map(|gi| q[0] * gi[0] + q[1] * gi[1]).collect();
    let mut s = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            s[i][j] = delta * area * qg[i] * qg[j];
        }
    }
    s
}

/// Streamline diffusion weight `h/(2|q|)`, or zero when the cell Péclet
/// number `|q| h / (2 c₁)` does not exceed one.
pub fn upwind_delta(h: f64, q: Vector2, c1: f64) -> f64 {
    let qn = q[0].hypot(q[1]);
    if qn == 0.0 || qn * h / (2.0 * c1) <= 1.0 {
        0.0
    } else {
        h / (2.0 * qn)
    }
}

fn scatter(b: &mut TripletBuilder, nodes: &[usize; 3], local: &[[f64; 3]; 3]) {
    for i in 0..3 {
        for j in 0..3 {
            b.add(nodes[i], nodes[j], local[i][j]);
        }
    }
}

fn assemble_elementwise(mesh: &Mesh, mut local: impl FnMut(usize, &[Point; 3]) -> [[f64; 3]; 3]) -> CsrMatrix {
    let n = mesh.num_nodes();
    let mut b = TripletBuilder::with_capacity(n, n, 9 * mesh.num_elements());
    for (e, nodes) in mesh.elements().iter().enumerate() {
        let lm = local(e, &mesh.vertices(e));
        scatter(&mut b, nodes, &lm);
    }
    b.build()
}

pub fn assemble_mass(mesh: &Mesh) -> CsrMatrix {
    assemble_elementwise(mesh, |_, v| local_mass(v))
}

pub fn assemble_diffusion(mesh: &Mesh, d: &DiffusionTensor) -> CsrMatrix {
    assemble_elementwise(mesh, |e, v| local_stiffness(v, &d.on_element(e)))
}

pub fn assemble_advection(mesh: &Mesh, q: &Velocity) -> CsrMatrix {
    assemble_elementwise(mesh, |e, v| local_advection(v, q.on_element(mesh, e)))
}

pub fn assemble_streamline_diffusion(mesh: &Mesh, spec: &ProblemSpec) -> CsrMatrix {
    assemble_elementwise(mesh, |e, v| {
        let q = spec.velocity.on_element(mesh, e);
        let c1 = min_symmetric_eigenvalue(&spec.diffusion.on_element(e));
        let delta = upwind_delta(mesh.element_diameter(e), q, c1);
        local_streamline_diffusion(v, q, delta)
    })
}

/// `∫_{Robin edges} α₀ u v ds`, exact for P1 traces.
pub fn assemble_robin(mesh: &Mesh, alpha: f64) -> CsrMatrix {
    let n = mesh.num_nodes();
    let mut b = TripletBuilder::new(n, n);
    for edge in mesh.boundary_edges().iter().filter(|e| e.kind == BoundaryKind::Robin) {
        let [a, c] = edge.nodes;
        let (pa, pc) = (mesh.node(a), mesh.node(c));
        let len = (pa[0] - pc[0]).hypot(pa[1] - pc[1]);
        let diag = alpha * len / 3.0;
        let off = alpha * len / 6.0;
        b.add(a, a, diag);
        b.add(c, c, diag);
        b.add(a, c, off);
        b.add(c, a, off);
    }
    b.build()
}

/// `∫ φ_i`, the weights of the nodal (vertex) quadrature rule.
pub fn nodal_weights(mesh: &Mesh) -> Vec<f64> {
    let mut w = vec![0.0; mesh.num_nodes()];
    for (e, nodes) in mesh.elements().iter().enumerate() {
        let third = mesh.signed_area(e) / 3.0;
        for &k in nodes {
            w[k] += third;
        }
    }
    w
}

/// Assembled operators of the semi-discrete problem.
#[derive(Debug, Clone)]
pub struct OperatorSet {
    /// Consistent mass matrix `⟨φ_j, φ_i⟩`.
    pub mass: CsrMatrix,
    /// Matrix of the shifted bilinear form `a(φ_j, φ_i)`.
    pub stiffness: CsrMatrix,
    /// Nodal quadrature weights `∫ φ_i`.
    pub weights: Vec<f64>,
    pub dirichlet_nodes: Vec<usize>,
    /// `g_D` at each entry of `dirichlet_nodes`.
    pub dirichlet_values: Vec<f64>,
    pub is_dirichlet: Vec<bool>,
    /// Gårding shift `c₀` included in `stiffness`.
    pub shift: f64,
    /// Ellipticity constant `c₁` of the diffusion tensor.
    pub ellipticity: f64,
}

impl OperatorSet {
    pub fn num_nodes(&self) -> usize {
        self.weights.len()
    }

    pub fn free_nodes(&self) -> Vec<usize> {
        (0..self.num_nodes()).filter(|&k| !self.is_dirichlet[k]).collect()
    }

    /// Overwrites Dirichlet entries of `u` with `g_D`.
    pub fn impose_dirichlet(&self, u: &mut [f64]) {
        for (&k, &g) in self.dirichlet_nodes.iter().zip(&self.dirichlet_values) {
            u[k] = g;
        }
    }
}

pub fn assemble_operators(mesh: &Mesh, spec: &ProblemSpec) -> Result<OperatorSet> {
    spec.validate(mesh)?;
    for (k, tag) in mesh.tags().iter().enumerate() {
        let (ix, iy) = mesh.grid_position(k);
        let on_boundary = ix == 0 || iy == 0 || ix == mesh.nx() || iy == mesh.ny();
        if on_boundary == (*tag == NodeTag::Interior) {
            return Err(Error::Mesh(format!("node {k} has tag {} inconsistent with its position", tag.as_str())));
        }
    }
    let ellipticity = spec.ellipticity(mesh)?;
    let shift = match spec.shift {
        Some(c0) => c0,
        None => default_garding_shift(mesh, spec)?,
    };

    let mass = assemble_mass(mesh);
    let mut stiffness = assemble_diffusion(mesh, &spec.diffusion);
    if !spec.velocity.is_zero() {
        stiffness = stiffness.linear_combination(1.0, &assemble_advection(mesh, &spec.velocity), 1.0)?;
        if spec.upwind {
            stiffness = stiffness.linear_combination(1.0, &assemble_streamline_diffusion(mesh, spec), 1.0)?;
        }
    }
    if spec.robin_alpha != 0.0 && mesh.boundary_edges().iter().any(|e| e.kind == BoundaryKind::Robin) {
        stiffness = stiffness.linear_combination(1.0, &assemble_robin(mesh, spec.robin_alpha), 1.0)?;
    }
    if shift != 0.0 {
        stiffness = stiffness.linear_combination(1.0, &mass, shift)?;
    }

    let dirichlet_nodes = mesh.dirichlet_nodes();
    let dirichlet_values = dirichlet_nodes.iter().map(|&k| spec.dirichlet_data.eval(mesh.node(k))).collect();
    let mut is_dirichlet = vec![false; mesh.num_nodes()];
    for &k in &dirichlet_nodes {
        is_dirichlet[k] = true;
    }

    Ok(OperatorSet {
        mass,
        stiffness,
        weights: nodal_weights(mesh),
        dirichlet_nodes,
        dirichlet_values,
        is_dirichlet,
        shift,
        ellipticity,
    })
}

/// Load `b_i = ∫ g φ_i` by the edge-midpoint rule, exact when `g` is linear on
/// each element.
pub fn midpoint_load(mesh: &Mesh, g: &ScalarField) -> Vec<f64> {
    let mut b = vec![0.0; mesh.num_nodes()];
    for (e, nodes) in mesh.elements().iter().enumerate() {
        let v = mesh.vertices(e);
        let sixth = mesh.signed_area(e) / 6.0;
        let mid = |i: usize, j: usize| g.eval([0.5 * (v[i][0] + v[j][0]), 0.5 * (v[i][1] + v[j][1])]);
        let (m01, m12, m20) = (mid(0, 1), mid(1, 2), mid(2, 0));
        b[nodes[0]] += sixth * (m01 + m20);
        b[nodes[1]] += sixth * (m01 + m12);
        b[nodes[2]] += sixth * (m12 + m20);
    }
    b
}

/// Load `b_i = w_i g(x_i)` by the nodal rule, given nodal samples of `g`.
pub fn nodal_load(weights: &[f64], values: &[f64]) -> Vec<f64> {
    weights.iter().zip(values).map(|(w, g)| w * g).collect()
}

/// L2 projection onto the P1 space: solves `M u = b` with `b_i = ∫ g φ_i`.
pub fn project_l2(mesh: &Mesh, mass: &CsrMatrix, g: &ScalarField, opts: &SolverOptions) -> Result<Vec<f64>> {
    let b = midpoint_load(mesh, g);
    LinearSolver::new(mass.clone(), Method::Spd, *opts)?.solve(&b, None)
}

/// A system matrix with Dirichlet rows replaced by identity rows and the
/// couplings to Dirichlet columns removed. The removed couplings times `g_D`
/// are kept as a lifting vector subtracted from each right-hand side.
#[derive(Debug, Clone)]
pub struct ReducedSystem {
    pub matrix: CsrMatrix,
    lift: Vec<f64>,
    dirichlet: Vec<(usize, f64)>,
}

impl ReducedSystem {
    pub fn new(ops: &OperatorSet, system: &CsrMatrix) -> Result<Self> {
        let n = system.n_rows();
        if !system.is_square() || n != ops.num_nodes() {
            return Err(Error::DimensionMismatch { expected: ops.num_nodes(), got: n });
        }
        let mut g = vec![0.0; n];
        for (&k, &v) in ops.dirichlet_nodes.iter().zip(&ops.dirichlet_values) {
            if k >= n {
                return Err(Error::invalid(format!("dirichlet node {k} out of range")));
            }
            g[k] = v;
        }
        let mut lift = vec![0.0; n];
        let mut b = TripletBuilder::with_capacity(n, n, system.nnz());
        for i in 0..n {
            if ops.is_dirichlet[i] {
                b.add(i, i, 1.0);
                continue;
            }
            for (j, v) in system.row(i) {
                if ops.is_dirichlet[j] {
                    lift[i] += v * g[j];
                } else {
                    b.add(i, j, v);
                }
            }
        }
        let dirichlet = ops.dirichlet_nodes.iter().copied().zip(ops.dirichlet_values.iter().copied()).collect();
        Ok(Self { matrix: b.build(), lift, dirichlet })
    }

    pub fn reduce_rhs(&self, rhs: &mut [f64]) {
        for (r, l) in rhs.iter_mut().zip(&self.lift) {
            *r -= l;
        }
        for &(k, g) in &self.dirichlet {
            rhs[k] = g;
        }
    }
}

/// Applies the Dirichlet conditions of `ops` to `system x = rhs`.
pub fn apply_dirichlet(ops: &OperatorSet, system: &CsrMatrix, rhs: &[f64]) -> Result<(CsrMatrix, Vec<f64>)> {
    if rhs.len() != system.n_rows() {
        return Err(Error::DimensionMismatch { expected: system.n_rows(), got: rhs.len() });
    }
    let reduced = ReducedSystem::new(ops, system)?;
    let mut b = rhs.to_vec();
    reduced.reduce_rhs(&mut b);
    Ok((reduced.matrix, b))
}

/// `sqrt(uᵀ M u)`.
pub fn l2_norm(mass: &CsrMatrix, u: &[f64]) -> Result<f64> {
    Ok(mass.quadratic_form(u)?.max(0.0).sqrt())
}
