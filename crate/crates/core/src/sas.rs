//! Simple approximating sets: the sampled polytope and the norm-ball sets
//! `{x_c + P z : ‖z‖_p ≤ 1}` for `p ∈ {1, ∞}`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, from_rows, to_rows};
use crate::optim::{self, LinearProgram, Status};
use crate::polytope::{self, CenteredPolytope, HPolytope};
use crate::uncertainty::ScenarioSet;

/// Condition-number ceiling for inverting a shape matrix.
pub const MAX_SHAPE_COND: f64 = 1e12;
/// Membership slack on `‖P⁻¹(ξ − x_c)‖_p ≤ 1`.
pub const MEMBERSHIP_TOL: f64 = 1e-9;
/// Vertex enumeration guard for the hypercube.
pub const MAX_LINF_VERTEX_DIM: usize = 20;
/// Relative floor on shape-matrix diagonal entries in the design.
pub const SHAPE_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Norm {
    L1,
    Linf,
}

impl Norm {
    pub fn of(self, v: &DVector<f64>) -> f64 {
        match self {
            Norm::L1 => linalg::norm_1(v),
            Norm::Linf => linalg::norm_inf(v),
        }
    }

    pub fn dual(self) -> Norm {
        match self {
            Norm::L1 => Norm::Linf,
            Norm::Linf => Norm::L1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeMode {
    Diag,
    Full,
}

/// `{x_c + P z : ‖z‖_p ≤ 1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "NormSasJson", into = "NormSasJson")]
pub struct NormSAS {
    center: DVector<f64>,
    shape: DMatrix<f64>,
    norm: Norm,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NormSasJson {
    schema_version: u32,
    norm: Norm,
    center: Vec<f64>,
    shape: Vec<Vec<f64>>,
}

impl From<NormSAS> for NormSasJson {
    fn from(s: NormSAS) -> Self {
        NormSasJson {
            schema_version: 1,
            norm: s.norm,
            center: s.center.iter().copied().collect(),
            shape: to_rows(&s.shape),
        }
    }
}

impl TryFrom<NormSasJson> for NormSAS {
    type Error = Error;

    fn try_from(j: NormSasJson) -> Result<Self> {
        let n = j.center.len();
        NormSAS::new(DVector::from_vec(j.center), from_rows(&j.shape, n)?, j.norm)
    }
}

impl NormSAS {
    pub fn new(center: DVector<f64>, shape: DMatrix<f64>, norm: Norm) -> Result<Self> {
        let n = center.len();
        if shape.shape() != (n, n) {
            return Err(Error::Dimension(format!("shape matrix must be {n}×{n}")));
        }
        linalg::check_psd(&shape, "shape matrix")?;
        Ok(NormSAS { center, shape, norm })
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn center(&self) -> &DVector<f64> {
        &self.center
    }

    pub fn shape(&self) -> &DMatrix<f64> {
        &self.shape
    }

    pub fn norm(&self) -> Norm {
        self.norm
    }

    pub fn is_diagonal(&self) -> bool {
        let n = self.dim();
        (0..n).all(|i| (0..n).all(|j| i == j || self.shape[(i, j)] == 0.0))
    }

    /// Same center, shape `γP`.
    pub fn scaled(&self, gamma: f64) -> Result<NormSAS> {
        if !(gamma >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "scaling factor must be nonnegative, got {gamma}"
            )));
        }
        Ok(NormSAS {
            center: self.center.clone(),
            shape: &self.shape * gamma,
            norm: self.norm,
        })
    }

    /// `‖P f‖_q` with `q` the dual norm.
    pub fn radius_along(&self, f: &DVector<f64>) -> f64 {
        self.norm.dual().of(&(&self.shape * f))
    }

    /// `fᵀx_c + ‖P f‖_q`.
    pub fn support(&self, f: &DVector<f64>) -> Result<f64> {
        if f.len() != self.dim() {
            return Err(Error::Dimension("direction length mismatch".into()));
        }
        Ok(f.dot(&self.center) + self.radius_along(f))
    }

    pub fn vertices(&self) -> Result<Vec<DVector<f64>>> {
        let n = self.dim();
        match self.norm {
            Norm::L1 => {
                let mut out = Vec::with_capacity(2 * n);
                for i in 0..n {
                    let col = self.shape.column(i);
                    out.push(&self.center + col);
                    out.push(&self.center - col);
                }
                Ok(out)
            }
            Norm::Linf => {
                if n > MAX_LINF_VERTEX_DIM {
                    return Err(Error::InvalidInput(format!(
                        "refusing to enumerate 2^{n} hypercube vertices (limit 2^{MAX_LINF_VERTEX_DIM})"
                    )));
                }
                let mut out = Vec::with_capacity(1 << n);
                for mask in 0u64..(1u64 << n) {
                    let z = DVector::from_iterator(n, (0..n).map(|i| if mask >> i & 1 == 1 { 1.0 } else { -1.0 }));
                    out.push(&self.center + &self.shape * z);
                }
                Ok(out)
            }
        }
    }

    pub fn inverse_shape(&self) -> Result<DMatrix<f64>> {
        linalg::guarded_inverse(&self.shape, MAX_SHAPE_COND)
    }

    /// `‖P⁻¹(ξ − x_c)‖_p ≤ 1 + 1e-9`.
    pub fn contains(&self, xi: &DVector<f64>) -> Result<bool> {
        let minv = self.inverse_shape()?;
        Ok(self.gauge_with(&minv, xi) <= 1.0 + MEMBERSHIP_TOL)
    }

    /// `‖M(ξ − x_c)‖_p` for a precomputed `M = P⁻¹`.
    pub fn gauge_with(&self, minv: &DMatrix<f64>, xi: &DVector<f64>) -> f64 {
        self.norm.of(&(minv * (xi - &self.center)))
    }

    /// The `3n + 1` inequality system in `(ξ, ζ)`.
    pub fn lift_l1(&self) -> Result<LiftedL1Rep> {
        if self.norm != Norm::L1 {
            return Err(Error::InvalidInput("lifting applies to ℓ1 sets only".into()));
        }
        let m = self.inverse_shape()?;
        let c = &m * &self.center;
        Ok(LiftedL1Rep { m, c })
    }

    /// The `2n` facets `±mᵢᵀξ ≤ 1 ± mᵢᵀx_c` of the ℓ∞ set.
    pub fn hrep_linf(&self) -> Result<HPolytope> {
        if self.norm != Norm::Linf {
            return Err(Error::InvalidInput("H-representation applies to ℓ∞ sets only".into()));
        }
        let n = self.dim();
        let m = self.inverse_shape()?;
        let mc = &m * &self.center;
        let mut a = DMatrix::zeros(2 * n, n);
        let mut b = DVector::zeros(2 * n);
        for i in 0..n {
            for j in 0..n {
                a[(i, j)] = m[(i, j)];
                a[(n + i, j)] = -m[(i, j)];
            }
            b[i] = 1.0 + mc[i];
            b[n + i] = 1.0 - mc[i];
        }
        HPolytope::new(a, b)
    }

    /// Uniform point of the set: `x_c + P z` with `z` uniform in the unit
    /// `p`-ball.
    pub fn sample_interior<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let n = self.dim();
        let z = match self.norm {
            Norm::Linf => DVector::from_iterator(n, (0..n).map(|_| 2.0 * rng.random::<f64>() - 1.0)),
            Norm::L1 => {
                // n + 1 exponential spacings give a uniform point of the solid
                // simplex; random signs spread it over the cross-polytope.
                let e: Vec<f64> = (0..=n).map(|_| Exp1.sample(rng)).collect();
                let total: f64 = e.iter().sum();
                DVector::from_iterator(
                    n,
                    (0..n).map(|i| {
                        let s = if rng.random::<bool>() { 1.0 } else { -1.0 };
                        s * e[i] / total
                    }),
                )
            }
        };
        &self.center + &self.shape * z
    }

    /// Largest `fᵢᵀx_c + ‖P fᵢ‖_q − gᵢ` over the rows of `d`; `≤ 0` means
    /// the set lies inside `d`.
    pub fn containment_margin(&self, d: &HPolytope) -> f64 {
        (0..d.num_rows())
            .map(|i| {
                let f = d.a().row(i).transpose();
                f.dot(&self.center) + self.radius_along(&f) - d.b()[i]
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// `{(ξ, ζ) : ±(mᵢᵀξ − cᵢ) ≤ ζᵢ, ζᵢ ≥ 0, Σζᵢ ≤ 1}` with `M = P⁻¹`,
/// `c = P⁻¹x_c`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "LiftedJson", into = "LiftedJson")]
pub struct LiftedL1Rep {
    pub m: DMatrix<f64>,
    pub c: DVector<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LiftedJson {
    schema_version: u32,
    m: Vec<Vec<f64>>,
    c: Vec<f64>,
}

impl From<LiftedL1Rep> for LiftedJson {
    fn from(l: LiftedL1Rep) -> Self {
        LiftedJson {
            schema_version: 1,
            m: to_rows(&l.m),
            c: l.c.iter().copied().collect(),
        }
    }
}

impl TryFrom<LiftedJson> for LiftedL1Rep {
    type Error = Error;

    fn try_from(j: LiftedJson) -> Result<Self> {
        let n = j.c.len();
        Ok(LiftedL1Rep {
            m: from_rows(&j.m, n)?,
            c: DVector::from_vec(j.c),
        })
    }
}

impl LiftedL1Rep {
    pub fn dim(&self) -> usize {
        self.c.len()
    }

    pub fn num_inequalities(&self) -> usize {
        3 * self.dim() + 1
    }

    /// The inequality system over `(ξ, ζ) ∈ R^{2n}`, rows ordered as
    /// upper, lower, `ζ ≥ 0`, then the budget row.
    pub fn inequalities(&self) -> (DMatrix<f64>, DVector<f64>) {
        let n = self.dim();
        let mut a = DMatrix::zeros(3 * n + 1, 2 * n);
        let mut b = DVector::zeros(3 * n + 1);
        for i in 0..n {
            for j in 0..n {
                a[(i, j)] = self.m[(i, j)];
                a[(n + i, j)] = -self.m[(i, j)];
            }
            a[(i, n + i)] = -1.0;
            b[i] = self.c[i];
            a[(n + i, n + i)] = -1.0;
            b[n + i] = -self.c[i];
            a[(2 * n + i, n + i)] = -1.0;
            a[(3 * n, n + i)] = 1.0;
        }
        b[3 * n] = 1.0;
        (a, b)
    }

    /// Exists `ζ` making `(ξ, ζ)` feasible; the tightest choice is
    /// `ζᵢ = |mᵢᵀξ − cᵢ|`.
    pub fn contains(&self, xi: &DVector<f64>) -> bool {
        linalg::norm_1(&(&self.m * xi - &self.c)) <= 1.0 + MEMBERSHIP_TOL
    }
}

/// `S_S = ∩ Xᵢ` with its Chebyshev center.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampledSAS {
    pub poly: CenteredPolytope,
    pub scenarios: usize,
    /// Row count before zero-row removal (scenario rows plus domain rows).
    pub rows_reported: usize,
}

impl SampledSAS {
    pub fn dim(&self) -> usize {
        self.poly.poly.dim()
    }
}

/// Intersects the scenario sets (optionally with a domain `Ξ`) and centers
/// the result at its Chebyshev center.
pub fn design_sampled_poly(scen: &ScenarioSet, domain: Option<&HPolytope>) -> Result<SampledSAS> {
    if scen.is_empty() {
        return Err(Error::InvalidInput("no scenarios".into()));
    }
    let (a, b) = scen.stacked();
    let rows_reported = a.nrows() + domain.map_or(0, |d| d.num_rows());
    let mut poly = HPolytope::new(a, b)?;
    if let Some(d) = domain {
        poly = poly.intersect(d)?;
    }
    let centered = CenteredPolytope::chebyshev(poly)?;
    Ok(SampledSAS {
        poly: centered,
        scenarios: scen.len(),
        rows_reported,
    })
}

/// LP over `(x_c, diag P)` maximizing `tr P` subject to
/// `fᵢᵀx_c + ‖P fᵢ‖_q ≤ gᵢ` for every row of `d`. With `P = diag(p)`,
/// `p ≥ 0`, the dual norm is linear in `p`: `|(P fᵢ)ⱼ| = pⱼ|fᵢⱼ|`.
pub fn norm_design_lp(d: &HPolytope, norm: Norm, floor: f64) -> Result<LinearProgram> {
    let n = d.dim();
    let (a, g) = (d.a(), d.b());
    let mut rows: Vec<(Vec<f64>, f64)> = Vec::new();
    for i in 0..a.nrows() {
        match norm {
            // ‖P f‖_∞ = maxⱼ pⱼ|fᵢⱼ|: one row per nonzero coefficient.
            Norm::L1 => {
                for j in 0..n {
                    let fij = a[(i, j)];
                    if fij != 0.0 {
                        let mut r = vec![0.0; 2 * n];
                        r[..n].copy_from_slice(a.row(i).transpose().as_slice());
                        r[n + j] = fij.abs();
                        rows.push((r, g[i]));
                    }
                }
            }
            // ‖P f‖₁ = Σⱼ pⱼ|fᵢⱼ|.
            Norm::Linf => {
                let mut r = vec![0.0; 2 * n];
                for j in 0..n {
                    r[j] = a[(i, j)];
                    r[n + j] = a[(i, j)].abs();
                }
                rows.push((r, g[i]));
            }
        }
    }
    let lp_a = DMatrix::from_fn(rows.len(), 2 * n, |r, c| rows[r].0[c]);
    let lp_b = DVector::from_iterator(rows.len(), rows.iter().map(|r| r.1));
    let mut obj = DVector::zeros(2 * n);
    obj.rows_mut(n, n).fill(1.0);
    let mut lower = DVector::from_element(2 * n, f64::NEG_INFINITY);
    lower.rows_mut(n, n).fill(floor);
    let upper = DVector::from_element(2 * n, f64::INFINITY);
    LinearProgram::maximize(obj, lp_a, lp_b)?.with_bounds(lower, upper)
}

/// Largest diagonal-shape ℓ1/ℓ∞ set inscribed in a bounded polytope.
pub fn design_norm_sas(d: &HPolytope, norm: Norm, mode: ShapeMode) -> Result<NormSAS> {
    if mode == ShapeMode::Full {
        return Err(Error::Unsupported(
            "full shape matrices need a semidefinite backend; use diag mode".into(),
        ));
    }
    let n = d.dim();
    let (lo, hi) = d.bounding_box()?;
    let width = (&hi - &lo).amax();
    let floor = SHAPE_FLOOR * width.max(f64::MIN_POSITIVE);
    let lp = norm_design_lp(d, norm, floor)?;
    log::debug!(
        "norm SAS design LP: {} rows × {} vars ({:?})",
        lp.a.nrows(),
        lp.num_vars(),
        norm
    );
    let res = optim::solve_lp(&lp);
    match res.status {
        Status::Optimal => {}
        Status::Infeasible => {
            return Err(Error::Empty(
                "design polytope has no interior large enough for the shape floor".into(),
            ))
        }
        Status::Unbounded => return Err(Error::Unbounded("design LP unbounded".into())),
        Status::NumericalFailure => return Err(Error::Solver("design LP failed".into())),
    }
    let sol = res.x.expect("optimal");
    let center = sol.rows(0, n).into_owned();
    let diag = sol.rows(n, n).map(|v| v.max(floor));
    NormSAS::new(center, DMatrix::from_diagonal(&diag), norm)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SasKind {
    Sampled,
    L1,
    Linf,
}

/// Builds a candidate of the given kind from design scenarios. Norm sets
/// are fitted inside the intersection of the scenarios and `domain`.
pub fn design_candidate(kind: SasKind, scen: &ScenarioSet, domain: Option<&HPolytope>) -> Result<Candidate> {
    let norm = match kind {
        SasKind::Sampled => return Ok(Candidate::Sampled(design_sampled_poly(scen, domain)?)),
        SasKind::L1 => Norm::L1,
        SasKind::Linf => Norm::Linf,
    };
    if scen.is_empty() {
        return Err(Error::InvalidInput("no scenarios".into()));
    }
    let (a, b) = scen.stacked();
    let mut d = HPolytope::new(a, b)?;
    if let Some(dom) = domain {
        d = d.intersect(dom)?;
    }
    Ok(Candidate::Norm(design_norm_sas(&d, norm, ShapeMode::Diag)?))
}

/// A candidate set ready for scaling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Candidate {
    Norm(NormSAS),
    Sampled(SampledSAS),
}

impl Candidate {
    pub fn dim(&self) -> usize {
        match self {
            Candidate::Norm(s) => s.dim(),
            Candidate::Sampled(s) => s.dim(),
        }
    }

    pub fn center(&self) -> &DVector<f64> {
        match self {
            Candidate::Norm(s) => s.center(),
            Candidate::Sampled(s) => &s.poly.center,
        }
    }

    /// Membership of `x_c ⊕ γ S`.
    pub fn scaled_contains(&self, gamma: f64, xi: &DVector<f64>) -> Result<bool> {
        match self {
            Candidate::Norm(s) => s.scaled(gamma)?.contains(xi),
            Candidate::Sampled(s) => Ok(polytope::scale_about(&s.poly, gamma)?.contains(xi, 1e-9)),
        }
    }
}
