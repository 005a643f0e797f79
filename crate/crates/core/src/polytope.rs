//! H-representation polytopes `{ξ : Aξ ≤ b}`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optim::{self, LinearProgram, Status};
use crate::uncertainty::SampleStream;

/// Slack a center must keep on every row.
pub const CENTER_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PolytopeJson", into = "PolytopeJson")]
pub struct HPolytope {
    a: DMatrix<f64>,
    b: DVector<f64>,
    /// A zero-normal row with negative right-hand side was seen.
    trivially_empty: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PolytopeJson {
    schema_version: u32,
    dim: usize,
    a: Vec<Vec<f64>>,
    b: Vec<f64>,
}

impl From<HPolytope> for PolytopeJson {
    fn from(p: HPolytope) -> Self {
        let mut a: Vec<Vec<f64>> = (0..p.a.nrows()).map(|i| p.a.row(i).iter().copied().collect()).collect();
        let mut b: Vec<f64> = p.b.iter().copied().collect();
        if p.trivially_empty {
            a.push(vec![0.0; p.a.ncols()]);
            b.push(-1.0);
        }
        PolytopeJson {
            schema_version: 1,
            dim: p.a.ncols(),
            a,
            b,
        }
    }
}

impl TryFrom<PolytopeJson> for HPolytope {
    type Error = Error;

    fn try_from(j: PolytopeJson) -> Result<Self> {
        if j.a.iter().any(|r| r.len() != j.dim) {
            return Err(Error::Dimension("polytope rows must have `dim` entries".into()));
        }
        let a = DMatrix::from_fn(j.a.len(), j.dim, |r, c| j.a[r][c]);
        HPolytope::new(a, DVector::from_vec(j.b))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Support {
    Bounded(f64),
    Unbounded,
}

impl Support {
    pub fn value(self) -> f64 {
        match self {
            Support::Bounded(v) => v,
            Support::Unbounded => f64::INFINITY,
        }
    }

    pub fn is_bounded(self) -> bool {
        matches!(self, Support::Bounded(_))
    }
}

impl HPolytope {
    pub fn new(a: DMatrix<f64>, b: DVector<f64>) -> Result<Self> {
        if a.nrows() != b.len() {
            return Err(Error::Dimension(format!("A has {} rows, b has {}", a.nrows(), b.len())));
        }
        if a.nrows() == 0 {
            return Err(Error::InvalidInput("polytope needs at least one row".into()));
        }
        let n = a.ncols();
        let mut keep = Vec::with_capacity(a.nrows());
        let mut trivially_empty = false;
        for i in 0..a.nrows() {
            if a.row(i).iter().all(|v| *v == 0.0) {
                if b[i] < 0.0 {
                    trivially_empty = true;
                }
            } else {
                keep.push(i);
            }
        }
        let a2 = DMatrix::from_fn(keep.len(), n, |r, c| a[(keep[r], c)]);
        let b2 = DVector::from_iterator(keep.len(), keep.iter().map(|&i| b[i]));
        Ok(HPolytope {
            a: a2,
            b: b2,
            trivially_empty,
        })
    }

    /// Axis-aligned box `lower ≤ ξ ≤ upper`.
    pub fn from_box(lower: &DVector<f64>, upper: &DVector<f64>) -> Result<Self> {
        let n = lower.len();
        if upper.len() != n {
            return Err(Error::Dimension("box bounds length mismatch".into()));
        }
        let mut a = DMatrix::zeros(2 * n, n);
        let mut b = DVector::zeros(2 * n);
        for i in 0..n {
            a[(i, i)] = 1.0;
            b[i] = upper[i];
            a[(n + i, i)] = -1.0;
            b[n + i] = -lower[i];
        }
        Self::new(a, b)
    }

    pub fn dim(&self) -> usize {
        self.a.ncols()
    }

    pub fn num_rows(&self) -> usize {
        self.a.nrows()
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DVector<f64> {
        &self.b
    }

    /// Intersection with another polytope of the same dimension.
    pub fn intersect(&self, other: &HPolytope) -> Result<HPolytope> {
        if other.dim() != self.dim() {
            return Err(Error::Dimension("intersecting polytopes of different dimension".into()));
        }
        let n = self.dim();
        let (m1, m2) = (self.num_rows(), other.num_rows());
        let mut a = DMatrix::zeros(m1 + m2, n);
        a.view_mut((0, 0), (m1, n)).copy_from(&self.a);
        a.view_mut((m1, 0), (m2, n)).copy_from(&other.a);
        let mut b = DVector::zeros(m1 + m2);
        b.rows_mut(0, m1).copy_from(&self.b);
        b.rows_mut(m1, m2).copy_from(&other.b);
        let mut p = HPolytope::new(a, b)?;
        p.trivially_empty = self.trivially_empty || other.trivially_empty;
        Ok(p)
    }

    pub fn contains(&self, x: &DVector<f64>, tol: f64) -> bool {
        !self.trivially_empty && (&self.a * x - &self.b).iter().all(|r| *r <= tol)
    }

    /// Smallest row slack `b − Ax`.
    pub fn min_slack(&self, x: &DVector<f64>) -> f64 {
        (&self.b - &self.a * x).min()
    }

    pub fn is_empty(&self) -> Result<bool> {
        if self.trivially_empty {
            return Ok(true);
        }
        let lp = LinearProgram::maximize(DVector::zeros(self.dim()), self.a.clone(), self.b.clone())?;
        match optim::solve_lp(&lp).status {
            Status::Optimal | Status::Unbounded => Ok(false),
            Status::Infeasible => Ok(true),
            Status::NumericalFailure => Err(Error::Solver("feasibility LP failed".into())),
        }
    }

    /// `sup { fᵀξ : ξ ∈ P }`.
    pub fn support(&self, f: &DVector<f64>) -> Result<Support> {
        if f.len() != self.dim() {
            return Err(Error::Dimension(format!(
                "direction has {} entries, expected {}",
                f.len(),
                self.dim()
            )));
        }
        if self.trivially_empty {
            return Err(Error::Empty("support of an empty polytope".into()));
        }
        let lp = LinearProgram::maximize(f.clone(), self.a.clone(), self.b.clone())?;
        let res = optim::solve_lp(&lp);
        match res.status {
            Status::Optimal => Ok(Support::Bounded(res.objective)),
            Status::Unbounded => Ok(Support::Unbounded),
            Status::Infeasible => Err(Error::Empty("support of an empty polytope".into())),
            Status::NumericalFailure => Err(Error::Solver("support LP failed".into())),
        }
    }

    /// Axis-aligned bounding box from the `2n` supports `±eᵢ`.
    pub fn bounding_box(&self) -> Result<(DVector<f64>, DVector<f64>)> {
        let n = self.dim();
        let results: Vec<Result<(f64, f64)>> = (0..n)
            .into_par_iter()
            .map(|i| {
                let mut e = DVector::zeros(n);
                e[i] = 1.0;
                let hi = self.support(&e)?;
                e[i] = -1.0;
                let lo = self.support(&e)?;
                match (hi, lo) {
                    (Support::Bounded(h), Support::Bounded(l)) => Ok((-l, h)),
                    _ => Err(Error::Unbounded(format!("polytope is unbounded along axis {i}"))),
                }
            })
            .collect();
        let mut lower = DVector::zeros(n);
        let mut upper = DVector::zeros(n);
        for (i, r) in results.into_iter().enumerate() {
            let (l, h) = r?;
            lower[i] = l;
            upper[i] = h;
        }
        Ok((lower, upper))
    }

    /// Center and radius of the largest inscribed Euclidean ball:
    /// `max r s.t. aᵢᵀx + r‖aᵢ‖ ≤ bᵢ`.
    pub fn chebyshev_center(&self) -> Result<(DVector<f64>, f64)> {
        if self.trivially_empty {
            return Err(Error::Empty("polytope has an infeasible zero row".into()));
        }
        let (m, n) = self.a.shape();
        let mut a = DMatrix::zeros(m, n + 1);
        a.view_mut((0, 0), (m, n)).copy_from(&self.a);
        for i in 0..m {
            a[(i, n)] = self.a.row(i).norm();
        }
        let mut c = DVector::zeros(n + 1);
        c[n] = 1.0;
        let lp = LinearProgram::maximize(c, a, self.b.clone())?;
        let res = optim::solve_lp(&lp);
        match res.status {
            Status::Optimal => {
                let sol = res.x.expect("optimal");
                let r = sol[n];
                if r < 0.0 {
                    return Err(Error::Empty("no point satisfies all rows".into()));
                }
                Ok((sol.rows(0, n).into_owned(), r))
            }
            Status::Unbounded => Err(Error::Unbounded("inscribed ball radius is unbounded".into())),
            Status::Infeasible => Err(Error::Empty("Chebyshev LP infeasible".into())),
            Status::NumericalFailure => Err(Error::Solver("Chebyshev LP failed".into())),
        }
    }

    pub fn to_csv(&self) -> String {
        let n = self.dim();
        let mut out = String::new();
        let header: Vec<String> = (0..n)
            .map(|i| format!("a{i}"))
            .chain(std::iter::once("b".into()))
            .collect();
        out.push_str(&header.join(","));
        out.push('\n');
        for i in 0..self.num_rows() {
            let fields: Vec<String> = self
                .a
                .row(i)
                .iter()
                .chain(std::iter::once(&self.b[i]))
                .map(|v| format!("{v:e}"))
                .collect();
            out.push_str(&fields.join(","));
            out.push('\n');
        }
        out
    }
}

/// A polytope with a strictly interior center used for scaling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CenteredPolytope {
    pub poly: HPolytope,
    pub center: DVector<f64>,
}

impl CenteredPolytope {
    pub fn new(poly: HPolytope, center: DVector<f64>) -> Result<Self> {
        if center.len() != poly.dim() {
            return Err(Error::Dimension("center dimension mismatch".into()));
        }
        let slack = poly.min_slack(&center);
        if poly.trivially_empty || slack < CENTER_TOL {
            return Err(Error::InvalidInput(format!(
                "center is not strictly interior (min slack {slack:.3e})"
            )));
        }
        Ok(CenteredPolytope { poly, center })
    }

    /// Center at the Chebyshev center; lower-dimensional sets are rejected.
    pub fn chebyshev(poly: HPolytope) -> Result<Self> {
        let (center, radius) = poly.chebyshev_center()?;
        if radius <= CENTER_TOL {
            return Err(Error::Empty(format!(
                "polytope has no interior (inscribed radius {radius:.3e})"
            )));
        }
        Self::new(poly, center)
    }
}

/// `x_c + γ(P − x_c) = {ξ : Aξ ≤ γb + (1−γ)A x_c}`.
pub fn scale_about(cp: &CenteredPolytope, gamma: f64) -> Result<HPolytope> {
    if !(gamma >= 0.0) {
        return Err(Error::InvalidInput(format!(
            "scaling factor must be nonnegative, got {gamma}"
        )));
    }
    let ac = &cp.poly.a * &cp.center;
    let b = &cp.poly.b * gamma + ac * (1.0 - gamma);
    Ok(HPolytope {
        a: cp.poly.a.clone(),
        b,
        trivially_empty: false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VolumeEstimate {
    pub value: f64,
    pub stderr: f64,
    pub hits: usize,
    pub samples: usize,
}

/// Hit-or-miss Monte Carlo volume of `{x : member(x)}` inside a box.
pub fn mc_volume<F>(
    member: F,
    lower: &DVector<f64>,
    upper: &DVector<f64>,
    samples: usize,
    stream: SampleStream,
) -> Result<VolumeEstimate>
where
    F: Fn(&DVector<f64>) -> bool + Sync,
{
    if samples < 100 {
        return Err(Error::InvalidInput(
            "Monte Carlo volume needs at least 100 samples".into(),
        ));
    }
    if lower.len() != upper.len() || lower.iter().zip(upper.iter()).any(|(l, u)| !(l <= u)) {
        return Err(Error::InvalidInput("invalid bounding box".into()));
    }
    let n = lower.len();
    let hits = (0..samples as u64)
        .into_par_iter()
        .filter(|&i| {
            let mut rng = stream.rng(i);
            let x = DVector::from_iterator(
                n,
                (0..n).map(|k| lower[k] + (upper[k] - lower[k]) * rng.random::<f64>()),
            );
            member(&x)
        })
        .count();
    let box_vol: f64 = lower.iter().zip(upper.iter()).map(|(l, u)| u - l).product();
    let p = hits as f64 / samples as f64;
    Ok(VolumeEstimate {
        value: p * box_vol,
        stderr: box_vol * (p * (1.0 - p) / samples as f64).sqrt(),
        hits,
        samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{dmatrix, dvector};

    fn unit_square() -> HPolytope {
        HPolytope::from_box(&dvector![-1.0, -1.0], &dvector![1.0, 1.0]).unwrap()
    }

    #[test]
    fn square_support_at_corner() {
        assert_eq!(
            unit_square().support(&dvector![1.0, 1.0]).unwrap(),
            Support::Bounded(2.0)
        );
    }

    #[test]
    fn halfspace_support_unbounded() {
        let p = HPolytope::new(dmatrix![1.0, 0.0], dvector![1.0]).unwrap();
        assert_eq!(p.support(&dvector![0.0, 1.0]).unwrap(), Support::Unbounded);
    }

    #[test]
    fn empty_support_errors() {
        let p = HPolytope::new(dmatrix![1.0; -1.0], dvector![-1.0, -1.0]).unwrap();
        assert!(matches!(p.support(&dvector![1.0]), Err(Error::Empty(_))));
        assert!(p.is_empty().unwrap());
        let z = HPolytope::new(dmatrix![0.0, 0.0; 1.0, 0.0], dvector![-1.0, 1.0]).unwrap();
        assert!(z.is_empty().unwrap());
    }

    #[test]
    fn zero_rows_dropped() {
        let p = HPolytope::new(dmatrix![0.0, 0.0; 1.0, 0.0], dvector![2.0, 1.0]).unwrap();
        assert_eq!(p.num_rows(), 1);
    }

    #[test]
    fn chebyshev_square_and_triangle() {
        let (c, r) = unit_square().chebyshev_center().unwrap();
        assert!(c.amax() < 1e-12);
        assert!((r - 1.0).abs() < 1e-12);

        let tri = HPolytope::new(dmatrix![-1.0, 0.0; 0.0, -1.0; 1.0, 1.0], dvector![0.0, 0.0, 1.0]).unwrap();
        let (c, r) = tri.chebyshev_center().unwrap();
        let expected = 1.0 / (2.0 + 2f64.sqrt());
        assert!((r - expected).abs() < 1e-12);
        assert!((c - dvector![expected, expected]).amax() < 1e-12);
    }

    #[test]
    fn chebyshev_halfspace_unbounded() {
        let p = HPolytope::new(dmatrix![1.0, 0.0], dvector![1.0]).unwrap();
        assert!(matches!(p.chebyshev_center(), Err(Error::Unbounded(_))));
    }

    #[test]
    fn scale_identity_and_collapse() {
        let cp = CenteredPolytope::new(unit_square(), dvector![0.5, 0.0]).unwrap();
        let same = scale_about(&cp, 1.0).unwrap();
        assert_eq!(same.a(), cp.poly.a());
        assert!((same.b() - cp.poly.b()).amax() < 1e-15);
        let point = scale_about(&cp, 0.0).unwrap();
        assert!((point.b() - cp.poly.a() * &cp.center).amax() < 1e-15);
        assert!(scale_about(&cp, -0.1).is_err());
    }

    #[test]
    fn scaled_membership_matches_affine_map() {
        let cp = CenteredPolytope::new(unit_square(), dvector![0.5, 0.0]).unwrap();
        let gamma = 0.5;
        let scaled = scale_about(&cp, gamma).unwrap();
        let stream = SampleStream::new(11);
        for i in 0..10_000u64 {
            let mut rng = stream.rng(i);
            let x = dvector![rng.random::<f64>() * 3.0 - 1.0, rng.random::<f64>() * 3.0 - 1.0];
            // x ∈ x_c + γ(P − x_c) ⇔ x_c + (x − x_c)/γ ∈ P.
            let pre = &cp.center + (&x - &cp.center) / gamma;
            assert_eq!(scaled.contains(&x, 0.0), cp.poly.contains(&pre, 1e-12), "{x}");
        }
    }

    #[test]
    fn center_must_be_interior() {
        assert!(CenteredPolytope::new(unit_square(), dvector![1.0, 0.0]).is_err());
    }

    #[test]
    fn volume_examples() {
        let sq = unit_square();
        let lo = dvector![-2.0, -2.0];
        let hi = dvector![2.0, 2.0];
        let v = mc_volume(|x| sq.contains(x, 0.0), &lo, &hi, 100_000, SampleStream::new(1)).unwrap();
        assert!((v.value - 4.0).abs() <= 3.0 * v.stderr, "{v:?}");
        let e = mc_volume(|_| false, &lo, &hi, 1000, SampleStream::new(1)).unwrap();
        assert_eq!(e.value, 0.0);
        assert!(mc_volume(|_| true, &lo, &hi, 99, SampleStream::new(1)).is_err());
    }

    #[test]
    fn json_round_trip() {
        let p = unit_square();
        let s = serde_json::to_string(&p).unwrap();
        let back: HPolytope = serde_json::from_str(&s).unwrap();
        assert_eq!(back, p);
        assert!(p.to_csv().starts_with("a0,a1,b\n"));
    }
}
