//! Random uncertainty: distributions, reproducible sample streams and the
//! uncertain linear inequalities `F(q) ξ ≤ g(q)` they generate.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

/// One independent component of the uncertainty vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Block {
    UniformBox {
        lower: Vec<f64>,
        upper: Vec<f64>,
    },
    Gaussian {
        mean: Vec<f64>,
        covariance: Vec<Vec<f64>>,
    },
    /// Scalar `U[lower, upper]` that multiplies block `target` when the
    /// sample is read in product form.
    ScalarUniformFactor {
        lower: f64,
        upper: f64,
        target: usize,
    },
}

impl Block {
    pub fn dim(&self) -> usize {
        match self {
            Block::UniformBox { lower, .. } => lower.len(),
            Block::Gaussian { mean, .. } => mean.len(),
            Block::ScalarUniformFactor { .. } => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpec {
    blocks: Vec<Block>,
}

/// Validated composition of independent blocks; samples are the
/// concatenation of the block draws in order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSpec", into = "RawSpec")]
pub struct DistributionSpec {
    blocks: Vec<Block>,
    offsets: Vec<usize>,
    factors: Vec<Option<DMatrix<f64>>>,
    dim: usize,
}

impl TryFrom<RawSpec> for DistributionSpec {
    type Error = Error;

    fn try_from(raw: RawSpec) -> Result<Self> {
        DistributionSpec::new(raw.blocks)
    }
}

impl From<DistributionSpec> for RawSpec {
    fn from(spec: DistributionSpec) -> Self {
        RawSpec { blocks: spec.blocks }
    }
}

impl DistributionSpec {
    pub fn new(blocks: Vec<Block>) -> Result<Self> {
        if blocks.is_empty() {
            return Err(Error::InvalidInput("distribution needs at least one block".into()));
        }
        let mut offsets = Vec::with_capacity(blocks.len());
        let mut factors = Vec::with_capacity(blocks.len());
        let mut dim = 0;
        for (i, block) in blocks.iter().enumerate() {
            offsets.push(dim);
            dim += block.dim();
            match block {
                Block::UniformBox { lower, upper } => {
                    if lower.len() != upper.len() {
                        return Err(Error::Dimension(format!("block {i}: lower/upper length mismatch")));
                    }
                    if lower.iter().chain(upper).any(|v| !v.is_finite()) {
                        return Err(Error::InvalidInput(format!("block {i}: bounds must be finite")));
                    }
                    if lower.iter().zip(upper).any(|(l, u)| l > u) {
                        return Err(Error::InvalidInput(format!("block {i}: lower > upper")));
                    }
                    factors.push(None);
                }
                Block::Gaussian { mean, covariance } => {
                    let n = mean.len();
                    if covariance.len() != n || covariance.iter().any(|r| r.len() != n) {
                        return Err(Error::Dimension(format!("block {i}: covariance must be {n}×{n}")));
                    }
                    let cov = DMatrix::from_fn(n, n, |r, c| covariance[r][c]);
                    linalg::check_psd(&cov, &format!("block {i} covariance"))?;
                    factors.push(Some(linalg::psd_factor(&cov)));
                }
                Block::ScalarUniformFactor { lower, upper, target } => {
                    if !lower.is_finite() || !upper.is_finite() || lower > upper {
                        return Err(Error::InvalidInput(format!("block {i}: invalid factor interval")));
                    }
                    if *target >= blocks.len() || *target == i {
                        return Err(Error::InvalidInput(format!(
                            "block {i}: invalid factor target {target}"
                        )));
                    }
                    factors.push(None);
                }
            }
        }
        Ok(DistributionSpec {
            blocks,
            offsets,
            factors,
            dim,
        })
    }

    /// Zero-mean (or fixed-mean) Gaussian with covariance `sigma`.
    pub fn gaussian(mean: Vec<f64>, sigma: &DMatrix<f64>) -> Result<Self> {
        let covariance = (0..sigma.nrows())
            .map(|r| sigma.row(r).iter().copied().collect())
            .collect();
        Self::new(vec![Block::Gaussian { mean, covariance }])
    }

    pub fn uniform_box(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        Self::new(vec![Block::UniformBox { lower, upper }])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn block_offset(&self, block: usize) -> usize {
        self.offsets[block]
    }

    /// Componentwise mean of the distribution.
    pub fn mean(&self) -> DVector<f64> {
        let mut out = Vec::with_capacity(self.dim);
        for block in &self.blocks {
            match block {
                Block::UniformBox { lower, upper } => out.extend(lower.iter().zip(upper).map(|(l, u)| 0.5 * (l + u))),
                Block::Gaussian { mean, .. } => out.extend(mean.iter().copied()),
                Block::ScalarUniformFactor { lower, upper, .. } => out.push(0.5 * (lower + upper)),
            }
        }
        DVector::from_vec(out)
    }

    /// True when every block has zero spread.
    pub fn is_deterministic(&self) -> bool {
        self.blocks.iter().all(|b| match b {
            Block::UniformBox { lower, upper } => lower == upper,
            Block::Gaussian { covariance, .. } => covariance.iter().flatten().all(|v| *v == 0.0),
            Block::ScalarUniformFactor { lower, upper, .. } => lower == upper,
        })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let mut out = Vec::with_capacity(self.dim);
        for (block, factor) in self.blocks.iter().zip(&self.factors) {
            match block {
                Block::UniformBox { lower, upper } => {
                    for (l, u) in lower.iter().zip(upper) {
                        out.push(uniform(rng, *l, *u));
                    }
                }
                Block::Gaussian { mean, .. } => {
                    let l = factor.as_ref().expect("gaussian factor");
                    let z = DVector::from_iterator(
                        mean.len(),
                        (0..mean.len()).map(|_| rng.sample::<f64, _>(StandardNormal)),
                    );
                    let v = l * z;
                    out.extend(mean.iter().zip(v.iter()).map(|(m, d)| m + d));
                }
                Block::ScalarUniformFactor { lower, upper, .. } => out.push(uniform(rng, *lower, *upper)),
            }
        }
        DVector::from_vec(out)
    }

    /// The sample with each factor's target block multiplied by the factor.
    pub fn apply_factors(&self, q: &DVector<f64>) -> DVector<f64> {
        let mut out = q.clone();
        for (i, block) in self.blocks.iter().enumerate() {
            if let Block::ScalarUniformFactor { target, .. } = block {
                let s = q[self.offsets[i]];
                let off = self.offsets[*target];
                for k in off..off + self.blocks[*target].dim() {
                    out[k] *= s;
                }
            }
        }
        out
    }

    /// `(factor coordinate, target offset, target dim)` of the first factor block.
    pub fn product_layout(&self) -> Option<(usize, usize, usize)> {
        self.blocks.iter().enumerate().find_map(|(i, b)| match b {
            Block::ScalarUniformFactor { target, .. } => {
                Some((self.offsets[i], self.offsets[*target], self.blocks[*target].dim()))
            }
            _ => None,
        })
    }
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    if lo == hi {
        lo
    } else {
        lo + (hi - lo) * rng.random::<f64>()
    }
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Counter-based stream: sample `i` of `(seed, stream)` is drawn from the
/// ChaCha block range starting at word `i·2³²`, so any index can be
/// generated independently of the others.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SampleStream {
    pub seed: u64,
    pub stream: u64,
}

impl SampleStream {
    pub fn new(seed: u64) -> Self {
        SampleStream { seed, stream: 0 }
    }

    /// Child stream, derived deterministically from this one and `id`.
    pub fn substream(&self, id: u64) -> Self {
        SampleStream {
            seed: self.seed,
            stream: splitmix(self.stream ^ splitmix(id.wrapping_add(0x5851_F42D_4C95_7F2D))),
        }
    }

    pub fn rng(&self, index: u64) -> ChaCha12Rng {
        let mut key = [0u8; 32];
        let mut s = self.seed;
        for chunk in key.chunks_mut(8) {
            s = splitmix(s);
            chunk.copy_from_slice(&s.to_le_bytes());
        }
        let mut rng = ChaCha12Rng::from_seed(key);
        rng.set_stream(self.stream);
        rng.set_word_pos((index as u128) << 32);
        rng
    }
}

/// Well-known substream ids.
pub mod streams {
    pub const DESIGN: u64 = 1;
    pub const SCALING: u64 = 2;
    pub const TEST: u64 = 3;
    pub const INTERIOR: u64 = 4;
    pub const PRECHECK: u64 = 5;
    pub const COST: u64 = 6;
    pub const CLOSED_LOOP: u64 = 7;
    pub const OFFLINE: u64 = 8;
}

/// `count` samples at indices `start..start+count`.
pub fn draw_range(spec: &DistributionSpec, stream: SampleStream, start: u64, count: usize) -> Vec<DVector<f64>> {
    (0..count as u64)
        .into_par_iter()
        .map(|i| spec.sample(&mut stream.rng(start + i)))
        .collect()
}

pub fn draw(spec: &DistributionSpec, stream: SampleStream, count: usize) -> Result<Vec<DVector<f64>>> {
    if count == 0 {
        return Err(Error::InvalidInput("sample count must be at least 1".into()));
    }
    Ok(draw_range(spec, stream, 0, count))
}

/// One realized inequality system `F ξ ≤ g`.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub f: DMatrix<f64>,
    pub g: DVector<f64>,
}

impl Scenario {
    pub fn rows(&self) -> usize {
        self.g.len()
    }

    pub fn is_satisfied(&self, xi: &DVector<f64>) -> bool {
        (&self.f * xi).iter().zip(self.g.iter()).all(|(l, r)| l <= r)
    }
}

pub type RealizeFn = dyn Fn(&DVector<f64>) -> Scenario + Send + Sync;

#[derive(Clone)]
pub enum ConstraintForm {
    /// `F(q) = F₀ + Σ q_k F_k`, `g(q) = g₀ + Σ q_k g_k`.
    AffineInQ {
        f0: DMatrix<f64>,
        f_terms: Vec<DMatrix<f64>>,
        g0: DVector<f64>,
        g_terms: Vec<DVector<f64>>,
    },
    /// Row `j` is `q[factor] · q[offsets[j] .. offsets[j] + n_ξ]` with a
    /// fixed right-hand side.
    Product {
        factor: usize,
        offsets: Vec<usize>,
        rhs: DVector<f64>,
    },
    Callback(Arc<RealizeFn>),
}

impl fmt::Debug for ConstraintForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConstraintForm::AffineInQ { f_terms, .. } => write!(f, "AffineInQ({} terms)", f_terms.len()),
            ConstraintForm::Product { factor, offsets, .. } => {
                write!(f, "Product(factor={factor}, offsets={offsets:?})")
            }
            ConstraintForm::Callback(_) => write!(f, "Callback"),
        }
    }
}

/// Generator of realized inequalities `F(q) ξ ≤ g(q)` with `p` rows in
/// `n_ξ` dimensions.
#[derive(Debug, Clone)]
pub struct UncertainConstraintSystem {
    n_xi: usize,
    rows: usize,
    form: ConstraintForm,
}

impl UncertainConstraintSystem {
    pub fn affine(
        f0: DMatrix<f64>,
        f_terms: Vec<DMatrix<f64>>,
        g0: DVector<f64>,
        g_terms: Vec<DVector<f64>>,
    ) -> Result<Self> {
        let (p, n) = f0.shape();
        if g0.len() != p {
            return Err(Error::Dimension("g0 length must equal F0 rows".into()));
        }
        if f_terms.iter().any(|m| m.shape() != (p, n)) || g_terms.iter().any(|v| v.len() != p) {
            return Err(Error::Dimension("affine terms must match F0/g0 shapes".into()));
        }
        if !g_terms.is_empty() && g_terms.len() != f_terms.len() && !f_terms.is_empty() {
            return Err(Error::Dimension("F and g term counts differ".into()));
        }
        Ok(UncertainConstraintSystem {
            n_xi: n,
            rows: p,
            form: ConstraintForm::AffineInQ {
                f0,
                f_terms,
                g0,
                g_terms,
            },
        })
    }

    pub fn product(n_xi: usize, factor: usize, offsets: Vec<usize>, rhs: DVector<f64>) -> Result<Self> {
        if offsets.len() != rhs.len() || offsets.is_empty() {
            return Err(Error::Dimension("one offset and rhs entry per row".into()));
        }
        Ok(UncertainConstraintSystem {
            n_xi,
            rows: rhs.len(),
            form: ConstraintForm::Product { factor, offsets, rhs },
        })
    }

    /// Single-row product system `(s·d)ᵀ ξ ≤ rhs` from the factor block of
    /// `spec` and its target block.
    pub fn product_from_spec(spec: &DistributionSpec, rhs: f64) -> Result<Self> {
        let (factor, offset, dim) = spec
            .product_layout()
            .ok_or_else(|| Error::InvalidInput("distribution has no scalar factor block".into()))?;
        Self::product(dim, factor, vec![offset], DVector::from_element(1, rhs))
    }

    pub fn callback(n_xi: usize, rows: usize, realize: Arc<RealizeFn>) -> Self {
        UncertainConstraintSystem {
            n_xi,
            rows,
            form: ConstraintForm::Callback(realize),
        }
    }

    pub fn dim(&self) -> usize {
        self.n_xi
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn form(&self) -> &ConstraintForm {
        &self.form
    }

    pub fn realize(&self, q: &DVector<f64>) -> Result<Scenario> {
        let sc = match &self.form {
            ConstraintForm::AffineInQ {
                f0,
                f_terms,
                g0,
                g_terms,
            } => {
                let needed = f_terms.len().max(g_terms.len());
                if q.len() < needed {
                    return Err(Error::Dimension(format!("q has {} entries, need {needed}", q.len())));
                }
                let mut f = f0.clone();
                for (k, fk) in f_terms.iter().enumerate() {
                    f += fk * q[k];
                }
                let mut g = g0.clone();
                for (k, gk) in g_terms.iter().enumerate() {
                    g += gk * q[k];
                }
                Scenario { f, g }
            }
            ConstraintForm::Product { factor, offsets, rhs } => {
                let top = offsets.iter().map(|o| o + self.n_xi).max().unwrap_or(0).max(factor + 1);
                if q.len() < top {
                    return Err(Error::Dimension(format!("q has {} entries, need {top}", q.len())));
                }
                let s = q[*factor];
                let f = DMatrix::from_fn(self.rows, self.n_xi, |j, k| s * q[offsets[j] + k]);
                Scenario { f, g: rhs.clone() }
            }
            ConstraintForm::Callback(cb) => cb(q),
        };
        if sc.f.shape() != (self.rows, self.n_xi) || sc.g.len() != self.rows {
            return Err(Error::Dimension(format!(
                "realization has shape {:?}/{}, expected {}×{}",
                sc.f.shape(),
                sc.g.len(),
                self.rows,
                self.n_xi
            )));
        }
        Ok(sc)
    }
}

/// Realized scenarios together with the stream indices they came from.
#[derive(Debug, Clone)]
pub struct ScenarioSet {
    pub scenarios: Vec<Scenario>,
    pub stream: SampleStream,
    pub start: u64,
}

impl ScenarioSet {
    pub fn len(&self) -> usize {
        self.scenarios.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scenarios.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.scenarios.first().map(|s| s.f.ncols()).unwrap_or(0)
    }

    /// All scenario rows stacked into one `(A, b)` pair.
    pub fn stacked(&self) -> (DMatrix<f64>, DVector<f64>) {
        let n = self.dim();
        let total: usize = self.scenarios.iter().map(|s| s.rows()).sum();
        let mut a = DMatrix::zeros(total, n);
        let mut b = DVector::zeros(total);
        let mut r = 0;
        for s in &self.scenarios {
            let p = s.rows();
            a.view_mut((r, 0), (p, n)).copy_from(&s.f);
            b.rows_mut(r, p).copy_from(&s.g);
            r += p;
        }
        (a, b)
    }
}

pub fn realize_scenarios(
    sys: &UncertainConstraintSystem,
    spec: &DistributionSpec,
    stream: SampleStream,
    count: usize,
) -> Result<ScenarioSet> {
    realize_scenarios_from(sys, spec, stream, 0, count)
}

pub fn realize_scenarios_from(
    sys: &UncertainConstraintSystem,
    spec: &DistributionSpec,
    stream: SampleStream,
    start: u64,
    count: usize,
) -> Result<ScenarioSet> {
    if count == 0 {
        return Err(Error::InvalidInput("scenario count must be at least 1".into()));
    }
    let scenarios = (0..count as u64)
        .into_par_iter()
        .map(|i| sys.realize(&spec.sample(&mut stream.rng(start + i))))
        .collect::<Result<Vec<_>>>()?;
    Ok(ScenarioSet {
        scenarios,
        stream,
        start,
    })
}

/// Per-row indicators `h_j(ξ, q)`: 1 when row `j` is violated.
pub fn row_violations(sys: &UncertainConstraintSystem, xi: &DVector<f64>, q: &DVector<f64>) -> Result<Vec<u8>> {
    if xi.len() != sys.dim() {
        return Err(Error::Dimension(format!(
            "ξ has {} entries, expected {}",
            xi.len(),
            sys.dim()
        )));
    }
    let sc = sys.realize(q)?;
    let lhs = &sc.f * xi;
    Ok(lhs.iter().zip(sc.g.iter()).map(|(l, g)| u8::from(l > g)).collect())
}

/// 0 iff `F(q) ξ ≤ g(q)` holds componentwise.
pub fn violation_indicator(sys: &UncertainConstraintSystem, xi: &DVector<f64>, q: &DVector<f64>) -> Result<u8> {
    Ok(row_violations(sys, xi, q)?.into_iter().max().unwrap_or(0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;

    fn example_spec(sigma: DMatrix<f64>) -> DistributionSpec {
        let n = sigma.nrows();
        DistributionSpec::new(vec![
            Block::ScalarUniformFactor {
                lower: 0.5,
                upper: 1.5,
                target: 1,
            },
            Block::Gaussian {
                mean: vec![0.0; n],
                covariance: (0..n).map(|r| sigma.row(r).iter().copied().collect()).collect(),
            },
        ])
        .unwrap()
    }

    #[test]
    fn degenerate_uniform_draws_zeros() {
        let spec = DistributionSpec::uniform_box(vec![0.0], vec![0.0]).unwrap();
        let s = draw(&spec, SampleStream::new(17), 5).unwrap();
        assert_eq!(s.len(), 5);
        assert!(s.iter().all(|v| v[0] == 0.0));
    }

    #[test]
    fn gaussian_mean_within_clt_bound() {
        let spec = DistributionSpec::gaussian(vec![0.0, 0.0], &DMatrix::identity(2, 2)).unwrap();
        let n = 100_000;
        let s = draw(&spec, SampleStream::new(3), n).unwrap();
        for k in 0..2 {
            let mean = s.iter().map(|v| v[k]).sum::<f64>() / n as f64;
            assert!(mean.abs() <= 3.0 / (n as f64).sqrt(), "coordinate {k}: {mean}");
        }
    }

    #[test]
    fn factor_block_mean() {
        let spec = example_spec(DMatrix::identity(3, 3));
        assert_eq!(spec.dim(), 4);
        let n = 20_000;
        let s = draw(&spec, SampleStream::new(5), n).unwrap();
        let q1: Vec<f64> = s.iter().map(|v| v[0]).collect();
        let mean = q1.iter().sum::<f64>() / n as f64;
        let sd = (q1.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
        assert!((mean - 1.0).abs() <= 3.0 * sd / (n as f64).sqrt());
        assert!(q1.iter().all(|v| (0.5..=1.5).contains(v)));
        let prod = spec.apply_factors(&s[0]);
        assert!((prod[1] - s[0][0] * s[0][1]).abs() < 1e-15);
    }

    #[test]
    fn invalid_specs_rejected() {
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(DistributionSpec::gaussian(vec![0.0, 0.0], &bad).is_err());
        assert!(DistributionSpec::uniform_box(vec![1.0], vec![0.0]).is_err());
        assert!(DistributionSpec::new(vec![Block::ScalarUniformFactor {
            lower: 0.0,
            upper: 1.0,
            target: 0
        }])
        .is_err());
    }

    #[test]
    fn spec_json_round_trip_validates() {
        let spec = example_spec(DMatrix::identity(2, 2));
        let json = serde_json::to_string(&spec).unwrap();
        let back: DistributionSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(back, spec);
        let bad = r#"{"blocks":[{"kind":"gaussian","mean":[0,0],"covariance":[[1,0],[0,-1]]}]}"#;
        assert!(serde_json::from_str::<DistributionSpec>(bad).is_err());
    }

    #[test]
    fn samples_are_reproducible_per_index() {
        let spec = example_spec(DMatrix::identity(3, 3));
        let stream = SampleStream::new(99).substream(streams::SCALING);
        let all = draw(&spec, stream, 50).unwrap();
        let tail = draw_range(&spec, stream, 20, 10);
        for (i, v) in tail.iter().enumerate() {
            assert_eq!(v.as_slice(), all[20 + i].as_slice());
        }
        let other = draw(&spec, SampleStream::new(99).substream(streams::DESIGN), 50).unwrap();
        assert_ne!(all[0], other[0]);
    }

    #[test]
    fn deterministic_spec_gives_identical_scenarios() {
        let spec = DistributionSpec::uniform_box(vec![0.3, 0.3], vec![0.3, 0.3]).unwrap();
        let sys = UncertainConstraintSystem::affine(
            DMatrix::identity(2, 2),
            vec![DMatrix::identity(2, 2)],
            dvector![1.0, 1.0],
            vec![],
        )
        .unwrap();
        let set = realize_scenarios(&sys, &spec, SampleStream::new(1), 8).unwrap();
        assert_eq!(set.len(), 8);
        assert!(set.scenarios.iter().all(|s| s == &set.scenarios[0]));
        assert!((set.scenarios[0].f[(0, 0)] - 1.3).abs() < 1e-15);
    }

    #[test]
    fn product_rows_match_draws() {
        // q2 pinned to e1, q1 uniform: rows are q1·e1 with rhs 1.
        let spec = DistributionSpec::new(vec![
            Block::ScalarUniformFactor {
                lower: 0.5,
                upper: 1.5,
                target: 1,
            },
            Block::UniformBox {
                lower: vec![1.0, 0.0, 0.0],
                upper: vec![1.0, 0.0, 0.0],
            },
        ])
        .unwrap();
        let sys = UncertainConstraintSystem::product_from_spec(&spec, 1.0).unwrap();
        let stream = SampleStream::new(4);
        let set = realize_scenarios(&sys, &spec, stream, 25).unwrap();
        let qs = draw(&spec, stream, 25).unwrap();
        for (sc, q) in set.scenarios.iter().zip(&qs) {
            assert_eq!(sc.f.row(0).iter().copied().collect::<Vec<_>>(), vec![q[0], 0.0, 0.0]);
            assert_eq!(sc.g[0], 1.0);
        }
    }

    #[test]
    fn zero_scenarios_rejected() {
        let spec = DistributionSpec::uniform_box(vec![0.0], vec![1.0]).unwrap();
        let sys = UncertainConstraintSystem::affine(DMatrix::identity(1, 1), vec![], dvector![1.0], vec![]).unwrap();
        assert!(realize_scenarios(&sys, &spec, SampleStream::new(0), 0).is_err());
        assert!(draw(&spec, SampleStream::new(0), 0).is_err());
    }

    #[test]
    fn indicator_examples() {
        let sys = UncertainConstraintSystem::affine(
            DMatrix::from_row_slice(1, 3, &[1.0, 0.0, 0.0]),
            vec![],
            dvector![1.0],
            vec![],
        )
        .unwrap();
        let q = dvector![0.0];
        assert_eq!(violation_indicator(&sys, &DVector::zeros(3), &q).unwrap(), 0);
        assert_eq!(violation_indicator(&sys, &dvector![2.0, 0.0, 0.0], &q).unwrap(), 1);
        // Boundary counts as satisfied.
        assert_eq!(violation_indicator(&sys, &dvector![1.0, 5.0, 0.0], &q).unwrap(), 0);
        assert!(violation_indicator(&sys, &DVector::zeros(2), &q).is_err());
    }
}
