use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{from_rows, to_rows};
use crate::uncertainty::{Block, DistributionSpec};

/// `x⁺ = A(w)x + B(w)u + a(w)` with `A(w) = A₀ + Σ wᵢAᵢ`,
/// `B(w) = B₀ + Σ wᵢBᵢ`, `a(w) = Σ wᵢaᵢ` and zero-mean `w`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SystemJson", into = "SystemJson")]
pub struct UncertainLtiSystem {
    a0: DMatrix<f64>,
    b0: DMatrix<f64>,
    a_terms: Vec<DMatrix<f64>>,
    b_terms: Vec<DMatrix<f64>>,
    additive: Vec<DVector<f64>>,
    disturbance: DistributionSpec,
}

/// Wire form; term lists may be shorter than `n_w` (missing terms are zero).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemJson {
    pub a0: Vec<Vec<f64>>,
    pub b0: Vec<Vec<f64>>,
    #[serde(default)]
    pub a_terms: Vec<Vec<Vec<f64>>>,
    #[serde(default)]
    pub b_terms: Vec<Vec<Vec<f64>>>,
    #[serde(default)]
    pub additive: Vec<Vec<f64>>,
    pub disturbance: DistributionSpec,
}

impl From<UncertainLtiSystem> for SystemJson {
    fn from(s: UncertainLtiSystem) -> Self {
        SystemJson {
            a0: to_rows(&s.a0),
            b0: to_rows(&s.b0),
            a_terms: s.a_terms.iter().map(to_rows).collect(),
            b_terms: s.b_terms.iter().map(to_rows).collect(),
            additive: s.additive.iter().map(|v| v.iter().copied().collect()).collect(),
            disturbance: s.disturbance,
        }
    }
}

impl TryFrom<SystemJson> for UncertainLtiSystem {
    type Error = Error;

    fn try_from(j: SystemJson) -> Result<Self> {
        let n = j.a0.len();
        let m = j.b0.first().map_or(0, |r| r.len());
        let a0 = from_rows(&j.a0, n)?;
        let b0 = from_rows(&j.b0, m)?;
        let a_terms = j.a_terms.iter().map(|t| from_rows(t, n)).collect::<Result<Vec<_>>>()?;
        let b_terms = j.b_terms.iter().map(|t| from_rows(t, m)).collect::<Result<Vec<_>>>()?;
        let additive = j.additive.into_iter().map(DVector::from_vec).collect();
        UncertainLtiSystem::new(a0, b0, a_terms, b_terms, additive, j.disturbance)
    }
}

impl UncertainLtiSystem {
    pub fn new(
        a0: DMatrix<f64>,
        b0: DMatrix<f64>,
        mut a_terms: Vec<DMatrix<f64>>,
        mut b_terms: Vec<DMatrix<f64>>,
        mut additive: Vec<DVector<f64>>,
        disturbance: DistributionSpec,
    ) -> Result<Self> {
        let n = a0.nrows();
        let m = b0.ncols();
        let nw = disturbance.dim();
        if n == 0 || m == 0 {
            return Err(Error::Dimension("system needs at least one state and one input".into()));
        }
        if a0.ncols() != n || b0.nrows() != n {
            return Err(Error::Dimension(format!("A₀ must be {n}×{n} and B₀ {n}×{m}")));
        }
        if a_terms.len() > nw || b_terms.len() > nw || additive.len() > nw {
            return Err(Error::Dimension(format!(
                "more uncertainty terms than disturbance entries ({nw})"
            )));
        }
        if a_terms.iter().any(|t| t.shape() != (n, n))
            || b_terms.iter().any(|t| t.shape() != (n, m))
            || additive.iter().any(|t| t.len() != n)
        {
            return Err(Error::Dimension(
                "uncertainty terms must match A₀, B₀ and the state size".into(),
            ));
        }
        let mean = disturbance.mean();
        if mean.amax() > 1e-12 {
            return Err(Error::InvalidInput(format!(
                "disturbance must be zero-mean (largest mean entry {:.3e})",
                mean.amax()
            )));
        }
        a_terms.resize(nw, DMatrix::zeros(n, n));
        b_terms.resize(nw, DMatrix::zeros(n, m));
        additive.resize(nw, DVector::zeros(n));
        Ok(UncertainLtiSystem {
            a0,
            b0,
            a_terms,
            b_terms,
            additive,
            disturbance,
        })
    }

    /// Nominal system without uncertainty.
    pub fn deterministic(a0: DMatrix<f64>, b0: DMatrix<f64>) -> Result<Self> {
        let spec = DistributionSpec::uniform_box(vec![0.0], vec![0.0])?;
        Self::new(a0, b0, vec![], vec![], vec![], spec)
    }

    pub fn n(&self) -> usize {
        self.a0.nrows()
    }

    pub fn m(&self) -> usize {
        self.b0.ncols()
    }

    pub fn n_w(&self) -> usize {
        self.disturbance.dim()
    }

    pub fn a0(&self) -> &DMatrix<f64> {
        &self.a0
    }

    pub fn b0(&self) -> &DMatrix<f64> {
        &self.b0
    }

    pub fn disturbance(&self) -> &DistributionSpec {
        &self.disturbance
    }

    pub fn a(&self, w: &DVector<f64>) -> DMatrix<f64> {
        let mut a = self.a0.clone();
        for (wi, ai) in w.iter().zip(&self.a_terms) {
            if *wi != 0.0 {
                a += ai * *wi;
            }
        }
        a
    }

    pub fn b(&self, w: &DVector<f64>) -> DMatrix<f64> {
        let mut b = self.b0.clone();
        for (wi, bi) in w.iter().zip(&self.b_terms) {
            if *wi != 0.0 {
                b += bi * *wi;
            }
        }
        b
    }

    pub fn additive(&self, w: &DVector<f64>) -> DVector<f64> {
        let mut a = DVector::zeros(self.n());
        for (wi, ai) in w.iter().zip(&self.additive) {
            a += ai * *wi;
        }
        a
    }

    pub fn step(&self, x: &DVector<f64>, u: &DVector<f64>, w: &DVector<f64>) -> DVector<f64> {
        self.a(w) * x + self.b(w) * u + self.additive(w)
    }

    /// Distribution of a length-`t` sequence `(w₀, …, w_{t−1})` stacked
    /// into one vector.
    pub fn sequence_spec(&self, t: usize) -> Result<DistributionSpec> {
        let blocks = self.disturbance.blocks();
        let nb = blocks.len();
        let mut out = Vec::with_capacity(nb * t);
        for s in 0..t {
            for b in blocks {
                out.push(match b {
                    Block::ScalarUniformFactor { lower, upper, target } => Block::ScalarUniformFactor {
                        lower: *lower,
                        upper: *upper,
                        target: target + s * nb,
                    },
                    other => other.clone(),
                });
            }
        }
        DistributionSpec::new(out)
    }
}

/// Split a stacked sequence into its `t` per-step vectors.
pub fn split_sequence(q: &DVector<f64>, n_w: usize) -> Vec<DVector<f64>> {
    (0..q.len() / n_w).map(|s| q.rows(s * n_w, n_w).into_owned()).collect()
}

/// Chain of `n` integrators driven by one input, discretized exactly with
/// step `dt`, with uniform multiplicative uncertainty on the coupling and
/// input gains and bounded additive noise on every state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChainOfIntegrators {
    pub n: usize,
    pub dt: f64,
    /// Relative spread of `A₀ − I`.
    pub a_spread: f64,
    /// Relative spread of `B₀`.
    pub b_spread: f64,
    /// Half-width of the additive noise on each state.
    pub noise: f64,
}

impl Default for ChainOfIntegrators {
    fn default() -> Self {
        ChainOfIntegrators {
            n: 2,
            dt: 0.2,
            a_spread: 0.1,
            b_spread: 0.1,
            noise: 0.01,
        }
    }
}

impl ChainOfIntegrators {
    pub fn nominal(&self) -> (DMatrix<f64>, DMatrix<f64>) {
        let n = self.n;
        let mut fact = vec![1.0; n + 1];
        for k in 1..=n {
            fact[k] = fact[k - 1] * k as f64;
        }
        let a = DMatrix::from_fn(n, n, |i, j| {
            if j >= i {
                self.dt.powi((j - i) as i32) / fact[j - i]
            } else {
                0.0
            }
        });
        let b = DMatrix::from_fn(n, 1, |i, _| self.dt.powi((n - i) as i32) / fact[n - i]);
        (a, b)
    }

    pub fn build(&self) -> Result<UncertainLtiSystem> {
        if self.n == 0 || !(self.dt > 0.0) {
            return Err(Error::InvalidInput("chain needs n ≥ 1 and dt > 0".into()));
        }
        if self.a_spread < 0.0 || self.b_spread < 0.0 || self.noise < 0.0 {
            return Err(Error::InvalidInput("spreads and noise must be nonnegative".into()));
        }
        let n = self.n;
        let (a0, b0) = self.nominal();
        let nw = 2 + n;
        let spec = DistributionSpec::uniform_box(vec![-1.0; nw], vec![1.0; nw])?;
        let a1 = (&a0 - DMatrix::identity(n, n)) * self.a_spread;
        let b1 = &b0 * self.b_spread;
        let additive = (0..n)
            .map(|i| {
                let mut e = DVector::zeros(n);
                e[i] = self.noise;
                e
            })
            .collect::<Vec<_>>();
        let mut a_terms = vec![a1, DMatrix::zeros(n, n)];
        let mut b_terms = vec![DMatrix::zeros(n, 1), b1];
        a_terms.resize(nw, DMatrix::zeros(n, n));
        b_terms.resize(nw, DMatrix::zeros(n, 1));
        let mut add = vec![DVector::zeros(n), DVector::zeros(n)];
        add.extend(additive);
        UncertainLtiSystem::new(a0, b0, a_terms, b_terms, add, spec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    #[test]
    fn double_integrator_discretization() {
        let c = ChainOfIntegrators {
            dt: 0.5,
            ..Default::default()
        };
        let (a, b) = c.nominal();
        assert_eq!(a, dmatrix![1.0, 0.5; 0.0, 1.0]);
        assert_eq!(b, dmatrix![0.125; 0.5]);
    }

    #[test]
    fn rejects_biased_disturbance() {
        let spec = DistributionSpec::uniform_box(vec![0.0], vec![1.0]).unwrap();
        let r = UncertainLtiSystem::new(
            DMatrix::identity(1, 1),
            DMatrix::identity(1, 1),
            vec![],
            vec![],
            vec![DVector::from_element(1, 1.0)],
            spec,
        );
        assert!(r.is_err());
    }

    #[test]
    fn sequence_spec_shifts_factor_targets() {
        let spec = DistributionSpec::new(vec![
            Block::ScalarUniformFactor {
                lower: -1.0,
                upper: 1.0,
                target: 1,
            },
            Block::UniformBox {
                lower: vec![-1.0],
                upper: vec![1.0],
            },
        ])
        .unwrap();
        let sys = UncertainLtiSystem::new(
            DMatrix::identity(1, 1),
            DMatrix::identity(1, 1),
            vec![],
            vec![],
            vec![],
            spec,
        )
        .unwrap();
        let seq = sys.sequence_spec(3).unwrap();
        assert_eq!(seq.dim(), 6);
        match &seq.blocks()[4] {
            Block::ScalarUniformFactor { target, .. } => assert_eq!(*target, 5),
            b => panic!("unexpected block {b:?}"),
        }
    }

    #[test]
    fn json_round_trip() {
        let sys = ChainOfIntegrators::default().build().unwrap();
        let s = serde_json::to_string(&sys).unwrap();
        let back: UncertainLtiSystem = serde_json::from_str(&s).unwrap();
        assert_eq!(back, sys);
    }
}
