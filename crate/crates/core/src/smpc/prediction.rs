use nalgebra::{DMatrix, DVector};

use super::system::UncertainLtiSystem;
use crate::error::{Error, Result};

/// Stacked predictions `x = Φ x_k + Γ v + d` over `l = 0..=T` under
/// `u_l = K x_l + v_l`.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionOperators {
    pub phi: DMatrix<f64>,
    pub gamma: DMatrix<f64>,
    pub d: DVector<f64>,
    pub n: usize,
    pub m: usize,
    pub horizon: usize,
}

impl PredictionOperators {
    /// Columns of `Z = [x_k; v; 1]`.
    pub fn z_dim(&self) -> usize {
        self.n + self.m * self.horizon + 1
    }

    /// `X_l` with `x_l = X_l Z`.
    pub fn state_map(&self, l: usize) -> DMatrix<f64> {
        let (n, mt) = (self.n, self.m * self.horizon);
        let mut out = DMatrix::zeros(n, self.z_dim());
        out.view_mut((0, 0), (n, n))
            .copy_from(&self.phi.view((l * n, 0), (n, n)));
        out.view_mut((0, n), (n, mt))
            .copy_from(&self.gamma.view((l * n, 0), (n, mt)));
        out.view_mut((0, n + mt), (n, 1)).copy_from(&self.d.rows(l * n, n));
        out
    }

    /// `E_l` with `v_l = E_l Z`; zero for `l = T`.
    pub fn input_selector(&self, l: usize) -> DMatrix<f64> {
        let mut e = DMatrix::zeros(self.m, self.z_dim());
        if l < self.horizon {
            for i in 0..self.m {
                e[(i, self.n + l * self.m + i)] = 1.0;
            }
        }
        e
    }

    /// `U_l = K X_l + E_l` with `u_l = U_l Z`.
    pub fn input_map(&self, k: &DMatrix<f64>, l: usize) -> DMatrix<f64> {
        k * self.state_map(l) + self.input_selector(l)
    }

    pub fn apply(&self, x: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        &self.phi * x + &self.gamma * v + &self.d
    }
}

/// Unrolls the closed-loop recursion along the sequence `ws`.
pub fn build_prediction(
    sys: &UncertainLtiSystem,
    k: &DMatrix<f64>,
    ws: &[DVector<f64>],
) -> Result<PredictionOperators> {
    let (n, m, t) = (sys.n(), sys.m(), ws.len());
    if k.shape() != (m, n) {
        return Err(Error::Dimension(format!("gain must be {m}×{n}")));
    }
    if t == 0 {
        return Err(Error::InvalidInput("horizon must be at least 1".into()));
    }
    if let Some(w) = ws.iter().find(|w| w.len() != sys.n_w()) {
        return Err(Error::Dimension(format!(
            "disturbance has {} entries, expected {}",
            w.len(),
            sys.n_w()
        )));
    }
    let mt = m * t;
    let mut phi = DMatrix::zeros((t + 1) * n, n);
    let mut gamma = DMatrix::zeros((t + 1) * n, mt);
    let mut d = DVector::zeros((t + 1) * n);
    phi.view_mut((0, 0), (n, n)).fill_with_identity();
    for (l, w) in ws.iter().enumerate() {
        let bw = sys.b(w);
        let acl = sys.a(w) + &bw * k;
        let phi_next = &acl * phi.view((l * n, 0), (n, n));
        phi.view_mut(((l + 1) * n, 0), (n, n)).copy_from(&phi_next);
        let mut g_next = &acl * gamma.view((l * n, 0), (n, mt));
        let mut block = g_next.view_mut((0, l * m), (n, m));
        block += &bw;
        gamma.view_mut(((l + 1) * n, 0), (n, mt)).copy_from(&g_next);
        let d_next = &acl * d.rows(l * n, n) + sys.additive(w);
        d.rows_mut((l + 1) * n, n).copy_from(&d_next);
    }
    Ok(PredictionOperators {
        phi,
        gamma,
        d,
        n,
        m,
        horizon: t,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::smpc::system::ChainOfIntegrators;
    use nalgebra::dmatrix;

    #[test]
    fn one_step_without_gain() {
        let sys = UncertainLtiSystem::deterministic(dmatrix![1.0, 1.0; 0.0, 1.0], dmatrix![0.5; 1.0]).unwrap();
        let k = DMatrix::zeros(1, 2);
        let p = build_prediction(&sys, &k, &[DVector::zeros(1)]).unwrap();
        assert_eq!(p.phi, dmatrix![1.0, 0.0; 0.0, 1.0; 1.0, 1.0; 0.0, 1.0]);
        assert_eq!(p.gamma, dmatrix![0.0; 0.0; 0.5; 1.0]);
        assert_eq!(p.d, DVector::zeros(4));
    }

    #[test]
    fn first_blocks_with_gain() {
        let sys = ChainOfIntegrators::default().build().unwrap();
        let k = dmatrix![-0.3, -0.8];
        let w = DVector::from_vec(vec![0.4, -0.7, 0.2, 0.9]);
        let p = build_prediction(&sys, &k, &[w.clone(), w.clone()]).unwrap();
        let b = sys.b(&w);
        assert_eq!(p.gamma.view((2, 0), (2, 1)), b);
        assert_eq!(p.phi.view((2, 0), (2, 2)), sys.a(&w) + &b * &k);
    }
}
