//! Subspace inverse-Hessian approximation: BFGS update, curvature guard and
//! spectral clamping into `[M1, M2]`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Symmetric `m×m` matrix `H_k` with spectrum kept inside `[m1, m2]`.
#[derive(Clone, Debug, PartialEq)]
pub struct InverseHessian {
    matrix: DMatrix<f64>,
    m1: f64,
    m2: f64,
}

/// Subspace curvature pair `(s', y')`.
#[derive(Clone, Debug, PartialEq)]
pub struct CurvaturePair {
    pub s: DVector<f64>,
    pub y: DVector<f64>,
}

/// Outcome of [`curvature_guard`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CurvatureDecision {
    Update,
    ResetIdentity,
}

/// Inverse BFGS update `(I − ρsyᵀ) H (I − ρysᵀ) + ρssᵀ`, `ρ = 1/sᵀy`.
///
/// Evaluated in the expanded form
/// `H − ρ(s(Hy)ᵀ + (Hy)sᵀ) + (ρ²·yᵀHy + ρ) ssᵀ`, which costs `O(m²)`.
pub fn bfgs_update(h: &DMatrix<f64>, s: &DVector<f64>, y: &DVector<f64>) -> Result<DMatrix<f64>> {
    let sy = s.dot(y);
    if !(sy > 0.0) || !sy.is_finite() {
        return Err(Error::ContractViolation(format!(
            "BFGS update requires sᵀy > 0, got {sy}"
        )));
    }
    let rho = 1.0 / sy;
    let hy = h * y;
    let yhy = y.dot(&hy);
    let mut out = h.clone();
    out.ger(-rho, s, &hy, 1.0);
    out.ger(-rho, &hy, s, 1.0);
    out.ger(rho * rho * yhy + rho, s, s, 1.0);
    Ok(out)
}

/// Resets to the identity when `sᵀy` is below `eps_curv` (or not positive).
pub fn curvature_guard(s: &DVector<f64>, y: &DVector<f64>, eps_curv: f64) -> CurvatureDecision {
    let sy = s.dot(y);
    if sy >= eps_curv && sy > 0.0 && sy.is_finite() {
        CurvatureDecision::Update
    } else {
        CurvatureDecision::ResetIdentity
    }
}

/// Clamps the eigenvalues of `(H̃+H̃ᵀ)/2` into `[m1, m2]`, keeping its eigenvectors.
pub fn modify_eig(ht: &DMatrix<f64>, m1: f64, m2: f64) -> Result<InverseHessian> {
    if !(m1 > 0.0 && m2 >= m1) {
        return Err(Error::InvalidConfig(format!("need 0 < M1 <= M2, got M1={m1}, M2={m2}")));
    }
    if !ht.is_square() {
        return Err(Error::ContractViolation("modify_eig needs a square matrix".into()));
    }
    if ht.iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericalError("non-finite entry in inverse-Hessian approximation".into()));
    }
    let sym = (ht + ht.transpose()) * 0.5;
    let eig = SymmetricEigen::try_new(sym, f64::EPSILON, 0)
        .ok_or_else(|| Error::NumericalError("symmetric eigendecomposition did not converge".into()))?;
    let clamped = eig.eigenvalues.map(|l| l.clamp(m1, m2));
    let v = &eig.eigenvectors;
    let mut matrix = v * DMatrix::from_diagonal(&clamped) * v.transpose();
    // remove the rounding asymmetry of the reconstruction
    matrix = (&matrix + matrix.transpose()) * 0.5;
    Ok(InverseHessian { matrix, m1, m2 })
}

impl InverseHessian {
    /// `H_0 = Modify_eig(I)`; equals `I` whenever `m1 ≤ 1 ≤ m2`.
    pub fn new(m: usize, m1: f64, m2: f64) -> Result<Self> {
        modify_eig(&DMatrix::identity(m, m), m1, m2)
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn bounds(&self) -> (f64, f64) {
        (self.m1, self.m2)
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// `H g`.
    pub fn apply(&self, g: &DVector<f64>) -> DVector<f64> {
        &self.matrix * g
    }

    /// Eigenvalues in ascending order.
    pub fn spectrum(&self) -> Vec<f64> {
        let mut eig: Vec<f64> = SymmetricEigen::new(self.matrix.clone()).eigenvalues.iter().copied().collect();
        eig.sort_by(f64::total_cmp);
        eig
    }

    pub fn reset(&mut self) -> Result<()> {
        *self = Self::new(self.dim(), self.m1, self.m2)?;
        Ok(())
    }

    /// Guarded update: reset on weak curvature, otherwise BFGS followed by the clamp.
    ///
    /// With `relaxed` set, the clamp is skipped for pairs with `sᵀy ≥ 0`.
    pub fn update(&mut self, pair: &CurvaturePair, eps_curv: f64, relaxed: bool) -> Result<CurvatureDecision> {
        let decision = curvature_guard(&pair.s, &pair.y, eps_curv);
        match decision {
            CurvatureDecision::ResetIdentity => self.reset()?,
            CurvatureDecision::Update => {
                let ht = bfgs_update(&self.matrix, &pair.s, &pair.y)?;
                if relaxed {
                    if ht.iter().any(|v| !v.is_finite()) {
                        return Err(Error::NumericalError("non-finite BFGS update".into()));
                    }
                    self.matrix = ht;
                } else {
                    *self = modify_eig(&ht, self.m1, self.m2)?;
                }
            }
        }
        Ok(decision)
    }
}
