//! The history basis `P_k`: `m/2` column pairs `(x/‖x‖, g/‖g‖)` kept in a ring.
//!
//! Columns are overwritten in place, oldest pair first. All products with the
//! basis are independent of the physical column order; the logical
//! oldest-to-newest order is only reconstructed for inspection.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Basis {
    columns: DMatrix<f64>,
    next_slot: usize,
    frozen: bool,
}

fn normalized(v: &DVector<f64>) -> DVector<f64> {
    let norm = v.norm();
    if norm > 0.0 && norm.is_finite() {
        v / norm
    } else {
        DVector::zeros(v.len())
    }
}

impl Basis {
    /// `P_0 = [e_1, …, e_{m−2}, x0/‖x0‖, g0/‖g0‖]`, zero-norm vectors giving zero columns.
    ///
    /// `g0` is the lifted sketched gradient `Q_0 Q_0ᵀ∇f(x_0)` in `Rⁿ`.
    pub fn init(x0: &DVector<f64>, g0: &DVector<f64>, m: usize) -> Result<Self> {
        let n = x0.len();
        if m < 2 || !m.is_multiple_of(2) {
            return Err(Error::InvalidConfig(format!("subspace size m={m} must be even and >= 2")));
        }
        if m > n {
            return Err(Error::InvalidConfig(format!("subspace size m={m} exceeds dimension n={n}")));
        }
        if g0.len() != n {
            return Err(Error::InvalidConfig("gradient and point lengths differ".into()));
        }
        let mut columns = DMatrix::zeros(n, m);
        for j in 0..m - 2 {
            columns[(j, j)] = 1.0;
        }
        columns.set_column(m - 2, &normalized(x0));
        columns.set_column(m - 1, &normalized(g0));
        Ok(Self {
            columns,
            next_slot: 0,
            frozen: false,
        })
    }

    /// A fixed basis that ignores [`Basis::push_pair`]; used to pin `P_k` in tests.
    pub fn fixed(columns: DMatrix<f64>) -> Self {
        Self {
            columns,
            next_slot: 0,
            frozen: true,
        }
    }

    pub fn dim(&self) -> usize {
        self.columns.nrows()
    }

    /// Number of columns `m`.
    pub fn size(&self) -> usize {
        self.columns.ncols()
    }

    pub fn pair_count(&self) -> usize {
        self.size() / 2
    }

    pub fn next_slot(&self) -> usize {
        self.next_slot
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    /// Physical column storage.
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.columns
    }

    /// Replaces the oldest pair with `(x/‖x‖, g_lift/‖g_lift‖)`.
    pub fn push_pair(&mut self, x: &DVector<f64>, g_lift: &DVector<f64>) {
        if self.frozen {
            return;
        }
        let slot = self.next_slot;
        self.columns.set_column(2 * slot, &normalized(x));
        self.columns.set_column(2 * slot + 1, &normalized(g_lift));
        self.next_slot = (slot + 1) % self.pair_count();
    }

    /// `P v`.
    pub fn apply(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        if v.len() != self.size() {
            return Err(Error::InvalidConfig(format!(
                "vector of length {} applied to basis with {} columns",
                v.len(),
                self.size()
            )));
        }
        Ok(&self.columns * v)
    }

    /// `Pᵀ u`.
    pub fn apply_transpose(&self, u: &DVector<f64>) -> Result<DVector<f64>> {
        if u.len() != self.dim() {
            return Err(Error::InvalidConfig(format!(
                "vector of length {} for basis of dimension {}",
                u.len(),
                self.dim()
            )));
        }
        Ok(self.columns.tr_mul(u))
    }

    /// Columns in oldest-to-newest pair order.
    pub fn logical_columns(&self) -> DMatrix<f64> {
        if self.frozen {
            return self.columns.clone();
        }
        let pairs = self.pair_count();
        let mut out = DMatrix::zeros(self.dim(), self.size());
        for i in 0..pairs {
            let slot = (self.next_slot + i) % pairs;
            out.set_column(2 * i, &self.columns.column(2 * slot));
            out.set_column(2 * i + 1, &self.columns.column(2 * slot + 1));
        }
        out
    }

    pub fn column_norms(&self) -> Vec<f64> {
        self.columns.column_iter().map(|c| c.norm()).collect()
    }

    fn gram_eigenvalues(&self) -> DVector<f64> {
        SymmetricEigen::new(self.columns.tr_mul(&self.columns)).eigenvalues
    }

    /// Largest singular value of `P`.
    pub fn op_norm(&self) -> f64 {
        self.gram_eigenvalues().max().max(0.0).sqrt()
    }

    /// Numerical rank: singular values above `1e-10 · σ_max`.
    pub fn rank(&self) -> usize {
        let sigma = self.columns.clone().svd(false, false).singular_values;
        let top = sigma.max();
        if top == 0.0 {
            return 0;
        }
        sigma.iter().filter(|&&s| s > 1e-10 * top).count()
    }
}
