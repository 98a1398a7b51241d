//! ADMM solver for the smooth + sparse block decomposition
//!
//! ```text
//! minimize   ‖β‖₁ + λ1‖s‖₁ + λ2 (Σᵢ ‖y_rowᵢ‖₂ + Σⱼ ‖z_colⱼ‖₂)
//! subject to f = Pα + s,  α = β,  s = y,  s = z
//! ```
//!
//! which is the split form of `‖α‖₁ + λ1‖s‖₁ + λ2·G(s)` s.t. `f = Pα + s`,
//! where `G` sums the ℓ2 norms of every row and every column of the block.
//! Row `i` of a block holds the entries with y-index `i`; column `j` holds
//! the entries with x-index `j` (row-major layout).

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dct_basis::BasisMatrix;
use crate::error::{Error, Result};
use crate::operators::{block_soft_in_place, soft};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverParams {
    /// Weight of ‖s‖₁.
    pub lambda1: f64,
    /// Weight of the row/column group norm of `s`.
    pub lambda2: f64,
    /// Penalties for the constraints `f = Pα + s`, `α = β`, `s = y`, `s = z`.
    pub rho: [f64; 4],
    pub max_iters: usize,
    /// Keep per-iteration residuals in [`Decomposition::history`].
    pub record_residuals: bool,
    /// Stop once all four absolute residuals drop below this value.
    /// `None` always runs `max_iters` iterations.
    pub tolerance: Option<f64>,
}

impl Default for SolverParams {
    fn default() -> Self {
        Self {
            lambda1: 100.0,
            lambda2: 2.0,
            rho: [1.0; 4],
            max_iters: 50,
            record_residuals: false,
            tolerance: None,
        }
    }
}

impl SolverParams {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidArgument(format!(
                    "{name} must be positive and finite, got {v}"
                )))
            }
        };
        positive("lambda1", self.lambda1)?;
        positive("lambda2", self.lambda2)?;
        for (i, &r) in self.rho.iter().enumerate() {
            positive(&format!("rho{}", i + 1), r)?;
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidArgument(
                "max_iters must be at least 1".into(),
            ));
        }
        if let Some(t) = self.tolerance {
            positive("tolerance", t)?;
        }
        Ok(())
    }
}

/// Primal and dual iterates.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverState {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub s: Vec<f64>,
    pub y: Vec<f64>,
    pub z: Vec<f64>,
    /// Dual of `f = Pα + s`.
    pub w1: Vec<f64>,
    /// Dual of `α = β`.
    pub w2: Vec<f64>,
    /// Dual of `s = y`.
    pub v1: Vec<f64>,
    /// Dual of `s = z`.
    pub v2: Vec<f64>,
}

impl SolverState {
    fn zeros(dim: usize, k: usize) -> Self {
        Self {
            alpha: vec![0.0; k],
            beta: vec![0.0; k],
            s: vec![0.0; dim],
            y: vec![0.0; dim],
            z: vec![0.0; dim],
            w1: vec![0.0; dim],
            w2: vec![0.0; k],
            v1: vec![0.0; dim],
            v2: vec![0.0; dim],
        }
    }

    fn is_finite(&self) -> bool {
        [
            &self.alpha,
            &self.beta,
            &self.s,
            &self.y,
            &self.z,
            &self.w1,
            &self.w2,
            &self.v1,
            &self.v2,
        ]
        .iter()
        .all(|v| v.iter().all(|x| x.is_finite()))
    }

    fn check_dims(&self, basis: &BasisMatrix) -> Result<()> {
        let (d, k) = (basis.dim(), basis.k());
        let ok = [&self.alpha, &self.beta, &self.w2]
            .iter()
            .all(|v| v.len() == k)
            && [&self.s, &self.y, &self.z, &self.w1, &self.v1, &self.v2]
                .iter()
                .all(|v| v.len() == d);
        if ok {
            Ok(())
        } else {
            Err(Error::DimensionMismatch(format!(
                "solver state does not match basis (N²={d}, K={k})"
            )))
        }
    }
}

/// Zero primal and dual variables sized for `basis`.
pub fn init_state(f: &[f64], basis: &BasisMatrix) -> Result<SolverState> {
    check_signal(f, basis)?;
    Ok(SolverState::zeros(basis.dim(), basis.k()))
}

fn check_signal(f: &[f64], basis: &BasisMatrix) -> Result<()> {
    if f.len() != basis.dim() {
        return Err(Error::DimensionMismatch(format!(
            "block has {} samples, basis expects {}",
            f.len(),
            basis.dim()
        )));
    }
    Ok(())
}

/// How the α-update applies `A⁻¹ = (ρ1 PᵀP + ρ2 I)⁻¹`.
#[derive(Debug, Clone, PartialEq)]
pub enum AlphaSystem {
    /// Precomputed dense inverse.
    Dense(DMatrix<f64>),
    /// `PᵀP = I`, so `A⁻¹ = I / (ρ1 + ρ2)`.
    Orthonormal { scale: f64 },
}

impl AlphaSystem {
    pub fn dense(basis: &BasisMatrix, rho1: f64, rho2: f64) -> Result<Self> {
        let k = basis.k();
        let a = basis.gram() * rho1 + DMatrix::<f64>::identity(k, k) * rho2;
        let chol = a.cholesky().ok_or_else(|| {
            Error::InvalidArgument("alpha system matrix is not positive definite".into())
        })?;
        Ok(AlphaSystem::Dense(chol.inverse()))
    }

    pub fn orthonormal(rho1: f64, rho2: f64) -> Self {
        AlphaSystem::Orthonormal {
            scale: 1.0 / (rho1 + rho2),
        }
    }

    pub fn apply(&self, rhs: &[f64]) -> Vec<f64> {
        match self {
            AlphaSystem::Dense(inv) => (0..inv.nrows())
                .map(|i| (0..inv.ncols()).map(|j| inv[(i, j)] * rhs[j]).sum())
                .collect(),
            AlphaSystem::Orthonormal { scale } => rhs.iter().map(|r| r * scale).collect(),
        }
    }
}

/// Residuals after one iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterResiduals {
    pub iter: usize,
    /// ‖f − Pα − s‖₂ / ‖f‖₂ (absolute when f = 0).
    pub primal: f64,
    pub alpha_beta: f64,
    pub s_y: f64,
    pub s_z: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition {
    pub alpha: Vec<f64>,
    pub s: Vec<f64>,
    /// ‖f − Pα − s‖₂ / ‖f‖₂
    pub primal_residual: f64,
    /// (‖α − β‖₂, ‖s − y‖₂, ‖s − z‖₂)
    pub split_residuals: (f64, f64, f64),
    pub iters_run: usize,
    pub objective: f64,
    pub history: Vec<IterResiduals>,
}

/// Solver bound to one basis and parameter set; `A⁻¹` is computed once here
/// and reused for every block.
#[derive(Debug, Clone)]
pub struct Solver<'a> {
    basis: &'a BasisMatrix,
    params: SolverParams,
    alpha_system: AlphaSystem,
}

impl<'a> Solver<'a> {
    pub fn new(basis: &'a BasisMatrix, params: SolverParams) -> Result<Self> {
        params.validate()?;
        let alpha_system = AlphaSystem::dense(basis, params.rho[0], params.rho[1])?;
        Ok(Self {
            basis,
            params,
            alpha_system,
        })
    }

    pub fn with_alpha_system(mut self, alpha_system: AlphaSystem) -> Self {
        self.alpha_system = alpha_system;
        self
    }

    pub fn basis(&self) -> &BasisMatrix {
        self.basis
    }

    pub fn params(&self) -> &SolverParams {
        &self.params
    }

    /// One pass of the α, β, s, y, z updates followed by dual ascent.
    pub fn step(&self, st: &mut SolverState, f: &[f64]) -> Result<()> {
        check_signal(f, self.basis)?;
        st.check_dims(self.basis)?;
        let [r1, r2, r3, r4] = self.params.rho;
        let n = self.basis.n();

        // α ← A⁻¹ [Pᵀ(w1 + ρ1(f − s)) − w2 + ρ2β]
        let lifted: Vec<f64> = (0..f.len())
            .map(|i| st.w1[i] + r1 * (f[i] - st.s[i]))
            .collect();
        let mut rhs = self.basis.analyze(&lifted);
        for ((r, w), b) in rhs.iter_mut().zip(&st.w2).zip(&st.beta) {
            *r += r2 * b - w;
        }
        st.alpha = self.alpha_system.apply(&rhs);

        // β ← Soft(α + w2/ρ2, 1/ρ2)
        let shifted: Vec<f64> = st
            .alpha
            .iter()
            .zip(&st.w2)
            .map(|(a, w)| a + w / r2)
            .collect();
        st.beta = soft(&shifted, 1.0 / r2)?;

        // s ← Soft(C, λ1) / (ρ1 + ρ3 + ρ4)
        let smooth = self.basis.synthesize(&st.alpha);
        let c: Vec<f64> = (0..f.len())
            .map(|i| {
                st.w1[i] - st.v1[i] - st.v2[i]
                    + r1 * (f[i] - smooth[i])
                    + r3 * st.y[i]
                    + r4 * st.z[i]
            })
            .collect();
        let denom = r1 + r3 + r4;
        st.s = soft(&c, self.params.lambda1)?
            .into_iter()
            .map(|v| v / denom)
            .collect();

        // Row groups: y ← Block-Soft(s + v1/ρ3, λ2/ρ3)
        for i in 0..f.len() {
            st.y[i] = st.s[i] + st.v1[i] / r3;
        }
        for row in st.y.chunks_exact_mut(n) {
            block_soft_in_place(row, self.params.lambda2 / r3)?;
        }

        // Column groups: z ← Block-Soft(s + v2/ρ4, λ2/ρ4)
        let mut col = vec![0.0; n];
        for j in 0..n {
            for (i, c) in col.iter_mut().enumerate() {
                *c = st.s[i * n + j] + st.v2[i * n + j] / r4;
            }
            block_soft_in_place(&mut col, self.params.lambda2 / r4)?;
            for (i, c) in col.iter().enumerate() {
                st.z[i * n + j] = *c;
            }
        }

        for i in 0..f.len() {
            st.w1[i] += r1 * (f[i] - smooth[i] - st.s[i]);
            st.v1[i] += r3 * (st.s[i] - st.y[i]);
            st.v2[i] += r4 * (st.s[i] - st.z[i]);
        }
        for ((w, a), b) in st.w2.iter_mut().zip(&st.alpha).zip(&st.beta) {
            *w += r2 * (a - b);
        }
        Ok(())
    }

    /// Absolute residuals (‖f − Pα − s‖, ‖α − β‖, ‖s − y‖, ‖s − z‖).
    fn residuals(&self, st: &SolverState, f: &[f64]) -> [f64; 4] {
        let smooth = self.basis.synthesize(&st.alpha);
        let primal = norm2_iter((0..f.len()).map(|i| f[i] - smooth[i] - st.s[i]));
        [
            primal,
            norm2_iter(st.alpha.iter().zip(&st.beta).map(|(a, b)| a - b)),
            norm2_iter(st.s.iter().zip(&st.y).map(|(a, b)| a - b)),
            norm2_iter(st.s.iter().zip(&st.z).map(|(a, b)| a - b)),
        ]
    }

    /// Run from the zero state for `max_iters` iterations (or until the
    /// optional tolerance is met).
    pub fn solve(&self, f: &[f64]) -> Result<Decomposition> {
        let mut st = init_state(f, self.basis)?;
        if let Some(i) = f.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "non-finite block sample at index {i}"
            )));
        }
        let f_norm = norm2_iter(f.iter().copied());
        let relative = |r: f64| if f_norm > 0.0 { r / f_norm } else { r };
        let mut history = Vec::new();
        let mut iters_run = 0;
        for iter in 1..=self.params.max_iters {
            self.step(&mut st, f)?;
            if !st.is_finite() {
                return Err(Error::NonFinite { iter });
            }
            iters_run = iter;
            let needs_residuals = self.params.record_residuals || self.params.tolerance.is_some();
            if needs_residuals {
                let last = self.residuals(&st, f);
                if self.params.record_residuals {
                    history.push(IterResiduals {
                        iter,
                        primal: relative(last[0]),
                        alpha_beta: last[1],
                        s_y: last[2],
                        s_z: last[3],
                    });
                }
                if let Some(tol) = self.params.tolerance {
                    if last.iter().all(|&r| r < tol) {
                        break;
                    }
                }
            }
        }
        let [primal, ab, sy, sz] = self.residuals(&st, f);
        let objective = objective(&st.alpha, &st.s, &self.params);
        Ok(Decomposition {
            alpha: st.alpha,
            s: st.s,
            primal_residual: relative(primal),
            split_residuals: (ab, sy, sz),
            iters_run,
            objective,
            history,
        })
    }
}

/// One ADMM iteration as a pure function of the previous state.
pub fn admm_step(
    state: &SolverState,
    f: &[f64],
    basis: &BasisMatrix,
    params: &SolverParams,
) -> Result<SolverState> {
    let solver = Solver::new(basis, params.clone())?;
    let mut next = state.clone();
    solver.step(&mut next, f)?;
    Ok(next)
}

pub fn solve(f: &[f64], basis: &BasisMatrix, params: &SolverParams) -> Result<Decomposition> {
    Solver::new(basis, params.clone())?.solve(f)
}

fn norm2_iter(it: impl Iterator<Item = f64>) -> f64 {
    it.map(|v| v * v).sum::<f64>().sqrt()
}

/// Side length of a square block stored as `len` samples.
fn block_side(len: usize) -> usize {
    let n = (len as f64).sqrt().round() as usize;
    assert_eq!(n * n, len, "block of {len} samples is not square");
    n
}

/// Σ over rows of ‖s_row‖₂ plus Σ over columns of ‖s_col‖₂ for a square block.
///
/// Panics if `s.len()` is not a perfect square.
pub fn group_norm(s: &[f64]) -> f64 {
    let n = block_side(s.len());
    let rows: f64 = s
        .chunks_exact(n)
        .map(|r| norm2_iter(r.iter().copied()))
        .sum();
    let cols: f64 = (0..n)
        .map(|j| norm2_iter((0..n).map(|i| s[i * n + j])))
        .sum();
    rows + cols
}

/// `‖α‖₁ + λ1‖s‖₁ + λ2·G(s)`.
///
/// Panics if `s.len()` is not a perfect square.
pub fn objective(alpha: &[f64], s: &[f64], params: &SolverParams) -> f64 {
    let l1 = |v: &[f64]| v.iter().map(|x| x.abs()).sum::<f64>();
    l1(alpha) + params.lambda1 * l1(s) + params.lambda2 * group_norm(s)
}
