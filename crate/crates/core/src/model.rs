//! Linear stochastic Hamiltonian (LSH) systems.
//!
//! An LSH system is the quadruple `(K, M, F, N)` of stiffness, mass, damping
//! and coupling matrices. With the state `x = (q, p)` it obeys
//!
//! ```text
//! dx = A x dt + B dW,   y = C x,
//! A = [[0, M⁻¹], [-K, -F M⁻¹]],   B = [0; Nᵀ],   C = [N, 0].
//! ```

use alloc::vec::Vec;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::math;
use crate::numlin::{
    definiteness_tolerance, require_positive_definite, require_positive_semidefinite, sym_eig,
    CMatrix, Matrix, SymMatrix,
};

/// Condition number of `K` above which the static gain is flagged.
pub const STATIC_GAIN_CONDITION_WARNING: f64 = 1e12;

/// The quadruple `(K, M, F, N)` with `M ≻ 0`, `F ⪰ 0`, `K` symmetric and
/// `N` of shape `m × n`.
#[derive(Debug, Clone, PartialEq)]
pub struct LshSystem {
    stiffness: SymMatrix,
    mass: SymMatrix,
    damping: SymMatrix,
    coupling: Matrix,
    mass_inv: SymMatrix,
    mass_sqrt: SymMatrix,
    mass_inv_sqrt: SymMatrix,
}

impl LshSystem {
    pub fn new(
        stiffness: SymMatrix,
        mass: SymMatrix,
        damping: SymMatrix,
        coupling: Matrix,
    ) -> Result<Self> {
        let n = stiffness.dim();
        for (found, _what) in [(mass.dim(), "M"), (damping.dim(), "F")] {
            if found != n {
                return Err(Error::DimensionMismatch {
                    context: "system matrices",
                    expected: n,
                    found,
                });
            }
        }
        if coupling.cols() != n {
            return Err(Error::DimensionMismatch {
                context: "coupling matrix N columns",
                expected: n,
                found: coupling.cols(),
            });
        }
        if coupling.rows() == 0 {
            return Err(Error::InvalidArgument("coupling matrix N has no rows".into()));
        }
        let mass_spec = require_positive_definite(&mass, "M")?;
        require_positive_semidefinite(&damping, "F")?;
        let mass_inv = mass_spec.map(|l| 1.0 / l);
        let mass_sqrt = mass_spec.map(math::sqrt);
        let mass_inv_sqrt = mass_spec.map(|l| 1.0 / math::sqrt(l));
        Ok(Self {
            stiffness,
            mass,
            damping,
            coupling,
            mass_inv,
            mass_sqrt,
            mass_inv_sqrt,
        })
    }

    /// One degree of freedom, one channel.
    pub fn scalar(k: f64, m: f64, f: f64, n: f64) -> Result<Self> {
        Self::new(
            SymMatrix::scalar(k),
            SymMatrix::scalar(m),
            SymMatrix::scalar(f),
            Matrix::scalar(n),
        )
    }

    pub fn stiffness(&self) -> &SymMatrix {
        &self.stiffness
    }

    pub fn mass(&self) -> &SymMatrix {
        &self.mass
    }

    pub fn damping(&self) -> &SymMatrix {
        &self.damping
    }

    pub fn coupling(&self) -> &Matrix {
        &self.coupling
    }

    pub fn mass_inverse(&self) -> &SymMatrix {
        &self.mass_inv
    }

    /// `√M`.
    pub fn mass_sqrt(&self) -> &SymMatrix {
        &self.mass_sqrt
    }

    /// `M^{-1/2} = √(M⁻¹)`.
    pub fn mass_inv_sqrt(&self) -> &SymMatrix {
        &self.mass_inv_sqrt
    }

    /// Degrees of freedom `n`.
    pub fn dof(&self) -> usize {
        self.stiffness.dim()
    }

    /// Force channels `m`.
    pub fn channels(&self) -> usize {
        self.coupling.rows()
    }

    pub fn state_dim(&self) -> usize {
        2 * self.dof()
    }

    /// `R = diag(K, M⁻¹)`.
    pub fn energy_matrix(&self) -> EnergyMatrix {
        EnergyMatrix(SymMatrix::block_diag(&self.stiffness, &self.mass_inv))
    }

    /// `H(x) = ½ qᵀKq + ½ pᵀM⁻¹p`.
    pub fn hamiltonian(&self, x: &[f64]) -> f64 {
        let n = self.dof();
        0.5 * (self.stiffness.quad_form(&x[..n]) + self.mass_inv.quad_form(&x[n..]))
    }

    /// `D = NᵀN`.
    pub fn coupling_gram(&self) -> SymMatrix {
        SymMatrix::symmetrize(&self.coupling.transpose() * &self.coupling)
    }

    /// `f = -Kq - F M⁻¹ p`, the total internal force.
    pub fn internal_force(&self, x: &[f64]) -> Vec<f64> {
        let n = self.dof();
        let kq = self.stiffness.mul_vec(&x[..n]);
        let v = self.mass_inv.mul_vec(&x[n..]);
        let fv = self.damping.mul_vec(&v);
        kq.iter().zip(&fv).map(|(a, b)| -a - b).collect()
    }

    /// `y = N q`.
    pub fn output(&self, x: &[f64]) -> Vec<f64> {
        self.coupling.mul_vec(&x[..self.dof()])
    }
}

/// The energy matrix `R = diag(K, M⁻¹)` with `H(x) = ½ xᵀ R x`.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyMatrix(pub SymMatrix);

impl EnergyMatrix {
    pub fn hamiltonian(&self, x: &[f64]) -> f64 {
        0.5 * self.0.quad_form(x)
    }

    pub fn matrix(&self) -> &SymMatrix {
        &self.0
    }
}

/// The symplectic structure matrix `J = [[0, I], [-I, 0]]` of order `2n`.
pub fn symplectic_matrix(n: usize) -> Matrix {
    Matrix::from_rows(&[[0.0, 1.0], [-1.0, 0.0]]).kron(&Matrix::identity(n))
}

/// State-space realization `(A, B, C)` of an LSH system.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpace {
    pub a: Matrix,
    pub b: Matrix,
    pub c: Matrix,
}

pub fn realize(sys: &LshSystem) -> StateSpace {
    let n = sys.dof();
    let m = sys.channels();
    let minv = sys.mass_inv.as_matrix();
    let fminv = sys.damping.as_matrix() * minv;
    let a = Matrix::from_blocks(&Matrix::zeros(n, n), minv, &-sys.stiffness.as_matrix(), &-&fminv)
        .expect("conforming blocks");
    let b = Matrix::vstack(&Matrix::zeros(n, m), &sys.coupling.transpose()).expect("conforming");
    let c = Matrix::from_blocks(
        &sys.coupling,
        &Matrix::zeros(m, n),
        &Matrix::zeros(0, n),
        &Matrix::zeros(0, n),
    )
    .expect("conforming");
    debug_assert!(
        (&a - &structured_drift(sys)).max_abs() <= 1e-12 * (1.0 + a.max_abs()),
        "A disagrees with (J - diag(0,1)⊗F) R"
    );
    StateSpace { a, b, c }
}

/// `(J − [[0,0],[0,1]] ⊗ F) · R`, the Hamiltonian route to `A`.
pub fn structured_drift(sys: &LshSystem) -> Matrix {
    let n = sys.dof();
    let mut generator = symplectic_matrix(n);
    let f = sys.damping.as_matrix();
    for i in 0..n {
        for j in 0..n {
            generator[(n + i, n + j)] -= f[(i, j)];
        }
    }
    &generator * sys.energy_matrix().matrix().as_matrix()
}

/// The equivalent system with identity mass:
/// `K̃ = M^{-1/2} K M^{-1/2}`, `F̃ = M^{-1/2} F M^{-1/2}`, `Ñ = N M^{-1/2}`.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedSystem {
    pub stiffness: SymMatrix,
    pub damping: SymMatrix,
    pub coupling: Matrix,
}

pub fn normalize_mass(sys: &LshSystem) -> NormalizedSystem {
    let r = sys.mass_inv_sqrt.as_matrix();
    NormalizedSystem {
        stiffness: sys.stiffness.congruence(r).expect("square"),
        damping: sys.damping.congruence(r).expect("square"),
        coupling: &sys.coupling * r,
    }
}

/// `diag(√M, M^{-1/2})`: maps `(q, p)` to the normalized coordinates.
pub fn normalizing_transform(sys: &LshSystem) -> Matrix {
    Matrix::block_diag(sys.mass_sqrt.as_matrix(), sys.mass_inv_sqrt.as_matrix())
}

impl NormalizedSystem {
    pub fn dof(&self) -> usize {
        self.stiffness.dim()
    }

    /// `(K̃, I, F̃, Ñ)` as a full system.
    pub fn to_system(&self) -> Result<LshSystem> {
        LshSystem::new(
            self.stiffness.clone(),
            SymMatrix::identity(self.dof()),
            self.damping.clone(),
            self.coupling.clone(),
        )
    }

    /// `s² I + s F̃ + K̃`.
    pub fn quadratic_pencil(&self, s: Complex64) -> CMatrix {
        let n = self.dof();
        let mut p = CMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                p[(i, j)] = s * self.damping[(i, j)] + self.stiffness[(i, j)];
            }
            p[(i, i)] += s * s;
        }
        p
    }

    /// `Φ(s) = Ñ (s² I + s F̃ + K̃)⁻¹ Ñᵀ`.
    pub fn transfer(&self, s: Complex64) -> Result<CMatrix> {
        let nt = CMatrix::from_real(&self.coupling.transpose());
        let x = self.quadratic_pencil(s).solve(&nt, "quadratic pencil")?;
        Ok(CMatrix::from_real(&self.coupling).matmul(&x))
    }

    /// `χ(s) = det(s² I + s F̃ + K̃)`.
    pub fn char_poly(&self, s: Complex64) -> Complex64 {
        self.quadratic_pencil(s).determinant()
    }
}

/// Transfer matrix through the quadratic pencil of the normalized system.
pub fn transfer(sys: &LshSystem, s: Complex64) -> Result<CMatrix> {
    let phi = normalize_mass(sys).transfer(s)?;
    #[cfg(debug_assertions)]
    if let Ok(direct) = transfer_resolvent(sys, s) {
        let scale = 1.0 + direct.frobenius_norm();
        debug_assert!(
            phi.sub(&direct).frobenius_norm() <= 1e-9 * scale,
            "transfer routes disagree at s = {s}"
        );
    }
    Ok(phi)
}

/// Transfer matrix through the resolvent, `C (sI − A)⁻¹ B`.
pub fn transfer_resolvent(sys: &LshSystem, s: Complex64) -> Result<CMatrix> {
    let ss = realize(sys);
    let dim = ss.a.rows();
    let mut pencil = CMatrix::from_real(&ss.a.scale(-1.0));
    for i in 0..dim {
        pencil[(i, i)] += s;
    }
    let x = pencil.solve(&CMatrix::from_real(&ss.b), "sI - A")?;
    Ok(CMatrix::from_real(&ss.c).matmul(&x))
}

/// Static gain `Φ(0) = N K⁻¹ Nᵀ` (symmetric).
pub fn static_gain(sys: &LshSystem) -> Result<SymMatrix> {
    let spec = sym_eig(&sys.stiffness)?;
    let smallest = spec.values.iter().fold(f64::INFINITY, |m, v| m.min(math::abs(*v)));
    let largest = spec.values.iter().fold(0.0f64, |m, v| m.max(math::abs(*v)));
    if smallest <= definiteness_tolerance(&sys.stiffness) {
        return Err(Error::Singular { what: "stiffness matrix K" });
    }
    let cond = largest / smallest;
    if cond > STATIC_GAIN_CONDITION_WARNING {
        log::warn!("stiffness matrix is ill-conditioned (condition number {cond:e})");
    }
    let x = sys.stiffness.solve(&sys.coupling.transpose())?;
    let raw = &sys.coupling * &x;
    debug_assert!(raw.asymmetry() <= 1e-12 * (1.0 + raw.max_abs()));
    Ok(SymMatrix::symmetrize(raw))
}

/// `χ(s) = det(s² I + s F̃ + K̃)`.
pub fn char_poly_eval(sys: &LshSystem, s: Complex64) -> Complex64 {
    normalize_mass(sys).char_poly(s)
}

/// `det(s I − A)` evaluated directly on the realization.
pub fn char_poly_state_space(a: &Matrix, s: Complex64) -> Complex64 {
    let mut pencil = CMatrix::from_real(&a.scale(-1.0));
    for i in 0..a.rows() {
        pencil[(i, i)] += s;
    }
    pencil.determinant()
}
