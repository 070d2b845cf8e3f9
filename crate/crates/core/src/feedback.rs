//! Feedback connection of two LSH systems through their outputs.
//!
//! Each subsystem sees the other's position output as a force,
//! `dp_k = −(K_k q_k − N_kᵀN_{3−k} q_{3−k} + F_k M_k⁻¹ p_k) dt + N_kᵀ dW_k`,
//! so the loop is again an LSH system with state `(q₁, q₂, p₁, p₂)`.

use alloc::string::String;
use alloc::vec::Vec;
use alloc::{format, vec};

use crate::error::{Error, Result};
use crate::invariant::{invariant_covariance, InvariantMeasure};
use crate::model::{realize, static_gain, LshSystem};
use crate::numlin::{
    definiteness_tolerance, is_positive_definite, max_eigenvalue, operator_norm, psd_sqrt,
    spd_sqrt, Matrix, SymMatrix,
};
use crate::robust::{robust_bound_for, RobustBound, UncertaintyClass};
use crate::stability::{
    certificate, eps_bounds, hurwitz_diagnosis, EpsWindow, HurwitzDiagnosis, LyapunovCertificate,
};

#[derive(Debug, Clone, PartialEq)]
pub struct ClosedLoop {
    pub system: LshSystem,
    pub first: LshSystem,
    pub second: LshSystem,
}

pub fn compose(first: &LshSystem, second: &LshSystem) -> Result<ClosedLoop> {
    let n = first.dof();
    let m = first.channels();
    if second.dof() != n {
        return Err(Error::DimensionMismatch {
            context: "feedback subsystems degrees of freedom",
            expected: n,
            found: second.dof(),
        });
    }
    if second.channels() != m {
        return Err(Error::DimensionMismatch {
            context: "feedback subsystems channels",
            expected: m,
            found: second.channels(),
        });
    }
    let cross = &first.coupling().transpose() * second.coupling();
    let stiffness = Matrix::from_blocks(
        first.stiffness().as_matrix(),
        &-&cross,
        &-&cross.transpose(),
        second.stiffness().as_matrix(),
    )?;
    let system = LshSystem::new(
        SymMatrix::symmetrize(stiffness),
        SymMatrix::block_diag(first.mass(), second.mass()),
        SymMatrix::block_diag(first.damping(), second.damping()),
        Matrix::block_diag(first.coupling(), second.coupling()),
    )?;
    debug_assert!(
        (&realize(&system).a - &interconnection_drift(first, second)).max_abs()
            <= 1e-12 * (1.0 + realize(&system).a.max_abs()),
        "composed quadruple disagrees with the interconnected dynamics"
    );
    Ok(ClosedLoop {
        system,
        first: first.clone(),
        second: second.clone(),
    })
}

/// Drift of the coupled subsystem equations in `(q₁, q₂, p₁, p₂)`, built
/// directly from the two subsystem realizations.
pub fn interconnection_drift(first: &LshSystem, second: &LshSystem) -> Matrix {
    let n = first.dof();
    let parts = [first, second];
    let mut a = Matrix::zeros(4 * n, 4 * n);
    for (k, sys) in parts.iter().enumerate() {
        let other = parts[1 - k];
        let sub = realize(sys).a;
        let q = k * n;
        let p = 2 * n + k * n;
        a.set_block(q, p, &sub.block(0, n, n, n));
        a.set_block(p, q, &sub.block(n, 0, n, n));
        a.set_block(p, p, &sub.block(n, n, n, n));
        let feed = &sys.coupling().transpose() * other.coupling();
        a.set_block(p, (1 - k) * n, &feed);
    }
    a
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmallGain {
    /// `‖K₁^{-1/2} N₁ᵀN₂ K₂^{-1/2}‖`.
    pub norm: f64,
    /// `norm < 1`.
    pub definite: bool,
    /// Direct definiteness test on the composed stiffness.
    pub direct_definite: bool,
    /// `‖Φ₁(0)‖ · ‖Φ₂(0)‖`.
    pub sufficient_gain_product: f64,
    /// `λ_max(Φ₁(0)Φ₂(0))`, which equals `norm²`.
    pub static_gain_eigenvalue: f64,
}

impl SmallGain {
    pub fn identity_gap(&self) -> f64 {
        (self.norm * self.norm - self.static_gain_eigenvalue).abs()
    }

    pub fn agrees(&self) -> bool {
        self.definite == self.direct_definite
    }
}

pub fn small_gain_check(first: &LshSystem, second: &LshSystem) -> Result<SmallGain> {
    let loop_ = compose(first, second)?;
    let r1 = spd_sqrt(first.stiffness()).map_err(|_| not_pd(first.stiffness(), "K1"))?;
    let r2 = spd_sqrt(second.stiffness()).map_err(|_| not_pd(second.stiffness(), "K2"))?;
    let cross = &first.coupling().transpose() * second.coupling();
    let scaled = &(r1.inv_root.as_matrix() * &cross) * r2.inv_root.as_matrix();
    let norm = operator_norm(&scaled)?;

    let g1 = static_gain(first)?;
    let g2 = static_gain(second)?;
    // λ(Φ₁Φ₂) = λ(Φ₂^{1/2} Φ₁ Φ₂^{1/2}), a symmetric problem.
    let root2 = psd_sqrt(&g2)?;
    let static_gain_eigenvalue = max_eigenvalue(&g1.congruence(root2.as_matrix())?)?;
    let sufficient_gain_product = operator_norm(g1.as_matrix())? * operator_norm(g2.as_matrix())?;

    let k = loop_.system.stiffness();
    let direct_definite = is_positive_definite(k, definiteness_tolerance(k.as_matrix()));
    let definite = norm < 1.0;
    if definite != direct_definite {
        log::warn!("small-gain norm {norm} disagrees with the direct definiteness test");
    }
    Ok(SmallGain {
        norm,
        definite,
        direct_definite,
        sufficient_gain_product,
        static_gain_eigenvalue,
    })
}

fn not_pd(s: &SymMatrix, what: &'static str) -> Error {
    Error::NotPositiveDefinite {
        what,
        min_eigenvalue: crate::numlin::min_eigenvalue(s).unwrap_or(f64::NAN),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClosedLoopReport {
    pub closed_loop: ClosedLoop,
    pub small_gain: Option<SmallGain>,
    /// Failed hypotheses of the stability theorem, each naming its block.
    /// Empty when the theorem applies.
    pub inapplicable: Vec<String>,
    pub window: Option<EpsWindow>,
    pub certificate: Option<LyapunovCertificate>,
    pub invariant: Option<InvariantMeasure>,
    pub robust: Option<RobustBound>,
    pub hurwitz: HurwitzDiagnosis,
}

impl ClosedLoopReport {
    pub fn applicable(&self) -> bool {
        self.inapplicable.is_empty()
    }
}

/// Robustness request on the stacked force `(W₁, W₂)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LoopRobustness {
    pub class: UncertaintyClass,
    pub second_moment_x0: f64,
}

/// Runs the stability analysis on the composed quadruple. Failed
/// hypotheses are reported rather than raised; no instability is claimed.
pub fn closed_loop_stability(
    first: &LshSystem,
    second: &LshSystem,
    eps: Option<f64>,
    robustness: Option<&LoopRobustness>,
) -> Result<ClosedLoopReport> {
    let closed_loop = compose(first, second)?;
    let sys = &closed_loop.system;
    let mut inapplicable = vec![];
    let tol = |s: &SymMatrix| definiteness_tolerance(s.as_matrix());
    for (s, what) in [
        (first.stiffness(), "K1"),
        (second.stiffness(), "K2"),
        (first.damping(), "F1"),
        (second.damping(), "F2"),
    ] {
        if !is_positive_definite(s, tol(s)) {
            inapplicable.push(format!("{what} not positive definite"));
        }
    }
    let small_gain = if inapplicable.iter().any(|r| r.starts_with('K')) {
        None
    } else {
        Some(small_gain_check(first, second)?)
    };
    if let Some(sg) = &small_gain {
        if !sg.direct_definite {
            inapplicable.push(format!(
                "K not positive definite (small-gain norm {} >= 1)",
                sg.norm
            ));
        }
    }
    let hurwitz = hurwitz_diagnosis(&realize(sys).a)?;
    let mut report = ClosedLoopReport {
        closed_loop: closed_loop.clone(),
        small_gain,
        inapplicable,
        window: None,
        certificate: None,
        invariant: None,
        robust: None,
        hurwitz,
    };
    if !report.applicable() {
        return Ok(report);
    }
    let window = eps_bounds(sys)?;
    let eps = eps.unwrap_or_else(|| window.default_eps());
    let cert = certificate(sys, eps);
    if !cert.valid {
        report.inapplicable.push(format!("certificate invalid at eps = {eps}"));
    }
    report.window = Some(window);
    report.invariant = Some(invariant_covariance(sys)?);
    if let (Some(req), true) = (robustness, cert.valid) {
        report.robust = Some(robust_bound_for(&cert, &req.class, req.second_moment_x0)?);
    }
    report.certificate = Some(cert);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numlin::sym_eig;
    use crate::samples::{random_dims, random_system, uniform};
    use crate::stability::is_hurwitz;
    use proptest::prelude::*;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn half() -> LshSystem {
        LshSystem::scalar(1.0, 1.0, 1.0, 0.5).unwrap()
    }

    #[test]
    fn compose_half_coupled_copies() {
        let cl = compose(&half(), &half()).unwrap();
        let s = &cl.system;
        assert_eq!(**s.stiffness(), Matrix::from_rows(&[[1.0, -0.25], [-0.25, 1.0]]));
        assert_eq!(**s.mass(), Matrix::identity(2));
        assert_eq!(**s.damping(), Matrix::identity(2));
        assert_eq!(*s.coupling(), Matrix::diag(&[0.5, 0.5]));
        let a = realize(s).a;
        assert!((&a - &interconnection_drift(&half(), &half())).max_abs() <= 1e-12);
    }

    #[test]
    fn silent_subsystem_decouples() {
        let mute = LshSystem::scalar(2.0, 1.0, 1.0, 0.0).unwrap();
        for (a, b) in [(&mute, &half()), (&half(), &mute)] {
            let k = compose(a, b).unwrap().system.stiffness().clone();
            assert_eq!(k[(0, 1)], 0.0);
            assert_eq!(k[(1, 0)], 0.0);
        }
        let sg = small_gain_check(&half(), &mute).unwrap();
        assert_eq!(sg.norm, 0.0);
        assert!(sg.definite && sg.direct_definite);
    }

    #[test]
    fn mismatched_dimensions_are_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let big = random_system(&mut rng, 2, 1);
        assert!(matches!(compose(&half(), &big), Err(Error::DimensionMismatch { .. })));
        let wide = random_system(&mut rng, 1, 2);
        assert!(matches!(compose(&half(), &wide), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn small_gain_examples() {
        let sg = small_gain_check(&half(), &half()).unwrap();
        assert!((sg.norm - 0.25).abs() < 1e-15);
        assert!(sg.definite && sg.agrees());
        assert!((sg.static_gain_eigenvalue - 0.0625).abs() < 1e-15);
        assert!((sg.sufficient_gain_product - 0.0625).abs() < 1e-15);

        let strong = LshSystem::scalar(1.0, 1.0, 1.0, 1.5f64.sqrt()).unwrap();
        let sg = small_gain_check(&strong, &strong).unwrap();
        assert!((sg.norm - 1.5).abs() < 1e-12);
        assert!(!sg.definite && sg.agrees());
        let k = compose(&strong, &strong).unwrap().system.stiffness().clone();
        assert!(sym_eig(&k).unwrap().min() < 0.0);

        let soft = LshSystem::scalar(-1.0, 1.0, 1.0, 0.5).unwrap();
        assert!(matches!(
            small_gain_check(&soft, &half()),
            Err(Error::NotPositiveDefinite { what: "K1", .. })
        ));
    }

    #[test]
    fn closed_loop_examples() {
        let r = closed_loop_stability(&half(), &half(), None, None).unwrap();
        assert!(r.applicable());
        assert!(r.certificate.as_ref().unwrap().valid);
        assert_eq!(r.hurwitz, HurwitzDiagnosis::Hurwitz);
        assert!(is_hurwitz(&realize(&r.closed_loop.system).a));

        let strong = LshSystem::scalar(1.0, 1.0, 1.0, 1.5f64.sqrt()).unwrap();
        let r = closed_loop_stability(&strong, &strong, None, None).unwrap();
        assert!(!r.applicable());
        assert!(r.inapplicable[0].starts_with("K not positive definite"));
        assert!(r.certificate.is_none());

        let undamped = LshSystem::scalar(1.0, 1.0, 0.0, 0.5).unwrap();
        let r = closed_loop_stability(&half(), &undamped, None, None).unwrap();
        assert_eq!(r.inapplicable, vec![String::from("F2 not positive definite")]);
    }

    #[test]
    fn closed_loop_robust_bound_on_stacked_force() {
        let req = LoopRobustness {
            class: UncertaintyClass::new(1.0, SymMatrix::zeros(4)).unwrap(),
            second_moment_x0: 0.0,
        };
        let r = closed_loop_stability(&half(), &half(), None, Some(&req)).unwrap();
        let b = r.robust.unwrap();
        assert!(b.mu > 0.0 && b.asymptotic_bound.is_finite());
    }

    fn random_pair(seed: u64) -> (LshSystem, LshSystem) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (n, m) = random_dims(&mut rng, 3, 3);
        let a = random_system(&mut rng, n, m);
        let b = random_system(&mut rng, n, m);
        // Spread the coupling strength across the small-gain threshold.
        let s = uniform(&mut rng, 0.1, 3.0);
        let b = LshSystem::new(
            b.stiffness().clone(),
            b.mass().clone(),
            b.damping().clone(),
            b.coupling().scale(s),
        )
        .unwrap();
        (a, b)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn definiteness_equivalence_and_identity(seed in any::<u64>()) {
            let (a, b) = random_pair(seed);
            let sg = small_gain_check(&a, &b).unwrap();
            prop_assert!(sg.agrees(), "norm {}", sg.norm);
            let n2 = sg.norm * sg.norm;
            prop_assert!(sg.identity_gap() <= 1e-9 * (1.0 + n2));
            if sg.sufficient_gain_product < 1.0 {
                prop_assert!(sg.definite);
            }
        }

        #[test]
        fn composition_is_symmetric(seed in any::<u64>()) {
            let (a, b) = random_pair(seed);
            let k12 = compose(&a, &b).unwrap().system.stiffness().clone();
            let k21 = compose(&b, &a).unwrap().system.stiffness().clone();
            let n = a.dof();
            let swap = Matrix::from_rows(&[[0.0, 1.0], [1.0, 0.0]]).kron(&Matrix::identity(n));
            let permuted = k21.congruence(&swap).unwrap();
            prop_assert!((&*permuted - &*k12).max_abs() <= 1e-14);
            let e12 = sym_eig(&k12).unwrap().values;
            let e21 = sym_eig(&k21).unwrap().values;
            for (x, y) in e12.iter().zip(&e21) {
                prop_assert!((x - y).abs() <= 1e-10 * (1.0 + x.abs()));
            }
        }
    }
}
