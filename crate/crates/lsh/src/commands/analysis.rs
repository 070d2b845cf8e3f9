use lsh_core::feedback::{closed_loop_stability, LoopRobustness};
use lsh_core::invariant::{
    controllability_bound, invariant_covariance, noise_intensity, sylvester_residuals, virial_check,
};
use lsh_core::model::{char_poly_eval, realize, static_gain, transfer as transfer_pencil, transfer_resolvent};
use lsh_core::numlin::{lyapunov_residual, min_eigenvalue, CMatrix};
use lsh_core::robust::UncertaintyClass;
use lsh_core::stability::{certificate, eps_bounds, hurwitz_diagnosis, HurwitzDiagnosis, LyapunovCertificate};
use lsh_core::{Complex64, Error, LshSystem, SymMatrix};
use serde_json::{json, Value};

use crate::config::{ExperimentConfig, SystemSpec};
use crate::error::CliResult;
use crate::output::{matrix, Report};

fn certificate_json(cert: &LyapunovCertificate) -> Value {
    json!({
        "eps": cert.eps,
        "valid": cert.valid,
        "Q": matrix(&cert.q),
        "Psi": matrix(&cert.psi),
        "Psi_exact": matrix(&cert.psi_exact),
        "q_min_eigenvalue": min_eigenvalue(&cert.q).ok(),
        "psi_min_eigenvalue": min_eigenvalue(&cert.psi).ok(),
    })
}

fn complex_json(m: &CMatrix) -> Value {
    let cols = m.cols();
    let rows = |f: fn(&Complex64) -> f64| -> Vec<Vec<f64>> {
        m.as_slice().chunks(cols.max(1)).map(|r| r.iter().map(f).collect()).collect()
    };
    json!({ "re": rows(|z| z.re), "im": rows(|z| z.im) })
}

fn dims(name: &str, sys: &LshSystem) -> Value {
    json!({ "name": name, "dof": sys.dof(), "channels": sys.channels() })
}

pub fn stability(cfg: &ExperimentConfig) -> CliResult<Report> {
    let (name, sys) = cfg.primary_system()?;
    let ss = realize(&sys);
    let diagnosis = hurwitz_diagnosis(&ss.a)?;
    let mut outputs = json!({
        "system": dims(&name, &sys),
        "A": matrix(&ss.a),
        "hurwitz": diagnosis == HurwitzDiagnosis::Hurwitz,
        "hurwitz_diagnosis": diagnosis.as_str(),
    });
    let window = match eps_bounds(&sys) {
        Ok(w) => w,
        Err(Error::NotPositiveDefinite { what, .. }) => {
            return Ok(Report::new(outputs)
                .inapplicable(format!("{what} not positive definite: stability theorem inapplicable")));
        }
        Err(e) => return Err(e.into()),
    };
    let eps = cfg.robust.eps.value().unwrap_or_else(|| window.default_eps());
    let cert = certificate(&sys, eps);
    outputs["eps_window"] = json!({
        "stiffness_bound": window.stiffness_bound,
        "damping_bound": window.damping_bound,
        "min": window.min(),
    });
    outputs["certificate"] = certificate_json(&cert);
    let report = Report::new(outputs);
    Ok(if cert.valid {
        report
    } else {
        report.inapplicable(format!("certificate invalid at eps = {eps} (window is (0, {}))", window.min()))
    })
}

pub fn invariant(cfg: &ExperimentConfig) -> CliResult<Report> {
    let (name, sys) = cfg.primary_system()?;
    let ss = realize(&sys);
    let meas = match invariant_covariance(&sys) {
        Ok(m) => m,
        Err(Error::NoInvariantMeasure { diagnosis }) => {
            return Ok(Report::new(json!({ "system": dims(&name, &sys), "hurwitz_diagnosis": diagnosis }))
                .inapplicable(format!("state matrix is {diagnosis}: no invariant measure")));
        }
        Err(e) => return Err(e.into()),
    };
    let v = noise_intensity(&ss);
    let res = sylvester_residuals(&sys, &meas);
    let virial = virial_check(&sys, &meas);
    let ctrl = controllability_bound(&sys)?;
    Ok(Report::new(json!({
        "system": dims(&name, &sys),
        "Pi": matrix(&meas.covariance),
        "Pi_min_eigenvalue": min_eigenvalue(&meas.covariance)?,
        "Xi": matrix(&meas.xi),
        "xi_defect": meas.xi_defect,
        "full_rank_coupling": meas.full_rank_coupling,
        "residuals": {
            "lyapunov": lyapunov_residual(&ss.a, &meas.covariance, &v),
            "position": res.position,
            "cross": res.cross,
            "momentum": res.momentum,
        },
        "virial": {
            "mean_kinetic": virial.mean_kinetic,
            "virial_rhs": virial.virial_rhs,
            "trace_cross": virial.trace_cross,
            "gap": virial.gap(),
        },
        "controllability_bound": {
            "matrix": matrix(&ctrl.matrix),
            "min_eigenvalue": ctrl.min_eigenvalue,
        },
    })))
}

pub fn transfer(cfg: &ExperimentConfig) -> CliResult<Report> {
    let (name, sys) = cfg.primary_system()?;
    let points: Vec<Complex64> = if cfg.transfer.s.is_empty() {
        vec![Complex64::new(0.0, 1.0)]
    } else {
        cfg.transfer.s.iter().map(|[re, im]| Complex64::new(*re, *im)).collect()
    };
    let mut report = Report::new(Value::Null);
    let mut evaluations = vec![];
    for s in points {
        match (transfer_pencil(&sys, s), transfer_resolvent(&sys, s)) {
            (Ok(phi), Ok(res)) => {
                let scale = res.frobenius_norm().max(f64::MIN_POSITIVE);
                let chi = char_poly_eval(&sys, s);
                evaluations.push(json!({
                    "s": [s.re, s.im],
                    "Phi": complex_json(&phi),
                    "relative_gap": phi.sub(&res).frobenius_norm() / scale,
                    "char_poly": [chi.re, chi.im],
                }));
            }
            (Err(e), _) | (_, Err(e)) => {
                report.diagnostics.push(format!("s = {s}: {e}"));
                evaluations.push(json!({ "s": [s.re, s.im], "Phi": null }));
            }
        }
    }
    let gain = match static_gain(&sys) {
        Ok(g) => matrix(&g),
        Err(e) => {
            report.diagnostics.push(format!("static gain: {e}"));
            Value::Null
        }
    };
    report.outputs = json!({
        "system": dims(&name, &sys),
        "evaluations": evaluations,
        "static_gain": gain,
    });
    Ok(report)
}

pub fn compose(cfg: &ExperimentConfig) -> CliResult<Report> {
    let spec = cfg.compose.as_ref().ok_or_else(|| {
        crate::error::CliError::Config("compose needs a \"compose\": {plant, controller} section".into())
    })?;
    let plant = cfg.named_system(&spec.plant)?;
    let controller = cfg.named_system(&spec.controller)?;
    let robustness = loop_robustness(cfg, 2 * (plant.dof() + controller.dof()))?;
    let rep = closed_loop_stability(&plant, &controller, cfg.robust.eps.value(), robustness.as_ref())?;
    let sys = &rep.closed_loop.system;
    let sg = rep.small_gain.as_ref().map(|sg| {
        json!({
            "norm": sg.norm,
            "definite": sg.definite,
            "direct_definite": sg.direct_definite,
            "sufficient_gain_product": sg.sufficient_gain_product,
            "static_gain_eigenvalue": sg.static_gain_eigenvalue,
            "identity_gap": sg.identity_gap(),
        })
    });
    let outputs = json!({
        "plant": spec.plant,
        "controller": spec.controller,
        "closed_loop": SystemSpec::from_system(sys),
        "small_gain": sg,
        "hurwitz": rep.hurwitz == HurwitzDiagnosis::Hurwitz,
        "hurwitz_diagnosis": rep.hurwitz.as_str(),
        "eps_window": rep.window.map(|w| json!({
            "stiffness_bound": w.stiffness_bound,
            "damping_bound": w.damping_bound,
            "min": w.min(),
        })),
        "certificate": rep.certificate.as_ref().map(certificate_json),
        "Pi": rep.invariant.as_ref().map(|m| matrix(&m.covariance)),
        "robust": rep.robust.as_ref().map(|b| json!({
            "eps": b.eps,
            "mu": b.mu,
            "gamma": b.gamma,
            "lambda_min_q": b.lambda_min_q,
            "asymptotic_bound": b.asymptotic_bound,
        })),
    });
    let mut report = Report::new(outputs);
    for reason in &rep.inapplicable {
        report = report.inapplicable(format!("{reason}: stability theorem inapplicable"));
    }
    Ok(report)
}

/// Class on the stacked loop force. Without an explicit `gamma` the loop is
/// taken to be driven by standard Wiener forces, `γ = Σ tr(N_k M_k⁻¹ N_kᵀ)`.
fn loop_robustness(cfg: &ExperimentConfig, state_dim: usize) -> CliResult<Option<LoopRobustness>> {
    let Some(spec) = cfg.compose.as_ref() else { return Ok(None) };
    let delta = match &cfg.robust.delta {
        Some(d) => d.to_sym("robust Delta")?,
        None => SymMatrix::zeros(state_dim),
    };
    let gamma = match cfg.robust.gamma {
        Some(g) => g,
        None => {
            let a = cfg.named_system(&spec.plant)?;
            let b = cfg.named_system(&spec.controller)?;
            [a, b]
                .iter()
                .map(|s| (&(s.coupling() * s.mass_inverse().as_matrix()) * &s.coupling().transpose()).trace())
                .sum()
        }
    };
    Ok(Some(LoopRobustness {
        class: UncertaintyClass::new(gamma, delta)?,
        second_moment_x0: cfg.robust.second_moment_x0.unwrap_or(0.0),
    }))
}
