use lsh_core::filtering::{filter_setup, run_filter, FilterGains};
use lsh_core::force::ForceModel;
use lsh_core::grid::TimeGrid;
use lsh_core::invariant::invariant_covariance;
use lsh_core::numlin::{min_eigenvalue, spd_sqrt};
use lsh_core::robust::{
    admissibility_check, eps_scan_with, robust_bound, strided_indices, supermartingale_check,
    RobustBound, UncertaintyClass, UpsilonEnsemble,
};
use lsh_core::sim::{energy_balance_residual, InitialState, Scheme, Simulator};
use lsh_core::stability::certificate;
use lsh_core::stats::{median, CovarianceAccumulator, Moments};
use lsh_core::{Error, LshSystem, SymMatrix};
use serde_json::{json, Value};

use super::RunOptions;
use crate::config::{ExperimentConfig, ForceSpec, InitialSpec};
use crate::ensemble::{run_paths, Accumulator};
use crate::error::{CliError, CliResult};
use crate::output::{matrix, Report, Series};

/// Target number of rows in a reported time series.
const SERIES_ROWS: usize = 1000;

fn grid_to(cfg: &ExperimentConfig, horizon: f64) -> CliResult<TimeGrid> {
    let dt = cfg.simulation.dt;
    let steps = (horizon / dt - 1e-9).ceil().max(1.0) as usize;
    Ok(TimeGrid::uniform(steps as f64 * dt, dt)?)
}

fn stride(cfg: &ExperimentConfig, grid: &TimeGrid) -> usize {
    cfg.simulation.stride.unwrap_or_else(|| (grid.steps() / SERIES_ROWS).max(1))
}

fn initial_state(cfg: &ExperimentConfig, sys: &LshSystem) -> CliResult<InitialState> {
    let d = sys.state_dim();
    match &cfg.simulation.x0 {
        InitialSpec::State(x) if x.len() == d => Ok(InitialState::Fixed(x.clone())),
        InitialSpec::State(x) => Err(CliError::Config(format!("x0 has length {} but the state has {d}", x.len()))),
        InitialSpec::Named(n) if n == "stationary" => Ok(InitialState::Gaussian {
            mean: vec![0.0; d],
            covariance: invariant_covariance(sys)?.covariance,
        }),
        InitialSpec::Named(_) => Ok(InitialState::Fixed(vec![0.0; d])),
    }
}

fn initial_json(init: &InitialState) -> Value {
    match init {
        InitialState::Fixed(x) => json!({ "kind": "fixed", "x0": x }),
        InitialState::Gaussian { mean, covariance } => {
            json!({ "kind": "gaussian", "mean": mean, "covariance": matrix(covariance) })
        }
    }
}

fn covariance_json(acc: &CovarianceAccumulator, dim: usize) -> (Value, Value) {
    let rows = |v: Vec<f64>| -> Vec<Vec<f64>> { v.chunks(dim).map(<[f64]>::to_vec).collect() };
    (json!(rows(acc.covariance())), json!(rows(acc.covariance_std_error())))
}

/// Largest `|empirical − exact| / SE` over the entries.
fn max_gap_in_se(acc: &CovarianceAccumulator, exact: &SymMatrix) -> f64 {
    let d = exact.dim();
    let cov = acc.covariance();
    let se = acc.covariance_std_error();
    (0..d * d)
        .map(|e| {
            let gap = (cov[e] - exact[(e / d, e % d)]).abs();
            if gap == 0.0 { 0.0 } else { gap / se[e] }
        })
        .fold(0.0, f64::max)
}

struct Prepared {
    sys: LshSystem,
    force: ForceModel,
    grid: TimeGrid,
    scheme: Scheme,
    init: InitialState,
}

fn prepare(cfg: &ExperimentConfig, horizon: f64) -> CliResult<Prepared> {
    let (_, sys) = cfg.primary_system()?;
    let force = cfg.force.build(sys.channels())?;
    let grid = grid_to(cfg, horizon)?;
    let scheme = cfg.simulation.scheme_for(&cfg.force)?;
    let init = initial_state(cfg, &sys)?;
    Ok(Prepared { sys, force, grid, scheme, init })
}

#[derive(Clone)]
struct ProbeAcc {
    state: CovarianceAccumulator,
    kinetic: Moments,
    virial: Moments,
    difference: Moments,
}

struct SimAcc {
    norm_sq: Vec<Moments>,
    kinetic: Vec<Moments>,
    virial: Vec<Moments>,
    probes: Vec<ProbeAcc>,
    energy_residuals: Vec<f64>,
}

impl Accumulator for SimAcc {
    fn merge(&mut self, other: Self) {
        for (a, b) in [
            (&mut self.norm_sq, &other.norm_sq),
            (&mut self.kinetic, &other.kinetic),
            (&mut self.virial, &other.virial),
        ] {
            for (x, y) in a.iter_mut().zip(b) {
                x.merge(y);
            }
        }
        for (a, b) in self.probes.iter_mut().zip(&other.probes) {
            a.state.merge(&b.state);
            a.kinetic.merge(&b.kinetic);
            a.virial.merge(&b.virial);
            a.difference.merge(&b.difference);
        }
        self.energy_residuals.extend(other.energy_residuals);
    }
}

/// `(½ pᵀM⁻¹p, ½ qᵀKq)`; the second is `−½ qᵀf` for the internal force.
fn energies(sys: &LshSystem, x: &[f64]) -> (f64, f64) {
    let (q, p) = x.split_at(sys.dof());
    (0.5 * sys.mass_inverse().quad_form(p), 0.5 * sys.stiffness().quad_form(q))
}

pub fn simulate(cfg: &ExperimentConfig, opts: &RunOptions) -> CliResult<Report> {
    let seed = cfg.require_seed(opts.seed)?;
    let Prepared { sys, force, grid, scheme, init } = prepare(cfg, cfg.simulation.horizon)?;
    let sim = Simulator::new(&sys, &force, grid.clone(), scheme)?;
    let sampler = init.sampler();
    let indices = strided_indices(&grid, stride(cfg, &grid));
    let probe_idx: Vec<usize> = cfg.simulation.probes.iter().map(|t| grid.nearest_index(*t)).collect();
    let d = sys.state_dim();
    let audit = scheme == Scheme::EulerMaruyama;
    let paths = cfg.simulation.paths;
    let acc = run_paths(
        paths,
        opts.threads,
        || SimAcc {
            norm_sq: vec![Moments::default(); indices.len()],
            kinetic: vec![Moments::default(); indices.len()],
            virial: vec![Moments::default(); indices.len()],
            probes: vec![
                ProbeAcc {
                    state: CovarianceAccumulator::new(d),
                    kinetic: Moments::default(),
                    virial: Moments::default(),
                    difference: Moments::default(),
                };
                probe_idx.len()
            ],
            energy_residuals: vec![],
        },
        |acc, path| -> Result<(), Error> {
            let traj = sim.run(&sampler.sample(seed, path), seed, path)?;
            for (i, &k) in indices.iter().enumerate() {
                let x = traj.state(k);
                let (t, v) = energies(&sys, x);
                acc.norm_sq[i].push(x.iter().map(|a| a * a).sum());
                acc.kinetic[i].push(t);
                acc.virial[i].push(v);
            }
            for (p, &k) in acc.probes.iter_mut().zip(&probe_idx) {
                let x = traj.state(k);
                let (t, v) = energies(&sys, x);
                p.state.push(x);
                p.kinetic.push(t);
                p.virial.push(v);
                p.difference.push(t - v);
            }
            if audit {
                acc.energy_residuals.push(energy_balance_residual(&traj, &sys)?.residual);
            }
            Ok(())
        },
    )?;

    let stationary = invariant_covariance(&sys).ok();
    let probes: Vec<Value> = acc
        .probes
        .iter()
        .zip(&probe_idx)
        .map(|(p, &k)| {
            let (cov, se) = covariance_json(&p.state, d);
            json!({
                "t": grid.time(k),
                "covariance": cov,
                "covariance_se": se,
                "max_gap_to_Pi_in_se": stationary.as_ref().map(|m| max_gap_in_se(&p.state, &m.covariance)),
                "mean_kinetic": p.kinetic.mean(),
                "mean_kinetic_se": p.kinetic.std_error(),
                "mean_virial_rhs": p.virial.mean(),
                "mean_virial_rhs_se": p.virial.std_error(),
                "kinetic_minus_virial": p.difference.mean(),
                "kinetic_minus_virial_se": p.difference.std_error(),
            })
        })
        .collect();
    let mut series = Series::new(&[
        "t",
        "mean_norm_sq",
        "se_norm_sq",
        "mean_kinetic",
        "se_kinetic",
        "mean_virial_rhs",
        "se_virial_rhs",
    ]);
    for (i, &k) in indices.iter().enumerate() {
        series.push(vec![
            grid.time(k),
            acc.norm_sq[i].mean(),
            acc.norm_sq[i].std_error(),
            acc.kinetic[i].mean(),
            acc.kinetic[i].std_error(),
            acc.virial[i].mean(),
            acc.virial[i].std_error(),
        ]);
    }
    let last = indices.len() - 1;
    let outputs = json!({
        "paths": paths,
        "steps": grid.steps(),
        "dt": cfg.simulation.dt,
        "scheme": scheme.as_str(),
        "force": force.kind().as_str(),
        "initial": initial_json(&init),
        "final": {
            "t": grid.end(),
            "mean_norm_sq": acc.norm_sq[last].mean(),
            "mean_norm_sq_se": acc.norm_sq[last].std_error(),
        },
        "stationary_trace": stationary.as_ref().map(|m| m.covariance.trace()),
        "probes": probes,
        "energy_residual_median": audit.then(|| median(&acc.energy_residuals.iter().map(|r| r.abs()).collect::<Vec<_>>())),
    });
    let mut report = Report::new(outputs);
    report.seed = Some(seed);
    report.series = Some(series);
    Ok(report)
}

struct FilterAcc {
    sq_error: Vec<Moments>,
    probes: Vec<CovarianceAccumulator>,
}

impl Accumulator for FilterAcc {
    fn merge(&mut self, other: Self) {
        for (a, b) in self.sq_error.iter_mut().zip(&other.sq_error) {
            a.merge(b);
        }
        for (a, b) in self.probes.iter_mut().zip(&other.probes) {
            a.merge(b);
        }
    }
}

pub fn filter(cfg: &ExperimentConfig, opts: &RunOptions) -> CliResult<Report> {
    let seed = cfg.require_seed(opts.seed)?;
    if cfg.force != ForceSpec::StandardWiener {
        return Err(CliError::Config("filter requires the standard_wiener force".into()));
    }
    let mut times = cfg.filter.times.clone();
    if times.is_empty() || times.iter().any(|t| t.is_nan() || *t < 0.0) {
        return Err(CliError::Config("filter.times must be nonempty and nonnegative".into()));
    }
    times.sort_by(f64::total_cmp);
    let (_, sys) = cfg.primary_system()?;
    let meas = match invariant_covariance(&sys) {
        Ok(m) => m,
        Err(Error::NoInvariantMeasure { diagnosis }) => {
            return Ok(Report::new(json!({ "hurwitz_diagnosis": diagnosis }))
                .inapplicable(format!("state matrix is {diagnosis}: no stationary initialization for the filter")));
        }
        Err(e) => return Err(e.into()),
    };
    let setup = filter_setup(&sys, &meas)?;
    let grid = grid_to(cfg, *times.last().unwrap_or(&1.0))?;
    let gains = FilterGains::new(&sys, &setup, &grid)?;
    let force = ForceModel::standard_wiener(sys.channels());
    let scheme = cfg.simulation.scheme_for(&cfg.force)?;
    let sim = Simulator::new(&sys, &force, grid.clone(), scheme)?;
    let init = InitialState::Gaussian {
        mean: vec![0.0; sys.state_dim()],
        covariance: meas.covariance.clone(),
    };
    let sampler = init.sampler();
    let n = sys.dof();
    let indices = strided_indices(&grid, stride(cfg, &grid));
    let probe_idx: Vec<usize> = times.iter().map(|t| grid.nearest_index(*t)).collect();
    let paths = cfg.simulation.paths;
    let acc = run_paths(
        paths,
        opts.threads,
        || FilterAcc {
            sq_error: vec![Moments::default(); indices.len()],
            probes: vec![CovarianceAccumulator::new(2 * n); probe_idx.len()],
        },
        |acc, path| -> Result<(), Error> {
            let traj = sim.run(&sampler.sample(seed, path), seed, path)?;
            let run = run_filter(&sys, &traj, &gains)?;
            for (i, &k) in indices.iter().enumerate() {
                acc.sq_error[i].push(run.error(k).iter().map(|e| e * e).sum());
            }
            for (p, &k) in acc.probes.iter_mut().zip(&probe_idx) {
                let mut ep = run.error(k).to_vec();
                ep.extend_from_slice(traj.momentum(k));
                p.push(&ep);
            }
            Ok(())
        },
    )?;

    let mut rows = vec![];
    for (p, &k) in acc.probes.iter().zip(&probe_idx) {
        let t = grid.time(k);
        let exact = setup.covariance_at(t)?;
        let cov = p.covariance();
        let se = p.covariance_std_error();
        let at = |i: usize, j: usize| i * 2 * n + j;
        let mut error_gap = 0.0f64;
        let mut cross_gap = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                let gap = (cov[at(i, j)] - exact[(i, j)]).abs();
                error_gap = error_gap.max(if gap == 0.0 { 0.0 } else { gap / se[at(i, j)] });
                let c = cov[at(i, n + j)].abs();
                cross_gap = cross_gap.max(if c == 0.0 { 0.0 } else { c / se[at(i, n + j)] });
            }
        }
        let block = |off: usize| -> Vec<Vec<f64>> {
            (0..n).map(|i| (0..n).map(|j| cov[at(i, off + j)]).collect()).collect()
        };
        rows.push(json!({
            "t": t,
            "P": matrix(&exact),
            "error_covariance": block(0),
            "error_gap_in_se": error_gap,
            "error_momentum_correlation": block(n),
            "correlation_in_se": cross_gap,
        }));
    }
    let p0 = &setup.initial_covariance;
    let root = spd_sqrt(p0)?.root;
    let slowest = 1.0 / min_eigenvalue(&setup.information_rate.congruence(&root)?)?;
    let t_large = 1e3 * slowest;
    let limit = setup.information_rate.inverse()?;
    let scaled = setup.covariance_at(t_large)?.scale(t_large);
    let rel = (&*scaled - &*limit).frobenius_norm() / limit.frobenius_norm();

    let mut series = Series::new(&["t", "trace_P", "mean_sq_error", "se_sq_error"]);
    for (i, &k) in indices.iter().enumerate() {
        let t = grid.time(k);
        series.push(vec![t, gains.covariances[k].trace(), acc.sq_error[i].mean(), acc.sq_error[i].std_error()]);
    }
    let mut report = Report::new(json!({
        "paths": paths,
        "dt": cfg.simulation.dt,
        "scheme": scheme.as_str(),
        "P0": matrix(p0),
        "initial_gain": matrix(&setup.initial_gain),
        "probes": rows,
        "asymptotic": {
            "t": t_large,
            "tP": matrix(&scaled),
            "limit": matrix(&limit),
            "relative_error": rel,
        },
    }));
    report.seed = Some(seed);
    report.series = Some(series);
    Ok(report)
}

struct UpsilonAcc(UpsilonEnsemble);

impl Accumulator for UpsilonAcc {
    fn merge(&mut self, other: Self) {
        self.0.merge(&other.0);
    }
}

fn bound_json(b: &RobustBound) -> Value {
    json!({
        "eps": b.eps,
        "mu": b.mu,
        "gamma": b.gamma,
        "lambda_min_q": b.lambda_min_q,
        "lambda_max_q": b.lambda_max_q,
        "asymptotic_bound": b.asymptotic_bound,
        "initial_bound": b.initial_bound,
    })
}

/// Envelope slack in standard errors.
const ENVELOPE_SE: f64 = 3.0;
/// Required margin of the asymptotic bound over the final mean, in
/// standard errors.
const BOUND_MARGIN_SE: f64 = 2.0;

pub fn robust(cfg: &ExperimentConfig, opts: &RunOptions) -> CliResult<Report> {
    let (name, sys) = cfg.primary_system()?;
    let init = initial_state(cfg, &sys)?;
    let m2 = cfg.robust.second_moment_x0.unwrap_or_else(|| init.second_moment());
    let explicit = match cfg.robust.gamma {
        Some(g) => {
            let delta = match &cfg.robust.delta {
                Some(d) => d.to_sym("robust Delta")?,
                None => SymMatrix::zeros(sys.state_dim()),
            };
            Some(UncertaintyClass::new(g, delta)?)
        }
        None => None,
    };
    let class_at = |eps: f64| match &explicit {
        Some(c) => Ok(c.clone()),
        None => cfg.force.class_at(&sys, eps),
    };
    let mut outputs = json!({ "system": { "name": name, "dof": sys.dof(), "channels": sys.channels() } });
    let bound = match cfg.robust.eps.value() {
        Some(eps) => class_at(eps).and_then(|uc| robust_bound(&sys, eps, &uc, m2)),
        None => match eps_scan_with(&sys, class_at, m2, 100) {
            Ok((sweep, best)) => {
                outputs["eps_scan"] = json!(sweep
                    .iter()
                    .map(|s| json!([s.eps, s.asymptotic_bound]))
                    .collect::<Vec<_>>());
                best.ok_or(Error::InvalidArgument("no eps in the window admits the class".into()))
            }
            Err(e) => Err(e),
        },
    };
    let bound = match bound {
        Ok(b) => b,
        Err(
            e @ (Error::InvalidCertificate { .. }
            | Error::InadmissibleClass { .. }
            | Error::NotPositiveDefinite { .. }
            | Error::InvalidArgument(_)),
        ) => {
            return Ok(Report::new(outputs).inapplicable(format!("{e}: robust bound inapplicable")));
        }
        Err(e) => return Err(e.into()),
    };
    let uc = class_at(bound.eps)?;
    outputs["class"] = json!({ "gamma": uc.gamma, "Delta": matrix(&uc.delta) });
    outputs["bound"] = bound_json(&bound);
    let mut report = Report::new(outputs);
    if !cfg.robust.monte_carlo {
        return Ok(report);
    }

    let seed = cfg.require_seed(opts.seed)?;
    let force = cfg.force.build(sys.channels())?;
    let grid = grid_to(cfg, cfg.simulation.horizon)?;
    let scheme = cfg.simulation.scheme_for(&cfg.force)?;
    let sim = Simulator::new(&sys, &force, grid.clone(), scheme)?;
    let cert = certificate(&sys, bound.eps);
    let exact = bound.clone().with_initial_state(&cert, &init);
    let sampler = init.sampler();
    let indices = strided_indices(&grid, stride(cfg, &grid));
    let paths = cfg.simulation.paths;
    let acc = run_paths(
        paths,
        opts.threads,
        || UpsilonAcc(UpsilonEnsemble::new(bound.mu, &grid, indices.clone())),
        |acc, path| -> Result<(), Error> {
            let traj = sim.run(&sampler.sample(seed, path), seed, path)?;
            let ok = admissibility_check(&sys, bound.eps, &uc, &traj)?.pass;
            acc.0.push(&cert, &traj, ok);
            Ok(())
        },
    )?;
    let ens = acc.0;

    let mut worst_excess = f64::NEG_INFINITY;
    let mut envelope_ok = true;
    let mut series = Series::new(&["t", "mean_upsilon", "se_upsilon", "transient", "mean_norm_sq", "se_norm_sq"]);
    for (i, &t) in ens.times.iter().enumerate() {
        let u = &ens.upsilon[i];
        let env = exact.transient(t);
        let se = u.std_error();
        if u.mean() > env + ENVELOPE_SE * se + 1e-12 * (1.0 + env.abs()) {
            envelope_ok = false;
        }
        if se > 0.0 {
            worst_excess = worst_excess.max((u.mean() - env) / se);
        }
        let x2 = &ens.state_norm_sq[i];
        series.push(vec![t, u.mean(), se, env, x2.mean(), x2.std_error()]);
    }
    let last = ens.state_norm_sq.last().copied().unwrap_or_default();
    let margin_se = (bound.asymptotic_bound - last.mean()) / last.std_error();
    let mut mc = json!({
        "paths": paths,
        "dt": cfg.simulation.dt,
        "scheme": scheme.as_str(),
        "initial": initial_json(&init),
        "exact_initial_bound": exact.initial_bound,
        "inadmissible_paths": ens.inadmissible,
        "final": {
            "t": grid.end(),
            "mean_norm_sq": last.mean(),
            "mean_norm_sq_se": last.std_error(),
            "bound_margin_in_se": margin_se,
            "below_bound": margin_se >= BOUND_MARGIN_SE,
        },
        "stationary_trace": invariant_covariance(&sys).ok().map(|m| m.covariance.trace()),
        "envelope": {
            "holds": envelope_ok,
            "worst_excess_in_se": if worst_excess.is_finite() { Some(worst_excess) } else { None },
        },
    });
    match supermartingale_check(&ens, &uc) {
        Ok(r) => {
            mc["supermartingale"] = json!({
                "nonincreasing": r.nonincreasing,
                "max_uptick_in_se": if r.max_uptick.is_finite() { Some(r.max_uptick) } else { None },
                "low_power": r.low_power,
            });
            series.columns.push("z".into());
            for (row, z) in series.rows.iter_mut().zip(&r.z) {
                row.push(*z);
            }
            if r.low_power {
                report.diagnostics.push("fewer than 30 paths: supermartingale test has little power".into());
            }
        }
        Err(e @ Error::InadmissiblePaths { .. }) => {
            report = report.inapplicable(format!("{e}: force left the uncertainty class"));
        }
        Err(e) => return Err(e.into()),
    }
    report.outputs["monte_carlo"] = mc;
    report.seed = Some(seed);
    report.series = Some(series);
    Ok(report)
}
