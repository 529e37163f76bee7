use serde_json::{json, Value};

use crate::bounds::{
    bilinear_sup, energy_inequality_report, gamma0_for_epsilon, lyapunov_drift, lyapunov_threshold,
    moment_bound_series, ou_stationary_moment, smoothing_bound_report, tightness_fraction, EnergyCheckParams,
    SeriesParams,
};
use crate::dynamics::{Integrator, SteeringPlan};
use crate::ergodicity::{tv_proxy, InvariantSpec, Lab, MixingSpec, Observable};
use crate::error::{Error, Result};
use crate::noise::{family, field_covariance_test, RngStream};

use super::config::{pad, RunConfig};
use super::output::OutputDir;
use super::Experiment;

type Dispatch = (Value, Vec<String>);

pub(super) fn dispatch(experiment: Experiment, cfg: &RunConfig, out: &mut OutputDir) -> Result<Dispatch> {
    match experiment {
        Experiment::Simulate => simulate(cfg, out),
        Experiment::Invariant => invariant(cfg, out),
        Experiment::Mixing => mixing(cfg, out),
        Experiment::Steer => steer(cfg),
        Experiment::Feller => feller(cfg, out),
        Experiment::Hitting => hitting(cfg, out),
        Experiment::Bounds => bounds(cfg, out),
        Experiment::CheckEstimates => check_estimates(cfg, out),
        Experiment::CovarianceTest => covariance(cfg),
    }
}

fn lab(cfg: &RunConfig) -> Result<Lab> {
    Lab::new(cfg.model.clone(), cfg.run.seed, cfg.run.workers)
}

fn observables(cfg: &RunConfig) -> Result<Vec<Observable>> {
    cfg.experiment.observables.iter().map(|s| s.parse()).collect()
}

fn simulate(cfg: &RunConfig, out: &mut OutputDir) -> Result<Dispatch> {
    let it = Integrator::new(cfg.model.clone())?;
    let x = cfg.initial_field()?;
    let mut stream = RngStream::new(cfg.run.seed, family::PATHS);
    let rec = it.simulate(&x, cfg.experiment.t_end, &mut stream, cfg.experiment.record_every)?;
    out.write_csv(
        "trajectory.csv",
        "trajectory",
        &["time", "l2_norm", "hbeta_norm", "mode1", "mode2"],
        rec.times
            .iter()
            .zip(&rec.observables)
            .map(|(t, o)| [*t, o.l2, o.h_beta, o.mode1, o.mode2]),
    )?;
    let l2: Vec<f64> = rec.observables.iter().map(|o| o.l2).collect();
    Ok((
        json!({
            "t_end": cfg.experiment.t_end,
            "steps": it.steps_for(cfg.experiment.t_end),
            "records": rec.len(),
            "final_l2_norm": l2.last(),
            "max_l2_norm": l2.iter().cloned().fold(0.0, f64::max),
            "mean_l2_norm": l2.iter().sum::<f64>() / l2.len() as f64,
        }),
        Vec::new(),
    ))
}

fn invariant(cfg: &RunConfig, out: &mut OutputDir) -> Result<Dispatch> {
    let e = &cfg.experiment;
    let lab = lab(cfg)?;
    let obs = observables(cfg)?;
    let x = cfg.initial_field()?;
    let edges = lab.pilot_edges(&x, &obs, e.pilot, 1.0, e.bins)?;
    let spec = InvariantSpec {
        horizon: e.horizon,
        burn_in: cfg.burn_in(),
        stride: e.stride,
        paths: e.paths,
        windows: e.windows.max(2),
        family: family::PATHS,
    };
    let run = lab.empirical_invariant(&x, &spec, &obs, &edges)?;
    let other = match &e.compare_initial {
        Some(c) => {
            let y = pad(c, cfg.model.modes)?;
            let spec2 = InvariantSpec {
                family: family::SECOND_ENSEMBLE,
                ..spec
            };
            Some(lab.empirical_invariant(&y, &spec2, &obs, &edges)?)
        }
        None => None,
    };
    let mut per_obs = Vec::new();
    for (o, m) in run.measures.iter().enumerate() {
        out.write_csv(
            &format!("measure_{}.csv", m.observable),
            "measure",
            &["bin_lo", "bin_hi", "count"],
            m.edges.windows(2).zip(&m.counts).map(|(w, c)| [w[0], w[1], *c as f64]),
        )?;
        let last = run.windows.len() - 1;
        per_obs.push(json!({
            "observable": m.observable,
            "samples": m.total,
            "mean": m.mean(),
            "variance": m.variance(),
            "split_half_tv": tv_proxy(&run.windows[0][o], &run.windows[last][o])?,
            "tv_between_initial_conditions": match &other {
                Some(r) => Some(tv_proxy(m, &r.measures[o])?),
                None => None,
            },
        }));
    }
    Ok((
        json!({ "spec": spec, "observables": per_obs }),
        Vec::new(),
    ))
}

fn mixing(cfg: &RunConfig, out: &mut OutputDir) -> Result<Dispatch> {
    let e = &cfg.experiment;
    let lab = lab(cfg)?;
    let obs = observables(cfg)?;
    let spec = MixingSpec {
        horizon: e.horizon,
        burn_in: cfg.burn_in(),
        stride: e.stride,
        lags: e.lags.clone(),
        horizons: e.horizons.clone(),
        states: e.states,
        replicas: e.replicas,
    };
    let r = lab.mixing_report(&cfg.initial_field()?, &obs, &spec)?;
    let mut header = vec!["lag"];
    header.extend(r.observables.iter().map(String::as_str));
    out.write_csv(
        "autocorrelation.csv",
        "autocorrelation",
        &header,
        r.lags.iter().enumerate().map(|(l, lag)| {
            std::iter::once(*lag).chain(r.autocorrelation.iter().map(move |a| a[l]))
        }),
    )?;
    header[0] = "horizon";
    out.write_csv(
        "mixing.csv",
        "mixing",
        &header,
        r.horizons.iter().enumerate().map(|(h, hz)| {
            std::iter::once(*hz).chain(r.statistic.iter().map(move |s| s[h]))
        }),
    )?;
    Ok((json!(r), Vec::new()))
}

fn target(cfg: &RunConfig) -> Result<crate::spectral::SpectralField> {
    if cfg.experiment.target.len() > cfg.model.modes {
        return Err(Error::domain("target has more coefficients than the model keeps"));
    }
    pad(&cfg.experiment.target, cfg.model.modes)
}

fn steer(cfg: &RunConfig) -> Result<Dispatch> {
    let e = &cfg.experiment;
    let lab = lab(cfg)?;
    let x = cfg.initial_field()?;
    let y = target(cfg)?;
    let plan = SteeringPlan::default_for(&x, y.clone(), e.t_end)?.on_grid(cfg.model.dt)?;
    let h = lab.hitting_probability(&x, &y, e.eps, e.t_end, e.samples, true)?;
    Ok((
        json!({
            "tau": plan.tau,
            "t_end": plan.t_end,
            "radius": plan.radius,
            "eps": e.eps,
            "target": y.coeffs(),
            "hitting": h,
            "at_least_half_within_3se": h.frequency >= 0.5 - 3.0 * (0.25 / h.n_samples as f64).sqrt(),
        }),
        Vec::new(),
    ))
}

fn feller(cfg: &RunConfig, out: &mut OutputDir) -> Result<Dispatch> {
    let e = &cfg.experiment;
    let lab = lab(cfg)?;
    let phi: Observable = e.feller_observable.parse()?;
    let x = cfg.initial_field()?;
    let dir = pad(&e.feller_direction, cfg.model.modes)?;
    let norm = dir.l2_norm();
    if norm == 0.0 {
        return Err(Error::domain("feller_direction must be nonzero"));
    }
    let mut rows = Vec::new();
    for &d in &e.feller_distances {
        let y = x.try_add(&dir.scaled(d / norm))?;
        rows.push(lab.feller_modulus(&phi, &x, &y, e.t_end, e.samples)?);
    }
    out.write_csv(
        "feller.csv",
        "feller",
        &["distance", "modulus", "mc_error", "mean_x", "mean_y"],
        rows.iter().map(|r| [r.distance, r.modulus, r.mc_error, r.mean_x, r.mean_y]),
    )?;
    Ok((json!({ "observable": phi.name(), "t": e.t_end, "moduli": rows }), Vec::new()))
}

fn hitting(cfg: &RunConfig, out: &mut OutputDir) -> Result<Dispatch> {
    let e = &cfg.experiment;
    let lab = lab(cfg)?;
    let x = cfg.initial_field()?;
    let y = target(cfg)?;
    let h = lab.hitting_probability(&x, &y, e.eps, e.t_end, e.samples, e.steered)?;
    let tail = lab.exit_time_tail(&x, &e.levels, e.t_end, e.samples)?;
    out.write_csv(
        "exit_tail.csv",
        "exit_tail",
        &["level", "frequency", "ci_lo", "ci_hi"],
        tail.iter().map(|l| [l.level, l.frequency, l.ci.0, l.ci.1]),
    )?;
    Ok((json!({ "hitting": h, "exit_tail": tail }), Vec::new()))
}

fn bounds(cfg: &RunConfig, out: &mut OutputDir) -> Result<Dispatch> {
    let e = &cfg.experiment;
    let base = SeriesParams {
        sigma: e.sigma,
        p: e.p,
        alpha: cfg.model.alpha,
        gamma: 0.0,
        rho: e.rho,
    };
    let series = e
        .gammas
        .iter()
        .map(|&g| moment_bound_series(SeriesParams { gamma: g, ..base }, None))
        .collect::<Result<Vec<_>>>()?;
    out.write_csv(
        "bounds.csv",
        "bounds",
        &["gamma", "value", "tail_bound", "terms", "ou_moment"],
        series.iter().map(|r| {
            [
                r.params.gamma,
                r.value,
                r.tail_bound,
                r.terms as f64,
                ou_stationary_moment(e.sigma, cfg.model.alpha, r.params.gamma, 1.0, cfg.model.modes),
            ]
        }),
    )?;
    let gamma0 = e
        .epsilons
        .iter()
        .map(|&eps| Ok(json!({ "eps": eps, "gamma0": gamma0_for_epsilon(eps, base)? })))
        .collect::<Result<Vec<_>>>()?;
    Ok((json!({ "series": series, "gamma0": gamma0 }), Vec::new()))
}

fn check_estimates(cfg: &RunConfig, out: &mut OutputDir) -> Result<Dispatch> {
    let e = &cfg.experiment;
    let it = Integrator::new(cfg.model.clone())?;
    let x = cfg.initial_field()?;
    let mut stream = RngStream::new(cfg.run.seed, family::PATHS);
    let rec = it.simulate_decomposition(&x, e.t_end, &mut stream, 1)?;
    let mut failures = Vec::new();

    let params = EnergyCheckParams {
        supplied_c: e.energy_c,
        ..EnergyCheckParams::defaults(cfg.model.alpha, cfg.model.gamma)
    };
    let energy = energy_inequality_report(&rec.times, &rec.v, &rec.z, &params)?;
    out.write_csv(
        "energy.csv",
        "energy",
        &["time", "lhs", "rhs"],
        energy.times.iter().zip(&energy.lhs).zip(&energy.rhs).map(|((t, l), r)| [*t, *l, *r]),
    )?;
    if let Some(c) = e.energy_c {
        if energy.violations > 0 {
            failures.push(format!("energy inequality with C = {c} violated at {} times", energy.violations));
        }
    }

    let smoothing = e
        .smoothing_times
        .iter()
        .filter(|&&t| t <= e.t_end + 1e-12)
        .map(|&t| smoothing_bound_report(&rec.times, &rec.v, cfg.model.alpha, e.beta, t, None))
        .collect::<Result<Vec<_>>>()?;
    out.write_csv(
        "smoothing.csv",
        "smoothing",
        &["t", "lhs", "rhs_shape", "ratio"],
        smoothing.iter().map(|s| [s.t, s.lhs, s.rhs_shape, s.ratio]),
    )?;

    let bilinear = e
        .bilinear_modes
        .iter()
        .map(|&n| Ok(json!({ "modes": n, "sup_ratio": bilinear_sup(n, e.bilinear_beta)? })))
        .collect::<Result<Vec<_>>>()?;

    let v_sq: Vec<f64> = rec.v.iter().map(|v| v.l2_norm_sq()).collect();
    let threshold = lyapunov_threshold(cfg.model.gamma, v_sq[0]);
    let lyap = lyapunov_drift(&v_sq, threshold)?;

    let tightness = if e.t_end > 1.0 {
        let path: Vec<_> = rec.times.iter().cloned().zip(rec.u.iter().cloned()).collect();
        let thresholds = [1.0, 10.0, 100.0, 1000.0];
        Some(
            thresholds
                .iter()
                .map(|&m| {
                    Ok(json!({
                        "threshold": m,
                        "fraction": tightness_fraction(std::slice::from_ref(&path), cfg.model.alpha, e.beta, m, e.t_end - 1.0)?,
                    }))
                })
                .collect::<Result<Vec<_>>>()?,
        )
    } else {
        None
    };

    Ok((
        json!({
            "energy": {
                "params": params,
                "fitted_c": energy.max_ratio,
                "violations": energy.violations,
                "supplied_c": energy.supplied_c,
            },
            "smoothing": smoothing,
            "bilinear": bilinear,
            "lyapunov": {
                "threshold": lyap.threshold,
                "occupation_fraction": lyap.occupation_fraction,
            },
            "tightness": tightness,
        }),
        failures,
    ))
}

fn covariance(cfg: &RunConfig) -> Result<Dispatch> {
    let e = &cfg.experiment;
    let mut stream = RngStream::new(cfg.run.seed, family::AUX);
    let est = field_covariance_test(
        &mut stream,
        (e.covariance_times[0], e.covariance_times[1]),
        (e.covariance_points[0], e.covariance_points[1]),
        e.covariance_samples,
        e.covariance_modes,
    )?;
    let z = (est.empirical - est.truncated_exact).abs() / est.std_error;
    let mut failures = Vec::new();
    if !(z <= e.covariance_z) {
        failures.push(format!(
            "empirical covariance {} is {z:.2} standard errors from {}",
            est.empirical, est.truncated_exact
        ));
    }
    Ok((json!({ "estimate": est, "z_score": z }), failures))
}
