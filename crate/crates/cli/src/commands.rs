use rcmlab_core::chaining::{
    ball_norms_csv, build_chain, calibrate_c14, chained_lower_bound, check_steps,
};
use rcmlab_core::envelopes::{
    envelope_svg, fit_envelopes, kernel_points, stabilization_time, verify_points, EnvelopeReport,
    FitOptions, Side, ThresholdTable,
};
use rcmlab_core::environment::io::{read_env, write_env};
use rcmlab_core::environment::sample_environment;
use rcmlab_core::green::{
    annealed_green, green_csv, green_row, quenched_bound_check, GreenOptions,
};
use rcmlab_core::kernel::{
    heat_kernel_sources, heat_kernel_with, jump_kernel, slices_csv, WrapPolicy,
};
use rcmlab_core::moments::{
    association_check, centering_constant, default_eta, ladder_csv, ladder_svg, mixing_decay,
    moment_bound_report, rectangle_ladder,
};
use rcmlab_core::report::{csv_row, fmt_f64};
use rcmlab_core::{seed, ConductanceField, RcmError, Result, TorusGeometry};
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::output::Sink;

/// What a command found; `Violations` maps to a distinct exit code.
#[derive(Debug, PartialEq, Eq)]
pub enum Outcome {
    Ok,
    Violations(usize),
}

fn point_index(g: &TorusGeometry, p: &[i64]) -> Result<usize> {
    if p.len() != g.dim() {
        return Err(RcmError::Precondition(format!(
            "point {p:?} has dimension {}, torus has {}",
            p.len(),
            g.dim()
        )));
    }
    Ok(g.index(p))
}

fn sources(g: &TorusGeometry, pts: &[Vec<i64>]) -> Result<Vec<usize>> {
    if pts.is_empty() {
        return Ok(vec![0]);
    }
    pts.iter().map(|p| point_index(g, p)).collect()
}

fn field(cfg: &ExperimentConfig, stream: &str) -> Result<ConductanceField> {
    sample_environment(
        &cfg.environment,
        cfg.torus()?,
        seed::stream_seed(cfg.seed, stream),
    )
}

pub fn env(cfg: &ExperimentConfig, sink: &mut Sink) -> Result<Outcome> {
    let f = field(cfg, "main")?;
    let mut buf = Vec::new();
    write_env(&mut buf, &f)?;
    // the round trip guards against writing something unreadable
    if read_env(buf.as_slice())? != f {
        return Err(RcmError::Numerical(
            "environment file does not round-trip".into(),
        ));
    }
    sink.bytes("env.rcm", &buf)?;
    sink.json("env.meta.json", &serde_json::json!({ "file": "env.rcm", "spec": cfg.environment, "edges": f.values().len() }))?;
    Ok(Outcome::Ok)
}

pub fn heat(cfg: &ExperimentConfig, sink: &mut Sink) -> Result<Outcome> {
    let f = field(cfg, "main")?;
    let k = jump_kernel(&f)?;
    let h = &cfg.heat;
    let slices = heat_kernel_sources(
        &k,
        &sources(f.geometry(), &h.sources)?,
        &h.times,
        h.tol,
        h.wrap,
    )?;
    let flat: Vec<_> = slices.into_iter().flatten().collect();
    sink.csv("heat.csv", &slices_csv(f.geometry(), &flat))?;
    #[derive(Serialize)]
    struct Cert {
        t: f64,
        source: usize,
        trunc_error: f64,
        wrap_error: f64,
    }
    let certs: Vec<Cert> = flat
        .iter()
        .map(|s| Cert {
            t: s.t,
            source: s.source,
            trunc_error: s.trunc_error,
            wrap_error: s.wrap_error,
        })
        .collect();
    sink.json("heat.json", &certs)?;
    Ok(Outcome::Ok)
}

pub fn verify(cfg: &ExperimentConfig, sink: &mut Sink) -> Result<Outcome> {
    let v = &cfg.verify;
    let fit_field = field(cfg, "fit")?;
    let g = *fit_field.geometry();
    let src = sources(&g, &v.sources)?;
    let fit_points = kernel_points(
        &jump_kernel(&fit_field)?,
        &g,
        &src,
        &v.times,
        v.window,
        v.tol,
        v.wrap,
    )?;
    let opts = FitOptions {
        upper_slack: v.upper_slack,
        lower_factor: v.lower_factor,
    };
    let mut env = fit_envelopes(
        g.dim(),
        &fit_points,
        ThresholdTable::uniform(v.threshold),
        opts,
    )?;
    env.c2 *= v.c2_scale;
    let check_points = if v.same_field {
        fit_points
    } else {
        let other = field(cfg, "verify")?;
        kernel_points(
            &jump_kernel(&other)?,
            &g,
            &src,
            &v.times,
            v.window,
            v.tol,
            v.wrap,
        )?
    };
    let report = verify_points(&env, &check_points);
    let mut csv = String::from("side,t,x,y,dist,p,bound,margin\n");
    let coords = |i: usize| {
        g.point(i)
            .iter()
            .map(|c| c.to_string())
            .collect::<Vec<_>>()
            .join(";")
    };
    for viol in &report.violations {
        let side = if viol.side == Side::Upper {
            "upper"
        } else {
            "lower"
        };
        let pt = &viol.point;
        csv.push_str(&csv_row([
            side.to_string(),
            fmt_f64(pt.t),
            coords(pt.source),
            coords(pt.target),
            fmt_f64(pt.dist),
            fmt_f64(pt.p),
            fmt_f64(viol.bound),
            fmt_f64(viol.margin),
        ]));
    }
    let failing = report
        .violations
        .iter()
        .filter(|x| x.margin > v.margin)
        .count();
    sink.csv("violations.csv", &csv)?;
    sink.svg("envelope.svg", &envelope_svg(&env, &check_points))?;
    let out = EnvelopeReport {
        stabilization_time: stabilization_time(g.dim(), &check_points),
        envelope: env,
        report,
    };
    sink.json("envelope.json", &out)?;
    Ok(if failing > 0 {
        Outcome::Violations(failing)
    } else {
        Outcome::Ok
    })
}

pub fn chain(cfg: &ExperimentConfig, sink: &mut Sink) -> Result<Outcome> {
    let c = &cfg.chain;
    let f = field(cfg, "main")?;
    let g = *f.geometry();
    point_index(&g, &c.x)?;
    let plan = build_chain(&c.x, c.t)?;
    let mut consts = c.constants;
    let mut exact = None;
    if c.check {
        let k = jump_kernel(&f)?;
        let steps = check_steps(&k, &f, &plan, &consts, c.tol)?;
        consts.c14 = calibrate_c14(&steps, &consts);
        let slice = heat_kernel_with(&k, c.t, 0, c.tol, WrapPolicy::Report)?;
        exact = Some(slice.hk[g.index(&c.x)]);
    }
    let bound = chained_lower_bound(&f, c.t, &c.x, &consts)?;
    sink.csv("ball_norms.csv", &ball_norms_csv(&bound))?;
    sink.json(
        "chain.json",
        &serde_json::json!({ "plan": plan, "bound": bound, "exact": exact }),
    )?;
    Ok(match exact {
        Some(p) if bound.value > p => Outcome::Violations(1),
        _ => Outcome::Ok,
    })
}

pub fn moments(cfg: &ExperimentConfig, sink: &mut Sink) -> Result<Outcome> {
    let m = &cfg.moments;
    let g = cfg.torus()?;
    if m.sizes < 4 {
        return Err(RcmError::Precondition(format!(
            "need at least 4 ladder sizes, got {}",
            m.sizes
        )));
    }
    let rects = rectangle_ladder(g.dim(), m.min_size, m.min_size << (m.sizes - 1));
    let centering = match m.centering {
        Some(c) => c,
        None => {
            centering_constant(
                &cfg.environment,
                &g,
                m.quantity,
                m.exponent,
                m.centering_replicas,
                seed::stream_seed(cfg.seed, "centering"),
            )?
            .0
        }
    };
    let eta = m
        .eta
        .unwrap_or_else(|| default_eta(&cfg.environment, g.dim()));
    let report = moment_bound_report(
        &cfg.environment,
        &g,
        m.quantity,
        m.exponent,
        eta,
        centering,
        &rects,
        m.replicas,
        seed::stream_seed(cfg.seed, "ladder"),
    )?;
    sink.csv("ladder.csv", &ladder_csv(&report))?;
    sink.svg("ladder.svg", &ladder_svg(&report))?;
    let association = match m.association_replicas {
        0 => None,
        n => Some(association_check(
            &cfg.environment,
            &g,
            n,
            seed::stream_seed(cfg.seed, "association"),
        )?),
    };
    let mixing = match m.mixing_distances.is_empty() {
        true => None,
        false => Some(mixing_decay(
            &cfg.environment,
            &g,
            &m.mixing_distances,
            m.mixing_replicas,
            seed::stream_seed(cfg.seed, "mixing"),
        )?),
    };
    let failed = association
        .iter()
        .flatten()
        .filter(|a| a.pass == Some(false))
        .count();
    sink.json(
        "moments.json",
        &serde_json::json!({ "ladder": report, "association": association, "mixing": mixing }),
    )?;
    Ok(if failed > 0 {
        Outcome::Violations(failed)
    } else {
        Outcome::Ok
    })
}

pub fn green(cfg: &ExperimentConfig, sink: &mut Sink) -> Result<Outcome> {
    let gc = &cfg.green;
    let g = cfg.torus()?;
    if g.dim() < 3 {
        return Err(RcmError::TransientDimensionRequired(g.dim()));
    }
    let f = field(cfg, "main")?;
    let k = jump_kernel(&f)?;
    let x = if gc.x.is_empty() {
        0
    } else {
        point_index(&g, &gc.x)?
    };
    let targets: Vec<usize> = if gc.targets.is_empty() {
        let base = g.point(x);
        (0..=g.side() as i64 / 4)
            .map(|r| {
                let mut p = base.clone();
                p[0] += r;
                g.index(&p)
            })
            .collect()
    } else {
        gc.targets
            .iter()
            .map(|p| point_index(&g, p))
            .collect::<Result<_>>()?
    };
    let opts = GreenOptions {
        tol: gc.tol,
        t0: gc.t0,
        fit_points: gc.fit_points,
    };
    let row = green_row(&k, x, &targets, &opts)?;
    sink.csv("green.csv", &green_csv(&g, &row))?;
    let quenched = quenched_bound_check(&row, g.dim(), gc.threshold, gc.window);
    let annealed = match &gc.annealed {
        Some(a) => Some(annealed_green(
            &cfg.environment,
            &g,
            &a.distances,
            a.replicas,
            seed::stream_seed(cfg.seed, "annealed"),
            &opts,
        )?),
        None => None,
    };
    sink.json(
        "green.json",
        &serde_json::json!({ "estimates": row, "quenched": quenched, "annealed": annealed }),
    )?;
    Ok(if quenched.within_window {
        Outcome::Ok
    } else {
        Outcome::Violations(1)
    })
}
