use std::fs::{self, File};
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use heisenberg_minimal::characteristics::{
    self, certify, integrate_span, resample_to_grid, CertifyReport, CertifyTolerances, InitialCurve,
    VectorFieldSpec,
};
use heisenberg_minimal::families::{
    self, nonuniqueness_report, sample, NonUniquenessReport, VerifyOptions, VerifyReport, NONUNIQUE_ENERGY,
    NONUNIQUE_ENERGY_SQUARED,
};
use heisenberg_minimal::geometry::{energy, energy_squared};
use heisenberg_minimal::ode::{solve_cork, CorkSol, RadialProfile};
use heisenberg_minimal::solver::{nonunique_trace, solve_dirichlet, BoundaryData, SolverConfig, SolverReport};
use heisenberg_minimal::{ExampleDocument, ExampleSpec, GridDomain, GridFunction, Lambda, Region};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::output::{write_branches, Run};
use crate::{CharArgs, Cli, CliError, Command, CorkArgs, EnergyArgs, SolveArgs, VerifyArgs};

const DEFAULT_H: f64 = 1.0 / 64.0;
const NONUNIQUE_DEFAULT_H: f64 = 1.0 / 256.0;
const NONUNIQUE_MAX_H: f64 = 1.0 / 64.0;

pub fn run(cli: &Cli) -> Result<(), CliError> {
    let cmd = match &cli.command {
        Command::Verify(_) => "verify",
        Command::Solve(_) => "solve",
        Command::Nonunique => "nonunique",
        Command::Characteristics(_) => "characteristics",
        Command::Cork(_) => "cork",
        Command::Energy(_) => "energy",
    };
    let mut run = Run::new(&cli.out_dir, cmd, json!({ "h": cli.h, "seed": cli.seed }))?;
    let result = match &cli.command {
        Command::Verify(a) => verify(cli, a, &mut run),
        Command::Solve(a) => solve(cli, a, &mut run),
        Command::Nonunique => nonunique(cli, &mut run),
        Command::Characteristics(a) => chars(cli, a, &mut run),
        Command::Cork(a) => cork(cli, a, &mut run),
        Command::Energy(a) => energy_cmd(cli, a, &mut run),
    };
    let code = result.as_ref().map_or_else(|e| e.code() as i32, |_| 0);
    run.finish(code)?;
    result
}

fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    serde_json::from_str(&read_text(path)?)
        .map_err(|e| CliError::Input(format!("cannot parse {}: {e}", path.display())))
}

fn read_example(path: &Path) -> Result<ExampleDocument, CliError> {
    ExampleDocument::from_json(&read_text(path)?)
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| CliError::Input(format!("cannot open {}: {e}", path.display())))
}

/// Prints either the JSON report or the human summary.
fn emit<T: Serialize>(cli: &Cli, report: &T, summary: &str) -> Result<(), CliError> {
    if cli.json {
        let text = serde_json::to_string_pretty(report).map_err(|e| CliError::Input(e.to_string()))?;
        println!("{text}");
    } else {
        println!("{summary}");
    }
    Ok(())
}

fn angle_coefficient(spec: &ExampleSpec) -> Option<f64> {
    match spec {
        ExampleSpec::Helicoid { a } => Some(*a),
        ExampleSpec::Corkscrew(cs) => Some(cs.a),
        _ => None,
    }
}

fn verify(cli: &Cli, args: &VerifyArgs, run: &mut Run) -> Result<(), CliError> {
    let doc = read_example(&args.spec)?;
    let region = doc.region();
    let levels = if args.levels.is_empty() {
        let h = cli.h.unwrap_or(DEFAULT_H);
        vec![h, h / 2.0, h / 4.0]
    } else {
        args.levels.clone()
    };
    let opts = VerifyOptions::default();
    run.config["spec"] = serde_json::to_value(&doc).map_err(|e| CliError::Input(e.to_string()))?;
    run.config["levels"] = json!(levels);
    run.config["options"] = json!(opts);

    let report: VerifyReport = families::verify(&doc.spec, &region, &levels, &opts)?;
    run.write("residuals.csv", |w| {
        writeln!(w, "h,max_residual,order,evaluated_nodes,excluded_nodes,characteristic_nodes,mean_divergence")?;
        for (k, l) in report.levels.iter().enumerate() {
            let order = match k.checked_sub(1).and_then(|i| report.orders.get(i)) {
                Some(Some(o)) => format!("{o}"),
                Some(None) => "exact".into(),
                None => String::new(),
            };
            writeln!(
                w,
                "{},{:e},{},{},{},{},{:e}",
                l.h, l.max_residual, order, l.evaluated_nodes, l.excluded_nodes, l.characteristic_nodes, l.mean_divergence
            )?;
        }
        Ok(())
    })?;
    run.json("verify_report.json", &report)?;

    let h = report.levels.first().map_or(levels[0], |l| l.h);
    let domain = Arc::new(region.grid(h)?);
    run.grid(&domain);
    let u = sample(&doc.spec, &domain)?;
    run.write("surface.csv", |w| write_branches(w, &u, angle_coefficient(&doc.spec)))?;

    let orders: Vec<String> = report
        .orders
        .iter()
        .map(|o| o.map_or("exact".into(), |v| format!("{v:.3}")))
        .collect();
    let mut summary = format!(
        "{}: residuals {} orders [{}] -> {}",
        report.family,
        report
            .levels
            .iter()
            .map(|l| format!("{:.3e}", l.max_residual))
            .collect::<Vec<_>>()
            .join(" "),
        orders.join(", "),
        if report.passed { "pass" } else { "FAIL" }
    );
    if let Some(s) = report.observed_sign {
        let mean = report.levels.last().map_or(f64::NAN, |l| l.mean_divergence);
        summary.push_str(&format!("\nmean div n0 = {mean:.6} (sign {s:+})"));
    }
    emit(cli, &report, &summary)?;
    if report.passed {
        Ok(())
    } else {
        Err(CliError::Verification(format!(
            "{}: min order {:.3} (need {}) or residual above {} h^2",
            report.family, report.min_order, opts.min_order, opts.bound_const
        )))
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum TracePreset {
    Nonunique,
}

/// Where the Dirichlet data comes from.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum BoundarySpec {
    /// Trace of a closed-form family.
    Example { example: ExampleDocument },
    /// A function of the polar angle about `(cx, cy)`.
    Trace {
        preset: TracePreset,
        #[serde(default)]
        cx: f64,
        #[serde(default)]
        cy: f64,
    },
    /// Grid CSV (paths relative to the boundary file).
    Samples { path: PathBuf, mask: Option<PathBuf> },
}

fn solve(cli: &Cli, args: &SolveArgs, run: &mut Run) -> Result<(), CliError> {
    let spec: BoundarySpec = read_json(&args.boundary)?;
    let mut cfg: SolverConfig = match &args.config {
        Some(p) => read_json(p)?,
        None => SolverConfig::default(),
    };
    let h = cli.h.or(cfg.h).unwrap_or(DEFAULT_H);
    cfg.h = Some(h);
    cfg.validate()?;
    let region: Option<Region> = args.domain.as_deref().map(read_json).transpose()?;
    run.config["boundary"] = json!(spec);
    run.config["domain"] = json!(region);
    run.config["solver"] = json!(cfg);

    let base = args.boundary.parent().unwrap_or(Path::new("."));
    let data = match &spec {
        BoundarySpec::Example { example } => {
            let region = region.unwrap_or_else(|| example.region());
            let d = Arc::new(region.grid(h)?);
            BoundaryData::from_fn(d, |x, y| example.spec.eval(x, y).unwrap_or(f64::NAN))?
        }
        BoundarySpec::Trace { preset, cx, cy } => {
            let region = region.unwrap_or(Region::Disk {
                cx: *cx,
                cy: *cy,
                radius: 1.0,
            });
            let d = Arc::new(region.grid(h)?);
            match preset {
                TracePreset::Nonunique => BoundaryData::angular(d, *cx, *cy, nonunique_trace)?,
            }
        }
        BoundarySpec::Samples { path, mask } => {
            let mask = mask
                .as_ref()
                .map(|m| GridDomain::read_mask_csv(open(&base.join(m))?).map_err(CliError::from))
                .transpose()?;
            let u = GridFunction::read_csv(open(&base.join(path))?, mask)?;
            BoundaryData::from_grid_function(&u)?
        }
    };
    run.grid(data.domain());

    let report: SolverReport = solve_dirichlet(&data, &cfg)?;
    run.write("energies.csv", |w| {
        writeln!(w, "lambda,E_lambda,E,gap,iterations,residual,max_principle,substep")?;
        for r in &report.records {
            writeln!(
                w,
                "{:e},{:e},{:e},{:e},{},{:e},{},{}",
                r.lambda, r.e_lambda, r.e, r.gap, r.iterations, r.final_residual, r.max_principle, r.substep
            )?;
        }
        Ok(())
    })?;
    let limit_energy = report.limit_candidate.as_ref().map(|u| energy(u, Lambda::Infinity));
    let out = json!({ "report": report, "limit_energy": limit_energy, "max_principle_ok": report.max_principle_ok() });
    run.json("solver_report.json", &out)?;
    if let Some(u) = &report.limit_candidate {
        run.grid_function("surface", u)?;
    }
    let last = report.records.last();
    let summary = format!(
        "{} lambda levels, last lambda {}, E(limit) = {}, converged = {}, max principle = {}",
        report.records.len(),
        last.map_or("-".into(), |r| format!("{:.4}", r.lambda)),
        limit_energy.map_or("-".into(), |e| format!("{e:.6}")),
        report.converged,
        report.max_principle_ok()
    );
    emit(cli, &out, &summary)?;
    match &report.failure {
        Some(msg) => Err(CliError::Divergence(format!("{msg}; partial report written"))),
        None => Ok(()),
    }
}

#[derive(Debug, Serialize)]
struct NonuniqueOutcome {
    report: NonUniquenessReport,
    tol: f64,
    energy_oracle: f64,
    energy_squared_target: f64,
    passed: bool,
}

fn nonunique(cli: &Cli, run: &mut Run) -> Result<(), CliError> {
    let h = cli.h.unwrap_or(NONUNIQUE_DEFAULT_H);
    if !(h > 0.0) || h > NONUNIQUE_MAX_H * (1.0 + 1e-12) {
        return Err(CliError::Input(format!(
            "h = {h} is too coarse; nonunique needs 0 < h <= 1/64"
        )));
    }
    // tolerance scaled so that h = 1/256 gets 1e-3
    let tol = 0.256 * h;
    let domain = Arc::new(Region::unit_disk().grid(h)?);
    run.grid(&domain);
    let report = nonuniqueness_report(&domain)?;
    let u1 = sample(&ExampleSpec::NonUnique1, &domain)?;
    let u2 = sample(&ExampleSpec::NonUnique2, &domain)?;
    run.grid_function("u1", &u1)?;
    run.grid_function("u2", &u2)?;
    run.write("energies.csv", |w| {
        writeln!(w, "surface,E,E_squared")?;
        writeln!(w, "u1,{:.17e},{:.17e}", report.e1, report.esq1)?;
        writeln!(w, "u2,{:.17e},{:.17e}", report.e2, report.esq2)?;
        Ok(())
    })?;
    let passed = (report.esq1 - NONUNIQUE_ENERGY_SQUARED).abs() <= tol
        && (report.esq2 - NONUNIQUE_ENERGY_SQUARED).abs() <= tol
        && (report.e1 - report.e2).abs() <= tol
        && report.boundary_gap <= 2.0 * h;
    let out = NonuniqueOutcome {
        report,
        tol,
        energy_oracle: NONUNIQUE_ENERGY,
        energy_squared_target: NONUNIQUE_ENERGY_SQUARED,
        passed,
    };
    run.json("nonunique_report.json", &out)?;
    let r = &out.report;
    let summary = format!(
        "h = {h}: E1 = {:.6}, E2 = {:.6}, Esq1 = {:.6}, Esq2 = {:.6} (2 pi = {:.6}), boundary gap {:.2e}, tol {tol:.2e} -> {}",
        r.e1,
        r.e2,
        r.esq1,
        r.esq2,
        NONUNIQUE_ENERGY_SQUARED,
        r.boundary_gap,
        if passed { "pass" } else { "FAIL" }
    );
    emit(cli, &out, &summary)?;
    if passed {
        Ok(())
    } else {
        Err(CliError::Verification("energies differ beyond tolerance".into()))
    }
}

#[derive(Debug, Serialize)]
struct CharOutcome {
    curves: usize,
    samples_per_curve: usize,
    covered_nodes: usize,
    certify: CertifyReport,
    curve_error: Option<f64>,
    surface_error: Option<f64>,
    compare_tol: f64,
    passed: bool,
}

fn bounding_box(curves: &[characteristics::CharacteristicCurve]) -> Region {
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for s in curves.iter().flat_map(|c| &c.samples) {
        x0 = x0.min(s[1]);
        x1 = x1.max(s[1]);
        y0 = y0.min(s[2]);
        y1 = y1.max(s[2]);
    }
    Region::Rectangle {
        x_min: x0,
        x_max: x1,
        y_min: y0,
        y_max: y1,
    }
}

fn chars(cli: &Cli, args: &CharArgs, run: &mut Run) -> Result<(), CliError> {
    let field: VectorFieldSpec = read_json(&args.field)?;
    let curve: InitialCurve = read_json(&args.curve)?;
    let region: Option<Region> = args.domain.as_deref().map(read_json).transpose()?;
    let compare = args.compare.as_deref().map(read_example).transpose()?;
    let h = cli.h.unwrap_or(DEFAULT_H);
    run.config["field"] = json!(field);
    run.config["curve"] = json!(curve);
    run.config["step"] = json!(args.step);
    run.config["s_range"] = json!([args.s_min, args.s_max]);
    run.config["domain"] = json!(region);

    let curves = integrate_span(&field, &curve, args.step, args.s_min, args.s_max)?;
    run.write("curves.csv", |w| characteristics::write_curves_csv(&curves, w))?;
    let region = region.unwrap_or_else(|| bounding_box(&curves));
    let domain = Arc::new(region.grid(h)?);
    run.grid(&domain);
    let resampled = resample_to_grid(&curves, domain)?;
    let u = resampled.to_grid_function()?;
    run.grid_function("surface", &u)?;
    let cert = certify(&u, &field, CertifyTolerances::for_spacing(h))?;

    let (curve_error, surface_error) = match &compare {
        Some(doc) => {
            let exact = |x: f64, y: f64| doc.spec.eval(x, y);
            (
                Some(characteristics::max_sample_error(&curves, exact)?),
                Some(resampled.max_error(exact)?),
            )
        }
        None => (None, None),
    };
    let matches = curve_error.is_none_or(|e| e <= args.compare_tol);
    let out = CharOutcome {
        curves: curves.len(),
        samples_per_curve: curves.first().map_or(0, |c| c.samples.len()),
        covered_nodes: resampled.covered_count(),
        passed: cert.passed && matches,
        certify: cert,
        curve_error,
        surface_error,
        compare_tol: args.compare_tol,
    };
    run.json("certify.json", &out)?;
    let c = &out.certify;
    let mut summary = format!(
        "{} curves, {} covered nodes; linpde {:.2e}, residual {:.2e}, alignment {:.2e}, sign flips {} ({} off mask) -> {}",
        out.curves,
        out.covered_nodes,
        c.linpde_max,
        c.residual_max,
        c.alignment_max,
        c.sign_flips,
        c.sign_flips_off_mask,
        if out.passed { "pass" } else { "FAIL" }
    );
    if let (Some(ce), Some(se)) = (curve_error, surface_error) {
        summary.push_str(&format!("\nclosed form: curve error {ce:.2e}, grid error {se:.2e}"));
    }
    emit(cli, &out, &summary)?;
    if !out.certify.passed {
        return Err(CliError::Verification("certification failed".into()));
    }
    if !matches {
        return Err(CliError::Verification(format!(
            "reconstruction differs from the closed form by {:.3e}",
            curve_error.unwrap_or(f64::NAN)
        )));
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct CorkOutcome {
    params: CorkSol,
    r0: f64,
    r_end: f64,
    step: f64,
    max_error: f64,
    max_error_half_step: f64,
    halving_ratio: Option<f64>,
    tol: Option<f64>,
}

fn cork(cli: &Cli, args: &CorkArgs, run: &mut Run) -> Result<(), CliError> {
    let cs = CorkSol::new(args.a, args.b, args.c, args.sign)?;
    let r0 = args.r0.unwrap_or_else(|| 2f64.sqrt().max(1.05 * cs.r_min()));
    run.config["cork"] = json!({ "params": cs, "r0": r0, "r_end": args.r_end, "step": args.step, "tol": args.tol });
    let (v0, v0p, _) = cs.eval(r0)?;
    let ode = solve_cork(cs.a, r0, v0, v0p, args.r_end, args.step)?;
    let half = solve_cork(cs.a, r0, v0, v0p, args.r_end, args.step / 2.0)?;
    let err = ode.max_error(|r| cs.value(r))?;
    let err_half = half.max_error(|r| cs.value(r))?;
    let mut closed = RadialProfile {
        params: Some(cs),
        ..RadialProfile::default()
    };
    for &r in &ode.r {
        let (v, vp, _) = cs.eval(r)?;
        closed.r.push(r);
        closed.v.push(v);
        closed.vp.push(vp);
    }
    run.write("cork_ode.csv", |w| ode.write_csv(w))?;
    run.write("cork_closed.csv", |w| closed.write_csv(w))?;
    let out = CorkOutcome {
        params: cs,
        r0,
        r_end: args.r_end,
        step: args.step,
        max_error: err,
        max_error_half_step: err_half,
        halving_ratio: (err_half > 0.0).then(|| err / err_half),
        tol: args.tol,
    };
    run.json("cork_report.json", &out)?;
    let summary = format!(
        "corkscrew a = {}, b = {}: max error {err:.3e} (step {}), {err_half:.3e} (step {}), ratio {}",
        cs.a,
        cs.b,
        args.step,
        args.step / 2.0,
        out.halving_ratio.map_or("-".into(), |r| format!("{r:.2}"))
    );
    emit(cli, &out, &summary)?;
    match args.tol {
        Some(t) if !(err <= t) => Err(CliError::Verification(format!("max error {err:.3e} exceeds {t:.1e}"))),
        _ => Ok(()),
    }
}

#[derive(Debug, Serialize)]
struct LambdaEnergy {
    lambda: f64,
    e_lambda: f64,
    gap: f64,
    bound: f64,
    sandwich: bool,
}

#[derive(Debug, Serialize)]
struct EnergyOutcome {
    e: f64,
    energy_squared: f64,
    area: f64,
    lambdas: Vec<LambdaEnergy>,
}

fn energy_cmd(cli: &Cli, args: &EnergyArgs, run: &mut Run) -> Result<(), CliError> {
    let u = match (&args.surface, &args.example) {
        (Some(path), _) => {
            let mask = args
                .mask
                .as_deref()
                .map(|m| GridDomain::read_mask_csv(open(m)?).map_err(CliError::from))
                .transpose()?;
            GridFunction::read_csv(open(path)?, mask)?
        }
        (None, Some(path)) => {
            let doc = read_example(path)?;
            let domain = Arc::new(doc.region().grid(cli.h.unwrap_or(DEFAULT_H))?);
            run.config["example"] = json!(doc);
            sample(&doc.spec, &domain)?
        }
        (None, None) => return Err(CliError::Input("energy needs --surface or --example".into())),
    };
    run.config["lambda"] = json!(args.lambda);
    run.grid(u.domain());
    let e = energy(&u, Lambda::Infinity);
    let area = u.domain().area();
    let mut lambdas = Vec::new();
    for &l in &args.lambda {
        let el = energy(&u, Lambda::finite(l)?);
        let gap = el - e;
        let bound = area / l;
        lambdas.push(LambdaEnergy {
            lambda: l,
            e_lambda: el,
            gap,
            bound,
            sandwich: gap >= 0.0 && gap <= bound,
        });
    }
    let out = EnergyOutcome {
        e,
        energy_squared: energy_squared(&u),
        area,
        lambdas,
    };
    run.json("energy.json", &out)?;
    let mut summary = format!("E = {:.9}, E_sq = {:.9}, area = {:.6}", out.e, out.energy_squared, out.area);
    for l in &out.lambdas {
        summary.push_str(&format!("\nlambda = {}: E_lambda = {:.9}, gap = {:.3e} <= {:.3e}", l.lambda, l.e_lambda, l.gap, l.bound));
    }
    emit(cli, &out, &summary)
}
