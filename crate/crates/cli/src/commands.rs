use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde_json::{json, Value};

use frozen_planet::detline::{holonomy, OperatorFamily};
use frozen_planet::elliptic;
use frozen_planet::error::{Error, Result};
use frozen_planet::frozen::{CriticalPointCert, CERT_TOL};
use frozen_planet::helium::{
    bridge_check, bridged_seed, d1w_check, pair_path, pair_samples, vanishing_check,
    BridgeConstants, PairCert, HELIUM_MODES, INTERACTION_SAMPLES,
};
use frozen_planet::io;
use frozen_planet::levi_civita::{self, Parity};
use frozen_planet::loops::{Loop, SymmetryClass};
use frozen_planet::solve::{
    euler_count, free_fall_seed, frozen_path, frozen_spectrum, full_space_spectrum,
    ContinuationPath, FrozenStep, NewtonOptions, PathPoint, SpectrumReport, StepPolicy,
    DEFAULT_MODES,
};

use crate::report::{Check, Outcome};
use crate::{
    Command, ContinueArgs, DetlineArgs, EllipticArgs, EulerArgs, Family, HeliumArgs, HeliumMode,
    InputArgs, LcArgs, SolveArgs,
};

pub struct Output {
    pub outcome: Outcome,
    /// The data table went to standard output, so the summary goes to standard error.
    pub table_on_stdout: bool,
}

impl From<Outcome> for Output {
    fn from(outcome: Outcome) -> Self {
        Self {
            outcome,
            table_on_stdout: false,
        }
    }
}

pub fn run(command: &Command, header: &Value) -> Result<Output> {
    let comments = header_comments(header);
    match command {
        Command::Solve(a) => solve(a).map(Into::into),
        Command::Continue(a) => continue_path(a, &comments).map(Into::into),
        Command::Spectrum(a) => spectrum(a).map(Into::into),
        Command::Identity(a) => identity(a).map(Into::into),
        Command::Elliptic(a) => elliptic_grid(a, &comments),
        Command::Lc(a) => lc(a, &comments).map(Into::into),
        Command::Helium(a) => helium(a, &comments).map(Into::into),
        Command::Euler(a) => euler(a).map(Into::into),
        Command::Detline(a) => detline(a, &comments).map(Into::into),
    }
}

/// Flags flattened into `key=value` pairs for CSV comment lines.
fn header_comments(header: &Value) -> Vec<(String, String)> {
    let mut out = vec![
        ("tool".to_owned(), header["tool"].as_str().unwrap_or_default().to_owned()),
        ("version".to_owned(), header["version"].as_str().unwrap_or_default().to_owned()),
    ];
    if let Some(flags) = header["flags"].as_object() {
        for (k, v) in flags {
            let text = match v {
                Value::String(s) => s.clone(),
                other => other.to_string(),
            };
            out.push((k.clone(), text));
        }
    }
    out
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} must be positive, got {v}")))
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn read_json(path: &Path) -> Result<Value> {
    Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
}

/// Breadth-first search for the first sub-document accepted by `pick`.
fn find<T>(root: &Value, pick: impl Fn(&Value) -> Option<T>) -> Option<T> {
    let mut queue = std::collections::VecDeque::from([root]);
    while let Some(v) = queue.pop_front() {
        if let Some(found) = pick(v) {
            return Some(found);
        }
        match v {
            Value::Object(map) => queue.extend(map.values()),
            Value::Array(items) => queue.extend(items.iter()),
            _ => {}
        }
    }
    None
}

fn load_cert(path: &Path) -> Result<CriticalPointCert> {
    let doc = read_json(path)?;
    find(&doc, |v| {
        let obj = v.as_object()?;
        if !(obj.contains_key("loop") && obj.contains_key("coeffs") && obj.contains_key("r")) {
            return None;
        }
        serde_json::from_value(v.clone()).ok()
    })
    .ok_or_else(|| Error::Config(format!("{} holds no critical-point certificate", path.display())))
}

fn frozen_checks(step: &FrozenStep, tol: f64, orbit_tol: f64, prefix: &str) -> Vec<Check> {
    let c = &step.cert;
    let name = |n: &str| format!("{prefix}{n}");
    vec![
        Check::below(&name("grad_res"), c.residuals.grad, CERT_TOL),
        Check::below(&name("vw_res1"), c.residuals.vw1, tol),
        Check::below(&name("vw_res2"), c.residuals.vw2, tol),
        Check::below(&name("energy_res"), c.residuals.energy, tol),
        Check::below(&name("ode_res"), step.orbit.ode_res, orbit_tol),
        Check::below(&name("beta_mu_res"), step.orbit.beta_mu_res, orbit_tol),
        Check::flag(&name("sup_upper_bound"), c.bounds.upper_ok),
    ]
}

/// Free fall continued in r up to `r`; the starting certificate when `r = 0`.
fn frozen_to(r: f64, modes: usize) -> Result<ContinuationPath<FrozenStep>> {
    if !(r >= 0.0 && r.is_finite()) {
        return Err(Error::Domain(format!("r must be nonnegative, got {r}")));
    }
    let seed = free_fall_seed(modes)?;
    frozen_path(&seed, r, &StepPolicy::new(0.1, 0.5), &NewtonOptions::default())?.into_result()
}

fn solve(a: &SolveArgs) -> Result<Outcome> {
    positive("tol", a.tol)?;
    positive("orbit-tol", a.orbit_tol)?;
    let path = frozen_to(a.r, a.modes)?;
    let step = &path.last().cert;
    if let Some(out) = &a.out {
        let mut w = create(out)?;
        serde_json::to_writer_pretty(&mut w, &step.cert)?;
        writeln!(w)?;
    }
    Ok(Outcome {
        checks: frozen_checks(step, a.tol, a.orbit_tol, ""),
        result: json!({
            "continuation_steps": path.accepted(),
            "cert": step.cert,
            "index": step.spectrum.morse_index,
            "nullity": step.spectrum.nullity,
            "min_abs_eigenvalue": step.spectrum.min_abs,
            "orbit": step.orbit,
            "mean_identities": step.mean_identities,
        }),
    })
}

fn continue_path(a: &ContinueArgs, comments: &[(String, String)]) -> Result<Outcome> {
    positive("tol", a.tol)?;
    positive("orbit-tol", a.orbit_tol)?;
    match a.family {
        Family::Frozen => continue_frozen(a, comments),
        Family::Helium => continue_helium(a, comments),
    }
}

fn policy(a: &ContinueArgs, initial: f64, max: f64) -> Result<StepPolicy> {
    let initial = a.initial_step.unwrap_or(initial);
    let max = a.max_step.unwrap_or(max.max(initial));
    positive("initial-step", initial)?;
    positive("max-step", max)?;
    Ok(StepPolicy::new(initial, max))
}

fn path_summary<C>(path: &ContinuationPath<C>) -> Value {
    json!({
        "accepted": path.accepted(),
        "attempted": path.attempted(),
        "completed": path.completed,
        "target": path.target,
        "reached": path.last().param,
        "failures": path.failures,
    })
}

fn continue_frozen(a: &ContinueArgs, comments: &[(String, String)]) -> Result<Outcome> {
    let modes = a.modes.unwrap_or(DEFAULT_MODES);
    let start = frozen_to(a.from, modes)?;
    if a.to < 0.0 {
        return Err(Error::Domain(format!("r must be nonnegative, got {}", a.to)));
    }
    let path = frozen_path(
        &start.last().cert.cert,
        a.to,
        &policy(a, 0.1, 0.5)?,
        &NewtonOptions::default(),
    )?;
    io::write_jsonl(create(&a.out)?, &path.points)?;
    if let Some(csv) = &a.csv {
        io::write_csv(
            create(csv)?,
            comments,
            &io::FROZEN_SUMMARY_HEADER,
            io::frozen_summary_rows(&path.points),
        )?;
    }
    let mut checks = vec![Check::flag("completed", path.completed)];
    for p in &path.points {
        checks.extend(frozen_checks(&p.cert, a.tol, a.orbit_tol, &format!("r={}:", p.param)));
    }
    let indices: Vec<usize> = path.points.iter().map(|p| p.cert.spectrum.morse_index).collect();
    let min_abs = path
        .points
        .iter()
        .map(|p| p.cert.spectrum.min_abs)
        .fold(f64::INFINITY, f64::min);
    let mut result = path_summary(&path);
    result["indices"] = json!(indices);
    result["min_abs_eigenvalue"] = json!(min_abs);
    Ok(Outcome { checks, result })
}

fn helium_options() -> NewtonOptions {
    NewtonOptions {
        tol: 1e-9,
        ..NewtonOptions::default()
    }
}

fn check_s(s: f64) -> Result<()> {
    if (0.0..=1.0).contains(&s) {
        Ok(())
    } else {
        Err(Error::Domain(format!("s must lie in [0, 1], got {s}")))
    }
}

/// The bridged pair at `s = 0` continued to `s`.
fn helium_to(s: f64, modes: usize) -> Result<PairCert> {
    check_s(s)?;
    let seed = bridged_seed(modes, &NewtonOptions::default())?;
    if s == 0.0 {
        return Ok(seed);
    }
    let path = pair_path(&seed, s, &StepPolicy::new(0.05, 0.2), &helium_options())?.into_result()?;
    Ok(path.last().cert.clone())
}

fn pair_checks(c: &PairCert, tol: f64, prefix: &str) -> Vec<Check> {
    let name = |n: &str| format!("{prefix}{n}");
    vec![
        Check::below(&name("grad_res"), c.grad_res, tol),
        Check::flag(&name("spectrum_above_bound"), c.bound.holds),
        Check::flag(&name("positive_gap"), c.min_gap > 0.0),
    ]
}

fn continue_helium(a: &ContinueArgs, comments: &[(String, String)]) -> Result<Outcome> {
    check_s(a.from)?;
    check_s(a.to)?;
    let start = helium_to(a.from, a.modes.unwrap_or(HELIUM_MODES))?;
    let options = helium_options();
    let path = pair_path(&start, a.to, &policy(a, 0.05, 0.2)?, &options)?;
    io::write_jsonl(create(&a.out)?, &path.points)?;
    if let Some(csv) = &a.csv {
        io::write_csv(
            create(csv)?,
            comments,
            &io::PAIR_SUMMARY_HEADER,
            io::pair_summary_rows(&path.points),
        )?;
    }
    let mut checks = vec![Check::flag("completed", path.completed)];
    for p in &path.points {
        checks.extend(pair_checks(&p.cert, 10.0 * options.tol, &format!("s={}:", p.param)));
    }
    let mut result = path_summary(&path);
    result["indices"] = json!(path
        .points
        .iter()
        .map(|p| p.cert.spectrum.morse_index)
        .collect::<Vec<_>>());
    result["euler"] = json!(path.points.iter().map(|p| p.cert.euler).collect::<Vec<_>>());
    Ok(Outcome { checks, result })
}

fn spectrum(a: &InputArgs) -> Result<Outcome> {
    positive("tol", a.tol)?;
    let cert = load_cert(&a.input)?;
    let symmetric = frozen_spectrum(&cert.z, cert.r)?;
    let full = full_space_spectrum(&cert.z, cert.r)?;
    Ok(Outcome {
        checks: vec![Check::below("grad_res", cert.residuals.grad, CERT_TOL)],
        result: json!({
            "r": cert.r,
            "symmetric": symmetric,
            "full": full.report,
            "kernel_alignment": full.kernel_alignment,
        }),
    })
}

fn identity(a: &InputArgs) -> Result<Outcome> {
    positive("tol", a.tol)?;
    let stored = load_cert(&a.input)?;
    let cert = CriticalPointCert::evaluate(&stored.z, stored.r)?;
    let bridge = bridge_check(&cert.z)?;
    let mut checks = vec![
        Check::below("grad_res", cert.residuals.grad, CERT_TOL),
        Check::below("vw_res1", cert.residuals.vw1, a.tol),
        Check::below("vw_res2", cert.residuals.vw2, a.tol),
        Check::below("energy_res", cert.residuals.energy, a.tol),
        Check::below("b_forms", cert.residuals.b_forms, a.tol),
        Check::below("bridge", bridge, 1e-11),
    ];
    let mut result = json!({
        "r": cert.r,
        "v": cert.v,
        "w": cert.w,
        "residuals": cert.residuals,
        "bridge": bridge,
        "bounds": cert.bounds,
    });
    let rho = BridgeConstants::default().rho;
    if (cert.r - rho).abs() < 1e-12 {
        let vanishing = vanishing_check(&cert.z)?;
        let d1w = d1w_check(&cert.z)?;
        let k_rel = (d1w.k_numeric - d1w.k_expected).abs() / d1w.k_expected.abs();
        checks.push(Check::below("v1_sup", vanishing.v1_sup, 1e-10));
        checks.push(Check::below("v1_coefficients", vanishing.coefficient_error(), 1e-9));
        checks.push(Check::below("d1w_k_rel", k_rel, 1e-6));
        result["vanishing"] = json!(vanishing);
        result["d1w"] = json!(d1w);
    }
    Ok(Outcome { checks, result })
}

fn parse_grid(spec: &str) -> Result<(f64, f64, f64)> {
    let parts: Vec<&str> = spec.split(':').collect();
    let bad = || Error::Config(format!("grid must be start:end:step, got {spec:?}"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let nums = parts
        .iter()
        .map(|p| p.trim().parse::<f64>().map_err(|_| bad()))
        .collect::<Result<Vec<_>>>()?;
    Ok((nums[0], nums[1], nums[2]))
}

fn elliptic_grid(a: &EllipticArgs, comments: &[(String, String)]) -> Result<Output> {
    positive("tol", a.tol)?;
    let (start, end, step) = parse_grid(&a.grid)?;
    let rows = elliptic::grid_table(start, end, step)?;
    let worst = |f: fn(&elliptic::GridRow) -> Option<f64>| {
        rows.iter().filter_map(f).fold(0.0, f64::max)
    };
    let rec = worst(|r| r.rec_res);
    let i2 = worst(|r| Some(r.i2_res));
    let der = worst(|r| r.der_res);
    let riccati = worst(|r| Some(r.riccati_res));
    match &a.out {
        Some(path) => io::write_csv(create(path)?, comments, &io::GRID_HEADER, io::grid_rows(&rows))?,
        None => io::write_csv(
            std::io::stdout().lock(),
            comments,
            &io::GRID_HEADER,
            io::grid_rows(&rows),
        )?,
    }
    Ok(Output {
        outcome: Outcome {
            checks: vec![
                Check::below("rec_res", rec, a.tol),
                Check::below("i2_res", i2, a.tol),
            ],
            result: json!({
                "rows": rows.len(),
                "max_rec_res": rec,
                "max_i2_res": i2,
                "max_der_res": der,
                "max_riccati_res": riccati,
            }),
        },
        table_on_stdout: a.out.is_none(),
    })
}

fn load_odd_loop(path: &Path) -> Result<(Loop, Option<f64>)> {
    let doc = read_json(path)?;
    let r = find(&doc, |v| {
        let obj = v.as_object()?;
        if obj.contains_key("loop") {
            obj.get("r")?.as_f64()
        } else {
            None
        }
    });
    let z = find(&doc, |v| {
        let obj = v.as_object()?;
        if obj.get("class")? != "odd-sine" || !obj.contains_key("coeffs") {
            return None;
        }
        serde_json::from_value::<Loop>(v.clone()).ok()
    })
    .ok_or_else(|| Error::Config(format!("{} holds no odd-sine loop", path.display())))?;
    Ok((z, r))
}

fn lc(a: &LcArgs, comments: &[(String, String)]) -> Result<Outcome> {
    positive("tol", a.tol)?;
    positive("orbit-tol", a.orbit_tol)?;
    let (z, stored_r) = load_odd_loop(&a.input)?;
    debug_assert_eq!(z.class(), SymmetryClass::OddSine);
    let orbit = levi_civita::forward_with(&z, a.samples)?;
    let means = levi_civita::mean_identities(&z, &orbit);
    let back = levi_civita::inverse(&orbit, Parity::Odd, z.coeffs().len())?;
    let roundtrip = back
        .coeffs()
        .iter()
        .zip(z.coeffs())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);
    if let Some(out) = &a.out {
        io::write_csv(create(out)?, comments, &io::ORBIT_HEADER, io::orbit_rows(&orbit))?;
    }
    let mut checks = vec![
        Check::below("mean_identities", means.max(), a.tol),
        Check::below("roundtrip", roundtrip, a.tol),
    ];
    let mut result = json!({
        "samples": orbit.len(),
        "zeros": orbit.zeros(),
        "mean": orbit.mean(),
        "mean_identities": means,
        "roundtrip": roundtrip,
    });
    if let Some(r) = a.r.or(stored_r) {
        let res = levi_civita::q_residual(&orbit, r)?;
        checks.push(Check::below("ode_res", res.ode_res, a.orbit_tol));
        checks.push(Check::below("beta_mu_res", res.beta_mu_res, a.orbit_tol));
        result["r"] = json!(r);
        result["orbit"] = json!(res);
    }
    Ok(Outcome { checks, result })
}

fn helium(a: &HeliumArgs, comments: &[(String, String)]) -> Result<Outcome> {
    positive("tol", a.tol)?;
    let s = match (a.mode, a.s) {
        (HeliumMode::Av, None) => 0.0,
        (HeliumMode::In, None) => 1.0,
        (HeliumMode::Interp, Some(s)) => s,
        (HeliumMode::Interp, None) => {
            return Err(Error::Config("mode interp needs --s".into()));
        }
        (mode, Some(_)) => {
            return Err(Error::Config(format!("--s applies to mode interp only, not {mode:?}")));
        }
    };
    let cert = helium_to(s, a.modes)?;
    if let Some(out) = &a.out {
        let samples = pair_samples(&cert.pair, INTERACTION_SAMPLES)?;
        io::write_csv(create(out)?, comments, &io::PAIR_HEADER, io::pair_rows(&samples))?;
    }
    Ok(Outcome {
        checks: pair_checks(&cert, a.tol, ""),
        result: json!({
            "s": s,
            "cert": cert,
        }),
    })
}

fn euler(a: &EulerArgs) -> Result<Outcome> {
    let points: Vec<PathPoint<Value>> =
        io::read_jsonl(BufReader::new(File::open(&a.path)?))?;
    if points.is_empty() {
        return Err(Error::Config(format!("{} holds no path points", a.path.display())));
    }
    let mut counts = Vec::with_capacity(points.len());
    for p in &points {
        let report: SpectrumReport = serde_json::from_value(p.cert["spectrum"].clone())
            .map_err(|e| Error::Config(format!("path point at {} has no spectrum: {e}", p.param)))?;
        counts.push(euler_count(std::slice::from_ref(&report))?);
    }
    let first = counts[0];
    let constant = counts.iter().all(|&c| c == first);
    let mut checks = vec![Check::flag("constant_along_path", constant)];
    if let Some(expected) = a.expect {
        checks.push(Check::equals("euler", first, expected));
    }
    Ok(Outcome {
        checks,
        result: json!({
            "euler": first,
            "steps": points.len(),
            "params": points.iter().map(|p| p.param).collect::<Vec<_>>(),
            "per_step": counts,
        }),
    })
}

fn detline(a: &DetlineArgs, comments: &[(String, String)]) -> Result<Outcome> {
    positive("alignment", a.alignment)?;
    let family = OperatorFamily::new(a.modes, a.steps, 1.0, 1.0)?;
    let report = holonomy(&family)?;
    if let Some(out) = &a.out {
        io::write_csv(create(out)?, comments, &io::TRACE_HEADER, io::trace_rows(&report.trace))?;
    }
    Ok(Outcome {
        checks: vec![
            Check::equals("holonomy_sign", report.sign, -1),
            Check::above("min_alignment", report.min_alignment, a.alignment),
        ],
        result: json!({
            "sign": report.sign,
            "min_alignment": report.min_alignment,
            "min_step_overlap": report.min_step_overlap,
            "trace_rows": report.trace.len(),
        }),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_parsing() {
        assert_eq!(parse_grid("-5:0.9:0.1").unwrap(), (-5.0, 0.9, 0.1));
        assert!(parse_grid("1:2").is_err());
        assert!(parse_grid("a:1:2").is_err());
    }

    #[test]
    fn search_finds_nested_documents() {
        let doc = json!({"result": {"cert": {"loop": {"class": "odd-sine", "coeffs": [1.0]}, "r": 0.5}}});
        let r = find(&doc, |v| v.get("r")?.as_f64());
        assert_eq!(r, Some(0.5));
        assert_eq!(find(&doc, |v| v.get("missing").cloned()), None);
    }

    #[test]
    fn comments_flatten_flags() {
        let header = json!({"tool": "t", "version": "1", "flags": {"command": "elliptic", "grid": "-1:0:0.5"}});
        let c = header_comments(&header);
        assert!(c.contains(&("grid".to_owned(), "-1:0:0.5".to_owned())));
        assert!(c.contains(&("command".to_owned(), "elliptic".to_owned())));
    }
}
