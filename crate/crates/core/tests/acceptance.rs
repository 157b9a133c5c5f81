//! Acceptance suite: one PASS/FAIL line per criterion, with the failing parts listed.
//!
//! Two parts are known to fail (see `KNOWN_FAILURES`). The run exits non-zero when any
//! other part fails, and also when a known failure starts passing, so the record of
//! expected outcomes cannot go stale silently.

use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use frozen_planet::detline::{holonomy, mu, sections, stabilized_section, CutoffRho, OperatorFamily};
use frozen_planet::elliptic;
use frozen_planet::error::Result;
use frozen_planet::frozen::FrozenFunctional;
use frozen_planet::helium::{
    bridge_check, bridged_seed, d1w_check, pair_path, vanishing_check, BridgeConstants,
    HeliumFunctional, PairLoop, HELIUM_MODES,
};
use frozen_planet::loops::{Loop, SymmetryClass};
use frozen_planet::solve::objective::{directional_check, finite_difference_hessian, symmetry_defect};
use frozen_planet::solve::{
    euler_count, free_fall_seed, frozen_path, frozen_spectrum, full_space_spectrum, newton,
    ContinuationPath, FrozenStep, NewtonOptions, Objective, StepPolicy, DEFAULT_MODES,
};

/// `(criterion, part)` pairs that fail for a documented reason.
///
/// The bridged pair is a maximum of the mean-interaction functional in the constant
/// outer radius: along `z₁ ≡ γ` the reduced function `2/u − N₂/(uN₂ − S₂)`, `u = γ²`,
/// has second derivative `(4 − 4√2)/u³ < 0` at its critical point. The symmetric-space
/// index is therefore 1, and every point on the homotopy contributes `(−1)¹ = −1`.
const KNOWN_FAILURES: &[(u32, &str)] = &[
    (5, "symmetric-space index 0, nullity 0"),
    (6, "signed count 1 at every step"),
];

struct Part {
    label: String,
    ok: bool,
    detail: String,
}

struct Criterion {
    id: u32,
    title: &'static str,
    limit: Duration,
    parts: Vec<Part>,
}

impl Criterion {
    fn new(id: u32, title: &'static str, limit_secs: u64) -> Self {
        Self {
            id,
            title,
            limit: Duration::from_secs(limit_secs),
            parts: Vec::new(),
        }
    }

    fn check(&mut self, label: &str, ok: bool, detail: impl Into<String>) {
        self.parts.push(Part {
            label: label.into(),
            ok,
            detail: detail.into(),
        });
    }

    fn below(&mut self, label: &str, value: f64, tol: f64) {
        self.check(label, value < tol, format!("{value:.3e} (tol {tol:.0e})"));
    }
}

fn odd(c: Vec<f64>) -> Loop {
    Loop::new(SymmetryClass::OddSine, c).unwrap()
}

fn random_odd(rng: &mut ChaCha8Rng, n: usize) -> Loop {
    let mut c: Vec<f64> = (0..n)
        .map(|k| rng.gen_range(-0.2..0.2) / (1 + k * k) as f64)
        .collect();
    c[0] = rng.gen_range(0.6..1.4);
    odd(c)
}

fn random_pair(rng: &mut ChaCha8Rng, n: usize) -> PairLoop {
    let z2 = random_odd(rng, n);
    let mut c1: Vec<f64> = (0..n)
        .map(|k| rng.gen_range(-0.02..0.02) / (1 + k * k) as f64)
        .collect();
    c1[0] = 2.5 * z2.sup_norm();
    PairLoop::new(Loop::new(SymmetryClass::EvenCosine, c1).unwrap(), z2).unwrap()
}

fn rho() -> f64 {
    BridgeConstants::default().rho
}

fn frozen_to(r: f64, modes: usize) -> Result<ContinuationPath<FrozenStep>> {
    let seed = free_fall_seed(modes)?;
    frozen_path(&seed, r, &StepPolicy::new(0.1, 0.5), &NewtonOptions::default())?.into_result()
}

fn elliptic_closed_forms(c: &mut Criterion) -> Result<()> {
    let exact = [PI / 2.0, PI / 4.0, 3.0 * PI / 16.0];
    let err = (0..3)
        .map(|n| Ok((elliptic::moment(n as u32, 0.0)? - exact[n]).abs()))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    c.below("moments at m = 0", err, 1e-11);

    let mut rec: f64 = 0.0;
    for j in 0..=218 {
        let m = -10.0 + 0.05 * j as f64;
        if m.abs() < 1e-9 {
            continue;
        }
        rec = rec.max(elliptic::identities_report(m)?.rec_res.unwrap_or(f64::INFINITY));
    }
    let end = elliptic::identities_report(0.9)?.rec_res.unwrap_or(f64::INFINITY);
    c.below("recursion residual on [-10, 0.9]", rec.max(end), 1e-9);

    let mut ric: f64 = 0.0;
    for j in 0..50 {
        let m = -10.0 + 10.9 * j as f64 / 49.0;
        ric = ric.max(elliptic::riccati_residual(m)?.residual);
    }
    c.below("Riccati residual at 50 points", ric, 1e-6);

    let grid: Vec<f64> = (0..50).map(|j| -10.0 + 9.8 * j as f64 / 49.0).collect();
    let mono = elliptic::f_monotonicity(&grid)?;
    c.check(
        "F(m) > 1 and decreasing on 50 negative samples",
        mono.all_gt_one && mono.monotone_ok,
        format!("gt_one {} decreasing {}", mono.all_gt_one, mono.monotone_ok),
    );
    Ok(())
}

fn free_fall(c: &mut Criterion) -> Result<()> {
    let cert = free_fall_seed(DEFAULT_MODES)?;
    c.below("seed gradient residual", cert.residuals.grad, 1e-12);

    let f = FrozenFunctional::for_loop(&cert.z, 0.0);
    let x0 = DVector::from_fn(DEFAULT_MODES, |k, _| {
        cert.z.coeffs()[k] + 1e-2 / (1.0 + k as f64).powi(2)
    });
    let report = newton(&f, &x0, &NewtonOptions::default())?;
    c.check(
        "Newton from a perturbed seed in at most 6 iterations",
        report.iterations <= 6,
        format!("{} iterations", report.iterations),
    );
    let seed = DVector::from_column_slice(cert.z.coeffs());
    c.below("Newton limit equals the seed", (&report.x - seed).amax(), 1e-9);

    let sym = frozen_spectrum(&cert.z, 0.0)?;
    c.check(
        "symmetric-space index 0, nullity 0",
        (sym.morse_index, sym.nullity) == (0, 0),
        format!("index {} nullity {}", sym.morse_index, sym.nullity),
    );
    let full = full_space_spectrum(&cert.z, 0.0)?;
    c.check(
        "full-space index 1, nullity 1",
        (full.report.morse_index, full.report.nullity) == (1, 1),
        format!("index {} nullity {}", full.report.morse_index, full.report.nullity),
    );
    let alignment = full.kernel_alignment.unwrap_or(0.0);
    c.check(
        "kernel aligned with z'",
        alignment > 0.999,
        format!("{alignment:.6}"),
    );
    Ok(())
}

fn frozen_continuation(c: &mut Criterion) -> Result<()> {
    let first = frozen_to(rho(), DEFAULT_MODES)?;
    let second = frozen_path(
        &first.last().cert.cert,
        5.0,
        &StepPolicy::new(0.1, 0.5),
        &NewtonOptions::default(),
    )?
    .into_result()?;
    let steps: Vec<&FrozenStep> = first
        .points
        .iter()
        .chain(&second.points[1..])
        .map(|p| &p.cert)
        .collect();
    let worst = |f: &dyn Fn(&FrozenStep) -> f64| steps.iter().map(|s| f(s)).fold(0.0, f64::max);
    c.check(
        "path reaches r = 5 through r = rho",
        second.last().param == 5.0 && first.last().param == rho(),
        format!("{} steps", steps.len()),
    );
    c.below("v/w residual 1", worst(&|s| s.cert.residuals.vw1), 1e-7);
    c.below("v/w residual 2", worst(&|s| s.cert.residuals.vw2), 1e-7);
    c.below("energy fluctuation", worst(&|s| s.cert.residuals.energy), 1e-7);
    c.below("orbit equation residual away from collisions", worst(&|s| s.orbit.ode_res), 1e-5);
    c.below("beta q^3 + 2 residual", worst(&|s| s.orbit.beta_mu_res), 1e-5);
    let index_ok = steps.iter().all(|s| s.spectrum.morse_index == 0);
    let min_abs = steps.iter().map(|s| s.spectrum.min_abs).fold(f64::INFINITY, f64::min);
    c.check(
        "index 0 and min |eigenvalue| > 1e-4 throughout",
        index_ok && min_abs > 1e-4,
        format!("index 0 everywhere: {index_ok}, min |eigenvalue| {min_abs:.3e}"),
    );
    let upper = steps.iter().all(|s| s.cert.bounds.upper_ok);
    let margin = steps
        .iter()
        .map(|s| s.cert.bounds.upper - s.cert.bounds.sup)
        .fold(f64::INFINITY, f64::min);
    c.check("sup-norm upper bound", upper, format!("smallest margin {margin:.3e}"));
    Ok(())
}

fn bridge(c: &mut Criterion) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let n = rng.gen_range(2..=12);
        worst = worst.max(bridge_check(&random_odd(&mut rng, n))?);
    }
    c.below("F_rho against B_av on 100 random loops", worst, 1e-11);

    let z = frozen_to(rho(), DEFAULT_MODES)?.last().cert.cert.z.clone();
    let v = vanishing_check(&z)?;
    c.below("sup |V_1| at the bridged critical point", v.v1_sup, 1e-10);
    c.below("a_1 = -2/z_1^6, b_1 = 2/z_1^8", v.coefficient_error(), 1e-9);
    let d = d1w_check(&z)?;
    let rel = (d.k_numeric - d.k_expected).abs() / d.k_expected.abs();
    c.below("D_1 W recovers K = -2 alpha", rel, 1e-6);
    Ok(())
}

fn mean_interaction(c: &mut Criterion) -> Result<()> {
    let cert = bridged_seed(HELIUM_MODES, &NewtonOptions::default())?;
    c.below("gradient residual", cert.grad_res, 1e-8);
    let u = cert.pair.z1().coeffs()[0].powi(2);
    c.check(
        "symmetric-space index 0, nullity 0",
        (cert.spectrum.morse_index, cert.spectrum.nullity) == (0, 0),
        format!(
            "index {} nullity {}; lowest eigenvalue {:.4} (outer-radius curvature {:.4})",
            cert.spectrum.morse_index,
            cert.spectrum.nullity,
            cert.spectrum.eigenvalues[0],
            (4.0 - 4.0 * 2f64.sqrt()) / u.powi(3) * 4.0 * u,
        ),
    );
    c.below("z_1 constant", cert.z1_deviation, 1e-9);
    Ok(())
}

fn homotopy(c: &mut Criterion) -> Result<()> {
    let seed = bridged_seed(HELIUM_MODES, &NewtonOptions::default())?;
    let options = NewtonOptions {
        tol: 1e-9,
        ..NewtonOptions::default()
    };
    let path = pair_path(&seed, 1.0, &StepPolicy::new(0.05, 0.2), &options)?;
    c.check(
        "reaches s = 1 in at most 100 steps",
        path.completed && path.attempted() <= 100,
        format!(
            "completed {} after {} attempted, {} accepted",
            path.completed,
            path.attempted(),
            path.accepted()
        ),
    );
    let counts = path
        .points
        .iter()
        .map(|p| euler_count(std::slice::from_ref(&p.cert.spectrum)))
        .collect::<Result<Vec<_>>>()?;
    c.check(
        "signed count 1 at every step",
        counts.iter().all(|&k| k == 1),
        format!("per step {counts:?}"),
    );
    c.check(
        "signed count constant along the path",
        counts.windows(2).all(|w| w[0] == w[1]),
        format!("{} steps", counts.len()),
    );
    let margin = path
        .points
        .iter()
        .map(|p| p.cert.bound.min_eigenvalue - p.cert.bound.r_bound)
        .fold(f64::INFINITY, f64::min);
    c.check(
        "spectrum above the lower bound at every step",
        path.points.iter().all(|p| p.cert.bound.holds),
        format!("smallest margin {margin:.3}"),
    );
    Ok(())
}

/// `λ` for `λ ≤ a`, `1` for `λ ≥ b`, and the smoothstep blend in between.
fn hand_rho(lambda: f64, a: f64, b: f64) -> f64 {
    if lambda <= a {
        return lambda;
    }
    if lambda >= b {
        return 1.0;
    }
    let x = (lambda - a) / (b - a);
    lambda + (1.0 - lambda) * (3.0 * x * x - 2.0 * x * x * x)
}

fn random_orthogonal(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let m = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
    m.qr().q()
}

fn determinant_line(c: &mut Criterion) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let rho = CutoffRho::default();
    let mut err: f64 = 0.0;
    for _ in 0..20 {
        let n = rng.gen_range(1..12);
        let spectrum: Vec<f64> = (0..n)
            .map(|_| match rng.gen_range(0..4) {
                0 => 0.0,
                1 => rng.gen_range(-3.0..0.5),
                2 => rng.gen_range(0.5..1.0),
                _ => rng.gen_range(1.0..50.0),
            })
            .collect();
        let hand: f64 = spectrum
            .iter()
            .filter(|&&l| l != 0.0)
            .map(|&l| hand_rho(l, 0.5, 1.0))
            .product();
        err = err.max((mu(&spectrum, &rho, f64::NEG_INFINITY)? - hand).abs());
    }
    c.below("mu against hand-computed products", err, 1e-12);

    let mut relation = 0;
    let mut det_sign = 0;
    for _ in 0..50 {
        let n = rng.gen_range(2..9);
        let q = random_orthogonal(&mut rng, n);
        let values = DVector::from_fn(n, |_, _| {
            let v: f64 = rng.gen_range(0.05..3.0);
            if rng.gen_bool(0.5) { v } else { -v }
        });
        let t = &q * DMatrix::from_diagonal(&values) * q.transpose();
        let t = (&t + t.transpose()) * 0.5;
        let s = sections(&t, &rho, 1e-12)?;
        relation += s.relation_holds() as usize;
        det_sign += (s.s_sign as f64 == t.determinant().signum()) as usize;
    }
    c.check("s = (-1)^index t on 50 random matrices", relation == 50, format!("{relation}/50"));
    c.check("sign of s equals sign of det", det_sign == 50, format!("{det_sign}/50"));

    let n = 6;
    let q = random_orthogonal(&mut rng, n);
    let phi = DMatrix::from_fn(n, 1, |_, _| rng.gen_range(-1.0..1.0));
    let tail = [-2.0, -0.3, 0.7, 1.5, 4.0];
    let mut jump: f64 = 0.0;
    let mut prev: Option<f64> = None;
    for j in -100..=100 {
        let eps = j as f64 * 1e-4;
        let mut values = vec![eps];
        values.extend(tail);
        let t = &q * DMatrix::from_diagonal(&DVector::from_vec(values)) * q.transpose();
        let t = (&t + t.transpose()) * 0.5;
        let s = stabilized_section(&t, &phi, &rho, 1e-12)?;
        if let Some(p) = prev {
            jump = jump.max((s - p).abs());
        }
        prev = Some(s);
    }
    c.below("section continuous through a kernel crossing", jump, 1e-3);

    for modes in [8, 16, 32] {
        let report = holonomy(&OperatorFamily::new(modes, 400, 1.0, 1.0)?)?;
        c.check(
            &format!("holonomy sign -1 with {modes} modes"),
            report.sign == -1 && report.min_alignment > 0.999,
            format!("sign {} alignment {:.6}", report.sign, report.min_alignment),
        );
    }
    Ok(())
}

fn relative_defect(h: &DMatrix<f64>) -> f64 {
    symmetry_defect(h) / h.amax().max(1.0)
}

fn hygiene(c: &mut Criterion) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let (mut fd_frozen, mut sym_frozen) = (0.0_f64, 0.0_f64);
    for _ in 0..10 {
        let z = random_odd(&mut rng, 8);
        let r = rng.gen_range(0.0..5.0);
        let f = FrozenFunctional::for_loop(&z, r);
        let x = DVector::from_column_slice(z.coeffs());
        let dir = DVector::from_fn(x.len(), |_, _| rng.gen_range(-1.0..1.0));
        fd_frozen = fd_frozen.max(directional_check(&f, &x, &dir, 1e-5)?);
        sym_frozen = sym_frozen.max(relative_defect(&finite_difference_hessian(&f, &x, 1e-5)?));
    }
    c.below("F_r gradient against finite differences", fd_frozen, 1e-6);

    let mut sym_pair: f64 = 0.0;
    for (s, label) in [(0.0, "B_av"), (1.0, "B_in")] {
        let mut worst: f64 = 0.0;
        for _ in 0..10 {
            let pair = random_pair(&mut rng, 6);
            let f = HeliumFunctional::for_pair(&pair, s);
            let x = pair.coeffs();
            let dir = DVector::from_fn(x.len(), |_, _| rng.gen_range(-1.0..1.0));
            worst = worst.max(directional_check(&f, &x, &dir, 1e-5)?);
            let h = f.hessian(&x)?;
            sym_pair = sym_pair.max(relative_defect(&h));
            if s == 0.0 {
                sym_pair = sym_pair.max(relative_defect(&finite_difference_hessian(&f, &x, 1e-5)?));
            }
        }
        c.below(&format!("{label} gradient against finite differences"), worst, 1e-6);
    }
    c.below("Hessian symmetry defect", sym_frozen.max(sym_pair), 1e-8);

    let mut drift: f64 = 0.0;
    for target in [rho(), 1.0, 5.0] {
        let coarse = frozen_to(target, 32)?;
        let fine = frozen_to(target, 64)?;
        let (a, b) = (&coarse.last().cert.cert, &fine.last().cert.cert);
        drift = drift.max((a.v - b.v).abs()).max((a.w - b.w).abs());
    }
    c.below("(v, w) under mode doubling 32 -> 64", drift, 1e-8);
    Ok(())
}

fn main() -> ExitCode {
    let suite: [(u32, &str, u64, fn(&mut Criterion) -> Result<()>); 8] = [
        (1, "elliptic closed forms and identities", 5, elliptic_closed_forms),
        (2, "free fall", 10, free_fall),
        (3, "continuation of F_r from 0 through rho to 5", 120, frozen_continuation),
        (4, "bridge between F_rho and B_av", 10, bridge),
        (5, "mean-interaction orbit", 30, mean_interaction),
        (6, "instantaneous homotopy", 300, homotopy),
        (7, "determinant-line suite", 60, determinant_line),
        (8, "numerical hygiene", 600, hygiene),
    ];
    let only: Vec<u32> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let mut unexpected = 0;
    for (id, title, limit, run) in suite {
        if !only.is_empty() && !only.contains(&id) {
            continue;
        }
        let mut c = Criterion::new(id, title, limit);
        let start = Instant::now();
        let outcome = run(&mut c);
        let elapsed = start.elapsed();
        if let Err(e) = outcome {
            c.check("completes without error", false, e.to_string());
        }
        // Criterion 8 carries no runtime bound; its limit is only a guard.
        c.check(
            &format!("runtime under {} s", c.limit.as_secs()),
            elapsed <= c.limit,
            format!("{:.1} s", elapsed.as_secs_f64()),
        );
        let passed = c.parts.iter().all(|p| p.ok);
        println!(
            "{} criterion {}: {} ({:.1} s)",
            if passed { "PASS" } else { "FAIL" },
            c.id,
            c.title,
            elapsed.as_secs_f64()
        );
        for p in &c.parts {
            let known = KNOWN_FAILURES.contains(&(c.id, p.label.as_str()));
            let mark = match (p.ok, known) {
                (true, false) => "ok     ",
                (false, true) => "FAILED (known, see module docs)",
                (false, false) => {
                    unexpected += 1;
                    "FAILED"
                }
                (true, true) => {
                    unexpected += 1;
                    "passes but is recorded as a known failure"
                }
            };
            println!("    {mark}  {}: {}", p.label, p.detail);
        }
    }
    if unexpected == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{unexpected} unexpected outcome(s)");
        ExitCode::FAILURE
    }
}
