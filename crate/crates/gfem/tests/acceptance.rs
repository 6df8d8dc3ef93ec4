//! Acceptance suite: one verdict line per criterion.
//!
//! Runs with a custom harness so the verdicts print under plain `cargo test`.
//! Set `GFEM_ACCEPTANCE_ONLY=3,7` to run a subset and `GFEM_ACCEPTANCE_OUT`
//! to keep the per-study CSV/JSON reports.

use std::f64::consts::PI;
use std::time::Instant;

use gfem::config::{DataSpec, ExperimentConfig};
use gfem::error::GfemError;
use gfem::field::{Field, Gaussian, Polynomial};
use gfem::geometry::make_disk;
use gfem::norms::{fourier_norm_plane, hs_norm, region_rule, DualFlavor, DualNorm};
use gfem::quadrature::Region;
use gfem::study::{self, StudyReport, Workspace};

struct Verdict {
    id: usize,
    title: &'static str,
    passed: bool,
    detail: String,
}

fn from_reports(id: usize, title: &'static str, reports: &[&StudyReport]) -> Verdict {
    let mut failed = Vec::new();
    let mut passed_n = 0;
    for r in reports {
        for c in &r.checks {
            if c.passed {
                passed_n += 1;
            } else {
                failed.push(format!("{}/{}: {}", r.name, c.name, c.detail));
            }
        }
    }
    let passed = failed.is_empty() && passed_n > 0;
    let detail = if failed.is_empty() { format!("{passed_n} checks") } else { failed.join("; ") };
    Verdict { id, title, passed, detail }
}

fn infra(id: usize, title: &'static str, e: GfemError) -> Verdict {
    Verdict { id, title, passed: false, detail: format!("infrastructure error: {e}") }
}

fn emit(out: &Option<std::path::PathBuf>, reports: &[&StudyReport]) {
    for r in reports {
        eprintln!("{}", r.summary());
        if let Some(dir) = out {
            if let Err(e) = r.write(dir) {
                eprintln!("could not write {}: {e}", r.name);
            }
        }
    }
}

fn with_degree(base: &ExperimentConfig, m: usize) -> ExperimentConfig {
    let mut c = base.clone();
    c.study.degree = m;
    c
}

fn rough(base: &ExperimentConfig, m: usize, gamma: u32) -> ExperimentConfig {
    let mut c = with_degree(base, m);
    c.data = DataSpec::Dirac { theta: 0.0 };
    c.study.k = Some(1);
    c.study.gamma = Some(gamma);
    c
}

fn norm_machinery() -> Verdict {
    let mut notes = Vec::new();
    let mut ok = true;
    for eps in [0.1, 0.05] {
        match fourier_norm_plane(&|_| 1.0, -1.0 - eps) {
            Ok(v) => {
                let exact = 1.0 / (4.0 * PI * eps);
                let rel = (v * v - exact).abs() / exact;
                ok &= rel <= 0.01;
                notes.push(format!("ε={eps}: rel {rel:.1e}"));
            }
            Err(e) => {
                ok = false;
                notes.push(format!("ε={eps}: {e}"));
            }
        }
    }
    let d = make_disk(1.0, [0.0, 0.0]).unwrap();
    let rule = region_rule(&d, Region::Domain);
    let f = Gaussian { center: [0.3, 0.2], width: 0.3 };
    let mut last = 0.0;
    let mut mono = true;
    for n in [2, 4, 6, 8, 10, 12] {
        match DualNorm::on_region(&d, Region::Domain, DualFlavor::Full, 1, n) {
            Ok(dn) => {
                let v = dn.of_field(&f, &rule);
                mono &= v >= last;
                last = v;
            }
            Err(e) => {
                mono = false;
                notes.push(format!("N={n}: {e}"));
            }
        }
    }
    ok &= mono;
    notes.push(format!("N-monotone {mono}"));
    let p = Polynomial::new(vec![(2, 1, 1.0), (0, 0, 0.5)]);
    for (name, field) in [("gaussian", &f as &dyn Field), ("polynomial", &p as &dyn Field)] {
        let l2 = hs_norm(field, &rule, 0);
        let s0 = DualNorm::on_region(&d, Region::Domain, DualFlavor::Full, 0, 12).map(|dn| dn.of_field(field, &rule));
        match s0 {
            Ok(v) => {
                let rel = (v - l2).abs() / l2;
                ok &= rel <= 0.01;
                notes.push(format!("s=0 {name}: rel {rel:.1e}"));
            }
            Err(e) => {
                ok = false;
                notes.push(format!("s=0 {name}: {e}"));
            }
        }
    }
    Verdict { id: 11, title: "norm machinery", passed: ok, detail: notes.join(", ") }
}

fn main() {
    let _ = env_logger::builder().is_test(true).try_init();
    let only: Option<Vec<usize>> = std::env::var("GFEM_ACCEPTANCE_ONLY").ok().map(|s| s.split(',').filter_map(|t| t.trim().parse().ok()).collect());
    let want = |i: usize| only.as_ref().map(|o| o.contains(&i)).unwrap_or(true);
    let out = std::env::var_os("GFEM_ACCEPTANCE_OUT").map(std::path::PathBuf::from);
    let base = ExperimentConfig::default();
    let ws = Workspace::for_config(&base).expect("unit disk workspace");
    let mut verdicts: Vec<Verdict> = Vec::new();
    let t0 = Instant::now();

    if want(1) {
        let title = "PU validity";
        verdicts.push(match study::pu_validity(&base, &ws) {
            Ok(r) => {
                emit(&out, &[&r]);
                from_reports(1, title, &[&r])
            }
            Err(e) => infra(1, title, e),
        });
    }
    if want(2) {
        let title = "local-space inequalities";
        let reports: Result<Vec<_>, _> = (2..=4).map(|m| study::local_constants(&with_degree(&base, m), &ws)).collect();
        verdicts.push(match reports {
            Ok(r) => {
                let refs: Vec<&StudyReport> = r.iter().collect();
                emit(&out, &refs);
                from_reports(2, title, &refs)
            }
            Err(e) => infra(2, title, e),
        });
    }
    if want(3) {
        let title = "quasi-interpolation";
        let reports: Result<Vec<_>, _> = [2, 3].iter().map(|&m| study::quasi_interpolation(&with_degree(&base, m), &ws)).collect();
        verdicts.push(match reports {
            Ok(r) => {
                let refs: Vec<&StudyReport> = r.iter().collect();
                emit(&out, &refs);
                from_reports(3, title, &refs)
            }
            Err(e) => infra(3, title, e),
        });
    }
    if want(4) {
        let title = "super-approximation";
        verdicts.push(match study::super_approximation(&base, &ws, 20) {
            Ok(r) => {
                emit(&out, &[&r]);
                from_reports(4, title, &[&r])
            }
            Err(e) => infra(4, title, e),
        });
    }
    if want(5) {
        let title = "inverse property";
        verdicts.push(match study::inverse_property(&base, &ws) {
            Ok(r) => {
                emit(&out, &[&r]);
                from_reports(5, title, &[&r])
            }
            Err(e) => infra(5, title, e),
        });
    }
    if want(6) {
        let title = "smooth solve";
        verdicts.push(match study::smooth_solve(&base, &ws) {
            Ok(r) => {
                emit(&out, &[&r]);
                from_reports(6, title, &[&r])
            }
            Err(e) => infra(6, title, e),
        });
    }
    if want(7) || want(8) {
        let m3 = study::run_convergence_and_stability(&rough(&base, 3, 1), &ws);
        let m4 = if want(7) { Some(study::run_convergence(&rough(&base, 4, 2), &ws)) } else { None };
        match m3 {
            Ok((conv3, stab3)) => {
                emit(&out, &[&conv3, &stab3]);
                if want(7) {
                    let title = "interior convergence, Dirac data";
                    verdicts.push(match m4 {
                        Some(Ok(conv4)) => {
                            emit(&out, &[&conv4]);
                            from_reports(7, title, &[&conv3, &conv4])
                        }
                        Some(Err(e)) => infra(7, title, e),
                        None => unreachable!(),
                    });
                }
                if want(8) {
                    verdicts.push(from_reports(8, "stability, Dirac data", &[&stab3]));
                }
            }
            Err(e) => {
                let msg = e.to_string();
                if want(7) {
                    verdicts.push(Verdict { id: 7, title: "interior convergence, Dirac data", passed: false, detail: msg.clone() });
                }
                if want(8) {
                    verdicts.push(Verdict { id: 8, title: "stability, Dirac data", passed: false, detail: msg });
                }
            }
        }
    }
    if want(9) {
        let title = "discrete-harmonic interior estimates";
        let mut cfg = base.clone();
        cfg.data = DataSpec::ExpCos;
        verdicts.push(match study::run_interior_estimate_check(&cfg, &ws) {
            Ok(r) => {
                emit(&out, &[&r]);
                from_reports(9, title, &[&r])
            }
            Err(e) => infra(9, title, e),
        });
    }
    if want(10) {
        let title = "cusp negative test";
        verdicts.push(match study::cusp_sweep(&study::CUSP_LADDER, base.pu.sigma) {
            Ok(r) => {
                emit(&out, &[&r]);
                from_reports(10, title, &[&r])
            }
            Err(e) => infra(10, title, e),
        });
    }
    if want(11) {
        verdicts.push(norm_machinery());
    }

    println!("\nacceptance ({:.0} s)", t0.elapsed().as_secs_f64());
    for v in &verdicts {
        println!("criterion {:>2} [{}] {}: {}", v.id, if v.passed { "PASS" } else { "FAIL" }, v.title, v.detail);
    }
    let failed = verdicts.iter().filter(|v| !v.passed).count();
    println!("{} of {} criteria passed", verdicts.len() - failed, verdicts.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
