//! Acceptance suite: every shipped claim about the solver, one test per
//! criterion, each ending in a single PASS line (failures panic with the
//! measured value). Criterion 9 compares wall times at production scale and
//! is opt-in: `cargo test --release --test acceptance -- --ignored`.

use std::sync::OnceLock;
use std::time::Instant;

use rbsgm_core::config::RunConfig;
use rbsgm_core::experiment;
use rbsgm_core::fem::assemble_unit_mass;
use rbsgm_core::gpc;
use rbsgm_core::krylov::KrylovConfig;
use rbsgm_core::linalg::CsrMatrix;
use rbsgm_core::oracle;
use rbsgm_core::postproc::{self, ErrorMetrics, SolutionStats};
use rbsgm_core::randfield;
use rbsgm_core::rbsgm::{self, RbsgmReport};

struct Tp1Fixture {
    run1: RbsgmReport,
    run2: RbsgmReport,
    wall_seconds: f64,
}

fn tp1_config() -> RunConfig {
    // m = 5, n = 33, p = 5, TOL = 1e-4, ns = 15, training 500, basis budget
    // nmax = 100
    RunConfig::diffusion_defaults()
}

fn tp1() -> &'static Tp1Fixture {
    static CELL: OnceLock<Tp1Fixture> = OnceLock::new();
    CELL.get_or_init(|| {
        let cfg = tp1_config();
        assert_eq!(cfg.nmax, 100);
        let prob = cfg.build_problem(None).expect("tp1 problem");
        let mut rcfg = cfg.rbsgm_config();
        rcfg.check_cardinality = true;
        let started = Instant::now();
        let run1 = rbsgm::run(&prob, &rcfg).expect("tp1 run");
        let wall_seconds = started.elapsed().as_secs_f64();
        let run2 = rbsgm::run(&prob, &rcfg).expect("tp1 rerun");
        Tp1Fixture {
            run1,
            run2,
            wall_seconds,
        }
    })
}

struct Tp1Errors {
    rb_err: ErrorMetrics,
    sgm_err: ErrorMetrics,
}

fn tp1_errors() -> &'static Tp1Errors {
    static CELL: OnceLock<Tp1Errors> = OnceLock::new();
    CELL.get_or_init(|| {
        let cfg = tp1_config();
        let prob = cfg.build_problem(None).expect("tp1 problem");
        let mass = assemble_unit_mass(&prob.mesh);
        // p = 6 reference at Krylov tolerance 1e-7
        let refprob = cfg.build_problem(Some(6)).expect("reference problem");
        let kref = KrylovConfig::new(1e-7, 20_000, cfg.krylov_method());
        let (uref, _) = postproc::solve_full_sgm(&refprob, &kref).expect("reference solve");
        let ref_stats = postproc::stats_from_coefficients(uref.view());
        // full SGM at the same TOL as the adaptive run
        let (usgm, _) = postproc::solve_full_sgm(&prob, &cfg.full_krylov()).expect("sgm solve");
        let sgm_stats = postproc::stats_from_coefficients(usgm.view());
        let rb_stats = postproc::stats_from_coefficients(tp1().run1.lifted.view());
        Tp1Errors {
            rb_err: postproc::relative_errors(&rb_stats, &ref_stats, &mass).unwrap(),
            sgm_err: postproc::relative_errors(&sgm_stats, &ref_stats, &mass).unwrap(),
        }
    })
}

#[test]
fn criterion_1_dense_oracle_equivalence() {
    // 3x3 interior DOFs, m = 2, p = 2: matvec <= 1e-12, coupled solve
    // <= 1e-9, cached-product residual <= 1e-12, on both problem kinds
    let results = experiment::oracle_check();
    let wanted = [
        "Kronecker matvec vs dense",
        "coupled solve vs dense solve",
        "cached-product residual vs dense residual",
    ];
    let mut seen = 0;
    for r in &results {
        if wanted.iter().any(|w| r.name.contains(w)) {
            assert!(r.passed, "{}: {}", r.name, r.detail);
            seen += 1;
        }
    }
    assert_eq!(seen, 6, "expected both problem kinds across three checks");
    println!("criterion 1 PASS: matvec/solve/residual match the dense Kronecker oracle");
}

#[test]
fn criterion_2_stochastic_matrices() {
    let mut worst: f64 = 0.0;
    let mut bases = 0usize;
    for m in 1..=49usize {
        for p in 0.. {
            if gpc::binomial(m + p, p) > 50 {
                break;
            }
            let basis = gpc::enumerate_indices(m, p).unwrap();
            bases += 1;
            assert_eq!(
                gpc::assemble_g(0, 0, &basis).unwrap(),
                CsrMatrix::identity(basis.n_p),
                "G_00 not the identity at m={m}, p={p}"
            );
            let h = gpc::assemble_h(&basis);
            assert!(h[0] == 1.0 && h[1..].iter().all(|&v| v == 0.0));
            for i in 0..=m {
                for j in 0..=m {
                    let g = gpc::assemble_g(i, j, &basis).unwrap();
                    let q = oracle::quadrature_g_oracle(i, j, &basis);
                    for l in 0..basis.n_p {
                        for n in 0..basis.n_p {
                            let d = (g.get(l, n) - q[[l, n]]).abs();
                            assert!(
                                d <= 1e-13,
                                "G_{i}{j}({l},{n}) off by {d:.3e} at m={m}, p={p}"
                            );
                            worst = worst.max(d);
                        }
                    }
                }
            }
        }
    }
    println!(
        "criterion 2 PASS: {bases} bases (all n_p <= 50), max |G - quadrature| = {worst:.3e} \
         <= 1e-13, G_00 = I and h = e_1 exact"
    );
}

#[test]
fn criterion_3_kl_spectra() {
    // 1D: top 10 modes within 1e-5 of the (Richardson-extrapolated midpoint)
    // Nystrom oracle
    let modes = randfield::kl_1d(1.0, (-1.0, 1.0), 10).unwrap();
    let nys = oracle::nystrom_1d_eigenvalues_extrapolated(1.0, (-1.0, 1.0), 400, 10);
    let mut worst1: f64 = 0.0;
    for (m, n) in modes.iter().zip(&nys) {
        worst1 = worst1.max((m.eigenvalue - n).abs() / n);
    }
    assert!(worst1 <= 1e-5, "1d deviation {worst1:.3e}");

    // trace partial sums: monotone, bounded by the interval length
    let many = randfield::kl_1d(1.0, (-1.0, 1.0), 40).unwrap();
    let mut partial = 0.0;
    for m in &many {
        assert!(m.eigenvalue > 0.0);
        partial += m.eigenvalue;
        assert!(partial < 2.0);
    }

    // 2D: top 10 products within 1e-4
    let xs: Vec<f64> = (0..17).map(|k| -1.0 + 0.125 * k as f64).collect();
    let field =
        randfield::kl_2d([1.0, 1.0], (-1.0, 1.0), (-1.0, 1.0), 10, &xs, &xs, 0.0, 1.0).unwrap();
    let nys2 = oracle::nystrom_2d_eigenvalues_extrapolated([1.0, 1.0], (-1.0, 1.0), (-1.0, 1.0), 30, 10);
    let mut worst2: f64 = 0.0;
    for (lam, n) in field.eigenvalues.iter().zip(&nys2) {
        worst2 = worst2.max((lam - n).abs() / n);
    }
    assert!(worst2 <= 1e-4, "2d deviation {worst2:.3e}");
    let sum2: f64 = field.eigenvalues.iter().sum();
    assert!(sum2 < 4.0);
    println!(
        "criterion 3 PASS: KL spectra vs Nystrom oracles, 1d dev {worst1:.3e} <= 1e-5, \
         2d dev {worst2:.3e} <= 1e-4, trace partial sums monotone and bounded"
    );
}

#[test]
fn criterion_4_indicator_cardinality() {
    let dev = tp1()
        .run1
        .cardinality_max_deviation
        .expect("cardinality instrumentation enabled");
    assert!(dev <= 1e-8, "max |Delta(selected) - 1| = {dev:.3e}");
    println!(
        "criterion 4 PASS: Delta_n(selected) = 1 within {dev:.3e} <= 1e-8 at every greedy step"
    );
}

#[test]
fn criterion_5_tp1_end_to_end() {
    let fx = tp1();
    assert!(fx.run1.converged, "TP1 run did not converge");
    assert!(
        fx.run1.final_relres <= 1e-4,
        "final residual {:.3e}",
        fx.run1.final_relres
    );
    assert!(fx.run1.final_r <= 100, "final r = {}", fx.run1.final_r);
    assert!(
        fx.wall_seconds < 120.0,
        "adaptive run took {:.1}s",
        fx.wall_seconds
    );
    let err = tp1_errors();
    let table_value = 4.4e-5;
    let ratio_paper = err.rb_err.err_var / table_value;
    assert!(
        (0.2..=5.0).contains(&ratio_paper),
        "err_var {:.3e} vs published 4.4e-5 (ratio {ratio_paper:.2})",
        err.rb_err.err_var
    );
    let ratio_sgm = err.rb_err.err_var / err.sgm_err.err_var;
    assert!(
        (0.2..=5.0).contains(&ratio_sgm),
        "err_var {:.3e} vs full-SGM {:.3e} (ratio {ratio_sgm:.2})",
        err.rb_err.err_var,
        err.sgm_err.err_var
    );
    println!(
        "criterion 5 PASS: converged at r = {} <= 100 with residual {:.3e} <= 1e-4 in {:.1}s; \
         err_var {:.3e} within x5 of 4.4e-5 (ratio {:.2}) and of full SGM {:.3e} (ratio {:.2})",
        fx.run1.final_r,
        fx.run1.final_relres,
        fx.wall_seconds,
        err.rb_err.err_var,
        ratio_paper,
        err.sgm_err.err_var,
        ratio_sgm
    );
}

#[test]
fn criterion_6_residual_evaluation_economy() {
    let mut cfg = tp1_config();
    cfg.tol = 1e-5;
    cfg.nmax = 200; // the tighter tolerance needs a larger basis budget
    let prob = cfg.build_problem(None).unwrap();
    let rep = rbsgm::run(&prob, &cfg.rbsgm_config()).unwrap();
    assert!(rep.converged, "TOL = 1e-5 run did not converge");
    assert!(
        rep.residual_evaluations <= 7,
        "residual evaluated {} times",
        rep.residual_evaluations
    );
    println!(
        "criterion 6 PASS: TOL = 1e-5 converged at r = {} with {} residual evaluations <= 7",
        rep.final_r, rep.residual_evaluations
    );
}

#[test]
fn criterion_7_mesh_robustness_of_r() {
    // uncapped budget so the comparison reflects the adaptive dimension
    let mut cfg33 = tp1_config();
    cfg33.nmax = 200;
    let mut cfg65 = cfg33.clone();
    cfg65.n = 65;
    let rep33 = rbsgm::run(&cfg33.build_problem(None).unwrap(), &cfg33.rbsgm_config()).unwrap();
    let rep65 = rbsgm::run(&cfg65.build_problem(None).unwrap(), &cfg65.rbsgm_config()).unwrap();
    assert!(rep33.converged && rep65.converged);
    let (r33, r65) = (rep33.final_r as f64, rep65.final_r as f64);
    let rel = (r33 - r65).abs() / r33.max(r65);
    assert!(rel <= 0.20, "r differs by {:.1}%: {} vs {}", rel * 100.0, r33, r65);
    println!(
        "criterion 7 PASS: final r {} (n = 33) vs {} (n = 65), difference {:.1}% <= 20%",
        rep33.final_r,
        rep65.final_r,
        rel * 100.0
    );
}

#[test]
fn criterion_8_helmholtz_dirichlet() {
    let cfg = RunConfig::helmholtz_defaults();
    assert_eq!((cfg.m, cfg.n, cfg.p, cfg.ns, cfg.training), (5, 33, 4, 10, 400));
    let prob = cfg.build_problem(None).unwrap();
    let rep = rbsgm::run(&prob, &cfg.rbsgm_config()).unwrap();
    assert!(rep.converged, "Helmholtz run did not converge");
    assert!(
        rep.final_relres <= 1e-4,
        "final residual {:.3e}",
        rep.final_relres
    );
    let mass = assemble_unit_mass(&prob.mesh);
    let refprob = cfg.build_problem(Some(6)).unwrap();
    let kref = KrylovConfig::new(1e-7, 20_000, cfg.krylov_method());
    let (uref, _) = postproc::solve_full_sgm(&refprob, &kref).expect("p=6 reference");
    let ref_stats = postproc::stats_from_coefficients(uref.view());
    let (usgm, _) = postproc::solve_full_sgm(&prob, &cfg.full_krylov()).expect("sgm at TOL");
    let sgm_stats = postproc::stats_from_coefficients(usgm.view());
    let rb_stats = postproc::stats_from_coefficients(rep.lifted.view());
    let rb_err = postproc::relative_errors(&rb_stats, &ref_stats, &mass).unwrap();
    let sgm_err = postproc::relative_errors(&sgm_stats, &ref_stats, &mass).unwrap();
    let ratio_mean = rb_err.err_mean / sgm_err.err_mean;
    let ratio_var = rb_err.err_var / sgm_err.err_var;
    assert!(
        (0.2..=5.0).contains(&ratio_mean),
        "mean errors disagree: {:.3e} vs {:.3e}",
        rb_err.err_mean,
        sgm_err.err_mean
    );
    assert!(
        (0.2..=5.0).contains(&ratio_var),
        "variance errors disagree: {:.3e} vs {:.3e}",
        rb_err.err_var,
        sgm_err.err_var
    );
    println!(
        "criterion 8 PASS: Bi-CGSTAB-driven run converged at r = {} with residual {:.3e}; \
         err_mean {:.2e}/{:.2e} (ratio {:.2}), err_var {:.2e}/{:.2e} (ratio {:.2}) vs full SGM",
        rep.final_r,
        rep.final_relres,
        rb_err.err_mean,
        sgm_err.err_mean,
        ratio_mean,
        rb_err.err_var,
        sgm_err.err_var,
        ratio_var
    );
}

/// Wall-time trend at production scale; run explicitly with `-- --ignored`.
#[test]
#[ignore = "slow suite: m = 10, n = 129 wall-time comparison (several minutes, ~3 GB)"]
fn criterion_9_speedup_trend_slow() {
    let mut cfg = tp1_config();
    cfg.m = 10;
    cfg.n = 129;
    cfg.nmax = 200;
    let prob = cfg.build_problem(None).unwrap();
    let started = Instant::now();
    let rep = rbsgm::run(&prob, &cfg.rbsgm_config()).unwrap();
    let rb_wall = started.elapsed().as_secs_f64();
    assert!(rep.converged);
    let started = Instant::now();
    let (_, sgrep) = postproc::solve_full_sgm(&prob, &cfg.full_krylov()).unwrap();
    let sgm_wall = started.elapsed().as_secs_f64();
    assert!(
        rb_wall < sgm_wall,
        "adaptive {rb_wall:.1}s vs full {sgm_wall:.1}s"
    );
    println!(
        "criterion 9 PASS: m = 10, n = 129: adaptive {rb_wall:.1}s (r = {}) < full SGM \
         {sgm_wall:.1}s ({} iterations)",
        rep.final_r, sgrep.iterations
    );
}

#[test]
fn criterion_10_determinism() {
    let fx = tp1();
    assert_eq!(
        fx.run1.selected, fx.run2.selected,
        "selected sample sequences differ between identical runs"
    );
    let csv1 = experiment::residual_curve_csv(&fx.run1.stages);
    let csv2 = experiment::residual_curve_csv(&fx.run2.stages);
    assert_eq!(csv1.into_bytes(), csv2.into_bytes(), "residual CSVs differ");
    println!(
        "criterion 10 PASS: identical seeds give identical selected samples and byte-identical \
         residual CSVs"
    );
}

#[test]
fn stats_fields_are_write_consistent() {
    // the mean/variance CSV emitters must reproduce the lifted statistics
    let fx = tp1();
    let stats: SolutionStats = postproc::stats_from_coefficients(fx.run1.lifted.view());
    assert_eq!(stats.mean.len(), fx.run1.lifted.nrows());
    assert!(stats.variance.iter().all(|&v| v >= 0.0));
}
