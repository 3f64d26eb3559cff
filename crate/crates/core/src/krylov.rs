//! Preconditioned Krylov solvers over matricized iterates.
//!
//! Operators and preconditioners are plain callbacks on dense matrices (the
//! vec identity keeps everything in N_h x N_p form). Convergence is always
//! measured on the true residual ||b - A x|| / ||b||, recomputed each
//! iteration, so the reported history never drifts from the preconditioned
//! recurrence. The initial guess is zero.

use ndarray::Array2;
use serde::Serialize;

use crate::linalg::{frobenius_dot, frobenius_norm};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum KrylovMethod {
    Cg,
    BiCgStab,
}

#[derive(Debug, Clone, Copy)]
pub struct KrylovConfig {
    /// Relative residual target, in (0, 1).
    pub tol: f64,
    pub maxit: usize,
    pub method: KrylovMethod,
}

impl KrylovConfig {
    pub fn new(tol: f64, maxit: usize, method: KrylovMethod) -> KrylovConfig {
        assert!(tol > 0.0 && tol < 1.0, "tolerance must be in (0,1)");
        assert!(maxit >= 1);
        KrylovConfig { tol, maxit, method }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveReport {
    pub iterations: usize,
    /// True relative residual after each iteration.
    pub residual_history: Vec<f64>,
    pub converged: bool,
    /// Populated on breakdown (e.g. non-positive curvature in CG).
    pub breakdown: Option<String>,
}

pub fn solve(
    apply_a: &dyn Fn(&Array2<f64>) -> Array2<f64>,
    apply_pinv: &dyn Fn(&Array2<f64>) -> Array2<f64>,
    rhs: &Array2<f64>,
    config: &KrylovConfig,
) -> (Array2<f64>, SolveReport) {
    match config.method {
        KrylovMethod::Cg => pcg(apply_a, apply_pinv, rhs, config),
        KrylovMethod::BiCgStab => bicgstab(apply_a, apply_pinv, rhs, config),
    }
}

/// Preconditioned conjugate gradients for SPD operators (w.r.t. the
/// Frobenius inner product).
pub fn pcg(
    apply_a: &dyn Fn(&Array2<f64>) -> Array2<f64>,
    apply_pinv: &dyn Fn(&Array2<f64>) -> Array2<f64>,
    rhs: &Array2<f64>,
    config: &KrylovConfig,
) -> (Array2<f64>, SolveReport) {
    let bnorm = frobenius_norm(rhs);
    let mut x = Array2::zeros(rhs.raw_dim());
    let mut report = SolveReport {
        iterations: 0,
        residual_history: Vec::new(),
        converged: false,
        breakdown: None,
    };
    if bnorm == 0.0 {
        report.converged = true;
        return (x, report);
    }
    let mut r = rhs.clone();
    let mut z = apply_pinv(&r);
    let mut p = z.clone();
    let mut rz = frobenius_dot(&r, &z);
    for it in 1..=config.maxit {
        let ap = apply_a(&p);
        let pap = frobenius_dot(&p, &ap);
        if pap <= 0.0 {
            report.iterations = it;
            report.breakdown = Some(format!(
                "non-positive curvature p'Ap = {pap:.3e}: operator is not SPD"
            ));
            return (x, report);
        }
        let alpha = rz / pap;
        x.scaled_add(alpha, &p);
        r.scaled_add(-alpha, &ap);
        let true_res = frobenius_norm(&(rhs - &apply_a(&x))) / bnorm;
        report.iterations = it;
        report.residual_history.push(true_res);
        if true_res <= config.tol {
            report.converged = true;
            return (x, report);
        }
        z = apply_pinv(&r);
        let rz_new = frobenius_dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        p = &z + &(beta * &p);
    }
    (x, report)
}

// Bail out of Bi-CGSTAB when the best residual has not improved by at least
// 1% over this many iterations (erratic stalling on indefinite spectra).
const STAGNATION_WINDOW: usize = 500;

/// Preconditioned Bi-CGSTAB for general nonsingular operators. Breakdown
/// (rho ~ 0 or omega ~ 0) restarts once from the current iterate before
/// reporting failure; prolonged stagnation is surfaced as non-convergence.
pub fn bicgstab(
    apply_a: &dyn Fn(&Array2<f64>) -> Array2<f64>,
    apply_pinv: &dyn Fn(&Array2<f64>) -> Array2<f64>,
    rhs: &Array2<f64>,
    config: &KrylovConfig,
) -> (Array2<f64>, SolveReport) {
    let bnorm = frobenius_norm(rhs);
    let mut x = Array2::zeros(rhs.raw_dim());
    let mut report = SolveReport {
        iterations: 0,
        residual_history: Vec::new(),
        converged: false,
        breakdown: None,
    };
    if bnorm == 0.0 {
        report.converged = true;
        return (x, report);
    }
    let tiny = 1e-30 * bnorm * bnorm;
    let mut r = rhs.clone();
    let mut r_hat = r.clone();
    let mut p: Array2<f64> = Array2::zeros(rhs.raw_dim());
    let mut v: Array2<f64> = Array2::zeros(rhs.raw_dim());
    let (mut rho, mut alpha, mut omega) = (1.0f64, 1.0f64, 1.0f64);
    let mut restarted = false;
    let mut restart = |x: &Array2<f64>,
                       r: &mut Array2<f64>,
                       r_hat: &mut Array2<f64>,
                       p: &mut Array2<f64>,
                       v: &mut Array2<f64>,
                       rho: &mut f64,
                       alpha: &mut f64,
                       omega: &mut f64|
     -> bool {
        if restarted {
            return false;
        }
        restarted = true;
        *r = rhs - &apply_a(x);
        *r_hat = r.clone();
        p.fill(0.0);
        v.fill(0.0);
        *rho = 1.0;
        *alpha = 1.0;
        *omega = 1.0;
        true
    };
    for it in 1..=config.maxit {
        report.iterations = it;
        let rho_new = frobenius_dot(&r_hat, &r);
        if rho_new.abs() < tiny {
            if restart(&x, &mut r, &mut r_hat, &mut p, &mut v, &mut rho, &mut alpha, &mut omega) {
                continue;
            }
            report.breakdown = Some("rho breakdown after restart".into());
            return (x, report);
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        p = &r + &(beta * &(&p - &(omega * &v)));
        let p_hat = apply_pinv(&p);
        v = apply_a(&p_hat);
        let rhv = frobenius_dot(&r_hat, &v);
        if rhv.abs() < tiny {
            if restart(&x, &mut r, &mut r_hat, &mut p, &mut v, &mut rho, &mut alpha, &mut omega) {
                continue;
            }
            report.breakdown = Some("stagnation (r_hat, v) ~ 0 after restart".into());
            return (x, report);
        }
        alpha = rho / rhv;
        let s = &r - &(alpha * &v);
        if frobenius_norm(&s) / bnorm <= config.tol {
            // half step already reaches the target
            x.scaled_add(alpha, &p_hat);
            let true_res = frobenius_norm(&(rhs - &apply_a(&x))) / bnorm;
            report.residual_history.push(true_res);
            if true_res <= config.tol {
                report.converged = true;
                return (x, report);
            }
            x.scaled_add(-alpha, &p_hat); // undo, fall through to the full step
        }
        let s_hat = apply_pinv(&s);
        let t = apply_a(&s_hat);
        let tt = frobenius_dot(&t, &t);
        if tt == 0.0 {
            if restart(&x, &mut r, &mut r_hat, &mut p, &mut v, &mut rho, &mut alpha, &mut omega) {
                continue;
            }
            report.breakdown = Some("t vanished after restart".into());
            return (x, report);
        }
        omega = frobenius_dot(&t, &s) / tt;
        x.scaled_add(alpha, &p_hat);
        x.scaled_add(omega, &s_hat);
        r = &s - &(omega * &t);
        let true_res = frobenius_norm(&(rhs - &apply_a(&x))) / bnorm;
        report.residual_history.push(true_res);
        if true_res <= config.tol {
            report.converged = true;
            return (x, report);
        }
        let h = report.residual_history.len();
        if h > STAGNATION_WINDOW {
            let recent = report.residual_history[h - STAGNATION_WINDOW..]
                .iter()
                .cloned()
                .fold(f64::INFINITY, f64::min);
            let best_before = report.residual_history[..h - STAGNATION_WINDOW]
                .iter()
                .cloned()
                .fold(f64::INFINITY, f64::min);
            if recent > 0.99 * best_before {
                report.breakdown = Some(format!(
                    "stagnation: no residual progress over {STAGNATION_WINDOW} iterations"
                ));
                return (x, report);
            }
        }
        if omega.abs() < 1e-14 {
            if restart(&x, &mut r, &mut r_hat, &mut p, &mut v, &mut rho, &mut alpha, &mut omega) {
                continue;
            }
            report.breakdown = Some("omega breakdown after restart".into());
            return (x, report);
        }
    }
    (x, report)
}
