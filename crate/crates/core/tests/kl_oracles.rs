//! Nystrom verification of the analytic KL spectra, including the
//! order-of-convergence evidence that justifies Richardson extrapolation.

use rbsgm_core::oracle::{
    nystrom_1d_eigenvalues, nystrom_1d_eigenvalues_extrapolated,
    nystrom_2d_eigenvalues_extrapolated,
};
use rbsgm_core::randfield::{kl_1d, kl_2d};

#[test]
fn midpoint_nystrom_converges_quadratically_to_analytic_values() {
    let modes = kl_1d(1.0, (-1.0, 1.0), 10).unwrap();
    let worst_dev = |npts: usize| -> f64 {
        nystrom_1d_eigenvalues(1.0, (-1.0, 1.0), npts, 10)
            .iter()
            .zip(&modes)
            .map(|(n, m)| (m.eigenvalue - n).abs() / n)
            .fold(0.0f64, f64::max)
    };
    let e400 = worst_dev(400);
    let e800 = worst_dev(800);
    let ratio = e400 / e800;
    assert!(
        (3.8..4.2).contains(&ratio),
        "expected O(h^2): e400={e400:.3e} e800={e800:.3e} ratio={ratio:.3}"
    );
}

#[test]
fn extrapolated_1d_eigenvalues_match_to_1e_minus_5() {
    for corr_len in [0.5, 1.0] {
        let modes = kl_1d(corr_len, (-1.0, 1.0), 10).unwrap();
        let nys = nystrom_1d_eigenvalues_extrapolated(corr_len, (-1.0, 1.0), 400, 10);
        for (m, n) in modes.iter().zip(&nys) {
            let dev = (m.eigenvalue - n).abs() / n;
            assert!(dev <= 1e-5, "corr_len={corr_len}: deviation {dev:.3e}");
        }
    }
}

#[test]
fn extrapolated_2d_eigenvalues_match_to_1e_minus_4() {
    let xs: Vec<f64> = (0..9).map(|k| -1.0 + 0.25 * k as f64).collect();
    let field = kl_2d([1.0, 1.0], (-1.0, 1.0), (-1.0, 1.0), 10, &xs, &xs, 0.0, 1.0).unwrap();
    let nys = nystrom_2d_eigenvalues_extrapolated([1.0, 1.0], (-1.0, 1.0), (-1.0, 1.0), 30, 10);
    for (lam, n) in field.eigenvalues.iter().zip(&nys) {
        let dev = (lam - n).abs() / n;
        assert!(dev <= 1e-4, "deviation {dev:.3e} (lambda = {lam:.6})");
    }
}
