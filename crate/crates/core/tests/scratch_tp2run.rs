use rbsgm_core::config::RunConfig;
use rbsgm_core::rbsgm::run;
use std::time::Instant;


#[test]
#[ignore]
fn tp2_full_pipeline() {
    let base = RunConfig::helmholtz_defaults();
    let prob = base.build_problem(None).unwrap();
    let t0 = Instant::now();
    let rep = run(&prob, &base.rbsgm_config()).unwrap();
    let curve: Vec<String> = rep.stages.iter().map(|s| format!("{}:{:.2e}", s.r, s.relres)).collect();
    println!(
        "rbsgm {:.0}s: converged={} r={} evals={} skipped={} [{}]",
        t0.elapsed().as_secs_f64(), rep.converged, rep.final_r, rep.residual_evaluations, rep.skipped_candidates, curve.join(" ")
    );
}
