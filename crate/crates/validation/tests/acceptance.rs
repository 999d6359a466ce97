//! One PASS/FAIL line per criterion; exits with status 1 if any criterion fails.

use ectd_validation::*;

fn main() {
    let tmp = tempfile::tempdir().expect("temp dir");
    let mut results: Vec<(u32, bool)> = Vec::new();
    let mut record = |id: u32, name: &str, o: Outcome| {
        println!("criterion {id} {:<26} {}  {}", name, if o.pass { "PASS" } else { "FAIL" }, o.detail);
        results.push((id, o.pass));
    };
    record(1, "oracle identity suite", criterion_1());
    record(2, "cmds exactness", criterion_2());
    record(3, "embedding RMSE curves", criterion_3(tmp.path()));
    record(4, "estimator consistency", criterion_4());
    record(5, "trainer correctness", criterion_5());
    record(6, "q effect on short pairs", criterion_6());
    let (cfg, reports, elapsed) = curriculum_runs();
    record(7, "expanding epsilon-sphere", criterion_7(&reports, elapsed));
    record(8, "curriculum sanity", criterion_8(&reports, &cfg));
    record(9, "determinism", criterion_9(tmp.path()));

    let failed: Vec<u32> = results.iter().filter(|r| !r.1).map(|r| r.0).collect();
    println!("acceptance: {} of {} criteria pass", results.len() - failed.len(), results.len());
    if !failed.is_empty() {
        println!("acceptance: failing criteria {failed:?}");
        std::process::exit(1);
    }
}
