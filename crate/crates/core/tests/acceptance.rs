use isac_core::experiments::{determinism, run_criterion, Outcome};

const SEED: u64 = 2024;

#[test]
fn acceptance() {
    let mut outcomes: Vec<Outcome> = Vec::new();
    for id in 1..=9 {
        let o = run_criterion(id, SEED).unwrap_or_else(|e| panic!("criterion {id} errored: {e}"));
        println!("{}", o.line());
        outcomes.push(o);
    }
    let d = determinism(&outcomes, SEED).expect("determinism re-run");
    println!("{}", d.line());
    outcomes.push(d);
    let failed: Vec<u8> = outcomes.iter().filter(|o| !o.passed).map(|o| o.id).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
