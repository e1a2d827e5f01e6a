//! Prints one PASS/FAIL line per acceptance criterion; exits nonzero if any fail.
//! Pass criterion ids as arguments to run a subset.

fn main() {
    let only: Vec<u8> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for c in illposed_validation::criteria() {
        if !only.is_empty() && !only.contains(&c.id) {
            continue;
        }
        let outcome = illposed_validation::evaluate(&c);
        println!("{}", outcome.line());
        if !outcome.pass {
            failed += 1;
        }
    }
    println!("acceptance: {failed} criteria failed");
    if failed > 0 {
        std::process::exit(1);
    }
}
