//! Runs every acceptance criterion at its default size and prints one line
//! per criterion (set `ACCEPTANCE_VERBOSE` to list every check). Exits non-zero if any criterion fails or errors.

use freefield::acceptance::{self, AcceptanceConfig, CRITERIA};

fn main() {
    let cfg = AcceptanceConfig::default();
    let verbose = std::env::var_os("ACCEPTANCE_VERBOSE").is_some();
    let mut failed = 0;
    for (id, name, _) in CRITERIA {
        match acceptance::run(id, &cfg) {
            Ok(rep) if rep.passed() => {
                println!("PASS {id:>2} {name} ({} checks, {:.2}s)", rep.records.len(), rep.wall_time_s);
                if verbose {
                    for r in &rep.records {
                        println!("     {}: residual {:.3e}, tolerance {:.1e}", r.name, r.residual, r.tolerance);
                    }
                }
            }
            Ok(rep) => {
                failed += 1;
                println!("FAIL {id:>2} {name}");
                for r in rep.failures() {
                    println!("     {}: residual {:.3e} > tolerance {:.1e}  [{}]", r.name, r.residual, r.tolerance, r.anchor);
                }
            }
            Err(e) => {
                failed += 1;
                println!("FAIL {id:>2} {name}: {e}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", CRITERIA.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
