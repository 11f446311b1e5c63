//! Verify reverse-mode gradients against central finite differences: every
//! tensor op, then the end-to-end objective on a small model, all in f64.
//!
//! cargo run --example gradient_check

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let reports = dualvae::objective::gradient_check_suite(42)?;
    let mut all_ok = true;
    for r in &reports {
        let ok = r.passes(1e-4);
        all_ok &= ok;
        println!(
            "{} {:<28} max relative error {:.3e} over {} probes",
            if ok { "PASS" } else { "FAIL" },
            r.op_name,
            r.max_relative_error,
            r.probe_count
        );
    }
    if !all_ok {
        return Err("gradient check failed".into());
    }
    println!("\nall {} checks within 1e-4", reports.len());
    Ok(())
}
