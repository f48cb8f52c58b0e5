//! Verifies every parameter bank's analytic gradient against central finite
//! differences on the tiny configuration, for each architecture variant.
//!
//! ```bash
//! cargo run -p qacnn --example gradient_check
//! ```

use qacnn::gradcheck::{gradcheck, GradCheckOptions};
use qacnn::{ModelConfig, Variant};

fn main() -> qacnn::Result<()> {
    let config = ModelConfig::tiny();
    for variant in Variant::ALL {
        let report = gradcheck(&config, &GradCheckOptions { variant, ..Default::default() })?;
        println!(
            "{variant:<24} {} (kink margin {:.2e}, {} draw(s))",
            if report.passed() { "PASS" } else { "FAIL" },
            report.kink_margin,
            report.attempts
        );
        for b in &report.banks {
            println!("    {:<28} n={:<4} max rel {:.2e}  max abs {:.2e}", b.name, b.size, b.max_relative_error, b.max_absolute_error);
        }
    }
    Ok(())
}
