//! Checks reverse-mode gradients of a tiny encoder-decoder against central
//! finite differences in double precision.
//!
//!     cargo run --release --example gradient_check

use revsum::model::{grad_check, gradcheck_config, gradcheck_example, Combination, Transformer};

fn main() -> revsum::Result<()> {
    for combination in [Combination::Parallel, Combination::Mean] {
        let model = Transformer::<f64>::new(gradcheck_config(combination), 7)?;
        let report = grad_check(&model, &gradcheck_example(), 300, 1e-4, 1e-6, 7)?;
        let worst = report
            .entries
            .iter()
            .max_by(|a, b| a.rel_error.total_cmp(&b.rel_error))
            .expect("coordinates checked");
        println!(
            "{combination:?}: {} coordinates, max relative error {:.2e} at {}[{}] (analytic {:.3e}, numeric {:.3e})",
            report.entries.len(),
            report.max_rel_error,
            worst.param,
            worst.index,
            worst.analytic,
            worst.numeric
        );
    }
    Ok(())
}
