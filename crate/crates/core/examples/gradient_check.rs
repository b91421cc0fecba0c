//! Finite-difference checks of every layer and composed network.

use vsr::gradcheck::{render_results, run_gradchecks, GradcheckOptions};

fn main() -> vsr::Result<()> {
    let opts = GradcheckOptions::default();
    let results = run_gradchecks(&[], &opts)?;
    print!("{}", render_results(&results, opts.tolerance));

    // A deliberately wrong gradient is caught.
    let sabotaged = GradcheckOptions { sabotage: Some("lstm".into()), ..opts.clone() };
    let results = run_gradchecks(&["lstm".to_string()], &sabotaged)?;
    print!("{}", render_results(&results, opts.tolerance));
    Ok(())
}
