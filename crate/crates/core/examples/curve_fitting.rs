//! Model comparison, cross-validation and bootstrap on synthetic
//! saturation data.

use qmetro::seed::rng_from_seed;
use qmetro::stats::{bin_series, bootstrap_fit, fit_model, kfold_cv, ModelKind, Rebin, SparseBins};
use rand::Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = rng_from_seed(4);
    let x: Vec<f64> = (0..4000).map(|_| rng.random::<f64>()).collect();
    let y: Vec<f64> =
        x.iter().map(|&v| 0.75 * (1.0 - (-2.3 * v).exp()) + 0.19 + 0.05 * (rng.random::<f64>() - 0.5)).collect();

    let bins = bin_series(&x, &y, 25, 30)?;
    println!("{:<24} {:>8} {:>8} {:>10}", "model", "R2", "R2_cv", "AIC");
    for model in ModelKind::COMPARISON {
        let fit = fit_model(model, &bins.x(), &bins.y(), Some(&bins.weights()))?;
        let cv = kfold_cv(model, &bins.x(), &bins.y(), Some(&bins.weights()), 5, 1)?;
        println!("{:<24} {:>8.5} {:>8.5} {:>10.2}", model.name(), fit.r2, cv, fit.aic);
    }

    let rebin = Rebin { n_bins: 25, min_occupancy: 30, sparse: SparseBins::Merge };
    let boot = bootstrap_fit(ModelKind::ExponentialSaturation, &x, &y, 200, 9, Some(rebin))?;
    for p in &boot.params {
        println!("{:<6} {:.4} [{:.4}, {:.4}]", p.name, p.mean, p.ci_low, p.ci_high);
    }
    println!("p(B = 0) = {:.2e}", boot.zero_p_value("B").unwrap_or(f64::NAN));
    Ok(())
}
