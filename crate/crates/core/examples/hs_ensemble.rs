//! Purity statistics of Hilbert-Schmidt random states.

use qmetro::seed::derive_seed;
use qmetro::states::{gen_hs_random, purity};
use qmetro::stats::{mean, percentile, std_dev};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let n = 5000;
    let p: Vec<f64> =
        (0..n).map(|i| gen_hs_random(derive_seed(42, i)).map(|r| purity(&r))).collect::<Result<_, _>>()?;
    println!("n = {n}");
    println!("mean purity   {:.4} (exact HS value 8/17 = {:.4})", mean(&p), 8.0 / 17.0);
    println!("std           {:.4}", std_dev(&p));
    println!("5% / 50% / 95%  {:.4} / {:.4} / {:.4}", percentile(&p, 0.05), percentile(&p, 0.5), percentile(&p, 0.95));
    Ok(())
}
