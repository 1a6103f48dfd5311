//! Concurrence, negativity and relative entropy of entanglement along the
//! Werner family.

use qmetro::entanglement::{concurrence, negativity, ree, ReeConfig};
use qmetro::states::werner;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = ReeConfig::default();
    println!("{:>5} {:>10} {:>10} {:>10} {:>10}", "p", "C", "N", "REE", "REE exact");
    for i in 0..=10 {
        let p = i as f64 / 10.0;
        let rho = werner(p)?;
        let r = ree(&rho, &cfg, 7)?;
        // Werner REE: 1 - h((1+3p)/4) for p > 1/3, with h the binary entropy.
        let f = (1.0 + 3.0 * p) / 4.0;
        let h = |x: f64| if x <= 0.0 || x >= 1.0 { 0.0 } else { -x * x.log2() - (1.0 - x) * (1.0 - x).log2() };
        let exact = if p > 1.0 / 3.0 { 1.0 - h(f) } else { 0.0 };
        println!("{p:>5.1} {:>10.6} {:>10.6} {:>10.6} {:>10.6}", concurrence(&rho)?, negativity(&rho)?, r.value, exact);
    }
    Ok(())
}
