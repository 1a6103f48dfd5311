//! QFI and its maximum over local unitaries for a few reference states.

use qmetro::metrology::diagonal_pauli_generators;
use qmetro::metrology::{mqfi, pauli_product_generator, qfi, verify_generator_independence, Axis, MqfiConfig};
use qmetro::states::{bell_state, gen_hs_random, product_state, werner};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let h = pauli_product_generator(Axis::Z, Axis::Z);
    let cfg = MqfiConfig::default();
    let states = [
        ("bell", bell_state()),
        ("werner 0.5", werner(0.5)?),
        ("product |+>|0>", product_state(&[1.0, 0.0, 0.0], &[0.0, 0.0, 1.0])?),
        ("hs seed 3", gen_hs_random(3)?),
    ];
    for (name, rho) in &states {
        let m = mqfi(rho, &h, &cfg, 11)?;
        println!(
            "{name:<16} QFI {:.6}  MQFI {:.6}  restarts {:?}",
            qfi(rho, &h)?,
            m.value,
            m.restart_values.iter().map(|v| format!("{v:.4}")).collect::<Vec<_>>()
        );
    }
    let spread = verify_generator_independence(&states[3].1, &diagonal_pauli_generators(), &cfg, 5)?;
    println!("spread over XX, YY, ZZ for the HS state: {spread:.2e}");
    Ok(())
}
