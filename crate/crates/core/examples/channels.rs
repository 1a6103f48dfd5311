//! Decoherence channels on a Bell state, then a small amplitude-damping
//! sweep of the exponential-saturation parameters.

use qmetro::channels::{channel_sweep, ChannelKind, ChannelSpec, SweepOptions};
use qmetro::entanglement::{concurrence, Measure};
use qmetro::states::bell_state;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let bell = bell_state();
    for kind in ChannelKind::ALL {
        let row: Vec<String> = [0.0, 0.1, 0.25, 0.5]
            .iter()
            .map(|&g| Ok(format!("{:.4}", concurrence(&ChannelSpec::new(kind, g)?.apply(&bell)?)?)))
            .collect::<Result<_, Box<dyn std::error::Error>>>()?;
        println!("{kind:<18} C at gamma 0, 0.1, 0.25, 0.5: {}", row.join(" "));
    }

    let opts = SweepOptions { bootstrap_n: 50, ..Default::default() };
    let sweep = channel_sweep(1, 1000, ChannelKind::AmplitudeDamping, &[0.0, 0.2, 0.4], Measure::Concurrence, &opts)?;
    for p in &sweep.params {
        println!("gamma {:.1}: A {:.3} alpha {:.3} B {:.3} (R2 {:.3})", p.gamma, p.a, p.alpha, p.b, p.r2);
    }
    for f in &sweep.failures {
        println!("gamma {:.1} failed: {}", f.gamma, f.reason);
    }
    Ok(())
}
