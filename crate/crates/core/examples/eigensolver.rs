//! Jacobi eigendecomposition of a random Hermitian 4x4 and the partial
//! transpose spectrum of a Bell state.

use qmetro::linalg::{kron, partial_transpose_a, pauli_x, pauli_z, singular_values, CMat, C64};
use qmetro::states::bell_state;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let h = kron(&pauli_x(), &pauli_z())? + kron(&pauli_z(), &pauli_z())?.scale(0.5);
    let eig = h.eigh()?;
    println!("spectrum of X(x)Z + Z(x)Z/2: {:?}", eig.eigenvalues);
    println!("reconstruction error: {:.2e}", eig.reconstruct().max_abs_diff(&h));

    let entries: Vec<C64> = (0..16).map(|k| C64::new((k % 5) as f64, (k % 3) as f64 - 1.0)).collect();
    let m = CMat::from_row_major(&entries)?;
    println!("singular values of a dense complex matrix: {:?}", singular_values(&m)?);

    let pt = partial_transpose_a(bell_state().mat())?;
    println!("partial transpose of a Bell state: {:?}", pt.eigh()?.eigenvalues);
    Ok(())
}
