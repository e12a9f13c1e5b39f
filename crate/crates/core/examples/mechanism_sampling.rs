//! Samples Euclidean Laplace noise and compares its moments with the closed
//! forms: mean radius `n/ε`, radius variance `n/ε²`, per-component variance
//! `(n+1)/ε²`.
//!
//! ```text
//! cargo run --release --example mechanism_sampling [dim] [epsilon]
//! ```

use dpfl::mechanism::{density, moment_report, normalization_constant, sanitize, NoiseScale};
use dpfl::models::ParameterVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> dpfl::Result<()> {
    let mut args = std::env::args().skip(1);
    let dim: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(2);
    let epsilon: f64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(1.0);

    let scale = NoiseScale::new(epsilon, dim)?;
    println!("K = {:.6e}", normalization_constant(&scale));
    let origin = vec![0.0; dim];
    let mut unit = origin.clone();
    unit[0] = 1.0;
    println!("density at the center {:.6e}, one unit away {:.6e}", density(&origin, &origin, &scale)?, density(&unit, &origin, &scale)?);

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for check in moment_report(&scale, 100_000, &mut rng)? {
        println!(
            "{:<20} empirical {:>10.4}  closed form {:>10.4}  ({:+.2}%)",
            check.statistic,
            check.empirical,
            check.theoretical,
            100.0 * check.rel_error()
        );
    }

    let theta = ParameterVector::new(vec![1.0; dim])?;
    let released = sanitize(&theta, &scale, &mut rng)?;
    println!("sanitized {:?} -> {:?}", theta.as_slice(), released.as_slice());
    Ok(())
}
