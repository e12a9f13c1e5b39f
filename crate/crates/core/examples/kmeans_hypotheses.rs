//! Server-side clustering of released vectors, seeded at the current
//! hypotheses, followed by the per-cluster model average.

use dpfl::clustering::{kmeans_from_hypotheses, KMeansOptions};
use dpfl::mechanism::{sanitize, NoiseScale};
use dpfl::models::ParameterVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> dpfl::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let truth = [[5.0, 6.0], [4.0, -4.5]];
    let hypotheses = vec![ParameterVector::new(vec![3.0, 3.0])?, ParameterVector::new(vec![3.0, -3.0])?];

    // twelve clients, each releasing its update plus noise scaled to a 0.1 step
    let scale = NoiseScale::new(2.0 / (5.0 * 0.1), 2)?;
    let mut points = Vec::new();
    for client in 0..12 {
        let center = truth[client % 2];
        let updated = ParameterVector::new(vec![center[0] + rng.random_range(-0.3..0.3), center[1] + rng.random_range(-0.3..0.3)])?;
        points.push((client, sanitize(&updated, &scale, &mut rng)?));
    }

    let result = kmeans_from_hypotheses(&points, &hypotheses, KMeansOptions::default())?;
    println!("converged after {} iterations, inertia trace {:?}", result.iterations, result.inertia);
    for (j, (members, centroid)) in result.members.iter().zip(&result.centroids).enumerate() {
        println!("hypothesis {j}: clients {members:?} -> {:.3?}", centroid.as_slice());
    }
    Ok(())
}
