//! The two model families on the flat parameter vector: a bias-free linear
//! map and a ReLU MLP. Shows packing, the RMSE gradient and a few rounds of
//! local SGD.

use dpfl::models::{gradient, local_update, loss, predict, Batch, LocalTraining, ModelSpec, Objective};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> dpfl::Result<()> {
    let spec = ModelSpec::hospital_default();
    println!("{spec:?}: {} parameters", spec.parameter_count());

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut params = spec.init_params(&mut rng);
    for (i, (w, b)) in spec.unpack(params.as_slice())?.iter().enumerate() {
        println!("layer {i}: weights {w:?} biases {b:?}");
    }

    // cost grows with the service index and drops toward the west
    let rows: Vec<(Vec<f64>, f64)> = (1..=4)
        .flat_map(|s| {
            [(-0.8, 0.35), (-1.1, 0.40)].map(|(lon, lat)| {
                let cost = 2.0 + 0.5 * s as f64 + 2.0 * (lon + 1.2);
                (vec![s as f64, lon, lat], cost)
            })
        })
        .collect();
    let batch = Batch::from_rows(rows)?;

    let g = gradient(&spec, &params, &batch, Objective::Rmse)?;
    println!("initial rmse {:.4}, gradient norm {:.4}", loss(&spec, &params, &batch, Objective::Rmse)?, g.iter().map(|v| v * v).sum::<f64>().sqrt());

    let training = LocalTraining {
        step_size: 0.05,
        epochs: 50,
        batch_size: 4,
        objective: Objective::Rmse,
    };
    for round in 1..=5 {
        params = local_update(&spec, &params, &batch, &training, &mut rng)?;
        println!("after {} epochs: rmse {:.4}", round * training.epochs, loss(&spec, &params, &batch, Objective::Rmse)?);
    }
    println!("prediction for service 2 at (-0.8, 0.35): {:.3}", predict(&spec, &params, &[2.0, -0.8, 0.35])?[0]);
    Ok(())
}
