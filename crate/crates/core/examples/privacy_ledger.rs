//! Per-client leakage accounting: each release calibrated with the
//! noise-multiplier heuristic costs `n/ν`, and costs add up across rounds.

use dpfl::accounting::{heuristic_epsilon, LeakageEvent, PrivacyLedger};

fn main() -> dpfl::Result<()> {
    let (n, nu) = (2, 5.0);
    let mut ledger = PrivacyLedger::new();

    // (client, round, cluster, update norm)
    let releases = [
        (0, 0, 0, 0.12),
        (1, 0, 1, 0.08),
        (0, 2, 0, 0.30),
        (2, 3, 1, 0.05),
        (0, 5, 0, 0.01),
        (1, 5, 1, 0.0),
    ];
    for (client, round, cluster, norm) in releases {
        let event = LeakageEvent::heuristic(round, cluster, norm, n, nu)?;
        println!(
            "client {client} round {round}: eps = {:.3}, radius = {:.2e}, leakage = {:.2}",
            event.epsilon, event.radius, event.leakage
        );
        ledger.record(client, event)?;
    }
    println!("eps for a 0.1 update: {}", heuristic_epsilon(0.1, n, nu)?);

    for id in ledger.clients() {
        println!("client {id}: {} releases, composed {:.2}", ledger.participations(id), ledger.composed(id));
    }
    let summary = ledger.summary();
    println!("median {:.2}, max {:.2}", summary.overall.median, summary.overall.max);
    for step in &summary.trajectory {
        println!("round {}: per-cluster max {:?}", step.round, step.per_cluster);
    }

    ledger.write_csv(std::io::stdout().lock())?;
    Ok(())
}
