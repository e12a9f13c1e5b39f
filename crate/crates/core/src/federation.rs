//! The personalized federated loop.
//!
//! Each round the server samples `U` clients without replacement and
//! broadcasts all `k` hypotheses. A client picks the hypothesis with the
//! lowest loss on its full local dataset, trains it, and releases the updated
//! vector plus Euclidean Laplace noise with `ε = n / (ν‖δ‖)`, where `δ` is its
//! own update. The server never sees `δ`, dataset sizes, or the client's
//! choice: it clusters the released vectors with k-means seeded at the current
//! hypotheses and replaces each hypothesis by the mean of its cluster. Clusters
//! that receive nothing keep their hypothesis.

use std::io::{BufRead, Write};

use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::accounting::{ClientId, LeakageEvent, PrivacyLedger};
use crate::clustering::{kmeans_from_hypotheses, ClusterAssignment, KMeansOptions};
use crate::data::ClientData;
use crate::error::{check_dim, Error, Result};
use crate::mechanism::{self, NoiseScale};
use crate::models::{self, local_update, LocalTraining, ModelSpec, Objective, ParameterVector};
use crate::rng::{self, Role};

/// Knobs of one federated run.
///
/// `hypotheses`, `noise_multiplier` and `master_seed` are normally filled in
/// per sweep cell and are not read from the `[federation]` config section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FederationConfig {
    /// Number of hypotheses `k`.
    #[serde(skip, default = "one")]
    pub hypotheses: usize,
    /// Maximum number of rounds `T`.
    pub rounds: usize,
    /// Clients sampled per round `U`.
    pub users_per_round: usize,
    pub local_epochs: usize,
    pub step_size: f64,
    pub batch_size: usize,
    #[serde(default)]
    pub objective: Objective,
    /// `ν`; zero disables sanitization.
    #[serde(skip)]
    pub noise_multiplier: f64,
    #[serde(default = "one")]
    pub validation_every: usize,
    pub validation_patience: usize,
    /// Validation clients drawn per evaluation; `None` uses all of them.
    #[serde(default)]
    pub validation_sample: Option<usize>,
    /// Clients whose next release would push them over this composed leakage
    /// are left out of sampling.
    #[serde(default)]
    pub budget_cap: Option<f64>,
    #[serde(default = "default_kmeans_iters")]
    pub kmeans_max_iters: usize,
    #[serde(default = "default_kmeans_tol")]
    pub kmeans_tol: f64,
    #[serde(skip)]
    pub master_seed: u64,
}

fn one() -> usize {
    1
}

fn default_kmeans_iters() -> usize {
    KMeansOptions::default().max_iters
}

fn default_kmeans_tol() -> f64 {
    KMeansOptions::default().tol
}

impl FederationConfig {
    /// The synthetic two-cluster setting: `k = 2, U = 7, E = 1, s = 0.1,
    /// B_s = 10, ν = 5`, patience 6 evaluations spaced 5 rounds apart.
    ///
    /// Evaluating every round stops most noisy runs long before the hypotheses
    /// arrive: a round moves them about `s` toward the fit while the averaged
    /// noise moves them several times that.
    pub fn synthetic_default() -> Self {
        FederationConfig {
            hypotheses: 2,
            rounds: 300,
            users_per_round: 7,
            local_epochs: 1,
            step_size: 0.1,
            batch_size: 10,
            objective: Objective::Rmse,
            noise_multiplier: 5.0,
            validation_every: 5,
            validation_patience: 6,
            validation_sample: None,
            budget_cap: None,
            kmeans_max_iters: default_kmeans_iters(),
            kmeans_tol: default_kmeans_tol(),
            master_seed: 0,
        }
    }

    pub fn training(&self) -> LocalTraining {
        LocalTraining {
            step_size: self.step_size,
            epochs: self.local_epochs,
            batch_size: self.batch_size,
            objective: self.objective,
        }
    }

    pub fn kmeans(&self) -> KMeansOptions {
        KMeansOptions {
            max_iters: self.kmeans_max_iters,
            tol: self.kmeans_tol,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |field: &str, msg: &str| Err(Error::config(field, msg));
        if self.hypotheses < 1 {
            return fail("hypotheses", "must be at least 1");
        }
        if self.users_per_round < 1 {
            return fail("federation.users_per_round", "must be at least 1");
        }
        if !self.step_size.is_finite() || self.step_size <= 0.0 {
            return fail("federation.step_size", "must be positive");
        }
        if self.batch_size < 1 {
            return fail("federation.batch_size", "must be at least 1");
        }
        if !self.noise_multiplier.is_finite() || self.noise_multiplier < 0.0 {
            return fail("noise_multiplier", "must be finite and nonnegative");
        }
        if self.validation_every < 1 {
            return fail("federation.validation_every", "must be at least 1");
        }
        if self.validation_sample == Some(0) {
            return fail("federation.validation_sample", "must be positive when set");
        }
        if self.budget_cap.is_some_and(|c| c.is_nan() || c < 0.0) {
            return fail("federation.budget_cap", "must be nonnegative");
        }
        Ok(())
    }

    /// Leakage of one release under this config.
    pub fn per_release_cost(&self, dimension: usize) -> f64 {
        if self.noise_multiplier > 0.0 {
            dimension as f64 / self.noise_multiplier
        } else {
            f64::INFINITY
        }
    }
}

/// The server's `k` hypotheses after `round` rounds.
#[derive(Debug, Clone, PartialEq)]
pub struct HypothesisSet {
    pub round: usize,
    pub hypotheses: Vec<ParameterVector>,
}

impl HypothesisSet {
    pub fn new(round: usize, hypotheses: Vec<ParameterVector>) -> Result<Self> {
        let n = hypotheses.first().map(ParameterVector::len).ok_or_else(|| Error::invalid("empty hypothesis set"))?;
        for h in &hypotheses {
            check_dim(n, h.len())?;
        }
        Ok(HypothesisSet { round, hypotheses })
    }

    /// `k` independent draws from the model's initializer.
    pub fn initial(spec: &ModelSpec, k: usize, master_seed: u64) -> Result<Self> {
        let mut rng = rng::stream(master_seed, Role::Hypotheses, 0, 0);
        HypothesisSet::new(0, (0..k).map(|_| spec.init_params(&mut rng)).collect())
    }

    pub fn k(&self) -> usize {
        self.hypotheses.len()
    }

    pub fn dimension(&self) -> usize {
        self.hypotheses[0].len()
    }

    /// Text form: a header line `k=<k> n=<n>`, then one space-separated vector
    /// per line. Values use the shortest representation that round-trips.
    pub fn write_text<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "k={} n={}", self.k(), self.dimension())?;
        for h in &self.hypotheses {
            let line: Vec<String> = h.as_slice().iter().map(f64::to_string).collect();
            writeln!(w, "{}", line.join(" "))?;
        }
        Ok(())
    }

    pub fn read_text<R: BufRead>(reader: R) -> Result<Self> {
        let mut lines = reader.lines();
        let header = lines.next().ok_or_else(|| Error::invalid("missing header"))??;
        let mut k = None;
        let mut n = None;
        for part in header.split_whitespace() {
            match part.split_once('=') {
                Some(("k", v)) => k = v.parse::<usize>().ok(),
                Some(("n", v)) => n = v.parse::<usize>().ok(),
                _ => {}
            }
        }
        let (k, n) = k.zip(n).ok_or_else(|| Error::invalid(format!("bad header {header:?}")))?;
        let mut hyps = Vec::with_capacity(k);
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let values = line
                .split_whitespace()
                .map(|v| v.parse::<f64>().map_err(|_| Error::invalid(format!("bad value {v:?}"))))
                .collect::<Result<Vec<_>>>()?;
            check_dim(n, values.len())?;
            hyps.push(ParameterVector::new(values)?);
        }
        check_dim(k, hyps.len())?;
        HypothesisSet::new(0, hyps)
    }
}

/// Everything a client produces in one round. Only `sanitized` leaves the
/// client; the rest stays on the client side (its ledger) or feeds simulation
/// diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientRelease {
    pub client: ClientId,
    pub chosen: usize,
    pub train_loss: f64,
    pub update_norm: f64,
    pub sanitized: ParameterVector,
    pub event: LeakageEvent,
}

/// Index of the hypothesis with the smallest loss on `data`; ties go to the
/// lowest index.
pub fn select_hypothesis(
    spec: &ModelSpec,
    hypotheses: &[ParameterVector],
    data: &models::Batch,
    objective: Objective,
) -> Result<(usize, f64)> {
    let mut best = (0, f64::INFINITY);
    for (j, h) in hypotheses.iter().enumerate() {
        let l = models::loss(spec, h, data, objective)?;
        if l < best.1 {
            best = (j, l);
        }
    }
    Ok(best)
}

/// Hypothesis selection, local training and sanitization for one client.
///
/// With `ν = 0` the updated vector is released as is and the event carries
/// infinite leakage.
pub fn client_step(
    client: &ClientData,
    hypotheses: &HypothesisSet,
    spec: &ModelSpec,
    config: &FederationConfig,
    round: usize,
    rng: &mut rng::StreamRng,
) -> Result<ClientRelease> {
    if client.data.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let (chosen, train_loss) = select_hypothesis(spec, &hypotheses.hypotheses, &client.data, config.objective)?;
    let received = &hypotheses.hypotheses[chosen];
    let updated = local_update(spec, received, &client.data, &config.training(), rng)?;
    let update_norm = updated.difference(received)?.norm();
    let n = updated.len();

    let (sanitized, event) = if config.noise_multiplier > 0.0 {
        let event = LeakageEvent::heuristic(round, chosen, update_norm, n, config.noise_multiplier)?;
        let scale = NoiseScale::new(event.epsilon, n)?;
        (mechanism::sanitize(&updated, &scale, rng)?, event)
    } else {
        (updated, LeakageEvent::unsanitized(round, chosen, update_norm))
    };
    Ok(ClientRelease {
        client: client.id,
        chosen,
        train_loss,
        update_norm,
        sanitized,
        event,
    })
}

/// k-means on the released vectors seeded at `previous`, then per-cluster
/// means. Sees nothing but the released vectors.
pub fn aggregate(
    releases: &[(ClientId, ParameterVector)],
    previous: &HypothesisSet,
    options: KMeansOptions,
) -> Result<(HypothesisSet, ClusterAssignment)> {
    let assignment = kmeans_from_hypotheses(releases, &previous.hypotheses, options)?;
    let mut next = Vec::with_capacity(previous.k());
    for (j, old) in previous.hypotheses.iter().enumerate() {
        let mean = ParameterVector::mean(
            releases
                .iter()
                .zip(&assignment.labels)
                .filter(|(_, &l)| l == j)
                .map(|((_, v), _)| v),
        )?;
        next.push(mean.unwrap_or_else(|| old.clone()));
    }
    Ok((HypothesisSet::new(previous.round + 1, next)?, assignment))
}

/// What the server observes in one round.
#[derive(Debug, Clone, PartialEq)]
pub struct ServerView {
    pub round: usize,
    /// Released vectors in ascending client-id order.
    pub releases: Vec<(ClientId, ParameterVector)>,
    pub assignment: ClusterAssignment,
    pub hypotheses: HypothesisSet,
}

/// Client-side facts of one release, kept for diagnostics and metrics.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientReport {
    pub client: ClientId,
    pub chosen: usize,
    pub update_norm: f64,
    pub leakage: f64,
    pub train_loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundRecord {
    pub server: ServerView,
    pub clients: Vec<ClientReport>,
}

impl RoundRecord {
    pub fn round(&self) -> usize {
        self.server.round
    }

    pub fn sampled(&self) -> Vec<ClientId> {
        self.server.releases.iter().map(|(c, _)| *c).collect()
    }

    pub fn mean_train_loss(&self) -> f64 {
        self.clients.iter().map(|c| c.train_loss).sum::<f64>() / self.clients.len() as f64
    }
}

/// Mutable state carried across rounds.
#[derive(Debug, Clone)]
pub struct FederationState {
    pub hypotheses: HypothesisSet,
    pub ledger: PrivacyLedger,
}

impl FederationState {
    pub fn new(hypotheses: HypothesisSet) -> Self {
        FederationState {
            hypotheses,
            ledger: PrivacyLedger::new(),
        }
    }
}

/// One round: sample, run client steps, aggregate, record leakage.
pub fn server_round(
    state: &mut FederationState,
    clients: &[ClientData],
    spec: &ModelSpec,
    config: &FederationConfig,
) -> Result<RoundRecord> {
    let round = state.hypotheses.round;
    let cost = config.per_release_cost(state.hypotheses.dimension());
    let eligible: Vec<&ClientData> = clients
        .iter()
        .filter(|c| match config.budget_cap {
            Some(cap) => state.ledger.composed(c.id) + cost <= cap + 1e-12,
            None => true,
        })
        .collect();
    if eligible.len() < config.users_per_round {
        return Err(Error::NotEnoughClients {
            available: eligible.len(),
            requested: config.users_per_round,
        });
    }

    let mut sampler = rng::stream(config.master_seed, Role::Sampling, 0, round as u64);
    let mut sampled: Vec<&ClientData> = index::sample(&mut sampler, eligible.len(), config.users_per_round)
        .into_iter()
        .map(|i| eligible[i])
        .collect();
    sampled.sort_by_key(|c| c.id);

    let hypotheses = &state.hypotheses;
    let releases: Vec<ClientRelease> = sampled
        .par_iter()
        .map(|c| {
            let mut rng = rng::stream(config.master_seed, Role::Client, c.id as u64, round as u64);
            client_step(c, hypotheses, spec, config, round, &mut rng)
        })
        .collect::<Result<_>>()?;

    let visible: Vec<(ClientId, ParameterVector)> =
        releases.iter().map(|r| (r.client, r.sanitized.clone())).collect();
    let (next, assignment) = aggregate(&visible, hypotheses, config.kmeans())?;

    let mut reports = Vec::with_capacity(releases.len());
    for (r, &cluster) in releases.into_iter().zip(&assignment.labels) {
        state.ledger.record(r.client, r.event.with_cluster(cluster))?;
        reports.push(ClientReport {
            client: r.client,
            chosen: r.chosen,
            update_norm: r.update_norm,
            leakage: r.event.leakage,
            train_loss: r.train_loss,
        });
    }
    state.hypotheses = next.clone();
    Ok(RoundRecord {
        server: ServerView {
            round,
            releases: visible,
            assignment,
            hypotheses: next,
        },
        clients: reports,
    })
}

/// Mean over validation clients of the loss at each client's best hypothesis.
pub fn validation_loss(
    clients: &[ClientData],
    hypotheses: &HypothesisSet,
    spec: &ModelSpec,
    config: &FederationConfig,
    round: usize,
) -> Result<f64> {
    if clients.is_empty() {
        return Err(Error::invalid("no validation clients"));
    }
    let chosen: Vec<&ClientData> = match config.validation_sample {
        Some(m) if m < clients.len() => {
            let mut r = rng::stream(config.master_seed, Role::Validation, 0, round as u64);
            let mut idx = index::sample(&mut r, clients.len(), m).into_vec();
            idx.sort_unstable();
            idx.into_iter().map(|i| &clients[i]).collect()
        }
        _ => clients.iter().collect(),
    };
    mean_best_loss(chosen, hypotheses, spec, config.objective)
}

fn mean_best_loss<'a, I>(clients: I, hypotheses: &HypothesisSet, spec: &ModelSpec, objective: Objective) -> Result<f64>
where
    I: IntoIterator<Item = &'a ClientData>,
{
    let (mut total, mut count) = (0.0, 0usize);
    for c in clients {
        total += select_hypothesis(spec, &hypotheses.hypotheses, &c.data, objective)?.1;
        count += 1;
    }
    Ok(total / count as f64)
}

/// One row of the metrics history.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundMetrics {
    pub round: usize,
    pub mean_train_loss: f64,
    pub validation_loss: Option<f64>,
    pub hypothesis_norms: Vec<f64>,
    /// Running max of composed leakage over releases assigned to each cluster.
    pub max_leakage: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub initial: HypothesisSet,
    pub final_hypotheses: HypothesisSet,
    /// Hypotheses of the best validation evaluation; the final set if no
    /// evaluation happened.
    pub best: HypothesisSet,
    pub best_validation_loss: Option<f64>,
    /// Loss of `best` over every validation client, ignoring any subsample.
    /// `None` without validation clients.
    pub final_validation_loss: Option<f64>,
    pub history: Vec<RoundMetrics>,
    pub rounds: Vec<RoundRecord>,
    pub ledger: PrivacyLedger,
}

/// Runs up to `config.rounds` rounds with validation-based early stopping.
pub fn run_experiment(
    train: &[ClientData],
    validation: &[ClientData],
    spec: &ModelSpec,
    config: &FederationConfig,
) -> Result<ExperimentOutcome> {
    config.validate()?;
    spec.validate()?;
    let initial = HypothesisSet::initial(spec, config.hypotheses, config.master_seed)?;
    run_from(train, validation, spec, config, initial)
}

/// [`run_experiment`] from explicit starting hypotheses.
pub fn run_from(
    train: &[ClientData],
    validation: &[ClientData],
    spec: &ModelSpec,
    config: &FederationConfig,
    initial: HypothesisSet,
) -> Result<ExperimentOutcome> {
    config.validate()?;
    check_dim(config.hypotheses, initial.k())?;
    check_dim(spec.parameter_count(), initial.dimension())?;
    let k = initial.k();
    let mut state = FederationState::new(initial.clone());
    let mut history = Vec::new();
    let mut rounds = Vec::new();
    let mut best: Option<(f64, HypothesisSet)> = None;
    let mut stale = 0;
    let mut max_leakage = vec![0.0f64; k];

    for t in 0..config.rounds {
        let record = server_round(&mut state, train, spec, config)?;
        for (c, &cluster) in record.sampled().iter().zip(&record.server.assignment.labels) {
            max_leakage[cluster] = max_leakage[cluster].max(state.ledger.composed(*c));
        }

        let validation_loss = if (t + 1) % config.validation_every == 0 {
            let v = validation_loss(validation, &state.hypotheses, spec, config, t)?;
            if best.as_ref().is_none_or(|(b, _)| v < *b) {
                best = Some((v, state.hypotheses.clone()));
                stale = 0;
            } else {
                stale += 1;
            }
            Some(v)
        } else {
            None
        };

        history.push(RoundMetrics {
            round: t,
            mean_train_loss: record.mean_train_loss(),
            validation_loss,
            hypothesis_norms: state.hypotheses.hypotheses.iter().map(ParameterVector::norm).collect(),
            max_leakage: max_leakage.clone(),
        });
        rounds.push(record);
        if validation_loss.is_some() && stale >= config.validation_patience {
            break;
        }
    }

    let final_hypotheses = state.hypotheses;
    let (best_validation_loss, best) = match best {
        Some((v, h)) => (Some(v), h),
        None => (None, final_hypotheses.clone()),
    };
    let final_validation_loss = if validation.is_empty() {
        None
    } else {
        Some(mean_best_loss(validation, &best, spec, config.objective)?)
    };
    Ok(ExperimentOutcome {
        initial,
        final_hypotheses,
        best,
        best_validation_loss,
        final_validation_loss,
        history,
        rounds,
        ledger: state.ledger,
    })
}

/// Metrics history as CSV: `round,mean_train_loss,validation_loss`, then
/// `hypothesis_norm_<j>` and `max_leakage_cluster_<j>` for each hypothesis.
/// Rounds without an evaluation leave `validation_loss` empty.
pub fn write_metrics_csv<W: Write>(history: &[RoundMetrics], k: usize, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["round".to_string(), "mean_train_loss".into(), "validation_loss".into()];
    header.extend((0..k).map(|j| format!("hypothesis_norm_{j}")));
    header.extend((0..k).map(|j| format!("max_leakage_cluster_{j}")));
    w.write_record(&header)?;
    for m in history {
        let mut row = vec![
            m.round.to_string(),
            m.mean_train_loss.to_string(),
            m.validation_loss.map(|v| v.to_string()).unwrap_or_default(),
        ];
        row.extend(m.hypothesis_norms.iter().map(f64::to_string));
        row.extend(m.max_leakage.iter().map(f64::to_string));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
