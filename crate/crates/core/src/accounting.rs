//! Per-client privacy-leakage bookkeeping.
//!
//! A release with mechanism parameter `ε` protects every point within distance
//! `r` of the released vector at level `ε·r`. Choosing `ε = n / (ν‖δ‖)` for an
//! update `δ` makes each release cost exactly `n/ν` inside the `‖δ‖`
//! neighborhood, independent of the update itself. Independent releases
//! compose additively, so a client's total is the sum over its events.

use std::collections::BTreeMap;
use std::io::Write;

use crate::error::{Error, Result};

pub type ClientId = usize;

/// Radius substituted for an exactly zero update norm.
pub const RADIUS_FLOOR: f64 = 1e-9;

/// `ε = n / (ν · update_norm)`.
///
/// Fails with [`Error::DegenerateUpdate`] for a zero norm; callers substitute
/// [`RADIUS_FLOOR`].
pub fn heuristic_epsilon(update_norm: f64, dimension: usize, noise_multiplier: f64) -> Result<f64> {
    if !noise_multiplier.is_finite() || noise_multiplier <= 0.0 {
        return Err(Error::invalid("noise multiplier must be positive and finite"));
    }
    if dimension == 0 {
        return Err(Error::invalid("dimension must be at least 1"));
    }
    if !update_norm.is_finite() || update_norm < 0.0 {
        return Err(Error::invalid(format!("update norm must be finite and nonnegative, got {update_norm}")));
    }
    if update_norm == 0.0 {
        return Err(Error::DegenerateUpdate);
    }
    Ok(dimension as f64 / (noise_multiplier * update_norm))
}

/// One release by one client.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LeakageEvent {
    pub round: usize,
    /// Server-side cluster the release was assigned to.
    pub cluster: usize,
    pub epsilon: f64,
    /// Neighborhood radius `‖δ‖` the guarantee is stated for.
    pub radius: f64,
    /// `ε · radius`; `+∞` for unsanitized releases.
    pub leakage: f64,
}

impl LeakageEvent {
    /// Event for an arbitrary `(ε, r)` pair; leakage is `ε·r`.
    pub fn new(round: usize, cluster: usize, epsilon: f64, radius: f64) -> Result<Self> {
        if epsilon.is_nan() || epsilon <= 0.0 || !radius.is_finite() || radius < 0.0 {
            return Err(Error::invalid("event needs epsilon > 0 and a finite radius >= 0"));
        }
        Ok(LeakageEvent {
            round,
            cluster,
            epsilon,
            radius,
            leakage: epsilon * radius,
        })
    }

    /// Event for a release calibrated with [`heuristic_epsilon`]. A zero update
    /// norm is replaced by [`RADIUS_FLOOR`]; the leakage is `n/ν` either way.
    pub fn heuristic(
        round: usize,
        cluster: usize,
        update_norm: f64,
        dimension: usize,
        noise_multiplier: f64,
    ) -> Result<Self> {
        let (epsilon, radius) = match heuristic_epsilon(update_norm, dimension, noise_multiplier) {
            Ok(eps) => (eps, update_norm),
            Err(Error::DegenerateUpdate) => (
                heuristic_epsilon(RADIUS_FLOOR, dimension, noise_multiplier)?,
                RADIUS_FLOOR,
            ),
            Err(e) => return Err(e),
        };
        Ok(LeakageEvent {
            round,
            cluster,
            epsilon,
            radius,
            leakage: dimension as f64 / noise_multiplier,
        })
    }

    /// Release sent without noise: no guarantee, infinite leakage.
    pub fn unsanitized(round: usize, cluster: usize, radius: f64) -> Self {
        LeakageEvent {
            round,
            cluster,
            epsilon: f64::INFINITY,
            radius,
            leakage: f64::INFINITY,
        }
    }

    pub fn with_cluster(self, cluster: usize) -> Self {
        LeakageEvent { cluster, ..self }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
struct ClientHistory {
    // sorted by round
    events: Vec<LeakageEvent>,
    composed: f64,
}

/// Composed leakage of every client that has released at least once.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PrivacyLedger {
    clients: BTreeMap<ClientId, ClientHistory>,
}

impl PrivacyLedger {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends `event` for `client`. Rejects a second event for the same round.
    pub fn record(&mut self, client: ClientId, event: LeakageEvent) -> Result<()> {
        let history = self.clients.entry(client).or_default();
        let pos = match history.events.binary_search_by_key(&event.round, |e| e.round) {
            Ok(_) => {
                return Err(Error::DuplicateEvent {
                    client,
                    round: event.round,
                })
            }
            Err(pos) => pos,
        };
        history.events.insert(pos, event);
        // summing in round order keeps the total independent of insertion order
        history.composed = history.events.iter().map(|e| e.leakage).sum();
        Ok(())
    }

    /// Convenience wrapper building a plain `ε·r` event.
    pub fn record_participation(
        &mut self,
        client: ClientId,
        round: usize,
        cluster: usize,
        epsilon: f64,
        radius: f64,
    ) -> Result<()> {
        self.record(client, LeakageEvent::new(round, cluster, epsilon, radius)?)
    }

    /// Total leakage of `client`; zero if it never participated.
    pub fn composed(&self, client: ClientId) -> f64 {
        self.clients.get(&client).map_or(0.0, |h| h.composed)
    }

    pub fn events(&self, client: ClientId) -> &[LeakageEvent] {
        self.clients.get(&client).map_or(&[], |h| &h.events)
    }

    pub fn participations(&self, client: ClientId) -> usize {
        self.events(client).len()
    }

    pub fn clients(&self) -> impl Iterator<Item = ClientId> + '_ {
        self.clients.keys().copied()
    }

    pub fn is_empty(&self) -> bool {
        self.clients.is_empty()
    }

    pub fn total_events(&self) -> usize {
        self.clients.values().map(|h| h.events.len()).sum()
    }

    /// Leakage of `client` re-expressed for a neighborhood of radius `r`:
    /// `Σ εᵢ · r`.
    pub fn leakage_at_radius(&self, client: ClientId, radius: f64) -> f64 {
        self.events(client).iter().map(|e| e.epsilon * radius).sum()
    }

    /// Cluster of the client's most recent release.
    pub fn latest_cluster(&self, client: ClientId) -> Option<usize> {
        self.events(client).last().map(|e| e.cluster)
    }

    /// Median and maximum composed leakage, overall and per cluster, plus the
    /// per-round running maximum of each cluster.
    pub fn summary(&self) -> LedgerSummary {
        let mut overall = Vec::new();
        let mut by_cluster: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
        let mut last_round = None;
        for (&client, h) in &self.clients {
            overall.push(h.composed);
            if let Some(c) = self.latest_cluster(client) {
                by_cluster.entry(c).or_default().push(h.composed);
            }
            last_round = last_round.max(h.events.last().map(|e| e.round));
        }

        // composed total right after each event, keyed by (round, cluster)
        let mut peaks: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        let mut clusters: Vec<usize> = Vec::new();
        for h in self.clients.values() {
            let mut running = 0.0f64;
            for e in &h.events {
                running += e.leakage;
                let slot: &mut f64 = peaks.entry((e.round, e.cluster)).or_insert(0.0);
                *slot = f64::max(*slot, running);
                if !clusters.contains(&e.cluster) {
                    clusters.push(e.cluster);
                }
            }
        }
        clusters.sort_unstable();

        let mut trajectory = Vec::new();
        if let Some(last) = last_round {
            let mut current = vec![0.0f64; clusters.len()];
            for round in 0..=last {
                for (slot, &c) in current.iter_mut().zip(&clusters) {
                    if let Some(&p) = peaks.get(&(round, c)) {
                        *slot = f64::max(*slot, p);
                    }
                }
                trajectory.push(RoundMaxima {
                    round,
                    per_cluster: clusters.iter().copied().zip(current.iter().copied()).collect(),
                });
            }
        }

        LedgerSummary {
            overall: BudgetStats::from_values(overall),
            per_cluster: by_cluster
                .into_iter()
                .map(|(c, v)| (c, BudgetStats::from_values(v)))
                .collect(),
            trajectory,
        }
    }

    /// CSV with columns
    /// `client_id,cluster_id,round,epsilon,radius,leakage,composed_leakage`,
    /// ordered by client then round; `composed_leakage` is the running total.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "client_id",
            "cluster_id",
            "round",
            "epsilon",
            "radius",
            "leakage",
            "composed_leakage",
        ])?;
        for (&client, h) in &self.clients {
            let mut running = 0.0f64;
            for e in &h.events {
                running += e.leakage;
                w.write_record([
                    client.to_string(),
                    e.cluster.to_string(),
                    e.round.to_string(),
                    e.epsilon.to_string(),
                    e.radius.to_string(),
                    e.leakage.to_string(),
                    running.to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Median and maximum of a set of composed budgets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BudgetStats {
    pub clients: usize,
    pub median: f64,
    pub max: f64,
}

impl BudgetStats {
    /// Zero clients yield NaN median and max.
    pub fn from_values(mut values: Vec<f64>) -> Self {
        values.sort_by(f64::total_cmp);
        let len = values.len();
        let median = match len {
            0 => f64::NAN,
            _ if len % 2 == 1 => values[len / 2],
            _ => {
                let (a, b) = (values[len / 2 - 1], values[len / 2]);
                if a == b {
                    a
                } else {
                    (a + b) / 2.0
                }
            }
        };
        BudgetStats {
            clients: len,
            median,
            max: values.last().copied().unwrap_or(f64::NAN),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundMaxima {
    pub round: usize,
    /// `(cluster, running max)` in ascending cluster order.
    pub per_cluster: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LedgerSummary {
    pub overall: BudgetStats,
    /// Keyed by each client's most recent cluster.
    pub per_cluster: BTreeMap<usize, BudgetStats>,
    /// Running maximum of composed leakage over releases assigned to each
    /// cluster, for every round from 0 through the last recorded one.
    pub trajectory: Vec<RoundMaxima>,
}

impl LedgerSummary {
    pub fn is_empty(&self) -> bool {
        self.overall.clients == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn heuristic_epsilon_values() {
        let eps = heuristic_epsilon(1.0, 2, 5.0).unwrap();
        assert!((eps - 0.4).abs() < 1e-15);
        let eps = heuristic_epsilon(0.5, 11, 1.0).unwrap();
        assert!((eps - 22.0).abs() < 1e-12);
        assert!((eps * 0.5 - 11.0).abs() < 1e-12);
        assert!(matches!(heuristic_epsilon(0.0, 2, 5.0), Err(Error::DegenerateUpdate)));
        assert!(heuristic_epsilon(1.0, 2, 0.0).is_err());
        assert!(heuristic_epsilon(-1.0, 2, 1.0).is_err());
    }

    #[test]
    fn zero_norm_uses_radius_floor() {
        let e = LeakageEvent::heuristic(0, 0, 0.0, 2, 5.0).unwrap();
        assert_eq!(e.radius, RADIUS_FLOOR);
        assert_eq!(e.leakage, 0.4);
        assert!(((e.epsilon * e.radius) - 0.4).abs() < 1e-12);
    }

    #[test]
    fn heuristic_events_match_epsilon_times_radius() {
        for r in [1e-6, 0.013, 1.0, 7.5, 1e4] {
            let e = LeakageEvent::heuristic(3, 1, r, 11, 3.0).unwrap();
            assert!((e.epsilon * e.radius - e.leakage).abs() <= 1e-12 * e.leakage);
        }
    }

    #[test]
    fn composition_is_additive() {
        let mut ledger = PrivacyLedger::new();
        assert_eq!(ledger.composed(7), 0.0);
        for round in 0..3 {
            ledger.record(7, LeakageEvent::heuristic(round, 0, 0.3 + round as f64, 2, 5.0).unwrap()).unwrap();
        }
        assert!((ledger.composed(7) - 1.2).abs() < 1e-12);
        for round in 3..6 {
            ledger.record(7, LeakageEvent::heuristic(round, 0, 2.0, 2, 5.0).unwrap()).unwrap();
        }
        assert_eq!(ledger.composed(7), 2.4);
        assert_eq!(ledger.participations(7), 6);
    }

    #[test]
    fn duplicate_round_is_rejected() {
        let mut ledger = PrivacyLedger::new();
        ledger.record_participation(1, 4, 0, 0.4, 1.0).unwrap();
        let err = ledger.record_participation(1, 4, 0, 0.4, 1.0).unwrap_err();
        assert!(matches!(err, Error::DuplicateEvent { client: 1, round: 4 }));
        ledger.record_participation(2, 4, 0, 0.4, 1.0).unwrap();
    }

    #[test]
    fn leakage_can_be_reexpressed_for_other_radii() {
        let mut ledger = PrivacyLedger::new();
        ledger.record_participation(0, 0, 0, 2.0, 0.5).unwrap();
        ledger.record_participation(0, 1, 0, 4.0, 0.25).unwrap();
        assert_eq!(ledger.composed(0), 2.0);
        assert_eq!(ledger.leakage_at_radius(0, 1.0), 6.0);
    }

    #[test]
    fn unsanitized_releases_are_infinite() {
        let mut ledger = PrivacyLedger::new();
        ledger.record(0, LeakageEvent::unsanitized(0, 0, 0.7)).unwrap();
        assert!(ledger.composed(0).is_infinite());
        assert!(ledger.summary().overall.max.is_infinite());
    }

    #[test]
    fn summary_single_participation() {
        let mut ledger = PrivacyLedger::new();
        for c in 0..10 {
            ledger.record(c, LeakageEvent::heuristic(c, 0, 1.0, 2, 5.0).unwrap()).unwrap();
        }
        let s = ledger.summary();
        assert_eq!(s.overall.median, 0.4);
        assert_eq!(s.overall.max, 0.4);
    }

    #[test]
    fn summary_with_one_heavy_client() {
        let mut ledger = PrivacyLedger::new();
        for round in 0..6 {
            ledger.record(0, LeakageEvent::heuristic(round, 0, 1.0, 2, 5.0).unwrap()).unwrap();
        }
        for c in 1..8 {
            ledger.record(c, LeakageEvent::heuristic(c, 0, 1.0, 2, 5.0).unwrap()).unwrap();
        }
        let s = ledger.summary();
        assert_eq!(s.overall.max, 2.4);
        assert_eq!(s.overall.median, 0.4);
        assert_eq!(s.overall.clients, 8);
    }

    #[test]
    fn per_cluster_max_only_sees_members() {
        let mut ledger = PrivacyLedger::new();
        for round in 0..4 {
            ledger.record(0, LeakageEvent::heuristic(round, 0, 1.0, 2, 5.0).unwrap()).unwrap();
        }
        ledger.record(1, LeakageEvent::heuristic(0, 1, 1.0, 2, 5.0).unwrap()).unwrap();
        ledger.record(2, LeakageEvent::heuristic(1, 1, 1.0, 2, 5.0).unwrap()).unwrap();
        let s = ledger.summary();
        assert!((s.per_cluster[&0].max - 1.6).abs() < 1e-12);
        assert_eq!(s.per_cluster[&1].max, 0.4);
        assert_eq!(s.per_cluster[&1].clients, 2);
    }

    #[test]
    fn empty_ledger_has_empty_summary() {
        let s = PrivacyLedger::new().summary();
        assert!(s.is_empty());
        assert!(s.per_cluster.is_empty());
        assert!(s.trajectory.is_empty());
    }

    #[test]
    fn trajectory_plateaus_when_leader_is_idle() {
        let mut ledger = PrivacyLedger::new();
        // client 0 leads cluster 0 and sits out rounds 2..=3
        for round in [0, 1, 4] {
            ledger.record(0, LeakageEvent::heuristic(round, 0, 1.0, 2, 5.0).unwrap()).unwrap();
        }
        ledger.record(1, LeakageEvent::heuristic(2, 0, 1.0, 2, 5.0).unwrap()).unwrap();
        let t = ledger.summary().trajectory;
        let series: Vec<f64> = t.iter().map(|r| r.per_cluster[0].1).collect();
        assert_eq!(series.len(), 5);
        assert_eq!(series[2], series[1]);
        assert_eq!(series[3], series[1]);
        assert!(series[4] > series[3]);
    }

    #[test]
    fn csv_export_columns_and_running_total() {
        let mut ledger = PrivacyLedger::new();
        ledger.record(3, LeakageEvent::heuristic(0, 1, 2.0, 2, 5.0).unwrap()).unwrap();
        ledger.record(3, LeakageEvent::heuristic(2, 0, 1.0, 2, 5.0).unwrap()).unwrap();
        let mut buf = Vec::new();
        ledger.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "client_id,cluster_id,round,epsilon,radius,leakage,composed_leakage");
        assert_eq!(lines[1], "3,1,0,0.2,2,0.4,0.4");
        assert_eq!(lines[2], "3,0,2,0.4,1,0.4,0.8");
    }

    proptest! {
        #[test]
        fn composed_total_is_order_independent(
            leaks in proptest::collection::vec((0.0f64..10.0, 0.01f64..5.0), 1..30),
            seed in any::<u64>(),
        ) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let events: Vec<LeakageEvent> = leaks
                .iter()
                .enumerate()
                .map(|(round, &(eps, r))| LeakageEvent::new(round, 0, eps + 1e-3, r).unwrap())
                .collect();
            let mut shuffled = events.clone();
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let mut a = PrivacyLedger::new();
            let mut b = PrivacyLedger::new();
            for e in &events { a.record(0, *e).unwrap(); }
            let mut prev = 0.0;
            for e in &shuffled {
                b.record(0, *e).unwrap();
                prop_assert!(b.composed(0) >= prev);
                prev = b.composed(0);
            }
            prop_assert_eq!(a.composed(0), b.composed(0));
            let direct: f64 = events.iter().map(|e| e.leakage).sum();
            prop_assert!((a.composed(0) - direct).abs() <= 1e-12 * direct.max(1.0));
        }

        #[test]
        fn heuristic_cost_is_n_over_nu(norm in 1e-8f64..1e6, n in 1usize..1000, nu in 0.01f64..100.0) {
            let e = LeakageEvent::heuristic(0, 0, norm, n, nu).unwrap();
            prop_assert_eq!(e.leakage, n as f64 / nu);
            prop_assert!((e.epsilon * e.radius - e.leakage).abs() <= 1e-12 * e.leakage);
        }
    }
}
