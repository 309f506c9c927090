//! Round loop: sampling, local training, attack injection, aggregation and
//! evaluation.
//!
//! All randomness comes from counter-derived streams (see [`crate::rng`]), so
//! results do not depend on how many threads train clients in parallel.

use std::collections::BTreeMap;

use rand::seq::index;
use rayon::prelude::*;

use crate::aggregation::{AggregatorKind, ClientUpdate};
use crate::attacks::baselines::{
    fang_krum_craft, fang_trmean_craft, lie_craft, minmax_craft, minsum_craft, mpaf_craft, poisonedfl_craft,
    PoisonedFlDirection,
};
use crate::attacks::{xfed_craft, CraftStatus, DeltaHistory};
use crate::config::{AttackKind, ExperimentConfig, ServerKind, Setting};
use crate::data::{partition_iid, partition_noniid, sample_root, Dataset, Partition, PartitionConfig, RootDatasetConfig};
use crate::defenses::{DefenseState, RootContext};
use crate::error::{FedError, Result};
use crate::model::{evaluate, init_model, local_update, ModelSpec};
use crate::param::ParamVector;
use crate::rng::{self, derive_seed, Domain, RngStream};

/// Environment variable capping the number of training threads.
pub const THREADS_ENV: &str = "FEDSIM_THREADS";

#[derive(Debug, Clone, PartialEq)]
pub struct RoundRecord {
    /// 1-based round index.
    pub round: usize,
    pub accuracy: f64,
    /// Sorted ids of everyone who submitted, fake clients included.
    pub participants: Vec<usize>,
    /// Updates the server kept (or weighted above zero).
    pub retained: usize,
    /// Mean XFED perturbation magnitude over attackers that crafted this round.
    pub mean_mu: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub records: Vec<RoundRecord>,
    /// Mean accuracy over the final `ceil(0.1 * T)` rounds.
    pub accuracy: f64,
    pub digest: String,
    pub base_digest: String,
}

/// Size of the final-rounds averaging window.
pub fn window_len(rounds: usize) -> usize {
    (rounds as f64 * 0.1).ceil() as usize
}

/// Mean accuracy over the final `ceil(0.1 * T)` records.
pub fn window_accuracy(records: &[RoundRecord]) -> f64 {
    let w = window_len(records.len()).max(1).min(records.len());
    if w == 0 {
        return 0.0;
    }
    records[records.len() - w..].iter().map(|r| r.accuracy).sum::<f64>() / w as f64
}

/// `I = A - A*`. Both results must come from configs that differ only in the attack.
pub fn compute_attack_impact(no_attack: &ExperimentResult, attacked: &ExperimentResult) -> Result<f64> {
    if no_attack.base_digest != attacked.base_digest {
        return Err(FedError::Comparison(format!(
            "base digests differ ({} vs {})",
            no_attack.base_digest, attacked.base_digest
        )));
    }
    Ok(no_attack.accuracy - attacked.accuracy)
}

/// Sorted participant ids out of `0..clients`.
pub fn sample_clients(setting: Setting, clients: usize, rng: &mut RngStream) -> Vec<usize> {
    match setting {
        Setting::CrossSilo => (0..clients).collect(),
        Setting::CrossDevice { participation } => {
            let n = ((participation * clients as f64).ceil() as usize).clamp(1, clients);
            let mut ids = index::sample(rng, clients, n).into_vec();
            ids.sort_unstable();
            ids
        }
    }
}

/// The first `count` ids of a seeded shuffle of `0..clients`, sorted.
pub fn choose_malicious(clients: usize, count: usize, seed: u64) -> Vec<usize> {
    let mut ids = index::sample(&mut rng::stream(seed, Domain::Malicious, 0, 0), clients, count).into_vec();
    ids.sort_unstable();
    ids
}

enum Server {
    Rule(AggregatorKind),
    Defense(Box<DefenseState>),
}

/// A running experiment.
pub struct Simulation {
    cfg: ExperimentConfig,
    spec: ModelSpec,
    train: Dataset,
    test: Dataset,
    partition: Partition,
    theta: ParamVector,
    malicious: Vec<usize>,
    fakes: Vec<usize>,
    server: Server,
    /// Per-attacker view of past global deltas, keyed by client id.
    histories: BTreeMap<usize, DeltaHistory>,
    /// Shared by all fake clients.
    fake_history: DeltaHistory,
    mpaf_base: Option<ParamVector>,
    poisonedfl_direction: Option<PoisonedFlDirection>,
    round: usize,
}

impl Simulation {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let seed = cfg.seed;
        let (train, test) = cfg
            .data
            .load(derive_seed(seed, Domain::Data, 0, 0), derive_seed(seed, Domain::Data, 1, 0))?;
        let spec = cfg.model.spec(train.dim(), train.classes())?;
        let partition_seed = derive_seed(seed, Domain::Partition, 0, 0);
        let partition = match cfg.partition.non_iid {
            Some(p) => partition_noniid(
                &train,
                &PartitionConfig {
                    p,
                    groups: train.classes(),
                    clients: cfg.clients,
                    seed: partition_seed,
                },
            )?,
            None => partition_iid(train.len(), cfg.clients, partition_seed)?,
        };
        let theta = init_model(&spec, derive_seed(seed, Domain::Init, 0, 0));

        let server = match cfg.server.kind.aggregator() {
            Some(kind) => Server::Rule(kind),
            None => Server::Defense(Box::new(match cfg.server.kind {
                ServerKind::Fltrust => {
                    let root = sample_root(
                        &train,
                        &RootDatasetConfig {
                            size: cfg.server.root_size,
                            bias: cfg.server.root_bias,
                            seed: derive_seed(seed, Domain::Root, 0, 0),
                        },
                    )?;
                    DefenseState::fltrust(RootContext {
                        data: root,
                        spec: spec.clone(),
                        training: cfg.training,
                    })?
                }
                ServerKind::Flame => DefenseState::flame(cfg.server.outlier),
                ServerKind::Foolsgold => DefenseState::foolsgold(),
                ServerKind::Freqfed => DefenseState::freqfed(cfg.server.freq_cutoff)?,
                _ => unreachable!("aggregator kinds handled above"),
            })),
        };

        let malicious = choose_malicious(cfg.clients, cfg.malicious_count(), seed);
        let fakes: Vec<usize> = (cfg.clients..cfg.clients + cfg.fake_count()).collect();
        let omega = cfg.attack.xfed.omega;
        let histories = malicious
            .iter()
            .map(|&id| Ok((id, DeltaHistory::new(omega)?)))
            .collect::<Result<_>>()?;
        let mpaf_base = (cfg.attack.kind == AttackKind::Mpaf)
            .then(|| init_model(&spec, derive_seed(seed, Domain::MpafBase, 0, 0)));
        let poisonedfl_direction = (cfg.attack.kind == AttackKind::Poisonedfl).then(|| {
            PoisonedFlDirection::random(spec.dim(), &mut rng::stream(seed, Domain::PoisonedFlDirection, 0, 0))
        });

        Ok(Simulation {
            cfg: cfg.clone(),
            spec,
            train,
            test,
            partition,
            theta,
            malicious,
            fakes,
            server,
            histories,
            fake_history: DeltaHistory::new(omega)?,
            mpaf_base,
            poisonedfl_direction,
            round: 0,
        })
    }

    pub fn theta(&self) -> &ParamVector {
        &self.theta
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn partition(&self) -> &Partition {
        &self.partition
    }

    pub fn train_data(&self) -> &Dataset {
        &self.train
    }

    pub fn test_data(&self) -> &Dataset {
        &self.test
    }

    /// Ids of compromised genuine clients.
    pub fn malicious(&self) -> &[usize] {
        &self.malicious
    }

    /// Ids of attacker-created clients.
    pub fn fakes(&self) -> &[usize] {
        &self.fakes
    }

    pub fn defense(&self) -> Option<&DefenseState> {
        match &self.server {
            Server::Defense(d) => Some(d),
            Server::Rule(_) => None,
        }
    }

    /// Runs the next round and returns its record.
    pub fn run_round(&mut self) -> Result<RoundRecord> {
        self.round += 1;
        let t = self.round;
        self.step(t).map_err(|e| FedError::Round {
            round: t,
            source: Box::new(e),
        })
    }

    fn step(&mut self, t: usize) -> Result<RoundRecord> {
        let seed = self.cfg.seed;
        let round = t as u64;
        let participants = sample_clients(
            self.cfg.setting,
            self.cfg.clients,
            &mut rng::stream(seed, Domain::Sampling, round, 0),
        );
        let fakes = match self.cfg.setting {
            Setting::CrossSilo => self.fakes.clone(),
            Setting::CrossDevice { .. } if self.fakes.is_empty() => Vec::new(),
            setting => {
                let mut s = rng::stream(seed, Domain::FakeSampling, round, 0);
                sample_clients(setting, self.fakes.len(), &mut s)
                    .into_iter()
                    .map(|i| self.fakes[i])
                    .collect()
            }
        };

        // Local training for every sampled genuine client.
        let theta = &self.theta;
        let (train, partition, spec, training) = (&self.train, &self.partition, &self.spec, &self.cfg.training);
        let trained: Vec<ParamVector> = participants
            .par_iter()
            .map(|&id| {
                let shard = partition.shard(id);
                if shard.is_empty() {
                    return Ok(theta.clone());
                }
                let mut s = rng::stream(seed, Domain::ClientTraining, id as u64, round);
                local_update(theta, train, shard, training, spec, &mut s)
            })
            .collect::<Result<_>>()?;
        let mut models: BTreeMap<usize, ParamVector> = participants.iter().copied().zip(trained).collect();

        let attackers: Vec<usize> = participants
            .iter()
            .copied()
            .filter(|id| self.malicious.binary_search(id).is_ok())
            .collect();
        let mean_mu = self.inject(t, &attackers, &fakes, &mut models)?;

        let updates: Vec<ClientUpdate> = models.into_iter().map(|(id, m)| ClientUpdate::new(id, m)).collect();
        let compromised = attackers.len() + fakes.len();
        let aggregate = match &mut self.server {
            Server::Rule(kind) => {
                let agg = self.cfg.server.aggregator_config(*kind, compromised);
                if kind.translation_equivariant() {
                    agg.aggregate(&updates)?
                } else {
                    let deltas: Vec<ClientUpdate> = updates
                        .iter()
                        .map(|u| ClientUpdate::new(u.client, u.model.sub(&self.theta)))
                        .collect();
                    let mut out = agg.aggregate(&deltas)?;
                    out.model = self.theta.add(&out.model);
                    out
                }
            }
            Server::Defense(state) => {
                state.aggregate(&self.theta, &updates, &mut rng::stream(seed, Domain::Server, round, 0))?
            }
        };

        let next = aggregate.model;
        for hist in self.histories.values_mut() {
            hist.push_global_delta(&self.theta, &next)?;
        }
        if !self.fakes.is_empty() {
            self.fake_history.push_global_delta(&self.theta, &next)?;
        }
        self.theta = next;

        let accuracy = evaluate(&self.theta, &self.spec, &self.test)?;
        let mut ids: Vec<usize> = participants;
        ids.extend(fakes);
        Ok(RoundRecord {
            round: t,
            accuracy,
            participants: ids,
            retained: aggregate.retained,
            mean_mu,
        })
    }

    /// Replaces attackers' models with crafted ones and adds fake-client
    /// submissions. Returns the mean XFED magnitude, if any attacker crafted.
    fn inject(
        &self,
        t: usize,
        attackers: &[usize],
        fakes: &[usize],
        models: &mut BTreeMap<usize, ParamVector>,
    ) -> Result<Option<f64>> {
        let seed = self.cfg.seed;
        let round = t as u64;
        let theta = &self.theta;
        let attack = &self.cfg.attack;
        let delta_of = |models: &BTreeMap<usize, ParamVector>, id: usize| models[&id].sub(theta);
        // Stream shared by a colluding group, separate from per-client streams.
        let mut group_rng = rng::stream(seed, Domain::Attack, u64::MAX, round);

        match attack.kind {
            AttackKind::None => {}
            AttackKind::Xfed => {
                let mut mus = Vec::new();
                for &id in attackers {
                    let benign = delta_of(models, id);
                    if !(benign.norm() > 0.0 && benign.norm().is_finite()) {
                        continue;
                    }
                    let mut s = rng::stream(seed, Domain::Attack, id as u64, round);
                    let out = xfed_craft(&benign, &self.histories[&id], &attack.xfed, &mut s)?;
                    if out.status == CraftStatus::Applied {
                        mus.push(out.mu);
                    }
                    models.insert(id, theta.add(&out.update));
                }
                if !mus.is_empty() {
                    return Ok(Some(mus.iter().sum::<f64>() / mus.len() as f64));
                }
            }
            AttackKind::Lie | AttackKind::FangKrum | AttackKind::FangTrmean | AttackKind::MinMax | AttackKind::MinSum => {
                if attackers.len() < 2 {
                    return Ok(None);
                }
                let benign: Vec<ParamVector> = attackers.iter().map(|&id| delta_of(models, id)).collect();
                let crafted: Vec<ParamVector> = match attack.kind {
                    AttackKind::Lie => {
                        let (u, _) = lie_craft(&benign, attack.baseline.lie_z)?;
                        vec![u; benign.len()]
                    }
                    AttackKind::FangKrum => {
                        let assumed = self.cfg.server.compromised.unwrap_or(attackers.len() + fakes.len());
                        fang_krum_craft(&benign, assumed, &mut group_rng)?.updates
                    }
                    AttackKind::FangTrmean => fang_trmean_craft(&benign, &mut group_rng)?,
                    AttackKind::MinMax => {
                        let b = &attack.baseline;
                        vec![minmax_craft(&benign, b.minmax_perturbation, b.search_tolerance)?.update; benign.len()]
                    }
                    _ => {
                        let b = &attack.baseline;
                        vec![minsum_craft(&benign, b.minmax_perturbation, b.search_tolerance)?.update; benign.len()]
                    }
                };
                for (&id, delta) in attackers.iter().zip(crafted) {
                    models.insert(id, theta.add(&delta));
                }
            }
            AttackKind::Mpaf => {
                let base = self.mpaf_base.as_ref().expect("MPAF base drawn at setup");
                let crafted = mpaf_craft(theta, base, attack.baseline.mpaf_lambda);
                for &id in fakes {
                    models.insert(id, crafted.clone());
                }
            }
            AttackKind::Poisonedfl => {
                let dir = self.poisonedfl_direction.as_ref().expect("direction drawn at setup");
                let crafted = poisonedfl_craft(theta, dir, &self.fake_history);
                for &id in fakes {
                    models.insert(id, crafted.clone());
                }
            }
        }
        Ok(None)
    }
}

/// Thread count from `FEDSIM_THREADS`, if set.
pub fn threads_from_env() -> Result<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&n| n > 0)
            .map(Some)
            .ok_or_else(|| FedError::config(THREADS_ENV, format!("expected a positive integer, got {v:?}"))),
        Err(_) => Ok(None),
    }
}

/// Runs all `T` rounds, capping parallelism at `FEDSIM_THREADS` when set.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    run_experiment_with_threads(cfg, threads_from_env()?)
}

/// Runs all `T` rounds on a pool of `threads` workers (`None`: rayon's default pool).
pub fn run_experiment_with_threads(cfg: &ExperimentConfig, threads: Option<usize>) -> Result<ExperimentResult> {
    let run = || -> Result<ExperimentResult> {
        let mut sim = Simulation::new(cfg)?;
        let records = (0..cfg.rounds).map(|_| sim.run_round()).collect::<Result<Vec<_>>>()?;
        Ok(ExperimentResult {
            accuracy: window_accuracy(&records),
            records,
            digest: cfg.digest(),
            base_digest: cfg.base_digest(),
        })
    };
    match threads {
        None => run(),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| FedError::config(THREADS_ENV, e.to_string()))?
            .install(run),
    }
}
