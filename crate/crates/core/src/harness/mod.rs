//! Per-epoch orchestration of arrivals, decisions, the channel auction,
//! transmissions, processing, AoI accounting and learning, plus the
//! experiment runners and CSV metric emission.

use crate::agent::{
    epsilon_at, feasible_actions, Action, ActionCodec, DqnAgent, LocalState, Offload, TxCaps,
};
use crate::auction::{self, Bid, Demand};
use crate::baselines::{baseline_action, baseline_demand, baseline_valuation, Scheme};
use crate::compute::{
    self, local_cpu_energy, local_epochs_required, uav_processing_step, AoiState, CompletionEvent,
    ProcessorState,
};
use crate::link::{transmission_time, update_association, Attachment};
use crate::rng::stream;
use crate::world::{GainDest, Location, MobilityModel, SimConfig, TaskBuffer, World};
use rand_chacha::ChaCha12Rng;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

/// Per-MU metrics of one epoch. AoI and utility refer to the epoch-start
/// age that enters the payoff.
#[derive(Copy, Clone, Debug, Default)]
pub struct MuMetrics {
    pub aoi: f64,
    pub energy: f64,
    pub utility: f64,
    pub payoff: f64,
    pub payment: f64,
    pub loss_dqn1: f64,
    pub loss_dqn2: f64,
    /// Running discounted-return estimate.
    pub vhat: f64,
}

#[derive(Clone, Debug)]
pub struct MetricsRecord {
    pub epoch: u64,
    pub per_mu: Vec<MuMetrics>,
    pub winners: usize,
    pub revenue: f64,
}

macro_rules! mean_field {
    ($name:ident) => {
        pub fn $name(&self) -> f64 {
            self.per_mu.iter().map(|m| m.$name).sum::<f64>() / self.per_mu.len() as f64
        }
    };
}

impl MetricsRecord {
    mean_field!(aoi);
    mean_field!(energy);
    mean_field!(utility);
    mean_field!(payoff);
    mean_field!(payment);
    mean_field!(loss_dqn1);
    mean_field!(loss_dqn2);
    mean_field!(vhat);
}

struct MuSim {
    loc: Location,
    mobility: MobilityModel,
    buffer: TaskBuffer,
    assoc: Attachment,
    proc: ProcessorState,
    aoi: AoiState,
    last_payment: f64,
    last_chi: f64,
    vhat: f64,
}

enum Policy {
    Learner(Box<DqnAgent>),
    Fixed(Scheme),
}

/// Per-destination link snapshot for one MU and epoch: the gains, the
/// effective transmission times (handover-aware) and the power-limited
/// packet caps.
#[derive(Copy, Clone, Debug)]
struct LinkProfile {
    serving_bs: u8,
    gain_server: f64,
    dt_server: f64,
    gain_uav: f64,
    dt_uav: f64,
    caps: TxCaps,
}

/// One simulation run: world state, per-MU state and policies.
pub struct Simulation {
    pub cfg: SimConfig,
    world: World,
    codec: ActionCodec,
    auction_topo: auction::Topology,
    uav_loc: Location,
    uav_mobility: MobilityModel,
    uav_rng: ChaCha12Rng,
    mus: Vec<MuSim>,
    policies: Vec<Policy>,
    arrival_rngs: Vec<ChaCha12Rng>,
    mobility_rngs: Vec<ChaCha12Rng>,
    epoch: u64,
    total_epochs: u64,
}

impl Simulation {
    pub fn new(cfg: SimConfig, scheme: Scheme, total_epochs: u64) -> Self {
        cfg.world.validate().expect("configuration must be valid");
        let world = World::new(cfg.world.clone());
        let seed = cfg.world.seed;
        let n = cfg.world.mu_count;
        let codec = ActionCodec::new(cfg.world.packets_per_task);
        let auction_topo = world.topology.auction_topology();

        let uav_mobility =
            MobilityModel::random_walk(&world.grid, &mut stream(seed, "mobility-model", 0));
        let uav_loc = random_cell(&world, &mut stream(seed, "initial-location", 0));

        let mut mus = Vec::with_capacity(n);
        let mut policies = Vec::with_capacity(n);
        let mut arrival_rngs = Vec::with_capacity(n);
        let mut mobility_rngs = Vec::with_capacity(n);
        for k in 0..n {
            let idx = k as u64 + 1;
            let mobility =
                MobilityModel::random_walk(&world.grid, &mut stream(seed, "mobility-model", idx));
            let loc = random_cell(&world, &mut stream(seed, "initial-location", idx));
            mus.push(MuSim {
                loc,
                mobility,
                buffer: TaskBuffer::empty(),
                assoc: Attachment::Bs(world.topology.serving_bs(loc)),
                proc: ProcessorState::default(),
                aoi: AoiState::initial(),
                last_payment: 0.0,
                last_chi: 0.0,
                vhat: 0.0,
            });
            policies.push(match scheme {
                Scheme::DeepRl => Policy::Learner(Box::new(DqnAgent::new(
                    &cfg.world,
                    &cfg.learn,
                    stream(seed, "agent", k as u64),
                ))),
                fixed => Policy::Fixed(fixed),
            });
            arrival_rngs.push(stream(seed, "arrival", k as u64));
            mobility_rngs.push(stream(seed, "mobility", idx));
        }
        Simulation {
            cfg,
            world,
            codec,
            auction_topo,
            uav_loc,
            uav_mobility,
            uav_rng: stream(seed, "mobility", 0),
            mus,
            policies,
            arrival_rngs,
            mobility_rngs,
            epoch: 1,
            total_epochs,
        }
    }

    pub fn epoch(&self) -> u64 {
        self.epoch
    }

    fn observe(&self, k: usize) -> LocalState {
        let mu = &self.mus[k];
        LocalState {
            uav_cell: self.uav_loc,
            mu_cell: mu.loc,
            has_task: !mu.buffer.is_empty(),
            association: mu.assoc,
            cpu_remaining: mu.proc.cpu_remaining,
            uav_backlog_bits: mu.proc.uav_backlog_bits,
            tx_backlog: mu.proc.tx_backlog,
            aoi_s: mu.aoi.seconds,
            last_payment: mu.last_payment,
            last_service_rate: mu.last_chi,
        }
    }

    fn link_profile(&self, k: usize) -> LinkProfile {
        let w = &self.cfg.world;
        let mu = &self.mus[k];
        let serving = self.world.topology.serving_bs(mu.loc);
        let noise = w.noise_w_per_hz();
        let gain_server = self
            .world
            .channel_gain(mu.loc, GainDest::Bs(serving), self.uav_loc);
        let dt_server = transmission_time(
            w.epoch_seconds,
            w.handover_seconds,
            mu.assoc != Attachment::Bs(serving),
        );
        let gain_uav = self.world.channel_gain(mu.loc, GainDest::Uav, self.uav_loc);
        let dt_uav = transmission_time(
            w.epoch_seconds,
            w.handover_seconds,
            mu.assoc != Attachment::Uav,
        );
        let caps = TxCaps {
            server: crate::link::max_packets(
                gain_server,
                dt_server,
                w.bandwidth_hz,
                noise,
                w.max_tx_power_w,
                w.bits_per_packet,
                w.packets_per_task,
            ),
            uav: crate::link::max_packets(
                gain_uav,
                dt_uav,
                w.bandwidth_hz,
                noise,
                w.max_tx_power_w,
                w.bits_per_packet,
                w.packets_per_task,
            ),
        };
        LinkProfile {
            serving_bs: serving,
            gain_server,
            dt_server,
            gain_uav,
            dt_uav,
            caps,
        }
    }

    /// Utility of this epoch if the channel is won and `action` executed:
    /// the CPU term plus the transmit energy toward the action's
    /// destination at the full requested packet count.
    fn utility_if_won(&self, s: &LocalState, action: Action, link: &LinkProfile) -> f64 {
        let w = &self.cfg.world;
        let cpu_after = if action.offload == Offload::Local {
            local_epochs_required(w)
        } else {
            s.cpu_remaining
        };
        let mut energy = local_cpu_energy(cpu_after, w);
        if action.packets > 0 {
            if let Some(dest) = crate::agent::upload_destination(s, action.offload) {
                let (gain, dt) = match dest {
                    Demand::Server => (link.gain_server, link.dt_server),
                    Demand::Uav => (link.gain_uav, link.dt_uav),
                    Demand::None => unreachable!(),
                };
                energy += crate::link::tx_energy(
                    gain,
                    dt,
                    w.bandwidth_hz,
                    w.noise_w_per_hz(),
                    action.packets,
                    w.bits_per_packet,
                );
            }
        }
        compute::utility(s.aoi_s, energy, w.weight_aoi, w.weight_energy)
    }

    /// Advance one epoch and return its metrics.
    pub fn step(&mut self) -> MetricsRecord {
        let epoch = self.epoch;
        let w = self.cfg.world.clone();
        let n = self.mus.len();
        let noise = w.noise_w_per_hz();

        // (1) task arrivals replace older buffered tasks
        for (mu, rng) in self.mus.iter_mut().zip(&mut self.arrival_rngs) {
            mu.buffer.sample_arrival_and_admit(epoch, w.arrival_prob, rng);
        }

        // (2) observations, action selection, bid construction
        let epsilon = epsilon_at(epoch, self.total_epochs, self.cfg.learn.epsilon_final);
        let mut snapshots = Vec::with_capacity(n);
        let mut links = Vec::with_capacity(n);
        let mut actions = Vec::with_capacity(n);
        let mut bids = Vec::with_capacity(n);
        for k in 0..n {
            let s = self.observe(k);
            let link = self.link_profile(k);
            let mask = feasible_actions(&s, &link.caps, &self.codec);
            let action = match &mut self.policies[k] {
                Policy::Learner(agent) => {
                    agent.observe(&s, &mask);
                    agent.select(&s, &mask, epsilon)
                }
                Policy::Fixed(scheme) => {
                    let action = baseline_action(
                        *scheme,
                        &s,
                        &link.caps,
                        link.gain_server,
                        link.gain_uav,
                        w.packets_per_task,
                    );
                    debug_assert!(mask.allows(self.codec.encode(action)));
                    action
                }
            };
            let u_hyp = self.utility_if_won(&s, action, &link);
            let bid = match &self.policies[k] {
                Policy::Learner(agent) => agent.construct_bid(&s, action, u_hyp),
                Policy::Fixed(_) => baseline_demand(&s, action).map(|demand| Bid {
                    mu: k,
                    valuation: baseline_valuation(u_hyp),
                    demand,
                    serving_bs: link.serving_bs,
                }),
            };
            let bid = bid
                .map(|b| Bid {
                    mu: k,
                    serving_bs: link.serving_bs,
                    ..b
                })
                .unwrap_or(Bid::none(k));
            snapshots.push(s);
            links.push(link);
            actions.push(action);
            bids.push(bid);
        }

        // (3) winner determination and payments at the orchestrator
        let alloc = auction::solve(&bids, w.channels, &self.auction_topo);

        // (4) scheduling, association updates and packet transmissions
        let mut tx_energies = vec![0.0; n];
        let mut events: Vec<Vec<CompletionEvent>> = vec![Vec::new(); n];
        let mut stage_vm = vec![false; n];
        for k in 0..n {
            let action = actions[k];
            let link = &links[k];
            let mu = &mut self.mus[k];
            match action.offload {
                Offload::Local => {
                    debug_assert!(mu.proc.cpu_remaining == 0 && !mu.buffer.is_empty());
                    mu.proc.cpu_remaining = local_epochs_required(&w);
                    mu.proc.t_local = mu.buffer.take();
                }
                Offload::Server => {
                    debug_assert!(mu.proc.tx_backlog == 0 && !mu.buffer.is_empty());
                    mu.proc.tx_backlog = w.packets_per_task;
                    mu.proc.t_server = mu.buffer.take();
                }
                Offload::Uav => {
                    debug_assert!(
                        mu.proc.tx_backlog == 0
                            && mu.proc.uav_backlog_bits == 0.0
                            && !mu.buffer.is_empty()
                    );
                    mu.proc.tx_backlog = w.packets_per_task;
                    mu.proc.t_uav = mu.buffer.take();
                }
                Offload::None => {}
            }
            let (assoc, handover) = update_association(mu.assoc, action.offload, link.serving_bs);
            mu.assoc = assoc;
            let dt = transmission_time(w.epoch_seconds, w.handover_seconds, handover);
            if alloc.winners[k] && action.packets > 0 && mu.proc.tx_backlog > 0 {
                let dest = match mu.assoc {
                    Attachment::Uav => GainDest::Uav,
                    Attachment::Bs(b) => GainDest::Bs(b),
                };
                let gain = self.world.channel_gain(mu.loc, dest, self.uav_loc);
                let cap = crate::link::max_packets(
                    gain,
                    dt,
                    w.bandwidth_hz,
                    noise,
                    w.max_tx_power_w,
                    w.bits_per_packet,
                    mu.proc.tx_backlog,
                );
                let sent = action.packets.min(cap);
                debug_assert_eq!(sent, action.packets, "mask must bound packet requests");
                tx_energies[k] = crate::link::tx_energy(
                    gain,
                    dt,
                    w.bandwidth_hz,
                    noise,
                    sent,
                    w.bits_per_packet,
                );
                mu.proc.tx_backlog -= sent;
                if mu.proc.tx_backlog == 0 {
                    match mu.assoc {
                        Attachment::Bs(_) => {
                            debug_assert!(mu.proc.t_server > 0);
                            events[k].push(CompletionEvent {
                                kind: compute::CompletionKind::Server,
                                arrival_epoch: std::mem::take(&mut mu.proc.t_server),
                            });
                        }
                        Attachment::Uav => {
                            debug_assert!(mu.proc.t_uav > 0);
                            stage_vm[k] = true;
                        }
                    }
                }
            }
        }

        // (5) local CPUs and the shared UAV advance
        let mut cpu_energies = vec![0.0; n];
        for (k, mu) in self.mus.iter_mut().enumerate() {
            let (energy, event) = compute::local_cpu_step(&mut mu.proc, &w);
            cpu_energies[k] = energy;
            events[k].extend(event);
        }
        let vm_active: Vec<bool> = self
            .mus
            .iter()
            .map(|m| m.proc.uav_backlog_bits > 0.0)
            .collect();
        let mut procs: Vec<ProcessorState> = self.mus.iter().map(|m| m.proc).collect();
        let (chi, uav_events) = uav_processing_step(&mut procs, &w);
        for (mu, proc) in self.mus.iter_mut().zip(procs) {
            mu.proc = proc;
        }
        for (k, event) in uav_events {
            events[k].push(event);
        }
        let task_bits = f64::from(w.packets_per_task) * w.bits_per_packet;
        for (k, staged) in stage_vm.iter().enumerate() {
            if *staged {
                self.mus[k].proc.uav_backlog_bits = task_bits;
            }
        }

        // (6) AoI update and payoffs from epoch-start ages
        let mut per_mu = vec![MuMetrics::default(); n];
        for k in 0..n {
            let mu = &mut self.mus[k];
            let aoi_start = mu.aoi.seconds;
            mu.aoi = compute::aoi_step(mu.aoi, &events[k], epoch, &w);
            let energy = cpu_energies[k] + tx_energies[k];
            let payment = alloc.payments[k];
            let (utility, payoff) =
                compute::payoff(aoi_start, energy, payment, w.weight_aoi, w.weight_energy);
            mu.vhat = w.discount * mu.vhat + (1.0 - w.discount) * payoff;
            per_mu[k] = MuMetrics {
                aoi: aoi_start,
                energy,
                utility,
                payoff,
                payment,
                loss_dqn1: 0.0,
                loss_dqn2: 0.0,
                vhat: mu.vhat,
            };
        }

        // (7) store experience halves, train, sync targets
        for k in 0..n {
            if let Policy::Learner(agent) = &mut self.policies[k] {
                agent
                    .encoder
                    .observe_payment(per_mu[k].payment);
                agent.record_outcome(
                    &snapshots[k],
                    alloc.winners[k],
                    actions[k],
                    per_mu[k].payoff,
                );
                let (l1, l2) = agent.train_step();
                per_mu[k].loss_dqn1 = l1;
                per_mu[k].loss_dqn2 = l2;
                agent.maybe_sync_target(epoch);
            }
        }

        // (8) mobility and conjectures for the next epoch
        self.uav_loc = self.uav_mobility.step(self.uav_loc, &mut self.uav_rng);
        for (k, mu) in self.mus.iter_mut().enumerate() {
            mu.loc = mu.mobility.step(mu.loc, &mut self.mobility_rngs[k]);
            mu.last_payment = alloc.payments[k];
            if vm_active[k] {
                mu.last_chi = chi.expect("an active VM implies a service rate");
            }
        }
        self.epoch += 1;

        MetricsRecord {
            epoch,
            per_mu,
            winners: alloc.winners.iter().filter(|x| **x).count(),
            revenue: alloc.revenue(),
        }
    }

    pub fn run(&mut self, epochs: u64) -> Vec<MetricsRecord> {
        (0..epochs).map(|_| self.step()).collect()
    }

    /// Save every learner's networks under `dir`.
    pub fn save_checkpoints(&self, dir: &Path) -> Result<(), crate::nn::CheckpointError> {
        for (k, policy) in self.policies.iter().enumerate() {
            if let Policy::Learner(agent) = policy {
                agent.save_checkpoints(dir, &format!("mu{k}"))?;
            }
        }
        Ok(())
    }
}

fn random_cell(world: &World, rng: &mut ChaCha12Rng) -> Location {
    use rand::Rng;
    Location(rng.random_range(0..world.grid.n_cells()))
}

/// Run one configuration end to end.
pub fn run_sim(cfg: &SimConfig, scheme: Scheme, epochs: u64) -> Vec<MetricsRecord> {
    Simulation::new(cfg.clone(), scheme, epochs).run(epochs)
}

// ---------------------------------------------------------------------------
// Metrics emission
// ---------------------------------------------------------------------------

/// Render records as CSV with one row per epoch: aggregate columns first,
/// then the per-MU blocks.
pub fn metrics_to_csv(records: &[MetricsRecord], mu_count: usize) -> String {
    let mut out = String::new();
    out.push_str("epoch,winners,revenue,mean_aoi,mean_energy,mean_utility,mean_payoff,mean_payment,mean_loss_dqn1,mean_loss_dqn2,mean_vhat");
    for k in 0..mu_count {
        let _ = write!(
            out,
            ",aoi_{k},energy_{k},utility_{k},payoff_{k},payment_{k},loss_dqn1_{k},loss_dqn2_{k},vhat_{k}"
        );
    }
    out.push('\n');
    for r in records {
        debug_assert_eq!(r.per_mu.len(), mu_count);
        let _ = write!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.epoch,
            r.winners,
            r.revenue,
            r.aoi(),
            r.energy(),
            r.utility(),
            r.payoff(),
            r.payment(),
            r.loss_dqn1(),
            r.loss_dqn2(),
            r.vhat()
        );
        for m in &r.per_mu {
            let _ = write!(
                out,
                ",{},{},{},{},{},{},{},{}",
                m.aoi, m.energy, m.utility, m.payoff, m.payment, m.loss_dqn1, m.loss_dqn2, m.vhat
            );
        }
        out.push('\n');
    }
    out
}

pub fn emit_metrics(
    records: &[MetricsRecord],
    mu_count: usize,
    path: &Path,
) -> std::io::Result<()> {
    std::fs::write(path, metrics_to_csv(records, mu_count))
}

/// Epoch-averaged aggregates of a run.
#[derive(Copy, Clone, Debug, Default)]
pub struct RunSummary {
    pub avg_aoi: f64,
    pub avg_energy: f64,
    pub avg_utility: f64,
    pub avg_payoff: f64,
    pub avg_payment: f64,
    pub revenue_per_epoch: f64,
}

pub fn summarize(records: &[MetricsRecord]) -> RunSummary {
    let n = records.len().max(1) as f64;
    let mut s = RunSummary::default();
    for r in records {
        s.avg_aoi += r.aoi() / n;
        s.avg_energy += r.energy() / n;
        s.avg_utility += r.utility() / n;
        s.avg_payoff += r.payoff() / n;
        s.avg_payment += r.payment() / n;
        s.revenue_per_epoch += r.revenue / n;
    }
    s
}

// ---------------------------------------------------------------------------
// Experiments
// ---------------------------------------------------------------------------

#[derive(Copy, Clone, PartialEq, Eq, Debug)]
pub enum ExperimentKind {
    Convergence,
    Lambda,
    Channels,
}

impl std::str::FromStr for ExperimentKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "convergence" => Ok(ExperimentKind::Convergence),
            "lambda" => Ok(ExperimentKind::Lambda),
            "channels" => Ok(ExperimentKind::Channels),
            other => Err(format!("unknown experiment kind `{other}`")),
        }
    }
}

fn write_summary_file(
    out_dir: &Path,
    cfg: &SimConfig,
    label: &str,
    started: Instant,
    files: &[PathBuf],
) -> std::io::Result<()> {
    let mut text = String::new();
    let _ = writeln!(text, "experiment: {label}");
    let _ = writeln!(text, "seed: {}", cfg.world.seed);
    let _ = writeln!(text, "config_hash: {:016x}", cfg.content_hash());
    let _ = writeln!(text, "wall_time_s: {:.3}", started.elapsed().as_secs_f64());
    for f in files {
        let _ = writeln!(text, "output: {}", f.display());
    }
    std::fs::write(out_dir.join("summary.txt"), text)
}

/// Run an experiment and write its CSV outputs under `out_dir`.
pub fn run_experiment(
    kind: ExperimentKind,
    cfg: &SimConfig,
    out_dir: &Path,
) -> std::io::Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir)?;
    let started = Instant::now();
    let epochs = cfg.sweeps.experiment_epochs;
    let mut files = Vec::new();
    match kind {
        ExperimentKind::Convergence => {
            let records = run_sim(cfg, Scheme::DeepRl, epochs);
            let mut text = String::from("epoch,mean_loss_dqn1,mean_loss_dqn2,mean_utility\n");
            for r in &records {
                let _ = writeln!(
                    text,
                    "{},{},{},{}",
                    r.epoch,
                    r.loss_dqn1(),
                    r.loss_dqn2(),
                    r.utility()
                );
            }
            let losses = out_dir.join("convergence_losses.csv");
            std::fs::write(&losses, text)?;
            files.push(losses);

            let mut sweep = String::from("batch_size,avg_utility,avg_aoi,avg_energy,avg_payoff\n");
            for &batch in &cfg.sweeps.batch_grid {
                let mut c = cfg.clone();
                c.learn.batch_size = batch;
                let s = summarize(&run_sim(&c, Scheme::DeepRl, epochs));
                let _ = writeln!(
                    sweep,
                    "{batch},{},{},{},{}",
                    s.avg_utility, s.avg_aoi, s.avg_energy, s.avg_payoff
                );
            }
            let sweep_path = out_dir.join("convergence_batch_sweep.csv");
            std::fs::write(&sweep_path, sweep)?;
            files.push(sweep_path);
        }
        ExperimentKind::Lambda => {
            let mut text = String::from(
                "lambda,scheme,avg_aoi,avg_energy,avg_utility,avg_payoff,avg_payment,revenue_per_epoch\n",
            );
            for &lambda in &cfg.sweeps.lambda_grid {
                for scheme in Scheme::ALL {
                    let mut c = cfg.clone();
                    c.world.arrival_prob = lambda;
                    let s = summarize(&run_sim(&c, scheme, epochs));
                    let _ = writeln!(
                        text,
                        "{lambda},{},{},{},{},{},{},{}",
                        scheme.name(),
                        s.avg_aoi,
                        s.avg_energy,
                        s.avg_utility,
                        s.avg_payoff,
                        s.avg_payment,
                        s.revenue_per_epoch
                    );
                }
            }
            let path = out_dir.join("lambda_sweep.csv");
            std::fs::write(&path, text)?;
            files.push(path);
        }
        ExperimentKind::Channels => {
            let mut text = String::from(
                "channels,scheme,avg_aoi,avg_energy,avg_utility,avg_payoff,avg_payment,revenue_per_epoch\n",
            );
            for &channels in &cfg.sweeps.channel_grid {
                for scheme in Scheme::ALL {
                    let mut c = cfg.clone();
                    c.world.channels = channels;
                    let s = summarize(&run_sim(&c, scheme, epochs));
                    let _ = writeln!(
                        text,
                        "{channels},{},{},{},{},{},{},{}",
                        scheme.name(),
                        s.avg_aoi,
                        s.avg_energy,
                        s.avg_utility,
                        s.avg_payoff,
                        s.avg_payment,
                        s.revenue_per_epoch
                    );
                }
            }
            let path = out_dir.join("channel_sweep.csv");
            std::fs::write(&path, text)?;
            files.push(path);
        }
    }
    write_summary_file(
        out_dir,
        cfg,
        match kind {
            ExperimentKind::Convergence => "convergence",
            ExperimentKind::Lambda => "lambda",
            ExperimentKind::Channels => "channels",
        },
        started,
        &files,
    )?;
    Ok(files)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick_cfg() -> SimConfig {
        let mut cfg = SimConfig::desk_default();
        cfg.world.seed = 7;
        cfg.learn.batch_size = 8;
        cfg.learn.replay_capacity = 64;
        cfg
    }

    #[test]
    fn empty_system_grows_aoi_linearly() {
        let mut cfg = quick_cfg();
        cfg.world.arrival_prob = 0.0;
        let records = run_sim(&cfg, Scheme::Greedy, 10);
        for (i, r) in records.iter().enumerate() {
            assert_eq!(r.winners, 0);
            assert_eq!(r.revenue, 0.0);
            for m in &r.per_mu {
                assert_eq!(m.energy, 0.0);
                assert!((m.aoi - i as f64).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn seeded_runs_are_identical() {
        let cfg = quick_cfg();
        let a = metrics_to_csv(&run_sim(&cfg, Scheme::DeepRl, 40), cfg.world.mu_count);
        let b = metrics_to_csv(&run_sim(&cfg, Scheme::DeepRl, 40), cfg.world.mu_count);
        assert_eq!(a, b);
    }

    #[test]
    fn means_match_per_mu_columns() {
        let cfg = quick_cfg();
        let records = run_sim(&cfg, Scheme::Greedy, 50);
        for r in &records {
            let mean: f64 = r.per_mu.iter().map(|m| m.aoi).sum::<f64>() / r.per_mu.len() as f64;
            assert!((r.aoi() - mean).abs() < 1e-9);
        }
    }

    #[test]
    fn auction_accounting_consistent() {
        let mut cfg = quick_cfg();
        cfg.world.arrival_prob = 0.9;
        let records = run_sim(&cfg, Scheme::Server, 200);
        for r in &records {
            let paid: f64 = r.per_mu.iter().map(|m| m.payment).sum();
            assert!((paid - r.revenue).abs() < 1e-9);
            assert!(r.per_mu.iter().all(|m| m.payment >= 0.0));
        }
    }

    #[test]
    fn csv_shape_is_stable() {
        let cfg = quick_cfg();
        let records = run_sim(&cfg, Scheme::Local, 5);
        let csv = metrics_to_csv(&records, cfg.world.mu_count);
        let mut lines = csv.lines();
        let header_cols = lines.next().unwrap().split(',').count();
        for line in lines {
            assert_eq!(line.split(',').count(), header_cols);
        }
        assert_eq!(header_cols, 11 + 8 * cfg.world.mu_count);
    }

    #[test]
    fn local_scheme_ignores_channel_count() {
        let mut a = quick_cfg();
        a.world.channels = 1;
        let mut b = quick_cfg();
        b.world.channels = 4;
        let ra = metrics_to_csv(&run_sim(&a, Scheme::Local, 100), a.world.mu_count);
        let rb = metrics_to_csv(&run_sim(&b, Scheme::Local, 100), b.world.mu_count);
        assert_eq!(ra, rb);
    }
}
