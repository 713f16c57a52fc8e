//! Per-MU learning agent: local state encoding, feasible-action masking,
//! epsilon-greedy selection over the Q-factor network, truthful bid
//! construction through the post-decision network, experience replay and
//! the coupled training of both networks with a target copy.

use crate::auction::{Bid, Demand};
use crate::link::Attachment;
use crate::nn::{Adam, Gradients, Mlp};
use crate::world::{LearnConfig, Location, WorldConfig};
use rand::seq::index::sample as sample_indices;
use rand::Rng;
use rand_chacha::ChaCha12Rng;
use std::path::Path;

/// Task offloading decision X.
#[derive(Copy, Clone, PartialEq, Eq, Debug)]
pub enum Offload {
    None = 0,
    Local = 1,
    Server = 2,
    Uav = 3,
}

impl Offload {
    pub const ALL: [Offload; 4] = [Offload::None, Offload::Local, Offload::Server, Offload::Uav];

    pub fn from_index(i: usize) -> Offload {
        Self::ALL[i]
    }
}

/// Joint decision: channel preference z (or realized allocation), task
/// offloading X and packets scheduled R.
#[derive(Copy, Clone, PartialEq, Eq, Debug)]
pub struct Action {
    pub wants_channel: bool,
    pub offload: Offload,
    pub packets: u32,
}

impl Action {
    pub fn idle() -> Self {
        Action {
            wants_channel: false,
            offload: Offload::None,
            packets: 0,
        }
    }
}

/// Bijection between action triples and flat indices over
/// `2 * 4 * (D_max + 1)` outputs.
#[derive(Copy, Clone, Debug)]
pub struct ActionCodec {
    pub d_max: u32,
}

impl ActionCodec {
    pub fn new(d_max: u32) -> Self {
        ActionCodec { d_max }
    }

    pub fn total(&self) -> usize {
        2 * 4 * (self.d_max as usize + 1)
    }

    pub fn encode(&self, a: Action) -> usize {
        debug_assert!(a.packets <= self.d_max);
        let r = self.d_max as usize + 1;
        (a.wants_channel as usize) * 4 * r + (a.offload as usize) * r + a.packets as usize
    }

    pub fn decode(&self, idx: usize) -> Action {
        debug_assert!(idx < self.total());
        let r = self.d_max as usize + 1;
        Action {
            wants_channel: idx / (4 * r) == 1,
            offload: Offload::from_index((idx / r) % 4),
            packets: (idx % r) as u32,
        }
    }
}

/// Feasibility mask over the flat action space.
#[derive(Clone, Debug, PartialEq)]
pub struct ActionMask {
    bits: Vec<bool>,
}

impl ActionMask {
    pub fn allows(&self, idx: usize) -> bool {
        self.bits[idx]
    }

    pub fn allowed_indices(&self) -> Vec<usize> {
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, b)| **b)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }
}

/// The local observation an agent acts on.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct LocalState {
    pub uav_cell: Location,
    pub mu_cell: Location,
    pub has_task: bool,
    pub association: Attachment,
    pub cpu_remaining: u32,
    pub uav_backlog_bits: f64,
    pub tx_backlog: u32,
    pub aoi_s: f64,
    /// Conjecture: last auction payment.
    pub last_payment: f64,
    /// Conjecture: last observed VM service rate.
    pub last_service_rate: f64,
}

/// Intermediate state right after packet transmissions: the transmitter
/// backlog is replaced, everything else unchanged.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct PostDecisionState {
    pub state: LocalState,
}

/// Deterministic hop to the post-decision state. Scheduling toward a
/// remote destination first refills the transmitter with the task's
/// packets; a won allocation then removes the transmitted ones.
pub fn post_decision(s: &LocalState, action: Action, won: bool, d_max: u32) -> PostDecisionState {
    let d_eff = match action.offload {
        Offload::Server | Offload::Uav => d_max,
        Offload::None | Offload::Local => s.tx_backlog,
    };
    let sent = if won { action.packets } else { 0 };
    assert!(sent <= d_eff, "transmitted more packets than available");
    PostDecisionState {
        state: LocalState {
            tx_backlog: d_eff - sent,
            ..*s
        },
    }
}

/// Destination of this epoch's upload, if any: a newly scheduled task
/// sets it, otherwise pending packets follow the association.
pub fn upload_destination(s: &LocalState, offload: Offload) -> Option<Demand> {
    match offload {
        Offload::Server => Some(Demand::Server),
        Offload::Uav => Some(Demand::Uav),
        Offload::None | Offload::Local => {
            if s.tx_backlog > 0 {
                Some(match s.association {
                    Attachment::Uav => Demand::Uav,
                    Attachment::Bs(_) => Demand::Server,
                })
            } else {
                None
            }
        }
    }
}

/// Per-destination packet caps for this epoch (already power-limited).
#[derive(Copy, Clone, Debug)]
pub struct TxCaps {
    pub server: u32,
    pub uav: u32,
}

impl TxCaps {
    pub fn for_dest(&self, dest: Demand) -> u32 {
        match dest {
            Demand::Server => self.server,
            Demand::Uav => self.uav,
            Demand::None => 0,
        }
    }
}

/// Mask of actions that are executable in `s`: scheduling requires a
/// buffered task and a free pipeline, packets respect the backlog after
/// scheduling and the per-destination cap, and a channel preference is
/// only placed when at least one packet could flow to a remote
/// destination.
pub fn feasible_actions(s: &LocalState, caps: &TxCaps, codec: &ActionCodec) -> ActionMask {
    let mut bits = vec![false; codec.total()];
    for x in Offload::ALL {
        let valid = match x {
            Offload::None => true,
            Offload::Local => s.has_task && s.cpu_remaining == 0,
            Offload::Server => s.has_task && s.tx_backlog == 0,
            Offload::Uav => s.has_task && s.tx_backlog == 0 && s.uav_backlog_bits == 0.0,
        };
        if !valid {
            continue;
        }
        let dest = upload_destination(s, x);
        let d_eff = match x {
            Offload::Server | Offload::Uav => codec.d_max,
            _ => s.tx_backlog,
        };
        let r_cap = dest.map_or(0, |d| caps.for_dest(d).min(d_eff));
        // z = 0 transmits nothing, so only R = 0 is kept
        bits[codec.encode(Action {
            wants_channel: false,
            offload: x,
            packets: 0,
        })] = true;
        for r in 1..=r_cap {
            bits[codec.encode(Action {
                wants_channel: true,
                offload: x,
                packets: r,
            })] = true;
        }
    }
    ActionMask { bits }
}

/// Fixed-length observation encoding with all features in `[0, 1]`-ish
/// ranges; payments scale by the largest payment seen so far.
#[derive(Clone, Debug)]
pub struct StateEncoder {
    grid_side: u32,
    bs_count: usize,
    d_max: u32,
    local_epochs: u32,
    task_bits: f64,
    aoi_cap: f64,
    chi0: f64,
    max_payment_seen: f64,
}

impl StateEncoder {
    pub fn new(cfg: &WorldConfig) -> Self {
        StateEncoder {
            grid_side: cfg.grid_side_cells,
            bs_count: cfg.bs_count(),
            d_max: cfg.packets_per_task,
            local_epochs: crate::compute::local_epochs_required(cfg),
            task_bits: f64::from(cfg.packets_per_task) * cfg.bits_per_packet,
            aoi_cap: cfg.aoi_cap_seconds,
            chi0: cfg.vm_rate_bps,
            max_payment_seen: 0.0,
        }
    }

    pub fn dim(&self) -> usize {
        12 + self.bs_count
    }

    pub fn observe_payment(&mut self, payment: f64) {
        if payment > self.max_payment_seen {
            self.max_payment_seen = payment;
        }
    }

    fn cell_xy(&self, loc: Location) -> (f64, f64) {
        let side = self.grid_side;
        let scale = f64::from(side.saturating_sub(1).max(1));
        let col = loc.0 % side;
        let row = loc.0 / side;
        (f64::from(col) / scale, f64::from(row) / scale)
    }

    pub fn encode(&self, s: &LocalState) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.dim());
        let (ux, uy) = self.cell_xy(s.uav_cell);
        let (mx, my) = self.cell_xy(s.mu_cell);
        v.extend_from_slice(&[ux, uy, mx, my, f64::from(s.has_task)]);
        let mut one_hot = vec![0.0; self.bs_count + 1];
        one_hot[s.association.one_hot_index(self.bs_count)] = 1.0;
        v.extend_from_slice(&one_hot);
        v.push(f64::from(s.cpu_remaining) / f64::from(self.local_epochs.max(1)));
        v.push(s.uav_backlog_bits / self.task_bits);
        v.push(f64::from(s.tx_backlog) / f64::from(self.d_max));
        v.push(s.aoi_s / self.aoi_cap);
        v.push(if self.max_payment_seen > 0.0 {
            s.last_payment / self.max_payment_seen
        } else {
            0.0
        });
        v.push(s.last_service_rate / self.chi0);
        debug_assert_eq!(v.len(), self.dim());
        v
    }

    pub fn encode_post(&self, p: &PostDecisionState) -> Vec<f64> {
        self.encode(&p.state)
    }
}

/// Epsilon schedule: linear from 1 to `final_eps` over the first half of
/// the run, constant afterwards.
pub fn epsilon_at(epoch: u64, total_epochs: u64, final_eps: f64) -> f64 {
    let half = (total_epochs / 2).max(1);
    if epoch >= half {
        final_eps
    } else {
        let frac = (epoch - 1) as f64 / (half - 1).max(1) as f64;
        1.0 + (final_eps - 1.0) * frac
    }
}

/// Epsilon-greedy over the masked outputs of a Q-network; greedy ties go
/// to the lowest flat index.
pub fn select_action(
    net: &Mlp,
    encoder: &StateEncoder,
    s: &LocalState,
    mask: &ActionMask,
    epsilon: f64,
    rng: &mut ChaCha12Rng,
    codec: &ActionCodec,
) -> Action {
    let allowed = mask.allowed_indices();
    assert!(!allowed.is_empty(), "mask must keep at least the idle action");
    let idx = if rng.random::<f64>() < epsilon {
        allowed[rng.random_range(0..allowed.len())]
    } else {
        let q = net.forward(&encoder.encode(s));
        let mut best = allowed[0];
        for &i in &allowed[1..] {
            if q[i] > q[best] {
                best = i;
            }
        }
        best
    };
    codec.decode(idx)
}

/// One transition: the stored action index carries the realized channel
/// allocation in its first coordinate.
#[derive(Clone, Debug)]
pub struct Experience {
    pub state: LocalState,
    pub action_index: usize,
    pub payoff: f64,
    pub next_state: LocalState,
    pub next_mask: ActionMask,
}

/// Bounded FIFO replay memory with uniform mini-batch sampling without
/// replacement.
#[derive(Clone, Debug)]
pub struct ReplayMemory {
    buf: Vec<Experience>,
    capacity: usize,
    write: usize,
}

impl ReplayMemory {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0);
        ReplayMemory {
            buf: Vec::with_capacity(capacity),
            capacity,
            write: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.buf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buf.is_empty()
    }

    pub fn get(&self, i: usize) -> &Experience {
        &self.buf[i]
    }

    pub fn push(&mut self, e: Experience) {
        if self.buf.len() < self.capacity {
            self.buf.push(e);
        } else {
            self.buf[self.write] = e;
        }
        self.write = (self.write + 1) % self.capacity;
    }

    pub fn sample(&self, k: usize, rng: &mut ChaCha12Rng) -> Vec<usize> {
        sample_indices(rng, self.len(), k).into_vec()
    }
}

struct PendingStep {
    state: LocalState,
    action_index: usize,
    payoff: f64,
}

/// The two-network learner of one MU.
pub struct DqnAgent {
    pub codec: ActionCodec,
    pub encoder: StateEncoder,
    /// Q-factor network (with a delayed target copy).
    pub dqn1: Mlp,
    pub dqn1_target: Mlp,
    /// Post-decision Q-factor network.
    pub dqn2: Mlp,
    adam1: Adam,
    adam2: Adam,
    pub memory: ReplayMemory,
    rng: ChaCha12Rng,
    gamma: f64,
    batch_size: usize,
    sync_period: u64,
    pending: Option<PendingStep>,
    /// Mini-batch losses from the latest training step (DQN-I, DQN-II).
    pub last_losses: (f64, f64),
}

impl DqnAgent {
    pub fn new(world: &WorldConfig, learn: &LearnConfig, mut rng: ChaCha12Rng) -> Self {
        let codec = ActionCodec::new(world.packets_per_task);
        let encoder = StateEncoder::new(world);
        let sizes = [
            encoder.dim(),
            learn.hidden_neurons,
            learn.hidden_neurons,
            codec.total(),
        ];
        let dqn1 = Mlp::new(&sizes, &mut rng);
        let dqn1_target = dqn1.clone();
        let dqn2 = Mlp::new(&sizes, &mut rng);
        let adam1 = Adam::new(
            &dqn1,
            learn.learning_rate,
            learn.adam_beta1,
            learn.adam_beta2,
            learn.adam_epsilon,
        );
        let adam2 = Adam::new(
            &dqn2,
            learn.learning_rate,
            learn.adam_beta1,
            learn.adam_beta2,
            learn.adam_epsilon,
        );
        DqnAgent {
            codec,
            encoder,
            dqn1,
            dqn1_target,
            dqn2,
            adam1,
            adam2,
            memory: ReplayMemory::new(learn.replay_capacity),
            rng,
            gamma: world.discount,
            batch_size: learn.batch_size,
            sync_period: learn.target_sync_period,
            pending: None,
            last_losses: (0.0, 0.0),
        }
    }

    /// Complete the previous epoch's transition with the newly observed
    /// state, then remember the observation for this epoch.
    pub fn observe(&mut self, state: &LocalState, mask: &ActionMask) {
        if let Some(p) = self.pending.take() {
            self.memory.push(Experience {
                state: p.state,
                action_index: p.action_index,
                payoff: p.payoff,
                next_state: *state,
                next_mask: mask.clone(),
            });
        }
    }

    pub fn select(&mut self, s: &LocalState, mask: &ActionMask, epsilon: f64) -> Action {
        select_action(
            &self.dqn1,
            &self.encoder,
            s,
            mask,
            epsilon,
            &mut self.rng,
            &self.codec,
        )
    }

    /// Truthful bid per the post-decision decomposition: the hypothetical
    /// single-epoch utility of winning plus the discounted continuation
    /// from DQN-II, clamped at zero.
    pub fn construct_bid(
        &self,
        s: &LocalState,
        action: Action,
        utility_if_won: f64,
    ) -> Option<Bid> {
        if !action.wants_channel || action.packets == 0 {
            return None;
        }
        let dest = upload_destination(s, action.offload)?;
        let hyp = post_decision(s, action, true, self.codec.d_max);
        let idx = self.codec.encode(Action {
            wants_channel: true,
            ..action
        });
        let q_post = self.dqn2.forward(&self.encoder.encode_post(&hyp))[idx];
        let valuation = (utility_if_won + q_post / (1.0 - self.gamma)).max(0.0);
        Some(Bid {
            mu: 0, // caller assigns
            valuation,
            demand: dest,
            serving_bs: 0, // caller assigns
        })
    }

    /// Stash this epoch's realized transition half; the successor state
    /// arrives with the next `observe`.
    pub fn record_outcome(&mut self, state: &LocalState, won: bool, action: Action, payoff: f64) {
        let realized = Action {
            wants_channel: won,
            ..action
        };
        self.pending = Some(PendingStep {
            state: *state,
            action_index: self.codec.encode(realized),
            payoff,
        });
    }

    /// One mini-batch update of both networks. Returns the batch losses;
    /// skipped (zero losses reported) until the memory can fill a batch.
    pub fn train_step(&mut self) -> (f64, f64) {
        if self.memory.len() < self.batch_size {
            self.last_losses = (0.0, 0.0);
            return self.last_losses;
        }
        let picks = self.memory.sample(self.batch_size, &mut self.rng);
        let mut grads1 = Gradients::zeros_like(&self.dqn1);
        let mut grads2 = Gradients::zeros_like(&self.dqn2);
        let mut loss1 = 0.0;
        let mut loss2 = 0.0;
        let inv = 1.0 / self.batch_size as f64;
        for i in picks {
            let e = self.memory.get(i).clone();
            let x_next = self.encoder.encode(&e.next_state);
            let q_next_online = self.dqn1.forward(&x_next);
            let allowed = e.next_mask.allowed_indices();
            let mut best = allowed[0];
            for &a in &allowed[1..] {
                if q_next_online[a] > q_next_online[best] {
                    best = a;
                }
            }
            let q_next_target = self.dqn1_target.forward(&x_next);
            let target1 = (1.0 - self.gamma) * e.payoff + self.gamma * q_next_target[best];

            let x = self.encoder.encode(&e.state);
            let (q_pred, cache1) = self.dqn1.forward_cached(&x);
            let err1 = q_pred[e.action_index] - target1;
            loss1 += err1 * err1 * inv;
            let mut dout = vec![0.0; q_pred.len()];
            dout[e.action_index] = 2.0 * err1 * inv;
            grads1.accumulate(&self.dqn1.backward(&cache1, &dout));

            let action = self.codec.decode(e.action_index);
            let hop = post_decision(&e.state, action, action.wants_channel, self.codec.d_max);
            let x_post = self.encoder.encode_post(&hop);
            let (q2_pred, cache2) = self.dqn2.forward_cached(&x_post);
            let target2 = self.gamma * q_next_online[best];
            let err2 = q2_pred[e.action_index] - target2;
            loss2 += err2 * err2 * inv;
            let mut dout2 = vec![0.0; q2_pred.len()];
            dout2[e.action_index] = 2.0 * err2 * inv;
            grads2.accumulate(&self.dqn2.backward(&cache2, &dout2));
        }
        self.adam1.step(&mut self.dqn1, &grads1);
        self.adam2.step(&mut self.dqn2, &grads2);
        self.last_losses = (loss1, loss2);
        self.last_losses
    }

    /// Copy the online Q-network into the target copy every `period` epochs.
    pub fn maybe_sync_target(&mut self, epoch: u64) {
        if epoch % self.sync_period == 0 {
            self.dqn1_target = self.dqn1.clone();
        }
    }

    pub fn save_checkpoints(&self, dir: &Path, tag: &str) -> Result<(), crate::nn::CheckpointError> {
        self.dqn1.save(&dir.join(format!("{tag}-dqn1.txt")))?;
        self.dqn1_target
            .save(&dir.join(format!("{tag}-dqn1-target.txt")))?;
        self.dqn2.save(&dir.join(format!("{tag}-dqn2.txt")))
    }
}
