//! Tabular reference learners and exact value iteration on a tiny
//! single-MU instance, used to validate the fixed-point structure the
//! deep agents approximate: the Q-factor, the post-decision Q-factor and
//! the identity `Q(s, a) = (1 - gamma) * reward + postQ(hop(s, a), a)`.

use crate::agent::{feasible_actions, Action, ActionCodec, LocalState, Offload, TxCaps};
use crate::link::Attachment;
use crate::world::Location;
use rand::Rng;
use rand_chacha::ChaCha12Rng;

/// A finite MDP in explicit form; `transitions[s][a]` lists
/// `(successor, probability, reward)` and is empty for infeasible actions.
pub struct ExplicitMdp {
    pub n_states: usize,
    pub n_actions: usize,
    pub feasible: Vec<Vec<usize>>,
    pub transitions: Vec<Vec<Vec<(usize, f64, f64)>>>,
    pub initial: usize,
}

/// Exact solution: `q[s][a] = sum_p p * ((1 - gamma) * r + gamma * v[s'])`,
/// `v[s] = max_a q[s][a]`. Returns the value function, the Q table and the
/// sup-norm deltas of successive sweeps.
pub fn value_iteration(
    mdp: &ExplicitMdp,
    gamma: f64,
    tol: f64,
    max_sweeps: usize,
) -> (Vec<f64>, Vec<Vec<f64>>, Vec<f64>) {
    let mut v = vec![0.0; mdp.n_states];
    let mut q = vec![vec![0.0; mdp.n_actions]; mdp.n_states];
    let mut deltas = Vec::new();
    for _ in 0..max_sweeps {
        let mut delta: f64 = 0.0;
        let mut v_next = v.clone();
        for s in 0..mdp.n_states {
            if mdp.feasible[s].is_empty() {
                continue;
            }
            let mut best = f64::NEG_INFINITY;
            for &a in &mdp.feasible[s] {
                let mut acc = 0.0;
                for &(succ, p, r) in &mdp.transitions[s][a] {
                    acc += p * ((1.0 - gamma) * r + gamma * v[succ]);
                }
                q[s][a] = acc;
                best = best.max(acc);
            }
            delta = delta.max((best - v[s]).abs());
            v_next[s] = best;
        }
        v = v_next;
        deltas.push(delta);
        if delta < tol {
            break;
        }
    }
    (v, q, deltas)
}

/// Greedy action per state, ties toward the lowest index.
pub fn greedy_policy(q: &[Vec<f64>], feasible: &[Vec<usize>]) -> Vec<Option<usize>> {
    q.iter()
        .zip(feasible)
        .map(|(row, feas)| {
            feas.iter()
                .copied()
                .fold(None, |best: Option<usize>, a| match best {
                    None => Some(a),
                    Some(b) if row[a] > row[b] => Some(a),
                    keep => keep,
                })
        })
        .collect()
}

/// Tabular Q-factor and post-decision Q-factor with visit-count step
/// sizes `alpha = 1 / (1 + visits)`.
pub struct TabularTables {
    pub q: Vec<Vec<f64>>,
    pub post_q: Vec<Vec<f64>>,
    pub q_visits: Vec<Vec<u32>>,
    pub post_visits: Vec<Vec<u32>>,
    gamma: f64,
}

impl TabularTables {
    pub fn new(n_states: usize, n_posts: usize, n_actions: usize, gamma: f64) -> Self {
        TabularTables {
            q: vec![vec![0.0; n_actions]; n_states],
            post_q: vec![vec![0.0; n_actions]; n_posts],
            q_visits: vec![vec![0; n_actions]; n_states],
            post_visits: vec![vec![0; n_actions]; n_posts],
            gamma,
        }
    }

    /// One experience: update both tables toward their sampled targets.
    pub fn update(
        &mut self,
        s: usize,
        a: usize,
        post: usize,
        reward: f64,
        s_next: usize,
        feasible_next: &[usize],
    ) {
        let max_next = feasible_next
            .iter()
            .map(|&an| self.q[s_next][an])
            .fold(f64::NEG_INFINITY, f64::max);
        let max_next = if max_next.is_finite() { max_next } else { 0.0 };

        let alpha = 1.0 / (1.0 + f64::from(self.q_visits[s][a]));
        self.q_visits[s][a] += 1;
        let target = (1.0 - self.gamma) * reward + self.gamma * max_next;
        self.q[s][a] += alpha * (target - self.q[s][a]);

        let alpha_p = 1.0 / (1.0 + f64::from(self.post_visits[post][a]));
        self.post_visits[post][a] += 1;
        let target_p = self.gamma * max_next;
        self.post_q[post][a] += alpha_p * (target_p - self.post_q[post][a]);
    }
}

/// Largest violation of `q = (1 - gamma) * reward + post_q(hop, a)` over
/// the given (state, action) pairs.
pub fn consistency_residual(
    q: &[Vec<f64>],
    post_q: &[Vec<f64>],
    pairs: &[(usize, usize)],
    rewards: &[Vec<f64>],
    hop: &[Vec<usize>],
    gamma: f64,
) -> f64 {
    pairs
        .iter()
        .map(|&(s, a)| {
            let rhs = (1.0 - gamma) * rewards[s][a] + post_q[hop[s][a]][a];
            (q[s][a] - rhs).abs()
        })
        .fold(0.0, f64::max)
}

// ---------------------------------------------------------------------------
// Tiny single-MU instance
// ---------------------------------------------------------------------------

/// Discretized single-MU state: every-epoch arrivals, a static 2x2 world
/// with one station, two-packet tasks, a two-epoch local pipeline and a
/// one-epoch VM execution, so every age and AoI value is a small integer.
#[derive(Copy, Clone, PartialEq, Eq, Hash, Debug)]
pub struct TinyNode {
    pub assoc_uav: bool,
    pub cpu_remaining: u8,
    /// Transmitter pipeline: (toward UAV, packets left, task age).
    /// Packets may be zero only in post-decision nodes.
    pub tx: Option<(bool, u8, u8)>,
    /// Age of the task executing at the UAV, if any.
    pub vm_age: Option<u8>,
    pub aoi: u8,
}

/// Constants of the tiny instance.
#[derive(Copy, Clone, Debug)]
pub struct TinyParams {
    pub gamma: f64,
    pub d_max: u8,
    pub local_epochs: u8,
    pub aoi_cap: u8,
    pub weight_aoi: f64,
    pub weight_energy: f64,
    pub epoch_seconds: f64,
    pub handover_seconds: f64,
    pub bandwidth_hz: f64,
    pub noise_w_per_hz: f64,
    pub bits_per_packet: f64,
    pub gain_server: f64,
    pub gain_uav: f64,
    /// Energy of one local CPU epoch (both epochs burn the same here).
    pub cpu_epoch_energy: f64,
}

impl Default for TinyParams {
    fn default() -> Self {
        TinyParams {
            gamma: 0.9,
            d_max: 2,
            local_epochs: 2,
            aoi_cap: 4,
            weight_aoi: 10.0,
            weight_energy: 2.0,
            epoch_seconds: 1.0,
            handover_seconds: 1e-2,
            bandwidth_hz: 1e6,
            noise_w_per_hz: 10f64.powf(-17.4),
            bits_per_packet: 5e5,
            // MU on the station cell; UAV directly overhead at 100 m
            gain_server: 1e-4,
            gain_uav: 1.4e-8,
            cpu_epoch_energy: 1.0,
        }
    }
}

/// The tiny MDP in explicit form plus the post-decision bookkeeping the
/// consistency checks need.
pub struct TinyBuild {
    pub mdp: ExplicitMdp,
    pub states: Vec<TinyNode>,
    pub posts: Vec<TinyNode>,
    /// `hop[s][a]` is the post-decision node reached from `s` under `a`.
    pub hop: Vec<Vec<usize>>,
    pub rewards: Vec<Vec<f64>>,
    pub codec: ActionCodec,
    pub params: TinyParams,
}

impl TinyParams {
    fn synth_local(&self, node: &TinyNode) -> LocalState {
        LocalState {
            uav_cell: Location(0),
            mu_cell: Location(0),
            has_task: true,
            association: if node.assoc_uav {
                Attachment::Uav
            } else {
                Attachment::Bs(0)
            },
            cpu_remaining: u32::from(node.cpu_remaining),
            uav_backlog_bits: if node.vm_age.is_some() {
                f64::from(self.d_max) * self.bits_per_packet
            } else {
                0.0
            },
            tx_backlog: node.tx.map_or(0, |(_, d, _)| u32::from(d)),
            aoi_s: f64::from(node.aoi),
            last_payment: 0.0,
            last_service_rate: 0.0,
        }
    }

    fn caps(&self) -> TxCaps {
        // both links support the full task each epoch, handover or not
        TxCaps {
            server: u32::from(self.d_max),
            uav: u32::from(self.d_max),
        }
    }

    /// Deterministic transition: post-decision node, successor, payoff.
    fn step(&self, node: &TinyNode, action: Action) -> (TinyNode, TinyNode, f64) {
        let cap = self.aoi_cap;
        // schedule
        let mut cpu = node.cpu_remaining;
        let mut tx = node.tx;
        let mut vm_age = node.vm_age;
        match action.offload {
            Offload::Local => {
                debug_assert_eq!(cpu, 0);
                cpu = self.local_epochs;
            }
            Offload::Server => {
                debug_assert!(tx.is_none());
                tx = Some((false, self.d_max, 0));
            }
            Offload::Uav => {
                debug_assert!(tx.is_none() && vm_age.is_none());
                tx = Some((true, self.d_max, 0));
            }
            Offload::None => {}
        }
        // association follows the upload destination
        let assoc_uav = match action.offload {
            Offload::Server => false,
            Offload::Uav => true,
            _ => node.assoc_uav,
        };
        let handover = assoc_uav != node.assoc_uav;
        let dt = self.epoch_seconds - self.handover_seconds * f64::from(u8::from(handover));

        // transmit (the agent always wins the uncontested channel)
        let won = action.wants_channel;
        let mut energy = 0.0;
        let mut server_drain: Option<u8> = None;
        let mut staged_vm: Option<u8> = None;
        if won && action.packets > 0 {
            let (to_uav, d, age) = tx.expect("masked actions transmit only with a pipeline");
            let sent = action.packets.min(u32::from(d)) as u8;
            let gain = if to_uav { self.gain_uav } else { self.gain_server };
            energy += crate::link::tx_energy(
                gain,
                dt,
                self.bandwidth_hz,
                self.noise_w_per_hz,
                u32::from(sent),
                self.bits_per_packet,
            );
            let left = d - sent;
            if left == 0 {
                if to_uav {
                    staged_vm = Some(age.saturating_add(1).min(cap));
                } else {
                    server_drain = Some(age);
                }
                tx = None;
            } else {
                tx = Some((to_uav, left, age));
            }
        }
        let post = TinyNode {
            assoc_uav: node.assoc_uav,
            cpu_remaining: node.cpu_remaining,
            tx: match action.offload {
                // the hop records the transmitter right after transmissions
                Offload::Server => Some((false, self.d_max - action.packets as u8, 0)),
                Offload::Uav => Some((true, self.d_max - action.packets as u8, 0)),
                _ => match (node.tx, won && action.packets > 0) {
                    (Some((to_uav, d, age)), true) => {
                        Some((to_uav, d - action.packets as u8, age))
                    }
                    (t, _) => t,
                },
            },
            vm_age: node.vm_age,
            aoi: node.aoi,
        };

        // processing
        let mut local_done = false;
        if cpu > 0 {
            energy += self.cpu_epoch_energy;
            cpu -= 1;
            local_done = cpu == 0;
        }
        let vm_done = vm_age.take();

        // AoI: freshest completion (smallest age) wins, else linear growth
        let mut candidates: Vec<(u8, u8)> = Vec::new();
        if local_done {
            // scheduled at age zero, completes after local_epochs epochs
            let age = self.local_epochs - 1;
            candidates.push((age, (age + 1).min(cap)));
        }
        if let Some(age) = server_drain {
            candidates.push((age, age.saturating_add(1).min(cap)));
        }
        if let Some(age) = vm_done {
            candidates.push((age, age.saturating_add(1).min(cap)));
        }
        let aoi_next = match candidates.iter().min_by_key(|(age, _)| *age) {
            Some(&(_, value)) => value,
            None => (node.aoi + 1).min(cap),
        };

        let utility =
            crate::compute::utility(f64::from(node.aoi), energy, self.weight_aoi, self.weight_energy);

        let next = TinyNode {
            assoc_uav,
            cpu_remaining: cpu,
            tx: tx.map(|(to_uav, d, age)| (to_uav, d, (age + 1).min(cap))),
            vm_age: staged_vm,
            aoi: aoi_next,
        };
        (post, next, utility)
    }
}

/// Enumerate the reachable tiny MDP by breadth-first search from the
/// initial all-idle state.
pub fn build_tiny(params: TinyParams) -> TinyBuild {
    let codec = ActionCodec::new(u32::from(params.d_max));
    let caps = params.caps();
    let initial = TinyNode {
        assoc_uav: false,
        cpu_remaining: 0,
        tx: None,
        vm_age: None,
        aoi: 0,
    };
    let mut index = std::collections::HashMap::new();
    let mut post_index = std::collections::HashMap::new();
    let mut states = vec![initial];
    index.insert(initial, 0usize);
    let mut posts: Vec<TinyNode> = Vec::new();

    let mut feasible = Vec::new();
    let mut transitions = Vec::new();
    let mut hop = Vec::new();
    let mut rewards = Vec::new();

    let mut cursor = 0;
    while cursor < states.len() {
        let node = states[cursor];
        let local = params.synth_local(&node);
        let mask = feasible_actions(&local, &caps, &codec);
        let feas = mask.allowed_indices();
        let mut row_tr = vec![Vec::new(); codec.total()];
        let mut row_hop = vec![usize::MAX; codec.total()];
        let mut row_r = vec![0.0; codec.total()];
        for &a_idx in &feas {
            let action = codec.decode(a_idx);
            let (post, next, reward) = params.step(&node, action);
            let next_id = *index.entry(next).or_insert_with(|| {
                states.push(next);
                states.len() - 1
            });
            let post_id = *post_index.entry(post).or_insert_with(|| {
                posts.push(post);
                posts.len() - 1
            });
            row_tr[a_idx] = vec![(next_id, 1.0, reward)];
            row_hop[a_idx] = post_id;
            row_r[a_idx] = reward;
        }
        feasible.push(feas);
        transitions.push(row_tr);
        hop.push(row_hop);
        rewards.push(row_r);
        cursor += 1;
    }

    let mdp = ExplicitMdp {
        n_states: states.len(),
        n_actions: codec.total(),
        feasible,
        transitions,
        initial: 0,
    };
    TinyBuild {
        mdp,
        states,
        posts,
        hop,
        rewards,
        codec,
        params,
    }
}

/// Run the tabular learners for `steps` one-experience updates under
/// exploring starts: each experience begins from a uniformly drawn
/// reachable state with a uniformly drawn feasible action, so the finite
/// state-action space is exhaustively explored.
pub fn rollout_tabular(build: &TinyBuild, steps: u64, rng: &mut ChaCha12Rng) -> TabularTables {
    let mut tables = TabularTables::new(
        build.mdp.n_states,
        build.posts.len(),
        build.mdp.n_actions,
        build.params.gamma,
    );
    for _ in 0..steps {
        let s = rng.random_range(0..build.mdp.n_states);
        let feas = &build.mdp.feasible[s];
        let a = feas[rng.random_range(0..feas.len())];
        let (next, _, reward) = build.mdp.transitions[s][a][0];
        tables.update(s, a, build.hop[s][a], reward, next, &build.mdp.feasible[next]);
    }
    tables
}

/// Fraction of states where `policy` picks an action whose exact Q-value
/// is within `tol` of the state's optimal value.
pub fn policy_match_fraction(
    q_star: &[Vec<f64>],
    feasible: &[Vec<usize>],
    policy: &[Option<usize>],
    tol: f64,
) -> f64 {
    let mut total = 0usize;
    let mut matched = 0usize;
    for (s, feas) in feasible.iter().enumerate() {
        if feas.is_empty() {
            continue;
        }
        total += 1;
        let v_star = feas
            .iter()
            .map(|&a| q_star[s][a])
            .fold(f64::NEG_INFINITY, f64::max);
        if let Some(a) = policy[s] {
            if q_star[s][a] >= v_star - tol {
                matched += 1;
            }
        }
    }
    matched as f64 / total.max(1) as f64
}

/// All feasible (state, action) pairs of the tiny MDP.
pub fn all_pairs(build: &TinyBuild) -> Vec<(usize, usize)> {
    build
        .mdp
        .feasible
        .iter()
        .enumerate()
        .flat_map(|(s, feas)| feas.iter().map(move |&a| (s, a)))
        .collect()
}

/// Model-based post-decision table: `gamma * v(successor)` keyed by the
/// hop node, exact by construction.
pub fn model_post_q(build: &TinyBuild, v: &[f64]) -> Vec<Vec<f64>> {
    let mut pq = vec![vec![0.0; build.mdp.n_actions]; build.posts.len()];
    for (s, feas) in build.mdp.feasible.iter().enumerate() {
        for &a in feas {
            let (next, _, _) = build.mdp.transitions[s][a][0];
            let value = build.params.gamma * v[next];
            let slot = &mut pq[build.hop[s][a]][a];
            debug_assert!(*slot == 0.0 || (*slot - value).abs() < 1e-12);
            *slot = value;
        }
    }
    pq
}
