//! Exact VCG channel auction: winner determination under the spatial
//! interference constraints, externality payments, and a brute-force
//! enumeration oracle for testing.
//!
//! Constraints on an allocation: a channel cannot be reused by server
//! transmitters under adjacent stations, cannot be shared between server
//! and UAV transmissions, hosts at most one MU per station and at most
//! one UAV transmitter, and an MU holds at most one channel.

use std::collections::HashMap;

/// Channel demand of a bid; a task upload targets one destination.
#[derive(Copy, Clone, PartialEq, Eq, Debug)]
pub enum Demand {
    None,
    Server,
    Uav,
}

/// Sealed bid: a true valuation over one demanded channel.
#[derive(Copy, Clone, Debug)]
pub struct Bid {
    pub mu: usize,
    pub valuation: f64,
    pub demand: Demand,
    /// Station covering the bidder's cell (used by server-side constraints).
    pub serving_bs: u8,
}

impl Bid {
    pub fn none(mu: usize) -> Self {
        Bid {
            mu,
            valuation: 0.0,
            demand: Demand::None,
            serving_bs: 0,
        }
    }
}

/// Station adjacency for the auction, independent of grid geometry.
#[derive(Clone, Debug)]
pub struct Topology {
    bs_count: usize,
    adj: Vec<bool>,
}

impl Topology {
    pub fn new(bs_count: usize) -> Self {
        Topology {
            bs_count,
            adj: vec![false; bs_count * bs_count],
        }
    }

    pub fn bs_count(&self) -> usize {
        self.bs_count
    }

    pub fn set_adjacent(&mut self, a: usize, b: usize) {
        assert!(a != b && a < self.bs_count && b < self.bs_count);
        self.adj[a * self.bs_count + b] = true;
        self.adj[b * self.bs_count + a] = true;
    }

    pub fn is_adjacent(&self, a: usize, b: usize) -> bool {
        self.adj[a * self.bs_count + b]
    }

    /// True when no two stations in `set` (bitmask) are adjacent.
    fn is_independent(&self, set: u32) -> bool {
        let mut rest = set;
        while rest != 0 {
            let a = rest.trailing_zeros() as usize;
            rest &= rest - 1;
            let mut others = rest;
            while others != 0 {
                let b = others.trailing_zeros() as usize;
                others &= others - 1;
                if self.is_adjacent(a, b) {
                    return false;
                }
            }
        }
        true
    }
}

/// Outcome of one auction round, index-aligned with the submitted bids.
#[derive(Clone, Debug, PartialEq)]
pub struct Allocation {
    pub winners: Vec<bool>,
    pub channels: Vec<Option<u32>>,
    pub payments: Vec<f64>,
}

impl Allocation {
    pub fn total_welfare(&self, bids: &[Bid]) -> f64 {
        self.winners
            .iter()
            .zip(bids)
            .filter(|(w, _)| **w)
            .map(|(_, b)| b.valuation)
            .sum()
    }

    pub fn winner_ids(&self) -> Vec<usize> {
        self.winners
            .iter()
            .enumerate()
            .filter(|(_, w)| **w)
            .map(|(k, _)| k)
            .collect()
    }

    pub fn revenue(&self) -> f64 {
        self.payments.iter().sum()
    }
}

/// Check an explicit channel assignment against all five constraints.
pub fn check_feasible_allocation(
    channels: &[Option<u32>],
    bids: &[Bid],
    n_channels: usize,
    topo: &Topology,
) -> bool {
    assert_eq!(channels.len(), bids.len());
    for (slot, bid) in channels.iter().zip(bids) {
        if let Some(c) = slot {
            if *c as usize >= n_channels || bid.demand == Demand::None {
                return false;
            }
        }
    }
    for c in 0..n_channels as u32 {
        let mut server_bss: Vec<u8> = Vec::new();
        let mut uav_users = 0usize;
        for (slot, bid) in channels.iter().zip(bids) {
            if *slot != Some(c) {
                continue;
            }
            match bid.demand {
                Demand::Server => server_bss.push(bid.serving_bs),
                Demand::Uav => uav_users += 1,
                Demand::None => return false,
            }
        }
        if uav_users > 1 {
            return false;
        }
        if uav_users > 0 && !server_bss.is_empty() {
            return false;
        }
        for i in 0..server_bss.len() {
            for j in (i + 1)..server_bss.len() {
                let (a, b) = (server_bss[i] as usize, server_bss[j] as usize);
                if a == b || topo.is_adjacent(a, b) {
                    return false;
                }
            }
        }
    }
    true
}

/// Minimum channels to serve `demands[b]` simultaneous server uploads per
/// station: exact multicoloring of the station graph by memoized search
/// over maximal independent sets.
struct Multicolor<'a> {
    topo: &'a Topology,
    independent: Vec<u32>,
    memo: HashMap<Vec<u32>, u32>,
}

impl<'a> Multicolor<'a> {
    fn new(topo: &'a Topology) -> Self {
        let b = topo.bs_count();
        assert!(b <= 16, "station graph too large for exact multicoloring");
        let independent = (1u32..(1 << b))
            .filter(|&s| topo.is_independent(s))
            .collect();
        Multicolor {
            topo,
            independent,
            memo: HashMap::new(),
        }
    }

    fn support(demands: &[u32]) -> u32 {
        demands
            .iter()
            .enumerate()
            .filter(|(_, &d)| d > 0)
            .fold(0u32, |m, (b, _)| m | (1 << b))
    }

    /// Independent subsets of `support` that cannot be extended within it.
    fn maximal_sets(&self, support: u32) -> Vec<u32> {
        let mut out = Vec::new();
        for &s in &self.independent {
            if s & !support != 0 {
                continue;
            }
            let extendable = (0..self.topo.bs_count()).any(|b| {
                let bit = 1u32 << b;
                bit & support != 0 && bit & s == 0 && self.topo.is_independent(s | bit)
            });
            if !extendable {
                out.push(s);
            }
        }
        out
    }

    fn min_colors(&mut self, demands: &[u32]) -> u32 {
        let support = Self::support(demands);
        if support == 0 {
            return 0;
        }
        if let Some(&v) = self.memo.get(demands) {
            return v;
        }
        let mut best = u32::MAX;
        for s in self.maximal_sets(support) {
            let mut next = demands.to_vec();
            for b in 0..demands.len() {
                if s & (1 << b) != 0 {
                    next[b] -= 1;
                }
            }
            best = best.min(1 + self.min_colors(&next));
        }
        self.memo.insert(demands.to_vec(), best);
        best
    }

    /// A concrete optimal coloring: one station set per channel, in the
    /// deterministic order the search finds them.
    fn coloring(&mut self, demands: &[u32]) -> Vec<u32> {
        let mut sets = Vec::new();
        let mut current = demands.to_vec();
        while Self::support(&current) != 0 {
            let target = self.min_colors(&current);
            let support = Self::support(&current);
            let mut chosen = None;
            for s in self.maximal_sets(support) {
                let mut next = current.clone();
                for b in 0..current.len() {
                    if s & (1 << b) != 0 {
                        next[b] -= 1;
                    }
                }
                if 1 + self.min_colors(&next) == target {
                    chosen = Some((s, next));
                    break;
                }
            }
            let (s, next) = chosen.expect("a maximal set must achieve the optimum");
            sets.push(s);
            current = next;
        }
        sets
    }
}

/// Sorted bidder pools per destination: (valuation descending, id ascending).
struct Pools {
    per_bs: Vec<Vec<usize>>,
    uav: Vec<usize>,
}

fn build_pools(bids: &[Bid], topo: &Topology) -> Pools {
    let sort_key = |ids: &mut Vec<usize>| {
        ids.sort_by(|&a, &b| {
            bids[b]
                .valuation
                .partial_cmp(&bids[a].valuation)
                .expect("valuations must be comparable")
                .then(bids[a].mu.cmp(&bids[b].mu))
        });
    };
    let mut per_bs = vec![Vec::new(); topo.bs_count()];
    let mut uav = Vec::new();
    for (k, bid) in bids.iter().enumerate() {
        debug_assert_eq!(bid.mu, k, "bids must be index-aligned");
        debug_assert!(bid.valuation >= 0.0);
        match bid.demand {
            Demand::Server => per_bs[bid.serving_bs as usize].push(k),
            Demand::Uav => uav.push(k),
            Demand::None => {}
        }
    }
    for ids in per_bs.iter_mut() {
        sort_key(ids);
    }
    sort_key(&mut uav);
    Pools { per_bs, uav }
}

/// Welfare-maximizing winner set under the interference constraints;
/// ties resolved toward the lexicographically smallest winner-id set.
/// Payments are left at zero.
pub fn determine_winners(bids: &[Bid], n_channels: usize, topo: &Topology) -> Allocation {
    let pools = build_pools(bids, topo);
    let mut colorer = Multicolor::new(topo);
    let b_count = topo.bs_count();

    let prefix = |ids: &[usize]| -> Vec<f64> {
        let mut acc = 0.0;
        let mut out = vec![0.0];
        for &k in ids {
            acc += bids[k].valuation;
            out.push(acc);
        }
        out
    };
    let bs_prefix: Vec<Vec<f64>> = pools.per_bs.iter().map(|ids| prefix(ids)).collect();
    let uav_prefix = prefix(&pools.uav);

    let mut best: Option<(f64, Vec<usize>, Vec<u32>, usize)> = None; // welfare, ids, counts, m
    let max_m = pools.uav.len().min(n_channels);
    for m in 0..=max_m {
        let remaining = (n_channels - m) as u32;
        // enumerate per-station winner counts
        let mut counts = vec![0u32; b_count];
        loop {
            let colors = colorer.min_colors(&counts);
            if colors <= remaining {
                let welfare = uav_prefix[m]
                    + counts
                        .iter()
                        .enumerate()
                        .map(|(b, &n)| bs_prefix[b][n as usize])
                        .sum::<f64>();
                let better = match &best {
                    None => true,
                    Some((w, ids, _, _)) => {
                        welfare > *w
                            || (welfare == *w && {
                                let cand = winner_ids_for(&pools, &counts, m);
                                cand < *ids
                            })
                    }
                };
                if better {
                    let ids = winner_ids_for(&pools, &counts, m);
                    best = Some((welfare, ids, counts.clone(), m));
                }
            }
            // next count vector; capping each digit at the pool size
            let mut b = 0;
            loop {
                if b == b_count {
                    break;
                }
                let cap = pools.per_bs[b].len().min(remaining as usize) as u32;
                if counts[b] < cap {
                    counts[b] += 1;
                    break;
                }
                counts[b] = 0;
                b += 1;
            }
            if b == b_count {
                break;
            }
        }
    }

    let (_, winner_ids, counts, m) = best.expect("at least the empty allocation is feasible");
    let mut winners = vec![false; bids.len()];
    for &k in &winner_ids {
        winners[k] = true;
    }

    // Materialize the channel assignment: server colors first, then one
    // dedicated channel per UAV winner.
    let mut channels = vec![None; bids.len()];
    let color_sets = colorer.coloring(&counts);
    let mut per_bs_next: Vec<usize> = vec![0; b_count];
    for (c, set) in color_sets.iter().enumerate() {
        for b in 0..b_count {
            if set & (1 << b) != 0 && per_bs_next[b] < counts[b] as usize {
                let k = pools.per_bs[b][per_bs_next[b]];
                channels[k] = Some(c as u32);
                per_bs_next[b] += 1;
            }
        }
    }
    let server_colors = color_sets.len() as u32;
    for (i, &k) in pools.uav.iter().take(m).enumerate() {
        channels[k] = Some(server_colors + i as u32);
    }

    Allocation {
        winners,
        channels,
        payments: vec![0.0; bids.len()],
    }
}

fn winner_ids_for(pools: &Pools, counts: &[u32], m: usize) -> Vec<usize> {
    let mut ids: Vec<usize> = Vec::new();
    for (b, &n) in counts.iter().enumerate() {
        ids.extend_from_slice(&pools.per_bs[b][..n as usize]);
    }
    ids.extend_from_slice(&pools.uav[..m]);
    ids.sort_unstable();
    ids
}

/// VCG payments: what the others could have earned without the bidder,
/// minus what they earn at the chosen allocation.
pub fn compute_payments(
    bids: &[Bid],
    alloc: &Allocation,
    n_channels: usize,
    topo: &Topology,
) -> Vec<f64> {
    let chosen_welfare = alloc.total_welfare(bids);
    let mut payments = vec![0.0; bids.len()];
    for (k, bid) in bids.iter().enumerate() {
        if !alloc.winners[k] {
            continue;
        }
        let mut without = bids.to_vec();
        without[k] = Bid::none(k);
        let counterfactual = determine_winners(&without, n_channels, topo);
        let others_best = counterfactual.total_welfare(&without);
        let others_now = chosen_welfare - bid.valuation;
        payments[k] = (others_best - others_now).max(0.0);
    }
    payments
}

/// Winner determination plus payments.
pub fn solve(bids: &[Bid], n_channels: usize, topo: &Topology) -> Allocation {
    let mut alloc = determine_winners(bids, n_channels, topo);
    alloc.payments = compute_payments(bids, &alloc, n_channels, topo);
    alloc
}

/// Exhaustive oracle: enumerates every winner set and channel assignment.
/// Refuses instances beyond 8 bidders or 4 channels.
pub fn oracle_enumerate(bids: &[Bid], n_channels: usize, topo: &Topology) -> Allocation {
    assert!(
        bids.len() <= 8 && n_channels <= 4,
        "oracle refuses instances larger than 8 bidders / 4 channels"
    );
    let active: Vec<usize> = bids
        .iter()
        .enumerate()
        .filter(|(_, b)| b.demand != Demand::None)
        .map(|(k, _)| k)
        .collect();

    let mut best: Option<(f64, Vec<usize>, Vec<Option<u32>>)> = None;
    let mut best_without = vec![0.0f64; bids.len()];

    for mask in 0u32..(1 << active.len()) {
        let set: Vec<usize> = active
            .iter()
            .enumerate()
            .filter(|(i, _)| mask & (1 << i) != 0)
            .map(|(_, &k)| k)
            .collect();
        let mut assignment = vec![None; bids.len()];
        if !assign_channels(&set, 0, bids, n_channels, topo, &mut assignment) {
            continue;
        }
        let welfare: f64 = set.iter().map(|&k| bids[k].valuation).sum();
        for k in 0..bids.len() {
            if !set.contains(&k) {
                best_without[k] = best_without[k].max(welfare);
            }
        }
        let better = match &best {
            None => true,
            Some((w, ids, _)) => welfare > *w || (welfare == *w && set < *ids),
        };
        if better {
            best = Some((welfare, set, assignment));
        }
    }

    let (welfare, winner_ids, channels) = best.expect("empty set is always feasible");
    let mut winners = vec![false; bids.len()];
    for &k in &winner_ids {
        winners[k] = true;
    }
    let mut payments = vec![0.0; bids.len()];
    for &k in &winner_ids {
        payments[k] = (best_without[k] - (welfare - bids[k].valuation)).max(0.0);
    }
    Allocation {
        winners,
        channels,
        payments,
    }
}

/// Depth-first exhaustive channel assignment for the oracle.
fn assign_channels(
    set: &[usize],
    i: usize,
    bids: &[Bid],
    n_channels: usize,
    topo: &Topology,
    assignment: &mut Vec<Option<u32>>,
) -> bool {
    if i == set.len() {
        return true;
    }
    let k = set[i];
    for c in 0..n_channels as u32 {
        let mut ok = true;
        for &other in &set[..i] {
            if assignment[other] != Some(c) {
                continue;
            }
            ok = match (bids[k].demand, bids[other].demand) {
                (Demand::Server, Demand::Server) => {
                    let (a, b) = (bids[k].serving_bs as usize, bids[other].serving_bs as usize);
                    a != b && !topo.is_adjacent(a, b)
                }
                _ => false,
            };
            if !ok {
                break;
            }
        }
        if ok {
            assignment[k] = Some(c);
            if assign_channels(set, i + 1, bids, n_channels, topo, assignment) {
                return true;
            }
            assignment[k] = None;
        }
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn line_topology(b: usize) -> Topology {
        let mut t = Topology::new(b);
        for i in 0..b.saturating_sub(1) {
            t.set_adjacent(i, i + 1);
        }
        t
    }

    fn server_bid(mu: usize, v: f64, bs: u8) -> Bid {
        Bid {
            mu,
            valuation: v,
            demand: Demand::Server,
            serving_bs: bs,
        }
    }

    fn uav_bid(mu: usize, v: f64) -> Bid {
        Bid {
            mu,
            valuation: v,
            demand: Demand::Uav,
            serving_bs: 0,
        }
    }

    #[test]
    fn empty_assignment_is_feasible() {
        let topo = line_topology(2);
        let bids = vec![Bid::none(0), Bid::none(1)];
        assert!(check_feasible_allocation(
            &[None, None],
            &bids,
            1,
            &topo
        ));
    }

    #[test]
    fn adjacent_reuse_rejected() {
        let topo = line_topology(2);
        let bids = vec![server_bid(0, 5.0, 0), server_bid(1, 3.0, 1)];
        assert!(!check_feasible_allocation(
            &[Some(0), Some(0)],
            &bids,
            1,
            &topo
        ));
    }

    #[test]
    fn server_uav_sharing_rejected() {
        let topo = line_topology(2);
        let bids = vec![server_bid(0, 5.0, 0), uav_bid(1, 3.0)];
        assert!(!check_feasible_allocation(
            &[Some(0), Some(0)],
            &bids,
            1,
            &topo
        ));
    }

    #[test]
    fn lone_bidder_wins_free() {
        let topo = line_topology(1);
        let bids = vec![server_bid(0, 5.0, 0)];
        let alloc = solve(&bids, 1, &topo);
        assert!(alloc.winners[0]);
        assert_eq!(alloc.payments[0], 0.0);
    }

    #[test]
    fn spatial_reuse_on_one_channel() {
        // two server bidders under non-adjacent stations share the channel
        let mut topo = Topology::new(3);
        topo.set_adjacent(0, 1);
        topo.set_adjacent(1, 2);
        let bids = vec![server_bid(0, 5.0, 0), server_bid(1, 3.0, 2)];
        let alloc = solve(&bids, 1, &topo);
        assert!(alloc.winners[0] && alloc.winners[1]);
        assert_eq!(alloc.channels[0], alloc.channels[1]);
        assert_eq!(alloc.payments, vec![0.0, 0.0]);
    }

    #[test]
    fn uav_channel_is_exclusive() {
        let topo = line_topology(1);
        let bids = vec![uav_bid(0, 5.0), uav_bid(1, 3.0)];
        let alloc = solve(&bids, 1, &topo);
        assert!(alloc.winners[0]);
        assert!(!alloc.winners[1]);
        assert_eq!(alloc.payments[0], 3.0);
    }

    #[test]
    fn second_price_at_same_station() {
        let topo = line_topology(2);
        let bids = vec![server_bid(0, 5.0, 0), server_bid(1, 3.0, 0)];
        let alloc = solve(&bids, 1, &topo);
        assert!(alloc.winners[0] && !alloc.winners[1]);
        assert_eq!(alloc.payments[0], 3.0);
    }

    #[test]
    fn abundant_channels_mean_free_access() {
        let topo = line_topology(2);
        let bids = vec![server_bid(0, 5.0, 0), server_bid(1, 3.0, 1)];
        let alloc = solve(&bids, 2, &topo);
        assert!(alloc.winners[0] && alloc.winners[1]);
        assert_eq!(alloc.payments, vec![0.0, 0.0]);
    }

    fn random_instance(rng: &mut impl Rng) -> (Vec<Bid>, usize, Topology) {
        let b = rng.random_range(1..=4usize);
        let mut topo = Topology::new(b);
        for i in 0..b {
            for j in (i + 1)..b {
                if rng.random::<f64>() < 0.5 {
                    topo.set_adjacent(i, j);
                }
            }
        }
        let k = rng.random_range(1..=6usize);
        let n_channels = rng.random_range(1..=4usize);
        let bids = (0..k)
            .map(|mu| {
                // dyadic valuations keep welfare sums exact in any order
                let v = f64::from(rng.random_range(0..=1024u32)) / 64.0;
                match rng.random_range(0..3u32) {
                    0 => Bid::none(mu),
                    1 => server_bid(mu, v, rng.random_range(0..b as u8)),
                    _ => uav_bid(mu, v),
                }
            })
            .collect();
        (bids, n_channels, topo)
    }

    #[test]
    fn solver_matches_oracle_on_random_instances() {
        let mut rng = crate::rng::stream(2024, "auction-test", 0);
        for _ in 0..300 {
            let (bids, c, topo) = random_instance(&mut rng);
            let fast = solve(&bids, c, &topo);
            let slow = oracle_enumerate(&bids, c, &topo);
            assert_eq!(fast.total_welfare(&bids), slow.total_welfare(&bids));
            assert_eq!(fast.winner_ids(), slow.winner_ids());
            assert_eq!(fast.payments, slow.payments);
            assert!(check_feasible_allocation(&fast.channels, &bids, c, &topo));
        }
    }

    #[test]
    fn winners_hold_exactly_one_channel() {
        let mut rng = crate::rng::stream(7, "auction-test", 1);
        for _ in 0..100 {
            let (bids, c, topo) = random_instance(&mut rng);
            let alloc = solve(&bids, c, &topo);
            for k in 0..bids.len() {
                assert_eq!(alloc.winners[k], alloc.channels[k].is_some());
                if !alloc.winners[k] {
                    assert_eq!(alloc.payments[k], 0.0);
                }
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn vcg_is_individually_rational(seed in 0u64..10_000) {
            let mut rng = crate::rng::stream(seed, "auction-prop", 0);
            let (bids, c, topo) = random_instance(&mut rng);
            let alloc = solve(&bids, c, &topo);
            for k in 0..bids.len() {
                prop_assert!(alloc.payments[k] >= 0.0);
                if alloc.winners[k] {
                    prop_assert!(bids[k].valuation >= alloc.payments[k] - 1e-9);
                }
            }
        }

        #[test]
        fn raising_a_valuation_never_loses_the_channel(seed in 0u64..10_000) {
            let mut rng = crate::rng::stream(seed, "auction-mono", 0);
            let (bids, c, topo) = random_instance(&mut rng);
            let before = determine_winners(&bids, c, &topo);
            let k = rng.random_range(0..bids.len());
            let mut raised = bids.clone();
            raised[k].valuation += f64::from(rng.random_range(1..=512u32)) / 64.0;
            let after = determine_winners(&raised, c, &topo);
            if before.winners[k] {
                prop_assert!(after.winners[k], "winner {k} dropped after raising its bid");
            }
        }
    }
}
