//! Local CPU dynamics and energy, UAV virtual-machine service rates,
//! remote-processing state, AoI evolution and the per-epoch payoff.

use crate::world::WorldConfig;

/// Per-MU pipeline states: local CPU countdown, UAV execution backlog,
/// transmitter backlog, and the arrival epochs of the tasks currently in
/// each pipeline (0 = pipeline empty).
#[derive(Copy, Clone, Debug, Default, PartialEq)]
pub struct ProcessorState {
    /// Remaining epochs on the local CPU (W_m).
    pub cpu_remaining: u32,
    /// Bits left to execute at the UAV (W_v).
    pub uav_backlog_bits: f64,
    /// Packets left at the transmitter (D).
    pub tx_backlog: u32,
    pub t_local: u64,
    pub t_server: u64,
    pub t_uav: u64,
}

/// Age of information in seconds, clamped to `[0, A_max]`.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct AoiState {
    pub seconds: f64,
}

impl AoiState {
    pub fn initial() -> Self {
        AoiState { seconds: 0.0 }
    }
}

/// Which pipeline produced a computation outcome this epoch.
#[derive(Copy, Clone, Debug, PartialEq)]
pub enum CompletionKind {
    Local,
    Server,
    /// Carries the in-epoch completion offset `W_v / chi` in seconds.
    Uav { residual_s: f64 },
}

#[derive(Copy, Clone, Debug, PartialEq)]
pub struct CompletionEvent {
    pub kind: CompletionKind,
    pub arrival_epoch: u64,
}

/// Epochs needed to finish a task locally: `ceil(D_max * mu * theta / (delta * rho))`.
pub fn local_epochs_required(cfg: &WorldConfig) -> u32 {
    let work = f64::from(cfg.packets_per_task) * cfg.bits_per_packet * cfg.cycles_per_bit;
    (work / (cfg.epoch_seconds * cfg.cpu_hz)).ceil() as u32
}

/// CPU energy for one epoch given the countdown at the epoch start.
pub fn local_cpu_energy(cpu_remaining: u32, cfg: &WorldConfig) -> f64 {
    let delta = local_epochs_required(cfg);
    match cpu_remaining {
        0 => 0.0,
        1 => {
            let work = f64::from(cfg.packets_per_task) * cfg.bits_per_packet * cfg.cycles_per_bit;
            let done = f64::from(delta - 1) * cfg.epoch_seconds * cfg.cpu_hz;
            cfg.capacitance * (work - done) * cfg.cpu_hz.powi(2)
        }
        _ => cfg.capacitance * cfg.epoch_seconds * cfg.cpu_hz.powi(3),
    }
}

/// Advance the local CPU one epoch. Returns the energy consumed and a
/// completion event when the countdown hits zero.
pub fn local_cpu_step(
    state: &mut ProcessorState,
    cfg: &WorldConfig,
) -> (f64, Option<CompletionEvent>) {
    let energy = local_cpu_energy(state.cpu_remaining, cfg);
    let mut event = None;
    if state.cpu_remaining > 0 {
        state.cpu_remaining -= 1;
        if state.cpu_remaining == 0 {
            event = Some(CompletionEvent {
                kind: CompletionKind::Local,
                arrival_epoch: std::mem::take(&mut state.t_local),
            });
        }
    }
    (energy, event)
}

/// Degraded VM service rate with `n` tasks multiplexed at the UAV:
/// `chi_0 * (1 + eps)^(1 - n)`.
pub fn vm_service_rate(chi0: f64, eps: f64, n: usize) -> f64 {
    debug_assert!(n >= 1);
    chi0 * (1.0 + eps).powi(1 - n as i32)
}

/// Advance UAV execution for every MU with a non-empty remote backlog.
///
/// All active VMs share the epoch's degraded rate; a backlog reaching
/// zero completes with the in-epoch residual `W_v / chi`. Returns the
/// service rate observed this epoch (if any VM was active) and the
/// completion events as `(mu_index, event)` pairs.
pub fn uav_processing_step(
    states: &mut [ProcessorState],
    cfg: &WorldConfig,
) -> (Option<f64>, Vec<(usize, CompletionEvent)>) {
    let n = states.iter().filter(|s| s.uav_backlog_bits > 0.0).count();
    if n == 0 {
        return (None, Vec::new());
    }
    let chi = vm_service_rate(cfg.vm_rate_bps, cfg.vm_interference, n);
    let mut events = Vec::new();
    for (k, s) in states.iter_mut().enumerate() {
        if s.uav_backlog_bits <= 0.0 {
            continue;
        }
        let before = s.uav_backlog_bits;
        s.uav_backlog_bits = (s.uav_backlog_bits - chi * cfg.epoch_seconds).max(0.0);
        if s.uav_backlog_bits == 0.0 {
            events.push((
                k,
                CompletionEvent {
                    kind: CompletionKind::Uav {
                        residual_s: before / chi,
                    },
                    arrival_epoch: std::mem::take(&mut s.t_uav),
                },
            ));
        }
    }
    (Some(chi), events)
}

/// AoI of a task completing during epoch `j`, by pipeline.
pub fn completion_aoi(event: &CompletionEvent, epoch: u64, cfg: &WorldConfig) -> f64 {
    debug_assert!(event.arrival_epoch > 0, "completion without a task");
    let delta = cfg.epoch_seconds;
    let j = epoch as f64;
    let t = event.arrival_epoch as f64;
    match event.kind {
        CompletionKind::Local => {
            let epochs = f64::from(local_epochs_required(cfg));
            let compute_s = f64::from(cfg.packets_per_task) * cfg.bits_per_packet
                * cfg.cycles_per_bit
                / cfg.cpu_hz;
            (j - t - epochs + 1.0) * delta + compute_s
        }
        CompletionKind::Server => (j - t + 1.0) * delta,
        CompletionKind::Uav { residual_s } => (j - t) * delta + residual_s,
    }
}

/// One AoI update. Without outcomes the age grows by `delta`; with one or
/// more outcomes the freshest completed task (largest arrival epoch) sets
/// the new age. The result is clamped to `[0, A_max]`.
pub fn aoi_step(
    aoi: AoiState,
    events: &[CompletionEvent],
    epoch: u64,
    cfg: &WorldConfig,
) -> AoiState {
    let raw = match events.iter().max_by_key(|e| e.arrival_epoch) {
        None => aoi.seconds + cfg.epoch_seconds,
        Some(freshest) => completion_aoi(freshest, epoch, cfg),
    };
    AoiState {
        seconds: raw.clamp(0.0, cfg.aoi_cap_seconds),
    }
}

/// Satisfaction of freshness and energy: `w_a * exp(-A) + w_f * exp(-F)`.
pub fn utility(aoi_s: f64, energy_j: f64, weight_aoi: f64, weight_energy: f64) -> f64 {
    weight_aoi * (-aoi_s).exp() + weight_energy * (-energy_j).exp()
}

/// Immediate payoff: utility minus the auction payment.
pub fn payoff(
    aoi_s: f64,
    energy_j: f64,
    payment: f64,
    weight_aoi: f64,
    weight_energy: f64,
) -> (f64, f64) {
    let u = utility(aoi_s, energy_j, weight_aoi, weight_energy);
    (u, u - payment)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cfg() -> WorldConfig {
        WorldConfig::full_default()
    }

    #[test]
    fn epochs_required_matches_reference_constants() {
        assert_eq!(local_epochs_required(&cfg()), 7);
        // exactly divisible workload needs no rounding
        let mut c = cfg();
        c.cycles_per_bit = 1000.0;
        assert_eq!(local_epochs_required(&c), 5);
    }

    #[test]
    fn epochs_required_brackets_workload() {
        for cycles in [700.0, 1000.0, 1300.0, 1999.0] {
            let mut c = cfg();
            c.cycles_per_bit = cycles;
            let d = f64::from(local_epochs_required(&c));
            let work = f64::from(c.packets_per_task) * c.bits_per_packet * c.cycles_per_bit;
            let per_epoch = c.epoch_seconds * c.cpu_hz;
            assert!(d * per_epoch >= work);
            assert!((d - 1.0) * per_epoch < work);
        }
    }

    #[test]
    fn cpu_energy_branch_values() {
        assert_eq!(local_cpu_energy(0, &cfg()), 0.0);
        assert!((local_cpu_energy(5, &cfg()) - 1.0).abs() < 1e-12);
        assert!((local_cpu_energy(1, &cfg()) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn cpu_pipeline_total_energy() {
        // running a full task costs capacitance * work * rho^2 in total
        let c = cfg();
        let mut s = ProcessorState {
            cpu_remaining: local_epochs_required(&c),
            t_local: 1,
            ..Default::default()
        };
        let mut total = 0.0;
        let mut steps = 0;
        let mut completed = None;
        while s.cpu_remaining > 0 {
            let (e, evt) = local_cpu_step(&mut s, &c);
            total += e;
            steps += 1;
            completed = completed.or(evt);
        }
        assert_eq!(steps, 7);
        assert!((total - 6.5).abs() < 1e-9);
        assert_eq!(
            completed,
            Some(CompletionEvent {
                kind: CompletionKind::Local,
                arrival_epoch: 1
            })
        );
        assert_eq!(s.t_local, 0);
    }

    #[test]
    fn vm_rate_degrades_geometrically() {
        assert_eq!(vm_service_rate(2e7, 0.2, 1), 2e7);
        assert!((vm_service_rate(2e7, 0.2, 2) - 2e7 / 1.2).abs() < 1e-2);
        assert!((vm_service_rate(2e7, 0.2, 3) - 2e7 / 1.44).abs() < 1e-2);
        for n in 1..6 {
            let ratio = vm_service_rate(2e7, 0.2, n) / vm_service_rate(2e7, 0.2, n + 1);
            assert!((ratio - 1.2).abs() < 1e-12);
        }
    }

    #[test]
    fn uav_step_single_vm() {
        let c = cfg();
        let mut states = vec![ProcessorState {
            uav_backlog_bits: 5e6,
            t_uav: 3,
            ..Default::default()
        }];
        let (chi, events) = uav_processing_step(&mut states, &c);
        assert_eq!(chi, Some(2e7));
        assert_eq!(states[0].uav_backlog_bits, 0.0);
        assert_eq!(events.len(), 1);
        match events[0].1.kind {
            CompletionKind::Uav { residual_s } => assert!((residual_s - 0.25).abs() < 1e-12),
            _ => panic!("wrong kind"),
        }
        assert_eq!(events[0].1.arrival_epoch, 3);
    }

    #[test]
    fn uav_step_shared_rate() {
        let c = cfg();
        let mut states = vec![
            ProcessorState {
                uav_backlog_bits: 2e7,
                t_uav: 1,
                ..Default::default()
            },
            ProcessorState {
                uav_backlog_bits: 2e7,
                t_uav: 2,
                ..Default::default()
            },
            ProcessorState::default(),
        ];
        let (chi, events) = uav_processing_step(&mut states, &c);
        let expected = 2e7 / 1.2;
        assert!((chi.unwrap() - expected).abs() < 1e-3);
        assert!(events.is_empty());
        for s in &states[..2] {
            assert!((s.uav_backlog_bits - (2e7 - expected)).abs() < 1e-3);
        }
        assert_eq!(states[2].uav_backlog_bits, 0.0);
    }

    #[test]
    fn aoi_linear_growth_and_cap() {
        let c = cfg();
        let mut a = AoiState { seconds: 3.0 };
        a = aoi_step(a, &[], 10, &c);
        assert_eq!(a.seconds, 4.0);
        let mut a = AoiState {
            seconds: c.aoi_cap_seconds - 0.5,
        };
        a = aoi_step(a, &[], 10, &c);
        assert_eq!(a.seconds, c.aoi_cap_seconds);
    }

    #[test]
    fn aoi_single_completion_branches() {
        let c = cfg();
        // local task scheduled on arrival: completes with age 6.5 s
        let j = 20;
        let local = CompletionEvent {
            kind: CompletionKind::Local,
            arrival_epoch: j - u64::from(local_epochs_required(&c)) + 1,
        };
        let a = aoi_step(AoiState::initial(), &[local], j, &c);
        assert!((a.seconds - 6.5).abs() < 1e-9);
        // server outcome three epochs after arrival
        let server = CompletionEvent {
            kind: CompletionKind::Server,
            arrival_epoch: j - 3,
        };
        let a = aoi_step(AoiState::initial(), &[server], j, &c);
        assert!((a.seconds - 4.0).abs() < 1e-9);
        // UAV outcome five epochs after arrival with residual 1e6 / 2e7
        let uav = CompletionEvent {
            kind: CompletionKind::Uav {
                residual_s: 1e6 / 2e7,
            },
            arrival_epoch: j - 5,
        };
        let a = aoi_step(AoiState::initial(), &[uav], j, &c);
        assert!((a.seconds - 5.05).abs() < 1e-9);
    }

    #[test]
    fn aoi_two_completions_fresher_wins() {
        let c = cfg();
        let j = 30;
        let local = CompletionEvent {
            kind: CompletionKind::Local,
            arrival_epoch: j - 6,
        };
        let server_fresh = CompletionEvent {
            kind: CompletionKind::Server,
            arrival_epoch: j - 2,
        };
        let a = aoi_step(AoiState::initial(), &[local, server_fresh], j, &c);
        assert!((a.seconds - 3.0).abs() < 1e-9);
        // staler second outcome loses regardless of order
        let server_stale = CompletionEvent {
            kind: CompletionKind::Server,
            arrival_epoch: j - 10,
        };
        let a = aoi_step(AoiState::initial(), &[server_stale, local], j, &c);
        let local_age = completion_aoi(&local, j, &c);
        assert!((a.seconds - local_age).abs() < 1e-9);
    }

    #[test]
    fn payoff_values() {
        let (u, l) = payoff(0.0, 0.0, 0.0, 10.0, 2.0);
        assert_eq!(u, 12.0);
        assert_eq!(l, 12.0);
        let (u, _) = payoff(6.5, 1.0, 0.0, 10.0, 2.0);
        assert!((u - 0.7508).abs() < 1e-4);
        let (u, l) = payoff(2.0, 0.5, 1.5, 10.0, 2.0);
        assert!((l - (u - 1.5)).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn aoi_stays_in_range(start in 0.0f64..30.0, epoch in 10u64..100, t_off in 1u64..9) {
            let c = cfg();
            let a0 = AoiState { seconds: start };
            let grown = aoi_step(a0, &[], epoch, &c);
            prop_assert!(grown.seconds >= 0.0 && grown.seconds <= c.aoi_cap_seconds);
            let evt = CompletionEvent { kind: CompletionKind::Server, arrival_epoch: epoch - t_off };
            let done = aoi_step(a0, &[evt], epoch, &c);
            prop_assert!(done.seconds >= 0.0 && done.seconds <= c.aoi_cap_seconds);
        }

        #[test]
        fn utility_bounded(a in 0.0f64..30.0, f in 0.0f64..10.0) {
            let u = utility(a, f, 10.0, 2.0);
            prop_assert!(u > 0.0 && u <= 12.0);
        }
    }
}
