//! Association and handover dynamics, effective transmission time,
//! per-epoch packet capacity and uplink transmit energy.

use crate::agent::Offload;

/// What an MU is attached to: a ground base station or the UAV.
#[derive(Copy, Clone, PartialEq, Eq, Debug)]
pub enum Attachment {
    Bs(u8),
    Uav,
}

impl Attachment {
    /// One-hot slot over B ground stations plus the UAV.
    pub fn one_hot_index(self, bs_count: usize) -> usize {
        match self {
            Attachment::Bs(b) => b as usize,
            Attachment::Uav => bs_count,
        }
    }
}

/// Next association given this epoch's offloading decision and the serving
/// station of the current cell.
///
/// Without a newly scheduled task, an MU attached to the UAV stays there
/// and an MU attached to the ground tracks the serving station of its
/// cell. Scheduling toward the server or the UAV retargets the
/// association so that pending packets route to the upload destination.
/// Returns the new association and whether a handover was triggered.
pub fn update_association(
    current: Attachment,
    offload: Offload,
    serving_bs: u8,
) -> (Attachment, bool) {
    let next = match offload {
        Offload::Server => Attachment::Bs(serving_bs),
        Offload::Uav => Attachment::Uav,
        Offload::None | Offload::Local => match current {
            Attachment::Uav => Attachment::Uav,
            Attachment::Bs(_) => Attachment::Bs(serving_bs),
        },
    };
    (next, next != current)
}

/// Exact transmission time in an epoch: `delta - xi` when a handover
/// occurred, `delta` otherwise.
pub fn transmission_time(delta: f64, xi: f64, handover: bool) -> f64 {
    debug_assert!(delta > xi && xi >= 0.0);
    if handover {
        delta - xi
    } else {
        delta
    }
}

/// Largest packet count whose reliable transmission fits the power budget:
/// `min(backlog, floor((eta * dt / mu) * log2(1 + p_max * gain / (eta * noise))))`.
pub fn max_packets(
    gain: f64,
    dt: f64,
    eta: f64,
    noise_w_per_hz: f64,
    p_max: f64,
    mu_bits: f64,
    backlog: u32,
) -> u32 {
    debug_assert!(dt > 0.0 && eta > 0.0 && noise_w_per_hz > 0.0 && mu_bits > 0.0);
    if gain <= 0.0 || p_max <= 0.0 {
        return 0;
    }
    let snr = p_max * gain / (eta * noise_w_per_hz);
    let cap = (eta * dt / mu_bits) * (1.0 + snr).log2();
    if !cap.is_finite() || cap <= 0.0 {
        return 0;
    }
    let unclamped = cap.floor().min(f64::from(u32::MAX)) as u32;
    unclamped.min(backlog)
}

/// Energy in Joules to reliably deliver `packets` packets within `dt`
/// seconds over a channel with power gain `gain`.
pub fn tx_energy(
    gain: f64,
    dt: f64,
    eta: f64,
    noise_w_per_hz: f64,
    packets: u32,
    mu_bits: f64,
) -> f64 {
    if packets == 0 {
        return 0.0;
    }
    debug_assert!(gain > 0.0 && dt > 0.0);
    let rate_exponent = mu_bits * f64::from(packets) / (eta * dt);
    (dt * eta * noise_w_per_hz / gain) * (2f64.powf(rate_exponent) - 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const ETA: f64 = 1e6;
    const MU: f64 = 5e5;
    const PMAX: f64 = 3.0;

    fn noise() -> f64 {
        10f64.powf(-17.4)
    }

    #[test]
    fn association_follows_coverage() {
        // attached to the UAV, nothing scheduled: stays attached
        let (next, ho) = update_association(Attachment::Uav, Offload::None, 2);
        assert_eq!(next, Attachment::Uav);
        assert!(!ho);
        // coverage change triggers a handover
        let (next, ho) = update_association(Attachment::Bs(2), Offload::None, 3);
        assert_eq!(next, Attachment::Bs(3));
        assert!(ho);
        // scheduling toward the UAV retargets and triggers a handover
        let (next, ho) = update_association(Attachment::Bs(1), Offload::Uav, 1);
        assert_eq!(next, Attachment::Uav);
        assert!(ho);
        // local scheduling behaves like the no-task case
        let (next, ho) = update_association(Attachment::Bs(1), Offload::Local, 1);
        assert_eq!(next, Attachment::Bs(1));
        assert!(!ho);
    }

    #[test]
    fn transmission_time_branches() {
        assert_eq!(transmission_time(1.0, 0.01, false), 1.0);
        assert_eq!(transmission_time(1.0, 0.01, true), 0.99);
        assert_eq!(transmission_time(1.0, 0.0, true), 1.0);
    }

    #[test]
    fn max_packets_hand_value() {
        // G = 1e-10, one-second slot: cap evaluates to ~12.5, backlog 10 wins
        let r = max_packets(1e-10, 1.0, ETA, noise(), PMAX, MU, 10);
        assert_eq!(r, 10);
        let unclamped = max_packets(1e-10, 1.0, ETA, noise(), PMAX, MU, u32::MAX);
        assert_eq!(unclamped, 12);
    }

    #[test]
    fn max_packets_vanishing_gain() {
        assert_eq!(max_packets(0.0, 1.0, ETA, noise(), PMAX, MU, 10), 0);
        assert_eq!(max_packets(1e-30, 1.0, ETA, noise(), PMAX, MU, 10), 0);
    }

    #[test]
    fn tx_energy_hand_value() {
        assert_eq!(tx_energy(1e-10, 1.0, ETA, noise(), 0, MU), 0.0);
        let e = tx_energy(1e-10, 1.0, ETA, noise(), 2, MU);
        let expected = 10f64.powf(-1.4); // (eta*noise/G) * (2^1 - 1)
        assert!((e - expected).abs() < 1e-12 * expected);
    }

    #[test]
    fn tx_energy_superlinear() {
        for r in 1..10u32 {
            let e1 = tx_energy(1e-10, 1.0, ETA, noise(), r, MU);
            let e2 = tx_energy(1e-10, 1.0, ETA, noise(), 2 * r, MU);
            assert!(e2 > 2.0 * e1);
        }
    }

    #[test]
    fn power_budget_respected() {
        // energy(R_max) <= P_max * dt < energy(R_max + 1) whenever unclamped
        for &gain in &[1e-12, 5e-12, 1e-11, 1e-10, 1e-9, 1e-8] {
            for &dt in &[0.99, 1.0] {
                let r = max_packets(gain, dt, ETA, noise(), PMAX, MU, u32::MAX);
                let e = tx_energy(gain, dt, ETA, noise(), r, MU);
                assert!(e <= PMAX * dt + 1e-12, "gain {gain}: {e}");
                let e_next = tx_energy(gain, dt, ETA, noise(), r + 1, MU);
                assert!(e_next > PMAX * dt, "gain {gain}: {e_next}");
            }
        }
    }

    proptest! {
        #[test]
        fn energy_is_increasing_and_convex(gain in 1e-13f64..1e-7, dt in 0.5f64..2.0) {
            let mut prev = 0.0;
            let mut prev_diff = 0.0;
            for r in 1..=12u32 {
                let e = tx_energy(gain, dt, ETA, noise(), r, MU);
                let diff = e - prev;
                prop_assert!(diff > 0.0);
                prop_assert!(diff >= prev_diff);
                prev = e;
                prev_diff = diff;
            }
        }

        #[test]
        fn capped_packets_never_exceed_budget(
            gain in 1e-13f64..1e-7,
            backlog in 0u32..20,
        ) {
            let r = max_packets(gain, 1.0, ETA, noise(), PMAX, MU, backlog);
            prop_assert!(r <= backlog);
            let e = tx_energy(gain, 1.0, ETA, noise(), r, MU);
            prop_assert!(e <= PMAX + 1e-12);
        }
    }
}
