//! Fixed comparison policies: local-only computation, always-server,
//! always-UAV, and greedy link-aware processing.

use crate::agent::{upload_destination, Action, LocalState, Offload, TxCaps};
use crate::auction::Demand;

/// Which policy drives the MUs in a run.
#[derive(Copy, Clone, PartialEq, Eq, Debug)]
pub enum Scheme {
    DeepRl,
    Local,
    Server,
    Uav,
    Greedy,
}

impl Scheme {
    pub const ALL: [Scheme; 5] = [
        Scheme::DeepRl,
        Scheme::Local,
        Scheme::Server,
        Scheme::Uav,
        Scheme::Greedy,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::DeepRl => "deeprl",
            Scheme::Local => "local",
            Scheme::Server => "server",
            Scheme::Uav => "uav",
            Scheme::Greedy => "greedy",
        }
    }
}

impl std::str::FromStr for Scheme {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "deeprl" => Ok(Scheme::DeepRl),
            "local" => Ok(Scheme::Local),
            "server" => Ok(Scheme::Server),
            "uav" => Ok(Scheme::Uav),
            "greedy" => Ok(Scheme::Greedy),
            other => Err(format!("unknown scheme `{other}`")),
        }
    }
}

/// Decision of a fixed baseline given the observation, the power-limited
/// per-destination packet caps, and the current channel gains.
pub fn baseline_action(
    scheme: Scheme,
    s: &LocalState,
    caps: &TxCaps,
    gain_server: f64,
    gain_uav: f64,
    d_max: u32,
) -> Action {
    let offload = match scheme {
        Scheme::DeepRl => panic!("the learning scheme has no baseline action"),
        Scheme::Local => {
            if s.has_task && s.cpu_remaining == 0 {
                Offload::Local
            } else {
                Offload::None
            }
        }
        Scheme::Server => {
            if s.has_task && s.tx_backlog == 0 {
                Offload::Server
            } else {
                Offload::None
            }
        }
        Scheme::Uav => {
            if s.has_task && s.tx_backlog == 0 && s.uav_backlog_bits == 0.0 {
                Offload::Uav
            } else {
                Offload::None
            }
        }
        Scheme::Greedy => greedy_offload(s, gain_server, gain_uav),
    };
    if scheme == Scheme::Local {
        // local computation never touches the auction
        return Action {
            wants_channel: false,
            offload,
            packets: 0,
        };
    }
    let backlog = match offload {
        Offload::Server | Offload::Uav => d_max,
        _ => s.tx_backlog,
    };
    let packets = upload_destination(s, offload)
        .map_or(0, |dest| caps.for_dest(dest).min(backlog));
    Action {
        wants_channel: packets > 0,
        offload,
        packets,
    }
}

/// Remote-first dispatch: among free remote pipelines take the better
/// link (ties to the server), fall back to the local CPU when both remote
/// pipelines are busy.
fn greedy_offload(s: &LocalState, gain_server: f64, gain_uav: f64) -> Offload {
    if !s.has_task {
        return Offload::None;
    }
    let server_free = s.tx_backlog == 0;
    let uav_free = s.tx_backlog == 0 && s.uav_backlog_bits == 0.0;
    match (server_free, uav_free) {
        (true, true) => {
            if gain_uav > gain_server {
                Offload::Uav
            } else {
                Offload::Server
            }
        }
        (true, false) => Offload::Server,
        (false, true) => Offload::Uav,
        (false, false) => {
            if s.cpu_remaining == 0 {
                Offload::Local
            } else {
                Offload::None
            }
        }
    }
}

/// Baseline valuation: the utility attainable from transmitting the
/// maximum number of packets, assuming the channel is won.
pub fn baseline_valuation(utility_if_won: f64) -> f64 {
    utility_if_won.max(0.0)
}

/// Demand the action implies, if the baseline participates this epoch.
pub fn baseline_demand(s: &LocalState, action: Action) -> Option<Demand> {
    if !action.wants_channel || action.packets == 0 {
        return None;
    }
    upload_destination(s, action.offload)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::link::Attachment;
    use crate::world::Location;

    fn base() -> LocalState {
        LocalState {
            uav_cell: Location(0),
            mu_cell: Location(1),
            has_task: false,
            association: Attachment::Bs(0),
            cpu_remaining: 0,
            uav_backlog_bits: 0.0,
            tx_backlog: 0,
            aoi_s: 0.0,
            last_payment: 0.0,
            last_service_rate: 0.0,
        }
    }

    #[test]
    fn local_schedules_when_cpu_idle_and_never_bids() {
        let s = LocalState {
            has_task: true,
            ..base()
        };
        let caps = TxCaps { server: 9, uav: 9 };
        let a = baseline_action(Scheme::Local, &s, &caps, 1e-10, 1e-8, 10);
        assert_eq!(
            a,
            Action {
                wants_channel: false,
                offload: Offload::Local,
                packets: 0
            }
        );
        let busy = LocalState {
            cpu_remaining: 2,
            ..s
        };
        let a = baseline_action(Scheme::Local, &busy, &caps, 1e-10, 1e-8, 10);
        assert_eq!(a.offload, Offload::None);
    }

    #[test]
    fn server_sends_max_packets_on_backlog() {
        let s = LocalState {
            tx_backlog: 6,
            ..base()
        };
        let caps = TxCaps { server: 4, uav: 9 };
        let a = baseline_action(Scheme::Server, &s, &caps, 1e-10, 1e-8, 10);
        assert_eq!(
            a,
            Action {
                wants_channel: true,
                offload: Offload::None,
                packets: 4
            }
        );
    }

    #[test]
    fn greedy_prefers_better_link() {
        let s = LocalState {
            has_task: true,
            ..base()
        };
        let caps = TxCaps { server: 9, uav: 9 };
        let a = baseline_action(Scheme::Greedy, &s, &caps, 1e-10, 1e-8, 10);
        assert_eq!(a.offload, Offload::Uav);
        // equal gains tie toward the server
        let a = baseline_action(Scheme::Greedy, &s, &caps, 1e-9, 1e-9, 10);
        assert_eq!(a.offload, Offload::Server);
        // both remote pipelines busy: fall back to the local CPU
        let busy = LocalState {
            has_task: true,
            tx_backlog: 3,
            uav_backlog_bits: 1e6,
            ..base()
        };
        let a = baseline_action(Scheme::Greedy, &busy, &caps, 1e-10, 1e-8, 10);
        assert_eq!(a.offload, Offload::Local);
    }

    #[test]
    fn valuation_is_clamped_nonnegative() {
        assert_eq!(baseline_valuation(11.922), 11.922);
        assert_eq!(baseline_valuation(-1.0), 0.0);
    }

    #[test]
    fn no_packets_means_no_bid() {
        let s = LocalState {
            tx_backlog: 3,
            ..base()
        };
        let caps = TxCaps { server: 0, uav: 0 };
        let a = baseline_action(Scheme::Server, &s, &caps, 1e-18, 1e-18, 10);
        assert!(!a.wants_channel);
        assert_eq!(baseline_demand(&s, a), None);
    }
}
