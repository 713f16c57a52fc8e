//! Browser playground for the air-ground offloading simulator.
//!
//! Three interactive operations are exported through wasm-bindgen, all
//! exchanging JSON strings so the page stays a single static file:
//! running a small simulation and plotting its per-epoch series, solving
//! a hand-crafted channel auction, and sweeping the uplink budget over
//! distance. The same functions compile natively for the host test
//! suite.

use agmec::auction;
use agmec::baselines::Scheme;
use agmec::harness::{run_sim, summarize};
use agmec::world::SimConfig;
use serde::{Deserialize, Serialize};
use wasm_bindgen::prelude::*;

#[derive(Serialize)]
struct SeriesOut {
    scheme: String,
    epochs: u64,
    /// Plot points, downsampled to at most `max_points`.
    epoch: Vec<u64>,
    mean_aoi: Vec<f64>,
    mean_energy: Vec<f64>,
    mean_utility: Vec<f64>,
    mean_payoff: Vec<f64>,
    avg_aoi: f64,
    avg_energy: f64,
    avg_utility: f64,
    avg_payoff: f64,
    avg_payment: f64,
}

#[derive(Serialize)]
struct ErrorOut {
    error: String,
}

fn err_json(msg: impl std::fmt::Display) -> String {
    serde_json::to_string(&ErrorOut {
        error: msg.to_string(),
    })
    .expect("error payload serializes")
}

/// Default configuration text for the page's editor.
#[wasm_bindgen]
pub fn default_config(profile: &str) -> String {
    match profile {
        "full" => SimConfig::full_default().dump(),
        _ => SimConfig::desk_default().dump(),
    }
}

/// Run one simulation and return per-epoch series plus run averages.
#[wasm_bindgen]
pub fn run_simulation(
    config_text: &str,
    scheme: &str,
    epochs: u32,
    seed: u32,
    max_points: u32,
) -> String {
    let scheme: Scheme = match scheme.parse() {
        Ok(s) => s,
        Err(e) => return err_json(e),
    };
    let mut cfg = match SimConfig::from_str_default(config_text, SimConfig::desk_default()) {
        Ok(c) => c,
        Err(e) => return err_json(e),
    };
    cfg.world.seed = u64::from(seed);
    let epochs = u64::from(epochs.clamp(1, 50_000));
    let records = run_sim(&cfg, scheme, epochs);
    let s = summarize(&records);
    let stride = (records.len() as u32 / max_points.max(1)).max(1) as usize;
    let picks: Vec<&agmec::MetricsRecord> = records.iter().step_by(stride).collect();
    let out = SeriesOut {
        scheme: scheme.name().to_string(),
        epochs,
        epoch: picks.iter().map(|r| r.epoch).collect(),
        mean_aoi: picks.iter().map(|r| r.aoi()).collect(),
        mean_energy: picks.iter().map(|r| r.energy()).collect(),
        mean_utility: picks.iter().map(|r| r.utility()).collect(),
        mean_payoff: picks.iter().map(|r| r.payoff()).collect(),
        avg_aoi: s.avg_aoi,
        avg_energy: s.avg_energy,
        avg_utility: s.avg_utility,
        avg_payoff: s.avg_payoff,
        avg_payment: s.avg_payment,
    };
    serde_json::to_string(&out).expect("series serializes")
}

#[derive(Deserialize)]
struct BidIn {
    valuation: f64,
    /// "server", "uav" or "none"
    demand: String,
    #[serde(default)]
    serving_bs: u8,
}

#[derive(Deserialize)]
struct AuctionIn {
    channels: usize,
    bs_count: usize,
    /// Pairs of adjacent stations.
    #[serde(default)]
    adjacency: Vec<(usize, usize)>,
    bids: Vec<BidIn>,
}

#[derive(Serialize)]
struct AuctionOut {
    winners: Vec<bool>,
    channel: Vec<Option<u32>>,
    payments: Vec<f64>,
    total_welfare: f64,
    revenue: f64,
}

/// Solve one sealed-bid channel auction described as JSON.
#[wasm_bindgen]
pub fn solve_auction(input_json: &str) -> String {
    let input: AuctionIn = match serde_json::from_str(input_json) {
        Ok(v) => v,
        Err(e) => return err_json(e),
    };
    if input.bs_count == 0 || input.bs_count > 8 {
        return err_json("bs_count must lie in 1..=8");
    }
    if input.channels == 0 || input.channels > 16 {
        return err_json("channels must lie in 1..=16");
    }
    if input.bids.len() > 24 {
        return err_json("at most 24 bids");
    }
    let mut topo = auction::Topology::new(input.bs_count);
    for &(a, b) in &input.adjacency {
        if a == b || a >= input.bs_count || b >= input.bs_count {
            return err_json(format!("bad adjacency pair ({a}, {b})"));
        }
        topo.set_adjacent(a, b);
    }
    let mut bids = Vec::with_capacity(input.bids.len());
    for (mu, b) in input.bids.iter().enumerate() {
        let demand = match b.demand.as_str() {
            "server" => auction::Demand::Server,
            "uav" => auction::Demand::Uav,
            "none" => auction::Demand::None,
            other => return err_json(format!("unknown demand `{other}`")),
        };
        if b.valuation < 0.0 || !b.valuation.is_finite() {
            return err_json("valuations must be finite and non-negative");
        }
        if demand == auction::Demand::Server && usize::from(b.serving_bs) >= input.bs_count {
            return err_json(format!("bid {mu}: serving_bs out of range"));
        }
        bids.push(auction::Bid {
            mu,
            valuation: b.valuation,
            demand,
            serving_bs: b.serving_bs,
        });
    }
    let alloc = auction::solve(&bids, input.channels, &topo);
    let out = AuctionOut {
        total_welfare: alloc.total_welfare(&bids),
        revenue: alloc.revenue(),
        winners: alloc.winners,
        channel: alloc.channels,
        payments: alloc.payments,
    };
    serde_json::to_string(&out).expect("auction result serializes")
}

#[derive(Serialize)]
struct LinkPoint {
    distance_m: f64,
    gain_ground: f64,
    gain_uav: f64,
    max_packets_ground: u32,
    max_packets_uav: u32,
    task_energy_ground: Option<f64>,
    task_energy_uav: Option<f64>,
}

#[derive(Serialize)]
struct LinkOut {
    altitude_m: f64,
    packets_per_task: u32,
    points: Vec<LinkPoint>,
}

/// Sweep the horizontal distance and report both links' gain, packet
/// budget and the energy to push one full task in a single epoch.
#[wasm_bindgen]
pub fn link_profile(config_text: &str, max_distance_m: f64, steps: u32) -> String {
    let cfg = match SimConfig::from_str_default(config_text, SimConfig::desk_default()) {
        Ok(c) => c.world,
        Err(e) => return err_json(e),
    };
    if max_distance_m.is_nan() || max_distance_m <= 0.0 || !(2..=512).contains(&steps) {
        return err_json("need max_distance_m > 0 and 2 <= steps <= 512");
    }
    let noise = cfg.noise_w_per_hz();
    let mut points = Vec::new();
    for i in 0..steps {
        let d = max_distance_m * f64::from(i) / f64::from(steps - 1);
        let gain_ground = cfg.ground_gain_ref * d.max(1.0).powf(-cfg.ground_gain_exp);
        let hsq = cfg.uav_altitude_m.powi(2) + d * d;
        let gain_uav = cfg.uav_gain_ref * hsq.powf(-cfg.uav_gain_exp / 2.0);
        let caps = |gain: f64| {
            agmec::link::max_packets(
                gain,
                cfg.epoch_seconds,
                cfg.bandwidth_hz,
                noise,
                cfg.max_tx_power_w,
                cfg.bits_per_packet,
                u32::MAX,
            )
        };
        let task_energy = |gain: f64, cap: u32| {
            (cap >= cfg.packets_per_task).then(|| {
                agmec::link::tx_energy(
                    gain,
                    cfg.epoch_seconds,
                    cfg.bandwidth_hz,
                    noise,
                    cfg.packets_per_task,
                    cfg.bits_per_packet,
                )
            })
        };
        let mg = caps(gain_ground);
        let mu = caps(gain_uav);
        points.push(LinkPoint {
            distance_m: d,
            gain_ground,
            gain_uav,
            max_packets_ground: mg,
            max_packets_uav: mu,
            task_energy_ground: task_energy(gain_ground, mg),
            task_energy_uav: task_energy(gain_uav, mu),
        });
    }
    let out = LinkOut {
        altitude_m: cfg.uav_altitude_m,
        packets_per_task: cfg.packets_per_task,
        points,
    };
    serde_json::to_string(&out).expect("link profile serializes")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_configs_parse_back() {
        for profile in ["desk", "full"] {
            let text = default_config(profile);
            assert!(SimConfig::from_str_default(&text, SimConfig::desk_default()).is_ok());
        }
    }

    #[test]
    fn simulation_endpoint_round_trips() {
        let cfg = default_config("desk");
        let out = run_simulation(&cfg, "greedy", 200, 7, 50);
        let v: serde_json::Value = serde_json::from_str(&out).unwrap();
        assert_eq!(v["scheme"], "greedy");
        assert!(v["epoch"].as_array().unwrap().len() <= 51);
        assert!(v["avg_utility"].as_f64().unwrap() > 0.0);
        // errors come back as JSON, not panics
        let bad = run_simulation("bogus=1", "greedy", 10, 1, 10);
        assert!(bad.contains("error"));
        let bad = run_simulation(&cfg, "nonsense", 10, 1, 10);
        assert!(bad.contains("error"));
    }

    #[test]
    fn auction_endpoint_solves_second_price() {
        let input = r#"{
            "channels": 1,
            "bs_count": 2,
            "adjacency": [[0, 1]],
            "bids": [
                {"valuation": 5.0, "demand": "server", "serving_bs": 0},
                {"valuation": 3.0, "demand": "server", "serving_bs": 1}
            ]
        }"#;
        let out: serde_json::Value = serde_json::from_str(&solve_auction(input)).unwrap();
        assert_eq!(out["winners"], serde_json::json!([true, false]));
        assert_eq!(out["payments"][0].as_f64().unwrap(), 3.0);
        let bad = solve_auction("{\"channels\": 0, \"bs_count\": 1, \"bids\": []}");
        assert!(bad.contains("error"));
    }

    #[test]
    fn link_endpoint_is_monotone() {
        let out = link_profile(&default_config("desk"), 400.0, 64);
        let v: serde_json::Value = serde_json::from_str(&out).unwrap();
        let pts = v["points"].as_array().unwrap();
        assert_eq!(pts.len(), 64);
        let gains: Vec<f64> = pts
            .iter()
            .map(|p| p["gain_uav"].as_f64().unwrap())
            .collect();
        assert!(gains.windows(2).all(|w| w[0] >= w[1]));
    }
}
