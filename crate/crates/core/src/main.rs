use agmec::baselines::Scheme;
use agmec::harness::{self, ExperimentKind, Simulation};
use agmec::oracle;
use agmec::world::SimConfig;
use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use std::path::PathBuf;

#[derive(Parser)]
#[command(
    name = "agmec",
    about = "Air-ground edge computing simulator: freshness-aware task offloading with a VCG channel auction and per-user deep RL agents"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one simulation and write per-epoch metrics.
    Simulate {
        /// key=value configuration file (defaults applied for missing keys)
        #[arg(long)]
        config: PathBuf,
        /// deeprl | local | server | uav | greedy
        #[arg(long)]
        scheme: Scheme,
        #[arg(long)]
        epochs: u64,
        /// Overrides the seed from the configuration file.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        /// Also write per-agent network checkpoints.
        #[arg(long, default_value_t = false)]
        checkpoints: bool,
    },
    /// Run a predefined experiment sweep.
    Experiment {
        /// convergence | lambda | channels
        #[arg(long)]
        kind: ExperimentKind,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Validate the tabular learners against exact value iteration on the
    /// tiny single-user instance.
    OracleCheck {
        #[arg(long, default_value_t = 200_000)]
        steps: u64,
        #[arg(long, default_value_t = 4)]
        seed: u64,
    },
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Simulate {
            config,
            scheme,
            epochs,
            seed,
            out,
            checkpoints,
        } => {
            let mut cfg = SimConfig::load(&config)?;
            if let Some(seed) = seed {
                cfg.world.seed = seed;
            }
            std::fs::create_dir_all(&out)
                .with_context(|| format!("cannot create {}", out.display()))?;
            let started = std::time::Instant::now();
            let mut sim = Simulation::new(cfg.clone(), scheme, epochs);
            let records = sim.run(epochs);
            let csv = out.join("metrics.csv");
            harness::emit_metrics(&records, cfg.world.mu_count, &csv)?;
            if checkpoints {
                sim.save_checkpoints(&out)?;
            }
            let s = harness::summarize(&records);
            std::fs::write(
                out.join("summary.txt"),
                format!(
                    "scheme: {}\nseed: {}\nconfig_hash: {:016x}\nepochs: {}\nwall_time_s: {:.3}\n\
                     avg_aoi: {}\navg_energy: {}\navg_utility: {}\navg_payoff: {}\navg_payment: {}\nrevenue_per_epoch: {}\n",
                    scheme.name(),
                    cfg.world.seed,
                    cfg.content_hash(),
                    epochs,
                    started.elapsed().as_secs_f64(),
                    s.avg_aoi,
                    s.avg_energy,
                    s.avg_utility,
                    s.avg_payoff,
                    s.avg_payment,
                    s.revenue_per_epoch
                ),
            )?;
            println!("wrote {}", csv.display());
            Ok(())
        }
        Command::Experiment { kind, config, out } => {
            let cfg = SimConfig::load(&config)?;
            let files = harness::run_experiment(kind, &cfg, &out)?;
            for f in files {
                println!("wrote {}", f.display());
            }
            Ok(())
        }
        Command::OracleCheck { steps, seed } => {
            let build = oracle::build_tiny(oracle::TinyParams::default());
            println!(
                "tiny instance: {} states, {} actions",
                build.mdp.n_states,
                build.codec.total()
            );
            let (v, q_star, _) =
                oracle::value_iteration(&build.mdp, build.params.gamma, 1e-9, 100_000);
            let pq_model = oracle::model_post_q(&build, &v);
            let pairs = oracle::all_pairs(&build);
            let model_residual = oracle::consistency_residual(
                &q_star,
                &pq_model,
                &pairs,
                &build.rewards,
                &build.hop,
                build.params.gamma,
            );
            println!("model decomposition residual: {model_residual:.3e}");

            let mut rng = agmec::rng::stream(seed, "oracle-check", 0);
            let tables = oracle::rollout_tabular(&build, steps, &mut rng);
            let visited: Vec<(usize, usize)> = pairs
                .iter()
                .copied()
                .filter(|&(s, a)| tables.q_visits[s][a] > 0)
                .collect();
            let learned_residual = oracle::consistency_residual(
                &tables.q,
                &tables.post_q,
                &visited,
                &build.rewards,
                &build.hop,
                build.params.gamma,
            );
            let pi_hat = oracle::greedy_policy(&tables.q, &build.mdp.feasible);
            let match_pct = 100.0
                * oracle::policy_match_fraction(&q_star, &build.mdp.feasible, &pi_hat, 1e-9);
            println!(
                "tabular after {steps} steps: residual {learned_residual:.4}, policy match {match_pct:.1}%"
            );
            let ok = model_residual < 1e-9 && learned_residual < 0.05 && match_pct >= 95.0;
            println!("oracle-check: {}", if ok { "PASS" } else { "FAIL" });
            if !ok {
                bail!("oracle consistency check failed");
            }
            Ok(())
        }
    }
}
