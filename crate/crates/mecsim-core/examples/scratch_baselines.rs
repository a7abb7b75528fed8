use mecsim_core::config::SystemConfig;
use mecsim_core::policies::{baseline_action, Scheme};
use mecsim_core::radio::gain_bs;
use mecsim_core::sim::{Environment, Simulation};
use std::time::Instant;

fn run(scheme: Scheme, lambda: f64, seed: u64, epochs: u64) -> (f64, f64, f64, f64) {
    let mut cfg = SystemConfig::default();
    cfg.arrival_prob = lambda;
    let mut sim = Simulation::new(&cfg, seed);
    let warmup = 0;
    let mut sum_u = 0.0; let mut sum_d = 0.0; let mut sum_e = 0.0; let mut sum_q = 0.0;
    let mut count = 0u64;
    for ep in 0..epochs {
        let mut actions = Vec::with_capacity(cfg.num_mus);
        for k in 0..cfg.num_mus {
            let s = sim.global().states[k].clone();
            let rates = sim.link_rates(k);
            let gains: Vec<_> = cfg.bs_positions.iter().map(|&p| gain_bs(s.mu_loc, p, &cfg)).collect();
            actions.push(baseline_action(scheme, &s, &rates, &gains, &cfg));
        }
        let out = sim.step_with(&actions).unwrap();
        if ep >= warmup {
            for (k, o) in out.iter().enumerate() {
                sum_u += o.utility; sum_d += o.total_delay(); sum_e += o.total_energy();
                sum_q += sim.global().states[k].queue_len as f64;
                count += 1;
            }
        }
    }
    (sum_u / count as f64, sum_d / count as f64, sum_e / count as f64, sum_q / count as f64)
}

fn main() {
    let epochs = 30_000;
    for lambda in [0.1, 0.3, 0.5, 0.7, 0.9] {
        for scheme in [Scheme::Local, Scheme::Cloud, Scheme::Uav, Scheme::Greedy] {
            let t0 = Instant::now();
            let (u, d, e, q) = run(scheme, lambda, 1, epochs);
            println!("lambda {lambda:.1} {:>6}: u={u:.4} D={d:.4} E={e:.5} Q={q:.1}  ({:?})", scheme.as_str(), t0.elapsed());
        }
        println!();
    }
}
