use mecsim_core::micro::{MicroEnv, MicroInstance, MicroParams};
use mecsim_core::sim::Environment;
use mecsim_core::tabular::{q_learning_update, value_iteration, QTable, TabTransition};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use std::time::Instant;

fn main() {
    let inst = MicroInstance::build(MicroParams::default());
    let t0 = Instant::now();
    let sol = value_iteration(&inst.mdp, 1e-12, 1_000_000).unwrap();
    println!("VI: {} sweeps in {:?}", sol.sweeps, t0.elapsed());

    let ns = inst.mdp.num_states();
    let na = inst.mdp.num_actions();
    let mut q = QTable::zeros(ns, na);
    let mut visits = vec![0u32; ns * na];
    let mut rng = ChaCha12Rng::seed_from_u64(12345);
    let mut env = MicroEnv::new(&inst, 999);
    let t0 = Instant::now();
    let total_steps: u64 = 40_000_000;
    let episode_len = 25u64;
    for step in 0..total_steps {
        if step % episode_len == 0 {
            env.teleport(rng.gen_range(0..ns as u32));
        }
        let s = env.current_index() as usize;
        let feas: Vec<usize> = inst.mdp.feasible_of(s).collect();
        let a = if step % episode_len == 0 {
            // exploring start: uniform action
            feas[rng.gen_range(0..feas.len())]
        } else if rng.gen::<f64>() < 0.1 {
            feas[rng.gen_range(0..feas.len())]
        } else {
            q.greedy_action(&inst.mdp, s)
        };
        let (next, u) = inst.sample_transition(s as u32, a, &mut rng);
        visits[s * na + a] += 1;
        let alpha = 1.0 / visits[s * na + a] as f64;
        q_learning_update(&mut q, &inst.mdp, TabTransition { state: s, action: a, utility: u, next_state: next as usize }, alpha, inst.mdp.gamma);
        env.teleport(next);
        if (step + 1) % 10_000_000 == 0 {
            println!("step {}: sup dist {:.5} elapsed {:?}", step + 1, q.sup_distance(&sol.q, &inst.mdp), t0.elapsed());
        }
    }
    let d = q.sup_distance(&sol.q, &inst.mdp);
    println!("final sup distance: {d:.6} in {:?}", t0.elapsed());
    // policy agreement
    let mut agree = 0usize;
    for s in 0..ns {
        let a_q = q.greedy_action(&inst.mdp, s);
        let ok = sol.q.get(s, a_q) >= sol.v[s] - 1e-9;
        if ok { agree += 1; }
    }
    println!("policy agreement: {}/{}", agree, ns);
}
