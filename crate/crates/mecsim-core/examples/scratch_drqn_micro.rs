use mecsim_core::drqn::{act_masked, twin_train_on, DrqnDims, RecurrentActor, encode};
use mecsim_core::micro::{MicroEnv, MicroInstance, MicroParams};
use mecsim_core::sim::Environment;
use mecsim_core::tabular::value_iteration;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use std::time::Instant;

fn main() {
    let inst = MicroInstance::build(MicroParams::default());
    let sol = value_iteration(&inst.mdp, 1e-12, 1_000_000).unwrap();
    let mut cfg = inst.cfg.clone();
    cfg.train_epochs = 20_000;
    cfg.rng_seed = 777;
    let mut env = MicroEnv::new(&inst, 555);
    let t0 = Instant::now();
    let out = twin_train_on(&cfg, &mut env, None, None).unwrap();
    println!("train: {:?}, steps {}, final loss {:.5}", t0.elapsed(), out.opt_steps, out.final_loss);
    // loss deciles
    let losses: Vec<f64> = out.log.iter().map(|r| r.loss).collect();
    let dec = losses.len() / 10;
    let med = |xs: &[f64]| { let mut v = xs.to_vec(); v.sort_by(f64::total_cmp); v[v.len()/2] };
    println!("first decile median {:.5}, last decile median {:.5}", med(&losses[..dec]), med(&losses[losses.len()-dec..]));

    // greedy rollout, collect distinct visited states, compare to VI
    let dims = DrqnDims::for_config(&cfg);
    let mut actor = RecurrentActor::new(1, dims);
    let mut env = MicroEnv::new(&inst, 606);
    let mut rng = ChaCha12Rng::seed_from_u64(42);
    let mut visited = std::collections::BTreeSet::new();
    let mut agree_all = 0usize; let mut total = 0usize;
    let mut enc = vec![0.0; dims.input];
    for _ in 0..20_000 {
        let s_idx = env.current_index() as usize;
        let s = env.local_state(0).clone();
        let o = env.observation(0);
        encode(&s, o, &cfg, &mut enc);
        let q = actor.q_step(&out.net, &enc);
        let mask = env.feasible(0);
        let a = act_masked(&q, mask, 0.01, &mut rng);
        if visited.insert(s_idx) {
            // agreement on first visit: greedy (eps=0) choice vs VI optimal set
            let mut rng0 = ChaCha12Rng::seed_from_u64(1);
            let a_greedy = act_masked(&q, mask, 0.0, &mut rng0);
            let ai = a_greedy.index(cfg.num_bs);
            total += 1;
            if sol.q.get(s_idx, ai) >= sol.v[s_idx] - 1e-9 { agree_all += 1; }
        }
        env.step(&[a]).unwrap();
    }
    println!("visited {} distinct states; agreement {}/{} = {:.1}%", visited.len(), agree_all, total, 100.0*agree_all as f64/total as f64);
}
