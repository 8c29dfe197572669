use mgbench::algos::{train, AlgoConfig, AlgoId};
use mgbench::data::{split_train_test, synthesize_profiles};
use mgbench::env::SystemConfig;

fn main() {
    let algo: AlgoId = std::env::args().nth(1).unwrap().parse().unwrap();
    let warmup: usize = std::env::args().nth(2).unwrap().parse().unwrap();
    let seed: u64 = std::env::args().nth(3).unwrap_or("1".into()).parse().unwrap();
    let profile = synthesize_profiles(7, 365).unwrap();
    let split = split_train_test(&profile).unwrap();
    let sys = SystemConfig::default().with_profile_scales(&profile);
    let mut cfg = AlgoConfig::new(algo, seed);
    cfg.episodes = 600;
    cfg.lr_critic = 3e-3;
    cfg.lr_actor = 1e-3;
    cfg.warmup_steps = warmup;
    let out = train(&profile, &split, &sys, &cfg).unwrap();
    let r = &out.report;
    let n = r.episodes.len();
    let avg = |lo: usize, hi: usize, f: fn(&mgbench::algos::EpisodeStats) -> f64| -> f64 {
        r.episodes[lo..hi].iter().map(f).sum::<f64>() / (hi - lo) as f64
    };
    println!("{algo} warmup {warmup} seed {seed}: reward {:.0} -> {:.0} | unbal {:.0} -> {:.0}",
        avg(0, 100.min(n), |e| e.reward), avg(n.saturating_sub(100), n, |e| e.reward),
        avg(0, 100.min(n), |e| e.unbalance), avg(n.saturating_sub(100), n, |e| e.unbalance));
}
