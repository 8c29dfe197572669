use mgbench::algos::{train, AlgoConfig, AlgoId};
use mgbench::data::{split_train_test, synthesize_profiles};
use mgbench::env::SystemConfig;

fn main() {
    let algo: AlgoId = std::env::args().nth(1).unwrap_or("ppo".into()).parse().unwrap();
    let seed: u64 = std::env::args().nth(2).unwrap_or("1".into()).parse().unwrap();
    let episodes: usize = std::env::args().nth(3).unwrap_or("1000".into()).parse().unwrap();
    let profile = synthesize_profiles(7, 365).unwrap();
    let split = split_train_test(&profile).unwrap();
    let sys = SystemConfig::default().with_profile_scales(&profile);
    let mut cfg = AlgoConfig::new(algo, seed);
    cfg.episodes = episodes;
    let t0 = std::time::Instant::now();
    let out = train(&profile, &split, &sys, &cfg).unwrap();
    let r = &out.report;
    let n = r.episodes.len();
    let avg = |lo: usize, hi: usize, f: fn(&mgbench::algos::EpisodeStats) -> f64| -> f64 {
        r.episodes[lo..hi].iter().map(f).sum::<f64>() / (hi - lo) as f64
    };
    let demand = profile.mean_daily_demand();
    println!("{algo} seed {seed}: {:.1}s, {} episodes", t0.elapsed().as_secs_f64(), n);
    println!("  reward   first100 {:.1}  last100 {:.1}", avg(0, 100.min(n), |e| e.reward), avg(n.saturating_sub(100), n, |e| e.reward));
    println!("  unbal    first100 {:.1}  last100 {:.1}  (5% demand = {:.1})", avg(0, 100.min(n), |e| e.unbalance), avg(n.saturating_sub(100), n, |e| e.unbalance), 0.05 * demand);
    println!("  cost     last100 {:.0}", avg(n.saturating_sub(100), n, |e| e.cost));
}
