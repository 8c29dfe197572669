use mgbench::data::synthesize_profiles;
use mgbench::env::SystemConfig;
use mgbench::oracle::{solve_day, Discretization, Objective};

fn main() {
    let profile = synthesize_profiles(7, 32).unwrap();
    let sys = SystemConfig::default().with_profile_scales(&profile);
    let slice = profile.day(21).unwrap();
    let t0 = std::time::Instant::now();
    let sol = solve_day(&slice, &sys, &Discretization::default(), 250.0, Objective::CostWithPenalty)
        .unwrap().expect_solution("day");
    println!("default lattice: {:.2}s, cost {:.1}, unb {:.2}, expanded {}, snap {:.3}",
        t0.elapsed().as_secs_f64(), sol.total_cost, sol.total_unbalance, sol.states_expanded, sol.max_soc_snap_error);
    let coarse = Discretization { dg_step: 50.0, ess_step: 50.0, soc_step: 50.0 };
    let t0 = std::time::Instant::now();
    let sol = solve_day(&slice, &sys, &coarse, 250.0, Objective::CostWithPenalty)
        .unwrap().expect_solution("day");
    println!("coarse lattice:  {:.2}s, cost {:.1}, unb {:.2}, expanded {}",
        t0.elapsed().as_secs_f64(), sol.total_cost, sol.total_unbalance, sol.states_expanded);
}
