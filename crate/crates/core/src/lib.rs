//! Benchmark suite for microgrid optimal scheduling.
//!
//! The crate bundles four pieces:
//!
//! - [`env`]: a deterministic 24-step microgrid MDP with dispatchable
//!   generators, one storage unit, a limited grid link, and a reward that
//!   penalizes power unbalance;
//! - [`data`]: hourly PV/load/price profiles (CSV or synthetic) and the
//!   three-weeks-per-month train/test split;
//! - [`oracle`]: an exact dynamic-programming solver on a discretized lattice,
//!   the optimality reference;
//! - [`algos`] and [`bench`]: DDPG, TD3, SAC, and PPO agents plus the
//!   experiment harness that produces training curves, evaluation tables with
//!   confidence intervals, sensitivity sweeps, and schedule dumps.
//!
//! With the default `parallel` feature, the solver expands dynamic-programming
//! stages and the harness fans out (algorithm, seed) runs via rayon; without
//! it everything runs sequentially with identical results.

pub mod algos;
pub mod bench;
pub mod data;
pub mod env;
pub mod nn;
pub mod oracle;
pub(crate) mod util;
