//! Shared fixtures for the benchmarks.

use ram_core::domain::{Catalog, FeatureSchema};
use ram_core::env::{
    generate_catalog, generate_log, BehaviorPolicy, CatalogConfig, EnvConfig, Environment,
};
use ram_core::trainer::{transitions_from_log, Transition};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn catalog() -> Catalog {
    generate_catalog(&CatalogConfig::default(), &FeatureSchema::default(), 1)
        .expect("default catalog")
}

pub fn environment() -> Environment {
    Environment::new(EnvConfig::default(), catalog()).expect("default environment")
}

/// Transitions from a short behavior log under the default environment.
pub fn transitions(env: &Environment, sessions: u64) -> Vec<Transition> {
    let log = generate_log(env, &BehaviorPolicy::default(), sessions, 3).expect("log");
    transitions_from_log(&log, env.config.k, env.config.history_cap).expect("valid log")
}
