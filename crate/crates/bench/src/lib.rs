//! Fixed workloads shared by the benchmarks.

use qssvm_core::datagen::{self, GenConfig, Table1Set};
use qssvm_core::halfvec::assemble_design;
use qssvm_core::models::{self, TrainConfig, Variant};
use qssvm_core::{Dataset, QuadraticProgram};

/// Artificial set with a fixed seed.
pub fn table1(which: Table1Set) -> Dataset {
    datagen::gen_table1_artificial(which, 1).expect("fixed seed generates")
}

/// The sparse 10-feature surface, 200/200 clean and 100 noisy points.
pub fn sparse10() -> Dataset {
    let cfg = GenConfig::new(7, 200, 200).with_noise(100);
    datagen::gen_from_surface(&datagen::builtin_sparse_surface(), &cfg)
        .expect("fixed seed generates")
}

pub fn l1_config(lambda: f64, mu: f64) -> TrainConfig {
    TrainConfig::new(Variant::L1Sqssvm)
        .with_lambda(lambda)
        .with_mu(mu)
}

/// The QP that training `config` on `data` solves.
pub fn training_qp(data: &Dataset, config: &TrainConfig) -> QuadraticProgram {
    let cache = assemble_design(data);
    models::build_qp(data, config, &cache)
        .expect("valid config")
        .0
}
