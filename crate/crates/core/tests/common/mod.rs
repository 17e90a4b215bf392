#![allow(dead_code)]

pub mod gauss_seidel;
pub mod nets;
pub mod reward_fixtures;
pub mod rid_oracle;
