pub mod harness;
pub mod maze;
pub mod nn;
pub mod option_critic;
pub mod ppo;
pub mod stats;
pub mod training;
