pub mod countdown;
pub mod harness;
pub mod inference;
pub mod numeric;
pub mod objectives;
pub mod policy;
pub mod reward;
pub mod rng;
pub mod tasks;
pub mod trainable;
