pub mod baselines;
pub mod corpus;
pub mod dataset;
pub mod embed;
pub mod eval;
pub mod jsonl;
pub mod pipeline;
pub mod regressor;
pub mod serve;
pub mod synth;
pub mod threadsel;
pub mod tone;
pub mod train;
