pub mod baselines;
pub mod chemgraph;
pub mod env;
pub mod net;
pub mod oracle;
pub mod reward;
pub mod evalsuite;
pub mod gflownet;
pub mod data;
pub mod embed;
