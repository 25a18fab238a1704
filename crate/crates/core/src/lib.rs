pub mod cli;
pub mod config;
pub mod judging;
pub mod logs;
pub mod metrics;
pub mod pool;
pub mod serp;
