//! Federated core: client state, local update rules (FedAvg, FedProx,
//! SCAFFOLD), weighted aggregation, and the server round loop with a
//! plugin seam for server-side extensions.

mod aggregate;
mod client;
mod server;

pub use aggregate::{aggregate_models, aggregate_param_sets, aggregate_updates, normalize_weights};
pub use client::{local_update, ClientState, ClientUpdate, StrategyConfig, StrategyKind};
pub use server::{RoundContext, RoundDriver, RoundPlugin, RoundRecord, Server};
