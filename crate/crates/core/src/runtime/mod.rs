//! Simulated distributed-memory runtime: transports, communicator, halo
//! exchanges and the plan executor.

pub mod comm;
pub mod exchange;
pub mod exec;
pub mod transport;

pub use comm::{kind, make_tag, spawn_ranks, Comm, CommStats, ReduceOp, Request, SpawnOptions};
pub use transport::{Endpoint, TransportKind};
pub use exchange::{exchange_field, halo_update, halo_wait, ExchangeTimes, SpotState};
pub use exec::{execute, run_plan, ExecOptions, InitFn, RankReport, Record, RunOutput, SectionTimes, TraceEvent};
