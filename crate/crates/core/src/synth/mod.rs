//! Seeded synthetic data: labeled flow captures and sequence-level tasks.

mod sequences;
mod traffic;

pub use sequences::{
    order_task, transfer_task, Cycle, OrderTask, OrderTaskConfig, TransferTask, TransferTaskConfig,
};
pub use traffic::{generate_traffic, Traffic, TrafficConfig};
