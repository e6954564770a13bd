//! Workflow-automation toolkit for digital-forensics evidence processing:
//! a file-based FIFO queue server driving external forensic tools, an
//! acquisition pipeline with verified replication, a case archiver, and a
//! discrete-event throughput simulator.

pub mod acquire;
pub mod archive;
pub mod cli;
pub mod kv;
pub mod model;
pub mod queue;
pub mod runner;
pub mod sim;
