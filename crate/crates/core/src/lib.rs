pub mod geom;
pub mod metrics;
pub mod netsim;
pub mod topology;
pub mod replay;
pub mod scenario;
pub mod tracefile;
pub mod tracer;
pub mod traffic;
pub mod workflow;
