//! Zero-touch optical network automation: a simulated field network, a GN-model
//! digital twin, routing and spectrum assignment, a permissioned shared pool
//! and a director / division / expert agent hierarchy that runs lifecycle
//! workflows over them.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod gn;
pub mod par;
pub mod topology;
pub mod units;
pub mod agents;
pub mod field;
pub mod twin;
pub mod rsa;
pub mod pool;
pub mod orchestrator;
pub mod scenario;
