// Config checks are written `!(x > 0.0)` so that NaN fails them.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod link;
pub mod protocol;
pub mod rf_env;
pub mod scenario;
pub mod sensor;
pub mod time;

mod rng;
