// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod campaign;
pub mod error;
pub mod loewner;
pub mod metrics;
pub mod modeset;
pub mod next;
pub mod pipeline;
pub mod record;
pub mod rig;
pub mod spectral;
pub mod stabilisation;
