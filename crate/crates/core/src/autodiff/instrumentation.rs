//! Counters that make derivative-order claims checkable in tests.
//!
//! The energy loss is first-order only; the strong-residual loss is not.
//! Every code path that computes a second spatial derivative (the dual
//! reverse sweep on the tape, and the second-order jet kernels in `neural`)
//! bumps the counter, so a test can assert that evaluating the energy loss
//! leaves it untouched.

use std::sync::atomic::{AtomicU64, Ordering};

static SECOND_ORDER_EVALS: AtomicU64 = AtomicU64::new(0);

pub fn record_second_order_eval() {
    SECOND_ORDER_EVALS.fetch_add(1, Ordering::Relaxed);
}

pub fn second_order_eval_count() -> u64 {
    SECOND_ORDER_EVALS.load(Ordering::Relaxed)
}
