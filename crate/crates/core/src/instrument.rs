//! Per-thread operation counters for d×d factorizations and solves.
//!
//! Counting is scoped: [`measure`] opens a fresh scope on the current
//! thread, and each recorded event is credited to the innermost open scope
//! only. Library routines that factor or solve do so on the calling
//! thread, so concurrently running scopes on other threads never mix.

use std::cell::RefCell;

use serde::Serialize;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct OpCounts {
    pub factorizations: u64,
    pub solves: u64,
}

impl OpCounts {
    pub fn total(&self) -> u64 {
        self.factorizations + self.solves
    }
}

thread_local! {
    static SCOPES: RefCell<Vec<OpCounts>> = const { RefCell::new(Vec::new()) };
}

pub(crate) fn record_factorization() {
    SCOPES.with(|s| {
        if let Some(top) = s.borrow_mut().last_mut() {
            top.factorizations += 1;
        }
    });
}

pub(crate) fn record_solves(count: u64) {
    SCOPES.with(|s| {
        if let Some(top) = s.borrow_mut().last_mut() {
            top.solves += count;
        }
    });
}

/// Runs `f` in a fresh counting scope and returns its result with the
/// counts recorded inside. Counts from a nested scope are added to the
/// enclosing one when it closes.
pub fn measure<T>(f: impl FnOnce() -> T) -> (T, OpCounts) {
    SCOPES.with(|s| s.borrow_mut().push(OpCounts::default()));
    let out = f();
    let counts = SCOPES.with(|s| {
        let mut scopes = s.borrow_mut();
        let counts = scopes.pop().unwrap_or_default();
        if let Some(parent) = scopes.last_mut() {
            parent.factorizations += counts.factorizations;
            parent.solves += counts.solves;
        }
        counts
    });
    (out, counts)
}

/// Counts recorded so far in the innermost open scope, if any.
pub fn solve_counter() -> OpCounts {
    SCOPES.with(|s| s.borrow().last().copied().unwrap_or_default())
}
