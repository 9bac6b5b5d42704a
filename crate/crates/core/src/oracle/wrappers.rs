use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Duration;

use super::{ConditionMode, LogitOracle, LogitRow, OracleError, OracleMetadata};
use crate::types::TokenSequence;

/// Adds a fixed sleep to every query, standing in for model latency.
#[derive(Debug)]
pub struct LatencyOracle<O> {
    inner: O,
    latency: Duration,
}

impl<O> LatencyOracle<O> {
    pub fn new(inner: O, latency: Duration) -> Self {
        Self { inner, latency }
    }
}

impl<O: LogitOracle> LogitOracle for LatencyOracle<O> {
    fn metadata(&self) -> Result<OracleMetadata, OracleError> {
        self.inner.metadata()
    }

    fn query(
        &self,
        seq: &TokenSequence,
        positions: &[usize],
        mode: ConditionMode,
    ) -> Result<Vec<LogitRow>, OracleError> {
        std::thread::sleep(self.latency);
        self.inner.query(seq, positions, mode)
    }
}

/// Counts queries per condition mode.
#[derive(Debug)]
pub struct CountingOracle<O> {
    inner: O,
    full: AtomicUsize,
    no_visual: AtomicUsize,
}

impl<O> CountingOracle<O> {
    pub fn new(inner: O) -> Self {
        Self {
            inner,
            full: AtomicUsize::new(0),
            no_visual: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self, mode: ConditionMode) -> usize {
        match mode {
            ConditionMode::Full => self.full.load(Ordering::SeqCst),
            ConditionMode::NoVisual => self.no_visual.load(Ordering::SeqCst),
        }
    }

    pub fn total(&self) -> usize {
        self.calls(ConditionMode::Full) + self.calls(ConditionMode::NoVisual)
    }
}

impl<O: LogitOracle> LogitOracle for CountingOracle<O> {
    fn metadata(&self) -> Result<OracleMetadata, OracleError> {
        self.inner.metadata()
    }

    fn query(
        &self,
        seq: &TokenSequence,
        positions: &[usize],
        mode: ConditionMode,
    ) -> Result<Vec<LogitRow>, OracleError> {
        let counter = match mode {
            ConditionMode::Full => &self.full,
            ConditionMode::NoVisual => &self.no_visual,
        };
        counter.fetch_add(1, Ordering::SeqCst);
        self.inner.query(seq, positions, mode)
    }
}
