//! Numerical tolerances, tunable knobs and work counters shared by all algorithms.

use std::sync::atomic::{AtomicU64, Ordering};

/// Tolerances used throughout the crate. All of them are absolute and apply to
/// rows normalized as described at each use site.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    /// Constraint violation accepted for a returned LP point.
    pub feas: f64,
    /// Objective accuracy of an optimal LP value.
    pub lp: f64,
    /// Relative singularity threshold for affine maps (scaled by the map's inf-norm).
    pub sing_rel: f64,
    /// Minimum inscribed radius for an arrangement cell to count as full-dimensional.
    pub cell: f64,
    /// Tolerance when merging normalized hyperplanes.
    pub dedup: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            feas: 1e-9,
            lp: 1e-9,
            sing_rel: 1e-12,
            cell: 1e-8,
            dedup: 1e-9,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub tol: Tolerances,
    /// Abort the grid method when it would visit more cubes than this.
    pub cube_cap: f64,
    /// `select_method` returns L-TLLBox when the two estimates are within this factor.
    pub auto_band: f64,
    /// Exponent on the dimension in the LP cost model `LP(rows, dim) = rows * dim^k`.
    pub lp_dim_exponent: f64,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            tol: Tolerances::default(),
            cube_cap: 1e7,
            auto_band: 10.0,
            lp_dim_exponent: 2.0,
        }
    }
}

#[derive(Debug, Default)]
pub struct Stats {
    lp_calls: AtomicU64,
    nodes: AtomicU64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct StatsSnapshot {
    pub lp_calls: u64,
    pub nodes: u64,
}

impl Stats {
    pub(crate) fn count_lp(&self) {
        self.lp_calls.fetch_add(1, Ordering::Relaxed);
    }

    pub(crate) fn count_nodes(&self, k: u64) {
        self.nodes.fetch_add(k, Ordering::Relaxed);
    }

    pub fn snapshot(&self) -> StatsSnapshot {
        StatsSnapshot {
            lp_calls: self.lp_calls.load(Ordering::Relaxed),
            nodes: self.nodes.load(Ordering::Relaxed),
        }
    }

    pub fn reset(&self) {
        self.lp_calls.store(0, Ordering::Relaxed);
        self.nodes.store(0, Ordering::Relaxed);
    }
}

/// Configuration plus counters. Shared by reference; safe to use from many threads.
#[derive(Debug, Default)]
pub struct Context {
    pub config: Config,
    pub stats: Stats,
}

impl Context {
    pub fn new(config: Config) -> Self {
        Self {
            config,
            stats: Stats::default(),
        }
    }

    pub fn tol(&self) -> &Tolerances {
        &self.config.tol
    }
}
