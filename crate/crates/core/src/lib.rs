//! Temporal social-network analytics and a strategic tie-formation model.
//!
//! The crate has two halves that share one graph substrate:
//!
//! * **Analytics** — ingest monthly interaction logs into phase snapshots
//!   ([`temporal_graph`]), compute per-edge tie range ([`tie_range`]) and the
//!   longitudinal statistics built on it ([`dynamics`]): strength series,
//!   persistence/increment decompositions, range transition matrices,
//!   lifespans, degree subgroups, and new-vs-existing tie profiles.
//! * **Model** — a two-procedure formation simulator (random meeting, then
//!   utility-maximizing investment allocation) over latent endowment vectors
//!   ([`formation`]), plus gradient-descent inference of those endowments
//!   from observed networks ([`fitting`]) and synthetic ground-truth
//!   generation for end-to-end validation ([`synth`]).
//!
//! Everything downstream of ingestion is pure and reads immutable snapshots,
//! so the heavy passes (tie range over all edges, per-node gradient
//! accumulation) are data-parallel. The `parallel` feature (default) routes
//! them through rayon; without it the same sequential kernels run inline.
//! Results are identical either way: parallel reductions happen in a fixed
//! order and all per-pair randomness is counter-based.

pub mod dynamics;
pub mod error;
pub mod fitting;
pub mod formation;
pub mod graph;
pub mod report;
pub mod synth;
pub mod temporal_graph;
pub mod tie_range;
pub mod util;

pub use error::{Error, Result};
pub use graph::{NodeId, UndirectedGraph};
pub use temporal_graph::{InteractionEvent, PhaseConfig, PhaseSnapshot, TemporalNetwork};
pub use tie_range::{TieClass, TieRange};

/// Number of worker threads to use for the parallel kernels.
///
/// With the `parallel` feature this installs a scoped rayon pool when `n > 0`;
/// `n = 0` means "use the global default". Without the feature the value is
/// ignored and everything runs sequentially.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Threads(pub usize);

impl Default for Threads {
    fn default() -> Self {
        Threads(0)
    }
}

#[cfg(feature = "parallel")]
pub(crate) fn run_with_threads<T: Send>(threads: Threads, f: impl FnOnce() -> T + Send) -> T {
    if threads.0 == 0 {
        f()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads.0)
            .build()
            .expect("failed to build rayon pool");
        pool.install(f)
    }
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn run_with_threads<T: Send>(_threads: Threads, f: impl FnOnce() -> T + Send) -> T {
    f()
}
