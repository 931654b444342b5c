//! Topology-preserving correction for error-bounded lossy compression.
//!
//! The crate takes an original scalar field `f` and a decompressed field
//! `f̂` that respects a pointwise error bound `ξ`, and iteratively lowers
//! vertices of `f̂` (never below `f - ξ`) until the critical points,
//! extremum graphs, and join/split trees of the edited field match those of
//! `f` exactly. The edits are recorded in an [`EditLog`] that can be stored
//! next to the compressed blob.
//!
//! Module map:
//!
//! * [`grid`] – regular grids, Freudenthal connectivity, simulation of simplicity, EXCF I/O
//! * [`compressor`] – a small prediction + quantization compressor and the edit log format
//! * [`topology`] – critical points, extremum graphs, merge trees (EGP and union-find)
//! * [`constraints`] – violation detectors
//! * [`corrector`] – the serial correction loop
//! * [`bound`] – vulnerability graphs and the iteration bound
//! * [`distsim`] – block-partitioned simulation of the distributed protocol
//! * [`metrics`] – recalls and compression ratios
//! * [`synth`] – synthetic fields used by tests, the CLI and the demo

pub mod bound;
pub mod compressor;
pub mod constraints;
pub mod corrector;
pub mod distsim;
mod dsu;
mod error;
pub mod grid;
pub mod metrics;
mod par;
pub mod synth;
pub mod topology;

pub use compressor::{CompressedBlob, EditKind, EditLog};
pub use constraints::{Violation, ViolationReason};
pub use corrector::{correct, CorrectionConfig, CorrectionMode, CorrectionResult};
pub use error::{Error, Result};
pub use grid::{ScalarField, SosKey, VertexId};
pub use topology::{Polarity, ReferenceTopology};
