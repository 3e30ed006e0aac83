//! Semi-implicit finite differences for the two-state HJB equation in
//! `(t, p, s)`: explicit upwinded transport in `s` with the pointwise
//! minimisation, implicit diffusion and mean reversion in `p`.

mod banded;
mod checkpoint;
mod extract;
mod field;
mod grid;
mod solve;

pub use banded::BandedLu;
pub use checkpoint::{read_checkpoint, write_checkpoint, CheckpointHeader};
pub use extract::{ExtractedDecision, ExtractedPolicy};
pub use field::{PolicyField, ShapeReport, SliceShape, SlopeKind, ValueField};
pub use grid::SolverGrid;
pub use solve::{cfl_number, classify, p_operator, solve, SolveOptions, Solution};
