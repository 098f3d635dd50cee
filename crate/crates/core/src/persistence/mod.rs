//! Loss landscape sampling, persistence diagrams (Rips and sublevel), and
//! the persistence-to-generalization-gap model.

pub mod diagram;
pub mod gap;
pub mod landscape;
pub mod rips;
pub mod sublevel;

pub use diagram::{total_persistence, FiltrationKind, PersistenceDiagram, PersistencePoint};
pub use gap::{fit_gap_model, predict_gap, GapModel};
pub use landscape::{maxmin_landmarks, sample_landscape, LandscapeSample};
pub use rips::rips_persistence;
pub use sublevel::sublevel_persistence_0d;
