//! Volume of a union of axis-aligned boxes.
//!
//! The main estimator splits the boxes into classes of equal dyadic shape,
//! draws a Poisson point process of rate `p` over each class through the
//! grid cells its boxes touch, and keeps a point only if no box of a later
//! class covers it. The kept count divided by `p` estimates the union
//! volume to within `1 ± ε` with constant probability; a median of runs
//! boosts that. Alongside it live a crude factor-2 estimator, a
//! query-model coverage baseline, exact oracles and a harness of hard
//! instances for query-model algorithms.
//!
//! ```
//! use klee_core::{AlignedBox, PreparedInstance, RandomStream, EstimateOptions};
//!
//! let boxes = vec![
//!     AlignedBox::new(vec![0.0, 0.0], vec![4.0, 4.0]).unwrap(),
//!     AlignedBox::new(vec![2.0, 2.0], vec![6.0, 6.0]).unwrap(),
//! ];
//! let prepared = PreparedInstance::new(&boxes).unwrap();
//! let report = prepared
//!     .estimate(0.1, &mut RandomStream::new(7, 0), EstimateOptions::default())
//!     .unwrap();
//! assert!((report.estimate - 28.0).abs() < 28.0 * 0.5);
//! ```

pub mod classify;
pub mod estimate;
pub mod exact;
pub mod experiment;
pub mod geometry;
pub mod instance;
pub mod lowerbound;
pub mod querymodel;
pub mod range_index;
pub mod sampling;

pub use classify::{ClassPartition, ShapeType};
pub use estimate::{
    boosted_estimate, klm_baseline, main_estimate, Algorithm, BoostOptions, Counters, EstimateError,
    EstimateOptions, EstimateReport, PreparedInstance,
};
pub use exact::{exact_volume, exact_volume_with_cap};
pub use geometry::{AlignedBox, GeometryError, GridCell, Point};
pub use instance::{generate, parse_instance, write_instance, InstanceKind};
pub use sampling::RandomStream;
