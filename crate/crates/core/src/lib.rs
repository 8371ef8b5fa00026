//! Reachability analysis for linear systems in closed loop with Two-Level Lattice
//! neural-network controllers.
//!
//! The crate provides exact one-step reachable sets ([`exact::one_step_exact`]),
//! three one-step bounding-box algorithms ([`exact::one_step_exact_bbox`],
//! [`grid::one_step_grid_bbox`], [`ltllbox::one_step_ltllbox`]), output-range
//! queries for TLL networks ([`verifier`]) and multi-step box propagation
//! ([`ltllbox::propagate`]).

pub mod arrangement;
pub mod context;
pub mod error;
pub mod exact;
pub mod grid;
pub mod io;
pub mod lp;
pub mod ltllbox;
pub mod polytope;
pub mod random;
pub mod tll;
pub mod verifier;

pub use arrangement::{active_function, enumerate_cells, Cell, Hyperplane, Sign};
pub use context::{Config, Context, Stats, StatsSnapshot, Tolerances};
pub use error::{Error, Result};
pub use exact::{one_step_exact, one_step_exact_bbox, realized_functions, ReachSet};
pub use grid::{one_step_grid_bbox, GridSpec};
pub use io::{Problem, ReachResultJson};
pub use lp::{solve_lp, LpOutcome, Sense};
pub use ltllbox::{
    one_step_ltllbox, propagate, select_method, CostEstimate, Method, MethodChoice, Propagation, Selection,
};
pub use polytope::{interval_matvec, BoundingBox, CenterExtent, HPolytope};
pub use random::random_problem;
pub use tll::{FeedbackController, FnController, LtiSystem, ScalarTll, TllController};
pub use verifier::{output_box, output_max, output_min, verify_lower_bound, OutputBox};
