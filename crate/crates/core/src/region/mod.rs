//! Asymptotic rate region: rate tuples of phase plans, finite-blocklength
//! code sizing, and boundary search.

mod plan;
mod rates;
mod search;
mod sizing;

pub use plan::{load_plan, save_plan, PhasePlan, MAX_PHASES};
pub use rates::{rate_tuple, PlanStats, RateModel, RateTuple};
pub use search::{
    curve_r2_vs_k2, max_r2, max_r2_with, trace_r2_r3, Constraints, CurvePoint, OptBudget, SearchBest,
    SearchError, Trace, TracePoint, X3Mode,
};
pub use sizing::{phi_from_beta, theorem1_sizing, Theorem1Sizing};
