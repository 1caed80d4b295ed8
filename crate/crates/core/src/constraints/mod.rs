//! Motion-constraint aiding: the NHC pseudo-measurement branch and the
//! inequality branch (state projection without GNSS, constrained gain with it).

mod branch;
mod gain;
mod nhc;
mod sets;

pub use branch::{
    inequality_branch_step, inequality_branch_step_detailed, nhc_branch_step, BranchEstimate, BranchId,
    InequalityEvent, InequalityStep,
};
pub use gain::{
    constrained_gain, constrained_gain_update, constrained_gain_update_detailed, GainOutcome, FEASIBILITY_TOL,
};
pub use nhc::{nhc_measurement, nhc_update, default_r_nhc};
pub use sets::{
    build_static_constraints, build_velocity_constraint_gain, build_velocity_constraint_qp, ConstraintRow,
    ConstraintSet, EnvelopeBounds, RowKind,
};
