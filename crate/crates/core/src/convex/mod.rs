//! Convex machinery: a generic barrier solver and the stage-1 problems
//! built on it.

pub mod engine;
pub mod subproblems;

pub use engine::{
    check_convexity, fd_hessian, log_posy_gradient, minimize_convex, posy_value, Atom, ConvexityReport,
    LinearConstraint, Outcome, ProblemDescriptor,
};
pub use subproblems::{
    p3_descriptor, p4_descriptor, p_dk_descriptor, solve_p3, solve_p4, solve_p_dk, Mode3Point, Stage1Result,
    TransformedPoint,
};
