pub mod annotate;
pub mod eval;
pub mod perturb;
pub mod select;
