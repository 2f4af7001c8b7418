pub mod expr;
pub mod groupoid;
pub mod jets;
pub mod linalg;
pub mod models;
pub mod natgrad;
pub mod reduction;
pub mod sampling;
pub mod tensors;
