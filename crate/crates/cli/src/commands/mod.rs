pub mod analyze;
pub mod optimize;
pub mod reduce;
pub mod verify;
