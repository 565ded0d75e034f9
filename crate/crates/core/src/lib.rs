pub mod codec;
pub mod group_math;
pub mod harness;
pub mod tdsa;
pub mod tmcfe;
pub mod wire;
