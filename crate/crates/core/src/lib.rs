pub mod agent;
pub mod calculus;
pub mod knowledge;
pub mod scenario;
pub mod station;
