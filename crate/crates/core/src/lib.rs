pub mod attacks;
pub mod bundle;
pub mod cli;
pub mod detectors;
pub mod evaluation;
pub mod features;
pub mod manifest;
pub mod smali;
pub mod tables;
