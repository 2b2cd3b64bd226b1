pub mod bench;
pub mod cli;
pub mod instrumentation;
pub mod locks;
pub mod verifier;
