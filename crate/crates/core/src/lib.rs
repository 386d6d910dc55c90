pub mod cli;
pub mod dsp;
pub mod experiment;
pub mod fdkf;
pub mod io;
pub mod metrics;
pub mod room;
pub mod sim;
pub mod suppress;
