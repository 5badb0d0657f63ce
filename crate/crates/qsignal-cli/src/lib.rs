//! IO companion to `qsignal-core`: the scenario file format, byte-stable CSV
//! reports, and the experiment orchestration behind the `qsignal` binary.

pub mod format;
pub mod orchestrate;
pub mod scenario_file;
