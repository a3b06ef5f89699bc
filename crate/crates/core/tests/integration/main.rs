//! Integration tests that exercise several modules or the binary.

mod cli;
mod cross_module;
mod grazing;
