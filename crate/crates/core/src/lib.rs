pub mod action;
pub mod cli;
pub mod dynamics;
pub mod geometry;
mod quadrature;
pub mod search;
