//! Offline multi-agent equilibrium learning with reward models of low interaction rank.

pub mod audit;
pub mod data;
pub mod drac;
pub mod experiment;
pub mod gap;
pub mod game;
pub mod ir;
pub mod learn;
pub mod mirror;
pub mod quadratic;
pub mod random;
pub mod seeding;
pub mod table;
