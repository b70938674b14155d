//! Coordinated max-pressure traffic signal control on store-and-forward
//! networks.

pub mod consensus;
pub mod analysis;
pub mod controllers;
pub mod dynamics;
pub mod network;
pub mod experiment;
pub mod scenario;
