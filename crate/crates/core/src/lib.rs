// SPDX-License-Identifier: Apache-2.0

pub mod dutsim;
pub mod measure;
pub mod packet;
pub mod ratectl;
pub mod runtime;
pub mod time;
pub mod wireclock;

pub use time::SimTime;
