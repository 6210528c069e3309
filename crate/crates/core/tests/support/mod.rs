//! Independent reference implementations shared by the test targets.
#![allow(dead_code)]

pub mod hdp;
pub mod rules;
pub mod uct;
