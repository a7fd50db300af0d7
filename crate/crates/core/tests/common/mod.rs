#![allow(dead_code)]

pub mod dp;
pub mod forecast;
pub mod fuzz;
pub mod gradcheck;
pub mod golden;
pub mod nr;
