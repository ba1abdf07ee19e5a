#![allow(dead_code)]

pub mod checks;
pub mod gradcheck;
