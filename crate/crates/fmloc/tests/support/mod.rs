#![allow(dead_code)]

pub mod demo;
pub mod stub;
