#![allow(dead_code)]

pub mod enumerate;
pub mod hedge_oracle;
pub mod quad;
