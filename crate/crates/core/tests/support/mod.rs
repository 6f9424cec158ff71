#![allow(dead_code)]

pub mod fixtures;
pub mod lexer;
pub mod oracle;
