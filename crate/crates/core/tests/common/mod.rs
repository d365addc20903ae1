//! Oracles shared by the integration and acceptance tests.
#![allow(dead_code)]

pub mod boundary;
pub mod closed_form;
pub mod dense;
