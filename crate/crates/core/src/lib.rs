pub mod cli;
pub mod controller;
pub mod design;
pub mod numerics;
pub mod sim;
pub mod vehicle;
