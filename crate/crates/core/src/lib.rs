//! Minimum-sum dipolar spanning trees and discrete 2-centers for point sets in R³.

pub mod bench;
pub mod exclusion_tree;
pub mod geometry;
pub mod io;
pub mod polytope;
pub mod solver;
