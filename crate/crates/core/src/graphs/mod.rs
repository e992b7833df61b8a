//! Lattice geometries, random spin-glass realizations and short-loop enumeration.

mod instance;
mod lattice;
mod loops;

pub use instance::{
    edge_coupling, sample_couplings, sample_couplings_with, Coupling, DimerAttachment,
    Distribution, InstanceOptions, Member, SpinCoupling, SpinGlassInstance, COUPLING_DENOMINATOR,
    INTRA_DIMER_COUPLING,
};
pub use lattice::{
    build_cubic_dimer_lattice, build_cubic_dimer_lattice_with, build_diamond_lattice,
    build_lattice, build_square_lattice, Boundary, Edge, LatticeGraph, LatticeKind,
};
pub use loops::{enumerate_loops, Cycle, LoopSet};
