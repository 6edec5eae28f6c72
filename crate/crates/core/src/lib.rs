//! Convex-integration toolkit for weak stationary Euler subsolutions: state
//! geometry, laminates, exact subsolution fields, a staged iteration toward a
//! prescribed energy profile, and planar rigidity experiments.

pub mod error;
pub mod laminate;
pub mod linalg;
pub mod rigidity;
pub mod rng;
pub mod spectral;
pub mod staircase;
pub mod state;
pub mod wave;

pub use error::{Error, Result};
pub use state::{
    admissible_segment, admissible_segment_with, dist_to_k, hull_gap, lift_to_k, pair_direction,
    symmetry_apply, wave_cone_witness, wave_cone_witness_with, AdmissibleSegment, ComplexState,
    EnergyLevel, SegmentOptions, SlicePoint, StateVector, WaveWitness, WitnessOptions,
};
pub use laminate::{
    decompose_ur, decompose_vr, f_r_eval, lc_hull_slice, measure_stats, Atom, Laminate,
    OccupancyGrid, SplitRecord, UrCertificate,
};
