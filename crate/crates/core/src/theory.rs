//! A lattice together with its operator, kernels and truncation.

use num_complex::Complex64;

use crate::error::Result;
use crate::lattice::{Lattice, LatticeSpec};
use crate::observables::{PolyObservable, Truncation};
use crate::propagators::{DiscreteOperator, Kernels};

#[derive(Debug, Clone)]
pub struct FreeField {
    pub lattice: Lattice,
    pub op: DiscreteOperator,
    pub kernels: Kernels,
    pub trunc: Truncation,
}

impl FreeField {
    pub fn new(spec: LatticeSpec, trunc: Truncation) -> Result<Self> {
        Self::from_lattice(Lattice::new(spec)?, trunc)
    }

    pub fn from_lattice(lattice: Lattice, trunc: Truncation) -> Result<Self> {
        let op = DiscreteOperator::new(&lattice);
        let kernels = Kernels::build(&op)?;
        Ok(Self {
            lattice,
            op,
            kernels,
            trunc,
        })
    }

    pub fn weight(&self) -> f64 {
        self.lattice.weight()
    }

    pub fn n_sites(&self) -> usize {
        self.lattice.n_sites()
    }

    pub fn linear(&self, f: &[Complex64]) -> Result<PolyObservable> {
        PolyObservable::linear(&self.lattice, self.trunc, f)
    }

    pub fn vector(&self, g: &[Complex64]) -> Result<PolyObservable> {
        PolyObservable::vector(&self.lattice, self.trunc, g)
    }

    pub fn zero(&self) -> PolyObservable {
        PolyObservable::zero(&self.lattice, self.trunc)
    }

    /// `⟨f, g⟩_w`
    pub fn pairing(&self, f: &[Complex64], g: &[Complex64]) -> Complex64 {
        f.iter().zip(g).map(|(a, b)| a * b).sum::<Complex64>() * self.weight()
    }
}
