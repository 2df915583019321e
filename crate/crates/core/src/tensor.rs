//! Per-subject fields of SPD tensors on a shared lattice.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::lattice::Lattice;
use crate::potts::Group;
use crate::spd::{cholesky_packed, packed_len, SpdMatrix};

/// One subject's tensors, one per active site, stored packed and contiguous.
#[derive(Clone, Debug, PartialEq)]
pub struct TensorField {
    lattice: Arc<Lattice>,
    dim: usize,
    subject_id: String,
    group: Group,
    values: Vec<f64>,
}

impl TensorField {
    /// Builds a field from per-site tensors in active-index order.
    pub fn new(lattice: Arc<Lattice>, subject_id: impl Into<String>, group: Group, tensors: &[SpdMatrix]) -> Result<Self> {
        if tensors.len() != lattice.len() {
            return Err(Error::LengthMismatch(tensors.len(), lattice.len()));
        }
        let dim = tensors.first().map_or(3, SpdMatrix::dim);
        let mut values = Vec::with_capacity(tensors.len() * packed_len(dim));
        for t in tensors {
            if t.dim() != dim {
                return Err(Error::DimensionMismatch { expected: dim, found: t.dim() });
            }
            values.extend_from_slice(t.upper());
        }
        Ok(Self { lattice, dim, subject_id: subject_id.into(), group, values })
    }

    /// Builds a field from raw packed values. With `strict`, every tensor is
    /// checked for finiteness and positive definiteness; otherwise only the
    /// length is checked.
    pub fn from_packed(
        lattice: Arc<Lattice>,
        dim: usize,
        subject_id: impl Into<String>,
        group: Group,
        values: Vec<f64>,
        strict: bool,
    ) -> Result<Self> {
        let q = packed_len(dim);
        if dim == 0 || values.len() != lattice.len() * q {
            return Err(Error::LengthMismatch(values.len(), lattice.len() * q));
        }
        if strict {
            for t in values.chunks_exact(q) {
                if t.iter().any(|x| !x.is_finite()) {
                    return Err(Error::NonFinite);
                }
                cholesky_packed(dim, t)?;
            }
        }
        Ok(Self { lattice, dim, subject_id: subject_id.into(), group, values })
    }

    pub fn lattice(&self) -> &Arc<Lattice> {
        &self.lattice
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn subject_id(&self) -> &str {
        &self.subject_id
    }

    pub fn group(&self) -> Group {
        self.group
    }

    pub fn len(&self) -> usize {
        self.lattice.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lattice.is_empty()
    }

    /// Packed upper triangle of the tensor at active site `a`.
    #[inline]
    pub fn packed(&self, a: usize) -> &[f64] {
        let q = packed_len(self.dim);
        &self.values[a * q..(a + 1) * q]
    }

    pub fn get(&self, a: usize) -> SpdMatrix {
        SpdMatrix::from_upper_unchecked(self.dim, self.packed(a).into())
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// The subjects of one analysis: all fields share a lattice and dimension.
#[derive(Clone, Debug)]
pub struct Dataset {
    fields: Vec<TensorField>,
}

impl Dataset {
    pub fn new(fields: Vec<TensorField>) -> Result<Self> {
        let first = fields.first().ok_or(Error::EmptyData)?;
        if first.is_empty() {
            return Err(Error::EmptyData);
        }
        for f in &fields[1..] {
            if !Arc::ptr_eq(&f.lattice, &first.lattice) && *f.lattice != *first.lattice {
                return Err(Error::LatticeMismatch(format!(
                    "subject {} does not share the lattice of subject {}",
                    f.subject_id, first.subject_id
                )));
            }
            if f.dim != first.dim {
                return Err(Error::DimensionMismatch { expected: first.dim, found: f.dim });
            }
        }
        Ok(Self { fields })
    }

    pub fn fields(&self) -> &[TensorField] {
        &self.fields
    }

    pub fn lattice(&self) -> &Arc<Lattice> {
        &self.fields[0].lattice
    }

    pub fn dim(&self) -> usize {
        self.fields[0].dim
    }

    pub fn n_subjects(&self) -> usize {
        self.fields.len()
    }

    pub fn n_sites(&self) -> usize {
        self.lattice().len()
    }

    pub fn groups(&self) -> Vec<Group> {
        self.fields.iter().map(|f| f.group).collect()
    }

    pub fn into_fields(self) -> Vec<TensorField> {
        self.fields
    }
}

/// Sample mean of every observed tensor, over subjects and active sites.
pub fn estimate_sigma(fields: &[TensorField]) -> Result<SpdMatrix> {
    let first = fields.iter().find(|f| !f.is_empty()).ok_or(Error::EmptyData)?;
    let q = packed_len(first.dim);
    let mut acc = vec![0.0; q];
    let mut count = 0usize;
    for f in fields {
        if f.dim != first.dim {
            return Err(Error::DimensionMismatch { expected: first.dim, found: f.dim });
        }
        for t in f.values.chunks_exact(q) {
            for (a, x) in acc.iter_mut().zip(t) {
                *a += x;
            }
        }
        count += f.len();
    }
    for a in &mut acc {
        *a /= count as f64;
    }
    SpdMatrix::from_upper(first.dim, &acc)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn field(lat: &Arc<Lattice>, tensors: &[SpdMatrix]) -> TensorField {
        TensorField::new(lat.clone(), "s", Group::Control, tensors).unwrap()
    }

    #[test]
    fn sigma_of_identities_is_identity() {
        let lat = Arc::new(Lattice::grid(&[2, 2]).unwrap());
        let f = field(&lat, &vec![SpdMatrix::identity(3); 4]);
        assert_eq!(estimate_sigma(&[f.clone(), f]).unwrap(), SpdMatrix::identity(3));
    }

    #[test]
    fn sigma_two_point_mean() {
        let lat = Arc::new(Lattice::grid(&[2]).unwrap());
        let f = field(&lat, &[SpdMatrix::diag(&[1.0, 1.0, 1.0]).unwrap(), SpdMatrix::diag(&[3.0, 1.0, 1.0]).unwrap()]);
        assert_eq!(estimate_sigma(&[f]).unwrap(), SpdMatrix::diag(&[2.0, 1.0, 1.0]).unwrap());
    }

    #[test]
    fn sigma_matches_matrix_accumulation() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let lat = Arc::new(Lattice::grid(&[3, 3]).unwrap());
        let fields: Vec<TensorField> = (0..3)
            .map(|_| {
                let ts: Vec<SpdMatrix> = (0..9)
                    .map(|_| {
                        let d: Vec<f64> = (0..3).map(|_| rng.random_range(0.5..2.0)).collect();
                        let mut m = SpdMatrix::diag(&d).unwrap().to_dense();
                        let off = rng.random_range(-0.2..0.2);
                        m[1] = off;
                        m[3] = off;
                        SpdMatrix::from_dense(3, &m).unwrap()
                    })
                    .collect();
                field(&lat, &ts)
            })
            .collect();
        let mut dense = [0.0; 9];
        for f in &fields {
            for a in 0..f.len() {
                for (d, x) in dense.iter_mut().zip(f.get(a).to_dense()) {
                    *d += x / 27.0;
                }
            }
        }
        let sigma = estimate_sigma(&fields).unwrap().to_dense();
        for (a, b) in sigma.iter().zip(dense) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn empty_and_mismatched_inputs() {
        assert!(matches!(estimate_sigma(&[]), Err(Error::EmptyData)));
        let a = Arc::new(Lattice::grid(&[2, 2]).unwrap());
        let b = Arc::new(Lattice::grid(&[4]).unwrap());
        let fa = field(&a, &vec![SpdMatrix::identity(3); 4]);
        let fb = field(&b, &vec![SpdMatrix::identity(3); 4]);
        assert!(matches!(Dataset::new(vec![fa, fb]), Err(Error::LatticeMismatch(_))));
    }

    #[test]
    fn strict_load_rejects_indefinite() {
        let lat = Arc::new(Lattice::grid(&[1]).unwrap());
        let bad = vec![1.0, 2.0, 1.0];
        assert!(TensorField::from_packed(lat.clone(), 2, "x", Group::Control, bad.clone(), true).is_err());
        assert!(TensorField::from_packed(lat, 2, "x", Group::Control, bad, false).is_ok());
    }
}
