//! Sparse complex tensors and the elementary vectors and logic tensors every
//! circuit is assembled from.
//!
//! A [`SparseTensor`] stores only its nonzero entries, keyed by multi-index in
//! the tensor's declared leg order. Contraction keeps the stored-nonzero form:
//! a summed entry is dropped when it cancels to below [`ZERO_TOLERANCE`] times
//! the total magnitude of the terms that produced it. Products of nonzero
//! amplitudes are never dropped, however small, so the tiny weights
//! `e^{-tau C}` of expensive combinations survive; only destructive
//! interference (minus and phase vectors) produces zeros.

use std::collections::{BTreeMap, HashMap};
use std::f64::consts::PI;

use num_complex::Complex64;
use smallvec::SmallVec;

use crate::error::{Error, Result};
use crate::par::{self, Exec};

/// Complex amplitude carried by every tensor entry.
pub type Amplitude = Complex64;

/// One integer per leg.
pub type MultiIndex = SmallVec<[usize; 8]>;

/// Relative cancellation threshold used when canonicalizing sums.
pub const ZERO_TOLERANCE: f64 = 1e-12;

const CONTRACT_CHUNK: usize = 1024;

#[derive(Clone, Debug, PartialEq)]
pub struct SparseTensor {
    dims: Vec<usize>,
    entries: BTreeMap<MultiIndex, Amplitude>,
}

fn check_dims(dims: &[usize]) -> Result<()> {
    if let Some(pos) = dims.iter().position(|&d| d == 0) {
        return Err(Error::InvalidDimension(format!(
            "leg {pos} has extent 0 in {dims:?}"
        )));
    }
    Ok(())
}

impl SparseTensor {
    /// All-zero tensor with the given extents.
    pub fn zeros(dims: &[usize]) -> Result<Self> {
        check_dims(dims)?;
        Ok(SparseTensor {
            dims: dims.to_vec(),
            entries: BTreeMap::new(),
        })
    }

    /// Rank-0 tensor holding `value`.
    pub fn scalar(value: Amplitude) -> Self {
        let mut entries = BTreeMap::new();
        if value.norm() != 0.0 {
            entries.insert(MultiIndex::new(), value);
        }
        SparseTensor {
            dims: Vec::new(),
            entries,
        }
    }

    /// Builds a tensor from `(index, amplitude)` pairs. Repeated indices are
    /// summed; exact zeros are not stored.
    pub fn from_entries<I, K>(dims: &[usize], entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (K, Amplitude)>,
        K: AsRef<[usize]>,
    {
        let mut t = Self::zeros(dims)?;
        for (idx, value) in entries {
            t.add_entry(idx.as_ref(), value)?;
        }
        t.entries.retain(|_, v| v.norm() != 0.0);
        Ok(t)
    }

    /// Real-valued convenience over [`SparseTensor::from_entries`].
    pub fn from_real_entries<I, K>(dims: &[usize], entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (K, f64)>,
        K: AsRef<[usize]>,
    {
        Self::from_entries(
            dims,
            entries
                .into_iter()
                .map(|(k, v)| (k, Amplitude::new(v, 0.0))),
        )
    }

    /// Row-major dense constructor (last leg fastest).
    pub fn from_dense(dims: &[usize], values: &[Amplitude]) -> Result<Self> {
        check_dims(dims)?;
        let volume: usize = dims.iter().product();
        if values.len() != volume {
            return Err(Error::Shape(format!(
                "{} values for dims {dims:?} (volume {volume})",
                values.len()
            )));
        }
        let mut t = Self::zeros(dims)?;
        for (flat, &v) in values.iter().enumerate() {
            if v.norm() != 0.0 {
                let idx = unflatten(flat, dims);
                t.add_entry(&idx, v)?;
            }
        }
        Ok(t)
    }

    fn add_entry(&mut self, idx: &[usize], value: Amplitude) -> Result<()> {
        if idx.len() != self.dims.len() || idx.iter().zip(&self.dims).any(|(i, d)| i >= d) {
            return Err(Error::IndexOutOfBounds {
                index: idx.to_vec(),
                dims: self.dims.clone(),
            });
        }
        if !value.re.is_finite() || !value.im.is_finite() {
            return Err(Error::NonFinite(idx.to_vec()));
        }
        *self
            .entries
            .entry(MultiIndex::from_slice(idx))
            .or_insert(Amplitude::new(0.0, 0.0)) += value;
        Ok(())
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn rank(&self) -> usize {
        self.dims.len()
    }

    /// Number of stored (nonzero) entries.
    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn is_zero(&self) -> bool {
        self.entries.is_empty()
    }

    /// Product of the extents, saturating on overflow.
    pub fn dense_volume(&self) -> u128 {
        self.dims
            .iter()
            .fold(1u128, |acc, &d| acc.saturating_mul(d as u128))
    }

    pub fn get(&self, idx: &[usize]) -> Amplitude {
        self.entries
            .get(idx)
            .copied()
            .unwrap_or(Amplitude::new(0.0, 0.0))
    }

    /// Stored entries in lexicographic index order.
    pub fn iter(&self) -> impl Iterator<Item = (&[usize], Amplitude)> + '_ {
        self.entries.iter().map(|(k, v)| (k.as_slice(), *v))
    }

    /// Value of a rank-0 tensor (zero when empty).
    pub fn scalar_value(&self) -> Option<Amplitude> {
        if self.rank() == 0 {
            Some(self.get(&[]))
        } else {
            None
        }
    }

    /// Dense vector of a rank-1 tensor.
    pub fn to_vector(&self) -> Option<Vec<Amplitude>> {
        if self.rank() != 1 {
            return None;
        }
        let mut out = vec![Amplitude::new(0.0, 0.0); self.dims[0]];
        for (k, v) in &self.entries {
            out[k[0]] = *v;
        }
        Some(out)
    }

    /// Row-major dense copy. Intended for small tensors in tests.
    pub fn to_dense(&self) -> Vec<Amplitude> {
        let volume: usize = self.dims.iter().product();
        let mut out = vec![Amplitude::new(0.0, 0.0); volume];
        for (k, v) in &self.entries {
            out[flatten(k, &self.dims)] = *v;
        }
        out
    }

    pub fn max_modulus(&self) -> f64 {
        self.entries.values().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// Multiplies every entry by `factor`.
    pub fn scale(&self, factor: Amplitude) -> SparseTensor {
        if factor.norm() == 0.0 {
            return SparseTensor {
                dims: self.dims.clone(),
                entries: BTreeMap::new(),
            };
        }
        SparseTensor {
            dims: self.dims.clone(),
            entries: self
                .entries
                .iter()
                .map(|(k, v)| (k.clone(), v * factor))
                .filter(|(_, v)| v.norm() != 0.0)
                .collect(),
        }
    }

    /// Divides by the largest entry modulus and returns its natural log.
    pub fn normalize_max(&self) -> Result<(SparseTensor, f64)> {
        let m = self.max_modulus();
        if m == 0.0 {
            return Err(Error::DegenerateTensor);
        }
        Ok((self.scale(Amplitude::new(1.0 / m, 0.0)), m.ln()))
    }

    /// Reorders legs: leg `k` of the result is leg `perm[k]` of `self`.
    pub fn permute(&self, perm: &[usize]) -> Result<SparseTensor> {
        let r = self.rank();
        let mut seen = vec![false; r];
        if perm.len() != r {
            return Err(Error::InvalidLegs(format!(
                "permutation {perm:?} for rank {r}"
            )));
        }
        for &p in perm {
            if p >= r || seen[p] {
                return Err(Error::InvalidLegs(format!("not a permutation: {perm:?}")));
            }
            seen[p] = true;
        }
        let dims = perm.iter().map(|&p| self.dims[p]).collect();
        let entries = self
            .entries
            .iter()
            .map(|(k, v)| (perm.iter().map(|&p| k[p]).collect::<MultiIndex>(), *v))
            .collect();
        Ok(SparseTensor { dims, entries })
    }

    /// Keeps only entries for which `keep` holds.
    pub fn filter(&self, mut keep: impl FnMut(&[usize]) -> bool) -> SparseTensor {
        SparseTensor {
            dims: self.dims.clone(),
            entries: self
                .entries
                .iter()
                .filter(|(k, _)| keep(k))
                .map(|(k, v)| (k.clone(), *v))
                .collect(),
        }
    }

    /// Largest entrywise difference relative to the larger max modulus.
    pub fn relative_distance(&self, other: &SparseTensor) -> f64 {
        if self.dims != other.dims {
            return f64::INFINITY;
        }
        let scale = self.max_modulus().max(other.max_modulus());
        if scale == 0.0 {
            return 0.0;
        }
        let mut worst: f64 = 0.0;
        for (k, v) in &self.entries {
            worst = worst.max((v - other.get(k)).norm());
        }
        for (k, v) in &other.entries {
            if !self.entries.contains_key(k) {
                worst = worst.max(v.norm());
            }
        }
        worst / scale
    }
}

fn unflatten(mut flat: usize, dims: &[usize]) -> MultiIndex {
    let mut idx: MultiIndex = smallvec::smallvec![0; dims.len()];
    for (slot, &d) in idx.iter_mut().zip(dims).rev() {
        *slot = flat % d;
        flat /= d;
    }
    idx
}

fn flatten(idx: &[usize], dims: &[usize]) -> usize {
    idx.iter().zip(dims).fold(0, |acc, (&i, &d)| acc * d + i)
}

fn check_legs(rank: usize, legs: &[usize], which: &str) -> Result<()> {
    let mut seen = vec![false; rank];
    for &l in legs {
        if l >= rank {
            return Err(Error::InvalidLegs(format!(
                "{which}: leg {l} out of range for rank {rank}"
            )));
        }
        if seen[l] {
            return Err(Error::InvalidLegs(format!("{which}: leg {l} repeated")));
        }
        seen[l] = true;
    }
    Ok(())
}

/// Contracts `legs1` of `t1` against `legs2` of `t2`. Result legs are the
/// unmatched legs of `t1` followed by those of `t2`, each in original order.
pub fn contract_pair(
    t1: &SparseTensor,
    legs1: &[usize],
    t2: &SparseTensor,
    legs2: &[usize],
) -> Result<SparseTensor> {
    contract_pair_with(t1, legs1, t2, legs2, Exec::default())
}

/// [`contract_pair`] with an explicit execution strategy. Results are
/// bit-identical across strategies.
pub fn contract_pair_with(
    t1: &SparseTensor,
    legs1: &[usize],
    t2: &SparseTensor,
    legs2: &[usize],
    exec: Exec,
) -> Result<SparseTensor> {
    if legs1.len() != legs2.len() {
        return Err(Error::InvalidLegs(format!(
            "{} legs against {} legs",
            legs1.len(),
            legs2.len()
        )));
    }
    check_legs(t1.rank(), legs1, "first tensor")?;
    check_legs(t2.rank(), legs2, "second tensor")?;
    for (&a, &b) in legs1.iter().zip(legs2) {
        if t1.dims[a] != t2.dims[b] {
            return Err(Error::Shape(format!(
                "leg {a} has extent {} but leg {b} has extent {}",
                t1.dims[a], t2.dims[b]
            )));
        }
    }
    let free1: Vec<usize> = (0..t1.rank()).filter(|l| !legs1.contains(l)).collect();
    let free2: Vec<usize> = (0..t2.rank()).filter(|l| !legs2.contains(l)).collect();
    let dims: Vec<usize> = free1
        .iter()
        .map(|&l| t1.dims[l])
        .chain(free2.iter().map(|&l| t2.dims[l]))
        .collect();

    let mut table: HashMap<MultiIndex, Vec<(MultiIndex, Amplitude)>> = HashMap::new();
    for (idx, v) in &t2.entries {
        let key: MultiIndex = legs2.iter().map(|&l| idx[l]).collect();
        let rest: MultiIndex = free2.iter().map(|&l| idx[l]).collect();
        table.entry(key).or_default().push((rest, *v));
    }

    let left: Vec<(&MultiIndex, &Amplitude)> = t1.entries.iter().collect();
    let partials = par::map_chunks(&left, CONTRACT_CHUNK, exec, |chunk| {
        let mut acc: HashMap<MultiIndex, (Amplitude, f64)> = HashMap::new();
        let mut order: Vec<MultiIndex> = Vec::new();
        for (idx, v) in chunk {
            let key: MultiIndex = legs1.iter().map(|&l| idx[l]).collect();
            let Some(matches) = table.get(&key) else {
                continue;
            };
            let head: MultiIndex = free1.iter().map(|&l| idx[l]).collect();
            for (rest, w) in matches {
                let mut out = head.clone();
                out.extend_from_slice(rest);
                let term = **v * w;
                match acc.get_mut(&out) {
                    Some(slot) => {
                        slot.0 += term;
                        slot.1 += term.norm();
                    }
                    None => {
                        order.push(out.clone());
                        acc.insert(out, (term, term.norm()));
                    }
                }
            }
        }
        order
            .into_iter()
            .map(|k| {
                let (v, m) = acc[&k];
                (k, v, m)
            })
            .collect::<Vec<_>>()
    });

    let mut merged: HashMap<MultiIndex, (Amplitude, f64)> = HashMap::new();
    let single = partials.len() == 1;
    let mut entries = BTreeMap::new();
    if single {
        for (k, v, m) in partials.into_iter().next().unwrap() {
            if keep_sum(v, m) {
                entries.insert(k, v);
            }
        }
    } else {
        for (k, v, m) in partials.into_iter().flatten() {
            let slot = merged.entry(k).or_insert((Amplitude::new(0.0, 0.0), 0.0));
            slot.0 += v;
            slot.1 += m;
        }
        for (k, (v, m)) in merged {
            if keep_sum(v, m) {
                entries.insert(k, v);
            }
        }
    }
    Ok(SparseTensor { dims, entries })
}

#[inline]
fn keep_sum(v: Amplitude, magnitude: f64) -> bool {
    let n = v.norm();
    n != 0.0 && n > ZERO_TOLERANCE * magnitude
}

/// Outer product; legs of `a` then legs of `b`.
pub fn outer(a: &SparseTensor, b: &SparseTensor) -> SparseTensor {
    contract_pair(a, &[], b, &[]).expect("outer product has no matched legs")
}

fn one() -> Amplitude {
    Amplitude::new(1.0, 0.0)
}

/// Vector of ones: the uniform superposition over `dim` values.
pub fn make_plus(dim: usize) -> Result<SparseTensor> {
    SparseTensor::from_entries(&[dim], (0..dim).map(|i| ([i], one())))
}

/// The vector `(-1, 1)`.
pub fn make_minus() -> SparseTensor {
    SparseTensor::from_real_entries(&[2], [([0], -1.0), ([1], 1.0)]).expect("static shape")
}

/// One-hot vector selecting `value`.
pub fn make_projection(dim: usize, value: i64) -> Result<SparseTensor> {
    if dim == 0 {
        return Err(Error::InvalidDimension("projection of dimension 0".into()));
    }
    if value < 0 || value as usize >= dim {
        return Err(Error::InvalidProjection { value, dim });
    }
    SparseTensor::from_entries(&[dim], [([value as usize], one())])
}

/// Unit-modulus vector with entry `j` equal to `exp(2 pi i j / dim)`.
pub fn make_phase(dim: usize) -> Result<SparseTensor> {
    SparseTensor::from_entries(
        &[dim],
        (0..dim).map(|j| {
            (
                [j],
                Amplitude::from_polar(1.0, 2.0 * PI * j as f64 / dim as f64),
            )
        }),
    )
}

/// Indicator of positions `j <= bound`.
pub fn make_step(dim: usize, bound: i64) -> Result<SparseTensor> {
    SparseTensor::from_entries(
        &[dim],
        (0..dim)
            .filter(|&j| (j as i64) <= bound)
            .map(|j| ([j], one())),
    )
}

/// Kronecker delta with `arity` legs of extent `dim`.
pub fn make_delta(arity: usize, dim: usize) -> Result<SparseTensor> {
    if arity == 0 {
        return Err(Error::InvalidDimension(
            "delta needs at least one leg".into(),
        ));
    }
    let dims = vec![dim; arity];
    SparseTensor::from_entries(&dims, (0..dim).map(|i| (vec![i; arity], one())))
}

/// Tensor-train decomposition of an `n_legs` delta into `n_legs - 2`
/// three-leg deltas. Leg layout: the first tensor is `(ext, ext, next)`,
/// interior ones `(prev, ext, next)`, the last `(prev, ext, ext)`.
/// Contracting each tensor's last leg with the next tensor's first leg
/// reproduces [`make_delta`] with external legs in order.
pub fn delta_chain(n_legs: usize, dim: usize) -> Result<Vec<SparseTensor>> {
    if n_legs < 3 {
        return Err(Error::InvalidDimension(format!(
            "delta chain needs at least 3 legs, got {n_legs}"
        )));
    }
    let node = make_delta(3, dim)?;
    Ok(vec![node; n_legs - 2])
}

/// Four-leg wire crossing `(i, j, mu, nu)` with `mu = i` and `nu = j`.
pub fn make_pass(dim_a: usize, dim_b: usize) -> Result<SparseTensor> {
    SparseTensor::from_entries(
        &[dim_a, dim_b, dim_a, dim_b],
        (0..dim_a).flat_map(|i| (0..dim_b).map(move |j| ([i, j, i, j], one()))),
    )
}
