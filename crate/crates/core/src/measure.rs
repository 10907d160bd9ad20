//! Finite atomic measures on the structured individual state space.
//!
//! A population state is a multiset of weighted atoms. Each atom carries an
//! [`Individual`]: a compartment tag plus up to two continuous trait
//! coordinates. The measure keeps per-compartment mass totals and member
//! lists up to date so that compartment counts, which drive most jump rates,
//! are O(1) lookups.

use std::fmt;
use std::io::Write;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Weights at or below this magnitude after a removal are treated as zero.
pub const WEIGHT_EPS: f64 = 1e-12;

/// A point of the individual state space.
#[derive(Clone, Copy, PartialEq)]
pub struct Individual {
    compartment: u8,
    dim: u8,
    coords: [f64; 2],
}

impl Individual {
    /// An individual in a compartment without continuous trait.
    pub const fn pure(compartment: u8) -> Self {
        Self { compartment, dim: 0, coords: [0.0; 2] }
    }

    pub const fn scalar(compartment: u8, x: f64) -> Self {
        Self { compartment, dim: 1, coords: [x, 0.0] }
    }

    pub const fn planar(compartment: u8, x: f64, y: f64) -> Self {
        Self { compartment, dim: 2, coords: [x, y] }
    }

    /// Builds an individual from a trait slice of length 0, 1 or 2.
    pub fn new(compartment: u8, traits: &[f64]) -> Result<Self> {
        match *traits {
            [] => Ok(Self::pure(compartment)),
            [x] => Ok(Self::scalar(compartment, x)),
            [x, y] => Ok(Self::planar(compartment, x, y)),
            _ => Err(Error::InvalidIndividual(format!(
                "trait dimension {} exceeds 2",
                traits.len()
            ))),
        }
    }

    #[inline]
    pub fn compartment(&self) -> u8 {
        self.compartment
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim as usize
    }

    #[inline]
    pub fn traits(&self) -> &[f64] {
        &self.coords[..self.dim as usize]
    }

    #[inline]
    pub fn traits_mut(&mut self) -> &mut [f64] {
        &mut self.coords[..self.dim as usize]
    }

    /// Coordinate `i` of the trait; zero when absent.
    #[inline]
    pub fn coord(&self, i: usize) -> f64 {
        if i < self.dim as usize {
            self.coords[i]
        } else {
            0.0
        }
    }
}

impl fmt::Debug for Individual {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Individual({}", self.compartment)?;
        for x in self.traits() {
            write!(f, ", {x}")?;
        }
        write!(f, ")")
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Atom {
    pub weight: f64,
    pub individual: Individual,
}

/// One elementary change produced by a jump kernel.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Deposit {
    /// Remove `weight` from the atom at index `atom`.
    Remove { atom: usize, weight: f64 },
    /// Append a new atom.
    Add { weight: f64, individual: Individual },
}

impl Deposit {
    pub fn remove(atom: usize) -> Self {
        Deposit::Remove { atom, weight: 1.0 }
    }

    pub fn add(individual: Individual) -> Self {
        Deposit::Add { weight: 1.0, individual }
    }

    /// Signed mass carried by this deposit.
    pub fn signed_mass(&self) -> f64 {
        match *self {
            Deposit::Remove { weight, .. } => -weight,
            Deposit::Add { weight, .. } => weight,
        }
    }
}

/// Net mass change of a list of deposits.
pub fn net_mass(deposits: &[Deposit]) -> f64 {
    deposits.iter().map(Deposit::signed_mass).sum()
}

/// Total-variation norm of the signed measure a deposit list realizes,
/// counting removals and additions separately.
pub fn deposit_tv(deposits: &[Deposit]) -> f64 {
    deposits.iter().map(|d| d.signed_mass().abs()).sum()
}

/// The pairing of the signed measure `deposits` with `h`, read against the
/// atoms of `m` for the removal targets.
pub fn deposit_pairing(m: &AtomicMeasure, deposits: &[Deposit], h: &TestFunction) -> f64 {
    deposits
        .iter()
        .map(|d| match *d {
            Deposit::Remove { atom, weight } => -weight * h.eval(&m.atoms[atom].individual),
            Deposit::Add { weight, individual } => weight * h.eval(&individual),
        })
        .sum()
}

#[derive(Clone, Debug, Default)]
struct CompartmentIndex {
    mass: f64,
    members: Vec<usize>,
}

/// A finite positive measure represented as a list of weighted atoms.
///
/// Atoms are neither sorted nor deduplicated. Removing an atom moves the last
/// atom into its slot, so atom indices are only stable between mutations.
#[derive(Clone, Debug)]
pub struct AtomicMeasure {
    atoms: Vec<Atom>,
    total: f64,
    index: Vec<CompartmentIndex>,
    slot: Vec<usize>,
    unit_weights: bool,
}

impl Default for AtomicMeasure {
    fn default() -> Self {
        Self::new()
    }
}

impl AtomicMeasure {
    pub fn new() -> Self {
        Self { atoms: Vec::new(), total: 0.0, index: Vec::new(), slot: Vec::new(), unit_weights: true }
    }

    pub fn from_atoms<I: IntoIterator<Item = Atom>>(atoms: I) -> Result<Self> {
        let mut m = Self::new();
        for a in atoms {
            m.push(a.weight, a.individual)?;
        }
        Ok(m)
    }

    /// `count` unit atoms at `individual`.
    pub fn with_unit_atoms(&mut self, individual: Individual, count: usize) -> &mut Self {
        for _ in 0..count {
            self.push_unchecked(1.0, individual);
        }
        self
    }

    pub fn push(&mut self, weight: f64, individual: Individual) -> Result<()> {
        if !(weight > 0.0 && weight.is_finite()) {
            return Err(Error::InvalidIndividual(format!("atom weight must be positive, got {weight}")));
        }
        self.push_unchecked(weight, individual);
        Ok(())
    }

    fn push_unchecked(&mut self, weight: f64, individual: Individual) {
        let c = individual.compartment as usize;
        if self.index.len() <= c {
            self.index.resize_with(c + 1, CompartmentIndex::default);
        }
        let idx = self.atoms.len();
        let entry = &mut self.index[c];
        self.slot.push(entry.members.len());
        entry.members.push(idx);
        entry.mass += weight;
        self.total += weight;
        self.unit_weights &= weight == 1.0;
        self.atoms.push(Atom { weight, individual });
    }

    #[inline]
    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    /// Mutable access for flows, which move traits but never change weights
    /// or compartments.
    #[inline]
    pub(crate) fn atoms_mut(&mut self) -> &mut [Atom] {
        &mut self.atoms
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    /// Cached total mass `⟨m, 1⟩`.
    #[inline]
    pub fn total_mass(&self) -> f64 {
        self.total
    }

    /// Mass carried by compartment `c`.
    #[inline]
    pub fn compartment_mass(&self, c: u8) -> f64 {
        self.index.get(c as usize).map_or(0.0, |e| e.mass)
    }

    /// Indices of the atoms in compartment `c`, in no particular order.
    #[inline]
    pub fn compartment_atoms(&self, c: u8) -> &[usize] {
        self.index.get(c as usize).map_or(&[], |e| &e.members)
    }

    /// True when every atom has weight exactly one.
    #[inline]
    pub fn has_unit_weights(&self) -> bool {
        self.unit_weights
    }

    /// Total mass recomputed from the atoms.
    pub fn recomputed_mass(&self) -> f64 {
        self.atoms.iter().map(|a| a.weight).sum()
    }

    /// The measure with every weight multiplied by `factor > 0`.
    pub fn scaled(&self, factor: f64) -> AtomicMeasure {
        let mut out = self.clone();
        for a in &mut out.atoms {
            a.weight *= factor;
        }
        for e in &mut out.index {
            e.mass *= factor;
        }
        out.total *= factor;
        out.unit_weights = out.atoms.iter().all(|a| a.weight == 1.0);
        out
    }

    fn remove_atom(&mut self, i: usize) {
        let removed = self.atoms[i];
        let c = removed.individual.compartment as usize;
        // Drop it from its compartment list.
        let pos = self.slot[i];
        let entry = &mut self.index[c];
        entry.members.swap_remove(pos);
        if pos < entry.members.len() {
            let moved = entry.members[pos];
            self.slot[moved] = pos;
        }
        entry.mass -= removed.weight;
        if entry.members.is_empty() {
            entry.mass = 0.0;
        }
        self.total -= removed.weight;
        if self.atoms.len() == 1 {
            self.total = 0.0;
        }
        // Move the last atom into slot i.
        let last = self.atoms.len() - 1;
        self.atoms.swap_remove(i);
        self.slot.swap_remove(i);
        if i != last {
            let lc = self.atoms[i].individual.compartment as usize;
            let lpos = self.slot[i];
            self.index[lc].members[lpos] = i;
        }
    }

    /// Applies removals, then appends additions. Returns the net mass change.
    ///
    /// Validation happens before any mutation: on error the measure is
    /// unchanged.
    pub fn apply_deposits(&mut self, deposits: &[Deposit]) -> Result<f64> {
        let mut removals: Vec<(usize, f64)> = deposits
            .iter()
            .filter_map(|d| match *d {
                Deposit::Remove { atom, weight } => Some((atom, weight)),
                Deposit::Add { .. } => None,
            })
            .collect();
        removals.sort_by_key(|r| std::cmp::Reverse(r.0));
        // Aggregate repeated targets.
        let mut merged: Vec<(usize, f64)> = Vec::with_capacity(removals.len());
        for (atom, w) in removals {
            match merged.last_mut() {
                Some(last) if last.0 == atom => last.1 += w,
                _ => merged.push((atom, w)),
            }
        }
        for &(atom, w) in &merged {
            let Some(a) = self.atoms.get(atom) else {
                return Err(Error::MissingAtom { atom, len: self.atoms.len() });
            };
            if a.weight - w < -WEIGHT_EPS {
                return Err(Error::NegativeMass { atom, weight: a.weight, removed: w });
            }
        }
        for d in deposits {
            if let Deposit::Add { weight, .. } = *d {
                if !(weight > 0.0 && weight.is_finite()) {
                    return Err(Error::InvalidIndividual(format!("deposit weight must be positive, got {weight}")));
                }
            }
        }

        let mut change = 0.0;
        // Descending index order keeps pending targets valid across swap_remove.
        for (atom, w) in merged {
            change -= w;
            let remaining = self.atoms[atom].weight - w;
            if remaining <= WEIGHT_EPS {
                self.remove_atom(atom);
            } else {
                let c = self.atoms[atom].individual.compartment as usize;
                self.atoms[atom].weight = remaining;
                self.index[c].mass -= w;
                self.total -= w;
                self.unit_weights = false;
            }
        }
        for d in deposits {
            if let Deposit::Add { weight, individual } = *d {
                change += weight;
                self.push_unchecked(weight, individual);
            }
        }
        Ok(change)
    }

    /// Writes the measure as CSV with columns `weight,compartment,trait_0,trait_1`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "weight,compartment,trait_0,trait_1")?;
        for a in &self.atoms {
            let x = &a.individual;
            let t0 = if x.dim() > 0 { x.coords[0].to_string() } else { String::new() };
            let t1 = if x.dim() > 1 { x.coords[1].to_string() } else { String::new() };
            writeln!(w, "{},{},{},{}", a.weight, x.compartment, t0, t1)?;
        }
        Ok(())
    }
}

/// Functional form of [`apply_deposits`](AtomicMeasure::apply_deposits).
pub fn apply_deposits(m: &AtomicMeasure, deposits: &[Deposit]) -> Result<AtomicMeasure> {
    let mut out = m.clone();
    out.apply_deposits(deposits)?;
    Ok(out)
}

type IndividualFn = Arc<dyn Fn(&Individual) -> f64 + Send + Sync>;

#[derive(Clone)]
enum Shortcut {
    None,
    Constant(f64),
    ByCompartment(Vec<f64>),
}

/// A bounded observable `h` on individuals, optionally carrying its
/// derivative along the flow `A_φ h`.
#[derive(Clone)]
pub struct TestFunction {
    name: String,
    eval: IndividualFn,
    flow_derivative: Option<IndividualFn>,
    sup_norm: f64,
    shortcut: Shortcut,
}

impl fmt::Debug for TestFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TestFunction")
            .field("name", &self.name)
            .field("sup_norm", &self.sup_norm)
            .field("has_flow_derivative", &self.flow_derivative.is_some())
            .finish()
    }
}

impl TestFunction {
    pub fn new<F>(name: impl Into<String>, sup_norm: f64, eval: F) -> Self
    where
        F: Fn(&Individual) -> f64 + Send + Sync + 'static,
    {
        Self {
            name: name.into(),
            eval: Arc::new(eval),
            flow_derivative: None,
            sup_norm,
            shortcut: Shortcut::None,
        }
    }

    pub fn with_flow_derivative<F>(mut self, d: F) -> Self
    where
        F: Fn(&Individual) -> f64 + Send + Sync + 'static,
    {
        self.flow_derivative = Some(Arc::new(d));
        self
    }

    pub fn constant(name: impl Into<String>, c: f64) -> Self {
        let mut h = Self::new(name, c.abs(), move |_| c).with_flow_derivative(|_| 0.0);
        h.shortcut = Shortcut::Constant(c);
        h
    }

    /// `h ≡ 1`.
    pub fn one() -> Self {
        Self::constant("mass", 1.0)
    }

    /// A function of the compartment only: `h(x) = values[c(x)]`, zero for
    /// compartments beyond the table.
    pub fn by_compartment(name: impl Into<String>, values: Vec<f64>) -> Self {
        let table = values.clone();
        let sup = values.iter().fold(0.0_f64, |s, v| s.max(v.abs()));
        let mut h = Self::new(name, sup, move |x| {
            table.get(x.compartment() as usize).copied().unwrap_or(0.0)
        })
        .with_flow_derivative(|_| 0.0);
        h.shortcut = Shortcut::ByCompartment(values);
        h
    }

    /// `1_{c(x) = c}`.
    pub fn indicator(name: impl Into<String>, c: u8) -> Self {
        let mut values = vec![0.0; c as usize + 1];
        values[c as usize] = 1.0;
        Self::by_compartment(name, values)
    }

    /// `a·h1 + b·h2`, with flow derivative when both operands carry one.
    pub fn combine(a: f64, h1: &TestFunction, b: f64, h2: &TestFunction) -> Self {
        let (e1, e2) = (h1.eval.clone(), h2.eval.clone());
        let mut h = Self::new(
            format!("{a}*{}+{b}*{}", h1.name, h2.name),
            a.abs() * h1.sup_norm + b.abs() * h2.sup_norm,
            move |x| a * e1(x) + b * e2(x),
        );
        if let (Some(d1), Some(d2)) = (h1.flow_derivative.clone(), h2.flow_derivative.clone()) {
            h.flow_derivative = Some(Arc::new(move |x| a * d1(x) + b * d2(x)));
        }
        h
    }

    #[inline]
    pub fn name(&self) -> &str {
        &self.name
    }

    #[inline]
    pub fn sup_norm(&self) -> f64 {
        self.sup_norm
    }

    #[inline]
    pub fn eval(&self, x: &Individual) -> f64 {
        (self.eval)(x)
    }

    /// `A_φ h(x)` when supplied.
    #[inline]
    pub fn flow_derivative(&self, x: &Individual) -> Option<f64> {
        self.flow_derivative.as_ref().map(|d| d(x))
    }

    pub fn has_flow_derivative(&self) -> bool {
        self.flow_derivative.is_some()
    }

    /// True when `h` depends on the compartment only.
    pub fn is_compartmental(&self) -> bool {
        !matches!(self.shortcut, Shortcut::None)
    }
}

/// `⟨m, h⟩ = Σ_k w_k h(x_k)`.
pub fn pair(m: &AtomicMeasure, h: &TestFunction) -> f64 {
    match &h.shortcut {
        Shortcut::Constant(c) => c * m.total_mass(),
        Shortcut::ByCompartment(values) => values
            .iter()
            .enumerate()
            .map(|(c, v)| if *v == 0.0 { 0.0 } else { v * m.compartment_mass(c as u8) })
            .sum(),
        Shortcut::None => m.atoms.iter().map(|a| a.weight * h.eval(&a.individual)).sum(),
    }
}

/// `⟨m, 1⟩`.
pub fn total_mass(m: &AtomicMeasure) -> f64 {
    m.total_mass()
}

/// `max_{h ∈ panel} |⟨m1, h⟩ − ⟨m2, h⟩|`.
pub fn panel_distance(m1: &AtomicMeasure, m2: &AtomicMeasure, panel: &[TestFunction]) -> f64 {
    panel
        .iter()
        .map(|h| (pair(m1, h) - pair(m2, h)).abs())
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    const S: u8 = 0;
    const I: u8 = 1;
    const R: u8 = 2;

    fn sir(s: usize, i: usize, r: usize) -> AtomicMeasure {
        let mut m = AtomicMeasure::new();
        m.with_unit_atoms(Individual::pure(S), s)
            .with_unit_atoms(Individual::pure(I), i)
            .with_unit_atoms(Individual::pure(R), r);
        m
    }

    fn check_index(m: &AtomicMeasure) {
        assert!((m.total_mass() - m.recomputed_mass()).abs() <= 1e-12 * m.total_mass().max(1.0));
        let mut seen = vec![false; m.len()];
        for c in 0..m.index.len() as u8 {
            let mass: f64 = m.compartment_atoms(c).iter().map(|&i| m.atoms()[i].weight).sum();
            assert!((mass - m.compartment_mass(c)).abs() < 1e-9);
            for (pos, &i) in m.compartment_atoms(c).iter().enumerate() {
                assert_eq!(m.atoms()[i].individual.compartment(), c);
                assert_eq!(m.slot[i], pos);
                assert!(!seen[i]);
                seen[i] = true;
            }
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn pair_examples() {
        let m = sir(2, 3, 0);
        assert_eq!(pair(&m, &TestFunction::indicator("I", I)), 3.0);
        let empty = AtomicMeasure::new();
        assert_eq!(pair(&empty, &TestFunction::new("x", 1.0, |x| x.coord(0))), 0.0);
        let mut half = AtomicMeasure::new();
        half.push(0.5, Individual::scalar(0, 1.0)).unwrap();
        assert_eq!(pair(&half, &TestFunction::constant("two", 2.0)), 1.0);
    }

    #[test]
    fn total_mass_examples() {
        assert_eq!(total_mass(&sir(5, 0, 0)), 5.0);
        assert_eq!(total_mass(&AtomicMeasure::new()), 0.0);
        let m = AtomicMeasure::from_atoms(
            (0..4).map(|_| Atom { weight: 0.25, individual: Individual::pure(S) }),
        )
        .unwrap();
        assert_eq!(total_mass(&m), 1.0);
    }

    #[test]
    fn sir_recovery_deposit() {
        let mut m = sir(2, 3, 0);
        let target = m.compartment_atoms(I)[0];
        let change = m
            .apply_deposits(&[Deposit::remove(target), Deposit::add(Individual::pure(R))])
            .unwrap();
        assert_eq!(change, 0.0);
        assert_eq!(m.compartment_mass(S), 2.0);
        assert_eq!(m.compartment_mass(I), 2.0);
        assert_eq!(m.compartment_mass(R), 1.0);
        check_index(&m);
    }

    #[test]
    fn empty_deposits_are_identity() {
        let mut m = sir(1, 2, 3);
        let before = m.atoms().to_vec();
        assert_eq!(m.apply_deposits(&[]).unwrap(), 0.0);
        assert_eq!(m.atoms(), &before[..]);
    }

    #[test]
    fn division_deposit() {
        let mut m = AtomicMeasure::new();
        m.push(1.0, Individual::scalar(0, 3.0)).unwrap();
        m.apply_deposits(&[
            Deposit::remove(0),
            Deposit::add(Individual::scalar(0, 1.5)),
            Deposit::add(Individual::scalar(0, 1.5)),
        ])
        .unwrap();
        assert_eq!(m.len(), 2);
        assert!(m.atoms().iter().all(|a| a.individual.coord(0) == 1.5 && a.weight == 1.0));
    }

    #[test]
    fn negative_mass_rejected_without_mutation() {
        let mut m = AtomicMeasure::new();
        m.push(0.5, Individual::pure(I)).unwrap();
        let err = m.apply_deposits(&[Deposit::remove(0)]).unwrap_err();
        assert!(matches!(err, Error::NegativeMass { .. }));
        assert_eq!(m.total_mass(), 0.5);
        assert!(matches!(m.apply_deposits(&[Deposit::remove(3)]), Err(Error::MissingAtom { .. })));
    }

    #[test]
    fn partial_removal_keeps_atom() {
        let mut m = AtomicMeasure::new();
        m.push(2.5, Individual::pure(S)).unwrap();
        m.apply_deposits(&[Deposit::remove(0)]).unwrap();
        assert_eq!(m.len(), 1);
        assert_eq!(m.compartment_mass(S), 1.5);
        assert!(!m.has_unit_weights());
    }

    #[test]
    fn panel_distance_examples() {
        let panel_s = [TestFunction::indicator("S", S)];
        let a = sir(1, 0, 0);
        let b = sir(0, 1, 0);
        assert_eq!(panel_distance(&a, &a, &panel_s), 0.0);
        assert_eq!(panel_distance(&a, &b, &panel_s), 1.0);
        let two = sir(2, 0, 0);
        let panel = [TestFunction::indicator("S", S), TestFunction::one()];
        assert_eq!(panel_distance(&two, &a, &panel), 1.0);
    }

    #[test]
    fn csv_dump_has_empty_cells_for_absent_traits() {
        let mut m = AtomicMeasure::new();
        m.push(1.0, Individual::pure(0)).unwrap();
        m.push(0.5, Individual::planar(1, 2.0, 3.5)).unwrap();
        let mut buf = Vec::new();
        m.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "weight,compartment,trait_0,trait_1\n1,0,,\n0.5,1,2,3.5\n");
    }

    #[test]
    fn many_removals_keep_index_consistent() {
        let mut m = sir(5, 7, 3);
        for k in 0..7 {
            let i = m.compartment_atoms(I)[k % m.compartment_atoms(I).len()];
            let s = m.compartment_atoms(S).first().copied();
            let mut d = vec![Deposit::remove(i), Deposit::add(Individual::pure(R))];
            if let Some(s) = s {
                d.push(Deposit::remove(s));
                d.push(Deposit::add(Individual::pure(I)));
            }
            m.apply_deposits(&d).unwrap();
            check_index(&m);
        }
        assert_eq!(m.total_mass(), 15.0);
    }
}
