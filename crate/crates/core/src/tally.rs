//! Integer event counts per setting pair. Every session statistic is a
//! function of these counts, so tallies from disjoint round ranges merge
//! exactly regardless of how the rounds were scheduled.

use crate::num::{count, Scalar};
use crate::optics::{Outcome, PolarizationAngle};
use crate::sources::Side;

/// Joint outcome histogram for one `(θ_A, θ_B)` pair, indexed
/// `[outcome_a][outcome_b]` in `Outcome::ALL` order.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct OutcomeMatrix(pub [[u64; 4]; 4]);

impl OutcomeMatrix {
    #[inline]
    pub fn add(&mut self, a: Outcome, b: Outcome) {
        self.0[a.index()][b.index()] += 1;
    }

    #[inline]
    pub fn get(&self, a: Outcome, b: Outcome) -> u64 {
        self.0[a.index()][b.index()]
    }

    pub fn merge(&mut self, other: &OutcomeMatrix) {
        for (row, orow) in self.0.iter_mut().zip(other.0.iter()) {
            for (c, o) in row.iter_mut().zip(orow.iter()) {
                *c += o;
            }
        }
    }

    pub fn total(&self) -> u64 {
        self.0.iter().flatten().sum()
    }

    fn cells(&self) -> impl Iterator<Item = (Outcome, Outcome, u64)> + '_ {
        Outcome::ALL
            .into_iter()
            .flat_map(move |a| Outcome::ALL.into_iter().map(move |b| (a, b, self.get(a, b))))
    }

    /// Rounds in which `side` registered any detection.
    pub fn detections(&self, side: Side) -> u64 {
        self.cells()
            .filter(|&(a, b, _)| match side {
                Side::A => a.is_detection(),
                Side::B => b.is_detection(),
            })
            .map(|(_, _, n)| n)
            .sum()
    }

    /// Rounds in which both sides registered a detection.
    pub fn joint_detections(&self) -> u64 {
        self.cells()
            .filter(|&(a, b, _)| a.is_detection() && b.is_detection())
            .map(|(_, _, n)| n)
            .sum()
    }

    /// Rounds in which both sides produced a single-channel click.
    pub fn coincidences(&self) -> u64 {
        self.cells()
            .filter(|&(a, b, _)| a.is_click() && b.is_click())
            .map(|(_, _, n)| n)
            .sum()
    }

    pub fn double_clicks(&self) -> u64 {
        self.cells()
            .filter(|&(a, b, _)| a == Outcome::DoubleClick || b == Outcome::DoubleClick)
            .map(|(_, _, n)| n)
            .sum()
    }

    /// Coincidence-conditioned correlation `(N₊₊ + N₋₋ − N₊₋ − N₋₊)/N_c`.
    pub fn correlation<T: Scalar>(&self) -> CorrelationEstimate<T> {
        use Outcome::{Minus, Plus};
        let same = self.get(Plus, Plus) + self.get(Minus, Minus);
        let diff = self.get(Plus, Minus) + self.get(Minus, Plus);
        CorrelationEstimate::from_counts(same, diff)
    }
}

/// Correlation estimated over detected pairs, with its binomial standard
/// error `√((1 − E²)/n)`. `value` is `None` without coincidences.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrelationEstimate<T> {
    pub coincidences: u64,
    pub value: Option<T>,
    pub stderr: Option<T>,
}

impl<T: Scalar> CorrelationEstimate<T> {
    pub fn from_counts(same: u64, diff: u64) -> Self {
        let n = same + diff;
        if n == 0 {
            return CorrelationEstimate {
                coincidences: 0,
                value: None,
                stderr: None,
            };
        }
        let nt = count::<T>(n);
        let e = (count::<T>(same) - count::<T>(diff)) / nt;
        let se = ((T::one() - e * e).max(T::zero()) / nt).sqrt();
        CorrelationEstimate {
            coincidences: n,
            value: Some(e),
            stderr: Some(se),
        }
    }

    pub fn is_defined(&self) -> bool {
        self.value.is_some()
    }
}

/// Weak-pulse bookkeeping for one side.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct WeakSideCount {
    pub rounds: u64,
    pub detected: u64,
}

/// Counts for a whole session, keyed by setting position.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionTally<T> {
    alice_settings: Vec<PolarizationAngle<T>>,
    bob_settings: Vec<PolarizationAngle<T>>,
    cells: Vec<Vec<OutcomeMatrix>>,
    weak: [WeakSideCount; 2],
    rounds: u64,
}

impl<T: Scalar> SessionTally<T> {
    pub fn new(alice_settings: &[PolarizationAngle<T>], bob_settings: &[PolarizationAngle<T>]) -> Self {
        SessionTally {
            alice_settings: alice_settings.to_vec(),
            bob_settings: bob_settings.to_vec(),
            cells: vec![vec![OutcomeMatrix::default(); bob_settings.len()]; alice_settings.len()],
            weak: [WeakSideCount::default(); 2],
            rounds: 0,
        }
    }

    /// Empty tally whose settings are discovered as rounds are added.
    pub fn empty() -> Self {
        Self::new(&[], &[])
    }

    pub fn alice_settings(&self) -> &[PolarizationAngle<T>] {
        &self.alice_settings
    }

    pub fn bob_settings(&self) -> &[PolarizationAngle<T>] {
        &self.bob_settings
    }

    pub fn rounds(&self) -> u64 {
        self.rounds
    }

    pub fn weak_side(&self, side: Side) -> WeakSideCount {
        self.weak[side_index(side)]
    }

    pub fn cell(&self, ia: usize, ib: usize) -> &OutcomeMatrix {
        &self.cells[ia][ib]
    }

    /// Adds a round whose settings are already known by position.
    #[inline]
    pub fn add_indexed(&mut self, ia: usize, ib: usize, a: Outcome, b: Outcome, weak_side: Option<Side>) {
        self.cells[ia][ib].add(a, b);
        self.rounds += 1;
        if let Some(side) = weak_side {
            let w = &mut self.weak[side_index(side)];
            w.rounds += 1;
            let detected = match side {
                Side::A => a.is_detection(),
                Side::B => b.is_detection(),
            };
            if detected {
                w.detected += 1;
            }
        }
    }

    /// Adds a round, registering unseen settings on the fly.
    pub fn add(
        &mut self,
        theta_a: PolarizationAngle<T>,
        theta_b: PolarizationAngle<T>,
        a: Outcome,
        b: Outcome,
        weak_side: Option<Side>,
    ) {
        let ia = match self.alice_position(theta_a) {
            Some(i) => i,
            None => {
                self.alice_settings.push(theta_a);
                self.cells.push(vec![OutcomeMatrix::default(); self.bob_settings.len()]);
                self.alice_settings.len() - 1
            }
        };
        let ib = match self.bob_position(theta_b) {
            Some(i) => i,
            None => {
                self.bob_settings.push(theta_b);
                for row in &mut self.cells {
                    row.push(OutcomeMatrix::default());
                }
                self.bob_settings.len() - 1
            }
        };
        self.add_indexed(ia, ib, a, b, weak_side);
    }

    /// Merges a tally built over the same setting lists.
    pub fn merge(mut self, other: Self) -> Self {
        assert_eq!(
            self.alice_settings, other.alice_settings,
            "merging tallies with different settings"
        );
        assert_eq!(
            self.bob_settings, other.bob_settings,
            "merging tallies with different settings"
        );
        for (row, orow) in self.cells.iter_mut().zip(other.cells.iter()) {
            for (c, o) in row.iter_mut().zip(orow.iter()) {
                c.merge(o);
            }
        }
        for (w, o) in self.weak.iter_mut().zip(other.weak.iter()) {
            w.rounds += o.rounds;
            w.detected += o.detected;
        }
        self.rounds += other.rounds;
        self
    }

    pub fn alice_position(&self, theta: PolarizationAngle<T>) -> Option<usize> {
        self.alice_settings.iter().position(|&s| s == theta)
    }

    pub fn bob_position(&self, theta: PolarizationAngle<T>) -> Option<usize> {
        self.bob_settings.iter().position(|&s| s == theta)
    }

    pub fn pair(&self, theta_a: PolarizationAngle<T>, theta_b: PolarizationAngle<T>) -> Option<&OutcomeMatrix> {
        Some(&self.cells[self.alice_position(theta_a)?][self.bob_position(theta_b)?])
    }

    /// Iterates `(θ_A, θ_B, counts)` over all setting pairs.
    pub fn pairs(&self) -> impl Iterator<Item = (PolarizationAngle<T>, PolarizationAngle<T>, &OutcomeMatrix)> + '_ {
        self.alice_settings.iter().enumerate().flat_map(move |(ia, &ta)| {
            self.bob_settings
                .iter()
                .enumerate()
                .map(move |(ib, &tb)| (ta, tb, &self.cells[ia][ib]))
        })
    }

    /// Sum over every setting pair.
    pub fn overall(&self) -> OutcomeMatrix {
        let mut m = OutcomeMatrix::default();
        for row in &self.cells {
            for c in row {
                m.merge(c);
            }
        }
        m
    }

    /// Rounds where `side` used setting `i`, and how many of them were detected.
    pub fn setting_counts(&self, side: Side, i: usize) -> (u64, u64) {
        let iter: Box<dyn Iterator<Item = &OutcomeMatrix>> = match side {
            Side::A => Box::new(self.cells[i].iter()),
            Side::B => Box::new(self.cells.iter().map(move |row| &row[i])),
        };
        iter.fold((0, 0), |(n, d), m| (n + m.total(), d + m.detections(side)))
    }

    pub fn correlation(
        &self,
        theta_a: PolarizationAngle<T>,
        theta_b: PolarizationAngle<T>,
    ) -> Option<CorrelationEstimate<T>> {
        self.pair(theta_a, theta_b).map(|m| m.correlation())
    }

    /// Pools setting pairs by their reduced difference `θ_B − θ_A`.
    pub fn correlations_by_delta(&self) -> Vec<(T, CorrelationEstimate<T>)> {
        let mut bins: Vec<(T, OutcomeMatrix)> = Vec::new();
        for (ta, tb, m) in self.pairs() {
            let d = tb.diff(ta);
            let tol = crate::num::lit::<T>(1e-9);
            match bins.iter_mut().find(|(bd, _)| (*bd - d).abs() < tol) {
                Some((_, acc)) => acc.merge(m),
                None => bins.push((d, *m)),
            }
        }
        bins.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal));
        bins.into_iter().map(|(d, m)| (d, m.correlation())).collect()
    }

    /// Sifting statistics: `(sifted, errors)` over equal-setting rounds where
    /// both sides clicked. Equal outcomes are errors under the
    /// anticorrelation convention.
    pub fn sift_counts(&self) -> (u64, u64) {
        use Outcome::{Minus, Plus};
        let mut sifted = 0;
        let mut errors = 0;
        for (ta, tb, m) in self.pairs() {
            if ta == tb {
                sifted += m.coincidences();
                errors += m.get(Plus, Plus) + m.get(Minus, Minus);
            }
        }
        (sifted, errors)
    }

    /// Quantum bit error rate on the sifted key, undefined when nothing sifts.
    pub fn qber(&self) -> Option<T> {
        let (sifted, errors) = self.sift_counts();
        (sifted > 0).then(|| count::<T>(errors) / count::<T>(sifted))
    }
}

fn side_index(side: Side) -> usize {
    match side {
        Side::A => 0,
        Side::B => 1,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use Outcome::*;

    fn pa(x: f64) -> PolarizationAngle<f64> {
        PolarizationAngle::new(x)
    }

    #[test]
    fn correlation_from_counts() {
        let e = CorrelationEstimate::<f64>::from_counts(30, 10);
        assert_eq!(e.coincidences, 40);
        assert!((e.value.unwrap() - 0.5).abs() < 1e-15);
        assert!((e.stderr.unwrap() - (0.75f64 / 40.0).sqrt()).abs() < 1e-15);
        assert!(!CorrelationEstimate::<f64>::from_counts(0, 0).is_defined());
    }

    #[test]
    fn counting_and_discovery() {
        let mut t = SessionTally::<f64>::empty();
        t.add(pa(0.0), pa(0.0), Plus, Minus, None);
        t.add(pa(0.0), pa(0.0), Plus, Plus, None);
        t.add(pa(0.5), pa(0.0), NoClick, Minus, Some(Side::A));
        t.add(pa(0.5), pa(1.0), Minus, DoubleClick, Some(Side::B));
        assert_eq!(t.rounds(), 4);
        assert_eq!(t.alice_settings().len(), 2);
        assert_eq!(t.bob_settings().len(), 2);
        assert_eq!(t.sift_counts(), (2, 1));
        assert_eq!(t.qber(), Some(0.5));
        assert_eq!(t.weak_side(Side::A), WeakSideCount { rounds: 1, detected: 0 });
        assert_eq!(t.weak_side(Side::B), WeakSideCount { rounds: 1, detected: 1 });
        assert_eq!(t.overall().double_clicks(), 1);
        assert_eq!(t.setting_counts(Side::A, 1), (2, 1));
        assert_eq!(t.setting_counts(Side::B, 0), (3, 3));
    }

    #[test]
    fn qber_undefined_without_sifted_rounds() {
        let mut t = SessionTally::<f64>::empty();
        t.add(pa(0.0), pa(0.3), Plus, Minus, None);
        assert_eq!(t.qber(), None);
    }

    #[test]
    fn merge_adds_counts() {
        let s = [pa(0.0), pa(0.7)];
        let mut a = SessionTally::new(&s, &s);
        let mut b = SessionTally::new(&s, &s);
        a.add_indexed(0, 1, Plus, Minus, None);
        b.add_indexed(0, 1, Plus, Plus, Some(Side::A));
        let m = a.merge(b);
        assert_eq!(m.rounds(), 2);
        assert_eq!(m.cell(0, 1).total(), 2);
        assert_eq!(m.weak_side(Side::A).rounds, 1);
    }
}
