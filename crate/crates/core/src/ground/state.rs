use super::AtomId;

/// Set of true atoms over a fixed atom table (closed world).
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct State {
    words: Vec<u64>,
    len: usize,
}

impl State {
    pub fn empty(num_atoms: usize) -> Self {
        State { words: vec![0; num_atoms.div_ceil(64)], len: num_atoms }
    }

    /// Size of the atom table this state ranges over.
    pub fn universe(&self) -> usize {
        self.len
    }

    pub fn contains(&self, a: AtomId) -> bool {
        let i = a.index();
        i < self.len && self.words[i / 64] & (1 << (i % 64)) != 0
    }

    /// Returns true if the atom was newly inserted.
    pub fn insert(&mut self, a: AtomId) -> bool {
        let i = a.index();
        assert!(i < self.len, "atom {i} outside a table of {}", self.len);
        let bit = 1 << (i % 64);
        let fresh = self.words[i / 64] & bit == 0;
        self.words[i / 64] |= bit;
        fresh
    }

    pub fn remove(&mut self, a: AtomId) -> bool {
        let i = a.index();
        if i >= self.len {
            return false;
        }
        let bit = 1 << (i % 64);
        let had = self.words[i / 64] & bit != 0;
        self.words[i / 64] &= !bit;
        had
    }

    pub fn len(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|w| *w == 0)
    }

    pub fn iter(&self) -> impl Iterator<Item = AtomId> + '_ {
        (0..self.len).map(|i| AtomId(i as u32)).filter(|a| self.contains(*a))
    }

    pub fn is_subset(&self, other: &State) -> bool {
        self.words.iter().zip(&other.words).all(|(a, b)| a & !b == 0)
    }
}
