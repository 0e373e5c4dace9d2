//! L1 data cache model: 64 sets x 8 ways of 64-byte lines, true-LRU
//! replacement. Geometry matches a 32 KiB, 8-way L1D.

pub const LINE_BYTES: u64 = 64;
pub const NUM_SETS: usize = 64;
pub const NUM_WAYS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CacheOutcome {
    Hit,
    Miss,
}

#[derive(Debug, Clone, Copy, Default)]
struct Way {
    tag: u64,
    valid: bool,
    /// 0 = most recently used, NUM_WAYS-1 = least.
    lru_rank: u8,
}

#[derive(Debug, Clone)]
pub struct CacheState {
    sets: Vec<[Way; NUM_WAYS]>,
}

impl Default for CacheState {
    fn default() -> Self {
        let mut sets = vec![[Way::default(); NUM_WAYS]; NUM_SETS];
        for set in &mut sets {
            for (i, way) in set.iter_mut().enumerate() {
                way.lru_rank = i as u8;
            }
        }
        Self { sets }
    }
}

impl CacheState {
    pub fn new() -> Self {
        Self::default()
    }

    fn index_tag(addr: u64) -> (usize, u64) {
        let line = addr / LINE_BYTES;
        ((line as usize) % NUM_SETS, line / NUM_SETS as u64)
    }

    fn touch(set: &mut [Way; NUM_WAYS], way_idx: usize) {
        let old = set[way_idx].lru_rank;
        for way in set.iter_mut() {
            if way.lru_rank < old {
                way.lru_rank += 1;
            }
        }
        set[way_idx].lru_rank = 0;
    }

    /// Access a line: a miss inserts it, evicting the LRU way.
    pub fn access(&mut self, addr: u64) -> CacheOutcome {
        let (index, tag) = Self::index_tag(addr);
        let set = &mut self.sets[index];
        if let Some(i) = (0..NUM_WAYS).find(|&i| set[i].valid && set[i].tag == tag) {
            Self::touch(set, i);
            return CacheOutcome::Hit;
        }
        let victim = (0..NUM_WAYS)
            .find(|&i| !set[i].valid)
            .unwrap_or_else(|| {
                (0..NUM_WAYS)
                    .max_by_key(|&i| set[i].lru_rank)
                    .expect("nonempty set")
            });
        set[victim] = Way {
            tag,
            valid: true,
            lru_rank: set[victim].lru_rank,
        };
        Self::touch(set, victim);
        CacheOutcome::Miss
    }

    /// Invalidate the line containing `addr` if present.
    pub fn flush(&mut self, addr: u64) {
        let (index, tag) = Self::index_tag(addr);
        for way in &mut self.sets[index] {
            if way.valid && way.tag == tag {
                way.valid = false;
            }
        }
    }

    pub fn contains(&self, addr: u64) -> bool {
        let (index, tag) = Self::index_tag(addr);
        self.sets[index].iter().any(|w| w.valid && w.tag == tag)
    }

    /// Line number of an address, for distinct-line checks.
    pub fn line_of(addr: u64) -> u64 {
        addr / LINE_BYTES
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flush_then_access_misses() {
        let mut c = CacheState::new();
        c.access(0x2000);
        c.flush(0x2000);
        assert_eq!(c.access(0x2000), CacheOutcome::Miss);
    }

    #[test]
    fn repeat_access_hits() {
        let mut c = CacheState::new();
        assert_eq!(c.access(0x40), CacheOutcome::Miss);
        assert_eq!(c.access(0x40), CacheOutcome::Hit);
        // Same line, different byte.
        assert_eq!(c.access(0x47), CacheOutcome::Hit);
    }

    #[test]
    fn lru_evicts_oldest_of_nine() {
        let mut c = CacheState::new();
        // Nine distinct lines mapping to set 0: stride = NUM_SETS * LINE_BYTES.
        let stride = NUM_SETS as u64 * LINE_BYTES;
        for i in 0..9u64 {
            assert_eq!(c.access(i * stride), CacheOutcome::Miss);
        }
        // Hand-simulated LRU: after inserting lines 0..9 into an 8-way set,
        // line 0 (the oldest untouched) must have been evicted.
        assert_eq!(c.access(0), CacheOutcome::Miss);
        // Line 8 is still resident.
        assert!(c.contains(8 * stride));
    }

    #[test]
    fn lru_respects_touch_order() {
        let mut c = CacheState::new();
        let stride = NUM_SETS as u64 * LINE_BYTES;
        for i in 0..8u64 {
            c.access(i * stride);
        }
        // Touch line 0 so line 1 becomes LRU, then insert a ninth line.
        c.access(0);
        c.access(8 * stride);
        assert!(c.contains(0));
        assert!(!c.contains(stride));
    }

    #[test]
    fn ranks_stay_a_permutation() {
        let mut c = CacheState::new();
        let mut addr = 0u64;
        for step in 0..1000u64 {
            addr = addr.wrapping_mul(6364136223846793005).wrapping_add(step);
            c.access(addr % (1 << 20));
        }
        for set in &c.sets {
            let mut ranks: Vec<u8> = set.iter().map(|w| w.lru_rank).collect();
            ranks.sort_unstable();
            assert_eq!(ranks, (0..NUM_WAYS as u8).collect::<Vec<_>>());
        }
    }
}
