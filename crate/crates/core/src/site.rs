//! Lattice sites and L∞ boxes.

/// Largest supported lattice dimension.
pub const MAX_DIM: usize = 4;

/// A site of Z^d stored in a fixed array; coordinates beyond `d` are zero.
pub type Site = [i32; MAX_DIM];

pub const ORIGIN: Site = [0; MAX_DIM];

/// Builds a site from a coordinate slice of length at most `MAX_DIM`.
pub fn site(coords: &[i32]) -> Site {
    let mut s = ORIGIN;
    s[..coords.len()].copy_from_slice(coords);
    s
}

pub fn add(a: &Site, b: &Site) -> Site {
    let mut s = *a;
    for k in 0..MAX_DIM {
        s[k] += b[k];
    }
    s
}

pub fn sub(a: &Site, b: &Site) -> Site {
    let mut s = *a;
    for k in 0..MAX_DIM {
        s[k] -= b[k];
    }
    s
}

pub fn neg(a: &Site) -> Site {
    let mut s = *a;
    for c in s.iter_mut() {
        *c = -*c;
    }
    s
}

pub fn linf(a: &Site) -> i32 {
    a.iter().map(|c| c.abs()).max().unwrap_or(0)
}

pub fn l1(a: &Site) -> i32 {
    a.iter().map(|c| c.abs()).sum()
}

/// Formats the first `d` coordinates, comma separated.
pub fn fmt_site(a: &Site, d: usize) -> String {
    a[..d]
        .iter()
        .map(|c| c.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

/// The L∞ ball of radius `radius` around the origin, with a dense index.
#[derive(Clone, Debug)]
pub struct LatticeBox {
    pub dim: usize,
    pub radius: i32,
    side: usize,
    len: usize,
}

impl LatticeBox {
    pub fn new(dim: usize, radius: i32) -> Self {
        let side = (2 * radius + 1) as usize;
        LatticeBox {
            dim,
            radius,
            side,
            len: side.pow(dim as u32),
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn contains(&self, s: &Site) -> bool {
        s[..self.dim].iter().all(|c| c.abs() <= self.radius)
    }

    pub fn index(&self, s: &Site) -> Option<usize> {
        if !self.contains(s) {
            return None;
        }
        let mut idx = 0usize;
        for k in (0..self.dim).rev() {
            idx = idx * self.side + (s[k] + self.radius) as usize;
        }
        Some(idx)
    }

    pub fn site_at(&self, mut idx: usize) -> Site {
        let mut s = ORIGIN;
        for c in s.iter_mut().take(self.dim) {
            *c = (idx % self.side) as i32 - self.radius;
            idx /= self.side;
        }
        s
    }

    pub fn sites(&self) -> impl Iterator<Item = Site> + '_ {
        (0..self.len).map(move |i| self.site_at(i))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn box_index_roundtrip() {
        let b = LatticeBox::new(3, 2);
        assert_eq!(b.len(), 125);
        for i in 0..b.len() {
            assert_eq!(b.index(&b.site_at(i)), Some(i));
        }
        assert_eq!(b.index(&site(&[3, 0, 0])), None);
    }
}
