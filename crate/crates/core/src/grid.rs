use serde::{Deserialize, Serialize};

/// Lattice site as `(row, col)`, row 0 at the top.
pub type Site = (usize, usize);

/// Dense row-major 2-D array.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Grid<T> {
    width: usize,
    height: usize,
    data: Vec<T>,
}

impl<T: Clone> Grid<T> {
    pub fn filled(width: usize, height: usize, value: T) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }
}

impl<T> Grid<T> {
    /// Wraps row-major data. Returns `None` when `data.len() != width * height`.
    pub fn from_vec(width: usize, height: usize, data: Vec<T>) -> Option<Self> {
        (data.len() == width * height).then_some(Self {
            width,
            height,
            data,
        })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(Site) -> T) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for row in 0..height {
            for col in 0..width {
                data.push(f((row, col)));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn same_shape<U>(&self, other: &Grid<U>) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn index_of(&self, (row, col): Site) -> usize {
        debug_assert!(row < self.height && col < self.width);
        row * self.width + col
    }

    pub fn site_of(&self, index: usize) -> Site {
        (index / self.width, index % self.width)
    }

    pub fn contains(&self, (row, col): Site) -> bool {
        row < self.height && col < self.width
    }

    pub fn get(&self, site: Site) -> Option<&T> {
        self.contains(site).then(|| &self.data[self.index_of(site)])
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn rows(&self) -> std::slice::Chunks<'_, T> {
        self.data.chunks(self.width.max(1))
    }

    pub fn map<U>(&self, f: impl FnMut(&T) -> U) -> Grid<U> {
        Grid {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(f).collect(),
        }
    }
}

impl<T> std::ops::Index<Site> for Grid<T> {
    type Output = T;

    fn index(&self, site: Site) -> &T {
        &self.data[self.index_of(site)]
    }
}

impl<T> std::ops::IndexMut<Site> for Grid<T> {
    fn index_mut(&mut self, site: Site) -> &mut T {
        let i = self.index_of(site);
        &mut self.data[i]
    }
}

/// Grayscale image with pixel values in `[0, 1]`.
pub type Image = Grid<f64>;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn row_major_layout() {
        let g = Grid::from_fn(3, 2, |(r, c)| r * 10 + c);
        assert_eq!(g.as_slice(), &[0, 1, 2, 10, 11, 12]);
        assert_eq!(g[(1, 2)], 12);
        assert_eq!(g.site_of(4), (1, 1));
        assert!(g.get((2, 0)).is_none());
    }

    #[test]
    fn from_vec_checks_length() {
        assert!(Grid::from_vec(2, 2, vec![0; 3]).is_none());
        assert!(Grid::from_vec(2, 2, vec![0; 4]).is_some());
    }
}
