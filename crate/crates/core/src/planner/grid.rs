//! Voxel occupancy grid with a Euclidean distance transform, plus the plain
//! text grid file format (header + run-length-encoded occupancy).

use crate::affine::Vec3;
use std::fmt::Write as _;
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GridError {
    #[error("grid parse error: {0}")]
    Parse(String),
    #[error("point {0:?} is outside the grid")]
    OutOfBounds(Vec3),
}

#[derive(Debug, Clone)]
pub struct OccupancyGrid {
    pub origin: Vec3,
    pub cell_size: f64,
    pub dims: [usize; 3],
    occupied: Vec<bool>,
}

impl OccupancyGrid {
    pub fn empty(origin: Vec3, cell_size: f64, dims: [usize; 3]) -> Self {
        assert!(cell_size > 0.0, "cell_size must be positive");
        assert!(dims.iter().all(|&d| d > 0), "dims must be nonzero");
        Self {
            origin,
            cell_size,
            dims,
            occupied: vec![false; dims[0] * dims[1] * dims[2]],
        }
    }

    pub fn num_cells(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    #[inline]
    pub fn index(&self, c: [usize; 3]) -> usize {
        c[0] + self.dims[0] * (c[1] + self.dims[1] * c[2])
    }

    #[inline]
    pub fn is_occupied(&self, c: [usize; 3]) -> bool {
        self.occupied[self.index(c)]
    }

    pub fn set_occupied(&mut self, c: [usize; 3], value: bool) {
        let idx = self.index(c);
        self.occupied[idx] = value;
    }

    pub fn occupied_count(&self) -> usize {
        self.occupied.iter().filter(|&&o| o).count()
    }

    pub fn cell_center(&self, c: [usize; 3]) -> Vec3 {
        self.origin
            + Vec3::new(
                (c[0] as f64 + 0.5) * self.cell_size,
                (c[1] as f64 + 0.5) * self.cell_size,
                (c[2] as f64 + 0.5) * self.cell_size,
            )
    }

    pub fn cell_of(&self, p: &Vec3) -> Result<[usize; 3], GridError> {
        let rel = (p - self.origin) / self.cell_size;
        let mut c = [0usize; 3];
        for k in 0..3 {
            let v = rel[k];
            if v < 0.0 || v >= self.dims[k] as f64 {
                return Err(GridError::OutOfBounds(*p));
            }
            c[k] = v as usize;
        }
        Ok(c)
    }

    /// Occupies every cell whose center lies in the axis-aligned box.
    pub fn fill_box(&mut self, lo: Vec3, hi: Vec3) {
        for iz in 0..self.dims[2] {
            for iy in 0..self.dims[1] {
                for ix in 0..self.dims[0] {
                    let c = self.cell_center([ix, iy, iz]);
                    if (0..3).all(|k| c[k] >= lo[k] && c[k] <= hi[k]) {
                        self.set_occupied([ix, iy, iz], true);
                    }
                }
            }
        }
    }

    /// Euclidean distance (meters, center-to-center) from every cell to the
    /// nearest occupied cell, by a separable squared distance transform.
    pub fn distance_field(&self) -> Vec<f64> {
        let [nx, ny, nz] = self.dims;
        let inf = 1e18;
        let mut d: Vec<f64> = self
            .occupied
            .iter()
            .map(|&o| if o { 0.0 } else { inf })
            .collect();

        // 1-D lower-envelope squared distance transform (Felzenszwalb).
        fn dt1d(f: &[f64], out: &mut Vec<f64>) {
            let n = f.len();
            out.clear();
            out.resize(n, 0.0);
            let mut v = vec![0usize; n];
            let mut z = vec![0.0f64; n + 1];
            let mut k = 0usize;
            v[0] = 0;
            z[0] = -1e20;
            z[1] = 1e20;
            for q in 1..n {
                loop {
                    let s = ((f[q] + (q * q) as f64) - (f[v[k]] + (v[k] * v[k]) as f64))
                        / (2.0 * q as f64 - 2.0 * v[k] as f64);
                    if s <= z[k] {
                        if k == 0 {
                            break;
                        }
                        k -= 1;
                    } else {
                        k += 1;
                        v[k] = q;
                        z[k] = s;
                        z[k + 1] = 1e20;
                        break;
                    }
                }
            }
            k = 0;
            for q in 0..n {
                while z[k + 1] < q as f64 {
                    k += 1;
                }
                let dq = q as f64 - v[k] as f64;
                out[q] = dq * dq + f[v[k]];
            }
        }

        let mut line = Vec::new();
        let mut out = Vec::new();
        // x pass
        for iz in 0..nz {
            for iy in 0..ny {
                line.clear();
                line.extend((0..nx).map(|ix| d[self.index([ix, iy, iz])]));
                dt1d(&line, &mut out);
                for ix in 0..nx {
                    d[self.index([ix, iy, iz])] = out[ix];
                }
            }
        }
        // y pass
        for iz in 0..nz {
            for ix in 0..nx {
                line.clear();
                line.extend((0..ny).map(|iy| d[self.index([ix, iy, iz])]));
                dt1d(&line, &mut out);
                for iy in 0..ny {
                    d[self.index([ix, iy, iz])] = out[iy];
                }
            }
        }
        // z pass
        for iy in 0..ny {
            for ix in 0..nx {
                line.clear();
                line.extend((0..nz).map(|iz| d[self.index([ix, iy, iz])]));
                dt1d(&line, &mut out);
                for iz in 0..nz {
                    d[self.index([ix, iy, iz])] = out[iz];
                }
            }
        }
        for v in d.iter_mut() {
            *v = v.sqrt() * self.cell_size;
        }
        d
    }

    /// Serializes to the plain text grid format.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        writeln!(s, "# occupancy grid").unwrap();
        writeln!(s, "origin {} {} {}", self.origin.x, self.origin.y, self.origin.z).unwrap();
        writeln!(s, "cell_size {}", self.cell_size).unwrap();
        writeln!(s, "dims {} {} {}", self.dims[0], self.dims[1], self.dims[2]).unwrap();
        // Run-length pairs "<count> <0|1>" over the linear index (x fastest).
        let mut runs: Vec<(usize, bool)> = Vec::new();
        for &o in &self.occupied {
            match runs.last_mut() {
                Some((count, val)) if *val == o => *count += 1,
                _ => runs.push((1, o)),
            }
        }
        write!(s, "rle").unwrap();
        for (count, val) in runs {
            write!(s, " {} {}", count, if val { 1 } else { 0 }).unwrap();
        }
        writeln!(s).unwrap();
        s
    }

    pub fn from_text(text: &str) -> Result<Self, GridError> {
        let mut origin = None;
        let mut cell_size = None;
        let mut dims = None;
        let mut rle: Option<Vec<(usize, bool)>> = None;

        fn parse<T: FromStr>(tok: &str, what: &str) -> Result<T, GridError> {
            tok.parse()
                .map_err(|_| GridError::Parse(format!("bad {what}: {tok:?}")))
        }

        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut toks = line.split_whitespace();
            match toks.next() {
                Some("origin") => {
                    let v: Vec<f64> = toks
                        .map(|t| parse(t, "origin"))
                        .collect::<Result<_, _>>()?;
                    if v.len() != 3 {
                        return Err(GridError::Parse("origin needs 3 values".into()));
                    }
                    origin = Some(Vec3::new(v[0], v[1], v[2]));
                }
                Some("cell_size") => {
                    let c: f64 = parse(
                        toks.next()
                            .ok_or_else(|| GridError::Parse("missing cell_size".into()))?,
                        "cell_size",
                    )?;
                    if c <= 0.0 {
                        return Err(GridError::Parse("cell_size must be positive".into()));
                    }
                    cell_size = Some(c);
                }
                Some("dims") => {
                    let v: Vec<usize> = toks
                        .map(|t| parse(t, "dims"))
                        .collect::<Result<_, _>>()?;
                    if v.len() != 3 || v.iter().any(|&d| d == 0) {
                        return Err(GridError::Parse("dims needs 3 positive values".into()));
                    }
                    dims = Some([v[0], v[1], v[2]]);
                }
                Some("rle") => {
                    let toks: Vec<&str> = toks.collect();
                    if toks.len() % 2 != 0 {
                        return Err(GridError::Parse("rle needs count/value pairs".into()));
                    }
                    let mut runs = Vec::new();
                    for pair in toks.chunks(2) {
                        let count: usize = parse(pair[0], "rle count")?;
                        let val: u8 = parse(pair[1], "rle value")?;
                        runs.push((count, val != 0));
                    }
                    rle = Some(runs);
                }
                Some(other) => {
                    return Err(GridError::Parse(format!("unknown directive {other:?}")));
                }
                None => {}
            }
        }
        let origin = origin.ok_or_else(|| GridError::Parse("missing origin".into()))?;
        let cell_size = cell_size.ok_or_else(|| GridError::Parse("missing cell_size".into()))?;
        let dims = dims.ok_or_else(|| GridError::Parse("missing dims".into()))?;
        let mut grid = Self::empty(origin, cell_size, dims);
        if let Some(runs) = rle {
            let total: usize = runs.iter().map(|(c, _)| c).sum();
            if total != grid.num_cells() {
                return Err(GridError::Parse(format!(
                    "rle covers {total} cells, grid has {}",
                    grid.num_cells()
                )));
            }
            let mut idx = 0;
            for (count, val) in runs {
                for _ in 0..count {
                    grid.occupied[idx] = val;
                    idx += 1;
                }
            }
        }
        Ok(grid)
    }
}
