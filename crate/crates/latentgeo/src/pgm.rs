//! Grayscale image grids written as binary PGM.

use std::path::Path;

use crate::error::{CliError, CliResult};
use crate::io::write_bytes;

const SEPARATOR: u8 = 128;

/// `rows × cols` cells, each a `cell_h × cell_w` image stored row-major with
/// intensities nominally in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageGrid {
    pub rows: usize,
    pub cols: usize,
    pub cell_h: usize,
    pub cell_w: usize,
    cells: Vec<Vec<f64>>,
}

impl ImageGrid {
    /// Builds a grid from cells in row-major order.
    pub fn new(rows: usize, cols: usize, cell_h: usize, cell_w: usize, cells: Vec<Vec<f64>>) -> CliResult<Self> {
        if rows == 0 || cols == 0 || cell_h == 0 || cell_w == 0 {
            return Err(CliError::Config(format!(
                "image grid needs positive sizes, got {rows}x{cols} cells of {cell_h}x{cell_w}"
            )));
        }
        if cells.len() != rows * cols {
            return Err(CliError::Config(format!("expected {} cells, got {}", rows * cols, cells.len())));
        }
        if let Some(bad) = cells.iter().position(|c| c.len() != cell_h * cell_w) {
            return Err(CliError::Config(format!(
                "cell {bad} has {} pixels, expected {}",
                cells[bad].len(),
                cell_h * cell_w
            )));
        }
        Ok(ImageGrid {
            rows,
            cols,
            cell_h,
            cell_w,
            cells,
        })
    }

    pub fn cell(&self, r: usize, c: usize) -> &[f64] {
        &self.cells[r * self.cols + c]
    }

    pub fn width(&self) -> usize {
        self.cols * self.cell_w + self.cols - 1
    }

    pub fn height(&self) -> usize {
        self.rows * self.cell_h + self.rows - 1
    }

    /// Pixel bytes after clamping to `[0, 1]` and scaling by 255; separators
    /// between cells (none on the outer border) have value 128.
    pub fn to_bytes(&self) -> Vec<u8> {
        let (w, h) = (self.width(), self.height());
        let mut px = vec![SEPARATOR; w * h];
        for r in 0..self.rows {
            for c in 0..self.cols {
                let cell = self.cell(r, c);
                let (y0, x0) = (r * (self.cell_h + 1), c * (self.cell_w + 1));
                for y in 0..self.cell_h {
                    for x in 0..self.cell_w {
                        px[(y0 + y) * w + x0 + x] = to_byte(cell[y * self.cell_w + x]);
                    }
                }
            }
        }
        px
    }

    pub fn encode_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width(), self.height()).into_bytes();
        out.extend(self.to_bytes());
        out
    }
}

fn to_byte(v: f64) -> u8 {
    if v.is_nan() {
        return 0;
    }
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Picks a cell shape for flat vectors of length `d`: square when `d` is a
/// perfect square, otherwise a single row.
pub fn cell_shape(d: usize) -> (usize, usize) {
    let s = (d as f64).sqrt().round() as usize;
    if s * s == d {
        (s, s)
    } else {
        (1, d)
    }
}

pub fn write_pgm_grid(grid: &ImageGrid, path: &Path) -> CliResult<()> {
    write_bytes(path, &grid.encode_pgm())
}
