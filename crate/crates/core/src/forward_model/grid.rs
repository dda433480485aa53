use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};

/// Vertex-centred 1-D grid. Nodes sit on cell faces, node 0 at the heated
/// surface and the last node on the back face.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub node_positions: Vec<f64>,
    pub cell_widths: Vec<f64>,
}

impl Grid {
    pub fn n_cells(&self) -> usize {
        self.cell_widths.len()
    }

    pub fn n_nodes(&self) -> usize {
        self.node_positions.len()
    }

    pub fn thickness(&self) -> f64 {
        *self.node_positions.last().expect("grid has nodes")
    }

    /// Control-volume width of each node: half of each adjacent cell.
    pub fn dual_volumes(&self) -> Vec<f64> {
        let n = self.n_nodes();
        let mut v = vec![0.0; n];
        for (c, &w) in self.cell_widths.iter().enumerate() {
            v[c] += 0.5 * w;
            v[c + 1] += 0.5 * w;
        }
        v
    }
}

/// Geometric grid whose surface-cell to back-cell width ratio equals `stretch`.
///
/// `stretch < 1` refines toward the heated surface (`0.1` gives a surface cell
/// ten times thinner than the back cell).
pub fn build_grid(n_cells: usize, thickness: f64, stretch: f64) -> Result<Grid> {
    ensure!(n_cells >= 2, "grid needs at least 2 cells, got {n_cells}");
    ensure!(
        thickness > 0.0 && thickness.is_finite(),
        "thickness must be positive, got {thickness}"
    );
    ensure!(
        stretch > 0.0 && stretch.is_finite(),
        "stretch must be positive, got {stretch}"
    );

    // Growth factor from one cell to the next, moving away from the surface.
    let growth = (1.0 / stretch).powf(1.0 / (n_cells - 1) as f64);
    let raw: Vec<f64> = (0..n_cells).map(|i| growth.powi(i as i32)).collect();
    let total: f64 = raw.iter().sum();
    let cell_widths: Vec<f64> = raw.iter().map(|w| w * thickness / total).collect();

    let mut node_positions = Vec::with_capacity(n_cells + 1);
    let mut x = 0.0;
    node_positions.push(x);
    for w in &cell_widths[..n_cells - 1] {
        x += w;
        node_positions.push(x);
    }
    node_positions.push(thickness);

    Ok(Grid {
        node_positions,
        cell_widths,
    })
}
