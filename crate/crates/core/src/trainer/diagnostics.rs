use std::io::Write;

use crate::error::Result;
use crate::trainer::state::LayerStats;

pub const DIAGNOSTICS_HEADER: &str =
    "iter,layer,mean_beta_u_norm,mean_gamma_v_norm,objective_eq4,aug_lagrangian,wall_ms";

#[derive(Clone, Debug, PartialEq)]
pub struct DiagnosticsRow {
    pub iteration: usize,
    /// Index `m − 1` holds layer `m`.
    pub layers: Vec<LayerStats>,
    pub objective: f64,
    pub augmented_lagrangian: f64,
    pub wall_time_ms: f64,
}

impl DiagnosticsRow {
    pub fn mean_beta_u_norms(&self) -> Vec<f64> {
        self.layers.iter().map(|l| l.mean_beta_u_norm).collect()
    }

    pub fn mean_residual_norms(&self) -> Vec<f64> {
        self.layers.iter().map(|l| l.mean_residual_norm).collect()
    }
}

pub fn write_diagnostics_header(w: &mut dyn Write) -> Result<()> {
    writeln!(w, "{DIAGNOSTICS_HEADER}")?;
    Ok(())
}

/// One line per layer with its dual norms, then an aggregate line
/// (`layer = -1`) with the objectives and, when `with_wall_time`, the
/// sweep time. Wall time is left empty otherwise so reruns are
/// byte-identical.
pub fn write_diagnostics_row(w: &mut dyn Write, row: &DiagnosticsRow, with_wall_time: bool) -> Result<()> {
    for (idx, l) in row.layers.iter().enumerate() {
        writeln!(
            w,
            "{},{},{},{},,,",
            row.iteration,
            idx + 1,
            l.mean_beta_u_norm,
            l.mean_gamma_v_norm
        )?;
    }
    let wall = if with_wall_time {
        format!("{:.3}", row.wall_time_ms)
    } else {
        String::new()
    };
    writeln!(
        w,
        "{},-1,,,{},{},{}",
        row.iteration, row.objective, row.augmented_lagrangian, wall
    )?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_layout() {
        let row = DiagnosticsRow {
            iteration: 3,
            layers: vec![
                LayerStats {
                    mean_beta_u_norm: 0.5,
                    mean_gamma_v_norm: 0.25,
                    mean_residual_norm: 1.0,
                },
                LayerStats {
                    mean_beta_u_norm: 1.5,
                    mean_gamma_v_norm: 0.0,
                    mean_residual_norm: 0.0,
                },
            ],
            objective: 2.0,
            augmented_lagrangian: 2.5,
            wall_time_ms: 12.3456,
        };
        let mut buf = Vec::new();
        write_diagnostics_header(&mut buf).unwrap();
        write_diagnostics_row(&mut buf, &row, true).unwrap();
        write_diagnostics_row(&mut buf, &row, false).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], DIAGNOSTICS_HEADER);
        assert_eq!(lines[1], "3,1,0.5,0.25,,,");
        assert_eq!(lines[2], "3,2,1.5,0,,,");
        assert_eq!(lines[3], "3,-1,,,2,2.5,12.346");
        assert_eq!(lines[6], "3,-1,,,2,2.5,");
        for l in &lines {
            assert_eq!(l.matches(',').count(), 6, "{l}");
        }
    }
}
