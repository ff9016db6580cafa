//! CSV emission and parsing for run outputs.
//!
//! Four record families share one dialect: a header row, comma-separated
//! columns, LF line endings, reals printed with 17 significant digits (so
//! parsing recovers every `f64` bit-exactly; `parse(emit(x)) = x` for all
//! record types).
//!
//! ```text
//!   state   t,j,w_j,V_j,rho_j        one row per node and snapshot
//!   fields  t,k,x_k,c_k[,...]        one row per interior element node,
//!                                    one column per field in model order
//!   ladder  m|dt,error_v,eoc_v[,error_rho,eoc_rho]
//!   runs    method,resolution,wall_secs,error,steps,newton_iters
//! ```
//!
//! State rows carry the mass coordinate `w_j = j Δw`, the node position
//! `V_j`, and the density of the cell left of the node (`j = 0` repeats the
//! first cell so step plots need no special casing).

use crate::analysis::{EocLadder, LadderMode, RunRecord};
use crate::driver::SimState;
use crate::error::{Error, Result};
use crate::mass::reconstruct_density;

/// A real with 17 significant digits: the shortest width that survives a
/// decimal round trip for every finite `f64`.
pub fn g17(x: f64) -> String {
    format!("{x:.16e}")
}

fn bad(line: usize, message: impl Into<String>) -> Error {
    Error::Config {
        line: Some(line),
        message: message.into(),
    }
}

fn real(line: usize, token: &str) -> Result<f64> {
    token
        .parse::<f64>()
        .map_err(|_| bad(line, format!("`{token}` is not a number")))
}

fn integer(line: usize, token: &str) -> Result<u64> {
    token
        .parse::<u64>()
        .map_err(|_| bad(line, format!("`{token}` is not a non-negative integer")))
}

fn expect_header(text: &str, wanted: &str) -> Result<()> {
    match text.lines().next() {
        Some(first) if first == wanted => Ok(()),
        Some(first) => Err(bad(1, format!("expected header `{wanted}`, got `{first}`"))),
        None => Err(bad(1, "empty input")),
    }
}

/// One row of the Lagrangian state table.
#[derive(Debug, Clone, PartialEq)]
pub struct StateRow {
    pub t: f64,
    pub j: usize,
    pub w: f64,
    pub v: f64,
    pub rho: f64,
}

/// The state table of one snapshot: rows j = 0 ..= M.
pub fn state_rows(state: &SimState) -> Vec<StateRow> {
    let nodes = &state.v.nodes;
    let dw = state.v.grid.dw();
    let density = reconstruct_density(&state.v);
    nodes
        .iter()
        .enumerate()
        .map(|(j, &v)| StateRow {
            t: state.t,
            j,
            w: j as f64 * dw,
            v,
            rho: density.values[j.saturating_sub(1)],
        })
        .collect()
}

pub fn emit_state_csv(rows: &[StateRow]) -> String {
    let mut out = String::from("t,j,w_j,V_j,rho_j\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            g17(r.t),
            r.j,
            g17(r.w),
            g17(r.v),
            g17(r.rho)
        ));
    }
    out
}

pub fn parse_state_csv(text: &str) -> Result<Vec<StateRow>> {
    expect_header(text, "t,j,w_j,V_j,rho_j")?;
    let mut rows = Vec::new();
    for (idx, line) in text.lines().enumerate().skip(1) {
        let lineno = idx + 1;
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 5 {
            return Err(bad(lineno, format!("expected 5 columns, got {}", cols.len())));
        }
        rows.push(StateRow {
            t: real(lineno, cols[0])?,
            j: integer(lineno, cols[1])? as usize,
            w: real(lineno, cols[2])?,
            v: real(lineno, cols[3])?,
            rho: real(lineno, cols[4])?,
        });
    }
    Ok(rows)
}

/// One row of the field table: values in model field order.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldRow {
    pub t: f64,
    pub k: usize,
    pub x: f64,
    pub values: Vec<f64>,
}

/// Field rows of one snapshot, one per interior element node (the spline
/// data points); empty when the model carries no fields.
pub fn field_rows(state: &SimState) -> Vec<FieldRow> {
    let Some(grid) = state.fields.grid() else {
        return Vec::new();
    };
    (1..grid.n)
        .map(|k| FieldRow {
            t: state.t,
            k,
            x: grid.node(k),
            values: state
                .fields
                .vars
                .iter()
                .map(|var| var.field.coeffs[k - 1])
                .collect(),
        })
        .collect()
}

/// Field names of a run, for the field-table header.
pub fn field_names(state: &SimState) -> Vec<String> {
    state.fields.vars.iter().map(|v| v.name.clone()).collect()
}

pub fn emit_field_csv(names: &[String], rows: &[FieldRow]) -> String {
    let mut header = String::from("t,k,x_k");
    for name in names {
        header.push_str(&format!(",{name}_k"));
    }
    let mut out = header;
    out.push('\n');
    for r in rows {
        out.push_str(&format!("{},{},{}", g17(r.t), r.k, g17(r.x)));
        for v in &r.values {
            out.push_str(&format!(",{}", g17(*v)));
        }
        out.push('\n');
    }
    out
}

pub fn parse_field_csv(text: &str) -> Result<(Vec<String>, Vec<FieldRow>)> {
    let header = text.lines().next().ok_or_else(|| bad(1, "empty input"))?;
    let cols: Vec<&str> = header.split(',').collect();
    if cols.len() < 3 || cols[..3] != ["t", "k", "x_k"] {
        return Err(bad(1, format!("expected header `t,k,x_k,...`, got `{header}`")));
    }
    let names: Vec<String> = cols[3..]
        .iter()
        .enumerate()
        .map(|(i, c)| {
            c.strip_suffix("_k")
                .map(str::to_string)
                .ok_or_else(|| bad(1, format!("field column {} (`{c}`) lacks the `_k` suffix", i + 4)))
        })
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    for (idx, line) in text.lines().enumerate().skip(1) {
        let lineno = idx + 1;
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 3 + names.len() {
            return Err(bad(
                lineno,
                format!("expected {} columns, got {}", 3 + names.len(), cols.len()),
            ));
        }
        rows.push(FieldRow {
            t: real(lineno, cols[0])?,
            k: integer(lineno, cols[1])? as usize,
            x: real(lineno, cols[2])?,
            values: cols[3..]
                .iter()
                .map(|c| real(lineno, c))
                .collect::<Result<_>>()?,
        });
    }
    Ok((names, rows))
}

pub fn emit_ladder_csv(ladder: &EocLadder) -> String {
    let spatial = ladder.mode == LadderMode::Spatial;
    let mut out = String::from(if spatial {
        "m,error_v,eoc_v,error_rho,eoc_rho\n"
    } else {
        "dt,error_v,eoc_v\n"
    });
    // Error i sits between rungs i and i+1; print it (and its order) on the
    // finer rung's row, leaving the first row's derived columns empty.
    for (i, &label) in ladder.labels.iter().enumerate() {
        let cell = |v: &[f64], shift: usize| {
            // v[i - shift] guarded: rows before the first derived value print "".
            if i >= shift && i - shift < v.len() {
                g17(v[i - shift])
            } else {
                String::new()
            }
        };
        out.push_str(&g17(label));
        out.push_str(&format!(",{},{}", cell(&ladder.errors_v, 1), cell(&ladder.eoc_v, 2)));
        if spatial {
            out.push_str(&format!(
                ",{},{}",
                cell(&ladder.errors_rho, 1),
                cell(&ladder.eoc_rho, 2)
            ));
        }
        out.push('\n');
    }
    out
}

pub fn parse_ladder_csv(text: &str) -> Result<EocLadder> {
    let header = text.lines().next().ok_or_else(|| bad(1, "empty input"))?;
    let (mode, ncols) = match header {
        "m,error_v,eoc_v,error_rho,eoc_rho" => (LadderMode::Spatial, 5),
        "dt,error_v,eoc_v" => (LadderMode::Temporal, 3),
        other => return Err(bad(1, format!("unrecognized ladder header `{other}`"))),
    };
    let mut ladder = EocLadder {
        mode,
        labels: Vec::new(),
        errors_v: Vec::new(),
        errors_rho: Vec::new(),
        eoc_v: Vec::new(),
        eoc_rho: Vec::new(),
    };
    for (idx, line) in text.lines().enumerate().skip(1) {
        let lineno = idx + 1;
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != ncols {
            return Err(bad(lineno, format!("expected {ncols} columns, got {}", cols.len())));
        }
        ladder.labels.push(real(lineno, cols[0])?);
        let push = |dst: &mut Vec<f64>, token: &str| -> Result<()> {
            if !token.is_empty() {
                dst.push(real(lineno, token)?);
            }
            Ok(())
        };
        push(&mut ladder.errors_v, cols[1])?;
        push(&mut ladder.eoc_v, cols[2])?;
        if mode == LadderMode::Spatial {
            push(&mut ladder.errors_rho, cols[3])?;
            push(&mut ladder.eoc_rho, cols[4])?;
        }
    }
    Ok(ladder)
}

pub fn emit_records_csv(records: &[RunRecord]) -> String {
    let mut out = String::from("method,resolution,wall_secs,error,steps,newton_iters\n");
    for r in records {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.method,
            r.resolution,
            g17(r.wall_secs),
            g17(r.error),
            r.steps,
            r.newton_iters
        ));
    }
    out
}

pub fn parse_records_csv(text: &str) -> Result<Vec<RunRecord>> {
    expect_header(text, "method,resolution,wall_secs,error,steps,newton_iters")?;
    let mut records = Vec::new();
    for (idx, line) in text.lines().enumerate().skip(1) {
        let lineno = idx + 1;
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 6 {
            return Err(bad(lineno, format!("expected 6 columns, got {}", cols.len())));
        }
        records.push(RunRecord {
            method: cols[0].to_string(),
            resolution: integer(lineno, cols[1])? as usize,
            wall_secs: real(lineno, cols[2])?,
            error: real(lineno, cols[3])?,
            steps: integer(lineno, cols[4])?,
            newton_iters: integer(lineno, cols[5])?,
        });
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::driver::SimState;
    use crate::mass::{InverseDistribution, MassGrid};
    use crate::reaction::{ClampWarnings, FieldSystem};

    fn awkward_reals() -> Vec<f64> {
        vec![
            0.0,
            -0.0,
            1.0 / 3.0,
            std::f64::consts::PI,
            -2.5e-17,
            1.0e-300,
            f64::MIN_POSITIVE,
            5e-324,
            -9.881e307,
            1.0 + f64::EPSILON,
        ]
    }

    #[test]
    fn seventeen_digits_recover_every_bit() {
        for x in awkward_reals() {
            let back: f64 = g17(x).parse().unwrap();
            assert_eq!(back.to_bits(), x.to_bits(), "{x:e}");
        }
    }

    #[test]
    fn state_csv_round_trips() {
        let rows: Vec<StateRow> = awkward_reals()
            .iter()
            .enumerate()
            .map(|(j, &x)| StateRow {
                t: 0.25 + x.abs().min(1.0),
                j,
                w: x,
                v: -x,
                rho: x * 0.5 + 1.0,
            })
            .collect();
        let text = emit_state_csv(&rows);
        assert!(text.ends_with('\n') && !text.contains('\r'));
        assert_eq!(parse_state_csv(&text).unwrap(), rows);
    }

    #[test]
    fn state_rows_carry_mass_coordinate_and_left_cell_density() {
        let grid = MassGrid::new(4, 2.0).unwrap();
        let state = SimState {
            t: 1.5,
            v: InverseDistribution {
                grid,
                nodes: vec![0.0, 0.25, 0.75, 1.5, 2.0],
            },
            fields: FieldSystem::empty(),
            mass: 2.0,
            step_count: 0,
            newton_iters: 0,
            dt_history: Vec::new(),
            warnings: ClampWarnings::default(),
        };
        let rows = state_rows(&state);
        assert_eq!(rows.len(), 5);
        // Each cell carries dw = 0.5 of mass; densities are dw / gap.
        assert_eq!(rows[1].rho, 0.5 / 0.25);
        assert_eq!(rows[2].rho, 0.5 / 0.5);
        assert_eq!(rows[0].rho, rows[1].rho);
        assert_eq!(rows[3].w, 3.0 * 0.5);
        assert_eq!(rows[4].v, 2.0);
    }

    #[test]
    fn field_csv_round_trips_with_model_ordered_columns() {
        let names = vec!["c".to_string(), "m".to_string()];
        let rows = vec![
            FieldRow {
                t: 0.0,
                k: 1,
                x: 0.125,
                values: vec![1.0 / 3.0, -7.25e-11],
            },
            FieldRow {
                t: 0.0,
                k: 2,
                x: 0.25,
                values: vec![0.5, 2.0],
            },
        ];
        let text = emit_field_csv(&names, &rows);
        assert!(text.starts_with("t,k,x_k,c_k,m_k\n"));
        let (back_names, back_rows) = parse_field_csv(&text).unwrap();
        assert_eq!(back_names, names);
        assert_eq!(back_rows, rows);
    }

    #[test]
    fn ladder_csv_round_trips_both_modes() {
        let spatial = EocLadder {
            mode: LadderMode::Spatial,
            labels: vec![20.0, 40.0, 80.0],
            errors_v: vec![7.231e-4, 7.427e-5],
            errors_rho: vec![1.36e-2, 1.719e-3],
            eoc_v: vec![3.283],
            eoc_rho: vec![2.984],
        };
        assert_eq!(parse_ladder_csv(&emit_ladder_csv(&spatial)).unwrap(), spatial);
        let temporal = EocLadder {
            mode: LadderMode::Temporal,
            labels: vec![0.1, 0.05],
            errors_v: vec![2.244e-4],
            errors_rho: Vec::new(),
            eoc_v: Vec::new(),
            eoc_rho: Vec::new(),
        };
        assert_eq!(parse_ladder_csv(&emit_ladder_csv(&temporal)).unwrap(), temporal);
    }

    #[test]
    fn records_csv_round_trips() {
        let records = vec![
            RunRecord {
                method: "mtfe".into(),
                resolution: 40,
                wall_secs: 0.125,
                error: 3.5e-3,
                steps: 1200,
                newton_iters: 2400,
            },
            RunRecord {
                method: "fvfd".into(),
                resolution: 240,
                wall_secs: 7.5,
                error: 1.0 / 3.0,
                steps: 88,
                newton_iters: 0,
            },
        ];
        assert_eq!(parse_records_csv(&emit_records_csv(&records)).unwrap(), records);
    }

    #[test]
    fn wrong_headers_are_rejected_on_line_one() {
        for text in ["x,y\n1,2\n", "", "t,j\n"] {
            match parse_state_csv(text) {
                Err(Error::Config { line: Some(1), .. }) => {}
                other => panic!("expected a line-1 header error, got {other:?}"),
            }
        }
    }

    #[test]
    fn malformed_rows_name_their_line() {
        let text = "t,j,w_j,V_j,rho_j\n0,0,0,0,0\n0,zero,0,0,0\n";
        match parse_state_csv(text) {
            Err(Error::Config { line: Some(3), message }) => {
                assert!(message.contains("zero"), "{message}")
            }
            other => panic!("expected a line-3 error, got {other:?}"),
        }
    }
}
