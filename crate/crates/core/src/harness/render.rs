//! Trace files and SVG path renderings.

use std::fmt::Write as _;
use std::io;

use serde::{Deserialize, Serialize};

use crate::maze::{Cell, MazeSpec};
use crate::stats::{EpisodeTrace, TraceStep};

pub const CELL_PX: usize = 32;

/// Option colors, indexed by `option % 8`.
pub const PALETTE: [&str; 8] = [
    "#1f77b4", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf", "#bcbd22", "#7f7f7f",
];
/// Path color for traces without options.
pub const NEUTRAL: &str = "#333333";
pub const START_COLOR: &str = "#d62728";
pub const GOAL_COLOR: &str = "#2ca02c";
pub const WALL_COLOR: &str = "#222222";
pub const FLOOR_COLOR: &str = "#f4f4f4";

/// One row of a trace file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub step: usize,
    pub row: usize,
    pub col: usize,
    pub option: Option<usize>,
    pub action: usize,
    pub reward: f64,
    pub terminated: bool,
}

pub const TRACE_COLUMNS: [&str; 7] = ["step", "row", "col", "option", "action", "reward", "terminated"];

pub fn write_trace_csv<W: io::Write>(out: W, trace: &EpisodeTrace) -> csv::Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(TRACE_COLUMNS)?;
    for (i, s) in trace.steps.iter().enumerate() {
        w.serialize(TraceRow {
            step: i,
            row: s.cell.row,
            col: s.cell.col,
            option: s.option,
            action: s.action,
            reward: s.reward,
            terminated: s.terminated,
        })?;
    }
    w.flush()?;
    Ok(())
}

/// Read a trace file back. `success` is taken to mean the last reward is
/// positive.
pub fn read_trace_csv<R: io::Read>(input: R) -> csv::Result<EpisodeTrace> {
    let rows: Vec<TraceRow> = csv::Reader::from_reader(input).deserialize().collect::<csv::Result<_>>()?;
    let steps: Vec<TraceStep> = rows
        .iter()
        .map(|r| TraceStep {
            cell: Cell::new(r.row, r.col),
            option: r.option,
            action: r.action,
            reward: r.reward,
            terminated: r.terminated,
        })
        .collect();
    Ok(EpisodeTrace {
        success: steps.last().is_some_and(|s| s.reward > 0.0),
        steps,
        ..Default::default()
    })
}

fn center(cell: Cell) -> (usize, usize) {
    (cell.col * CELL_PX + CELL_PX / 2, cell.row * CELL_PX + CELL_PX / 2)
}

pub fn option_color(option: Option<usize>) -> &'static str {
    match option {
        Some(o) => PALETTE[o % PALETTE.len()],
        None => NEUTRAL,
    }
}

/// Grid with walls, one circle per visited state colored by the active
/// option, and start/goal markers.
pub fn render_path_svg(trace: &EpisodeTrace, maze: &MazeSpec) -> String {
    assert!(!trace.is_empty(), "cannot render an empty trace");
    let (w, h) = (maze.width() * CELL_PX, maze.height() * CELL_PX);
    let mut svg = String::new();
    // Writing into a String cannot fail.
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
    );
    let _ = writeln!(svg, r#"<rect class="floor" x="0" y="0" width="{w}" height="{h}" fill="{FLOOR_COLOR}"/>"#);
    for cell in maze.walls() {
        let _ = writeln!(
            svg,
            r#"<rect class="wall" x="{}" y="{}" width="{CELL_PX}" height="{CELL_PX}" fill="{WALL_COLOR}"/>"#,
            cell.col * CELL_PX,
            cell.row * CELL_PX
        );
    }
    for (marker, cell, color) in [("start", maze.start(), START_COLOR), ("goal", maze.goal(), GOAL_COLOR)] {
        let (cx, cy) = center(cell);
        let _ = writeln!(svg, r#"<circle class="{marker}" cx="{cx}" cy="{cy}" r="13" fill="{color}"/>"#);
    }
    for step in &trace.steps {
        let (cx, cy) = center(step.cell);
        let _ = writeln!(
            svg,
            r#"<circle class="path" cx="{cx}" cy="{cy}" r="7" fill="{}"/>"#,
            option_color(step.option)
        );
    }
    svg.push_str("</svg>\n");
    svg
}
