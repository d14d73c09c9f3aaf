//! Optional maze-layout override: a small JSON file describing walls, the
//! goal disc, and the start distribution.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use cdp_core::env::{MazeLayout, Wall};

use crate::error::{CliError, Result};

#[derive(Debug, Serialize, Deserialize)]
struct WallWire {
    kind: String,
    pos: f64,
    from: f64,
    to: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct MazeWire {
    walls: Vec<WallWire>,
    goal: [f64; 2],
    goal_radius: f64,
    start: [f64; 2],
    start_jitter: f64,
}

pub fn load_maze(path: &Path) -> Result<MazeLayout> {
    let text =
        fs::read_to_string(path).map_err(|e| CliError::Io(format!("read {}: {e}", path.display())))?;
    let wire: MazeWire = serde_json::from_str(&text)
        .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
    let mut walls = Vec::new();
    for w in wire.walls {
        let wall = match w.kind.as_str() {
            "vertical" => Wall::Vertical {
                x: w.pos,
                y0: w.from,
                y1: w.to,
            },
            "horizontal" => Wall::Horizontal {
                y: w.pos,
                x0: w.from,
                x1: w.to,
            },
            other => {
                return Err(CliError::Validation(format!(
                    "unknown wall kind '{other}' (expected vertical|horizontal)"
                )))
            }
        };
        walls.push(wall);
    }
    Ok(MazeLayout {
        walls,
        goal_center: wire.goal,
        goal_radius: wire.goal_radius,
        start_center: wire.start,
        start_jitter: wire.start_jitter,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn maze_file_parses() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("maze.json");
        fs::write(
            &path,
            r#"{"walls":[{"kind":"vertical","pos":0.4,"from":0.0,"to":0.6},
                        {"kind":"horizontal","pos":0.8,"from":0.2,"to":0.9}],
                "goal":[0.95,0.05],"goal_radius":0.04,
                "start":[0.05,0.05],"start_jitter":0.02}"#,
        )
        .unwrap();
        let layout = load_maze(&path).unwrap();
        assert_eq!(layout.walls.len(), 2);
        assert_eq!(layout.goal_center, [0.95, 0.05]);
        assert!(matches!(layout.walls[1], Wall::Horizontal { .. }));
    }

    #[test]
    fn bad_wall_kind_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("maze.json");
        fs::write(
            &path,
            r#"{"walls":[{"kind":"diagonal","pos":0.4,"from":0.0,"to":0.6}],
                "goal":[0.9,0.1],"goal_radius":0.05,"start":[0.1,0.1],"start_jitter":0.04}"#,
        )
        .unwrap();
        assert!(load_maze(&path).is_err());
    }
}
