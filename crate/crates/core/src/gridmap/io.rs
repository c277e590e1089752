//! The `ARIADNE-GRID v1` text format.
//!
//! ```text
//! ARIADNE-GRID v1 <width> <height> <start_col> <start_row>
//! <height lines of <width> characters>
//! ```
//!
//! `.` is free, `#` is an obstacle; partial maps add `U` for unknown.

use std::fmt::Write as _;

use super::{GridError, GroundTruthMap, Occupancy, PartialMap, Terrain};
use crate::geometry::Cell;

pub const GRID_MAGIC: &str = "ARIADNE-GRID v1";

fn parse_err(line: usize, msg: impl Into<String>) -> GridError {
    GridError::Parse {
        line,
        msg: msg.into(),
    }
}

struct Header {
    width: usize,
    height: usize,
    start: Cell,
}

fn parse_header(line: &str) -> Result<Header, GridError> {
    let rest = line
        .strip_prefix(GRID_MAGIC)
        .ok_or_else(|| parse_err(1, format!("expected header `{GRID_MAGIC} ...`")))?;
    let fields: Vec<&str> = rest.split_whitespace().collect();
    if fields.len() != 4 || !rest.starts_with(' ') {
        return Err(parse_err(
            1,
            "header needs width, height, start_col, start_row",
        ));
    }
    let num = |s: &str| {
        s.parse::<usize>()
            .map_err(|_| parse_err(1, format!("`{s}` is not a non-negative integer")))
    };
    let (width, height) = (num(fields[0])?, num(fields[1])?);
    let (sc, sr) = (num(fields[2])?, num(fields[3])?);
    if width == 0 || height == 0 {
        return Err(parse_err(1, "empty map"));
    }
    if sc >= width || sr >= height {
        return Err(parse_err(1, "start cell outside the map"));
    }
    Ok(Header {
        width,
        height,
        start: Cell::new(sc as i32, sr as i32),
    })
}

fn parse_body<T>(
    text: &str,
    decode: impl Fn(char) -> Option<T>,
) -> Result<(Header, Vec<T>), GridError> {
    let mut lines = text.lines();
    let header = parse_header(lines.next().ok_or_else(|| parse_err(1, "empty file"))?)?;
    let mut cells = Vec::with_capacity(header.width * header.height);
    for r in 0..header.height {
        let line_no = r + 2;
        let line = lines
            .next()
            .ok_or_else(|| parse_err(line_no, "missing row"))?;
        let mut n = 0;
        for ch in line.chars() {
            let v = decode(ch)
                .ok_or_else(|| parse_err(line_no, format!("invalid character {ch:?}")))?;
            cells.push(v);
            n += 1;
        }
        if n != header.width {
            return Err(parse_err(
                line_no,
                format!("expected {} characters, found {n}", header.width),
            ));
        }
    }
    if let Some((i, _)) = lines.enumerate().find(|(_, l)| !l.is_empty()) {
        return Err(parse_err(header.height + 2 + i, "trailing content"));
    }
    Ok((header, cells))
}

impl GroundTruthMap {
    pub fn from_grid_str(text: &str) -> Result<Self, GridError> {
        let (h, cells) = parse_body(text, |ch| match ch {
            '.' => Some(Terrain::Free),
            '#' => Some(Terrain::Obstacle),
            _ => None,
        })?;
        GroundTruthMap::new(h.width, h.height, cells, h.start)
    }

    pub fn to_grid_string(&self) -> String {
        let mut out = String::with_capacity((self.width + 1) * (self.height + 1));
        let _ = writeln!(
            out,
            "{GRID_MAGIC} {} {} {} {}",
            self.width, self.height, self.start.col, self.start.row
        );
        for row in self.cells.chunks(self.width) {
            out.extend(row.iter().map(|t| match t {
                Terrain::Free => '.',
                Terrain::Obstacle => '#',
            }));
            out.push('\n');
        }
        out
    }
}

impl PartialMap {
    /// Parses a partial map; returns it with the start cell from the header.
    pub fn from_grid_str(text: &str) -> Result<(Self, Cell), GridError> {
        let (h, cells) = parse_body(text, |ch| match ch {
            '.' => Some(Occupancy::Free),
            '#' => Some(Occupancy::Occupied),
            'U' => Some(Occupancy::Unknown),
            _ => None,
        })?;
        Ok((PartialMap::from_cells(h.width, h.height, cells), h.start))
    }

    pub fn to_grid_string(&self, start: Cell) -> String {
        let mut out = String::with_capacity((self.width + 1) * (self.height + 1));
        let _ = writeln!(
            out,
            "{GRID_MAGIC} {} {} {} {}",
            self.width, self.height, start.col, start.row
        );
        for row in self.cells.chunks(self.width) {
            out.extend(row.iter().map(|t| match t {
                Occupancy::Free => '.',
                Occupancy::Occupied => '#',
                Occupancy::Unknown => 'U',
            }));
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMALL: &str = "ARIADNE-GRID v1 4 3 1 1\n####\n#..#\n####\n";

    #[test]
    fn parses_and_writes_back_identically() {
        let m = GroundTruthMap::from_grid_str(SMALL).unwrap();
        assert_eq!(m.width(), 4);
        assert_eq!(m.start(), Cell::new(1, 1));
        assert_eq!(m.to_grid_string(), SMALL);
    }

    #[test]
    fn rejects_foreign_characters() {
        let bad = SMALL.replace("#..#", "#.x#");
        assert!(matches!(
            GroundTruthMap::from_grid_str(&bad),
            Err(GridError::Parse { line: 3, .. })
        ));
        // `U` is only valid in partial maps
        let partial = SMALL.replace("#..#", "#.U#");
        assert!(GroundTruthMap::from_grid_str(&partial).is_err());
        let (p, start) = PartialMap::from_grid_str(&partial).unwrap();
        assert_eq!(start, Cell::new(1, 1));
        assert_eq!(p.get(Cell::new(2, 1)), Occupancy::Unknown);
        assert_eq!(p.known_count(), 11);
        assert_eq!(p.to_grid_string(start), partial);
    }

    #[test]
    fn rejects_malformed_headers_and_rows() {
        for text in [
            "ARIADNE-GRID v2 4 3 1 1\n####\n#..#\n####\n",
            "ARIADNE-GRID v1 4 3 1\n####\n#..#\n####\n",
            "ARIADNE-GRID v1 4 3 9 1\n####\n#..#\n####\n",
            "ARIADNE-GRID v1 4 3 1 1\n####\n#..#\n",
            "ARIADNE-GRID v1 4 3 1 1\n####\n#...#\n####\n",
            "ARIADNE-GRID v1 4 3 1 1\n####\n#..#\n####\n####\n",
            "ARIADNE-GRID v1 4 3 0 0\n####\n#..#\n####\n",
        ] {
            assert!(GroundTruthMap::from_grid_str(text).is_err(), "{text}");
        }
    }
}
