//! Plain-text mesh format.
//!
//! Line 1: `nodes N triangles T inner B outer O`. Then N lines `x y`,
//! T lines `i j k` (0-based), B inner-loop indices in order, O outer-loop
//! indices. Floats are written in ASCII scientific notation with 17
//! significant digits, so read(write(mesh)) reproduces coordinates bitwise.

use super::{MeshError, Triangulation};
use std::io::{BufRead, BufWriter, Write};
use std::path::Path;

pub fn write_mesh(mesh: &Triangulation, path: &Path) -> Result<(), MeshError> {
    let file = std::fs::File::create(path).map_err(|source| MeshError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut out = BufWriter::new(file);
    let io_err = |source| MeshError::Io {
        path: path.display().to_string(),
        source,
    };
    writeln!(
        out,
        "nodes {} triangles {} inner {} outer {}",
        mesh.node_coords.len(),
        mesh.triangles.len(),
        mesh.inner_boundary_loop.len(),
        mesh.outer_boundary_loop.len()
    )
    .map_err(io_err)?;
    for p in &mesh.node_coords {
        writeln!(out, "{:.16e} {:.16e}", p[0], p[1]).map_err(io_err)?;
    }
    for t in &mesh.triangles {
        writeln!(out, "{} {} {}", t[0], t[1], t[2]).map_err(io_err)?;
    }
    for &i in &mesh.inner_boundary_loop {
        writeln!(out, "{i}").map_err(io_err)?;
    }
    for &i in &mesh.outer_boundary_loop {
        writeln!(out, "{i}").map_err(io_err)?;
    }
    out.flush().map_err(io_err)?;
    Ok(())
}

pub fn read_mesh(path: &Path) -> Result<Triangulation, MeshError> {
    let file = std::fs::File::open(path).map_err(|source| MeshError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let reader = std::io::BufReader::new(file);
    let mut lines = reader.lines().enumerate();
    let malformed = |line: usize, message: String| MeshError::MalformedFile {
        path: path.display().to_string(),
        message: format!("line {}: {message}", line + 1),
    };

    let mut next_line = |expect: &str| -> Result<(usize, String), MeshError> {
        for (idx, line) in lines.by_ref() {
            let line = line.map_err(|source| MeshError::Io {
                path: path.display().to_string(),
                source,
            })?;
            if !line.trim().is_empty() {
                return Ok((idx, line));
            }
        }
        Err(MeshError::MalformedFile {
            path: path.display().to_string(),
            message: format!("unexpected end of file, expected {expect}"),
        })
    };

    let (hline, header) = next_line("header")?;
    let tok: Vec<&str> = header.split_whitespace().collect();
    if tok.len() != 8 || tok[0] != "nodes" || tok[2] != "triangles" || tok[4] != "inner" || tok[6] != "outer" {
        return Err(malformed(hline, format!("bad header '{header}'")));
    }
    let parse_count = |s: &str, line: usize| -> Result<usize, MeshError> {
        s.parse::<usize>()
            .map_err(|_| malformed(line, format!("bad count '{s}'")))
    };
    let n = parse_count(tok[1], hline)?;
    let t = parse_count(tok[3], hline)?;
    let b = parse_count(tok[5], hline)?;
    let o = parse_count(tok[7], hline)?;

    let mut node_coords = Vec::with_capacity(n);
    for _ in 0..n {
        let (lno, line) = next_line("node coordinates")?;
        let mut it = line.split_whitespace();
        let x: f64 = it
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| malformed(lno, format!("bad node line '{line}'")))?;
        let y: f64 = it
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| malformed(lno, format!("bad node line '{line}'")))?;
        if it.next().is_some() {
            return Err(malformed(lno, format!("trailing tokens in '{line}'")));
        }
        node_coords.push([x, y]);
    }
    let mut triangles = Vec::with_capacity(t);
    for _ in 0..t {
        let (lno, line) = next_line("triangle connectivity")?;
        let idx: Vec<usize> = line
            .split_whitespace()
            .map(|s| s.parse::<usize>())
            .collect::<Result<_, _>>()
            .map_err(|_| malformed(lno, format!("bad triangle line '{line}'")))?;
        if idx.len() != 3 {
            return Err(malformed(lno, format!("expected 3 indices in '{line}'")));
        }
        for &i in &idx {
            if i >= n {
                return Err(malformed(lno, format!("node index {i} out of range ({n} nodes)")));
            }
        }
        triangles.push([idx[0], idx[1], idx[2]]);
    }
    let mut read_loop = |count: usize, what: &str| -> Result<Vec<usize>, MeshError> {
        let mut v = Vec::with_capacity(count);
        for _ in 0..count {
            let (lno, line) = next_line(what)?;
            let i: usize = line
                .trim()
                .parse()
                .map_err(|_| malformed(lno, format!("bad index '{line}'")))?;
            if i >= n {
                return Err(malformed(lno, format!("loop index {i} out of range ({n} nodes)")));
            }
            v.push(i);
        }
        Ok(v)
    };
    let inner_boundary_loop = read_loop(b, "inner loop index")?;
    let outer_boundary_loop = read_loop(o, "outer loop index")?;

    Ok(Triangulation {
        node_coords,
        triangles,
        inner_boundary_loop,
        outer_boundary_loop,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bitwise() {
        let mesh = Triangulation {
            node_coords: vec![
                [0.1 + 0.2, -1.0 / 3.0],
                [std::f64::consts::PI, 1e-300],
                [6.02214076e23, -0.0],
            ],
            triangles: vec![[0, 1, 2]],
            inner_boundary_loop: vec![0, 1, 2],
            outer_boundary_loop: vec![],
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mesh.txt");
        write_mesh(&mesh, &path).unwrap();
        let back = read_mesh(&path).unwrap();
        assert_eq!(back.triangles, mesh.triangles);
        assert_eq!(back.inner_boundary_loop, mesh.inner_boundary_loop);
        for (a, b) in mesh.node_coords.iter().zip(&back.node_coords) {
            assert_eq!(a[0].to_bits(), b[0].to_bits());
            assert_eq!(a[1].to_bits(), b[1].to_bits());
        }
    }

    #[test]
    fn out_of_range_index_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.txt");
        std::fs::write(
            &path,
            "nodes 3 triangles 1 inner 0 outer 0\n0 0\n1 0\n0 1\n0 1 7\n",
        )
        .unwrap();
        match read_mesh(&path) {
            Err(MeshError::MalformedFile { message, .. }) => {
                assert!(message.contains("out of range"), "{message}");
            }
            other => panic!("expected malformed file, got {other:?}"),
        }
    }

    #[test]
    fn truncated_file_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("short.txt");
        std::fs::write(&path, "nodes 3 triangles 1 inner 0 outer 0\n0 0\n1 0\n").unwrap();
        assert!(matches!(
            read_mesh(&path),
            Err(MeshError::MalformedFile { .. })
        ));
    }
}
