//! Plain-text tables: mesh dumps, nodal fields, per-element vectors.

use std::io::{self, Write};

use crate::mesh::Mesh;

/// `node <index> <x> <y> <tag>` lines followed by `element <a> <b> <c>` lines.
pub fn write_mesh<W: Write>(mesh: &Mesh, mut w: W) -> io::Result<()> {
    for (k, p) in mesh.nodes().iter().enumerate() {
        writeln!(w, "node {k} {:.17e} {:.17e} {}", p[0], p[1], mesh.tag(k).as_str())?;
    }
    for e in mesh.elements() {
        writeln!(w, "element {} {} {}", e[0], e[1], e[2])?;
    }
    Ok(())
}

/// CSV with header `index,x,y,<name>`.
pub fn write_node_table<W: Write>(mesh: &Mesh, name: &str, values: &[f64], mut w: W) -> io::Result<()> {
    writeln!(w, "index,x,y,{name}")?;
    for (k, (p, v)) in mesh.nodes().iter().zip(values).enumerate() {
        writeln!(w, "{k},{:.17e},{:.17e},{v:.17e}", p[0], p[1])?;
    }
    Ok(())
}

/// CSV with header `element,cx,cy,<name>_x,<name>_y` at element centroids.
pub fn write_element_vectors<W: Write>(mesh: &Mesh, name: &str, values: &[[f64; 2]], mut w: W) -> io::Result<()> {
    writeln!(w, "element,cx,cy,{name}_x,{name}_y")?;
    for (e, v) in values.iter().enumerate() {
        let c = mesh.centroid(e);
        writeln!(w, "{e},{:.17e},{:.17e},{:.17e},{:.17e}", c[0], c[1], v[0], v[1])?;
    }
    Ok(())
}
