//! File formats: the "WSTR" binary container for trajectories and
//! matrices, CSV exports, basis-bundle directories and sample-mesh files.

use crate::burgers::Trajectory;
use crate::densekit::DenseMatrix;
use crate::error::{Error, Result};
use crate::hyper::SampleMesh;
use crate::solver::WindowSolveReport;
use crate::subspaces::{SubwindowBasis, WindowBasis};
use std::io::{Read, Write};
use std::path::Path;

const MAGIC: &[u8; 4] = b"WSTR";
const FORMAT_VERSION: u32 = 1;

fn malformed(path: &Path, reason: &str) -> Error {
    Error::MalformedFile {
        path: path.display().to_string(),
        reason: reason.to_string(),
    }
}

/// Trajectory container: magic "WSTR", u32 version, u64 n_space,
/// u64 n_time, f64 dt, then (n_time+1) * n_space little-endian f64 values
/// column-major with the initial condition first.
pub fn write_trajectory(traj: &Trajectory, path: &Path) -> Result<()> {
    let mut buf = Vec::with_capacity(24 + 8 * (traj.n_time + 1) * traj.n_space);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(traj.n_space as u64).to_le_bytes());
    buf.extend_from_slice(&(traj.n_time as u64).to_le_bytes());
    buf.extend_from_slice(&traj.dt.to_le_bytes());
    for v in &traj.initial {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    for n in 0..traj.n_time {
        for a in 0..traj.n_space {
            buf.extend_from_slice(&traj.states.get(a, n).to_le_bytes());
        }
    }
    let mut f = std::fs::File::create(path)?;
    f.write_all(&buf)?;
    Ok(())
}

pub fn read_trajectory(path: &Path) -> Result<Trajectory> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() < 32 || &bytes[0..4] != MAGIC {
        return Err(malformed(path, "missing WSTR magic"));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(malformed(path, &format!("unsupported version {version}")));
    }
    let n_space = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let n_time = u64::from_le_bytes(bytes[16..24].try_into().unwrap()) as usize;
    let dt = f64::from_le_bytes(bytes[24..32].try_into().unwrap());
    let expected = 32 + 8 * (n_time + 1) * n_space;
    if bytes.len() != expected {
        return Err(malformed(
            path,
            &format!("expected {expected} bytes, found {}", bytes.len()),
        ));
    }
    let mut vals = bytes[32..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()));
    let initial: Vec<f64> = (&mut vals).take(n_space).collect();
    let mut states = DenseMatrix::zeros(n_space, n_time);
    for n in 0..n_time {
        for a in 0..n_space {
            states.set(a, n, vals.next().ok_or_else(|| malformed(path, "truncated"))?);
        }
    }
    Ok(Trajectory {
        n_space,
        n_time,
        dt,
        initial,
        states,
    })
}

/// CSV export of a trajectory: header `t,x,u`, one row per (time, cell).
pub fn write_trajectory_csv(traj: &Trajectory, x: &[f64], path: &Path) -> Result<()> {
    assert_eq!(x.len(), traj.n_space);
    let mut out = String::from("t,x,u\n");
    for n in 0..=traj.n_time {
        let t = n as f64 * traj.dt;
        let state = traj.state(n);
        for (xi, ui) in x.iter().zip(state.iter()) {
            out.push_str(&format!("{t},{xi},{ui}\n"));
        }
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Matrix container sharing the WSTR magic: u64 rows, u64 cols, then
/// rows*cols little-endian f64 values column-major.
pub fn write_matrix(m: &DenseMatrix, path: &Path) -> Result<()> {
    let mut buf = Vec::with_capacity(20 + 8 * m.rows() * m.cols());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(m.rows() as u64).to_le_bytes());
    buf.extend_from_slice(&(m.cols() as u64).to_le_bytes());
    for c in 0..m.cols() {
        for r in 0..m.rows() {
            buf.extend_from_slice(&m.get(r, c).to_le_bytes());
        }
    }
    std::fs::File::create(path)?.write_all(&buf)?;
    Ok(())
}

pub fn read_matrix(path: &Path) -> Result<DenseMatrix> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() < 24 || &bytes[0..4] != MAGIC {
        return Err(malformed(path, "missing WSTR magic"));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(malformed(path, &format!("unsupported version {version}")));
    }
    let rows = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let cols = u64::from_le_bytes(bytes[16..24].try_into().unwrap()) as usize;
    if bytes.len() != 24 + 8 * rows * cols {
        return Err(malformed(path, "size mismatch"));
    }
    let mut m = DenseMatrix::zeros(rows, cols);
    let mut it = bytes[24..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()));
    for c in 0..cols {
        for r in 0..rows {
            m.set(r, c, it.next().unwrap());
        }
    }
    Ok(m)
}

/// Basis bundle: a directory with a plain-text manifest plus one matrix
/// file per spatial factor, temporal factor and assembled sub-window
/// basis.
pub fn write_basis_bundle(
    dir: &Path,
    bases: &[WindowBasis],
    kind: &str,
    e_s: f64,
    e_t: f64,
    plan_summary: &str,
) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut manifest = String::new();
    manifest.push_str(&format!("kind={kind}\n"));
    manifest.push_str(&format!("e_s={e_s}\n"));
    manifest.push_str(&format!("e_t={e_t}\n"));
    manifest.push_str(&format!("plan={plan_summary}\n"));
    manifest.push_str(&format!("n_windows={}\n", bases.len()));
    for (k, wb) in bases.iter().enumerate() {
        manifest.push_str(&format!("window_{k}_n_sub={}\n", wb.n_sub()));
        for (m, sb) in wb.sub_bases().iter().enumerate() {
            manifest.push_str(&format!(
                "window_{k}_sub_{m}_counts={},{},{}\n",
                sb.n_space(),
                sb.n_steps(),
                sb.n_columns()
            ));
            manifest.push_str(&format!(
                "window_{k}_sub_{m}_n_temporal={}\n",
                sb.temporal.len()
            ));
            write_matrix(&sb.spatial, &dir.join(format!("spatial_{k}_{m}.wstr")))?;
            for (i, t) in sb.temporal.iter().enumerate() {
                write_matrix(t, &dir.join(format!("temporal_{k}_{m}_{i}.wstr")))?;
            }
            write_matrix(&sb.assembled, &dir.join(format!("assembled_{k}_{m}.wstr")))?;
        }
    }
    std::fs::write(dir.join("manifest.txt"), manifest)?;
    Ok(())
}

pub fn read_basis_bundle(dir: &Path) -> Result<Vec<WindowBasis>> {
    let manifest_path = dir.join("manifest.txt");
    let text = std::fs::read_to_string(&manifest_path)?;
    let mut kv = std::collections::BTreeMap::new();
    for line in text.lines() {
        if let Some((k, v)) = line.split_once('=') {
            kv.insert(k.trim().to_string(), v.trim().to_string());
        }
    }
    let n_windows: usize = kv
        .get("n_windows")
        .ok_or_else(|| malformed(&manifest_path, "missing n_windows"))?
        .parse()
        .map_err(|_| malformed(&manifest_path, "bad n_windows"))?;
    let mut bases = Vec::with_capacity(n_windows);
    for k in 0..n_windows {
        let n_sub: usize = kv
            .get(&format!("window_{k}_n_sub"))
            .ok_or_else(|| malformed(&manifest_path, &format!("missing window_{k}_n_sub")))?
            .parse()
            .map_err(|_| malformed(&manifest_path, "bad n_sub"))?;
        let mut subs = Vec::with_capacity(n_sub);
        for m in 0..n_sub {
            let n_temporal: usize = kv
                .get(&format!("window_{k}_sub_{m}_n_temporal"))
                .ok_or_else(|| malformed(&manifest_path, "missing temporal count"))?
                .parse()
                .map_err(|_| malformed(&manifest_path, "bad temporal count"))?;
            let spatial = read_matrix(&dir.join(format!("spatial_{k}_{m}.wstr")))?;
            let mut temporal = Vec::with_capacity(n_temporal);
            for i in 0..n_temporal {
                temporal.push(read_matrix(&dir.join(format!("temporal_{k}_{m}_{i}.wstr")))?);
            }
            let assembled = read_matrix(&dir.join(format!("assembled_{k}_{m}.wstr")))?;
            subs.push(SubwindowBasis {
                spatial,
                temporal,
                assembled,
            });
        }
        bases.push(WindowBasis::from_sub_bases(subs));
    }
    Ok(bases)
}

/// Sample-mesh file: per window a `window k` line, then the temporal and
/// spatial index lists.
pub fn write_meshes(meshes: &[SampleMesh], path: &Path) -> Result<()> {
    let mut out = String::new();
    for (k, mesh) in meshes.iter().enumerate() {
        out.push_str(&format!("window {k}\n"));
        out.push_str("t:");
        for b in &mesh.temporal {
            out.push_str(&format!(" {b}"));
        }
        out.push_str("\ns:");
        for a in &mesh.spatial {
            out.push_str(&format!(" {a}"));
        }
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn read_meshes(path: &Path) -> Result<Vec<SampleMesh>> {
    let text = std::fs::read_to_string(path)?;
    let mut meshes = Vec::new();
    let mut temporal: Option<Vec<usize>> = None;
    let mut spatial: Option<Vec<usize>> = None;
    let flush = |t: &mut Option<Vec<usize>>,
                 s: &mut Option<Vec<usize>>,
                 meshes: &mut Vec<SampleMesh>|
     -> Result<()> {
        match (t.take(), s.take()) {
            (Some(temporal), Some(spatial)) => {
                meshes.push(SampleMesh { temporal, spatial });
                Ok(())
            }
            (None, None) => Ok(()),
            _ => Err(malformed(path, "window block missing t: or s: line")),
        }
    };
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if line.starts_with("window") {
            flush(&mut temporal, &mut spatial, &mut meshes)?;
        } else if let Some(rest) = line.strip_prefix("t:") {
            temporal = Some(parse_indices(rest, path)?);
        } else if let Some(rest) = line.strip_prefix("s:") {
            spatial = Some(parse_indices(rest, path)?);
        } else {
            return Err(malformed(path, &format!("unexpected line '{line}'")));
        }
    }
    flush(&mut temporal, &mut spatial, &mut meshes)?;
    Ok(meshes)
}

fn parse_indices(s: &str, path: &Path) -> Result<Vec<usize>> {
    s.split_whitespace()
        .map(|t| {
            t.parse::<usize>()
                .map_err(|_| malformed(path, &format!("bad index '{t}'")))
        })
        .collect()
}

/// Convergence log: one CSV row per Gauss-Newton iteration per window.
pub fn write_convergence_log(reports: &[WindowSolveReport], path: &Path) -> Result<()> {
    let mut out = String::from("window,iteration,grad_norm,residual_norm,step_norm,lambda\n");
    for (k, rep) in reports.iter().enumerate() {
        for i in 0..rep.iterations {
            let step = rep.step_norms.get(i).copied().unwrap_or(0.0);
            let lambda = rep.lambdas.get(i).copied().unwrap_or(f64::NAN);
            out.push_str(&format!(
                "{k},{i},{:.17e},{:.17e},{:.17e},{lambda}\n",
                rep.gradient_norms[i], rep.residual_norms[i], step
            ));
        }
    }
    std::fs::write(path, out)?;
    Ok(())
}
