//! Binary snapshot archive: header with `n`, `M`, window and provenance,
//! then the matrix in column-major order, all little-endian.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use nalgebra::DMatrix;

use super::offline::{Provenance, SnapshotMatrix, SnapshotWindow};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"MSSNAP01";

pub fn write_snapshot_archive(path: &Path, snaps: &SnapshotMatrix) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    let (n, m) = snaps.data.shape();
    for v in [n, m, snaps.window.start, snaps.window.end, snaps.window.stride] {
        w.write_u64::<LittleEndian>(v as u64)?;
    }
    let (tag, count) = match snaps.provenance {
        Provenance::SingleTrajectory => (0u8, 1u64),
        Provenance::MeanOfTrajectories { count } => (1u8, count as u64),
    };
    w.write_u8(tag)?;
    w.write_u64::<LittleEndian>(count)?;
    for &v in snaps.data.as_slice() {
        w.write_f64::<LittleEndian>(v)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_snapshot_archive(path: &Path) -> Result<SnapshotMatrix> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format("not a snapshot archive".into()));
    }
    let mut h = [0usize; 5];
    for v in h.iter_mut() {
        *v = r.read_u64::<LittleEndian>()? as usize;
    }
    let [n, m, start, end, stride] = h;
    let window = SnapshotWindow::new(start, end, stride)?;
    if window.len() != m {
        return Err(Error::Format(format!(
            "archive has {m} columns but its window spans {} levels",
            window.len()
        )));
    }
    let provenance = match (r.read_u8()?, r.read_u64::<LittleEndian>()?) {
        (0, _) => Provenance::SingleTrajectory,
        (1, count) => Provenance::MeanOfTrajectories {
            count: count as usize,
        },
        (t, _) => return Err(Error::Format(format!("unknown provenance tag {t}"))),
    };
    let mut data = vec![0.0; n * m];
    r.read_f64_into::<LittleEndian>(&mut data)?;
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::Format("snapshot archive holds non-finite values".into()));
    }
    Ok(SnapshotMatrix {
        data: DMatrix::from_vec(n, m, data),
        window,
        provenance,
    })
}
