use std::io::{Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::error::{Error, Result};
use crate::flow::{Direction, ParticleFlow};

const MAGIC: &[u8; 4] = b"RFPT";

/// Time and noise dimension stored with a particle snapshot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SnapshotHeader {
    pub time: f64,
    pub noise_dim: usize,
}

/// Writes `t,id,label_1,label_2,x_1,x_2,weight` rows.
pub fn write_particles_csv<W: Write>(flow: &ParticleFlow, time: f64, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["t", "id", "label_1", "label_2", "x_1", "x_2", "weight"])?;
    for (id, ((l, x), v)) in flow
        .labels()
        .iter()
        .zip(flow.positions())
        .zip(flow.weights())
        .enumerate()
    {
        w.serialize((time, id, l[0], l[1], x[0], x[1], *v))?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a snapshot written by [`write_particles_csv`]; returns its time.
pub fn read_particles_csv<R: Read>(reader: R) -> Result<(f64, ParticleFlow)> {
    let mut r = csv::Reader::from_reader(reader);
    let mut time = None;
    let mut labels = Vec::new();
    let mut positions = Vec::new();
    let mut weights = Vec::new();
    for row in r.deserialize() {
        let (t, id, l1, l2, x1, x2, v): (f64, usize, f64, f64, f64, f64, f64) = row?;
        if id != labels.len() {
            return Err(Error::Format(format!("particle id {id} out of order")));
        }
        if *time.get_or_insert(t) != t {
            return Err(Error::Format("rows from different times".into()));
        }
        labels.push([l1, l2]);
        positions.push([x1, x2]);
        weights.push(v);
    }
    let flow = ParticleFlow::new(labels, weights)?.with_positions(positions, Direction::Forward)?;
    Ok((time.unwrap_or(0.0), flow))
}

/// Little-endian binary twin of the CSV layout: magic `RFPT`, `u64` particle
/// count, `f64` time, `u64` noise dimension, then `label_1, label_2, x_1,
/// x_2, weight` as `f64` per particle in id order.
pub fn write_particles_binary<W: Write>(
    flow: &ParticleFlow,
    header: SnapshotHeader,
    mut writer: W,
) -> Result<()> {
    writer.write_all(MAGIC)?;
    writer.write_u64::<LittleEndian>(flow.len() as u64)?;
    writer.write_f64::<LittleEndian>(header.time)?;
    writer.write_u64::<LittleEndian>(header.noise_dim as u64)?;
    for ((l, x), v) in flow
        .labels()
        .iter()
        .zip(flow.positions())
        .zip(flow.weights())
    {
        for value in [l[0], l[1], x[0], x[1], *v] {
            writer.write_f64::<LittleEndian>(value)?;
        }
    }
    Ok(())
}

pub fn read_particles_binary<R: Read>(mut reader: R) -> Result<(SnapshotHeader, ParticleFlow)> {
    let mut magic = [0u8; 4];
    reader.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format("not a particle file".into()));
    }
    let count = reader.read_u64::<LittleEndian>()? as usize;
    let time = reader.read_f64::<LittleEndian>()?;
    let noise_dim = reader.read_u64::<LittleEndian>()? as usize;
    let mut labels = Vec::with_capacity(count);
    let mut positions = Vec::with_capacity(count);
    let mut weights = Vec::with_capacity(count);
    for _ in 0..count {
        let mut v = [0.0; 5];
        for x in v.iter_mut() {
            *x = reader.read_f64::<LittleEndian>()?;
        }
        labels.push([v[0], v[1]]);
        positions.push([v[2], v[3]]);
        weights.push(v[4]);
    }
    let flow = ParticleFlow::new(labels, weights)?.with_positions(positions, Direction::Forward)?;
    Ok((SnapshotHeader { time, noise_dim }, flow))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn particle_files_round_trip() {
        let flow = ParticleFlow::lattice_with(4, |x, y| x.sin() + y).unwrap();
        let moved: Vec<[f64; 2]> = flow
            .labels()
            .iter()
            .map(|p| [p[0] + 0.1, p[1] + 0.37])
            .collect();
        let flow = flow.with_positions(moved, Direction::Forward).unwrap();
        let mut buf = Vec::new();
        write_particles_csv(&flow, 0.25, &mut buf).unwrap();
        assert_eq!(
            read_particles_csv(buf.as_slice()).unwrap(),
            (0.25, flow.clone())
        );
        let header = SnapshotHeader {
            time: 0.5,
            noise_dim: 2,
        };
        let mut bin = Vec::new();
        write_particles_binary(&flow, header, &mut bin).unwrap();
        assert_eq!(
            read_particles_binary(bin.as_slice()).unwrap(),
            (header, flow)
        );
        assert!(read_particles_binary(&b"XXXX"[..]).is_err());
    }
}
