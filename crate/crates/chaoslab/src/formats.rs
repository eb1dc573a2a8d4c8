//! On-disk layouts: trajectories, histograms and discrete instances.
//!
//! Binary files are little-endian and start with an 8-byte magic tag.

use std::io::{BufRead, Read, Write};
use std::path::Path;

use chaoslab_core::alpha::DiscreteInstance;
use chaoslab_core::density::{DensityRep, Grid, TimeDensity};
use chaoslab_core::dynamics::{Method, Trajectory};
use chaoslab_core::metrics::{BinSpec, Histogram};
use chaoslab_core::phase::Configuration;

use crate::error::{HarnessError, Result};

const TRAJECTORY_MAGIC: &[u8; 8] = b"CLTRAJ01";
const HISTOGRAM_MAGIC: &[u8; 8] = b"CLHIST01";
const DENSITY_MAGIC: &[u8; 8] = b"CLTDEN01";

/// Header of a stored trajectory.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryHeader {
    pub space_dim: usize,
    pub particles: usize,
    pub arity: usize,
    pub dt: f64,
    pub method: Method,
    /// Plan hash the trajectory was produced under (hex); empty if none.
    pub plan_hash: String,
}

fn method_code(m: Method) -> u8 {
    match m {
        Method::Psi => 0,
        Method::Rk4 => 1,
    }
}

fn bad(msg: impl Into<String>) -> HarnessError {
    HarnessError::Format(msg.into())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| bad("truncated file"))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn done(&self) -> bool {
        self.pos == self.bytes.len()
    }
}

/// Binary layout: magic, header `(D, N, d, dt, method, hash)`, row count, then
/// rows `(t, x_1 .. x_N)` with every particle as `2D` doubles.
pub fn encode_trajectory<const D: usize>(traj: &Trajectory<D>, arity: usize, plan_hash: &str) -> Vec<u8> {
    let n = traj.particles();
    let mut out = Vec::with_capacity(64 + traj.states.len() * (1 + 2 * D * n) * 8);
    out.extend_from_slice(TRAJECTORY_MAGIC);
    out.extend_from_slice(&(D as u32).to_le_bytes());
    out.extend_from_slice(&(n as u64).to_le_bytes());
    out.extend_from_slice(&(arity as u32).to_le_bytes());
    out.extend_from_slice(&traj.dt.to_le_bytes());
    out.push(method_code(traj.method));
    out.extend_from_slice(&(plan_hash.len() as u32).to_le_bytes());
    out.extend_from_slice(plan_hash.as_bytes());
    out.extend_from_slice(&(traj.states.len() as u64).to_le_bytes());
    for (t, x) in traj.times.iter().zip(&traj.states) {
        out.extend_from_slice(&t.to_le_bytes());
        for v in x.to_flat() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn decode_trajectory<const D: usize>(bytes: &[u8]) -> Result<(TrajectoryHeader, Trajectory<D>)> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8)? != TRAJECTORY_MAGIC {
        return Err(bad("not a trajectory file"));
    }
    let space_dim = r.u32()? as usize;
    if space_dim != D {
        return Err(bad(format!("trajectory has space dimension {space_dim}, expected {D}")));
    }
    let particles = r.u64()? as usize;
    let arity = r.u32()? as usize;
    let dt = r.f64()?;
    let method = match r.u8()? {
        0 => Method::Psi,
        1 => Method::Rk4,
        c => return Err(bad(format!("unknown method code {c}"))),
    };
    let hash_len = r.u32()? as usize;
    let plan_hash = String::from_utf8(r.take(hash_len)?.to_vec()).map_err(|_| bad("plan hash is not UTF-8"))?;
    let rows = r.u64()? as usize;
    let width = 2 * D * particles;
    let mut times = Vec::with_capacity(rows.min(1 << 20));
    let mut states = Vec::with_capacity(rows.min(1 << 20));
    let mut flat = vec![0.0; width];
    for _ in 0..rows {
        times.push(r.f64()?);
        for v in flat.iter_mut() {
            *v = r.f64()?;
        }
        states.push(Configuration::<D>::from_flat(&flat));
    }
    if !r.done() {
        return Err(bad("trailing bytes after trajectory rows"));
    }
    let header = TrajectoryHeader {
        space_dim,
        particles,
        arity,
        dt,
        method,
        plan_hash,
    };
    Ok((header, Trajectory { times, states, method, dt }))
}

/// CSV layout: `#`-prefixed header line, then one row `t, x_1 .. x_N` per state.
pub fn write_trajectory_csv<const D: usize>(traj: &Trajectory<D>, arity: usize, w: &mut dyn Write) -> std::io::Result<()> {
    writeln!(
        w,
        "# N={} d={} dt={} method={} D={}",
        traj.particles(),
        arity,
        traj.dt,
        traj.method.tag(),
        D
    )?;
    for (t, x) in traj.times.iter().zip(&traj.states) {
        let mut line = t.to_string();
        for v in x.to_flat() {
            line.push(',');
            line.push_str(&v.to_string());
        }
        writeln!(w, "{line}")?;
    }
    Ok(())
}

pub fn read_trajectory_csv<const D: usize>(r: &mut dyn BufRead) -> Result<Trajectory<D>> {
    let mut lines = r.lines();
    let header = lines.next().ok_or_else(|| bad("empty trajectory CSV"))?.map_err(|e| bad(e.to_string()))?;
    let field = |key: &str| -> Result<&str> {
        header
            .trim_start_matches('#')
            .split_whitespace()
            .find_map(|kv| kv.strip_prefix(key).and_then(|v| v.strip_prefix('=')))
            .ok_or_else(|| bad(format!("header lacks {key}")))
    };
    let n: usize = field("N")?.parse().map_err(|_| bad("bad N"))?;
    let dt: f64 = field("dt")?.parse().map_err(|_| bad("bad dt"))?;
    let method = match field("method")? {
        "Psi" => Method::Psi,
        "RK4" => Method::Rk4,
        m => return Err(bad(format!("unknown method {m}"))),
    };
    if field("D")? != D.to_string() {
        return Err(bad("space dimension mismatch"));
    }
    let mut times = Vec::new();
    let mut states = Vec::new();
    for line in lines {
        let line = line.map_err(|e| bad(e.to_string()))?;
        let vals: Vec<f64> = line
            .split(',')
            .map(|s| s.trim().parse::<f64>().map_err(|_| bad(format!("bad number {s:?}"))))
            .collect::<Result<_>>()?;
        if vals.len() != 1 + 2 * D * n {
            return Err(bad("row length does not match N"));
        }
        times.push(vals[0]);
        states.push(Configuration::<D>::from_flat(&vals[1..]));
    }
    Ok(Trajectory { times, states, method, dt })
}

/// Binary layout: magic, dimension count, `(lo, hi, bins)` per axis, overflow
/// probability, cell count and the dense probability array (last axis fastest).
pub fn encode_histogram(h: &Histogram) -> Result<Vec<u8>> {
    let dense = h.to_dense()?;
    let spec = &h.spec;
    let mut out = Vec::with_capacity(32 + dense.len() * 8);
    out.extend_from_slice(HISTOGRAM_MAGIC);
    out.extend_from_slice(&(spec.dim() as u32).to_le_bytes());
    for a in 0..spec.dim() {
        out.extend_from_slice(&spec.lo[a].to_le_bytes());
        out.extend_from_slice(&spec.hi[a].to_le_bytes());
        out.extend_from_slice(&(spec.bins[a] as u64).to_le_bytes());
    }
    out.extend_from_slice(&h.overflow_probability().to_le_bytes());
    out.extend_from_slice(&(dense.len() as u64).to_le_bytes());
    for v in dense {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

/// Decodes a histogram as probabilities (total mass 1, overflow included).
/// The stored overflow must equal one minus the cell masses.
pub fn decode_histogram(bytes: &[u8]) -> Result<Histogram> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8)? != HISTOGRAM_MAGIC {
        return Err(bad("not a histogram file"));
    }
    let dims = r.u32()? as usize;
    let (mut lo, mut hi, mut bins) = (Vec::new(), Vec::new(), Vec::new());
    for _ in 0..dims {
        lo.push(r.f64()?);
        hi.push(r.f64()?);
        bins.push(r.u64()? as usize);
    }
    let spec = BinSpec::new(lo, hi, bins)?;
    let overflow = r.f64()?;
    let cells = r.u64()? as usize;
    if spec.cells() != cells as u128 {
        return Err(bad("cell count does not match the bin spec"));
    }
    let mut dense = Vec::with_capacity(cells);
    for _ in 0..cells {
        dense.push(r.f64()?);
    }
    if !r.done() {
        return Err(bad("trailing bytes after histogram"));
    }
    let h = Histogram::from_dense(spec, &dense)?;
    if (h.overflow_probability() - overflow).abs() > 1e-9 {
        return Err(bad("overflow does not match the cell masses"));
    }
    Ok(h)
}

/// Binary layout of a gridded time density: magic, dimension count,
/// `(lo, hi, shape)` per axis, slice count, the slice times, then every slice
/// as a contiguous array of cell values (last axis fastest).
pub fn encode_time_density(f: &TimeDensity) -> Result<Vec<u8>> {
    let grids = f
        .slices
        .iter()
        .map(|s| s.as_grid().ok_or_else(|| bad("only gridded time densities can be stored")))
        .collect::<Result<Vec<&Grid>>>()?;
    let first = grids[0];
    if grids.iter().any(|g| !g.same_layout(first)) {
        return Err(bad("slices use different grids"));
    }
    let mut out = Vec::with_capacity(64 + grids.len() * first.cells() * 8);
    out.extend_from_slice(DENSITY_MAGIC);
    out.extend_from_slice(&(first.dim() as u32).to_le_bytes());
    for a in 0..first.dim() {
        out.extend_from_slice(&first.lo[a].to_le_bytes());
        out.extend_from_slice(&first.hi[a].to_le_bytes());
        out.extend_from_slice(&(first.shape[a] as u64).to_le_bytes());
    }
    out.extend_from_slice(&(f.times.len() as u64).to_le_bytes());
    for t in &f.times {
        out.extend_from_slice(&t.to_le_bytes());
    }
    for g in grids {
        for v in &g.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_time_density(bytes: &[u8]) -> Result<TimeDensity> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8)? != DENSITY_MAGIC {
        return Err(bad("not a time-density file"));
    }
    let dims = r.u32()? as usize;
    let (mut lo, mut hi, mut shape) = (Vec::new(), Vec::new(), Vec::new());
    for _ in 0..dims {
        lo.push(r.f64()?);
        hi.push(r.f64()?);
        shape.push(r.u64()? as usize);
    }
    let template = Grid::zeros(lo, hi, shape)?;
    let count = r.u64()? as usize;
    let times = (0..count).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
    let mut slices = Vec::with_capacity(count);
    for _ in 0..count {
        let values = (0..template.cells()).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
        slices.push(DensityRep::Grid(template.like(values)));
    }
    if !r.done() {
        return Err(bad("trailing bytes after time density"));
    }
    Ok(TimeDensity::new(times, slices)?)
}

pub fn read_instance(path: &Path) -> Result<DiscreteInstance> {
    let mut text = String::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_string(&mut text))
        .map_err(|e| HarnessError::io(path, e))?;
    DiscreteInstance::from_text(&text).map_err(|e| bad(e.to_string()))
}

pub fn write_instance(path: &Path, inst: &DiscreteInstance) -> Result<()> {
    std::fs::write(path, inst.to_text()).map_err(|e| HarnessError::io(path, e))
}
