//! Flat little-endian `f64` grids behind a short text header.
//!
//! ```text
//! AUTOCHUNK-GRID 1
//! kind=velocity
//! dims=40,40,40
//! dx=10
//! dt=0
//! END
//! <product(dims) little-endian f64 values>
//! ```
//!
//! `kind` is `velocity` (dims `n1,n2,n3`, values m/s, x3 fastest),
//! `seismogram` (dims `nt,n_receivers`, time-major) or `gradient`.
//! Unknown keys are ignored by readers.

use std::io::{BufRead, Write};
use std::path::Path;

use super::{Dims3, Seismogram, VelocityModel, WaveError};

pub const GRID_MAGIC: &str = "AUTOCHUNK-GRID 1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridKind {
    Velocity,
    Seismogram,
    Gradient,
}

impl GridKind {
    fn as_str(&self) -> &'static str {
        match self {
            GridKind::Velocity => "velocity",
            GridKind::Seismogram => "seismogram",
            GridKind::Gradient => "gradient",
        }
    }

    fn parse(s: &str) -> Result<Self, WaveError> {
        match s {
            "velocity" => Ok(GridKind::Velocity),
            "seismogram" => Ok(GridKind::Seismogram),
            "gradient" => Ok(GridKind::Gradient),
            other => Err(WaveError::Format(format!("unknown kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridHeader {
    pub kind: GridKind,
    pub dims: Vec<usize>,
    pub dx: f64,
    pub dt: f64,
}

impl GridHeader {
    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

pub fn write_grid<W: Write>(mut w: W, header: &GridHeader, data: &[f64]) -> Result<(), WaveError> {
    if data.len() != header.len() {
        return Err(WaveError::Mismatch(format!("{} values for dims {:?}", data.len(), header.dims)));
    }
    let dims: Vec<String> = header.dims.iter().map(|d| d.to_string()).collect();
    write!(w, "{GRID_MAGIC}\nkind={}\ndims={}\ndx={}\ndt={}\nEND\n", header.kind.as_str(), dims.join(","), header.dx, header.dt)?;
    let mut buf = Vec::with_capacity(data.len() * 8);
    for x in data {
        buf.extend_from_slice(&x.to_le_bytes());
    }
    w.write_all(&buf)?;
    w.flush()?;
    Ok(())
}

pub fn read_grid<R: BufRead>(mut r: R) -> Result<(GridHeader, Vec<f64>), WaveError> {
    let mut line = String::new();
    r.read_line(&mut line)?;
    if line.trim_end() != GRID_MAGIC {
        return Err(WaveError::Format(format!("bad magic line `{}`", line.trim_end())));
    }
    let (mut kind, mut dims, mut dx, mut dt) = (None, None, 0.0, 0.0);
    loop {
        line.clear();
        if r.read_line(&mut line)? == 0 {
            return Err(WaveError::Format("header not terminated by END".into()));
        }
        let l = line.trim_end();
        if l == "END" {
            break;
        }
        let Some((key, value)) = l.split_once('=') else {
            return Err(WaveError::Format(format!("header line `{l}` is not key=value")));
        };
        let num = |v: &str| v.trim().parse::<f64>().map_err(|e| WaveError::Format(format!("{key}: {e}")));
        match key.trim() {
            "kind" => kind = Some(GridKind::parse(value.trim())?),
            "dims" => {
                let d: Result<Vec<usize>, _> = value.split(',').map(|s| s.trim().parse::<usize>()).collect();
                dims = Some(d.map_err(|e| WaveError::Format(format!("dims: {e}")))?);
            }
            "dx" => dx = num(value)?,
            "dt" => dt = num(value)?,
            _ => {}
        }
    }
    let header = GridHeader {
        kind: kind.ok_or_else(|| WaveError::Format("missing kind".into()))?,
        dims: dims.ok_or_else(|| WaveError::Format("missing dims".into()))?,
        dx,
        dt,
    };
    let mut bytes = Vec::with_capacity(header.len() * 8);
    r.read_to_end(&mut bytes)?;
    if bytes.len() != header.len() * 8 {
        return Err(WaveError::Format(format!("expected {} payload bytes, found {}", header.len() * 8, bytes.len())));
    }
    let data = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8"))).collect();
    Ok((header, data))
}

impl VelocityModel {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), WaveError> {
        let d = self.dims();
        let header = GridHeader { kind: GridKind::Velocity, dims: vec![d.n1, d.n2, d.n3], dx: self.dx(), dt: 0.0 };
        write_grid(std::io::BufWriter::new(std::fs::File::create(path)?), &header, self.values())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, WaveError> {
        let (h, data) = read_grid(std::io::BufReader::new(std::fs::File::open(path)?))?;
        if h.kind != GridKind::Velocity || h.dims.len() != 3 {
            return Err(WaveError::Format(format!("expected a 3D velocity grid, found {:?} {:?}", h.kind, h.dims)));
        }
        VelocityModel::new(Dims3::new(h.dims[0], h.dims[1], h.dims[2]), h.dx, data)
    }
}

impl Seismogram {
    pub fn save(&self, path: impl AsRef<Path>, dt: f64) -> Result<(), WaveError> {
        let header = GridHeader { kind: GridKind::Seismogram, dims: vec![self.nt, self.n_receivers], dx: 0.0, dt };
        write_grid(std::io::BufWriter::new(std::fs::File::create(path)?), &header, &self.data)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<(Self, f64), WaveError> {
        let (h, data) = read_grid(std::io::BufReader::new(std::fs::File::open(path)?))?;
        if h.kind != GridKind::Seismogram || h.dims.len() != 2 {
            return Err(WaveError::Format(format!("expected a seismogram, found {:?} {:?}", h.kind, h.dims)));
        }
        Ok((Seismogram { nt: h.dims[0], n_receivers: h.dims[1], data }, h.dt))
    }
}
