use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::field::Trajectory;
use crate::sampling::Hierarchy;

const MAGIC: &[u8; 4] = b"MHSD";
const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    fn tag(self) -> u8 {
        match self {
            Split::Train => 0,
            Split::Test => 1,
        }
    }
}

/// Parameter vectors, a shared time grid and one state trajectory per
/// simulation, all at one hierarchy level.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    level: u32,
    n_nodes: usize,
    channels: usize,
    n_params: usize,
    times: Vec<f64>,
    params: Vec<Vec<f64>>,
    states: Vec<Trajectory>,
    splits: Vec<Split>,
}

impl Dataset {
    pub fn new(
        level: u32,
        n_nodes: usize,
        channels: usize,
        times: Vec<f64>,
        params: Vec<Vec<f64>>,
        states: Vec<Trajectory>,
        splits: Vec<Split>,
    ) -> Result<Self> {
        let n_params = params.first().map_or(0, Vec::len);
        Self::with_param_count(level, n_nodes, channels, n_params, times, params, states, splits)
    }

    #[allow(clippy::too_many_arguments)]
    pub fn with_param_count(
        level: u32,
        n_nodes: usize,
        channels: usize,
        n_params: usize,
        times: Vec<f64>,
        params: Vec<Vec<f64>>,
        states: Vec<Trajectory>,
        splits: Vec<Split>,
    ) -> Result<Self> {
        if params.len() != states.len() || params.len() != splits.len() {
            return Err(Error::Shape(format!(
                "{} parameter vectors, {} trajectories, {} split tags",
                params.len(),
                states.len(),
                splits.len()
            )));
        }
        if times.windows(2).any(|w| !(w[0] < w[1])) || times.iter().any(|t| !t.is_finite()) {
            return Err(Error::Argument("times must be finite and strictly increasing".into()));
        }
        for (s, (mu, x)) in params.iter().zip(&states).enumerate() {
            if mu.len() != n_params {
                return Err(Error::Shape(format!("simulation {s} has {} parameters, expected {n_params}", mu.len())));
            }
            if (x.times(), x.nodes(), x.channels()) != (times.len(), n_nodes, channels) {
                return Err(Error::Shape(format!(
                    "simulation {s} trajectory is {}x{}x{}, expected {}x{n_nodes}x{channels}",
                    x.times(),
                    x.nodes(),
                    x.channels(),
                    times.len()
                )));
            }
            if mu.iter().chain(x.data()).any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("simulation {s} contains non-finite values")));
            }
        }
        Ok(Self {
            level,
            n_nodes,
            channels,
            n_params,
            times,
            params,
            states,
            splits,
        })
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn n_sims(&self) -> usize {
        self.params.len()
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn n_params(&self) -> usize {
        self.n_params
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn params(&self, s: usize) -> &[f64] {
        &self.params[s]
    }

    pub fn states(&self, s: usize) -> &Trajectory {
        &self.states[s]
    }

    pub fn split(&self, s: usize) -> Split {
        self.splits[s]
    }

    pub fn indices(&self, split: Split) -> Vec<usize> {
        (0..self.n_sims()).filter(|&s| self.splits[s] == split).collect()
    }

    pub fn train_indices(&self) -> Vec<usize> {
        self.indices(Split::Train)
    }

    pub fn test_indices(&self) -> Vec<usize> {
        self.indices(Split::Test)
    }

    /// Restricts a level-0 dataset to the nodes of `level`.
    pub fn downsample(&self, hierarchy: &Hierarchy, level: usize) -> Result<Self> {
        if self.level != 0 {
            return Err(Error::Argument(format!("dataset is already at level {}", self.level)));
        }
        let sel = hierarchy.selection_from_0(level)?;
        if sel.n_fine() != self.n_nodes {
            return Err(Error::Shape(format!(
                "dataset has {} nodes, hierarchy level 0 has {}",
                self.n_nodes,
                sel.n_fine()
            )));
        }
        let states = self
            .states
            .iter()
            .map(|x| x.select_nodes(sel.kept()))
            .collect::<Result<Vec<_>>>()?;
        Self::with_param_count(
            level as u32,
            sel.n_coarse(),
            self.channels,
            self.n_params,
            self.times.clone(),
            self.params.clone(),
            states,
            self.splits.clone(),
        )
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(std::fs::File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(MAGIC)?;
        let header = [
            VERSION,
            self.level,
            to_u32(self.n_sims())?,
            to_u32(self.times.len())?,
            to_u32(self.n_nodes)?,
            to_u32(self.channels)?,
            to_u32(self.n_params)?,
        ];
        for h in header {
            w.write_all(&h.to_le_bytes())?;
        }
        for t in &self.times {
            w.write_all(&t.to_le_bytes())?;
        }
        for s in 0..self.n_sims() {
            for v in &self.params[s] {
                w.write_all(&v.to_le_bytes())?;
            }
            w.write_all(&[self.splits[s].tag()])?;
            for v in self.states[s].data() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::read_from(&mut BufReader::new(std::fs::File::open(path)?))
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let mut magic = [0u8; 4];
        read_exact(r, &mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format(format!("bad dataset magic {magic:?}")));
        }
        let header = DatasetHeader::read_fields(r)?;
        let times = read_f64s(r, header.n_times)?;
        let mut params = Vec::with_capacity(header.n_sims.min(1 << 16));
        let mut states = Vec::with_capacity(header.n_sims.min(1 << 16));
        let mut splits = Vec::with_capacity(header.n_sims.min(1 << 16));
        let frame = header
            .n_times
            .checked_mul(header.n_nodes)
            .and_then(|v| v.checked_mul(header.channels))
            .ok_or_else(|| Error::Format("state size overflows".into()))?;
        for _ in 0..header.n_sims {
            params.push(read_f64s(r, header.n_params)?);
            let mut tag = [0u8];
            read_exact(r, &mut tag)?;
            splits.push(match tag[0] {
                0 => Split::Train,
                1 => Split::Test,
                t => return Err(Error::Format(format!("unknown split tag {t}"))),
            });
            let data = read_f64s(r, frame)?;
            states.push(Trajectory::new(header.n_times, header.n_nodes, header.channels, data)?);
        }
        let mut extra = [0u8];
        if r.read(&mut extra)? != 0 {
            return Err(Error::Format("trailing bytes after dataset".into()));
        }
        Self::with_param_count(
            header.level,
            header.n_nodes,
            header.channels,
            header.n_params,
            times,
            params,
            states,
            splits,
        )
        .map_err(|e| Error::Format(e.to_string()))
    }
}

/// Fixed-size header of an `MHSD` file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DatasetHeader {
    pub version: u32,
    pub level: u32,
    pub n_sims: usize,
    pub n_times: usize,
    pub n_nodes: usize,
    pub channels: usize,
    pub n_params: usize,
}

impl DatasetHeader {
    /// Reads just the header of a dataset file.
    pub fn read(path: &Path) -> Result<Self> {
        let mut r = BufReader::new(std::fs::File::open(path)?);
        let mut magic = [0u8; 4];
        read_exact(&mut r, &mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format(format!("bad dataset magic {magic:?}")));
        }
        Self::read_fields(&mut r)
    }

    fn read_fields(r: &mut impl Read) -> Result<Self> {
        let mut f = [0u32; 7];
        for v in &mut f {
            let mut b = [0u8; 4];
            read_exact(r, &mut b)?;
            *v = u32::from_le_bytes(b);
        }
        if f[0] != VERSION {
            return Err(Error::Format(format!("unsupported dataset version {}", f[0])));
        }
        Ok(Self {
            version: f[0],
            level: f[1],
            n_sims: f[2] as usize,
            n_times: f[3] as usize,
            n_nodes: f[4] as usize,
            channels: f[5] as usize,
            n_params: f[6] as usize,
        })
    }
}

fn to_u32(v: usize) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::Format(format!("{v} does not fit the dataset header")))
}

fn read_exact(r: &mut impl Read, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::Format("truncated dataset".into()),
        _ => Error::Io(e),
    })
}

fn read_f64s(r: &mut impl Read, count: usize) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(count.min(1 << 24));
    let mut b = [0u8; 8];
    for _ in 0..count {
        read_exact(r, &mut b)?;
        out.push(f64::from_le_bytes(b));
    }
    Ok(out)
}
