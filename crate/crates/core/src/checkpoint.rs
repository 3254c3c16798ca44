//! Binary network checkpoints (`.sbck`).
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! "SBCK"  u32 version = 1
//! u32 layer count, then per layer (u32 rows, u32 cols)
//! u8 activation id, u32 embed_dim
//! f32 parameters, layer by layer: weights row-major, then biases
//! u8 role: 0 plain, 1 pre-trained toward data, 2 pre-trained toward prior,
//!          3 forward bridge net, 4 backward bridge net
//! roles 1-4: u32 N, (N + 1) f64 prefix sums γ̄_0..γ̄_N
//! roles 3-4: u8 objective id, u8 head id, u8 time-reversed flag
//! u64 seed of the producing run
//! ```

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use crate::bridge::{BridgeNet, Head};
use crate::chain::Direction;
use crate::nn::{Activation, Mlp};
use crate::objectives::ObjectiveKind;
use crate::schedule::GammaSchedule;
use crate::sgm_init::{PretrainedSgm, Toward};
use crate::{Error, Result};

const MAGIC: &[u8; 4] = b"SBCK";
const VERSION: u32 = 1;

/// What a checkpointed network is for.
#[derive(Debug, Clone, PartialEq)]
pub enum Role {
    Plain,
    Pretrained {
        toward: Toward,
        schedule: GammaSchedule,
    },
    Bridge {
        direction: Direction,
        objective: ObjectiveKind,
        head: Head,
        time_reversed: bool,
        schedule: GammaSchedule,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub net: Mlp,
    pub role: Role,
    pub seed: u64,
}

impl Checkpoint {
    pub fn plain(net: Mlp, seed: u64) -> Self {
        Self {
            net,
            role: Role::Plain,
            seed,
        }
    }

    pub fn pretrained(sgm: &PretrainedSgm, schedule: &GammaSchedule, seed: u64) -> Result<Self> {
        if sgm.schedule_hash != schedule.hash() {
            return Err(Error::invalid("schedule does not match the pre-trained model"));
        }
        Ok(Self {
            net: sgm.net.clone(),
            role: Role::Pretrained {
                toward: sgm.toward,
                schedule: schedule.clone(),
            },
            seed,
        })
    }

    pub fn bridge(net: &BridgeNet, seed: u64) -> Self {
        Self {
            net: net.mlp.clone(),
            role: Role::Bridge {
                direction: net.direction,
                objective: net.objective,
                head: net.head,
                time_reversed: net.time_reversed,
                schedule: net.schedule().clone(),
            },
            seed,
        }
    }

    pub fn into_pretrained(self) -> Result<(PretrainedSgm, GammaSchedule)> {
        match self.role {
            Role::Pretrained { toward, schedule } => Ok((
                PretrainedSgm {
                    net: self.net,
                    toward,
                    schedule_hash: schedule.hash(),
                    interpolant: "linear",
                },
                schedule,
            )),
            _ => Err(Error::format("checkpoint", "not a pre-trained model")),
        }
    }

    pub fn into_bridge(self) -> Result<BridgeNet> {
        match self.role {
            Role::Bridge {
                direction,
                objective,
                head,
                time_reversed,
                schedule,
            } => BridgeNet::new(self.net, direction, objective, head, time_reversed, &schedule),
            _ => Err(Error::format("checkpoint", "not a bridge network")),
        }
    }

    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        let mut buf = Vec::with_capacity(64 + 4 * self.net.param_count());
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&VERSION.to_le_bytes());
        let n_layers = self.net.n_layers();
        buf.extend_from_slice(&(n_layers as u32).to_le_bytes());
        for l in 0..n_layers {
            let (rows, cols) = self.net.layer_shape(l);
            buf.extend_from_slice(&(rows as u32).to_le_bytes());
            buf.extend_from_slice(&(cols as u32).to_le_bytes());
        }
        buf.push(self.net.activation().id());
        buf.extend_from_slice(&(self.net.embed_dim() as u32).to_le_bytes());
        for p in self.net.params() {
            buf.extend_from_slice(&p.to_le_bytes());
        }
        let put_schedule = |buf: &mut Vec<u8>, s: &GammaSchedule| {
            buf.extend_from_slice(&(s.n_steps() as u32).to_le_bytes());
            for b in s.gamma_bars() {
                buf.extend_from_slice(&b.to_le_bytes());
            }
        };
        match &self.role {
            Role::Plain => buf.push(0),
            Role::Pretrained { toward, schedule } => {
                buf.push(match toward {
                    Toward::Data => 1,
                    Toward::Prior => 2,
                });
                put_schedule(&mut buf, schedule);
            }
            Role::Bridge {
                direction,
                objective,
                head,
                time_reversed,
                schedule,
            } => {
                buf.push(match direction {
                    Direction::Forward => 3,
                    Direction::Backward => 4,
                });
                put_schedule(&mut buf, schedule);
                buf.push(objective.id());
                buf.push(head.id());
                buf.push(*time_reversed as u8);
            }
        }
        buf.extend_from_slice(&self.seed.to_le_bytes());
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read<R: Read>(mut r: R) -> Result<Self> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut c = Cursor { bytes, pos: 0 };
        if c.take(4)? != MAGIC {
            return Err(Error::format("checkpoint", "bad magic"));
        }
        let version = c.u32()?;
        if version != VERSION {
            return Err(Error::format("checkpoint", format!("unsupported version {version}")));
        }
        let n_layers = c.u32()? as usize;
        if n_layers == 0 || n_layers > 4096 {
            return Err(Error::format("checkpoint", format!("implausible layer count {n_layers}")));
        }
        let mut shapes = Vec::with_capacity(n_layers);
        for _ in 0..n_layers {
            shapes.push((c.u32()? as usize, c.u32()? as usize));
        }
        for w in shapes.windows(2) {
            if w[0].0 != w[1].1 {
                return Err(Error::format("checkpoint", "inconsistent layer shapes"));
            }
        }
        let mut dims = vec![shapes[0].1];
        dims.extend(shapes.iter().map(|s| s.0));
        let act_id = c.u8()?;
        let activation = Activation::from_id(act_id)
            .ok_or_else(|| Error::format("checkpoint", format!("unknown activation {act_id}")))?;
        let embed_dim = c.u32()? as usize;
        let count: usize = shapes.iter().map(|(r, k)| r * k + r).sum();
        if count > (bytes.len() - c.pos) / 4 {
            return Err(Error::format("checkpoint", "truncated parameters"));
        }
        let mut params = Vec::with_capacity(count);
        for _ in 0..count {
            params.push(f32::from_le_bytes(c.take(4)?.try_into().unwrap()));
        }
        let net = Mlp::from_parts(&dims, activation, embed_dim, params)
            .map_err(|e| Error::format("checkpoint", e.to_string()))?;

        let tag = c.u8()?;
        let role = match tag {
            0 => Role::Plain,
            1 | 2 => Role::Pretrained {
                toward: if tag == 1 { Toward::Data } else { Toward::Prior },
                schedule: c.schedule()?,
            },
            3 | 4 => {
                let schedule = c.schedule()?;
                let obj = c.u8()?;
                let objective = ObjectiveKind::from_id(obj)
                    .ok_or_else(|| Error::format("checkpoint", format!("unknown objective {obj}")))?;
                let h = c.u8()?;
                let head = Head::from_id(h)
                    .ok_or_else(|| Error::format("checkpoint", format!("unknown head {h}")))?;
                let time_reversed = match c.u8()? {
                    0 => false,
                    1 => true,
                    v => return Err(Error::format("checkpoint", format!("bad flag {v}"))),
                };
                Role::Bridge {
                    direction: if tag == 3 { Direction::Forward } else { Direction::Backward },
                    objective,
                    head,
                    time_reversed,
                    schedule,
                }
            }
            t => return Err(Error::format("checkpoint", format!("unknown role {t}"))),
        };
        let seed = c.u64()?;
        if c.pos != bytes.len() {
            return Err(Error::format("checkpoint", "trailing bytes"));
        }
        Ok(Self { net, role, seed })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        self.write(&mut buf)?;
        fs::write(path, buf)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        match fs::read(path) {
            Ok(bytes) => Self::from_bytes(&bytes),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Err(Error::NotFound(path.to_path_buf())),
            Err(e) => Err(e.into()),
        }
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::format("checkpoint", "unexpected end of file"));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn schedule(&mut self) -> Result<GammaSchedule> {
        let n = self.u32()? as usize;
        if n == 0 || n > (self.bytes.len() - self.pos) / 8 {
            return Err(Error::format("checkpoint", "bad schedule length"));
        }
        let bars: Vec<f64> = (0..=n)
            .map(|_| Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap())))
            .collect::<Result<_>>()?;
        GammaSchedule::from_gamma_bars(&bars).map_err(|e| Error::format("checkpoint", e.to_string()))
    }
}
