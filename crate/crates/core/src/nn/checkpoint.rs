//! Flat binary container for one network.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! "GENC" | version u32 | layer count u32 | (fan_in u32, fan_out u32) per layer
//! | Adam step u64
//! | parameters: per layer, weights row-major f64 then bias f64
//! | Adam first moments, same layout | Adam second moments, same layout
//! ```
//!
//! Hidden layers are relu and the last layer is linear.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::tensor::DenseMatrix;

use super::network::{LayerParams, Network, NetworkParams, NetworkSpec};

pub const NETWORK_MAGIC: &[u8; 4] = b"GENC";
const VERSION: u32 = 1;

fn write_err(e: std::io::Error) -> Error {
    Error::format(format!("writing network container: {e}"))
}

fn write_layers<W: Write>(w: &mut W, layers: &[LayerParams]) -> Result<()> {
    for l in layers {
        for v in l.weights.as_slice().iter().chain(&l.bias) {
            w.write_all(&v.to_le_bytes()).map_err(write_err)?;
        }
    }
    Ok(())
}

pub fn write_network<W: Write>(w: &mut W, net: &Network) -> Result<()> {
    let dims = net.spec.layer_dims();
    let mut header = Vec::with_capacity(16 + 8 * dims.len());
    header.extend_from_slice(NETWORK_MAGIC);
    header.extend_from_slice(&VERSION.to_le_bytes());
    header.extend_from_slice(&(dims.len() as u32).to_le_bytes());
    for (i, o) in &dims {
        header.extend_from_slice(&(*i as u32).to_le_bytes());
        header.extend_from_slice(&(*o as u32).to_le_bytes());
    }
    header.extend_from_slice(&net.params.step.to_le_bytes());
    w.write_all(&header).map_err(write_err)?;
    write_layers(w, &net.params.layers)?;
    write_layers(w, &net.params.first_moment)?;
    write_layers(w, &net.params.second_moment)?;
    Ok(())
}

struct Reader<'a, R> {
    inner: &'a mut R,
    offset: u64,
}

impl<R: Read> Reader<'_, R> {
    fn bytes<const N: usize>(&mut self, what: &str) -> Result<[u8; N]> {
        let mut buf = [0u8; N];
        self.inner.read_exact(&mut buf).map_err(|e| {
            Error::format(format!(
                "network container truncated reading {what} at byte {}: {e}",
                self.offset
            ))
        })?;
        self.offset += N as u64;
        Ok(buf)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        self.bytes::<4>(what).map(u32::from_le_bytes)
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        let v = f64::from_le_bytes(self.bytes::<8>(what)?);
        if !v.is_finite() {
            return Err(Error::format(format!(
                "non-finite {what} at byte {}",
                self.offset - 8
            )));
        }
        Ok(v)
    }

    fn layers(&mut self, dims: &[(usize, usize)], what: &str) -> Result<Vec<LayerParams>> {
        dims.iter()
            .map(|&(i, o)| {
                let w = (0..i * o).map(|_| self.f64(what)).collect::<Result<Vec<_>>>()?;
                let b = (0..o).map(|_| self.f64(what)).collect::<Result<Vec<_>>>()?;
                Ok(LayerParams {
                    weights: DenseMatrix::new(i, o, w)?,
                    bias: b,
                })
            })
            .collect()
    }
}

pub fn read_network<R: Read>(r: &mut R) -> Result<Network> {
    let mut rd = Reader { inner: r, offset: 0 };
    let magic = rd.bytes::<4>("magic")?;
    if &magic != NETWORK_MAGIC {
        return Err(Error::format(format!(
            "bad network magic {magic:?}, expected {NETWORK_MAGIC:?}"
        )));
    }
    let version = rd.u32("version")?;
    if version != VERSION {
        return Err(Error::format(format!("unsupported network version {version}")));
    }
    let n_layers = rd.u32("layer count")? as usize;
    if n_layers == 0 || n_layers > 1024 {
        return Err(Error::format(format!("implausible layer count {n_layers}")));
    }
    let mut dims = Vec::with_capacity(n_layers);
    for l in 0..n_layers {
        let i = rd.u32("layer dims")? as usize;
        let o = rd.u32("layer dims")? as usize;
        if let Some(&(_, prev_out)) = dims.last() {
            if prev_out != i {
                return Err(Error::format(format!(
                    "layer {l} takes {i} inputs but previous layer emits {prev_out}"
                )));
            }
        }
        dims.push((i, o));
    }
    let step = u64::from_le_bytes(rd.bytes::<8>("step")?);
    let layers = rd.layers(&dims, "weight")?;
    let first_moment = rd.layers(&dims, "first moment")?;
    let second_moment = rd.layers(&dims, "second moment")?;

    let hidden: Vec<usize> = dims[..n_layers - 1].iter().map(|&(_, o)| o).collect();
    let spec = NetworkSpec::new(dims[0].0, &hidden, dims[n_layers - 1].1)
        .map_err(|e| Error::format(e.to_string()))?;
    Network::from_parts(
        spec,
        NetworkParams {
            layers,
            first_moment,
            second_moment,
            step,
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;

    #[test]
    fn round_trip_is_bit_exact() {
        let spec = NetworkSpec::new(5, &[4, 3], 2).unwrap();
        let mut net = Network::init(spec, &mut SeededRng::new(8, "init")).unwrap();
        net.params.step = 17;
        net.params.first_moment[1].bias[2] = -0.125;
        net.params.second_moment[0].weights.set(3, 1, 1e-300);
        let mut buf = Vec::new();
        write_network(&mut buf, &net).unwrap();
        assert_eq!(&buf[..4], b"GENC");
        let back = read_network(&mut buf.as_slice()).unwrap();
        assert_eq!(back, net);
        let mut again = Vec::new();
        write_network(&mut again, &back).unwrap();
        assert_eq!(again, buf);
    }

    #[test]
    fn corrupt_containers_are_format_errors() {
        let spec = NetworkSpec::new(2, &[2], 1).unwrap();
        let net = Network::init(spec, &mut SeededRng::new(1, "init")).unwrap();
        let mut buf = Vec::new();
        write_network(&mut buf, &net).unwrap();

        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(read_network(&mut bad.as_slice()), Err(Error::Format(_))));
        let short = &buf[..buf.len() - 3];
        assert!(matches!(read_network(&mut &short[..]), Err(Error::Format(_))));
    }
}
