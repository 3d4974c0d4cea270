//! Binary network checkpoints.
//!
//! Layout, all integers little-endian `u32`:
//!
//! ```text
//! magic "RFNN" | version | arch_len | arch JSON (UTF-8, arch_len bytes) | layer_count
//! per layer:  tensor_count (0 or 2)
//!   per tensor: ndim | dims[ndim] | f32 LE data (product of dims values)
//! ```
//!
//! The weight tensor comes first, then the bias. Dense weights have dims
//! `[input, output]`, Conv1d weights `[kernel, in_channels, out_channels]`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::arch::ArchitectureSpec;
use super::network::{LayerParams, Network};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const MAGIC: [u8; 4] = *b"RFNN";
pub const VERSION: u32 = 1;

fn put_u32(w: &mut impl Write, v: u32) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn get_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn put_tensor<T: Scalar>(w: &mut impl Write, dims: &[usize], data: &[T]) -> Result<()> {
    put_u32(w, dims.len() as u32)?;
    for &d in dims {
        put_u32(w, d as u32)?;
    }
    for v in data {
        w.write_all(&v.as_f32().to_le_bytes())?;
    }
    Ok(())
}

fn get_tensor<T: Scalar>(r: &mut impl Read, expect: &[usize]) -> Result<Vec<T>> {
    let ndim = get_u32(r)? as usize;
    let dims: Vec<usize> = (0..ndim).map(|_| get_u32(r).map(|d| d as usize)).collect::<Result<_>>()?;
    if dims != expect {
        return Err(Error::format("checkpoint", format!("tensor dims {dims:?}, architecture expects {expect:?}")));
    }
    let n: usize = dims.iter().product();
    let mut bytes = vec![0u8; n * 4];
    r.read_exact(&mut bytes)?;
    Ok(bytes
        .chunks_exact(4)
        .map(|c| T::lit(f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64))
        .collect())
}

pub fn write_checkpoint<T: Scalar>(w: &mut impl Write, net: &Network<T>) -> Result<()> {
    w.write_all(&MAGIC)?;
    put_u32(w, VERSION)?;
    let json = net.arch().to_json();
    put_u32(w, json.len() as u32)?;
    w.write_all(json.as_bytes())?;
    put_u32(w, net.arch().layers.len() as u32)?;
    for (spec, p) in net.arch().layers.iter().zip(net.params()) {
        if spec.has_params() {
            put_u32(w, 2)?;
            put_tensor(w, &spec.weight_dims(), &p.weight)?;
            put_tensor(w, &[p.bias.len()], &p.bias)?;
        } else {
            put_u32(w, 0)?;
        }
    }
    Ok(())
}

pub fn read_checkpoint<T: Scalar>(r: &mut impl Read) -> Result<Network<T>> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if magic != MAGIC {
        return Err(Error::format("checkpoint", "bad magic"));
    }
    let version = get_u32(r)?;
    if version != VERSION {
        return Err(Error::format("checkpoint", format!("unsupported version {version}")));
    }
    let len = get_u32(r)? as usize;
    let mut json = vec![0u8; len];
    r.read_exact(&mut json)?;
    let text = String::from_utf8(json).map_err(|e| Error::format("checkpoint", e.to_string()))?;
    let arch = ArchitectureSpec::from_json(&text)?;
    let count = get_u32(r)? as usize;
    if count != arch.layers.len() {
        return Err(Error::format("checkpoint", format!("{count} layers stored, architecture has {}", arch.layers.len())));
    }
    let mut params = Vec::with_capacity(count);
    for spec in &arch.layers {
        let tensors = get_u32(r)?;
        let expected = if spec.has_params() { 2 } else { 0 };
        if tensors != expected {
            return Err(Error::format("checkpoint", format!("{tensors} tensors for a layer with {expected}")));
        }
        if spec.has_params() {
            let weight = get_tensor(r, &spec.weight_dims())?;
            let (_, nb) = spec.param_sizes();
            let bias = get_tensor(r, &[nb])?;
            params.push(LayerParams { weight, bias });
        } else {
            params.push(LayerParams::zeros(spec));
        }
    }
    Network::from_params(&arch, params)
}

pub fn save<T: Scalar>(path: &Path, net: &Network<T>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_checkpoint(&mut w, net)?;
    w.flush()?;
    Ok(())
}

pub fn load<T: Scalar>(path: &Path) -> Result<Network<T>> {
    read_checkpoint(&mut BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::arch::{LayerSpec, Shape};
    use crate::rng::seeded;

    fn conv_net() -> Network<f32> {
        let arch = ArchitectureSpec::new(
            Shape::Seq { len: 12, channels: 2 },
            vec![
                LayerSpec::Conv1d { in_channels: 2, out_channels: 3, kernel: 5 },
                LayerSpec::Relu,
                LayerSpec::Flatten,
                LayerSpec::Dense { input: 24, output: 4 },
                LayerSpec::Softmax,
            ],
        )
        .unwrap();
        Network::init(&arch, &mut seeded(12)).unwrap()
    }

    #[test]
    fn round_trip_reproduces_outputs_bit_exactly() {
        let net = conv_net();
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &net).unwrap();
        let back: Network<f32> = read_checkpoint(&mut buf.as_slice()).unwrap();
        assert_eq!(back, net);
        let x: Vec<f32> = (0..48).map(|i| (i as f32 * 0.3).cos()).collect();
        let a = net.predict(&x).unwrap();
        let b = back.predict(&x).unwrap();
        assert!(a.iter().zip(&b).all(|(p, q)| p.to_bits() == q.to_bits()));
    }

    #[test]
    fn corrupt_inputs_rejected() {
        let net = conv_net();
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &net).unwrap();
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(read_checkpoint::<f32>(&mut bad.as_slice()).is_err());
        let truncated = &buf[..buf.len() - 3];
        assert!(read_checkpoint::<f32>(&mut &truncated[..]).is_err());
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.ckpt");
        let net = conv_net();
        save(&path, &net).unwrap();
        assert_eq!(load::<f32>(&path).unwrap(), net);
    }
}
