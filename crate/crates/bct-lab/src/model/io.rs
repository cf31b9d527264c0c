//! Model persistence. A model file stores the backbone and the classifier
//! *kind* only; classifier weights are deliberately dropped because retrieval
//! needs embeddings, not class scores, and old classifier heads are discarded
//! after training.
//!
//! Layout (little-endian): magic "BCTM", version u32, layer count u32, then
//! per layer out u32 / in u32 / out×in weight f64s (row major) / out bias
//! f64s, then a kind tag u8 (0 = plain softmax, 1 = angular margin) followed
//! by scale and margin f64s when angular.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::{Array1, Array2};

use crate::data::io::{expect_eof, read_f64, read_magic, read_u32, write_f64, write_u32};
use crate::error::{Error, Result};
use crate::model::{Backbone, ClassifierKind, DenseLayer};

const MODEL_MAGIC: &[u8; 4] = b"BCTM";
const MODEL_VERSION: u32 = 1;

pub fn save_model(path: &Path, bb: &Backbone, kind: ClassifierKind) -> Result<()> {
    kind.validate()?;
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MODEL_MAGIC)?;
    write_u32(&mut w, MODEL_VERSION)?;
    write_u32(&mut w, bb.layers().len() as u32)?;
    for layer in bb.layers() {
        write_u32(&mut w, layer.weight.nrows() as u32)?;
        write_u32(&mut w, layer.weight.ncols() as u32)?;
        for &v in layer.weight.iter() {
            write_f64(&mut w, v)?;
        }
        for &v in layer.bias.iter() {
            write_f64(&mut w, v)?;
        }
    }
    match kind {
        ClassifierKind::PlainSoftmax => w.write_all(&[0u8])?,
        ClassifierKind::AngularMargin { scale, margin } => {
            w.write_all(&[1u8])?;
            write_f64(&mut w, scale)?;
            write_f64(&mut w, margin)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<(Backbone, ClassifierKind)> {
    let mut r = BufReader::new(File::open(path)?);
    read_magic(&mut r, path, MODEL_MAGIC)?;
    let version = read_u32(&mut r, path, "version")?;
    if version != MODEL_VERSION {
        return Err(Error::corrupt(path, format!("unsupported model version {version}")));
    }
    let layer_count = read_u32(&mut r, path, "layer count")? as usize;
    if layer_count == 0 || layer_count > 64 {
        return Err(Error::corrupt(path, format!("implausible layer count {layer_count}")));
    }
    let mut layers = Vec::with_capacity(layer_count);
    for l in 0..layer_count {
        let out = read_u32(&mut r, path, "layer rows")? as usize;
        let inp = read_u32(&mut r, path, "layer cols")? as usize;
        if out == 0 || inp == 0 {
            return Err(Error::corrupt(path, format!("layer {l} has a zero dimension")));
        }
        let mut weight = Array2::<f64>::zeros((out, inp));
        for v in weight.iter_mut() {
            *v = read_f64(&mut r, path, "weight")?;
        }
        let mut bias = Array1::<f64>::zeros(out);
        for v in bias.iter_mut() {
            *v = read_f64(&mut r, path, "bias")?;
        }
        layers.push(DenseLayer { weight, bias });
    }
    let mut tag = [0u8; 1];
    std::io::Read::read_exact(&mut r, &mut tag)
        .map_err(|_| Error::corrupt(path, "missing classifier kind tag"))?;
    let kind = match tag[0] {
        0 => ClassifierKind::PlainSoftmax,
        1 => {
            let scale = read_f64(&mut r, path, "scale")?;
            let margin = read_f64(&mut r, path, "margin")?;
            ClassifierKind::AngularMargin { scale, margin }
        }
        other => return Err(Error::corrupt(path, format!("unknown classifier kind tag {other}"))),
    };
    expect_eof(&mut r, path)?;
    let bb = Backbone::from_layers(layers).map_err(|e| match e {
        Error::InvalidArgument(msg) => Error::corrupt(path, msg),
        other => other,
    })?;
    kind.validate().map_err(|e| match e {
        Error::InvalidArgument(msg) => Error::corrupt(path, msg),
        other => other,
    })?;
    Ok((bb, kind))
}
