use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense `height x width x channels` grid of finite reals, channel-fastest
/// (row-major HWC).
///
/// Fixture JSON: `{"shape": [h, w, c], "data": [...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TensorJson", into = "TensorJson")]
pub struct DenseMap {
    height: usize,
    width: usize,
    channels: usize,
    values: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct TensorJson {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl TryFrom<TensorJson> for DenseMap {
    type Error = Error;

    fn try_from(t: TensorJson) -> Result<Self> {
        let (h, w, c) = match t.shape.as_slice() {
            &[h, w] => (h, w, 1),
            &[h, w, c] => (h, w, c),
            other => {
                return Err(Error::Format(format!(
                    "tensor shape {other:?} is not [h, w] or [h, w, c]"
                )))
            }
        };
        DenseMap::new(h, w, c, t.data)
    }
}

impl From<DenseMap> for TensorJson {
    fn from(m: DenseMap) -> Self {
        TensorJson {
            shape: vec![m.height, m.width, m.channels],
            data: m.values,
        }
    }
}

impl DenseMap {
    pub fn new(height: usize, width: usize, channels: usize, values: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 || channels == 0 {
            return Err(Error::Shape(format!(
                "dense map dimensions must be positive, got {height}x{width}x{channels}"
            )));
        }
        if values.len() != height * width * channels {
            return Err(Error::Shape(format!(
                "{height}x{width}x{channels} map needs {} values, got {}",
                height * width * channels,
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("dense map values must be finite".into()));
        }
        Ok(Self {
            height,
            width,
            channels,
            values,
        })
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: f64) -> Result<Self> {
        Self::new(height, width, channels, vec![value; height * width * channels])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn pixels(&self) -> usize {
        self.height * self.width
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn get(&self, row: usize, col: usize, channel: usize) -> f64 {
        self.values[(row * self.width + col) * self.channels + channel]
    }

    /// The channel vector of pixel `p` (row-major pixel index).
    pub fn pixel(&self, p: usize) -> &[f64] {
        &self.values[p * self.channels..(p + 1) * self.channels]
    }

    pub fn channel(&self, channel: usize) -> DenseMap {
        let values = (0..self.pixels())
            .map(|p| self.values[p * self.channels + channel])
            .collect();
        DenseMap {
            height: self.height,
            width: self.width,
            channels: 1,
            values,
        }
    }

    /// Stacks single-channel maps into one map with a channel per input.
    pub fn stack(maps: &[DenseMap]) -> Result<DenseMap> {
        let first = maps
            .first()
            .ok_or_else(|| Error::Shape("cannot stack zero maps".into()))?;
        let (h, w) = (first.height, first.width);
        for m in maps {
            if m.height != h || m.width != w || m.channels != 1 {
                return Err(Error::Shape(
                    "stacked maps must be single-channel and equal-sized".into(),
                ));
            }
        }
        let k = maps.len();
        let mut values = vec![0.0; h * w * k];
        for (c, m) in maps.iter().enumerate() {
            for p in 0..h * w {
                values[p * k + c] = m.values[p];
            }
        }
        DenseMap::new(h, w, k, values)
    }

    pub(crate) fn from_parts_unchecked(height: usize, width: usize, channels: usize, values: Vec<f64>) -> Self {
        Self {
            height,
            width,
            channels,
            values,
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_fixture_form() {
        let m = DenseMap::new(1, 2, 1, vec![0.5, -1.0]).unwrap();
        let text = serde_json::to_string(&m).unwrap();
        assert_eq!(text, r#"{"shape":[1,2,1],"data":[0.5,-1.0]}"#);
        assert_eq!(serde_json::from_str::<DenseMap>(&text).unwrap(), m);
        let flat: DenseMap = serde_json::from_str(r#"{"shape":[1,2],"data":[1,2]}"#).unwrap();
        assert_eq!(flat.channels(), 1);
        assert!(serde_json::from_str::<DenseMap>(r#"{"shape":[2,2],"data":[1]}"#).is_err());
    }

    #[test]
    fn rejects_non_finite() {
        assert!(matches!(DenseMap::new(1, 1, 1, vec![f64::NAN]), Err(Error::Domain(_))));
    }

    #[test]
    fn stack_and_split() {
        let a = DenseMap::new(1, 2, 1, vec![1.0, 2.0]).unwrap();
        let b = DenseMap::new(1, 2, 1, vec![3.0, 4.0]).unwrap();
        let s = DenseMap::stack(&[a.clone(), b.clone()]).unwrap();
        assert_eq!(s.values(), &[1.0, 3.0, 2.0, 4.0]);
        assert_eq!(s.channel(1), b);
        assert_eq!(s.get(0, 1, 0), 2.0);
    }
}
