use std::collections::BTreeSet;

use super::{extract_channels, ChannelMode, Session};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Row-major `[rows, cols]` matrix of `f32`.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f32>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f32>) -> Matrix {
        assert_eq!(rows * cols, data.len(), "matrix data does not match {rows}x{cols}");
        Matrix { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn row(&self, r: usize) -> &[f32] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// Rows `[start, start + len)`.
    pub fn rows_slice(&self, start: usize, len: usize) -> &[f32] {
        &self.data[start * self.cols..(start + len) * self.cols]
    }
}

fn check_window(window_size: usize, step: usize) -> Result<()> {
    if window_size == 0 || step == 0 {
        return Err(Error::Config(format!("window size and step must be positive, got {window_size} / {step}")));
    }
    Ok(())
}

/// Number of windows of `window_size` rows at stride `step` in `rows` rows.
pub(crate) fn window_count(rows: usize, window_size: usize, step: usize) -> usize {
    if rows < window_size {
        0
    } else {
        (rows - window_size) / step + 1
    }
}

/// Window `i` covers rows `[i * step, i * step + window_size)`.
pub fn sliding_windows(m: &Matrix, window_size: usize, step: usize) -> Result<Vec<Matrix>> {
    check_window(window_size, step)?;
    Ok((0..window_count(m.rows, window_size, step))
        .map(|i| Matrix::new(window_size, m.cols, m.rows_slice(i * step, window_size).to_vec()))
        .collect())
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WindowSource {
    pub user_id: String,
    pub passcode: String,
    pub session_index: u32,
    pub start_frame: usize,
}

#[derive(Clone, Debug)]
struct SessionKey {
    user_id: String,
    passcode: String,
    session_index: u32,
}

/// Materialised windows `[len, window_size, channels]` with labels and provenance.
#[derive(Clone, Debug)]
pub struct WindowSet {
    window_size: usize,
    channels: usize,
    values: Vec<f32>,
    labels: Vec<u8>,
    origins: Vec<(u32, u32)>,
    sessions: Vec<SessionKey>,
    short_sessions: usize,
}

impl WindowSet {
    pub fn empty(window_size: usize, channels: usize) -> WindowSet {
        WindowSet {
            window_size,
            channels,
            values: Vec::new(),
            labels: Vec::new(),
            origins: Vec::new(),
            sessions: Vec::new(),
            short_sessions: 0,
        }
    }

    /// Step-1 windows of every included session; windows never cross session boundaries.
    pub fn from_sessions<'a, I>(sessions: I, window_size: usize, mode: ChannelMode) -> Result<WindowSet>
    where
        I: IntoIterator<Item = &'a Session>,
    {
        check_window(window_size, 1)?;
        let mut set = WindowSet::empty(window_size, mode.channels());
        for s in sessions {
            if !s.is_included() {
                continue;
            }
            let m = extract_channels(s, mode);
            let count = window_count(m.rows(), window_size, 1);
            if count == 0 {
                set.short_sessions += 1;
                continue;
            }
            let slot = set.sessions.len() as u32;
            set.sessions.push(SessionKey {
                user_id: s.user_id.clone(),
                passcode: s.passcode.clone(),
                session_index: s.session_index,
            });
            set.values.reserve(count * window_size * m.cols());
            for start in 0..count {
                set.values.extend_from_slice(m.rows_slice(start, window_size));
                set.labels.push(s.label());
                set.origins.push((slot, start as u32));
            }
        }
        Ok(set)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn window_size(&self) -> usize {
        self.window_size
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// Included sessions shorter than the window size (they yield no windows).
    pub fn short_sessions(&self) -> usize {
        self.short_sessions
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub(crate) fn values_mut(&mut self) -> &mut [f32] {
        &mut self.values
    }

    /// Values of window `i`, `[window_size, channels]` row-major.
    pub fn window(&self, i: usize) -> &[f32] {
        let n = self.window_size * self.channels;
        &self.values[i * n..(i + 1) * n]
    }

    pub fn source(&self, i: usize) -> WindowSource {
        let (slot, start) = self.origins[i];
        let k = &self.sessions[slot as usize];
        WindowSource {
            user_id: k.user_id.clone(),
            passcode: k.passcode.clone(),
            session_index: k.session_index,
            start_frame: start as usize,
        }
    }

    pub fn user_of(&self, i: usize) -> &str {
        &self.sessions[self.origins[i].0 as usize].user_id
    }

    pub fn users(&self) -> BTreeSet<String> {
        self.sessions.iter().map(|k| k.user_id.clone()).collect()
    }

    /// `[unfamiliar, familiar]` window counts.
    pub fn class_counts(&self) -> [usize; 2] {
        let pos = self.labels.iter().filter(|&&l| l == 1).count();
        [self.labels.len() - pos, pos]
    }

    /// Gathers windows into a `[indices.len(), window_size, channels]` batch.
    pub fn batch(&self, indices: &[usize]) -> Result<Tensor> {
        let n = self.window_size * self.channels;
        let mut data = Vec::with_capacity(indices.len() * n);
        for &i in indices {
            data.extend_from_slice(self.window(i));
        }
        Tensor::new(vec![indices.len(), self.window_size, self.channels], data)
    }
}
