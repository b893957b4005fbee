//! Time-tag records and streams.
//!
//! Timestamps are integer picoseconds measured from the start of a run. A
//! [`TagStream`] is always sorted non-decreasing in time and never extends
//! past its declared duration.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Detector channel. The numeric encoding is part of the tag file format.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[repr(u8)]
pub enum Channel {
    /// Alice, arrival-time arm.
    AT = 0,
    /// Alice, frequency-filtered arm.
    AF = 1,
    /// Bob, arrival-time arm.
    BT = 2,
    /// Bob, frequency-filtered arm.
    BF = 3,
}

impl Channel {
    pub const ALL: [Channel; 4] = [Channel::AT, Channel::AF, Channel::BT, Channel::BF];

    pub fn id(self) -> u8 {
        self as u8
    }

    pub fn from_id(id: u8) -> Option<Channel> {
        Channel::ALL.get(id as usize).copied()
    }

    pub fn label(self) -> &'static str {
        match self {
            Channel::AT => "A_T",
            Channel::AF => "A_F",
            Channel::BT => "B_T",
            Channel::BF => "B_F",
        }
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TimeTag {
    pub channel: Channel,
    /// Picoseconds since run start.
    pub t: u64,
}

impl TimeTag {
    pub fn new(channel: Channel, t: u64) -> Self {
        TimeTag { channel, t }
    }
}

/// First invariant violation found in a tag sequence.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StreamViolation {
    #[error("tag {index} at t={t} ps precedes previous tag at t={previous} ps")]
    OutOfOrder { index: usize, t: u64, previous: u64 },
    #[error("tag {index} at t={t} ps lies beyond the run duration {duration} ps")]
    BeyondDuration { index: usize, t: u64, duration: u64 },
}

impl StreamViolation {
    pub fn index(&self) -> usize {
        match *self {
            StreamViolation::OutOfOrder { index, .. } => index,
            StreamViolation::BeyondDuration { index, .. } => index,
        }
    }
}

/// Checks sortedness and range. Ties are allowed.
pub fn validate_stream(tags: &[TimeTag], duration: u64) -> Result<(), StreamViolation> {
    let mut previous = 0u64;
    for (index, tag) in tags.iter().enumerate() {
        if tag.t < previous {
            return Err(StreamViolation::OutOfOrder {
                index,
                t: tag.t,
                previous,
            });
        }
        if tag.t > duration {
            return Err(StreamViolation::BeyondDuration {
                index,
                t: tag.t,
                duration,
            });
        }
        previous = tag.t;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TagStream {
    tags: Vec<TimeTag>,
    duration: u64,
}

impl TagStream {
    pub fn new(tags: Vec<TimeTag>, duration: u64) -> Result<Self, StreamViolation> {
        validate_stream(&tags, duration)?;
        Ok(TagStream { tags, duration })
    }

    /// Sorts `tags` by time (stable, so equal timestamps keep their order)
    /// and validates the range.
    pub fn from_unsorted(mut tags: Vec<TimeTag>, duration: u64) -> Result<Self, StreamViolation> {
        tags.sort_by_key(|tag| tag.t);
        TagStream::new(tags, duration)
    }

    pub fn empty(duration: u64) -> Self {
        TagStream {
            tags: Vec::new(),
            duration,
        }
    }

    pub fn tags(&self) -> &[TimeTag] {
        &self.tags
    }

    pub fn duration(&self) -> u64 {
        self.duration
    }

    pub fn len(&self) -> usize {
        self.tags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tags.is_empty()
    }

    /// Timestamps only, in stream order.
    pub fn times(&self) -> Vec<u64> {
        self.tags.iter().map(|tag| tag.t).collect()
    }

    /// Sub-stream of a single channel.
    pub fn channel(&self, channel: Channel) -> TagStream {
        TagStream {
            tags: self.tags.iter().filter(|tag| tag.channel == channel).copied().collect(),
            duration: self.duration,
        }
    }

    pub fn into_tags(self) -> Vec<TimeTag> {
        self.tags
    }
}

/// Large-alphabet time binning: `n_bins` consecutive bins of width `tau_ps`
/// form one frame. Frames are anchored at t = 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameLayout {
    pub tau_ps: u64,
    pub n_bins: usize,
}

impl FrameLayout {
    pub fn new(tau_ps: u64, n_bins: usize) -> crate::Result<Self> {
        if tau_ps == 0 {
            return Err(crate::Error::InvalidParameter("bin width tau must be positive".into()));
        }
        if n_bins < 2 {
            return Err(crate::Error::InvalidParameter(format!(
                "frame needs at least 2 bins, got {n_bins}"
            )));
        }
        Ok(FrameLayout { tau_ps, n_bins })
    }

    pub fn frame_length_ps(&self) -> u64 {
        self.tau_ps * self.n_bins as u64
    }

    /// `(frame index, bin index within frame)` of a timestamp.
    #[inline]
    pub fn locate(&self, t: u64) -> (u64, usize) {
        let frame_len = self.frame_length_ps();
        let frame = t / frame_len;
        let bin = ((t % frame_len) / self.tau_ps) as usize;
        (frame, bin)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tag(ch: u8, t: u64) -> TimeTag {
        TimeTag::new(Channel::from_id(ch).unwrap(), t)
    }

    #[test]
    fn empty_stream_is_valid() {
        assert_eq!(validate_stream(&[], 0), Ok(()));
    }

    #[test]
    fn out_of_order_reports_index() {
        let err = validate_stream(&[tag(0, 10), tag(1, 5)], 100).unwrap_err();
        assert_eq!(err.index(), 1);
        assert!(matches!(err, StreamViolation::OutOfOrder { .. }));
    }

    #[test]
    fn ties_are_allowed() {
        assert_eq!(validate_stream(&[tag(0, 10), tag(1, 10)], 10), Ok(()));
    }

    #[test]
    fn beyond_duration_rejected() {
        let err = validate_stream(&[tag(0, 10), tag(1, 11)], 10).unwrap_err();
        assert_eq!(
            err,
            StreamViolation::BeyondDuration {
                index: 1,
                t: 11,
                duration: 10
            }
        );
    }

    #[test]
    fn frame_location() {
        let frame = FrameLayout::new(250, 256).unwrap();
        assert_eq!(frame.locate(0), (0, 0));
        assert_eq!(frame.locate(249), (0, 0));
        assert_eq!(frame.locate(250), (0, 1));
        assert_eq!(frame.locate(64_000), (1, 0));
        assert_eq!(frame.locate(64_000 + 255 * 250 + 7), (1, 255));
    }

    #[test]
    fn frame_spec_rejects_degenerate() {
        assert!(FrameLayout::new(0, 10).is_err());
        assert!(FrameLayout::new(10, 1).is_err());
    }

    #[test]
    fn channel_ids_roundtrip() {
        for ch in Channel::ALL {
            assert_eq!(Channel::from_id(ch.id()), Some(ch));
        }
        assert_eq!(Channel::from_id(4), None);
    }
}
