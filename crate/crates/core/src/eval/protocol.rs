use std::fmt;
use std::str::FromStr;

use crate::data::SampleLabels;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Mode {
    /// Every same-identity gallery entry is a match.
    General,
    /// Clothes-changing: only same-identity, different-clothes matches count;
    /// same-identity same-clothes entries are removed.
    ClothesChanging,
    /// Same-clothes: only same-identity, same-clothes matches count;
    /// same-identity different-clothes entries are removed.
    SameClothes,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::General, Mode::ClothesChanging, Mode::SameClothes];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::General => "general",
            Mode::ClothesChanging => "cc",
            Mode::SameClothes => "sc",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "general" => Ok(Mode::General),
            "cc" => Ok(Mode::ClothesChanging),
            "sc" => Ok(Mode::SameClothes),
            other => Err(Error::Config(format!("unknown protocol `{other}`"))),
        }
    }
}

/// Gallery filtering protocol.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Protocol {
    pub mode: Mode,
    /// Drop same-identity entries seen by the query's camera.
    pub cross_camera_only: bool,
}

impl Protocol {
    pub fn new(mode: Mode) -> Self {
        Self {
            mode,
            cross_camera_only: true,
        }
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.mode.fmt(f)
    }
}

/// Which gallery entries take part in ranking for one query, and which of
/// those are matches. `positive[j]` implies `valid[j]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GalleryMask {
    pub valid: Vec<bool>,
    pub positive: Vec<bool>,
}

pub fn build_gallery_mask(query: &SampleLabels, gallery: &[SampleLabels], protocol: Protocol) -> GalleryMask {
    let mut valid = Vec::with_capacity(gallery.len());
    let mut positive = Vec::with_capacity(gallery.len());
    for g in gallery {
        let same_id = g.identity == query.identity;
        let same_clothes = g.clothes == query.clothes;
        let keep = !same_id
            || (!(protocol.cross_camera_only && g.camera == query.camera)
                && match protocol.mode {
                    Mode::General => true,
                    Mode::ClothesChanging => !same_clothes,
                    Mode::SameClothes => same_clothes,
                });
        valid.push(keep);
        positive.push(keep && same_id);
    }
    GalleryMask { valid, positive }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn l(identity: u32, clothes: u32, camera: u32) -> SampleLabels {
        SampleLabels {
            identity,
            clothes,
            camera,
        }
    }

    #[test]
    fn rule_application() {
        let q = l(1, 10, 0);
        let gallery = [l(1, 10, 1), l(1, 11, 1), l(2, 12, 0)];
        let cc = build_gallery_mask(&q, &gallery, Protocol::new(Mode::ClothesChanging));
        assert_eq!(cc.valid, vec![false, true, true]);
        assert_eq!(&cc.positive[1..], &[true, false]);
        let sc = build_gallery_mask(&q, &gallery, Protocol::new(Mode::SameClothes));
        assert_eq!(sc.valid, vec![true, false, true]);
        assert_eq!((sc.positive[0], sc.positive[2]), (true, false));
        let general = build_gallery_mask(&q, &gallery, Protocol::new(Mode::General));
        assert_eq!(general.valid, vec![true, true, true]);
        assert_eq!(general.positive, vec![true, true, false]);
    }

    #[test]
    fn same_camera_exclusion() {
        let q = l(1, 10, 0);
        let gallery = [l(1, 10, 0), l(1, 11, 0), l(2, 12, 0)];
        let m = build_gallery_mask(&q, &gallery, Protocol::new(Mode::General));
        assert_eq!(m.valid, vec![false, false, true]);
        let open = Protocol {
            mode: Mode::General,
            cross_camera_only: false,
        };
        assert_eq!(build_gallery_mask(&q, &gallery, open).positive, vec![true, true, false]);
    }

    #[test]
    fn mode_names() {
        for m in Mode::ALL {
            assert_eq!(m.as_str().parse::<Mode>().unwrap(), m);
        }
        assert!("xx".parse::<Mode>().is_err());
    }
}
