//! Backend construction for `segment`/`sweep-rt` and the built-in server
//! behind `aroi serve`.

use std::collections::BTreeMap;
use std::io::Write;
use std::time::Duration;

use anyhow::{Context, Result};
use aroi_core::segmenter::{
    serve, spawn_external, ConstantSegmenter, ExternalSegmenter, ProbMap2D, ProtocolStats, DEFAULT_CUT,
};
use aroi_core::{
    Error, InputSizes, Patch2D, Segmenter, SegmenterSpec, SliceSegmenter, ThresholdSegmenter, View,
    ViewSegmenters,
};

use crate::args::{BackendChoice, ServeArgs, ServeKind};

enum Slot {
    Local(ThresholdSegmenter),
    Remote(ExternalSegmenter),
}

impl Slot {
    fn as_dyn(&mut self) -> &mut dyn SliceSegmenter {
        match self {
            Slot::Local(s) => s,
            Slot::Remote(s) => s,
        }
    }
}

/// One segmenter per view. External backends get one process each so the
/// coronal and sagittal passes can run concurrently.
pub struct Backends {
    axial: Slot,
    coronal: Slot,
    sagittal: Slot,
}

impl Backends {
    pub fn open(choice: &BackendChoice, timeout: Duration, strict: bool) -> Result<Self> {
        let make = |view: View| -> Result<Slot> {
            Ok(match choice {
                BackendChoice::Threshold => Slot::Local(ThresholdSegmenter::default()),
                BackendChoice::Proc(cmd) => Slot::Remote(
                    spawn_external(cmd, timeout)
                        .with_context(|| format!("starting {view} backend `{}`", cmd.join(" ")))?
                        .strict(strict),
                ),
            })
        };
        Ok(Self {
            axial: make(View::Axial)?,
            coronal: make(View::Coronal)?,
            sagittal: make(View::Sagittal)?,
        })
    }

    pub fn views(&mut self) -> ViewSegmenters<'_> {
        ViewSegmenters {
            axial: self.axial.as_dyn(),
            coronal: self.coronal.as_dyn(),
            sagittal: self.sagittal.as_dyn(),
        }
    }

    fn slots(&self) -> [(View, &Slot); 3] {
        [
            (View::Axial, &self.axial),
            (View::Coronal, &self.coronal),
            (View::Sagittal, &self.sagittal),
        ]
    }

    pub fn names(&self) -> BTreeMap<View, String> {
        self.slots()
            .into_iter()
            .map(|(v, s)| {
                let name = match s {
                    Slot::Local(s) => s.name().to_string(),
                    Slot::Remote(s) => s.name().to_string(),
                };
                (v, name)
            })
            .collect()
    }

    /// Per-view protocol counters; empty for in-process backends.
    pub fn protocol_stats(&self) -> BTreeMap<View, ProtocolStats> {
        self.slots()
            .into_iter()
            .filter_map(|(v, s)| match s {
                Slot::Remote(s) => Some((v, s.stats())),
                Slot::Local(_) => None,
            })
            .collect()
    }

    /// Sends `quit` to external backends and waits for them.
    pub fn close(self) -> Result<()> {
        for slot in [self.axial, self.coronal, self.sagittal] {
            if let Slot::Remote(s) = slot {
                if let Some(status) = s.shutdown()? {
                    if !status.success() {
                        log::warn!("backend exited with {status}");
                    }
                }
            }
        }
        Ok(())
    }
}

/// Wraps a backend and fails every request for one view.
struct FailOn<S> {
    inner: S,
    view: Option<View>,
}

impl<S: Segmenter> Segmenter for FailOn<S> {
    fn spec(&self) -> &SegmenterSpec {
        self.inner.spec()
    }

    fn predict(&mut self, view: View, patch: &Patch2D) -> aroi_core::Result<ProbMap2D> {
        if self.view == Some(view) {
            return Err(Error::Backend(format!("{view} requests are disabled")));
        }
        self.inner.predict(view, patch)
    }
}

pub fn cmd_serve(args: &ServeArgs) -> Result<()> {
    let d = InputSizes::default();
    let sizes = InputSizes {
        axial: args.axial_size.unwrap_or(d.axial),
        coronal: args.coronal_size.unwrap_or(d.coronal),
        sagittal: args.sagittal_size.unwrap_or(d.sagittal),
    };
    let inner: Box<dyn Segmenter> = match args.kind {
        ServeKind::Threshold => Box::new(ThresholdSegmenter::new(DEFAULT_CUT, sizes)),
        ServeKind::Zero => Box::new(ConstantSegmenter::with_sizes(0.0, sizes)),
        ServeKind::One => Box::new(ConstantSegmenter::with_sizes(1.0, sizes)),
    };
    let mut backend = FailOn {
        inner,
        view: args.fail_on_view,
    };
    let stdin = std::io::stdin();
    let stdout = std::io::stdout();
    let stats = serve(&mut backend, stdin.lock(), stdout.lock())?;
    std::io::stdout().flush()?;
    log::info!("served {stats:?}");
    Ok(())
}
