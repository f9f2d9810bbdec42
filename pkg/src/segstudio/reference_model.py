"""Built-in reference segmentation model.

Thresholds the volume at a manifest-configured intensity and keeps the
largest 6-connected component per label.  Exists so the full inference
pipeline can be exercised (and verified against phantoms) without any
external container runtime.
"""

from __future__ import annotations

import numpy as np
from scipy import ndimage

from .errors import ArgumentError

_SIX_CONNECTED = ndimage.generate_binary_structure(3, 1)


def largest_component(foreground: np.ndarray) -> np.ndarray:
    """Largest 6-connected component of a boolean volume (empty stays empty)."""
    labeled, count = ndimage.label(foreground, structure=_SIX_CONNECTED)
    if count == 0:
        return np.zeros_like(foreground)
    sizes = np.bincount(labeled.reshape(-1))
    sizes[0] = 0
    return labeled == int(np.argmax(sizes))


def run_reference_model(voxels: np.ndarray, label_map: dict[str, int],
                        resource_hints: dict) -> np.ndarray:
    """Label volume (uint16, series shape) for the threshold model.

    ``resource_hints`` must carry a numeric ``threshold``; an optional
    ``thresholds`` map overrides it per ROI name.  Voxels at or above the
    threshold are foreground.  Labels are written in ascending label order,
    so overlapping components resolve to the highest label.
    """
    default = resource_hints.get("threshold")
    per_roi = resource_hints.get("thresholds") or {}
    labels_out = np.zeros(voxels.shape, dtype=np.uint16)
    for roi_name, label in sorted(label_map.items(), key=lambda kv: kv[1]):
        level = per_roi.get(roi_name, default)
        if level is None:
            raise ArgumentError(
                f"reference model needs a threshold for ROI {roi_name!r} "
                "(resource hint 'threshold' or 'thresholds')")
        component = largest_component(voxels >= float(level))
        labels_out[component] = label
    return labels_out
