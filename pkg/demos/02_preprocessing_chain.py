"""Walk a 16-bit height patch through the preprocessing chain, step by step.

The chain keeps physical information intact: it recenters each patch at
mid-gray (no scale normalization), duplicates the channel, and zero-pads to
224x224. A 79-count tape step stays exactly 79 counts wide wherever no
clamping occurs.
"""

import numpy as np

from smalldata import heightfield as hf
from smalldata.preprocess import quantize_center, triplicate, pad_center, preprocess

patch = hf.synthesize_patch(hf.SynthesisConfig(noise_sigma_gray=0.0, seed=5),
                            hf.DefectLabel.NOMINAL, seed=11)
px16 = patch.image.pixels
print("input:   ", px16.shape, px16.dtype, "values", sorted(np.unique(px16)))

g = quantize_center(patch.image)
print("quantized:", g.pixels.shape, g.pixels.dtype, "values",
      sorted(np.unique(g.pixels)))
lo, hi = int(g.pixels.min()), int(g.pixels.max())
print(f"          tape step preserved: {hi} - {lo} = {hi - lo} counts")

t = triplicate(g)
print("triplied: ", t.shape, "channels equal:",
      bool((t[:, :, 0] == t[:, :, 2]).all()))

mi = pad_center(t, source_id="demo-patch")
nz_rows = np.nonzero(mi.values.any(axis=(1, 2)))[0]
nz_cols = np.nonzero(mi.values.any(axis=(0, 2)))[0]
print("padded:  ", mi.values.shape,
      f"content window rows [{nz_rows[0]}, {nz_rows[-1]}], "
      f"cols [{nz_cols[0]}, {nz_cols[-1]}]")

# the one-call version
assert preprocess(patch.image, "demo-patch") == mi

# shift covariance: raising the whole surface does not change the output
raised = hf.HeightImage.from_array(px16 + 1000, patch.image.calibration)
print("shift covariance:", quantize_center(raised) == g)
