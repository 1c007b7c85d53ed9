"""Stratified splitting, class balancing, and nested training-size ladders.

The split keeps per-class proportions within one item of the exact 70/30 (and
10%-of-train eval) targets. Ladder subsets are nested, so a 200-per-class run
trains on a strict subset of the 400-per-class run.
"""

from smalldata import datakit as dk
from smalldata import heightfield as hf

# index with the production composition, scaled down 1:100
entries = []
for label, n in zip(hf.LABELS, (618, 87, 32)):
    entries += [(f"{label.value}-{i}", label) for i in range(n)]
index = dk.DatasetIndex(tuple(entries))
print("histogram:", {l.value: index.histogram[l] for l in hf.LABELS})

split = dk.stratified_split(index, dk.SplitSpec(seed=0))
for name, part in split.parts().items():
    hist = {l.value: part.histogram[l] for l in hf.LABELS}
    print(f"{name:5s} n={len(part):3d} {hist}")

balanced = dk.balance(split.train, 20, seed=0)
print("\nbalanced train subset:",
      {l.value: balanced.histogram[l] for l in hf.LABELS})

ladder = dk.subset_ladder(split.train, [5, 10, 20], seed=0)
for size, subset in zip([5, 10, 20], ladder):
    print(f"ladder size {size:2d}: {len(subset):2d} items, "
          f"nested in next: {set(subset.ids()) <= set(ladder[-1].ids())}")

# everything is reproducible from the seed
again = dk.stratified_split(index, dk.SplitSpec(seed=0))
print("\nsame seed, same membership:", again.train.entries == split.train.entries)
