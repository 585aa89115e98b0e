"""How much of a part does a discriminator patch see?

    python demos/discriminator_fields.py

The 70-pixel patch discriminator is checked against parts of several sizes.
A shallower stack with a smaller receptive field is added for comparison,
which is the reasoning behind scoring both a fine and a coarse grid.
"""

from synthdet.receptive import PATCHGAN_70, ConvLayerSpec, check_coverage, dual_grid_loss, receptive_field

deep = receptive_field(PATCHGAN_70, (256, 256))
print(deep.table())
print(f"rf {deep.rf}, grid {deep.grid[0]}x{deep.grid[1]}\n")

shallow = receptive_field([ConvLayerSpec(4, 2, 1)] * 2 + [ConvLayerSpec(4, 1, 1)] * 2, (256, 256))
print(f"shallow stack: rf {shallow.rf}, grid {shallow.grid[0]}x{shallow.grid[1]}\n")

for extent in (30, 70, 120):
    for name, rep in (("deep", deep), ("shallow", shallow)):
        cov = check_coverage(rep, extent)
        print(f"part of {extent:>3} px, {name:<7} -> {cov.verdict} (margin {cov.margin:+d})")

print(f"\nloss of a 30x30 and a 62x62 grid of 0.5 scores: {dual_grid_loss([[0.5] * 30] * 30, [[0.5] * 62] * 62):.4f}")
